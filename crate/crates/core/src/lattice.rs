//! The L×L square lattice on the torus, with spins on links.
//!
//! Links are indexed by `2*(x + L*y) + d`, where (x, y) is the site at the
//! link's origin and d = 0 for the horizontal link (towards +x) and d = 1 for
//! the vertical link (towards +y). All other modules inherit this convention.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("lattice size {0} too small; L >= 2 required")]
    TooSmall(usize),
    #[error("lattice size {0} too large; 2*L^2 must fit in 64 bits")]
    TooLarge(usize),
    #[error("invalid plaquette or star id {0}")]
    InvalidId(usize),
}

pub const HORIZONTAL: usize = 0;
pub const VERTICAL: usize = 1;

/// Immutable lattice geometry: plaquette and star incidence plus the two
/// incontractible X-loops t1, t2 and the two dual Z-loops w1, w2.
#[derive(Debug, Clone)]
pub struct TorusLattice {
    l: usize,
    n: usize,
    plaquettes: Vec<u64>,
    stars: Vec<u64>,
    t_loops: [u64; 2],
    w_loops: [u64; 2],
}

/// Build the torus; fails for L < 2 (L = 1 degenerates plaquette boundaries)
/// and for L > 5 (more than 64 links).
pub fn build_torus(l: usize) -> Result<TorusLattice, LatticeError> {
    if l < 2 {
        return Err(LatticeError::TooSmall(l));
    }
    if 2 * l * l > 64 {
        return Err(LatticeError::TooLarge(l));
    }
    let n = 2 * l * l;

    let mut plaquettes = Vec::with_capacity(l * l);
    let mut stars = Vec::with_capacity(l * l);
    for y in 0..l {
        for x in 0..l {
            let p = [
                link_index(l, x, y, HORIZONTAL),
                link_index(l, x, y, VERTICAL),
                link_index(l, x, (y + 1) % l, HORIZONTAL),
                link_index(l, (x + 1) % l, y, VERTICAL),
            ];
            plaquettes.push(mask_of(&p));
            let s = [
                link_index(l, x, y, HORIZONTAL),
                link_index(l, x, y, VERTICAL),
                link_index(l, (x + l - 1) % l, y, HORIZONTAL),
                link_index(l, x, (y + l - 1) % l, VERTICAL),
            ];
            stars.push(mask_of(&s));
        }
    }

    // t1: horizontal links in row y=0; t2: vertical links in column x=0.
    // w1: vertical links in row y=0;   w2: horizontal links in column x=0.
    let mut t1 = 0u64;
    let mut t2 = 0u64;
    let mut w1 = 0u64;
    let mut w2 = 0u64;
    for k in 0..l {
        t1 |= 1 << link_index(l, k, 0, HORIZONTAL);
        t2 |= 1 << link_index(l, 0, k, VERTICAL);
        w1 |= 1 << link_index(l, k, 0, VERTICAL);
        w2 |= 1 << link_index(l, 0, k, HORIZONTAL);
    }

    Ok(TorusLattice { l, n, plaquettes, stars, t_loops: [t1, t2], w_loops: [w1, w2] })
}

fn link_index(l: usize, x: usize, y: usize, d: usize) -> usize {
    2 * (x + l * y) + d
}

fn mask_of(links: &[usize]) -> u64 {
    links.iter().fold(0u64, |m, &j| m | (1 << j))
}

impl TorusLattice {
    pub fn l(&self) -> usize {
        self.l
    }

    /// Number of links, 2L².
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_sites(&self) -> usize {
        self.l * self.l
    }

    pub fn num_plaquettes(&self) -> usize {
        self.l * self.l
    }

    pub fn link_index(&self, x: usize, y: usize, d: usize) -> usize {
        link_index(self.l, x % self.l, y % self.l, d)
    }

    /// The 4 links bounding plaquette p (flat id p = x + L*y).
    pub fn plaquette_links(&self, p: usize) -> Result<Vec<usize>, LatticeError> {
        self.plaquettes
            .get(p)
            .map(|&m| links_of(m))
            .ok_or(LatticeError::InvalidId(p))
    }

    /// The 4 links incident to vertex s (flat id s = x + L*y).
    pub fn star_links(&self, s: usize) -> Result<Vec<usize>, LatticeError> {
        self.stars
            .get(s)
            .map(|&m| links_of(m))
            .ok_or(LatticeError::InvalidId(s))
    }

    pub fn plaquette_mask(&self, p: usize) -> u64 {
        self.plaquettes[p]
    }

    pub fn star_mask(&self, s: usize) -> u64 {
        self.stars[s]
    }

    pub fn plaquette_masks(&self) -> &[u64] {
        &self.plaquettes
    }

    pub fn star_masks(&self) -> &[u64] {
        &self.stars
    }

    /// (t1, t2, w1, w2) as link masks.
    pub fn loops(&self) -> (u64, u64, u64, u64) {
        (self.t_loops[0], self.t_loops[1], self.w_loops[0], self.w_loops[1])
    }

    pub fn t_loop(&self, i: usize) -> u64 {
        self.t_loops[i]
    }

    pub fn w_loop(&self, i: usize) -> u64 {
        self.w_loops[i]
    }

    /// Incidence structure as a serializable dump (for the CLI).
    pub fn dump(&self) -> LatticeDump {
        LatticeDump {
            l: self.l,
            n: self.n,
            plaquettes: self.plaquettes.iter().map(|&m| links_of(m)).collect(),
            stars: self.stars.iter().map(|&m| links_of(m)).collect(),
            t1: links_of(self.t_loops[0]),
            t2: links_of(self.t_loops[1]),
            w1: links_of(self.w_loops[0]),
            w2: links_of(self.w_loops[1]),
        }
    }
}

fn links_of(mask: u64) -> Vec<usize> {
    (0..64).filter(|j| mask >> j & 1 == 1).collect()
}

#[derive(Debug, Serialize)]
pub struct LatticeDump {
    pub l: usize,
    pub n: usize,
    pub plaquettes: Vec<Vec<usize>>,
    pub stars: Vec<Vec<usize>>,
    pub t1: Vec<usize>,
    pub t2: Vec<usize>,
    pub w1: Vec<usize>,
    pub w2: Vec<usize>,
}
