//! Conserved symmetry blocks of the interpolating Hamiltonian: star-charge
//! configuration × winding parities, with block enumeration by XOR-closure of
//! the plaquette group and matrix-free block operators.

use crate::lattice::TorusLattice;
use crate::model::{apply_hamiltonian, Amplitude, HamiltonianSpec, ModelError, StateSpace};
use crate::pauli::PauliString;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SectorError {
    #[error("star-charge product must be +1 (global constraint prod A_s = I)")]
    InconsistentCharges,
    #[error("charged-sector enumeration needs a full-space scan; only supported for L <= 3")]
    ChargedSectorTooLarge,
    #[error("Hamiltonian does not commute with the sector labels; not block-diagonal")]
    NotBlockDiagonal,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Label of one symmetry block: per-star charge ±1 and the winding parities
/// (i, j), read as the eigenvalues (-1)^i of w2 and (-1)^j of w1 (w2 is the
/// dual loop that detects t1, w1 the one that detects t2).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SectorLabel {
    pub star_charges: Vec<i8>,
    pub winding: (u8, u8),
}

impl SectorLabel {
    /// All star charges +1, given winding parities.
    pub fn neutral(lat: &TorusLattice, winding: (u8, u8)) -> Self {
        SectorLabel { star_charges: vec![1; lat.num_sites()], winding }
    }

    pub fn is_neutral(&self) -> bool {
        self.star_charges.iter().all(|&c| c == 1)
    }
}

/// Evaluate the conserved Z-type operators on a basis state.
pub fn classify(lat: &TorusLattice, bits: u64) -> SectorLabel {
    let star_charges = lat
        .star_masks()
        .iter()
        .map(|&s| if (s & bits).count_ones() % 2 == 0 { 1 } else { -1 })
        .collect();
    let (_, _, w1, w2) = lat.loops();
    let i = ((w2 & bits).count_ones() % 2) as u8;
    let j = ((w1 & bits).count_ones() % 2) as u8;
    SectorLabel { star_charges, winding: (i, j) }
}

/// Enumerated basis of one symmetry block, ordered by ascending bitmask.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    label: SectorLabel,
    states: Vec<u64>,
}

impl SectorBasis {
    pub fn label(&self) -> &SectorLabel {
        &self.label
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    /// Serializable summary for the CLI.
    pub fn dump(&self, first_k: usize) -> SectorDump {
        SectorDump {
            winding: self.label.winding,
            neutral: self.label.is_neutral(),
            dimension: self.states.len(),
            first_states: self
                .states
                .iter()
                .take(first_k)
                .map(|&b| format!("{b:#x}"))
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SectorDump {
    pub winding: (u8, u8),
    pub neutral: bool,
    pub dimension: usize,
    pub first_states: Vec<String>,
}

impl StateSpace for SectorBasis {
    fn dim(&self) -> usize {
        self.states.len()
    }

    fn bits(&self, index: usize) -> u64 {
        self.states[index]
    }

    fn index_of(&self, bits: u64) -> Option<usize> {
        self.states.binary_search(&bits).ok()
    }
}

/// Enumerate the block with the given label.
///
/// For all-+1 charges the block is the coset t1^i t2^j · B of the plaquette
/// closure group, built by iterative doubling over L²-1 independent plaquette
/// generators (dimension 2^{L²-1}). Charged sectors fall back to a full-space
/// scan, which is only feasible for L <= 3.
pub fn enumerate_sector(lat: &TorusLattice, label: &SectorLabel) -> Result<SectorBasis, SectorError> {
    let charge_product: i32 = label.star_charges.iter().map(|&c| c as i32).product();
    if charge_product != 1 {
        return Err(SectorError::InconsistentCharges);
    }
    if label.is_neutral() {
        let (t1, t2, _, _) = lat.loops();
        let offset = if label.winding.0 == 1 { t1 } else { 0 }
            ^ if label.winding.1 == 1 { t2 } else { 0 };
        let mut states = vec![offset];
        // The last plaquette is the product of all the others.
        let gens = &lat.plaquette_masks()[..lat.num_plaquettes() - 1];
        for &g in gens {
            let flipped: Vec<u64> = states.iter().map(|&b| b ^ g).collect();
            states.extend(flipped);
        }
        states.sort_unstable();
        Ok(SectorBasis { label: label.clone(), states })
    } else {
        if lat.n() > 18 {
            return Err(SectorError::ChargedSectorTooLarge);
        }
        let states = (0u64..1 << lat.n())
            .filter(|&b| classify(lat, b) == *label)
            .collect();
        Ok(SectorBasis { label: label.clone(), states })
    }
}

/// Matrix-free restriction of a Hamiltonian to one symmetry block. Creation
/// verifies (symplectically, hence exactly) that every term commutes with all
/// star operators and both winding loops, so the block action is closed.
pub struct BlockOperator<'a> {
    h: &'a HamiltonianSpec,
    basis: &'a SectorBasis,
}

pub fn project_hamiltonian<'a>(
    lat: &TorusLattice,
    h: &'a HamiltonianSpec,
    basis: &'a SectorBasis,
) -> Result<BlockOperator<'a>, SectorError> {
    let n = lat.n();
    let mut labels: Vec<PauliString> = lat
        .star_masks()
        .iter()
        .map(|&s| PauliString::z_string(n, s))
        .collect();
    let (_, _, w1, w2) = lat.loops();
    labels.push(PauliString::z_string(n, w1));
    labels.push(PauliString::z_string(n, w2));
    if !labels.iter().all(|op| h.commutes_with(op)) {
        return Err(SectorError::NotBlockDiagonal);
    }
    Ok(BlockOperator { h, basis })
}

impl BlockOperator<'_> {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn basis(&self) -> &SectorBasis {
        self.basis
    }

    pub fn hamiltonian(&self) -> &HamiltonianSpec {
        self.h
    }

    pub fn apply<T: Amplitude>(&self, psi: &[T]) -> Result<Vec<T>, ModelError> {
        apply_hamiltonian(self.h, self.basis, psi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_torus;
    use crate::model::{interpolated_hamiltonian, ModelParams, Schedule};

    #[test]
    fn vacuum_is_trivial_sector() {
        let lat = build_torus(3).unwrap();
        let label = classify(&lat, 0);
        assert!(label.is_neutral());
        assert_eq!(label.winding, (0, 0));
    }

    #[test]
    fn t1_flips_first_winding_parity() {
        let lat = build_torus(3).unwrap();
        let (t1, t2, _, _) = lat.loops();
        let l1 = classify(&lat, t1);
        assert!(l1.is_neutral());
        assert_eq!(l1.winding, (1, 0));
        let l2 = classify(&lat, t2);
        assert_eq!(l2.winding, (0, 1));
        let l12 = classify(&lat, t1 ^ t2);
        assert_eq!(l12.winding, (1, 1));
    }

    #[test]
    fn single_flip_violates_two_stars() {
        let lat = build_torus(3).unwrap();
        for j in 0..lat.n() {
            let label = classify(&lat, 1 << j);
            let violated = label.star_charges.iter().filter(|&&c| c == -1).count();
            assert_eq!(violated, 2);
        }
    }

    #[test]
    fn neutral_block_dimensions() {
        let lat2 = build_torus(2).unwrap();
        let b = enumerate_sector(&lat2, &SectorLabel::neutral(&lat2, (0, 0))).unwrap();
        assert_eq!(b.dim(), 8);
        assert!(b.states().contains(&0));
        let lat3 = build_torus(3).unwrap();
        let b3 = enumerate_sector(&lat3, &SectorLabel::neutral(&lat3, (0, 0))).unwrap();
        assert_eq!(b3.dim(), 256);
        let lat4 = build_torus(4).unwrap();
        let b4 = enumerate_sector(&lat4, &SectorLabel::neutral(&lat4, (0, 0))).unwrap();
        assert_eq!(b4.dim(), 1 << 15);
    }

    #[test]
    fn winding_blocks_partition_the_closed_string_space() {
        let lat = build_torus(2).unwrap();
        let mut all: Vec<u64> = Vec::new();
        for i in 0..2u8 {
            for j in 0..2u8 {
                let b = enumerate_sector(&lat, &SectorLabel::neutral(&lat, (i, j))).unwrap();
                // Every enumerated state classifies back to its label.
                for &st in b.states() {
                    let lbl = classify(&lat, st);
                    assert!(lbl.is_neutral());
                    assert_eq!(lbl.winding, (i, j));
                }
                all.extend_from_slice(b.states());
            }
        }
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 32); // 2^{L^2+1}

        // Exhaustive cross-check against a full-space scan.
        let scanned: Vec<u64> = (0u64..256)
            .filter(|&b| classify(&lat, b).is_neutral())
            .collect();
        assert_eq!(all, scanned);
    }

    #[test]
    fn closure_enumeration_matches_scan_at_l3() {
        let lat = build_torus(3).unwrap();
        let label = SectorLabel::neutral(&lat, (1, 1));
        let closure = enumerate_sector(&lat, &label).unwrap();
        let scanned: Vec<u64> = (0u64..1 << 18)
            .filter(|&b| classify(&lat, b) == label)
            .collect();
        assert_eq!(closure.states(), &scanned[..]);
    }

    #[test]
    fn charged_sector_scan() {
        let lat = build_torus(2).unwrap();
        // Two violated stars at the endpoints of a single flipped link.
        let label = classify(&lat, 1);
        let b = enumerate_sector(&lat, &label).unwrap();
        assert!(b.states().contains(&1));
        // Plaquette flips preserve the label.
        for &st in b.states() {
            assert_eq!(classify(&lat, st ^ lat.plaquette_mask(0)), label);
        }
    }

    #[test]
    fn odd_charge_label_rejected() {
        let lat = build_torus(2).unwrap();
        let mut charges = vec![1i8; 4];
        charges[0] = -1;
        let label = SectorLabel { star_charges: charges, winding: (0, 0) };
        assert_eq!(enumerate_sector(&lat, &label).unwrap_err(), SectorError::InconsistentCharges);
    }

    #[test]
    fn projection_accepts_interpolation_and_rejects_x_field() {
        let lat = build_torus(2).unwrap();
        let params = ModelParams::new(10.0, 1.0, 1.0).unwrap();
        let basis = enumerate_sector(&lat, &SectorLabel::neutral(&lat, (0, 0))).unwrap();
        for tau in [0.0, 0.4, 1.0] {
            let h = interpolated_hamiltonian(&lat, &params, Schedule::Linear, tau).unwrap();
            assert!(project_hamiltonian(&lat, &h, &basis).is_ok());
        }
        let mut h = interpolated_hamiltonian(&lat, &params, Schedule::Linear, 0.5).unwrap();
        h.push(PauliString::x_string(lat.n(), 1), 0.1).unwrap();
        assert!(matches!(
            project_hamiltonian(&lat, &h, &basis),
            Err(SectorError::NotBlockDiagonal)
        ));
    }

    #[test]
    fn classify_constant_on_plaquette_orbit() {
        // Exhaustive at L=2, sampled at L=3 and L=4.
        let lat2 = build_torus(2).unwrap();
        for b in 0u64..256 {
            let lbl = classify(&lat2, b);
            for p in 0..4 {
                assert_eq!(classify(&lat2, b ^ lat2.plaquette_mask(p)), lbl);
            }
        }
        for l in [3usize, 4] {
            let lat = build_torus(l).unwrap();
            let mut b = 0x5a5au64 & ((1 << lat.n()) - 1);
            for p in 0..lat.num_plaquettes() {
                let lbl = classify(&lat, b);
                assert_eq!(classify(&lat, b ^ lat.plaquette_mask(p)), lbl);
                b = b.rotate_left(3) & ((1 << lat.n()) - 1);
            }
        }
    }
}
