//! Hamiltonian assembly: the Kitaev model, the tension field, the adiabatic
//! interpolation, the Z2 gauge Hamiltonian, and its dual transverse-field
//! Ising model, all as weighted Pauli-string term lists with matrix-free
//! application.

use crate::lattice::TorusLattice;
use crate::pauli::PauliString;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("coupling {name} = {value} must be positive")]
    NonPositiveCoupling { name: &'static str, value: f64 },
    #[error("coupling {name} = {value} must be nonnegative")]
    NegativeCoupling { name: &'static str, value: f64 },
    #[error("schedule parameter tau = {0} outside [0, 1]")]
    TauOutOfRange(f64),
    #[error("term width {term} does not match Hamiltonian width {expected}")]
    WidthMismatch { term: usize, expected: usize },
    #[error("term phase must be ±1 for a real Hamiltonian")]
    NonRealTerm,
    #[error("non-finite coefficient")]
    NonFiniteCoefficient,
    #[error("state dimension {got} does not match space dimension {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Couplings of the interpolating model, in the regime U >> g, ξ ~ 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelParams {
    pub u: f64,
    pub g: f64,
    pub xi: f64,
}

impl ModelParams {
    pub fn new(u: f64, g: f64, xi: f64) -> Result<Self, ModelError> {
        for (name, value) in [("U", u), ("g", g), ("xi", xi)] {
            if !(value > 0.0) {
                return Err(ModelError::NonPositiveCoupling { name, value });
            }
        }
        Ok(ModelParams { u, g, xi })
    }
}

/// Interpolation schedule f: [0,1] -> [0,1] with f(0)=0, f(1)=1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Linear,
    /// sin²(πτ/2): continuously differentiable with f'(0) = f'(1) = 0, as the
    /// exponential adiabatic error estimate assumes.
    TrigSmooth,
}

impl Schedule {
    pub fn f(&self, tau: f64) -> f64 {
        match self {
            Schedule::Linear => tau,
            Schedule::TrigSmooth => {
                let s = (std::f64::consts::FRAC_PI_2 * tau).sin();
                s * s
            }
        }
    }

    pub fn df(&self, tau: f64) -> f64 {
        match self {
            Schedule::Linear => 1.0,
            Schedule::TrigSmooth => {
                std::f64::consts::FRAC_PI_2 * (std::f64::consts::PI * tau).sin()
            }
        }
    }
}

/// Weighted list of Pauli-string terms plus a scalar offset. Every stored
/// term has a ±1 phase, so the operator is real symmetric in the
/// computational basis.
#[derive(Debug, Clone)]
pub struct HamiltonianSpec {
    n: usize,
    terms: Vec<(PauliString, f64)>,
    constant: f64,
}

impl HamiltonianSpec {
    pub fn new(n: usize) -> Self {
        HamiltonianSpec { n, terms: Vec::new(), constant: 0.0 }
    }

    pub fn push(&mut self, term: PauliString, coeff: f64) -> Result<(), ModelError> {
        if term.n() != self.n {
            return Err(ModelError::WidthMismatch { term: term.n(), expected: self.n });
        }
        if term.phase().as_real().is_none() {
            return Err(ModelError::NonRealTerm);
        }
        if !coeff.is_finite() {
            return Err(ModelError::NonFiniteCoefficient);
        }
        self.terms.push((term, coeff));
        Ok(())
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(PauliString, f64)] {
        &self.terms
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Sum of two Hamiltonians of the same width.
    pub fn add(&self, other: &HamiltonianSpec) -> Result<HamiltonianSpec, ModelError> {
        if other.n != self.n {
            return Err(ModelError::WidthMismatch { term: other.n, expected: self.n });
        }
        let mut out = self.clone();
        out.terms.extend_from_slice(&other.terms);
        out.constant += other.constant;
        Ok(out)
    }

    /// True iff every term commutes with `op` (symplectic check, exact).
    pub fn commutes_with(&self, op: &PauliString) -> bool {
        self.terms.iter().all(|(t, _)| t.commutes(op))
    }

    /// Serializable form: masks as hex strings, coefficients as decimals.
    pub fn to_json(&self) -> HamiltonianJson {
        HamiltonianJson {
            n: self.n,
            constant: self.constant,
            terms: self
                .terms
                .iter()
                .map(|(t, c)| TermJson {
                    x: format!("{:#x}", t.x_mask()),
                    z: format!("{:#x}", t.z_mask()),
                    sign: t.phase().as_real().expect("stored terms are real"),
                    coeff: *c,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HamiltonianJson {
    pub n: usize,
    pub constant: f64,
    pub terms: Vec<TermJson>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TermJson {
    pub x: String,
    pub z: String,
    pub sign: f64,
    pub coeff: f64,
}

/// H(g, U) = -g Σ_p B_p - U Σ_s A_s.
pub fn kitaev_hamiltonian(
    lat: &TorusLattice,
    g: f64,
    u: f64,
) -> Result<HamiltonianSpec, ModelError> {
    if !(g > 0.0) {
        return Err(ModelError::NonPositiveCoupling { name: "g", value: g });
    }
    if !(u > 0.0) {
        return Err(ModelError::NonPositiveCoupling { name: "U", value: u });
    }
    let mut h = HamiltonianSpec::new(lat.n());
    for &p in lat.plaquette_masks() {
        h.push(PauliString::x_string(lat.n(), p), -g)?;
    }
    for &s in lat.star_masks() {
        h.push(PauliString::z_string(lat.n(), s), -u)?;
    }
    Ok(h)
}

/// The string-tension field H_ξ = -ξ Σ_j σ^z_j + ξ n I. Diagonal, with
/// eigenvalue 2ξ · (number of flipped spins).
pub fn field_hamiltonian(lat: &TorusLattice, xi: f64) -> Result<HamiltonianSpec, ModelError> {
    if !(xi > 0.0) {
        return Err(ModelError::NonPositiveCoupling { name: "xi", value: xi });
    }
    let mut h = HamiltonianSpec::new(lat.n());
    for j in 0..lat.n() {
        h.push(PauliString::z_string(lat.n(), 1 << j), -xi)?;
    }
    h.add_constant(xi * lat.n() as f64);
    Ok(h)
}

/// The star term alone, H_U = -U Σ_s A_s.
pub fn star_hamiltonian(lat: &TorusLattice, u: f64) -> Result<HamiltonianSpec, ModelError> {
    if !(u > 0.0) {
        return Err(ModelError::NonPositiveCoupling { name: "U", value: u });
    }
    let mut h = HamiltonianSpec::new(lat.n());
    for &s in lat.star_masks() {
        h.push(PauliString::z_string(lat.n(), s), -u)?;
    }
    Ok(h)
}

/// The plaquette term alone, H_g = -g Σ_p B_p.
pub fn plaquette_hamiltonian(lat: &TorusLattice, g: f64) -> Result<HamiltonianSpec, ModelError> {
    if !(g > 0.0) {
        return Err(ModelError::NonPositiveCoupling { name: "g", value: g });
    }
    let mut h = HamiltonianSpec::new(lat.n());
    for &p in lat.plaquette_masks() {
        h.push(PauliString::x_string(lat.n(), p), -g)?;
    }
    Ok(h)
}

/// H(τ) = H_U + [1 - f(τ)] H_ξ + f(τ) H_g.
pub fn interpolated_hamiltonian(
    lat: &TorusLattice,
    params: &ModelParams,
    schedule: Schedule,
    tau: f64,
) -> Result<HamiltonianSpec, ModelError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(ModelError::TauOutOfRange(tau));
    }
    let f = schedule.f(tau);
    let mut h = star_hamiltonian(lat, params.u)?;
    let field = 1.0 - f;
    if field != 0.0 {
        for j in 0..lat.n() {
            h.push(PauliString::z_string(lat.n(), 1 << j), -params.xi * field)?;
        }
        h.add_constant(params.xi * field * lat.n() as f64);
    }
    if f != 0.0 {
        for &p in lat.plaquette_masks() {
            h.push(PauliString::x_string(lat.n(), p), -params.g * f)?;
        }
    }
    Ok(h)
}

/// dH/dτ = f'(τ) (H_g - H_ξ), with H_ξ carrying its +ξnI offset.
pub fn hamiltonian_derivative(
    lat: &TorusLattice,
    params: &ModelParams,
    schedule: Schedule,
    tau: f64,
) -> Result<HamiltonianSpec, ModelError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(ModelError::TauOutOfRange(tau));
    }
    let df = schedule.df(tau);
    let mut h = HamiltonianSpec::new(lat.n());
    for &p in lat.plaquette_masks() {
        h.push(PauliString::x_string(lat.n(), p), -params.g * df)?;
    }
    for j in 0..lat.n() {
        h.push(PauliString::z_string(lat.n(), 1 << j), params.xi * df)?;
    }
    h.add_constant(-params.xi * df * lat.n() as f64);
    Ok(h)
}

/// Wegner's Z2 lattice gauge Hamiltonian,
/// H_gauge = -λ1 Σ_links σ^z - λ2 Σ_p B_p.
pub fn gauge_hamiltonian(
    lat: &TorusLattice,
    lambda1: f64,
    lambda2: f64,
) -> Result<HamiltonianSpec, ModelError> {
    for (name, value) in [("lambda1", lambda1), ("lambda2", lambda2)] {
        if !(value >= 0.0) {
            return Err(ModelError::NegativeCoupling { name, value });
        }
    }
    let mut h = HamiltonianSpec::new(lat.n());
    for j in 0..lat.n() {
        h.push(PauliString::z_string(lat.n(), 1 << j), -lambda1)?;
    }
    for &p in lat.plaquette_masks() {
        h.push(PauliString::x_string(lat.n(), p), -lambda2)?;
    }
    Ok(h)
}

/// The dual variables of the gauge theory on the plaquette (dual-site)
/// lattice: μ^x(p) = B_p, and μ^z strings of σ^z on the links crossed by a
/// dual path from the reference line to p.
///
/// Path convention: μ^z_→(p) crosses the vertical links v(0..=x, y) for
/// x < L-1 and v(1..L, y) for x = L-1; μ^z_↑(p) crosses the horizontal links
/// h(x, 0..=y) for y < L-1 and h(x, 1..L) for y = L-1.
///
/// On the torus, ∏_p B_p = I forces every pure-Z string to anticommute with
/// an even number of plaquettes, so the textbook relation
/// {μ^x(p'), μ^z(p)} = 0 iff p' = p cannot hold for all pairs. With this
/// convention each μ^z(p) anticommutes with B_p and with exactly one
/// boundary-row plaquette in the same column (or row), and with no others.
#[derive(Debug, Clone)]
pub struct DualVariables {
    pub mu_x: Vec<PauliString>,
    pub mu_z_right: Vec<PauliString>,
    pub mu_z_up: Vec<PauliString>,
}

pub fn dual_variables(lat: &TorusLattice) -> DualVariables {
    let l = lat.l();
    let n = lat.n();
    let mut mu_x = Vec::with_capacity(l * l);
    let mut mu_z_right = Vec::with_capacity(l * l);
    let mut mu_z_up = Vec::with_capacity(l * l);
    for y in 0..l {
        for x in 0..l {
            let p = x + l * y;
            mu_x.push(PauliString::x_string(n, lat.plaquette_mask(p)));

            let mut right = 0u64;
            if x < l - 1 {
                for xp in 0..=x {
                    right |= 1 << lat.link_index(xp, y, crate::lattice::VERTICAL);
                }
            } else {
                for xp in 1..l {
                    right |= 1 << lat.link_index(xp, y, crate::lattice::VERTICAL);
                }
            }
            mu_z_right.push(PauliString::z_string(n, right));

            let mut up = 0u64;
            if y < l - 1 {
                for yp in 0..=y {
                    up |= 1 << lat.link_index(x, yp, crate::lattice::HORIZONTAL);
                }
            } else {
                for yp in 1..l {
                    up |= 1 << lat.link_index(x, yp, crate::lattice::HORIZONTAL);
                }
            }
            mu_z_up.push(PauliString::z_string(n, up));
        }
    }
    DualVariables { mu_x, mu_z_right, mu_z_up }
}

/// The dual transverse-field Ising model on the L×L plaquette lattice:
/// -λ2 Σ_p μ^x(p) - λ1 Σ_{p,î} μ^z(p) μ^z(p+î), periodic in both directions.
/// At L=2 the two parallel bonds between the same pair of sites are kept as
/// distinct terms, preserving the 2L² bond count.
pub fn ising_hamiltonian(l: usize, lambda1: f64, lambda2: f64) -> Result<HamiltonianSpec, ModelError> {
    for (name, value) in [("lambda1", lambda1), ("lambda2", lambda2)] {
        if !(value >= 0.0) {
            return Err(ModelError::NegativeCoupling { name, value });
        }
    }
    let sites = l * l;
    let mut h = HamiltonianSpec::new(sites);
    for p in 0..sites {
        h.push(PauliString::x_string(sites, 1 << p), -lambda2)?;
    }
    for y in 0..l {
        for x in 0..l {
            let p = x + l * y;
            let px = (x + 1) % l + l * y;
            let py = x + l * ((y + 1) % l);
            for q in [px, py] {
                h.push(PauliString::z_string(sites, (1 << p) | (1 << q)), -lambda1)?;
            }
        }
    }
    Ok(h)
}

/// A basis-indexed state space for matrix-free application: either the full
/// 2^n computational basis or an enumerated symmetry block.
pub trait StateSpace: Sync {
    fn dim(&self) -> usize;
    fn bits(&self, index: usize) -> u64;
    fn index_of(&self, bits: u64) -> Option<usize>;
}

/// The full computational basis; index = bitmask.
#[derive(Debug, Clone, Copy)]
pub struct FullSpace {
    n: usize,
}

impl FullSpace {
    pub fn new(n: usize) -> Self {
        assert!(n < 32, "full space of width {n} is not enumerable");
        FullSpace { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

impl StateSpace for FullSpace {
    fn dim(&self) -> usize {
        1 << self.n
    }

    fn bits(&self, index: usize) -> u64 {
        index as u64
    }

    fn index_of(&self, bits: u64) -> Option<usize> {
        (bits < (1u64 << self.n)).then_some(bits as usize)
    }
}

/// Scalar amplitudes the matvec is generic over: real for spectral work,
/// complex for time evolution.
pub trait Amplitude:
    Copy + Send + Sync + std::ops::Add<Output = Self> + std::ops::Mul<f64, Output = Self>
{
    fn zero() -> Self;
}

impl Amplitude for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl Amplitude for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
}

/// Parallelize the matvec above this dimension.
const PAR_THRESHOLD: usize = 1 << 12;

/// y = H ψ over the given basis, term by term. In gather form: each output
/// index pulls from its unique source index per term, so the computation is
/// embarrassingly parallel and deterministic.
///
/// A term whose source state falls outside the space is treated as a
/// projection (the contribution is dropped); callers that need closure
/// guarantees check commutation with the sector labels first.
pub fn apply_hamiltonian<S: StateSpace, T: Amplitude>(
    h: &HamiltonianSpec,
    space: &S,
    psi: &[T],
) -> Result<Vec<T>, ModelError> {
    if psi.len() != space.dim() {
        return Err(ModelError::DimensionMismatch { got: psi.len(), expected: space.dim() });
    }
    let terms: Vec<(u64, u64, f64)> = h
        .terms
        .iter()
        .map(|(t, c)| (t.x_mask(), t.z_mask(), c * t.phase().as_real().expect("real term")))
        .collect();
    let constant = h.constant;

    let out_entry = |i: usize| -> T {
        let target = space.bits(i);
        let mut acc = psi[i] * constant;
        for &(x, z, c) in &terms {
            let source = target ^ x;
            if let Some(j) = space.index_of(source) {
                // Z phase is evaluated on the source state (Z acts first).
                let sign = if (z & source).count_ones() % 2 == 0 { c } else { -c };
                acc = acc + psi[j] * sign;
            }
        }
        acc
    };

    let out = if space.dim() >= PAR_THRESHOLD {
        (0..space.dim()).into_par_iter().map(out_entry).collect()
    } else {
        (0..space.dim()).map(out_entry).collect()
    };
    Ok(out)
}

/// ⟨φ|H|ψ⟩ for real vectors.
pub fn expectation<S: StateSpace>(
    h: &HamiltonianSpec,
    space: &S,
    phi: &[f64],
    psi: &[f64],
) -> Result<f64, ModelError> {
    let hpsi = apply_hamiltonian(h, space, psi)?;
    Ok(phi.iter().zip(&hpsi).map(|(a, b)| a * b).sum())
}
