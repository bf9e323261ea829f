//! Low-lying spectra of the model: dense diagonalization for small blocks,
//! deflated Lanczos with full reorthogonalization for large ones, the gap
//! scan along the interpolation schedule, adiabatic-theorem matrix elements,
//! and the gauge/Ising duality cross-check.

use crate::lattice::{build_torus, TorusLattice};
use crate::model::{
    apply_hamiltonian, gauge_hamiltonian, hamiltonian_derivative, interpolated_hamiltonian,
    HamiltonianSpec, ModelError, ModelParams, Schedule, StateSpace,
};
use crate::sector::{enumerate_sector, project_hamiltonian, SectorBasis, SectorError, SectorLabel};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("eigensolver did not converge within {iterations} iterations; best residual {best_residual:.3e}")]
    NonConvergence { iterations: usize, best_residual: f64 },
    #[error("requested {m} eigenpairs from a block of dimension {dim}")]
    TooManyEigenpairs { m: usize, dim: usize },
    #[error("ground state is degenerate at tau = {0}; derivative undefined")]
    DegenerateGround(f64),
    #[error("matrix element bound undefined: E_i = E_j")]
    DegenerateBound,
    #[error("duality blocks have mismatched dimensions: gauge {gauge}, ising {ising}")]
    DualityDimensionMismatch { gauge: usize, ising: usize },
    #[error("gap scan at tau = {tau}: {source}")]
    GapScanPoint { tau: f64, source: Box<SpectralError> },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sector(#[from] SectorError),
    #[error(transparent)]
    Lattice(#[from] crate::lattice::LatticeError),
}

/// A real symmetric operator given by its action on vectors.
pub trait RealOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Vec<f64>;
}

impl RealOp for crate::sector::BlockOperator<'_> {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        crate::sector::BlockOperator::apply(self, v).expect("dimension checked by caller")
    }
}

/// A Hamiltonian acting on an explicit state space (e.g. the full 2^n basis).
pub struct SpecOp<'a, S: StateSpace> {
    pub h: &'a HamiltonianSpec,
    pub space: &'a S,
}

impl<S: StateSpace> RealOp for SpecOp<'_, S> {
    fn dim(&self) -> usize {
        self.space.dim()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        apply_hamiltonian(self.h, self.space, v).expect("dimension checked by caller")
    }
}

/// The `m` lowest eigenpairs, ascending, with per-pair residuals
/// ‖Hv - Ev‖.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralResult {
    pub eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Solver knobs; the defaults satisfy the artifact's residual contract with
/// two orders of headroom over the acceptance thresholds.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_iter: 600, seed: 0x7051_c0de }
    }
}

/// Above this dimension the solver switches from dense diagonalization to
/// Lanczos; above `TWO_PASS_DIM` it stops storing the Krylov basis.
const DENSE_DIM: usize = 512;
const TWO_PASS_DIM: usize = 1 << 20;

/// Compute the `m` lowest eigenpairs of `op`.
///
/// Degenerate clusters are resolved by deflation: each eigenvector is found
/// by a fresh Lanczos run kept orthogonal to all previously converged ones,
/// so clusters come back as an orthonormal basis. Deterministic for a fixed
/// seed.
pub fn low_spectrum(
    op: &dyn RealOp,
    m: usize,
    opts: &SolverOptions,
) -> Result<SpectralResult, SpectralError> {
    let dim = op.dim();
    if m == 0 || m >= dim + 1 {
        return Err(SpectralError::TooManyEigenpairs { m, dim });
    }
    if dim <= DENSE_DIM {
        return dense_spectrum(op, m);
    }
    let mut locked: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut eigenvalues = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    for k in 0..m {
        let (value, vector) = if dim > TWO_PASS_DIM {
            if k > 0 {
                // The memory-light path only supports the ground state.
                return Err(SpectralError::TooManyEigenpairs { m, dim });
            }
            lanczos_two_pass(op, opts)?
        } else {
            lanczos_deflated(op, &locked, opts, k as u64)?
        };
        let resid = residual_norm(op, &vector, value);
        if resid > opts.tol {
            return Err(SpectralError::NonConvergence {
                iterations: opts.max_iter,
                best_residual: resid,
            });
        }
        eigenvalues.push(value);
        residuals.push(resid);
        locked.push(vector);
    }
    Ok(SpectralResult { eigenvalues, eigenvectors: locked, residuals })
}

fn dense_spectrum(op: &dyn RealOp, m: usize) -> Result<SpectralResult, SpectralError> {
    let dim = op.dim();
    let mut mat = DMatrix::<f64>::zeros(dim, dim);
    let mut unit = vec![0.0; dim];
    for j in 0..dim {
        unit[j] = 1.0;
        let col = op.apply(&unit);
        unit[j] = 0.0;
        for i in 0..dim {
            mat[(i, j)] = col[i];
        }
    }
    let eig = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenvectors = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    for &k in order.iter().take(m) {
        let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let value = eig.eigenvalues[k];
        residuals.push(residual_norm(op, &v, value));
        eigenvalues.push(value);
        eigenvectors.push(v);
    }
    Ok(SpectralResult { eigenvalues, eigenvectors, residuals })
}

fn residual_norm(op: &dyn RealOp, v: &[f64], value: f64) -> f64 {
    let hv = op.apply(v);
    hv.iter()
        .zip(v)
        .map(|(a, b)| (a - value * b) * (a - value * b))
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn seeded_start(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        for (x, y) in v.iter_mut().zip(b) {
            *x -= c * y;
        }
    }
}

/// Lanczos with full reorthogonalization against both the growing Krylov
/// basis and the locked (deflated) eigenvectors.
fn lanczos_deflated(
    op: &dyn RealOp,
    locked: &[Vec<f64>],
    opts: &SolverOptions,
    salt: u64,
) -> Result<(f64, Vec<f64>), SpectralError> {
    let dim = op.dim();
    let mut best_residual = f64::INFINITY;
    let mut budget = opts.max_iter;

    for attempt in 0..4u64 {
        let mut v = seeded_start(
            dim,
            opts.seed ^ (salt + 101 * attempt).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        orthogonalize(&mut v, locked);
        let nv = norm(&v);
        if nv < 1e-12 {
            continue;
        }
        for x in v.iter_mut() {
            *x /= nv;
        }

        let mut basis: Vec<Vec<f64>> = vec![v];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();

        'krylov: while budget > 0 {
            budget -= 1;
            let j = alphas.len();
            let mut w = op.apply(&basis[j]);
            if j > 0 {
                let beta = betas[j - 1];
                for (x, y) in w.iter_mut().zip(&basis[j - 1]) {
                    *x -= beta * y;
                }
            }
            let alpha = dot(&w, &basis[j]);
            alphas.push(alpha);
            for (x, y) in w.iter_mut().zip(&basis[j]) {
                *x -= alpha * y;
            }
            // Full reorthogonalization, twice, against everything.
            for _ in 0..2 {
                orthogonalize(&mut w, locked);
                orthogonalize(&mut w, &basis);
            }
            let beta = norm(&w);

            let k = alphas.len();
            let exhausted = beta < 1e-13 || k == dim;
            if exhausted || k % 8 == 0 || budget == 0 {
                let (theta, s) = lowest_ritz(&alphas, &betas);
                let est = if exhausted { 0.0 } else { (beta * s[k - 1]).abs() };
                best_residual = best_residual.min(est.max(1e-16));
                if est <= 0.1 * opts.tol {
                    let mut y = vec![0.0; dim];
                    for (c, b) in s.iter().zip(&basis) {
                        for (x, bv) in y.iter_mut().zip(b) {
                            *x += c * bv;
                        }
                    }
                    orthogonalize(&mut y, locked);
                    let ny = norm(&y);
                    if ny > 1e-8 {
                        for x in y.iter_mut() {
                            *x /= ny;
                        }
                        return Ok((theta, y));
                    }
                    // Krylov space collapsed onto the locked vectors; restart
                    // from a fresh random direction.
                    break 'krylov;
                }
            }
            if exhausted {
                break 'krylov;
            }
            betas.push(beta);
            let next: Vec<f64> = w.iter().map(|x| x / beta).collect();
            basis.push(next);
        }
        if budget == 0 {
            break;
        }
    }
    Err(SpectralError::NonConvergence { iterations: opts.max_iter, best_residual })
}

/// Lowest Ritz value and its tridiagonal eigenvector.
fn lowest_ritz(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let k = alphas.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut min_idx = 0;
    for i in 1..k {
        if eig.eigenvalues[i] < eig.eigenvalues[min_idx] {
            min_idx = i;
        }
    }
    (
        eig.eigenvalues[min_idx],
        eig.eigenvectors.column(min_idx).iter().copied().collect(),
    )
}

/// Memory-light ground-state Lanczos for very large blocks: plain three-term
/// recurrence to fix the tridiagonal, then a second pass to accumulate the
/// Ritz vector. No reorthogonalization, so only the extremal value is
/// trustworthy; the returned residual is still checked by the caller.
fn lanczos_two_pass(
    op: &dyn RealOp,
    opts: &SolverOptions,
) -> Result<(f64, Vec<f64>), SpectralError> {
    let dim = op.dim();
    let start = {
        let mut v = seeded_start(dim, opts.seed);
        let nv = norm(&v);
        for x in v.iter_mut() {
            *x /= nv;
        }
        v
    };

    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut v_prev: Vec<f64> = Vec::new();
    let mut v_cur = start.clone();
    let mut converged_at = None;
    let mut prev_theta = f64::INFINITY;
    for j in 0..opts.max_iter {
        let mut w = op.apply(&v_cur);
        if j > 0 {
            let beta = betas[j - 1];
            for (x, y) in w.iter_mut().zip(&v_prev) {
                *x -= beta * y;
            }
        }
        let alpha = dot(&w, &v_cur);
        alphas.push(alpha);
        for (x, y) in w.iter_mut().zip(&v_cur) {
            *x -= alpha * y;
        }
        let beta = norm(&w);
        if alphas.len() % 8 == 0 || beta < 1e-13 {
            let (theta, s) = lowest_ritz(&alphas, &betas);
            let est = if beta < 1e-13 { 0.0 } else { (beta * s[alphas.len() - 1]).abs() };
            if est <= 0.1 * opts.tol && (prev_theta - theta).abs() <= 0.1 * opts.tol {
                converged_at = Some(alphas.len());
                break;
            }
            prev_theta = theta;
        }
        if beta < 1e-13 {
            converged_at = Some(alphas.len());
            break;
        }
        betas.push(beta);
        v_prev = v_cur;
        v_cur = w.iter().map(|x| x / beta).collect();
    }
    let steps = converged_at.ok_or(SpectralError::NonConvergence {
        iterations: opts.max_iter,
        best_residual: f64::NAN,
    })?;
    let (theta, s) = lowest_ritz(&alphas[..steps], &betas[..steps.saturating_sub(1)]);

    // Second pass: replay the recurrence, accumulating y = sum_j s_j v_j.
    let mut y = vec![0.0; dim];
    let mut v_prev: Vec<f64> = Vec::new();
    let mut v_cur = start;
    for j in 0..steps {
        for (x, bv) in y.iter_mut().zip(&v_cur) {
            *x += s[j] * bv;
        }
        if j + 1 == steps {
            break;
        }
        let mut w = op.apply(&v_cur);
        if j > 0 {
            let beta = betas[j - 1];
            for (x, yv) in w.iter_mut().zip(&v_prev) {
                *x -= beta * yv;
            }
        }
        let alpha = alphas[j];
        for (x, yv) in w.iter_mut().zip(&v_cur) {
            *x -= alpha * yv;
        }
        let beta = betas[j];
        v_prev = v_cur;
        v_cur = w.iter().map(|x| x / beta).collect();
    }
    let ny = norm(&y);
    for x in y.iter_mut() {
        *x /= ny;
    }
    Ok((theta, y))
}

/// The explicit topological ground state: uniform amplitude over the
/// sector-(0,0) block.
pub fn ground_state_phi0(lat: &TorusLattice) -> Result<(SectorBasis, Vec<f64>), SpectralError> {
    let basis = enumerate_sector(lat, &SectorLabel::neutral(lat, (0, 0)))?;
    let amp = 1.0 / (basis.dim() as f64).sqrt();
    let state = vec![amp; basis.dim()];
    Ok((basis, state))
}

/// Gap profile along the schedule within sector (0,0).
#[derive(Debug, Clone, Serialize)]
pub struct GapScan {
    pub taus: Vec<f64>,
    pub fs: Vec<f64>,
    pub gaps: Vec<f64>,
    pub coupling_ratios: Vec<f64>,
    pub tau_star: f64,
    pub gap_min: f64,
    /// λ1/λ2 = ξ(1-f(τ*)) / (g f(τ*)) at the gap minimum.
    pub ratio_at_min: f64,
    pub first_excited_degenerate: bool,
}

fn sector_gap(
    lat: &TorusLattice,
    basis: &SectorBasis,
    params: &ModelParams,
    schedule: Schedule,
    tau: f64,
    opts: &SolverOptions,
) -> Result<(f64, f64, f64), SpectralError> {
    let h = interpolated_hamiltonian(lat, params, schedule, tau)?;
    let block = project_hamiltonian(lat, &h, basis)?;
    let spec = low_spectrum(&block, 2, opts).map_err(|e| SpectralError::GapScanPoint {
        tau,
        source: Box::new(e),
    })?;
    Ok((spec.eigenvalues[0], spec.eigenvalues[1], spec.eigenvalues[1] - spec.eigenvalues[0]))
}

/// Scan the sector-(0,0) gap over a τ grid, then refine the minimum by
/// golden-section search to |τ| tolerance 1e-4.
pub fn gap_scan(
    lat: &TorusLattice,
    params: &ModelParams,
    schedule: Schedule,
    grid: &[f64],
    opts: &SolverOptions,
) -> Result<GapScan, SpectralError> {
    assert!(grid.len() >= 3, "gap scan needs at least 3 grid points");
    let basis = enumerate_sector(lat, &SectorLabel::neutral(lat, (0, 0)))?;
    let mut gaps = Vec::with_capacity(grid.len());
    let mut fs = Vec::with_capacity(grid.len());
    let mut ratios = Vec::with_capacity(grid.len());
    for &tau in grid {
        let (_, _, gap) = sector_gap(lat, &basis, params, schedule, tau, opts)?;
        gaps.push(gap);
        let f = schedule.f(tau);
        fs.push(f);
        ratios.push(coupling_ratio(params, f));
    }
    let argmin = gaps
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let lo = grid[argmin.saturating_sub(1)];
    let hi = grid[(argmin + 1).min(grid.len() - 1)];

    // Golden-section refinement; the finite-size gap is smooth in τ.
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut g1 = sector_gap(lat, &basis, params, schedule, x1, opts)?.2;
    let mut g2 = sector_gap(lat, &basis, params, schedule, x2, opts)?.2;
    while b - a > 1e-4 {
        if g1 <= g2 {
            b = x2;
            x2 = x1;
            g2 = g1;
            x1 = b - phi * (b - a);
            g1 = sector_gap(lat, &basis, params, schedule, x1, opts)?.2;
        } else {
            a = x1;
            x1 = x2;
            g1 = g2;
            x2 = a + phi * (b - a);
            g2 = sector_gap(lat, &basis, params, schedule, x2, opts)?.2;
        }
    }
    let tau_star = 0.5 * (a + b);
    let (e0, e1, gap_min) = sector_gap(lat, &basis, params, schedule, tau_star, opts)?;

    // Degeneracy of the first excited state at the minimum, tolerance 1e-8.
    let h = interpolated_hamiltonian(lat, params, schedule, tau_star)?;
    let block = project_hamiltonian(lat, &h, &basis)?;
    let first_excited_degenerate = if block.dim() > 2 && block.dim() <= TWO_PASS_DIM {
        let spec3 = low_spectrum(&block, 3, opts)?;
        (spec3.eigenvalues[2] - spec3.eigenvalues[1]).abs() < 1e-8
    } else {
        false
    };
    let _ = (e0, e1);

    Ok(GapScan {
        taus: grid.to_vec(),
        fs,
        gaps,
        coupling_ratios: ratios,
        tau_star,
        gap_min,
        ratio_at_min: coupling_ratio(params, schedule.f(tau_star)),
        first_excited_degenerate,
    })
}

/// λ1/λ2 at interpolation value f.
pub fn coupling_ratio(params: &ModelParams, f: f64) -> f64 {
    params.xi * (1.0 - f) / (params.g * f)
}

/// ⟨ψi| dH/dτ |ψj⟩ over a common state space, and the adiabatic-theorem
/// transition bound |⟨ψi|Ḣ|ψj⟩ / (Ei-Ej)²|².
pub fn hdot_matrix_element<S: StateSpace>(
    lat: &TorusLattice,
    params: &ModelParams,
    schedule: Schedule,
    tau: f64,
    space: &S,
    psi_i: &[f64],
    psi_j: &[f64],
) -> Result<f64, SpectralError> {
    let hdot = hamiltonian_derivative(lat, params, schedule, tau)?;
    Ok(crate::model::expectation(&hdot, space, psi_i, psi_j)?)
}

pub fn transition_bound(element: f64, e_i: f64, e_j: f64) -> Result<f64, SpectralError> {
    let de = e_i - e_j;
    if de == 0.0 {
        return Err(SpectralError::DegenerateBound);
    }
    let r = element / (de * de);
    Ok(r * r)
}

/// Finite-difference norm of the instantaneous ground state's τ-derivative,
/// with sign alignment before differencing. Errors if the block ground state
/// is degenerate at τ (tolerance 1e-8).
pub fn phi_dot_norm(
    lat: &TorusLattice,
    params: &ModelParams,
    schedule: Schedule,
    tau: f64,
    dtau: f64,
    opts: &SolverOptions,
) -> Result<f64, SpectralError> {
    let basis = enumerate_sector(lat, &SectorLabel::neutral(lat, (0, 0)))?;
    let ground = |t: f64| -> Result<Vec<f64>, SpectralError> {
        let h = interpolated_hamiltonian(lat, params, schedule, t)?;
        let block = project_hamiltonian(lat, &h, &basis)?;
        let spec = low_spectrum(&block, 2.min(basis.dim()), opts)?;
        if spec.eigenvalues.len() > 1 && spec.eigenvalues[1] - spec.eigenvalues[0] < 1e-8 {
            return Err(SpectralError::DegenerateGround(t));
        }
        Ok(spec.eigenvectors[0].clone())
    };
    let a = ground(tau)?;
    let mut b = ground((tau + dtau).min(1.0))?;
    if dot(&a, &b) < 0.0 {
        for x in b.iter_mut() {
            *x = -*x;
        }
    }
    let diff: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (y - x) * (y - x))
        .sum::<f64>()
        .sqrt();
    Ok(diff / dtau)
}

/// Side-by-side spectra of the gauge theory (winding-(0,0) neutral block) and
/// the dual Ising model (even sector of the global flip symmetry).
#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub l: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub m: usize,
    pub tol: f64,
    pub gauge_levels: Vec<f64>,
    pub ising_levels: Vec<f64>,
    pub max_difference: f64,
    pub pass: bool,
}

/// Dense matrix of the transverse-field Ising model restricted to the even
/// sector of ∏_p μ^x, in the pair basis (|m⟩ + |m̄⟩)/√2 with m < m̄.
fn ising_even_sector_matrix(l: usize, lambda1: f64, lambda2: f64) -> DMatrix<f64> {
    let sites = l * l;
    let full: u64 = (1u64 << sites) - 1;
    let reps: Vec<u64> = (0..1u64 << sites).filter(|&b| b < (b ^ full)).collect();
    let index = |b: u64| -> usize {
        let canon = b.min(b ^ full);
        reps.binary_search(&canon).expect("canonical rep present")
    };
    let dim = reps.len();
    let mut mat = DMatrix::<f64>::zeros(dim, dim);
    for (i, &b) in reps.iter().enumerate() {
        // ZZ bonds are diagonal and invariant under the global flip.
        let mut diag = 0.0;
        for y in 0..l {
            for x in 0..l {
                let p = x + l * y;
                let px = (x + 1) % l + l * y;
                let py = x + l * ((y + 1) % l);
                for q in [px, py] {
                    let aligned = (b >> p ^ b >> q) & 1 == 0;
                    diag += if aligned { -lambda1 } else { lambda1 };
                }
            }
        }
        mat[(i, i)] += diag;
        // The transverse field permutes pair states with unit coefficient.
        for p in 0..sites {
            let j = index(b ^ (1 << p));
            mat[(j, i)] += -lambda2;
        }
    }
    mat
}

/// Compare the m lowest gauge-block levels against the even-sector Ising
/// levels, level by level after sorting.
pub fn duality_spectrum_check(
    l: usize,
    lambda1: f64,
    lambda2: f64,
    m: usize,
    tol: f64,
    opts: &SolverOptions,
) -> Result<DualityReport, SpectralError> {
    let lat = build_torus(l)?;
    let basis = enumerate_sector(&lat, &SectorLabel::neutral(&lat, (0, 0)))?;
    let h = gauge_hamiltonian(&lat, lambda1, lambda2)?;
    let block = project_hamiltonian(&lat, &h, &basis)?;
    let m = m.min(block.dim());
    let gauge = low_spectrum(&block, m, opts)?;

    let ising_mat = ising_even_sector_matrix(l, lambda1, lambda2);
    if ising_mat.nrows() != basis.dim() {
        return Err(SpectralError::DualityDimensionMismatch {
            gauge: basis.dim(),
            ising: ising_mat.nrows(),
        });
    }
    let (ising_all, _) = crate::dense::sorted_eigen(&ising_mat);
    let ising_levels: Vec<f64> = ising_all.into_iter().take(m).collect();

    let max_difference = gauge
        .eigenvalues
        .iter()
        .zip(&ising_levels)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(DualityReport {
        l,
        lambda1,
        lambda2,
        m,
        tol,
        pass: max_difference <= tol,
        gauge_levels: gauge.eigenvalues,
        ising_levels,
        max_difference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{kitaev_hamiltonian, FullSpace};
    use approx::assert_relative_eq;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn kitaev_endpoint_block_spectrum_l2() {
        let lat = build_torus(2).unwrap();
        let basis = enumerate_sector(&lat, &SectorLabel::neutral(&lat, (0, 0))).unwrap();
        let h = kitaev_hamiltonian(&lat, 1.0, 1.0).unwrap();
        let block = project_hamiltonian(&lat, &h, &basis).unwrap();
        let spec = low_spectrum(&block, 2, &opts()).unwrap();
        // Ground -4U - 4g; within the block a single plaquette flip is
        // forbidden (prod B_p = I), so the gap is 4g.
        assert_relative_eq!(spec.eigenvalues[0], -8.0, epsilon = 1e-10);
        assert_relative_eq!(spec.eigenvalues[1] - spec.eigenvalues[0], 4.0, epsilon = 1e-10);
    }

    #[test]
    fn tau_zero_block_gap_is_8xi() {
        let lat = build_torus(2).unwrap();
        let params = ModelParams::new(10.0, 1.0, 1.0).unwrap();
        let basis = enumerate_sector(&lat, &SectorLabel::neutral(&lat, (0, 0))).unwrap();
        let h = interpolated_hamiltonian(&lat, &params, Schedule::Linear, 0.0).unwrap();
        let block = project_hamiltonian(&lat, &h, &basis).unwrap();
        let spec = low_spectrum(&block, 2, &opts()).unwrap();
        assert_relative_eq!(spec.eigenvalues[0], -4.0 * params.u, epsilon = 1e-10);
        assert_relative_eq!(spec.eigenvalues[1] - spec.eigenvalues[0], 8.0, epsilon = 1e-10);
    }

    #[test]
    fn full_space_kitaev_ground_is_fourfold() {
        let lat = build_torus(2).unwrap();
        let h = kitaev_hamiltonian(&lat, 1.0, 1.0).unwrap();
        let space = FullSpace::new(lat.n());
        let op = SpecOp { h: &h, space: &space };
        let spec = low_spectrum(&op, 5, &opts()).unwrap();
        for k in 0..4 {
            assert_relative_eq!(spec.eigenvalues[k], -8.0, epsilon = 1e-10);
        }
        assert!(spec.eigenvalues[4] - spec.eigenvalues[3] > 1.0);
    }

    #[test]
    fn phi0_is_uniform_and_stabilized() {
        let lat = build_torus(2).unwrap();
        let (basis, phi0) = ground_state_phi0(&lat).unwrap();
        assert_eq!(phi0.len(), 8);
        for a in &phi0 {
            assert_relative_eq!(*a, 1.0 / 8f64.sqrt());
        }
        let h = kitaev_hamiltonian(&lat, 1.0, 1.0).unwrap();
        let block = project_hamiltonian(&lat, &h, &basis).unwrap();
        let e = dot(&phi0, &block.apply(&phi0).unwrap());
        assert_relative_eq!(e, -8.0, epsilon = 1e-12);
    }

    #[test]
    fn phi0_matches_eigensolver_ground() {
        for l in [2usize, 3] {
            let lat = build_torus(l).unwrap();
            let (basis, phi0) = ground_state_phi0(&lat).unwrap();
            let h = kitaev_hamiltonian(&lat, 1.0, 1.0).unwrap();
            let block = project_hamiltonian(&lat, &h, &basis).unwrap();
            let spec = low_spectrum(&block, 1, &opts()).unwrap();
            let overlap = dot(&phi0, &spec.eigenvectors[0]).abs();
            assert!(overlap >= 1.0 - 1e-10, "overlap {overlap} at L={l}");
        }
    }

    #[test]
    fn lanczos_matches_dense_on_l3_block() {
        // Force the Lanczos path by using a low dense threshold indirectly:
        // the L=3 block has dimension 256 (dense), so instead check L=4 is
        // consistent with the variational bound and the explicit phi0.
        let lat = build_torus(4).unwrap();
        let (basis, phi0) = ground_state_phi0(&lat).unwrap();
        let h = kitaev_hamiltonian(&lat, 1.0, 1.0).unwrap();
        let block = project_hamiltonian(&lat, &h, &basis).unwrap();
        let spec = low_spectrum(&block, 2, &opts()).unwrap();
        assert_relative_eq!(spec.eigenvalues[0], -32.0, epsilon = 1e-9);
        let overlap = dot(&phi0, &spec.eigenvectors[0]).abs();
        assert!(overlap >= 1.0 - 1e-10, "overlap {overlap}");
        assert!(spec.residuals.iter().all(|&r| r <= 1e-10));
        assert_relative_eq!(spec.eigenvalues[1] - spec.eigenvalues[0], 4.0, epsilon = 1e-9);
    }

    #[test]
    fn gap_scan_l2_endpoints_and_positivity() {
        let lat = build_torus(2).unwrap();
        let params = ModelParams::new(10.0, 1.0, 1.0).unwrap();
        let grid: Vec<f64> = (0..=40).map(|k| k as f64 / 40.0).collect();
        let scan = gap_scan(&lat, &params, Schedule::Linear, &grid, &opts()).unwrap();
        assert!(scan.gap_min > 0.0);
        assert_relative_eq!(scan.gaps[0], 8.0, epsilon = 1e-9);
        assert_relative_eq!(scan.gaps[40], 4.0, epsilon = 1e-9);
        assert!(scan.tau_star > 0.0 && scan.tau_star < 1.0);
    }

    #[test]
    fn hdot_vanishes_between_winding_blocks() {
        // Two states in different winding blocks, embedded in full space.
        let lat = build_torus(2).unwrap();
        let params = ModelParams::new(10.0, 1.0, 1.0).unwrap();
        let space = FullSpace::new(lat.n());
        let (t1, _, _, _) = lat.loops();
        let mut a = vec![0.0; 256];
        a[0] = 1.0;
        let mut b = vec![0.0; 256];
        b[t1 as usize] = 1.0;
        let v = hdot_matrix_element(&lat, &params, Schedule::Linear, 0.5, &space, &a, &b).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn hdot_diagonal_is_schedule_weighted_difference() {
        let lat = build_torus(2).unwrap();
        let params = ModelParams::new(10.0, 1.0, 1.0).unwrap();
        let space = FullSpace::new(lat.n());
        let mut vac = vec![0.0; 256];
        vac[0] = 1.0;
        // On |0>: <H_g> = 0 (off-diagonal) and <H_xi> = 0, so <Hdot> = 0.
        let v = hdot_matrix_element(&lat, &params, Schedule::Linear, 0.3, &space, &vac, &vac)
            .unwrap();
        assert_relative_eq!(v, 0.0, epsilon = 1e-12);
        // A single plaquette flip (string length 4) has <H_xi> = 2 xi l, so
        // <Hdot> = -f' * 2 xi l = -8.
        let mut flipped = vec![0.0; 256];
        flipped[lat.plaquette_mask(0) as usize] = 1.0;
        let v = hdot_matrix_element(&lat, &params, Schedule::Linear, 0.3, &space, &flipped, &flipped)
            .unwrap();
        assert_relative_eq!(v, -8.0, epsilon = 1e-12);
        assert!(transition_bound(v, 1.0, 1.0).is_err());
        assert_relative_eq!(transition_bound(2.0, 1.0, 3.0).unwrap(), 0.25);
    }

    #[test]
    fn phi_dot_flat_at_smooth_start() {
        let lat = build_torus(2).unwrap();
        let params = ModelParams::new(10.0, 1.0, 1.0).unwrap();
        let flat = phi_dot_norm(&lat, &params, Schedule::TrigSmooth, 0.0, 1e-4, &opts()).unwrap();
        assert!(flat < 1e-2, "trig-smooth start should be flat, got {flat}");
        let moving = phi_dot_norm(&lat, &params, Schedule::Linear, 0.5, 1e-4, &opts()).unwrap();
        assert!(moving > flat);
    }

    #[test]
    fn duality_exact_at_l2() {
        let report = duality_spectrum_check(2, 1.0, 1.0, 8, 1e-10, &opts()).unwrap();
        assert!(report.pass, "max diff {}", report.max_difference);
        // λ1 = 0: pure transverse field; evenly spaced flip spectrum.
        let free = duality_spectrum_check(2, 0.0, 1.0, 8, 1e-10, &opts()).unwrap();
        assert!(free.pass);
        assert_relative_eq!(free.gauge_levels[0], -4.0, epsilon = 1e-10);
    }
}
