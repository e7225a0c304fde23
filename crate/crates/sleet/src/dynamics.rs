//! Single-trajectory propagation of the density matrix.
//!
//! The state lives on the (n+2)-dimensional basis {ground, sites 1..=n,
//! trap}. One trajectory integrates
//!
//! ```text
//! drho/dt = -(i/hbar) [H_el + diag(0, Delta_1..Delta_n, 0), rho]
//!           + gamma_l sum_j D[|0><j|] rho + gamma_t D[|trap><3|] rho
//! ```
//!
//! with `D[A] rho = A rho A^+ - 1/2 {A^+ A, rho}`, the fluctuations Delta
//! held constant within each step, and a fixed-step fourth-order
//! Adams-Bashforth-Moulton predictor-corrector bootstrapped by three
//! classical Runge-Kutta steps.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::constants::{FS_PER_PS, HBAR_CM_FS};
use crate::model::SiteHamiltonian;
use crate::noise::NoiseSource;

/// The trap drains this chromophore (1-based site number).
pub const TRAP_SOURCE_SITE: usize = 3;

/// Hard upper limit on the integrator step, fs.
pub const MAX_DT_FS: f64 = 2.0;

/// The step must resolve the noise correlation time: dt <= tau_c / 10.
pub const TAU_C_STEPS: f64 = 10.0;

/// Base state-invariant tolerances; propagation aborts at 10x these.
pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-8;
pub const EIGENVALUE_FLOOR: f64 = -1e-8;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("initial site {site} outside 1..={n_sites}")]
    InvalidSite { site: usize, n_sites: usize },
    #[error("step size must be positive, got {0} fs")]
    NonPositiveStep(f64),
    #[error("step size {dt} fs exceeds the {MAX_DT_FS} fs limit")]
    StepTooLarge { dt: f64 },
    #[error("step size {dt} fs does not resolve tau_c = {tau_c} fs (need dt <= tau_c/10)")]
    StepVsCorrelationTime { dt: f64, tau_c: f64 },
    #[error("recording stride {stride} fs is not a positive multiple of dt = {dt} fs")]
    BadStride { stride: f64, dt: f64 },
    #[error("decay rates must be non-negative, got gamma_l = {gamma_l}, gamma_t = {gamma_t} (1/ps)")]
    NegativeRate { gamma_l: f64, gamma_t: f64 },
    #[error(
        "state invariant `{quantity}` reached {value:.3e} at step {step} (t = {time_fs} fs); \
         the time step is likely too large"
    )]
    InvariantViolation {
        quantity: &'static str,
        value: f64,
        step: usize,
        time_fs: f64,
    },
}

/// Radiative-loss and trapping rates, both in 1/ps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    gamma_l_per_ps: f64,
    gamma_t_per_ps: f64,
}

impl RateParams {
    pub fn new(gamma_l_per_ps: f64, gamma_t_per_ps: f64) -> Result<Self, DynamicsError> {
        if gamma_l_per_ps < 0.0 || gamma_t_per_ps < 0.0 {
            return Err(DynamicsError::NegativeRate {
                gamma_l: gamma_l_per_ps,
                gamma_t: gamma_t_per_ps,
            });
        }
        Ok(Self {
            gamma_l_per_ps,
            gamma_t_per_ps,
        })
    }

    pub fn gamma_l_per_ps(&self) -> f64 {
        self.gamma_l_per_ps
    }

    pub fn gamma_t_per_ps(&self) -> f64 {
        self.gamma_t_per_ps
    }

    pub fn gamma_l_per_fs(&self) -> f64 {
        self.gamma_l_per_ps / FS_PER_PS
    }

    pub fn gamma_t_per_fs(&self) -> f64 {
        self.gamma_t_per_ps / FS_PER_PS
    }
}

/// Density matrix over {ground, sites, trap} at a point in time.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub rho: DMatrix<Complex64>,
    pub time_fs: f64,
}

impl SystemState {
    /// A pure excitation on one site (1-based).
    pub fn pure_site(n_sites: usize, site: usize) -> Result<Self, DynamicsError> {
        if site < 1 || site > n_sites {
            return Err(DynamicsError::InvalidSite { site, n_sites });
        }
        let dim = n_sites + 2;
        let mut rho = DMatrix::zeros(dim, dim);
        rho[(site, site)] = Complex64::new(1.0, 0.0);
        Ok(Self { rho, time_fs: 0.0 })
    }

    pub fn n_sites(&self) -> usize {
        self.rho.nrows() - 2
    }

    pub fn trap_index(&self) -> usize {
        self.rho.nrows() - 1
    }

    /// Checks Hermiticity, unit trace, and positivity at the base
    /// tolerances.
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let herm = hermiticity_deviation(&self.rho);
        if herm > HERMITICITY_TOL {
            return Err(DynamicsError::InvariantViolation {
                quantity: "hermiticity",
                value: herm,
                step: 0,
                time_fs: self.time_fs,
            });
        }
        let tr = trace_deviation(&self.rho);
        if tr > TRACE_TOL {
            return Err(DynamicsError::InvariantViolation {
                quantity: "trace",
                value: tr,
                step: 0,
                time_fs: self.time_fs,
            });
        }
        if !min_eigenvalue_above(&self.rho, EIGENVALUE_FLOOR) {
            return Err(DynamicsError::InvariantViolation {
                quantity: "positivity",
                value: EIGENVALUE_FLOOR,
                step: 0,
                time_fs: self.time_fs,
            });
        }
        Ok(())
    }
}

/// Observable time series of one trajectory, recorded on the configured
/// stride, plus worst-case numerical diagnostics seen along the way.
#[derive(Debug, Clone)]
pub struct TrajectoryResult {
    pub time_fs: Vec<f64>,
    pub p_trap: Vec<f64>,
    pub p_surv: Vec<f64>,
    pub coherence: Vec<f64>,
    pub displacement: Vec<f64>,
    /// Site populations per record point, length n each.
    pub populations: Vec<Vec<f64>>,
    /// Complex upper-triangle site coherences rho_ij (i < j) per record
    /// point, in the pair order (1,2), (1,3), ..., (n-1,n). Averaging these
    /// across trajectories before taking magnitudes gives the coherence of
    /// the ensemble-averaged state, which decays under dephasing; the
    /// scalar `coherence` (magnitudes first) instead tracks how delocalized
    /// each realization is.
    pub site_coherences: Vec<Vec<Complex64>>,
    pub max_trace_dev: f64,
    pub max_hermiticity_dev: f64,
    /// Smallest eigenvalue stayed above -1e-8 at every record point.
    pub positivity_ok: bool,
}

/// Embeds the site Hamiltonian into the (n+2)-dimensional space, with zero
/// rows for ground and trap. Site energies are shifted by their minimum;
/// on this manifold a uniform shift only rotates ground/trap coherences
/// that remain identically zero, and small entries keep phases slow.
pub fn embed_hamiltonian(h: &SiteHamiltonian) -> DMatrix<f64> {
    let n = h.n_sites();
    let dim = n + 2;
    let shift = (0..n).map(|i| h.matrix()[(i, i)]).fold(f64::INFINITY, f64::min);
    let mut out = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            out[(i + 1, j + 1)] = h.matrix()[(i, j)] - if i == j { shift } else { 0.0 };
        }
    }
    out
}

/// Right-hand side of the master equation for one noise value.
///
/// `h_embedded` is the output of [`embed_hamiltonian`]; `delta` holds the n
/// site-energy fluctuations in cm^-1. The result is Hermitian and traceless.
pub fn rhs(
    rho: &DMatrix<Complex64>,
    h_embedded: &DMatrix<f64>,
    delta: &DVector<f64>,
    rates: &RateParams,
) -> DMatrix<Complex64> {
    let dim = rho.nrows();
    assert_eq!(h_embedded.nrows(), dim);
    assert_eq!(delta.len(), dim - 2);
    let mut out = DMatrix::zeros(dim, dim);
    let mut scratch = DMatrix::zeros(dim, dim);
    rhs_into(&mut out, &mut scratch, rho, h_embedded, delta, rates);
    out
}

/// Allocation-free RHS evaluation; `scratch` holds (H + diag Delta) rho.
fn rhs_into(
    out: &mut DMatrix<Complex64>,
    scratch: &mut DMatrix<Complex64>,
    rho: &DMatrix<Complex64>,
    h_embedded: &DMatrix<f64>,
    delta: &DVector<f64>,
    rates: &RateParams,
) {
    let dim = rho.nrows();
    let n = dim - 2;
    let trap = dim - 1;
    let gl = rates.gamma_l_per_fs();
    let gt = rates.gamma_t_per_fs();

    let h = h_embedded.as_slice();
    let r = rho.as_slice();
    let m = scratch.as_mut_slice();

    // m = (H + diag Delta) rho; only site rows are nonzero
    for k in 0..dim {
        let col = k * dim;
        m[col] = Complex64::ZERO;
        m[col + trap] = Complex64::ZERO;
        for i in 1..=n {
            let mut acc = delta[i - 1] * r[col + i];
            for j in 1..=n {
                acc += h[j * dim + i] * r[col + j];
            }
            m[col + i] = acc;
        }
    }

    // out = -(i/hbar)(m - m^+) - (1/2){gl P_sites + gt P_3, rho} elementwise
    let o = out.as_mut_slice();
    for k in 0..dim {
        let site_k = (1..=n).contains(&k) as u8 as f64;
        let trapsrc_k = (k == TRAP_SOURCE_SITE) as u8 as f64;
        for i in 0..dim {
            let c = m[k * dim + i] - m[i * dim + k].conj();
            let site_i = (1..=n).contains(&i) as u8 as f64;
            let trapsrc_i = (i == TRAP_SOURCE_SITE) as u8 as f64;
            let loss = 0.5 * (gl * (site_i + site_k) + gt * (trapsrc_i + trapsrc_k));
            o[k * dim + i] =
                Complex64::new(c.im / HBAR_CM_FS, -c.re / HBAR_CM_FS) - loss * r[k * dim + i];
        }
    }

    // gain terms: radiative decay feeds the ground state, trapping feeds
    // the trap from site 3
    let mut excited = Complex64::ZERO;
    for j in 1..=n {
        excited += r[j * dim + j];
    }
    o[0] += gl * excited;
    o[trap * dim + trap] += gt * r[TRAP_SOURCE_SITE * dim + TRAP_SOURCE_SITE];
}

fn hermiticity_deviation(rho: &DMatrix<Complex64>) -> f64 {
    let dim = rho.nrows();
    let mut worst = 0.0f64;
    for i in 0..dim {
        for j in i..dim {
            let dev = (rho[(i, j)] - rho[(j, i)].conj()).norm();
            worst = worst.max(dev);
        }
    }
    worst
}

fn trace_deviation(rho: &DMatrix<Complex64>) -> f64 {
    let mut tr = Complex64::ZERO;
    for i in 0..rho.nrows() {
        tr += rho[(i, i)];
    }
    (tr - Complex64::new(1.0, 0.0)).norm()
}

/// True when the smallest eigenvalue exceeds `floor`, tested by attempting
/// a Cholesky factorization of rho - floor I.
fn min_eigenvalue_above(rho: &DMatrix<Complex64>, floor: f64) -> bool {
    let dim = rho.nrows();
    let mut shifted = rho.clone();
    for i in 0..dim {
        shifted[(i, i)] -= Complex64::new(floor, 0.0);
    }
    nalgebra::linalg::Cholesky::new(shifted).is_some()
}

struct Workspace {
    scratch: DMatrix<Complex64>,
    stage: DMatrix<Complex64>,
    k2: DMatrix<Complex64>,
    k3: DMatrix<Complex64>,
    k4: DMatrix<Complex64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self {
            scratch: DMatrix::zeros(dim, dim),
            stage: DMatrix::zeros(dim, dim),
            k2: DMatrix::zeros(dim, dim),
            k3: DMatrix::zeros(dim, dim),
            k4: DMatrix::zeros(dim, dim),
        }
    }
}

/// Propagates a trajectory from a pure excitation on `initial_site`.
///
/// `displacement_weights` holds the distance (Angstrom) from the reference
/// site to each site j; the mean displacement observable is their
/// population-weighted sum. Observables are recorded every
/// `record_stride_fs` (which must be a multiple of `dt_fs`), always
/// including t = 0 and the final time.
#[allow(clippy::too_many_arguments)]
pub fn propagate(
    h_el: &SiteHamiltonian,
    rates: &RateParams,
    noise: &mut dyn NoiseSource,
    initial_site: usize,
    displacement_weights: &DVector<f64>,
    t_final_fs: f64,
    dt_fs: f64,
    record_stride_fs: f64,
) -> Result<TrajectoryResult, DynamicsError> {
    let n = h_el.n_sites();
    assert_eq!(displacement_weights.len(), n);
    if !(dt_fs > 0.0) {
        return Err(DynamicsError::NonPositiveStep(dt_fs));
    }
    if dt_fs > MAX_DT_FS * (1.0 + 1e-12) {
        return Err(DynamicsError::StepTooLarge { dt: dt_fs });
    }
    if let Some(tau_c) = noise.correlation_time_fs() {
        if dt_fs > tau_c / TAU_C_STEPS * (1.0 + 1e-12) {
            return Err(DynamicsError::StepVsCorrelationTime { dt: dt_fs, tau_c });
        }
    }
    let stride = (record_stride_fs / dt_fs).round();
    if stride < 1.0 || (stride * dt_fs - record_stride_fs).abs() > 1e-9 * record_stride_fs {
        return Err(DynamicsError::BadStride {
            stride: record_stride_fs,
            dt: dt_fs,
        });
    }
    let stride = stride as usize;
    let n_steps = (t_final_fs / dt_fs).round() as usize;

    let state = SystemState::pure_site(n, initial_site)?;
    let mut rho = state.rho;
    let dim = n + 2;
    let h = embed_hamiltonian(h_el);

    let mut ws = Workspace::new(dim);
    let mut f_hist: Vec<DMatrix<Complex64>> = (0..4).map(|_| DMatrix::zeros(dim, dim)).collect();

    let n_records = n_steps / stride + 2;
    let mut result = TrajectoryResult {
        time_fs: Vec::with_capacity(n_records),
        p_trap: Vec::with_capacity(n_records),
        p_surv: Vec::with_capacity(n_records),
        coherence: Vec::with_capacity(n_records),
        displacement: Vec::with_capacity(n_records),
        populations: Vec::with_capacity(n_records),
        site_coherences: Vec::with_capacity(n_records),
        max_trace_dev: 0.0,
        max_hermiticity_dev: 0.0,
        positivity_ok: true,
    };

    record(&mut result, &rho, 0.0, displacement_weights, 0)?;

    let mut delta = noise.sample(dt_fs).clone();
    for step in 0..n_steps {
        // history entry for this grid point
        let f_index = step % 4;
        {
            let (scratch, f_cur) = (&mut ws.scratch, &mut f_hist[f_index]);
            rhs_into(f_cur, scratch, &rho, &h, &delta, rates);
        }
        let delta_next = noise.sample(dt_fs).clone();

        if step < 3 {
            // classical fourth-order Runge-Kutta bootstrap
            let half = 0.5 * dt_fs;
            stage_from(&mut ws.stage, &rho, half, &f_hist[f_index]);
            rhs_step(&mut ws.k2, &mut ws.scratch, &ws.stage, &h, &delta, rates);
            stage_from(&mut ws.stage, &rho, half, &ws.k2);
            rhs_step(&mut ws.k3, &mut ws.scratch, &ws.stage, &h, &delta, rates);
            stage_from(&mut ws.stage, &rho, dt_fs, &ws.k3);
            rhs_step(&mut ws.k4, &mut ws.scratch, &ws.stage, &h, &delta, rates);
            let w = dt_fs / 6.0;
            let f1 = f_hist[f_index].as_slice();
            let (k2, k3, k4) = (ws.k2.as_slice(), ws.k3.as_slice(), ws.k4.as_slice());
            for (i, r) in rho.as_mut_slice().iter_mut().enumerate() {
                *r += w * (f1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        } else {
            // Adams-Bashforth predictor, Adams-Moulton corrector (PECE)
            let c = dt_fs / 24.0;
            let f0 = f_hist[f_index].as_slice();
            let f1 = f_hist[(step + 3) % 4].as_slice();
            let f2 = f_hist[(step + 2) % 4].as_slice();
            let f3 = f_hist[(step + 1) % 4].as_slice();
            {
                let pred = ws.stage.as_mut_slice();
                let base = rho.as_slice();
                for i in 0..pred.len() {
                    pred[i] = base[i]
                        + c * (55.0 * f0[i] - 59.0 * f1[i] + 37.0 * f2[i] - 9.0 * f3[i]);
                }
            }
            rhs_step(&mut ws.k2, &mut ws.scratch, &ws.stage, &h, &delta_next, rates);
            let fp = ws.k2.as_slice();
            for (i, r) in rho.as_mut_slice().iter_mut().enumerate() {
                *r += c * (9.0 * fp[i] + 19.0 * f0[i] - 5.0 * f1[i] + f2[i]);
            }
        }
        delta = delta_next;

        let completed = step + 1;
        if completed % stride == 0 || completed == n_steps {
            let t = completed as f64 * dt_fs;
            record(&mut result, &rho, t, displacement_weights, completed)?;
        }
    }
    Ok(result)
}

fn rhs_step(
    out: &mut DMatrix<Complex64>,
    scratch: &mut DMatrix<Complex64>,
    rho: &DMatrix<Complex64>,
    h: &DMatrix<f64>,
    delta: &DVector<f64>,
    rates: &RateParams,
) {
    rhs_into(out, scratch, rho, h, delta, rates);
}

fn stage_from(
    stage: &mut DMatrix<Complex64>,
    base: &DMatrix<Complex64>,
    coeff: f64,
    derivative: &DMatrix<Complex64>,
) {
    let s = stage.as_mut_slice();
    let b = base.as_slice();
    let d = derivative.as_slice();
    for i in 0..s.len() {
        s[i] = b[i] + coeff * d[i];
    }
}

fn record(
    result: &mut TrajectoryResult,
    rho: &DMatrix<Complex64>,
    time_fs: f64,
    displacement_weights: &DVector<f64>,
    step: usize,
) -> Result<(), DynamicsError> {
    let dim = rho.nrows();
    let n = dim - 2;
    let trap = dim - 1;

    let herm = hermiticity_deviation(rho);
    result.max_hermiticity_dev = result.max_hermiticity_dev.max(herm);
    if herm > 10.0 * HERMITICITY_TOL {
        return Err(DynamicsError::InvariantViolation {
            quantity: "hermiticity",
            value: herm,
            step,
            time_fs,
        });
    }
    let tr = trace_deviation(rho);
    result.max_trace_dev = result.max_trace_dev.max(tr);
    if tr > 10.0 * TRACE_TOL {
        return Err(DynamicsError::InvariantViolation {
            quantity: "trace",
            value: tr,
            step,
            time_fs,
        });
    }
    if !min_eigenvalue_above(rho, EIGENVALUE_FLOOR) {
        result.positivity_ok = false;
        if !min_eigenvalue_above(rho, 10.0 * EIGENVALUE_FLOOR) {
            return Err(DynamicsError::InvariantViolation {
                quantity: "positivity",
                value: 10.0 * EIGENVALUE_FLOOR,
                step,
                time_fs,
            });
        }
    }

    let p_trap = rho[(trap, trap)].re;
    let mut coherence = 0.0;
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 1..=n {
        for j in (i + 1)..=n {
            coherence += 2.0 * rho[(i, j)].norm();
            pairs.push(rho[(i, j)]);
        }
    }
    let mut displacement = 0.0;
    let mut populations = Vec::with_capacity(n);
    for j in 1..=n {
        let pop = rho[(j, j)].re;
        displacement += displacement_weights[j - 1] * pop;
        populations.push(pop);
    }

    result.time_fs.push(time_fs);
    result.p_trap.push(p_trap);
    result.p_surv.push(1.0 - p_trap);
    result.coherence.push(coherence);
    result.displacement.push(displacement);
    result.populations.push(populations);
    result.site_coherences.push(pairs);
    Ok(())
}
