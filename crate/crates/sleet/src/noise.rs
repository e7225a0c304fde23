//! Correlated Gaussian site-energy fluctuations.
//!
//! Each site carries a zero-mean Gaussian process Delta_j(t) with
//! exponential temporal correlation `<Delta(t) Delta(t+tau)> =
//! Delta0^2 exp(-|tau|/tau_c)` and stationary cross-site covariance
//! `Delta0^2 C_ij`. Temporal correlation is realized with the exact
//! stationary Ornstein-Uhlenbeck update, which has the required covariance
//! at any step size; spatial correlation is imposed by multiplying the
//! vector of independent unit-variance OU processes with the Cholesky
//! factor of C. Linearity of the mixing preserves the temporal decay.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::constants::KB_CM_PER_K;
use crate::model::Geometry;

/// Cholesky pivots at or below this value signal a non-positive-definite
/// spatial model.
pub const CHOLESKY_PIVOT_TOL: f64 = 1e-12;

/// Smallest eigenvalue required of a candidate correlation matrix in
/// [`find_max_beta`].
const PD_EIGENVALUE_TOL: f64 = 1e-9;

/// Bisection tolerance on beta in [`find_max_beta`].
const BETA_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("{field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("reorganization energy must be non-negative, got {0}")]
    NegativeReorganization(f64),
    #[error("correlation matrix is not positive definite (pivot {pivot:.3e} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },
    #[error("dimerized correlations are defined for 7 or more sites, got {0}")]
    DimerizedNeedsSevenSites(usize),
    #[error("unknown spatial model `{0}`")]
    UnknownModel(String),
}

/// Magnitude and timescale of the site-energy fluctuations.
///
/// The fluctuation magnitude is fixed by the high-temperature relation
/// Delta0^2 = 2 E_R k_B T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    tau_c_fs: f64,
    e_r_cm: f64,
    temperature_k: f64,
    sigma_cm: f64,
}

impl NoiseConfig {
    pub fn new(tau_c_fs: f64, e_r_cm: f64, temperature_k: f64) -> Result<Self, NoiseError> {
        if !(tau_c_fs > 0.0) {
            return Err(NoiseError::NonPositive { field: "tau_c", value: tau_c_fs });
        }
        if !(temperature_k > 0.0) {
            return Err(NoiseError::NonPositive {
                field: "temperature",
                value: temperature_k,
            });
        }
        if e_r_cm < 0.0 {
            return Err(NoiseError::NegativeReorganization(e_r_cm));
        }
        let sigma_cm = (2.0 * e_r_cm * KB_CM_PER_K * temperature_k).sqrt();
        Ok(Self {
            tau_c_fs,
            e_r_cm,
            temperature_k,
            sigma_cm,
        })
    }

    pub fn tau_c_fs(&self) -> f64 {
        self.tau_c_fs
    }

    pub fn e_r_cm(&self) -> f64 {
        self.e_r_cm
    }

    pub fn temperature_k(&self) -> f64 {
        self.temperature_k
    }

    /// Fluctuation magnitude Delta0 in cm^-1.
    pub fn sigma_cm(&self) -> f64 {
        self.sigma_cm
    }
}

/// Spatial correlation model for the site-energy fluctuations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialModel {
    /// Independent fluctuations on every site.
    None,
    /// Strongly coupled chromophore pairs (1,2) and (5,6) correlated at 0.9,
    /// the weaker pairs (4,5) and (4,7) at 0.4. The nominal matrix is
    /// marginally indefinite (smallest eigenvalue about -2e-4), so the
    /// constructor projects it to the nearest positive-definite correlation
    /// matrix; entries move by less than 3e-4.
    Dimerized,
    /// C_ij = exp(-d_ij / R_c) with distances in Angstrom.
    Exponential { rc_angstrom: f64 },
    /// C_ij = beta / d_ij^power with distances in nm and beta the largest
    /// constant <= 1 keeping the matrix positive definite (see
    /// [`find_max_beta`]). The nm scale is what makes the
    /// positive-definiteness bound the active constraint at typical
    /// chromophore separations.
    InverseSquare { power: f64 },
}

impl fmt::Display for SpatialModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpatialModel::None => write!(f, "none"),
            SpatialModel::Dimerized => write!(f, "dimerized"),
            SpatialModel::Exponential { rc_angstrom } => write!(f, "exponential({rc_angstrom})"),
            SpatialModel::InverseSquare { power } => write!(f, "inverse_square({power})"),
        }
    }
}

impl FromStr for SpatialModel {
    type Err = NoiseError;

    /// Accepts `none`, `dimerized`, `exponential(<R_c in Angstrom>)`,
    /// `inverse_square` and `inverse_square(<power>)`.
    fn from_str(s: &str) -> Result<Self, NoiseError> {
        let s = s.trim();
        let parse_arg = |inner: &str| -> Result<f64, NoiseError> {
            inner
                .parse()
                .map_err(|_| NoiseError::UnknownModel(s.to_string()))
        };
        match s {
            "none" => Ok(SpatialModel::None),
            "dimerized" => Ok(SpatialModel::Dimerized),
            "inverse_square" => Ok(SpatialModel::InverseSquare { power: 2.0 }),
            _ => {
                if let Some(inner) = s.strip_prefix("exponential(").and_then(|r| r.strip_suffix(')')) {
                    Ok(SpatialModel::Exponential {
                        rc_angstrom: parse_arg(inner)?,
                    })
                } else if let Some(inner) =
                    s.strip_prefix("inverse_square(").and_then(|r| r.strip_suffix(')'))
                {
                    Ok(SpatialModel::InverseSquare {
                        power: parse_arg(inner)?,
                    })
                } else {
                    Err(NoiseError::UnknownModel(s.to_string()))
                }
            }
        }
    }
}

/// Normalized equal-time cross-site covariance of the fluctuations,
/// together with its lower-triangular Cholesky factor.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    matrix: DMatrix<f64>,
    cholesky_factor: DMatrix<f64>,
    model: SpatialModel,
}

impl CorrelationMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.cholesky_factor
    }

    pub fn model(&self) -> SpatialModel {
        self.model
    }

    pub fn n_sites(&self) -> usize {
        self.matrix.nrows()
    }

    /// Builds directly from a caller-supplied matrix, running the same
    /// positive-definiteness check as the named constructors.
    pub fn from_matrix(matrix: DMatrix<f64>, model: SpatialModel) -> Result<Self, NoiseError> {
        let cholesky_factor = cholesky(&matrix)?;
        Ok(Self {
            matrix,
            cholesky_factor,
            model,
        })
    }
}

const DIMER_PAIRS: [(usize, usize, f64); 4] =
    [(1, 2, 0.9), (5, 6, 0.9), (4, 5, 0.4), (4, 7, 0.4)];

/// Constructs the spatial correlation matrix for the chosen model and
/// computes its Cholesky factor.
pub fn build_correlation_matrix(
    model: SpatialModel,
    geometry: &Geometry,
) -> Result<CorrelationMatrix, NoiseError> {
    let n = geometry.n_sites();
    let matrix = match model {
        SpatialModel::None => DMatrix::identity(n, n),
        SpatialModel::Dimerized => {
            if n < 7 {
                return Err(NoiseError::DimerizedNeedsSevenSites(n));
            }
            let mut m = DMatrix::identity(n, n);
            for &(i, j, c) in &DIMER_PAIRS {
                m[(i - 1, j - 1)] = c;
                m[(j - 1, i - 1)] = c;
            }
            match cholesky(&m) {
                Ok(l) => {
                    return Ok(CorrelationMatrix {
                        matrix: m,
                        cholesky_factor: l,
                        model,
                    })
                }
                // nominal constants are marginally indefinite
                Err(NoiseError::NotPositiveDefinite { .. }) => nearest_correlation_matrix(&m),
                Err(e) => return Err(e),
            }
        }
        SpatialModel::Exponential { rc_angstrom } => {
            if !(rc_angstrom > 0.0) {
                return Err(NoiseError::NonPositive {
                    field: "rc_angstrom",
                    value: rc_angstrom,
                });
            }
            DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    1.0
                } else {
                    (-geometry.distance(i + 1, j + 1) / rc_angstrom).exp()
                }
            })
        }
        SpatialModel::InverseSquare { power } => {
            if !(power > 0.0) {
                return Err(NoiseError::NonPositive { field: "power", value: power });
            }
            let beta = find_max_beta(geometry, power);
            inverse_power_matrix(geometry, power, beta)
        }
    };
    let cholesky_factor = cholesky(&matrix)?;
    Ok(CorrelationMatrix {
        matrix,
        cholesky_factor,
        model,
    })
}

fn inverse_power_matrix(geometry: &Geometry, power: f64, beta: f64) -> DMatrix<f64> {
    let n = geometry.n_sites();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            let d_nm = geometry.distance(i + 1, j + 1) / 10.0;
            beta / d_nm.powf(power)
        }
    })
}

/// Largest beta in (0, 1] (to absolute tolerance 1e-4) for which the matrix
/// with unit diagonal and off-diagonal entries beta / d_ij^power (d in nm)
/// stays positive definite. Returns exactly 1 when even beta = 1 passes.
pub fn find_max_beta(geometry: &Geometry, power: f64) -> f64 {
    let is_pd = |beta: f64| -> bool {
        let m = inverse_power_matrix(geometry, power, beta);
        let eigenvalues = m.symmetric_eigenvalues();
        eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min) > PD_EIGENVALUE_TOL
    };
    if is_pd(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > BETA_TOL {
        let mid = 0.5 * (lo + hi);
        if is_pd(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Lower-triangular Cholesky factor of a symmetric matrix. Fails with
/// [`NoiseError::NotPositiveDefinite`] when a pivot drops to
/// [`CHOLESKY_PIVOT_TOL`] or below.
pub fn cholesky(c: &DMatrix<f64>) -> Result<DMatrix<f64>, NoiseError> {
    let n = c.nrows();
    assert_eq!(n, c.ncols(), "cholesky input must be square");
    for i in 0..n {
        for j in (i + 1)..n {
            assert!(
                (c[(i, j)] - c[(j, i)]).abs() <= 1e-12,
                "cholesky input must be symmetric"
            );
        }
    }
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = c[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot <= CHOLESKY_PIVOT_TOL {
            return Err(NoiseError::NotPositiveDefinite { column: j, pivot });
        }
        let diag = pivot.sqrt();
        l[(j, j)] = diag;
        for i in (j + 1)..n {
            let mut s = c[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / diag;
        }
    }
    Ok(l)
}

/// Projects a marginally indefinite symmetric matrix to the nearest
/// correlation matrix: clamp eigenvalues from below, reconstruct, rescale
/// the diagonal back to one.
fn nearest_correlation_matrix(c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = c.nrows();
    let eig = c.clone().symmetric_eigen();
    let clamped = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            eig.eigenvalues[i].max(1e-4)
        } else {
            0.0
        }
    });
    let b = &eig.eigenvectors * clamped * eig.eigenvectors.transpose();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = b[(i, j)] / (b[(i, i)] * b[(j, j)]).sqrt();
        }
    }
    for i in 0..n {
        out[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    out
}

/// One exact stationary Ornstein-Uhlenbeck update of a unit-variance state
/// vector: u' = a u + sqrt(1 - a^2) xi with a = exp(-dt/tau_c) and xi a
/// vector of independent standard normals.
pub fn ou_step<R: Rng + ?Sized>(
    u: &DVector<f64>,
    dt_fs: f64,
    tau_c_fs: f64,
    rng: &mut R,
) -> DVector<f64> {
    assert!(dt_fs > 0.0 && tau_c_fs > 0.0, "ou_step needs dt > 0 and tau_c > 0");
    let a = (-dt_fs / tau_c_fs).exp();
    // (1-a)(1+a) keeps precision when dt << tau_c
    let b = ((1.0 - a) * (1.0 + a)).sqrt();
    DVector::from_fn(u.nrows(), |i, _| a * u[i] + b * rng.sample::<f64, _>(StandardNormal))
}

/// Streaming source of per-step fluctuation vectors for one trajectory.
///
/// The first call to [`NoiseSource::sample`] returns Delta(0) built from a
/// stationary draw; each further call advances the internal state by `dt`
/// and returns the new Delta. Values are held constant within a step.
pub trait NoiseSource {
    fn sample(&mut self, dt_fs: f64) -> &DVector<f64>;

    /// Correlation time when the source has one; used by the propagator to
    /// enforce its step-size precondition.
    fn correlation_time_fs(&self) -> Option<f64> {
        None
    }
}

/// Seeded generator of correlated fluctuations: Delta(t) = Delta0 L u(t).
///
/// Each trajectory owns one generator, derived deterministically from
/// (master seed, stream index), so ensembles are reproducible regardless of
/// scheduling.
pub struct NoiseGenerator {
    sigma_cm: f64,
    tau_c_fs: f64,
    chol: DMatrix<f64>,
    u: DVector<f64>,
    delta: DVector<f64>,
    rng: ChaCha8Rng,
    primed: bool,
}

impl NoiseGenerator {
    pub fn new(
        config: &NoiseConfig,
        correlation: &CorrelationMatrix,
        master_seed: u64,
        stream: u64,
    ) -> Self {
        let n = correlation.n_sites();
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream);
        let u = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut gen = Self {
            sigma_cm: config.sigma_cm(),
            tau_c_fs: config.tau_c_fs(),
            chol: correlation.cholesky_factor().clone(),
            u,
            delta: DVector::zeros(n),
            rng,
            primed: false,
        };
        gen.mix();
        gen
    }

    fn mix(&mut self) {
        self.delta.gemv(self.sigma_cm, &self.chol, &self.u, 0.0);
    }
}

impl NoiseSource for NoiseGenerator {
    fn sample(&mut self, dt_fs: f64) -> &DVector<f64> {
        if self.primed {
            self.u = ou_step(&self.u, dt_fs, self.tau_c_fs, &mut self.rng);
            self.mix();
        } else {
            self.primed = true;
        }
        &self.delta
    }

    fn correlation_time_fs(&self) -> Option<f64> {
        Some(self.tau_c_fs)
    }
}

/// Identically zero fluctuations (noiseless dynamics).
pub struct ZeroNoise {
    zero: DVector<f64>,
}

impl ZeroNoise {
    pub fn new(n_sites: usize) -> Self {
        Self { zero: DVector::zeros(n_sites) }
    }
}

impl NoiseSource for ZeroNoise {
    fn sample(&mut self, _dt_fs: f64) -> &DVector<f64> {
        &self.zero
    }
}

/// A constant fluctuation vector, frozen in time.
pub struct FrozenNoise {
    value: DVector<f64>,
}

impl FrozenNoise {
    pub fn new(value: DVector<f64>) -> Self {
        Self { value }
    }
}

impl NoiseSource for FrozenNoise {
    fn sample(&mut self, _dt_fs: f64) -> &DVector<f64> {
        &self.value
    }
}

/// Samples a full field sequence Delta(t_k), k = 0..n_steps, on a fixed
/// step grid. Mostly useful for statistical checks and diagnostics; the
/// propagator consumes the streaming interface instead.
pub fn sample_field(
    config: &NoiseConfig,
    correlation: &CorrelationMatrix,
    n_steps: usize,
    dt_fs: f64,
    master_seed: u64,
) -> Vec<DVector<f64>> {
    let mut gen = NoiseGenerator::new(config, correlation, master_seed, 0);
    (0..n_steps).map(|_| gen.sample(dt_fs).clone()).collect()
}
