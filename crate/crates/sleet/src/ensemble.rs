//! Seed-reproducible trajectory ensembles, averaged observables, and
//! survival-probability decay fits.
//!
//! Trajectory k draws its noise from a generator seeded by
//! (master_seed, k), so results are identical whatever the execution order
//! or degree of parallelism. Per-observable sums are accumulated by a
//! fixed pairwise reduction over the trajectory index, which makes the
//! statistics independent of scheduling and lets two half-ensembles merge
//! into exactly the full-ensemble result.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{propagate, DynamicsError, RateParams, SystemState, TrajectoryResult};
use crate::model::{Geometry, SiteHamiltonian};
use crate::noise::{CorrelationMatrix, NoiseConfig, NoiseGenerator};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("ensembles need at least 2 trajectories, got {0}")]
    TooFewTrajectories(usize),
    #[error("trajectory {index} failed: {source}")]
    TrajectoryFailed {
        index: u64,
        #[source]
        source: DynamicsError,
    },
    #[error("window [{lo}, {hi}] fs keeps {kept} points; need at least 5")]
    DegenerateWindow { lo: f64, hi: f64, kept: usize },
    #[error("time grids differ; statistics can only merge over a shared grid")]
    GridMismatch,
    #[error("survival probability is not positive anywhere in the window")]
    EmptySurvival,
}

/// Everything one ensemble run needs besides the trajectory count and seed.
#[derive(Clone, Copy)]
pub struct EnsembleSetup<'a> {
    pub hamiltonian: &'a SiteHamiltonian,
    pub geometry: &'a Geometry,
    pub correlation: &'a CorrelationMatrix,
    pub noise: NoiseConfig,
    pub rates: RateParams,
    /// Initial excitation site, 1-based; also the displacement reference.
    pub initial_site: usize,
    pub t_final_fs: f64,
    pub dt_fs: f64,
    pub record_stride_fs: f64,
}

/// Point observables of a single state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub p_trap: f64,
    pub p_surv: f64,
    pub total_coherence: f64,
    pub mean_displacement: f64,
}

/// Evaluates trap population, survival, total inter-site coherence
/// (sum of |rho_ij| over site pairs i != j), and the mean displacement
/// from `ref_site` (population-weighted distance, Angstrom).
pub fn observables(state: &SystemState, geometry: &Geometry, ref_site: usize) -> Observables {
    let n = state.n_sites();
    assert!(ref_site >= 1 && ref_site <= n, "reference site out of range");
    let trap = state.trap_index();
    let p_trap = state.rho[(trap, trap)].re;
    let mut total_coherence = 0.0;
    for i in 1..=n {
        for j in (i + 1)..=n {
            total_coherence += 2.0 * state.rho[(i, j)].norm();
        }
    }
    let mut mean_displacement = 0.0;
    for j in 1..=n {
        if j != ref_site {
            mean_displacement += geometry.distance(ref_site, j) * state.rho[(j, j)].re;
        }
    }
    Observables {
        p_trap,
        p_surv: 1.0 - p_trap,
        total_coherence,
        mean_displacement,
    }
}

/// Mean, standard deviation, and standard error of one observable on the
/// shared time grid, held as pairwise-reduced sums so that merging is
/// exact.
#[derive(Debug, Clone, PartialEq)]
pub struct StatSeries {
    n: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl StatSeries {
    /// Reduces per-trajectory rows (outer index = trajectory) into sums.
    pub fn from_trajectories(values: &[Vec<f64>]) -> Self {
        let n = values.len();
        let len = values[0].len();
        let sum = (0..len)
            .map(|t| pairwise_sum(values, 0, n, &|row| row[t]))
            .collect();
        let sum_sq = (0..len)
            .map(|t| pairwise_sum(values, 0, n, &|row| row[t] * row[t]))
            .collect();
        Self { n, sum, sum_sq }
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn mean(&self, idx: usize) -> f64 {
        self.sum[idx] / self.n as f64
    }

    /// Sample standard deviation (n-1 denominator).
    pub fn std_dev(&self, idx: usize) -> f64 {
        let n = self.n as f64;
        let centered = self.sum_sq[idx] - self.sum[idx] * self.sum[idx] / n;
        (centered.max(0.0) / (n - 1.0)).sqrt()
    }

    pub fn std_err(&self, idx: usize) -> f64 {
        self.std_dev(idx) / (self.n as f64).sqrt()
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.mean(i)).collect()
    }

    fn merge(&self, other: &Self) -> Result<Self, EnsembleError> {
        if self.len() != other.len() {
            return Err(EnsembleError::GridMismatch);
        }
        Ok(Self {
            n: self.n + other.n,
            sum: self.sum.iter().zip(&other.sum).map(|(a, b)| a + b).collect(),
            sum_sq: self
                .sum_sq
                .iter()
                .zip(&other.sum_sq)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }
}

/// Pairwise (midpoint-splitting) reduction: the summation tree depends only
/// on the index range, so any two runs and any half/full split agree bit
/// for bit.
fn pairwise_sum<T>(rows: &[T], lo: usize, hi: usize, f: &dyn Fn(&T) -> f64) -> f64 {
    match hi - lo {
        0 => 0.0,
        1 => f(&rows[lo]),
        len => {
            let mid = lo + len / 2;
            pairwise_sum(rows, lo, mid, f) + pairwise_sum(rows, mid, hi, f)
        }
    }
}

/// Ensemble-averaged observables with dispersion across trajectories.
#[derive(Debug, Clone)]
pub struct EnsembleStatistics {
    pub time_fs: Vec<f64>,
    pub n_trajectories: usize,
    pub master_seed: u64,
    pub p_trap: StatSeries,
    pub p_surv: StatSeries,
    pub coherence: StatSeries,
    pub displacement: StatSeries,
    /// One series per site, indexed by site number - 1.
    pub populations: Vec<StatSeries>,
    /// Complex sums over trajectories of the upper-triangle site coherences
    /// rho_ij, per time point. Dividing by n and taking magnitudes yields
    /// the coherence of the ensemble-averaged state.
    pub state_coherence_sums: Vec<Vec<Complex64>>,
    pub max_trace_dev: f64,
    pub max_hermiticity_dev: f64,
    pub positivity_ok: bool,
}

impl EnsembleStatistics {
    /// Index of the last time point (observables at t_final).
    pub fn final_index(&self) -> usize {
        self.time_fs.len() - 1
    }

    /// Nearest grid index to a requested time.
    pub fn index_at(&self, t_fs: f64) -> usize {
        let mut best = 0;
        for (i, t) in self.time_fs.iter().enumerate() {
            if (t - t_fs).abs() < (self.time_fs[best] - t_fs).abs() {
                best = i;
            }
        }
        best
    }

    /// Total coherence of the ensemble-averaged density matrix at one time
    /// point: sum over site pairs i != j of |mean rho_ij|. This is the
    /// quantity that decays under ensemble dephasing.
    pub fn averaged_state_coherence(&self, idx: usize) -> f64 {
        let n = self.n_trajectories as f64;
        self.state_coherence_sums[idx]
            .iter()
            .map(|s| 2.0 * (s / n).norm())
            .sum()
    }

    /// Pools two ensembles computed over disjoint trajectory streams of the
    /// same configuration.
    pub fn merge(&self, other: &Self) -> Result<Self, EnsembleError> {
        if self.time_fs != other.time_fs {
            return Err(EnsembleError::GridMismatch);
        }
        let populations = self
            .populations
            .iter()
            .zip(&other.populations)
            .map(|(a, b)| a.merge(b))
            .collect::<Result<Vec<_>, _>>()?;
        let state_coherence_sums = self
            .state_coherence_sums
            .iter()
            .zip(&other.state_coherence_sums)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Ok(Self {
            time_fs: self.time_fs.clone(),
            n_trajectories: self.n_trajectories + other.n_trajectories,
            master_seed: self.master_seed,
            p_trap: self.p_trap.merge(&other.p_trap)?,
            p_surv: self.p_surv.merge(&other.p_surv)?,
            coherence: self.coherence.merge(&other.coherence)?,
            displacement: self.displacement.merge(&other.displacement)?,
            populations,
            state_coherence_sums,
            max_trace_dev: self.max_trace_dev.max(other.max_trace_dev),
            max_hermiticity_dev: self.max_hermiticity_dev.max(other.max_hermiticity_dev),
            positivity_ok: self.positivity_ok && other.positivity_ok,
        })
    }
}

/// Runs trajectories with noise streams `0..n_trajectories`.
pub fn run_ensemble(
    setup: &EnsembleSetup,
    n_trajectories: usize,
    master_seed: u64,
) -> Result<EnsembleStatistics, EnsembleError> {
    run_ensemble_streams(setup, 0..n_trajectories as u64, master_seed)
}

/// Runs trajectories for an explicit range of noise streams; splitting a
/// stream range in two and merging the results reproduces the full run.
pub fn run_ensemble_streams(
    setup: &EnsembleSetup,
    streams: std::ops::Range<u64>,
    master_seed: u64,
) -> Result<EnsembleStatistics, EnsembleError> {
    let n_trajectories = (streams.end - streams.start) as usize;
    if n_trajectories < 2 {
        return Err(EnsembleError::TooFewTrajectories(n_trajectories));
    }
    let n = setup.hamiltonian.n_sites();
    let weights = DVector::from_fn(n, |j, _| {
        if j + 1 == setup.initial_site {
            0.0
        } else {
            setup.geometry.distance(setup.initial_site, j + 1)
        }
    });

    let results: Vec<Result<TrajectoryResult, EnsembleError>> = streams
        .clone()
        .into_par_iter()
        .map(|stream| {
            let mut noise =
                NoiseGenerator::new(&setup.noise, setup.correlation, master_seed, stream);
            propagate(
                setup.hamiltonian,
                &setup.rates,
                &mut noise,
                setup.initial_site,
                &weights,
                setup.t_final_fs,
                setup.dt_fs,
                setup.record_stride_fs,
            )
            .map_err(|source| EnsembleError::TrajectoryFailed { index: stream, source })
        })
        .collect();

    let mut trajectories = Vec::with_capacity(n_trajectories);
    for r in results {
        trajectories.push(r?);
    }

    let time_fs = trajectories[0].time_fs.clone();
    let collect = |f: &dyn Fn(&TrajectoryResult) -> Vec<f64>| -> Vec<Vec<f64>> {
        trajectories.iter().map(f).collect()
    };
    let p_trap = StatSeries::from_trajectories(&collect(&|t| t.p_trap.clone()));
    let p_surv = StatSeries::from_trajectories(&collect(&|t| t.p_surv.clone()));
    let coherence = StatSeries::from_trajectories(&collect(&|t| t.coherence.clone()));
    let displacement = StatSeries::from_trajectories(&collect(&|t| t.displacement.clone()));
    let populations = (0..n)
        .map(|j| {
            StatSeries::from_trajectories(&collect(&|t| {
                t.populations.iter().map(|p| p[j]).collect()
            }))
        })
        .collect();
    let n_pairs = n * (n - 1) / 2;
    let n_times = time_fs.len();
    let state_coherence_sums: Vec<Vec<Complex64>> = (0..n_times)
        .map(|t| {
            (0..n_pairs)
                .map(|p| {
                    let re = pairwise_sum(&trajectories, 0, n_trajectories, &|traj| {
                        traj.site_coherences[t][p].re
                    });
                    let im = pairwise_sum(&trajectories, 0, n_trajectories, &|traj| {
                        traj.site_coherences[t][p].im
                    });
                    Complex64::new(re, im)
                })
                .collect()
        })
        .collect();

    Ok(EnsembleStatistics {
        time_fs,
        n_trajectories,
        master_seed,
        p_trap,
        p_surv,
        coherence,
        displacement,
        populations,
        max_trace_dev: trajectories.iter().map(|t| t.max_trace_dev).fold(0.0, f64::max),
        max_hermiticity_dev: trajectories
            .iter()
            .map(|t| t.max_hermiticity_dev)
            .fold(0.0, f64::max),
        positivity_ok: trajectories.iter().all(|t| t.positivity_ok),
    })
}

/// Least-squares polynomial fit y ~ sum c_k x^k. The abscissa is rescaled
/// internally for conditioning; returned coefficients apply to raw x.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Vec<f64> {
    assert_eq!(x.len(), y.len());
    assert!(x.len() > degree, "need more points than coefficients");
    let x0 = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let x1 = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = if x1 > x0 { x1 - x0 } else { 1.0 };
    let m = degree + 1;
    // normal equations in the scaled basis u = (x - x0)/scale
    let mut ata = nalgebra::DMatrix::<f64>::zeros(m, m);
    let mut aty = nalgebra::DVector::<f64>::zeros(m);
    for (&xi, &yi) in x.iter().zip(y) {
        let u = (xi - x0) / scale;
        let mut powers = vec![1.0; m];
        for k in 1..m {
            powers[k] = powers[k - 1] * u;
        }
        for r in 0..m {
            aty[r] += powers[r] * yi;
            for c in 0..m {
                ata[(r, c)] += powers[r] * powers[c];
            }
        }
    }
    let b = ata.lu().solve(&aty).expect("normal equations are singular");
    // expand b_k ((x - x0)/scale)^k into raw powers of x
    let mut coeffs = vec![0.0; m];
    for k in 0..m {
        let bk = b[k] / scale.powi(k as i32);
        // binomial expansion of (x - x0)^k
        let mut binom = 1.0;
        for j in 0..=k {
            let term = bk * binom * (-x0).powi((k - j) as i32);
            coeffs[j] += term;
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
    }
    coeffs
}

fn rms(residuals: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = residuals.collect();
    (v.iter().map(|r| r * r).sum::<f64>() / v.len() as f64).sqrt()
}

/// Windowed fits of ln P_surv: a cubic on the short window and a straight
/// line (decay rate beta) on the long window.
#[derive(Debug, Clone)]
pub struct SurvivalFit {
    /// ln P_surv ~ c0 + c1 t + c2 t^2 + c3 t^3 on the short window (t in fs).
    pub short_coeffs: [f64; 4],
    pub short_residual_rms: f64,
    /// ln P_surv ~ a - beta t on the long window; beta in 1/fs.
    pub long_beta_per_fs: f64,
    pub long_intercept: f64,
    pub long_residual_rms: f64,
    pub short_window_fs: (f64, f64),
    pub long_window_fs: (f64, f64),
}

/// Fits the ensemble-mean survival probability on two windows. Points with
/// non-positive survival are dropped before taking the logarithm.
pub fn fit_survival(
    stats: &EnsembleStatistics,
    short_window_fs: (f64, f64),
    long_window_fs: (f64, f64),
) -> Result<SurvivalFit, EnsembleError> {
    let gather = |window: (f64, f64)| -> Result<(Vec<f64>, Vec<f64>), EnsembleError> {
        let mut ts = Vec::new();
        let mut ln_p = Vec::new();
        for (i, &t) in stats.time_fs.iter().enumerate() {
            if t < window.0 || t > window.1 {
                continue;
            }
            let p = stats.p_surv.mean(i);
            if p <= 0.0 {
                break;
            }
            ts.push(t);
            ln_p.push(p.ln());
        }
        if ts.is_empty() {
            return Err(EnsembleError::EmptySurvival);
        }
        if ts.len() < 5 {
            return Err(EnsembleError::DegenerateWindow {
                lo: window.0,
                hi: window.1,
                kept: ts.len(),
            });
        }
        Ok((ts, ln_p))
    };

    let (ts_short, ln_short) = gather(short_window_fs)?;
    let c = polyfit(&ts_short, &ln_short, 3);
    let short_coeffs = [c[0], c[1], c[2], c[3]];
    let short_residual_rms = rms(ts_short.iter().zip(&ln_short).map(|(&t, &y)| {
        y - (c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t)
    }));

    let (ts_long, ln_long) = gather(long_window_fs)?;
    let line = polyfit(&ts_long, &ln_long, 1);
    let long_residual_rms = rms(
        ts_long
            .iter()
            .zip(&ln_long)
            .map(|(&t, &y)| y - (line[0] + line[1] * t)),
    );

    Ok(SurvivalFit {
        short_coeffs,
        short_residual_rms,
        long_beta_per_fs: -line[1],
        long_intercept: line[0],
        long_residual_rms,
        short_window_fs,
        long_window_fs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Geometry;
    use crate::noise::{build_correlation_matrix, SpatialModel};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn fmo() -> (SiteHamiltonian, Geometry) {
        (
            SiteHamiltonian::load(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/../../data/fmo_hamiltonian.txt"
            ))
            .unwrap(),
            Geometry::load(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/../../data/fmo_geometry.txt"
            ))
            .unwrap(),
        )
    }

    fn setup<'a>(
        h: &'a SiteHamiltonian,
        g: &'a Geometry,
        corr: &'a CorrelationMatrix,
        tau_c: f64,
        temperature: f64,
        site: usize,
        t_final: f64,
    ) -> EnsembleSetup<'a> {
        EnsembleSetup {
            hamiltonian: h,
            geometry: g,
            correlation: corr,
            noise: NoiseConfig::new(tau_c, 35.0, temperature).unwrap(),
            rates: RateParams::new(0.001, 1.0).unwrap(),
            initial_site: site,
            t_final_fs: t_final,
            dt_fs: 1.0,
            record_stride_fs: 10.0,
        }
    }

    #[test]
    fn point_observables() {
        let (_, g) = fmo();
        let mut state = SystemState::pure_site(7, 6).unwrap();
        let obs = observables(&state, &g, 6);
        assert_eq!(obs.p_trap, 0.0);
        assert_eq!(obs.p_surv, 1.0);
        assert_eq!(obs.total_coherence, 0.0);
        assert_eq!(obs.mean_displacement, 0.0);

        // equal superposition of sites 1 and 2
        state.rho.fill(Complex64::ZERO);
        for i in [1, 2] {
            for j in [1, 2] {
                state.rho[(i, j)] = Complex64::new(0.5, 0.0);
            }
        }
        let obs = observables(&state, &g, 6);
        assert_abs_diff_eq!(obs.total_coherence, 1.0, epsilon = 1e-15);

        // half on site 1, half trapped
        state.rho.fill(Complex64::ZERO);
        state.rho[(1, 1)] = Complex64::new(0.5, 0.0);
        state.rho[(8, 8)] = Complex64::new(0.5, 0.0);
        let obs = observables(&state, &g, 6);
        assert_abs_diff_eq!(obs.p_trap, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            obs.mean_displacement,
            0.5 * g.distance(6, 1),
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_noise_ensemble_has_zero_dispersion() {
        let (h, g) = fmo();
        let corr = build_correlation_matrix(SpatialModel::None, &g).unwrap();
        let mut s = setup(&h, &g, &corr, 45.0, 300.0, 1, 500.0);
        s.noise = NoiseConfig::new(45.0, 0.0, 300.0).unwrap();
        let stats = run_ensemble(&s, 4, 3).unwrap();
        for i in 0..stats.time_fs.len() {
            assert_eq!(stats.p_trap.std_dev(i), 0.0);
            assert_eq!(stats.coherence.std_dev(i), 0.0);
        }
    }

    #[test]
    fn ensembles_are_reproducible_and_mergeable() {
        let (h, g) = fmo();
        let corr = build_correlation_matrix(SpatialModel::None, &g).unwrap();
        let s = setup(&h, &g, &corr, 45.0, 300.0, 1, 300.0);
        let a = run_ensemble(&s, 8, 42).unwrap();
        let b = run_ensemble(&s, 8, 42).unwrap();
        assert_eq!(a.p_trap, b.p_trap);
        assert_eq!(a.coherence, b.coherence);

        // half-ensembles merge into exactly the full result
        let lo = run_ensemble_streams(&s, 0..4, 42).unwrap();
        let hi = run_ensemble_streams(&s, 4..8, 42).unwrap();
        let merged = lo.merge(&hi).unwrap();
        for i in 0..a.time_fs.len() {
            assert_eq!(merged.p_trap.mean(i), a.p_trap.mean(i));
            // pooled variance agrees with the directly computed one
            assert_abs_diff_eq!(
                merged.p_trap.std_dev(i),
                a.p_trap.std_dev(i),
                epsilon = 1e-12
            );
        }
        assert_eq!(merged.n_trajectories, 8);
    }

    #[test]
    fn mean_probabilities_are_consistent() {
        let (h, g) = fmo();
        let corr = build_correlation_matrix(SpatialModel::None, &g).unwrap();
        let s = setup(&h, &g, &corr, 45.0, 77.0, 1, 2000.0);
        let stats = run_ensemble(&s, 6, 11).unwrap();
        for i in 0..stats.time_fs.len() {
            let total = stats.p_trap.mean(i) + stats.p_surv.mean(i);
            assert!((total - 1.0).abs() < 1e-12);
            assert!(stats.p_trap.mean(i) >= 0.0 && stats.p_trap.mean(i) <= 1.0);
            assert!(stats.coherence.mean(i) >= 0.0);
            assert!(stats.displacement.mean(i) >= 0.0);
            assert_abs_diff_eq!(
                stats.p_trap.std_err(i),
                stats.p_trap.std_dev(i) / (6.0f64).sqrt(),
                epsilon = 1e-15
            );
        }
        for w in stats.p_trap.means().windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "mean p_trap decreased");
        }
    }

    #[test]
    fn longer_correlation_time_transports_better_than_motional_narrowing() {
        let (h, g) = fmo();
        let corr = build_correlation_matrix(SpatialModel::None, &g).unwrap();
        let slow = run_ensemble(&setup(&h, &g, &corr, 45.0, 77.0, 1, 10_000.0), 16, 5).unwrap();
        let fast = {
            let mut s = setup(&h, &g, &corr, 5.0, 77.0, 1, 10_000.0);
            s.dt_fs = 0.5;
            run_ensemble(&s, 16, 5).unwrap()
        };
        let i = slow.final_index();
        let j = fast.final_index();
        let gap = slow.p_trap.mean(i) - fast.p_trap.mean(j);
        let se = (slow.p_trap.std_err(i).powi(2) + fast.p_trap.std_err(j).powi(2)).sqrt();
        assert!(
            gap > 2.0 * se,
            "tau_c = 45 fs should outperform 5 fs: gap {gap:.4}, se {se:.4}"
        );
    }

    #[test]
    fn polyfit_recovers_planted_polynomials() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.4).collect();
        let y: Vec<f64> = x.iter().map(|&t| 1.5 - 0.3 * t + 0.02 * t * t).collect();
        let c = polyfit(&x, &y, 2);
        assert_abs_diff_eq!(c[0], 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(c[1], -0.3, epsilon = 1e-9);
        assert_abs_diff_eq!(c[2], 0.02, epsilon = 1e-10);
    }

    fn synthetic_stats(times: Vec<f64>, p_surv: Vec<f64>) -> EnsembleStatistics {
        let rows = vec![p_surv.clone(), p_surv.clone()];
        let complement: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|p| 1.0 - p).collect())
            .collect();
        let zeros = vec![vec![0.0; times.len()]; 2];
        EnsembleStatistics {
            time_fs: times,
            n_trajectories: 2,
            master_seed: 0,
            p_trap: StatSeries::from_trajectories(&complement),
            p_surv: StatSeries::from_trajectories(&rows),
            coherence: StatSeries::from_trajectories(&zeros),
            displacement: StatSeries::from_trajectories(&zeros),
            populations: vec![],
            max_trace_dev: 0.0,
            max_hermiticity_dev: 0.0,
            positivity_ok: true,
        }
    }

    #[test]
    fn survival_fit_recovers_pure_exponential() {
        let times: Vec<f64> = (0..=200).map(|i| i as f64 * 0.1).collect();
        let p: Vec<f64> = times.iter().map(|&t| (-0.3 * t).exp()).collect();
        let stats = synthetic_stats(times, p);
        let fit = fit_survival(&stats, (0.0, 2.0), (10.0, 20.0)).unwrap();
        assert_abs_diff_eq!(fit.long_beta_per_fs, 0.3, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.short_coeffs[1], -0.3, epsilon = 1e-6);
        assert!(fit.short_coeffs[2].abs() < 1e-6);
        assert!(fit.short_coeffs[3].abs() < 1e-6);
        assert!(fit.long_residual_rms < 1e-12);
    }

    #[test]
    fn survival_fit_recovers_quadratic_exponent() {
        let times: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
        let p: Vec<f64> = times
            .iter()
            .map(|&t| (-0.1 * t - 0.01 * t * t).exp())
            .collect();
        let stats = synthetic_stats(times, p);
        let fit = fit_survival(&stats, (0.0, 10.0), (10.0, 20.0)).unwrap();
        assert_abs_diff_eq!(fit.short_coeffs[1], -0.1, epsilon = 1e-4);
        assert_abs_diff_eq!(fit.short_coeffs[2], -0.01, epsilon = 1e-4);
    }

    #[test]
    fn survival_fit_rejects_degenerate_windows() {
        let times: Vec<f64> = (0..=200).map(|i| i as f64 * 0.1).collect();
        let p: Vec<f64> = times.iter().map(|&t| (-0.3 * t).exp()).collect();
        let stats = synthetic_stats(times, p);
        assert!(matches!(
            fit_survival(&stats, (0.0, 0.2), (10.0, 20.0)),
            Err(EnsembleError::DegenerateWindow { .. })
        ));
    }

    #[test]
    fn too_few_trajectories_is_an_error() {
        let (h, g) = fmo();
        let corr = build_correlation_matrix(SpatialModel::None, &g).unwrap();
        let s = setup(&h, &g, &corr, 45.0, 300.0, 1, 100.0);
        assert!(matches!(
            run_ensemble(&s, 1, 0),
            Err(EnsembleError::TooFewTrajectories(1))
        ));
    }
}
