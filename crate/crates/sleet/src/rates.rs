//! Analytic exciton-basis transition rates for exponentially correlated
//! noise, their Lorentzian long-time limit, and the correlation times that
//! maximize them.
//!
//! The second-order population transfer rate between excitons alpha and
//! beta under fluctuations of magnitude Delta0 and correlation time tau_c
//! is
//!
//! ```text
//! Gamma(t) = 2 Delta0^2 [ tau_c / (1 + tau_c^2 w^2)
//!          + tau_c^2 e^{-t/tau_c} / (1 + tau_c^2 w^2)
//!            (w sin(w t) - cos(w t)/tau_c) ]
//! ```
//!
//! with w the exciton frequency difference. The damped transient vanishes
//! for t >> tau_c, leaving the Lorentzian power spectrum
//! `J(w) = 2 Delta0^2 tau_c / (1 + tau_c^2 w^2)`, which for fixed w is
//! maximized at tau_c = 1/w. Rates are reported in cm^-2 fs, matching the
//! internal unit system.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::constants::HBAR_CM_FS;
use crate::model::ExcitonBasis;

/// Energy-difference band (cm^-1) summarized by default in
/// [`optimal_tau_c`]: the range covering most exciton gaps of the bundled
/// network.
pub const DEFAULT_ENERGY_BAND_CM: (f64, f64) = (90.0, 350.0);

#[derive(Debug, Error)]
pub enum RatesError {
    #[error("all exciton energies are degenerate; no transition frequencies exist")]
    DegenerateSpectrum,
    #[error("energy band ({lo}, {hi}) cm^-1 is invalid")]
    BadBand { lo: f64, hi: f64 },
}

/// Lorentzian power spectrum of exponentially correlated noise at angular
/// frequency `omega` (rad/fs), in cm^-2 fs.
pub fn lorentzian_spectrum(omega_rad_per_fs: f64, sigma_cm: f64, tau_c_fs: f64) -> f64 {
    assert!(tau_c_fs > 0.0, "tau_c must be positive");
    let x = tau_c_fs * omega_rad_per_fs;
    2.0 * sigma_cm * sigma_cm * tau_c_fs / (1.0 + x * x)
}

/// Frequency difference omega_alpha - omega_beta in rad/fs.
pub fn exciton_frequency_gap(basis: &ExcitonBasis, alpha: usize, beta: usize) -> f64 {
    (basis.energies()[alpha] - basis.energies()[beta]) / HBAR_CM_FS
}

/// Time-dependent population transfer rate from exciton `alpha` to `beta`,
/// cm^-2 fs. Vanishes exactly at t = 0 and relaxes to the Lorentzian
/// spectrum for t >> tau_c.
pub fn gamma(
    alpha: usize,
    beta: usize,
    t_fs: f64,
    sigma_cm: f64,
    tau_c_fs: f64,
    basis: &ExcitonBasis,
) -> f64 {
    assert!(t_fs >= 0.0, "gamma is defined for t >= 0");
    assert!(tau_c_fs > 0.0, "tau_c must be positive");
    let omega = exciton_frequency_gap(basis, alpha, beta);
    let x = tau_c_fs * omega;
    let denom = 1.0 + x * x;
    let constant = tau_c_fs / denom;
    let bracket = omega * (omega * t_fs).sin() - (omega * t_fs).cos() / tau_c_fs;
    let transient = tau_c_fs * tau_c_fs * (-t_fs / tau_c_fs).exp() * bracket / denom;
    2.0 * sigma_cm * sigma_cm * (constant + transient)
}

/// Envelope bound on the transient: |Gamma(t) - J(w)| never exceeds
/// `2 Delta0^2 tau_c e^{-t/tau_c} / sqrt(1 + tau_c^2 w^2)`.
pub fn gamma_transient_envelope(
    alpha: usize,
    beta: usize,
    t_fs: f64,
    sigma_cm: f64,
    tau_c_fs: f64,
    basis: &ExcitonBasis,
) -> f64 {
    let omega = exciton_frequency_gap(basis, alpha, beta);
    let x = tau_c_fs * omega;
    2.0 * sigma_cm * sigma_cm * tau_c_fs * (-t_fs / tau_c_fs).exp() / (1.0 + x * x).sqrt()
}

/// Exciton frequency differences and their asymptotic transfer rates.
#[derive(Debug, Clone)]
pub struct RateTable {
    /// omega_ab = omega_a - omega_b, rad/fs; antisymmetric.
    pub omega: DMatrix<f64>,
    /// Long-time rates J(omega_ab), cm^-2 fs; symmetric, with
    /// J(0) = 2 Delta0^2 tau_c on the diagonal.
    pub gamma_inf: DMatrix<f64>,
    pub sigma_cm: f64,
    pub tau_c_fs: f64,
}

impl RateTable {
    pub fn new(basis: &ExcitonBasis, sigma_cm: f64, tau_c_fs: f64) -> Self {
        let n = basis.n_excitons();
        let omega = DMatrix::from_fn(n, n, |a, b| exciton_frequency_gap(basis, a, b));
        let gamma_inf =
            DMatrix::from_fn(n, n, |a, b| lorentzian_spectrum(omega[(a, b)], sigma_cm, tau_c_fs));
        Self {
            omega,
            gamma_inf,
            sigma_cm,
            tau_c_fs,
        }
    }

    /// Full time-dependent rate matrix at `t_fs`.
    pub fn gamma_at(&self, basis: &ExcitonBasis, t_fs: f64) -> DMatrix<f64> {
        let n = basis.n_excitons();
        DMatrix::from_fn(n, n, |a, b| {
            gamma(a, b, t_fs, self.sigma_cm, self.tau_c_fs, basis)
        })
    }
}

/// Correlation times that maximize the noise power at the exciton gaps.
#[derive(Debug, Clone)]
pub struct OptimalTauC {
    /// tau_c = 1/|omega_ab| per exciton pair, fs; zero on (near-)degenerate
    /// pairs where no finite optimum exists.
    pub per_pair_fs: DMatrix<f64>,
    /// (min, max) of the per-pair optima whose gap falls inside the band,
    /// when any do.
    pub pair_range_fs: Option<(f64, f64)>,
    /// Optima at the band edges: gaps anywhere in [band.0, band.1] cm^-1
    /// are maximized by correlation times inside this interval.
    pub band_range_fs: (f64, f64),
    pub band_cm: (f64, f64),
}

/// Per-pair optima tau_c = hbar/|E_a - E_b| and their summary over an
/// energy band (defaults to [`DEFAULT_ENERGY_BAND_CM`]).
pub fn optimal_tau_c(
    basis: &ExcitonBasis,
    band_cm: Option<(f64, f64)>,
) -> Result<OptimalTauC, RatesError> {
    let band = band_cm.unwrap_or(DEFAULT_ENERGY_BAND_CM);
    if !(band.0 > 0.0 && band.1 > band.0) {
        return Err(RatesError::BadBand { lo: band.0, hi: band.1 });
    }
    let n = basis.n_excitons();
    let gap_tol = 1e-9;
    let mut any_gap = false;
    let per_pair_fs = DMatrix::from_fn(n, n, |a, b| {
        let gap = (basis.energies()[a] - basis.energies()[b]).abs();
        if gap > gap_tol {
            any_gap = true;
            HBAR_CM_FS / gap
        } else {
            0.0
        }
    });
    if !any_gap {
        return Err(RatesError::DegenerateSpectrum);
    }
    let mut in_band: Vec<f64> = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            let gap = (basis.energies()[a] - basis.energies()[b]).abs();
            if gap >= band.0 && gap <= band.1 {
                in_band.push(HBAR_CM_FS / gap);
            }
        }
    }
    let pair_range_fs = if in_band.is_empty() {
        None
    } else {
        let lo = in_band.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = in_band.iter().cloned().fold(0.0, f64::max);
        Some((lo, hi))
    };
    Ok(OptimalTauC {
        per_pair_fs,
        pair_range_fs,
        band_range_fs: (HBAR_CM_FS / band.1, HBAR_CM_FS / band.0),
        band_cm: band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{diagonalize, SiteHamiltonian};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::DMatrix;

    fn fmo_basis() -> ExcitonBasis {
        let h = SiteHamiltonian::load(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../data/fmo_hamiltonian.txt"
        ))
        .unwrap();
        diagonalize(&h)
    }

    #[test]
    fn spectrum_limits() {
        let (sigma, tau_c) = (61.2, 45.0);
        let peak = lorentzian_spectrum(0.0, sigma, tau_c);
        assert_abs_diff_eq!(peak, 2.0 * sigma * sigma * tau_c, epsilon = 1e-9);
        let half = lorentzian_spectrum(1.0 / tau_c, sigma, tau_c);
        assert_relative_eq!(half, 0.5 * peak, epsilon = 1e-12);
    }

    #[test]
    fn spectrum_is_maximized_at_inverse_frequency() {
        let sigma = 100.0;
        for omega in [0.01, 0.03, 0.12] {
            let at = |tc: f64| lorentzian_spectrum(omega, sigma, tc);
            assert!(at(1.0 / omega) > at(0.5 / omega));
            assert!(at(1.0 / omega) > at(2.0 / omega));
            // golden-section search as an independent maximizer
            let (mut lo, mut hi) = (1e-3 / omega, 1e3 / omega);
            let phi = 0.5 * (5.0f64.sqrt() - 1.0);
            for _ in 0..200 {
                let a = hi - phi * (hi - lo);
                let b = lo + phi * (hi - lo);
                if at(a) < at(b) {
                    lo = a;
                } else {
                    hi = b;
                }
            }
            let argmax = 0.5 * (lo + hi);
            assert_relative_eq!(argmax, 1.0 / omega, epsilon = 1e-6);
        }
    }

    #[test]
    fn rate_vanishes_at_time_zero() {
        let basis = fmo_basis();
        let (sigma, tau_c) = (120.8, 45.0);
        let scale = 2.0 * sigma * sigma * tau_c;
        for a in 0..7 {
            for b in 0..7 {
                let g0 = gamma(a, b, 0.0, sigma, tau_c, &basis);
                assert!(
                    g0.abs() < 1e-12 * scale,
                    "Gamma({a},{b})(0) = {g0:e}"
                );
            }
        }
    }

    #[test]
    fn rate_relaxes_to_lorentzian() {
        let basis = fmo_basis();
        let (sigma, tau_c) = (61.2, 15.0);
        for a in 0..7 {
            for b in 0..7 {
                if a == b {
                    continue;
                }
                let omega = exciton_frequency_gap(&basis, a, b);
                let j = lorentzian_spectrum(omega, sigma, tau_c);
                let g = gamma(a, b, 10.0 * tau_c, sigma, tau_c, &basis);
                assert!(
                    ((g - j) / j).abs() < 1e-4,
                    "pair ({a},{b}): relative gap {:.2e}",
                    ((g - j) / j).abs()
                );
            }
        }
    }

    #[test]
    fn zero_gap_rate_saturates_exponentially() {
        // two degenerate excitons: Gamma = 2 sigma^2 tau_c (1 - e^{-t/tau_c})
        let h = SiteHamiltonian::from_matrix(DMatrix::from_row_slice(
            2,
            2,
            &[100.0, 0.0, 0.0, 100.0],
        ))
        .unwrap();
        let basis = diagonalize(&h);
        let (sigma, tau_c) = (50.0, 30.0);
        for t in [0.0f64, 10.0, 30.0, 150.0] {
            let expected = 2.0 * sigma * sigma * tau_c * (1.0 - (-t / tau_c).exp());
            assert_relative_eq!(
                gamma(0, 1, t, sigma, tau_c, &basis),
                expected,
                epsilon = 1e-12,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn transient_respects_envelope_and_symmetry() {
        let basis = fmo_basis();
        let (sigma, tau_c) = (120.8, 45.0);
        for a in 0..7 {
            for b in (a + 1)..7 {
                let omega = exciton_frequency_gap(&basis, a, b);
                let j = lorentzian_spectrum(omega, sigma, tau_c);
                let mut t = 0.0;
                while t < 10.0 * tau_c {
                    let g_ab = gamma(a, b, t, sigma, tau_c, &basis);
                    let g_ba = gamma(b, a, t, sigma, tau_c, &basis);
                    assert_abs_diff_eq!(g_ab, g_ba, epsilon = 1e-9);
                    let envelope = gamma_transient_envelope(a, b, t, sigma, tau_c, &basis);
                    assert!(
                        (g_ab - j).abs() <= envelope * (1.0 + 1e-12) + 1e-12,
                        "pair ({a},{b}) at t={t}: |G-J|={:.3e} > {:.3e}",
                        (g_ab - j).abs(),
                        envelope
                    );
                    t += 1.7;
                }
            }
        }
    }

    #[test]
    fn rate_table_structure() {
        let basis = fmo_basis();
        let table = RateTable::new(&basis, 61.2, 45.0);
        let n = 7;
        for a in 0..n {
            assert_abs_diff_eq!(
                table.gamma_inf[(a, a)],
                2.0 * 61.2 * 61.2 * 45.0,
                epsilon = 1e-9
            );
            for b in 0..n {
                assert_abs_diff_eq!(table.omega[(a, b)], -table.omega[(b, a)], epsilon = 1e-15);
                assert_abs_diff_eq!(
                    table.gamma_inf[(a, b)],
                    table.gamma_inf[(b, a)],
                    epsilon = 1e-12
                );
            }
        }
        // gamma_at(0) vanishes, gamma_at(10 tau_c) approaches gamma_inf
        let g0 = table.gamma_at(&basis, 0.0);
        assert!(g0.abs().max() < 1e-6);
        let ginf = table.gamma_at(&basis, 450.0 * 10.0);
        let dev = (&ginf - &table.gamma_inf).abs().max();
        assert!(dev < 1e-3 * table.gamma_inf.abs().max());
    }

    #[test]
    fn optimal_tau_for_named_gaps() {
        let basis = fmo_basis();
        let out = optimal_tau_c(&basis, None).unwrap();
        // a 177 cm^-1 gap is driven best near 30 fs
        assert_abs_diff_eq!(HBAR_CM_FS / 177.0, 29.99322033898305, epsilon = 1e-9);
        // band edges
        assert_abs_diff_eq!(out.band_range_fs.0, 15.168, epsilon = 1e-3);
        assert_abs_diff_eq!(out.band_range_fs.1, 58.986666666666665, epsilon = 1e-9);
        // lowest pair of the bundled network sits near 102.8 cm^-1
        let t10 = out.per_pair_fs[(1, 0)];
        assert!((t10 - 51.6).abs() < 0.3, "tau*(1,0) = {t10}");
        let (lo, hi) = out.pair_range_fs.unwrap();
        assert!(lo > 15.0 && hi < 60.0, "pair range ({lo}, {hi})");
    }

    #[test]
    fn degenerate_spectrum_is_rejected() {
        let h = SiteHamiltonian::from_matrix(DMatrix::from_row_slice(
             2,
            2,
            &[5.0, 0.0, 0.0, 5.0],
        ))
        .unwrap();
        let basis = diagonalize(&h);
        assert!(matches!(
            optimal_tau_c(&basis, None),
            Err(RatesError::DegenerateSpectrum)
        ));
        assert!(matches!(
            optimal_tau_c(&basis, Some((10.0, 5.0))),
            Err(RatesError::BadBand { .. })
        ));
    }
}
