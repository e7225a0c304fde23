use nalgebra::DVector;
use sleet::dynamics::{propagate, RateParams};
use sleet::ensemble::{fit_survival, run_ensemble, EnsembleSetup};
use sleet::model::{Geometry, SiteHamiltonian};
use sleet::noise::{build_correlation_matrix, NoiseConfig, NoiseGenerator, SpatialModel, ZeroNoise};

fn main() {
    let h = SiteHamiltonian::load("data/fmo_hamiltonian.txt").unwrap();
    let g = Geometry::load("data/fmo_geometry.txt").unwrap();
    let rates = RateParams::new(0.001, 1.0).unwrap();
    let seed = 20_260_801u64;

    // --- criterion 3 probe: final p_trap per model, site 1, 77K, tc 45
    println!("== criterion 3: site 1, 77 K, tau_c 45 ==");
    for model in [
        SpatialModel::None,
        SpatialModel::Exponential { rc_angstrom: 5.0 },
        SpatialModel::Exponential { rc_angstrom: 10.0 },
        SpatialModel::Exponential { rc_angstrom: 20.0 },
        SpatialModel::Dimerized,
    ] {
        let corr = build_correlation_matrix(model, &g).unwrap();
        let setup = EnsembleSetup {
            hamiltonian: &h, geometry: &g, correlation: &corr,
            noise: NoiseConfig::new(45.0, 35.0, 77.0).unwrap(),
            rates, initial_site: 1, t_final_fs: 20000.0, dt_fs: 1.0, record_stride_fs: 10.0,
        };
        let s = run_ensemble(&setup, 100, seed).unwrap();
        let i = s.final_index();
        println!("  {:<18} p_trap = {:.4} +- {:.4}", model.to_string(), s.p_trap.mean(i), s.p_trap.std_err(i));
    }

    // --- criterion 5 probe: coherence time series site 6 77K tc45
    println!("== criterion 5: site 6, 77 K, tau_c 45, coherence means ==");
    let idx_of = |s: &sleet::ensemble::EnsembleStatistics, t: f64| s.index_at(t);
    for model in [Some(SpatialModel::None), Some(SpatialModel::Exponential { rc_angstrom: 20.0 }), None] {
        let label;
        let stats = match model {
            Some(m) => {
                label = m.to_string();
                let corr = build_correlation_matrix(m, &g).unwrap();
                let setup = EnsembleSetup {
                    hamiltonian: &h, geometry: &g, correlation: &corr,
                    noise: NoiseConfig::new(45.0, 35.0, 77.0).unwrap(),
                    rates, initial_site: 6, t_final_fs: 2000.0, dt_fs: 1.0, record_stride_fs: 10.0,
                };
                run_ensemble(&setup, 100, seed).unwrap()
            }
            None => {
                label = "noiseless".into();
                // zero reorganization energy = no fluctuations
                let corr = build_correlation_matrix(SpatialModel::None, &g).unwrap();
                let setup = EnsembleSetup {
                    hamiltonian: &h, geometry: &g, correlation: &corr,
                    noise: NoiseConfig::new(45.0, 0.0, 77.0).unwrap(),
                    rates, initial_site: 6, t_final_fs: 2000.0, dt_fs: 1.0, record_stride_fs: 10.0,
                };
                run_ensemble(&setup, 2, seed).unwrap()
            }
        };
        print!("  {:<18}", label);
        for t in [100.0, 200.0, 500.0, 1000.0, 2000.0] {
            print!(" C({:>4}fs)={:.3}", t, stats.coherence.mean(idx_of(&stats, t)));
        }
        // integral
        let mut integral = 0.0;
        for k in 1..stats.time_fs.len() {
            let dt = stats.time_fs[k] - stats.time_fs[k - 1];
            integral += 0.5 * dt * (stats.coherence.mean(k) + stats.coherence.mean(k - 1));
        }
        println!("  int={:.1} fs  disp(2ps)={:.2} A", integral, stats.displacement.mean(stats.final_index()));
    }

    // --- criterion 10 probe: residuals across windows
    println!("== criterion 10: site 6, tau_c 45, none ==");
    for temp in [77.0, 300.0] {
        let corr = build_correlation_matrix(SpatialModel::None, &g).unwrap();
        let setup = EnsembleSetup {
            hamiltonian: &h, geometry: &g, correlation: &corr,
            noise: NoiseConfig::new(45.0, 35.0, temp).unwrap(),
            rates, initial_site: 6, t_final_fs: 20000.0, dt_fs: 1.0, record_stride_fs: 10.0,
        };
        let s = run_ensemble(&setup, 100, seed).unwrap();
        for window in [(10_000.0, 20_000.0), (2_000.0, 20_000.0), (1_000.0, 20_000.0)] {
            let fit = fit_survival(&s, (0.0, 2000.0), window).unwrap();
            println!(
                "  T={:>3}K window [{:>5},{:>5}]: beta={:.3e}/fs residual={:.4e}",
                temp, window.0, window.1, fit.long_beta_per_fs, fit.long_residual_rms
            );
        }
    }
    let _ = (propagate, ZeroNoise::new(7), NoiseGenerator::new as fn(&_, &_, u64, u64) -> _, DVector::<f64>::zeros(1));
}
