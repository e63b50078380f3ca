use degenwave::evolution::{degeneracy_locus, run, RunOptions, State, StopReason};
use degenwave::grid::{Grid, GridSpec};
use degenwave::initial_data::{data_size_params, make_bump, DataPair};

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn evolve_fixed(grid: &Grid, data: &DataPair, p: u32, t: f64, dt: f64) -> State {
    let opts = RunOptions {
        t_max: t,
        fixed_dt: Some(dt),
        ..Default::default()
    };
    run(grid, data, p, &opts, &mut ()).unwrap().final_state
}

fn reversed(s: &State, data: &DataPair) -> DataPair {
    DataPair {
        psi0: s.psi.clone(),
        pi0: s.pi.map(|v| -v),
        support_radius: data.support_radius,
        family: data.family.clone(),
    }
}

#[test]
fn time_reversal_recovers_initial_data() {
    let spec = GridSpec::fourier(1, 128, 32.0).unwrap();
    let grid = Grid::new(spec).unwrap();
    let data = make_bump(&[16.0], 6.0, 0.05, -0.5, spec).unwrap();
    let tau = 1.0;
    let errors: Vec<f64> = [0.02, 0.01, 0.005]
        .iter()
        .map(|&dt| {
            let forward = evolve_fixed(&grid, &data, 1, tau, dt);
            let back = evolve_fixed(&grid, &reversed(&forward, &data), 1, tau, dt);
            max_diff(back.psi.values(), data.psi0.values())
        })
        .collect();
    assert!(errors[2] < 1e-8, "{errors:?}");
    for pair in errors.windows(2) {
        assert!((pair[0] / pair[1]).log2() > 3.5, "{errors:?}");
    }
}

#[test]
fn temporal_self_convergence_is_fourth_order() {
    let spec = GridSpec::fourier(1, 128, 32.0).unwrap();
    let grid = Grid::new(spec).unwrap();
    let data = make_bump(&[16.0], 6.0, 0.05, -0.5, spec).unwrap();
    for p in [1u32, 2] {
        let sols: Vec<State> = [0.04, 0.02, 0.01, 0.005]
            .iter()
            .map(|&dt| evolve_fixed(&grid, &data, p, 1.2, dt))
            .collect();
        let diffs: Vec<f64> = sols.windows(2).map(|w| max_diff(w[0].psi.values(), w[1].psi.values())).collect();
        for pair in diffs.windows(2) {
            assert!((pair[0] / pair[1]).log2() > 3.7, "P = {p}: {diffs:?}");
        }
    }
}

#[test]
fn degeneracy_run_invariants() {
    let spec = GridSpec::fourier(1, 256, 48.0).unwrap();
    let grid = Grid::new(spec).unwrap();
    let data = make_bump(&[24.0], 8.0, 0.05, -0.5, spec).unwrap();
    let params = data_size_params(&grid, &data);
    for p in [1u32, 2] {
        let out = run(&grid, &data, p, &RunOptions::default(), &mut ()).unwrap();
        assert_eq!(out.stop_reason, StopReason::DegeneracyReached);
        assert_eq!(out.min_series[0], 1.0 + data.psi0.min());
        for pair in out.m_series.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        let s = &out.final_state;
        let m = s.min_one_plus_psi();
        assert!(m <= 1e-2 && m > 0.0);
        let locus = degeneracy_locus(s, 1e-3);
        assert!(!locus.is_empty());
        for &i in &locus {
            let x = spec.coords(i)[0];
            assert!((x - 24.0).abs() <= data.support_radius);
            assert!(s.pi.values()[i] <= -params.delta_star / 8.0);
        }
        let t_star = out.t_star_estimate.unwrap();
        assert!((t_star * params.delta_star - 1.0).abs() < 0.1);
    }
}
