use degenwave::grid::{Grid, GridSpec, ScalarField};
use degenwave::initial_data::{data_size_params, make_bump, rescale, DataFamily};

fn grad_l2(grid: &Grid, f: &ScalarField, k: usize) -> f64 {
    let g = grid.grad_array(f, k).unwrap();
    let sq: f64 = g.components().map(|c| c.iter().map(|v| v * v).sum::<f64>()).sum();
    (sq * grid.spec().cell_volume()).sqrt()
}

#[test]
fn velocity_norms_follow_the_dilation_law_in_3d() {
    let spec = GridSpec::fourier(3, 64, 14.0).unwrap();
    let grid = Grid::new(spec).unwrap();
    let data = make_bump(&[7.0, 7.0, 7.0], 3.5, 0.0, -0.5, spec).unwrap();
    let scaled = rescale(&data, 2.0).unwrap();
    for k in 1..=2 {
        let base = grad_l2(&grid, &data.pi0, k);
        let got = grad_l2(&grid, &scaled.pi0, k);
        let expected = 2f64.powf(1.5 - k as f64) * base;
        assert!((got / expected - 1.0).abs() < 0.01, "k = {k}: {got} vs {expected}");
    }
}

#[test]
fn sweep_parameters_over_lambda() {
    let spec = GridSpec::fourier(1, 1024, 144.0).unwrap();
    let grid = Grid::new(spec).unwrap();
    let family = DataFamily::Bump {
        center: None,
        radius: 8.0,
        amp_psi: 0.05,
        amp_pi: -0.5,
        lambda: 1.0,
    };
    let params: Vec<_> = [1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|&l| data_size_params(&grid, &family.with_lambda(l).build(spec).unwrap()))
        .collect();
    for pair in params.windows(2) {
        assert!(pair[1].eps_ring < pair[0].eps_ring);
        assert!((pair[1].delta_star - 0.5).abs() < 1e-12);
        assert!((pair[1].delta_ring - 0.5).abs() < 1e-12);
    }
}

#[test]
fn amplitude_and_support_bookkeeping() {
    let spec = GridSpec::fourier(2, 64, 20.0).unwrap();
    let data = make_bump(&[10.0, 10.0], 2.0, 0.2, -0.4, spec).unwrap();
    let scaled = rescale(&data, 4.0).unwrap();
    assert_eq!(scaled.support_radius, 4.0 * data.support_radius);
    assert!((scaled.psi0.max() - data.psi0.max() / 4.0).abs() < 1e-15);
    assert!((scaled.pi0.min() - data.pi0.min()).abs() < 1e-15);
    let twice = rescale(&rescale(&data, 2.0).unwrap(), 2.0).unwrap();
    assert_eq!(twice.psi0.values(), scaled.psi0.values());
    assert_eq!(twice.pi0.values(), scaled.pi0.values());
}

#[test]
fn parameters_are_translation_invariant_in_2d() {
    let spec = GridSpec::fourier(2, 64, 16.0).unwrap();
    let grid = Grid::new(spec).unwrap();
    let h = spec.spacing();
    let a = make_bump(&[8.0, 8.0], 3.0, 0.05, -0.5, spec).unwrap();
    let b = make_bump(&[8.0 + 5.0 * h, 8.0 - 11.0 * h], 3.0, 0.05, -0.5, spec).unwrap();
    let pa = data_size_params(&grid, &a);
    let pb = data_size_params(&grid, &b);
    assert!((pa.eps_ring - pb.eps_ring).abs() < 1e-10 * pa.eps_ring);
    assert_eq!(pa.delta_star, pb.delta_star);
    assert_eq!(pa.delta_ring, pb.delta_ring);
}
