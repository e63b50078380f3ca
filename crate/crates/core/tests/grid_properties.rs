use std::f64::consts::PI;

use degenwave::grid::{Grid, GridSpec, ScalarField, Scheme};
use proptest::prelude::*;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn schemes() -> [Scheme; 4] {
    [
        Scheme::FourierCollocation,
        Scheme::CentralFd { order: 4 },
        Scheme::CentralFd { order: 6 },
        Scheme::CentralFd { order: 8 },
    ]
}

fn smooth(spec: GridSpec, c: [f64; 3]) -> ScalarField {
    let w = 2.0 * PI / spec.box_length;
    ScalarField::from_fn(spec, |x| {
        c[0] * (w * x[0]).sin() + c[1] * (2.0 * w * (x[0] + x[1])).cos() + c[2] * (w * x[1]).sin().exp()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn derivatives_are_linear(
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        cf in proptest::array::uniform3(-1.0..1.0f64),
        cg in proptest::array::uniform3(-1.0..1.0f64),
        s in 0usize..4,
        order in 1usize..4,
    ) {
        let spec = GridSpec::new(2, 32, 2.0 * PI, schemes()[s]).unwrap();
        let grid = Grid::new(spec).unwrap();
        let f = smooth(spec, cf);
        let g = smooth(spec, cg);
        let combo = ScalarField::new(
            spec,
            f.values().iter().zip(g.values()).map(|(x, y)| a * x + b * y).collect(),
        ).unwrap();
        for axis in 0..2 {
            let lhs = grid.derivative(&combo, axis, order).unwrap();
            let df = grid.derivative(&f, axis, order).unwrap();
            let dg = grid.derivative(&g, axis, order).unwrap();
            let rhs: Vec<f64> = df.values().iter().zip(dg.values()).map(|(x, y)| a * x + b * y).collect();
            let scale = 1.0 + df.linf().max(dg.linf()) * (a.abs() + b.abs());
            prop_assert!(max_diff(lhs.values(), &rhs) <= 1e-11 * scale);
        }
    }

    #[test]
    fn periodic_derivatives_integrate_to_zero(
        c in proptest::array::uniform3(-1.0..1.0f64),
        s in 0usize..4,
        axis in 0usize..2,
    ) {
        let spec = GridSpec::new(2, 24, 5.0, schemes()[s]).unwrap();
        let grid = Grid::new(spec).unwrap();
        let f = smooth(spec, c);
        let d = grid.derivative(&f, axis, 1).unwrap();
        prop_assert!(grid.integrate(&d).abs() <= 1e-11 * (1.0 + d.linf()));
    }
}

#[test]
fn fd_converges_at_stencil_order() {
    let l = 2.0 * PI;
    let f = |x: f64| x.sin().exp();
    let df = |x: f64| x.cos() * x.sin().exp();
    for order in [4usize, 6, 8] {
        let errors: Vec<f64> = [32usize, 64, 128]
            .iter()
            .map(|&n| {
                let spec = GridSpec::new(1, n, l, Scheme::CentralFd { order }).unwrap();
                let grid = Grid::new(spec).unwrap();
                let field = ScalarField::from_fn(spec, |x| f(x[0]));
                let exact: Vec<f64> = (0..n).map(|i| df(spec.coords(i)[0])).collect();
                max_diff(grid.derivative(&field, 0, 1).unwrap().values(), &exact)
            })
            .collect();
        for pair in errors.windows(2) {
            let observed = (pair[0] / pair[1]).log2();
            assert!(observed >= order as f64 - 0.3, "order {order}: errors {errors:?}");
        }
    }
}

#[test]
fn fourier_is_exact_on_trigonometric_polynomials() {
    let spec = GridSpec::fourier(2, 32, 4.0).unwrap();
    let grid = Grid::new(spec).unwrap();
    let w = 2.0 * PI / 4.0;
    let f = ScalarField::from_fn(spec, |x| (3.0 * w * x[0]).sin() * (2.0 * w * x[1]).cos());
    let lap = grid.laplacian(&f).unwrap();
    let expected: Vec<f64> = f.values().iter().map(|v| -13.0 * w * w * v).collect();
    assert!(max_diff(lap.values(), &expected) < 1e-10);
    let d3 = grid.derivative(&f, 0, 3).unwrap();
    let exact =
        ScalarField::from_fn(spec, |x| -27.0 * w.powi(3) * (3.0 * w * x[0]).cos() * (2.0 * w * x[1]).cos());
    assert!(max_diff(d3.values(), exact.values()) < 1e-8);
}

#[test]
fn first_gradient_array_matches_axis_derivatives() {
    for scheme in schemes() {
        let spec = GridSpec::new(3, 16, 3.0, scheme).unwrap();
        let grid = Grid::new(spec).unwrap();
        let f = ScalarField::from_fn(spec, |x| (x[0] + 2.0 * x[2]).sin() * x[1].cos());
        let g = grid.grad_array(&f, 1).unwrap();
        for axis in 0..3 {
            let d = grid.derivative(&f, axis, 1).unwrap();
            assert_eq!(g.component(&[axis]), d.values());
        }
    }
}

#[test]
fn second_gradient_array_is_symmetric() {
    let spec = GridSpec::fourier(3, 16, 2.0 * PI).unwrap();
    let grid = Grid::new(spec).unwrap();
    let f = ScalarField::from_fn(spec, |x| (x[0] - x[1]).sin() + (x[2] + x[0]).cos());
    let g = grid.grad_array(&f, 2).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(g.component(&[i, j]), g.component(&[j, i]));
        }
    }
}

#[test]
fn sobolev_norm_of_a_mode() {
    let l = 6.0;
    let a = 0.3;
    let w = 2.0 * PI / l;
    let spec = GridSpec::fourier(1, 64, l).unwrap();
    let grid = Grid::new(spec).unwrap();
    let f = ScalarField::from_fn(spec, |x| a * (w * x[0]).sin());
    for big_n in 0..=4 {
        let norms = grid.norms(&f, big_n).unwrap();
        let exact: f64 = (0..=big_n).map(|k| a * a * l / 2.0 * w.powi(2 * k as i32)).sum();
        assert!((norms.sobolev - exact.sqrt()).abs() < 1e-12 * exact.sqrt());
        assert!((norms.linf - a).abs() < 1e-3);
    }
}
