//! Time integration of `∂ₜΨ = Π`, `∂ₜΠ = (1+Ψ)^P ΔΨ` with classical RK4,
//! tracking `min(1+Ψ)` until the coefficient nearly vanishes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::initial_data::DataPair;

#[derive(Clone, Debug)]
pub struct State {
    pub t: f64,
    pub psi: ScalarField,
    /// `∂ₜΨ`
    pub pi: ScalarField,
    /// Exponent `P ∈ {1, 2}`.
    pub p: u32,
}

impl State {
    pub fn new(t: f64, psi: ScalarField, pi: ScalarField, p: u32) -> Result<Self> {
        if p != 1 && p != 2 {
            return Err(Error::InvalidArgument(format!("P must be 1 or 2, got {p}")));
        }
        if psi.grid() != pi.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(State { t, psi, pi, p })
    }

    pub fn initial(data: &DataPair, p: u32) -> Result<Self> {
        Self::new(0.0, data.psi0.clone(), data.pi0.clone(), p)
    }

    pub fn min_one_plus_psi(&self) -> f64 {
        1.0 + self.psi.min()
    }

    fn check_hyperbolic(&self) -> Result<()> {
        let m = self.min_one_plus_psi();
        if m > 0.0 {
            Ok(())
        } else {
            Err(Error::Degenerate { min_one_plus_psi: m })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    DegeneracyReached,
    TMaxReached,
    InstabilityDetected,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub eta_stop: f64,
    pub eta_fit: f64,
    pub t_max: f64,
    /// Defaults to the scheme's CFL number.
    pub cfl_number: Option<f64>,
    /// Cap on the adaptive step; defaults to `2 * cfl * h`.
    pub dt_max: Option<f64>,
    /// Accepted steps between diagnostic samples.
    pub diag_cadence: usize,
    /// Uniform step instead of the CFL step (refinement studies).
    pub fixed_dt: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            eta_stop: 1e-2,
            eta_fit: 0.05,
            t_max: 10.0,
            cfl_number: None,
            dt_max: None,
            diag_cadence: 10,
            fixed_dt: None,
        }
    }
}

impl RunOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_stop > 0.0 && self.eta_stop <= 0.1) {
            return Err(Error::InvalidArgument(format!("eta_stop must lie in (0, 0.1], got {}", self.eta_stop)));
        }
        if !(self.eta_fit > self.eta_stop && self.eta_fit < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "eta_fit must lie in (eta_stop, 1), got {}",
                self.eta_fit
            )));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_max must be positive, got {}", self.t_max)));
        }
        if let Some(c) = self.cfl_number {
            if !(c > 0.0 && c <= 0.5) {
                return Err(Error::InvalidArgument(format!("cfl_number must lie in (0, 0.5], got {c}")));
            }
        }
        if self.diag_cadence == 0 {
            return Err(Error::InvalidArgument("diag_cadence must be positive".into()));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0) {
                return Err(Error::InvalidArgument(format!("fixed_dt must be positive, got {dt}")));
            }
        }
        Ok(())
    }
}

/// Callbacks invoked by [`run`].
pub trait RunObserver {
    /// After every accepted step.
    fn on_step(&mut self, _grid: &Grid, _prev: &State, _next: &State) {}
    /// At the diagnostic cadence, at forced crossings, and at the final state.
    fn on_sample(&mut self, _grid: &Grid, _state: &State) {}
}

impl RunObserver for () {}

#[derive(Clone, Debug)]
pub struct RunResult {
    /// Times of all accepted states, starting at 0.
    pub times: Vec<f64>,
    /// `min_x (1 + Ψ)` at each time.
    pub min_series: Vec<f64>,
    /// Running minimum `M(t)` of `min_series`.
    pub m_series: Vec<f64>,
    pub t_star_estimate: Option<f64>,
    /// Why the extrapolation failed, when it did.
    pub t_star_error: Option<String>,
    pub stop_reason: StopReason,
    pub final_state: State,
    pub steps: usize,
    pub sample_times: Vec<f64>,
}

/// Right-hand side of the first-order system.
pub fn rhs(grid: &Grid, s: &State) -> Result<(ScalarField, ScalarField)> {
    s.check_hyperbolic()?;
    let lap = grid.laplacian(&s.psi)?;
    let p = s.p as i32;
    let dpi: Vec<f64> = s
        .psi
        .values()
        .iter()
        .zip(lap.values())
        .map(|(psi, l)| (1.0 + psi).powi(p) * l)
        .collect();
    Ok((s.pi.clone(), ScalarField::new(*s.psi.grid(), dpi)?))
}

fn shifted(s: &State, k: &(ScalarField, ScalarField), a: f64) -> State {
    let add = |base: &ScalarField, inc: &ScalarField| {
        let mut out = base.clone();
        for (o, d) in out.values_mut().iter_mut().zip(inc.values()) {
            *o += a * d;
        }
        out
    };
    State {
        t: s.t + a,
        psi: add(&s.psi, &k.0),
        pi: add(&s.pi, &k.1),
        p: s.p,
    }
}

/// One classical RK4 step.
///
/// Fails with [`Error::NonFinite`] on overflow and with [`Error::Degenerate`]
/// when a stage or the result has `min(1+Ψ) ≤ 0`; the caller retries with a
/// smaller step in the latter case.
pub fn step(grid: &Grid, s: &State, dt: f64) -> Result<State> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let k1 = rhs(grid, s)?;
    let k2 = rhs(grid, &shifted(s, &k1, 0.5 * dt))?;
    let k3 = rhs(grid, &shifted(s, &k2, 0.5 * dt))?;
    let k4 = rhs(grid, &shifted(s, &k3, dt))?;
    let combine = |base: &ScalarField, a: &ScalarField, b: &ScalarField, c: &ScalarField, d: &ScalarField| {
        let mut out = base.clone();
        for (i, o) in out.values_mut().iter_mut().enumerate() {
            *o += dt / 6.0 * (a.values()[i] + 2.0 * b.values()[i] + 2.0 * c.values()[i] + d.values()[i]);
        }
        out
    };
    let next = State {
        t: s.t + dt,
        psi: combine(&s.psi, &k1.0, &k2.0, &k3.0, &k4.0),
        pi: combine(&s.pi, &k1.1, &k2.1, &k3.1, &k4.1),
        p: s.p,
    };
    if !(next.psi.is_finite() && next.pi.is_finite()) {
        return Err(Error::NonFinite);
    }
    next.check_hyperbolic()?;
    Ok(next)
}

/// `cfl * h / max (1+Ψ)^{P/2}`.
pub fn cfl_dt(s: &State, cfl_number: f64) -> f64 {
    let h = s.psi.grid().spacing();
    let speed = (1.0 + s.psi.max()).max(0.0).powf(s.p as f64 / 2.0);
    cfl_number * h / speed
}

const FORCED_LEVELS: [f64; 4] = [0.9, 0.5, 0.25, 0.1];

/// A step that takes `min(1+Ψ)` below this fraction of `eta_stop` counts as
/// an overshoot and is retried with half the step.
pub const LANDING_FRACTION: f64 = 0.9;

/// Evolves `data` until `min(1+Ψ) ≤ eta_stop`, `t ≥ t_max`, or the fields
/// blow up. A step that overshoots the stop level (below
/// `LANDING_FRACTION * eta_stop`, or through zero) is retried with half the
/// step, down to `1e-4 h`, so the final state lands just under `eta_stop`.
pub fn run(
    grid: &Grid,
    data: &DataPair,
    p: u32,
    opts: &RunOptions,
    observer: &mut dyn RunObserver,
) -> Result<RunResult> {
    opts.validate()?;
    let spec = *grid.spec();
    if *data.psi0.grid() != spec {
        return Err(Error::GridMismatch);
    }
    let mut state = State::initial(data, p)?;
    state.check_hyperbolic()?;
    let h = spec.spacing();
    let cfl = opts.cfl_number.unwrap_or_else(|| spec.scheme.default_cfl());
    let dt_max = opts.dt_max.unwrap_or(2.0 * cfl * h);
    let dt_floor = 1e-4 * h;
    let t_eps = 1e-12 * opts.t_max.max(1.0);

    let m0 = state.min_one_plus_psi();
    let mut times = vec![0.0];
    let mut min_series = vec![m0];
    let mut m_series = vec![m0];
    let mut sample_times = vec![0.0];
    observer.on_sample(grid, &state);

    let mut steps = 0usize;
    let mut levels: Vec<f64> = FORCED_LEVELS
        .iter()
        .copied()
        .chain(std::iter::once(opts.eta_stop))
        .filter(|&l| l < m0)
        .collect();
    let stop_reason;

    if m0 <= opts.eta_stop {
        stop_reason = StopReason::DegeneracyReached;
    } else {
        'outer: loop {
            let remaining = opts.t_max - state.t;
            if remaining <= t_eps {
                stop_reason = StopReason::TMaxReached;
                break;
            }
            let mut dt = opts
                .fixed_dt
                .unwrap_or_else(|| cfl_dt(&state, cfl).min(dt_max))
                .min(remaining);
            if remaining - dt <= t_eps {
                dt = remaining;
            }
            let next = loop {
                match step(grid, &state, dt) {
                    Ok(next) => {
                        if next.min_one_plus_psi() < LANDING_FRACTION * opts.eta_stop && 0.5 * dt >= dt_floor {
                            dt *= 0.5;
                            continue;
                        }
                        break next;
                    }
                    Err(Error::Degenerate { .. }) if 0.5 * dt >= dt_floor => dt *= 0.5,
                    Err(Error::Degenerate { .. }) => {
                        stop_reason = StopReason::DegeneracyReached;
                        break 'outer;
                    }
                    Err(Error::NonFinite) => {
                        stop_reason = StopReason::InstabilityDetected;
                        break 'outer;
                    }
                    Err(e) => return Err(e),
                }
            };
            observer.on_step(grid, &state, &next);
            steps += 1;
            let m = next.min_one_plus_psi();
            times.push(next.t);
            min_series.push(m);
            m_series.push(m.min(*m_series.last().unwrap()));
            let crossed = levels.iter().any(|&l| m <= l);
            levels.retain(|&l| m > l);
            state = next;
            if m <= opts.eta_stop {
                stop_reason = StopReason::DegeneracyReached;
                break;
            }
            if crossed || steps % opts.diag_cadence == 0 {
                observer.on_sample(grid, &state);
                sample_times.push(state.t);
            }
        }
    }
    if *sample_times.last().unwrap() != state.t {
        observer.on_sample(grid, &state);
        sample_times.push(state.t);
    }

    let (t_star_estimate, t_star_error) = if stop_reason == StopReason::DegeneracyReached {
        match estimate_t_star(&times, &min_series, opts.eta_fit) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    Ok(RunResult {
        times,
        min_series,
        m_series,
        t_star_estimate,
        t_star_error,
        stop_reason,
        final_state: state,
        steps,
        sample_times,
    })
}

/// Root of the least-squares line through the samples with
/// `min(1+Ψ) ≤ eta_fit`, clamped below by the last tail sample time (the
/// coefficient is still positive there). A convex tail such as a quadratic
/// tangency puts the raw root early, so the clamp is active in that case.
pub fn estimate_t_star(times: &[f64], min_1psi: &[f64], eta_fit: f64) -> Result<f64> {
    if times.len() != min_1psi.len() {
        return Err(Error::InvalidArgument("series lengths differ".into()));
    }
    let tail: Vec<(f64, f64)> = times
        .iter()
        .zip(min_1psi)
        .filter(|(_, &m)| m <= eta_fit)
        .map(|(&t, &m)| (t, m))
        .collect();
    if tail.len() < 3 {
        return Err(Error::InsufficientTail {
            needed: 3,
            found: tail.len(),
            eta_fit,
        });
    }
    let n = tail.len() as f64;
    let tm = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let mm = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = tail.iter().map(|(t, m)| (t - tm) * (m - mm)).sum();
    let sxx: f64 = tail.iter().map(|(t, _)| (t - tm) * (t - tm)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::NonNegativeSlope(slope));
    }
    let root = tm - mm / slope;
    let last = tail.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(root.max(last))
}

/// Flat indices with `1 + Ψ ≤ min(1+Ψ) + tol`.
pub fn degeneracy_locus(s: &State, tol: f64) -> Vec<usize> {
    let cut = s.psi.min() + tol;
    s.psi
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= cut)
        .map(|(i, _)| i)
        .collect()
}

/// Exact solution for spatially constant data: `(ψ₀ + tπ₀, π₀)`.
pub fn homogeneous_reference(psi_init: f64, pi_init: f64, t: f64) -> (f64, f64) {
    (psi_init + t * pi_init, pi_init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::initial_data::{make_bump, DataFamily};
    use std::f64::consts::PI;

    fn grid1(n: usize, l: f64) -> Grid {
        Grid::new(GridSpec::fourier(1, n, l).unwrap()).unwrap()
    }

    fn homogeneous(grid: &Grid, psi: f64, pi: f64, p: u32) -> State {
        let spec = *grid.spec();
        State::new(0.0, ScalarField::constant(spec, psi), ScalarField::constant(spec, pi), p).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let grid = grid1(32, 2.0);
        let (a, b) = rhs(&grid, &homogeneous(&grid, 0.0, 0.0, 1)).unwrap();
        assert_eq!(a.linf(), 0.0);
        assert_eq!(b.linf(), 0.0);
        let (_, b) = rhs(&grid, &homogeneous(&grid, 0.3, -1.0, 2)).unwrap();
        assert!(b.linf() < 1e-14);

        let l = 2.0;
        let w = 2.0 * PI / l;
        let amp = 1e-3;
        let spec = *grid.spec();
        let psi = ScalarField::from_fn(spec, |x| amp * (w * x[0]).sin());
        let s = State::new(0.0, psi.clone(), ScalarField::zeros(spec), 1).unwrap();
        let (_, dpi) = rhs(&grid, &s).unwrap();
        for (d, v) in dpi.values().iter().zip(psi.values()) {
            assert!((d + (1.0 + v) * w * w * v).abs() < 1e-13);
        }
        let deg = homogeneous(&grid, -1.0, 0.0, 1);
        assert!(matches!(rhs(&grid, &deg), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn step_on_trivial_states() {
        let grid = grid1(32, 2.0);
        let z = step(&grid, &homogeneous(&grid, 0.0, 0.0, 1), 0.01).unwrap();
        assert_eq!(z.psi.linf(), 0.0);
        assert_eq!(z.t, 0.01);
        for p in [1, 2] {
            let s = step(&grid, &homogeneous(&grid, 0.1, -0.55, p), 0.05).unwrap();
            let (psi, pi) = homogeneous_reference(0.1, -0.55, 0.05);
            assert!(s.psi.values().iter().all(|v| (v - psi).abs() < 1e-15));
            assert!(s.pi.values().iter().all(|v| *v == pi));
        }
        let deep = step(&grid, &homogeneous(&grid, -0.9, -1.0, 1), 0.2);
        assert!(matches!(deep, Err(Error::Degenerate { .. })));
    }

    #[test]
    fn step_doubling_shows_fourth_order() {
        let l = 2.0 * PI;
        let grid = grid1(32, l);
        let spec = *grid.spec();
        let s = State::new(
            0.0,
            ScalarField::from_fn(spec, |x| 0.05 * x[0].sin()),
            ScalarField::from_fn(spec, |x| 0.02 * x[0].cos()),
            1,
        )
        .unwrap();
        let err = |dt: f64| {
            let full = step(&grid, &s, dt).unwrap();
            let half = step(&grid, &step(&grid, &s, 0.5 * dt).unwrap(), 0.5 * dt).unwrap();
            full.psi
                .values()
                .iter()
                .zip(half.psi.values())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let (e1, e2) = (err(0.2), err(0.1));
        let order = (e1 / e2).log2();
        assert!(order >= 4.0, "observed local order {order}");
    }

    #[test]
    fn cfl_examples() {
        let grid = grid1(32, 2.0);
        let h = grid.spec().spacing();
        assert!((cfl_dt(&homogeneous(&grid, 0.0, 0.0, 1), 0.25) - 0.25 * h).abs() < 1e-15);
        assert!((cfl_dt(&homogeneous(&grid, 3.0, 0.0, 2), 0.25) - 0.25 * h / 4.0).abs() < 1e-15);
        assert!((cfl_dt(&homogeneous(&grid, -0.75, 0.0, 1), 0.25) - 0.25 * h / 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_data_runs_to_t_max() {
        let grid = grid1(32, 4.0);
        let data = make_bump(&[2.0], 1.0, 0.0, 0.0, *grid.spec()).unwrap();
        let opts = RunOptions {
            t_max: 0.5,
            ..Default::default()
        };
        let r = run(&grid, &data, 1, &opts, &mut ()).unwrap();
        assert_eq!(r.stop_reason, StopReason::TMaxReached);
        assert!(r.m_series.iter().all(|&m| m == 1.0));
        assert!((r.final_state.t - 0.5).abs() < 1e-12);
        assert!(r.t_star_estimate.is_none());
    }

    #[test]
    fn homogeneous_run_hits_exact_time() {
        let grid = grid1(64, 1.0);
        for p in [1, 2] {
            for c in [0.5, 0.8] {
                let data = DataFamily::Homogeneous { psi: 0.0, pi: -c }.build(*grid.spec()).unwrap();
                let r = run(&grid, &data, p, &RunOptions::default(), &mut ()).unwrap();
                assert_eq!(r.stop_reason, StopReason::DegeneracyReached);
                let t = r.t_star_estimate.unwrap();
                assert!((t - 1.0 / c).abs() < 1e-6, "P={p} c={c}: {t}");
                assert!(r.m_series.windows(2).all(|w| w[1] <= w[0]));
                let last = *r.min_series.last().unwrap();
                assert!(last <= 1e-2 && last >= LANDING_FRACTION * 1e-2);
            }
        }
    }

    #[test]
    fn estimate_examples() {
        let times: Vec<f64> = (0..5).map(|i| 1.9 + 0.02 * i as f64).collect();
        let line: Vec<f64> = times.iter().map(|t| 1.0 - 0.5 * t).collect();
        let root = estimate_t_star(&times, &line, 0.06).unwrap();
        assert!((root - 2.0).abs() < 1e-12);

        let quad: Vec<f64> = times.iter().map(|t| (1.0 - 0.5 * t).powi(2)).collect();
        let est = estimate_t_star(&times, &quad, 0.06).unwrap();
        assert_eq!(est, 1.98);
        let shallow: Vec<f64> = times.iter().map(|t| 0.06 * (2.0 - t).sqrt()).collect();
        assert!(estimate_t_star(&times, &shallow, 0.06).unwrap() > 2.0);

        assert!(matches!(
            estimate_t_star(&times[..2], &line[..2], 0.06),
            Err(Error::InsufficientTail { .. })
        ));
        let rising: Vec<f64> = times.iter().map(|t| 0.01 * t).collect();
        assert!(matches!(estimate_t_star(&times, &rising, 0.06), Err(Error::NonNegativeSlope(_))));
    }

    #[test]
    fn locus_examples() {
        let grid = grid1(32, 2.0);
        let s = homogeneous(&grid, -0.5, -0.5, 1);
        assert_eq!(degeneracy_locus(&s, 0.0).len(), 32);
        let spec = *grid.spec();
        let psi = ScalarField::from_fn(spec, |x| -0.5 * (PI * x[0]).sin().powi(2));
        let s = State::new(0.0, psi.clone(), ScalarField::zeros(spec), 1).unwrap();
        let argmin: Vec<usize> = (0..32).filter(|&i| psi.values()[i] == psi.min()).collect();
        assert_eq!(degeneracy_locus(&s, 0.0), argmin);
    }

    #[test]
    fn homogeneous_reference_examples() {
        assert_eq!(homogeneous_reference(0.0, -0.5, 2.0), (-1.0, -0.5));
        assert_eq!(homogeneous_reference(0.0, 0.0, 3.0), (0.0, 0.0));
        let (psi, _) = homogeneous_reference(0.1, -0.55, 2.0);
        assert!((psi + 1.0).abs() < 1e-15);
    }
}
