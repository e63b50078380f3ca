//! Energy, friction, energy identity, commuted sources and pointwise
//! monitors evaluated on states of a run.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{self, CurvatureSummary};
use crate::error::{Error, Result};
use crate::evolution::{RunObserver, State};
use crate::grid::{multi_indices, multiplicity, Grid, MultiIndex, TensorField};
use crate::initial_data::{DataPair, DataSizeParams};

/// Points whose majorant falls below this fraction of its maximum are left
/// out of [`source_bound_ratio`]; there both sides are round-off.
pub const SOURCE_MASK_REL: f64 = 1e-8;
const SOURCE_FLOOR: f64 = 1e-30;
const ALPHA_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    pub total: f64,
    /// Contributions of `k' = 2, 3, 4, 5`.
    pub per_order: [f64; 4],
    pub friction_accum: f64,
    pub identity_residual: f64,
    pub p: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinftyBundle {
    pub psi: f64,
    pub pi: f64,
    /// `max Σ_{k=1}^{3} |∇^k Ψ|`
    pub grad_psi: f64,
    /// `max Σ_{k=1}^{3} |∇^k Π|`
    pub grad_pi: f64,
    /// `max (|∂ₜ²Ψ| + |∇∂ₜ²Ψ|)`
    pub psi_tt: f64,
    /// `max(0, ‖Ψ‖_∞ − 2δ̊/δ̊*) / ε̊`
    pub psi_excess_ratio: f64,
    /// `max(0, ‖Π‖_∞ − δ̊) / ε̊`
    pub pi_excess_ratio: f64,
    /// Largest of `grad_psi`, `grad_pi`, `psi_tt` over `ε̊`.
    pub small_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorRow {
    pub t: f64,
    pub r_psi: f64,
    pub r_pi: f64,
    pub mono_margin: f64,
    pub linfty: LinftyBundle,
    /// [`source_bound_ratio`] for `k = 2..=5`.
    pub fk_ratios: [f64; 4],
}

/// Everything the diagnostics need from one state, computed in one pass.
#[derive(Clone, Debug)]
pub(crate) struct Evaluation {
    pub t: f64,
    pub per_order: [f64; 4],
    pub friction_rate: f64,
    pub identity_rate: f64,
    /// `|∇^k Ψ|` for `k = 0..=6`.
    pub psi_norms: Vec<Vec<f64>>,
    /// `|∇^k Π|` for `k = 0..=5`.
    pub pi_norms: Vec<Vec<f64>>,
    /// `|F^{(k)}|` for `k = 2..=5`.
    pub source_norms: Vec<Vec<f64>>,
    /// `|∂ₜ²Ψ| + |∇∂ₜ²Ψ|`
    pub psi_tt_norm: Vec<f64>,
}

struct Contribution {
    psi_sq: Vec<f64>,
    grad_sq: Vec<f64>,
    pi_sq: Vec<f64>,
    f_sq: Vec<f64>,
    energy: f64,
    friction: f64,
    identity: f64,
}

fn unit(a: usize) -> MultiIndex {
    let mut e = [0; 3];
    e[a] = 1;
    e
}

fn shifted(alpha: MultiIndex, a: usize) -> MultiIndex {
    let mut out = alpha;
    out[a] += 1;
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Derivatives of `(1+Ψ)^P` and of `ΔΨ` up to order `k_max`, from which
/// `F^{(k)}` is assembled by the Leibniz rule. The expansion never forms the
/// two large terms whose difference is `F^{(k)}`, so it keeps full relative
/// accuracy where the source is small.
struct SourceTerms {
    weight: Vec<HashMap<MultiIndex, Vec<f64>>>,
    lap: Vec<HashMap<MultiIndex, Vec<f64>>>,
}

impl SourceTerms {
    fn new(grid: &Grid, psi: &[f64], weight: &[f64], k_max: usize) -> Self {
        let dim = grid.spec().dim;
        let prep_w = grid.prepare(weight);
        let prep_psi = grid.prepare(psi);
        let table = |order: usize, lap: bool| -> HashMap<MultiIndex, Vec<f64>> {
            let alphas = multi_indices(dim, order);
            let fields = if lap {
                prep_psi.laplacian_partials(&alphas)
            } else {
                prep_w.partials(&alphas)
            };
            alphas.into_iter().zip(fields).collect()
        };
        SourceTerms {
            weight: (0..=k_max).map(|j| if j == 0 { HashMap::new() } else { table(j, false) }).collect(),
            lap: (0..k_max).map(|j| table(j, true)).collect(),
        }
    }

    /// `Σ_{0≠β≤α} C(α,β) ∂^β(1+Ψ)^P ∂^{α−β}ΔΨ`.
    fn source(&self, alpha: MultiIndex) -> Vec<f64> {
        let n = self.lap[0][&[0; 3]].len();
        let mut out = vec![0.0; n];
        for b0 in 0..=alpha[0] {
            for b1 in 0..=alpha[1] {
                for b2 in 0..=alpha[2] {
                    let beta = [b0, b1, b2];
                    let order = b0 + b1 + b2;
                    if order == 0 {
                        continue;
                    }
                    let rest = [alpha[0] - b0, alpha[1] - b1, alpha[2] - b2];
                    let c = (0..3).map(|i| binomial(alpha[i], beta[i])).product::<f64>();
                    let dw = &self.weight[order][&beta];
                    let dl = &self.lap[rest.iter().sum::<usize>()][&rest];
                    for i in 0..n {
                        out[i] += c * dw[i] * dl[i];
                    }
                }
            }
        }
        out
    }
}

fn euclid(fields: &[Vec<f64>]) -> Vec<f64> {
    let n = fields.first().map_or(0, |f| f.len());
    (0..n).map(|i| fields.iter().map(|f| f[i] * f[i]).sum::<f64>().sqrt()).collect()
}

pub(crate) fn evaluate(grid: &Grid, s: &State) -> Result<Evaluation> {
    check_state(grid, s)?;
    let spec = grid.spec();
    let dim = spec.dim;
    let p = s.p as i32;
    let psi = s.psi.values();
    let pi = s.pi.values();
    let weight: Vec<f64> = psi.iter().map(|v| (1.0 + v).powi(p)).collect();
    let weight_lo: Vec<f64> = psi.iter().map(|v| (1.0 + v).powi(p - 1)).collect();
    let in_friction: Vec<bool> = psi.iter().map(|&v| v > -1.0 && v <= -0.5).collect();

    let prep_psi = grid.prepare(psi);
    let prep_pi = grid.prepare(pi);
    let units: Vec<MultiIndex> = (0..dim).map(unit).collect();
    let dpsi = prep_psi.partials(&units);
    let dpi = prep_pi.partials(&units);
    let lap = prep_psi.laplacian_partials(&[[0; 3]]).pop().unwrap();
    let g: Vec<f64> = weight.iter().zip(&lap).map(|(w, l)| w * l).collect();
    let prep_g = grid.prepare(&g);
    let dg = prep_g.partials(&units);
    let dg_norm = euclid(&dg);
    let psi_tt_norm: Vec<f64> = g.iter().zip(&dg_norm).map(|(a, b)| a.abs() + b).collect();

    let n = psi.len();
    let mut psi_norms = vec![psi.iter().map(|v| v.abs()).collect::<Vec<_>>(), euclid(&dpsi)];
    let mut pi_norms = vec![pi.iter().map(|v| v.abs()).collect::<Vec<_>>(), euclid(&dpi)];
    let mut source_norms = Vec::with_capacity(4);
    let mut per_order = [0.0; 4];
    let mut friction_rate = 0.0;
    let mut identity_rate = 0.0;
    let mut top_grad_sq = vec![0.0; n];
    let sources = SourceTerms::new(grid, psi, &weight, 5);

    for k in 2..=5 {
        let alphas = multi_indices(dim, k);
        let mut psi_sq = vec![0.0; n];
        let mut grad_sq = vec![0.0; n];
        let mut pi_sq = vec![0.0; n];
        let mut f_sq = vec![0.0; n];
        for chunk in alphas.chunks(ALPHA_CHUNK) {
            let parts: Vec<Contribution> = chunk
                .par_iter()
                .map(|&alpha| {
                    let mut req = vec![alpha];
                    req.extend((0..dim).map(|a| shifted(alpha, a)));
                    let mut d = prep_psi.partials(&req);
                    let w: Vec<Vec<f64>> = d.split_off(1);
                    let u = d.pop().unwrap();
                    let v = prep_pi.partials(&[alpha]).pop().unwrap();
                    let src = sources.source(alpha);
                    let m = multiplicity(&alpha);
                    let mut c = Contribution {
                        psi_sq: vec![0.0; n],
                        grad_sq: vec![0.0; n],
                        pi_sq: vec![0.0; n],
                        f_sq: vec![0.0; n],
                        energy: 0.0,
                        friction: 0.0,
                        identity: 0.0,
                    };
                    let mut energy_density = vec![0.0; n];
                    let mut friction_density = vec![0.0; n];
                    let mut identity_density = vec![0.0; n];
                    for i in 0..n {
                        let ws: f64 = w.iter().map(|f| f[i] * f[i]).sum();
                        let dot: f64 = (0..dim).map(|a| dpsi[a][i] * w[a][i]).sum();
                        let f = src[i];
                        c.psi_sq[i] = m * u[i] * u[i];
                        c.grad_sq[i] = m * ws;
                        c.pi_sq[i] = m * v[i] * v[i];
                        c.f_sq[i] = m * f * f;
                        energy_density[i] = m * (v[i] * v[i] + weight[i] * ws + u[i] * u[i]);
                        if in_friction[i] {
                            friction_density[i] = m * weight_lo[i] * ws;
                        }
                        let pw = p as f64 * weight_lo[i];
                        identity_density[i] = m
                            * (pw * pi[i] * ws - 2.0 * pw * dot * v[i] + 2.0 * v[i] * f + 2.0 * v[i] * u[i]);
                    }
                    c.energy = grid.integrate_values(&energy_density);
                    c.friction = grid.integrate_values(&friction_density);
                    c.identity = grid.integrate_values(&identity_density);
                    c
                })
                .collect();
            for c in parts {
                for i in 0..n {
                    psi_sq[i] += c.psi_sq[i];
                    grad_sq[i] += c.grad_sq[i];
                    pi_sq[i] += c.pi_sq[i];
                    f_sq[i] += c.f_sq[i];
                }
                per_order[k - 2] += c.energy;
                friction_rate += c.friction;
                identity_rate += c.identity;
            }
        }
        psi_norms.push(psi_sq.into_iter().map(f64::sqrt).collect());
        pi_norms.push(pi_sq.into_iter().map(f64::sqrt).collect());
        source_norms.push(f_sq.into_iter().map(f64::sqrt).collect());
        if k == 5 {
            top_grad_sq = grad_sq;
        }
    }
    psi_norms.push(top_grad_sq.into_iter().map(f64::sqrt).collect());

    Ok(Evaluation {
        t: s.t,
        per_order,
        friction_rate,
        identity_rate,
        psi_norms,
        pi_norms,
        source_norms,
        psi_tt_norm,
    })
}

fn check_state(grid: &Grid, s: &State) -> Result<()> {
    if s.psi.grid() != grid.spec() || s.pi.grid() != grid.spec() {
        return Err(Error::GridMismatch);
    }
    let m = s.min_one_plus_psi();
    if m > 0.0 {
        Ok(())
    } else {
        Err(Error::Degenerate { min_one_plus_psi: m })
    }
}

/// `𝓔_{[2,5]}` at the state; the trajectory fields are left at zero.
pub fn energy(grid: &Grid, s: &State) -> Result<EnergyReport> {
    let e = evaluate(grid, s)?;
    Ok(EnergyReport {
        t: s.t,
        total: e.per_order.iter().sum(),
        per_order: e.per_order,
        friction_accum: 0.0,
        identity_residual: 0.0,
        p: s.p,
    })
}

/// `Σ_{k'} ∫ 1_{−1<Ψ≤−1/2} (1+Ψ)^{P−1} |∇∇^{k'}Ψ|² dx`.
pub fn friction_rate(grid: &Grid, s: &State) -> Result<f64> {
    Ok(evaluate(grid, s)?.friction_rate)
}

pub fn friction_increment(grid: &Grid, s: &State, dt: f64) -> Result<f64> {
    Ok(dt * friction_rate(grid, s)?)
}

/// Instantaneous value of the four spacetime integrands of the energy
/// identity, summed over `k' = 2..=5`.
pub fn identity_rate(grid: &Grid, s: &State) -> Result<f64> {
    Ok(evaluate(grid, s)?.identity_rate)
}

/// `|𝓔(t_end) − 𝓔(t_start) − Q|` with `Q` the trapezoid rule over the window.
pub fn energy_identity_residual(grid: &Grid, window: &[State], dt: f64) -> Result<f64> {
    if window.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "energy identity needs at least 3 states, got {}",
            window.len()
        )));
    }
    for pair in window.windows(2) {
        if ((pair[1].t - pair[0].t) - dt).abs() > 1e-9 * dt.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::UnequalSpacing);
        }
    }
    let evals = window.iter().map(|s| evaluate(grid, s)).collect::<Result<Vec<_>>>()?;
    let q: f64 = evals
        .windows(2)
        .map(|w| 0.5 * dt * (w[0].identity_rate + w[1].identity_rate))
        .sum();
    let total = |e: &Evaluation| e.per_order.iter().sum::<f64>();
    Ok((total(evals.last().unwrap()) - total(&evals[0]) - q).abs())
}

/// `F^{(k)} = ∇^k((1+Ψ)^P ΔΨ) − (1+Ψ)^P Δ∇^kΨ`, one slot per multi-index,
/// evaluated through the Leibniz expansion of the first term.
pub fn commuted_source(grid: &Grid, s: &State, k: usize) -> Result<TensorField> {
    if !(2..=5).contains(&k) {
        return Err(Error::OrderOutOfRange { order: k, max: 5 });
    }
    check_state(grid, s)?;
    let spec = *grid.spec();
    let weight: Vec<f64> = s.psi.values().iter().map(|v| (1.0 + v).powi(s.p as i32)).collect();
    let sources = SourceTerms::new(grid, s.psi.values(), &weight, k);
    let alphas = multi_indices(spec.dim, k);
    let slots = alphas.par_iter().map(|&alpha| sources.source(alpha)).collect();
    Ok(TensorField::symmetric(spec, spec.dim, k, &alphas, slots))
}

fn source_ratio(e: &Evaluation, s: &State, k: usize, eps_ring: f64) -> f64 {
    let n = s.psi.values().len();
    let maj: Vec<f64> = (0..n)
        .map(|i| {
            let low: f64 = (2..=k).map(|j| e.psi_norms[j][i]).sum();
            let top = e.psi_norms[k + 1][i];
            if s.p == 1 {
                low + top
            } else {
                low + (1.0 + s.psi.values()[i]) * top
            }
        })
        .collect();
    let cut = SOURCE_MASK_REL * maj.iter().cloned().fold(0.0, f64::max);
    let f = &e.source_norms[k - 2];
    (0..n)
        .filter(|&i| maj[i] >= cut && maj[i] > 0.0)
        .map(|i| f[i] / (eps_ring * maj[i] + SOURCE_FLOOR))
        .fold(0.0, f64::max)
}

/// `max |F^{(k)}| / (ε̊·majorant + floor)` with the `P`-dependent majorant.
pub fn source_bound_ratio(grid: &Grid, s: &State, k: usize, eps_ring: f64) -> Result<f64> {
    if !(2..=5).contains(&k) {
        return Err(Error::OrderOutOfRange { order: k, max: 5 });
    }
    let e = evaluate(grid, s)?;
    Ok(source_ratio(&e, s, k, eps_ring))
}

/// `(‖Ψ − tΨ̊₀ − Ψ̊‖_∞, ‖Π − Ψ̊₀‖_∞)`.
pub fn pointwise_residuals(s: &State, data: &DataPair) -> Result<(f64, f64)> {
    if s.psi.grid() != data.psi0.grid() {
        return Err(Error::GridMismatch);
    }
    let t = s.t;
    let mut r_psi = 0.0f64;
    let mut r_pi = 0.0f64;
    for i in 0..s.psi.values().len() {
        let v0 = data.pi0.values()[i];
        r_psi = r_psi.max((s.psi.values()[i] - t * v0 - data.psi0.values()[i]).abs());
        r_pi = r_pi.max((s.pi.values()[i] - v0).abs());
    }
    Ok((r_psi, r_pi))
}

/// `min_{Ψ ≤ −1/2} (−Π − δ̊*/8)`, or `+∞` when the region is empty.
pub fn monotonicity_margin(s: &State, delta_star: f64) -> f64 {
    s.psi
        .values()
        .iter()
        .zip(s.pi.values())
        .filter(|(psi, _)| **psi <= -0.5)
        .map(|(_, pi)| -pi - delta_star / 8.0)
        .fold(f64::INFINITY, f64::min)
}

fn over_eps(num: f64, eps: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / eps
    }
}

fn linfty_bundle(e: &Evaluation, params: &DataSizeParams) -> LinftyBundle {
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    let band = |norms: &[Vec<f64>]| {
        let n = norms[0].len();
        (0..n).map(|i| norms[1][i] + norms[2][i] + norms[3][i]).fold(0.0, f64::max)
    };
    let psi = max(&e.psi_norms[0]);
    let pi = max(&e.pi_norms[0]);
    let grad_psi = band(&e.psi_norms);
    let grad_pi = band(&e.pi_norms);
    let psi_tt = max(&e.psi_tt_norm);
    let eps = params.eps_ring;
    let psi_cap = if params.delta_star > 0.0 {
        2.0 * params.delta_ring / params.delta_star
    } else {
        f64::INFINITY
    };
    LinftyBundle {
        psi,
        pi,
        grad_psi,
        grad_pi,
        psi_tt,
        psi_excess_ratio: over_eps((psi - psi_cap).max(0.0), eps),
        pi_excess_ratio: over_eps((pi - params.delta_ring).max(0.0), eps),
        small_ratio: over_eps(grad_psi.max(grad_pi).max(psi_tt), eps),
    }
}

/// The `L^∞` quantities of the improved bootstrap bounds, and their ratios
/// against `ε̊`.
pub fn bootstrap_monitor(grid: &Grid, s: &State, params: &DataSizeParams) -> Result<LinftyBundle> {
    Ok(linfty_bundle(&evaluate(grid, s)?, params))
}

/// `(𝓔 + (P/16) δ̊* · friction) / ε̊²`.
pub fn energy_bound_ratio(report: &EnergyReport, params: &DataSizeParams) -> Result<f64> {
    if params.eps_ring == 0.0 {
        return Err(Error::ZeroEpsilon);
    }
    let weighted = report.total + report.p as f64 / 16.0 * params.delta_star * report.friction_accum;
    Ok(weighted / (params.eps_ring * params.eps_ring))
}

fn monitor_from(e: &Evaluation, s: &State, data: &DataPair, params: &DataSizeParams) -> Result<MonitorRow> {
    let (r_psi, r_pi) = pointwise_residuals(s, data)?;
    let mut fk_ratios = [0.0; 4];
    for (k, r) in (2..=5).zip(fk_ratios.iter_mut()) {
        *r = source_ratio(e, s, k, params.eps_ring);
    }
    Ok(MonitorRow {
        t: s.t,
        r_psi,
        r_pi,
        mono_margin: monotonicity_margin(s, params.delta_star),
        linfty: linfty_bundle(e, params),
        fk_ratios,
    })
}

pub fn monitor_row(grid: &Grid, s: &State, data: &DataPair, params: &DataSizeParams) -> Result<MonitorRow> {
    monitor_from(&evaluate(grid, s)?, s, data, params)
}

/// One sampled row of a run's time series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagRow {
    pub t: f64,
    /// Running minimum of `min(1+Ψ)`.
    pub m: f64,
    pub min_one_plus_psi: f64,
    pub energy: EnergyReport,
    pub energy_ratio: f64,
    pub monitor: MonitorRow,
    pub curvature: Option<CurvatureSummary>,
}

impl DiagRow {
    pub fn csv_header(with_curvature: bool) -> String {
        let mut cols = vec![
            "t",
            "M",
            "E25",
            "friction",
            "R_psi",
            "R_pi",
            "mono_margin",
            "min_1psi",
            "identity_residual",
            "energy_ratio",
            "E2",
            "E3",
            "E4",
            "E5",
            "psi_linf",
            "pi_linf",
            "grad_psi_13",
            "grad_pi_13",
            "psi_tt_linf",
            "psi_excess_ratio",
            "pi_excess_ratio",
            "small_ratio",
            "F2_ratio",
            "F3_ratio",
            "F4_ratio",
            "F5_ratio",
        ];
        if with_curvature {
            cols.extend(CurvatureSummary::CSV_COLUMNS);
        }
        cols.join(",")
    }

    pub fn csv_record(&self, with_curvature: bool) -> String {
        let e = &self.energy;
        let mo = &self.monitor;
        let l = &mo.linfty;
        let mut vals = vec![
            self.t,
            self.m,
            e.total,
            e.friction_accum,
            mo.r_psi,
            mo.r_pi,
            mo.mono_margin,
            self.min_one_plus_psi,
            e.identity_residual,
            self.energy_ratio,
        ];
        vals.extend(e.per_order);
        vals.extend([
            l.psi,
            l.pi,
            l.grad_psi,
            l.grad_pi,
            l.psi_tt,
            l.psi_excess_ratio,
            l.pi_excess_ratio,
            l.small_ratio,
        ]);
        vals.extend(mo.fk_ratios);
        if with_curvature {
            match &self.curvature {
                Some(c) => vals.extend(c.csv_values()),
                None => vals.extend(std::iter::repeat(f64::NAN).take(CurvatureSummary::CSV_COLUMNS.len())),
            }
        }
        vals.iter().map(|v| format_f64(*v)).collect::<Vec<_>>().join(",")
    }
}

/// 17 significant digits.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

#[derive(Clone, Debug)]
pub struct RecorderOptions {
    /// Attach a curvature summary to every row.
    pub curvature: bool,
    /// Tolerance for the degeneracy locus used by the curvature summary.
    pub locus_tol: f64,
}

impl Default for RecorderOptions {
    fn default() -> Self {
        RecorderOptions {
            curvature: true,
            locus_tol: 1e-3,
        }
    }
}

/// Run observer that accumulates the friction integral and the energy
/// identity with the trapezoid rule over every accepted step, and emits a
/// [`DiagRow`] per sample.
pub struct DiagnosticsRecorder {
    data: DataPair,
    params: DataSizeParams,
    opts: RecorderOptions,
    e0: Option<f64>,
    quadrature: f64,
    friction: f64,
    running_min: f64,
    last: Option<Evaluation>,
    pub rows: Vec<DiagRow>,
    pub error: Option<String>,
}

impl DiagnosticsRecorder {
    pub fn new(data: &DataPair, params: DataSizeParams, opts: RecorderOptions) -> Self {
        DiagnosticsRecorder {
            data: data.clone(),
            params,
            opts,
            e0: None,
            quadrature: 0.0,
            friction: 0.0,
            running_min: f64::INFINITY,
            last: None,
            rows: Vec::new(),
            error: None,
        }
    }

    pub fn with_curvature(&self) -> bool {
        self.opts.curvature
    }

    fn eval_for(&mut self, grid: &Grid, s: &State) -> Option<Evaluation> {
        if let Some(e) = &self.last {
            if e.t == s.t {
                return Some(e.clone());
            }
        }
        match evaluate(grid, s) {
            Ok(e) => {
                if self.e0.is_none() {
                    self.e0 = Some(e.per_order.iter().sum());
                }
                self.last = Some(e.clone());
                Some(e)
            }
            Err(err) => {
                self.error.get_or_insert(err.to_string());
                None
            }
        }
    }

    fn build_row(&self, grid: &Grid, s: &State, e: &Evaluation) -> Result<DiagRow> {
        let total: f64 = e.per_order.iter().sum();
        let report = EnergyReport {
            t: s.t,
            total,
            per_order: e.per_order,
            friction_accum: self.friction,
            identity_residual: (total - self.e0.unwrap_or(total) - self.quadrature).abs(),
            p: s.p,
        };
        let energy_ratio = if self.params.eps_ring > 0.0 {
            energy_bound_ratio(&report, &self.params)?
        } else {
            0.0
        };
        let curvature = if self.opts.curvature {
            Some(curvature::summary(grid, s, self.opts.locus_tol)?)
        } else {
            None
        };
        let m = s.min_one_plus_psi();
        Ok(DiagRow {
            t: s.t,
            m: self.running_min.min(m),
            min_one_plus_psi: m,
            energy: report,
            energy_ratio,
            monitor: monitor_from(e, s, &self.data, &self.params)?,
            curvature,
        })
    }

    pub fn csv(&self) -> String {
        let c = self.opts.curvature;
        let mut out = DiagRow::csv_header(c);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_record(c));
            out.push('\n');
        }
        out
    }
}

impl RunObserver for DiagnosticsRecorder {
    fn on_step(&mut self, grid: &Grid, prev: &State, next: &State) {
        let Some(a) = self.eval_for(grid, prev) else { return };
        self.running_min = self.running_min.min(prev.min_one_plus_psi());
        let Some(b) = self.eval_for(grid, next) else { return };
        let dt = next.t - prev.t;
        self.friction += 0.5 * dt * (a.friction_rate + b.friction_rate);
        self.quadrature += 0.5 * dt * (a.identity_rate + b.identity_rate);
    }

    fn on_sample(&mut self, grid: &Grid, s: &State) {
        let Some(e) = self.eval_for(grid, s) else { return };
        self.running_min = self.running_min.min(s.min_one_plus_psi());
        match self.build_row(grid, s, &e) {
            Ok(row) => self.rows.push(row),
            Err(err) => {
                self.error.get_or_insert(err.to_string());
            }
        }
    }
}
