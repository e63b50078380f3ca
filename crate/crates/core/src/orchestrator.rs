//! Configuration, experiment campaigns and their artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{self, CurvatureSummary};
use crate::diagnostics::{format_f64, DiagRow, DiagnosticsRecorder, RecorderOptions};
use crate::error::{Error, Result};
use crate::evolution::{self, cfl_dt, degeneracy_locus, RunObserver, RunOptions, State, StopReason};
use crate::grid::{Grid, GridSpec};
use crate::initial_data::{data_size_params, write_data_pair, DataFamily, DataPair, DataSizeParams};
use crate::snapshot::write_snapshot;

/// Largest points-per-axis a 3-D refinement may reach without an override.
pub const MAX_3D_POINTS: usize = 128;

fn default_eta_stop() -> f64 {
    1e-2
}
fn default_eta_fit() -> f64 {
    0.05
}
fn default_cadence() -> usize {
    10
}
fn default_true() -> bool {
    true
}
fn default_locus_tol() -> f64 {
    1e-3
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "P")]
    pub p: u32,
    pub grid: GridSpec,
    pub data: DataFamily,
    #[serde(default = "default_eta_stop")]
    pub eta_stop: f64,
    #[serde(default = "default_eta_fit")]
    pub eta_fit: f64,
    #[serde(default)]
    pub cfl_number: Option<f64>,
    #[serde(default)]
    pub dt_max: Option<f64>,
    pub t_max: f64,
    #[serde(default = "default_cadence")]
    pub diag_cadence: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Times at which `psi`/`pi` snapshots are written (first accepted
    /// state at or after each time).
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Attach curvature columns to the time series.
    #[serde(default = "default_true")]
    pub curvature: bool,
    #[serde(default = "default_locus_tol")]
    pub locus_tol: f64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            eta_stop: self.eta_stop,
            eta_fit: self.eta_fit,
            t_max: self.t_max,
            cfl_number: self.cfl_number,
            dt_max: self.dt_max,
            diag_cadence: self.diag_cadence,
            fixed_dt: None,
        }
    }

    /// Checks everything that can be checked before time stepping, including
    /// that the support keeps twice the propagation distance from the box
    /// boundary.
    pub fn validate(&self) -> Result<(Grid, DataPair, DataSizeParams)> {
        let cfg = |e: Error| Error::Config(e.to_string());
        if self.p != 1 && self.p != 2 {
            return Err(Error::Config(format!("P must be 1 or 2, got {}", self.p)));
        }
        self.run_options().validate().map_err(cfg)?;
        if !(self.locus_tol >= 0.0) {
            return Err(Error::Config(format!("locus_tol must be nonnegative, got {}", self.locus_tol)));
        }
        let grid = Grid::new(self.grid).map_err(cfg)?;
        let data = self.data.build(self.grid).map_err(cfg)?;
        if !(1.0 + data.psi0.min() > 0.0) {
            return Err(Error::Config("initial data has min(1 + psi) <= 0".into()));
        }
        let params = data_size_params(&grid, &data);
        if data.support_radius.is_finite() {
            let speed = (1.0 + data.psi0.linf() + 0.1).powf(self.p as f64 / 2.0);
            let horizon = if params.delta_star > 0.0 {
                self.t_max.min(2.0 / params.delta_star)
            } else {
                self.t_max
            };
            let room = 0.5 * self.grid.box_length - data.support_radius;
            if room < 2.0 * speed * horizon {
                return Err(Error::Config(format!(
                    "box too small: support radius {} plus propagation {:.3} exceeds half box {}",
                    data.support_radius,
                    2.0 * speed * horizon,
                    0.5 * self.grid.box_length
                )));
            }
        }
        Ok((grid, data, params))
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        RunConfig {
            data: self.data.with_lambda(lambda),
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub lambdas: Vec<f64>,
    #[serde(default, rename = "compare_P")]
    pub compare_p: bool,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::Config("lambdas must not be empty".into()));
        }
        if self.lambdas.iter().any(|l| !(*l >= 1.0)) {
            return Err(Error::Config("lambdas must be >= 1".into()));
        }
        if self.lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("lambdas must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<(f64, u32)> {
        let ps: Vec<u32> = if self.compare_p { vec![1, 2] } else { vec![self.base.p] };
        self.lambdas
            .iter()
            .flat_map(|&l| ps.iter().map(move |&p| (l, p)))
            .collect()
    }
}

/// Statistics on the degeneracy locus of the final state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocusStats {
    pub points: usize,
    pub min_one_plus_psi: f64,
    /// `max ∂ₜΨ` over the locus.
    pub max_pi: f64,
    /// `−δ̊*/8`
    pub pi_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    #[serde(rename = "P")]
    pub p: u32,
    pub lambda: f64,
    #[serde(rename = "T_star_estimate")]
    pub t_star_estimate: Option<f64>,
    pub t_star_error: Option<String>,
    pub delta_star: f64,
    pub delta_ring: f64,
    pub eps_ring: f64,
    pub stop_reason: StopReason,
    pub steps: usize,
    pub final_time: f64,
    pub final_min_one_plus_psi: f64,
    pub locus: LocusStats,
    /// Suprema over the sampled rows.
    pub max_energy_ratio: f64,
    pub max_r_psi: f64,
    pub max_r_pi: f64,
    pub min_mono_margin: f64,
    pub max_fk_ratios: [f64; 4],
    pub max_small_ratio: f64,
    pub max_identity_residual: f64,
    pub final_curvature: Option<CurvatureSummary>,
    pub max_error_mags: Option<[f64; 3]>,
}

impl RunSummary {
    /// `|T* δ̊* − 1|`
    pub fn t_star_defect(&self) -> Option<f64> {
        self.t_star_estimate.map(|t| (t * self.delta_star - 1.0).abs())
    }
}

pub struct RunOutcome {
    pub summary: RunSummary,
    pub rows: Vec<DiagRow>,
    pub final_state: State,
    pub times: Vec<f64>,
    pub min_series: Vec<f64>,
}

struct SnapshotWriter {
    dir: PathBuf,
    pending: Vec<f64>,
    written: usize,
    error: Option<String>,
}

impl RunObserver for SnapshotWriter {
    fn on_step(&mut self, _grid: &Grid, _prev: &State, next: &State) {
        while let Some(&t) = self.pending.first() {
            if next.t + 1e-12 < t {
                break;
            }
            self.pending.remove(0);
            let tag = self.written;
            self.written += 1;
            for (name, f) in [("psi", &next.psi), ("pi", &next.pi)] {
                if let Err(e) = write_snapshot(&self.dir, &format!("{name}_{tag:03}"), f, next.t, next.p) {
                    self.error.get_or_insert(e.to_string());
                }
            }
        }
    }
}

struct Both<'a>(&'a mut dyn RunObserver, &'a mut dyn RunObserver);

impl RunObserver for Both<'_> {
    fn on_step(&mut self, grid: &Grid, prev: &State, next: &State) {
        self.0.on_step(grid, prev, next);
        self.1.on_step(grid, prev, next);
    }
    fn on_sample(&mut self, grid: &Grid, state: &State) {
        self.0.on_sample(grid, state);
        self.1.on_sample(grid, state);
    }
}

fn fold_max(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

/// Runs one configuration in memory. With `out_dir`, also writes `run.csv`,
/// `summary.json`, `config.json`, the data and the final fields.
pub fn execute(config: &RunConfig, out_dir: Option<&Path>, fixed_dt: Option<f64>) -> Result<RunOutcome> {
    let (grid, data, params) = config.validate()?;
    let mut recorder = DiagnosticsRecorder::new(
        &data,
        params,
        RecorderOptions {
            curvature: config.curvature,
            locus_tol: config.locus_tol,
        },
    );
    let mut snaps = SnapshotWriter {
        dir: out_dir.map(|d| d.join("snapshots")).unwrap_or_default(),
        pending: if out_dir.is_some() {
            let mut t = config.snapshot_times.clone();
            t.sort_by(f64::total_cmp);
            t
        } else {
            Vec::new()
        },
        written: 0,
        error: None,
    };
    let opts = RunOptions {
        fixed_dt,
        ..config.run_options()
    };
    let result = evolution::run(&grid, &data, config.p, &opts, &mut Both(&mut recorder, &mut snaps))?;
    if let Some(e) = recorder.error.take().or(snaps.error.take()) {
        return Err(Error::InvalidArgument(format!("diagnostics failed: {e}")));
    }

    let fin = &result.final_state;
    let locus = degeneracy_locus(fin, config.locus_tol);
    let locus_stats = LocusStats {
        points: locus.len(),
        min_one_plus_psi: fin.min_one_plus_psi(),
        max_pi: locus
            .iter()
            .map(|&i| fin.pi.values()[i])
            .fold(f64::NEG_INFINITY, f64::max),
        pi_bound: -params.delta_star / 8.0,
    };
    let rows = recorder.rows;
    let mut max_fk = [0.0; 4];
    for (k, m) in max_fk.iter_mut().enumerate() {
        *m = fold_max(rows.iter().map(|r| r.monitor.fk_ratios[k]));
    }
    let curv: Vec<&CurvatureSummary> = rows.iter().filter_map(|r| r.curvature.as_ref()).collect();
    let summary = RunSummary {
        p: config.p,
        lambda: config.data.lambda(),
        t_star_estimate: result.t_star_estimate,
        t_star_error: result.t_star_error.clone(),
        delta_star: params.delta_star,
        delta_ring: params.delta_ring,
        eps_ring: params.eps_ring,
        stop_reason: result.stop_reason,
        steps: result.steps,
        final_time: fin.t,
        final_min_one_plus_psi: fin.min_one_plus_psi(),
        locus: locus_stats,
        max_energy_ratio: fold_max(rows.iter().map(|r| r.energy_ratio)),
        max_r_psi: fold_max(rows.iter().map(|r| r.monitor.r_psi)),
        max_r_pi: fold_max(rows.iter().map(|r| r.monitor.r_pi)),
        min_mono_margin: rows.iter().map(|r| r.monitor.mono_margin).fold(f64::INFINITY, f64::min),
        max_fk_ratios: max_fk,
        max_small_ratio: fold_max(rows.iter().map(|r| r.monitor.linfty.small_ratio)),
        max_identity_residual: fold_max(rows.iter().map(|r| r.energy.identity_residual)),
        final_curvature: rows.last().and_then(|r| r.curvature.clone()),
        max_error_mags: if curv.is_empty() {
            None
        } else {
            Some([
                fold_max(curv.iter().map(|c| c.error_mags.spatial)),
                fold_max(curv.iter().map(|c| c.error_mags.time)),
                fold_max(curv.iter().map(|c| c.error_mags.codazzi)),
            ])
        },
    };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.json"), config.to_json()?)?;
        let mut csv = DiagRow::csv_header(config.curvature);
        csv.push('\n');
        for r in &rows {
            csv.push_str(&r.csv_record(config.curvature));
            csv.push('\n');
        }
        fs::write(dir.join("run.csv"), csv)?;
        let mut series = String::from("t,min_1psi,M\n");
        for i in 0..result.times.len() {
            series.push_str(&format!(
                "{},{},{}\n",
                format_f64(result.times[i]),
                format_f64(result.min_series[i]),
                format_f64(result.m_series[i])
            ));
        }
        fs::write(dir.join("min_series.csv"), series)?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        write_data_pair(&dir.join("data"), &data, config.p)?;
        let snap = dir.join("snapshots");
        write_snapshot(&snap, "psi_final", &fin.psi, fin.t, fin.p)?;
        write_snapshot(&snap, "pi_final", &fin.pi, fin.t, fin.p)?;
    }

    Ok(RunOutcome {
        summary,
        rows,
        final_state: result.final_state,
        times: result.times,
        min_series: result.min_series,
    })
}

/// `run` subcommand.
pub fn cmd_run(config: &RunConfig) -> Result<RunSummary> {
    Ok(execute(config, Some(&config.out_dir), None)?.summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    #[serde(rename = "P")]
    pub p: u32,
    pub eps_ring: f64,
    pub delta_star: f64,
    #[serde(rename = "T_star")]
    pub t_star: Option<f64>,
    /// `|T* δ̊* − 1|`
    pub t_star_defect: Option<f64>,
    pub t_star_defect_over_eps: Option<f64>,
    pub max_energy_ratio: f64,
    pub min_mono_margin: f64,
    pub locus_ratio_err: f64,
    pub r_psi_over_eps: f64,
    pub r_pi_over_eps: f64,
    pub max_fk_ratios: [f64; 4],
    /// Suprema over time of the three weighted curvature error terms, over `ε̊`.
    pub error_mags_over_eps: [f64; 3],
    pub stop_reason: Option<StopReason>,
    pub failure: Option<String>,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "lambda,P,eps_ring,delta_star,T_star,tstar_defect,tstar_defect_over_eps,\
max_energy_ratio,min_mono_margin,locus_ratio_err,R_psi_over_eps,R_pi_over_eps,F2_ratio,F3_ratio,F4_ratio,F5_ratio,\
err_spatial_over_eps,err_time_over_eps,err_codazzi_over_eps,stop_reason,failure";

    fn from_summary(s: &RunSummary) -> Self {
        let defect = s.t_star_defect();
        let eps = s.eps_ring;
        let mags = s.max_error_mags.unwrap_or([f64::NAN; 3]);
        SweepRow {
            lambda: s.lambda,
            p: s.p,
            eps_ring: eps,
            delta_star: s.delta_star,
            t_star: s.t_star_estimate,
            t_star_defect: defect,
            t_star_defect_over_eps: defect.map(|d| d / eps),
            max_energy_ratio: s.max_energy_ratio,
            min_mono_margin: s.min_mono_margin,
            locus_ratio_err: s.final_curvature.as_ref().map_or(f64::NAN, |c| c.locus_ratio_err),
            r_psi_over_eps: s.max_r_psi / eps,
            r_pi_over_eps: s.max_r_pi / eps,
            max_fk_ratios: s.max_fk_ratios,
            error_mags_over_eps: mags.map(|m| m / eps),
            stop_reason: Some(s.stop_reason),
            failure: None,
        }
    }

    fn failed(lambda: f64, p: u32, reason: String) -> Self {
        SweepRow {
            lambda,
            p,
            eps_ring: f64::NAN,
            delta_star: f64::NAN,
            t_star: None,
            t_star_defect: None,
            t_star_defect_over_eps: None,
            max_energy_ratio: f64::NAN,
            min_mono_margin: f64::NAN,
            locus_ratio_err: f64::NAN,
            r_psi_over_eps: f64::NAN,
            r_pi_over_eps: f64::NAN,
            max_fk_ratios: [f64::NAN; 4],
            error_mags_over_eps: [f64::NAN; 3],
            stop_reason: None,
            failure: Some(reason),
        }
    }

    pub fn csv_record(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("nan".to_string(), format_f64);
        let mut cells = vec![
            format_f64(self.lambda),
            self.p.to_string(),
            format_f64(self.eps_ring),
            format_f64(self.delta_star),
            opt(self.t_star),
            opt(self.t_star_defect),
            opt(self.t_star_defect_over_eps),
            format_f64(self.max_energy_ratio),
            format_f64(self.min_mono_margin),
            format_f64(self.locus_ratio_err),
            format_f64(self.r_psi_over_eps),
            format_f64(self.r_pi_over_eps),
        ];
        cells.extend(self.max_fk_ratios.iter().map(|v| format_f64(*v)));
        cells.extend(self.error_mags_over_eps.iter().map(|v| format_f64(*v)));
        cells.push(
            self.stop_reason
                .map(|s| serde_json::to_value(s).unwrap().as_str().unwrap().to_string())
                .unwrap_or_default(),
        );
        cells.push(self.failure.clone().unwrap_or_default().replace([',', '\n'], ";"));
        cells.join(",")
    }
}

/// `sweep` subcommand: every `(λ, P)` point runs concurrently in its own
/// directory; rows come back in configuration order.
pub fn cmd_sweep(sweep: &SweepConfig, out_dir: Option<&Path>) -> Result<Vec<SweepRow>> {
    sweep.validate()?;
    let rows: Vec<SweepRow> = sweep
        .points()
        .into_par_iter()
        .map(|(lambda, p)| {
            let config = RunConfig {
                p,
                ..sweep.base.with_lambda(lambda)
            };
            let dir = out_dir.map(|d| d.join(format!("lambda_{lambda}_P{p}")));
            match execute(&config, dir.as_deref(), None) {
                Ok(o) => SweepRow::from_summary(&o.summary),
                Err(e) => SweepRow::failed(lambda, p, e.to_string()),
            }
        })
        .collect();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let mut csv = format!("{}\n", SweepRow::CSV_HEADER);
        for r in &rows {
            csv.push_str(&r.csv_record());
            csv.push('\n');
        }
        fs::write(dir.join("sweep.csv"), csv)?;
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineLevel {
    pub n: usize,
    pub dt: f64,
    pub final_time: f64,
    pub stop_reason: StopReason,
    pub t_star: Option<f64>,
    pub identity_residual: f64,
    /// `max |Ψ_l − Ψ_{l+1}|` on the coarse points; `None` on the finest level.
    pub solution_diff: Option<f64>,
    pub solution_order: Option<f64>,
    pub t_star_diff: Option<f64>,
    pub t_star_order: Option<f64>,
    pub identity_order: Option<f64>,
}

fn order(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).log2()),
        _ => None,
    }
}

/// `refine` subcommand: the run repeated at `n, 2n, 4n, …` points per axis
/// with a uniform step halved at each level.
pub fn cmd_refine(
    config: &RunConfig,
    levels: usize,
    allow_large: bool,
    out_dir: Option<&Path>,
) -> Result<Vec<RefineLevel>> {
    if levels < 3 {
        return Err(Error::Config(format!("refinement needs at least 3 levels, got {levels}")));
    }
    let finest = config.grid.n << (levels - 1);
    if config.grid.dim == 3 && finest > MAX_3D_POINTS && !allow_large {
        return Err(Error::Config(format!(
            "3-D refinement up to {finest}^3 points exceeds {MAX_3D_POINTS}^3; pass the override to proceed"
        )));
    }
    let (_, data, _) = config.validate()?;
    let cfl = config.cfl_number.unwrap_or_else(|| config.grid.scheme.default_cfl());
    let s0 = State::initial(&data, config.p)?;
    let dt_cfl = cfl_dt(&s0, cfl).min(config.dt_max.unwrap_or(f64::INFINITY));
    let steps = (config.t_max / dt_cfl).ceil().max(1.0);
    let dt0 = config.t_max / steps;

    let outcomes = (0..levels)
        .map(|l| {
            let cfg = RunConfig {
                grid: GridSpec {
                    n: config.grid.n << l,
                    ..config.grid
                },
                curvature: false,
                diag_cadence: usize::MAX,
                ..config.clone()
            };
            let dt = dt0 / (1u64 << l) as f64;
            let dir = out_dir.map(|d| d.join(format!("level_{l}")));
            execute(&cfg, dir.as_deref(), Some(dt)).map(|o| (cfg.grid.n, dt, o))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out: Vec<RefineLevel> = outcomes
        .iter()
        .map(|(n, dt, o)| RefineLevel {
            n: *n,
            dt: *dt,
            final_time: o.final_state.t,
            stop_reason: o.summary.stop_reason,
            t_star: o.summary.t_star_estimate,
            identity_residual: o.rows.last().map_or(f64::NAN, |r| r.energy.identity_residual),
            solution_diff: None,
            solution_order: None,
            t_star_diff: None,
            t_star_order: None,
            identity_order: None,
        })
        .collect();
    for l in 0..levels - 1 {
        let coarse = &outcomes[l].2.final_state;
        let fine = &outcomes[l + 1].2.final_state;
        if (coarse.t - fine.t).abs() <= 1e-9 * coarse.t.abs().max(1.0) {
            let spec = *coarse.psi.grid();
            let fspec = *fine.psi.grid();
            let diff = (0..spec.len())
                .map(|i| {
                    let idx = spec.unravel(i);
                    let j = fspec.ravel([2 * idx[0], 2 * idx[1], 2 * idx[2]]);
                    (coarse.psi.values()[i] - fine.psi.values()[j]).abs()
                })
                .fold(0.0, f64::max);
            out[l].solution_diff = Some(diff);
        }
        if let (Some(a), Some(b)) = (out[l].t_star, out[l + 1].t_star) {
            out[l].t_star_diff = Some((a - b).abs());
        }
    }
    for l in 0..levels - 1 {
        if l + 1 < levels - 1 {
            out[l].solution_order = order(out[l].solution_diff, out[l + 1].solution_diff);
            out[l].t_star_order = order(out[l].t_star_diff, out[l + 1].t_star_diff);
        }
        out[l].identity_order = order(Some(out[l].identity_residual), Some(out[l + 1].identity_residual));
    }

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let opt = |v: Option<f64>| v.map_or("nan".to_string(), format_f64);
        let mut csv = String::from(
            "level,n,dt,final_time,T_star,identity_residual,solution_diff,solution_order,tstar_diff,tstar_order,identity_order\n",
        );
        for (l, r) in out.iter().enumerate() {
            csv.push_str(&format!(
                "{l},{},{},{},{},{},{},{},{},{},{}\n",
                r.n,
                format_f64(r.dt),
                format_f64(r.final_time),
                opt(r.t_star),
                format_f64(r.identity_residual),
                opt(r.solution_diff),
                opt(r.solution_order),
                opt(r.t_star_diff),
                opt(r.t_star_order),
                opt(r.identity_order),
            ));
        }
        fs::write(dir.join("refine.csv"), csv)?;
    }
    Ok(out)
}

/// `curvature` subcommand: evolves to `at_time` (or to the degeneracy if it
/// comes first) and writes the Kretschmann and leading-ratio fields.
pub fn cmd_curvature(config: &RunConfig, at_time: f64, out_dir: Option<&Path>) -> Result<CurvatureSummary> {
    if !(at_time > 0.0) {
        return Err(Error::Config(format!("at-time must be positive, got {at_time}")));
    }
    let cfg = RunConfig {
        t_max: at_time,
        curvature: false,
        ..config.clone()
    };
    let outcome = execute(&cfg, out_dir, None)?;
    let (grid, _, _) = cfg.validate()?;
    let s = &outcome.final_state;
    let geo = curvature::geometry(&grid, s)?;
    let blocks = curvature::riemann_blocks(&geo, s)?;
    let report = curvature::kretschmann(&blocks, s)?;
    let summary = curvature::summarize(&report, s, cfg.locus_tol);
    if let Some(dir) = out_dir {
        let snap = dir.join("snapshots");
        write_snapshot(&snap, "kretschmann", &report.kretschmann, s.t, s.p)?;
        write_snapshot(&snap, "leading_ratio", &report.leading_ratio, s.t, s.p)?;
        fs::write(dir.join("curvature.json"), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(summary)
}

/// Process exit status for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::InvalidGrid(_)
        | Error::InvalidArgument(_)
        | Error::SupportExceedsBox { .. }
        | Error::Json(_) => 2,
        _ => 1,
    }
}

/// Exit status for a finished run: 3 when the fields blew up.
pub fn run_exit_code(stop: StopReason) -> i32 {
    if stop == StopReason::InstabilityDetected {
        3
    } else {
        0
    }
}
