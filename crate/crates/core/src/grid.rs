//! Uniform periodic grids in one to three dimensions.
//!
//! A [`GridSpec`] describes the box and the differentiation scheme; a [`Grid`]
//! owns the precomputed transform plans or stencils and evaluates derivatives,
//! quadrature and norms of [`ScalarField`]s. Points sit at `x_i = i * h`,
//! `i = 0..n`, on every axis, and fields are stored row-major (axis 0 slowest).
//!
//! Mixed partial derivatives are addressed by a [`MultiIndex`], the number of
//! derivatives taken along each axis. Derivative arrays such as `∇^k f` are
//! symmetric, so a [`TensorField`] stores one array per multiset of axes and
//! maps every ordered component onto it.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest derivative order accepted by the public operations.
pub const MAX_DERIVATIVE_ORDER: usize = 6;

/// Highest per-axis order supported internally. Commuted sources need
/// `Δ ∂^5`, i.e. seven derivatives along a single axis.
pub(crate) const MAX_AXIS_ORDER: usize = 8;

/// Derivative counts per axis. Unused trailing axes stay zero.
pub type MultiIndex = [usize; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    FourierCollocation,
    CentralFd { order: usize },
}

impl Scheme {
    /// Default CFL number for this scheme.
    pub fn default_cfl(&self) -> f64 {
        match self {
            Scheme::FourierCollocation => 0.1,
            Scheme::CentralFd { .. } => 0.25,
        }
    }
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::FourierCollocation
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    #[serde(alias = "points_per_axis")]
    pub n: usize,
    pub box_length: f64,
    #[serde(default)]
    pub scheme: Scheme,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, box_length: f64, scheme: Scheme) -> Result<Self> {
        let spec = GridSpec {
            dim,
            n,
            box_length,
            scheme,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn fourier(dim: usize, n: usize, box_length: f64) -> Result<Self> {
        Self::new(dim, n, box_length, Scheme::FourierCollocation)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidGrid(format!("dim must be 1, 2 or 3, got {}", self.dim)));
        }
        if self.n < 16 {
            return Err(Error::InvalidGrid(format!(
                "points_per_axis must be >= 16, got {}",
                self.n
            )));
        }
        if !(self.box_length.is_finite() && self.box_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box_length must be positive, got {}",
                self.box_length
            )));
        }
        match self.scheme {
            Scheme::FourierCollocation if self.n % 2 != 0 => Err(Error::InvalidGrid(
                "fourier_collocation needs an even number of points".into(),
            )),
            Scheme::CentralFd { order } if ![4, 6, 8].contains(&order) => Err(Error::InvalidGrid(
                format!("central_fd order must be 4, 6 or 8, got {order}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.n as f64
    }

    /// Total number of grid points, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis indices of a flat row-major index, zero-padded to three axes.
    pub fn unravel(&self, flat: usize) -> [usize; 3] {
        let mut out = [0; 3];
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            out[axis] = rem % self.n;
            rem /= self.n;
        }
        out
    }

    pub fn ravel(&self, idx: [usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, a| acc * self.n + idx[a])
    }

    /// Coordinates of a grid point; unused axes are zero.
    pub fn coords(&self, flat: usize) -> [f64; 3] {
        let h = self.spacing();
        let idx = self.unravel(flat);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = idx[a] as f64 * h;
        }
        x
    }

    /// Volume element `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub(crate) fn from_vec(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Index of the smallest value (first one on ties).
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = i;
            }
        }
        best
    }
}

/// Rank-`r` array over `axes` index values at every grid point.
///
/// Components are numbered row-major over the index tuple. Symmetric tensors
/// share storage between permutations of the same multiset, which makes
/// permuted components bit-identical.
#[derive(Clone, Debug)]
pub struct TensorField {
    grid: GridSpec,
    axes: usize,
    rank: usize,
    slots: Vec<Vec<f64>>,
    index: Vec<usize>,
}

impl TensorField {
    /// One array per ordered component.
    pub fn from_components(
        grid: GridSpec,
        axes: usize,
        rank: usize,
        components: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let count = axes.pow(rank as u32);
        if components.len() != count {
            return Err(Error::InvalidArgument(format!(
                "expected {count} components, got {}",
                components.len()
            )));
        }
        if components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::GridMismatch);
        }
        Ok(TensorField {
            grid,
            axes,
            rank,
            slots: components,
            index: (0..count).collect(),
        })
    }

    /// Symmetric tensor from one array per multiset; `alphas[i]` labels
    /// `slots[i]`.
    pub(crate) fn symmetric(
        grid: GridSpec,
        axes: usize,
        rank: usize,
        alphas: &[MultiIndex],
        slots: Vec<Vec<f64>>,
    ) -> Self {
        let count = axes.pow(rank as u32);
        let index = (0..count)
            .map(|c| {
                let alpha = component_alpha(axes, rank, c);
                alphas
                    .iter()
                    .position(|a| *a == alpha)
                    .expect("every multiset has a slot")
            })
            .collect();
        TensorField {
            grid,
            axes,
            rank,
            slots,
            index,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn axes(&self) -> usize {
        self.axes
    }

    pub fn n_components(&self) -> usize {
        self.index.len()
    }

    /// Component by its index tuple, e.g. `&[0, 1]`.
    pub fn component(&self, idx: &[usize]) -> &[f64] {
        assert_eq!(idx.len(), self.rank, "index tuple has wrong length");
        let c = idx.iter().fold(0, |acc, &i| {
            assert!(i < self.axes, "tensor index out of range");
            acc * self.axes + i
        });
        self.component_at(c)
    }

    pub fn component_at(&self, c: usize) -> &[f64] {
        &self.slots[self.index[c]]
    }

    pub fn components(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.index.iter().map(move |&s| self.slots[s].as_slice())
    }

    /// Pointwise `Σ_components value²`.
    pub fn pointwise_norm_sq(&self) -> Vec<f64> {
        let mut weight = vec![0usize; self.slots.len()];
        for &s in &self.index {
            weight[s] += 1;
        }
        let mut out = vec![0.0; self.grid.len()];
        for (slot, &w) in self.slots.iter().zip(&weight) {
            let w = w as f64;
            for (o, v) in out.iter_mut().zip(slot) {
                *o += w * v * v;
            }
        }
        out
    }

    /// Largest absolute entry over all components and points.
    pub fn max_abs(&self) -> f64 {
        self.slots
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Multisets of `k` axes out of `dim`, as derivative counts, sorted
/// lexicographically by their sorted axis sequence.
pub fn multi_indices(dim: usize, k: usize) -> Vec<MultiIndex> {
    fn rec(dim: usize, k: usize, start: usize, cur: &mut MultiIndex, out: &mut Vec<MultiIndex>) {
        if k == 0 {
            out.push(*cur);
            return;
        }
        for a in start..dim {
            cur[a] += 1;
            rec(dim, k - 1, a, cur, out);
            cur[a] -= 1;
        }
    }
    let mut out = Vec::new();
    rec(dim, k, 0, &mut [0; 3], &mut out);
    out
}

/// Derivative counts of ordered component `c` of a rank-`rank` array.
pub fn component_alpha(axes: usize, rank: usize, c: usize) -> MultiIndex {
    let mut alpha = [0; 3];
    let mut rem = c;
    for _ in 0..rank {
        alpha[rem % axes] += 1;
        rem /= axes;
    }
    alpha
}

/// Number of ordered index tuples with the given counts: `k! / Π α_a!`.
pub fn multiplicity(alpha: &MultiIndex) -> f64 {
    let fact = |n: usize| (1..=n).product::<usize>() as f64;
    fact(alpha.iter().sum()) / alpha.iter().map(|&a| fact(a)).product::<f64>()
}

pub fn order_of(alpha: &MultiIndex) -> usize {
    alpha.iter().sum()
}

/// Linear combination of partial derivatives, `Σ c_i ∂^{α_i}`.
pub type PartialCombo = Vec<(f64, MultiIndex)>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub linf: f64,
    pub sobolev: f64,
}

/// Differentiation and quadrature engine for one [`GridSpec`].
pub struct Grid {
    spec: GridSpec,
    backend: Backend,
}

enum Backend {
    Spectral(SpectralPlan),
    Fd(FdPlan),
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let backend = match spec.scheme {
            Scheme::FourierCollocation => Backend::Spectral(SpectralPlan::new(&spec)),
            Scheme::CentralFd { order } => Backend::Fd(FdPlan::new(&spec, order)),
        };
        Ok(Grid { spec, backend })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    fn check(&self, f: &ScalarField) -> Result<()> {
        if *f.grid() != self.spec {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `∂^order f` along `axis`.
    pub fn derivative(&self, f: &ScalarField, axis: usize, order: usize) -> Result<ScalarField> {
        self.check(f)?;
        if axis >= self.spec.dim {
            return Err(Error::AxisOutOfRange {
                axis,
                dim: self.spec.dim,
            });
        }
        if order == 0 || order > MAX_DERIVATIVE_ORDER {
            return Err(Error::OrderOutOfRange {
                order,
                max: MAX_DERIVATIVE_ORDER,
            });
        }
        let mut alpha = [0; 3];
        alpha[axis] = order;
        let out = self.partials(f.values(), &[alpha]).pop().unwrap();
        Ok(ScalarField::from_vec(self.spec, out))
    }

    pub fn laplacian(&self, f: &ScalarField) -> Result<ScalarField> {
        self.check(f)?;
        let out = self
            .combos(f.values(), &[laplacian_combo(self.spec.dim, [0; 3])])
            .pop()
            .unwrap();
        Ok(ScalarField::from_vec(self.spec, out))
    }

    /// All `dim^k` partial derivatives of order `k`.
    pub fn grad_array(&self, f: &ScalarField, k: usize) -> Result<TensorField> {
        self.check(f)?;
        if k == 0 || k > MAX_DERIVATIVE_ORDER {
            return Err(Error::OrderOutOfRange {
                order: k,
                max: MAX_DERIVATIVE_ORDER,
            });
        }
        Ok(self.grad_array_unchecked(f.values(), k))
    }

    pub(crate) fn grad_array_unchecked(&self, values: &[f64], k: usize) -> TensorField {
        let alphas = multi_indices(self.spec.dim, k);
        let slots = self.partials(values, &alphas);
        TensorField::symmetric(self.spec, self.spec.dim, k, &alphas, slots)
    }

    /// `h^dim Σ f`, summed in storage order.
    pub fn integrate(&self, f: &ScalarField) -> f64 {
        self.integrate_values(f.values())
    }

    pub(crate) fn integrate_values(&self, values: &[f64]) -> f64 {
        self.spec.cell_volume() * values.iter().sum::<f64>()
    }

    /// L², L∞ and `H^N` norms; the Sobolev sum runs over multi-indices
    /// `|α| ≤ N`, each multiset counted once.
    pub fn norms(&self, f: &ScalarField, big_n: usize) -> Result<Norms> {
        self.check(f)?;
        if big_n > MAX_DERIVATIVE_ORDER {
            return Err(Error::OrderOutOfRange {
                order: big_n,
                max: MAX_DERIVATIVE_ORDER,
            });
        }
        let sq = |v: &[f64]| self.integrate_values(&v.iter().map(|x| x * x).collect::<Vec<_>>());
        let l2sq = sq(f.values());
        let mut sob = l2sq;
        for k in 1..=big_n {
            let alphas = multi_indices(self.spec.dim, k);
            for d in self.partials(f.values(), &alphas) {
                sob += sq(&d);
            }
        }
        Ok(Norms {
            l2: l2sq.sqrt(),
            linf: f.linf(),
            sobolev: sob.sqrt(),
        })
    }

    /// Pointwise `|∇^k f|`, the Euclidean norm over all `dim^k` components.
    pub(crate) fn pointwise_grad_norm(&self, values: &[f64], k: usize) -> Vec<f64> {
        if k == 0 {
            return values.iter().map(|v| v.abs()).collect();
        }
        let alphas = multi_indices(self.spec.dim, k);
        let mut acc = vec![0.0; values.len()];
        for (alpha, d) in alphas.iter().zip(self.partials(values, &alphas)) {
            let w = multiplicity(alpha);
            for (a, v) in acc.iter_mut().zip(&d) {
                *a += w * v * v;
            }
        }
        acc.iter_mut().for_each(|a| *a = a.sqrt());
        acc
    }

    /// `max_x Σ_{k=lo}^{hi} |∇^k f|`.
    pub(crate) fn linf_grad_range(&self, values: &[f64], lo: usize, hi: usize) -> f64 {
        let mut acc = vec![0.0; values.len()];
        for k in lo..=hi {
            for (a, v) in acc.iter_mut().zip(self.pointwise_grad_norm(values, k)) {
                *a += v;
            }
        }
        acc.into_iter().fold(0.0, f64::max)
    }

    /// `‖∇^rank f‖_{H^N}`: the array components are ordered tuples, the
    /// Sobolev multi-indices are multisets.
    pub(crate) fn grad_array_sobolev(&self, values: &[f64], rank: usize, big_n: usize) -> f64 {
        let dim = self.spec.dim;
        let mut weights: Vec<(MultiIndex, f64)> = Vec::new();
        for order in 0..=big_n {
            for beta in multi_indices(dim, order) {
                for c in 0..dim.pow(rank as u32) {
                    let inner = component_alpha(dim, rank, c);
                    let gamma = [beta[0] + inner[0], beta[1] + inner[1], beta[2] + inner[2]];
                    match weights.iter_mut().find(|(g, _)| *g == gamma) {
                        Some((_, w)) => *w += 1.0,
                        None => weights.push((gamma, 1.0)),
                    }
                }
            }
        }
        let alphas: Vec<MultiIndex> = weights.iter().map(|(g, _)| *g).collect();
        let total: f64 = self
            .partials(values, &alphas)
            .iter()
            .zip(&weights)
            .map(|(d, (_, w))| w * self.integrate_values(&d.iter().map(|v| v * v).collect::<Vec<_>>()))
            .sum();
        total.sqrt()
    }

    /// `∂^α f` for each requested multi-index.
    pub(crate) fn partials(&self, values: &[f64], alphas: &[MultiIndex]) -> Vec<Vec<f64>> {
        let combos: Vec<PartialCombo> = alphas.iter().map(|a| vec![(1.0, *a)]).collect();
        self.combos(values, &combos)
    }

    /// Evaluates each linear combination of partials. Results are
    /// independent of thread count.
    pub(crate) fn combos(&self, values: &[f64], combos: &[PartialCombo]) -> Vec<Vec<f64>> {
        self.prepare(values).combos(combos)
    }

    /// Caches whatever per-field work the backend can reuse across many
    /// derivative requests (the forward transform, for the spectral backend).
    pub(crate) fn prepare<'a>(&'a self, values: &'a [f64]) -> Prepared<'a> {
        debug_assert_eq!(values.len(), self.spec.len());
        let data = match &self.backend {
            Backend::Spectral(plan) => PreparedData::Spectral(plan.forward(&self.spec, values)),
            Backend::Fd(_) => PreparedData::Fd(values),
        };
        Prepared { grid: self, data }
    }
}

pub(crate) struct Prepared<'a> {
    grid: &'a Grid,
    data: PreparedData<'a>,
}

enum PreparedData<'a> {
    Spectral(Vec<Complex64>),
    Fd(&'a [f64]),
}

impl Prepared<'_> {
    pub(crate) fn combos(&self, combos: &[PartialCombo]) -> Vec<Vec<f64>> {
        let spec = &self.grid.spec;
        for combo in combos {
            for (_, alpha) in combo {
                assert!(
                    alpha.iter().all(|&a| a <= MAX_AXIS_ORDER),
                    "per-axis derivative order exceeds {MAX_AXIS_ORDER}"
                );
                assert!(
                    alpha[spec.dim..].iter().all(|&a| a == 0),
                    "derivative along an absent axis"
                );
            }
        }
        match (&self.grid.backend, &self.data) {
            (Backend::Spectral(plan), PreparedData::Spectral(hat)) => plan.apply(spec, hat, combos),
            (Backend::Fd(plan), PreparedData::Fd(values)) => plan.apply(spec, values, combos),
            _ => unreachable!("prepared data matches its backend"),
        }
    }

    pub(crate) fn partials(&self, alphas: &[MultiIndex]) -> Vec<Vec<f64>> {
        let combos: Vec<PartialCombo> = alphas.iter().map(|a| vec![(1.0, *a)]).collect();
        self.combos(&combos)
    }

    pub(crate) fn laplacian_partials(&self, alphas: &[MultiIndex]) -> Vec<Vec<f64>> {
        let dim = self.grid.spec.dim;
        let combos: Vec<PartialCombo> = alphas.iter().map(|a| laplacian_combo(dim, *a)).collect();
        self.combos(&combos)
    }
}

fn laplacian_combo(dim: usize, base: MultiIndex) -> PartialCombo {
    (0..dim)
        .map(|a| {
            let mut alpha = base;
            alpha[a] += 2;
            (1.0, alpha)
        })
        .collect()
}

struct SpectralPlan {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// `factors[m][j] = (i k_j)^m`, with the Nyquist mode dropped for odd `m`.
    factors: Vec<Vec<Complex64>>,
}

impl SpectralPlan {
    fn new(spec: &GridSpec) -> Self {
        let n = spec.n;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let base = 2.0 * std::f64::consts::PI / spec.box_length;
        let factors = (0..=MAX_AXIS_ORDER)
            .map(|m| {
                (0..n)
                    .map(|j| {
                        if j == n / 2 && m % 2 == 1 {
                            return Complex64::new(0.0, 0.0);
                        }
                        let wave = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                        Complex64::new(0.0, base * wave).powu(m as u32)
                    })
                    .collect()
            })
            .collect();
        SpectralPlan { fwd, inv, factors }
    }

    fn transform(&self, spec: &GridSpec, buf: &mut [Complex64], inverse: bool) {
        let n = spec.n;
        let fft = if inverse { &self.inv } else { &self.fwd };
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        // last axis is contiguous
        fft.process_with_scratch(buf, &mut scratch);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for axis in 0..spec.dim.saturating_sub(1) {
            let stride = n.pow((spec.dim - 1 - axis) as u32);
            let outer = n.pow(axis as u32);
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * n * stride + inner;
                    for (j, l) in line.iter_mut().enumerate() {
                        *l = buf[base + j * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (j, l) in line.iter().enumerate() {
                        buf[base + j * stride] = *l;
                    }
                }
            }
        }
    }

    fn forward(&self, spec: &GridSpec, values: &[f64]) -> Vec<Complex64> {
        let mut hat: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(spec, &mut hat, false);
        hat
    }

    fn apply(&self, spec: &GridSpec, hat: &[Complex64], combos: &[PartialCombo]) -> Vec<Vec<f64>> {
        let norm = 1.0 / spec.len() as f64;
        combos
            .par_iter()
            .map(|combo| {
                let mut buf = hat.to_vec();
                for (flat, b) in buf.iter_mut().enumerate() {
                    let j = spec.unravel(flat);
                    let mut m = Complex64::new(0.0, 0.0);
                    for (c, alpha) in combo {
                        let mut term = Complex64::new(*c, 0.0);
                        for a in 0..spec.dim {
                            if alpha[a] > 0 {
                                term *= self.factors[alpha[a]][j[a]];
                            }
                        }
                        m += term;
                    }
                    *b *= m;
                }
                self.transform(spec, &mut buf, true);
                buf.iter().map(|z| z.re * norm).collect()
            })
            .collect()
    }
}

struct FdPlan {
    /// `weights[m]`: central stencil for `d^m/dx^m`, offsets `-s..=s`,
    /// already divided by `h^m`.
    weights: Vec<Vec<f64>>,
}

impl FdPlan {
    fn new(spec: &GridSpec, accuracy: usize) -> Self {
        let h = spec.spacing();
        let weights = (0..=MAX_AXIS_ORDER)
            .map(|m| {
                if m == 0 {
                    return vec![1.0];
                }
                let s = (m + 1) / 2 - 1 + accuracy / 2;
                let nodes: Vec<f64> = (-(s as i64)..=s as i64).map(|o| o as f64).collect();
                let c = fornberg_weights(0.0, &nodes, m);
                c[m].iter().map(|w| w / h.powi(m as i32)).collect()
            })
            .collect();
        FdPlan { weights }
    }

    fn apply_axis(&self, spec: &GridSpec, values: &[f64], axis: usize, m: usize) -> Vec<f64> {
        let n = spec.n;
        let w = &self.weights[m];
        let s = (w.len() / 2) as isize;
        let stride = n.pow((spec.dim - 1 - axis) as u32);
        let mut out = vec![0.0; values.len()];
        for (flat, o) in out.iter_mut().enumerate() {
            let i = (flat / stride) % n;
            let base = flat - i * stride;
            // Differences against the centre value annihilate constants exactly.
            let centre = if m == 0 { 0.0 } else { values[flat] };
            let mut acc = 0.0;
            for (k, wk) in w.iter().enumerate() {
                let j = (i as isize + k as isize - s).rem_euclid(n as isize) as usize;
                acc += wk * (values[base + j * stride] - centre);
            }
            *o = acc;
        }
        out
    }

    fn apply(&self, spec: &GridSpec, values: &[f64], combos: &[PartialCombo]) -> Vec<Vec<f64>> {
        combos
            .par_iter()
            .map(|combo| {
                let mut total = vec![0.0; values.len()];
                for (c, alpha) in combo {
                    let mut cur = values.to_vec();
                    for axis in 0..spec.dim {
                        if alpha[axis] > 0 {
                            cur = self.apply_axis(spec, &cur, axis, alpha[axis]);
                        }
                    }
                    for (t, v) in total.iter_mut().zip(&cur) {
                        *t += c * v;
                    }
                }
                total
            })
            .collect()
    }
}

/// Finite-difference weights on arbitrary nodes (Fornberg's recursion).
/// Returns `c[k][j]`, the weight of node `j` for the `k`-th derivative at `z`.
pub(crate) fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}
