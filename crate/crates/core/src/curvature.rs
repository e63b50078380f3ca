//! Geometry of `g = −dt² + (1+Ψ)^{−P} Σ (dxᵃ)²`: second fundamental form,
//! Christoffel symbols of the slices, the Gauss/Codazzi blocks of the
//! spacetime Riemann tensor and the Kretschmann scalar.
//!
//! Indices always run over three spatial axes; a lower-dimensional state is
//! read as a solution on ℝ³ that is constant along the missing axes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{degeneracy_locus, State};
use crate::grid::{Grid, GridSpec, MultiIndex, ScalarField, TensorField};

pub type Tensor2 = [[f64; 3]; 3];
pub type Tensor3 = [[[f64; 3]; 3]; 3];
pub type Tensor4 = [[[[f64; 3]; 3]; 3]; 3];

/// `|Π|` below which the leading ratio is not evaluated.
pub const PI_MASK: f64 = 1e-6;

/// Blowup coefficient of `K (1+Ψ)⁴ / Π⁴`: 15/2 for `P = 1`, 60 for `P = 2`.
pub fn leading_coefficient(p: u32) -> f64 {
    if p == 1 {
        7.5
    } else {
        60.0
    }
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

/// Values at one point of `Ψ`, `Π` and the spatial derivatives the
/// curvature depends on.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointJet {
    pub p: u32,
    pub psi: f64,
    pub pi: f64,
    pub dpsi: [f64; 3],
    pub dpi: [f64; 3],
    pub ddpsi: Tensor2,
}

impl PointJet {
    pub fn lap_psi(&self) -> f64 {
        self.ddpsi[0][0] + self.ddpsi[1][1] + self.ddpsi[2][2]
    }

    /// `∂ₜ²Ψ = (1+Ψ)^P ΔΨ`
    pub fn psi_tt(&self) -> f64 {
        (1.0 + self.psi).powi(self.p as i32) * self.lap_psi()
    }

    /// `κ = (P/2) Π / (1+Ψ)`, so that `k^i_j = κ δ^i_j`.
    pub fn kappa(&self) -> f64 {
        0.5 * self.p as f64 * self.pi / (1.0 + self.psi)
    }

    /// `∂_a κ`
    pub fn dkappa(&self) -> [f64; 3] {
        let w = 1.0 + self.psi;
        let h = 0.5 * self.p as f64;
        std::array::from_fn(|a| h * (self.dpi[a] / w - self.pi * self.dpsi[a] / (w * w)))
    }

    /// `∂_a φ` with `ḡ = e^{2φ} δ`, `φ = −(P/2) ln(1+Ψ)`.
    pub fn dphi(&self) -> [f64; 3] {
        let w = 1.0 + self.psi;
        std::array::from_fn(|a| -0.5 * self.p as f64 * self.dpsi[a] / w)
    }

    /// `∂_a ∂_b φ`
    pub fn ddphi(&self) -> Tensor2 {
        let w = 1.0 + self.psi;
        let h = -0.5 * self.p as f64;
        std::array::from_fn(|a| {
            std::array::from_fn(|b| h * (self.ddpsi[a][b] / w - self.dpsi[a] * self.dpsi[b] / (w * w)))
        })
    }

    /// `Γ^i_{jk}` stored as `[i][j][k]`.
    pub fn christoffel(&self) -> Tensor3 {
        let d = self.dphi();
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                std::array::from_fn(|k| delta(i, k) * d[j] + delta(i, j) * d[k] - delta(j, k) * d[i])
            })
        })
    }
}

/// The blocks of the spacetime Riemann tensor at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointBlocks {
    pub kappa: f64,
    pub christoffel: Tensor3,
    /// `Riem(g)_{ab}^{cd}` as `[a][b][c][d]`.
    pub spatial: Tensor4,
    /// `Riem(g)_{a0}^{c0}` as `[a][c]`.
    pub time: Tensor2,
    /// `Riem(g)_{0b}^{cd}` as `[b][c][d]`.
    pub codazzi: Tensor3,
    /// `Riem(ḡ)_{ab}^{cd}`
    pub delta_spatial: Tensor4,
    /// `−(1+Ψ)^{−1} ∂ₜ((1+Ψ) k^c_a)`
    pub delta_time: Tensor2,
}

impl PointBlocks {
    /// `Riem(g)_{abcd}` on the slice, all indices lowered with `ḡ`.
    pub fn spatial_lowered(&self, jet: &PointJet) -> Tensor4 {
        let g = (1.0 + jet.psi).powi(-(jet.p as i32));
        let s = &self.spatial;
        std::array::from_fn(|a| {
            std::array::from_fn(|b| std::array::from_fn(|c| std::array::from_fn(|d| g * g * s[a][b][c][d])))
        })
    }
}

/// Gauss, time and Codazzi blocks at one point.
pub fn point_blocks(jet: &PointJet) -> PointBlocks {
    let w = 1.0 + jet.psi;
    let pw = w.powi(jet.p as i32);
    let kappa = jet.kappa();
    let gamma = jet.christoffel();
    let h = jet.ddphi();
    // ∂_l Γ^i_{jk} as [l][i][j][k]
    let dgamma: Tensor4 = std::array::from_fn(|l| {
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                std::array::from_fn(|k| delta(i, k) * h[l][j] + delta(i, j) * h[l][k] - delta(j, k) * h[l][i])
            })
        })
    });
    // R^e_{bcd} = ∂_c Γ^e_{db} − ∂_d Γ^e_{cb} + Γ^e_{cm} Γ^m_{db} − Γ^e_{dm} Γ^m_{cb}
    let mut riem_up = [[[[0.0; 3]; 3]; 3]; 3];
    for e in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                for d in 0..3 {
                    let mut v = dgamma[c][e][d][b] - dgamma[d][e][c][b];
                    for m in 0..3 {
                        v += gamma[e][c][m] * gamma[m][d][b] - gamma[e][d][m] * gamma[m][c][b];
                    }
                    riem_up[e][b][c][d] = v;
                }
            }
        }
    }
    // Lowering the first index and raising the last two with the conformal
    // metric leaves one factor (1+Ψ)^P.
    let delta_spatial: Tensor4 = std::array::from_fn(|a| {
        std::array::from_fn(|b| std::array::from_fn(|c| std::array::from_fn(|d| pw * riem_up[a][b][c][d])))
    });
    let spatial: Tensor4 = std::array::from_fn(|a| {
        std::array::from_fn(|b| {
            std::array::from_fn(|c| {
                std::array::from_fn(|d| {
                    kappa * kappa * (delta(c, a) * delta(d, b) - delta(d, a) * delta(c, b)) + delta_spatial[a][b][c][d]
                })
            })
        })
    });

    let dt_ln = jet.pi / w;
    let dtime = -0.5 * jet.p as f64 * jet.psi_tt() / w;
    let delta_time: Tensor2 = std::array::from_fn(|a| std::array::from_fn(|c| dtime * delta(a, c)));
    let time: Tensor2 = std::array::from_fn(|a| {
        std::array::from_fn(|c| (dt_ln * kappa + kappa * kappa) * delta(a, c) + delta_time[a][c])
    });

    let dk = jet.dkappa();
    let k = |i: usize, j: usize| kappa * delta(i, j);
    let mut codazzi = [[[0.0; 3]; 3]; 3];
    for b in 0..3 {
        for c in 0..3 {
            for d in 0..3 {
                // ḡ^{-1} = (1+Ψ)^P δ, so each contraction over e picks e = c or e = d
                let mut v = pw * (dk[c] * delta(d, b) - dk[d] * delta(c, b));
                for f in 0..3 {
                    v += pw * (gamma[d][c][f] * k(f, b) - gamma[f][c][b] * k(d, f));
                    v += pw * (-gamma[c][d][f] * k(f, b) + gamma[f][d][b] * k(c, f));
                }
                codazzi[b][c][d] = v;
            }
        }
    }

    PointBlocks {
        kappa,
        christoffel: gamma,
        spatial,
        time,
        codazzi,
        delta_spatial,
        delta_time,
    }
}

/// `R_{ab}^{cd} R_{cd}^{ab} + 4 R_{a0}^{c0} R_{c0}^{a0}
///  − 4 g_{cc'} g_{dd'} g^{bb'} R_{0b}^{cd} R_{0b'}^{c'd'}`.
pub fn point_kretschmann(jet: &PointJet, b: &PointBlocks) -> f64 {
    let mut ss = 0.0;
    let mut tt = 0.0;
    let mut cc = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            tt += b.time[i][j] * b.time[j][i];
            for k in 0..3 {
                cc += b.codazzi[i][j][k] * b.codazzi[i][j][k];
                for l in 0..3 {
                    ss += b.spatial[i][j][k][l] * b.spatial[k][l][i][j];
                }
            }
        }
    }
    let g = (1.0 + jet.psi).powi(-(jet.p as i32));
    ss + 4.0 * tt - 4.0 * g * cc
}

fn norm4(t: &Tensor4) -> f64 {
    t.iter().flatten().flatten().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn norm3(t: &Tensor3) -> f64 {
    t.iter().flatten().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn norm2(t: &Tensor2) -> f64 {
    t.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Clone, Debug)]
pub struct GeometrySnapshot {
    /// `(1+Ψ)^{−P}`
    pub conformal_factor: ScalarField,
    pub kappa: ScalarField,
    /// `Γ^i_{jk}` over three axes, components ordered `(i, j, k)`.
    pub christoffels: TensorField,
    pub psi_tt: ScalarField,
    jets: Vec<PointJet>,
}

impl GeometrySnapshot {
    pub fn jet(&self, flat: usize) -> &PointJet {
        &self.jets[flat]
    }
}

fn jets(grid: &Grid, s: &State) -> Result<Vec<PointJet>> {
    let spec = grid.spec();
    if s.psi.grid() != spec || s.pi.grid() != spec {
        return Err(Error::GridMismatch);
    }
    let m = s.min_one_plus_psi();
    if !(m > 0.0) {
        return Err(Error::Degenerate { min_one_plus_psi: m });
    }
    let dim = spec.dim;
    let mut first: Vec<MultiIndex> = Vec::new();
    let mut second: Vec<(usize, usize, MultiIndex)> = Vec::new();
    for a in 0..dim {
        let mut e = [0; 3];
        e[a] = 1;
        first.push(e);
        for b in a..dim {
            let mut e2 = [0; 3];
            e2[a] += 1;
            e2[b] += 1;
            second.push((a, b, e2));
        }
    }
    let prep_psi = grid.prepare(s.psi.values());
    let mut req = first.clone();
    req.extend(second.iter().map(|x| x.2));
    let dpsi = prep_psi.partials(&req);
    let dpi = grid.prepare(s.pi.values()).partials(&first);
    let psi = s.psi.values();
    let pi = s.pi.values();
    Ok((0..psi.len())
        .into_par_iter()
        .map(|i| {
            let mut jet = PointJet {
                p: s.p,
                psi: psi[i],
                pi: pi[i],
                ..Default::default()
            };
            for a in 0..dim {
                jet.dpsi[a] = dpsi[a][i];
                jet.dpi[a] = dpi[a][i];
            }
            for (slot, (a, b, _)) in second.iter().enumerate() {
                let v = dpsi[dim + slot][i];
                jet.ddpsi[*a][*b] = v;
                jet.ddpsi[*b][*a] = v;
            }
            jet
        })
        .collect())
}

pub fn geometry(grid: &Grid, s: &State) -> Result<GeometrySnapshot> {
    let jets = jets(grid, s)?;
    let spec: GridSpec = *grid.spec();
    let field = |f: &dyn Fn(&PointJet) -> f64| ScalarField::new(spec, jets.iter().map(f).collect());
    let gammas: Vec<Tensor3> = jets.iter().map(|j| j.christoffel()).collect();
    let components = (0..27)
        .map(|c| {
            let (i, j, k) = (c / 9, (c / 3) % 3, c % 3);
            gammas.iter().map(|g| g[i][j][k]).collect()
        })
        .collect();
    Ok(GeometrySnapshot {
        conformal_factor: field(&|j| (1.0 + j.psi).powi(-(j.p as i32)))?,
        kappa: field(&|j| j.kappa())?,
        christoffels: TensorField::from_components(spec, 3, 3, components)?,
        psi_tt: field(&|j| j.psi_tt())?,
        jets,
    })
}

/// Pointwise access to the Riemann blocks; each point is evaluated on
/// demand so the full tensors are never stored.
#[derive(Clone, Debug)]
pub struct RiemannBlocks {
    spec: GridSpec,
    jets: Vec<PointJet>,
}

impl RiemannBlocks {
    pub fn len(&self) -> usize {
        self.jets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jets.is_empty()
    }

    pub fn jet(&self, flat: usize) -> &PointJet {
        &self.jets[flat]
    }

    pub fn at(&self, flat: usize) -> PointBlocks {
        point_blocks(&self.jets[flat])
    }
}

pub fn riemann_blocks(geo: &GeometrySnapshot, s: &State) -> Result<RiemannBlocks> {
    let spec = *geo.kappa.grid();
    if *s.psi.grid() != spec {
        return Err(Error::GridMismatch);
    }
    Ok(RiemannBlocks {
        spec,
        jets: geo.jets.clone(),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorMags {
    /// `max |Δ_{ab}^{cd}| (1+Ψ)`
    pub spatial: f64,
    /// `max |Δ_{a0}^{c0}|`
    pub time: f64,
    /// `max |Δ_{0b}^{cd}| (1+Ψ)`
    pub codazzi: f64,
}

#[derive(Clone, Debug)]
pub struct CurvatureReport {
    pub kretschmann: ScalarField,
    /// `K (1+Ψ)⁴ / Π⁴`, NaN where `|Π| ≤ PI_MASK`.
    pub leading_ratio: ScalarField,
    pub error_mags: ErrorMags,
    /// `max |Γ| (1+Ψ)`
    pub gamma_weighted: f64,
    /// `max |∂κ| (1+Ψ)²`
    pub dkappa_weighted: f64,
}

struct PointSummary {
    k: f64,
    ratio: f64,
    mags: [f64; 5],
}

fn summarize_point(jet: &PointJet) -> PointSummary {
    let b = point_blocks(jet);
    let k = point_kretschmann(jet, &b);
    let w = 1.0 + jet.psi;
    let ratio = if jet.pi.abs() > PI_MASK {
        k * w.powi(4) / jet.pi.powi(4)
    } else {
        f64::NAN
    };
    let dk = jet.dkappa();
    let dk_norm = dk.iter().map(|v| v * v).sum::<f64>().sqrt();
    PointSummary {
        k,
        ratio,
        mags: [
            norm4(&b.delta_spatial) * w,
            norm2(&b.delta_time),
            norm3(&b.codazzi) * w,
            norm3(&b.christoffel) * w,
            dk_norm * w * w,
        ],
    }
}

pub fn kretschmann(blocks: &RiemannBlocks, s: &State) -> Result<CurvatureReport> {
    if *s.psi.grid() != blocks.spec {
        return Err(Error::GridMismatch);
    }
    let points: Vec<PointSummary> = blocks.jets.par_iter().map(summarize_point).collect();
    let max = |i: usize| points.iter().map(|p| p.mags[i]).fold(0.0, f64::max);
    Ok(CurvatureReport {
        kretschmann: ScalarField::new(blocks.spec, points.iter().map(|p| p.k).collect())?,
        leading_ratio: ScalarField::new(blocks.spec, points.iter().map(|p| p.ratio).collect())?,
        error_mags: ErrorMags {
            spatial: max(0),
            time: max(1),
            codazzi: max(2),
        },
        gamma_weighted: max(3),
        dkappa_weighted: max(4),
    })
}

/// Scalar digest of the curvature at one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSummary {
    pub k_max: f64,
    /// Mean of `leading_ratio` over the degeneracy locus.
    pub locus_ratio_mean: f64,
    /// Mean of `|leading_ratio − c_P|` over the locus.
    pub locus_ratio_err: f64,
    pub locus_points: usize,
    pub error_mags: ErrorMags,
    pub gamma_weighted: f64,
    pub dkappa_weighted: f64,
}

impl CurvatureSummary {
    pub const CSV_COLUMNS: [&'static str; 8] = [
        "K_max",
        "locus_ratio_mean",
        "locus_ratio_err",
        "err_spatial",
        "err_time",
        "err_codazzi",
        "gamma_weighted",
        "dkappa_weighted",
    ];

    pub fn csv_values(&self) -> [f64; 8] {
        [
            self.k_max,
            self.locus_ratio_mean,
            self.locus_ratio_err,
            self.error_mags.spatial,
            self.error_mags.time,
            self.error_mags.codazzi,
            self.gamma_weighted,
            self.dkappa_weighted,
        ]
    }
}

pub fn summarize(report: &CurvatureReport, s: &State, locus_tol: f64) -> CurvatureSummary {
    let c = leading_coefficient(s.p);
    let ratios: Vec<f64> = degeneracy_locus(s, locus_tol)
        .into_iter()
        .map(|i| report.leading_ratio.values()[i])
        .filter(|r| r.is_finite())
        .collect();
    let count = ratios.len();
    let (mean, err) = if count == 0 {
        (f64::NAN, f64::NAN)
    } else {
        (
            ratios.iter().sum::<f64>() / count as f64,
            ratios.iter().map(|r| (r - c).abs()).sum::<f64>() / count as f64,
        )
    };
    CurvatureSummary {
        k_max: report.kretschmann.values().iter().cloned().fold(0.0, f64::max),
        locus_ratio_mean: mean,
        locus_ratio_err: err,
        locus_points: count,
        error_mags: report.error_mags.clone(),
        gamma_weighted: report.gamma_weighted,
        dkappa_weighted: report.dkappa_weighted,
    }
}

/// [`geometry`], [`riemann_blocks`], [`kretschmann`] and [`summarize`] in one call.
pub fn summary(grid: &Grid, s: &State, locus_tol: f64) -> Result<CurvatureSummary> {
    let geo = geometry(grid, s)?;
    let blocks = riemann_blocks(&geo, s)?;
    Ok(summarize(&kretschmann(&blocks, s)?, s, locus_tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn homogeneous_jet(p: u32, psi: f64, pi: f64) -> PointJet {
        PointJet {
            p,
            psi,
            pi,
            ..Default::default()
        }
    }

    #[test]
    fn minkowski_is_flat() {
        for p in [1, 2] {
            let j = homogeneous_jet(p, 0.0, 0.0);
            let b = point_blocks(&j);
            assert_eq!(norm4(&b.spatial), 0.0);
            assert_eq!(norm2(&b.time), 0.0);
            assert_eq!(norm3(&b.codazzi), 0.0);
            assert_eq!(point_kretschmann(&j, &b), 0.0);
        }
    }

    #[test]
    fn homogeneous_time_blocks() {
        let j = homogeneous_jet(1, -0.3, -0.5);
        let b = point_blocks(&j);
        let k = b.kappa;
        assert!((k - (-0.5 / (2.0 * 0.7))).abs() < 1e-15);
        for a in 0..3 {
            for c in 0..3 {
                assert!((b.time[a][c] - 3.0 * k * k * delta(a, c)).abs() < 1e-15);
                assert_eq!(b.delta_time[a][c], 0.0);
            }
        }
        let j = homogeneous_jet(2, -0.3, -0.5);
        let b = point_blocks(&j);
        let k = b.kappa;
        assert!((k - (-0.5 / 0.7)).abs() < 1e-15);
        assert!((b.time[1][1] - 2.0 * k * k).abs() < 1e-14);
    }

    #[test]
    fn homogeneous_coefficients() {
        for (p, c) in [(1, 7.5), (2, 60.0)] {
            for (psi, pi) in [(0.0, -0.5), (-0.9, -0.5), (-0.99, -0.3), (0.2, 1.0)] {
                let j = homogeneous_jet(p, psi, pi);
                let k = point_kretschmann(&j, &point_blocks(&j));
                let ratio = k * (1.0 + psi).powi(4) / pi.powi(4);
                assert!((ratio - c).abs() < 1e-10 * c, "P={p} psi={psi}: {ratio}");
            }
        }
    }

    #[test]
    fn christoffel_is_symmetric_in_lower_indices() {
        let j = PointJet {
            p: 2,
            psi: -0.2,
            pi: 0.1,
            dpsi: [0.3, -0.1, 0.2],
            ..Default::default()
        };
        let g = j.christoffel();
        for i in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    assert_eq!(g[i][a][b], g[i][b][a]);
                }
            }
        }
    }

    #[test]
    fn leading_coefficients() {
        assert_eq!(leading_coefficient(1), 7.5);
        assert_eq!(leading_coefficient(2), 60.0);
    }
}
