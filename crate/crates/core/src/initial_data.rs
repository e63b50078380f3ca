//! Initial data families, the λ-rescaling, and the data-size parameters
//! `(ε̊, δ̊, δ̊*)` that set the expected degeneracy time and error scales.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec, ScalarField};
use crate::snapshot::write_snapshot;

/// Closed-form description of a data pair, enough to regenerate it on any grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DataFamily {
    /// `Ψ̊ = (amp_psi/λ) χ_r`, `Ψ̊₀ = amp_pi χ_{λr}` with the smooth bump
    /// `χ_r(x) = exp(1 - 1/(1 - |x-c|²/r²))` inside the ball, zero outside.
    Bump {
        /// Defaults to the box center.
        #[serde(default)]
        center: Option<Vec<f64>>,
        radius: f64,
        amp_psi: f64,
        amp_pi: f64,
        #[serde(default = "one")]
        lambda: f64,
    },
    /// Spatially constant data; the equation reduces to `∂ₜ²Ψ = 0`.
    Homogeneous { psi: f64, pi: f64 },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug)]
pub struct DataPair {
    pub psi0: ScalarField,
    pub pi0: ScalarField,
    /// Radius of the ball containing both supports; infinite for homogeneous data.
    pub support_radius: f64,
    pub family: DataFamily,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataSizeParams {
    pub eps_ring: f64,
    pub delta_ring: f64,
    pub delta_star: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub delta_star_positive: bool,
    pub delta_ring_positive: bool,
    /// `ε̊ ≤ ε`
    pub eps_ring_within_boot: bool,
    /// `ε^{3/2} ≤ ε̊`
    pub boot_power_within_eps_ring: bool,
    pub eps_over_delta_star: f64,
    pub eps_times_delta: f64,
}

/// Smooth compactly supported profile with peak value 1 at `center`.
/// Distances use the minimum periodic image.
pub fn bump_profile(spec: GridSpec, center: &[f64], radius: f64) -> ScalarField {
    let l = spec.box_length;
    ScalarField::from_fn(spec, |x| {
        let mut d2 = 0.0;
        for a in 0..spec.dim {
            let mut d = (x[a] - center[a]).rem_euclid(l);
            if d > 0.5 * l {
                d -= l;
            }
            d2 += d * d;
        }
        let s = d2 / (radius * radius);
        if s < 1.0 {
            (1.0 - 1.0 / (1.0 - s)).exp()
        } else {
            0.0
        }
    })
}

fn resolve_center(spec: &GridSpec, center: &Option<Vec<f64>>) -> Result<Vec<f64>> {
    match center {
        None => Ok(vec![0.5 * spec.box_length; spec.dim]),
        Some(c) if c.len() == spec.dim && c.iter().all(|v| v.is_finite()) => Ok(c.clone()),
        Some(c) => Err(Error::InvalidArgument(format!(
            "center has {} coordinates for a {}-D grid",
            c.len(),
            spec.dim
        ))),
    }
}

impl DataFamily {
    /// Samples the family on `spec`.
    pub fn build(&self, spec: GridSpec) -> Result<DataPair> {
        match self {
            DataFamily::Bump {
                center,
                radius,
                amp_psi,
                amp_pi,
                lambda,
            } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidArgument(format!("bump radius must be positive, got {radius}")));
                }
                if !(*lambda >= 1.0) {
                    return Err(Error::InvalidArgument(format!("lambda must be >= 1, got {lambda}")));
                }
                let support = radius * lambda;
                if 2.0 * support > spec.box_length {
                    return Err(Error::SupportExceedsBox {
                        radius: support,
                        box_length: spec.box_length,
                    });
                }
                let c = resolve_center(&spec, center)?;
                let chi = bump_profile(spec, &c, *radius);
                let amp = amp_psi / lambda;
                let psi0 = chi.map(|v| amp * v);
                let pi0 = bump_profile(spec, &c, support).map(|v| amp_pi * v);
                Ok(DataPair {
                    psi0,
                    pi0,
                    support_radius: support,
                    family: DataFamily::Bump {
                        center: Some(c),
                        radius: *radius,
                        amp_psi: *amp_psi,
                        amp_pi: *amp_pi,
                        lambda: *lambda,
                    },
                })
            }
            DataFamily::Homogeneous { psi, pi } => Ok(DataPair {
                psi0: ScalarField::constant(spec, *psi),
                pi0: ScalarField::constant(spec, *pi),
                support_radius: f64::INFINITY,
                family: self.clone(),
            }),
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            DataFamily::Bump { lambda, .. } => *lambda,
            DataFamily::Homogeneous { .. } => 1.0,
        }
    }

    pub fn with_lambda(&self, new_lambda: f64) -> DataFamily {
        let mut out = self.clone();
        if let DataFamily::Bump { lambda, .. } = &mut out {
            *lambda = new_lambda;
        }
        out
    }
}

/// Bump data `(amp_psi χ, amp_pi χ)` with a single radius.
pub fn make_bump(center: &[f64], radius: f64, amp_psi: f64, amp_pi: f64, spec: GridSpec) -> Result<DataPair> {
    DataFamily::Bump {
        center: Some(center.to_vec()),
        radius,
        amp_psi,
        amp_pi,
        lambda: 1.0,
    }
    .build(spec)
}

/// `(λ⁻¹Ψ̊(x), Ψ̊₀(λ⁻¹x))`. The dilated velocity is re-evaluated from the
/// closed form, so no interpolation enters.
pub fn rescale(data: &DataPair, lambda: f64) -> Result<DataPair> {
    if !(lambda >= 1.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 1, got {lambda}")));
    }
    let spec = *data.psi0.grid();
    match &data.family {
        DataFamily::Bump { lambda: current, .. } => data.family.with_lambda(current * lambda).build(spec),
        DataFamily::Homogeneous { psi, pi } => DataFamily::Homogeneous {
            psi: psi / lambda,
            pi: *pi,
        }
        .build(spec),
    }
}

/// `ε̊` is the left side of the data-size condition evaluated exactly:
/// `‖∇^{≤4}Ψ̊‖_∞ + ‖∇^{[1,3]}Ψ̊₀‖_∞ + ‖∇²Ψ̊‖_{H⁴} + ‖∇²Ψ̊₀‖_{H³}`,
/// where `|∇^{[a,b]}f| = Σ_{k=a}^{b} |∇^k f|` pointwise.
pub fn data_size_params(grid: &Grid, data: &DataPair) -> DataSizeParams {
    let psi = data.psi0.values();
    let pi = data.pi0.values();
    let eps_ring = grid.linf_grad_range(psi, 0, 4)
        + grid.linf_grad_range(pi, 1, 3)
        + grid.grad_array_sobolev(psi, 2, 4)
        + grid.grad_array_sobolev(pi, 2, 3);
    DataSizeParams {
        eps_ring,
        delta_ring: data.pi0.linf(),
        delta_star: (-data.pi0.min()).max(0.0),
    }
}

/// Compares the data-size parameters with a bootstrap size `eps_boot`.
/// Purely informative: the smallness conditions are qualitative.
pub fn admissibility_report(p: &DataSizeParams, eps_boot: f64) -> Result<AdmissibilityReport> {
    if !(eps_boot > 0.0) {
        return Err(Error::InvalidArgument(format!("eps_boot must be positive, got {eps_boot}")));
    }
    // relative slack absorbs rounding in eps^{3/2}
    let slack = 1.0 + 1e-12;
    Ok(AdmissibilityReport {
        delta_star_positive: p.delta_star > 0.0,
        delta_ring_positive: p.delta_ring > 0.0,
        eps_ring_within_boot: p.eps_ring <= eps_boot * slack,
        boot_power_within_eps_ring: eps_boot * eps_boot.sqrt() <= p.eps_ring * slack,
        eps_over_delta_star: p.eps_ring / p.delta_star,
        eps_times_delta: p.eps_ring * p.delta_ring,
    })
}

/// Writes `psi0` and `pi0` snapshots plus `data.json` with the family descriptor.
pub fn write_data_pair(dir: &Path, data: &DataPair, p: u32) -> Result<()> {
    write_snapshot(dir, "psi0", &data.psi0, 0.0, p)?;
    write_snapshot(dir, "pi0", &data.pi0, 0.0, p)?;
    std::fs::write(dir.join("data.json"), serde_json::to_string_pretty(&data.family)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dim: usize, n: usize, l: f64) -> GridSpec {
        GridSpec::fourier(dim, n, l).unwrap()
    }

    #[test]
    fn zero_bump_is_zero_data() {
        let s = spec(1, 64, 10.0);
        let d = make_bump(&[5.0], 2.0, 0.0, 0.0, s).unwrap();
        assert_eq!(d.psi0.linf(), 0.0);
        assert_eq!(d.pi0.linf(), 0.0);
        let grid = Grid::new(s).unwrap();
        assert_eq!(data_size_params(&grid, &d), DataSizeParams::default());
    }

    #[test]
    fn bump_peaks_at_center() {
        let s = spec(2, 32, 8.0);
        let d = make_bump(&[4.0, 4.0], 2.0, 0.3, -0.5, s).unwrap();
        let center = s.ravel([16, 16, 0]);
        assert_eq!(d.psi0.values()[center], 0.3);
        assert_eq!(d.pi0.values()[center], -0.5);
        assert_eq!(d.pi0.min(), -0.5);
        let grid = Grid::new(s).unwrap();
        let p = data_size_params(&grid, &d);
        assert_eq!(p.delta_star, 0.5);
        assert_eq!(p.delta_ring, 0.5);
        assert!(p.eps_ring > 0.0);
    }

    #[test]
    fn nonnegative_velocity_has_no_delta_star() {
        let s = spec(1, 64, 10.0);
        let d = make_bump(&[5.0], 2.0, 0.1, 0.4, s).unwrap();
        let grid = Grid::new(s).unwrap();
        assert_eq!(data_size_params(&grid, &d).delta_star, 0.0);
    }

    #[test]
    fn bump_outside_support_vanishes() {
        let s = spec(2, 32, 8.0);
        let d = make_bump(&[4.0, 4.0], 1.5, 1.0, 1.0, s).unwrap();
        for i in 0..s.len() {
            let x = s.coords(i);
            let r = ((x[0] - 4.0).powi(2) + (x[1] - 4.0).powi(2)).sqrt();
            if r >= 1.5 {
                assert!(d.psi0.values()[i].abs() <= 1e-14);
                assert!(d.pi0.values()[i].abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn oversized_support_is_rejected() {
        let s = spec(1, 64, 10.0);
        assert!(matches!(
            make_bump(&[5.0], 6.0, 0.1, -0.5, s),
            Err(Error::SupportExceedsBox { .. })
        ));
        let d = make_bump(&[5.0], 2.0, 0.1, -0.5, s).unwrap();
        assert!(matches!(rescale(&d, 4.0), Err(Error::SupportExceedsBox { .. })));
        assert!(rescale(&d, 0.5).is_err());
    }

    #[test]
    fn rescale_identity_and_bookkeeping() {
        let s = spec(1, 128, 40.0);
        let d = make_bump(&[20.0], 2.0, 0.2, -0.5, s).unwrap();
        let same = rescale(&d, 1.0).unwrap();
        assert_eq!(same.psi0, d.psi0);
        assert_eq!(same.pi0, d.pi0);

        let twice = rescale(&rescale(&d, 2.0).unwrap(), 4.0).unwrap();
        let once = rescale(&d, 8.0).unwrap();
        assert_eq!(twice.psi0, once.psi0);
        assert_eq!(twice.pi0, once.pi0);
        assert_eq!(once.support_radius, 16.0);
        let center = s.ravel([64, 0, 0]);
        assert_eq!(once.psi0.values()[center], 0.2 / 8.0);
    }

    #[test]
    fn delta_star_is_scale_invariant_and_eps_decreases() {
        let s = spec(1, 512, 44.0);
        let grid = Grid::new(s).unwrap();
        let base = make_bump(&[22.0], 2.0, 0.05, -0.5, s).unwrap();
        let mut last = f64::INFINITY;
        for lambda in [1.0, 2.0, 4.0, 8.0] {
            let p = data_size_params(&grid, &rescale(&base, lambda).unwrap());
            assert_eq!(p.delta_star, 0.5);
            assert!(p.eps_ring <= last, "lambda {lambda}: {} > {last}", p.eps_ring);
            last = p.eps_ring;
        }
    }

    #[test]
    fn params_invariant_under_periodic_shift() {
        let s = spec(2, 32, 10.0);
        let grid = Grid::new(s).unwrap();
        let h = s.spacing();
        let a = data_size_params(&grid, &make_bump(&[5.0, 5.0], 2.5, 0.1, -0.5, s).unwrap());
        let b = data_size_params(&grid, &make_bump(&[5.0 + 7.0 * h, 5.0 - 11.0 * h], 2.5, 0.1, -0.5, s).unwrap());
        assert_eq!(a.delta_star, b.delta_star);
        assert!((a.eps_ring - b.eps_ring).abs() <= 1e-10 * a.eps_ring);
    }

    #[test]
    fn admissibility_examples() {
        let r = admissibility_report(&DataSizeParams::default(), 1e-2).unwrap();
        assert!(!r.delta_star_positive);
        assert!(!r.delta_ring_positive);

        let p = DataSizeParams {
            eps_ring: 1e-3,
            delta_ring: 0.5,
            delta_star: 0.5,
        };
        let r = admissibility_report(&p, 1e-2).unwrap();
        assert!(r.eps_ring_within_boot);
        assert!(r.boot_power_within_eps_ring);
        assert!((r.eps_over_delta_star - 2e-3).abs() < 1e-15);

        let r = admissibility_report(&DataSizeParams { eps_ring: 0.5, ..p }, 1e-2).unwrap();
        assert!(!r.eps_ring_within_boot);
        assert!(admissibility_report(&p, 0.0).is_err());
    }
}
