//! Eigenvalue computations: section modes, λ(θ̇, I), μ(s), Hardy constants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{
    assemble_bounded, assemble_cross_section, assemble_laplace_1d, assemble_selfsim, assemble_straightened,
    assemble_weighted_mass, selfsim_core_spacing, DiscreteForm, Grid1D, Grid2D, Weight,
};
use crate::error::{Error, Result};
use crate::geometry::{TubeSpec, TwistProfile};
use crate::linalg::{self, EigOptions};
use crate::report::fmt17;

/// Raw values in [-CLAMP_BAND, 0) are reported as zero.
pub const CLAMP_BAND: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct EigResult {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

/// Smallest `k` eigenpairs of `(A, M)` for a discrete form.
pub fn smallest_eigenpairs(form: &DiscreteForm, k: usize, opts: &EigOptions) -> Result<Vec<EigResult>> {
    smallest_pencil(&form.stiffness, &form.mass, k, opts)
}

/// Smallest `k` eigenpairs of a pencil `(A, B)` with diagonal `B`.
pub fn smallest_pencil(
    a: &linalg::CsrMatrix,
    b: &[f64],
    k: usize,
    opts: &EigOptions,
) -> Result<Vec<EigResult>> {
    let pairs = linalg::smallest_eigenpairs(a, b, k, opts)?;
    Ok(pairs
        .into_iter()
        .map(|p| EigResult {
            value: p.value,
            vector: p.vector,
            residual: p.residual,
        })
        .collect())
}

/// First two Dirichlet modes of the section.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub e1: f64,
    pub e2: f64,
    /// 𝒥₁, unit mass norm, positive.
    pub j1: Vec<f64>,
    /// ∂_τ𝒥₁.
    pub dtau_j1: Vec<f64>,
    pub residuals: [f64; 2],
}

impl ModeSet {
    /// ‖∂_τ𝒥₁‖² in the section mass norm.
    pub fn dtau_norm_sq(&self, section: &Grid2D) -> f64 {
        self.dtau_j1
            .iter()
            .zip(section.mass())
            .map(|(v, m)| v * v * m)
            .sum()
    }

    /// (𝒥₁, ∂_τ𝒥₁).
    pub fn orthogonality(&self, section: &Grid2D) -> f64 {
        self.j1
            .iter()
            .zip(&self.dtau_j1)
            .zip(section.mass())
            .map(|((a, b), m)| a * b * m)
            .sum()
    }
}

pub fn compute_modes(section: &Grid2D, opts: &EigOptions) -> Result<ModeSet> {
    let form = assemble_cross_section(section)?;
    let mut pairs = smallest_eigenpairs(&form, 2, opts)?;
    let second = pairs.pop().expect("two pairs");
    let mut first = pairs.pop().expect("two pairs");
    let mean: f64 = first.vector.iter().zip(section.mass()).map(|(v, m)| v * m).sum();
    if mean < 0.0 {
        first.vector.iter_mut().for_each(|v| *v = -*v);
    }
    let dtau_j1 = section.apply_tau(&first.vector);
    Ok(ModeSet {
        e1: first.value,
        e2: second.value,
        j1: first.vector,
        dtau_j1,
        residuals: [first.residual, second.residual],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaResult {
    /// Clamped to zero inside the round-off band.
    pub value: f64,
    pub raw: f64,
    pub residual: f64,
}

/// λ(θ̇, I): bottom of `Q_θ^I - E₁` on I × ω, no condition at the ends of I.
pub fn lambda_bounded(
    tube: &TubeSpec,
    interval: (f64, f64),
    cells: usize,
    section: &Grid2D,
    modes: &ModeSet,
    opts: &EigOptions,
) -> Result<LambdaResult> {
    if cells < 4 {
        return Err(Error::DegenerateInterval { cells });
    }
    let axial = Grid1D::uniform(interval.0, interval.1, cells)?;
    let form = assemble_bounded(tube, interval, &axial, section)?.shifted(modes.e1);
    let pair = smallest_eigenpairs(&form, 1, opts)?.remove(0);
    let value = if (-CLAMP_BAND..0.0).contains(&pair.value) {
        0.0
    } else {
        pair.value
    };
    Ok(LambdaResult {
        value,
        raw: pair.value,
        residual: pair.residual,
    })
}

/// Axial grids for tube problems: fine core around the twist, geometric
/// transition, uniform far field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxialGridPolicy {
    pub half_length: f64,
    pub h_coarse: f64,
    /// Fine spacing on the twist support in physical variables.
    pub h_fine: f64,
    pub ratio: f64,
    /// Core half-width as a multiple of the support radius.
    pub core_factor: f64,
}

impl AxialGridPolicy {
    pub fn new(half_length: f64, h_coarse: f64, h_fine: f64) -> Self {
        AxialGridPolicy {
            half_length,
            h_coarse,
            h_fine,
            ratio: 1.15,
            core_factor: 1.25,
        }
    }

    fn build(&self, core: f64, h_fine: f64) -> Result<Grid1D> {
        if core <= 0.0 || h_fine >= self.h_coarse {
            let cells = 2 * (self.half_length / self.h_coarse).ceil() as usize;
            return Grid1D::uniform(-self.half_length, self.half_length, cells);
        }
        Grid1D::graded(self.half_length, core, h_fine, self.h_coarse, self.ratio)
    }

    /// Grid in physical variables x₁.
    pub fn physical(&self, twist: &TwistProfile) -> Result<Grid1D> {
        self.build(self.core_factor * twist.support_radius(), self.h_fine)
    }

    /// Grid in self-similar variables at time `s`: the core shrinks with the
    /// support of σ_s and its spacing meets the resolution requirement.
    pub fn selfsim(&self, twist: &TwistProfile, s: f64) -> Result<Grid1D> {
        let core = self.core_factor * twist.support_radius() * (-0.5 * s).exp();
        let h = selfsim_core_spacing(twist, s).unwrap_or(self.h_coarse);
        self.build(core, h.min(self.h_fine * (-0.5 * s).exp()))
    }

    pub fn doubled(&self) -> Self {
        AxialGridPolicy {
            half_length: 2.0 * self.half_length,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSample {
    pub s: f64,
    pub mu: f64,
    pub residual: f64,
    /// max |v| on the slice y₁ = 0 over max |v|.
    pub node_amp: f64,
    pub under_resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCurve {
    pub samples: Vec<SpectralSample>,
}

impl SpectralCurve {
    pub fn csv(&self) -> String {
        let mut out = String::from("s,mu,residual,node_amp\n");
        for p in &self.samples {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt17(p.s),
                fmt17(p.mu),
                fmt17(p.residual),
                fmt17(p.node_amp)
            ));
        }
        out
    }

    /// Piecewise-linear μ̂, held constant outside the sampled range.
    pub fn interpolate(&self, s: f64) -> f64 {
        let p = &self.samples;
        if s <= p[0].s {
            return p[0].mu;
        }
        for w in p.windows(2) {
            if s <= w[1].s {
                let t = (s - w[0].s) / (w[1].s - w[0].s);
                return w[0].mu + t * (w[1].mu - w[0].mu);
            }
        }
        p[p.len() - 1].mu
    }

    /// ∫₀ˢ μ̂ by the trapezoidal rule on the interpolant.
    pub fn integral(&self, s: f64) -> f64 {
        let mut knots: Vec<f64> = self.samples.iter().map(|p| p.s).filter(|&x| x > 0.0 && x < s).collect();
        knots.insert(0, 0.0);
        knots.push(s);
        knots
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.interpolate(w[0]) + self.interpolate(w[1])))
            .sum()
    }
}

/// μ(s): bottom of the self-similar form `J_s^{(0)}`, for each `s`.
pub fn mu_curve(
    tube: &TubeSpec,
    s_values: &[f64],
    policy: &AxialGridPolicy,
    section: &Grid2D,
    modes: &ModeSet,
    opts: &EigOptions,
) -> Result<SpectralCurve> {
    let tube = TubeSpec {
        half_length: policy.half_length,
        ..tube.clone()
    };
    let samples: Result<Vec<SpectralSample>> = s_values
        .par_iter()
        .map(|&s| {
            let axial = policy.selfsim(&tube.twist, s)?;
            let form = assemble_selfsim(&tube, s, &axial, section, modes.e1)?;
            let pair = smallest_eigenpairs(&form, 1, opts)?.remove(0);
            Ok(SpectralSample {
                s,
                mu: pair.value,
                residual: pair.residual,
                node_amp: node_amplitude(&form, &pair.vector),
                under_resolved: form.meta.under_resolved,
            })
        })
        .collect();
    Ok(SpectralCurve { samples: samples? })
}

/// max |v| on the axial slice nearest to zero, over max |v|.
pub fn node_amplitude(form: &DiscreteForm, v: &[f64]) -> f64 {
    let lay = &form.layout;
    let j0 = (0..lay.axial.len())
        .min_by(|&a, &b| lay.axial[a].abs().total_cmp(&lay.axial[b].abs()))
        .expect("nonempty layout");
    let n2 = lay.n_section();
    let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let at0 = v[j0 * n2..(j0 + 1) * n2].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    at0 / sup
}

/// Bottom of the pencil `(A - E₁M, M_ρ²)` on (-L, L) × ω with Dirichlet ends.
pub fn hardy_variational(
    tube: &TubeSpec,
    axial: &Grid1D,
    section: &Grid2D,
    modes: &ModeSet,
    opts: &EigOptions,
) -> Result<EigResult> {
    let form = assemble_straightened(tube, axial, section)?.shifted(modes.e1);
    let rho2 = assemble_weighted_mass(&form.layout, Weight::RhoSq, 1.0)?;
    Ok(smallest_pencil(&form.stiffness, &rho2, 1, opts)?.remove(0))
}

/// Constants produced by the Hardy certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardyCertificate {
    pub eps: f64,
    /// ε/32, the constant for the weight centred at the middle of I.
    pub c_h_prime: f64,
    pub offset_factor: f64,
    /// c_H' times the offset factor, weight centred at 0.
    pub c_h: f64,
    /// ε/8.
    pub c_s: f64,
}

/// Safety factor applied to the admissible ε.
pub const CERT_SAFETY: f64 = 0.99;

/// min over x of (1 + x²)/(1 + (x - x0)²).
pub fn offset_factor(x0: f64) -> f64 {
    let b = 2.0 + x0 * x0;
    // smaller root of c² - b c + 1 = 0, in the cancellation-free form
    2.0 / (b + (b * b - 4.0).max(0.0).sqrt())
}

/// Largest admissible ε (times [`CERT_SAFETY`]) and the constants it yields.
///
/// ε must satisfy `ε < 1/(1 + a²‖θ̇‖²_∞)` and
/// `λ - ε(1/8 + 4/|I|²) - ε/(1-ε) ‖θ̇‖²_∞ a² E₁ ≥ 0`.
pub fn hardy_certified(lambda: f64, twist_sup: f64, a: f64, e1: f64, interval: (f64, f64)) -> HardyCertificate {
    let len = interval.1 - interval.0;
    let x0 = 0.5 * (interval.0 + interval.1);
    let p = 0.125 + 4.0 / (len * len);
    let q = twist_sup * twist_sup * a * a * e1;
    let cap = 1.0 / (1.0 + a * a * twist_sup * twist_sup);
    let root = if lambda > 0.0 {
        // smaller root of p ε² - (λ + p + q) ε + λ = 0
        let b = lambda + p + q;
        2.0 * lambda / (b + (b * b - 4.0 * p * lambda).max(0.0).sqrt())
    } else {
        0.0
    };
    let eps = CERT_SAFETY * root.min(cap);
    let c_h_prime = eps / 32.0;
    let of = offset_factor(x0);
    HardyCertificate {
        eps,
        c_h_prime,
        offset_factor: of,
        c_h: c_h_prime * of,
        c_s: eps / 8.0,
    }
}

/// `b₂ (‖φ̇‖² - c ‖ρφ‖²)` for the piecewise-linear trial function through
/// `(b₁, 0), (b₂, 1), (b₃, 0)` with `b_i = R^{n 2^{i-1}}`. Tends to `1 - 2c`.
pub fn hardy_upper_trial(c: f64, n: u32, r: f64) -> f64 {
    let b1 = r.powi(n as i32);
    let b2 = b1 * b1;
    let b3 = b2 * b2;
    let (grad, weighted) = tent_norms(b1, b2, b3);
    b2 * (grad - c * weighted)
}

/// atan(b) - atan(a) for 0 < a < b.
fn atan_diff(a: f64, b: f64) -> f64 {
    ((b - a) / (1.0 + a * b)).atan()
}

/// ln((1 + b²)/(1 + a²)) for 0 < a < b.
fn log_ratio(a: f64, b: f64) -> f64 {
    2.0 * (b / a).ln() + (1.0 / (b * b)).ln_1p() - (1.0 / (a * a)).ln_1p()
}

/// ‖φ̇‖² and ‖ρφ‖² of the tent through b₁ < b₂ < b₃.
pub fn tent_norms(b1: f64, b2: f64, b3: f64) -> (f64, f64) {
    let grad = 1.0 / (b2 - b1) + 1.0 / (b3 - b2);
    let up = (b2 - b1) + (b1 * b1 - 1.0) * atan_diff(b1, b2) - b1 * log_ratio(b1, b2);
    let down = (b3 - b2) + (b3 * b3 - 1.0) * atan_diff(b2, b3) - b3 * log_ratio(b2, b3);
    (grad, up / ((b2 - b1) * (b2 - b1)) + down / ((b3 - b2) * (b3 - b2)))
}

/// Variational and certified Hardy constants for one tube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardyReport {
    pub interval: (f64, f64),
    pub lambda_i: f64,
    pub lambda_i_raw: f64,
    pub ch_variational: f64,
    /// Same constant on the tube of twice the length, when requested.
    pub ch_variational_doubled: Option<f64>,
    pub ch_certified: f64,
    pub epsilon_star: f64,
    pub cs_lower: f64,
    pub offset_factor: f64,
}

impl HardyReport {
    /// Relative change of the variational constant under L → 2L.
    pub fn l_sensitivity(&self) -> Option<f64> {
        self.ch_variational_doubled
            .map(|d| (d - self.ch_variational).abs() / self.ch_variational.abs())
    }
}

/// λ(θ̇, I), the certificate it yields and the variational constant on the
/// grids of `policy`.
#[allow(clippy::too_many_arguments)]
pub fn hardy_report(
    tube: &TubeSpec,
    interval: (f64, f64),
    interval_cells: usize,
    policy: &AxialGridPolicy,
    section: &Grid2D,
    modes: &ModeSet,
    doubled: bool,
    opts: &EigOptions,
) -> Result<HardyReport> {
    let lambda = lambda_bounded(tube, interval, interval_cells, section, modes, opts)?;
    let cert = hardy_certified(lambda.value, tube.twist.sup_norm(), tube.section.a(), modes.e1, interval);
    let variational = |p: &AxialGridPolicy| -> Result<f64> {
        let t = TubeSpec {
            half_length: p.half_length,
            ..tube.clone()
        };
        t.validate()?;
        Ok(hardy_variational(&t, &p.physical(&t.twist)?, section, modes, opts)?.value)
    };
    let ch_variational = variational(policy)?;
    let ch_variational_doubled = if doubled {
        Some(variational(&policy.doubled())?)
    } else {
        None
    };
    Ok(HardyReport {
        interval,
        lambda_i: lambda.value,
        lambda_i_raw: lambda.raw,
        ch_variational,
        ch_variational_doubled,
        ch_certified: cert.c_h,
        epsilon_star: cert.eps,
        cs_lower: cert.c_s,
        offset_factor: cert.offset_factor,
    })
}

/// Result of a stability probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityResult {
    pub eps: f64,
    /// Bottom of the perturbed operator minus E₁ (twisted) or of the 1D reduction.
    pub value: f64,
    pub residual: f64,
    pub reduced_1d: bool,
}

/// Bottom of `-Δ - ε ρ²` minus E₁ on the twisted tube, using the straightened form.
pub fn stability_probe(
    tube: &TubeSpec,
    eps: f64,
    axial: &Grid1D,
    section: &Grid2D,
    modes: &ModeSet,
    opts: &EigOptions,
) -> Result<StabilityResult> {
    let form = assemble_straightened(tube, axial, section)?.shifted(modes.e1);
    let rho2 = assemble_weighted_mass(&form.layout, Weight::RhoSq, 1.0)?;
    let a = form.stiffness.add_diag(-eps, &rho2);
    let pair = linalg::smallest_eigenpairs(&a, &form.mass, 1, opts)?.remove(0);
    Ok(StabilityResult {
        eps,
        value: pair.value,
        residual: pair.residual,
        reduced_1d: false,
    })
}

/// Untwisted case: bottom of `-d² - ε/(1 + x²)` on (-L, L) with Dirichlet ends.
pub fn stability_probe_untwisted(eps: f64, half_length: f64, cells: usize, opts: &EigOptions) -> Result<StabilityResult> {
    let grid = Grid1D::uniform(-half_length, half_length, cells)?;
    let pot = move |x: f64| -eps / (1.0 + x * x);
    let form = assemble_laplace_1d(&grid, &pot);
    let pair = smallest_eigenpairs(&form, 1, opts)?.remove(0);
    Ok(StabilityResult {
        eps,
        value: pair.value,
        residual: pair.residual,
        reduced_1d: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offset_factor_matches_brute_force() {
        for x0 in [0.0, 0.3, 1.0, 2.5] {
            let brute = (0..400001)
                .map(|k| -200.0 + k as f64 * 0.001)
                .map(|x| (1.0 + x * x) / (1.0 + (x - x0) * (x - x0)))
                .fold(f64::INFINITY, f64::min);
            assert!((offset_factor(x0) - brute).abs() < 1e-6, "{x0}");
        }
        assert_eq!(offset_factor(0.0), 1.0);
    }

    #[test]
    fn certificate_satisfies_both_constraints() {
        let (lambda, sup, a, e1) = (0.05, 1.0, std::f64::consts::FRAC_PI_2 * 2f64.sqrt(), 2.0);
        let c = hardy_certified(lambda, sup, a, e1, (-1.0, 1.0));
        assert!(c.eps > 0.0);
        assert!(c.eps < 1.0 / (1.0 + a * a * sup * sup));
        let lhs = lambda - c.eps * (0.125 + 1.0) - c.eps / (1.0 - c.eps) * sup * sup * a * a * e1;
        assert!(lhs >= 0.0);
        assert!(c.c_h <= 0.5);
        assert_eq!(c.c_s, c.eps / 8.0);
    }

    #[test]
    fn no_certificate_without_lambda() {
        assert_eq!(hardy_certified(0.0, 1.0, 1.0, 2.0, (-1.0, 1.0)).eps, 0.0);
    }
}
