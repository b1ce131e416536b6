//! Heat flow `u_t = Δu + E₁u` on the straightened tube, self-similar
//! variables, reduced models and decay-rate fits.

use serde::{Deserialize, Serialize};

use crate::discretize::{assemble_laplace_1d, DiscreteForm, Grid1D, Layout};
use crate::error::{Error, Result};
use crate::linalg::{solve_refined, CsrMatrix, SkylineCholesky};
use crate::report::fmt17;
use crate::spectral::SpectralCurve;

/// Linear solves must reach this relative residual.
pub const SOLVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ImplicitEuler,
    CrankNicolson,
}

impl Scheme {
    fn theta(self) -> f64 {
        match self {
            Scheme::ImplicitEuler => 1.0,
            Scheme::CrankNicolson => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatState {
    pub t: f64,
    pub u: Vec<f64>,
}

/// Factored time stepper for `M u' = -S u`, with `S = A - E₁M` the shifted form.
///
/// Each step solves `(M + dt θ S) u⁺ = (M - dt (1-θ) S) u`.
pub struct Stepper {
    shifted: CsrMatrix,
    mass: Vec<f64>,
    lhs: CsrMatrix,
    chol: SkylineCholesky,
    pub dt: f64,
    pub scheme: Scheme,
}

impl Stepper {
    pub fn new(shifted: &DiscreteForm, dt: f64, scheme: Scheme) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step {dt}")));
        }
        let lhs = shifted
            .stiffness
            .scaled(dt * scheme.theta())
            .add_diag(1.0, &shifted.mass);
        let chol = SkylineCholesky::factor(&lhs)?;
        Ok(Stepper {
            shifted: shifted.stiffness.clone(),
            mass: shifted.mass.clone(),
            lhs,
            chol,
            dt,
            scheme,
        })
    }

    /// Advances the state by one step and returns the solve residual.
    pub fn step(&self, state: &mut HeatState) -> Result<f64> {
        let mut rhs: Vec<f64> = state.u.iter().zip(&self.mass).map(|(u, m)| u * m).collect();
        let explicit = 1.0 - self.scheme.theta();
        if explicit > 0.0 {
            let su = self.shifted.apply(&state.u);
            for (r, s) in rhs.iter_mut().zip(&su) {
                *r -= self.dt * explicit * s;
            }
        }
        let mut next = vec![0.0; rhs.len()];
        let res = solve_refined(&self.lhs, &self.chol, &rhs, &mut next);
        if !(res <= SOLVE_TOL) {
            return Err(Error::LinearSolveFailure { residual: res });
        }
        state.u = next;
        state.t += self.dt;
        Ok(res)
    }
}

/// One step with a freshly factored matrix.
pub fn step(shifted: &DiscreteForm, state: &mut HeatState, dt: f64, scheme: Scheme) -> Result<f64> {
    Stepper::new(shifted, dt, scheme)?.step(state)
}

/// Norms recorded along a heat trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSample {
    pub t: f64,
    pub norm_l2: f64,
    /// `‖ũ(s)‖_K` at `s = log(1+t)`, computed as `∫ exp(x₁²/(4(1+t))) |u|²`
    /// over `|x₁| ≤ K_NORM_RADIUS √(1+t)`.
    pub norm_k: f64,
    /// `‖ρ⁻¹u‖`.
    pub norm_rhoinv: f64,
    /// `(∫_ω (∫ |u| dx₁)² dx')^{1/2}`.
    pub norm_mixed1: f64,
}

/// Cut-off of the K-norm in self-similar variables. Beyond it the weight
/// amplifies far-field round-off of the time stepper.
pub const K_NORM_RADIUS: f64 = 16.0;

pub fn norms(layout: &Layout, u: &[f64], t: f64) -> Result<NormSample> {
    let n2 = layout.n_section();
    let scale = 1.0 + t;
    let x_k = K_NORM_RADIUS * scale.sqrt();
    let (mut l2, mut k, mut rho) = (0.0, 0.0, 0.0);
    let mut line = vec![0.0; n2];
    for (j, (&x, &m1)) in layout.axial.iter().zip(&layout.axial_mass).enumerate() {
        let arg = x * x / (4.0 * scale);
        let rw = 1.0 + x * x;
        for (kk, &m2) in layout.section_mass.iter().enumerate() {
            let v = u[j * n2 + kk];
            let w = m1 * m2 * v * v;
            l2 += w;
            rho += rw * w;
            line[kk] += m1 * v.abs();
            if w > 0.0 && x.abs() <= x_k {
                // log domain: the weight alone may overflow where u underflows
                let kw = (arg + w.ln()).exp();
                if !kw.is_finite() {
                    return Err(Error::WeightOverflow { y: x / scale.sqrt() });
                }
                k += kw;
            }
        }
    }
    let mixed: f64 = line.iter().zip(&layout.section_mass).map(|(l, m)| m * l * l).sum();
    Ok(NormSample {
        t,
        norm_l2: l2.sqrt(),
        norm_k: k.sqrt(),
        norm_rhoinv: rho.sqrt(),
        norm_mixed1: mixed.sqrt(),
    })
}

/// `exp(-x₁²/n) ⊗ g`.
pub fn gaussian_initial(layout: &Layout, n: f64, section_profile: &[f64]) -> Vec<f64> {
    let f: Vec<f64> = layout.axial.iter().map(|x| (-x * x / n).exp()).collect();
    layout.tensor(&f, section_profile)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionRecord {
    pub samples: Vec<NormSample>,
    /// Largest `‖u⁺‖/‖u‖` over all steps.
    pub max_growth: f64,
    /// Smallest `min u⁺ / max |u⁺|` over all steps.
    pub min_sign_ratio: f64,
    pub max_residual: f64,
    pub steps: usize,
    #[serde(skip)]
    pub final_state: Option<HeatState>,
}

impl EvolutionRecord {
    pub fn csv(&self) -> String {
        let mut out = String::from("t,norm_L2,norm_K,norm_rhoinv,norm_mixed1\n");
        for p in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt17(p.t),
                fmt17(p.norm_l2),
                fmt17(p.norm_k),
                fmt17(p.norm_rhoinv),
                fmt17(p.norm_mixed1)
            ));
        }
        out
    }

    pub fn series(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|p| (p.t, p.norm_l2)).collect()
    }

    /// Non-expansive in the mass norm up to round-off.
    pub fn non_expansive(&self) -> bool {
        self.max_growth <= 1.0 + 1e-12
    }

    pub fn positive(&self) -> bool {
        self.min_sign_ratio >= -1e-12
    }
}

/// Time steps of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Uniform { dt: f64, t_end: f64 },
    /// Starts at `dt0` and doubles the step whenever `2 dt ≤ rel (1 + t)`,
    /// refactoring at each doubling.
    Geometric { dt0: f64, rel: f64, t_end: f64 },
}

impl Schedule {
    pub fn t_end(&self) -> f64 {
        match *self {
            Schedule::Uniform { t_end, .. } | Schedule::Geometric { t_end, .. } => t_end,
        }
    }

    fn first_dt(&self) -> f64 {
        match *self {
            Schedule::Uniform { dt, .. } => dt,
            Schedule::Geometric { dt0, .. } => dt0,
        }
    }
}

/// Evolves `u0` over `schedule`, recording norms every `record_every` steps
/// and at the final time.
pub fn evolve_and_record(
    shifted: &DiscreteForm,
    u0: &[f64],
    schedule: Schedule,
    scheme: Scheme,
    record_every: usize,
) -> Result<EvolutionRecord> {
    let t_end = schedule.t_end();
    let mut dt = schedule.first_dt();
    let mut stepper = Stepper::new(shifted, dt, scheme)?;
    let mut state = HeatState { t: 0.0, u: u0.to_vec() };
    let every = record_every.max(1);
    let mut samples = vec![norms(&shifted.layout, &state.u, 0.0)?];
    let mut max_growth: f64 = 0.0;
    let mut min_sign_ratio = f64::INFINITY;
    let mut max_residual: f64 = 0.0;
    let mut prev = samples[0].norm_l2;
    let mut steps = 0usize;
    let slack = 1e-9 * t_end;
    // times are t_base + k dt since the last change of dt
    let (mut t_base, mut k) = (0.0, 0usize);
    while state.t < t_end - slack {
        if let Schedule::Geometric { rel, .. } = schedule {
            if 2.0 * dt <= rel * (1.0 + state.t) && state.t + 2.0 * dt <= t_end + slack {
                dt *= 2.0;
                stepper = Stepper::new(shifted, dt, scheme)?;
                (t_base, k) = (state.t, 0);
            }
        }
        if state.t + dt > t_end + slack {
            dt = t_end - state.t;
            stepper = Stepper::new(shifted, dt, scheme)?;
            (t_base, k) = (state.t, 0);
        }
        k += 1;
        let t_next = t_base + k as f64 * dt;
        max_residual = max_residual.max(stepper.step(&mut state)?);
        state.t = t_next;
        steps += 1;
        let norm = shifted.mass_norm_sq(&state.u).sqrt();
        if prev > 0.0 {
            max_growth = max_growth.max(norm / prev);
        }
        prev = norm;
        let sup = state.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = state.u.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        if sup > 0.0 {
            min_sign_ratio = min_sign_ratio.min(min / sup);
        }
        if steps % every == 0 || state.t >= t_end - slack {
            samples.push(norms(&shifted.layout, &state.u, state.t)?);
        }
    }
    Ok(EvolutionRecord {
        samples,
        max_growth,
        min_sign_ratio,
        max_residual,
        steps,
        final_state: Some(state),
    })
}

/// Axial coordinates extended by the Dirichlet ends, with zero values there.
fn extended_axis(layout: &Layout) -> (Vec<f64>, bool) {
    match layout.ends {
        Some((a, b)) => {
            let mut x = Vec::with_capacity(layout.axial.len() + 2);
            x.push(a);
            x.extend_from_slice(&layout.axial);
            x.push(b);
            (x, true)
        }
        None => (layout.axial.clone(), false),
    }
}

/// Piecewise linear interpolation; zero outside the node range.
fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 0 || x < xs[0] || x > xs[n - 1] {
        return 0.0;
    }
    if n == 1 {
        return ys[0];
    }
    let i = xs.partition_point(|&v| v <= x).clamp(1, n - 1);
    let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    (1.0 - t) * ys[i - 1] + t * ys[i]
}

/// Resamples `u` (layout `from`) at axial positions `x = scale · y` of layout
/// `to`, multiplied by `factor`. Both layouts share the section.
fn resample_axial(from: &Layout, u: &[f64], to: &Layout, scale: f64, factor: f64) -> Result<Vec<f64>> {
    let n2 = from.n_section();
    if to.n_section() != n2 {
        return Err(Error::GridMismatch("layouts use different sections".into()));
    }
    let (xs, padded) = extended_axis(from);
    let mut out = vec![0.0; to.n()];
    let mut column = vec![0.0; xs.len()];
    for k in 0..n2 {
        for (j, c) in column.iter_mut().enumerate() {
            let jj = if padded { j.wrapping_sub(1) } else { j };
            *c = if padded && (j == 0 || j == xs.len() - 1) {
                0.0
            } else {
                u[jj * n2 + k]
            };
        }
        for (j, &y) in to.axial.iter().enumerate() {
            out[j * n2 + k] = factor * interp_linear(&xs, &column, scale * y);
        }
    }
    Ok(out)
}

/// Self-similar transform `ũ(y, s) = e^{s/4} u(e^{s/2} y₁, y', e^s - 1)` sampled
/// on the axial nodes of `y_layout`.
pub fn selfsim_map(x_layout: &Layout, u: &[f64], t: f64, y_layout: &Layout) -> Result<Vec<f64>> {
    let s = (1.0 + t).ln();
    resample_axial(x_layout, u, y_layout, (0.5 * s).exp(), (0.25 * s).exp())
}

/// Inverse transform `u(x, t) = e^{-s/4} ũ(e^{-s/2} x₁, x', s)`, `t = e^s - 1`.
pub fn selfsim_inverse(y_layout: &Layout, v: &[f64], s: f64, x_layout: &Layout) -> Result<Vec<f64>> {
    resample_axial(y_layout, v, x_layout, (-0.5 * s).exp(), (-0.25 * s).exp())
}

/// `‖v‖_K` on a self-similar layout.
pub fn k_norm(layout: &Layout, v: &[f64]) -> Result<f64> {
    Ok(norms(layout, v, 0.0)?.norm_k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedRun {
    pub s: Vec<f64>,
    pub log_norm: Vec<f64>,
    /// Least-squares slope of log‖φ‖ against s over the second half.
    pub slope: f64,
}

/// Implicit Euler for `φ_s = -h φ` with `h` (or `h_D`) the assembled oscillator.
pub fn reduced_1d_evolve(oscillator: &DiscreteForm, phi0: &[f64], ds: f64, s_end: f64) -> Result<ReducedRun> {
    let stepper = Stepper::new(oscillator, ds, Scheme::ImplicitEuler)?;
    let mut state = HeatState {
        t: 0.0,
        u: phi0.to_vec(),
    };
    let steps = (s_end / ds).round() as usize;
    let mut s = vec![0.0];
    let mut log_norm = vec![0.5 * oscillator.mass_norm_sq(phi0).ln()];
    for k in 1..=steps {
        stepper.step(&mut state)?;
        s.push(k as f64 * ds);
        log_norm.push(0.5 * oscillator.mass_norm_sq(&state.u).ln());
    }
    let half = s.len() / 2;
    let slope = linear_fit(&s[half..], &log_norm[half..]).0;
    Ok(ReducedRun { s, log_norm, slope })
}

/// Slope, intercept and R² of a least-squares line.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyPoint {
    pub t: f64,
    pub a: f64,
    pub b: f64,
}

fn energy_rhs(c_h: f64, a: f64, b: f64) -> (f64, f64) {
    (-2.0 * c_h * a * a / b, 2.0 * (1.0 - c_h) * a - 2.0 * a * a / b)
}

/// RK4 for `ȧ = -2c a²/b`, `ḃ = 2(1-c) a - 2a²/b`.
pub fn energy_system_integrate(c_h: f64, a0: f64, b0: f64, dt: f64, t_end: f64) -> Result<Vec<EnergyPoint>> {
    if !(a0 > 0.0 && b0 > 0.0 && dt > 0.0) {
        return Err(Error::InvalidArgument("energy system needs a0, b0, dt > 0".into()));
    }
    let steps = (t_end / dt).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let (mut a, mut b) = (a0, b0);
    out.push(EnergyPoint { t: 0.0, a, b });
    for k in 1..=steps {
        let (k1a, k1b) = energy_rhs(c_h, a, b);
        let (k2a, k2b) = energy_rhs(c_h, a + 0.5 * dt * k1a, b + 0.5 * dt * k1b);
        let (k3a, k3b) = energy_rhs(c_h, a + 0.5 * dt * k2a, b + 0.5 * dt * k2b);
        let (k4a, k4b) = energy_rhs(c_h, a + dt * k3a, b + dt * k3b);
        let da = dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
        let db = dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
        let t = k as f64 * dt;
        let rel = (da / a).abs().max((db / b).abs());
        if rel > 0.1 {
            return Err(Error::StepTooLarge { t, rel_change: rel });
        }
        a += da;
        b += db;
        out.push(EnergyPoint { t, a, b });
    }
    Ok(out)
}

/// W(e^ℓ) for real ℓ, i.e. the positive root of `w + ln w = ℓ`.
pub fn lambert_w_exp(ell: f64) -> f64 {
    // Newton in v = ln w on the convex map v -> e^v + v - ℓ, started to its right
    let mut v = if ell > 1.0 { ell.ln() } else { ell };
    for _ in 0..100 {
        let ev = v.exp();
        let g = ev + v - ell;
        let step = g / (ev + 1.0);
        v -= step;
        if step.abs() <= 1e-16 * v.abs().max(1.0) {
            break;
        }
    }
    v.exp()
}

/// Closed-form solution of the energy system:
/// `ξ₀ = b₀/a₀ - 1`, `W = W(ξ₀ e^{ξ₀ + 2t})`, `a = a₀ (ξ₀/W)^c`, `b = a (1 + W)`.
pub fn lambert_closed_form(c_h: f64, a0: f64, b0: f64, t: f64) -> Result<EnergyPoint> {
    let xi0 = b0 / a0 - 1.0;
    if !(xi0 > 0.0) {
        return Err(Error::InvalidArgument(format!("need b0 > a0, got a0={a0} b0={b0}")));
    }
    let w = lambert_w_exp(xi0.ln() + xi0 + 2.0 * t);
    let a = a0 * (xi0 / w).powf(c_h);
    Ok(EnergyPoint { t, a, b: a * (1.0 + w) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub gamma: f64,
    pub r2: f64,
    pub samples: usize,
    pub t_min: f64,
    pub t_max: f64,
    /// R² reached the acceptance threshold.
    pub accepted: bool,
}

pub const FIT_MIN_SAMPLES: usize = 20;
pub const FIT_MIN_R2: f64 = 0.98;

/// Earliest time at which the Dirichlet ends at ±L influence the solution.
pub fn boundary_time(half_length: f64, support_radius: f64) -> f64 {
    let d = half_length - support_radius;
    d * d / 16.0
}

/// Fits `log‖u‖ = -Γ log(1+t) + c` over `t_min ≤ t ≤ t_max`.
pub fn fit_decay_rate(series: &[(f64, f64)], t_min: f64, t_max: f64, t_bc: Option<f64>) -> Result<DecayFit> {
    if t_min < 1.0 || !(t_max > t_min) {
        return Err(Error::InvalidArgument(format!("fit window [{t_min}, {t_max}]")));
    }
    if let Some(tb) = t_bc {
        if t_max > tb {
            return Err(Error::BoundaryContaminated { t_max, t_bc: tb });
        }
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, n)| *t >= t_min && *t <= t_max && *n > 0.0)
        .map(|&(t, n)| ((1.0 + t).ln(), n.ln()))
        .collect();
    if pts.len() < FIT_MIN_SAMPLES {
        return Err(Error::WindowTooShort { samples: pts.len() });
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let (slope, _, r2) = linear_fit(&x, &y);
    Ok(DecayFit {
        gamma: -slope,
        r2,
        samples: x.len(),
        t_min,
        t_max,
        accepted: r2 >= FIT_MIN_R2,
    })
}

/// `‖u(t)‖/‖u₀‖` for `u₀ = exp(-x²/n)` under the 1D heat flow on (-L, L).
///
/// With an untwisted tube the transverse mode factors out, so this is the
/// ratio for `exp(-x₁²/n) 𝒥₁` as well.
pub fn semigroup_no_decay_witness(n: f64, t: f64, half_length: f64, cells: usize) -> Result<f64> {
    let grid = Grid1D::uniform(-half_length, half_length, cells)?;
    let form = assemble_laplace_1d(&grid, &|_| 0.0);
    let u0: Vec<f64> = form.layout.axial.iter().map(|x| (-x * x / n).exp()).collect();
    let steps = 200usize;
    let stepper = Stepper::new(&form, t / steps as f64, Scheme::CrankNicolson)?;
    let mut state = HeatState { t: 0.0, u: u0.clone() };
    for _ in 0..steps {
        stepper.step(&mut state)?;
    }
    Ok((form.mass_norm_sq(&state.u) / form.mass_norm_sq(&u0)).sqrt())
}

/// Worst ratio `‖ũ(s)‖_K / (‖u₀‖_K exp(-∫₀ˢ μ̂))` along a record.
pub fn spectral_bound_ratio(record: &EvolutionRecord, curve: &SpectralCurve) -> f64 {
    let k0 = record.samples[0].norm_k;
    record
        .samples
        .iter()
        .map(|p| {
            let s = (1.0 + p.t).ln();
            p.norm_k / (k0 * (-curve.integral(s)).exp())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambert_w_identity() {
        for ell in [-5.0, -0.3, 0.0, 1.0, 3.0, 50.0, 2000.0] {
            let w = lambert_w_exp(ell);
            assert!((w + w.ln() - ell).abs() < 1e-12 * ell.abs().max(1.0), "{ell}");
        }
        assert!((lambert_w_exp(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_at_zero_returns_initial_data() {
        let p = lambert_closed_form(0.3, 1.0, 2.0, 0.0).unwrap();
        assert!((p.a - 1.0).abs() < 1e-14 && (p.b - 2.0).abs() < 1e-14);
    }

    #[test]
    fn synthetic_power_law_fit() {
        let series: Vec<(f64, f64)> = (0..=200).map(|k| {
            let t = k as f64 * 0.5;
            (t, 3.0 * (1.0 + t).powf(-0.75))
        }).collect();
        let f = fit_decay_rate(&series, 5.0, 50.0, None).unwrap();
        assert!((f.gamma - 0.75).abs() < 1e-6);
        assert!(f.accepted);
    }

    #[test]
    fn fit_window_errors() {
        let series: Vec<(f64, f64)> = (0..100).map(|k| (k as f64, 1.0 / (1.0 + k as f64))).collect();
        assert!(matches!(fit_decay_rate(&series, 5.0, 10.0, None), Err(Error::WindowTooShort { .. })));
        assert!(matches!(
            fit_decay_rate(&series, 5.0, 99.0, Some(95.0)),
            Err(Error::BoundaryContaminated { .. })
        ));
        assert!(fit_decay_rate(&series, 0.5, 50.0, None).is_err());
    }

    #[test]
    fn boundary_time_formula() {
        assert!((boundary_time(40.0, 1.0) - 39.0 * 39.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn energy_step_guard() {
        assert!(matches!(
            energy_system_integrate(0.3, 1.0, 1.01, 1.0, 5.0),
            Err(Error::StepTooLarge { .. })
        ));
    }
}
