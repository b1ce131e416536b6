//! Elementary functional inequalities checked on seeded random grid functions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{
    assemble_cross_section, assemble_laplace_1d, assemble_straightened, DiscreteForm, Grid1D, Grid2D, Layout,
};
use crate::error::{Error, Result};
use crate::geometry::{CrossSection, TubeSpec, TwistProfile};
use crate::linalg::EigOptions;
use crate::report::fmt17;
use crate::spectral::compute_modes;

/// Signed slack of an inequality and the magnitude it is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub margin: f64,
    pub scale: f64,
}

impl Margin {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.margin / self.scale
        } else {
            self.margin
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    None,
    /// `exp(-x₁²/w²)`.
    Gaussian { width: f64 },
    /// Zero for `|x₁| ≥ radius`.
    Cutoff { radius: f64 },
}

impl Envelope {
    fn value(self, x: f64) -> f64 {
        match self {
            Envelope::None => 1.0,
            Envelope::Gaussian { width } => (-(x / width).powi(2)).exp(),
            Envelope::Cutoff { radius } => {
                if x.abs() < radius {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Smoothed white noise on the unknowns of a discrete form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomFunctionSpec {
    pub seed: u64,
    /// Damped Jacobi passes applied to the noise.
    pub smoothing: usize,
    pub envelope: Envelope,
}

impl RandomFunctionSpec {
    pub fn new(seed: u64) -> Self {
        RandomFunctionSpec {
            seed,
            smoothing: 3,
            envelope: Envelope::None,
        }
    }

    pub fn with_envelope(mut self, envelope: Envelope) -> Self {
        self.envelope = envelope;
        self
    }

    /// Samples on the unknowns of `form`; Dirichlet nodes are not unknowns, so
    /// the result vanishes there.
    pub fn sample(&self, form: &DiscreteForm) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut u: Vec<f64> = (0..form.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let diag = form.stiffness.diagonal();
        for _ in 0..self.smoothing {
            let au = form.stiffness.apply(&u);
            for ((x, a), d) in u.iter_mut().zip(&au).zip(&diag) {
                if *d > 0.0 {
                    *x -= 2.0 / 3.0 * a / d;
                }
            }
        }
        for (i, x) in u.iter_mut().enumerate() {
            *x *= self.envelope.value(form.layout.x1(i));
        }
        u
    }
}

/// `min_k (a |∇'ψ| - |∂_τψ|)` over section nodes, with discrete gradients
/// built from the same differences as `∂_τ`.
pub fn check_angular_bound(section: &Grid2D, psi: &[f64], a: f64) -> Margin {
    let grad = section.gradient_magnitude(psi);
    let tau = section.apply_tau(psi);
    let margin = grad
        .iter()
        .zip(&tau)
        .map(|(g, t)| a * g - t.abs())
        .fold(f64::INFINITY, f64::min);
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(a * g));
    Margin { margin, scale }
}

/// Axial coordinates of a Dirichlet tube layout including the two end nodes.
fn closed_axis(layout: &Layout) -> Result<Vec<f64>> {
    let (a, b) = layout
        .ends
        .ok_or_else(|| Error::GridMismatch("layout has no Dirichlet ends".into()))?;
    let mut x = Vec::with_capacity(layout.axial.len() + 2);
    x.push(a);
    x.extend_from_slice(&layout.axial);
    x.push(b);
    Ok(x)
}

/// `c ‖∂₁ψ‖² + (2 + 64/|I|²) ‖ψ‖²_{I×ω} - ‖ρψ‖²` with `ρ² = 1/(1+x₁²)`.
pub fn hardy_classical_margin(layout: &Layout, psi: &[f64], interval: (f64, f64), coeff: f64) -> Result<Margin> {
    let x = closed_axis(layout)?;
    let n2 = layout.n_section();
    let len = interval.1 - interval.0;
    if !(len > 0.0) {
        return Err(Error::InvalidArgument(format!("interval {interval:?}")));
    }
    let at = |j: usize, k: usize| -> f64 {
        if j == 0 || j == x.len() - 1 {
            0.0
        } else {
            psi[(j - 1) * n2 + k]
        }
    };
    let mut grad = 0.0;
    for e in 0..x.len() - 1 {
        let h = x[e + 1] - x[e];
        for (k, &m2) in layout.section_mass.iter().enumerate() {
            let d = at(e + 1, k) - at(e, k);
            grad += m2 * d * d / h;
        }
    }
    let (mut inside, mut weighted) = (0.0, 0.0);
    for (j, (&xj, &m1)) in layout.axial.iter().zip(&layout.axial_mass).enumerate() {
        let slice: f64 = layout
            .section_mass
            .iter()
            .enumerate()
            .map(|(k, m2)| m2 * psi[j * n2 + k].powi(2))
            .sum();
        if xj > interval.0 && xj < interval.1 {
            inside += m1 * slice;
        }
        weighted += m1 * slice / (1.0 + xj * xj);
    }
    let upper = coeff * grad + (2.0 + 64.0 / (len * len)) * inside;
    Ok(Margin {
        margin: upper - weighted,
        scale: upper.max(weighted),
    })
}

pub fn check_hardy_classical(layout: &Layout, psi: &[f64], interval: (f64, f64)) -> Result<Margin> {
    hardy_classical_margin(layout, psi, interval, 16.0)
}

/// Profiles `(|x|-1)₊ exp(-(|x|-1)/κ)` vanishing on `[-1, 1]`, tensored with
/// the section ground state.
pub fn hardy_worst_case_family(layout: &Layout, j1: &[f64], kappas: &[f64]) -> Vec<Vec<f64>> {
    kappas
        .iter()
        .map(|&kappa| {
            let f: Vec<f64> = layout
                .axial
                .iter()
                .map(|&x| {
                    let u = (x.abs() - 1.0).max(0.0);
                    u * (-u / kappa).exp()
                })
                .collect();
            layout.tensor(&f, j1)
        })
        .collect()
}

/// `‖φ'‖² - ‖φ‖⁶_{L²} / (4 ‖φ‖⁴_{L¹})` for the piecewise linear interpolant of
/// nodal values on `grid`, integrated exactly.
pub fn check_sobolev_1d(grid: &Grid1D, phi: &[f64]) -> Result<Margin> {
    let x = grid.nodes();
    if phi.len() != x.len() {
        return Err(Error::GridMismatch(format!("{} values for {} nodes", phi.len(), x.len())));
    }
    if phi.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroFunction);
    }
    let (mut grad, mut l2, mut l1) = (0.0, 0.0, 0.0);
    for e in 0..x.len() - 1 {
        let h = x[e + 1] - x[e];
        let (a, b) = (phi[e], phi[e + 1]);
        grad += (b - a) * (b - a) / h;
        l2 += h * (a * a + a * b + b * b) / 3.0;
        l1 += if a * b >= 0.0 {
            0.5 * h * (a.abs() + b.abs())
        } else {
            0.5 * h * (a * a + b * b) / (a.abs() + b.abs())
        };
    }
    let rhs = 0.25 * l2.powi(3) / l1.powi(4);
    Ok(Margin {
        margin: grad - rhs,
        scale: grad.max(rhs),
    })
}

/// Slice with the smallest relative `‖∇'ψ(x₁,·)‖² - E₁ʰ ‖ψ(x₁,·)‖²`.
pub fn check_poincare_slice(section: &Grid2D, layout: &Layout, psi: &[f64], e1h: f64) -> Result<Margin> {
    let n2 = section.n();
    if layout.n_section() != n2 || psi.len() != layout.n() {
        return Err(Error::GridMismatch("function does not live on this section".into()));
    }
    let k = section.stiffness();
    let m = section.mass();
    let mut worst = Margin {
        margin: 0.0,
        scale: 0.0,
    };
    let mut worst_rel = f64::INFINITY;
    for slice in psi.chunks(n2) {
        let energy = k.quad_form(slice);
        let mass: f64 = slice.iter().zip(m).map(|(v, w)| w * v * v).sum();
        let cand = Margin {
            margin: energy - e1h * mass,
            scale: energy.max(e1h * mass),
        };
        if cand.relative() < worst_rel {
            worst_rel = cand.relative();
            worst = cand;
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Angular,
    HardyClassical,
    Sobolev1d,
    PoincareSlice,
}

impl Check {
    pub const ALL: [Check; 4] = [Check::Angular, Check::HardyClassical, Check::Sobolev1d, Check::PoincareSlice];

    pub fn name(self) -> &'static str {
        match self {
            Check::Angular => "angular",
            Check::HardyClassical => "hardy_classical",
            Check::Sobolev1d => "sobolev_1d",
            Check::PoincareSlice => "poincare_slice",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedMargin {
    pub seed: u64,
    pub margin: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: Check,
    pub results: Vec<SeedMargin>,
}

impl CheckReport {
    pub fn worst_relative(&self) -> f64 {
        self.results
            .iter()
            .map(|r| Margin { margin: r.margin, scale: r.scale }.relative())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.worst_relative() >= -tol
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("seed,margin,scale\n");
        for r in &self.results {
            out.push_str(&format!("{},{},{}\n", r.seed, fmt17(r.margin), fmt17(r.scale)));
        }
        out
    }
}

/// Grids and random-function settings for the inequality suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub section: CrossSection,
    pub section_h: f64,
    pub half_length: f64,
    pub axial_cells: usize,
    pub interval: (f64, f64),
    pub line_half_length: f64,
    pub line_cells: usize,
    pub envelope_width: f64,
    pub first_seed: u64,
    pub seeds: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            section: CrossSection::square(std::f64::consts::PI),
            section_h: std::f64::consts::PI / 16.0,
            half_length: 8.0,
            axial_cells: 128,
            interval: (-1.0, 1.0),
            line_half_length: 10.0,
            line_cells: 400,
            envelope_width: 3.0,
            first_seed: 1,
            seeds: 100,
        }
    }
}

/// Runs all four checks over `config.seeds` consecutive seeds.
pub fn run_suite(config: &SuiteConfig, opts: &EigOptions) -> Result<Vec<CheckReport>> {
    let section = Grid2D::for_section(config.section, config.section_h)?;
    let a = config.section.a();
    let modes = compute_modes(&section, opts)?;
    let section_form = assemble_cross_section(&section)?;
    let tube = TubeSpec::new(config.section, TwistProfile::Zero, config.half_length)?;
    let axial = Grid1D::uniform(-config.half_length, config.half_length, config.axial_cells)?;
    let tube_form = assemble_straightened(&tube, &axial, &section)?;
    let line = Grid1D::uniform(-config.line_half_length, config.line_half_length, config.line_cells)?;
    let line_form = assemble_laplace_1d(&line, &|_| 0.0);
    let envelope = Envelope::Gaussian {
        width: config.envelope_width,
    };
    let seeds: Vec<u64> = (0..config.seeds as u64).map(|i| config.first_seed + i).collect();

    let run = |check: Check| -> Result<CheckReport> {
        let results = seeds
            .par_iter()
            .map(|&seed| {
                let spec = RandomFunctionSpec::new(seed).with_envelope(envelope);
                let m = match check {
                    Check::Angular => check_angular_bound(&section, &spec.sample(&section_form), a),
                    Check::HardyClassical => {
                        check_hardy_classical(&tube_form.layout, &spec.sample(&tube_form), config.interval)?
                    }
                    Check::Sobolev1d => {
                        let mut phi = vec![0.0];
                        phi.extend(spec.sample(&line_form));
                        phi.push(0.0);
                        check_sobolev_1d(&line, &phi)?
                    }
                    Check::PoincareSlice => {
                        check_poincare_slice(&section, &tube_form.layout, &spec.sample(&tube_form), modes.e1)?
                    }
                };
                Ok(SeedMargin {
                    seed,
                    margin: m.margin,
                    scale: m.scale,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CheckReport { check, results })
    };
    Check::ALL.into_iter().map(run).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sobolev_gaussian_matches_analytic_norms() {
        let grid = Grid1D::uniform(-8.0, 8.0, 4000).unwrap();
        let phi: Vec<f64> = grid.nodes().iter().map(|x| (-x * x).exp()).collect();
        let m = check_sobolev_1d(&grid, &phi).unwrap();
        // ‖φ'‖² = √(π/2), ‖φ‖² = √(π/2), ‖φ‖₁ = √π
        let exact = (PI / 2.0).sqrt() - 0.25 * (PI / 2.0).powf(1.5) / (PI * PI);
        assert!((m.margin - exact).abs() < 1e-5, "{} vs {exact}", m.margin);
    }

    #[test]
    fn sobolev_scaling_keeps_sign() {
        let grid = Grid1D::uniform(-10.0, 10.0, 800).unwrap();
        for sigma in [0.5, 1.0, 2.0] {
            let phi: Vec<f64> = grid.nodes().iter().map(|x| 3.0 * (-(x / sigma).powi(2)).exp()).collect();
            assert!(check_sobolev_1d(&grid, &phi).unwrap().margin > 0.0);
        }
        assert!(matches!(check_sobolev_1d(&grid, &vec![0.0; 801]), Err(Error::ZeroFunction)));
    }

    #[test]
    fn angular_linear_function() {
        let sec = Grid2D::lattice(CrossSection::square(PI), PI / 16.0).unwrap();
        let psi: Vec<f64> = sec.coords().iter().map(|p| p.0).collect();
        let m = check_angular_bound(&sec, &psi, CrossSection::square(PI).a());
        assert!(m.relative() >= -1e-12);
    }

    #[test]
    fn angular_radial_on_disc_has_no_tau() {
        let disc = CrossSection::Disc { radius: 1.0 };
        let sec = Grid2D::for_section(disc, 1.0 / 16.0).unwrap();
        let psi: Vec<f64> = sec.coords().iter().map(|p| 1.0 - p.0 * p.0 - p.1 * p.1).collect();
        assert!(sec.apply_tau(&psi).iter().all(|t| t.abs() < 1e-12));
        let m = check_angular_bound(&sec, &psi, disc.a());
        assert!(m.margin >= 0.0);
    }

    #[test]
    fn random_functions_are_reproducible() {
        let grid = Grid1D::uniform(-1.0, 1.0, 50).unwrap();
        let form = assemble_laplace_1d(&grid, &|_| 0.0);
        let a = RandomFunctionSpec::new(9).sample(&form);
        let b = RandomFunctionSpec::new(9).sample(&form);
        let c = RandomFunctionSpec::new(10).sample(&form);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn poincare_slice_is_tight_on_ground_mode() {
        let o = EigOptions::default();
        let sec = Grid2D::lattice(CrossSection::square(PI), PI / 12.0).unwrap();
        let modes = compute_modes(&sec, &o).unwrap();
        let tube = TubeSpec::new(CrossSection::square(PI), TwistProfile::Zero, 6.0).unwrap();
        let axial = Grid1D::uniform(-6.0, 6.0, 24).unwrap();
        let form = assemble_straightened(&tube, &axial, &sec).unwrap();
        let f: Vec<f64> = form.layout.axial.iter().map(|x| (-x * x).exp()).collect();
        let psi = form.layout.tensor(&f, &modes.j1);
        let m = check_poincare_slice(&sec, &form.layout, &psi, modes.e1).unwrap();
        assert!(m.relative().abs() < 1e-10, "{}", m.relative());
    }
}
