//! Discrete quadratic forms on tensor grids.
//!
//! Every stiffness matrix is assembled as a sum of weighted squares of
//! difference functionals, so it is symmetric positive semidefinite by
//! construction. The axial derivative lives on cell midpoints:
//! `(u_{j+1} - u_j)/h - θ̇(x_{j+1/2}) (T u_j + T u_{j+1})/2`, with `T` the
//! central-difference angular derivative on the section.

pub mod grid;
pub mod mmio;

use serde::{Deserialize, Serialize};

pub use grid::{AxialBc, Grid1D, Grid2D, SectionLayout, MAX_GRADING};
pub use mmio::{write_matrix_market, write_mass_market};

use crate::error::{Error, Result};
use crate::geometry::{TubeSpec, TwistProfile};
use crate::linalg::{CsrMatrix, FactorRow, SymBuilder};

/// Tensor layout of the unknowns: index `j * n_section + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// Axial coordinate of each unknown slice.
    pub axial: Vec<f64>,
    pub axial_mass: Vec<f64>,
    pub section_mass: Vec<f64>,
    /// Positions of Dirichlet end nodes, where the solution is zero.
    pub ends: Option<(f64, f64)>,
}

impl Layout {
    pub fn n(&self) -> usize {
        self.axial.len() * self.section_mass.len()
    }

    pub fn n_section(&self) -> usize {
        self.section_mass.len()
    }

    pub fn index(&self, j: usize, k: usize) -> usize {
        j * self.section_mass.len() + k
    }

    /// Axial coordinate of unknown `i`.
    pub fn x1(&self, i: usize) -> f64 {
        self.axial[i / self.section_mass.len()]
    }

    pub fn mass(&self) -> Vec<f64> {
        self.axial_mass
            .iter()
            .flat_map(|&a| self.section_mass.iter().map(move |&b| a * b))
            .collect()
    }

    /// `f(x₁) ⊗ g(x')`.
    pub fn tensor(&self, f: &[f64], g: &[f64]) -> Vec<f64> {
        f.iter().flat_map(|&a| g.iter().map(move |&b| a * b)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormKind {
    CrossSection,
    Straightened,
    Bounded,
    SelfSimilar,
    Oscillator,
    Laplace1D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormMeta {
    pub kind: FormKind,
    /// Self-similar time.
    pub s: Option<f64>,
    /// Multiple of the mass already subtracted from the stiffness.
    pub shift: f64,
    /// Core spacing coarser than one eighth of the twist half-width.
    pub under_resolved: bool,
}

impl FormMeta {
    fn new(kind: FormKind) -> Self {
        FormMeta {
            kind,
            s: None,
            shift: 0.0,
            under_resolved: false,
        }
    }
}

/// Symmetric stiffness `A` and lumped diagonal mass `M`.
#[derive(Debug, Clone)]
pub struct DiscreteForm {
    pub stiffness: CsrMatrix,
    pub mass: Vec<f64>,
    pub layout: Layout,
    pub meta: FormMeta,
}

impl DiscreteForm {
    pub fn n(&self) -> usize {
        self.mass.len()
    }

    /// The form `A - cM`.
    pub fn shifted(&self, c: f64) -> DiscreteForm {
        let mut meta = self.meta.clone();
        meta.shift += c;
        DiscreteForm {
            stiffness: self.stiffness.add_diag(-c, &self.mass),
            mass: self.mass.clone(),
            layout: self.layout.clone(),
            meta,
        }
    }

    /// `uᵀ A u`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        self.stiffness.quad_form(u)
    }

    /// `uᵀ M u`.
    pub fn mass_norm_sq(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.mass).map(|(x, m)| x * x * m).sum()
    }

    pub fn rayleigh(&self, u: &[f64]) -> f64 {
        self.energy(u) / self.mass_norm_sq(u)
    }
}

/// Axial weights for weighted mass matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    One,
    /// ρ² = 1/(1 + y²).
    RhoSq,
    /// ρ⁻² = 1 + y².
    RhoInvSq,
    /// K = exp(y²/4).
    K,
    /// K⁻¹ = exp(-y²/4).
    KInv,
}

/// Largest |y| for which exp(y²/4) is finite.
pub fn k_weight_limit() -> f64 {
    (4.0 * f64::MAX.ln()).sqrt()
}

impl Weight {
    pub fn value(self, y: f64) -> Result<f64> {
        Ok(match self {
            Weight::One => 1.0,
            Weight::RhoSq => 1.0 / (1.0 + y * y),
            Weight::RhoInvSq => 1.0 + y * y,
            Weight::K => {
                if y.abs() > k_weight_limit() {
                    return Err(Error::WeightOverflow { y: y.abs() });
                }
                (0.25 * y * y).exp()
            }
            Weight::KInv => (-0.25 * y * y).exp(),
        })
    }
}

/// Diagonal `M_w` with `w` evaluated at `x₁ / scale` of each unknown.
pub fn assemble_weighted_mass(layout: &Layout, weight: Weight, scale: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(layout.n());
    for (&x, &a) in layout.axial.iter().zip(&layout.axial_mass) {
        let w = weight.value(x / scale)?;
        out.extend(layout.section_mass.iter().map(|&b| a * b * w));
    }
    Ok(out)
}

pub fn assemble_cross_section(section: &Grid2D) -> Result<DiscreteForm> {
    if section.n() == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(DiscreteForm {
        stiffness: section.stiffness(),
        mass: section.mass().to_vec(),
        layout: Layout {
            axial: vec![0.0],
            axial_mass: vec![1.0],
            section_mass: section.mass().to_vec(),
            ends: None,
        },
        meta: FormMeta::new(FormKind::CrossSection),
    })
}

struct TubeTerms<'a> {
    axial: &'a Grid1D,
    bc: AxialBc,
    section: &'a Grid2D,
    rate: &'a dyn Fn(f64) -> f64,
    transverse_scale: f64,
    potential: Option<&'a dyn Fn(f64) -> f64>,
}

fn assemble_tube(t: &TubeTerms<'_>) -> (CsrMatrix, Vec<f64>, Layout) {
    let unknowns = t.bc.unknowns(t.axial);
    let n1 = unknowns.len();
    let n2 = t.section.n();
    let m1_all = t.axial.lumped_mass();
    let layout = Layout {
        axial: t.axial.nodes()[unknowns.clone()].to_vec(),
        axial_mass: m1_all[unknowns.clone()].to_vec(),
        section_mass: t.section.mass().to_vec(),
        ends: (t.bc == AxialBc::Dirichlet).then(|| (t.axial.start(), t.axial.end())),
    };
    let slot = |j: usize| -> Option<usize> { unknowns.contains(&j).then(|| j - unknowns.start) };
    let mut b = SymBuilder::new(n1 * n2);
    let m2 = t.section.mass();
    let tau = t.section.tau_rows();

    for e in 0..t.axial.cells() {
        let h = t.axial.spacing(e);
        let theta_dot = (t.rate)(t.axial.midpoint(e));
        let (lo, hi) = (slot(e), slot(e + 1));
        for k in 0..n2 {
            let mut row = FactorRow::new(h * m2[k]);
            if let Some(j) = hi {
                row.push(j * n2 + k, 1.0 / h);
            }
            if let Some(j) = lo {
                row.push(j * n2 + k, -1.0 / h);
            }
            if theta_dot != 0.0 {
                for j in [lo, hi].into_iter().flatten() {
                    for &(kk, c) in &tau[k] {
                        row.push(j * n2 + kk, -0.5 * theta_dot * c);
                    }
                }
            }
            b.add_factor(&row);
        }
    }
    for (j, &m1) in layout.axial_mass.iter().enumerate() {
        for g in t.section.grad_rows() {
            let mut row = FactorRow::new(m1 * t.transverse_scale * g.weight);
            for &(k, c) in &g.terms {
                row.push(j * n2 + k, c);
            }
            b.add_factor(&row);
        }
        if let Some(v) = t.potential {
            let pv = v(layout.axial[j]);
            for (k, &mk) in m2.iter().enumerate() {
                b.add(j * n2 + k, j * n2 + k, m1 * mk * pv);
            }
        }
    }
    let mass = layout.mass();
    (b.build(), mass, layout)
}

fn check_section(tube: &TubeSpec, section: &Grid2D) -> Result<()> {
    if *section.section() != tube.section {
        return Err(Error::GridMismatch("section grid built for a different cross-section".into()));
    }
    Ok(())
}

fn check_symmetric_axial(axial: &Grid1D, half_length: f64) -> Result<()> {
    let ok = (axial.start() + half_length).abs() <= 1e-12 * half_length
        && (axial.end() - half_length).abs() <= 1e-12 * half_length;
    if !ok {
        return Err(Error::GridMismatch(format!(
            "axial grid spans [{}, {}], expected [-{half_length}, {half_length}]",
            axial.start(),
            axial.end()
        )));
    }
    Ok(())
}

/// `Q_θ` on (-L, L) × ω with Dirichlet ends.
pub fn assemble_straightened(tube: &TubeSpec, axial: &Grid1D, section: &Grid2D) -> Result<DiscreteForm> {
    check_section(tube, section)?;
    check_symmetric_axial(axial, tube.half_length)?;
    let rate = |x: f64| tube.twist.rate(x);
    let (stiffness, mass, layout) = assemble_tube(&TubeTerms {
        axial,
        bc: AxialBc::Dirichlet,
        section,
        rate: &rate,
        transverse_scale: 1.0,
        potential: None,
    });
    Ok(DiscreteForm {
        stiffness,
        mass,
        layout,
        meta: FormMeta::new(FormKind::Straightened),
    })
}

/// `Q_θ` on I × ω with no condition at the ends of I; `axial` must span I.
pub fn assemble_bounded(
    tube: &TubeSpec,
    interval: (f64, f64),
    axial: &Grid1D,
    section: &Grid2D,
) -> Result<DiscreteForm> {
    check_section(tube, section)?;
    let (a, b) = interval;
    if !(b > a) {
        return Err(Error::InvalidArgument(format!("interval ({a}, {b})")));
    }
    let tol = 1e-12 * (1.0 + a.abs().max(b.abs()));
    if (axial.start() - a).abs() > tol || (axial.end() - b).abs() > tol {
        return Err(Error::GridMismatch(format!(
            "axial grid spans [{}, {}], interval is ({a}, {b})",
            axial.start(),
            axial.end()
        )));
    }
    if axial.cells() < 4 {
        return Err(Error::DegenerateInterval { cells: axial.cells() });
    }
    let rate = |x: f64| tube.twist.rate(x);
    let (stiffness, mass, layout) = assemble_tube(&TubeTerms {
        axial,
        bc: AxialBc::Natural,
        section,
        rate: &rate,
        transverse_scale: 1.0,
        potential: None,
    });
    Ok(DiscreteForm {
        stiffness,
        mass,
        layout,
        meta: FormMeta::new(FormKind::Bounded),
    })
}

/// Required core spacing for the self-similar form at time `s`.
pub fn selfsim_core_spacing(twist: &TwistProfile, s: f64) -> Option<f64> {
    twist
        .support()
        .map(|(a, b)| 0.125 * (-0.5 * s).exp() * 0.5 * (b - a))
}

/// `J_s^{(0)}[v] = ‖∂₁v - σ_s ∂_τ v‖² + ‖y₁v‖²/16 + e^s ‖∇'v‖² - E₁ e^s ‖v‖²`
/// on (-L, L) × ω with Dirichlet ends. `e1` is the discrete first mode of the section.
pub fn assemble_selfsim(
    tube: &TubeSpec,
    s: f64,
    axial: &Grid1D,
    section: &Grid2D,
    e1: f64,
) -> Result<DiscreteForm> {
    check_section(tube, section)?;
    check_symmetric_axial(axial, tube.half_length)?;
    let rate = |y: f64| tube.twist.sigma(s, y);
    let pot = |y: f64| y * y / 16.0;
    let es = s.exp();
    let (stiffness, mass, layout) = assemble_tube(&TubeTerms {
        axial,
        bc: AxialBc::Dirichlet,
        section,
        rate: &rate,
        transverse_scale: es,
        potential: Some(&pot),
    });
    let under_resolved = match (selfsim_core_spacing(&tube.twist, s), tube.twist.sigma_profile(s).support()) {
        (Some(h), Some((a, b))) => axial.max_spacing_on(a, b) > h * (1.0 + 1e-9),
        _ => false,
    };
    let mut meta = FormMeta::new(FormKind::SelfSimilar);
    meta.s = Some(s);
    meta.under_resolved = under_resolved;
    let form = DiscreteForm {
        stiffness,
        mass,
        layout,
        meta,
    };
    Ok(form.shifted(e1 * es))
}

fn assemble_1d(
    grid: &Grid1D,
    nodes: std::ops::Range<usize>,
    potential: &dyn Fn(f64) -> f64,
    kind: FormKind,
) -> DiscreteForm {
    let m_all = grid.lumped_mass();
    let n = nodes.len();
    let slot = |j: usize| nodes.contains(&j).then(|| j - nodes.start);
    let mut b = SymBuilder::new(n);
    for e in 0..grid.cells() {
        let (lo, hi) = (slot(e), slot(e + 1));
        if lo.is_none() && hi.is_none() {
            continue;
        }
        let h = grid.spacing(e);
        let mut row = FactorRow::new(h);
        if let Some(j) = hi {
            row.push(j, 1.0 / h);
        }
        if let Some(j) = lo {
            row.push(j, -1.0 / h);
        }
        b.add_factor(&row);
    }
    let ends = (grid.nodes()[nodes.start - 1], grid.nodes()[nodes.end]);
    let axial = grid.nodes()[nodes.clone()].to_vec();
    let axial_mass = m_all[nodes].to_vec();
    for (j, (&x, &m)) in axial.iter().zip(&axial_mass).enumerate() {
        let v = potential(x);
        if v != 0.0 {
            b.add(j, j, m * v);
        }
    }
    DiscreteForm {
        stiffness: b.build(),
        mass: axial_mass.clone(),
        layout: Layout {
            axial,
            axial_mass,
            section_mass: vec![1.0],
            ends: Some(ends),
        },
        meta: FormMeta::new(kind),
    }
}

/// `h = -d² + y²/16` on (-L, L), Dirichlet at ±L. With `dirichlet_at_zero` the
/// form is `h_D`, restricted to the half-line nodes `0 < y < L`.
pub fn assemble_oscillator(grid: &Grid1D, dirichlet_at_zero: bool) -> Result<DiscreteForm> {
    let pot = |y: f64| y * y / 16.0;
    let nodes = if dirichlet_at_zero {
        let z = grid
            .index_of(0.0)
            .ok_or_else(|| Error::GridMismatch("oscillator grid has no node at y = 0".into()))?;
        z + 1..grid.cells()
    } else {
        1..grid.cells()
    };
    Ok(assemble_1d(grid, nodes, &pot, FormKind::Oscillator))
}

/// `-d² + V` on the interior nodes of `grid`, Dirichlet at both ends.
pub fn assemble_laplace_1d(grid: &Grid1D, potential: &dyn Fn(f64) -> f64) -> DiscreteForm {
    assemble_1d(grid, 1..grid.cells(), potential, FormKind::Laplace1D)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CrossSection;

    fn square_section() -> Grid2D {
        Grid2D::lattice(CrossSection::square(std::f64::consts::PI), std::f64::consts::PI / 6.0).unwrap()
    }

    #[test]
    fn untwisted_form_splits_into_axial_and_section_parts() {
        let sec = square_section();
        let k = sec.stiffness();
        let g: Vec<f64> = sec.coords().iter().map(|&(x, y)| x.cos() * y.cos() + 0.1 * x).collect();
        let tube = TubeSpec::new(CrossSection::square(std::f64::consts::PI), TwistProfile::Zero, 8.0).unwrap();
        let axial = Grid1D::uniform(-8.0, 8.0, 32).unwrap();
        let form = assemble_straightened(&tube, &axial, &sec).unwrap();
        let line = assemble_laplace_1d(&axial, &|_| 0.0);
        let f: Vec<f64> = form.layout.axial.iter().map(|x| (-x * x / 4.0).exp()).collect();
        let u = form.layout.tensor(&f, &g);
        let g_mass: f64 = g.iter().zip(sec.mass()).map(|(a, m)| m * a * a).sum();
        let expected = line.energy(&f) * g_mass + k.quad_form(&g) * line.mass_norm_sq(&f);
        assert!((form.energy(&u) - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn twist_couples_slices_only_when_twisted() {
        let sec = square_section();
        let axial = Grid1D::uniform(-8.0, 8.0, 32).unwrap();
        let flat = TubeSpec::new(CrossSection::square(std::f64::consts::PI), TwistProfile::Zero, 8.0).unwrap();
        let twisted = TubeSpec::new(
            CrossSection::square(std::f64::consts::PI),
            TwistProfile::bump(2.0, 1.0).unwrap(),
            8.0,
        )
        .unwrap();
        let a = assemble_straightened(&flat, &axial, &sec).unwrap();
        let b = assemble_straightened(&twisted, &axial, &sec).unwrap();
        assert!(b.stiffness.nnz() > a.stiffness.nnz());
        assert_eq!(a.mass, b.mass);
    }

    #[test]
    fn weighted_mass_applies_weight_per_slice() {
        let sec = square_section();
        let axial = Grid1D::uniform(-8.0, 8.0, 32).unwrap();
        let tube = TubeSpec::new(CrossSection::square(std::f64::consts::PI), TwistProfile::Zero, 8.0).unwrap();
        let layout = assemble_straightened(&tube, &axial, &sec).unwrap().layout;
        let plain = layout.mass();
        let rho = assemble_weighted_mass(&layout, Weight::RhoSq, 1.0).unwrap();
        for (i, (r, m)) in rho.iter().zip(&plain).enumerate() {
            let x = layout.x1(i);
            assert!((r - m / (1.0 + x * x)).abs() < 1e-15);
        }
        assert!(Weight::K.value(2.0 * k_weight_limit()).is_err());
    }

    #[test]
    fn oscillator_needs_a_node_at_zero() {
        let odd = Grid1D::uniform(-20.0, 20.0, 401).unwrap();
        assert!(assemble_oscillator(&odd, true).is_err());
        let even = Grid1D::uniform(-20.0, 20.0, 400).unwrap();
        let hd = assemble_oscillator(&even, true).unwrap();
        assert!(hd.layout.axial.iter().all(|&y| y > 0.0));
        assert_eq!(hd.n(), 199);
    }

    #[test]
    fn coarse_selfsim_grid_is_flagged() {
        let sec = square_section();
        let tube = TubeSpec::new(
            CrossSection::square(std::f64::consts::PI),
            TwistProfile::bump(2.0, 1.0).unwrap(),
            10.0,
        )
        .unwrap();
        let coarse = Grid1D::uniform(-10.0, 10.0, 40).unwrap();
        let form = assemble_selfsim(&tube, 4.0, &coarse, &sec, 2.0).unwrap();
        assert!(form.meta.under_resolved);
        assert_eq!(form.meta.s, Some(4.0));
    }

    #[test]
    fn bounded_form_rejects_mismatched_interval() {
        let sec = square_section();
        let tube = TubeSpec::new(
            CrossSection::square(std::f64::consts::PI),
            TwistProfile::bump(1.0, 1.0).unwrap(),
            10.0,
        )
        .unwrap();
        let axial = Grid1D::uniform(-1.0, 1.0, 16).unwrap();
        assert!(assemble_bounded(&tube, (-1.0, 1.0), &axial, &sec).is_ok());
        assert!(assemble_bounded(&tube, (-0.5, 1.0), &axial, &sec).is_err());
        let short = Grid1D::uniform(-1.0, 1.0, 3).unwrap();
        assert!(assemble_bounded(&tube, (-1.0, 1.0), &short, &sec).is_err());
    }
}
