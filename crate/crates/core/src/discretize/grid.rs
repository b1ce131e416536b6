//! Axial and cross-section grids.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::CrossSection;
use crate::linalg::{CsrMatrix, FactorRow, SymBuilder};

/// Largest admissible ratio of neighbouring cell lengths in a graded grid.
pub const MAX_GRADING: f64 = 1.2;

/// Nodes of a one-dimensional grid, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    nodes: Vec<f64>,
}

impl Grid1D {
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("grid nodes must increase strictly".into()));
        }
        Ok(Grid1D { nodes })
    }

    pub fn uniform(a: f64, b: f64, cells: usize) -> Result<Self> {
        if cells == 0 || !(b > a) {
            return Err(Error::InvalidArgument(format!("uniform grid on [{a}, {b}] with {cells} cells")));
        }
        let h = (b - a) / cells as f64;
        let mut nodes: Vec<f64> = (0..=cells).map(|j| a + h * j as f64).collect();
        nodes[cells] = b;
        // pin the midpoint of symmetric grids to zero exactly
        if a == -b && cells % 2 == 0 {
            nodes[cells / 2] = 0.0;
        }
        Ok(Grid1D { nodes })
    }

    /// Symmetric grid on [-L, L] with spacing `h_fine` on [-core, core], geometric
    /// growth by `ratio` up to `h_coarse`, then uniform cells of at most `h_coarse`.
    pub fn graded(half_length: f64, core: f64, h_fine: f64, h_coarse: f64, ratio: f64) -> Result<Self> {
        if !(half_length > 0.0 && h_fine > 0.0 && h_coarse > 0.0 && core >= 0.0) {
            return Err(Error::InvalidArgument("graded grid parameters must be positive".into()));
        }
        if !(ratio > 1.0 && ratio <= MAX_GRADING) {
            return Err(Error::InvalidArgument(format!("grading ratio {ratio} outside (1, {MAX_GRADING}]")));
        }
        if h_fine >= h_coarse {
            let cells = 2 * (half_length / h_coarse).ceil() as usize;
            return Grid1D::uniform(-half_length, half_length, cells);
        }
        let mut half = vec![0.0];
        let core_cells = (core / h_fine).ceil() as usize;
        for j in 1..=core_cells {
            half.push(h_fine * j as f64);
        }
        let mut h = h_fine;
        loop {
            h *= ratio;
            if h >= h_coarse {
                break;
            }
            half.push(half.last().unwrap() + h);
        }
        let x0 = *half.last().unwrap();
        let rest = half_length - x0;
        if rest < 6.0 * h_coarse {
            return Err(Error::InvalidArgument(format!(
                "half length {half_length} too short for the grading (transition ends at {x0})"
            )));
        }
        let n = (rest / h_coarse).ceil() as usize;
        let hc = rest / n as f64;
        for j in 1..=n {
            half.push(x0 + hc * j as f64);
        }
        *half.last_mut().unwrap() = half_length;
        let mut nodes: Vec<f64> = half.iter().rev().map(|x| -x).collect();
        nodes.pop();
        nodes.extend_from_slice(&half);
        nodes[half.len() - 1] = 0.0;
        Ok(Grid1D { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn spacing(&self, e: usize) -> f64 {
        self.nodes[e + 1] - self.nodes[e]
    }

    pub fn midpoint(&self, e: usize) -> f64 {
        0.5 * (self.nodes[e + 1] + self.nodes[e])
    }

    /// Largest ratio between neighbouring cell lengths.
    pub fn max_ratio(&self) -> f64 {
        (1..self.cells())
            .map(|e| {
                let (a, b) = (self.spacing(e - 1), self.spacing(e));
                (a / b).max(b / a)
            })
            .fold(1.0, f64::max)
    }

    /// Largest cell length among cells meeting [a, b].
    pub fn max_spacing_on(&self, a: f64, b: f64) -> f64 {
        (0..self.cells())
            .filter(|&e| self.nodes[e + 1] > a && self.nodes[e] < b)
            .map(|e| self.spacing(e))
            .fold(0.0, f64::max)
    }

    /// Index of a node equal to `x` up to 1e-12.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        self.nodes.iter().position(|&v| (v - x).abs() <= 1e-12 * (1.0 + x.abs()))
    }

    /// Lumped (trapezoidal) weights of all nodes.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let n = self.nodes.len();
        (0..n)
            .map(|j| {
                let left = if j > 0 { self.spacing(j - 1) } else { 0.0 };
                let right = if j + 1 < n { self.spacing(j) } else { 0.0 };
                0.5 * (left + right)
            })
            .collect()
    }
}

/// Which axial nodes carry unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxialBc {
    /// u = 0 at both ends; interior nodes only.
    Dirichlet,
    /// No end condition; every node is an unknown.
    Natural,
}

impl AxialBc {
    /// Grid node indices of the unknowns.
    pub fn unknowns(self, grid: &Grid1D) -> std::ops::Range<usize> {
        match self {
            AxialBc::Dirichlet => 1..grid.cells(),
            AxialBc::Natural => 0..grid.cells() + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SectionLayout {
    /// Nodes of the lattice `h ℤ²` inside the section, x₂ fastest.
    Lattice { h: f64, index: Vec<(i64, i64)> },
    /// Rings of `n_phi` nodes at radii `radii`, angle fastest.
    Polar {
        radii: Vec<f64>,
        dr: f64,
        n_phi: usize,
    },
}

/// Cross-section grid with Dirichlet conditions on ∂ω.
#[derive(Debug, Clone)]
pub struct Grid2D {
    section: CrossSection,
    layout: SectionLayout,
    coords: Vec<(f64, f64)>,
    mass: Vec<f64>,
    grad_rows: Vec<FactorRow>,
    tau_rows: Vec<Vec<(usize, f64)>>,
}

impl Grid2D {
    /// Lattice grid for non-rotational sections, polar grid for discs and annuli.
    pub fn for_section(section: CrossSection, h: f64) -> Result<Self> {
        match section {
            CrossSection::Disc { radius } => {
                let nr = (radius / h).round().max(2.0) as usize;
                Grid2D::polar(section, nr, polar_angles(radius, h))
            }
            CrossSection::Annulus { inner, outer } => {
                let nr = ((outer - inner) / h).round().max(2.0) as usize;
                Grid2D::polar(section, nr, polar_angles(outer, h))
            }
            _ => Grid2D::lattice(section, h),
        }
    }

    /// Interior nodes of `h ℤ²`, a staircase approximation of ω.
    pub fn lattice(section: CrossSection, h: f64) -> Result<Self> {
        section.validate()?;
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("spacing {h}")));
        }
        let (ex, ey) = section.half_extents();
        let ix = (ex / h).ceil() as i64 + 1;
        let iy = (ey / h).ceil() as i64 + 1;
        let inside = |i: i64, j: i64| section.contains(i as f64 * h, j as f64 * h);
        let mut index = Vec::new();
        for j in -iy..=iy {
            for i in -ix..=ix {
                if inside(i, j) {
                    index.push((i, j));
                }
            }
        }
        if index.is_empty() {
            return Err(Error::EmptyMask);
        }
        let lookup: std::collections::HashMap<(i64, i64), usize> =
            index.iter().enumerate().map(|(k, &p)| (p, k)).collect();
        let coords: Vec<(f64, f64)> = index.iter().map(|&(i, j)| (i as f64 * h, j as f64 * h)).collect();
        let mass = vec![h * h; index.len()];

        let mut grad_rows = Vec::new();
        // every lattice edge with at least one interior end, once
        let mut edges: Vec<((i64, i64), (i64, i64))> = Vec::new();
        for &(i, j) in &index {
            for (di, dj) in [(1, 0), (0, 1)] {
                edges.push(((i, j), (i + di, j + dj)));
                if !lookup.contains_key(&(i - di, j - dj)) {
                    edges.push(((i - di, j - dj), (i, j)));
                }
            }
        }
        for (p, q) in edges {
            let mut r = FactorRow::new(h * h);
            if let Some(&k) = lookup.get(&q) {
                r.push(k, 1.0 / h);
            }
            if let Some(&k) = lookup.get(&p) {
                r.push(k, -1.0 / h);
            }
            grad_rows.push(r);
        }

        let tau_rows = index
            .iter()
            .map(|&(i, j)| {
                let (x2, x3) = (i as f64 * h, j as f64 * h);
                let mut row = Vec::with_capacity(4);
                let c2 = x3 / (2.0 * h);
                let c3 = -x2 / (2.0 * h);
                for (nb, c) in [((i + 1, j), c2), ((i - 1, j), -c2), ((i, j + 1), c3), ((i, j - 1), -c3)] {
                    if let Some(&k) = lookup.get(&nb) {
                        if c != 0.0 {
                            row.push((k, c));
                        }
                    }
                }
                row
            })
            .collect();

        Ok(Grid2D {
            section,
            layout: SectionLayout::Lattice { h, index },
            coords,
            mass,
            grad_rows,
            tau_rows,
        })
    }

    /// Finite-volume grid in polar coordinates for discs and annuli.
    ///
    /// Disc: nodes at r = (j + 1/2) Δr, Δr = R / (n_r + 1/2), so the wall sits one
    /// spacing past the last ring. Annulus: both walls one spacing from the rings.
    pub fn polar(section: CrossSection, n_r: usize, n_phi: usize) -> Result<Self> {
        section.validate()?;
        if n_r < 2 || n_phi < 4 {
            return Err(Error::InvalidArgument(format!("polar grid {n_r} x {n_phi}")));
        }
        let (radii, dr, inner_wall) = match section {
            CrossSection::Disc { radius } => {
                let dr = radius / (n_r as f64 + 0.5);
                ((0..n_r).map(|j| (j as f64 + 0.5) * dr).collect::<Vec<_>>(), dr, false)
            }
            CrossSection::Annulus { inner, outer } => {
                let dr = (outer - inner) / (n_r as f64 + 1.0);
                ((0..n_r).map(|j| inner + (j as f64 + 1.0) * dr).collect(), dr, true)
            }
            _ => {
                return Err(Error::InvalidGeometry(
                    "polar grids need a disc or annulus".into(),
                ))
            }
        };
        let dphi = 2.0 * PI / n_phi as f64;
        let idx = |j: usize, k: usize| j * n_phi + k;
        let mut coords = Vec::with_capacity(n_r * n_phi);
        let mut mass = Vec::with_capacity(n_r * n_phi);
        for &r in &radii {
            for k in 0..n_phi {
                let phi = (k as f64 + 0.5) * dphi;
                coords.push((r * phi.cos(), r * phi.sin()));
                mass.push(r * dr * dphi);
            }
        }
        let mut grad_rows = Vec::new();
        for k in 0..n_phi {
            if inner_wall {
                let mut r = FactorRow::new((radii[0] - 0.5 * dr) * dr * dphi);
                r.push(idx(0, k), 1.0 / dr);
                grad_rows.push(r);
            }
            for (j, &rj) in radii.iter().enumerate() {
                let mut r = FactorRow::new((rj + 0.5 * dr) * dr * dphi);
                if j + 1 < n_r {
                    r.push(idx(j + 1, k), 1.0 / dr);
                }
                r.push(idx(j, k), -1.0 / dr);
                grad_rows.push(r);
            }
        }
        for (j, &rj) in radii.iter().enumerate() {
            for k in 0..n_phi {
                let mut r = FactorRow::new(dr * dphi / rj);
                r.push(idx(j, (k + 1) % n_phi), 1.0 / dphi);
                r.push(idx(j, k), -1.0 / dphi);
                grad_rows.push(r);
            }
        }
        // ∂_τ = -∂_φ
        let c = 1.0 / (2.0 * dphi);
        let tau_rows = (0..n_r)
            .flat_map(|j| {
                (0..n_phi).map(move |k| vec![(idx(j, (k + 1) % n_phi), -c), (idx(j, (k + n_phi - 1) % n_phi), c)])
            })
            .collect();
        Ok(Grid2D {
            section,
            layout: SectionLayout::Polar { radii, dr, n_phi },
            coords,
            mass,
            grad_rows,
            tau_rows,
        })
    }

    pub fn section(&self) -> &CrossSection {
        &self.section
    }

    pub fn layout(&self) -> &SectionLayout {
        &self.layout
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[(f64, f64)] {
        &self.coords
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Weighted difference rows whose squares sum to the Dirichlet energy.
    pub fn grad_rows(&self) -> &[FactorRow] {
        &self.grad_rows
    }

    /// Rows of the discrete angular derivative ∂_τ = x₃∂₂ - x₂∂₃.
    pub fn tau_rows(&self) -> &[Vec<(usize, f64)>] {
        &self.tau_rows
    }

    pub fn apply_tau(&self, u: &[f64]) -> Vec<f64> {
        self.tau_rows
            .iter()
            .map(|row| row.iter().map(|&(k, c)| c * u[k]).sum())
            .collect()
    }

    /// Dirichlet stiffness matrix of the section.
    pub fn stiffness(&self) -> CsrMatrix {
        let mut b = SymBuilder::new(self.n());
        for r in &self.grad_rows {
            b.add_factor(r);
        }
        b.build()
    }

    /// Pointwise |∇'u| from central differences, consistent with `apply_tau`.
    pub fn gradient_magnitude(&self, u: &[f64]) -> Vec<f64> {
        match &self.layout {
            SectionLayout::Lattice { h, index } => {
                let lookup: std::collections::HashMap<(i64, i64), usize> =
                    index.iter().enumerate().map(|(k, &p)| (p, k)).collect();
                let at = |p: (i64, i64)| lookup.get(&p).map_or(0.0, |&k| u[k]);
                index
                    .iter()
                    .map(|&(i, j)| {
                        let g2 = (at((i + 1, j)) - at((i - 1, j))) / (2.0 * h);
                        let g3 = (at((i, j + 1)) - at((i, j - 1))) / (2.0 * h);
                        g2.hypot(g3)
                    })
                    .collect()
            }
            SectionLayout::Polar { radii, dr, n_phi } => {
                let n_phi = *n_phi;
                let dphi = 2.0 * PI / n_phi as f64;
                let disc = matches!(self.section, CrossSection::Disc { .. });
                let mut out = Vec::with_capacity(self.n());
                for (j, &r) in radii.iter().enumerate() {
                    for k in 0..n_phi {
                        let up = if j + 1 < radii.len() { u[(j + 1) * n_phi + k] } else { 0.0 };
                        let down = if j > 0 {
                            u[(j - 1) * n_phi + k]
                        } else if disc {
                            // across the centre
                            u[(k + n_phi / 2) % n_phi]
                        } else {
                            0.0
                        };
                        let gr = (up - down) / (2.0 * dr);
                        let gphi = (u[j * n_phi + (k + 1) % n_phi] - u[j * n_phi + (k + n_phi - 1) % n_phi])
                            / (2.0 * dphi);
                        out.push(gr.hypot(gphi / r));
                    }
                }
                out
            }
        }
    }

    /// Node spacing of the grid, `h` for lattices and `Δr` for polar grids.
    pub fn spacing(&self) -> f64 {
        match &self.layout {
            SectionLayout::Lattice { h, .. } => *h,
            SectionLayout::Polar { dr, .. } => *dr,
        }
    }
}

fn polar_angles(radius: f64, h: f64) -> usize {
    let n = (2.0 * PI * radius / h).ceil() as usize;
    n.div_ceil(4).max(1) * 4
}
