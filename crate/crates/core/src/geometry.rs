//! Tube geometry: cross-sections, twist profiles and the twisting map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Quadrature tolerance for the twist angle.
pub const THETA_TOL: f64 = 1e-12;

/// Bounded open cross-section, centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum CrossSection {
    /// Axis-aligned rectangle with side lengths `width` (x₂) and `height` (x₃).
    Rectangle { width: f64, height: f64 },
    /// Ellipse with semi-axes `semi_x` (x₂) and `semi_y` (x₃).
    Ellipse { semi_x: f64, semi_y: f64 },
    Disc { radius: f64 },
    Annulus { inner: f64, outer: f64 },
}

impl CrossSection {
    pub fn square(side: f64) -> Self {
        CrossSection::Rectangle {
            width: side,
            height: side,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CrossSection::Rectangle { width, height } => width > 0.0 && height > 0.0,
            CrossSection::Ellipse { semi_x, semi_y } => semi_x > 0.0 && semi_y > 0.0,
            CrossSection::Disc { radius } => radius > 0.0,
            CrossSection::Annulus { inner, outer } => inner > 0.0 && outer > inner,
        };
        let finite = match *self {
            CrossSection::Rectangle { width: p, height: q }
            | CrossSection::Ellipse {
                semi_x: p,
                semi_y: q,
            }
            | CrossSection::Annulus { inner: p, outer: q } => p.is_finite() && q.is_finite(),
            CrossSection::Disc { radius } => radius.is_finite(),
        };
        if ok && finite {
            Ok(())
        } else {
            Err(Error::InvalidGeometry(format!("{self:?}")))
        }
    }

    /// `a = sup |x'|` over the section.
    pub fn a(&self) -> f64 {
        match *self {
            CrossSection::Rectangle { width, height } => (0.5 * width).hypot(0.5 * height),
            CrossSection::Ellipse { semi_x, semi_y } => semi_x.max(semi_y),
            CrossSection::Disc { radius } => radius,
            CrossSection::Annulus { outer, .. } => outer,
        }
    }

    /// Half extents of the bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        match *self {
            CrossSection::Rectangle { width, height } => (0.5 * width, 0.5 * height),
            CrossSection::Ellipse { semi_x, semi_y } => (semi_x, semi_y),
            CrossSection::Disc { radius } => (radius, radius),
            CrossSection::Annulus { outer, .. } => (outer, outer),
        }
    }

    pub fn is_rotationally_symmetric(&self) -> bool {
        matches!(
            self,
            CrossSection::Disc { .. } | CrossSection::Annulus { .. }
        )
    }

    /// Strict interior test with a relative tolerance on the boundary.
    pub fn contains(&self, x2: f64, x3: f64) -> bool {
        const EPS: f64 = 1e-12;
        match *self {
            CrossSection::Rectangle { width, height } => {
                x2.abs() < 0.5 * width * (1.0 - EPS) && x3.abs() < 0.5 * height * (1.0 - EPS)
            }
            CrossSection::Ellipse { semi_x, semi_y } => {
                (x2 / semi_x).powi(2) + (x3 / semi_y).powi(2) < 1.0 - EPS
            }
            CrossSection::Disc { radius } => x2.hypot(x3) < radius * (1.0 - EPS),
            CrossSection::Annulus { inner, outer } => {
                let r = x2.hypot(x3);
                r > inner * (1.0 + EPS) && r < outer * (1.0 - EPS)
            }
        }
    }
}

/// Monotone cubic (Fritsch–Carlson) interpolant of tabulated twist rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Knots", into = "Knots")]
pub struct Tabulated {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    slopes: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Knots {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl TryFrom<Knots> for Tabulated {
    type Error = Error;
    fn try_from(k: Knots) -> Result<Self> {
        Tabulated::new(k.x, k.y)
    }
}

impl From<Tabulated> for Knots {
    fn from(t: Tabulated) -> Self {
        Knots { x: t.x, y: t.y }
    }
}

impl Tabulated {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() < 2 || x.len() != y.len() {
            return Err(Error::InvalidTwist("need at least two knots of matching length".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTwist("non-finite knot".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTwist("knots must increase strictly".into()));
        }
        if y[0] != 0.0 || y[y.len() - 1] != 0.0 {
            return Err(Error::InvalidTwist("rate must vanish at the end knots".into()));
        }
        let slopes = fritsch_carlson(&x, &y);
        Ok(Tabulated { x, y, slopes })
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] || t >= self.x[n - 1] {
            return 0.0;
        }
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h10 * h * self.slopes[i] + h01 * self.y[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

fn fritsch_carlson(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for i in 1..n - 1 {
        m[i] = if d[i - 1] * d[i] <= 0.0 {
            0.0
        } else {
            0.5 * (d[i - 1] + d[i])
        };
    }
    for i in 0..n - 1 {
        if d[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let a = m[i] / d[i];
        let b = m[i + 1] / d[i];
        let r = a * a + b * b;
        if r > 9.0 {
            let t = 3.0 / r.sqrt();
            m[i] = t * a * d[i];
            m[i + 1] = t * b * d[i];
        }
    }
    m
}

/// Twist rate θ̇ with compact support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TwistProfile {
    Zero,
    /// `β (1 - (x/w)²)²` on `[-w, w]`.
    Bump { beta: f64, width: f64 },
    Tabulated(Tabulated),
}

impl TwistProfile {
    pub fn bump(beta: f64, width: f64) -> Result<Self> {
        let p = TwistProfile::Bump { beta, width };
        p.validate()?;
        Ok(p)
    }

    pub fn tabulated(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Ok(TwistProfile::Tabulated(Tabulated::new(x, y)?))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TwistProfile::Zero => Ok(()),
            TwistProfile::Bump { beta, width } => {
                if beta.is_finite() && width.is_finite() && *width > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidTwist(format!("bump beta={beta} width={width}")))
                }
            }
            TwistProfile::Tabulated(_) => Ok(()),
        }
    }

    /// θ̇(x).
    pub fn rate(&self, x: f64) -> f64 {
        match self {
            TwistProfile::Zero => 0.0,
            TwistProfile::Bump { beta, width } => {
                let s = x / width;
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    let q = 1.0 - s * s;
                    beta * q * q
                }
            }
            TwistProfile::Tabulated(t) => t.eval(x),
        }
    }

    /// Closed interval outside of which θ̇ vanishes, `None` for the zero profile.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            TwistProfile::Zero => None,
            TwistProfile::Bump { beta, width } => (*beta != 0.0).then_some((-width, *width)),
            TwistProfile::Tabulated(t) => {
                let first = t.y.iter().position(|&v| v != 0.0)?;
                let last = t.y.iter().rposition(|&v| v != 0.0)?;
                Some((t.x[first.saturating_sub(1)], t.x[(last + 1).min(t.x.len() - 1)]))
            }
        }
    }

    /// Largest |x| in the support, zero when untwisted.
    pub fn support_radius(&self) -> f64 {
        self.support().map_or(0.0, |(a, b)| a.abs().max(b.abs()))
    }

    /// ‖θ̇‖_∞.
    pub fn sup_norm(&self) -> f64 {
        match self {
            TwistProfile::Zero => 0.0,
            TwistProfile::Bump { beta, .. } => beta.abs(),
            TwistProfile::Tabulated(t) => {
                let mut m: f64 = t.y.iter().fold(0.0, |m, v| m.max(v.abs()));
                for w in t.x.windows(2) {
                    for k in 1..32 {
                        let x = w[0] + (w[1] - w[0]) * k as f64 / 32.0;
                        m = m.max(self.rate(x).abs());
                    }
                }
                m
            }
        }
    }

    pub fn is_twisted(&self) -> bool {
        match self {
            TwistProfile::Zero => false,
            TwistProfile::Bump { beta, .. } => *beta != 0.0,
            TwistProfile::Tabulated(t) => t.y.iter().any(|&v| v != 0.0),
        }
    }

    /// Break points of the piecewise definition, used to split quadrature.
    fn breaks(&self) -> Vec<f64> {
        match self {
            TwistProfile::Zero => vec![],
            TwistProfile::Bump { width, .. } => vec![-width, *width],
            TwistProfile::Tabulated(t) => t.x.clone(),
        }
    }

    /// θ(x) = ∫_{-∞}^x θ̇.
    pub fn theta(&self, x: f64) -> f64 {
        let Some((lo, _)) = self.support() else {
            return 0.0;
        };
        if x <= lo {
            return 0.0;
        }
        let pts: Vec<f64> = self
            .breaks()
            .into_iter()
            .filter(|&b| b > lo && b < x)
            .chain(std::iter::once(x))
            .collect();
        let f = |t: f64| self.rate(t);
        let mut acc = 0.0;
        let mut a = lo;
        for b in pts {
            acc += quad::integrate(&f, a, b, THETA_TOL);
            a = b;
        }
        acc
    }

    /// Total twist angle ∫ θ̇.
    pub fn total_angle(&self) -> f64 {
        self.support().map_or(0.0, |(_, b)| self.theta(b))
    }

    /// σ_s(y) = e^{s/2} θ̇(e^{s/2} y).
    pub fn sigma(&self, s: f64, y: f64) -> f64 {
        let k = (0.5 * s).exp();
        k * self.rate(k * y)
    }

    pub fn sigma_profile(&self, s: f64) -> SigmaProfile<'_> {
        SigmaProfile { twist: self, s }
    }
}

/// Self-similar twist rate at time `s`.
#[derive(Debug, Clone, Copy)]
pub struct SigmaProfile<'a> {
    pub twist: &'a TwistProfile,
    pub s: f64,
}

impl SigmaProfile<'_> {
    pub fn eval(&self, y: f64) -> f64 {
        self.twist.sigma(self.s, y)
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        let k = (-0.5 * self.s).exp();
        self.twist.support().map(|(a, b)| (a * k, b * k))
    }

    /// ∫ σ_s, equal to the total twist angle for every `s`.
    pub fn integral(&self, tol: f64) -> f64 {
        let Some((a, b)) = self.support() else {
            return 0.0;
        };
        let k = (-0.5 * self.s).exp();
        let pts: Vec<f64> = self.twist.breaks().into_iter().map(|p| p * k).collect();
        let f = |y: f64| self.eval(y);
        let mut acc = 0.0;
        let mut lo = a;
        for p in pts.into_iter().filter(|&p| p > a && p < b).chain(std::iter::once(b)) {
            acc += quad::integrate(&f, lo, p, tol);
            lo = p;
        }
        acc
    }
}

/// ℒ_θ(x) = (x₁, x₂ cos θ + x₃ sin θ, -x₂ sin θ + x₃ cos θ).
pub fn twist_map(twist: &TwistProfile, x: [f64; 3]) -> [f64; 3] {
    let (s, c) = twist.theta(x[0]).sin_cos();
    [x[0], x[1] * c + x[2] * s, -x[1] * s + x[2] * c]
}

/// Determinant of Dℒ_θ by central differences.
pub fn jacobian_det(twist: &TwistProfile, x: [f64; 3]) -> f64 {
    let mut j = [[0.0; 3]; 3];
    for col in 0..3 {
        let h = 1e-5 * (1.0 + x[col].abs());
        let mut xp = x;
        let mut xm = x;
        xp[col] += h;
        xm[col] -= h;
        let fp = twist_map(twist, xp);
        let fm = twist_map(twist, xm);
        for row in 0..3 {
            j[row][col] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }
    j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
        + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
}

/// Tube Ω_θ = ℒ_θ(ℝ × ω), truncated to |x₁| < `half_length` for computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    pub section: CrossSection,
    pub twist: TwistProfile,
    pub half_length: f64,
}

impl TubeSpec {
    pub fn new(section: CrossSection, twist: TwistProfile, half_length: f64) -> Result<Self> {
        let t = TubeSpec {
            section,
            twist,
            half_length,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        self.section.validate()?;
        self.twist.validate()?;
        let need = self.twist.support_radius() + 5.0;
        if !(self.half_length > need) {
            return Err(Error::InvalidGeometry(format!(
                "half length {} must exceed {need}",
                self.half_length
            )));
        }
        Ok(())
    }

    pub fn is_twisted(&self) -> bool {
        self.twist.is_twisted()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn bump_angle_at_centre() {
        let t = TwistProfile::bump(1.0, 1.0).unwrap();
        assert!((t.theta(0.0) - 8.0 / 15.0).abs() < 1e-12);
        assert!((t.total_angle() - 16.0 / 15.0).abs() < 1e-12);
        assert_eq!(t.theta(-3.0), 0.0);
    }

    #[test]
    fn square_a_and_symmetry_flags() {
        let sq = CrossSection::square(PI);
        assert!((sq.a() - PI / 2f64.sqrt()).abs() < 1e-15);
        assert!(!sq.is_rotationally_symmetric());
        assert!(CrossSection::Disc { radius: 1.0 }.is_rotationally_symmetric());
        assert!(CrossSection::Annulus { inner: 0.5, outer: 1.0 }.is_rotationally_symmetric());
        assert_eq!(CrossSection::Ellipse { semi_x: 2.0, semi_y: 1.0 }.a(), 2.0);
    }

    #[test]
    fn zero_twist_is_identity() {
        let x = [0.3, -0.7, 1.1];
        assert_eq!(twist_map(&TwistProfile::Zero, x), x);
        assert!(!TwistProfile::Zero.is_twisted());
    }

    #[test]
    fn jacobian_is_one() {
        let t = TwistProfile::bump(2.0, 1.0).unwrap();
        for x in [[0.0, 0.5, -0.5], [0.7, 1.0, 0.3], [-0.95, -1.2, 0.1]] {
            assert!((jacobian_det(&t, x) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn tube_length_must_clear_support() {
        let t = TwistProfile::bump(1.0, 1.0).unwrap();
        assert!(TubeSpec::new(CrossSection::square(PI), t.clone(), 6.0).is_err());
        assert!(TubeSpec::new(CrossSection::square(PI), t, 6.5).is_ok());
    }

    #[test]
    fn tabulated_matches_knots_and_is_monotone_between() {
        let t = TwistProfile::tabulated(vec![-1.0, -0.5, 0.0, 0.5, 1.0], vec![0.0, 0.5, 1.0, 0.5, 0.0]).unwrap();
        assert!((t.rate(0.0) - 1.0).abs() < 1e-15);
        assert!((t.rate(-0.5) - 0.5).abs() < 1e-15);
        let mut prev = t.rate(-1.0);
        for k in 1..=100 {
            let v = t.rate(-1.0 + k as f64 * 0.01);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        assert_eq!(t.support(), Some((-1.0, 1.0)));
    }

    #[test]
    fn invalid_profiles_are_rejected() {
        assert!(TwistProfile::bump(1.0, 0.0).is_err());
        assert!(TwistProfile::tabulated(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(TwistProfile::tabulated(vec![1.0, 0.0], vec![0.0, 0.0]).is_err());
    }
}
