//! Envelope (skyline) Cholesky factorization for SPD matrices.

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Lower factor `L` with `A = L Lᵀ`, stored row by row from the first
/// structural nonzero of each row to the diagonal.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..n {
        s += a[k] * b[k];
    }
    s
}

impl SkylineCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let mut first = vec![0usize; n];
        for (i, f) in first.iter_mut().enumerate() {
            let (c, _) = a.row(i);
            *f = c.first().copied().unwrap_or(i).min(i);
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for i in 0..n {
            let (c, v) = a.row(i);
            let base = start[i] - first[i];
            for (&j, &x) in c.iter().zip(v) {
                if j <= i {
                    data[base + j] = x;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let (done, rest) = data.split_at_mut(start[i]);
            let row = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let rj = &done[start[j]..start[j + 1]];
                let s = dot(&row[k0 - fi..j - fi], &rj[k0 - fj..j - fj]);
                let ljj = rj[j - fj];
                row[j - fi] = (row[j - fi] - s) / ljj;
            }
            let s = dot(&row[..i - fi], &row[..i - fi]);
            let d = row[i - fi] - s;
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { row: i, pivot: d });
            }
            row[i - fi] = d.sqrt();
        }
        Ok(SkylineCholesky {
            n,
            first,
            start,
            data,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entries of the factor.
    pub fn profile_size(&self) -> usize {
        self.data.len()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let s = dot(&row[..i - fi], &x[fi..i]);
            x[i] = (x[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let xi = x[i] / row[i - fi];
            x[i] = xi;
            for (xk, l) in x[fi..i].iter_mut().zip(&row[..i - fi]) {
                *xk -= l * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// log det A.
    pub fn log_det(&self) -> f64 {
        (0..self.n)
            .map(|i| 2.0 * self.data[self.start[i + 1] - 1].ln())
            .sum()
    }
}

/// Solves `A x = b` with one step of iterative refinement and returns the
/// relative residual `‖b - A x‖ / ‖b‖`.
pub fn solve_refined(a: &CsrMatrix, chol: &SkylineCholesky, b: &[f64], x: &mut [f64]) -> f64 {
    x.copy_from_slice(b);
    chol.solve_in_place(x);
    let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bn == 0.0 {
        return 0.0;
    }
    let mut r = a.apply(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    chol.solve_in_place(&mut r);
    for (xi, di) in x.iter_mut().zip(&r) {
        *xi += di;
    }
    let ax = a.apply(x);
    ax.iter()
        .zip(b)
        .map(|(p, q)| (q - p) * (q - p))
        .sum::<f64>()
        .sqrt()
        / bn
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sparse::SymBuilder;

    fn laplacian_2d(m: usize) -> CsrMatrix {
        let mut b = SymBuilder::new(m * m);
        for i in 0..m {
            for j in 0..m {
                let p = i * m + j;
                b.add(p, p, 4.0);
                if j + 1 < m {
                    b.add(p, p + 1, -1.0);
                }
                if i + 1 < m {
                    b.add(p, p + m, -1.0);
                }
            }
        }
        b.build()
    }

    #[test]
    fn solves_laplacian() {
        let a = laplacian_2d(12);
        let c = SkylineCholesky::factor(&a).unwrap();
        let xs: Vec<f64> = (0..144).map(|k| ((k * 7 % 13) as f64) - 6.0).collect();
        let b = a.apply(&xs);
        let x = c.solve(&b);
        let err = x.iter().zip(&xs).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        let mut y = vec![0.0; 144];
        let res = solve_refined(&a, &c, &b, &mut y);
        assert!(res < 1e-14);
    }

    #[test]
    fn rejects_indefinite() {
        let a = laplacian_2d(4).add_diag(-10.0, &[1.0; 16]);
        assert!(matches!(
            SkylineCholesky::factor(&a),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn log_det_of_diagonal() {
        let a = CsrMatrix::diag(&[2.0, 3.0, 5.0]);
        let c = SkylineCholesky::factor(&a).unwrap();
        assert!((c.log_det() - 30f64.ln()).abs() < 1e-14);
    }
}
