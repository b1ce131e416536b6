//! Compressed sparse row storage and a symmetric assembler.

/// Square CSR matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map_or(0.0, |p| v[p])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn diag(d: &[f64]) -> Self {
        CsrMatrix {
            n: d.len(),
            row_ptr: (0..=d.len()).collect(),
            cols: (0..d.len()).collect(),
            vals: d.to_vec(),
        }
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, a)| a * x[j]).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    /// xᵀ A x.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                x[i] * c.iter().zip(v).map(|(&j, a)| a * x[j]).sum::<f64>()
            })
            .sum()
    }

    /// A + alpha·diag(d).
    pub fn add_diag(&self, alpha: f64, d: &[f64]) -> Self {
        let mut out = self.clone();
        out.add_diag_in_place(alpha, d);
        out
    }

    pub fn add_diag_in_place(&mut self, alpha: f64, d: &[f64]) {
        for (i, di) in d.iter().enumerate().take(self.n) {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            match self.cols[r.clone()].binary_search(&i) {
                Ok(p) => self.vals[r.start + p] += alpha * di,
                Err(p) => {
                    let at = r.start + p;
                    self.cols.insert(at, i);
                    self.vals.insert(at, alpha * di);
                    for q in &mut self.row_ptr[i + 1..] {
                        *q += 1;
                    }
                }
            }
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).all(|(&j, &a)| self.get(j, i) == a)
        })
    }

    /// Largest |i - j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .map(|i| {
                let (c, _) = self.row(i);
                c.iter().map(|&j| j.abs_diff(i)).max().unwrap_or(0)
            })
            .max()
            .unwrap_or(0)
    }

    /// Entries with `j <= i`, one per stored lower-triangle position.
    pub fn lower_triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter()
                .zip(v)
                .filter(move |(&j, _)| j <= i)
                .map(move |(&j, &a)| (i, j, a))
        })
    }

    /// Dense copy, for tests and tiny problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j] = a;
            }
        }
        d
    }
}

/// One weighted linear functional `w · (Σ c_k u_k)²` contributing to a quadratic form.
#[derive(Debug, Clone, Default)]
pub struct FactorRow {
    pub weight: f64,
    pub terms: Vec<(usize, f64)>,
}

impl FactorRow {
    pub fn new(weight: f64) -> Self {
        FactorRow {
            weight,
            terms: Vec::with_capacity(12),
        }
    }

    pub fn push(&mut self, idx: usize, c: f64) {
        if c != 0.0 {
            self.terms.push((idx, c));
        }
    }

    fn merge(&mut self) {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(i, c) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
    }

    /// Value of the functional at `u`.
    pub fn eval(&self, u: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * u[i]).sum()
    }
}

/// Accumulates a symmetric matrix from upper-triangle contributions.
///
/// Each off-diagonal value is stored once and mirrored, so the result is
/// exactly symmetric.
#[derive(Debug, Clone)]
pub struct SymBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SymBuilder {
    pub fn new(n: usize) -> Self {
        SymBuilder {
            n,
            entries: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Adds `v` at (i, j) and (j, i); a diagonal entry is added once.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.entries.push((a, b, v));
    }

    pub fn add_diag(&mut self, d: &[f64]) {
        for (i, &v) in d.iter().enumerate() {
            self.add(i, i, v);
        }
    }

    /// Adds `w (Σ c_k u_k)²`.
    pub fn add_factor(&mut self, row: &FactorRow) {
        let mut r = row.clone();
        r.merge();
        let w = r.weight;
        for (p, &(i, ci)) in r.terms.iter().enumerate() {
            self.add(i, i, w * ci * ci);
            for &(j, cj) in &r.terms[p + 1..] {
                self.add(i, j, w * ci * cj);
            }
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_by_key(|e| (e.0, e.1));
        let mut upper: Vec<(usize, usize, f64)> = Vec::with_capacity(self.entries.len() / 2);
        for (i, j, v) in self.entries {
            match upper.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => upper.push((i, j, v)),
            }
        }
        let mut counts = vec![0usize; self.n];
        for &(i, j, _) in &upper {
            counts[i] += 1;
            if i != j {
                counts[j] += 1;
            }
        }
        let mut row_ptr = vec![0usize; self.n + 1];
        for i in 0..self.n {
            row_ptr[i + 1] = row_ptr[i] + counts[i];
        }
        let nnz = row_ptr[self.n];
        let mut cols = vec![0usize; nnz];
        let mut vals = vec![0.0; nnz];
        let mut fill = row_ptr.clone();
        // lower part of each row (from transposed upper entries) arrives in column order
        // because `upper` is sorted by (i, j); emit it first, then the row's own upper part.
        for &(i, j, v) in &upper {
            if i != j {
                let p = fill[j];
                cols[p] = i;
                vals[p] = v;
                fill[j] += 1;
            }
        }
        let mut fill_upper = fill;
        for &(i, j, v) in &upper {
            let p = fill_upper[i];
            cols[p] = j;
            vals[p] = v;
            fill_upper[i] += 1;
        }
        CsrMatrix {
            n: self.n,
            row_ptr,
            cols,
            vals,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_rows_build_gram_matrix() {
        // u0 - u1 and u1 - u2 with unit weights: path Laplacian
        let mut b = SymBuilder::new(3);
        for k in 0..2 {
            let mut r = FactorRow::new(1.0);
            r.push(k, -1.0);
            r.push(k + 1, 1.0);
            b.add_factor(&r);
        }
        let a = b.build();
        assert_eq!(
            a.to_dense(),
            vec![vec![1.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 1.0]]
        );
        assert!(a.is_symmetric());
        assert_eq!(a.bandwidth(), 1);
        assert_eq!(a.quad_form(&[1.0, 2.0, 4.0]), 1.0 + 4.0);
    }

    #[test]
    fn rows_are_sorted_and_duplicates_merge() {
        let mut b = SymBuilder::new(4);
        b.add(3, 0, 1.0);
        b.add(0, 3, 2.0);
        b.add(2, 2, 5.0);
        b.add(1, 2, -1.0);
        let a = b.build();
        for i in 0..4 {
            let (c, _) = a.row(i);
            assert!(c.windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(a.get(0, 3), 3.0);
        assert_eq!(a.get(3, 0), 3.0);
        assert_eq!(a.get(2, 1), -1.0);
    }

    #[test]
    fn add_diag_inserts_missing_entries() {
        let mut b = SymBuilder::new(2);
        b.add(0, 1, 1.0);
        let a = b.build().add_diag(2.0, &[1.0, 3.0]);
        assert_eq!(a.to_dense(), vec![vec![2.0, 1.0], vec![1.0, 6.0]]);
    }
}
