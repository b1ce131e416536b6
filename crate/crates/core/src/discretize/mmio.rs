//! Matrix Market export of stiffness and mass matrices.

use std::io::Write;

use crate::linalg::CsrMatrix;

/// Lower triangle of a symmetric matrix in coordinate format, 1-based.
pub fn write_matrix_market<W: Write>(mut w: W, a: &CsrMatrix) -> std::io::Result<()> {
    let nnz = a.lower_triplets().count();
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{} {} {}", a.n(), a.n(), nnz)?;
    for (i, j, v) in a.lower_triplets() {
        writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Lumped mass as a diagonal symmetric matrix.
pub fn write_mass_market<W: Write>(w: W, m: &[f64]) -> std::io::Result<()> {
    write_matrix_market(w, &CsrMatrix::diag(m))
}
