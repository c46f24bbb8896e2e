use super::{CsrMatrix, DenseMatrix, FlopCount};

#[inline]
fn sparse_dot(ac: &[usize], av: &[f64], bc: &[usize], bv: &[f64]) -> (f64, u64) {
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    let mut hits = 0u64;
    while i < ac.len() && j < bc.len() {
        match ac[i].cmp(&bc[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += av[i] * bv[j];
                hits += 1;
                i += 1;
                j += 1;
            }
        }
    }
    (acc, hits)
}

/// `scale * Y Y^T`, with the upper triangle computed and mirrored so the
/// result is exactly symmetric.
pub fn gram_rows(y: &CsrMatrix, scale: f64) -> DenseMatrix {
    gram_rows_counted(y, scale).0
}

/// [`gram_rows`] plus its flop charge (`2 * rows * nnz(Y)`) and actual work.
pub fn gram_rows_counted(y: &CsrMatrix, scale: f64) -> (DenseMatrix, FlopCount) {
    let m = y.n_rows();
    let mut g = DenseMatrix::zeros(m, m);
    let mut hits = 0u64;
    for i in 0..m {
        let (ic, iv) = y.row(i);
        if ic.is_empty() {
            continue;
        }
        for j in i..m {
            let (jc, jv) = y.row(j);
            let (dot, h) = sparse_dot(ic, iv, jc, jv);
            hits += h;
            let v = scale * dot;
            g.set(i, j, v);
            g.set(j, i, v);
        }
    }
    let work = FlopCount {
        charged: 2 * m as u64 * y.nnz() as u64,
        actual: 2 * hits,
    };
    (g, work)
}

/// `scale * Y^T Y`, exactly symmetric.
pub fn gram_cols(y: &CsrMatrix, scale: f64) -> DenseMatrix {
    gram_cols_counted(y, scale).0
}

/// [`gram_cols`] plus its flop charge (`2 * cols * nnz(Y)`) and actual work.
pub fn gram_cols_counted(y: &CsrMatrix, scale: f64) -> (DenseMatrix, FlopCount) {
    gram_rows_counted(&y.transpose(), scale)
}
