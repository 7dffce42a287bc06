//! Small dense and circulant linear solvers.

use crate::error::{invalid, Result};

/// Solve a tridiagonal system by elimination; `sub[0]` and `sup[n−1]` are unused.
pub fn tridiag_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return invalid("singular tridiagonal system");
    }
    x[0] = rhs[0] / beta;
    for i in 1..n {
        c[i] = sup[i - 1] / beta;
        beta = diag[i] - sub[i] * c[i];
        if beta == 0.0 {
            return invalid("singular tridiagonal system");
        }
        x[i] = (rhs[i] - sub[i] * x[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i + 1] * x[i + 1];
    }
    Ok(x)
}

/// Solve the periodic system with constant diagonal `d` and off-diagonals
/// `e` (both neighbours, with wrap-around) by a Sherman–Morrison correction.
pub fn cyclic_tridiag_solve(d: f64, e: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    if n < 3 {
        return invalid("cyclic system needs at least three unknowns");
    }
    let gamma = -d;
    let mut diag = vec![d; n];
    diag[0] = d - gamma;
    diag[n - 1] = d - e * e / gamma;
    let off = vec![e; n];
    let x = tridiag_solve(&off, &diag, &off, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = e;
    let z = tridiag_solve(&off, &diag, &off, &u)?;
    let fact = (x[0] + e * x[n - 1] / gamma) / (1.0 + z[0] + e * z[n - 1] / gamma);
    Ok(x.iter().zip(&z).map(|(a, b)| a - fact * b).collect())
}

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        if a[piv][col] == 0.0 {
            return invalid("singular matrix");
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gauss_sample, RngState};

    #[test]
    fn cyclic_matches_dense() {
        let mut r = RngState::new(1);
        for n in [3, 4, 7, 16] {
            let rhs = gauss_sample(&mut r, n);
            let (d, e) = (2.5, -0.75);
            let mut a = vec![vec![0.0; n]; n];
            for i in 0..n {
                a[i][i] = d;
                a[i][(i + 1) % n] += e;
                a[i][(i + n - 1) % n] += e;
            }
            let want = dense_solve(a, rhs.clone()).unwrap();
            let got = cyclic_tridiag_solve(d, e, &rhs).unwrap();
            for (x, y) in got.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
