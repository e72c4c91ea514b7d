//! Implicit-shift QL iteration for symmetric tridiagonal matrices.
//!
//! The classic EISPACK `tql2` scheme: chase a Wilkinson-shifted rotation
//! down the unreduced block and accumulate the rotations into an explicit
//! eigenvector matrix. Everything is kept in flat column-major storage so
//! a plane rotation touches two contiguous columns.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EigenError {
    /// The QL sweep budget was exhausted before off-diagonal entry `index`
    /// became negligible.
    #[error("eigenvalue {index} failed to converge within the sweep budget")]
    Convergence { index: usize },
}

/// Dense square matrix in column-major order; column `c` is the contiguous
/// slice `data[c*n .. (c+1)*n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMatrix {
    n: usize,
    data: Vec<f64>,
}

impl ColumnMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for c in 0..n {
            data[c * n + c] = 1.0;
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.n..(c + 1) * self.n]
    }

    pub fn col_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.n..(c + 1) * self.n]
    }

    /// Apply the plane rotation (c, s) to adjacent columns `i`, `i+1`.
    fn rotate_adjacent(&mut self, i: usize, c: f64, s: f64) {
        let (left, right) = self.data.split_at_mut((i + 1) * self.n);
        let a = &mut left[i * self.n..];
        let b = &mut right[..self.n];
        for (x, y) in a.iter_mut().zip(b.iter_mut()) {
            let f = *y;
            *y = s * *x + c * f;
            *x = c * *x - s * f;
        }
    }

    /// Reorder columns by `perm`: new column `c` is old column `perm[c]`.
    fn permute_columns(&mut self, perm: &[usize]) {
        let mut out = vec![0.0; self.data.len()];
        for (c, &src) in perm.iter().enumerate() {
            out[c * self.n..(c + 1) * self.n].copy_from_slice(self.col(src));
        }
        self.data = out;
    }
}

/// All eigenpairs of the symmetric tridiagonal matrix with diagonal `diag`
/// and off-diagonal `off` (`off[i]` couples sites `i` and `i+1`).
///
/// Returns eigenvalues in ascending order and the matching eigenvector
/// columns. `max_sweeps` bounds the QL iterations spent on any single
/// off-diagonal entry.
pub fn tridiag_eigen(
    diag: &[f64],
    off: &[f64],
    max_sweeps: usize,
) -> Result<(Vec<f64>, ColumnMatrix), EigenError> {
    let n = diag.len();
    assert!(n >= 1, "empty matrix");
    assert_eq!(off.len(), n.saturating_sub(1), "off-diagonal length");

    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z = ColumnMatrix::identity(n);
    if n == 1 {
        return Ok((d, z));
    }

    for l in 0..n {
        let mut iter = 0;
        loop {
            // First index m >= l whose off-diagonal entry is negligible.
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > max_sweeps {
                return Err(EigenError::Convergence { index: l });
            }

            // Wilkinson shift from the leading 2x2 of the block.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;

            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    // Deflate: the rotation chain annihilated early.
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                z.rotate_adjacent(i, c, s);
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    // Ascending eigenvalue order.
    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let sorted: Vec<f64> = perm.iter().map(|&i| d[i]).collect();
    z.permute_columns(&perm);

    Ok((sorted, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn free_chain_energies(n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (1..=n)
            .map(|k| 2.0 * (k as f64 * PI / (n as f64 + 1.0)).cos())
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn single_site() {
        let (d, z) = tridiag_eigen(&[3.5], &[], 50).unwrap();
        assert_eq!(d, vec![3.5]);
        assert_eq!(z.col(0), &[1.0]);
    }

    #[test]
    fn two_by_two_analytic() {
        // [[1, 1], [1, -1]] has eigenvalues ±√2.
        let (d, _) = tridiag_eigen(&[1.0, -1.0], &[1.0], 50).unwrap();
        assert!((d[0] + 2f64.sqrt()).abs() < 1e-14, "got {}", d[0]);
        assert!((d[1] - 2f64.sqrt()).abs() < 1e-14, "got {}", d[1]);
    }

    #[test]
    fn free_chain_matches_cosine_spectrum() {
        let n = 64;
        let (d, _) = tridiag_eigen(&vec![0.0; n], &vec![1.0; n - 1], 50).unwrap();
        let exact = free_chain_energies(n);
        for (got, want) in d.iter().zip(exact.iter()) {
            assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
        }
    }

    #[test]
    fn eigenpairs_satisfy_residual_and_orthogonality() {
        // Deterministic ragged diagonal, no RNG needed here.
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| ((i * 2654435761) % 1000) as f64 / 500.0 - 1.0).collect();
        let off = vec![1.0; n - 1];
        let (d, z) = tridiag_eigen(&diag, &off, 50).unwrap();

        for k in 0..n {
            let v = z.col(k);
            // tridiagonal apply
            let mut worst = 0.0f64;
            for i in 0..n {
                let mut h = diag[i] * v[i];
                if i > 0 {
                    h += v[i - 1];
                }
                if i + 1 < n {
                    h += v[i + 1];
                }
                worst = worst.max((h - d[k] * v[i]).abs());
            }
            assert!(worst < 1e-12, "residual {worst} at pair {k}");
        }
        for a in 0..n {
            for b in a..n {
                let dot: f64 = z.col(a).iter().zip(z.col(b)).map(|(x, y)| x * y).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12, "({a},{b}) dot {dot}");
            }
        }
    }

    #[test]
    fn ascending_order() {
        let n = 100;
        let diag: Vec<f64> = (0..n).map(|i| ((i * 48271) % 997) as f64 / 100.0).collect();
        let (d, _) = tridiag_eigen(&diag, &vec![1.0; n - 1], 50).unwrap();
        for w in d.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }
}
