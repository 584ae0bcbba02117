//! Sparse complex-symmetric LDL^T factorization.
//!
//! Distribution feeders are trees plus a handful of loop ties, so an
//! elimination order that visits leaves first (reverse breadth-first from the
//! source) gives near-zero fill and no pivoting is needed. The factorization
//! is the classic up-looking LDL with an elimination-tree symbolic pass.

use num_complex::Complex64;

#[derive(Debug, thiserror::Error)]
pub enum SparseError {
    #[error("matrix is structurally or numerically singular at column {col}")]
    Singular { col: usize },
}

/// Column-compressed sparse complex matrix.
#[derive(Debug, Clone)]
pub struct Csc {
    pub n_rows: usize,
    pub n_cols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl Csc {
    /// Builds from triplets. Duplicates are summed in insertion order within
    /// each (col, row) key, keeping assembly bit-deterministic.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, Complex64)],
    ) -> Csc {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&i| (triplets[i].1, triplets[i].0));
        let mut col_ptr = vec![0usize; n_cols + 1];
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &i in &order {
            let (r, c, v) = triplets[i];
            debug_assert!(r < n_rows && c < n_cols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for c in 0..n_cols {
            col_ptr[c + 1] += col_ptr[c];
        }
        Csc {
            n_rows,
            n_cols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// y += A x
    pub fn mul_add(&self, x: &[Complex64], y: &mut [Complex64]) {
        for c in 0..self.n_cols {
            let xc = x[c];
            if xc == Complex64::ZERO {
                continue;
            }
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[p]] += self.values[p] * xc;
            }
        }
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        for p in self.col_ptr[c]..self.col_ptr[c + 1] {
            if self.row_idx[p] == r {
                return self.values[p];
            }
        }
        Complex64::ZERO
    }
}

/// LDL^T factors of a complex-symmetric matrix given in full CSC form
/// (both triangles present; only the upper triangle is read).
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    l_col_ptr: Vec<usize>,
    l_row_idx: Vec<usize>,
    l_values: Vec<Complex64>,
    d: Vec<Complex64>,
}

impl LdlFactor {
    pub fn new(a: &Csc) -> Result<LdlFactor, SparseError> {
        assert_eq!(a.n_rows, a.n_cols);
        let n = a.n_rows;
        // pivot floor relative to the largest diagonal-ish entry
        let scale = a.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let floor = scale * 1e-14;

        // symbolic: elimination tree and column counts of L
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![usize::MAX; n];
        let mut l_nz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let mut i = a.row_idx[p];
                if i >= k {
                    continue;
                }
                while flag[i] != k {
                    if parent[i] == usize::MAX {
                        parent[i] = k;
                    }
                    l_nz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut l_col_ptr = vec![0usize; n + 1];
        for k in 0..n {
            l_col_ptr[k + 1] = l_col_ptr[k] + l_nz[k];
        }
        let nnz_l = l_col_ptr[n];
        let mut l_row_idx = vec![0usize; nnz_l];
        let mut l_values = vec![Complex64::ZERO; nnz_l];
        let mut d = vec![Complex64::ZERO; n];

        // numeric
        let mut y = vec![Complex64::ZERO; n];
        let mut pattern = vec![0usize; n];
        let mut next = vec![0usize; n]; // next free slot in each L column
        next.copy_from_slice(&l_col_ptr[..n]);
        let mut flag = vec![usize::MAX; n];
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let i0 = a.row_idx[p];
                if i0 > k {
                    continue;
                }
                y[i0] += a.values[p];
                let mut len = 0usize;
                let mut i = i0;
                while i != k && flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = pattern[len];
                }
            }
            d[k] = y[k];
            y[k] = Complex64::ZERO;
            for s in top..n {
                let i = pattern[s];
                let yi = y[i];
                y[i] = Complex64::ZERO;
                for p in l_col_ptr[i]..next[i] {
                    y[l_row_idx[p]] -= l_values[p] * yi;
                }
                let l_ki = yi / d[i];
                d[k] -= l_ki * yi;
                l_row_idx[next[i]] = k;
                l_values[next[i]] = l_ki;
                next[i] += 1;
            }
            if d[k].norm() <= floor {
                return Err(SparseError::Singular { col: k });
            }
        }
        Ok(LdlFactor {
            n,
            l_col_ptr,
            l_row_idx,
            l_values,
            d,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, x: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.n);
        for j in 0..self.n {
            let xj = x[j];
            if xj != Complex64::ZERO {
                for p in self.l_col_ptr[j]..self.l_col_ptr[j + 1] {
                    x[self.l_row_idx[p]] -= self.l_values[p] * xj;
                }
            }
        }
        for j in 0..self.n {
            x[j] /= self.d[j];
        }
        for j in (0..self.n).rev() {
            let mut acc = x[j];
            for p in self.l_col_ptr[j]..self.l_col_ptr[j + 1] {
                acc -= self.l_values[p] * x[self.l_row_idx[p]];
            }
            x[j] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn dense_solve(a: &[Vec<Complex64>], b: &[Complex64]) -> Vec<Complex64> {
        let n = b.len();
        let mut m: Vec<Vec<Complex64>> = a.to_vec();
        let mut x = b.to_vec();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| m[i][col].norm().partial_cmp(&m[j][col].norm()).unwrap())
                .unwrap();
            m.swap(col, piv);
            x.swap(col, piv);
            let d = m[col][col];
            for k in col..n {
                m[col][k] /= d;
            }
            x[col] /= d;
            for r in 0..n {
                if r != col {
                    let f = m[r][col];
                    for k in col..n {
                        let s = f * m[col][k];
                        m[r][k] -= s;
                    }
                    let s = f * x[col];
                    x[r] -= s;
                }
            }
        }
        x
    }

    #[test]
    fn ldl_matches_dense_elimination_on_random_symmetric_systems() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let n = 2 + (trial % 9);
            // random symmetric diagonally dominant complex matrix
            let mut dense = vec![vec![Complex64::ZERO; n]; n];
            for i in 0..n {
                for j in 0..i {
                    if rng.gen_bool(0.6) {
                        let v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                        dense[i][j] = v;
                        dense[j][i] = v;
                    }
                }
            }
            for i in 0..n {
                let row_sum: f64 = (0..n).filter(|&j| j != i).map(|j| dense[i][j].norm()).sum();
                dense[i][i] = Complex64::new(row_sum + 1.0, rng.gen_range(0.5..2.0));
            }
            let mut trip = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if dense[i][j] != Complex64::ZERO {
                        trip.push((i, j, dense[i][j]));
                    }
                }
            }
            let a = Csc::from_triplets(n, n, &trip);
            let f = LdlFactor::new(&a).unwrap();
            let b: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let mut x = b.clone();
            f.solve_in_place(&mut x);
            let x_ref = dense_solve(&dense, &b);
            for i in 0..n {
                assert!(
                    (x[i] - x_ref[i]).norm() < 1e-10,
                    "trial {trial} row {i}: {} vs {}",
                    x[i],
                    x_ref[i]
                );
            }
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let trip = vec![
            (0, 0, Complex64::new(1.0, 0.0)),
            (0, 1, Complex64::new(1.0, 0.0)),
            (1, 0, Complex64::new(1.0, 0.0)),
            (1, 1, Complex64::new(1.0, 0.0)),
        ];
        let a = Csc::from_triplets(2, 2, &trip);
        assert!(matches!(
            LdlFactor::new(&a),
            Err(SparseError::Singular { col: 1 })
        ));
    }

    #[test]
    fn triplet_duplicates_are_summed() {
        let trip = vec![
            (0, 0, Complex64::new(1.0, 0.0)),
            (0, 0, Complex64::new(2.0, 1.0)),
        ];
        let a = Csc::from_triplets(1, 1, &trip);
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 0), Complex64::new(3.0, 1.0));
    }
}
