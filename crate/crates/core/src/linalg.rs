//! Small dense-matrix kernels: row-major matrices, one-sided Jacobi SVD,
//! Cholesky solves. The systems in this crate are tiny (response matrices,
//! basis Gram matrices), so everything here favors exactness and determinism
//! over scalability.

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    /// Builds from a flat row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// `self * v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ * v`.
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let r = self.row(i);
            let vi = v[i];
            for (o, &x) in out.iter_mut().zip(r) {
                *o += vi * x;
            }
        }
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ` with singular values
/// sorted in decreasing order. `U` is rows×k, `V` is cols×k, k = min(rows, cols).
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

impl Svd {
    /// Numerical rank with singular values below `rel_tol * s_max` treated as zero.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let smax = self.s.first().copied().unwrap_or(0.0);
        if smax <= 0.0 {
            return 0;
        }
        self.s.iter().filter(|&&s| s > rel_tol * smax).count()
    }

    /// Minimum-Euclidean-norm solution of `min ||A x - b||₂` via the pseudo-inverse,
    /// zeroing singular values below `rel_tol * s_max`.
    pub fn min_norm_solve(&self, b: &[f64], rel_tol: f64) -> Vec<f64> {
        let smax = self.s.first().copied().unwrap_or(0.0);
        let k = self.s.len();
        let mut coef = vec![0.0; k];
        for j in 0..k {
            if smax > 0.0 && self.s[j] > rel_tol * smax {
                coef[j] = dot(&self.u.col(j), b) / self.s[j];
            }
        }
        self.v.matvec(&coef)
    }

    /// Orthonormal basis of the null space of `A`. Right singular vectors
    /// paired with singular values at or below `rel_tol * s_max` are taken
    /// directly; any remaining kernel directions (degenerate thin-SVD columns
    /// or dimensions beyond the thin factorization) are recovered by
    /// completing the range directions to a full orthonormal basis.
    pub fn null_basis(&self, a_cols: usize, rel_tol: f64) -> Vec<Vec<f64>> {
        let smax = self.s.first().copied().unwrap_or(0.0);
        let mut range: Vec<Vec<f64>> = Vec::new();
        let mut null: Vec<Vec<f64>> = Vec::new();
        for j in 0..self.s.len() {
            let col = self.v.col(j);
            let is_null = smax <= 0.0 || self.s[j] <= rel_tol * smax;
            if norm2(&col) < 0.5 {
                continue;
            }
            if is_null {
                null.push(col);
            } else {
                range.push(col);
            }
        }
        let target = a_cols - range.len();
        let mut e = 0;
        while null.len() < target && e < a_cols {
            let mut cand = vec![0.0; a_cols];
            cand[e] = 1.0;
            e += 1;
            // Gram-Schmidt against range and found null vectors, twice.
            for _ in 0..2 {
                for b in range.iter().chain(null.iter()) {
                    let c = dot(&cand, b);
                    for (x, &bv) in cand.iter_mut().zip(b) {
                        *x -= c * bv;
                    }
                }
            }
            let nrm = norm2(&cand);
            if nrm > 1e-8 {
                for x in cand.iter_mut() {
                    *x /= nrm;
                }
                null.push(cand);
            }
        }
        null
    }
}

/// One-sided Jacobi SVD. Exact enough for the small integer matrices used in
/// identification; cost is O(min(m,n)² · max(m,n)) per sweep.
pub fn svd(a: &Mat) -> Svd {
    if a.rows() >= a.cols() {
        svd_tall(a)
    } else {
        let t = svd_tall(&a.transpose());
        Svd { u: t.v, s: t.s, v: t.u }
    }
}

fn svd_tall(a: &Mat) -> Svd {
    let m = a.rows();
    let n = a.cols();
    // Column-major working copy.
    let mut b: Vec<Vec<f64>> = (0..n).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let eps = 1e-14;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&b[p], &b[p]);
                let beta = dot(&b[q], &b[q]);
                let gamma = dot(&b[p], &b[q]);
                let denom = (alpha * beta).sqrt();
                if denom > 0.0 {
                    off = off.max(gamma.abs() / denom);
                }
                if gamma.abs() <= eps * denom || gamma == 0.0 {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let bp = b[p][i];
                    let bq = b[q][i];
                    b[p][i] = c * bp - s * bq;
                    b[q][i] = s * bp + c * bq;
                }
                for i in 0..n {
                    let vp = v[p][i];
                    let vq = v[q][i];
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
        if off <= eps {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = b.iter().map(|col| norm2(col)).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let mut u = Mat::zeros(m, n);
    let mut vm = Mat::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (out_j, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        s.push(sigma);
        if sigma > 0.0 {
            for i in 0..m {
                u.set(i, out_j, b[j][i] / sigma);
            }
        }
        for i in 0..n {
            vm.set(i, out_j, v[j][i]);
        }
    }
    Svd { u, s, v: vm }
}

/// Cholesky factorization of a symmetric positive-definite matrix.
/// Returns `None` when a pivot is not strictly positive.
pub fn cholesky(a: &Mat) -> Option<Mat> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Some(l)
}

/// Solves `A x = b` for SPD `A` given its Cholesky factor `l`.
pub fn cholesky_solve(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l.get(i, k) * y[k];
        }
        y[i] = sum / l.get(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l.get(k, i) * x[k];
        }
        x[i] = sum / l.get(i, i);
    }
    x
}

/// 2-norm condition number of a symmetric matrix, computed from its singular values.
pub fn sym_condition(a: &Mat) -> f64 {
    let d = svd(a);
    let smax = d.s.first().copied().unwrap_or(0.0);
    let smin = d.s.last().copied().unwrap_or(0.0);
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn svd_recovers_diagonal() {
        let a = Mat::from_rows(&[vec![3.0, 0.0], vec![0.0, 2.0], vec![0.0, 0.0]]);
        let d = svd(&a);
        approx(d.s[0], 3.0, 1e-12);
        approx(d.s[1], 2.0, 1e-12);
        assert_eq!(d.rank(1e-10), 2);
    }

    #[test]
    fn svd_reconstructs_random_matrix() {
        // Fixed entries, wide and tall shapes.
        let cases = vec![
            Mat::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![0.5, -1.0, 2.5, 0.0]]),
            Mat::from_rows(&[vec![1.0, 2.0], vec![-0.5, 1.0], vec![3.0, 0.25], vec![0.0, 1.5]]),
        ];
        for a in cases {
            let d = svd(&a);
            for i in 0..a.rows() {
                for j in 0..a.cols() {
                    let mut recon = 0.0;
                    for k in 0..d.s.len() {
                        recon += d.u.get(i, k) * d.s[k] * d.v.get(j, k);
                    }
                    approx(recon, a.get(i, j), 1e-10);
                }
            }
        }
    }

    #[test]
    fn min_norm_solution_of_underdetermined_system() {
        // x1 + x2 = 2 has min-norm solution (1, 1).
        let a = Mat::from_rows(&[vec![1.0, 1.0]]);
        let d = svd(&a);
        let x = d.min_norm_solve(&[2.0], 1e-10);
        approx(x[0], 1.0, 1e-12);
        approx(x[1], 1.0, 1e-12);
    }

    #[test]
    fn null_basis_spans_kernel() {
        // Rank-1 2x3 matrix: kernel has dimension 2.
        let a = Mat::from_rows(&[vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0]]);
        let d = svd(&a);
        let basis = d.null_basis(3, 1e-10);
        assert_eq!(basis.len(), 2);
        for v in &basis {
            let av = a.matvec(v);
            assert!(norm2(&av) < 1e-10);
            approx(norm2(v), 1.0, 1e-10);
        }
    }

    #[test]
    fn cholesky_round_trip() {
        let a = Mat::from_rows(&[vec![4.0, 2.0, 0.5], vec![2.0, 3.0, 1.0], vec![0.5, 1.0, 2.0]]);
        let l = cholesky(&a).unwrap();
        let b = vec![1.0, -2.0, 0.5];
        let x = cholesky_solve(&l, &b);
        let ax = a.matvec(&x);
        for (lhs, rhs) in ax.iter().zip(&b) {
            approx(*lhs, *rhs, 1e-12);
        }
        assert!(cholesky(&Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]])).is_none());
    }
}
