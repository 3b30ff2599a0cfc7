//! Small dense and sparse linear algebra helpers shared across the crate.
//!
//! Dense factorizations and eigen decompositions come from nalgebra; this module
//! adds the glue the solvers need: a compressed sparse row matrix for assembled
//! operators, generalized symmetric eigensolves via Cholesky reduction,
//! metric-weighted Gram-Schmidt, principal angles, and extreme generalized
//! eigenvalues by power iteration.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

/// Triplet accumulator for finite element assembly.
#[derive(Debug, Clone)]
pub struct Coo {
    n_rows: usize,
    n_cols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl Coo {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Coo { n_rows, n_cols, triplets: Vec::new() }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n_rows && j < self.n_cols);
        self.triplets.push((i, j, v));
    }

    /// Compress into CSR, summing duplicate entries.
    pub fn into_csr(mut self) -> Csr {
        self.triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut col_idx: Vec<usize> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut prev = None;
        for &(i, j, v) in &self.triplets {
            if prev == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                prev = Some((i, j));
            }
            row_ptr[i + 1] = col_idx.len();
        }
        // empty rows inherit the running prefix
        for i in 1..=self.n_rows {
            row_ptr[i] = row_ptr[i].max(row_ptr[i - 1]);
        }
        Csr { n_rows: self.n_rows, n_cols: self.n_cols, row_ptr, col_idx, values }
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.n_cols);
        let mut y = DVector::zeros(self.n_rows);
        for i in 0..self.n_rows {
            let mut acc = 0.0;
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// xᵀ·A·y.
    pub fn quad_form(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.n_rows);
        let mut acc = 0.0;
        for i in 0..self.n_rows {
            let mut row_acc = 0.0;
            for (j, v) in self.row(i) {
                row_acc += v * y[j];
            }
            acc += x[i] * row_acc;
        }
        acc
    }

    /// Dense copy of the sub-block with the given row and column index sets.
    pub fn extract_dense(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let mut col_pos = vec![usize::MAX; self.n_cols];
        for (k, &c) in cols.iter().enumerate() {
            col_pos[c] = k;
        }
        let mut out = DMatrix::zeros(rows.len(), cols.len());
        for (r, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                let k = col_pos[j];
                if k != usize::MAX {
                    out[(r, k)] = v;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// Replace the given rows by identity rows (unit diagonal, zero elsewhere).
    /// Fails if a row lacks a stored diagonal entry.
    pub fn replace_rows_identity(&mut self, rows: &[usize]) -> Result<()> {
        for &i in rows {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            let mut has_diag = false;
            for k in lo..hi {
                if self.col_idx[k] == i {
                    self.values[k] = 1.0;
                    has_diag = true;
                } else {
                    self.values[k] = 0.0;
                }
            }
            if !has_diag {
                return Err(Error::MissingDirichlet(format!(
                    "row {i} has no stored diagonal to constrain"
                )));
            }
        }
        Ok(())
    }

    /// max |a_ij − a_ji| over stored entries.
    pub fn symmetry_defect(&self) -> f64 {
        let mut defect: f64 = 0.0;
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                defect = defect.max((v - self.get(j, i)).abs());
            }
        }
        defect
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Entries in (row, col, value) order, for serialization.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }
}

/// Eigenvalues (descending) and B-orthonormal eigenvectors of A·x = λ·B·x
/// with A symmetric and B symmetric positive definite.
pub fn generalized_symmetric_eigen(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let chol = Cholesky::new(b.clone()).ok_or_else(|| {
        Error::NotPositiveDefinite("metric in generalized eigenproblem".into())
    })?;
    let l = chol.l();
    // C = L⁻¹ A L⁻ᵀ
    let y = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?
        .transpose();
    let c_sym = (&c + c.transpose()) * 0.5;
    let eig = c_sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let lt = l.transpose();
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let q = eig.eigenvectors.column(i).into_owned();
        let z = lt
            .solve_upper_triangular(&q)
            .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
        vectors.set_column(k, &z);
    }
    Ok((values, vectors))
}

/// Eigenvalues (descending) and orthonormal eigenvectors of a symmetric matrix.
pub fn symmetric_eigen_desc(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = ((a + a.transpose()) * 0.5).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i).into_owned());
    }
    (values, vectors)
}

/// xᵀ·M·y for a dense metric.
pub fn metric_dot(metric: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (metric * y).dot(x)
}

pub fn metric_norm(metric: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    metric_dot(metric, x, x).max(0.0).sqrt()
}

/// Growing basis kept orthonormal in a dense metric, with re-orthogonalized
/// modified Gram-Schmidt insertion.
pub struct MetricBasis<'a> {
    metric: &'a DMatrix<f64>,
    cols: Vec<DVector<f64>>,
}

impl<'a> MetricBasis<'a> {
    pub fn new(metric: &'a DMatrix<f64>) -> Self {
        MetricBasis { metric, cols: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn columns(&self) -> &[DVector<f64>] {
        &self.cols
    }

    /// Residual of `v` after projecting out the current span (two passes).
    pub fn project_out(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut r = v.clone();
        for _ in 0..2 {
            for b in &self.cols {
                let c = metric_dot(self.metric, b, &r);
                r -= b * c;
            }
        }
        r
    }

    /// Insert `v` if its metric-orthogonal residual keeps at least
    /// `drop_tol` × ‖v‖; returns false when the direction is dropped.
    pub fn insert(&mut self, v: &DVector<f64>, drop_tol: f64) -> bool {
        let scale = metric_norm(self.metric, v);
        if scale == 0.0 {
            return false;
        }
        let r = self.project_out(v);
        let norm = metric_norm(self.metric, &r);
        if norm <= drop_tol * scale {
            return false;
        }
        self.cols.push(r / norm);
        true
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        if self.cols.is_empty() {
            DMatrix::zeros(self.metric.nrows(), 0)
        } else {
            DMatrix::from_columns(&self.cols)
        }
    }
}

/// Orthonormalize the columns of `mat` in the given metric, dropping columns
/// whose residual falls below `drop_tol` relative to their norm.
pub fn orthonormalize_columns(
    mat: &DMatrix<f64>,
    metric: &DMatrix<f64>,
    drop_tol: f64,
) -> DMatrix<f64> {
    let mut basis = MetricBasis::new(metric);
    for j in 0..mat.ncols() {
        basis.insert(&mat.column(j).into_owned(), drop_tol);
    }
    basis.to_matrix()
}

/// Principal angles (radians, ascending) between the column spans of `u`
/// and `v` in the given metric.
pub fn principal_angles(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    metric: &DMatrix<f64>,
) -> Vec<f64> {
    let uo = orthonormalize_columns(u, metric, 1e-12);
    let vo = orthonormalize_columns(v, metric, 1e-12);
    let cross = uo.transpose() * metric * vo;
    let svd = cross.svd(false, false);
    let mut angles: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| s.clamp(-1.0, 1.0).acos())
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    angles
}

/// Largest eigenvalue of A·x = λ·B·x by power iteration on B⁻¹A, where
/// `apply_a` applies A and `chol_b` factors the SPD matrix B.
///
/// The Rayleigh quotient approaches the extreme eigenvalue from below, so the
/// returned value carries a small one-sided inflation making it safe to use
/// as an upper-bound constant.
pub fn power_iteration_max(
    apply_a: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    chol_b: &Cholesky<f64, Dyn>,
    n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let lt = chol_b.l().transpose();
    // vᵀ·B·v = ‖Lᵀv‖² since B = L·Lᵀ
    let b_norm = |v: &DVector<f64>| (&lt * v).norm();
    // deterministic start with components in every direction
    let mut x = DVector::from_fn(n, |i, _| {
        1.0 + ((i as u64 * 2654435761 + 1013904223) % 1000) as f64 / 1000.0
    });
    x /= b_norm(&x).max(f64::MIN_POSITIVE);
    let mut rq_prev = f64::NAN;
    let mut stable = 0usize;
    for _ in 0..max_iter {
        let ax = apply_a(&x);
        let rq = x.dot(&ax);
        if ax.norm() == 0.0 {
            return Ok(0.0);
        }
        let mut y = chol_b.solve(&ax);
        y /= b_norm(&y).max(f64::MIN_POSITIVE);
        x = y;
        if rq_prev.is_finite() {
            let denom = rq.abs().max(f64::MIN_POSITIVE);
            if ((rq - rq_prev) / denom).abs() < tol {
                stable += 1;
                if stable >= 3 {
                    return Ok(rq * (1.0 + 16.0 * tol));
                }
            } else {
                stable = 0;
            }
        }
        rq_prev = rq;
    }
    Err(Error::GreedyStalled(format!(
        "power iteration did not converge in {max_iter} iterations"
    )))
}

/// Least-squares line fit; returns (slope, intercept).
pub fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).unwrap());
    let mut r = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[order[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..xs.len() {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx).powi(2);
        vy += (ry[i] - my).powi(2);
    }
    cov / (vx.sqrt() * vy.sqrt()).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dense_to_csr(m: &DMatrix<f64>) -> Csr {
        let mut coo = Coo::new(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    coo.push(i, j, m[(i, j)]);
                }
            }
        }
        coo.into_csr()
    }

    #[test]
    fn csr_roundtrip_and_duplicate_summing() {
        let mut coo = Coo::new(3, 3);
        coo.push(0, 0, 1.0);
        coo.push(0, 0, 2.0);
        coo.push(2, 1, -1.0);
        coo.push(1, 2, 4.0);
        let csr = coo.into_csr();
        assert_eq!(csr.nnz(), 3);
        assert_eq!(csr.get(0, 0), 3.0);
        assert_eq!(csr.get(2, 1), -1.0);
        assert_eq!(csr.get(1, 2), 4.0);
        assert_eq!(csr.get(1, 1), 0.0);
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let y = csr.matvec(&x);
        assert_eq!(y, DVector::from_vec(vec![3.0, 12.0, -2.0]));
    }

    #[test]
    fn csr_block_extraction_matches_dense() {
        let d = DMatrix::from_row_slice(4, 4, &[
            4.0, -1.0, 0.0, 0.0,
            -1.0, 4.0, -1.0, 0.0,
            0.0, -1.0, 4.0, -1.0,
            0.0, 0.0, -1.0, 4.0,
        ]);
        let csr = dense_to_csr(&d);
        let block = csr.extract_dense(&[1, 3], &[0, 2]);
        assert_eq!(block[(0, 0)], -1.0);
        assert_eq!(block[(0, 1)], -1.0);
        assert_eq!(block[(1, 0)], 0.0);
        assert_eq!(block[(1, 1)], -1.0);
        assert_eq!(csr.symmetry_defect(), 0.0);
    }

    #[test]
    fn row_replacement_keeps_unit_diagonal_only() {
        let d = DMatrix::from_row_slice(3, 3, &[
            2.0, -1.0, 0.0,
            -1.0, 2.0, -1.0,
            0.0, -1.0, 2.0,
        ]);
        let mut csr = dense_to_csr(&d);
        csr.replace_rows_identity(&[0, 2]).unwrap();
        assert_eq!(csr.get(0, 0), 1.0);
        assert_eq!(csr.get(0, 1), 0.0);
        assert_eq!(csr.get(1, 0), -1.0);
        assert_eq!(csr.get(2, 2), 1.0);
        assert_eq!(csr.get(2, 1), 0.0);
    }

    #[test]
    fn generalized_eigen_recovers_diagonal_pencil() {
        // A = diag(3, 1), B = diag(1, 4): eigenvalues 3 and 0.25
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let (vals, vecs) = generalized_symmetric_eigen(&a, &b).unwrap();
        assert_relative_eq!(vals[0], 3.0, max_relative = 1e-12);
        assert_relative_eq!(vals[1], 0.25, max_relative = 1e-12);
        // B-orthonormality
        let g = vecs.transpose() * &b * &vecs;
        assert_relative_eq!(g[(0, 0)], 1.0, max_relative = 1e-12);
        assert_relative_eq!(g[(1, 1)], 1.0, max_relative = 1e-12);
        assert!(g[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn generalized_eigen_matches_direct_rayleigh_quotients() {
        // dense random-ish symmetric pencil
        let n = 8;
        let raw = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 13) % 11) as f64 / 11.0);
        let a = (&raw + raw.transpose()) * 0.5;
        let spd = &raw * raw.transpose() + DMatrix::identity(n, n) * (n as f64);
        let (vals, vecs) = generalized_symmetric_eigen(&a, &spd).unwrap();
        for k in 0..n {
            let x = vecs.column(k).into_owned();
            let rq = x.dot(&(&a * &x)) / x.dot(&(&spd * &x));
            assert_relative_eq!(vals[k], rq, max_relative = 1e-10, epsilon = 1e-12);
        }
        for k in 1..n {
            assert!(vals[k] <= vals[k - 1] + 1e-12);
        }
    }

    #[test]
    fn metric_basis_orthonormalizes_and_drops_dependent() {
        let metric = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let mut basis = MetricBasis::new(&metric);
        assert!(basis.insert(&DVector::from_vec(vec![1.0, 0.0]), 1e-12));
        assert!(basis.insert(&DVector::from_vec(vec![1.0, 1.0]), 1e-12));
        assert!(!basis.insert(&DVector::from_vec(vec![3.0, 2.0]), 1e-12));
        let b = basis.to_matrix();
        let g = b.transpose() * &metric * &b;
        assert_relative_eq!(g[(0, 0)], 1.0, max_relative = 1e-12);
        assert_relative_eq!(g[(1, 1)], 1.0, max_relative = 1e-12);
        assert!(g[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn principal_angles_detect_shared_and_orthogonal_directions() {
        let id = DMatrix::identity(3, 3);
        let u = DMatrix::from_columns(&[DVector::from_vec(vec![1.0, 0.0, 0.0])]);
        let v = DMatrix::from_columns(&[DVector::from_vec(vec![0.0, 1.0, 0.0])]);
        let a = principal_angles(&u, &v, &id);
        assert_relative_eq!(a[0], std::f64::consts::FRAC_PI_2, max_relative = 1e-12);
        let w = DMatrix::from_columns(&[DVector::from_vec(vec![1.0, 1e-8, 0.0])]);
        let a2 = principal_angles(&u, &w, &id);
        assert!(a2[0] < 1e-6);
    }

    #[test]
    fn power_iteration_matches_dense_generalized_eigen() {
        let n = 12;
        let raw = DMatrix::from_fn(n, n, |i, j| ((i * 5 + j * 3) % 7) as f64 / 7.0);
        let a = &raw * raw.transpose() + DMatrix::identity(n, n);
        let b = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 + (i % 3) as f64 } else { 0.0 });
        let (vals, _) = generalized_symmetric_eigen(&a, &b).unwrap();
        let chol = Cholesky::new(b.clone()).unwrap();
        let apply = |x: &DVector<f64>| &a * x;
        let lam = power_iteration_max(&apply, &chol, n, 1e-12, 10_000).unwrap();
        assert_relative_eq!(lam, vals[0], max_relative = 1e-6);
        assert!(lam >= vals[0] * (1.0 - 1e-9));
    }

    #[test]
    fn line_fit_and_spearman_behave() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [-2.0, -4.0, -6.0, -8.0];
        let (slope, intercept) = least_squares_line(&xs, &ys);
        assert_relative_eq!(slope, -2.0, max_relative = 1e-12);
        assert!(intercept.abs() < 1e-12);
        assert_relative_eq!(spearman(&xs, &ys), -1.0, max_relative = 1e-12);
        let zs = [10.0, 20.0, 15.0, 40.0];
        assert!(spearman(&xs, &zs) > 0.7);
    }
}
