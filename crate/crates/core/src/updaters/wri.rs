//! Data-assimilated wavefields: minimizers of `‖P u − d*‖² + μ ‖A u − b*‖²`.

use crate::error::{FwiError, Result};
use crate::linalg::{norm, ZERO};
use crate::sensitivity::{DataSet, Linearization};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::matmul::sparse_sparse_matmul;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{c64, Mat, Par, Side};

/// Refinement sweeps applied after the Cholesky solve of the normal
/// equations (their condition number is that of `A` squared).
const REFINEMENT_SWEEPS: usize = 3;

/// `u^e` for every source at one frequency.
#[derive(Debug, Clone)]
pub struct AssimilatedWavefield {
    pub mu: f64,
    pub frequency_hz: f64,
    /// One padded-grid field per source.
    pub fields: Vec<Vec<c64>>,
    /// Relative residual of the normal equations, per source.
    pub normal_residuals: Vec<f64>,
}

/// `PᴴP + μ AᴴA`, assembled sparse.
fn normal_matrix(lin: &Linearization, mu: f64) -> Result<SparseColMat<usize, c64>> {
    let a = lin.fact.operator().matrix();
    let num = |e| FwiError::Numerical(format!("normal matrix assembly failed: {e:?}"));
    let aha = sparse_sparse_matmul(a.as_ref().conjugate(), a.as_ref(), c64::new(mu, 0.0), Par::Seq).map_err(num)?;
    let aha = aha.as_ref();
    let mut t = Vec::with_capacity(aha.compute_nnz() + lin.stations.n_receivers());
    for col in 0..aha.ncols() {
        for (row, val) in aha.row_idx_of_col(col).zip(aha.val_of_col(col)) {
            t.push(Triplet::new(row, col, *val));
        }
    }
    for &k in lin.stations.receiver_nodes() {
        t.push(Triplet::new(k, k, c64::new(1.0, 0.0)));
    }
    let n = aha.nrows();
    SparseColMat::try_new_from_triplets(n, n, &t).map_err(|e| FwiError::Numerical(format!("normal matrix assembly failed: {e:?}")))
}

fn apply_sparse(a: &SparseColMat<usize, c64>, x: &[c64]) -> Vec<c64> {
    let a = a.as_ref();
    let mut out = vec![ZERO; x.len()];
    for col in 0..a.ncols() {
        let xc = x[col];
        for (row, val) in a.row_idx_of_col(col).zip(a.val_of_col(col)) {
            out[row] += val * xc;
        }
    }
    out
}

fn solve_vec(llt: &Llt<usize, c64>, b: &[c64]) -> Vec<c64> {
    let mut m = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    llt.solve_in_place(m.as_mut());
    m.col(0).iter().copied().collect()
}

/// Solve the normal equations `(PᴴP + μAᴴA) u^e = Pᴴ d* + μ Aᴴ b*` for
/// every source of `lin`, with `observed` as `d*`.
pub fn wri_assimilated_wavefield(lin: &Linearization, observed: &DataSet, mu: f64) -> Result<AssimilatedWavefield> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(FwiError::Config(format!("penalty parameter must be positive, got {mu}")));
    }
    if observed.n_sources() != lin.stations.n_sources() || observed.n_receivers != lin.stations.n_receivers() {
        return Err(FwiError::Config("observed data does not match the acquisition".into()));
    }
    let normal = normal_matrix(lin, mu)?;
    let llt = normal
        .sp_cholesky(Side::Lower)
        .map_err(|e| FwiError::Numerical(format!("normal-equation factorization failed: {e:?}")))?;
    let op = lin.fact.operator();
    let mut fields = Vec::with_capacity(observed.n_sources());
    let mut normal_residuals = Vec::with_capacity(observed.n_sources());
    for (s, trace) in observed.traces.iter().enumerate() {
        let b = lin.stations.source_vector(s);
        let mut rhs = lin.stations.inject(trace);
        for (r, v) in rhs.iter_mut().zip(op.apply_adjoint(&b)) {
            *r += v * mu;
        }
        let mut x = solve_vec(&llt, &rhs);
        let mut res = residual(&normal, &x, &rhs);
        for _ in 0..REFINEMENT_SWEEPS {
            let dx = solve_vec(&llt, &res);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
            res = residual(&normal, &x, &rhs);
        }
        if !x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(FwiError::Numerical("assimilated wavefield is not finite".into()));
        }
        normal_residuals.push(norm(&res) / norm(&rhs).max(f64::MIN_POSITIVE));
        fields.push(x);
    }
    Ok(AssimilatedWavefield {
        mu,
        frequency_hz: observed.frequency_hz,
        fields,
        normal_residuals,
    })
}

fn residual(a: &SparseColMat<usize, c64>, x: &[c64], rhs: &[c64]) -> Vec<c64> {
    apply_sparse(a, x).iter().zip(rhs).map(|(ax, b)| b - ax).collect()
}
