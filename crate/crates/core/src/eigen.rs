//! Block Krylov iteration for the smallest eigenpairs of a pencil `(A, M)`
//! restricted to an invariant subspace.
//!
//! The iteration runs on `T = (A on the subspace)^{-1} M`, whose largest
//! eigenvalues are the reciprocals of the wanted ones. The basis is kept
//! M-orthonormal with two passes of classical Gram-Schmidt against every
//! stored vector, and restarts keep the leading Ritz vectors.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense;
use crate::error::{Error, Result};
use crate::sparse::{axpy, dot};

/// Operator access needed by [`smallest_eigenpairs`].
pub trait PencilOperator {
    fn dim(&self) -> usize;
    /// Dimension of the subspace the iteration lives in.
    fn subspace_dim(&self) -> usize;
    /// `T x`, already projected onto the subspace.
    fn apply_inverse(&self, x: &[f64]) -> Vec<f64>;
    /// Projects onto the subspace.
    fn project(&self, x: &mut [f64]);
    fn mass(&self, x: &[f64]) -> Vec<f64>;
    /// Diagonal of the mass matrix, used to scale residuals.
    fn mass_diagonal(&self) -> &[f64];
    /// Returns `(xᵀ A x, A x)`. The quadratic form should be evaluated in a
    /// cancellation-free way (as a weighted norm) when possible.
    fn stiffness(&self, x: &[f64]) -> (f64, Vec<f64>);
}

/// Restarts without halving the worst residual before giving up.
pub const STAGNATION_RESTARTS: usize = 20;

#[derive(Clone, Debug)]
pub struct KrylovOptions {
    pub tol: f64,
    pub block: usize,
    /// 0 picks a size from the request.
    pub max_basis: usize,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions { tol: 1e-10, block: 8, max_basis: 0, max_restarts: 200, seed: 0x5eed }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// Columns are M-orthonormal eigenvectors.
    pub vectors: Array2<f64>,
    /// Shift-invert residuals, see [`inverse_residual`].
    pub residuals: Vec<f64>,
    /// Number of operator applications.
    pub iterations: usize,
}

/// `‖D^{-1/2} r‖ / (|λ| ‖D^{-1/2} M x‖)` with `D = diag M` and
/// `r = A x − λ M x`. For a diagonal mass this is the M⁻¹-norm residual,
/// which bounds the relative distance from λ to the spectrum and does not
/// change under diagonal rescaling of the cochains.
pub fn scaled_residual(r: &[f64], mx: &[f64], lambda: f64, diag: &[f64]) -> f64 {
    let wnorm = |v: &[f64]| v.iter().zip(diag).map(|(a, d)| a * a / d).sum::<f64>().sqrt();
    let scale = if lambda != 0.0 { lambda.abs() * wnorm(mx) } else { wnorm(mx) };
    if scale > 0.0 {
        wnorm(r) / scale
    } else {
        wnorm(r)
    }
}

/// `‖T x − θ x‖_M / (|θ| ‖x‖_M)` for `w = T x`. Bounds the relative distance
/// from θ, and hence from λ = 1/θ, to the spectrum. Unlike the direct
/// residual it stays meaningful for eigenvalues far below the top of the
/// spectrum.
pub fn inverse_residual<O: PencilOperator + ?Sized>(op: &O, x: &[f64], w: &[f64], theta: f64) -> f64 {
    let mut r = w.to_vec();
    axpy(-theta, x, &mut r);
    let rn = dot(&r, &op.mass(&r)).max(0.0).sqrt();
    let xn = dot(x, &op.mass(x)).max(0.0).sqrt();
    rn / (theta.abs() * xn)
}

/// Rayleigh quotient and [`scaled_residual`].
pub fn rayleigh_residual<O: PencilOperator + ?Sized>(op: &O, x: &[f64]) -> (f64, f64) {
    let mx = op.mass(x);
    let (num, ax) = op.stiffness(x);
    let lambda = num / dot(x, &mx);
    let mut r = ax;
    axpy(-lambda, &mx, &mut r);
    (lambda, scaled_residual(&r, &mx, lambda, op.mass_diagonal()))
}

struct Basis {
    v: Vec<Vec<f64>>,
    mv: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
}

impl Basis {
    fn len(&self) -> usize {
        self.v.len()
    }

    /// M-orthonormalizes `x` against the basis. Returns `(x, Mx)` or `None`
    /// when `x` is numerically inside the span.
    fn orthonormalize<O: PencilOperator + ?Sized>(&self, op: &O, mut x: Vec<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
        op.project(&mut x);
        let start = op.mass(&x);
        let n0 = dot(&x, &start).max(0.0).sqrt();
        if !(n0 > 0.0) || !n0.is_finite() {
            return None;
        }
        for _ in 0..2 {
            for (v, mv) in self.v.iter().zip(&self.mv) {
                let c = dot(mv, &x);
                axpy(-c, v, &mut x);
            }
        }
        let mx = op.mass(&x);
        let nrm = dot(&x, &mx).max(0.0).sqrt();
        if nrm <= 1e-10 * n0 {
            return None;
        }
        Some((x.iter().map(|v| v / nrm).collect(), mx.iter().map(|v| v / nrm).collect()))
    }
}

fn combine(vecs: &[Vec<f64>], coeffs: &Array2<f64>, col: usize) -> Vec<f64> {
    let n = vecs[0].len();
    let mut out = vec![0.0; n];
    for (i, v) in vecs.iter().enumerate() {
        let c = coeffs[[i, col]];
        if c != 0.0 {
            axpy(c, v, &mut out);
        }
    }
    out
}

/// The `k` smallest eigenpairs of the pencil on the operator's subspace.
pub fn smallest_eigenpairs<O: PencilOperator + ?Sized>(op: &O, k: usize, opts: &KrylovOptions) -> Result<EigenPairs> {
    let n = op.dim();
    let avail = op.subspace_dim();
    if k > avail {
        return Err(Error::TooMany { requested: k, available: avail });
    }
    if k == 0 {
        return Ok(EigenPairs { values: vec![], vectors: Array2::zeros((n, 0)), residuals: vec![], iterations: 0 });
    }
    let block = opts.block.max(1).min(avail);
    let max_basis = if opts.max_basis > 0 { opts.max_basis } else { (4 * k + 2 * block).max(80) }
        .max(k + block)
        .min(avail);
    let keep = (k + block).min(max_basis);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis = Basis { v: Vec::new(), mv: Vec::new(), w: Vec::new() };
    let mut pending: Vec<Vec<f64>> = (0..block).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut applications = 0;
    let mut best = f64::INFINITY;
    let mut stagnant = 0;

    for _restart in 0..opts.max_restarts.max(1) {
        // expand
        let mut stalls = 0;
        while basis.len() < max_basis {
            if pending.is_empty() {
                pending = (0..block).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            }
            let mut added = Vec::new();
            for x in pending.drain(..) {
                if basis.len() >= max_basis {
                    break;
                }
                if let Some((q, mq)) = basis.orthonormalize(op, x) {
                    let w = op.apply_inverse(&q);
                    applications += 1;
                    basis.v.push(q);
                    basis.mv.push(mq);
                    basis.w.push(w.clone());
                    added.push(w);
                }
            }
            if added.is_empty() {
                // invariant subspace reached; continue from random directions
                stalls += 1;
                if stalls > 3 || basis.len() >= avail {
                    break;
                }
            }
            pending = added;
        }

        // Rayleigh-Ritz on T
        let m = basis.len();
        let mut h = Array2::zeros((m, m));
        for i in 0..m {
            for j in 0..m {
                h[[i, j]] = dot(&basis.mv[i], &basis.w[j]);
            }
        }
        let (theta, y) = dense::sym_eigh(&h)?;
        // descending θ ↔ ascending λ
        let order: Vec<usize> = (0..m).rev().collect();
        let take = keep.min(m);
        let mut ritz = Vec::with_capacity(take);
        let mut ritz_w = Vec::with_capacity(take);
        let mut res = Vec::with_capacity(take);
        for &col in order.iter().take(take) {
            let x = combine(&basis.v, &y, col);
            let w = combine(&basis.w, &y, col);
            res.push(inverse_residual(op, &x, &w, theta[col]));
            ritz.push(x);
            ritz_w.push(w);
        }
        let worst = res.iter().take(k).fold(0.0f64, |a, &b| a.max(b));
        if worst < 0.5 * best {
            stagnant = 0;
        } else {
            stagnant += 1;
        }
        best = best.min(worst);
        let whole = m >= avail;
        if worst <= opts.tol || whole {
            if !(worst <= opts.tol) && whole && worst > opts.tol.max(1e-6) {
                return Err(Error::NoConvergence { iterations: applications, residual: worst });
            }
            // fresh applications, so the reported residuals carry no restart drift
            let mut pairs: Vec<(f64, f64, Vec<f64>)> = ritz
                .into_iter()
                .take(k)
                .map(|x| {
                    let nrm = dot(&x, &op.mass(&x)).sqrt();
                    let x: Vec<f64> = x.iter().map(|v| v / nrm).collect();
                    let w = op.apply_inverse(&x);
                    let th = dot(&op.mass(&x), &w);
                    let (num, _) = op.stiffness(&x);
                    (num, inverse_residual(op, &x, &w, th), x)
                })
                .collect();
            applications += k;
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut vectors = Array2::zeros((n, k));
            for (c, (_, _, x)) in pairs.iter().enumerate() {
                for r in 0..n {
                    vectors[[r, c]] = x[r];
                }
            }
            return Ok(EigenPairs {
                values: pairs.iter().map(|p| p.0).collect(),
                vectors,
                residuals: pairs.iter().map(|p| p.1).collect(),
                iterations: applications,
            });
        }

        if stagnant > STAGNATION_RESTARTS {
            // roundoff floor of the inverse above the tolerance
            return Err(Error::NoConvergence { iterations: applications, residual: best });
        }

        // thick restart: keep leading Ritz vectors, continue from T of the unconverged ones
        let mut next = Basis { v: Vec::new(), mv: Vec::new(), w: Vec::new() };
        for (x, w) in ritz.iter().zip(&ritz_w) {
            let mx = op.mass(x);
            let nrm = dot(x, &mx).sqrt();
            next.v.push(x.iter().map(|v| v / nrm).collect());
            next.mv.push(mx.iter().map(|v| v / nrm).collect());
            next.w.push(w.iter().map(|v| v / nrm).collect());
        }
        pending = (0..take).filter(|&i| i >= k || res[i] > opts.tol).take(block).map(|i| ritz_w[i].clone()).collect();
        basis = next;
    }
    Err(Error::NoConvergence { iterations: applications, residual: best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cholesky::SparseCholesky;
    use crate::sparse::Csr;

    /// Path Laplacian plus identity with a diagonal mass.
    struct Toy {
        a: Csr<f64>,
        m: Vec<f64>,
        chol: SparseCholesky,
    }

    impl PencilOperator for Toy {
        fn dim(&self) -> usize {
            self.m.len()
        }
        fn subspace_dim(&self) -> usize {
            self.m.len()
        }
        fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
            self.chol.solve(&self.mass(x))
        }
        fn project(&self, _x: &mut [f64]) {}
        fn mass(&self, x: &[f64]) -> Vec<f64> {
            x.iter().zip(&self.m).map(|(a, b)| a * b).collect()
        }
        fn mass_diagonal(&self) -> &[f64] {
            &self.m
        }
        fn stiffness(&self, x: &[f64]) -> (f64, Vec<f64>) {
            let ax = self.a.matvec(x);
            (dot(x, &ax), ax)
        }
    }

    #[test]
    fn matches_dense_pencil() {
        let n = 300;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + 0.01 * i as f64));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = Csr::from_triplets(n, n, t);
        let m: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
        let toy = Toy { chol: SparseCholesky::factor(&a).unwrap(), a: a.clone(), m: m.clone() };
        let got = smallest_eigenpairs(&toy, 6, &KrylovOptions::default()).unwrap();
        let (want, _) = dense::gen_eigh(&a.to_dense(), &Csr::diag(&m).to_dense()).unwrap();
        for i in 0..6 {
            assert!((got.values[i] - want[i]).abs() < 1e-10 * want[i], "{} vs {}", got.values[i], want[i]);
            assert!(got.residuals[i] < 1e-10);
        }
    }
}
