//! Generalized eigenproblems of the Witten Laplacian, split into harmonic,
//! exact and coexact parts.
//!
//! Each degree keeps an M-orthogonal splitting `C^p = H ⊕ im D_{p−1} ⊕ coexact`.
//! The exact part is handled with a projector built from the independent
//! columns of `D_{p−1}`, the harmonic part from an explicit cocycle basis.
//! Small systems go through a dense pencil on a basis of the subspace, large
//! ones through block Krylov iteration with a grounded Laplacian solve.

use std::io::Write;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::cholesky::SparseCholesky;
use crate::cohomology::cocycle_basis;
use crate::complex::{Complex, DomainTag};
use crate::dense;
use crate::eigen::{scaled_residual, smallest_eigenpairs, EigenPairs, KrylovOptions, PencilOperator};
use crate::error::{Error, Result};
use crate::rank::{row_echelon, Echelon, PIVOT_TOL};
use crate::sparse::{axpy, dot, norm2, Csr};
use crate::witten_ops::{assemble_mass_on, up_stiffness, Gauge, Geometry, Mass, MassScheme, OperatorBundle, WeightField};

/// Largest `n_p + n_{p+1}` accepted by [`minmax_bruteforce`].
pub const BRUTEFORCE_LIMIT: usize = 400;
/// Relative least-squares residual above which a cochain counts as non-exact.
pub const EXACTNESS_TOL: f64 = 1e-8;
/// Relative size of `D z` below which `z` counts as closed.
pub const CLOSEDNESS_TOL: f64 = 1e-9;
/// Dense kernel count: eigenvalues below this fraction of the largest are zero.
pub const KERNEL_TOL: f64 = 1e-9;
/// Harmonic vectors must satisfy `‖L h‖ ≤ HARMONIC_TOL · ‖L‖ ‖M h‖`.
pub const HARMONIC_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Relative residual target.
    pub tol: f64,
    /// Systems with at most this many unknowns are solved densely.
    pub dense_threshold: usize,
    pub seed: u64,
    pub block: usize,
    /// 0 picks a size from the request.
    pub max_basis: usize,
    pub max_restarts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, dense_threshold: 2000, seed: 0x5eed, block: 8, max_basis: 0, max_restarts: 200 }
    }
}

impl SolverOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_dense_threshold(mut self, n: usize) -> Self {
        self.dense_threshold = n;
        self
    }

    fn krylov(&self) -> KrylovOptions {
        KrylovOptions {
            tol: self.tol,
            block: self.block,
            max_basis: self.max_basis,
            max_restarts: self.max_restarts,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dense,
    Krylov,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Harmonic,
    Exact,
    Coexact,
    /// Whole Laplacian without splitting (Dirichlet problems).
    Full,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Harmonic => "harmonic",
            Kind::Exact => "exact",
            Kind::Coexact => "coexact",
            Kind::Full => "full",
        }
    }
}

/// Eigenpairs of one part of the spectrum; vectors are M-orthonormal columns.
#[derive(Clone, Debug)]
pub struct SpectralPart {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
    /// Bounds on the relative eigenvalue error: the mass-scaled direct
    /// residual for dense solves, the shift-invert residual for Krylov ones.
    pub residuals: Vec<f64>,
}

impl From<EigenPairs> for SpectralPart {
    fn from(p: EigenPairs) -> Self {
        SpectralPart { values: p.values, vectors: p.vectors, residuals: p.residuals }
    }
}

impl SpectralPart {
    pub fn empty(n: usize) -> Self {
        SpectralPart { values: vec![], vectors: Array2::zeros((n, 0)), residuals: vec![] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i).to_vec()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// Keeps the first `k` pairs.
    pub fn truncated(&self, k: usize) -> SpectralPart {
        let k = k.min(self.len());
        SpectralPart {
            values: self.values[..k].to_vec(),
            vectors: self.vectors.slice(s![.., ..k]).to_owned(),
            residuals: self.residuals[..k].to_vec(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpectrumResult {
    pub degree: usize,
    pub harmonic_dim: usize,
    /// M-orthonormal basis of the discrete harmonic cochains.
    pub harmonic: Array2<f64>,
    /// `‖L h‖ / ‖M h‖` per harmonic basis vector.
    pub harmonic_residuals: Vec<f64>,
    pub coexact: SpectralPart,
    pub exact: SpectralPart,
    pub full: Option<SpectralPart>,
    pub tol: f64,
    pub method: Method,
    /// Operator applications (Krylov) or 0 (dense).
    pub iterations: usize,
}

impl SpectrumResult {
    /// Largest residual over the computed nonzero eigenpairs.
    pub fn max_residual(&self) -> f64 {
        let full = self.full.as_ref().map_or(0.0, |f| f.max_residual());
        self.coexact.max_residual().max(self.exact.max_residual()).max(full)
    }
}

enum MassSolver {
    Diagonal(Vec<f64>),
    Factor(SparseCholesky),
}

impl MassSolver {
    fn new(m: &Mass) -> Result<Self> {
        Ok(match m {
            Mass::Diagonal(d) => MassSolver::Diagonal(d.clone()),
            Mass::Sparse(s) => MassSolver::Factor(SparseCholesky::factor(s)?),
        })
    }

    fn solve(&self, x: &[f64]) -> Vec<f64> {
        match self {
            MassSolver::Diagonal(d) => x.iter().zip(d).map(|(a, b)| a / b).collect(),
            MassSolver::Factor(c) => c.solve(x),
        }
    }

    fn solve_dense(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for j in 0..x.ncols() {
            let col = self.solve(&x.column(j).to_vec());
            out.column_mut(j).assign(&ndarray::Array1::from(col));
        }
        out
    }
}

/// M-orthogonal projector onto `im D_{p−1}`, using the independent columns.
struct ExactProjector {
    cols: Csr<f64>,
    weighted_t: Csr<f64>,
    chol: SparseCholesky,
}

impl ExactProjector {
    fn new(d: &Csr<f64>, pivot_cols: &[usize], mass: &Mass) -> Result<Self> {
        let rows: Vec<usize> = (0..d.nrows()).collect();
        let cols = d.select(&rows, pivot_cols);
        let weighted_t = mass.to_csr().matmul(&cols).transpose();
        let gram = weighted_t.matmul(&cols);
        Ok(ExactProjector { chol: SparseCholesky::factor(&gram)?, cols, weighted_t })
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.cols.matvec(&self.chol.solve(&self.weighted_t.matvec(x)))
    }
}

/// Laplacian with `b` rows and columns removed so that it becomes definite.
struct Grounded {
    keep: Vec<usize>,
    n: usize,
    chol: SparseCholesky,
}

impl Grounded {
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = self.keep.iter().map(|&i| rhs[i]).collect();
        let y = self.chol.solve(&r);
        let mut out = vec![0.0; self.n];
        for (&i, v) in self.keep.iter().zip(y) {
            out[i] = v;
        }
        out
    }
}

/// Rows of `h` (scaled by `sqrt(diag M)`) chosen by greedy complete pivoting,
/// one per column. Removing them makes the Laplacian definite.
fn ground_rows(h: &Array2<f64>, mass_diag: &[f64]) -> Vec<usize> {
    let (n, b) = h.dim();
    let mut w = h.clone();
    for (mut row, &m) in w.rows_mut().into_iter().zip(mass_diag) {
        row *= m.sqrt();
    }
    let mut cols: Vec<usize> = (0..b).collect();
    let mut rows = Vec::with_capacity(b);
    let mut used = vec![false; n];
    while !cols.is_empty() {
        let (mut bi, mut bj, mut best) = (0, 0, -1.0);
        for i in (0..n).filter(|&i| !used[i]) {
            for (cj, &j) in cols.iter().enumerate() {
                let v = w[[i, j]].abs();
                if v > best {
                    (bi, bj, best) = (i, cj, v);
                }
            }
        }
        let pj = cols.swap_remove(bj);
        used[bi] = true;
        rows.push(bi);
        let pivot = w[[bi, pj]];
        for &j in &cols {
            let f = w[[bi, j]] / pivot;
            if f != 0.0 {
                for i in 0..n {
                    w[[i, j]] -= f * w[[i, pj]];
                }
            }
        }
    }
    rows
}

/// Per-degree machinery: subspace projectors, harmonic basis, operator
/// applications and the eigen solvers for the exact and coexact parts.
pub struct DegreeSolver<'a> {
    bundle: &'a OperatorBundle,
    p: usize,
    n: usize,
    opts: SolverOptions,
    rank_prev: usize,
    next: Option<Echelon>,
    exact: Option<ExactProjector>,
    prev_mass: Option<MassSolver>,
    mass_diag: Vec<f64>,
    harmonic: Array2<f64>,
    harmonic_m: Array2<f64>,
}

impl<'a> DegreeSolver<'a> {
    pub fn new(bundle: &'a OperatorBundle, p: usize, opts: &SolverOptions) -> Result<Self> {
        let top = bundle.dimension();
        if p > top {
            return Err(Error::DegreeOutOfRange { p, max: top });
        }
        let n = bundle.size(p);
        let (rank_prev, exact, prev_mass) = if p > 0 {
            let ech = row_echelon(bundle.incidence(p - 1), PIVOT_TOL);
            let proj = if ech.rank > 0 {
                Some(ExactProjector::new(bundle.coboundary(p - 1), &ech.pivot_cols, bundle.mass(p))?)
            } else {
                None
            };
            (ech.rank, proj, Some(MassSolver::new(bundle.mass(p - 1))?))
        } else {
            (0, None, None)
        };
        let next = (p < top).then(|| row_echelon(bundle.incidence(p), PIVOT_TOL));
        let rank_next = next.as_ref().map_or(0, |e| e.rank);
        let b = n
            .checked_sub(rank_prev + rank_next)
            .ok_or_else(|| Error::Invalid(format!("incidence ranks exceed the number of {p}-cells")))?;
        let mut solver = DegreeSolver {
            bundle,
            p,
            n,
            opts: opts.clone(),
            rank_prev,
            next,
            exact,
            prev_mass,
            mass_diag: bundle.mass(p).diag_entries(),
            harmonic: Array2::zeros((n, 0)),
            harmonic_m: Array2::zeros((n, 0)),
        };
        if b > 0 {
            solver.build_harmonic()?;
        }
        Ok(solver)
    }

    fn build_harmonic(&mut self) -> Result<()> {
        let top = self.bundle.dimension();
        let prev = (self.p > 0).then(|| self.bundle.incidence(self.p - 1));
        let next = (self.p < top).then(|| self.bundle.incidence(self.p));
        let mut h = cocycle_basis(prev, next, self.n, self.opts.seed)?;
        for (mut row, &t) in h.rows_mut().into_iter().zip(self.bundle.twist(self.p)) {
            row /= t;
        }
        if let Some(ex) = &self.exact {
            for j in 0..h.ncols() {
                let pc = ex.apply(&h.column(j).to_vec());
                for (i, v) in pc.into_iter().enumerate() {
                    h[[i, j]] -= v;
                }
            }
        }
        let mass = self.bundle.mass(self.p);
        let mh = mass.apply_dense(&h);
        let (vals, q) = dense::sym_eigh(&h.t().dot(&mh))?;
        if !(vals[0] > 0.0) {
            return Err(Error::Invalid("harmonic basis collapsed under the mass inner product".into()));
        }
        let mut scale = q;
        for (mut col, v) in scale.columns_mut().into_iter().zip(&vals) {
            col /= v.sqrt();
        }
        self.harmonic = h.dot(&scale);
        self.harmonic_m = mh.dot(&scale);
        Ok(())
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn harmonic_dim(&self) -> usize {
        self.harmonic.ncols()
    }

    pub fn exact_dim(&self) -> usize {
        self.rank_prev
    }

    pub fn coexact_dim(&self) -> usize {
        self.next.as_ref().map_or(0, |e| e.rank)
    }

    /// M-orthonormal harmonic basis.
    pub fn harmonic(&self) -> &Array2<f64> {
        &self.harmonic
    }

    fn mass(&self) -> &Mass {
        self.bundle.mass(self.p)
    }

    /// M-orthogonal projection onto `im D_{p−1}`.
    pub fn exact_component(&self, x: &[f64]) -> Vec<f64> {
        match &self.exact {
            Some(ex) => ex.apply(x),
            None => vec![0.0; x.len()],
        }
    }

    pub fn remove_harmonic(&self, x: &mut [f64]) {
        for j in 0..self.harmonic.ncols() {
            let c = dot(&self.harmonic_m.column(j).to_vec(), x);
            for (xi, hi) in x.iter_mut().zip(self.harmonic.column(j)) {
                *xi -= c * hi;
            }
        }
    }

    pub fn project_coexact(&self, x: &mut [f64]) {
        if let Some(ex) = &self.exact {
            let px = ex.apply(x);
            axpy(-1.0, &px, x);
        }
        self.remove_harmonic(x);
    }

    pub fn project_exact(&self, x: &mut [f64]) {
        let px = self.exact_component(x);
        x.copy_from_slice(&px);
    }

    /// `(‖D x‖²_{M_{p+1}}, A x)`.
    fn up(&self, x: &[f64]) -> (f64, Vec<f64>) {
        if self.p == self.bundle.dimension() {
            return (0.0, vec![0.0; self.n]);
        }
        let d = self.bundle.coboundary(self.p);
        let y = d.matvec(x);
        let my = self.bundle.mass(self.p + 1).apply(&y);
        (dot(&y, &my), d.matvec_t(&my))
    }

    /// `(‖M_{p−1}^{-1} Dᵀ M x‖²_{M_{p−1}}, M D M_{p−1}^{-1} Dᵀ M x)`.
    fn down(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let Some(inv) = &self.prev_mass else {
            return (0.0, vec![0.0; self.n]);
        };
        let d = self.bundle.coboundary(self.p - 1);
        let y = d.matvec_t(&self.mass().apply(x));
        let z = inv.solve(&y);
        (dot(&y, &z), self.mass().apply(&d.matvec(&z)))
    }

    /// Rayleigh quotient and relative residual for the given part.
    fn pair(&self, kind: Kind, x: &[f64]) -> (f64, f64) {
        let mx = self.mass().apply(x);
        let (num, ax) = match kind {
            Kind::Coexact => self.up(x),
            Kind::Exact => self.down(x),
            _ => {
                let (a, mut u) = self.up(x);
                let (b, v) = self.down(x);
                axpy(1.0, &v, &mut u);
                (a + b, u)
            }
        };
        let lambda = num / dot(x, &mx);
        let mut r = ax;
        axpy(-lambda, &mx, &mut r);
        (lambda, scaled_residual(&r, &mx, lambda, &self.mass_diag))
    }

    /// `‖L h‖ / ‖M h‖` for each harmonic basis vector, in the scaled norm.
    pub fn harmonic_residuals(&self) -> Vec<f64> {
        (0..self.harmonic.ncols())
            .map(|j| {
                let h = self.harmonic.column(j).to_vec();
                let (_, mut u) = self.up(&h);
                let (_, v) = self.down(&h);
                axpy(1.0, &v, &mut u);
                scaled_residual(&u, &self.mass().apply(&h), 0.0, &self.mass_diag)
            })
            .collect()
    }

    /// Evaluates, normalizes and sorts candidate eigenvectors.
    fn finish(&self, kind: Kind, x: &Array2<f64>) -> SpectralPart {
        let mut pairs: Vec<(f64, f64, Vec<f64>)> = (0..x.ncols())
            .map(|j| {
                let mut v = x.column(j).to_vec();
                let nrm = self.mass().norm(&v);
                v.iter_mut().for_each(|e| *e /= nrm);
                let (lam, res) = self.pair(kind, &v);
                (lam, res, v)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut vectors = Array2::zeros((self.n, pairs.len()));
        for (j, (_, _, v)) in pairs.iter().enumerate() {
            vectors.column_mut(j).assign(&ndarray::Array1::from(v.clone()));
        }
        SpectralPart {
            values: pairs.iter().map(|p| p.0).collect(),
            residuals: pairs.iter().map(|p| p.1).collect(),
            vectors,
        }
    }

    fn use_dense(&self) -> bool {
        self.n <= self.opts.dense_threshold
    }

    /// The `k` smallest eigenpairs on the coexact subspace.
    pub fn coexact(&self, k: usize) -> Result<(SpectralPart, Method, usize)> {
        let avail = self.coexact_dim();
        if k > avail {
            return Err(Error::TooMany { requested: k, available: avail });
        }
        if k == 0 {
            return Ok((SpectralPart::empty(self.n), Method::Dense, 0));
        }
        if self.use_dense() {
            return Ok((self.coexact_dense(k)?, Method::Dense, 0));
        }
        let grounded = self.grounded()?;
        let op = KrylovOp { solver: self, kind: Kind::Coexact, grounded: &grounded };
        let pairs = smallest_eigenpairs(&op, k, &self.opts.krylov())?;
        let its = pairs.iterations;
        Ok((SpectralPart::from(pairs), Method::Krylov, its))
    }

    /// The `k` smallest eigenpairs on the exact subspace.
    pub fn exact(&self, k: usize) -> Result<(SpectralPart, Method, usize)> {
        let avail = self.exact_dim();
        if k > avail {
            return Err(Error::TooMany { requested: k, available: avail });
        }
        if k == 0 {
            return Ok((SpectralPart::empty(self.n), Method::Dense, 0));
        }
        if self.use_dense() {
            return Ok((self.exact_dense(k)?, Method::Dense, 0));
        }
        if self.bundle.scheme() == MassScheme::Consistent {
            // d maps coexact eigenpairs of degree p−1 onto exact ones of degree p
            let lower = DegreeSolver::new(self.bundle, self.p - 1, &self.opts)?;
            let (part, method, its) = lower.coexact(k)?;
            let mapped = self.bundle.coboundary(self.p - 1).matmul_dense(&part.vectors);
            return Ok((self.finish(Kind::Exact, &mapped), method, its));
        }
        let grounded = self.grounded()?;
        let op = KrylovOp { solver: self, kind: Kind::Exact, grounded: &grounded };
        let pairs = smallest_eigenpairs(&op, k, &self.opts.krylov())?;
        let its = pairs.iterations;
        Ok((SpectralPart::from(pairs), Method::Krylov, its))
    }

    fn coexact_dense(&self, k: usize) -> Result<SpectralPart> {
        let ech = self.next.as_ref().expect("coexact part exists");
        let d = self.bundle.coboundary(self.p);
        let all: Vec<usize> = (0..self.n).collect();
        let dr = d.select(&ech.pivot_rows, &all);
        // columns of B = M^{-1} D_Rᵀ span the coexact subspace
        let b = MassSolver::new(self.mass())?.solve_dense(&dr.transpose().to_dense());
        let db = d.matmul_dense(&b);
        let kmat = db.t().dot(&self.bundle.mass(self.p + 1).apply_dense(&db));
        let g = dr.matmul_dense(&b);
        let (_, y) = dense::gen_eigh(&kmat, &g)?;
        Ok(self.finish(Kind::Coexact, &b.dot(&y.slice(s![.., ..k]))))
    }

    fn exact_dense(&self, k: usize) -> Result<SpectralPart> {
        let ex = self.exact.as_ref().expect("exact part exists");
        let inv = self.prev_mass.as_ref().expect("degree above zero");
        let e = ex.cols.to_dense();
        let me = self.mass().apply_dense(&e);
        let w = self.bundle.coboundary(self.p - 1).transpose().matmul_dense(&me);
        let kmat = w.t().dot(&inv.solve_dense(&w));
        let g = e.t().dot(&me);
        let (_, y) = dense::gen_eigh(&kmat, &g)?;
        Ok(self.finish(Kind::Exact, &e.dot(&y.slice(s![.., ..k]))))
    }

    /// `A + Down` as a sparse matrix. With consistent masses the exact block
    /// uses the filler `c · M D_S D_Sᵀ M`, which has the same kernel but avoids
    /// the dense inverse mass.
    fn laplacian(&self) -> Csr<f64> {
        let a = self.bundle.stiffness(self.p).clone();
        let Some(ex) = &self.exact else { return a };
        match self.mass() {
            Mass::Diagonal(m) => {
                let inv = self.prev_mass.as_ref().expect("degree above zero");
                let MassSolver::Diagonal(mp) = inv else { unreachable!("lumped masses in every degree") };
                let bt = self.bundle.coboundary(self.p - 1).transpose().scale_rows_cols(None, Some(m));
                let inv_mp: Vec<f64> = mp.iter().map(|v| 1.0 / v).collect();
                a.add(&bt.transpose().matmul(&bt.scale_rows_cols(Some(&inv_mp), None)))
            }
            Mass::Sparse(_) => {
                let filler = ex.weighted_t.transpose().matmul(&ex.weighted_t);
                let fa = a.diagonal().into_iter().fold(0.0, f64::max);
                let ff = filler.diagonal().into_iter().fold(0.0, f64::max);
                let c = if fa > 0.0 && ff > 0.0 { fa / ff } else { 1.0 };
                a.add(&filler.scale(c))
            }
        }
    }

    fn grounded(&self) -> Result<Grounded> {
        let l = self.laplacian();
        let ground = ground_rows(&self.harmonic, &self.mass().diag_entries());
        let mut drop = vec![false; self.n];
        for &g in &ground {
            drop[g] = true;
        }
        let keep: Vec<usize> = (0..self.n).filter(|&i| !drop[i]).collect();
        let chol = SparseCholesky::factor(&l.select(&keep, &keep))?;
        Ok(Grounded { keep, n: self.n, chol })
    }

    /// Certified kernel dimension of the full Laplacian pencil: dense count
    /// for small systems; for large ones every harmonic vector must have a
    /// small residual and the grounded Laplacian must factor.
    pub fn kernel_dimension(&self) -> Result<usize> {
        if self.use_dense() {
            let l = self.laplacian_dense()?;
            let (vals, _) = dense::gen_eigh(&l, &self.mass().to_dense())?;
            let top = vals.last().copied().unwrap_or(0.0).max(0.0);
            return Ok(vals.iter().filter(|&&v| v <= KERNEL_TOL * top).count());
        }
        let scale = self.laplacian().max_abs() / self.mass().diag_entries().into_iter().fold(f64::INFINITY, f64::min);
        if let Some(r) = self.harmonic_residuals().into_iter().find(|&r| r > HARMONIC_TOL * scale) {
            return Err(Error::Invalid(format!("harmonic vector has residual {r:e}")));
        }
        self.grounded()?;
        Ok(self.harmonic_dim())
    }

    /// Genuine `A + M D M_{p−1}^{-1} Dᵀ M` as a dense matrix.
    fn laplacian_dense(&self) -> Result<Array2<f64>> {
        let mut l = self.bundle.stiffness(self.p).to_dense();
        if let Some(inv) = &self.prev_mass {
            let d = self.bundle.coboundary(self.p - 1);
            let w = d.transpose().matmul_dense(&self.mass().to_dense());
            l = l + w.t().dot(&inv.solve_dense(&w));
        }
        Ok(l)
    }
}

struct KrylovOp<'s, 'a> {
    solver: &'s DegreeSolver<'a>,
    kind: Kind,
    grounded: &'s Grounded,
}

impl PencilOperator for KrylovOp<'_, '_> {
    fn dim(&self) -> usize {
        self.solver.n
    }

    fn subspace_dim(&self) -> usize {
        match self.kind {
            Kind::Exact => self.solver.exact_dim(),
            _ => self.solver.coexact_dim(),
        }
    }

    fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        // leakage outside the subspace would be amplified by the solve
        let mut x = x.to_vec();
        self.project(&mut x);
        let mut y = self.grounded.solve(&self.solver.mass().apply(&x));
        self.project(&mut y);
        y
    }

    fn project(&self, x: &mut [f64]) {
        match self.kind {
            Kind::Exact => self.solver.project_exact(x),
            _ => self.solver.project_coexact(x),
        }
    }

    fn mass(&self, x: &[f64]) -> Vec<f64> {
        self.solver.mass().apply(x)
    }

    fn mass_diagonal(&self) -> &[f64] {
        &self.solver.mass_diag
    }

    fn stiffness(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match self.kind {
            Kind::Exact => self.solver.down(x),
            _ => self.solver.up(x),
        }
    }
}

fn assemble_result(solver: &DegreeSolver, coexact: (SpectralPart, Method, usize), exact: (SpectralPart, Method, usize)) -> SpectrumResult {
    let method = if coexact.1 == Method::Krylov || exact.1 == Method::Krylov { Method::Krylov } else { Method::Dense };
    SpectrumResult {
        degree: solver.p,
        harmonic_dim: solver.harmonic_dim(),
        harmonic: solver.harmonic.clone(),
        harmonic_residuals: solver.harmonic_residuals(),
        coexact: coexact.0,
        exact: exact.0,
        full: None,
        tol: solver.opts.tol,
        method,
        iterations: coexact.2 + exact.2,
    }
}

/// The `k` smallest coexact eigenvalues μ̃_{p,1..k} of the pencil `(A_p, M_p)`.
pub fn coexact_spectrum(bundle: &OperatorBundle, p: usize, k: usize, opts: &SolverOptions) -> Result<SpectrumResult> {
    let solver = DegreeSolver::new(bundle, p, opts)?;
    let co = solver.coexact(k)?;
    let ex = (SpectralPart::empty(solver.n), Method::Dense, 0);
    Ok(assemble_result(&solver, co, ex))
}

/// Harmonic basis plus up to `k` exact and `k` coexact eigenpairs; each part
/// is clamped to the dimension of its subspace.
pub fn full_hodge_spectrum(bundle: &OperatorBundle, p: usize, k: usize, opts: &SolverOptions) -> Result<SpectrumResult> {
    let solver = DegreeSolver::new(bundle, p, opts)?;
    let co = solver.coexact(k.min(solver.coexact_dim()))?;
    let ex = solver.exact(k.min(solver.exact_dim()))?;
    Ok(assemble_result(&solver, co, ex))
}

/// Dimension of the kernel of the full Laplacian pencil in degree p.
pub fn kernel_dimension(bundle: &OperatorBundle, p: usize, opts: &SolverOptions) -> Result<usize> {
    DegreeSolver::new(bundle, p, opts)?.kernel_dimension()
}

/// μ̃_{p,i} straight from the min–max over exact (p+1)-cochains, with the
/// quotient norm `|ω| = min{‖θ‖ : Dθ = ω}`. Dense; `i` is 1-based.
pub fn minmax_bruteforce(bundle: &OperatorBundle, p: usize, i: usize) -> Result<f64> {
    let top = bundle.dimension();
    if p >= top {
        return Err(Error::DegreeOutOfRange { p, max: top.saturating_sub(1) });
    }
    let (n, m) = (bundle.size(p), bundle.size(p + 1));
    if n + m > BRUTEFORCE_LIMIT {
        return Err(Error::TooLarge { dim: n + m, limit: BRUTEFORCE_LIMIT });
    }
    let r = row_echelon(bundle.incidence(p), PIVOT_TOL).rank;
    if i == 0 || i > r {
        return Err(Error::TooMany { requested: i, available: r });
    }
    // D̂ = D M^{-1/2}; exact cochains are U_r a with |U_r a| = ‖Σ^{-1} a‖
    let inv_sqrt = match bundle.mass(p) {
        Mass::Diagonal(d) => Array2::from_diag(&ndarray::Array1::from_iter(d.iter().map(|v| 1.0 / v.sqrt()))),
        Mass::Sparse(s) => {
            let (vals, q) = dense::sym_eigh(&s.to_dense())?;
            let mut qs = q.clone();
            for (mut col, v) in qs.columns_mut().into_iter().zip(&vals) {
                col /= v.sqrt();
            }
            qs.dot(&q.t())
        }
    };
    let dhat = bundle.coboundary(p).matmul_dense(&inv_sqrt);
    let (sigma, u) = dense::left_singular(&dhat)?;
    let mut us = u.slice(s![.., ..r]).to_owned();
    for (mut col, sv) in us.columns_mut().into_iter().zip(&sigma) {
        col *= *sv;
    }
    let q = us.t().dot(&bundle.mass(p + 1).apply_dense(&us));
    let (vals, _) = dense::sym_eigh(&q)?;
    Ok(vals[i - 1])
}

/// The primitive of an exact (p+1)-cochain with least M_p-norm; it is the
/// unique primitive M-orthogonal to `ker D_p`.
pub fn min_norm_primitive(bundle: &OperatorBundle, p: usize, omega: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    let top = bundle.dimension();
    if p >= top {
        return Err(Error::DegreeOutOfRange { p, max: top.saturating_sub(1) });
    }
    if omega.len() != bundle.size(p + 1) {
        return Err(Error::Invalid(format!("cochain has {} entries, expected {}", omega.len(), bundle.size(p + 1))));
    }
    let solver = DegreeSolver::new(bundle, p, opts)?;
    let n = bundle.size(p);
    let on = norm2(omega);
    if on == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let ech = solver.next.as_ref().expect("degree below top");
    if ech.rank == 0 {
        return Err(Error::NotExact { distance: 1.0 });
    }
    let d = bundle.coboundary(p);
    let all: Vec<usize> = (0..n).collect();
    let dr = d.select(&ech.pivot_rows, &all);
    let gram = dr.matmul(&dr.transpose());
    let rhs: Vec<f64> = ech.pivot_rows.iter().map(|&i| omega[i]).collect();
    let mut theta = dr.matvec_t(&SparseCholesky::factor(&gram)?.solve(&rhs));
    let mut res = d.matvec(&theta);
    axpy(-1.0, omega, &mut res);
    let distance = norm2(&res) / on;
    if distance > EXACTNESS_TOL {
        return Err(Error::NotExact { distance });
    }
    solver.project_coexact(&mut theta);
    Ok(theta)
}

/// The representative of `[z]` with least M_p-norm: `z` minus its
/// M-orthogonal projection onto the exact cochains.
pub fn harmonic_representative(bundle: &OperatorBundle, p: usize, z: &[f64]) -> Result<Vec<f64>> {
    let top = bundle.dimension();
    if p > top {
        return Err(Error::DegreeOutOfRange { p, max: top });
    }
    if z.len() != bundle.size(p) {
        return Err(Error::Invalid(format!("cochain has {} entries, expected {}", z.len(), bundle.size(p))));
    }
    if p < top {
        let d = bundle.coboundary(p);
        let dz = norm2(&d.matvec(z));
        if dz > CLOSEDNESS_TOL * d.max_abs() * norm2(z).max(f64::MIN_POSITIVE) * 4.0 {
            return Err(Error::NotClosed { norm: dz });
        }
    }
    let mut h = z.to_vec();
    if p > 0 {
        let ech = row_echelon(bundle.incidence(p - 1), PIVOT_TOL);
        if ech.rank > 0 {
            let ex = ExactProjector::new(bundle.coboundary(p - 1), &ech.pivot_cols, bundle.mass(p))?;
            axpy(-1.0, &ex.apply(z), &mut h);
        }
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Absolute,
    Relative,
    Dirichlet,
}

/// Mass given to cells on the interface of U.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterfaceMass {
    /// Only the dual parts inside U.
    #[default]
    Inside,
    /// The whole dual cell, as in the collapse family where interface cells
    /// keep the U scale.
    Closure,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discretization {
    pub gauge: Gauge,
    pub scheme: MassScheme,
    #[serde(default)]
    pub interface: InterfaceMass,
}

impl Discretization {
    fn tops<'d>(&self, domain: &'d DomainTag) -> Option<&'d [bool]> {
        match self.interface {
            InterfaceMass::Inside => Some(domain.top_flags()),
            InterfaceMass::Closure => None,
        }
    }
}

/// A domain U inside a weighted complex.
#[derive(Clone, Copy)]
pub struct DomainSetup<'a> {
    pub complex: &'a Complex,
    pub domain: &'a DomainTag,
    pub geometry: &'a Geometry,
    pub weight: &'a WeightField,
    pub disc: Discretization,
}

impl DomainSetup<'_> {
    /// Operators on U: all cells of the closure (absolute) or the cells off
    /// the interface (relative), with interface masses per `disc.interface`.
    pub fn bundle(&self, bc: BoundaryCondition) -> Result<OperatorBundle> {
        let n = self.complex.dimension();
        let cells: Vec<Vec<usize>> = match bc {
            BoundaryCondition::Absolute => (0..=n).map(|p| self.domain.closure_cells(p)).collect(),
            BoundaryCondition::Relative => (0..=n).map(|p| self.domain.interior_cells(p)).collect(),
            BoundaryCondition::Dirichlet => {
                return Err(Error::Invalid("the dirichlet problem is not a single cochain complex".into()))
            }
        };
        OperatorBundle::assemble_restricted(
            self.complex,
            self.geometry,
            self.weight,
            self.disc.gauge,
            self.disc.scheme,
            &cells,
            self.disc.tops(self.domain),
        )
    }
}

/// Spectrum on U under an absolute, relative or Dirichlet condition.
pub fn domain_spectrum(setup: &DomainSetup, bc: BoundaryCondition, p: usize, k: usize, opts: &SolverOptions) -> Result<SpectrumResult> {
    match bc {
        BoundaryCondition::Dirichlet => dirichlet_spectrum(setup, p, k, opts),
        _ => full_hodge_spectrum(&setup.bundle(bc)?, p, k, opts),
    }
}

/// Full Laplacian with a definite stiffness.
struct FullOp {
    l: Csr<f64>,
    m: Vec<f64>,
    chol: Option<SparseCholesky>,
}

impl PencilOperator for FullOp {
    fn dim(&self) -> usize {
        self.m.len()
    }

    fn subspace_dim(&self) -> usize {
        self.m.len()
    }

    fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        self.chol.as_ref().expect("factored").solve(&self.mass(x))
    }

    fn project(&self, _x: &mut [f64]) {}

    fn mass(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.m).map(|(a, b)| a * b).collect()
    }

    fn mass_diagonal(&self) -> &[f64] {
        &self.m
    }

    fn stiffness(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let lx = self.l.matvec(x);
        (dot(x, &lx), lx)
    }
}

/// p-cochains vanish on the interface, (p−1)-cochains are free, so the whole
/// Laplacian is definite and no splitting is needed. Requires φ = 0 and
/// lumped masses.
fn dirichlet_spectrum(setup: &DomainSetup, p: usize, k: usize, opts: &SolverOptions) -> Result<SpectrumResult> {
    let (complex, domain) = (setup.complex, setup.domain);
    let n = complex.dimension();
    if p > n {
        return Err(Error::DegreeOutOfRange { p, max: n });
    }
    if !setup.weight.is_zero() {
        return Err(Error::Invalid("the dirichlet condition is only supported with phi = 0".into()));
    }
    if setup.disc.scheme != MassScheme::Lumped {
        return Err(Error::Invalid("the dirichlet condition requires lumped masses".into()));
    }
    let tops = setup.disc.tops(domain);
    let mass = |q: usize, cells: &[usize]| -> Result<Vec<f64>> {
        let m = assemble_mass_on(complex, setup.geometry, setup.weight, q, MassScheme::Lumped, tops)?;
        Ok(m.select(cells).diag_entries())
    };
    let rel = domain.interior_cells(p);
    let dim = rel.len();
    if k > dim {
        return Err(Error::TooMany { requested: k, available: dim });
    }
    let m = mass(p, &rel)?;
    let mut l = Csr::zeros(dim, dim);
    if p < n {
        let up_cells = domain.interior_cells(p + 1);
        let d = complex.coboundary(p)?.select(&up_cells, &rel).to_f64();
        l = l.add(&up_stiffness(&d, &Mass::Diagonal(mass(p + 1, &up_cells)?)));
    }
    if p > 0 {
        let low = domain.closure_cells(p - 1);
        let inv: Vec<f64> = mass(p - 1, &low)?.iter().map(|v| 1.0 / v).collect();
        let bt = complex.coboundary(p - 1)?.select(&rel, &low).to_f64().transpose().scale_rows_cols(None, Some(&m));
        l = l.add(&bt.transpose().matmul(&bt.scale_rows_cols(Some(&inv), None)));
    }
    let mut op = FullOp { l, m, chol: None };
    let (full, method, iterations) = if dim <= opts.dense_threshold {
        let (_, y) = dense::gen_eigh(&op.l.to_dense(), &Csr::diag(&op.m).to_dense())?;
        let mut pairs: Vec<(f64, f64, Vec<f64>)> = (0..k)
            .map(|j| {
                let mut v = y.column(j).to_vec();
                let nrm = dot(&v, &op.mass(&v)).sqrt();
                v.iter_mut().for_each(|e| *e /= nrm);
                let (lam, res) = crate::eigen::rayleigh_residual(&op, &v);
                (lam, res, v)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut vectors = Array2::zeros((dim, pairs.len()));
        for (j, (_, _, v)) in pairs.iter().enumerate() {
            vectors.column_mut(j).assign(&ndarray::Array1::from(v.clone()));
        }
        let part = SpectralPart {
            values: pairs.iter().map(|p| p.0).collect(),
            residuals: pairs.iter().map(|p| p.1).collect(),
            vectors,
        };
        (part, Method::Dense, 0)
    } else {
        op.chol = Some(SparseCholesky::factor(&op.l)?);
        let pairs = smallest_eigenpairs(&op, k, &opts.krylov())?;
        let its = pairs.iterations;
        (SpectralPart::from(pairs), Method::Krylov, its)
    };
    Ok(SpectrumResult {
        degree: p,
        harmonic_dim: 0,
        harmonic: Array2::zeros((dim, 0)),
        harmonic_residuals: vec![],
        coexact: SpectralPart::empty(dim),
        exact: SpectralPart::empty(dim),
        full: Some(full),
        tol: opts.tol,
        method,
        iterations,
    })
}

/// Gap hypothesis for comparing the first `n` eigenpairs of two problems:
/// `λ_{n+1} − λ_n ≥ eta` and `λ_{n+1} ≤ m_bound`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub n: usize,
    pub eta: f64,
    pub m_bound: f64,
}

impl GapConfig {
    pub fn new(n: usize, eta: f64, m_bound: f64) -> Result<Self> {
        if n == 0 || !(eta > 0.0) || !(m_bound > 0.0) {
            return Err(Error::Invalid(format!("gap config needs n ≥ 1, eta > 0, bound > 0 (got {n}, {eta}, {m_bound})")));
        }
        Ok(GapConfig { n, eta, m_bound })
    }
}

/// Largest of the relative eigenvalue deviations over the first N pairs and
/// the sine of the largest principal angle between the two N-dimensional
/// eigenspaces in the `mass` inner product. The gap hypothesis is checked
/// on `a`.
pub fn spectral_distance(a: &SpectralPart, b: &SpectralPart, cfg: &GapConfig, mass: &Mass) -> Result<f64> {
    let n = cfg.n;
    for (name, part) in [("first", a), ("second", b)] {
        if part.len() < n + 1 {
            return Err(Error::Invalid(format!("{name} result holds {} eigenpairs, need {}", part.len(), n + 1)));
        }
        if part.vectors.nrows() != mass.len() {
            return Err(Error::Invalid(format!("{name} result lives on a different cochain space")));
        }
    }
    let gap = a.values[n] - a.values[n - 1];
    if gap < cfg.eta {
        return Err(Error::GapViolated(format!("λ_{} − λ_{} = {gap:e} < eta = {:e}", n + 1, n, cfg.eta)));
    }
    if a.values[n] > cfg.m_bound {
        return Err(Error::GapViolated(format!("λ_{} = {:e} > bound {:e}", n + 1, a.values[n], cfg.m_bound)));
    }
    let dev = (0..n).map(|i| (a.values[i] - b.values[i]).abs() / a.values[i].abs()).fold(0.0, f64::max);
    let qa = a.vectors.slice(s![.., ..n]).to_owned();
    let qb = b.vectors.slice(s![.., ..n]).to_owned();
    let mqa = mass.apply_dense(&qa);
    let rest = &qb - &qa.dot(&mqa.t().dot(&qb));
    let (vals, _) = dense::sym_eigh(&rest.t().dot(&mass.apply_dense(&rest)))?;
    let sine = vals.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    Ok(dev.max(sine))
}

pub const CSV_HEADER: &str = "# witten spectrum csv v1";

/// One row per eigenvalue: `degree,kind,index,eigenvalue,residual`.
pub fn write_spectrum_csv<W: Write>(mut w: W, results: &[SpectrumResult]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    writeln!(w, "degree,kind,index,eigenvalue,residual")?;
    for r in results {
        for (i, res) in r.harmonic_residuals.iter().enumerate() {
            writeln!(w, "{},harmonic,{},{:.16e},{:.6e}", r.degree, i + 1, 0.0, res)?;
        }
        let parts = [(Kind::Exact, Some(&r.exact)), (Kind::Coexact, Some(&r.coexact)), (Kind::Full, r.full.as_ref())];
        for (kind, part) in parts {
            let Some(part) = part else { continue };
            for (i, (v, res)) in part.values.iter().zip(&part.residuals).enumerate() {
                writeln!(w, "{},{},{},{:.16e},{:.6e}", r.degree, kind.as_str(), i + 1, v, res)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{product_grid, Factor};
    use crate::witten_ops::CellField;

    fn torus_bundle(nx: usize, ny: usize, gauge: Gauge) -> OperatorBundle {
        let c = product_grid(vec![Factor::circle(nx, 1.0), Factor::circle(ny, 1.3)]).unwrap();
        let g = Geometry::from_complex(&c).unwrap();
        let w = CellField::from_fn(&c, |x| (6.0 * x[0]).sin() * 0.4 + (5.0 * x[1]).cos() * 0.3).unwrap();
        OperatorBundle::assemble(&c, &g, &w, gauge, MassScheme::Lumped).unwrap()
    }

    #[test]
    fn dense_and_krylov_agree() {
        let b = torus_bundle(14, 12, Gauge::Weighted);
        let dense_opts = SolverOptions::default();
        let sparse_opts = SolverOptions::default().with_dense_threshold(0);
        for p in 0..=2 {
            let d = full_hodge_spectrum(&b, p, 6, &dense_opts).unwrap();
            let k = full_hodge_spectrum(&b, p, 6, &sparse_opts).unwrap();
            assert_eq!(k.method, Method::Krylov);
            for (x, y) in d.coexact.values.iter().zip(&k.coexact.values).chain(d.exact.values.iter().zip(&k.exact.values)) {
                assert!((x - y).abs() < 1e-9 * x, "{x} vs {y}");
            }
            assert!(d.max_residual() < 1e-9 && k.max_residual() < 1e-9);
        }
    }

    #[test]
    fn exact_part_pairs_with_lower_coexact() {
        let b = torus_bundle(10, 9, Gauge::Twisted);
        let opts = SolverOptions::default();
        let r0 = full_hodge_spectrum(&b, 0, 5, &opts).unwrap();
        let r1 = full_hodge_spectrum(&b, 1, 5, &opts).unwrap();
        assert_eq!((r0.harmonic_dim, r1.harmonic_dim), (1, 2));
        for (x, y) in r0.coexact.values.iter().zip(&r1.exact.values) {
            assert!((x - y).abs() < 1e-10 * x);
        }
        assert_eq!(kernel_dimension(&b, 1, &opts).unwrap(), 2);
        assert_eq!(kernel_dimension(&b, 1, &opts.clone().with_dense_threshold(0)).unwrap(), 2);
    }

    #[test]
    fn distance_of_scaled_spectrum() {
        let b = torus_bundle(8, 8, Gauge::Weighted);
        let r = coexact_spectrum(&b, 0, 4, &SolverOptions::default()).unwrap();
        let mut scaled = r.coexact.clone();
        scaled.values.iter_mut().for_each(|v| *v *= 1.0 + 1e-3);
        let cfg = GapConfig::new(1, 1e-3, 1e6).unwrap();
        let dist = spectral_distance(&r.coexact, &scaled, &cfg, b.mass(0)).unwrap();
        assert!((dist - 1e-3).abs() < 1e-9, "{dist}");
    }
}
