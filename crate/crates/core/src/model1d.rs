//! Continuum reference solvers on the circle and the interval, plus the
//! three equivalent expressions of the twisted Laplacian on periodic grids.
//!
//! Sign conventions: Δ = δd + dδ is the positive Laplacian, `div X := δX♭`
//! (so `div X = −X′` in one dimension), and the symmetric part of `∇X♭`
//! acts on p-forms as a derivation.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dense;
use crate::error::{Error, Result};
use crate::sparse::Csr;

/// Richardson pairs whose fine and coarse values differ by more than this
/// fraction (of max(|λ|, 1)) are rejected.
pub const RICHARDSON_DRIFT: f64 = 0.01;

pub type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Circle,
    Interval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalCondition {
    Absolute,
    Relative,
}

/// Uniform grid with φ, φ′, φ″ sampled at the nodes.
#[derive(Clone)]
pub struct Grid1D {
    kind: GridKind,
    start: f64,
    length: f64,
    x: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    d2phi: Vec<f64>,
    profile: Profile,
}

impl std::fmt::Debug for Grid1D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid1D").field("kind", &self.kind).field("nodes", &self.x.len()).field("length", &self.length).finish()
    }
}

impl Grid1D {
    /// `n` nodes on a circle of the given length; derivatives are spectral.
    pub fn circle(n: usize, length: f64, phi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        Self::circle_from(n, length, Arc::new(phi))
    }

    fn circle_from(n: usize, length: f64, profile: Profile) -> Result<Self> {
        if n < 8 || !(length > 0.0) {
            return Err(Error::Invalid(format!("circle grid needs ≥ 8 nodes and positive length (got {n}, {length})")));
        }
        let h = length / n as f64;
        let x: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let phi: Vec<f64> = x.iter().map(|&t| profile(t)).collect();
        let dphi = spectral_derivative(&phi, length, 1);
        let d2phi = spectral_derivative(&phi, length, 2);
        Ok(Grid1D { kind: GridKind::Circle, start: 0.0, length, x, phi, dphi, d2phi, profile })
    }

    /// `cells` cells on `[a, b]`; derivatives by fourth-order differences.
    pub fn interval(cells: usize, a: f64, b: f64, phi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        Self::interval_from(cells, a, b, Arc::new(phi))
    }

    fn interval_from(cells: usize, a: f64, b: f64, profile: Profile) -> Result<Self> {
        if cells < 6 || !(b > a) {
            return Err(Error::Invalid(format!("interval grid needs ≥ 6 cells and a < b (got {cells}, [{a}, {b}])")));
        }
        let h = (b - a) / cells as f64;
        let x: Vec<f64> = (0..=cells).map(|i| a + i as f64 * h).collect();
        let phi: Vec<f64> = x.iter().map(|&t| profile(t)).collect();
        let (dphi, d2phi) = one_sided_derivatives(&phi, h);
        Ok(Grid1D { kind: GridKind::Interval, start: a, length: b - a, x, phi, dphi, d2phi, profile })
    }

    /// Same field on a grid with twice as many cells.
    pub fn refined(&self) -> Result<Self> {
        match self.kind {
            GridKind::Circle => Self::circle_from(2 * self.x.len(), self.length, self.profile.clone()),
            GridKind::Interval => Self::interval_from(2 * self.cells(), self.start, self.start + self.length, self.profile.clone()),
        }
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn nodes(&self) -> usize {
        self.x.len()
    }

    pub fn cells(&self) -> usize {
        match self.kind {
            GridKind::Circle => self.x.len(),
            GridKind::Interval => self.x.len() - 1,
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.cells() as f64
    }

    pub fn coords(&self) -> &[f64] {
        &self.x
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn dphi(&self) -> &[f64] {
        &self.dphi
    }

    pub fn d2phi(&self) -> &[f64] {
        &self.d2phi
    }

    /// The grid with φ replaced by −φ.
    pub fn negated(&self) -> Self {
        let f = self.profile.clone();
        let neg: Profile = Arc::new(move |t| -f(t));
        match self.kind {
            GridKind::Circle => Self::circle_from(self.x.len(), self.length, neg),
            GridKind::Interval => Self::interval_from(self.cells(), self.start, self.start + self.length, neg),
        }
        .expect("same sizes as an existing grid")
    }
}

/// Derivative of a periodic sample by FFT. Odd orders drop the Nyquist mode.
pub fn spectral_derivative(f: &[f64], length: f64, order: u32) -> Vec<f64> {
    let n = f.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = f.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        if n % 2 == 0 && k == n / 2 && order % 2 == 1 {
            *c = Complex::new(0.0, 0.0);
            continue;
        }
        *c *= Complex::new(0.0, 2.0 * PI * kk / length).powu(order);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Fourth-order first and second derivatives on a non-periodic grid, with
/// one-sided stencils at the two nodes next to each end.
fn one_sided_derivatives(f: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = f.len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 2..n - 2 {
        d1[i] = (-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]) / (12.0 * h);
        d2[i] = (-f[i + 2] + 16.0 * f[i + 1] - 30.0 * f[i] + 16.0 * f[i - 1] - f[i - 2]) / (12.0 * h * h);
    }
    let fwd1 = |g: &dyn Fn(usize) -> f64| (-25.0 * g(0) + 48.0 * g(1) - 36.0 * g(2) + 16.0 * g(3) - 3.0 * g(4)) / (12.0 * h);
    let near1 = |g: &dyn Fn(usize) -> f64| (-3.0 * g(0) - 10.0 * g(1) + 18.0 * g(2) - 6.0 * g(3) + g(4)) / (12.0 * h);
    let fwd2 = |g: &dyn Fn(usize) -> f64| {
        (45.0 * g(0) - 154.0 * g(1) + 214.0 * g(2) - 156.0 * g(3) + 61.0 * g(4) - 10.0 * g(5)) / (12.0 * h * h)
    };
    let near2 = |g: &dyn Fn(usize) -> f64| {
        (10.0 * g(0) - 15.0 * g(1) - 4.0 * g(2) + 14.0 * g(3) - 6.0 * g(4) + g(5)) / (12.0 * h * h)
    };
    let left = |k: usize| f[k];
    let right = |k: usize| f[n - 1 - k];
    d1[0] = fwd1(&left);
    d1[1] = near1(&left);
    d1[n - 1] = -fwd1(&right);
    d1[n - 2] = -near1(&right);
    d2[0] = fwd2(&left);
    d2[1] = near2(&left);
    d2[n - 1] = fwd2(&right);
    d2[n - 2] = near2(&right);
    (d1, d2)
}

/// Periodic centered fourth-order first derivative.
fn periodic_d1(n: usize, h: f64) -> Csr<f64> {
    let c = 1.0 / (12.0 * h);
    let t = (0..n).flat_map(|i| {
        [(2, -c), (1, 8.0 * c), (n - 1, -8.0 * c), (n - 2, c)].map(|(o, v)| (i, (i + o) % n, v))
    });
    Csr::from_triplets(n, n, t.collect::<Vec<_>>())
}

/// Periodic centered fourth-order second derivative.
fn periodic_d2(n: usize, h: f64) -> Csr<f64> {
    let c = 1.0 / (12.0 * h * h);
    let t = (0..n).flat_map(|i| {
        [(0, -30.0 * c), (1, 16.0 * c), (n - 1, 16.0 * c), (2, -c), (n - 2, -c)].map(|(o, v)| (i, (i + o) % n, v))
    });
    Csr::from_triplets(n, n, t.collect::<Vec<_>>())
}

/// Staggered twisted differential: node values to midpoint values,
/// `(d̃f)_{i+1/2} = f′ + φ′ f` with fourth-order stencils.
fn staggered_twisted_d(grid: &Grid1D) -> Csr<f64> {
    let n = grid.nodes();
    let h = grid.spacing();
    let f = &grid.profile;
    let mut t = Vec::with_capacity(8 * n);
    for i in 0..n {
        let mid = grid.x[i] + 0.5 * h;
        // φ′ at the midpoint from the profile, sixth-order centered difference
        let e = 1e-3 * h.max(1e-3);
        let xm = (-f(mid + 3.0 * e) + 9.0 * f(mid + 2.0 * e) - 45.0 * f(mid + e) + 45.0 * f(mid - e)
            - 9.0 * f(mid - 2.0 * e)
            + f(mid - 3.0 * e))
            / (-60.0 * e);
        for (o, dv, iv) in [(n - 1, 1.0 / 24.0, -1.0 / 16.0), (0, -27.0 / 24.0, 9.0 / 16.0), (1, 27.0 / 24.0, 9.0 / 16.0), (2, -1.0 / 24.0, -1.0 / 16.0)] {
            t.push((i, (i + o) % n, dv / h + xm * iv));
        }
    }
    Csr::from_triplets(n, n, t)
}

/// Richardson-extrapolated spectra of the twisted Laplacian on a circle.
#[derive(Clone, Debug, Serialize)]
pub struct CircleSpectrum {
    /// Lowest k+1 eigenvalues on functions (the first is the ground state).
    pub zero_forms: Vec<f64>,
    /// Lowest k+1 eigenvalues on 1-forms.
    pub one_forms: Vec<f64>,
    pub coarse_zero: Vec<f64>,
    pub fine_zero: Vec<f64>,
    pub coarse_one: Vec<f64>,
    pub fine_one: Vec<f64>,
}

impl CircleSpectrum {
    /// μ̃_{0,1..k}: the function spectrum without its ground state.
    pub fn coexact(&self) -> &[f64] {
        &self.zero_forms[1..]
    }
}

fn lowest(a: &Csr<f64>, k: usize) -> Result<Vec<f64>> {
    let vals = dense::sym_eigvals(&a.to_dense())?;
    Ok(vals[..k].to_vec())
}

fn schrodinger(grid: &Grid1D) -> Csr<f64> {
    let v: Vec<f64> = grid.dphi.iter().zip(&grid.d2phi).map(|(a, b)| a * a - b).collect();
    periodic_d2(grid.nodes(), grid.spacing()).scale(-1.0).add(&Csr::diag(&v))
}

fn circle_levels(grid: &Grid1D, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let b = staggered_twisted_d(grid);
    let one = b.matmul(&b.transpose());
    Ok((lowest(&schrodinger(grid), k + 1)?, lowest(&one, k + 1)?))
}

fn richardson(coarse: &[f64], fine: &[f64]) -> Result<Vec<f64>> {
    coarse
        .iter()
        .zip(fine)
        .map(|(&c, &f)| {
            let drift = (f - c).abs() / f.abs().max(1.0);
            if drift > RICHARDSON_DRIFT {
                return Err(Error::Invalid(format!("Richardson drift {drift:.3e} between grids exceeds 1%")));
            }
            Ok(f + (f - c) / 15.0)
        })
        .collect()
}

/// Fourth-order spectra on the grid and its refinement, extrapolated.
/// Functions use `−f″ + (φ′² − φ″) f`; 1-forms use `d̃δ̃` assembled on a
/// staggered grid.
pub fn circle_witten_spectrum(grid: &Grid1D, k: usize) -> Result<CircleSpectrum> {
    if grid.kind != GridKind::Circle {
        return Err(Error::Invalid("circle spectrum needs a circle grid".into()));
    }
    if 4 * (k + 1) > grid.nodes() {
        return Err(Error::TooMany { requested: k, available: grid.nodes() / 4 });
    }
    let (coarse_zero, coarse_one) = circle_levels(grid, k)?;
    let (fine_zero, fine_one) = circle_levels(&grid.refined()?, k)?;
    Ok(CircleSpectrum {
        zero_forms: richardson(&coarse_zero, &fine_zero)?,
        one_forms: richardson(&coarse_one, &fine_one)?,
        coarse_zero,
        fine_zero,
        coarse_one,
        fine_one,
    })
}

/// Lowest `k` eigenvalues of the twisted Laplacian on functions of an
/// interval, from a weighted finite-volume scheme: stiffness weights
/// `e^{−2φ}` at midpoints, masses `e^{−2φ}` at nodes. The absolute
/// condition is natural, the relative one fixes the end values to zero.
pub fn interval_witten_spectrum(grid: &Grid1D, bc: IntervalCondition, k: usize) -> Result<Vec<f64>> {
    if grid.kind != GridKind::Interval {
        return Err(Error::Invalid("interval spectrum needs an interval grid".into()));
    }
    let n = grid.nodes();
    let h = grid.spacing();
    let f = &grid.profile;
    let phi_mid: Vec<f64> = (0..n - 1).map(|i| f(grid.x[i] + 0.5 * h)).collect();
    let share = |i: usize| if i == 0 || i == n - 1 { 0.5 * h } else { h };
    // symmetric form S = M^{-1/2} K M^{-1/2}, exponents combined to avoid underflow
    let mut t = Vec::new();
    for (e, &pm) in phi_mid.iter().enumerate() {
        let (i, j) = (e, e + 1);
        let (pi, pj) = (grid.phi[i], grid.phi[j]);
        let off = (-2.0 * pm + pi + pj).exp() / (h * (share(i) * share(j)).sqrt());
        t.push((i, i, (-2.0 * pm + 2.0 * pi).exp() / (h * share(i))));
        t.push((j, j, (-2.0 * pm + 2.0 * pj).exp() / (h * share(j))));
        t.push((i, j, -off));
        t.push((j, i, -off));
    }
    let s = Csr::from_triplets(n, n, t);
    let s = match bc {
        IntervalCondition::Absolute => s,
        IntervalCondition::Relative => {
            let inner: Vec<usize> = (1..n - 1).collect();
            s.select(&inner, &inner)
        }
    };
    if k > s.nrows() {
        return Err(Error::TooMany { requested: k, available: s.nrows() });
    }
    lowest(&s, k)
}

/// A vector field on a periodic square grid with its spectral derivatives.
#[derive(Clone, Debug)]
pub struct TwistField {
    n: usize,
    length: f64,
    x1: Vec<f64>,
    x2: Vec<f64>,
    gradient: bool,
    /// ∂_x X1, ∂_y X1, ∂_x X2, ∂_y X2
    grad: [Vec<f64>; 4],
}

/// Largest curl sample tolerated for a field flagged as a gradient.
pub const GRADIENT_CURL_TOL: f64 = 1e-8;

fn node(n: usize, i: usize, j: usize) -> usize {
    i + n * j
}

fn partial(f: &[f64], n: usize, length: f64, axis: usize) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    for line in 0..n {
        let idx = |s: usize| if axis == 0 { node(n, s, line) } else { node(n, line, s) };
        let vals: Vec<f64> = (0..n).map(|s| f[idx(s)]).collect();
        for (s, v) in spectral_derivative(&vals, length, 1).into_iter().enumerate() {
            out[idx(s)] = v;
        }
    }
    out
}

impl TwistField {
    /// Samples `X = (x1, x2)` on an `n × n` grid of a square torus.
    pub fn new(n: usize, length: f64, x1: Vec<f64>, x2: Vec<f64>, gradient: bool) -> Result<Self> {
        if n < 8 || x1.len() != n * n || x2.len() != n * n || !(length > 0.0) {
            return Err(Error::Invalid("twist field components must have n² samples, n ≥ 8".into()));
        }
        let grad = [
            partial(&x1, n, length, 0),
            partial(&x1, n, length, 1),
            partial(&x2, n, length, 0),
            partial(&x2, n, length, 1),
        ];
        let field = TwistField { n, length, x1, x2, gradient, grad };
        if gradient {
            let curl = field.curl().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if curl > GRADIENT_CURL_TOL {
                return Err(Error::Invalid(format!("field flagged as gradient has curl {curl:e}")));
            }
        }
        Ok(field)
    }

    pub fn from_fn(n: usize, length: f64, x1: impl Fn(f64, f64) -> f64, x2: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let (a, b) = sample2(n, length, |x, y| (x1(x, y), x2(x, y)));
        Self::new(n, length, a, b, false)
    }

    /// `X = ∇φ`.
    pub fn gradient_of(n: usize, length: f64, phi: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let (p, _) = sample2(n, length, |x, y| (phi(x, y), 0.0));
        let (a, b) = (partial(&p, n, length, 0), partial(&p, n, length, 1));
        Self::new(n, length, a, b, true)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn is_gradient(&self) -> bool {
        self.gradient
    }

    /// X♭ as the pair of coefficients of dx, dy.
    pub fn flat(&self) -> (&[f64], &[f64]) {
        (&self.x1, &self.x2)
    }

    /// Coefficient of dX♭ on dx∧dy.
    pub fn curl(&self) -> Vec<f64> {
        self.grad[2].iter().zip(&self.grad[1]).map(|(a, b)| a - b).collect()
    }

    /// Largest entry of `∇X` (the Hessian of φ for a gradient field).
    pub fn hessian_norm(&self) -> f64 {
        self.grad.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `div X = δX♭ = −(∂_x X1 + ∂_y X2)`.
    pub fn divergence(&self) -> Vec<f64> {
        self.grad[0].iter().zip(&self.grad[3]).map(|(a, b)| -(a + b)).collect()
    }
}

fn sample2(n: usize, length: f64, f: impl Fn(f64, f64) -> (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    let h = length / n as f64;
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let (u, v) = f(i as f64 * h, j as f64 * h);
            a[node(n, i, j)] = u;
            b[node(n, i, j)] = v;
        }
    }
    (a, b)
}

/// The three assembled operators and their pairwise differences on smooth
/// test forms, `max ‖(A − B) t‖_∞ / ‖t‖_∞`.
#[derive(Clone, Debug)]
pub struct ThreeForms {
    /// `δ̃_X d̃_X + d̃_X δ̃_X`
    pub direct: Csr<f64>,
    /// `Δ + |X|² + L_X + L_X*`
    pub lie: Csr<f64>,
    /// `Δ + |X|² + div X + c·(∇̄X♭)`
    pub hessian: Csr<f64>,
    pub diff_direct_lie: f64,
    pub diff_direct_hessian: f64,
    pub diff_lie_hessian: f64,
}

fn vstack(blocks: &[&Csr<f64>]) -> Csr<f64> {
    let cols = blocks[0].ncols();
    let mut t = Vec::new();
    let mut off = 0;
    for b in blocks {
        t.extend(b.triplets().map(|(i, j, v)| (i + off, j, v)));
        off += b.nrows();
    }
    Csr::from_triplets(off, cols, t)
}

/// Block matrix from a row-major grid of equally sized square blocks.
fn blocks(grid: &[Vec<Option<&Csr<f64>>>], size: usize) -> Csr<f64> {
    let mut t = Vec::new();
    for (bi, row) in grid.iter().enumerate() {
        for (bj, b) in row.iter().enumerate() {
            if let Some(b) = b {
                t.extend(b.triplets().map(|(i, j, v)| (i + bi * size, j + bj * size, v)));
            }
        }
    }
    Csr::from_triplets(grid.len() * size, grid[0].len() * size, t)
}

fn hstack(blocks: &[&Csr<f64>]) -> Csr<f64> {
    let rows = blocks[0].nrows();
    let mut t = Vec::new();
    let mut off = 0;
    for b in blocks {
        t.extend(b.triplets().map(|(i, j, v)| (i, j + off, v)));
        off += b.ncols();
    }
    Csr::from_triplets(rows, off, t)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn compare(a: &Csr<f64>, b: &Csr<f64>, tests: &[Vec<f64>]) -> f64 {
    let d = a.add(&b.scale(-1.0));
    tests.iter().map(|t| sup(&d.matvec(t)) / sup(t)).fold(0.0, f64::max)
}

fn finish(direct: Csr<f64>, lie: Csr<f64>, hessian: Csr<f64>, tests: &[Vec<f64>]) -> ThreeForms {
    ThreeForms {
        diff_direct_lie: compare(&direct, &lie, tests),
        diff_direct_hessian: compare(&direct, &hessian, tests),
        diff_lie_hessian: compare(&lie, &hessian, tests),
        direct,
        lie,
        hessian,
    }
}

/// The three expressions on a circle with `X = φ′`, degree 0 or 1.
/// `hess_coeff` multiplies the symmetric-gradient term (2 is correct).
pub fn assemble_three_forms_circle(grid: &Grid1D, p: usize, hess_coeff: f64) -> Result<ThreeForms> {
    if grid.kind != GridKind::Circle {
        return Err(Error::Invalid("three-form assembly needs a periodic grid".into()));
    }
    if p > 1 {
        return Err(Error::DegreeOutOfRange { p, max: 1 });
    }
    let n = grid.nodes();
    let d = periodic_d1(n, grid.spacing());
    let x = Csr::diag(&grid.dphi);
    let dx = &grid.d2phi;
    let dt = d.add(&x);
    let sq: Vec<f64> = grid.dphi.iter().map(|v| v * v).collect();
    let lap = d.transpose().matmul(&d);
    let base = lap.add(&Csr::diag(&sq));
    // L_X f = X f′ on functions, L_X g = X g′ + X′ g on 1-forms
    let (direct, lie_op, zeroth) = if p == 0 {
        let zeroth: Vec<f64> = dx.iter().map(|v| -v).collect();
        (dt.transpose().matmul(&dt), x.matmul(&d), zeroth)
    } else {
        let zeroth: Vec<f64> = dx.iter().map(|v| -v + hess_coeff * v).collect();
        (dt.matmul(&dt.transpose()), x.matmul(&d).add(&Csr::diag(dx)), zeroth)
    };
    let lie = base.add(&lie_op).add(&lie_op.transpose());
    let hessian = base.add(&Csr::diag(&zeroth));
    let tests: Vec<Vec<f64>> = [
        |t: f64| t.sin().exp(),
        |t: f64| (2.0 * t).sin() + 0.5 * t.cos(),
        |t: f64| (3.0 * t).cos() * t.sin(),
    ]
    .iter()
    .map(|f| grid.x.iter().map(|&t| f(2.0 * PI * t / grid.length)).collect())
    .collect();
    Ok(finish(direct, lie, hessian, &tests))
}

/// Collocated fourth-order operators on the torus grid.
struct TorusOps {
    d0: Csr<f64>,
    d1: Csr<f64>,
    e0: Csr<f64>,
    e1: Csr<f64>,
    dx: Csr<f64>,
    dy: Csr<f64>,
}

impl TorusOps {
    fn new(f: &TwistField) -> Self {
        let n = f.n;
        let d = periodic_d1(n, f.spacing());
        let id = Csr::<f64>::identity(n);
        let dx = kron(&id, &d);
        let dy = kron(&d, &id);
        let x1 = Csr::diag(&f.x1);
        let x2 = Csr::diag(&f.x2);
        let d0 = vstack(&[&dx, &dy]);
        let d1 = hstack(&[&dy.scale(-1.0), &dx]);
        let e0 = vstack(&[&x1, &x2]);
        let e1 = hstack(&[&x2.scale(-1.0), &x1]);
        TorusOps { d0, d1, e0, e1, dx, dy }
    }
}

/// `a ⊗ b` with the index of `b` running fastest.
fn kron(a: &Csr<f64>, b: &Csr<f64>) -> Csr<f64> {
    let (m, n) = (b.nrows(), b.ncols());
    let t: Vec<(usize, usize, f64)> = a
        .triplets()
        .flat_map(|(i, j, v)| b.triplets().map(move |(k, l, w)| (i * m + k, j * n + l, v * w)))
        .collect();
    Csr::from_triplets(a.nrows() * m, a.ncols() * n, t)
}

/// The three expressions on the square torus, degree 0, 1 or 2.
pub fn assemble_three_forms_torus(field: &TwistField, p: usize, hess_coeff: f64) -> Result<ThreeForms> {
    if p > 2 {
        return Err(Error::DegreeOutOfRange { p, max: 2 });
    }
    let n2 = field.n * field.n;
    let ops = TorusOps::new(field);
    let dt0 = ops.d0.add(&ops.e0);
    let dt1 = ops.d1.add(&ops.e1);
    let sq: Vec<f64> = field.x1.iter().zip(&field.x2).map(|(a, b)| a * a + b * b).collect();
    let g = &field.grad;
    let div = field.divergence();
    let trace: Vec<f64> = div.iter().map(|v| -v).collect();
    let transport = Csr::diag(&field.x1).matmul(&ops.dx).add(&Csr::diag(&field.x2).matmul(&ops.dy));
    let comps = [1, 2, 1][p];
    let sq_all: Vec<f64> = sq.iter().cycle().take(comps * n2).copied().collect();
    let (direct, lap, lie_op, extension) = match p {
        0 => (
            dt0.transpose().matmul(&dt0),
            ops.d0.transpose().matmul(&ops.d0),
            transport,
            Csr::zeros(n2, n2),
        ),
        1 => {
            let (a, b, c, d) = (Csr::diag(&g[0]), Csr::diag(&g[2]), Csr::diag(&g[1]), Csr::diag(&g[3]));
            // (L_X ω)_i = X·∇ω_i + ω_j ∂_i X_j
            let lie = blocks(&[vec![Some(&transport.add(&a)), Some(&b)], vec![Some(&c), Some(&transport.add(&d))]], n2);
            let off: Vec<f64> = g[1].iter().zip(&g[2]).map(|(u, v)| 0.5 * (u + v)).collect();
            let off = Csr::diag(&off);
            let s = blocks(&[vec![Some(&a), Some(&off)], vec![Some(&off), Some(&d)]], n2);
            (
                dt1.transpose().matmul(&dt1).add(&dt0.matmul(&dt0.transpose())),
                ops.d1.transpose().matmul(&ops.d1).add(&ops.d0.matmul(&ops.d0.transpose())),
                lie,
                s,
            )
        }
        _ => (
            dt1.matmul(&dt1.transpose()),
            ops.d1.matmul(&ops.d1.transpose()),
            transport.add(&Csr::diag(&trace)),
            Csr::diag(&trace),
        ),
    };
    let base = lap.add(&Csr::diag(&sq_all));
    let lie = base.add(&lie_op).add(&lie_op.transpose());
    let div_all: Vec<f64> = div.iter().cycle().take(comps * n2).copied().collect();
    let hessian = base.add(&Csr::diag(&div_all)).add(&extension.scale(hess_coeff));
    let h = field.spacing();
    let s = 2.0 * PI / field.length;
    let fns: [fn(f64, f64) -> f64; 3] = [
        |x, y| x.sin().exp() * y.cos(),
        |x, y| (2.0 * x + y).sin() + 0.5 * x.cos(),
        |x, y| (x - 2.0 * y).cos() * x.sin(),
    ];
    let sample = |k: usize| -> Vec<f64> {
        let mut v = vec![0.0; n2];
        for j in 0..field.n {
            for i in 0..field.n {
                v[node(field.n, i, j)] = fns[k % 3](s * i as f64 * h, s * j as f64 * h);
            }
        }
        v
    };
    let tests: Vec<Vec<f64>> = (0..3).map(|k| (0..comps).flat_map(|c| sample(k + c)).collect()).collect();
    Ok(finish(direct, lie, hessian, &tests))
}

/// `d̃_X d̃_X 1` against the spectral `dX♭`, both as dx∧dy coefficients.
#[derive(Clone, Debug)]
pub struct TwistedSquare {
    pub values: Vec<f64>,
    pub expected: Vec<f64>,
    /// Max-norm of the difference.
    pub error: f64,
    /// Max-norm of `dX♭`.
    pub norm: f64,
}

pub fn twisted_square_on_constant(field: &TwistField) -> TwistedSquare {
    let ops = TorusOps::new(field);
    let n2 = field.n * field.n;
    let one = vec![1.0; n2];
    let first = ops.d0.add(&ops.e0).matvec(&one);
    let values = ops.d1.add(&ops.e1).matvec(&first);
    let expected = field.curl();
    let diff: Vec<f64> = values.iter().zip(&expected).map(|(a, b)| a - b).collect();
    TwistedSquare { error: sup(&diff), norm: sup(&expected), values, expected }
}

/// Observed convergence order from errors on grids with spacing ratio 2.
pub fn observed_order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

/// Dense helper kept for inspection of small operators.
pub fn to_dense(a: &Csr<f64>) -> Array2<f64> {
    a.to_dense()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_derivative_of_sine() {
        let n = 32;
        let f: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / n as f64 * 3.0).sin()).collect();
        let d = spectral_derivative(&f, 2.0 * PI, 1);
        for i in 0..n {
            assert!((d[i] - 3.0 * (3.0 * 2.0 * PI * i as f64 / n as f64).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn interval_one_sided_stencils_are_fourth_order() {
        let g = Grid1D::interval(40, -1.0, 2.0, |x| x.powi(4) - x * x).unwrap();
        for (i, &x) in g.coords().iter().enumerate() {
            assert!((g.dphi()[i] - (4.0 * x.powi(3) - 2.0 * x)).abs() < 1e-10);
            assert!((g.d2phi()[i] - (12.0 * x * x - 2.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_field_forms_coincide() {
        let f = TwistField::from_fn(12, 2.0 * PI, |_, _| 0.0, |_, _| 0.0).unwrap();
        for p in 0..=2 {
            let t = assemble_three_forms_torus(&f, p, 2.0).unwrap();
            assert!(t.diff_direct_lie < 1e-12 && t.diff_direct_hessian < 1e-12);
        }
    }
}
