//! Numerical experiments shared by the command line runner and the
//! acceptance suite. Each function returns plain data; pass/fail
//! thresholds are left to the caller.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cohomology::quotient_dimension;
use crate::complex::{product_grid, Complex, DomainTag, Factor};
use crate::deform::{collapse_family, puncture_family, smoothing_sequence};
use crate::error::{Error, Result};
use crate::model1d::{self, Grid1D, TwistField};
use crate::spectral::{
    coexact_spectrum, domain_spectrum, full_hodge_spectrum, spectral_distance, BoundaryCondition, Discretization, InterfaceMass,
    DomainSetup, GapConfig, SolverOptions, SpectralPart, SpectrumResult,
};
use crate::witten_ops::{CellField, Gauge, Geometry, MassScheme, OperatorBundle, WeightField};

/// Plain (weighted gauge, lumped) bundle of a weighted complex.
pub fn bundle(complex: &Complex, geometry: &Geometry, weight: &WeightField) -> Result<OperatorBundle> {
    OperatorBundle::assemble(complex, geometry, weight, Gauge::Weighted, MassScheme::Lumped)
}

/// Relative deviation with an absolute floor, for comparing eigenvalues
/// that may vanish.
pub fn rel_dev(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Sorted eigenvalues of the full Laplacian in degree `p`: harmonic zeros,
/// then the exact and coexact parts merged.
pub fn merged_full(result: &SpectrumResult) -> Vec<f64> {
    let mut v = vec![0.0; result.harmonic_dim];
    v.extend(&result.exact.values);
    v.extend(&result.coexact.values);
    v.sort_by(f64::total_cmp);
    v
}

/// Vertex closest to a point (periodic along circle factors).
pub fn nearest_vertex(complex: &Complex, point: &[f64]) -> usize {
    let dist = |v: usize| -> f64 {
        let c = complex.vertex_coords(v);
        match complex.as_tensor() {
            Some(t) => t.factors().iter().zip(c.iter().zip(point)).map(|(f, (a, b))| f.delta(*a, *b).powi(2)).sum(),
            None => c.iter().zip(point).map(|(a, b)| (a - b).powi(2)).sum(),
        }
    };
    (0..complex.num_cells(0)).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap_or(0)
}

/// Per-degree spectra of a closed complex with harmonic dimensions and the
/// exact/coexact pairing error.
#[derive(Clone, Debug, Serialize)]
pub struct HodgeStructure {
    pub harmonic_dims: Vec<usize>,
    /// max over p ≥ 1 and i of the relative gap between exact(p)_i and coexact(p−1)_i
    pub pairing_error: f64,
    pub max_residual: f64,
    #[serde(skip)]
    pub spectra: Vec<SpectrumResult>,
}

pub fn hodge_structure(bundle: &OperatorBundle, k: usize, opts: &SolverOptions) -> Result<HodgeStructure> {
    let n = bundle.dimension();
    let spectra: Vec<SpectrumResult> = (0..=n).map(|p| full_hodge_spectrum(bundle, p, k, opts)).collect::<Result<_>>()?;
    let mut pairing_error: f64 = 0.0;
    for p in 1..=n {
        let (ex, co) = (&spectra[p].exact.values, &spectra[p - 1].coexact.values);
        for (a, b) in ex.iter().zip(co) {
            pairing_error = pairing_error.max(rel_dev(*a, *b, 1e-300));
        }
    }
    Ok(HodgeStructure {
        harmonic_dims: spectra.iter().map(|s| s.harmonic_dim).collect(),
        pairing_error,
        max_residual: spectra.iter().map(SpectrumResult::max_residual).fold(0.0, f64::max),
        spectra,
    })
}

/// Random smooth field on the vertices: uniform noise averaged over edge
/// neighbors `passes` times, rescaled to max-norm `amplitude`.
pub fn random_smooth_field(complex: &Complex, amplitude: f64, passes: usize, rng: &mut ChaCha8Rng) -> Result<CellField> {
    let nv = complex.num_cells(0);
    let mut v: Vec<f64> = (0..nv).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut adj = vec![Vec::new(); nv];
    if complex.dimension() > 0 {
        for e in 0..complex.num_cells(1) {
            let vs = complex.cell_vertices(1, e);
            adj[vs[0]].push(vs[1]);
            adj[vs[1]].push(vs[0]);
        }
    }
    for _ in 0..passes {
        v = (0..nv).map(|i| (v[i] + adj[i].iter().map(|&j| v[j]).sum::<f64>()) / (1 + adj[i].len()) as f64).collect();
    }
    let mean = v.iter().sum::<f64>() / nv as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x *= amplitude / m);
    }
    CellField::from_vertices(complex, &v)
}

/// Lowest `k` nonzero function eigenvalues of a DEC circle with `cells`
/// segments and weight `phi` sampled at the vertices.
pub fn dec_circle_spectrum(cells: usize, length: f64, phi: &dyn Fn(f64) -> f64, k: usize, opts: &SolverOptions) -> Result<Vec<f64>> {
    let c = product_grid(vec![Factor::circle(cells, length)])?;
    let g = Geometry::from_complex(&c)?;
    let w = CellField::from_fn(&c, |x| phi(x[0]))?;
    Ok(coexact_spectrum(&bundle(&c, &g, &w)?, 0, k, opts)?.coexact.values)
}

/// Lowest `k` nonzero function eigenvalues on an interval `[a, a + length]`.
pub fn dec_interval_spectrum(cells: usize, a: f64, length: f64, phi: &dyn Fn(f64) -> f64, k: usize, opts: &SolverOptions) -> Result<Vec<f64>> {
    let c = product_grid(vec![Factor::interval(cells, length)])?;
    let g = Geometry::from_complex(&c)?;
    let w = CellField::from_fn(&c, |x| phi(a + x[0]))?;
    let b = bundle(&c, &g, &w)?;
    Ok(coexact_spectrum(&b, 0, k, opts)?.coexact.values)
}

/// Self-duality of functions on a circle under φ → −φ.
#[derive(Clone, Debug, Serialize)]
pub struct CircleDuality {
    pub grids: Vec<usize>,
    /// signed μ̃_{0,i}(φ) − μ̃_{0,i}(−φ) per grid
    pub differences: Vec<Vec<f64>>,
    /// |Richardson limit| per index, second order from the two finest grids
    pub extrapolated: Vec<f64>,
    pub spectrum: Vec<f64>,
    /// the same check on the fourth-order continuum model
    pub model_difference: Vec<f64>,
}

pub fn circle_duality(
    phi: impl Fn(f64) -> f64 + Send + Sync + Clone + 'static,
    length: f64,
    grids: &[usize],
    k: usize,
    opts: &SolverOptions,
) -> Result<CircleDuality> {
    if grids.len() < 2 {
        return Err(Error::Invalid("duality extrapolation needs at least two grids".into()));
    }
    let neg = {
        let f = phi.clone();
        move |x: f64| -f(x)
    };
    let mut differences = Vec::new();
    let mut spectrum = Vec::new();
    for &n in grids {
        let a = dec_circle_spectrum(n, length, &phi, k, opts)?;
        let b = dec_circle_spectrum(n, length, &neg, k, opts)?;
        differences.push(a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>());
        spectrum = a;
    }
    let (c, f) = (&differences[grids.len() - 2], &differences[grids.len() - 1]);
    let ratio = (grids[grids.len() - 1] as f64 / grids[grids.len() - 2] as f64).powi(2);
    let extrapolated = c.iter().zip(f).map(|(c, f)| (f + (f - c) / (ratio - 1.0)).abs()).collect();
    let model_n = *grids.last().expect("nonempty") / 2;
    let grid = Grid1D::circle(model_n.max(64), length, phi)?;
    let s_pos = model1d::circle_witten_spectrum(&grid, k)?;
    let s_neg = model1d::circle_witten_spectrum(&grid.negated(), k)?;
    let model_difference = s_pos.coexact().iter().zip(s_neg.coexact()).map(|(a, b)| (a - b).abs()).collect();
    Ok(CircleDuality { grids: grids.to_vec(), differences, extrapolated, spectrum, model_difference })
}

/// `μ̃_{0,i}(φ)` against `μ̃_{1,i}(−φ)` on square tori.
#[derive(Clone, Debug, Serialize)]
pub struct TorusDuality {
    pub grids: Vec<usize>,
    pub spacing: Vec<f64>,
    /// max_i |μ̃_{0,i}(φ) − μ̃_{1,i}(−φ)| / μ̃_{0,i}(φ) per grid
    pub errors: Vec<f64>,
    /// observed orders between consecutive grids
    pub orders: Vec<f64>,
    pub zero_forms: Vec<Vec<f64>>,
    pub one_forms: Vec<Vec<f64>>,
}

pub fn torus_duality(
    phi: impl Fn(f64, f64) -> f64,
    length: f64,
    grids: &[usize],
    k: usize,
    opts: &SolverOptions,
) -> Result<TorusDuality> {
    let mut out = TorusDuality {
        grids: grids.to_vec(),
        spacing: Vec::new(),
        errors: Vec::new(),
        orders: Vec::new(),
        zero_forms: Vec::new(),
        one_forms: Vec::new(),
    };
    for &n in grids {
        let c = product_grid(vec![Factor::circle(n, length), Factor::circle(n, length)])?;
        let g = Geometry::from_complex(&c)?;
        let w = CellField::from_fn(&c, |x| phi(x[0], x[1]))?;
        let a = coexact_spectrum(&bundle(&c, &g, &w)?, 0, k, opts)?.coexact.values;
        let b = coexact_spectrum(&bundle(&c, &g, &w.negated())?, 1, k, opts)?.coexact.values;
        out.errors.push(a.iter().zip(&b).map(|(x, y)| rel_dev(*x, *y, 1e-300)).fold(0.0, f64::max));
        out.spacing.push(length / n as f64);
        out.zero_forms.push(a);
        out.one_forms.push(b);
    }
    out.orders = observed_orders(&out.spacing, &out.errors);
    Ok(out)
}

pub fn observed_orders(spacing: &[f64], errors: &[f64]) -> Vec<f64> {
    spacing
        .windows(2)
        .zip(errors.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

/// Product spectra against sums of factor spectra, per total degree.
#[derive(Clone, Debug, Serialize)]
pub struct KunnethCheck {
    /// per degree: lowest full-Laplacian eigenvalues on the product
    pub product: Vec<Vec<f64>>,
    /// per degree: the same count of smallest factor sums
    pub sums: Vec<Vec<f64>>,
    pub max_rel_error: f64,
}

/// Every full-Laplacian eigenvalue of a one-dimensional complex, per degree.
fn factor_spectrum(factor: Factor, phi: &dyn Fn(f64) -> f64, opts: &SolverOptions) -> Result<Vec<Vec<f64>>> {
    let c = product_grid(vec![factor])?;
    let g = Geometry::from_complex(&c)?;
    let w = CellField::from_fn(&c, |x| phi(x[0]))?;
    let b = bundle(&c, &g, &w)?;
    (0..=1).map(|p| Ok(merged_full(&full_hodge_spectrum(&b, p, c.num_cells(p), opts)?))).collect()
}

pub fn kunneth(
    f1: Factor,
    phi1: impl Fn(f64) -> f64,
    f2: Factor,
    phi2: impl Fn(f64) -> f64,
    k: usize,
    opts: &SolverOptions,
) -> Result<KunnethCheck> {
    let s1 = factor_spectrum(f1, &phi1, opts)?;
    let s2 = factor_spectrum(f2, &phi2, opts)?;
    let c = product_grid(vec![f1, f2])?;
    let g = Geometry::from_complex(&c)?;
    let w = CellField::from_fn(&c, |x| phi1(x[0]) + phi2(x[1]))?;
    let b = bundle(&c, &g, &w)?;
    let mut out = KunnethCheck { product: Vec::new(), sums: Vec::new(), max_rel_error: 0.0 };
    for q in 0..=2usize {
        let mut sums: Vec<f64> = Vec::new();
        for a in 0..=1usize {
            let Some(bdeg) = q.checked_sub(a).filter(|b| *b <= 1) else { continue };
            for x in &s1[a] {
                sums.extend(s2[bdeg].iter().map(|y| x + y));
            }
        }
        sums.sort_by(f64::total_cmp);
        let prod = merged_full(&full_hodge_spectrum(&b, q, k, opts)?);
        let take = k.min(prod.len()).min(sums.len());
        let prod = prod[..take].to_vec();
        sums.truncate(take);
        let scale = sums.last().copied().unwrap_or(1.0).abs().max(1e-300);
        for (x, y) in prod.iter().zip(&sums) {
            out.max_rel_error = out.max_rel_error.max((x - y).abs() / y.abs().max(1e-6 * scale));
        }
        out.product.push(prod);
        out.sums.push(sums);
    }
    Ok(out)
}

/// Coexact spectra along the collapse family, with the limit problem on U.
#[derive(Clone, Debug, Serialize)]
pub struct CollapseSweep {
    pub degree: usize,
    pub d_p: usize,
    pub epsilons: Vec<f64>,
    /// coexact eigenvalues per ε
    pub spectra: Vec<Vec<f64>>,
    pub max_residual: f64,
    /// μ̃_{p,1..k}(U) under the absolute condition, interface cells at full
    /// mass as in the family itself
    pub limit: Vec<f64>,
    /// the same with interface masses cut to U; differs at O(h)
    pub limit_inside: Vec<f64>,
    /// indices (0-based) whose values drop by the requested factor at every step
    pub vanishing: Vec<usize>,
    /// |μ̃_{p,d_p+i}(M, ε_last) − μ̃_{p,i}(U)| / μ̃_{p,i}(U)
    pub limit_errors: Vec<f64>,
    pub inside_errors: Vec<f64>,
}

pub struct CollapseInput<'a> {
    pub complex: &'a Complex,
    pub geometry: &'a Geometry,
    pub weight: &'a WeightField,
    pub domain: &'a DomainTag,
    pub alpha: f64,
}

pub fn collapse_sweep(
    input: &CollapseInput,
    p: usize,
    epsilons: &[f64],
    k: usize,
    drop_factor: f64,
    opts: &SolverOptions,
) -> Result<CollapseSweep> {
    let d_p = quotient_dimension(input.complex, input.domain, p)?;
    let count = k + d_p;
    let mut spectra = Vec::new();
    let mut max_residual: f64 = 0.0;
    for &eps in epsilons {
        let (g, w) = collapse_family(input.complex, input.geometry, input.weight, input.domain, eps, input.alpha)?;
        let r = coexact_spectrum(&bundle(input.complex, &g, &w)?, p, count, opts)?;
        max_residual = max_residual.max(r.max_residual());
        spectra.push(r.coexact.values);
    }
    let mut setup = DomainSetup {
        complex: input.complex,
        domain: input.domain,
        geometry: input.geometry,
        weight: input.weight,
        disc: Discretization { interface: InterfaceMass::Closure, ..Default::default() },
    };
    let limit = domain_spectrum(&setup, BoundaryCondition::Absolute, p, k, opts)?.coexact.values;
    setup.disc.interface = InterfaceMass::Inside;
    let limit_inside = domain_spectrum(&setup, BoundaryCondition::Absolute, p, k, opts)?.coexact.values;
    let vanishing = (0..count)
        .filter(|&i| spectra.windows(2).all(|w| w[1][i] * drop_factor <= w[0][i]))
        .collect();
    let last = spectra.last().expect("nonempty sweep");
    let errors = |lim: &[f64]| lim.iter().enumerate().map(|(i, l)| rel_dev(last[d_p + i], *l, 1e-300)).collect();
    let limit_errors = errors(&limit);
    let inside_errors = errors(&limit_inside);
    Ok(CollapseSweep {
        degree: p,
        d_p,
        epsilons: epsilons.to_vec(),
        spectra,
        max_residual,
        limit,
        limit_inside,
        vanishing,
        limit_errors,
        inside_errors,
    })
}

/// Coexact spectra along the smoothing sequence j = 1, 2, ... toward the
/// singular collapse at a fixed ε.
#[derive(Clone, Debug, Serialize)]
pub struct SmoothingSweep {
    pub degree: usize,
    pub epsilon: f64,
    pub indices: Vec<usize>,
    pub spectra: Vec<Vec<f64>>,
    pub collapse: Vec<f64>,
    /// largest increase `λ_{j+1} − λ_j` over consecutive indices (≤ 0 when monotone)
    pub worst_increase: f64,
    /// largest `(collapse − λ_last)` (≤ 0 when the sequence stays above its limit)
    pub worst_undershoot: f64,
}

pub fn smoothing_sweep(input: &CollapseInput, p: usize, eps: f64, indices: &[usize], k: usize, opts: &SolverOptions) -> Result<SmoothingSweep> {
    let mut spectra = Vec::new();
    for &j in indices {
        let (g, w) = smoothing_sequence(input.complex, input.geometry, input.weight, input.domain, eps, input.alpha, j)?;
        spectra.push(coexact_spectrum(&bundle(input.complex, &g, &w)?, p, k, opts)?.coexact.values);
    }
    let (g, w) = collapse_family(input.complex, input.geometry, input.weight, input.domain, eps, input.alpha)?;
    let collapse = coexact_spectrum(&bundle(input.complex, &g, &w)?, p, k, opts)?.coexact.values;
    let worst_increase = spectra
        .windows(2)
        .flat_map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect::<Vec<_>>())
        .fold(f64::NEG_INFINITY, f64::max);
    let last = spectra.last().expect("nonempty sweep");
    let worst_undershoot = collapse.iter().zip(last).map(|(c, l)| c - l).fold(f64::NEG_INFINITY, f64::max);
    Ok(SmoothingSweep {
        degree: p,
        epsilon: eps,
        indices: indices.to_vec(),
        spectra,
        collapse,
        worst_increase,
        worst_undershoot,
    })
}

/// Spectra of a complex with shrinking balls removed.
#[derive(Clone, Debug, Serialize)]
pub struct PunctureSweep {
    pub degree: usize,
    pub radii: Vec<f64>,
    pub removed: Vec<usize>,
    pub closed: Vec<f64>,
    pub spectra: Vec<Vec<f64>>,
    /// max_i relative error against the closed values, per radius
    pub errors: Vec<f64>,
    /// eigenpairs spanned by the compared eigenspaces
    pub span: usize,
    /// spectral distance over those eigenspaces, per radius
    pub distances: Vec<f64>,
}

/// M-orthonormalizes the columns of `x` (Gram–Schmidt, twice).
fn m_orthonormal(x: &Array2<f64>, mass: &crate::witten_ops::Mass) -> Array2<f64> {
    let mut q = x.clone();
    for j in 0..q.ncols() {
        for _ in 0..2 {
            let mut v = q.column(j).to_vec();
            let mv = mass.apply(&v);
            for i in 0..j {
                let qi = q.column(i).to_vec();
                let c: f64 = qi.iter().zip(&mv).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(&qi).for_each(|(a, b)| *a -= c * b);
            }
            let nrm = mass.norm(&v);
            q.column_mut(j).assign(&ndarray::Array1::from(v.iter().map(|a| a / nrm).collect::<Vec<_>>()));
        }
    }
    q
}

pub struct PunctureInput<'a> {
    pub complex: &'a Complex,
    pub geometry: &'a Geometry,
    pub weight: &'a WeightField,
    pub center: usize,
}

/// Relative spread below which neighboring eigenvalues count as one eigenspace.
pub const CLUSTER_TOL: f64 = 1e-6;

/// Number of eigenpairs making up the first `spaces` eigenspaces of the
/// sorted `values`, or `None` if the list ends inside the last cluster.
pub fn eigenspace_count(values: &[f64], spaces: usize) -> Option<usize> {
    let mut seen = 0;
    for i in 0..values.len() {
        if i == 0 || values[i] - values[i - 1] > CLUSTER_TOL * values[i].abs() {
            if seen == spaces {
                return Some(i);
            }
            seen += 1;
        }
    }
    None
}

/// Compares the first `k` coexact eigenvalues and the first `spaces`
/// eigenspaces of the closed complex with those of the punctured ones.
pub fn puncture_sweep(input: &PunctureInput, p: usize, radii: &[f64], k: usize, spaces: usize, opts: &SolverOptions) -> Result<PunctureSweep> {
    let closed_bundle = bundle(input.complex, input.geometry, input.weight)?;
    let mut kk = k.max(2 * spaces + 1);
    let (closed, gap_n) = loop {
        let closed = coexact_spectrum(&closed_bundle, p, kk, opts)?;
        if let Some(n) = eigenspace_count(&closed.coexact.values, spaces) {
            break (closed, n);
        }
        kk *= 2;
    };
    let kk = kk.max(gap_n + 1);
    let lam = &closed.coexact.values;
    // gap after the N-th value, bound just above the next one
    let cfg = GapConfig::new(gap_n, 0.5 * (lam[gap_n] - lam[gap_n - 1]), 2.0 * lam[gap_n])?;
    let mut out = PunctureSweep {
        degree: p,
        radii: radii.to_vec(),
        removed: Vec::new(),
        closed: lam[..k].to_vec(),
        spectra: Vec::new(),
        errors: Vec::new(),
        span: gap_n,
        distances: Vec::new(),
    };
    for &r in radii {
        let punct = puncture_family(input.complex, input.weight, input.center, r)?;
        let setup = DomainSetup {
            complex: input.complex,
            domain: &punct.domain,
            geometry: input.geometry,
            weight: &punct.weight,
            disc: Discretization::default(),
        };
        let res = domain_spectrum(&setup, BoundaryCondition::Absolute, p, kk, opts)?;
        let vals = res.coexact.values.clone();
        out.errors.push((0..k).map(|i| rel_dev(vals[i], lam[i], 1e-300)).fold(0.0, f64::max));
        // extend by zero to the whole complex and compare eigenspaces there
        let cells = punct.domain.closure_cells(p);
        let mut ext = Array2::zeros((input.complex.num_cells(p), gap_n + 1));
        for (r, &c) in cells.iter().enumerate() {
            for j in 0..=gap_n {
                ext[[c, j]] = res.coexact.vectors[[r, j]];
            }
        }
        let mass = closed_bundle.mass(p);
        let part = SpectralPart {
            values: vals[..=gap_n].to_vec(),
            vectors: m_orthonormal(&ext, mass),
            residuals: res.coexact.residuals[..=gap_n].to_vec(),
        };
        out.distances.push(spectral_distance(&closed.coexact.truncated(gap_n + 1), &part, &cfg, mass)?);
        out.removed.push(punct.removed);
        out.spectra.push(vals[..k].to_vec());
    }
    Ok(out)
}

/// `min over samples of μ̃_{p,1} Vol^{2/n}` across random conformal changes
/// inside the weighted class, per degree and amplitude.
#[derive(Clone, Debug, Serialize)]
pub struct ConformalSweep {
    pub alpha: f64,
    pub degrees: Vec<usize>,
    pub protected: Vec<bool>,
    pub amplitudes: Vec<f64>,
    /// floors[d][a]: minimum over samples for degree d at amplitude a
    pub floors: Vec<Vec<f64>>,
    /// the unperturbed value per degree
    pub base: Vec<f64>,
}

/// Degrees p with `n/2 + α − 1 ≤ p ≤ n/2 + α`, `1 ≤ p ≤ n` and `p > α`.
pub fn protected_degree(n: usize, p: usize, alpha: f64) -> bool {
    let (nf, pf) = (n as f64, p as f64);
    p >= 1 && p <= n && pf > alpha && pf >= nf / 2.0 + alpha - 1.0 && pf <= nf / 2.0 + alpha
}

pub struct ConformalInput<'a> {
    pub complex: &'a Complex,
    pub geometry: &'a Geometry,
    pub weight: &'a WeightField,
    pub alpha: f64,
}

pub fn conformal_sweep(
    input: &ConformalInput,
    degrees: &[usize],
    amplitudes: &[f64],
    samples: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<ConformalSweep> {
    let n = input.complex.dimension();
    let scaled = |g: &Geometry, w: &WeightField, p: usize| -> Result<f64> {
        let vol = g.total_volume();
        let r = coexact_spectrum(&bundle(input.complex, g, w)?, p, 1, opts)?;
        Ok(r.coexact.values[0] * vol.powf(2.0 / n as f64))
    };
    let base = degrees.iter().map(|&p| scaled(input.geometry, input.weight, p)).collect::<Result<Vec<_>>>()?;
    let mut floors = vec![vec![f64::INFINITY; amplitudes.len()]; degrees.len()];
    for (a, &amp) in amplitudes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (a as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for _ in 0..samples {
            let u = random_smooth_field(input.complex, amp, 4, &mut rng)?;
            let (g, w) = crate::witten_ops::conformal_rescale(input.geometry, input.weight, &u, input.alpha);
            for (d, &p) in degrees.iter().enumerate() {
                floors[d][a] = floors[d][a].min(scaled(&g, &w, p)?);
            }
        }
    }
    Ok(ConformalSweep {
        alpha: input.alpha,
        degrees: degrees.to_vec(),
        protected: degrees.iter().map(|&p| protected_degree(n, p, input.alpha)).collect(),
        amplitudes: amplitudes.to_vec(),
        floors,
        base,
    })
}

/// Differences between the three expressions of the twisted Laplacian
/// over a sequence of grids.
#[derive(Clone, Debug, Serialize)]
pub struct ThreeFormsStudy {
    pub grids: Vec<usize>,
    pub spacing: Vec<f64>,
    pub coefficient: f64,
    /// per degree, per grid: max of the three pairwise differences
    pub differences: Vec<Vec<f64>>,
    /// per degree: observed orders between consecutive grids
    pub orders: Vec<Vec<f64>>,
    /// per degree, per grid: ‖(a) − (c)‖ with the symmetric gradient weighted by 1
    pub unit_coefficient: Vec<Vec<f64>>,
    /// ‖Hess φ‖_∞ on the finest grid
    pub hessian_scale: f64,
}

/// On the square torus of side `length` with `X = ∇φ`, degrees 0..=2.
pub fn three_forms_torus(
    phi: impl Fn(f64, f64) -> f64 + Copy,
    length: f64,
    grids: &[usize],
    coefficient: f64,
) -> Result<ThreeFormsStudy> {
    let mut study = ThreeFormsStudy {
        grids: grids.to_vec(),
        spacing: grids.iter().map(|&n| length / n as f64).collect(),
        coefficient,
        differences: vec![Vec::new(); 3],
        orders: Vec::new(),
        unit_coefficient: vec![Vec::new(); 3],
        hessian_scale: 0.0,
    };
    for &n in grids {
        let field = TwistField::gradient_of(n, length, phi)?;
        for p in 0..=2 {
            let t = model1d::assemble_three_forms_torus(&field, p, coefficient)?;
            study.differences[p].push(t.diff_direct_lie.max(t.diff_direct_hessian).max(t.diff_lie_hessian));
            let u = model1d::assemble_three_forms_torus(&field, p, 1.0)?;
            study.unit_coefficient[p].push(u.diff_direct_hessian);
        }
        study.hessian_scale = field.hessian_norm();
    }
    study.orders = study.differences.iter().map(|d| observed_orders(&study.spacing, d)).collect();
    Ok(study)
}

/// `d̃_X d̃_X 1` against `dX♭` for a non-gradient field over several grids.
#[derive(Clone, Debug, Serialize)]
pub struct TwistedSquareStudy {
    pub grids: Vec<usize>,
    pub errors: Vec<f64>,
    pub norms: Vec<f64>,
    pub orders: Vec<f64>,
}

pub fn twisted_square_study(
    x1: impl Fn(f64, f64) -> f64 + Copy,
    x2: impl Fn(f64, f64) -> f64 + Copy,
    length: f64,
    grids: &[usize],
) -> Result<TwistedSquareStudy> {
    let mut errors = Vec::new();
    let mut norms = Vec::new();
    for &n in grids {
        let s = model1d::twisted_square_on_constant(&TwistField::from_fn(n, length, x1, x2)?);
        errors.push(s.error);
        norms.push(s.norm);
    }
    let spacing: Vec<f64> = grids.iter().map(|&n| length / n as f64).collect();
    Ok(TwistedSquareStudy { grids: grids.to_vec(), orders: observed_orders(&spacing, &errors), errors, norms })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protected_window_in_two_dimensions() {
        assert!(!protected_degree(2, 0, 0.0));
        assert!(protected_degree(2, 1, 0.0));
        assert!(!protected_degree(2, 1, 2.0));
        assert!(protected_degree(4, 2, 0.5));
        assert!(!protected_degree(4, 3, 0.5));
    }

    #[test]
    fn kunneth_small_product() {
        let opts = SolverOptions::default();
        let k = kunneth(Factor::circle(6, 1.0), |x| x.sin(), Factor::interval(4, 2.0), |y| 0.3 * y, 8, &opts).unwrap();
        assert!(k.max_rel_error < 1e-9, "{}", k.max_rel_error);
    }
}
