//! Acceptance report: one PASS/FAIL line per criterion. Tolerances are the
//! constants next to each check. Criteria that do not hold are reported, not
//! hidden; the process still exits 0 so the rest of the suite runs.

use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use witten_core::complex::{build_simplicial, icosphere, jittered_disk, product_grid, tag_domain, triangulated_torus, Complex, Factor};
use witten_core::deform::collapse_family;
use witten_core::experiments::{
    circle_duality, collapse_sweep, dec_circle_spectrum, dec_interval_spectrum, hodge_structure, kunneth, nearest_vertex,
    puncture_sweep, random_smooth_field, smoothing_sweep, three_forms_torus, torus_duality, twisted_square_study,
    CollapseInput, PunctureInput,
};
use witten_core::spectral::{coexact_spectrum, DegreeSolver, full_hodge_spectrum, minmax_bruteforce, SolverOptions};
use witten_core::witten_ops::{
    assemble_mass, conformal_invariant_exponent, conformal_rescale, weighted_r_norm, CellField, Gauge, Geometry, MassScheme,
    OperatorBundle,
};
use witten_core::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

// 1. exact discrete identities

const GAUGE_TOL: f64 = 1e-12;
const RNORM_TOL: f64 = 1e-13;
const FACTOR_TOL: f64 = 1e-14;

fn random_weight(c: &Complex, rng: &mut ChaCha8Rng) -> Result<CellField> {
    let amp = rng.gen_range(0.2..1.5);
    random_smooth_field(c, amp, 2, rng)
}

fn criterion_1() -> Result<Outcome> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tets = build_simplicial(
        vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 1.0, 1.0]],
        &[vec![0, 1, 2, 3], vec![1, 2, 3, 4]],
    )?;
    let complexes: Vec<Complex> = vec![
        icosphere(3)?.into(),
        jittered_disk(7, 5, 3)?.into(),
        triangulated_torus(6, 5, 1.0, 2.0)?.into(),
        product_grid(vec![Factor::circle(4, 1.0), Factor::interval(3, 1.0), Factor::circle(5, 2.0)])?,
        tets,
    ];
    let mut dd_ok = true;
    for c in &complexes {
        for p in 0..c.dimension().saturating_sub(1) {
            dd_ok &= c.coboundary(p + 1)?.matmul(&c.coboundary(p)?).is_zero();
        }
    }
    let t_dd = t0.elapsed();

    // twisted against weighted gauge, lumped masses
    let t1 = Instant::now();
    let opts = SolverOptions::default();
    let mut gauge_err: f64 = 0.0;
    let mut max_cells = 0;
    for seed in 0..6u64 {
        let c: Complex = match seed % 3 {
            0 => jittered_disk(5 + seed as usize % 3, 5, seed)?.into(),
            1 => icosphere(2)?.into(),
            _ => product_grid(vec![Factor::circle(7, 1.0), Factor::interval(6, 1.3)])?,
        };
        max_cells = max_cells.max(c.total_cells());
        let g = Geometry::from_complex(&c)?;
        let w = random_weight(&c, &mut rng)?;
        let tw = OperatorBundle::assemble(&c, &g, &w, Gauge::Twisted, MassScheme::Lumped)?;
        let wt = OperatorBundle::assemble(&c, &g, &w, Gauge::Weighted, MassScheme::Lumped)?;
        for p in 0..=c.dimension() {
            let k = c.num_cells(p).min(12);
            let a = full_hodge_spectrum(&tw, p, k, &opts)?;
            let b = full_hodge_spectrum(&wt, p, k, &opts)?;
            if a.harmonic_dim != b.harmonic_dim {
                gauge_err = f64::INFINITY;
            }
            for (x, y) in a.coexact.values.iter().zip(&b.coexact.values).chain(a.exact.values.iter().zip(&b.exact.values)) {
                gauge_err = gauge_err.max(rel(*x, *y));
            }
        }
    }
    let t_gauge = t1.elapsed();

    // weighted r-norm across the conformal class
    let t2 = Instant::now();
    let mut rnorm_err: f64 = 0.0;
    for (c, p, alpha) in [
        (Complex::from(jittered_disk(6, 6, 11)?), 1usize, 0.5),
        (Complex::from(icosphere(2)?), 1, 0.0),
        (product_grid(vec![Factor::circle(5, 1.0), Factor::circle(4, 1.0), Factor::interval(4, 1.0)])?, 2, 0.25),
    ] {
        let n = c.dimension();
        let r = conformal_invariant_exponent(n, p, alpha)?;
        let g = Geometry::from_complex(&c)?;
        let w = random_weight(&c, &mut rng)?;
        let omega: Vec<f64> = (0..c.num_cells(p)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let before = weighted_r_norm(&omega, r, &g, &w, p)?;
        for _ in 0..3 {
            let u = random_smooth_field(&c, 1.0, 2, &mut rng)?;
            let (g2, w2) = conformal_rescale(&g, &w, &u, alpha);
            rnorm_err = rnorm_err.max(rel(weighted_r_norm(&omega, r, &g2, &w2, p)?, before));
        }
    }
    let t_rnorm = t2.elapsed();

    // collapse-family mass factors off the closure of U
    let t3 = Instant::now();
    let mut factor_err: f64 = 0.0;
    let c: Complex = icosphere(3)?.into();
    let n = c.dimension() as f64;
    let g = Geometry::from_complex(&c)?;
    let w = random_weight(&c, &mut rng)?;
    let u = tag_domain(&c, |t| {
        let vs = c.cell_vertices(2, t);
        vs.iter().map(|&v| c.vertex_coords(v)[2]).sum::<f64>() / 3.0 > 0.2
    })?;
    for &(eps, alpha) in &[(0.1, 2.0), (1e-3, 0.5), (0.37, 0.0)] {
        let (g2, w2) = collapse_family(&c, &g, &w, &u, eps, alpha)?;
        for p in 0..=2usize {
            let m0 = assemble_mass(&c, &g, &w, p, MassScheme::Lumped)?.diag_entries();
            let m1 = assemble_mass(&c, &g2, &w2, p, MassScheme::Lumped)?.diag_entries();
            let want = eps.powf(n + 2.0 * alpha - 2.0 * p as f64);
            for i in (0..m0.len()).filter(|&i| !u.in_closure(p, i)) {
                factor_err = factor_err.max(rel(m1[i] / m0[i], want));
            }
        }
    }
    let t_factor = t3.elapsed();

    let pass = dd_ok
        && gauge_err < GAUGE_TOL
        && rnorm_err < RNORM_TOL
        && factor_err < FACTOR_TOL
        && [t_dd, t_gauge, t_rnorm, t_factor].iter().all(|t| within(*t, 1.0));
    outcome(
        pass,
        format!(
            "dd=0 {dd_ok} ({:.2}s); gauge {gauge_err:.1e} on <= {max_cells} cells ({:.2}s); r-norm {rnorm_err:.1e} ({:.2}s); mass factors {factor_err:.1e} ({:.2}s)",
            t_dd.as_secs_f64(),
            t_gauge.as_secs_f64(),
            t_rnorm.as_secs_f64(),
            t_factor.as_secs_f64()
        ),
    )
}

// 2. Hodge structure on the 32 x 32 torus

const PAIRING_TOL: f64 = 1e-8;
// dense LAPACK on the 1024-unknown degrees costs ~1.7 s each; Krylov agrees
const HODGE_DENSE_THRESHOLD: usize = 500;

fn criterion_2() -> Result<Outcome> {
    let t0 = Instant::now();
    let c = product_grid(vec![Factor::circle(32, 1.0), Factor::circle(32, 1.0)])?;
    let g0 = Geometry::from_complex(&c)?;
    let opts = SolverOptions::default().with_dense_threshold(HODGE_DENSE_THRESHOLD);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut dims_ok = true;
    let mut pairing: f64 = 0.0;
    for _ in 0..10 {
        let w = random_smooth_field(&c, 1.0, 6, &mut rng)?;
        let u = random_smooth_field(&c, 0.5, 6, &mut rng)?;
        let g = g0.with_conformal(u);
        let h = hodge_structure(&OperatorBundle::assemble(&c, &g, &w, Gauge::Weighted, MassScheme::Lumped)?, 4, &opts)?;
        dims_ok &= h.harmonic_dims == [1, 2, 1];
        pairing = pairing.max(h.pairing_error);
    }
    let t = t0.elapsed();
    outcome(
        dims_ok && pairing < PAIRING_TOL && within(t, 30.0),
        format!("harmonic dims (1,2,1) {dims_ok}; exact/coexact pairing {pairing:.1e}; {:.1}s", t.as_secs_f64()),
    )
}

// 3. brute-force min-max oracle

const ORACLE_TOL: f64 = 1e-10;

fn criterion_3() -> Result<Outcome> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = SolverOptions::default();
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for case in 0..25u64 {
        let c: Complex = match case % 5 {
            0 => jittered_disk(rng.gen_range(3..7), rng.gen_range(3..6), case)?.into(),
            1 => icosphere(rng.gen_range(1..3))?.into(),
            2 => product_grid(vec![Factor::circle(rng.gen_range(3..9), 1.0), Factor::interval(rng.gen_range(2..7), 0.7)])?,
            3 => triangulated_torus(rng.gen_range(3..6), rng.gen_range(3..6), 1.0, 1.5)?.into(),
            _ => product_grid(vec![Factor::interval(rng.gen_range(5..60), 2.0)])?,
        };
        let g = Geometry::from_complex(&c)?;
        let w = random_weight(&c, &mut rng)?;
        let gauge = if rng.gen_bool(0.5) { Gauge::Twisted } else { Gauge::Weighted };
        let scheme = if rng.gen_bool(0.3) { MassScheme::Consistent } else { MassScheme::Lumped };
        let gauge = if scheme == MassScheme::Consistent { Gauge::Weighted } else { gauge };
        let b = OperatorBundle::assemble(&c, &g, &w, gauge, scheme)?;
        for p in 0..c.dimension() {
            if c.num_cells(p) + c.num_cells(p + 1) > 400 {
                continue;
            }
            let k = 6.min(DegreeSolver::new(&b, p, &opts)?.coexact_dim());
            let r = coexact_spectrum(&b, p, k, &opts)?;
            for (i, v) in r.coexact.values.iter().enumerate() {
                worst = worst.max(rel(minmax_bruteforce(&b, p, i + 1)?, *v));
                compared += 1;
            }
        }
    }
    let t = t0.elapsed();
    outcome(
        worst < ORACLE_TOL && compared > 0 && within(t, 60.0),
        format!("{compared} eigenvalues on 25 complexes, worst {worst:.1e}; {:.1}s", t.as_secs_f64()),
    )
}

// 4. harmonic oscillator and flat circle

const HERMITE_TOL: f64 = 1e-2;
const FOURIER_TOL: f64 = 5e-3;

fn criterion_4() -> Result<Outcome> {
    let t0 = Instant::now();
    let opts = SolverOptions::default();
    let herm = dec_interval_spectrum(2000, -8.0, 16.0, &|x| 0.5 * x * x, 3, &opts)?;
    let herm_err = herm.iter().zip([2.0, 4.0, 6.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let circ = dec_circle_spectrum(512, TAU, &|_| 0.0, 6, &opts)?;
    let circ_err = circ.iter().zip([1.0, 1.0, 4.0, 4.0, 9.0, 9.0]).map(|(a, b)| rel(*a, b)).fold(0.0, f64::max);
    let t = t0.elapsed();
    outcome(
        herm_err < HERMITE_TOL && circ_err < FOURIER_TOL && within(t, 10.0),
        format!(
            "interval {herm:.4?} (abs err {herm_err:.1e}); circle rel err {circ_err:.1e}; {:.1}s",
            t.as_secs_f64()
        ),
    )
}

// 5. duality under φ → −φ

const DUALITY_LIMIT: f64 = 1e-4;
const TORUS_ORDER: f64 = 1.0;

fn criterion_5() -> Result<Outcome> {
    let t0 = Instant::now();
    let opts = SolverOptions::default();
    let circ = circle_duality(|x: f64| x.cos() + 0.5 * (2.0 * x).sin(), TAU, &[256, 512, 1024], 5, &opts)?;
    let worst = circ.extrapolated.iter().copied().fold(0.0, f64::max);
    let torus = torus_duality(|x, y| 0.4 * (TAU * x).cos() + 0.3 * (TAU * y).sin() * (TAU * x).sin(), 1.0, &[12, 24, 48], 5, &opts)?;
    let order = torus.orders.iter().copied().fold(f64::INFINITY, f64::min);
    let decreasing = torus.errors.windows(2).all(|w| w[1] < w[0]);
    let t = t0.elapsed();
    outcome(
        worst < DUALITY_LIMIT && decreasing && order >= TORUS_ORDER,
        format!(
            "circle extrapolated max {worst:.1e}; torus errors {}, min order {order:.2}; {:.1}s",
            sci(&torus.errors),
            t.as_secs_f64()
        ),
    )
}

// 6. Künneth

const KUNNETH_TOL: f64 = 1e-9;

fn criterion_6() -> Result<Outcome> {
    let t0 = Instant::now();
    let opts = SolverOptions::default();
    let k = kunneth(
        Factor::circle(64, TAU),
        |x: f64| 0.7 * x.cos(),
        Factor::circle(64, TAU),
        |y: f64| 0.4 * (2.0 * y).sin() + 0.2 * y.cos(),
        10,
        &opts,
    )?;
    let t = t0.elapsed();
    outcome(k.max_rel_error < KUNNETH_TOL, format!("max rel error {:.1e}; {:.1}s", k.max_rel_error, t.as_secs_f64()))
}

// 7. collapse of the sphere onto an equatorial band

const COLLAPSE_DROP: f64 = 5.0;
const COLLAPSE_LIMIT_TOL: f64 = 0.05;
const COLLAPSE_SOLVER_TOL: f64 = 1e-6;

fn criterion_7() -> Result<Outcome> {
    let t0 = Instant::now();
    let c: Complex = icosphere(12)?.into();
    let g = Geometry::from_complex(&c)?;
    let w = CellField::from_fn(&c, |x| 0.3 * x[0])?;
    let u = tag_domain(&c, |t| {
        let vs = c.cell_vertices(2, t);
        (vs.iter().map(|&v| c.vertex_coords(v)[2]).sum::<f64>() / 3.0).abs() < 0.35
    })?;
    let opts = SolverOptions::default().with_tol(COLLAPSE_SOLVER_TOL);
    let input = CollapseInput { complex: &c, geometry: &g, weight: &w, domain: &u, alpha: 2.0 };
    let s = collapse_sweep(&input, 1, &[1e-1, 1e-2, 1e-3], 3, COLLAPSE_DROP, &opts)?;
    let worst = s.limit_errors.iter().copied().fold(0.0, f64::max);
    let t = t0.elapsed();
    outcome(
        s.d_p == 1 && s.vanishing == [0] && worst < COLLAPSE_LIMIT_TOL && within(t, 300.0),
        format!(
            "{} triangles; d_1 = {}; vanishing {:?}: {}; limit errors {} (interface-cut masses {}); {:.1}s",
            c.num_top(),
            s.d_p,
            s.vanishing,
            sci(&s.spectra.iter().map(|v| v[0]).collect::<Vec<_>>()),
            sci(&s.limit_errors),
            sci(&s.inside_errors),
            t.as_secs_f64()
        ),
    )
}

// 8. puncture of the flat torus

const PUNCTURE_TOL: f64 = 0.02;

fn criterion_8() -> Result<Outcome> {
    let t0 = Instant::now();
    let n = 64;
    let c = product_grid(vec![Factor::circle(n, 1.0), Factor::circle(n, 1.0)])?;
    let g = Geometry::from_complex(&c)?;
    let w = CellField::from_fn(&c, |x| (TAU * x[0]).sin())?;
    let center = nearest_vertex(&c, &[0.5, 0.5]);
    let h = 1.0 / n as f64;
    let radii = [4.0 * h, 2.0 * h, h];
    let opts = SolverOptions::default();
    let input = PunctureInput { complex: &c, geometry: &g, weight: &w, center };
    let mut pass = true;
    let mut parts = Vec::new();
    for p in 0..=1 {
        let s = puncture_sweep(&input, p, &radii, 5, 3, &opts)?;
        let last = *s.errors.last().expect("radii");
        let err_down = s.errors.windows(2).all(|w| w[1] < w[0]);
        let dist_down = s.distances.windows(2).all(|w| w[1] < w[0]);
        pass &= last < PUNCTURE_TOL && err_down && dist_down;
        parts.push(format!("p={p}: errors {}, distances {} over {} pairs", sci(&s.errors), sci(&s.distances), s.span));
    }
    let t = t0.elapsed();
    outcome(pass, format!("{}; {:.1}s", parts.join("; "), t.as_secs_f64()))
}

// 9. the three operator expressions

const THREE_FORMS_ORDER: f64 = 2.0;
const STAGNATION_ORDER: f64 = 0.5;
const TWISTED_SQUARE_ORDER: f64 = 1.8;

fn criterion_9() -> Result<Outcome> {
    let t0 = Instant::now();
    let phi = |x: f64, y: f64| 0.5 * x.sin() * y.cos() + 0.3 * (2.0 * y).sin();
    let grids = [16, 32, 64];
    let s = three_forms_torus(phi, TAU, &grids, 2.0)?;
    // below this the differences are rounding noise and have no order
    let floor = 1e-10;
    let ordered = s
        .differences
        .iter()
        .zip(&s.orders)
        .all(|(d, o)| d.iter().all(|v| *v < floor) || o.last().is_some_and(|o| *o >= THREE_FORMS_ORDER));
    let unit = &s.unit_coefficient[1];
    let stagnation = (unit[unit.len() - 2] / unit[unit.len() - 1]).log2();
    let scale = unit.last().copied().unwrap_or(0.0) / s.hessian_scale;
    let stagnates = stagnation < STAGNATION_ORDER && (0.5..=2.5).contains(&scale);
    let sq = twisted_square_study(|x, y| (y).sin() + 0.2 * x.cos(), |x, y| -(x).cos() * 0.5 + 0.1 * y.sin(), TAU, &grids)?;
    let sq_order = sq.orders.last().copied().unwrap_or(0.0);
    let t = t0.elapsed();
    outcome(
        ordered && stagnates && sq_order >= TWISTED_SQUARE_ORDER && sq.norms.iter().all(|v| *v > 0.1),
        format!(
            "coefficient 2 differences {:?}; coefficient 1 stagnates at {:.2} x |Hess phi| (order {stagnation:.2}); twisted square errors {} order {sq_order:.2}; {:.1}s",
            s.differences.iter().map(|d| sci(d)).collect::<Vec<_>>(),
            scale,
            sci(&sq.errors),
            t.as_secs_f64()
        ),
    )
}

// 10. smoothing toward the collapse

const MONOTONE_SLACK: f64 = 1e-9;

fn criterion_10() -> Result<Outcome> {
    let t0 = Instant::now();
    let c = product_grid(vec![Factor::circle(32, 1.0), Factor::circle(32, 1.0)])?;
    let g = Geometry::from_complex(&c)?;
    let w = CellField::from_fn(&c, |x| 0.5 * (TAU * x[1]).cos())?;
    let tc = c.as_tensor().expect("tensor grid").clone();
    let u = tag_domain(&c, |t| (8..24).contains(&tc.cell(2, t)[0].1))?;
    let input = CollapseInput { complex: &c, geometry: &g, weight: &w, domain: &u, alpha: 2.0 };
    let opts = SolverOptions::default();
    let s = smoothing_sweep(&input, 0, 1e-2, &[1, 2, 3, 4, 5, 6], 5, &opts)?;
    let t = t0.elapsed();
    let first: Vec<f64> = s.spectra.iter().map(|v| v[0]).collect();
    outcome(
        s.worst_increase <= MONOTONE_SLACK,
        format!(
            "largest increase along j {:.2e}; lowest eigenvalue along j {first:.4?} vs collapse {:.4}; {:.1}s",
            s.worst_increase,
            s.collapse[0],
            t.as_secs_f64()
        ),
    )
}

fn main() {
    // `cargo test -- --list` and filters should not trigger the long run
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("exact discrete identities", criterion_1),
        ("Hodge structure on the torus", criterion_2),
        ("min-max oracle equivalence", criterion_3),
        ("Witten oracles", criterion_4),
        ("duality", criterion_5),
        ("Kunneth", criterion_6),
        ("collapse convergence", criterion_7),
        ("puncture convergence", criterion_8),
        ("operator identities", criterion_9),
        ("smoothing monotonicity", criterion_10),
    ];
    let mut passed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = match f() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        passed += ok as usize;
        println!("{} criterion {} ({name}): {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
    }
    println!("{passed}/10 criteria pass");
}
