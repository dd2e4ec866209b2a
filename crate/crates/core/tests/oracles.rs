//! Solver output against oracles that share no code with the library:
//! closed forms, and a cyclic Jacobi eigensolver run on the assembled
//! matrices. Values from the Jacobi oracle were computed once and frozen.

use std::f64::consts::PI;

use witten_core::cohomology::{betti_numbers, quotient_dimension};
use witten_core::complex::{build_simplicial, icosphere, product_grid, tag_domain, Complex, Factor};
use witten_core::deform::collapse_family;
use witten_core::experiments::{bundle, dec_circle_spectrum, dec_interval_spectrum};
use witten_core::model1d::{circle_witten_spectrum, interval_witten_spectrum, twisted_square_on_constant, Grid1D, IntervalCondition, TwistField};
use witten_core::spectral::{
    coexact_spectrum, domain_spectrum, full_hodge_spectrum, harmonic_representative, min_norm_primitive, minmax_bruteforce,
    BoundaryCondition, Discretization, DomainSetup, SolverOptions,
};
use witten_core::witten_ops::{
    assemble_mass, conformal_invariant_exponent, conformal_rescale, weighted_r_norm, CellField, Geometry, Mass, MassScheme, OperatorBundle,
};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut v: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Nonzero eigenvalues of the lumped pencil `(D_pᵀ M_{p+1} D_p, M_p)`,
/// built entry by entry from the coboundary and the mass diagonals.
fn pencil_oracle(b: &OperatorBundle, p: usize) -> Vec<f64> {
    let diag = |m: &Mass| m.diagonal().expect("lumped masses").to_vec();
    let (m, m1) = (diag(b.mass(p)), diag(b.mass(p + 1)));
    let d = b.coboundary(p).to_dense();
    let n = m.len();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let k: f64 = (0..m1.len()).map(|e| d[[e, i]] * m1[e] * d[[e, j]]).sum();
            s[i][j] = k / (m[i] * m[j]).sqrt();
        }
    }
    let all = jacobi_eigenvalues(s);
    let top = all.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    all.into_iter().filter(|v| *v > 1e-10 * top).collect()
}

fn assert_close(got: &[f64], want: &[f64], tol: f64, what: &str) {
    assert!(got.len() >= want.len(), "{what}: {got:?}");
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() <= tol * w.abs().max(1.0), "{what}: got {got:?}, want {want:?}");
    }
}

fn dense() -> SolverOptions {
    SolverOptions::default()
}

fn krylov() -> SolverOptions {
    SolverOptions::default().with_dense_threshold(0)
}

#[test]
fn unweighted_circle_closed_form() {
    let (n, len) = (16, 1.0);
    let h = len / n as f64;
    let mut want: Vec<f64> = (1..n).map(|k| 4.0 / (h * h) * (PI * k as f64 / n as f64).sin().powi(2)).collect();
    want.sort_by(f64::total_cmp);
    for opts in [dense(), krylov()] {
        let got = dec_circle_spectrum(n, len, &|_| 0.0, 6, &opts).unwrap();
        assert_close(&got, &want[..6], 1e-10, "circle");
    }
}

#[test]
fn unweighted_interval_closed_form() {
    // path graph with half masses at both ends: cos modes, for either scheme
    let (n, len) = (20, 2.0);
    let h = len / n as f64;
    let want: Vec<f64> = (1..=5).map(|k| 4.0 / (h * h) * (PI * k as f64 / (2.0 * n as f64)).sin().powi(2)).collect();
    let dec = dec_interval_spectrum(n, 0.0, len, &|_| 0.0, 5, &dense()).unwrap();
    assert_close(&dec, &want, 1e-10, "DEC interval");
    let grid = Grid1D::interval(n, 0.0, len, |_| 0.0).unwrap();
    let neumann = interval_witten_spectrum(&grid, IntervalCondition::Absolute, 6).unwrap();
    assert!(neumann[0].abs() < 1e-10);
    assert_close(&neumann[1..], &want, 1e-10, "absolute interval");
    let dirichlet = interval_witten_spectrum(&grid, IntervalCondition::Relative, 5).unwrap();
    let want_d: Vec<f64> = (1..=5).map(|k| 4.0 / (h * h) * (PI * k as f64 / (2.0 * n as f64)).sin().powi(2)).collect();
    assert_close(&dirichlet, &want_d, 1e-10, "relative interval");
}

#[test]
fn hermite_levels() {
    // −f″ + (x² − 1) f: the levels 2k of the shifted oscillator
    let grid = Grid1D::interval(1600, -8.0, 8.0, |x| 0.5 * x * x).unwrap();
    let v = interval_witten_spectrum(&grid, IntervalCondition::Absolute, 4).unwrap();
    assert_close(&v, &[0.0, 2.0, 4.0, 6.0], 2e-3, "absolute");
    let v = interval_witten_spectrum(&grid, IntervalCondition::Relative, 4).unwrap();
    assert_close(&v, &[0.0, 2.0, 4.0, 6.0], 2e-3, "relative");
}

#[test]
fn triangle_graph() {
    let c = build_simplicial(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 0.75f64.sqrt()]], &[vec![0, 1], vec![1, 2], vec![2, 0]]).unwrap();
    assert_eq!(betti_numbers(&c), vec![1, 1]);
    let b = bundle(&c, &Geometry::from_complex(&c).unwrap(), &CellField::zeros(&c)).unwrap();
    let r = full_hodge_spectrum(&b, 0, 2, &dense()).unwrap();
    assert_eq!(r.harmonic_dim, 1);
    assert_close(&r.coexact.values, &[3.0, 3.0], 1e-12, "triangle");
    let r = full_hodge_spectrum(&b, 1, 2, &dense()).unwrap();
    assert_eq!(r.harmonic_dim, 1);
    assert_close(&r.exact.values, &[3.0, 3.0], 1e-12, "triangle edges");
}

fn weighted_circle() -> OperatorBundle {
    let c = product_grid(vec![Factor::circle(12, 1.0)]).unwrap();
    let w = CellField::from_fn(&c, |x| 0.7 * (2.0 * PI * x[0]).sin()).unwrap();
    bundle(&c, &Geometry::from_complex(&c).unwrap(), &w).unwrap()
}

const WEIGHTED_CIRCLE: [f64; 4] = [50.227606363293695, 51.6496835231142, 153.96174589039438, 154.12015033213316];

#[test]
fn weighted_circle_against_jacobi() {
    let b = weighted_circle();
    let oracle = pencil_oracle(&b, 0);
    assert_close(&oracle, &WEIGHTED_CIRCLE, 1e-12, "oracle");
    for opts in [dense(), krylov()] {
        let got = coexact_spectrum(&b, 0, 4, &opts).unwrap().coexact.values;
        assert_close(&got, &WEIGHTED_CIRCLE, 1e-9, "solver");
    }
}

fn weighted_sphere() -> OperatorBundle {
    let c: Complex = icosphere(2).unwrap().into();
    let w = CellField::from_fn(&c, |x| 0.3 * x[0] + 0.2 * x[2]).unwrap();
    bundle(&c, &Geometry::from_complex(&c).unwrap(), &w).unwrap()
}

const WEIGHTED_SPHERE_P0: [f64; 4] = [2.0802697788520366, 2.0802697881938044, 2.119053167580919, 5.5912215266906005];
const WEIGHTED_SPHERE_P1: [f64; 4] = [2.2543696514932625, 2.2543696904703485, 2.2759669030300644, 6.389808514409664];

#[test]
fn weighted_sphere_against_jacobi() {
    let b = weighted_sphere();
    for (p, frozen) in [(0, WEIGHTED_SPHERE_P0), (1, WEIGHTED_SPHERE_P1)] {
        let oracle = pencil_oracle(&b, p);
        assert_close(&oracle, &frozen, 1e-12, "oracle");
        for opts in [dense(), krylov()] {
            let got = coexact_spectrum(&b, p, 4, &opts).unwrap().coexact.values;
            assert_close(&got, &frozen, 1e-9, "solver");
        }
    }
}

#[test]
fn quotient_dimensions() {
    // band around the equator: its loop does not come from the sphere
    let s: Complex = icosphere(4).unwrap().into();
    let band = tag_domain(&s, |t| {
        let vs = s.cell_vertices(2, t);
        (vs.iter().map(|&v| s.vertex_coords(v)[2]).sum::<f64>() / 3.0).abs() < 0.3
    })
    .unwrap();
    assert_eq!(quotient_dimension(&s, &band, 1).unwrap(), 1);
    assert_eq!(quotient_dimension(&s, &band, 0).unwrap(), 0);

    // meridian annulus of the torus: its loop restricts from the torus
    let t = product_grid(vec![Factor::circle(8, 1.0), Factor::circle(8, 1.0)]).unwrap();
    let tc = t.as_tensor().unwrap();
    let annulus = tag_domain(&t, |c| {
        let i = tc.cell(2, c)[0].1;
        (2..5).contains(&i)
    })
    .unwrap();
    assert_eq!(quotient_dimension(&t, &annulus, 1).unwrap(), 0);
}

#[test]
fn least_norm_primitive() {
    let b = weighted_sphere();
    let n0 = b.size(0);
    let f: Vec<f64> = (0..n0).map(|i| ((i * 7 % 13) as f64 - 6.0) / 6.0).collect();
    let omega = b.coboundary(0).matvec(&f);
    let theta = min_norm_primitive(&b, 0, &omega, &dense()).unwrap();
    let back = b.coboundary(0).matvec(&theta);
    let err = back.iter().zip(&omega).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
    assert!(err < 1e-10, "d theta = omega off by {err}");
    // θ = f − (weighted mean of f), the M-orthogonal complement of constants
    let m = b.mass(0).diag_entries();
    let mean = f.iter().zip(&m).map(|(a, w)| a * w).sum::<f64>() / m.iter().sum::<f64>();
    let dev = theta.iter().zip(&f).map(|(t, a)| (t - (a - mean)).abs()).fold(0.0, f64::max);
    assert!(dev < 1e-10, "primitive is not the least-norm one: {dev}");
}

#[test]
fn weighted_three_cycle() {
    let c = build_simplicial(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 0.75f64.sqrt()]], &[vec![0, 1], vec![1, 2], vec![2, 0]]).unwrap();
    let w = CellField::from_vertices(&c, &[0.37, -0.81, 0.22]).unwrap();
    let b = bundle(&c, &Geometry::from_complex(&c).unwrap(), &w).unwrap();
    let oracle = pencil_oracle(&b, 0);
    assert_eq!(oracle.len(), 2);
    let got = coexact_spectrum(&b, 0, 2, &dense()).unwrap().coexact.values;
    assert_close(&got, &oracle, 1e-12, "solver");
    for i in 1..=2 {
        assert_close(&[minmax_bruteforce(&b, 0, i).unwrap()], &oracle[i - 1..i], 1e-12, "min-max");
    }
    assert!(minmax_bruteforce(&b, 0, 3).is_err());
}

#[test]
fn primitive_ignores_closed_parts() {
    let c = product_grid(vec![Factor::circle(6, 1.0), Factor::circle(5, 1.0)]).unwrap();
    let w = CellField::from_fn(&c, |x| 0.4 * (2.0 * PI * x[0]).cos() + 0.2 * (2.0 * PI * x[1]).sin()).unwrap();
    let b = bundle(&c, &Geometry::from_complex(&c).unwrap(), &w).unwrap();
    let n1 = b.size(1);
    let raw: Vec<f64> = (0..n1).map(|i| ((i * 5 % 7) as f64 - 3.0) / 3.0).collect();
    let theta0 = min_norm_primitive(&b, 1, &b.coboundary(1).matvec(&raw), &dense()).unwrap();
    // a primitive that is already least-norm comes back unchanged
    let again = min_norm_primitive(&b, 1, &b.coboundary(1).matvec(&theta0), &dense()).unwrap();
    let err = theta0.iter().zip(&again).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
    assert!(err < 1e-12, "{err}");
    // adding a closed cochain (exact part plus a meridian loop) changes nothing
    let f: Vec<f64> = (0..b.size(0)).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut zeta = b.coboundary(0).matvec(&f);
    zeta.iter_mut().zip(&meridian(&c)).for_each(|(z, m)| *z += m);
    let shifted: Vec<f64> = theta0.iter().zip(&zeta).map(|(a, z)| a + z).collect();
    let same = min_norm_primitive(&b, 1, &b.coboundary(1).matvec(&shifted), &dense()).unwrap();
    let err = theta0.iter().zip(&same).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
    assert!(err < 1e-12, "{err}");
    // a loop is closed but not exact
    assert!(min_norm_primitive(&b, 0, &meridian(&c), &dense()).is_err());
}

/// Unit cochain on the edges dual to one vertical line: a closed 1-cochain
/// winding once around the first circle.
fn meridian(c: &Complex) -> Vec<f64> {
    let t = c.as_tensor().unwrap();
    (0..c.num_cells(1))
        .map(|e| {
            let cell = t.cell(1, e);
            // edges along the first factor leaving column 0
            if cell[0].0 == 1 && cell[0].1 == 0 { 1.0 } else { 0.0 }
        })
        .collect()
}

#[test]
fn harmonic_representative_of_a_meridian() {
    let c = product_grid(vec![Factor::circle(6, 1.0), Factor::circle(5, 1.0)]).unwrap();
    let z = meridian(&c);
    assert!(c.coboundary(1).unwrap().to_f64().matvec(&z).iter().all(|v| *v == 0.0));
    let g = Geometry::from_complex(&c).unwrap();
    let flat = bundle(&c, &g, &CellField::zeros(&c)).unwrap();
    let h = harmonic_representative(&flat, 1, &z).unwrap();
    // spread evenly over the six parallel edges of each row
    let t = c.as_tensor().unwrap();
    for (e, v) in h.iter().enumerate() {
        let want = if t.cell(1, e)[0].0 == 1 { 1.0 / 6.0 } else { 0.0 };
        assert!((v - want).abs() < 1e-10, "edge {e}: {v}");
    }
    let w = CellField::from_fn(&c, |x| 0.5 * (2.0 * PI * x[0]).sin()).unwrap();
    let weighted = bundle(&c, &g, &w).unwrap();
    let hw = harmonic_representative(&weighted, 1, &z).unwrap();
    assert!(weighted.coboundary(1).matvec(&hw).iter().all(|v| v.abs() < 1e-12));
    let diff: Vec<f64> = hw.iter().zip(&z).map(|(a, b)| a - b).collect();
    assert!(min_norm_primitive(&weighted, 0, &diff, &dense()).is_ok());
    assert!(hw.iter().zip(&h).any(|(a, b)| (a - b).abs() > 1e-3));
}

#[test]
fn interval_domain_neumann_and_dirichlet() {
    // an arc of a circle, so both ends of U lie on the interface
    let c = product_grid(vec![Factor::circle(300, 3.0)]).unwrap();
    let g = Geometry::from_complex(&c).unwrap();
    let w = CellField::zeros(&c);
    let u = tag_domain(&c, |t| t < 200).unwrap();
    let setup = DomainSetup { complex: &c, domain: &u, geometry: &g, weight: &w, disc: Discretization::default() };
    let len = 2.0;
    let abs = domain_spectrum(&setup, BoundaryCondition::Absolute, 0, 4, &dense()).unwrap();
    assert_eq!(abs.harmonic_dim, 1);
    for (i, v) in abs.coexact.values.iter().enumerate() {
        let want = ((i + 1) as f64 * PI / len).powi(2);
        assert!((v - want).abs() < 5e-3 * want, "absolute {i}: {v} vs {want}");
    }
    let rel = domain_spectrum(&setup, BoundaryCondition::Relative, 0, 2, &dense()).unwrap();
    assert_eq!(rel.harmonic_dim, 0);
    let first = rel.coexact.values[0];
    assert!((first - (PI / len).powi(2)).abs() < 5e-3 * (PI / len).powi(2), "relative {first}");
    let whole = tag_domain(&c, |_| true);
    assert!(whole.is_err() || domain_spectrum(&DomainSetup { domain: &whole.unwrap(), ..setup }, BoundaryCondition::Absolute, 0, 1, &dense()).is_err());
}

#[test]
fn fourth_order_circle() {
    let s = circle_witten_spectrum(&Grid1D::circle(64, 2.0 * PI, |_| 0.0).unwrap(), 4).unwrap();
    assert_close(&s.zero_forms, &[0.0, 1.0, 1.0, 4.0, 4.0], 1e-6, "functions");
    let shifted = circle_witten_spectrum(&Grid1D::circle(64, 2.0 * PI, |_| 1.7).unwrap(), 4).unwrap();
    assert_close(&shifted.zero_forms, &s.zero_forms, 1e-12, "constant weight");
}

#[test]
fn twist_squares_to_its_curl() {
    // X♭ = sin(y) dx is not closed, so d̃_X d̃_X 1 = dX♭ = −cos(y) dx∧dy
    let square = |n| twisted_square_on_constant(&TwistField::from_fn(n, 2.0 * PI, |_, y| y.sin(), |_, _| 0.0).unwrap());
    let (coarse, fine) = (square(32), square(64));
    assert!(fine.norm > 0.9, "{}", fine.norm);
    assert!(fine.error < 1e-4 * fine.norm, "{}", fine.error);
    assert!(coarse.error / fine.error > 3.0, "{} then {}", coarse.error, fine.error);
}

#[test]
fn collapse_mass_exponents_in_three_dimensions() {
    // off the closure of U the p-masses scale by ε^{n+2α−2p}; the form of
    // degree p sees its (p+1)-masses scaled by ε^{n+2α−2p−2}
    let c = product_grid(vec![Factor::circle(4, 1.0), Factor::circle(4, 1.0), Factor::interval(3, 1.0)]).unwrap();
    let tc = c.as_tensor().unwrap();
    let u = tag_domain(&c, |t| tc.cell(3, t)[0].1 < 2).unwrap();
    let g = Geometry::from_complex(&c).unwrap();
    let w = CellField::from_fn(&c, |x| 0.3 * x[2] - 0.1 * x[0]).unwrap();
    let (eps, alpha) = (0.05, 1.5);
    let (g2, w2) = collapse_family(&c, &g, &w, &u, eps, alpha).unwrap();
    for p in 0..=3usize {
        let before = assemble_mass(&c, &g, &w, p, MassScheme::Lumped).unwrap().diag_entries();
        let after = assemble_mass(&c, &g2, &w2, p, MassScheme::Lumped).unwrap().diag_entries();
        let want = eps.powf(3.0 + 2.0 * alpha - 2.0 * p as f64);
        let mut seen = 0;
        for i in (0..before.len()).filter(|&i| !u.in_closure(p, i)) {
            assert!(((after[i] / before[i]) - want).abs() < 1e-12 * want, "p={p} cell {i}");
            seen += 1;
        }
        assert!(seen > 0);
    }
}

#[test]
fn r_norm_exponent_in_three_dimensions() {
    assert!(conformal_invariant_exponent(3, 1, 1.0).is_err());
    let r = conformal_invariant_exponent(3, 1, 0.5).unwrap();
    assert_eq!(r, 6.0);
    let c = product_grid(vec![Factor::circle(4, 1.0), Factor::circle(3, 1.0), Factor::interval(3, 1.0)]).unwrap();
    let g = Geometry::from_complex(&c).unwrap();
    let w = CellField::from_fn(&c, |x| (2.0 * PI * x[0]).sin()).unwrap();
    let omega: Vec<f64> = (0..c.num_cells(1)).map(|i| (i as f64).cos()).collect();
    let before = weighted_r_norm(&omega, r, &g, &w, 1).unwrap();
    let u = CellField::from_fn(&c, |x| 0.6 * x[2] + 0.3 * (2.0 * PI * x[1]).cos()).unwrap();
    let (g2, w2) = conformal_rescale(&g, &w, &u, 0.5);
    let after = weighted_r_norm(&omega, r, &g2, &w2, 1).unwrap();
    assert!((after - before).abs() < 1e-13 * before, "{after} vs {before}");
}
