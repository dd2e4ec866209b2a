//! One function per subcommand. Each turns a loaded manifest into a report.

use witten_core::cohomology::betti;
use witten_core::complex::{Complex, Factor, FactorKind};
use witten_core::experiments::{
    circle_duality, collapse_sweep, conformal_sweep, kunneth, merged_full, nearest_vertex, protected_degree,
    puncture_sweep, rel_dev, smoothing_sweep, three_forms_torus, torus_duality, twisted_square_study, CollapseInput, ConformalInput,
    PunctureInput,
};
use witten_core::expr::Expr;
use witten_core::spectral::{
    coexact_spectrum, domain_spectrum, full_hodge_spectrum, minmax_bruteforce, BoundaryCondition, Discretization, DomainSetup,
    SolverOptions,
};
use witten_core::witten_ops::OperatorBundle;
use witten_core::{Error, Result};

use crate::manifest::Loaded;
use crate::report::{num, Report, Table};

const CITE_SPECTRUM: &str =
    "Hodge theory for the Witten Laplacian: harmonic forms represent cohomology, the rest of the spectrum splits into exact and coexact parts";
const CITE_DUALITY: &str = "Hodge duality: the spectrum of p-forms for phi equals that of (n-p)-forms for -phi";
const CITE_KUNNETH: &str = "Kunneth formula: on a product with phi = phi1 + phi2 the Witten spectra add across factors";
const CITE_COLLAPSE: &str = "Collapse of the complement of a domain U: exactly dim H^p(U/M) eigenvalues tend to 0 and the following ones converge to the absolute spectrum of U";
const CITE_SMOOTHING: &str = "Smoothed collapse: a decreasing sequence of smooth conformal factors approximating the singular collapse";
const CITE_PUNCTURE: &str = "Removal of a small ball: spectrum and eigenspaces of M minus B(x, eps) converge to those of M";
const CITE_CONFORMAL: &str =
    "Conformal lower bound: in protected degrees mu_{p,1} Vol^{2/n} is bounded below on the weighted conformal class [g, phi]_alpha";
const CITE_THREE_FORMS: &str =
    "Equivalent expressions of the twisted Laplacian: d_X delta_X + delta_X d_X = Laplacian + |X|^2 + L_X + L_X^* = Laplacian + |X|^2 + div-term + 2 sym grad X";
const CITE_ORACLE: &str = "Min-max characterisation of mu_{p,i} over exact (p+1)-forms with the quotient norm";

fn require<T>(items: &[T], name: &str) -> Result<()> {
    if items.is_empty() {
        return Err(Error::Invalid(format!("{name} must list at least one value for this experiment")));
    }
    Ok(())
}

fn domain(l: &Loaded) -> Result<&witten_core::complex::DomainTag> {
    l.domain.as_ref().ok_or_else(|| Error::Invalid("this experiment needs a domain".into()))
}

fn factors(c: &Complex) -> Result<&[Factor]> {
    c.as_tensor()
        .map(|t| t.factors())
        .ok_or_else(|| Error::Invalid("this experiment needs a tensor product mesh".into()))
}

fn expr_phi(l: &Loaded) -> Result<Expr> {
    match &l.manifest.phi {
        Some(crate::manifest::FieldDef::Expr(s)) => Expr::parse(s),
        _ => Err(Error::Invalid("this experiment needs phi as an expression".into())),
    }
}

fn degrees(l: &Loaded) -> Vec<usize> {
    if l.manifest.degrees.is_empty() {
        (0..=l.complex.dimension()).collect()
    } else {
        l.manifest.degrees.clone()
    }
}

fn operators(l: &Loaded) -> Result<OperatorBundle> {
    OperatorBundle::assemble(&l.complex, &l.geometry, &l.weight, l.manifest.gauge, l.manifest.scheme)
}

pub fn spectrum(l: &Loaded, opts: &SolverOptions) -> Result<Report> {
    let m = &l.manifest;
    let mut results = Vec::new();
    let bc = match (&l.domain, m.boundary) {
        (Some(_), Some(bc)) => Some(bc),
        (Some(_), None) => Some(BoundaryCondition::Absolute),
        (None, Some(_)) => return Err(Error::Invalid("a boundary condition needs a domain".into())),
        (None, None) => None,
    };
    let closed = if bc.is_none() { Some(operators(l)?) } else { None };
    for p in degrees(l) {
        let r = match bc {
            None => full_hodge_spectrum(closed.as_ref().expect("closed problem"), p, m.k, opts)?,
            Some(bc) => {
                let setup = DomainSetup {
                    complex: &l.complex,
                    domain: domain(l)?,
                    geometry: &l.geometry,
                    weight: &l.weight,
                    disc: Discretization { gauge: m.gauge, scheme: m.scheme, ..Default::default() },
                };
                domain_spectrum(&setup, bc, p, m.k, opts)?
            }
        };
        results.push(r);
    }
    let mut table = Table::new(&["degree", "kind", "index", "eigenvalue", "residual"]);
    for r in &results {
        let row = |kind: &str, i: usize, v: f64, res: f64| vec![r.degree.to_string(), kind.to_string(), (i + 1).to_string(), num(v), num(res)];
        for (i, res) in r.harmonic_residuals.iter().enumerate() {
            table.push(row("harmonic", i, 0.0, *res));
        }
        for (kind, part) in [("exact", &r.exact), ("coexact", &r.coexact)] {
            for (i, (v, res)) in part.values.iter().zip(&part.residuals).enumerate() {
                table.push(row(kind, i, *v, *res));
            }
        }
    }
    let mut report = Report::new("spectrum", CITE_SPECTRUM, table);
    let mut plot = Table::new(&["degree", "index", "eigenvalue"]);
    for r in &results {
        for (i, v) in merged_full(r).iter().enumerate() {
            plot.push(vec![r.degree.to_string(), (i + 1).to_string(), num(*v)]);
        }
    }
    report.plots.push(("spectrum".into(), plot));
    let dims: Vec<usize> = results.iter().map(|r| r.harmonic_dim).collect();
    report.metric("harmonic_dims", &dims);
    report.metric("degrees", degrees(l));
    report.metric("max_residual", results.iter().map(|r| r.max_residual()).fold(0.0, f64::max));
    if bc.is_none() {
        let want: Vec<usize> = degrees(l).iter().map(|&p| betti(&l.complex, p)).collect::<Result<_>>()?;
        report.check("harmonic dimensions equal Betti numbers", dims == want, format!("{dims:?} vs {want:?}"));
    }
    Ok(report)
}

pub fn duality(l: &Loaded, opts: &SolverOptions) -> Result<Report> {
    let m = &l.manifest;
    require(&m.refinements, "refinements")?;
    let fs = factors(&l.complex)?;
    if fs.iter().any(|f| f.kind != FactorKind::Circle) || fs.len() > 2 {
        return Err(Error::Invalid("duality runs on a circle or a square torus".into()));
    }
    let e = expr_phi(l)?;
    let tol = m.assert_tol.unwrap_or(1e-4);
    let length = fs[0].length;
    let mut report;
    if fs.len() == 1 {
        let mut results = Table::new(&["grid", "index", "difference"]);
        let f = e.clone();
        let d = circle_duality(move |x| f.eval(&[x]), length, &m.refinements, m.k, opts)?;
        for (g, diffs) in d.grids.iter().zip(&d.differences) {
            for (i, v) in diffs.iter().enumerate() {
                results.push(vec![g.to_string(), (i + 1).to_string(), num(*v)]);
            }
        }
        report = Report::new("duality", CITE_DUALITY, results);
        let worst = d.extrapolated.iter().copied().fold(0.0, f64::max);
        report.check("extrapolated phi/-phi difference below tolerance", worst < tol, format!("{worst:.3e} < {tol:e}"));
        report.metric("extrapolated", &d.extrapolated);
        report.metric("model_difference", &d.model_difference);
    } else {
        if fs[1].length != length {
            return Err(Error::Invalid("duality on a torus needs equal side lengths".into()));
        }
        let mut results = Table::new(&["grid", "index", "mu_phi", "mu_dual", "difference"]);
        let d = torus_duality(|x, y| e.eval(&[x, y]), length, &m.refinements, m.k, opts)?;
        for (gi, g) in d.grids.iter().enumerate() {
            for i in 0..d.zero_forms[gi].len() {
                let (a, b) = (d.zero_forms[gi][i], d.one_forms[gi][i]);
                results.push(vec![g.to_string(), (i + 1).to_string(), num(a), num(b), num(a - b)]);
            }
        }
        report = Report::new("duality", CITE_DUALITY, results);
        let order = d.orders.iter().copied().fold(f64::INFINITY, f64::min);
        report.check("1-form/0-form duality error decays with order >= 1", order >= 1.0, format!("orders {:?}", d.orders));
        report.metric("errors", &d.errors);
        report.metric("orders", &d.orders);
        let mut plot = Table::new(&["h", "error"]);
        for (h, e) in d.spacing.iter().zip(&d.errors) {
            plot.push(vec![num(*h), num(*e)]);
        }
        report.plots.push(("duality_error".into(), plot));
    }
    Ok(report)
}

pub fn kunneth_run(l: &Loaded, opts: &SolverOptions) -> Result<Report> {
    let m = &l.manifest;
    let fs = factors(&l.complex)?;
    if fs.len() != 2 || m.factor_phi.len() != 2 {
        return Err(Error::Invalid("kunneth needs a two-factor product and factor_phi with two expressions in x".into()));
    }
    let (e1, e2) = (Expr::parse(&m.factor_phi[0])?, Expr::parse(&m.factor_phi[1])?);
    e1.check_arity(1)?;
    e2.check_arity(1)?;
    let k = kunneth(fs[0], |x| e1.eval(&[x]), fs[1], |y| e2.eval(&[y]), m.k, opts)?;
    let mut results = Table::new(&["degree", "index", "product", "factor_sum"]);
    for (q, (prod, sums)) in k.product.iter().zip(&k.sums).enumerate() {
        for (i, (a, b)) in prod.iter().zip(sums).enumerate() {
            results.push(vec![q.to_string(), (i + 1).to_string(), num(*a), num(*b)]);
        }
    }
    let mut report = Report::new("kunneth", CITE_KUNNETH, results);
    let tol = m.assert_tol.unwrap_or(1e-9);
    report.check("product eigenvalues equal sorted factor sums", k.max_rel_error < tol, format!("{:.3e} < {tol:e}", k.max_rel_error));
    report.metric("max_rel_error", k.max_rel_error);
    Ok(report)
}

pub fn collapse(l: &Loaded, opts: &SolverOptions) -> Result<Report> {
    let m = &l.manifest;
    require(&m.epsilons, "epsilons")?;
    require(&m.degrees, "degrees")?;
    let input = CollapseInput { complex: &l.complex, geometry: &l.geometry, weight: &l.weight, domain: domain(l)?, alpha: m.alpha };
    let tol = m.assert_tol.unwrap_or(0.05);
    let mut results = Table::new(&["degree", "epsilon", "index", "eigenvalue"]);
    let mut plots = Vec::new();
    let mut sweeps = Vec::new();
    for &p in &m.degrees {
        let s = collapse_sweep(&input, p, &m.epsilons, m.k, m.drop_factor, opts)?;
        let cols: Vec<&'static str> = std::iter::once("epsilon").chain((0..s.spectra[0].len()).map(|_| "eigenvalue")).collect();
        let mut plot = Table::new(&cols);
        for (eps, vals) in s.epsilons.iter().zip(&s.spectra) {
            for (i, v) in vals.iter().enumerate() {
                results.push(vec![p.to_string(), num(*eps), (i + 1).to_string(), num(*v)]);
            }
            plot.push(std::iter::once(num(*eps)).chain(vals.iter().map(|v| num(*v))).collect());
        }
        plots.push((format!("collapse_p{p}"), plot));
        sweeps.push(s);
    }
    let mut report = Report::new("collapse", CITE_COLLAPSE, results);
    report.plots = plots;
    for s in &sweeps {
        let p = s.degree;
        let want: Vec<usize> = (0..s.d_p).collect();
        report.check(
            format!("p={p}: exactly d_p = {} eigenvalues vanish", s.d_p),
            s.vanishing == want,
            format!("indices dropping {}x per step: {:?}", m.drop_factor, s.vanishing),
        );
        let worst = s.limit_errors.iter().copied().fold(0.0, f64::max);
        report.check(
            format!("p={p}: next eigenvalues match the absolute spectrum of U"),
            worst < tol,
            format!("relative errors {:?} (tolerance {tol})", s.limit_errors),
        );
    }
    let per_degree: Vec<_> = sweeps
        .iter()
        .map(|s| {
            serde_json::json!({
                "degree": s.degree, "d_p": s.d_p, "vanishing": s.vanishing, "limit": s.limit,
                "limit_errors": s.limit_errors, "limit_interface_cut": s.limit_inside, "max_residual": s.max_residual,
            })
        })
        .collect();
    report.metric("degrees", per_degree);
    if !m.smoothing.is_empty() {
        let eps = *m.epsilons.last().expect("checked");
        for &p in &m.degrees {
            let s = smoothing_sweep(&input, p, eps, &m.smoothing, m.k, opts)?;
            let cols: Vec<&'static str> = std::iter::once("j").chain((0..s.collapse.len()).map(|_| "eigenvalue")).collect();
            let mut plot = Table::new(&cols);
            for (j, vals) in s.indices.iter().zip(&s.spectra) {
                plot.push(std::iter::once(j.to_string()).chain(vals.iter().map(|v| num(*v))).collect());
            }
            report.plots.push((format!("smoothing_p{p}"), plot));
            report.check(
                format!("p={p}: eigenvalues decrease along the smoothing sequence"),
                s.worst_increase <= 1e-9,
                format!("largest increase {:.3e}", s.worst_increase),
            );
            report.metric(&format!("smoothing_p{p}"), serde_json::json!({ "collapse": s.collapse, "worst_undershoot": s.worst_undershoot, "citation": CITE_SMOOTHING }));
        }
    }
    Ok(report)
}

pub fn puncture(l: &Loaded, opts: &SolverOptions) -> Result<Report> {
    let m = &l.manifest;
    require(&m.radii, "radii")?;
    require(&m.degrees, "degrees")?;
    let center = m.center.as_ref().ok_or_else(|| Error::Invalid("puncture needs a center point".into()))?;
    let center = nearest_vertex(&l.complex, center);
    let input = PunctureInput { complex: &l.complex, geometry: &l.geometry, weight: &l.weight, center };
    let tol = m.assert_tol.unwrap_or(0.02);
    let mut results = Table::new(&["degree", "radius", "index", "eigenvalue", "closed"]);
    let mut sweeps = Vec::new();
    for &p in &m.degrees {
        let s = puncture_sweep(&input, p, &m.radii, m.k, m.spaces, opts)?;
        for (r, vals) in s.radii.iter().zip(&s.spectra) {
            for (i, v) in vals.iter().enumerate() {
                results.push(vec![p.to_string(), num(*r), (i + 1).to_string(), num(*v), num(s.closed[i])]);
            }
        }
        sweeps.push(s);
    }
    let mut report = Report::new("puncture", CITE_PUNCTURE, results);
    for s in &sweeps {
        let p = s.degree;
        let mut plot = Table::new(&["radius", "removed", "max_rel_error", "distance"]);
        for i in 0..s.radii.len() {
            plot.push(vec![num(s.radii[i]), s.removed[i].to_string(), num(s.errors[i]), num(s.distances[i])]);
        }
        report.plots.push((format!("puncture_p{p}"), plot));
        let last = *s.errors.last().expect("radii");
        report.check(format!("p={p}: final eigenvalue error below tolerance"), last < tol, format!("{last:.3e} < {tol}"));
        report.check(
            format!("p={p}: eigenvalue error decreases with the radius"),
            s.errors.windows(2).all(|w| w[1] < w[0]),
            format!("{:?}", s.errors),
        );
        report.check(
            format!("p={p}: spectral distance decreases"),
            s.distances.windows(2).all(|w| w[1] < w[0]),
            format!("{:?} over {} eigenpairs", s.distances, s.span),
        );
    }
    report.metric("center_vertex", center);
    Ok(report)
}

pub fn conformal(l: &Loaded, opts: &SolverOptions, seed: u64) -> Result<Report> {
    let m = &l.manifest;
    require(&m.amplitudes, "amplitudes")?;
    require(&m.degrees, "degrees")?;
    let input = ConformalInput { complex: &l.complex, geometry: &l.geometry, weight: &l.weight, alpha: m.alpha };
    let s = conformal_sweep(&input, &m.degrees, &m.amplitudes, m.samples, seed, opts)?;
    let mut results = Table::new(&["degree", "protected", "amplitude", "floor", "base"]);
    for (d, &p) in s.degrees.iter().enumerate() {
        for (a, amp) in s.amplitudes.iter().enumerate() {
            results.push(vec![p.to_string(), s.protected[d].to_string(), num(*amp), num(s.floors[d][a]), num(s.base[d])]);
        }
    }
    let mut report = Report::new("conformal-sweep", CITE_CONFORMAL, results);
    let n = l.complex.dimension();
    for (d, &p) in s.degrees.iter().enumerate() {
        let ratios: Vec<f64> = s.floors[d].iter().map(|f| f / s.base[d]).collect();
        if s.protected[d] {
            let low = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            report.check(
                format!("p={p} (protected): mu_1 Vol^(2/n) stays bounded below"),
                low > 0.0 && low.is_finite(),
                format!("floor/base over amplitudes {ratios:?}"),
            );
        }
        report.metric(&format!("floor_ratio_p{p}"), &ratios);
    }
    report.metric(
        "protected_window",
        format!("n/2 + alpha - 1 <= p <= n/2 + alpha, p >= 1, p > alpha (n = {n}, alpha = {})", m.alpha),
    );
    report.metric(
        "protected",
        (0..=n).filter(|&p| protected_degree(n, p, m.alpha)).collect::<Vec<_>>(),
    );
    Ok(report)
}

pub fn three_forms(l: &Loaded) -> Result<Report> {
    let m = &l.manifest;
    require(&m.refinements, "refinements")?;
    let fs = factors(&l.complex)?;
    if fs.len() != 2 || fs.iter().any(|f| f.kind != FactorKind::Circle) || fs[0].length != fs[1].length {
        return Err(Error::Invalid("three-forms runs on a square torus".into()));
    }
    let length = fs[0].length;
    let mut results = Table::new(&["grid", "quantity", "degree", "value"]);
    let mut report;
    if let Some([x1, x2]) = &m.twist {
        let (a, b) = (Expr::parse(x1)?, Expr::parse(x2)?);
        let (a, b) = (&a, &b);
        let s = twisted_square_study(move |x, y| a.eval(&[x, y]), move |x, y| b.eval(&[x, y]), length, &m.refinements)?;
        for (g, (e, n)) in s.grids.iter().zip(s.errors.iter().zip(&s.norms)) {
            results.push(vec![g.to_string(), "twisted_square_error".into(), "0".into(), num(*e)]);
            results.push(vec![g.to_string(), "curl_norm".into(), "0".into(), num(*n)]);
        }
        report = Report::new("three-forms", CITE_THREE_FORMS, results);
        let order = s.orders.last().copied().unwrap_or(0.0);
        report.check("twisted square of 1 equals dX within O(h^2)", order >= 1.8, format!("orders {:?}", s.orders));
        report.check("twisted differential does not square to zero", s.norms.iter().all(|v| *v > 0.0), format!("|dX| {:?}", s.norms));
    } else {
        let e = expr_phi(l)?;
        let e = &e;
        let s = three_forms_torus(move |x, y| e.eval(&[x, y]), length, &m.refinements, m.coefficient)?;
        for (gi, g) in s.grids.iter().enumerate() {
            for p in 0..=2 {
                results.push(vec![g.to_string(), "max_difference".into(), p.to_string(), num(s.differences[p][gi])]);
                results.push(vec![g.to_string(), "unit_coefficient".into(), p.to_string(), num(s.unit_coefficient[p][gi])]);
            }
        }
        report = Report::new("three-forms", CITE_THREE_FORMS, results);
        let floor = 1e-10;
        for p in 0..=2 {
            let d = &s.differences[p];
            let ok = d.iter().all(|v| *v < floor) || s.orders[p].last().is_some_and(|o| *o >= 2.0);
            report.check(
                format!("p={p}: differences decay at order >= 2 (coefficient {})", m.coefficient),
                ok,
                format!("differences {d:?}, orders {:?}", s.orders[p]),
            );
        }
        report.metric("hessian_scale", s.hessian_scale);
        report.metric("unit_coefficient", &s.unit_coefficient);
    }
    Ok(report)
}

pub fn oracle(l: &Loaded, opts: &SolverOptions) -> Result<Report> {
    let m = &l.manifest;
    let b = operators(l)?;
    let tol = m.assert_tol.unwrap_or(1e-10);
    let mut results = Table::new(&["degree", "index", "solver", "bruteforce", "rel_diff"]);
    let mut worst: f64 = 0.0;
    let top = l.complex.dimension();
    for p in degrees(l).into_iter().filter(|&p| p < top) {
        let r = coexact_spectrum(&b, p, m.k, opts)?;
        for (i, v) in r.coexact.values.iter().enumerate() {
            let bf = minmax_bruteforce(&b, p, i + 1)?;
            let d = rel_dev(bf, *v, 1e-300);
            worst = worst.max(d);
            results.push(vec![p.to_string(), (i + 1).to_string(), num(*v), num(bf), num(d)]);
        }
    }
    let mut report = Report::new("oracle", CITE_ORACLE, results);
    report.check("brute-force min-max equals the solver", worst < tol, format!("{worst:.3e} < {tol:e}"));
    report.metric("max_rel_diff", worst);
    Ok(report)
}
