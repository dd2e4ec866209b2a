//! Deformation families: collapse of the complement of a domain, its
//! smoothed approximations, and puncturing by a small ball.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::complex::{Complex, DomainTag};
use crate::error::{Error, Result};
use crate::witten_ops::{conformal_rescale, CellField, Geometry, WeightField, PHI_GUARD};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Collapse,
    SmoothCollapse,
    Puncture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationParams {
    pub kind: FamilyKind,
    pub epsilon: f64,
    #[serde(default)]
    pub alpha: f64,
    /// Smoothing index, smooth-collapse only.
    #[serde(default)]
    pub j: Option<usize>,
    /// Puncture center (vertex id).
    #[serde(default)]
    pub center: Option<usize>,
}

impl DeformationParams {
    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        if !(self.alpha >= 0.0) {
            return Err(Error::Invalid(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        match self.kind {
            FamilyKind::SmoothCollapse if self.j.is_none_or(|j| j == 0) => {
                Err(Error::Invalid("smooth-collapse needs a smoothing index j ≥ 1".into()))
            }
            FamilyKind::Puncture if self.center.is_none() => Err(Error::Invalid("puncture needs a center vertex".into())),
            _ => Ok(()),
        }
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Invalid(format!("epsilon must lie in (0, 1], got {eps}")));
    }
    Ok(())
}

fn check_guard(weight: &WeightField) -> Result<()> {
    let m = weight.max_abs();
    if m > PHI_GUARD || !m.is_finite() {
        return Err(Error::Overflow { value: m });
    }
    Ok(())
}

/// Log-factor `ln ε` on every cell outside the closure of U, 0 on it.
pub fn collapse_factor(complex: &Complex, domain: &DomainTag, eps: f64) -> CellField {
    let le = eps.ln();
    let values = (0..=complex.dimension())
        .map(|p| (0..complex.num_cells(p)).map(|i| if domain.in_closure(p, i) { 0.0 } else { le }).collect())
        .collect();
    CellField::from_values(values)
}

/// `(ε² g, φ − α ln ε)` off the closure of U, unchanged on it.
pub fn collapse_family(
    complex: &Complex,
    geometry: &Geometry,
    weight: &WeightField,
    domain: &DomainTag,
    eps: f64,
    alpha: f64,
) -> Result<(Geometry, WeightField)> {
    check_epsilon(eps)?;
    let u = collapse_factor(complex, domain, eps);
    let (g, w) = conformal_rescale(geometry, weight, &u, alpha);
    check_guard(&w)?;
    Ok((g, w))
}

/// Hop distance of every vertex to the vertices of the closure of U.
pub fn vertex_distance_to_domain(complex: &Complex, domain: &DomainTag) -> Vec<usize> {
    let nv = complex.num_cells(0);
    let mut adj = vec![Vec::new(); nv];
    if complex.dimension() > 0 {
        for e in 0..complex.num_cells(1) {
            let vs = complex.cell_vertices(1, e);
            adj[vs[0]].push(vs[1]);
            adj[vs[1]].push(vs[0]);
        }
    }
    let mut dist = vec![usize::MAX; nv];
    let mut queue = VecDeque::new();
    for v in domain.closure_cells(0) {
        dist[v] = 0;
        queue.push_back(v);
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Smoothing profile `f_j = ε + (1 − ε) max(0, 1 − j d)`, where `d` is the
/// hop distance to U normalized by its maximum and averaged over the
/// vertices of each cell. Cells of the closure of U keep `f = 1`.
pub fn smoothing_profile(complex: &Complex, domain: &DomainTag, eps: f64, j: usize) -> Result<CellField> {
    check_epsilon(eps)?;
    if j == 0 {
        return Err(Error::Invalid("smoothing index starts at 1".into()));
    }
    let dist = vertex_distance_to_domain(complex, domain);
    let reach = dist.iter().filter(|&&d| d != usize::MAX).max().copied().unwrap_or(0).max(1) as f64;
    let values = (0..=complex.dimension())
        .map(|p| {
            (0..complex.num_cells(p))
                .map(|i| {
                    if domain.in_closure(p, i) {
                        return 1.0;
                    }
                    let vs = complex.cell_vertices(p, i);
                    let d = vs.iter().map(|&v| dist[v].min(reach as usize) as f64).sum::<f64>() / (vs.len() as f64 * reach);
                    eps + (1.0 - eps) * (1.0 - j as f64 * d).max(0.0)
                })
                .collect()
        })
        .collect();
    Ok(CellField::from_values(values))
}

/// `(f_j² g, φ − α ln f_j)` for the smoothing profile above.
pub fn smoothing_sequence(
    complex: &Complex,
    geometry: &Geometry,
    weight: &WeightField,
    domain: &DomainTag,
    eps: f64,
    alpha: f64,
    j: usize,
) -> Result<(Geometry, WeightField)> {
    let f = smoothing_profile(complex, domain, eps, j)?;
    let u = CellField::from_values((0..=complex.dimension()).map(|p| f.degree(p).iter().map(|v| v.ln()).collect()).collect());
    let (g, w) = conformal_rescale(geometry, weight, &u, alpha);
    check_guard(&w)?;
    Ok((g, w))
}

/// Result of removing a small ball around a vertex.
#[derive(Clone, Debug)]
pub struct Puncture {
    /// Complement of the ball, meant for the absolute condition.
    pub domain: DomainTag,
    /// Weight constant on the ball, blended back to φ at twice the radius.
    pub weight: WeightField,
    /// Number of removed top cells.
    pub removed: usize,
}

/// Removes every top cell with a vertex within distance `eps` of `center`
/// (so at least the star of the center) and flattens φ around it.
pub fn puncture_family(complex: &Complex, weight: &WeightField, center: usize, eps: f64) -> Result<Puncture> {
    if center >= complex.num_cells(0) {
        return Err(Error::Invalid(format!("center vertex {center} out of range")));
    }
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("puncture radius must be positive, got {eps}")));
    }
    let n = complex.dimension();
    let r: Vec<f64> = (0..complex.num_cells(0)).map(|v| complex.vertex_distance(center, v)).collect();
    let keep: Vec<bool> = (0..complex.num_top())
        .map(|t| complex.cell_vertices(n, t).iter().all(|&v| r[v] > eps))
        .collect();
    let removed = keep.iter().filter(|k| !**k).count();
    if removed == keep.len() {
        return Err(Error::Invalid(format!("a ball of radius {eps} swallows the whole complex")));
    }
    let domain = DomainTag::from_flags(complex, keep)?;
    let phi0 = weight.get(0, center);
    let blend = |v: usize| -> f64 {
        let t = ((r[v] - eps) / eps).clamp(0.0, 1.0);
        phi0 * (1.0 - t) + weight.get(0, v) * t
    };
    let mut w = weight.clone();
    for p in 0..=n {
        for i in 0..complex.num_cells(p) {
            let vs = complex.cell_vertices(p, i);
            if vs.iter().any(|&v| r[v] < 2.0 * eps) {
                w.degree_mut(p)[i] = vs.iter().map(|&v| blend(v)).sum::<f64>() / vs.len() as f64;
            }
        }
    }
    Ok(Puncture { domain, weight: w, removed })
}

/// Sweep description consumed by the command line runner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub family: FamilyKind,
    #[serde(default)]
    pub alpha: f64,
    pub epsilons: Vec<f64>,
    pub degrees: Vec<usize>,
    pub k: usize,
    /// Smoothing indices for smooth-collapse sweeps.
    #[serde(default)]
    pub smoothing: Vec<usize>,
}

impl SweepManifest {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() || self.degrees.is_empty() {
            return Err(Error::Invalid("sweep lists must be nonempty".into()));
        }
        if self.family == FamilyKind::SmoothCollapse && self.smoothing.is_empty() {
            return Err(Error::Invalid("smooth-collapse sweeps need smoothing indices".into()));
        }
        self.epsilons.iter().try_for_each(|&e| check_epsilon(e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{product_grid, tag_domain, Factor};

    fn torus() -> Complex {
        product_grid(vec![Factor::circle(8, 1.0), Factor::circle(8, 1.0)]).unwrap()
    }

    #[test]
    fn smoothing_is_monotone_and_tends_to_collapse() {
        let c = torus();
        let tc = c.as_tensor().unwrap().clone();
        let u = tag_domain(&c, |i| tc.cell(2, i)[0].1 < 4).unwrap();
        let collapse = collapse_factor(&c, &u, 0.1);
        let mut prev = smoothing_profile(&c, &u, 0.1, 1).unwrap();
        for j in 2..40 {
            let f = smoothing_profile(&c, &u, 0.1, j).unwrap();
            for p in 0..=2 {
                for (a, b) in f.degree(p).iter().zip(prev.degree(p)) {
                    assert!(*a <= *b && *a >= 0.1);
                }
            }
            prev = f;
        }
        for p in 0..=2 {
            for (i, (a, b)) in prev.degree(p).iter().zip(collapse.degree(p)).enumerate() {
                if c.cell_vertices(p, i).iter().all(|&v| !u.in_closure(0, v)) {
                    assert!((a.ln() - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn tiny_puncture_removes_the_star() {
        let c = torus();
        let w = CellField::from_fn(&c, |x| x[0]).unwrap();
        let p = puncture_family(&c, &w, 9, 1e-3).unwrap();
        assert_eq!(p.removed, 4);
        assert_eq!(p.weight.get(0, 9), w.get(0, 9));
    }
}
