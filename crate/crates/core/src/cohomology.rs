//! Real cohomology ranks of complexes and of domains inside them.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cholesky::SparseCholesky;
use crate::complex::{Complex, DomainTag};
use crate::dense;
use crate::error::{Error, Result};
use crate::rank::{row_echelon, Echelon, PIVOT_TOL};
use crate::sparse::Csr;

/// Singular values below this fraction of the largest count as zero when
/// ranking cocycle restrictions.
pub const RESTRICTION_TOL: f64 = 1e-8;

fn incidence(complex: &Complex, p: usize) -> Option<Csr<i64>> {
    (p < complex.dimension()).then(|| complex.coboundary(p).expect("degree in range"))
}

/// b_p = n_p − rank D_p − rank D_{p−1}.
pub fn betti(complex: &Complex, p: usize) -> Result<usize> {
    let n = complex.dimension();
    if p > n {
        return Err(Error::DegreeOutOfRange { p, max: n });
    }
    let up = incidence(complex, p).map_or(0, |d| row_echelon(&d, PIVOT_TOL).rank);
    let down = if p > 0 { incidence(complex, p - 1).map_or(0, |d| row_echelon(&d, PIVOT_TOL).rank) } else { 0 };
    Ok(complex.num_cells(p) - up - down)
}

pub fn betti_numbers(complex: &Complex) -> Vec<usize> {
    (0..=complex.dimension()).map(|p| betti(complex, p).expect("degree in range")).collect()
}

/// Euclidean projector onto the column space of `d` (restricted to its
/// independent columns).
struct RangeProjector {
    cols: Csr<f64>,
    chol: SparseCholesky,
}

impl RangeProjector {
    fn new(d: &Csr<f64>, ech: &Echelon) -> Result<Option<Self>> {
        if ech.rank == 0 {
            return Ok(None);
        }
        let rows: Vec<usize> = (0..d.nrows()).collect();
        let cols = d.select(&rows, &ech.pivot_cols);
        let gram = cols.transpose().matmul(&cols);
        Ok(Some(RangeProjector { chol: SparseCholesky::factor(&gram)?, cols }))
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.cols.matvec(&self.chol.solve(&self.cols.matvec_t(x)))
    }
}

/// Orthonormal basis (unit weights) of the cocycles of `d_next` that are
/// orthogonal to the coboundaries of `d_prev`; it represents H^p.
///
/// `d_prev`: C^{p-1} → C^p, `d_next`: C^p → C^{p+1}, either may be absent.
pub fn cocycle_basis(d_prev: Option<&Csr<i64>>, d_next: Option<&Csr<i64>>, n: usize, seed: u64) -> Result<Array2<f64>> {
    let prev = d_prev.map(|d| (d.to_f64(), row_echelon(d, PIVOT_TOL)));
    let next = d_next.map(|d| (d.to_f64(), row_echelon(d, PIVOT_TOL)));
    let r_prev = prev.as_ref().map_or(0, |p| p.1.rank);
    let r_next = next.as_ref().map_or(0, |p| p.1.rank);
    let b = n
        .checked_sub(r_prev + r_next)
        .ok_or_else(|| Error::Invalid("ranks exceed the cochain dimension; is D∘D = 0?".into()))?;
    if b == 0 {
        return Ok(Array2::zeros((n, 0)));
    }
    let exact = match &prev {
        Some((d, e)) => RangeProjector::new(d, e)?,
        None => None,
    };
    // coexact part: range of D_nextᵀ restricted to independent rows
    let coexact = match &next {
        Some((d, e)) if e.rank > 0 => {
            let cols: Vec<usize> = (0..d.ncols()).collect();
            let rows = d.select(&e.pivot_rows, &cols).transpose();
            let ech = Echelon { rank: e.rank, pivot_rows: vec![], pivot_cols: (0..e.rank).collect() };
            RangeProjector::new(&rows, &ech)?
        }
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extra = 2;
    let mut samples = Array2::zeros((n, b + extra));
    for j in 0..b + extra {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut h = x;
        // the second sweep removes what the ill-conditioned Gram solves left over
        for _ in 0..2 {
            for proj in [&exact, &coexact].into_iter().flatten() {
                let px = proj.apply(&h);
                for (hi, pi) in h.iter_mut().zip(&px) {
                    *hi -= pi;
                }
            }
        }
        for i in 0..n {
            samples[[i, j]] = h[i];
        }
    }
    let (sigma, u) = dense::left_singular(&samples)?;
    let top = sigma[0];
    if sigma[b - 1] <= 1e-6 * top || sigma.get(b).is_some_and(|&s| s > 1e-8 * top) {
        return Err(Error::Invalid(format!(
            "harmonic projection has inconsistent rank (expected {b}, singular values {:?})",
            &sigma[..(b + 1).min(sigma.len())]
        )));
    }
    Ok(u.slice(ndarray::s![.., ..b]).to_owned())
}

/// Cocycle basis of the whole complex in degree p.
pub fn complex_cocycles(complex: &Complex, p: usize, seed: u64) -> Result<Array2<f64>> {
    let prev = if p > 0 { incidence(complex, p - 1) } else { None };
    let next = incidence(complex, p);
    cocycle_basis(prev.as_ref(), next.as_ref(), complex.num_cells(p), seed)
}

/// Coboundary of the closure of U from degree p to p+1.
pub fn domain_coboundary(complex: &Complex, domain: &DomainTag, p: usize) -> Result<Csr<i64>> {
    Ok(complex.coboundary(p)?.select(&domain.closure_cells(p + 1), &domain.closure_cells(p)))
}

/// b_p of the closure of U.
pub fn domain_betti(complex: &Complex, domain: &DomainTag, p: usize) -> Result<usize> {
    let n = complex.dimension();
    if p > n {
        return Err(Error::DegreeOutOfRange { p, max: n });
    }
    let up = if p < n { row_echelon(&domain_coboundary(complex, domain, p)?, PIVOT_TOL).rank } else { 0 };
    let down = if p > 0 { row_echelon(&domain_coboundary(complex, domain, p - 1)?, PIVOT_TOL).rank } else { 0 };
    Ok(domain.closure_cells(p).len() - up - down)
}

/// Rank of H^p(M) → H^p(U) induced by restricting cocycles, computed as the
/// rank of the restricted cocycle basis modulo coboundaries on U.
pub fn restriction_rank_seeded(complex: &Complex, domain: &DomainTag, p: usize, seed: u64) -> Result<usize> {
    let z = complex_cocycles(complex, p, seed)?;
    if z.ncols() == 0 {
        return Ok(0);
    }
    let cells = domain.closure_cells(p);
    let mut zu = Array2::zeros((cells.len(), z.ncols()));
    for (r, &i) in cells.iter().enumerate() {
        zu.row_mut(r).assign(&z.row(i));
    }
    if p > 0 {
        let d = domain_coboundary(complex, domain, p - 1)?;
        let ech = row_echelon(&d, PIVOT_TOL);
        if let Some(proj) = RangeProjector::new(&d.to_f64(), &ech)? {
            for j in 0..zu.ncols() {
                let col = zu.column(j).to_vec();
                let pc = proj.apply(&col);
                for r in 0..col.len() {
                    zu[[r, j]] = col[r] - pc[r];
                }
            }
        }
    }
    // columns of z have unit norm, so the threshold is absolute
    let s = dense::singular_values(&zu)?;
    Ok(s.iter().filter(|&&v| v > RESTRICTION_TOL).count())
}

pub fn restriction_rank(complex: &Complex, domain: &DomainTag, p: usize) -> Result<usize> {
    restriction_rank_seeded(complex, domain, p, 0xc0c7)
}

/// d_p = dim H^p(U/M) = b_p(U) − rank(H^p(M) → H^p(U)).
pub fn quotient_dimension(complex: &Complex, domain: &DomainTag, p: usize) -> Result<usize> {
    Ok(domain_betti(complex, domain, p)? - restriction_rank(complex, domain, p)?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeSummary {
    pub betti_m: usize,
    pub betti_u: usize,
    pub rank: usize,
    pub d: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohomologySummary {
    pub degrees: Vec<DegreeSummary>,
}

impl CohomologySummary {
    pub fn compute(complex: &Complex, domain: &DomainTag) -> Result<Self> {
        let degrees = (0..=complex.dimension())
            .map(|p| {
                let betti_m = betti(complex, p)?;
                let betti_u = domain_betti(complex, domain, p)?;
                let rank = restriction_rank(complex, domain, p)?;
                Ok(DegreeSummary { betti_m, betti_u, rank, d: betti_u - rank })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CohomologySummary { degrees })
    }

    /// `{"p": [b_M, b_U, rank, d_p], ...}`
    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<String, [usize; 4]> = self
            .degrees
            .iter()
            .enumerate()
            .map(|(p, d)| (p.to_string(), [d.betti_m, d.betti_u, d.rank, d.d]))
            .collect();
        serde_json::to_value(map).expect("plain map")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{build_simplicial, icosphere, product_grid, tag_domain, Factor};

    #[test]
    fn torus_and_sphere_betti() {
        let t = product_grid(vec![Factor::circle(5, 1.0), Factor::circle(4, 1.0)]).unwrap();
        assert_eq!(betti_numbers(&t), vec![1, 2, 1]);
        let s: Complex = icosphere(2).unwrap().into();
        assert_eq!(betti_numbers(&s), vec![1, 0, 1]);
        let c = build_simplicial(vec![vec![0.0], vec![1.0], vec![2.0]], &[vec![0, 1], vec![1, 2], vec![0, 2]]).unwrap();
        assert_eq!(betti_numbers(&c), vec![1, 1]);
    }

    #[test]
    fn cocycles_are_closed_and_orthogonal_to_exact() {
        let t = product_grid(vec![Factor::circle(6, 1.0), Factor::circle(5, 1.0)]).unwrap();
        let z = complex_cocycles(&t, 1, 3).unwrap();
        assert_eq!(z.ncols(), 2);
        let d1 = t.coboundary(1).unwrap().to_f64();
        let d0 = t.coboundary(0).unwrap().to_f64();
        for j in 0..2 {
            let col = z.column(j).to_vec();
            assert!(d1.matvec(&col).iter().all(|v| v.abs() < 1e-12));
            assert!(d0.matvec_t(&col).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn torus_annulus_restriction() {
        let t = product_grid(vec![Factor::circle(8, 1.0), Factor::circle(8, 1.0)]).unwrap();
        let tc = t.as_tensor().unwrap().clone();
        // left half in the first coordinate: an annulus around the second circle
        let u = tag_domain(&t, |i| tc.cell(2, i)[0].1 < 4).unwrap();
        assert_eq!(domain_betti(&t, &u, 1).unwrap(), 1);
        assert_eq!(restriction_rank(&t, &u, 1).unwrap(), 1);
        assert_eq!(quotient_dimension(&t, &u, 1).unwrap(), 0);
    }
}
