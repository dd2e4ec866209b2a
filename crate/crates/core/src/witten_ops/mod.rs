//! Witten operators in the twisted and the weighted gauge.
//!
//! Weighted gauge: plain coboundary `D_p`, masses carrying `e^{-2φ}`.
//! Twisted gauge: `D̃_p = e^{-φ} D_p e^{φ}` with unweighted masses. With
//! lumped masses the two pencils are diagonally congruent, so their spectra
//! agree exactly and eigenvectors map by `e^{-φ}`.

mod geometry;

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::complex::Complex;
use crate::error::{Error, Result};
use crate::sparse::{dot, Csr};

pub use geometry::{simplex_volume, CellField, Geometry, LocalBlock, WeightField};

/// Largest |φ| accepted before exponentials are considered unsafe.
pub const PHI_GUARD: f64 = 300.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MassScheme {
    #[default]
    Lumped,
    Consistent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Gauge {
    Twisted,
    #[default]
    Weighted,
}

/// Mass matrix of one degree: diagonal (lumped) or sparse SPD (consistent).
#[derive(Clone, Debug, PartialEq)]
pub enum Mass {
    Diagonal(Vec<f64>),
    Sparse(Csr<f64>),
}

impl Mass {
    pub fn len(&self) -> usize {
        match self {
            Mass::Diagonal(d) => d.len(),
            Mass::Sparse(m) => m.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn diagonal(&self) -> Option<&[f64]> {
        match self {
            Mass::Diagonal(d) => Some(d),
            Mass::Sparse(_) => None,
        }
    }

    /// Diagonal entries in either representation.
    pub fn diag_entries(&self) -> Vec<f64> {
        match self {
            Mass::Diagonal(d) => d.clone(),
            Mass::Sparse(m) => m.diagonal(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Mass::Diagonal(d) => d.iter().zip(x).map(|(a, b)| a * b).collect(),
            Mass::Sparse(m) => m.matvec(x),
        }
    }

    /// `M X` for a block of column vectors.
    pub fn apply_dense(&self, x: &Array2<f64>) -> Array2<f64> {
        match self {
            Mass::Diagonal(d) => {
                let mut out = x.clone();
                for (mut row, &di) in out.rows_mut().into_iter().zip(d) {
                    row *= di;
                }
                out
            }
            Mass::Sparse(m) => m.matmul_dense(x),
        }
    }

    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Mass::Diagonal(d) => d.iter().zip(x).zip(y).map(|((a, b), c)| a * b * c).sum(),
            Mass::Sparse(m) => dot(&m.matvec(x), y),
        }
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }

    pub fn to_csr(&self) -> Csr<f64> {
        match self {
            Mass::Diagonal(d) => Csr::diag(d),
            Mass::Sparse(m) => m.clone(),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.to_csr().to_dense()
    }

    /// Principal submatrix on `idx`.
    pub fn select(&self, idx: &[usize]) -> Mass {
        match self {
            Mass::Diagonal(d) => Mass::Diagonal(idx.iter().map(|&i| d[i]).collect()),
            Mass::Sparse(m) => Mass::Sparse(m.select(idx, idx)),
        }
    }

    /// `diag(s) M diag(s)`.
    pub fn congruence(&self, s: &[f64]) -> Mass {
        match self {
            Mass::Diagonal(d) => Mass::Diagonal(d.iter().zip(s).map(|(a, b)| a * b * b).collect()),
            Mass::Sparse(m) => Mass::Sparse(m.scale_rows_cols(Some(s), Some(s))),
        }
    }
}

fn check_guard(weight: &WeightField) -> Result<()> {
    let m = weight.max_abs();
    if m > PHI_GUARD || !m.is_finite() {
        return Err(Error::Overflow { value: m });
    }
    Ok(())
}

fn check_fields(complex: &Complex, geometry: &Geometry, weight: &WeightField) -> Result<()> {
    let n = complex.dimension();
    if geometry.dimension() != n || weight.dimension() != n {
        return Err(Error::Invalid("geometry, weight and complex dimensions differ".into()));
    }
    for p in 0..=n {
        if geometry.volumes(p).len() != complex.num_cells(p) || weight.degree(p).len() != complex.num_cells(p) {
            return Err(Error::Invalid(format!("field sizes do not match the complex in degree {p}")));
        }
    }
    Ok(())
}

/// Mass matrix `M_p^φ`, optionally restricted to the flagged top cells (cells
/// outside their closure get no contribution and must be dropped by the caller).
pub fn assemble_mass_on(
    complex: &Complex,
    geometry: &Geometry,
    weight: &WeightField,
    p: usize,
    scheme: MassScheme,
    tops: Option<&[bool]>,
) -> Result<Mass> {
    let n = complex.dimension();
    if p > n {
        return Err(Error::DegreeOutOfRange { p, max: n });
    }
    check_fields(complex, geometry, weight)?;
    let expo = (n as f64) - 2.0 * p as f64;
    match scheme {
        MassScheme::Lumped => {
            let dual = geometry.dual_measure(p, tops);
            let vols = geometry.volumes(p);
            let u = geometry.conformal().degree(p);
            let phi = weight.degree(p);
            let entries: Vec<f64> = (0..dual.len())
                .map(|i| dual[i] / vols[i] * (-2.0 * phi[i]).exp() * (expo * u[i]).exp())
                .collect();
            if tops.is_none() {
                if let Some((i, v)) = entries.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
                    return Err(Error::Invalid(format!("non-positive mass entry {v} on {p}-cell {i}")));
                }
            }
            Ok(Mass::Diagonal(entries))
        }
        MassScheme::Consistent => {
            let mut trips = Vec::new();
            for t in 0..geometry.num_top() {
                if tops.is_some_and(|f| !f[t]) {
                    continue;
                }
                let w = (-2.0 * weight.get(n, t)).exp() * (expo * geometry.conformal().get(n, t)).exp();
                let block = geometry.whitney_block(t, p);
                let k = block.cells.len();
                for r in 0..k {
                    for c in 0..k {
                        trips.push((block.cells[r], block.cells[c], w * block.matrix[r * k + c]));
                    }
                }
            }
            let m = Csr::from_triplets(complex.num_cells(p), complex.num_cells(p), trips);
            if tops.is_none() {
                if let Some((i, v)) = m.diagonal().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                    return Err(Error::Invalid(format!("non-positive mass entry {v} on {p}-cell {i}")));
                }
            }
            Ok(Mass::Sparse(m))
        }
    }
}

pub fn assemble_mass(
    complex: &Complex,
    geometry: &Geometry,
    weight: &WeightField,
    p: usize,
    scheme: MassScheme,
) -> Result<Mass> {
    assemble_mass_on(complex, geometry, weight, p, scheme, None)
}

/// Real coboundary `D_p`.
pub fn coboundary(complex: &Complex, p: usize) -> Result<Csr<f64>> {
    Ok(complex.coboundary(p)?.to_f64())
}

/// `D̃_p = diag(e^{-φ(τ)}) D_p diag(e^{φ(σ)})`.
pub fn twisted_coboundary(d: &Csr<f64>, phi_p: &[f64], phi_next: &[f64]) -> Result<Csr<f64>> {
    if phi_p.len() != d.ncols() || phi_next.len() != d.nrows() {
        return Err(Error::Invalid("weight samples do not match the coboundary shape".into()));
    }
    let worst = phi_p.iter().chain(phi_next).fold(0.0f64, |m, v| m.max(v.abs()));
    if worst > PHI_GUARD || !worst.is_finite() {
        return Err(Error::Overflow { value: worst });
    }
    let left: Vec<f64> = phi_next.iter().map(|v| (-v).exp()).collect();
    let right: Vec<f64> = phi_p.iter().map(|v| v.exp()).collect();
    Ok(d.scale_rows_cols(Some(&left), Some(&right)))
}

/// `A_p = D_pᵀ M_{p+1} D_p`.
pub fn up_stiffness(d: &Csr<f64>, m_next: &Mass) -> Csr<f64> {
    let md = match m_next {
        Mass::Diagonal(w) => d.scale_rows_cols(Some(w), None),
        Mass::Sparse(m) => m.matmul(d),
    };
    d.transpose().matmul(&md)
}

/// Moves `(geometry, weight)` inside its weighted conformal class:
/// `g → e^{2u} g`, `φ → φ − α u`.
pub fn conformal_rescale(geometry: &Geometry, weight: &WeightField, u: &CellField, alpha: f64) -> (Geometry, WeightField) {
    (geometry.with_conformal(geometry.conformal().add_scaled(1.0, u)), weight.add_scaled(-alpha, u))
}

/// Exponent `r = n / (p − α)` for which the weighted r-norm of p-forms is
/// invariant in the class `[g, φ]_α`.
pub fn conformal_invariant_exponent(n: usize, p: usize, alpha: f64) -> Result<f64> {
    let denom = p as f64 - alpha;
    if !(denom > 0.0) {
        return Err(Error::Invalid(format!("no invariant exponent: p - alpha = {denom} is not positive")));
    }
    let r = n as f64 / denom;
    if !(r > 1.0) {
        return Err(Error::Invalid(format!("invariant exponent r = {r} is not above 1")));
    }
    Ok(r)
}

/// `(Σ_σ |ω(σ)/vol(σ)|^r e^{-rφ(σ)} vol(σ) dual(σ) e^{(n - r p) u(σ)})^{1/r}`.
pub fn weighted_r_norm(cochain: &[f64], r: f64, geometry: &Geometry, weight: &WeightField, p: usize) -> Result<f64> {
    if !(r > 1.0) {
        return Err(Error::Invalid(format!("r-norm needs r > 1, got {r}")));
    }
    let n = geometry.dimension();
    if p > n || cochain.len() != geometry.volumes(p).len() {
        return Err(Error::Invalid("cochain does not match the degree".into()));
    }
    let vols = geometry.volumes(p);
    let dual = geometry.dual_measure(p, None);
    let u = geometry.conformal().degree(p);
    let phi = weight.degree(p);
    let s: f64 = (0..cochain.len())
        .map(|i| {
            (cochain[i] / vols[i]).abs().powf(r)
                * (-r * phi[i]).exp()
                * vols[i]
                * dual[i]
                * ((n as f64 - r * p as f64) * u[i]).exp()
        })
        .sum();
    Ok(s.powf(1.0 / r))
}

/// Coboundaries, masses and stiffness matrices for every degree of one complex.
#[derive(Clone, Debug)]
pub struct OperatorBundle {
    gauge: Gauge,
    scheme: MassScheme,
    incidence: Vec<Csr<i64>>,
    coboundary: Vec<Csr<f64>>,
    mass: Vec<Mass>,
    stiffness: Vec<Csr<f64>>,
    /// e^{φ} per degree in the twisted gauge, ones otherwise
    twist: Vec<Vec<f64>>,
}

impl OperatorBundle {
    pub fn assemble(
        complex: &Complex,
        geometry: &Geometry,
        weight: &WeightField,
        gauge: Gauge,
        scheme: MassScheme,
    ) -> Result<Self> {
        let n = complex.dimension();
        let all: Vec<Vec<usize>> = (0..=n).map(|p| (0..complex.num_cells(p)).collect()).collect();
        Self::assemble_restricted(complex, geometry, weight, gauge, scheme, &all, None)
    }

    /// Bundle on a subcomplex: `cells[p]` lists the kept p-cells and masses
    /// only integrate over the flagged top cells.
    pub fn assemble_restricted(
        complex: &Complex,
        geometry: &Geometry,
        weight: &WeightField,
        gauge: Gauge,
        scheme: MassScheme,
        cells: &[Vec<usize>],
        tops: Option<&[bool]>,
    ) -> Result<Self> {
        let n = complex.dimension();
        check_fields(complex, geometry, weight)?;
        check_guard(weight)?;
        let mass_weight = match gauge {
            Gauge::Weighted => weight.clone(),
            Gauge::Twisted => weight.scaled(0.0),
        };
        let mut mass = Vec::with_capacity(n + 1);
        for p in 0..=n {
            let m = assemble_mass_on(complex, geometry, &mass_weight, p, scheme, tops)?.select(&cells[p]);
            if let Some((i, v)) = m.diag_entries().iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
                return Err(Error::Invalid(format!("non-positive mass entry {v} on kept {p}-cell {i}")));
            }
            mass.push(m);
        }
        let twist: Vec<Vec<f64>> = (0..=n)
            .map(|p| match gauge {
                Gauge::Weighted => vec![1.0; cells[p].len()],
                Gauge::Twisted => cells[p].iter().map(|&i| weight.get(p, i).exp()).collect(),
            })
            .collect();
        let mut incidence = Vec::with_capacity(n);
        let mut cob = Vec::with_capacity(n);
        for p in 0..n {
            let d = complex.coboundary(p)?.select(&cells[p + 1], &cells[p]);
            let real = match gauge {
                Gauge::Weighted => d.to_f64(),
                Gauge::Twisted => {
                    let phi_p: Vec<f64> = cells[p].iter().map(|&i| weight.get(p, i)).collect();
                    let phi_n: Vec<f64> = cells[p + 1].iter().map(|&i| weight.get(p + 1, i)).collect();
                    twisted_coboundary(&d.to_f64(), &phi_p, &phi_n)?
                }
            };
            incidence.push(d);
            cob.push(real);
        }
        Ok(Self::from_parts(gauge, scheme, incidence, cob, mass, twist))
    }

    /// Bundle from explicit parts; stiffness matrices are derived.
    pub fn from_parts(
        gauge: Gauge,
        scheme: MassScheme,
        incidence: Vec<Csr<i64>>,
        coboundary: Vec<Csr<f64>>,
        mass: Vec<Mass>,
        twist: Vec<Vec<f64>>,
    ) -> Self {
        let n = coboundary.len();
        let mut stiffness: Vec<Csr<f64>> = (0..n).map(|p| up_stiffness(&coboundary[p], &mass[p + 1])).collect();
        stiffness.push(Csr::zeros(mass[n].len(), mass[n].len()));
        OperatorBundle { gauge, scheme, incidence, coboundary, mass, stiffness, twist }
    }

    pub fn dimension(&self) -> usize {
        self.coboundary.len()
    }

    pub fn gauge(&self) -> Gauge {
        self.gauge
    }

    pub fn scheme(&self) -> MassScheme {
        self.scheme
    }

    pub fn size(&self, p: usize) -> usize {
        self.mass[p].len()
    }

    /// Integer incidence `D_p` (untwisted).
    pub fn incidence(&self, p: usize) -> &Csr<i64> {
        &self.incidence[p]
    }

    /// Real coboundary used by the pencil (`D̃_p` in the twisted gauge).
    pub fn coboundary(&self, p: usize) -> &Csr<f64> {
        &self.coboundary[p]
    }

    pub fn mass(&self, p: usize) -> &Mass {
        &self.mass[p]
    }

    pub fn stiffness(&self, p: usize) -> &Csr<f64> {
        &self.stiffness[p]
    }

    pub fn twist(&self, p: usize) -> &[f64] {
        &self.twist[p]
    }

    pub fn write_matrix_market(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for p in 0..=self.dimension() {
            let f = std::fs::File::create(dir.join(format!("mass_{p}.mtx")))?;
            self.mass[p].to_csr().write_matrix_market(std::io::BufWriter::new(f))?;
            let f = std::fs::File::create(dir.join(format!("stiffness_{p}.mtx")))?;
            self.stiffness[p].write_matrix_market(std::io::BufWriter::new(f))?;
            if p < self.dimension() {
                let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("coboundary_{p}.mtx")))?);
                self.coboundary[p].write_matrix_market(&mut f)?;
                f.flush()?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{build_simplicial, TensorComplex};

    #[test]
    fn circle_vertex_mass_is_segment_length() {
        let c: Complex = TensorComplex::circle(10, 3.0).unwrap().into();
        let g = Geometry::from_complex(&c).unwrap();
        let m = assemble_mass(&c, &g, &CellField::zeros(&c), 0, MassScheme::Lumped).unwrap();
        assert!(m.diagonal().unwrap().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        let m1 = assemble_mass(&c, &g, &CellField::zeros(&c), 1, MassScheme::Lumped).unwrap();
        assert!(m1.diagonal().unwrap().iter().all(|&v| (v - 1.0 / 0.3).abs() < 1e-12));
    }

    #[test]
    fn twisted_edge_formula() {
        let c = build_simplicial(vec![vec![0.0], vec![1.0]], &[vec![0, 1]]).unwrap();
        let w = CellField::from_vertices(&c, &[0.3, -0.7]).unwrap();
        let d = coboundary(&c, 0).unwrap();
        let dt = twisted_coboundary(&d, w.degree(0), w.degree(1)).unwrap();
        let f = [2.0, 5.0];
        let got = dt.matvec(&f)[0];
        let pe = w.get(1, 0);
        let want = (-pe).exp() * (0.3f64.exp() * 0.0 + (-0.7f64).exp() * 5.0 - 0.3f64.exp() * 2.0);
        assert!((got - want).abs() < 1e-14);
        let big = CellField::constant(&c, 301.0);
        assert!(matches!(twisted_coboundary(&d, big.degree(0), big.degree(1)), Err(Error::Overflow { .. })));
    }

    #[test]
    fn invariant_exponent_errors() {
        assert!(conformal_invariant_exponent(3, 1, 1.0).is_err());
        assert_eq!(conformal_invariant_exponent(3, 1, 0.5).unwrap(), 6.0);
        assert_eq!(conformal_invariant_exponent(2, 1, 0.0).unwrap(), 2.0);
    }
}
