use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::Csr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorKind {
    Circle,
    Interval,
}

/// Uniform 1-dimensional factor: a cycle of `cells` edges or a path of `cells` edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub kind: FactorKind,
    pub cells: usize,
    pub length: f64,
}

impl Factor {
    pub fn circle(cells: usize, length: f64) -> Self {
        Factor { kind: FactorKind::Circle, cells, length }
    }

    pub fn interval(cells: usize, length: f64) -> Self {
        Factor { kind: FactorKind::Interval, cells, length }
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.cells as f64
    }

    pub fn num_vertices(&self) -> usize {
        match self.kind {
            FactorKind::Circle => self.cells,
            FactorKind::Interval => self.cells + 1,
        }
    }

    pub fn count(&self, deg: usize) -> usize {
        if deg == 0 {
            self.num_vertices()
        } else {
            self.cells
        }
    }

    /// Endpoints (tail, head) of edge `e`.
    pub fn edge(&self, e: usize) -> (usize, usize) {
        match self.kind {
            FactorKind::Circle => (e, (e + 1) % self.cells),
            FactorKind::Interval => (e, e + 1),
        }
    }

    /// Edges incident to vertex `v` with coboundary sign (+1 at the head).
    fn star(&self, v: usize) -> Vec<(usize, i64)> {
        let n = self.cells;
        match self.kind {
            FactorKind::Circle => vec![((v + n - 1) % n, 1), (v, -1)],
            FactorKind::Interval => {
                let mut out = Vec::with_capacity(2);
                if v > 0 {
                    out.push((v - 1, 1));
                }
                if v < n {
                    out.push((v, -1));
                }
                out
            }
        }
    }

    pub fn vertex_coord(&self, v: usize) -> f64 {
        v as f64 * self.spacing()
    }

    /// Coordinate difference, periodic on circles.
    pub fn delta(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        match self.kind {
            FactorKind::Circle => d.min(self.length - d),
            FactorKind::Interval => d,
        }
    }
}

/// A factor cell: degree 0 (vertex) or 1 (edge) with its index.
pub type FactorCell = (usize, usize);

/// Product of 1-dimensional factors with graded cells.
#[derive(Clone, Debug)]
pub struct TensorComplex {
    factors: Vec<Factor>,
    /// per total degree: ordered list of degree patterns and their offsets
    patterns: Vec<Vec<(Vec<usize>, usize)>>,
    counts: Vec<usize>,
}

impl TensorComplex {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Invalid("product needs at least one factor".into()));
        }
        for f in &factors {
            match f.kind {
                FactorKind::Circle if f.cells < 3 => {
                    return Err(Error::Invalid(format!("circle factor needs at least 3 cells, got {}", f.cells)))
                }
                FactorKind::Interval if f.cells < 1 => {
                    return Err(Error::Invalid("interval factor needs at least 1 cell".into()))
                }
                _ => {}
            }
            if !(f.length > 0.0) || !f.length.is_finite() {
                return Err(Error::Invalid(format!("factor length must be positive, got {}", f.length)));
            }
        }
        let n = factors.len();
        let mut patterns = vec![Vec::new(); n + 1];
        let mut counts = vec![0; n + 1];
        // lexicographic over {0,1}^n
        for code in 0..(1usize << n) {
            let pat: Vec<usize> = (0..n).map(|f| (code >> (n - 1 - f)) & 1).collect();
            let q: usize = pat.iter().sum();
            let size: usize = pat.iter().zip(&factors).map(|(&d, f)| f.count(d)).product();
            patterns[q].push((pat, counts[q]));
            counts[q] += size;
        }
        Ok(TensorComplex { factors, patterns, counts })
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn dimension(&self) -> usize {
        self.factors.len()
    }

    pub fn num_cells(&self, q: usize) -> usize {
        self.counts.get(q).copied().unwrap_or(0)
    }

    pub fn num_vertices(&self) -> usize {
        self.num_cells(0)
    }

    /// Global index of a tuple of factor cells.
    pub fn index_of(&self, cell: &[FactorCell]) -> usize {
        let q: usize = cell.iter().map(|c| c.0).sum();
        let pat: Vec<usize> = cell.iter().map(|c| c.0).collect();
        let offset = self.patterns[q].iter().find(|(p, _)| *p == pat).expect("valid pattern").1;
        let mut idx = 0;
        for (c, f) in cell.iter().zip(&self.factors) {
            idx = idx * f.count(c.0) + c.1;
        }
        offset + idx
    }

    /// Factor cells of the global cell `i` in degree `q`.
    pub fn cell(&self, q: usize, i: usize) -> Vec<FactorCell> {
        let (pat, offset) = self.patterns[q]
            .iter()
            .rev()
            .find(|(_, off)| *off <= i)
            .expect("index in range");
        let mut rem = i - offset;
        let mut out = vec![(0, 0); self.factors.len()];
        for f in (0..self.factors.len()).rev() {
            let c = self.factors[f].count(pat[f]);
            out[f] = (pat[f], rem % c);
            rem /= c;
        }
        out
    }

    pub fn cell_vertices(&self, q: usize, i: usize) -> Vec<usize> {
        let cell = self.cell(q, i);
        let mut verts: Vec<Vec<FactorCell>> = vec![Vec::new()];
        for (c, f) in cell.iter().zip(&self.factors) {
            let options: Vec<usize> = if c.0 == 0 {
                vec![c.1]
            } else {
                let (a, b) = f.edge(c.1);
                vec![a, b]
            };
            verts = verts
                .into_iter()
                .flat_map(|prefix| {
                    options.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push((0, v));
                        p
                    })
                })
                .collect();
        }
        verts.iter().map(|v| self.index_of(v)).collect()
    }

    pub fn vertex_coords(&self, v: usize) -> Vec<f64> {
        self.cell(0, v).iter().zip(&self.factors).map(|(c, f)| f.vertex_coord(c.1)).collect()
    }

    /// Coboundary D_q from degree q to q+1, graded Leibniz across factors.
    pub fn coboundary(&self, q: usize) -> Result<Csr<i64>> {
        let n = self.dimension();
        if q >= n {
            return Err(Error::DegreeOutOfRange { p: q, max: n.saturating_sub(1) });
        }
        let mut trips = Vec::new();
        for i in 0..self.num_cells(q) {
            let cell = self.cell(q, i);
            let mut left_degree = 0;
            for (f, &(d, idx)) in cell.iter().enumerate() {
                if d == 0 {
                    let sign = if left_degree % 2 == 0 { 1 } else { -1 };
                    for (e, s) in self.factors[f].star(idx) {
                        let mut target = cell.clone();
                        target[f] = (1, e);
                        trips.push((self.index_of(&target), i, sign * s));
                    }
                }
                left_degree += d;
            }
        }
        Ok(Csr::from_triplets(self.num_cells(q + 1), self.num_cells(q), trips))
    }

    /// Faces of top cell `t` in degree `q` as (per-factor local cell, global index).
    /// Local factor cells: 0 = tail vertex, 1 = head vertex, 2 = the edge.
    pub fn top_faces(&self, t: usize, q: usize) -> Vec<(Vec<u8>, usize)> {
        let n = self.dimension();
        let top = self.cell(n, t);
        let mut out = Vec::new();
        for code in 0..3usize.pow(n as u32) {
            let mut local = vec![0u8; n];
            let mut c = code;
            for f in (0..n).rev() {
                local[f] = (c % 3) as u8;
                c /= 3;
            }
            let deg = local.iter().filter(|&&l| l == 2).count();
            if deg != q {
                continue;
            }
            let cell: Vec<FactorCell> = local
                .iter()
                .zip(&top)
                .zip(&self.factors)
                .map(|((&l, &(_, e)), f)| {
                    let (a, b) = f.edge(e);
                    match l {
                        0 => (0, a),
                        1 => (0, b),
                        _ => (1, e),
                    }
                })
                .collect();
            out.push((local, self.index_of(&cell)));
        }
        out
    }

    pub fn circle(cells: usize, length: f64) -> Result<Self> {
        Self::new(vec![Factor::circle(cells, length)])
    }

    pub fn interval(cells: usize, length: f64) -> Result<Self> {
        Self::new(vec![Factor::interval(cells, length)])
    }

    pub fn torus(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        Self::new(vec![Factor::circle(nx, lx), Factor::circle(ny, ly)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_convolve() {
        let t = TensorComplex::torus(4, 4, 1.0, 1.0).unwrap();
        assert_eq!((0..=2).map(|q| t.num_cells(q)).collect::<Vec<_>>(), vec![16, 32, 16]);
        let c = TensorComplex::circle(7, 1.0).unwrap();
        assert_eq!((c.num_cells(0), c.num_cells(1)), (7, 7));
        assert!(TensorComplex::circle(2, 1.0).is_err());
    }

    #[test]
    fn cell_roundtrip() {
        let t = TensorComplex::new(vec![Factor::circle(5, 1.0), Factor::interval(3, 2.0)]).unwrap();
        for q in 0..=2 {
            for i in 0..t.num_cells(q) {
                assert_eq!(t.index_of(&t.cell(q, i)), i);
            }
        }
    }
}
