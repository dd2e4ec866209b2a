//! Cell complexes: simplicial meshes and products of circles and intervals.

mod meshes;
mod simplicial;
mod tensor;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::Csr;

pub use meshes::{icosphere, jittered_disk, triangulated_torus};
pub use simplicial::SimplicialComplex;
pub use tensor::{Factor, FactorCell, FactorKind, TensorComplex};

#[derive(Clone, Debug)]
pub enum Complex {
    Simplicial(SimplicialComplex),
    Tensor(TensorComplex),
}

impl From<SimplicialComplex> for Complex {
    fn from(s: SimplicialComplex) -> Self {
        Complex::Simplicial(s)
    }
}

impl From<TensorComplex> for Complex {
    fn from(t: TensorComplex) -> Self {
        Complex::Tensor(t)
    }
}

/// Builds a simplicial complex from coordinates and top simplices.
pub fn build_simplicial(coords: Vec<Vec<f64>>, top: &[Vec<usize>]) -> Result<Complex> {
    Ok(Complex::Simplicial(SimplicialComplex::new(coords, top)?))
}

/// Builds a tensor grid from its factors.
pub fn product_grid(factors: Vec<Factor>) -> Result<Complex> {
    Ok(Complex::Tensor(TensorComplex::new(factors)?))
}

impl Complex {
    pub fn dimension(&self) -> usize {
        match self {
            Complex::Simplicial(s) => s.dimension(),
            Complex::Tensor(t) => t.dimension(),
        }
    }

    pub fn num_cells(&self, p: usize) -> usize {
        match self {
            Complex::Simplicial(s) => s.num_cells(p),
            Complex::Tensor(t) => t.num_cells(p),
        }
    }

    pub fn num_top(&self) -> usize {
        self.num_cells(self.dimension())
    }

    pub fn cell_counts(&self) -> Vec<usize> {
        (0..=self.dimension()).map(|p| self.num_cells(p)).collect()
    }

    pub fn total_cells(&self) -> usize {
        self.cell_counts().iter().sum()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.cell_counts().iter().enumerate().map(|(p, &c)| if p % 2 == 0 { c as i64 } else { -(c as i64) }).sum()
    }

    /// Integer coboundary D_p: C^p → C^{p+1}, for p in 0..n.
    pub fn coboundary(&self, p: usize) -> Result<Csr<i64>> {
        match self {
            Complex::Simplicial(s) => {
                if p >= s.dimension() {
                    return Err(Error::DegreeOutOfRange { p, max: s.dimension().saturating_sub(1) });
                }
                Ok(s.boundary(p + 1)?.transpose())
            }
            Complex::Tensor(t) => t.coboundary(p),
        }
    }

    /// Integer boundary ∂_p: C_p → C_{p-1}, for p in 1..=n.
    pub fn boundary(&self, p: usize) -> Result<Csr<i64>> {
        if p == 0 || p > self.dimension() {
            return Err(Error::DegreeOutOfRange { p, max: self.dimension() });
        }
        Ok(self.coboundary(p - 1)?.transpose())
    }

    /// Coboundaries for all degrees, `D_0..D_{n-1}`.
    pub fn coboundaries(&self) -> Vec<Csr<i64>> {
        (0..self.dimension()).map(|p| self.coboundary(p).expect("degree in range")).collect()
    }

    pub fn cell_vertices(&self, p: usize, i: usize) -> Vec<usize> {
        match self {
            Complex::Simplicial(s) => s.simplices(p)[i].clone(),
            Complex::Tensor(t) => t.cell_vertices(p, i),
        }
    }

    pub fn vertex_coords(&self, v: usize) -> Vec<f64> {
        match self {
            Complex::Simplicial(s) => s.coords()[v].clone(),
            Complex::Tensor(t) => t.vertex_coords(v),
        }
    }

    /// Embedded distance between two vertices; periodic along circle factors.
    pub fn vertex_distance(&self, a: usize, b: usize) -> f64 {
        match self {
            Complex::Simplicial(s) => {
                let (x, y) = (&s.coords()[a], &s.coords()[b]);
                x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
            }
            Complex::Tensor(t) => {
                let (x, y) = (t.vertex_coords(a), t.vertex_coords(b));
                t.factors().iter().zip(x.iter().zip(&y)).map(|(f, (p, q))| f.delta(*p, *q).powi(2)).sum::<f64>().sqrt()
            }
        }
    }

    /// Global indices of the faces of top cell `t` in degree `p`.
    pub fn top_face_indices(&self, t: usize, p: usize) -> Vec<usize> {
        match self {
            Complex::Simplicial(s) => s.top_faces(t, p).into_iter().map(|f| f.1).collect(),
            Complex::Tensor(c) => c.top_faces(t, p).into_iter().map(|f| f.1).collect(),
        }
    }

    /// Per-degree flags marking the closure of the selected top cells.
    pub fn closure(&self, tops: &[bool]) -> Vec<Vec<bool>> {
        let n = self.dimension();
        let mut out: Vec<Vec<bool>> = (0..=n).map(|p| vec![false; self.num_cells(p)]).collect();
        for t in (0..self.num_top()).filter(|&t| tops[t]) {
            for (p, flags) in out.iter_mut().enumerate() {
                for i in self.top_face_indices(t, p) {
                    flags[i] = true;
                }
            }
        }
        out
    }

    pub fn as_tensor(&self) -> Option<&TensorComplex> {
        match self {
            Complex::Tensor(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_simplicial(&self) -> Option<&SimplicialComplex> {
        match self {
            Complex::Simplicial(s) => Some(s),
            _ => None,
        }
    }
}

/// A proper subset U of top cells together with its closure, the closure of
/// its complement and their common interface.
#[derive(Clone, Debug)]
pub struct DomainTag {
    top: Vec<bool>,
    closure_u: Vec<Vec<bool>>,
    closure_c: Vec<Vec<bool>>,
    connected: bool,
}

/// Tags the top cells selected by `predicate` as the domain U.
pub fn tag_domain(complex: &Complex, predicate: impl Fn(usize) -> bool) -> Result<DomainTag> {
    let top: Vec<bool> = (0..complex.num_top()).map(predicate).collect();
    DomainTag::from_flags(complex, top)
}

impl DomainTag {
    pub fn from_flags(complex: &Complex, top: Vec<bool>) -> Result<Self> {
        if top.len() != complex.num_top() {
            return Err(Error::Invalid("domain flags do not match top cell count".into()));
        }
        let selected = top.iter().filter(|&&b| b).count();
        if selected == 0 {
            return Err(Error::Invalid("domain selects no top cell".into()));
        }
        if selected == top.len() {
            return Err(Error::Invalid("domain selects every top cell, nothing left to deform".into()));
        }
        let closure_u = complex.closure(&top);
        let comp: Vec<bool> = top.iter().map(|b| !b).collect();
        let closure_c = complex.closure(&comp);
        let connected = skeleton_connected(complex, &closure_u);
        Ok(DomainTag { top, closure_u, closure_c, connected })
    }

    pub fn from_indices(complex: &Complex, indices: &[usize]) -> Result<Self> {
        let mut top = vec![false; complex.num_top()];
        for &i in indices {
            *top.get_mut(i).ok_or_else(|| Error::Invalid(format!("top cell {i} out of range")))? = true;
        }
        Self::from_flags(complex, top)
    }

    pub fn dimension(&self) -> usize {
        self.closure_u.len() - 1
    }

    pub fn top_flags(&self) -> &[bool] {
        &self.top
    }

    pub fn top_cells(&self) -> Vec<usize> {
        (0..self.top.len()).filter(|&t| self.top[t]).collect()
    }

    pub fn complement_top_cells(&self) -> Vec<usize> {
        (0..self.top.len()).filter(|&t| !self.top[t]).collect()
    }

    pub fn in_closure(&self, p: usize, i: usize) -> bool {
        self.closure_u[p][i]
    }

    pub fn in_complement_closure(&self, p: usize, i: usize) -> bool {
        self.closure_c[p][i]
    }

    pub fn is_interface(&self, p: usize, i: usize) -> bool {
        self.closure_u[p][i] && self.closure_c[p][i]
    }

    /// Cells of the closure of U in degree p.
    pub fn closure_cells(&self, p: usize) -> Vec<usize> {
        (0..self.closure_u[p].len()).filter(|&i| self.closure_u[p][i]).collect()
    }

    pub fn interface_cells(&self, p: usize) -> Vec<usize> {
        (0..self.closure_u[p].len()).filter(|&i| self.is_interface(p, i)).collect()
    }

    /// Cells of the closure of U that avoid the interface.
    pub fn interior_cells(&self, p: usize) -> Vec<usize> {
        (0..self.closure_u[p].len()).filter(|&i| self.closure_u[p][i] && !self.closure_c[p][i]).collect()
    }

    /// Cells not in the closure of U.
    pub fn exterior_cells(&self, p: usize) -> Vec<usize> {
        (0..self.closure_u[p].len()).filter(|&i| !self.closure_u[p][i]).collect()
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }
}

fn skeleton_connected(complex: &Complex, closure: &[Vec<bool>]) -> bool {
    let nv = complex.num_cells(0);
    let mut parent: Vec<usize> = (0..nv).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    if complex.dimension() >= 1 {
        for e in (0..complex.num_cells(1)).filter(|&e| closure[1][e]) {
            let vs = complex.cell_vertices(1, e);
            let (a, b) = (find(&mut parent, vs[0]), find(&mut parent, vs[1]));
            parent[a] = b;
        }
    }
    let mut roots = (0..nv).filter(|&v| closure[0][v]).map(|v| find(&mut parent, v)).collect::<Vec<_>>();
    roots.sort_unstable();
    roots.dedup();
    roots.len() <= 1
}

/// Mesh JSON input: explicit simplicial mesh or inline tensor product.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeshSpec {
    Product {
        product: Vec<Factor>,
        #[serde(default)]
        domain: Option<Vec<usize>>,
    },
    Simplicial {
        dimension: usize,
        vertices: Vec<Vec<f64>>,
        cells: Vec<Vec<usize>>,
        #[serde(default)]
        phi: Option<Vec<f64>>,
        #[serde(default)]
        domain: Option<Vec<usize>>,
    },
}

/// A loaded mesh with optional per-vertex φ and domain (as canonical top indices).
#[derive(Clone, Debug)]
pub struct LoadedMesh {
    pub complex: Complex,
    pub phi: Option<Vec<f64>>,
    pub domain: Option<Vec<usize>>,
}

impl MeshSpec {
    pub fn build(&self) -> Result<LoadedMesh> {
        match self {
            MeshSpec::Product { product, domain } => Ok(LoadedMesh {
                complex: product_grid(product.clone())?,
                phi: None,
                domain: domain.clone(),
            }),
            MeshSpec::Simplicial { dimension, vertices, cells, phi, domain } => {
                if cells.iter().any(|c| c.len() != dimension + 1) {
                    return Err(Error::Invalid(format!("cells must have {} vertices", dimension + 1)));
                }
                let s = SimplicialComplex::new(vertices.clone(), cells)?;
                if let Some(phi) = phi {
                    if phi.len() != s.num_vertices() {
                        return Err(Error::Invalid("phi length differs from vertex count".into()));
                    }
                }
                // domain indices refer to input order; translate to canonical order
                let domain = match domain {
                    Some(d) => Some(
                        d.iter()
                            .map(|&i| {
                                let c = cells.get(i).ok_or_else(|| Error::Invalid(format!("domain cell {i} out of range")))?;
                                let mut key = c.clone();
                                key.sort_unstable();
                                Ok(s.index_of(&key).expect("cell present"))
                            })
                            .collect::<Result<Vec<_>>>()?,
                    ),
                    None => None,
                };
                Ok(LoadedMesh { complex: Complex::Simplicial(s), phi: phi.clone(), domain })
            }
        }
    }
}

pub fn load_mesh(path: &Path) -> Result<LoadedMesh> {
    let text = std::fs::read_to_string(path)?;
    let spec: MeshSpec = serde_json::from_str(&text)?;
    spec.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_boundary_signs() {
        let c = build_simplicial(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![0, 1, 2]]).unwrap();
        assert_eq!(c.cell_counts(), vec![3, 3, 1]);
        let b = c.boundary(2).unwrap();
        let s = c.as_simplicial().unwrap();
        let e = |a: usize, b: usize| s.index_of(&[a, b]).unwrap();
        assert_eq!(b.get(e(1, 2), 0), 1);
        assert_eq!(b.get(e(0, 2), 0), -1);
        assert_eq!(b.get(e(0, 1), 0), 1);
    }

    #[test]
    fn degenerate_and_duplicate_rejected() {
        let coords = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(build_simplicial(coords.clone(), &[vec![0, 1, 1]]).is_err());
        assert!(build_simplicial(coords.clone(), &[vec![0, 1, 2], vec![2, 1, 0]]).is_err());
        assert!(build_simplicial(coords, &[vec![0, 1, 5]]).is_err());
    }

    #[test]
    fn three_cycle_columns_sum_to_zero() {
        let c = build_simplicial(vec![vec![0.0], vec![1.0], vec![2.0]], &[vec![0, 1], vec![1, 2], vec![0, 2]]).unwrap();
        let b = c.boundary(1).unwrap().to_dense();
        for j in 0..3 {
            assert_eq!(b.column(j).sum(), 0.0);
        }
    }

    #[test]
    fn mesh_json_roundtrip() {
        let text = r#"{"dimension":2,"vertices":[[0,0],[1,0],[0,1],[1,1]],"cells":[[1,3,2],[0,1,2]],"domain":[0]}"#;
        let spec: MeshSpec = serde_json::from_str(text).unwrap();
        let mesh = spec.build().unwrap();
        // input cell 0 is (1,2,3), canonical index 1
        assert_eq!(mesh.domain, Some(vec![1]));
        let text = r#"{"product":[{"kind":"circle","cells":4,"length":1.0},{"kind":"interval","cells":2,"length":1.0}]}"#;
        let spec: MeshSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.build().unwrap().complex.cell_counts(), vec![12, 20, 8]);
    }
}
