use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::sparse::Csr;

/// Pure simplicial complex with sorted vertex tuples and embedded coordinates.
#[derive(Clone, Debug)]
pub struct SimplicialComplex {
    dim: usize,
    coords: Vec<Vec<f64>>,
    simplices: Vec<Vec<Vec<usize>>>,
    lookup: Vec<HashMap<Vec<usize>, usize>>,
}

/// Subsets of `v` of size `k`, in lexicographic order of positions.
pub(crate) fn combinations(v: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(v: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..v.len() {
            if v.len() - i < k - cur.len() {
                break;
            }
            cur.push(v[i]);
            rec(v, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(v, k, 0, &mut Vec::with_capacity(k), &mut out);
    out
}

impl SimplicialComplex {
    /// Builds the complex generated by `top` simplices over `coords`.
    pub fn new(coords: Vec<Vec<f64>>, top: &[Vec<usize>]) -> Result<Self> {
        let Some(first) = top.first() else {
            return Err(Error::Invalid("no top simplices".into()));
        };
        let dim = first.len().checked_sub(1).ok_or_else(|| Error::Invalid("empty simplex".into()))?;
        let nv = coords.len();
        let mut tops = HashSet::new();
        let mut sorted_tops = Vec::with_capacity(top.len());
        for s in top {
            if s.len() != dim + 1 {
                return Err(Error::Invalid(format!("simplex {s:?} has wrong size, complex is {dim}-dimensional")));
            }
            if let Some(&v) = s.iter().find(|&&v| v >= nv) {
                return Err(Error::Invalid(format!("vertex index {v} out of range ({nv} vertices)")));
            }
            let mut t = s.clone();
            t.sort_unstable();
            if t.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Invalid(format!("degenerate simplex {s:?}")));
            }
            if !tops.insert(t.clone()) {
                return Err(Error::Invalid(format!("duplicate top simplex {s:?}")));
            }
            sorted_tops.push(t);
        }
        let mut simplices = Vec::with_capacity(dim + 1);
        for p in 0..=dim {
            let mut set: Vec<Vec<usize>> = if p == dim {
                sorted_tops.clone()
            } else {
                let mut all = HashSet::new();
                for t in &sorted_tops {
                    for f in combinations(t, p + 1) {
                        all.insert(f);
                    }
                }
                all.into_iter().collect()
            };
            set.sort();
            simplices.push(set);
        }
        let lookup = simplices
            .iter()
            .map(|list| list.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect())
            .collect();
        Ok(SimplicialComplex { dim, coords, simplices, lookup })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Vec<f64>] {
        &self.coords
    }

    pub fn num_cells(&self, p: usize) -> usize {
        self.simplices.get(p).map_or(0, |s| s.len())
    }

    pub fn simplices(&self, p: usize) -> &[Vec<usize>] {
        &self.simplices[p]
    }

    pub fn index_of(&self, simplex: &[usize]) -> Option<usize> {
        self.lookup.get(simplex.len().checked_sub(1)?)?.get(simplex).copied()
    }

    /// Integer boundary ∂_p from p-simplices to (p-1)-simplices.
    pub fn boundary(&self, p: usize) -> Result<Csr<i64>> {
        if p == 0 || p > self.dim {
            return Err(Error::DegreeOutOfRange { p, max: self.dim });
        }
        let mut trips = Vec::with_capacity(self.num_cells(p) * (p + 1));
        for (j, s) in self.simplices[p].iter().enumerate() {
            for k in 0..=p {
                let mut face = s.clone();
                face.remove(k);
                let i = self.lookup[p - 1][&face];
                trips.push((i, j, if k % 2 == 0 { 1 } else { -1 }));
            }
        }
        Ok(Csr::from_triplets(self.num_cells(p - 1), self.num_cells(p), trips))
    }

    /// Faces of top simplex `t` in degree `p` as (local vertex positions, global index).
    pub fn top_faces(&self, t: usize, p: usize) -> Vec<(Vec<usize>, usize)> {
        let top = &self.simplices[self.dim][t];
        let positions: Vec<usize> = (0..=self.dim).collect();
        combinations(&positions, p + 1)
            .into_iter()
            .map(|loc| {
                let verts: Vec<usize> = loc.iter().map(|&i| top[i]).collect();
                let g = self.lookup[p][&verts];
                (loc, g)
            })
            .collect()
    }
}
