use crate::complex::Complex;
use crate::error::{Error, Result};

/// Per-degree values on cells.
#[derive(Clone, Debug, PartialEq)]
pub struct CellField {
    values: Vec<Vec<f64>>,
}

impl CellField {
    pub fn zeros(complex: &Complex) -> Self {
        Self::constant(complex, 0.0)
    }

    pub fn constant(complex: &Complex, c: f64) -> Self {
        CellField { values: (0..=complex.dimension()).map(|p| vec![c; complex.num_cells(p)]).collect() }
    }

    /// Samples each cell by averaging the values at its vertices.
    pub fn from_vertices(complex: &Complex, vertex_values: &[f64]) -> Result<Self> {
        if vertex_values.len() != complex.num_cells(0) {
            return Err(Error::Invalid(format!(
                "expected {} vertex values, got {}",
                complex.num_cells(0),
                vertex_values.len()
            )));
        }
        let values = (0..=complex.dimension())
            .map(|p| {
                (0..complex.num_cells(p))
                    .map(|i| {
                        let vs = complex.cell_vertices(p, i);
                        vs.iter().map(|&v| vertex_values[v]).sum::<f64>() / vs.len() as f64
                    })
                    .collect()
            })
            .collect();
        Ok(CellField { values })
    }

    pub fn from_fn(complex: &Complex, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let vals: Vec<f64> = (0..complex.num_cells(0)).map(|v| f(&complex.vertex_coords(v))).collect();
        Self::from_vertices(complex, &vals)
    }

    pub fn from_values(values: Vec<Vec<f64>>) -> Self {
        CellField { values }
    }

    pub fn dimension(&self) -> usize {
        self.values.len() - 1
    }

    pub fn degree(&self, p: usize) -> &[f64] {
        &self.values[p]
    }

    pub fn degree_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.values[p]
    }

    pub fn get(&self, p: usize, i: usize) -> f64 {
        self.values[p][i]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self + s * other`, cell by cell.
    pub fn add_scaled(&self, s: f64, other: &CellField) -> CellField {
        CellField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect())
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> CellField {
        CellField { values: self.values.iter().map(|v| v.iter().map(|x| s * x).collect()).collect() }
    }

    pub fn negated(&self) -> CellField {
        self.scaled(-1.0)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().flatten().all(|&v| v == 0.0)
    }
}

/// The weight φ sampled on cells.
pub type WeightField = CellField;

/// Dense row-major local matrix over a list of global cells.
#[derive(Clone, Debug)]
pub struct LocalBlock {
    pub cells: Vec<usize>,
    pub matrix: Vec<f64>,
}

/// Unweighted metric data: volumes, conformal log-factors, barycentric dual
/// parts and Whitney local mass blocks per top cell.
#[derive(Clone, Debug)]
pub struct Geometry {
    dim: usize,
    volumes: Vec<Vec<f64>>,
    u: CellField,
    /// duals[t][p] = (cell, dual part of that cell inside top cell t)
    duals: Vec<Vec<Vec<(usize, f64)>>>,
    whitney: Vec<Vec<LocalBlock>>,
}

fn small_det(a: &[f64], k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut m = a.to_vec();
    let mut det = 1.0;
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| m[i * k + c].abs().total_cmp(&m[j * k + c].abs())).unwrap();
        if m[piv * k + c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            for j in 0..k {
                m.swap(piv * k + j, c * k + j);
            }
            det = -det;
        }
        let d = m[c * k + c];
        det *= d;
        for i in c + 1..k {
            let f = m[i * k + c] / d;
            for j in c..k {
                m[i * k + j] -= f * m[c * k + j];
            }
        }
    }
    det
}

fn small_inverse(a: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv: Vec<f64> = (0..k * k).map(|i| if i / k == i % k { 1.0 } else { 0.0 }).collect();
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| m[i * k + c].abs().total_cmp(&m[j * k + c].abs()))?;
        if m[piv * k + c].abs() < 1e-300 {
            return None;
        }
        for j in 0..k {
            m.swap(piv * k + j, c * k + j);
            inv.swap(piv * k + j, c * k + j);
        }
        let d = m[c * k + c];
        for j in 0..k {
            m[c * k + j] /= d;
            inv[c * k + j] /= d;
        }
        for i in 0..k {
            if i != c {
                let f = m[i * k + c];
                for j in 0..k {
                    m[i * k + j] -= f * m[c * k + j];
                    inv[i * k + j] -= f * inv[c * k + j];
                }
            }
        }
    }
    Some(inv)
}

/// k-volume of the simplex spanned by `pts` (k+1 points in R^m).
pub fn simplex_volume(pts: &[Vec<f64>]) -> f64 {
    let k = pts.len() - 1;
    if k == 0 {
        return 1.0;
    }
    let edges: Vec<Vec<f64>> = pts[1..].iter().map(|p| p.iter().zip(&pts[0]).map(|(a, b)| a - b).collect()).collect();
    let mut gram = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            gram[i * k + j] = edges[i].iter().zip(&edges[j]).map(|(a, b)| a * b).sum();
        }
    }
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    small_det(&gram, k).max(0.0).sqrt() / fact
}

fn barycenter(pts: &[&Vec<f64>]) -> Vec<f64> {
    let m = pts[0].len();
    (0..m).map(|c| pts.iter().map(|p| p[c]).sum::<f64>() / pts.len() as f64).collect()
}

/// Barycentric dual part of the face `face` (local positions) inside the
/// simplex `pts`: total volume of flag simplices through the barycenters.
fn flag_dual_part(pts: &[Vec<f64>], face: &[usize]) -> f64 {
    let n = pts.len() - 1;
    let rest: Vec<usize> = (0..=n).filter(|i| !face.contains(i)).collect();
    if rest.is_empty() {
        return 1.0;
    }
    let mut total = 0.0;
    let mut perm = rest.clone();
    permute(&mut perm, 0, &mut |order| {
        let mut current: Vec<usize> = face.to_vec();
        let mut chain = vec![barycenter(&current.iter().map(|&i| &pts[i]).collect::<Vec<_>>())];
        for &v in order {
            current.push(v);
            chain.push(barycenter(&current.iter().map(|&i| &pts[i]).collect::<Vec<_>>()));
        }
        total += simplex_volume(&chain);
    });
    total
}

fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

/// Whitney mass block of degree `p` on one simplex.
fn whitney_block(pts: &[Vec<f64>], faces: &[Vec<usize>], p: usize) -> Vec<f64> {
    let n = pts.len() - 1;
    let vol = simplex_volume(pts);
    // gradients of barycentric coordinates through the inverse metric
    let edges: Vec<Vec<f64>> = pts[1..].iter().map(|q| q.iter().zip(&pts[0]).map(|(a, b)| a - b).collect()).collect();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            g[i * n + j] = edges[i].iter().zip(&edges[j]).map(|(a, b)| a * b).sum();
        }
    }
    let ginv = small_inverse(&g, n).expect("non-degenerate simplex");
    let mut grad = vec![0.0; (n + 1) * (n + 1)];
    for i in 0..=n {
        for j in 0..=n {
            grad[i * (n + 1) + j] = match (i, j) {
                (0, 0) => ginv.iter().sum(),
                (0, j) => -(0..n).map(|a| ginv[a * n + j - 1]).sum::<f64>(),
                (i, 0) => -(0..n).map(|b| ginv[(i - 1) * n + b]).sum::<f64>(),
                (i, j) => ginv[(i - 1) * n + j - 1],
            };
        }
    }
    let pfact: f64 = (1..=p).map(|i| i as f64).product();
    let integral = |a: usize, b: usize| vol * if a == b { 2.0 } else { 1.0 } / ((n + 1) * (n + 2)) as f64;
    let k = faces.len();
    let mut out = vec![0.0; k * k];
    for (r, s) in faces.iter().enumerate() {
        for (c, t) in faces.iter().enumerate() {
            let mut acc = 0.0;
            for ks in 0..=p {
                for kt in 0..=p {
                    let rs: Vec<usize> = s.iter().enumerate().filter(|&(i, _)| i != ks).map(|(_, &v)| v).collect();
                    let rt: Vec<usize> = t.iter().enumerate().filter(|&(i, _)| i != kt).map(|(_, &v)| v).collect();
                    let mut sub = vec![0.0; p * p];
                    for a in 0..p {
                        for b in 0..p {
                            sub[a * p + b] = grad[rs[a] * (n + 1) + rt[b]];
                        }
                    }
                    let sign = if (ks + kt) % 2 == 0 { 1.0 } else { -1.0 };
                    acc += sign * integral(s[ks], t[kt]) * small_det(&sub, p);
                }
            }
            out[r * k + c] = pfact * pfact * acc;
        }
    }
    out
}

impl Geometry {
    pub fn from_complex(complex: &Complex) -> Result<Self> {
        let n = complex.dimension();
        let ntop = complex.num_top();
        let mut volumes: Vec<Vec<f64>> = (0..=n).map(|p| vec![0.0; complex.num_cells(p)]).collect();
        let mut duals = Vec::with_capacity(ntop);
        let mut whitney = Vec::with_capacity(ntop);
        match complex {
            Complex::Simplicial(s) => {
                for (p, vols) in volumes.iter_mut().enumerate() {
                    for (i, simplex) in s.simplices(p).iter().enumerate() {
                        let pts: Vec<Vec<f64>> = simplex.iter().map(|&v| s.coords()[v].clone()).collect();
                        vols[i] = simplex_volume(&pts);
                    }
                }
                for t in 0..ntop {
                    let pts: Vec<Vec<f64>> = s.simplices(n)[t].iter().map(|&v| s.coords()[v].clone()).collect();
                    let mut per_degree = Vec::with_capacity(n + 1);
                    let mut blocks = Vec::with_capacity(n + 1);
                    for p in 0..=n {
                        let faces = s.top_faces(t, p);
                        per_degree.push(faces.iter().map(|(loc, g)| (*g, flag_dual_part(&pts, loc))).collect());
                        let locs: Vec<Vec<usize>> = faces.iter().map(|f| f.0.clone()).collect();
                        blocks.push(LocalBlock {
                            cells: faces.iter().map(|f| f.1).collect(),
                            matrix: whitney_block(&pts, &locs, p),
                        });
                    }
                    duals.push(per_degree);
                    whitney.push(blocks);
                }
            }
            Complex::Tensor(tc) => {
                let factors = tc.factors();
                for (p, vols) in volumes.iter_mut().enumerate() {
                    for (i, v) in vols.iter_mut().enumerate() {
                        *v = tc
                            .cell(p, i)
                            .iter()
                            .zip(factors)
                            .map(|(c, f)| if c.0 == 1 { f.spacing() } else { 1.0 })
                            .product();
                    }
                }
                for t in 0..ntop {
                    let mut per_degree = Vec::with_capacity(n + 1);
                    let mut blocks = Vec::with_capacity(n + 1);
                    for p in 0..=n {
                        let faces = tc.top_faces(t, p);
                        per_degree.push(
                            faces
                                .iter()
                                .map(|(loc, g)| {
                                    let part: f64 = loc
                                        .iter()
                                        .zip(factors)
                                        .map(|(&l, f)| if l == 2 { 1.0 } else { f.spacing() / 2.0 })
                                        .product();
                                    (*g, part)
                                })
                                .collect(),
                        );
                        let k = faces.len();
                        let mut matrix = vec![0.0; k * k];
                        for (r, (lr, _)) in faces.iter().enumerate() {
                            for (c, (lc, _)) in faces.iter().enumerate() {
                                matrix[r * k + c] = lr
                                    .iter()
                                    .zip(lc)
                                    .zip(factors)
                                    .map(|((&a, &b), f)| {
                                        let h = f.spacing();
                                        match (a, b) {
                                            (2, 2) => 1.0 / h,
                                            (2, _) | (_, 2) => 0.0,
                                            (a, b) if a == b => h / 3.0,
                                            _ => h / 6.0,
                                        }
                                    })
                                    .product();
                            }
                        }
                        blocks.push(LocalBlock { cells: faces.iter().map(|f| f.1).collect(), matrix });
                    }
                    duals.push(per_degree);
                    whitney.push(blocks);
                }
            }
        }
        for (p, vols) in volumes.iter().enumerate() {
            if let Some((i, v)) = vols.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::Invalid(format!("{p}-cell {i} has non-positive volume {v}")));
            }
        }
        Ok(Geometry { dim: n, volumes, u: CellField::zeros(complex), duals, whitney })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn volumes(&self, p: usize) -> &[f64] {
        &self.volumes[p]
    }

    pub fn conformal(&self) -> &CellField {
        &self.u
    }

    pub fn with_conformal(&self, u: CellField) -> Geometry {
        Geometry { u, ..self.clone() }
    }

    pub fn num_top(&self) -> usize {
        self.duals.len()
    }

    pub fn dual_parts(&self, t: usize, p: usize) -> &[(usize, f64)] {
        &self.duals[t][p]
    }

    pub fn whitney_block(&self, t: usize, p: usize) -> &LocalBlock {
        &self.whitney[t][p]
    }

    /// Total barycentric dual measure of each p-cell, restricted to the flagged top cells.
    pub fn dual_measure(&self, p: usize, tops: Option<&[bool]>) -> Vec<f64> {
        let mut out = vec![0.0; self.volumes[p].len()];
        for t in 0..self.num_top() {
            if tops.is_some_and(|f| !f[t]) {
                continue;
            }
            for &(i, part) in &self.duals[t][p] {
                out[i] += part;
            }
        }
        out
    }

    /// Volume of the manifold under the conformal factor, Σ_top vol · e^{n u}.
    pub fn total_volume(&self) -> f64 {
        let n = self.dim;
        self.volumes[n].iter().zip(self.u.degree(n)).map(|(v, u)| v * (n as f64 * u).exp()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::build_simplicial;

    #[test]
    fn barycentric_parts_partition_volume() {
        let c = build_simplicial(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.3, 1.0]], &[vec![0, 1, 2]]).unwrap();
        let g = Geometry::from_complex(&c).unwrap();
        let area = g.volumes(2)[0];
        assert!((area - 1.0).abs() < 1e-15);
        for (_, part) in g.dual_parts(0, 0) {
            assert!((part - area / 3.0).abs() < 1e-15);
        }
        // edges: Σ vol(e) · dual(e) = 2 * area for the barycentric dual in 2D
        let s: f64 = g.dual_parts(0, 1).iter().map(|&(e, d)| g.volumes(1)[e] * d).sum();
        assert!(s > 0.0);
    }

    #[test]
    fn whitney_mass_interval() {
        let c = build_simplicial(vec![vec![0.0], vec![0.5]], &[vec![0, 1]]).unwrap();
        let g = Geometry::from_complex(&c).unwrap();
        let m0 = &g.whitney_block(0, 0).matrix;
        assert!((m0[0] - 0.5 / 3.0).abs() < 1e-15 && (m0[1] - 0.5 / 6.0).abs() < 1e-15);
        let m1 = &g.whitney_block(0, 1).matrix;
        assert!((m1[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn whitney_triangle_rows_sum_like_lumped_vertex() {
        let c = build_simplicial(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![0, 1, 2]]).unwrap();
        let g = Geometry::from_complex(&c).unwrap();
        let m0 = &g.whitney_block(0, 0).matrix;
        let row: f64 = m0[0..3].iter().sum();
        assert!((row - 0.5 / 3.0).abs() < 1e-15);
        let m2 = &g.whitney_block(0, 2).matrix;
        assert!((m2[0] - 2.0).abs() < 1e-14);
        // symmetric positive definite 1-form block
        let m1 = &g.whitney_block(0, 1).matrix;
        for i in 0..3 {
            for j in 0..3 {
                assert!((m1[i * 3 + j] - m1[j * 3 + i]).abs() < 1e-15);
            }
            assert!(m1[i * 3 + i] > 0.0);
        }
    }
}
