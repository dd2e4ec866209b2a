//! Small mesh fixtures used by tests and experiments.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SimplicialComplex;
use crate::error::Result;

/// Unit sphere from an icosahedron with each face split into `freq²` triangles.
pub fn icosphere(freq: usize) -> Result<SimplicialComplex> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let base = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let faces = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let m = freq.max(1);
    let mut coords: Vec<Vec<f64>> = Vec::new();
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut vertex = |p: [f64; 3]| -> usize {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let q = [p[0] / r, p[1] / r, p[2] / r];
        let key = [(q[0] * 1e9).round() as i64, (q[1] * 1e9).round() as i64, (q[2] * 1e9).round() as i64];
        *index.entry(key).or_insert_with(|| {
            coords.push(q.to_vec());
            coords.len() - 1
        })
    };
    let mut tris = Vec::new();
    for f in faces {
        let (a, b, c) = (base[f[0]], base[f[1]], base[f[2]]);
        let point = |i: usize, j: usize| -> [f64; 3] {
            let (wa, wb, wc) = ((m - i - j) as f64, i as f64, j as f64);
            let mf = m as f64;
            [0, 1, 2].map(|k| (wa * a[k] + wb * b[k] + wc * c[k]) / mf)
        };
        let mut ids = vec![vec![0usize; m + 1]; m + 1];
        for i in 0..=m {
            for j in 0..=m - i {
                ids[i][j] = vertex(point(i, j));
            }
        }
        for i in 0..m {
            for j in 0..m - i {
                tris.push(vec![ids[i][j], ids[i + 1][j], ids[i][j + 1]]);
                if i + j + 1 < m {
                    tris.push(vec![ids[i + 1][j], ids[i + 1][j + 1], ids[i][j + 1]]);
                }
            }
        }
    }
    SimplicialComplex::new(coords, &tris)
}

/// Flat torus `nx × ny` triangulated with one diagonal per square, embedded in
/// R⁴ as a product of two planar circles of lengths `lx`, `ly`. The embedding
/// uses chord lengths, so the metric is flat up to O(h²).
pub fn triangulated_torus(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<SimplicialComplex> {
    let (rx, ry) = (lx / std::f64::consts::TAU, ly / std::f64::consts::TAU);
    let mut coords = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let (a, b) = (std::f64::consts::TAU * i as f64 / nx as f64, std::f64::consts::TAU * j as f64 / ny as f64);
            coords.push(vec![rx * a.cos(), rx * a.sin(), ry * b.cos(), ry * b.sin()]);
        }
    }
    let id = |i: usize, j: usize| (i % nx) * ny + (j % ny);
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            tris.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            tris.push(vec![id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    SimplicialComplex::new(coords, &tris)
}

/// Jittered triangulated square grid with random diagonals. Every triangle
/// keeps a positive area.
pub fn jittered_disk(nx: usize, ny: usize, seed: u64) -> Result<SimplicialComplex> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
    for i in 0..=nx {
        for j in 0..=ny {
            let dx: f64 = rng.gen_range(-0.2..0.2);
            let dy: f64 = rng.gen_range(-0.2..0.2);
            coords.push(vec![i as f64 + dx, j as f64 + dy]);
        }
    }
    let id = |i: usize, j: usize| i * (ny + 1) + j;
    let mut tris = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if rng.gen_bool(0.5) {
                tris.push(vec![a, b, c]);
                tris.push(vec![a, c, d]);
            } else {
                tris.push(vec![a, b, d]);
                tris.push(vec![b, c, d]);
            }
        }
    }
    SimplicialComplex::new(coords, &tris)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        let s = icosphere(3).unwrap();
        assert_eq!(s.num_cells(2), 180);
        assert_eq!(s.num_cells(0), 92);
        assert_eq!(s.num_cells(0) as i64 - s.num_cells(1) as i64 + s.num_cells(2) as i64, 2);
    }

    #[test]
    fn torus_euler() {
        let t = triangulated_torus(5, 4, 1.0, 1.0).unwrap();
        assert_eq!(t.num_cells(0) as i64 - t.num_cells(1) as i64 + t.num_cells(2) as i64, 0);
    }
}
