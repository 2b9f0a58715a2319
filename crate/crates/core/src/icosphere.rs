//! Subdivided icosahedron on the unit sphere with vertex quadrature weights.

use crate::error::{Error, Result};
use crate::tensor::V3;
use serde::Serialize;

pub const MAX_LEVEL: u32 = 7;

#[derive(Clone, Debug, Serialize)]
pub struct Icosphere {
    pub level: u32,
    pub vertices: Vec<V3>,
    pub faces: Vec<[usize; 3]>,
    /// One third of the spherical area of every incident face; sums to 4π.
    pub weights: Vec<f64>,
    pub neighbors: Vec<Vec<usize>>,
    /// Largest angle subtended by an edge.
    pub max_edge: f64,
}

fn normalize(v: V3) -> V3 {
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / r, v[1] / r, v[2] / r]
}

fn dot(a: &V3, b: &V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &V3, b: &V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Area of the spherical triangle with unit vertices a, b, c.
pub fn spherical_triangle_area(a: &V3, b: &V3, c: &V3) -> f64 {
    let num = dot(a, &cross(b, c)).abs();
    let den = 1.0 + dot(a, b) + dot(b, c) + dot(c, a);
    2.0 * num.atan2(den)
}

/// Angle between unit vectors, accurate for small and obtuse angles.
pub fn angle_between(a: &V3, b: &V3) -> f64 {
    cross(a, b).iter().map(|v| v * v).sum::<f64>().sqrt().atan2(dot(a, b))
}

impl Icosphere {
    pub fn new(level: u32) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::LevelOutOfRange { level: level as f64, lo: 0.0, hi: MAX_LEVEL as f64 });
        }
        let p = (1.0 + 5f64.sqrt()) / 2.0;
        let mut v: Vec<V3> = [
            [-1.0, p, 0.0],
            [1.0, p, 0.0],
            [-1.0, -p, 0.0],
            [1.0, -p, 0.0],
            [0.0, -1.0, p],
            [0.0, 1.0, p],
            [0.0, -1.0, -p],
            [0.0, 1.0, -p],
            [p, 0.0, -1.0],
            [p, 0.0, 1.0],
            [-p, 0.0, -1.0],
            [-p, 0.0, 1.0],
        ]
        .iter()
        .map(|x| normalize(*x))
        .collect();
        let mut f: Vec<[usize; 3]> = vec![
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
        for _ in 0..level {
            let mut cache = std::collections::HashMap::new();
            let mut nf = Vec::with_capacity(4 * f.len());
            let mut mid = |a: usize, b: usize, v: &mut Vec<V3>| -> usize {
                let key = (a.min(b), a.max(b));
                *cache.entry(key).or_insert_with(|| {
                    let m = [v[a][0] + v[b][0], v[a][1] + v[b][1], v[a][2] + v[b][2]];
                    v.push(normalize(m));
                    v.len() - 1
                })
            };
            for &[a, b, c] in &f {
                let ab = mid(a, b, &mut v);
                let bc = mid(b, c, &mut v);
                let ca = mid(c, a, &mut v);
                nf.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            f = nf;
        }
        let mut weights = vec![0.0; v.len()];
        let mut neighbors = vec![Vec::new(); v.len()];
        let mut max_edge: f64 = 0.0;
        for &[a, b, c] in &f {
            let area = spherical_triangle_area(&v[a], &v[b], &v[c]);
            for &i in &[a, b, c] {
                weights[i] += area / 3.0;
            }
            for &(i, j) in &[(a, b), (b, c), (c, a)] {
                if !neighbors[i].contains(&j) {
                    neighbors[i].push(j);
                    neighbors[j].push(i);
                    max_edge = max_edge.max(angle_between(&v[i], &v[j]));
                }
            }
        }
        for nb in neighbors.iter_mut() {
            nb.sort_unstable();
        }
        Ok(Icosphere { level, vertices: v, faces: f, weights, neighbors, max_edge })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Nominal edge angle atan(2)·2^(−level), halving exactly per level.
    pub fn nominal_spacing(&self) -> f64 {
        2f64.atan() * 0.5f64.powi(self.level as i32)
    }

    /// Index of the vertex closest to `w`.
    pub fn nearest(&self, w: &V3) -> usize {
        let mut best = 0;
        let mut bd = f64::NEG_INFINITY;
        for (i, v) in self.vertices.iter().enumerate() {
            let d = dot(v, w);
            if d > bd {
                bd = d;
                best = i;
            }
        }
        best
    }
}
