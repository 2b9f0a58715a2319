//! Fixed-size tensor helpers shared by the geometry modules.

pub type V3 = [f64; 3];
pub type V4 = [f64; 4];
pub type M3 = [[f64; 3]; 3];
pub type M4 = [[f64; 4]; 4];
pub type Chr<const D: usize> = [[[f64; D]; D]; D];
pub type Riem<const D: usize> = [[[[f64; D]; D]; D]; D];

pub fn dot_g<const D: usize>(g: &[[f64; D]; D], a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        let mut r = 0.0;
        for j in 0..D {
            r += g[i][j] * b[j];
        }
        s += a[i] * r;
    }
    s
}

pub fn lower<const D: usize>(g: &[[f64; D]; D], a: &[f64; D]) -> [f64; D] {
    let mut out = [0.0; D];
    for i in 0..D {
        for j in 0..D {
            out[i] += g[i][j] * a[j];
        }
    }
    out
}

pub fn add_scaled<const D: usize>(a: &[f64; D], s: f64, b: &[f64; D]) -> [f64; D] {
    let mut out = *a;
    for i in 0..D {
        out[i] += s * b[i];
    }
    out
}

pub fn scale<const D: usize>(s: f64, a: &[f64; D]) -> [f64; D] {
    let mut out = *a;
    for v in out.iter_mut() {
        *v *= s;
    }
    out
}

pub fn euclid_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn det3(m: &M3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn inv3(m: &M3) -> Option<M3> {
    let d = det3(m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (i1, i2) = ((j + 1) % 3, (j + 2) % 3);
            let (j1, j2) = ((i + 1) % 3, (i + 2) % 3);
            r[i][j] = (m[i1][j1] * m[i2][j2] - m[i1][j2] * m[i2][j1]) / d;
        }
    }
    Some(r)
}

/// Symmetric 3×3 eigenvalues in ascending order (Jacobi rotations).
pub fn sym_eigenvalues3(m: &M3) -> V3 {
    let mut a = *m;
    for _ in 0..50 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        if off < 1e-15 * (a[0][0].abs() + a[1][1].abs() + a[2][2].abs() + 1e-300) {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut b = a;
            for k in 0..3 {
                b[k][p] = c * a[k][p] - s * a[k][q];
                b[k][q] = s * a[k][p] + c * a[k][q];
            }
            let mut d = b;
            for k in 0..3 {
                d[p][k] = c * b[p][k] - s * b[q][k];
                d[q][k] = s * b[p][k] + c * b[q][k];
            }
            a = d;
        }
    }
    let mut e = [a[0][0], a[1][1], a[2][2]];
    e.sort_by(|x, y| x.partial_cmp(y).unwrap());
    e
}

/// Sign of the permutation (a,b,c,d) of (0,1,2,3); zero on repeats.
pub fn perm_sign4(idx: [usize; 4]) -> f64 {
    for i in 0..4 {
        for j in i + 1..4 {
            if idx[i] == idx[j] {
                return 0.0;
            }
        }
    }
    let mut p = idx;
    let mut sign = 1.0;
    for i in 0..4 {
        while p[i] != i {
            let j = p[i];
            p.swap(i, j);
            sign = -sign;
        }
    }
    sign
}

pub fn perm_sign3(a: usize, b: usize, c: usize) -> f64 {
    if a == b || b == c || a == c {
        return 0.0;
    }
    if (a + 1) % 3 == b {
        1.0
    } else {
        -1.0
    }
}

/// Christoffel symbols Γ^α_{βγ} and the covariant Riemann tensor from a
/// metric 2-jet. `dg[μ][α][β] = ∂_μ g_{αβ}`, `d2g[μ][ν][α][β] = ∂_μ∂_ν g_{αβ}`.
///
/// Riemann follows R_{αβγδ} = g(∂_α, R(∂_γ, ∂_δ)∂_β), so the round sphere has
/// R_{θφθφ} = sin²θ.
pub fn connection<const D: usize>(
    g: &[[f64; D]; D],
    ginv: &[[f64; D]; D],
    dg: &[[[f64; D]; D]; D],
    d2g: Option<&[[[[f64; D]; D]; D]; D]>,
) -> (Chr<D>, Option<Riem<D>>) {
    // first kind: Γ_{σβγ} = ½(∂_β g_{σγ} + ∂_γ g_{σβ} − ∂_σ g_{βγ})
    let mut first = [[[0.0; D]; D]; D];
    for s in 0..D {
        for b in 0..D {
            for c in b..D {
                let v = 0.5 * (dg[b][s][c] + dg[c][s][b] - dg[s][b][c]);
                first[s][b][c] = v;
                first[s][c][b] = v;
            }
        }
    }
    let mut gam = [[[0.0; D]; D]; D];
    for a in 0..D {
        for b in 0..D {
            for c in b..D {
                let mut v = 0.0;
                for s in 0..D {
                    v += ginv[a][s] * first[s][b][c];
                }
                gam[a][b][c] = v;
                gam[a][c][b] = v;
            }
        }
    }
    let riem = d2g.map(|d2| {
        let _ = g;
        let mut r = [[[[0.0; D]; D]; D]; D];
        for a in 0..D {
            for b in a + 1..D {
                for c in 0..D {
                    for d in c + 1..D {
                        if (c, d) < (a, b) {
                            continue;
                        }
                        let mut v = 0.5 * (d2[b][c][a][d] + d2[a][d][b][c] - d2[b][d][a][c] - d2[a][c][b][d]);
                        for s in 0..D {
                            v += first[s][b][c] * gam[s][a][d] - first[s][b][d] * gam[s][a][c];
                        }
                        r[a][b][c][d] = v;
                        r[b][a][c][d] = -v;
                        r[a][b][d][c] = -v;
                        r[b][a][d][c] = v;
                        r[c][d][a][b] = v;
                        r[d][c][a][b] = -v;
                        r[c][d][b][a] = -v;
                        r[d][c][b][a] = v;
                    }
                }
            }
        }
        r
    });
    (gam, riem)
}

/// Full contraction T_{abcd} u^a v^b w^c x^d.
pub fn contract4(r: &Riem<4>, u: &V4, v: &V4, w: &V4, x: &V4) -> f64 {
    let mut s = 0.0;
    for a in 0..4 {
        if u[a] == 0.0 {
            continue;
        }
        for b in 0..4 {
            if v[b] == 0.0 {
                continue;
            }
            for c in 0..4 {
                if w[c] == 0.0 {
                    continue;
                }
                let mut t = 0.0;
                for d in 0..4 {
                    t += r[a][b][c][d] * x[d];
                }
                s += u[a] * v[b] * w[c] * t;
            }
        }
    }
    s
}

/// Re-express a covariant rank-4 tensor in a new basis (columns of `f` are
/// the basis vectors in coordinate components).
pub fn to_basis(r: &Riem<4>, f: &[V4; 4]) -> Riem<4> {
    let mut t1 = [[[[0.0; 4]; 4]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let mut s = 0.0;
                    for m in 0..4 {
                        s += r[a][b][c][m] * f[d][m];
                    }
                    t1[a][b][c][d] = s;
                }
            }
        }
    }
    let mut t2 = [[[[0.0; 4]; 4]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let mut s = 0.0;
                    for m in 0..4 {
                        s += t1[a][b][m][d] * f[c][m];
                    }
                    t2[a][b][c][d] = s;
                }
            }
        }
    }
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let mut s = 0.0;
                    for m in 0..4 {
                        s += t2[a][m][c][d] * f[b][m];
                    }
                    t1[a][b][c][d] = s;
                }
            }
        }
    }
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let mut s = 0.0;
                    for m in 0..4 {
                        s += t1[m][b][c][d] * f[a][m];
                    }
                    t2[a][b][c][d] = s;
                }
            }
        }
    }
    t2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_signs() {
        assert_eq!(perm_sign4([0, 1, 2, 3]), 1.0);
        assert_eq!(perm_sign4([1, 0, 2, 3]), -1.0);
        assert_eq!(perm_sign4([1, 2, 3, 0]), -1.0);
        assert_eq!(perm_sign4([1, 1, 2, 3]), 0.0);
        assert_eq!(perm_sign3(1, 2, 0), 1.0);
        assert_eq!(perm_sign3(2, 1, 0), -1.0);
    }

    #[test]
    fn eigenvalues_of_rotated_diagonal() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let r = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let d = [1.0, 2.0, 5.0];
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    m[i][j] += r[i][k] * d[k] * r[j][k];
                }
            }
        }
        let e = sym_eigenvalues3(&m);
        for k in 0..3 {
            assert!((e[k] - d[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let m = [[2.0, 0.3, 0.1], [0.3, 1.5, -0.2], [0.1, -0.2, 1.1]];
        let i = inv3(&m).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += m[a][k] * i[k][b];
                }
                assert!((s - if a == b { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }
}
