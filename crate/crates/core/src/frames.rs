//! Null frames, null curvature components, electric/magnetic parts and
//! Bel-Robinson densities.

use crate::error::{Error, Result};
use crate::metric::{MetricField, MetricSample, SpacetimePoint};
use crate::tensor::{self, contract4, perm_sign3, perm_sign4, Riem, M3, V3, V4};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullFrame {
    pub l: V4,
    pub lbar: V4,
    pub e1: V4,
    pub e2: V4,
    pub base: SpacetimePoint,
}

impl NullFrame {
    pub fn e(&self, a: usize) -> &V4 {
        if a == 0 {
            &self.e1
        } else {
            &self.e2
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NullCurvatureComponents {
    pub alpha: [[f64; 2]; 2],
    pub beta: [f64; 2],
    pub rho: f64,
    pub sigma: f64,
    pub betabar: [f64; 2],
    pub alphabar: [[f64; 2]; 2],
}

impl NullCurvatureComponents {
    pub fn alpha_sq(&self) -> f64 {
        self.alpha.iter().flatten().map(|v| v * v).sum()
    }
    pub fn beta_sq(&self) -> f64 {
        self.beta.iter().map(|v| v * v).sum()
    }
    pub fn betabar_sq(&self) -> f64 {
        self.betabar.iter().map(|v| v * v).sum()
    }
    pub fn trace_alpha(&self) -> f64 {
        self.alpha[0][0] + self.alpha[1][1]
    }
    /// |α|² + |β|² + ρ² + σ² + |β̄|².
    pub fn tangential_sq(&self) -> f64 {
        self.alpha_sq() + self.beta_sq() + self.rho * self.rho + self.sigma * self.sigma + self.betabar_sq()
    }
    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = self.rho.abs().max(self.sigma.abs());
        for a in 0..2 {
            m = m.max(self.beta[a].abs()).max(self.betabar[a].abs());
            for b in 0..2 {
                m = m.max(self.alpha[a][b].abs()).max(self.alphabar[a][b].abs());
            }
        }
        m
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EHDecomposition {
    pub e: M3,
    pub h: M3,
}

impl EHDecomposition {
    pub fn e_sq(&self) -> f64 {
        self.e.iter().flatten().map(|v| v * v).sum()
    }
    pub fn h_sq(&self) -> f64 {
        self.h.iter().flatten().map(|v| v * v).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BelRobinsonDensity {
    pub q_principal: f64,
    pub q_remainder: f64,
    pub q_total: f64,
}

/// Euclidean right-handed basis (u₁, u₂) of ω⊥ with u₁ × u₂ = ω.
pub fn screen_basis(omega: &V3) -> (V3, V3) {
    let mut k = 0;
    for i in 1..3 {
        if omega[i].abs() < omega[k].abs() {
            k = i;
        }
    }
    let mut e = [0.0; 3];
    e[k] = 1.0;
    let d = omega[0] * e[0] + omega[1] * e[1] + omega[2] * e[2];
    let mut u1 = [e[0] - d * omega[0], e[1] - d * omega[1], e[2] - d * omega[2]];
    let r = tensor::euclid_norm(&u1);
    for v in u1.iter_mut() {
        *v /= r;
    }
    let u2 = [
        omega[1] * u1[2] - omega[2] * u1[1],
        omega[2] * u1[0] - omega[0] * u1[2],
        omega[0] * u1[1] - omega[1] * u1[0],
    ];
    (u1, u2)
}

fn check_unit(omega: &V3) -> Result<()> {
    let r = tensor::euclid_norm(omega);
    if !((r - 1.0).abs() < 1e-9) {
        return Err(Error::InvalidDirection(*omega));
    }
    Ok(())
}

/// Spatial vector Σ ω_k E_k for the g-orthonormal triad E of the sample.
pub fn triad_image(s: &MetricSample, w: &V3) -> V3 {
    let e = s.spatial_triad();
    let mut out = [0.0; 3];
    for k in 0..3 {
        for i in 0..3 {
            out[i] += w[k] * e[k][i];
        }
    }
    out
}

/// Past null ℓ_ω with g(ℓ_ω, T_p) = 1.
pub fn initial_null_vector(metric: &MetricField, p: &SpacetimePoint, omega: &V3) -> Result<V4> {
    check_unit(omega)?;
    let s = metric.geometry(p, false)?;
    Ok(null_vector_from_sample(&s, omega))
}

pub fn null_vector_from_sample(s: &MetricSample, omega: &V3) -> V4 {
    let w = triad_image(s, omega);
    [-1.0 / s.n, w[0], w[1], w[2]]
}

/// Null frame at a point from L alone: N is the spatial direction of L and
/// the screen is spanned by the two coordinate directions least aligned
/// with N.
pub fn null_frame(metric: &MetricField, p: &SpacetimePoint, l: &V4) -> Result<NullFrame> {
    let s = metric.geometry(p, false)?;
    null_frame_from_sample(&s, l)
}

pub fn null_frame_from_sample(s: &MetricSample, l: &V4) -> Result<NullFrame> {
    let t = s.t_vector();
    let lam = s.dot(l, &t);
    let scale = tensor::euclid_norm(l).max(1e-300);
    if !(lam > 1e-12 * scale) || s.dot(l, l).abs() > 1e-8 * lam * lam {
        return Err(Error::FrameDegeneracy(format!("L = {l:?} is not past null")));
    }
    // L = λ(−T + N)
    let mut nvec = [0.0; 4];
    for i in 0..4 {
        nvec[i] = l[i] / lam + t[i];
    }
    let mut lbar = [0.0; 4];
    for i in 0..4 {
        lbar[i] = (-t[i] - nvec[i]) / lam;
    }
    let mut cand: Vec<(f64, usize, V4)> = (1..4)
        .map(|i| {
            let mut v = [0.0; 4];
            v[i] = 1.0;
            let c = s.dot(&v, &nvec);
            for k in 0..4 {
                v[k] -= c * nvec[k];
            }
            (s.dot(&v, &v), i, v)
        })
        .collect();
    cand.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut chosen = [cand[0].clone(), cand[1].clone()];
    chosen.sort_by_key(|c| c.1);
    let mut e1 = chosen[0].2;
    let n1 = s.dot(&e1, &e1).sqrt();
    e1 = tensor::scale(1.0 / n1, &e1);
    let mut e2 = chosen[1].2;
    let c = s.dot(&e2, &e1);
    e2 = tensor::add_scaled(&e2, -c, &e1);
    let n2 = s.dot(&e2, &e2).sqrt();
    if !(n2 > 1e-12) {
        return Err(Error::FrameDegeneracy("screen vectors are dependent".into()));
    }
    e2 = tensor::scale(1.0 / n2, &e2);
    Ok(NullFrame { l: *l, lbar, e1, e2, base: s.point })
}

/// Null frame with a prescribed leaf plane span(e₁, e₂); L̄ is the null
/// normal of the leaf normalized by g(L, L̄) = −2.
pub fn null_frame_from_leaf(s: &MetricSample, l: &V4, e1: &V4, e2: &V4) -> Result<NullFrame> {
    let t = s.t_vector();
    let psi = [s.dot(e1, &t), s.dot(e2, &t)];
    let mut w = t;
    for i in 0..4 {
        w[i] -= psi[0] * e1[i] + psi[1] * e2[i];
    }
    let wl = s.dot(&w, l);
    if !(wl.abs() > 1e-300) {
        return Err(Error::FrameDegeneracy("leaf normal is degenerate".into()));
    }
    let alpha = -2.0 / wl;
    let beta = -alpha * s.dot(&w, &w) / (2.0 * wl);
    let mut lbar = [0.0; 4];
    for i in 0..4 {
        lbar[i] = alpha * w[i] + beta * l[i];
    }
    Ok(NullFrame { l: *l, lbar, e1: *e1, e2: *e2, base: s.point })
}

/// Largest violation among the frame relations.
pub fn frame_residual(s: &MetricSample, f: &NullFrame) -> f64 {
    let g = |a: &V4, b: &V4| s.dot(a, b);
    [
        g(&f.l, &f.l),
        g(&f.lbar, &f.lbar),
        g(&f.l, &f.lbar) + 2.0,
        g(&f.l, &f.e1),
        g(&f.l, &f.e2),
        g(&f.lbar, &f.e1),
        g(&f.lbar, &f.e2),
        g(&f.e1, &f.e1) - 1.0,
        g(&f.e2, &f.e2) - 1.0,
        g(&f.e1, &f.e2),
    ]
    .iter()
    .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// ε(a, b, c, d) with ε_{0123} = +√|det g| in coordinate order (t, x¹, x², x³).
pub fn volume_form(s: &MetricSample, v: [&V4; 4]) -> f64 {
    let detg = -s.n * s.n * tensor::det3(&s.g);
    let mut det = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = perm_sign4([a, b, c, d]);
                    if p != 0.0 {
                        det += p * v[0][a] * v[1][b] * v[2][c] * v[3][d];
                    }
                }
            }
        }
    }
    detg.abs().sqrt() * det
}

pub fn null_decomposition(s: &MetricSample, riemann: &Riem<4>, f: &NullFrame) -> NullCurvatureComponents {
    let (l, lb) = (&f.l, &f.lbar);
    let e = [&f.e1, &f.e2];
    let mut c = NullCurvatureComponents::default();
    for a in 0..2 {
        for b in a..2 {
            c.alpha[a][b] = contract4(riemann, l, e[a], l, e[b]);
            c.alpha[b][a] = c.alpha[a][b];
            c.alphabar[a][b] = contract4(riemann, lb, e[a], lb, e[b]);
            c.alphabar[b][a] = c.alphabar[a][b];
        }
        c.beta[a] = 0.5 * contract4(riemann, e[a], l, lb, l);
        c.betabar[a] = 0.5 * contract4(riemann, e[a], lb, lb, l);
    }
    c.rho = 0.25 * contract4(riemann, l, lb, l, lb);
    let vol = volume_form(s, [l, lb, &f.e1, &f.e2]);
    c.sigma = 0.25 * vol * contract4(riemann, &f.e1, &f.e2, l, lb);
    c
}

/// Orthonormal frame (T, E₁, E₂, E₃) as 4-vectors.
pub fn orthonormal_frame(s: &MetricSample) -> [V4; 4] {
    let e = s.spatial_triad();
    let mut f = [[0.0; 4]; 4];
    f[0] = s.t_vector();
    for a in 0..3 {
        for i in 0..3 {
            f[a + 1][i + 1] = e[a][i];
        }
    }
    f
}

/// Riemann components in the orthonormal frame.
pub fn frame_riemann(s: &MetricSample) -> Riem<4> {
    tensor::to_basis(&s.riemann, &orthonormal_frame(s))
}

pub fn electric_magnetic(metric: &MetricField, p: &SpacetimePoint) -> Result<EHDecomposition> {
    let s = metric.sample(p)?;
    Ok(eh_from_frame(&frame_riemann(&s)))
}

pub fn eh_from_frame(r: &Riem<4>) -> EHDecomposition {
    let mut out = EHDecomposition::default();
    for a in 0..3 {
        for b in 0..3 {
            out.e[a][b] = r[a + 1][0][b + 1][0];
            // H_ab = *R_{b0a0} = −½ ε_{bcd} R_{cda0}
            let mut h = 0.0;
            for c in 0..3 {
                for d in 0..3 {
                    let eps = perm_sign3(b, c, d);
                    if eps != 0.0 {
                        h += eps * r[c + 1][d + 1][a + 1][0];
                    }
                }
            }
            out.h[a][b] = -0.5 * h;
        }
    }
    out
}

/// |R|² = ⅛ Σ R_{ABCD}² over an orthonormal frame.
pub fn riemann_norm_sq(r: &Riem<4>) -> f64 {
    r.iter().flatten().flatten().flatten().map(|v| v * v).sum::<f64>() / 8.0
}

/// Vacuum curvature with prescribed E and H in an orthonormal frame.
pub fn riemann_from_eh(eh: &EHDecomposition) -> Riem<4> {
    let (e, h) = (&eh.e, &eh.h);
    let mut r = [[[[0.0; 4]; 4]; 4]; 4];
    for a in 0..3 {
        for b in 0..3 {
            let (i, j) = (a + 1, b + 1);
            r[i][0][j][0] = e[a][b];
            r[0][i][0][j] = e[a][b];
            r[i][0][0][j] = -e[a][b];
            r[0][i][j][0] = -e[a][b];
            for c in 0..3 {
                let k = c + 1;
                let mut v = 0.0;
                for s in 0..3 {
                    v -= perm_sign3(a, b, s) * h[s][c];
                }
                r[i][j][k][0] = v;
                r[i][j][0][k] = -v;
                r[k][0][i][j] = v;
                r[0][k][i][j] = -v;
                for d in 0..3 {
                    let mut w = 0.0;
                    for s in 0..3 {
                        for t in 0..3 {
                            w -= perm_sign3(a, b, s) * perm_sign3(c, d, t) * e[s][t];
                        }
                    }
                    r[i][j][k][d + 1] = w;
                }
            }
        }
    }
    r
}

/// Largest deviation between frame curvature and its E/H reconstruction.
pub fn reconstruction_residual(r: &Riem<4>) -> f64 {
    let rec = riemann_from_eh(&eh_from_frame(r));
    let mut m: f64 = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    m = m.max((rec[a][b][c][d] - r[a][b][c][d]).abs());
                }
            }
        }
    }
    m
}

const ETA: [f64; 4] = [-1.0, 1.0, 1.0, 1.0];

/// Left dual *R_{αβγδ} = ½ ε_{αβμν} R^{μν}_{γδ} in an orthonormal frame.
pub fn left_dual(r: &Riem<4>) -> Riem<4> {
    let mut d = [[[[0.0; 4]; 4]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            if a == b {
                continue;
            }
            for m in 0..4 {
                for n in 0..4 {
                    let e = perm_sign4([a, b, m, n]);
                    if e == 0.0 {
                        continue;
                    }
                    let f = 0.5 * e * ETA[m] * ETA[n];
                    for c in 0..4 {
                        for k in 0..4 {
                            d[a][b][c][k] += f * r[m][n][c][k];
                        }
                    }
                }
            }
        }
    }
    d
}

/// Bel-Robinson tensor evaluated on four vectors, all quantities in an
/// orthonormal frame: Q(X,Y,Z,W) = R(X,·,Z,·)·R(Y,·,W,·) + *R(X,·,Z,·)·*R(Y,·,W,·).
pub struct BelRobinson {
    r: Riem<4>,
    d: Riem<4>,
}

impl BelRobinson {
    pub fn new(frame_riemann: &Riem<4>) -> Self {
        BelRobinson { r: *frame_riemann, d: left_dual(frame_riemann) }
    }

    fn slice(t: &Riem<4>, x: &V4, z: &V4) -> [[f64; 4]; 4] {
        let mut a = [[0.0; 4]; 4];
        for m in 0..4 {
            for n in 0..4 {
                let mut v = 0.0;
                for i in 0..4 {
                    if x[i] == 0.0 {
                        continue;
                    }
                    for k in 0..4 {
                        v += x[i] * t[i][m][k][n] * z[k];
                    }
                }
                a[m][n] = v;
            }
        }
        a
    }

    pub fn eval(&self, x: &V4, y: &V4, z: &V4, w: &V4) -> f64 {
        let mut q = 0.0;
        for t in [&self.r, &self.d] {
            let a = Self::slice(t, x, z);
            let b = Self::slice(t, y, w);
            for m in 0..4 {
                for n in 0..4 {
                    q += ETA[m] * ETA[n] * a[m][n] * b[m][n];
                }
            }
        }
        q
    }
}

/// Components of a coordinate vector in the orthonormal frame (T, E_a).
pub fn to_frame_components(s: &MetricSample, frame: &[V4; 4], v: &V4) -> V4 {
    let mut out = [0.0; 4];
    out[0] = -s.dot(v, &frame[0]);
    for a in 1..4 {
        out[a] = s.dot(v, &frame[a]);
    }
    out
}

/// Inputs for the flux density at one point of the cone.
pub struct DensityContext<'a> {
    pub sample: &'a MetricSample,
    pub frame: &'a NullFrame,
    pub phi: f64,
    pub psi: [f64; 2],
}

/// T rebuilt from the null frame and the foliation scalars:
/// T = −½φ(1 + |ψ|²) L − ½φ⁻¹ L̄ + ψ_a e_a.
pub fn t_from_foliation(f: &NullFrame, phi: f64, psi: &[f64; 2]) -> V4 {
    let p2 = psi[0] * psi[0] + psi[1] * psi[1];
    let mut t = [0.0; 4];
    for i in 0..4 {
        t[i] = -0.5 * phi * (1.0 + p2) * f.l[i] - 0.5 / phi * f.lbar[i] + psi[0] * f.e1[i] + psi[1] * f.e2[i];
    }
    t
}

/// Principal quartic form plus the remainder from T = T₀ + X, with
/// T₀ = −½(L + L̄); densities pair with the future-directed −L.
pub fn bel_robinson_density(c: &NullCurvatureComponents, ctx: &DensityContext) -> Result<BelRobinsonDensity> {
    let q_principal = 0.25 * c.alpha_sq()
        + 1.5 * c.beta_sq()
        + 1.5 * (c.rho * c.rho + c.sigma * c.sigma)
        + 0.5 * c.betabar_sq();
    let s = ctx.sample;
    let f = ctx.frame;
    let t = t_from_foliation(f, ctx.phi, &ctx.psi);
    let tt = s.dot(&t, &t);
    if (tt + 1.0).abs() > 1e-6 {
        return Err(Error::NonTimelikeT(tt));
    }
    let mut x = [0.0; 4];
    let mut t0 = [0.0; 4];
    for i in 0..4 {
        t0[i] = -0.5 * (f.l[i] + f.lbar[i]);
        x[i] = t[i] - t0[i];
    }
    let xnorm = tensor::euclid_norm(&x);
    let q_remainder = if xnorm == 0.0 || !s.has_riemann {
        0.0
    } else {
        let on = orthonormal_frame(s);
        let br = BelRobinson::new(&tensor::to_basis(&s.riemann, &on));
        let xf = to_frame_components(s, &on, &x);
        let tf = to_frame_components(s, &on, &t0);
        let ml = to_frame_components(s, &on, &tensor::scale(-1.0, &f.l));
        let mut acc = 0.0;
        for mask in 1..8u8 {
            let pick = |bit: u8| if mask & bit != 0 { &xf } else { &tf };
            acc += br.eval(pick(1), pick(2), pick(4), &ml);
        }
        acc
    };
    Ok(BelRobinsonDensity { q_principal, q_remainder, q_total: q_principal + q_remainder })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Family;

    fn mink() -> MetricField {
        MetricField::new(Family::Minkowski)
    }

    #[test]
    fn minkowski_null_vector() {
        let l = initial_null_vector(&mink(), &SpacetimePoint::new(0.0, [0.0; 3]), &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(l, [-1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_lapse_null_vector_solves_both_conditions() {
        let m = MetricField::new(Family::ConstantLapse { lapse: 2.0 });
        let p = SpacetimePoint::new(0.0, [0.0; 3]);
        let l = initial_null_vector(&m, &p, &[1.0, 0.0, 0.0]).unwrap();
        let s = m.sample(&p).unwrap();
        assert!((s.dot(&l, &s.t_vector()) - 1.0).abs() < 1e-12);
        assert!(s.dot(&l, &l).abs() < 1e-12);
        assert!((l[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_unit_direction() {
        let r = initial_null_vector(&mink(), &SpacetimePoint::new(0.0, [0.0; 3]), &[1.0, 1.0, 0.0]);
        assert!(matches!(r, Err(Error::InvalidDirection(_))));
    }

    #[test]
    fn minkowski_frame_and_volume() {
        let p = SpacetimePoint::new(0.0, [0.0; 3]);
        let s = mink().sample(&p).unwrap();
        let f = null_frame_from_sample(&s, &[-1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(f.lbar, [-1.0, -1.0, 0.0, 0.0]);
        assert_eq!(f.e1, [0.0, 0.0, 1.0, 0.0]);
        assert_eq!(f.e2, [0.0, 0.0, 0.0, 1.0]);
        assert!((volume_form(&s, [&f.l, &f.lbar, &f.e1, &f.e2]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn screen_basis_is_right_handed() {
        let w = [0.48, -0.6, 0.64];
        let (u1, u2) = screen_basis(&w);
        let c = [u1[1] * u2[2] - u1[2] * u2[1], u1[2] * u2[0] - u1[0] * u2[2], u1[0] * u2[1] - u1[1] * u2[0]];
        for i in 0..3 {
            assert!((c[i] - w[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn flat_decomposition_vanishes() {
        let s = mink().sample(&SpacetimePoint::new(0.0, [0.0; 3])).unwrap();
        let f = null_frame_from_sample(&s, &[-1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(null_decomposition(&s, &s.riemann, &f), NullCurvatureComponents::default());
        let eh = eh_from_frame(&frame_riemann(&s));
        assert_eq!(eh.e_sq() + eh.h_sq(), 0.0);
    }

    fn vacuum(p: &[f64]) -> EHDecomposition {
        let sym = |a: &[f64]| {
            let mut m = [[a[0], a[1], a[2]], [a[1], a[3], a[4]], [a[2], a[4], 0.0]];
            m[2][2] = -a[0] - a[3];
            m
        };
        EHDecomposition { e: sym(&p[0..5]), h: sym(&p[5..10]) }
    }

    fn dense_q(r: &Riem<4>, x: &V4, y: &V4, z: &V4, w: &V4) -> f64 {
        let eta = [-1.0, 1.0, 1.0, 1.0];
        let mut dual = [[[[0.0; 4]; 4]; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        for m in 0..4 {
                            for n in 0..4 {
                                dual[a][b][c][d] += 0.5 * perm_sign4([a, b, m, n]) * eta[m] * eta[n] * r[m][n][c][d];
                            }
                        }
                    }
                }
            }
        }
        let mut q = 0.0;
        for t in [r, &dual] {
            for m in 0..4 {
                for n in 0..4 {
                    let mut a = 0.0;
                    let mut b = 0.0;
                    for i in 0..4 {
                        for k in 0..4 {
                            a += x[i] * t[i][m][k][n] * z[k];
                            b += y[i] * t[i][m][k][n] * w[k];
                        }
                    }
                    q += eta[m] * eta[n] * a * b;
                }
            }
        }
        q
    }

    fn sample_with(r: &Riem<4>) -> MetricSample {
        let mut s = mink().sample(&SpacetimePoint::new(0.0, [0.0; 3])).unwrap();
        s.riemann = *r;
        s.has_riemann = true;
        s
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn eh_reconstruction_round_trips(p in proptest::collection::vec(-1.0f64..1.0, 10)) {
            let eh = vacuum(&p);
            let r = riemann_from_eh(&eh);
            for a in 0..4 { for b in 0..4 { for c in 0..4 { for d in 0..4 {
                prop_assert!((r[a][b][c][d] + r[b][a][c][d]).abs() < 1e-14);
                prop_assert!((r[a][b][c][d] - r[c][d][a][b]).abs() < 1e-14);
                prop_assert!((r[a][b][c][d] + r[a][c][d][b] + r[a][d][b][c]).abs() < 1e-13);
            }}}}
            let back = eh_from_frame(&r);
            for a in 0..3 { for b in 0..3 {
                prop_assert!((back.e[a][b] - eh.e[a][b]).abs() < 1e-14);
                prop_assert!((back.h[a][b] - eh.h[a][b]).abs() < 1e-14);
            }}
            prop_assert!(reconstruction_residual(&r) < 1e-13);
            prop_assert!((riemann_norm_sq(&r) - eh.e_sq() - eh.h_sq()).abs() < 1e-12);
        }

        #[test]
        fn energy_density_is_e_squared_plus_h_squared(p in proptest::collection::vec(-1.0f64..1.0, 10)) {
            let eh = vacuum(&p);
            let r = riemann_from_eh(&eh);
            let t = [1.0, 0.0, 0.0, 0.0];
            let q = BelRobinson::new(&r).eval(&t, &t, &t, &t);
            prop_assert!((q - eh.e_sq() - eh.h_sq()).abs() < 1e-12);
            prop_assert!((dense_q(&r, &t, &t, &t, &t) - q).abs() < 1e-12);
        }

        #[test]
        fn principal_density_matches_dense_contraction(
            p in proptest::collection::vec(-1.0f64..1.0, 10),
            theta in 0.1f64..3.0, az in 0.0f64..6.2,
        ) {
            let r = riemann_from_eh(&vacuum(&p));
            let s = sample_with(&r);
            let w = [theta.sin() * az.cos(), theta.sin() * az.sin(), theta.cos()];
            let f = null_frame_from_sample(&s, &null_vector_from_sample(&s, &w)).unwrap();
            prop_assert!(frame_residual(&s, &f) < 1e-13);
            let c = null_decomposition(&s, &r, &f);
            let ctx = DensityContext { sample: &s, frame: &f, phi: 1.0, psi: [0.0, 0.0] };
            let d = bel_robinson_density(&c, &ctx).unwrap();
            let t0 = tensor::scale(-0.5, &tensor::add_scaled(&f.l, 1.0, &f.lbar));
            let ml = tensor::scale(-1.0, &f.l);
            prop_assert!((d.q_principal - dense_q(&r, &t0, &t0, &t0, &ml)).abs() < 1e-11);
            prop_assert!(d.q_remainder.abs() < 1e-11);
        }

        #[test]
        fn total_density_matches_dense_contraction(
            p in proptest::collection::vec(-1.0f64..1.0, 10),
            phi in 0.5f64..2.0, psi0 in -0.5f64..0.5, psi1 in -0.5f64..0.5,
        ) {
            let r = riemann_from_eh(&vacuum(&p));
            let s = sample_with(&r);
            let f = null_frame_from_sample(&s, &[-1.0, 0.6, 0.0, 0.8]).unwrap();
            let c = null_decomposition(&s, &r, &f);
            let psi = [psi0, psi1];
            let ctx = DensityContext { sample: &s, frame: &f, phi, psi };
            let d = bel_robinson_density(&c, &ctx).unwrap();
            let t = t_from_foliation(&f, phi, &psi);
            let ml = tensor::scale(-1.0, &f.l);
            prop_assert!((d.q_total - dense_q(&r, &t, &t, &t, &ml)).abs() < 1e-10);
        }
    }

    #[test]
    fn rho_and_sigma_read_off_normal_components() {
        let eh = vacuum(&[0.3, -0.2, 0.1, 0.5, 0.4, -0.7, 0.2, 0.6, 0.1, -0.3]);
        let r = riemann_from_eh(&eh);
        let s = sample_with(&r);
        let f = null_frame_from_sample(&s, &[-1.0, 1.0, 0.0, 0.0]).unwrap();
        let c = null_decomposition(&s, &r, &f);
        assert!((c.rho - eh.e[0][0]).abs() < 1e-14);
        assert!((c.sigma - eh.h[0][0]).abs() < 1e-14);
        let dual = 0.25 * contract4(&left_dual(&r), &f.lbar, &f.l, &f.lbar, &f.l);
        assert!((c.sigma - dual).abs() < 1e-14);
    }

    #[test]
    fn non_unit_reconstruction_is_rejected() {
        let s = mink().sample(&SpacetimePoint::new(0.0, [0.0; 3])).unwrap();
        let mut f = null_frame_from_sample(&s, &[-1.0, 1.0, 0.0, 0.0]).unwrap();
        f.lbar = tensor::scale(2.0, &f.lbar);
        let ctx = DensityContext { sample: &s, frame: &f, phi: 1.0, psi: [0.0, 0.0] };
        let r = bel_robinson_density(&NullCurvatureComponents::default(), &ctx);
        assert!(matches!(r, Err(Error::NonTimelikeT(_))));
    }

    #[test]
    fn leaf_frame_recovers_lbar() {
        let s = mink().sample(&SpacetimePoint::new(0.0, [0.0; 3])).unwrap();
        let l = [-1.0, 1.0, 0.0, 0.0];
        // tilted leaf: e₁ picks up a multiple of L
        let e1 = [-0.3, 0.3, 1.0, 0.0];
        let e2 = [0.0, 0.0, 0.0, 1.0];
        let f = null_frame_from_leaf(&s, &l, &e1, &e2).unwrap();
        assert!(frame_residual(&s, &f) < 1e-14);
    }
}
