//! Spacetime metrics g = −n² dt² + g_ij dx^i dx^j in transported coordinates.

use crate::error::{Error, Result};
use crate::jet::{Jet, Scalar};
use crate::tensor::{self, Chr, Riem, M3, M4, V3, V4};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacetimePoint {
    pub t: f64,
    pub x: V3,
    #[serde(default)]
    pub chart: u8,
}

impl SpacetimePoint {
    pub fn new(t: f64, x: V3) -> Self {
        SpacetimePoint { t, x, chart: 0 }
    }
}

/// Built-in analytic metric families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Minkowski,
    /// n ≡ lapse, g = δ.
    ConstantLapse { lapse: f64 },
    /// n = 1 + a·exp(−|x|²/w²), g = δ.
    LapseBump { amplitude: f64, width: f64 },
    /// n = 1, g = exp(−2·rate·t) δ.
    Exponential { rate: f64 },
    FlatTorus { period: f64 },
    /// n = 1 + ε b, g = exp(2 ε drift t b) δ with b = Π cos(2π x^i / L).
    PerturbedTorus { period: f64, eps: f64, #[serde(default)] drift: f64 },
    /// Σ = S²(R) × ℝ in polar coordinates (θ, φ, z), n = 1.
    SphericalCylinder { radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Provider {
    Analytic,
    FiniteDifference {
        step: Option<f64>,
        #[serde(default = "default_order")]
        order: u8,
    },
}

fn default_order() -> u8 {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartDescriptor {
    pub id: u8,
    pub lower: V3,
    pub upper: V3,
    pub periodic: [bool; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricField {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default = "default_provider")]
    pub provider: Provider,
    /// Time interval I = [t_min, t_max].
    #[serde(default = "default_interval")]
    pub interval: [f64; 2],
    /// Half-width of a coordinate box |x^i| ≤ cutoff bounding the chart.
    #[serde(default)]
    pub cutoff: Option<f64>,
}

fn default_provider() -> Provider {
    Provider::Analytic
}

fn default_interval() -> [f64; 2] {
    [-10.0, 10.0]
}

/// Excluded polar caps of the spherical-cylinder charts.
pub const THETA_MIN: f64 = 1e-3;
/// Chart handoff threshold: switch when sin θ drops below this.
pub const HANDOFF_SIN: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct MetricSample {
    pub point: SpacetimePoint,
    pub n: f64,
    pub dn: V4,
    pub g: M3,
    pub ginv: M3,
    /// dg[μ][i][j] = ∂_μ g_ij with μ = 0 for t.
    pub dg: [M3; 4],
    pub d2g: [[M3; 4]; 4],
    pub k: M3,
    pub g4: M4,
    pub ginv4: M4,
    pub christoffel4: Chr<4>,
    /// Zero unless curvature was requested.
    pub riemann: Riem<4>,
    pub has_riemann: bool,
    /// (step, order) when produced by finite differences.
    pub fd: Option<(f64, u8)>,
}

impl MetricSample {
    /// Future unit normal T = n⁻¹ ∂_t.
    pub fn t_vector(&self) -> V4 {
        [1.0 / self.n, 0.0, 0.0, 0.0]
    }

    pub fn dot(&self, a: &V4, b: &V4) -> f64 {
        tensor::dot_g(&self.g4, a, b)
    }

    /// Gram–Schmidt triad of the coordinate basis in order x¹, x², x³.
    pub fn spatial_triad(&self) -> [V3; 3] {
        gram_schmidt3(&self.g)
    }

    /// Covariant derivative (DT)(X, Y) = g(D_X T, Y) as a 4×4 array [X][Y].
    pub fn dt_tensor(&self) -> M4 {
        // D_α T_β = ∂_α T_β − Γ^λ_{αβ} T_λ with T_λ = (−n, 0, 0, 0)
        let mut d = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                let dtb = if b == 0 { -self.dn[a] } else { 0.0 };
                d[a][b] = dtb + self.n * self.christoffel4[0][a][b];
            }
        }
        d
    }

    /// Deformation tensor of T computed from the connection, π = 2 sym(DT).
    pub fn geometric_pi(&self) -> M4 {
        let d = self.dt_tensor();
        let mut p = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                p[a][b] = d[a][b] + d[b][a];
            }
        }
        p
    }
}

pub fn gram_schmidt3(g: &M3) -> [V3; 3] {
    let mut e = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for i in 0..3 {
        for j in 0..i {
            let p = tensor::dot_g(g, &e[i], &e[j]);
            let ej = e[j];
            e[i] = tensor::add_scaled(&e[i], -p, &ej);
        }
        let nrm = tensor::dot_g(g, &e[i], &e[i]).sqrt();
        e[i] = tensor::scale(1.0 / nrm, &e[i]);
    }
    e
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeformationSample {
    pub pi00: f64,
    pub pi0i: V3,
    pub piij: M3,
    pub pointwise_norm: f64,
}

/// Tensor given by its components in an orthonormal frame (T, e₁, e₂, e₃).
#[derive(Clone, Debug)]
pub struct FrameTensor {
    pub rank: usize,
    /// Row-major components, 4^rank entries.
    pub data: Vec<f64>,
}

/// Norm induced by ḡ(X, Y) = X⁰Y⁰ + g(X̄, Ȳ).
pub fn riemannian_norm(t: &FrameTensor) -> Result<f64> {
    if t.rank > 4 {
        return Err(Error::RankUnsupported(t.rank));
    }
    if t.data.len() != 4usize.pow(t.rank as u32) {
        return Err(Error::InvalidArgument(format!("expected {} components", 4usize.pow(t.rank as u32))));
    }
    Ok(t.data.iter().map(|v| v * v).sum::<f64>().sqrt())
}

impl Family {
    /// Lapse and spatial metric at chart coordinates (t, x).
    pub fn eval<S: Scalar>(&self, t: S, x: [S; 3]) -> (S, [[S; 3]; 3]) {
        let one = S::cst(1.0);
        let zero = S::cst(0.0);
        let delta = |c: S| [[c, zero, zero], [zero, c, zero], [zero, zero, c]];
        match *self {
            Family::Minkowski | Family::FlatTorus { .. } => (one, delta(one)),
            Family::ConstantLapse { lapse } => (S::cst(lapse), delta(one)),
            Family::LapseBump { amplitude, width } => {
                let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                let n = (r2 * (-1.0 / (width * width))).exp() * amplitude + 1.0;
                (n, delta(one))
            }
            Family::Exponential { rate } => (one, delta((t * (-2.0 * rate)).exp())),
            Family::PerturbedTorus { period, eps, drift } => {
                let kappa = 2.0 * PI / period;
                let b = (x[0] * kappa).cos() * (x[1] * kappa).cos() * (x[2] * kappa).cos();
                let n = b * eps + 1.0;
                let c = (t * b * (2.0 * eps * drift)).exp();
                (n, delta(c))
            }
            Family::SphericalCylinder { radius } => {
                let s = x[0].sin();
                let r2 = radius * radius;
                let g = [[S::cst(r2), zero, zero], [zero, s * s * r2, zero], [zero, zero, one]];
                (one, g)
            }
        }
    }

    /// Flat families: vanishing connection in the transported chart.
    pub fn is_flat(&self) -> bool {
        matches!(self, Family::Minkowski | Family::FlatTorus { .. } | Family::ConstantLapse { .. })
    }

    pub fn is_static(&self) -> bool {
        match self {
            Family::Exponential { rate } => *rate == 0.0,
            Family::PerturbedTorus { drift, eps, .. } => *drift == 0.0 || *eps == 0.0,
            _ => true,
        }
    }

    pub fn period(&self) -> Option<f64> {
        match self {
            Family::FlatTorus { period } | Family::PerturbedTorus { period, .. } => Some(*period),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Minkowski => "minkowski",
            Family::ConstantLapse { .. } => "constant_lapse",
            Family::LapseBump { .. } => "lapse_bump",
            Family::Exponential { .. } => "exponential",
            Family::FlatTorus { .. } => "flat_torus",
            Family::PerturbedTorus { .. } => "perturbed_torus",
            Family::SphericalCylinder { .. } => "spherical_cylinder",
        }
    }
}

struct Jets {
    n: Jet,
    g: [[Jet; 3]; 3],
}

impl MetricField {
    pub fn new(family: Family) -> Self {
        MetricField { family, provider: Provider::Analytic, interval: [-10.0, 10.0], cutoff: None }
    }

    pub fn with_provider(mut self, provider: Provider) -> Self {
        self.provider = provider;
        self
    }

    pub fn with_interval(mut self, lo: f64, hi: f64) -> Self {
        self.interval = [lo, hi];
        self
    }

    pub fn with_cutoff(mut self, half_width: f64) -> Self {
        self.cutoff = Some(half_width);
        self
    }

    pub fn chart_scale(&self) -> f64 {
        match self.family {
            Family::FlatTorus { period } | Family::PerturbedTorus { period, .. } => period,
            Family::SphericalCylinder { radius } => radius,
            _ => 1.0,
        }
    }

    pub fn is_cylinder(&self) -> bool {
        matches!(self.family, Family::SphericalCylinder { .. })
    }

    pub fn atlas(&self) -> Vec<ChartDescriptor> {
        let inf = f64::INFINITY;
        match self.family {
            Family::FlatTorus { period } | Family::PerturbedTorus { period, .. } => vec![ChartDescriptor {
                id: 0,
                lower: [0.0; 3],
                upper: [period; 3],
                periodic: [true; 3],
            }],
            Family::SphericalCylinder { .. } => {
                let zc = self.cutoff.unwrap_or(inf);
                (0..2)
                    .map(|id| ChartDescriptor {
                        id,
                        lower: [THETA_MIN, -inf, -zc],
                        upper: [PI - THETA_MIN, inf, zc],
                        periodic: [false, true, false],
                    })
                    .collect()
            }
            _ => {
                let c = self.cutoff.unwrap_or(inf);
                vec![ChartDescriptor { id: 0, lower: [-c; 3], upper: [c; 3], periodic: [false; 3] }]
            }
        }
    }

    pub fn locate(&self, p: &SpacetimePoint) -> Result<()> {
        let outside = Error::PointOutsideAtlas { t: p.t, x: p.x };
        if !p.t.is_finite() || p.x.iter().any(|v| !v.is_finite()) {
            return Err(outside);
        }
        let atlas = self.atlas();
        let chart = atlas.iter().find(|c| c.id == p.chart).ok_or(outside.clone())?;
        for i in 0..3 {
            if !chart.periodic[i] && (p.x[i] < chart.lower[i] || p.x[i] > chart.upper[i]) {
                return Err(outside);
            }
        }
        Ok(())
    }

    /// Wrapped coordinates and winding numbers on periodic axes.
    pub fn wrap(&self, x: &V3) -> (V3, [i64; 3]) {
        match self.family.period() {
            Some(l) => {
                let mut w = [0i64; 3];
                let mut y = *x;
                for i in 0..3 {
                    let k = (x[i] / l).floor();
                    w[i] = k as i64;
                    y[i] = x[i] - k * l;
                }
                (y, w)
            }
            None => (*x, [0; 3]),
        }
    }

    /// Lapse and spatial metric as plain numbers.
    pub fn lapse_metric(&self, t: f64, x: &V3) -> (f64, M3) {
        self.family.eval(t, *x)
    }

    fn analytic_jets(&self, p: &SpacetimePoint) -> Jets {
        let t = Jet::var(p.t, 0);
        let x = [Jet::var(p.x[0], 1), Jet::var(p.x[1], 2), Jet::var(p.x[2], 3)];
        let (n, g) = self.family.eval(t, x);
        Jets { n, g }
    }

    fn fd_values(&self, q: &[f64; 4]) -> [f64; 7] {
        let (n, g) = self.family.eval(q[0], [q[1], q[2], q[3]]);
        [n, g[0][0], g[0][1], g[0][2], g[1][1], g[1][2], g[2][2]]
    }

    pub fn default_fd_step(&self) -> f64 {
        1e-4 * self.chart_scale()
    }

    fn fd_jets(&self, p: &SpacetimePoint, h: f64, order: u8) -> Jets {
        let base = [p.t, p.x[0], p.x[1], p.x[2]];
        let at = |offs: &[(usize, f64)]| {
            let mut q = base;
            for &(a, d) in offs {
                q[a] += d;
            }
            self.fd_values(&q)
        };
        let f0 = at(&[]);
        let mut out = [Jet::constant(0.0); 7];
        for c in 0..7 {
            out[c].v = f0[c];
        }
        let (pts, w1, w2): (Vec<f64>, Vec<f64>, Vec<f64>) = if order == 2 {
            (vec![-1.0, 1.0], vec![-0.5, 0.5], vec![1.0, 1.0])
        } else {
            (
                vec![-2.0, -1.0, 1.0, 2.0],
                vec![1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0],
                vec![-1.0 / 12.0, 16.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0],
            )
        };
        let w2_center = if order == 2 { -2.0 } else { -30.0 / 12.0 };
        let mut single = vec![[[0.0; 7]; 4]; pts.len()];
        for a in 0..4 {
            for (k, &m) in pts.iter().enumerate() {
                single[k][a] = at(&[(a, m * h)]);
            }
        }
        for c in 0..7 {
            for a in 0..4 {
                let mut d1 = 0.0;
                let mut d2 = w2_center * f0[c];
                for k in 0..pts.len() {
                    d1 += w1[k] * single[k][a][c];
                    d2 += w2[k] * single[k][a][c];
                }
                out[c].d[a] = d1 / h;
                out[c].h[a][a] = d2 / (h * h);
            }
        }
        for a in 0..4 {
            for b in a + 1..4 {
                let mut acc = [0.0; 7];
                for (i, &mi) in pts.iter().enumerate() {
                    for (j, &mj) in pts.iter().enumerate() {
                        let v = at(&[(a, mi * h), (b, mj * h)]);
                        for c in 0..7 {
                            acc[c] += w1[i] * w1[j] * v[c];
                        }
                    }
                }
                for c in 0..7 {
                    out[c].h[a][b] = acc[c] / (h * h);
                    out[c].h[b][a] = acc[c] / (h * h);
                }
            }
        }
        let g = [[out[1], out[2], out[3]], [out[2], out[4], out[5]], [out[3], out[5], out[6]]];
        Jets { n: out[0], g }
    }

    /// Pointwise geometry including curvature.
    pub fn sample(&self, p: &SpacetimePoint) -> Result<MetricSample> {
        self.geometry(p, true)
    }

    /// Pointwise geometry; curvature only when `with_riemann`.
    pub fn geometry(&self, p: &SpacetimePoint, with_riemann: bool) -> Result<MetricSample> {
        self.locate(p)?;
        if self.family.is_flat() {
            let (n, g) = self.lapse_metric(p.t, &p.x);
            let mut g4 = [[0.0; 4]; 4];
            let mut ginv4 = [[0.0; 4]; 4];
            g4[0][0] = -n * n;
            ginv4[0][0] = -1.0 / (n * n);
            for i in 0..3 {
                g4[i + 1][i + 1] = 1.0;
                ginv4[i + 1][i + 1] = 1.0;
            }
            return Ok(MetricSample {
                point: *p,
                n,
                dn: [0.0; 4],
                g,
                ginv: g,
                dg: [[[0.0; 3]; 3]; 4],
                d2g: [[[[0.0; 3]; 3]; 4]; 4],
                k: [[0.0; 3]; 3],
                g4,
                ginv4,
                christoffel4: [[[0.0; 4]; 4]; 4],
                riemann: [[[[0.0; 4]; 4]; 4]; 4],
                has_riemann: with_riemann,
                fd: None,
            });
        }
        let (jets, fd) = match self.provider {
            Provider::Analytic => (self.analytic_jets(p), None),
            Provider::FiniteDifference { step, order } => {
                let h = step.unwrap_or_else(|| self.default_fd_step());
                let order = if order == 2 { 2 } else { 4 };
                (self.fd_jets(p, h, order), Some((h, order)))
            }
        };
        assemble(p, &jets, with_riemann, fd)
    }

    pub fn second_fundamental_form(&self, p: &SpacetimePoint) -> Result<M3> {
        Ok(self.geometry(p, false)?.k)
    }

    /// π with π₀₀ = 0, π_{0i} = ∂_i log n, π_ij = −2 k_ij.
    pub fn deformation_tensor(&self, p: &SpacetimePoint) -> Result<DeformationSample> {
        let s = self.geometry(p, false)?;
        Ok(deformation_from_sample(&s))
    }

    pub fn chart_transition(&self, x: &V3, from: u8) -> (u8, V3, M3) {
        cylinder_transition(x, from)
    }

    /// Point in an ambient Euclidean space used for proximity searches.
    pub fn embed(&self, p: &SpacetimePoint) -> [f64; 4] {
        match self.family {
            Family::SphericalCylinder { radius } => {
                let n = cylinder_ambient(&p.x, p.chart);
                [radius * n[0], radius * n[1], radius * n[2], p.x[2]]
            }
            _ => {
                let (w, _) = self.wrap(&p.x);
                [w[0], w[1], w[2], 0.0]
            }
        }
    }

    /// Coordinate separation of two slice points, using the minimal periodic
    /// image on tori and the chordal ambient distance on the cylinder.
    pub fn separation(&self, a: &SpacetimePoint, b: &SpacetimePoint) -> f64 {
        match self.family {
            Family::SphericalCylinder { .. } => {
                let (ea, eb) = (self.embed(a), self.embed(b));
                (0..4).map(|i| (ea[i] - eb[i]).powi(2)).sum::<f64>().sqrt()
            }
            _ => {
                let mut d = [0.0; 3];
                for i in 0..3 {
                    d[i] = a.x[i] - b.x[i];
                    if let Some(l) = self.family.period() {
                        d[i] -= l * (d[i] / l).round();
                    }
                }
                let mid = SpacetimePoint::new(0.5 * (a.t + b.t), [0.5 * (a.x[0] + b.x[0]), 0.5 * (a.x[1] + b.x[1]), 0.5 * (a.x[2] + b.x[2])]);
                let (_, g) = self.lapse_metric(mid.t, &mid.x);
                tensor::dot_g(&g, &d, &d).max(0.0).sqrt()
            }
        }
    }
}

pub fn deformation_from_sample(s: &MetricSample) -> DeformationSample {
    let mut pi0i = [0.0; 3];
    let mut piij = [[0.0; 3]; 3];
    for i in 0..3 {
        pi0i[i] = s.dn[i + 1] / s.n;
        for j in 0..3 {
            piij[i][j] = -2.0 * s.k[i][j];
        }
    }
    let e = s.spatial_triad();
    let mut data = vec![0.0; 16];
    for a in 0..3 {
        let v: f64 = (0..3).map(|i| e[a][i] * pi0i[i]).sum();
        data[a + 1] = v;
        data[4 * (a + 1)] = v;
        for b in 0..3 {
            let mut w = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    w += e[a][i] * e[b][j] * piij[i][j];
                }
            }
            data[4 * (a + 1) + b + 1] = w;
        }
    }
    let pointwise_norm = riemannian_norm(&FrameTensor { rank: 2, data }).unwrap_or(0.0);
    DeformationSample { pi00: 0.0, pi0i, piij, pointwise_norm }
}

fn positive_definite(g: &M3) -> bool {
    let m1 = g[0][0];
    let m2 = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    m1 > 0.0 && m2 > 0.0 && tensor::det3(g) > 0.0
}

fn assemble(p: &SpacetimePoint, j: &Jets, with_riemann: bool, fd: Option<(f64, u8)>) -> Result<MetricSample> {
    let n = j.n.v;
    let mut g = [[0.0; 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            g[i][k] = j.g[i][k].v;
        }
    }
    if !(n > 0.0) || !positive_definite(&g) {
        return Err(Error::DegenerateMetric { t: p.t, x: p.x });
    }
    let ginv = tensor::inv3(&g).ok_or(Error::DegenerateMetric { t: p.t, x: p.x })?;
    let mut g4 = [[0.0; 4]; 4];
    let mut ginv4 = [[0.0; 4]; 4];
    let mut dg4 = [[[0.0; 4]; 4]; 4];
    let mut d2g4 = [[[[0.0; 4]; 4]; 4]; 4];
    g4[0][0] = -n * n;
    ginv4[0][0] = -1.0 / (n * n);
    let mut dg = [[[0.0; 3]; 3]; 4];
    let mut d2g = [[[[0.0; 3]; 3]; 4]; 4];
    for m in 0..4 {
        dg4[m][0][0] = -2.0 * n * j.n.d[m];
        for q in 0..4 {
            d2g4[m][q][0][0] = -2.0 * (j.n.d[m] * j.n.d[q] + n * j.n.h[m][q]);
        }
    }
    for a in 0..3 {
        for b in 0..3 {
            g4[a + 1][b + 1] = g[a][b];
            ginv4[a + 1][b + 1] = ginv[a][b];
            for m in 0..4 {
                dg4[m][a + 1][b + 1] = j.g[a][b].d[m];
                dg[m][a][b] = j.g[a][b].d[m];
                for q in 0..4 {
                    d2g4[m][q][a + 1][b + 1] = j.g[a][b].h[m][q];
                    d2g[m][q][a][b] = j.g[a][b].h[m][q];
                }
            }
        }
    }
    let (chr, riem) = tensor::connection::<4>(&g4, &ginv4, &dg4, if with_riemann { Some(&d2g4) } else { None });
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = -2.0 / n * dg[0][a][b];
        }
    }
    Ok(MetricSample {
        point: *p,
        n,
        dn: j.n.d,
        g,
        ginv,
        dg,
        d2g,
        k,
        g4,
        ginv4,
        christoffel4: chr,
        riemann: riem.unwrap_or([[[[0.0; 4]; 4]; 4]; 4]),
        has_riemann: with_riemann,
        fd,
    })
}

/// Ambient unit vector of chart coordinates (θ, φ); chart 1 is rotated so
/// that its polar axis is the ambient x-axis.
pub fn cylinder_ambient(x: &V3, chart: u8) -> V3 {
    let (st, ct) = x[0].sin_cos();
    let (sp, cp) = x[1].sin_cos();
    let m = [st * cp, st * sp, ct];
    if chart == 0 {
        m
    } else {
        [m[2], m[0], m[1]]
    }
}

fn ambient_to_chart(n: &V3, chart: u8) -> V3 {
    if chart == 0 {
        *n
    } else {
        [n[1], n[2], n[0]]
    }
}

/// Coordinates in the other chart and the Jacobian ∂x'/∂x.
pub fn cylinder_transition(x: &V3, from: u8) -> (u8, V3, M3) {
    let to = 1 - from.min(1);
    let (st, ct) = x[0].sin_cos();
    let (sp, cp) = x[1].sin_cos();
    let e_theta = [ct * cp, ct * sp, -st];
    let e_phi_st = [-sp * st, cp * st, 0.0];
    let amb = cylinder_ambient(x, from);
    let amb_t = if from == 0 { e_theta } else { [e_theta[2], e_theta[0], e_theta[1]] };
    let amb_p = if from == 0 { e_phi_st } else { [e_phi_st[2], e_phi_st[0], e_phi_st[1]] };
    let m = ambient_to_chart(&amb, to);
    let th = m[2].clamp(-1.0, 1.0).acos();
    let ph = m[1].atan2(m[0]);
    let (st2, ct2) = th.sin_cos();
    let (sp2, cp2) = ph.sin_cos();
    let et2 = [ct2 * cp2, ct2 * sp2, -st2];
    let ep2 = [-sp2, cp2, 0.0];
    let dt = ambient_to_chart(&amb_t, to);
    let dp = ambient_to_chart(&amb_p, to);
    let dot = |a: &V3, b: &V3| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let jac = [
        [dot(&et2, &dt), dot(&et2, &dp), 0.0],
        [dot(&ep2, &dt) / st2, dot(&ep2, &dp) / st2, 0.0],
        [0.0, 0.0, 1.0],
    ];
    (to, [th, ph, x[2]], jac)
}

/// Declared constants; omitted entries take their defaults.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct AssumptionBudget {
    #[serde(rename = "N0")]
    pub n0: f64,
    #[serde(rename = "K0")]
    pub k0: f64,
    #[serde(rename = "R0")]
    pub r0_curv: f64,
    #[serde(rename = "I0")]
    pub i0: f64,
    pub rho0: f64,
    pub epsilon: f64,
    pub r0: f64,
    pub delta_star: f64,
    pub delta0: f64,
    pub epsilon0: f64,
    pub varpi: f64,
}

impl Default for AssumptionBudget {
    fn default() -> Self {
        AssumptionBudget {
            n0: 2.0,
            k0: 1.0,
            r0_curv: 1.0,
            i0: 2.0,
            rho0: 1.0,
            epsilon: 0.01,
            r0: 3.0,
            delta_star: 0.5,
            delta0: 0.1,
            epsilon0: 0.1,
            varpi: 0.1,
        }
    }
}

impl AssumptionBudget {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.n0,
            self.k0,
            self.r0_curv,
            self.i0,
            self.rho0,
            self.epsilon,
            self.r0,
            self.delta_star,
            self.delta0,
            self.epsilon0,
            self.varpi,
        ];
        if all.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Scenario("budget entries must be strictly positive".into()));
        }
        if self.n0 < 1.0 {
            return Err(Error::Scenario("N0 must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BudgetAudit {
    pub samples: usize,
    pub sup_n: f64,
    pub sup_n_inv: f64,
    pub sup_pi: f64,
    pub interval_length: f64,
    pub pi_times_interval: f64,
    pub lapse_ok: bool,
    pub deformation_ok: bool,
    pub passed: bool,
}

/// Regular sample grid over the scenario domain: `nt` times and `nx`³ points.
pub fn audit_grid(metric: &MetricField, nt: usize, nx: usize) -> Vec<SpacetimePoint> {
    let [t0, t1] = metric.interval;
    let mut out = Vec::new();
    let boxes: Vec<(V3, V3, u8)> = match metric.family {
        Family::SphericalCylinder { .. } => {
            let zc = metric.cutoff.unwrap_or(metric.chart_scale());
            vec![([0.2, 0.0, -zc], [PI - 0.2, 2.0 * PI, zc], 0)]
        }
        _ => {
            let (lo, hi) = match metric.family.period() {
                Some(l) => ([0.0; 3], [l; 3]),
                None => {
                    let c = metric.cutoff.unwrap_or(2.0);
                    ([-c; 3], [c; 3])
                }
            };
            vec![(lo, hi, 0)]
        }
    };
    for it in 0..nt {
        let t = if nt == 1 { t0 } else { t0 + (t1 - t0) * it as f64 / (nt - 1) as f64 };
        for (lo, hi, chart) in &boxes {
            for i in 0..nx {
                for j in 0..nx {
                    for k in 0..nx {
                        let f = |m: usize, a: usize| lo[a] + (hi[a] - lo[a]) * (m as f64 + 0.5) / nx as f64;
                        out.push(SpacetimePoint { t, x: [f(i, 0), f(j, 1), f(k, 2)], chart: *chart });
                    }
                }
            }
        }
    }
    out
}

pub fn budget_audit(metric: &MetricField, budget: &AssumptionBudget, grid: &[SpacetimePoint]) -> BudgetAudit {
    let mut sup_n: f64 = 0.0;
    let mut sup_n_inv: f64 = 0.0;
    let mut sup_pi: f64 = 0.0;
    let mut count = 0;
    for p in grid {
        if let Ok(s) = metric.geometry(p, false) {
            count += 1;
            sup_n = sup_n.max(s.n);
            sup_n_inv = sup_n_inv.max(1.0 / s.n);
            sup_pi = sup_pi.max(deformation_from_sample(&s).pointwise_norm);
        }
    }
    let interval_length = metric.interval[1] - metric.interval[0];
    let pi_times_interval = interval_length * sup_pi;
    let lapse_ok = sup_n <= budget.n0 && sup_n_inv <= budget.n0;
    let deformation_ok = pi_times_interval <= budget.k0;
    BudgetAudit {
        samples: count,
        sup_n,
        sup_n_inv,
        sup_pi,
        interval_length,
        pi_times_interval,
        lapse_ok,
        deformation_ok,
        passed: lapse_ok && deformation_ok && count > 0,
    }
}

/// Closeness of (n/n(p), g_ij) to (1, δ_ij) on a coordinate box of
/// half-width `radius` around p over t ∈ [t(p) − depth, t(p)].
pub fn closeness_audit(metric: &MetricField, p: &SpacetimePoint, radius: f64, depth: f64, m: usize) -> Result<f64> {
    let (np, _) = metric.lapse_metric(p.t, &p.x);
    let mut eps: f64 = 0.0;
    for it in 0..=m {
        let t = p.t - depth * it as f64 / m as f64;
        for i in 0..=m {
            for j in 0..=m {
                for k in 0..=m {
                    let f = |q: usize, a: usize| p.x[a] - radius + 2.0 * radius * q as f64 / m as f64;
                    let x = [f(i, 0), f(j, 1), f(k, 2)];
                    let q = SpacetimePoint { t, x, chart: p.chart };
                    metric.locate(&q)?;
                    let (n, g) = metric.lapse_metric(t, &x);
                    eps = eps.max((n / np - 1.0).abs());
                    for a in 0..3 {
                        for b in 0..3 {
                            let d = if a == b { 1.0 } else { 0.0 };
                            eps = eps.max((g[a][b] - d).abs());
                        }
                    }
                }
            }
        }
    }
    Ok(eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ricci(s: &MetricSample) -> M4 {
        let mut r = [[0.0; 4]; 4];
        for b in 0..4 {
            for d in 0..4 {
                let mut v = 0.0;
                for a in 0..4 {
                    for c in 0..4 {
                        v += s.ginv4[a][c] * s.riemann[a][b][c][d];
                    }
                }
                r[b][d] = v;
            }
        }
        r
    }

    #[test]
    fn minkowski_sample_vanishes() {
        let m = MetricField::new(Family::Minkowski);
        let s = m.sample(&SpacetimePoint::new(0.3, [1.0, -2.0, 0.5])).unwrap();
        assert!(s.christoffel4.iter().flatten().flatten().all(|v| *v == 0.0));
        assert!(s.riemann.iter().flatten().flatten().flatten().all(|v| *v == 0.0));
        assert!(s.k.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn torus_wraps_with_winding() {
        let m = MetricField::new(Family::FlatTorus { period: 1.0 });
        let (x, w) = m.wrap(&[1.25, -0.25, 0.5]);
        assert!((x[0] - 0.25).abs() < 1e-15 && (x[1] - 0.75).abs() < 1e-15);
        assert_eq!(w, [1, -1, 0]);
    }

    #[test]
    fn round_sphere_curvature() {
        let m = MetricField::new(Family::SphericalCylinder { radius: 1.0 });
        for th in [PI / 2.0, 1.0, 2.3] {
            let s = m.sample(&SpacetimePoint::new(0.0, [th, 0.4, 0.0])).unwrap();
            assert!((s.riemann[1][2][1][2] - th.sin().powi(2)).abs() < 1e-13);
            assert!(s.riemann[1][3][1][3].abs() < 1e-15);
        }
    }

    #[test]
    fn exponential_second_fundamental_form() {
        let m = MetricField::new(Family::Exponential { rate: 1.0 });
        let t = 0.3;
        let k = m.second_fundamental_form(&SpacetimePoint::new(t, [0.1, 0.2, 0.3])).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { 4.0 * (-2.0 * t).exp() } else { 0.0 };
                assert!((k[a][b] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn bump_deformation_matches_difference_quotient() {
        let m = MetricField::new(Family::LapseBump { amplitude: 0.01, width: 1.0 });
        let d0 = m.deformation_tensor(&SpacetimePoint::new(0.0, [0.0; 3])).unwrap();
        assert!(d0.pi0i.iter().all(|v| v.abs() < 1e-16));
        let d = m.deformation_tensor(&SpacetimePoint::new(0.0, [1.0, 0.0, 0.0])).unwrap();
        let h = 1e-6;
        let ln = |x: f64| m.lapse_metric(0.0, &[x, 0.0, 0.0]).0.ln();
        let oracle = (ln(1.0 + h) - ln(1.0 - h)) / (2.0 * h);
        assert!(((d.pi0i[0] - oracle) / oracle).abs() < 1e-6);
        assert_eq!(d.pi00, 0.0);
    }

    #[test]
    fn riemannian_norm_cases() {
        let mut t = vec![0.0; 4];
        t[0] = 1.0;
        assert_eq!(riemannian_norm(&FrameTensor { rank: 1, data: t }).unwrap(), 1.0);
        let mut e = vec![0.0; 16];
        e[5] = 3.0;
        assert_eq!(riemannian_norm(&FrameTensor { rank: 2, data: e }).unwrap(), 3.0);
        assert!(matches!(
            riemannian_norm(&FrameTensor { rank: 5, data: vec![0.0; 1024] }),
            Err(Error::RankUnsupported(5))
        ));
    }

    #[test]
    fn budget_audit_examples() {
        let grid_m = |m: &MetricField| audit_grid(m, 3, 6);
        let mink = MetricField::new(Family::Minkowski).with_cutoff(2.0).with_interval(-1.0, 0.0);
        let b = AssumptionBudget { n0: 2.0, k0: 1.0, ..Default::default() };
        let a = budget_audit(&mink, &b, &grid_m(&mink));
        assert!(a.passed && a.sup_pi == 0.0);

        let bump = MetricField::new(Family::LapseBump { amplitude: 0.01, width: 1.0 }).with_cutoff(1.0);
        let b2 = AssumptionBudget { n0: 1.005, k0: 10.0, ..Default::default() };
        let mut grid = grid_m(&bump);
        grid.push(SpacetimePoint::new(0.0, [0.0; 3]));
        let a2 = budget_audit(&bump, &b2, &grid);
        assert!(!a2.lapse_ok && (a2.sup_n - 1.01).abs() < 1e-12);
    }

    #[test]
    fn fd_christoffel_converges_at_second_order() {
        let fam = Family::PerturbedTorus { period: 1.0, eps: 0.05, drift: 0.5 };
        let p = SpacetimePoint::new(0.2, [0.13, 0.37, 0.71]);
        let exact = MetricField::new(fam.clone()).geometry(&p, false).unwrap();
        let err = |h: f64| {
            let m = MetricField::new(fam.clone()).with_provider(Provider::FiniteDifference { step: Some(h), order: 2 });
            let s = m.geometry(&p, false).unwrap();
            let mut e: f64 = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    for c in 0..4 {
                        e = e.max((s.christoffel4[a][b][c] - exact.christoffel4[a][b][c]).abs());
                    }
                }
            }
            e
        };
        let r = err(2e-3) / err(1e-3);
        assert!((3.5..=4.5).contains(&r), "ratio {r}");
    }

    #[test]
    fn cylinder_is_not_ricci_flat_but_flat_families_are() {
        let cyl = MetricField::new(Family::SphericalCylinder { radius: 1.0 });
        let s = cyl.sample(&SpacetimePoint::new(0.0, [1.2, 0.0, 0.0])).unwrap();
        assert!((ricci(&s)[1][1] - 1.0).abs() < 1e-12);
        let tor = MetricField::new(Family::FlatTorus { period: 1.0 })
            .with_provider(Provider::FiniteDifference { step: None, order: 4 });
        let s = tor.sample(&SpacetimePoint::new(0.0, [0.2, 0.3, 0.4])).unwrap();
        assert!(ricci(&s).iter().flatten().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn chart_transition_round_trip() {
        let x = [0.3, 1.1, 0.7];
        let (c1, y, j) = cylinder_transition(&x, 0);
        assert_eq!(c1, 1);
        let (c0, z, j2) = cylinder_transition(&y, 1);
        assert_eq!(c0, 0);
        for i in 0..3 {
            assert!((z[i] - x[i]).abs() < 1e-12);
        }
        for a in 0..3 {
            for b in 0..3 {
                let v: f64 = (0..3).map(|k| j2[a][k] * j[k][b]).sum();
                assert!((v - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let a0 = cylinder_ambient(&x, 0);
        let a1 = cylinder_ambient(&y, 1);
        for i in 0..3 {
            assert!((a0[i] - a1[i]).abs() < 1e-12);
        }
    }
}
