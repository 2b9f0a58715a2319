//! Past null geodesics from a base point, their Jacobi fields and the
//! exponential map over an ω-grid.
//!
//! The full ray state has 35 components:
//! x (0..4), v (4..8), J₁ (8..12), DJ₁ (12..16), J₂ (16..20), DJ₂ (20..24),
//! parallel screen Ê₁ (24..28), Ê₂ (28..32), u = g(T, L) (32) and the
//! transported tilt ψ (33..35).

use crate::error::{Error, Result};
use crate::frames::{self, NullFrame};
use crate::icosphere::Icosphere;
use crate::metric::{MetricField, MetricSample, SpacetimePoint, HANDOFF_SIN};
use crate::ode::{self, Control, DenseStep, Options, System};
use crate::tensor::{self, M4, V3, V4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DIM_GEO: usize = 8;
pub const DIM_FULL: usize = 35;
pub const IX: usize = 0;
pub const IV: usize = 4;
pub const IJ: [usize; 2] = [8, 16];
pub const IP: [usize; 2] = [12, 20];
pub const IE: [usize; 2] = [24, 28];
pub const IU: usize = 32;
pub const IPSI: usize = 33;

/// A radius that is either measured or beyond the explored horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Radius {
    Finite(f64),
    Beyond { beyond: f64 },
}

impl Radius {
    pub fn value(&self) -> Option<f64> {
        match self {
            Radius::Finite(v) => Some(*v),
            Radius::Beyond { .. } => None,
        }
    }

    pub fn is_beyond(&self) -> bool {
        matches!(self, Radius::Beyond { .. })
    }

    pub fn min(self, other: Radius) -> Radius {
        match (self, other) {
            (Radius::Finite(a), Radius::Finite(b)) => Radius::Finite(a.min(b)),
            (Radius::Finite(a), _) | (_, Radius::Finite(a)) => Radius::Finite(a),
            (Radius::Beyond { beyond: a }, Radius::Beyond { beyond: b }) => Radius::Beyond { beyond: a.min(b) },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    AtlasExit { s_exit: f64 },
    TimeFloor { s: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaySample {
    pub s: f64,
    pub point: SpacetimePoint,
    pub velocity: V4,
    pub winding: [i64; 3],
    pub null_residual: f64,
}

/// Dense output of one step together with the chart it was computed in.
#[derive(Clone, Debug)]
pub struct ChartStep {
    pub chart: u8,
    pub step: DenseStep,
}

#[derive(Clone, Debug, Serialize)]
pub struct NullGeodesic {
    pub base: SpacetimePoint,
    pub omega: V3,
    pub samples: Vec<RaySample>,
    pub null_residual_max: f64,
    pub termination: Termination,
    /// max |g(ẋ, ∂_t) − g(ẋ, ∂_t)(0)|; only meaningful for static metrics.
    pub killing_drift: f64,
    #[serde(skip)]
    pub dense: Vec<ChartStep>,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub s: f64,
    pub y: Vec<f64>,
    pub chart: u8,
}

/// What to record while tracing one ray.
#[derive(Clone, Debug, Default)]
pub struct TraceRequest {
    pub s_max: f64,
    pub full: bool,
    /// Ascending affine parameters at which to snapshot the state.
    pub s_nodes: Vec<f64>,
    /// Descending t-levels at which to snapshot the state.
    pub t_levels: Vec<f64>,
    pub keep_dense: bool,
    pub keep_samples: bool,
    /// Stop once every node and level has been passed.
    pub stop_when_done: bool,
}

#[derive(Clone, Debug)]
pub struct Ray {
    pub index: usize,
    pub omega: V3,
    pub samples: Vec<RaySample>,
    pub dense: Vec<ChartStep>,
    pub s_snaps: Vec<Option<Snapshot>>,
    pub t_snaps: Vec<Option<Snapshot>>,
    /// First zero of the transverse determinant (full traces only).
    pub first_zero: Option<f64>,
    pub termination: Termination,
    pub s_end: f64,
    pub null_residual_max: f64,
    pub killing_drift: f64,
    pub steps: usize,
}

/// Integrator settings scaled to the chart.
pub fn default_options(metric: &MetricField) -> Options {
    let h = if metric.family.is_flat() { 4.0 } else { 0.25 };
    Options { h_max: h * metric.chart_scale(), ..Options::default() }
}

fn v4(y: &[f64], i: usize) -> V4 {
    [y[i], y[i + 1], y[i + 2], y[i + 3]]
}

fn put4(dy: &mut [f64], i: usize, v: &V4) {
    dy[i..i + 4].copy_from_slice(v);
}

/// Γ^α_{βγ} a^β b^γ.
pub fn gamma_ab(chr: &[[[f64; 4]; 4]; 4], a: &V4, b: &V4) -> V4 {
    let mut out = [0.0; 4];
    for al in 0..4 {
        let mut s = 0.0;
        for be in 0..4 {
            if a[be] == 0.0 {
                continue;
            }
            for ga in 0..4 {
                s += chr[al][be][ga] * a[be] * b[ga];
            }
        }
        out[al] = s;
    }
    out
}

/// R^α_{βγδ} a^β b^γ c^δ.
fn riemann_up(geo: &MetricSample, a: &V4, b: &V4, c: &V4) -> V4 {
    let r = &geo.riemann;
    let mut low = [0.0; 4];
    for m in 0..4 {
        let mut s = 0.0;
        for be in 0..4 {
            if a[be] == 0.0 {
                continue;
            }
            for ga in 0..4 {
                if b[ga] == 0.0 {
                    continue;
                }
                for de in 0..4 {
                    s += r[m][be][ga][de] * a[be] * b[ga] * c[de];
                }
            }
        }
        low[m] = s;
    }
    let mut out = [0.0; 4];
    for al in 0..4 {
        for m in 0..4 {
            out[al] += geo.ginv4[al][m] * low[m];
        }
    }
    out
}

fn point_at(y: &[f64]) -> SpacetimePoint {
    SpacetimePoint::new(y[0], [y[1], y[2], y[3]])
}

/// Leaf quantities reconstructed from a full ray state.
#[derive(Clone, Copy, Debug)]
pub struct Leaf {
    /// M_bi = g(J_i, Ê_b).
    pub m: [[f64; 2]; 2],
    pub mdot: [[f64; 2]; 2],
    pub det: f64,
    /// False at the vertex, where χ and ζ are not defined by the Jacobi data.
    pub regular: bool,
    pub chi: [[f64; 2]; 2],
    pub trchi: f64,
    pub chihat_sq: f64,
    pub zeta: [f64; 2],
    pub frame: NullFrame,
    /// φ = 1/g(T, L) from the definition.
    pub phi: f64,
    /// ψ_a = g(e_a, T) from the definition.
    pub psi: [f64; 2],
    pub u_transport: f64,
    pub psi_transport: [f64; 2],
}

fn inv2(m: &[[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let d = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(d.abs() > 1e-300) {
        return None;
    }
    Some([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]])
}

pub fn leaf_geometry(geo: &MetricSample, y: &[f64]) -> Result<Leaf> {
    let l = v4(y, IV);
    let j = [v4(y, IJ[0]), v4(y, IJ[1])];
    let p = [v4(y, IP[0]), v4(y, IP[1])];
    let eh = [v4(y, IE[0]), v4(y, IE[1])];
    let mut m = [[0.0; 2]; 2];
    let mut md = [[0.0; 2]; 2];
    for b in 0..2 {
        for i in 0..2 {
            m[b][i] = geo.dot(&j[i], &eh[b]);
            md[b][i] = geo.dot(&p[i], &eh[b]);
        }
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = geo.dot(&eh[0], &eh[0]).abs().max(1.0);
    let minv = if det.abs() > 1e-200 * scale { inv2(&m) } else { None };
    let t = geo.t_vector();
    let (e, chi, regular) = match minv {
        Some(mi) => {
            let mut e = [[0.0; 4]; 2];
            for a in 0..2 {
                for i in 0..2 {
                    for k in 0..4 {
                        e[a][k] += mi[i][a] * j[i][k];
                    }
                }
            }
            // χ_ab = (M' M⁻¹)_ba
            let mut chi = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    for k in 0..2 {
                        chi[a][b] += md[b][k] * mi[k][a];
                    }
                }
            }
            (e, chi, true)
        }
        None => (eh, [[0.0; 2]; 2], false),
    };
    let frame = frames::null_frame_from_leaf(geo, &l, &e[0], &e[1])?;
    let mut zeta = [0.0; 2];
    if let Some(mi) = minv {
        for a in 0..2 {
            for i in 0..2 {
                zeta[a] += 0.5 * mi[i][a] * geo.dot(&p[i], &frame.lbar);
            }
        }
    }
    let trchi = chi[0][0] + chi[1][1];
    let sym01 = 0.5 * (chi[0][1] + chi[1][0]);
    let h00 = chi[0][0] - 0.5 * trchi;
    let chihat_sq = 2.0 * h00 * h00 + 2.0 * sym01 * sym01;
    let u = geo.dot(&t, &l);
    Ok(Leaf {
        m,
        mdot: md,
        det,
        regular,
        chi,
        trchi,
        chihat_sq,
        zeta,
        frame,
        phi: 1.0 / u,
        psi: [geo.dot(&e[0], &t), geo.dot(&e[1], &t)],
        u_transport: y[IU],
        psi_transport: [y[IPSI], y[IPSI + 1]],
    })
}

/// det M without the full leaf reconstruction.
pub fn transverse_det_of(metric: &MetricField, y: &[f64]) -> f64 {
    let (n, g) = metric.lapse_metric(y[0], &[y[1], y[2], y[3]]);
    let dot = |a: usize, b: usize| {
        let mut s = -n * n * y[a] * y[b];
        for i in 0..3 {
            for k in 0..3 {
                s += g[i][k] * y[a + 1 + i] * y[b + 1 + k];
            }
        }
        s
    };
    let m00 = dot(IJ[0], IE[0]);
    let m01 = dot(IJ[1], IE[0]);
    let m10 = dot(IJ[0], IE[1]);
    let m11 = dot(IJ[1], IE[1]);
    m00 * m11 - m01 * m10
}

/// Right-hand side of the ray system.
pub struct ConeSystem<'a> {
    pub metric: &'a MetricField,
    pub full: bool,
}

impl System for ConeSystem<'_> {
    fn dim(&self) -> usize {
        if self.full {
            DIM_FULL
        } else {
            DIM_GEO
        }
    }

    fn rhs(&self, s: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let geo = self.metric.geometry(&point_at(y), self.full)?;
        let chr = &geo.christoffel4;
        let v = v4(y, IV);
        put4(dy, IX, &v);
        put4(dy, IV, &tensor::scale(-1.0, &gamma_ab(chr, &v, &v)));
        if !self.full {
            return Ok(());
        }
        for k in 0..2 {
            let j = v4(y, IJ[k]);
            let p = v4(y, IP[k]);
            let gj = gamma_ab(chr, &v, &j);
            let gp = gamma_ab(chr, &v, &p);
            let r = riemann_up(&geo, &v, &j, &v);
            let mut dj = [0.0; 4];
            let mut dp = [0.0; 4];
            for a in 0..4 {
                dj[a] = p[a] - gj[a];
                dp[a] = -gp[a] - r[a];
            }
            put4(dy, IJ[k], &dj);
            put4(dy, IP[k], &dp);
            let e = v4(y, IE[k]);
            put4(dy, IE[k], &tensor::scale(-1.0, &gamma_ab(chr, &v, &e)));
        }
        let pi = geo.geometric_pi();
        dy[IU] = 0.5 * quad(&pi, &v, &v);
        if s == 0.0 {
            let dt = geo.dt_tensor();
            for a in 0..2 {
                dy[IPSI + a] = quad(&dt, &v, &v4(y, IE[a]));
            }
        } else {
            let leaf = leaf_geometry(&geo, y)?;
            let dt = geo.dt_tensor();
            for a in 0..2 {
                dy[IPSI + a] = quad(&dt, &v, leaf.frame.e(a)) - y[IU] * leaf.zeta[a];
            }
        }
        Ok(())
    }
}

/// A(a, b) = A_{αβ} a^α b^β.
pub fn quad(m: &M4, a: &V4, b: &V4) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for k in 0..4 {
            s += m[i][k] * a[i] * b[k];
        }
    }
    s
}

/// Initial state for direction ω (unit in the triad frame at p).
pub fn initial_state(metric: &MetricField, p: &SpacetimePoint, omega: &V3, full: bool) -> Result<Vec<f64>> {
    let l = frames::initial_null_vector(metric, p, omega)?;
    let mut y = vec![0.0; if full { DIM_FULL } else { DIM_GEO }];
    y[0] = p.t;
    y[1..4].copy_from_slice(&p.x);
    put4(&mut y, IV, &l);
    if full {
        let geo = metric.geometry(p, false)?;
        let (u1, u2) = frames::screen_basis(omega);
        for (k, u) in [u1, u2].iter().enumerate() {
            let w = frames::triad_image(&geo, u);
            let e = [0.0, w[0], w[1], w[2]];
            put4(&mut y, IP[k], &e);
            put4(&mut y, IE[k], &e);
        }
        y[IU] = 1.0;
    }
    Ok(y)
}

fn null_residual(metric: &MetricField, y: &[f64]) -> f64 {
    let (n, g) = metric.lapse_metric(y[0], &[y[1], y[2], y[3]]);
    let v = &y[IV..IV + 4];
    let mut s = -n * n * v[0] * v[0];
    for i in 0..3 {
        for k in 0..3 {
            s += g[i][k] * v[1 + i] * v[1 + k];
        }
    }
    s.abs()
}

fn killing_energy(metric: &MetricField, y: &[f64]) -> f64 {
    let (n, _) = metric.lapse_metric(y[0], &[y[1], y[2], y[3]]);
    -n * n * y[IV]
}

/// Wrapped point, winding and velocity for a state in a given chart.
pub fn sample_of(metric: &MetricField, s: f64, y: &[f64], chart: u8) -> RaySample {
    let (x, winding) = metric.wrap(&[y[1], y[2], y[3]]);
    RaySample {
        s,
        point: SpacetimePoint { t: y[0], x, chart },
        velocity: v4(y, IV),
        winding,
        null_residual: null_residual(metric, y),
    }
}

/// Re-express every vector block of the state in the other cylinder chart.
fn handoff(metric: &MetricField, y: &[f64], chart: u8) -> (u8, Vec<f64>) {
    let (to, x2, jac) = metric.chart_transition(&[y[1], y[2], y[3]], chart);
    let mut out = y.to_vec();
    out[1..4].copy_from_slice(&x2);
    let mut blocks = vec![IV];
    if y.len() == DIM_FULL {
        blocks.extend_from_slice(&[IJ[0], IP[0], IJ[1], IP[1], IE[0], IE[1]]);
    }
    for b in blocks {
        for i in 0..3 {
            let mut v = 0.0;
            for k in 0..3 {
                v += jac[i][k] * y[b + 1 + k];
            }
            out[b + 1 + i] = v;
        }
    }
    (to, out)
}

/// Integrates one ray and records what `req` asks for.
pub fn trace_ray(
    metric: &MetricField,
    p: &SpacetimePoint,
    omega: &V3,
    index: usize,
    req: &TraceRequest,
    opts: &Options,
) -> Result<Ray> {
    let y0 = initial_state(metric, p, omega, req.full)?;
    let sys = ConeSystem { metric, full: req.full };
    let t_min = metric.interval[0];
    let mut ray = Ray {
        index,
        omega: *omega,
        samples: Vec::new(),
        dense: Vec::new(),
        s_snaps: vec![None; req.s_nodes.len()],
        t_snaps: vec![None; req.t_levels.len()],
        first_zero: None,
        termination: Termination::Completed,
        s_end: 0.0,
        null_residual_max: null_residual(metric, &y0),
        killing_drift: 0.0,
        steps: 0,
    };
    let mut chart = p.chart;
    let e0 = killing_energy(metric, &y0);
    if req.keep_samples {
        ray.samples.push(sample_of(metric, 0.0, &y0, chart));
    }
    let mut next_s = 0;
    while next_s < req.s_nodes.len() && req.s_nodes[next_s] <= 0.0 {
        ray.s_snaps[next_s] = Some(Snapshot { s: 0.0, y: y0.clone(), chart });
        next_s += 1;
    }
    let mut next_t = 0;
    while next_t < req.t_levels.len() && req.t_levels[next_t] >= p.t {
        if req.t_levels[next_t] == p.t {
            ray.t_snaps[next_t] = Some(Snapshot { s: 0.0, y: y0.clone(), chart });
        }
        next_t += 1;
    }
    let mut prev_det_positive = true;
    let mut s_last = 0.0;
    let res = ode::solve(&sys, 0.0, &y0, req.s_max, opts, |st| {
        ray.steps += 1;
        s_last = st.s1;
        let y1 = st.y1;
        ray.null_residual_max = ray.null_residual_max.max(null_residual(metric, y1));
        ray.killing_drift = ray.killing_drift.max((killing_energy(metric, y1) - e0).abs());
        if req.keep_samples {
            ray.samples.push(sample_of(metric, st.s1, y1, chart));
        }
        if req.keep_dense {
            ray.dense.push(ChartStep { chart, step: st.dense()?.restrict(0, DIM_GEO) });
        }
        while next_s < req.s_nodes.len() && req.s_nodes[next_s] <= st.s1 {
            let s = req.s_nodes[next_s];
            ray.s_snaps[next_s] = Some(Snapshot { s, y: st.eval(s)?, chart });
            next_s += 1;
        }
        while next_t < req.t_levels.len() && req.t_levels[next_t] >= y1[0] {
            let level = req.t_levels[next_t];
            let d = st.dense()?;
            let s = ode::bracket_root(
                |s| d.eval(s)[0] - level,
                st.s0,
                st.s1,
                st.y0[0] - level,
                y1[0] - level,
                1e-14 * st.s1.max(1.0),
            );
            let mut y = d.eval(s);
            y[0] = level;
            ray.t_snaps[next_t] = Some(Snapshot { s, y, chart });
            next_t += 1;
        }
        if req.full && ray.first_zero.is_none() {
            let det1 = transverse_det_of(metric, y1);
            if prev_det_positive && det1 <= 0.0 {
                let d = st.dense()?;
                let det0 = if st.s0 == 0.0 { f64::MIN_POSITIVE } else { transverse_det_of(metric, st.y0) };
                let z = ode::bracket_root(
                    |s| transverse_det_of(metric, &d.eval(s)),
                    st.s0,
                    st.s1,
                    det0,
                    det1,
                    1e-14 * st.s1.max(1.0),
                );
                ray.first_zero = Some(z);
            }
            prev_det_positive = det1 > 0.0;
        }
        if y1[0] < t_min {
            ray.termination = Termination::TimeFloor { s: st.s1 };
            return Ok(Control::Stop);
        }
        if req.stop_when_done && next_s == req.s_nodes.len() && next_t == req.t_levels.len() {
            return Ok(Control::Stop);
        }
        if metric.is_cylinder() && y1[1].sin() < HANDOFF_SIN {
            let (to, y2) = handoff(metric, y1, chart);
            chart = to;
            return Ok(Control::Replace(y2));
        }
        Ok(Control::Continue)
    });
    match res {
        Ok(out) => ray.s_end = out.s,
        Err(Error::PointOutsideAtlas { .. }) | Err(Error::DegenerateMetric { .. }) => {
            ray.termination = Termination::AtlasExit { s_exit: s_last };
            ray.s_end = s_last;
        }
        Err(e) => return Err(e),
    }
    Ok(ray)
}

/// Integrates the past null geodesic with initial velocity ℓ_ω up to `s_max`.
pub fn integrate_geodesic(metric: &MetricField, p: &SpacetimePoint, omega: &V3, s_max: f64, opts: &Options) -> Result<NullGeodesic> {
    if !(s_max > 0.0) {
        return Err(Error::InvalidArgument(format!("s_max must be positive, got {s_max}")));
    }
    let req = TraceRequest { s_max, keep_dense: true, keep_samples: true, ..Default::default() };
    let ray = trace_ray(metric, p, omega, 0, &req, opts)?;
    Ok(NullGeodesic {
        base: *p,
        omega: *omega,
        samples: ray.samples,
        null_residual_max: ray.null_residual_max,
        termination: ray.termination,
        killing_drift: ray.killing_drift,
        dense: ray.dense,
    })
}

impl NullGeodesic {
    pub fn s_end(&self) -> f64 {
        self.samples.last().map(|s| s.s).unwrap_or(0.0)
    }

    /// Err(AtlasExit) when the ray stopped at the atlas boundary.
    pub fn require_complete(&self) -> Result<&Self> {
        match self.termination {
            Termination::AtlasExit { s_exit } => Err(Error::AtlasExit { s_exit }),
            _ => Ok(self),
        }
    }

    /// Interpolated (point, velocity) at affine parameter s.
    pub fn at(&self, metric: &MetricField, s: f64) -> Result<(SpacetimePoint, V4, [i64; 3])> {
        let k = self
            .dense
            .iter()
            .position(|c| s <= c.step.s1())
            .filter(|_| s >= 0.0)
            .ok_or(Error::LevelOutOfRange { level: s, lo: 0.0, hi: self.s_end() })?;
        let c = &self.dense[k];
        let y = c.step.eval(s);
        let smp = sample_of(metric, s, &y, c.chart);
        Ok((smp.point, smp.velocity, smp.winding))
    }

    /// CSV rows: omega_index, s, t, x1, x2, x3, v0..v3, null_residual.
    pub fn csv_rows(&self, omega_index: usize) -> Vec<RayRow> {
        self.samples
            .iter()
            .map(|r| RayRow {
                omega_index,
                s: r.s,
                t: r.point.t,
                x1: r.point.x[0],
                x2: r.point.x[1],
                x3: r.point.x[2],
                v0: r.velocity[0],
                v1: r.velocity[1],
                v2: r.velocity[2],
                v3: r.velocity[3],
                null_residual: r.null_residual,
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RayRow {
    pub omega_index: usize,
    pub s: f64,
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub v0: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub null_residual: f64,
}

/// Affine parameter at which a ray reaches `t_level`, with the interpolated
/// point and velocity.
pub fn reparametrize(metric: &MetricField, geo: &NullGeodesic, t_level: f64) -> Result<(f64, SpacetimePoint, V4)> {
    let t0 = geo.base.t;
    if t_level == t0 {
        let s0 = &geo.samples[0];
        return Ok((0.0, s0.point, s0.velocity));
    }
    let t_end = geo.samples.last().map(|s| s.point.t).unwrap_or(t0);
    if !(t_level < t0 && t_level >= t_end) {
        return Err(Error::LevelOutOfRange { level: t_level, lo: t_end, hi: t0 });
    }
    reparametrize_steps(metric, &geo.dense, t_level).ok_or(Error::LevelOutOfRange { level: t_level, lo: t_end, hi: t0 })
}

/// Same as [`reparametrize`] on raw dense steps.
pub fn reparametrize_steps(metric: &MetricField, dense: &[ChartStep], t_level: f64) -> Option<(f64, SpacetimePoint, V4)> {
    let mut hint = 0;
    sample_at_t(metric, dense, t_level, &mut hint).map(|r| (r.s, r.point, r.velocity))
}

/// Ray sample where t = `t_level`. `hint` is a step index to start the
/// search from; it is advanced so that decreasing levels scan forward.
pub fn sample_at_t(metric: &MetricField, dense: &[ChartStep], t_level: f64, hint: &mut usize) -> Option<RaySample> {
    if dense.is_empty() {
        return None;
    }
    let mut k = (*hint).min(dense.len() - 1);
    while k > 0 && dense[k].step.eval(dense[k].step.s0)[0] < t_level {
        k -= 1;
    }
    while k < dense.len() {
        let c = &dense[k];
        let d = &c.step;
        let ta = d.eval(d.s0)[0];
        let tb = d.eval(d.s1())[0];
        if ta >= t_level && tb <= t_level {
            *hint = k;
            let s = ode::bracket_root(|s| d.eval(s)[0] - t_level, d.s0, d.s1(), ta - t_level, tb - t_level, 1e-14 * d.s1().max(1.0));
            let mut y = d.eval(s);
            y[0] = t_level;
            return Some(sample_of(metric, s, &y, c.chart));
        }
        k += 1;
    }
    None
}

#[derive(Clone, Debug, Serialize)]
pub struct JacobiSample {
    pub s: f64,
    pub j: [V4; 2],
    pub dj: [V4; 2],
    pub transverse_det: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct JacobiState {
    pub omega: V3,
    pub samples: Vec<JacobiSample>,
    pub first_zero: Option<f64>,
    #[serde(skip)]
    dense: Vec<DenseStep>,
    #[serde(skip)]
    metric: Option<MetricField>,
}

impl JacobiState {
    /// Transverse determinant at s from the dense output.
    pub fn transverse_det(&self, s: f64) -> Result<f64> {
        let m = self.metric.as_ref().expect("constructed by jacobi_propagate");
        if s == 0.0 {
            return Ok(0.0);
        }
        let hi = self.dense.last().map(|d| d.s1()).unwrap_or(0.0);
        let d = self
            .dense
            .iter()
            .find(|d| s >= d.s0 && s <= d.s1())
            .ok_or(Error::LevelOutOfRange { level: s, lo: 0.0, hi })?;
        Ok(transverse_det_of(m, &d.eval(s)))
    }
}

/// Two transverse Jacobi fields along `geo` with J(0) = 0, DJ(0) = e_a(0).
pub fn jacobi_propagate(metric: &MetricField, geo: &NullGeodesic, opts: &Options) -> Result<JacobiState> {
    let y0 = initial_state(metric, &geo.base, &geo.omega, true)?;
    let sys = ConeSystem { metric, full: true };
    let mut chart = geo.base.chart;
    let mut samples = vec![JacobiSample { s: 0.0, j: [[0.0; 4]; 2], dj: [v4(&y0, IP[0]), v4(&y0, IP[1])], transverse_det: 0.0 }];
    let mut dense = Vec::new();
    let mut first_zero = None;
    let mut prev_pos = true;
    let s_max = geo.s_end();
    if s_max > 0.0 {
        ode::solve(&sys, 0.0, &y0, s_max, opts, |st| {
            let d = st.dense()?;
            let det1 = transverse_det_of(metric, st.y1);
            if first_zero.is_none() && prev_pos && det1 <= 0.0 {
                let det0 = if st.s0 == 0.0 { f64::MIN_POSITIVE } else { transverse_det_of(metric, st.y0) };
                first_zero = Some(ode::bracket_root(
                    |s| transverse_det_of(metric, &d.eval(s)),
                    st.s0,
                    st.s1,
                    det0,
                    det1,
                    1e-14 * st.s1.max(1.0),
                ));
            }
            prev_pos = det1 > 0.0;
            samples.push(JacobiSample {
                s: st.s1,
                j: [v4(st.y1, IJ[0]), v4(st.y1, IJ[1])],
                dj: [v4(st.y1, IP[0]), v4(st.y1, IP[1])],
                transverse_det: det1,
            });
            dense.push(d);
            if metric.is_cylinder() && st.y1[1].sin() < HANDOFF_SIN {
                let (to, y2) = handoff(metric, st.y1, chart);
                chart = to;
                return Ok(Control::Replace(y2));
            }
            Ok(Control::Continue)
        })?;
    }
    Ok(JacobiState { omega: geo.omega, samples, first_zero, dense, metric: Some(metric.clone()) })
}

#[derive(Clone, Debug, Serialize)]
pub struct RayZero {
    pub omega_index: usize,
    pub omega: V3,
    pub first_zero: Radius,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjugacyReport {
    pub s_star: Radius,
    pub argmin: Option<usize>,
    pub rays: Vec<RayZero>,
    /// Rays whose integration failed, with the error message.
    pub excluded: Vec<(usize, String)>,
}

/// Runs `f` on every ray of the grid in parallel, keeping grid order.
pub fn fan_map<T: Send, F>(grid: &Icosphere, f: F) -> Vec<T>
where
    F: Fn(usize, &V3) -> T + Sync + Send,
{
    grid.vertices.par_iter().enumerate().map(|(i, w)| f(i, w)).collect()
}

/// Minimum over the grid of the first transverse-determinant zero.
pub fn conjugacy_radius(metric: &MetricField, p: &SpacetimePoint, grid: &Icosphere, s_max: f64, opts: &Options) -> ConjugacyReport {
    let req = TraceRequest { s_max, full: true, ..Default::default() };
    let results = fan_map(grid, |i, w| trace_ray(metric, p, w, i, &req, opts));
    let mut rays = Vec::new();
    let mut excluded = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(ray) => {
                let horizon = ray.s_end;
                let z = match ray.first_zero {
                    Some(z) => {
                        if best.map_or(true, |(b, _)| z < b) {
                            best = Some((z, i));
                        }
                        Radius::Finite(z)
                    }
                    None => Radius::Beyond { beyond: horizon },
                };
                rays.push(RayZero { omega_index: i, omega: grid.vertices[i], first_zero: z });
            }
            Err(e) => excluded.push((i, e.to_string())),
        }
    }
    let s_star = match best {
        Some((z, _)) => Radius::Finite(z),
        None => Radius::Beyond { beyond: s_max },
    };
    ConjugacyReport { s_star, argmin: best.map(|b| b.1), rays, excluded }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "level", rename_all = "snake_case")]
pub enum LevelSpec {
    FixedS(f64),
    FixedT(f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct ConeSlice {
    pub kind: LevelSpec,
    /// Slice point per ω-grid vertex; `None` where the ray never got there.
    pub points: Vec<Option<SpacetimePoint>>,
    pub windings: Vec<[i64; 3]>,
    pub s_values: Vec<f64>,
    pub velocities: Vec<V4>,
    /// Induced metric per grid face in the basis of its two edge vectors.
    pub sigma: Vec<Option<[[f64; 2]; 2]>>,
    pub area: f64,
    pub coverage: Vec<bool>,
    /// Set by the cut-locus search for rays beyond their first crossing.
    pub past_crossing: Vec<bool>,
}

impl ConeSlice {
    /// Area radius r with 4π r² = area.
    pub fn area_radius(&self) -> f64 {
        (self.area / (4.0 * std::f64::consts::PI)).sqrt()
    }

    pub fn covered(&self) -> usize {
        self.coverage.iter().filter(|c| **c).count()
    }
}

/// Displacement between two nearby cone points as a vector in a flat
/// ambient space, together with its signature weights.
fn displacement(metric: &MetricField, a: &SpacetimePoint, wa: &[i64; 3], b: &SpacetimePoint, wb: &[i64; 3]) -> ([f64; 5], [f64; 5]) {
    if metric.is_cylinder() {
        let ea = metric.embed(a);
        let eb = metric.embed(b);
        let d = [eb[0] - ea[0], eb[1] - ea[1], eb[2] - ea[2], eb[3] - ea[3], b.t - a.t];
        return (d, [1.0, 1.0, 1.0, 1.0, -1.0]);
    }
    let l = metric.family.period().unwrap_or(0.0);
    let mut d = [0.0; 5];
    d[0] = b.t - a.t;
    for i in 0..3 {
        d[i + 1] = (b.x[i] + l * wb[i] as f64) - (a.x[i] + l * wa[i] as f64);
    }
    (d, [0.0; 5])
}

/// 2×2 induced metric of the cone on a grid triangle from its edge vectors.
pub fn cell_metric(metric: &MetricField, pts: [&SpacetimePoint; 3], wind: [&[i64; 3]; 3]) -> [[f64; 2]; 2] {
    let (da, sa) = displacement(metric, pts[0], wind[0], pts[1], wind[1]);
    let (db, _) = displacement(metric, pts[0], wind[0], pts[2], wind[2]);
    let dotp = |u: &[f64; 5], v: &[f64; 5]| -> f64 {
        if metric.is_cylinder() {
            (0..5).map(|i| sa[i] * u[i] * v[i]).sum()
        } else {
            let mid = SpacetimePoint::new(
                (pts[0].t + pts[1].t + pts[2].t) / 3.0,
                [
                    (pts[0].x[0] + pts[1].x[0] + pts[2].x[0]) / 3.0,
                    (pts[0].x[1] + pts[1].x[1] + pts[2].x[1]) / 3.0,
                    (pts[0].x[2] + pts[1].x[2] + pts[2].x[2]) / 3.0,
                ],
            );
            let (n, g) = metric.lapse_metric(mid.t, &mid.x);
            let mut s = -n * n * u[0] * v[0];
            for i in 0..3 {
                for k in 0..3 {
                    s += g[i][k] * u[i + 1] * v[k + 1];
                }
            }
            s
        }
    };
    [[dotp(&da, &da), dotp(&da, &db)], [dotp(&da, &db), dotp(&db, &db)]]
}

/// Traces the fan and assembles slices at the requested levels.
pub fn exponential_map(
    metric: &MetricField,
    p: &SpacetimePoint,
    grid: &Icosphere,
    levels: &[LevelSpec],
    s_max: f64,
    opts: &Options,
) -> Result<Vec<ConeSlice>> {
    let mut s_nodes: Vec<f64> = levels.iter().filter_map(|l| if let LevelSpec::FixedS(s) = l { Some(*s) } else { None }).collect();
    let mut t_levels: Vec<f64> = levels.iter().filter_map(|l| if let LevelSpec::FixedT(t) = l { Some(*t) } else { None }).collect();
    s_nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    t_levels.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let req = TraceRequest { s_max, s_nodes: s_nodes.clone(), t_levels: t_levels.clone(), stop_when_done: true, ..Default::default() };
    let rays: Vec<Result<Ray>> = fan_map(grid, |i, w| trace_ray(metric, p, w, i, &req, opts));
    let mut out = Vec::with_capacity(levels.len());
    for lv in levels {
        let snap_of = |ray: &Ray| -> Option<Snapshot> {
            match lv {
                LevelSpec::FixedS(s) => {
                    let k = s_nodes.iter().position(|v| v == s)?;
                    ray.s_snaps[k].clone()
                }
                LevelSpec::FixedT(t) => {
                    let k = t_levels.iter().position(|v| v == t)?;
                    ray.t_snaps[k].clone()
                }
            }
        };
        let n = grid.len();
        let mut points = vec![None; n];
        let mut windings = vec![[0i64; 3]; n];
        let mut s_values = vec![f64::NAN; n];
        let mut velocities = vec![[0.0; 4]; n];
        let mut coverage = vec![false; n];
        for (i, r) in rays.iter().enumerate() {
            if let Ok(ray) = r {
                if let Some(sn) = snap_of(ray) {
                    let smp = sample_of(metric, sn.s, &sn.y, sn.chart);
                    points[i] = Some(smp.point);
                    windings[i] = smp.winding;
                    s_values[i] = sn.s;
                    velocities[i] = smp.velocity;
                    coverage[i] = true;
                }
            }
        }
        let mut area = 0.0;
        let sigma: Vec<Option<[[f64; 2]; 2]>> = grid
            .faces
            .iter()
            .map(|f| {
                let (a, b, c) = (points[f[0]]?, points[f[1]]?, points[f[2]]?);
                let m = cell_metric(metric, [&a, &b, &c], [&windings[f[0]], &windings[f[1]], &windings[f[2]]]);
                area += 0.5 * (m[0][0] * m[1][1] - m[0][1] * m[1][0]).max(0.0).sqrt();
                Some(m)
            })
            .collect();
        out.push(ConeSlice {
            kind: *lv,
            points,
            windings,
            s_values,
            velocities,
            sigma,
            area,
            coverage,
            past_crossing: vec![false; n],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Family;
    use std::f64::consts::PI;

    fn origin() -> SpacetimePoint {
        SpacetimePoint::new(0.0, [0.0; 3])
    }

    #[test]
    fn minkowski_straight_ray() {
        let m = MetricField::new(Family::Minkowski);
        let g = integrate_geodesic(&m, &origin(), &[1.0, 0.0, 0.0], 1.0, &default_options(&m)).unwrap();
        let last = g.samples.last().unwrap();
        assert!((last.s - 1.0).abs() < 1e-15);
        assert!((last.point.t + 1.0).abs() < 1e-14);
        assert!((last.point.x[0] - 1.0).abs() < 1e-14);
        assert_eq!(last.velocity, [-1.0, 1.0, 0.0, 0.0]);
        assert!(g.null_residual_max < 1e-14);
    }

    #[test]
    fn torus_ray_wraps() {
        let m = MetricField::new(Family::FlatTorus { period: 1.0 });
        let g = integrate_geodesic(&m, &SpacetimePoint::new(0.0, [0.0; 3]), &[1.0, 0.0, 0.0], 1.25, &default_options(&m)).unwrap();
        let last = g.samples.last().unwrap();
        assert!((last.point.x[0] - 0.25).abs() < 1e-12);
        assert_eq!(last.winding, [1, 0, 0]);
    }

    #[test]
    fn cylinder_equatorial_great_circle() {
        let m = MetricField::new(Family::SphericalCylinder { radius: 1.0 });
        let p = SpacetimePoint::new(0.0, [PI / 2.0, 0.0, 0.0]);
        // ω along the triad vector ∂_φ / sin θ
        let g = integrate_geodesic(&m, &p, &[0.0, 1.0, 0.0], PI / 2.0, &default_options(&m)).unwrap();
        let last = g.samples.last().unwrap();
        assert!((last.point.x[0] - PI / 2.0).abs() < 1e-8);
        assert!((last.point.x[1] - PI / 2.0).abs() < 1e-8);
        assert!(g.killing_drift < 1e-12);
    }

    #[test]
    fn meridian_ray_crosses_the_pole_through_the_second_chart() {
        let m = MetricField::new(Family::SphericalCylinder { radius: 1.0 });
        let p = SpacetimePoint::new(0.0, [PI / 2.0, 0.0, 0.0]);
        let g = integrate_geodesic(&m, &p, &[-1.0, 0.0, 0.0], PI, &default_options(&m)).unwrap();
        assert!(g.samples.iter().any(|s| s.point.chart == 1));
        let last = g.samples.last().unwrap();
        let amb = crate::metric::cylinder_ambient(&last.point.x, last.point.chart);
        // antipode of (1, 0, 0) along the meridian through the north pole
        assert!((amb[0] + 1.0).abs() < 1e-8, "{amb:?}");
        assert!(g.null_residual_max < 1e-9);
    }

    #[test]
    fn reparametrize_flat_and_constant_lapse() {
        let m = MetricField::new(Family::Minkowski);
        let o = default_options(&m);
        let g = integrate_geodesic(&m, &origin(), &[0.0, 0.6, 0.8], 2.0, &o).unwrap();
        let (s, _, _) = reparametrize(&m, &g, -0.5).unwrap();
        assert!((s - 0.5).abs() < 1e-13);
        assert_eq!(reparametrize(&m, &g, 0.0).unwrap().0, 0.0);
        assert!(matches!(reparametrize(&m, &g, -3.0), Err(Error::LevelOutOfRange { .. })));
        let m2 = MetricField::new(Family::ConstantLapse { lapse: 2.0 });
        let g2 = integrate_geodesic(&m2, &origin(), &[1.0, 0.0, 0.0], 2.0, &o).unwrap();
        // t(s) = −s/n for constant lapse
        let (s, _, _) = reparametrize(&m2, &g2, -0.25).unwrap();
        assert!((s - 0.5).abs() < 1e-13);
    }

    #[test]
    fn flat_jacobi_fields_grow_linearly() {
        let m = MetricField::new(Family::Minkowski);
        let o = default_options(&m);
        let g = integrate_geodesic(&m, &origin(), &[0.48, -0.6, 0.64], 3.0, &o).unwrap();
        let js = jacobi_propagate(&m, &g, &o).unwrap();
        assert!(js.first_zero.is_none());
        for s in [0.01, 0.5, 2.9] {
            assert!((js.transverse_det(s).unwrap() / (s * s) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cylinder_equatorial_focal_point_at_pi() {
        let m = MetricField::new(Family::SphericalCylinder { radius: 1.0 });
        let p = SpacetimePoint::new(0.0, [PI / 2.0, 0.0, 0.0]);
        let o = default_options(&m);
        let g = integrate_geodesic(&m, &p, &[0.0, 1.0, 0.0], 4.0, &o).unwrap();
        let js = jacobi_propagate(&m, &g, &o).unwrap();
        assert!((js.first_zero.unwrap() - PI).abs() < 1e-9);
        for s in [0.3, 1.0, 2.0, 3.0] {
            assert!((js.transverse_det(s).unwrap() - s * s.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn minkowski_fixed_t_slice_is_round() {
        let m = MetricField::new(Family::Minkowski);
        let grid = Icosphere::new(3).unwrap();
        let sl = exponential_map(&m, &origin(), &grid, &[LevelSpec::FixedT(-1.0), LevelSpec::FixedS(0.5)], 5.0, &default_options(&m)).unwrap();
        let r: Vec<f64> = sl[0].points.iter().map(|p| tensor::euclid_norm(&p.unwrap().x)).collect();
        let (lo, hi) = r.iter().fold((f64::MAX, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(hi / lo - 1.0 < 1e-12);
        // inscribed polyhedron area converges to 4π at second order
        assert!((sl[0].area / (4.0 * PI) - 1.0).abs() < 5e-3);
        assert!((sl[1].area_radius() - 0.5).abs() < 5e-3 * 0.5);
        assert_eq!(sl[0].covered(), grid.len());
    }
}
