//! Intersections of distinct null geodesics from p on fixed-t slices, the
//! radii ℓ*, s*, i* and checks of the first-intersection geometry.

use crate::error::{Error, Result};
use crate::geodesics::{
    self, conjugacy_radius, fan_map, sample_at_t, ChartStep, ConjugacyReport, LevelSpec, Radius, RaySample, TraceRequest,
};
use crate::icosphere::{angle_between, Icosphere};
use crate::metric::{self, AssumptionBudget, MetricField, SpacetimePoint};
use crate::ode::Options;
use crate::tensor::V3;
use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

/// Geodesic-only fan with dense output for slice queries.
pub struct Fan {
    pub base: SpacetimePoint,
    pub level: u32,
    /// Nominal angular spacing of the ω-grid.
    pub h: f64,
    pub omegas: Vec<V3>,
    pub dense: Vec<Vec<ChartStep>>,
    /// Lowest t reached by each ray (t(p) for failed rays).
    pub t_end: Vec<f64>,
    pub s_end: Vec<f64>,
    pub excluded: Vec<(usize, String)>,
    pub s_max: f64,
}

pub fn trace_fan(metric: &MetricField, p: &SpacetimePoint, grid: &Icosphere, s_max: f64, opts: &Options) -> Fan {
    let req = TraceRequest { s_max, keep_dense: true, ..Default::default() };
    let rays = fan_map(grid, |i, w| geodesics::trace_ray(metric, p, w, i, &req, opts));
    let n = grid.len();
    let mut fan = Fan {
        base: *p,
        level: grid.level,
        h: grid.nominal_spacing(),
        omegas: grid.vertices.clone(),
        dense: Vec::with_capacity(n),
        t_end: Vec::with_capacity(n),
        s_end: Vec::with_capacity(n),
        excluded: Vec::new(),
        s_max,
    };
    for (i, r) in rays.into_iter().enumerate() {
        match r {
            Ok(ray) => {
                let t_end = ray.dense.last().map(|c| c.step.eval(c.step.s1())[0]).unwrap_or(p.t);
                fan.t_end.push(t_end);
                fan.s_end.push(ray.s_end);
                fan.dense.push(ray.dense);
            }
            Err(e) => {
                fan.excluded.push((i, e.to_string()));
                fan.t_end.push(p.t);
                fan.s_end.push(0.0);
                fan.dense.push(Vec::new());
            }
        }
    }
    fan
}

impl Fan {
    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// Deepest t-level reached by every traced ray.
    pub fn common_floor(&self) -> f64 {
        let excluded: HashSet<usize> = self.excluded.iter().map(|e| e.0).collect();
        (0..self.len()).filter(|i| !excluded.contains(i)).map(|i| self.t_end[i]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn at_t(&self, metric: &MetricField, i: usize, t: f64) -> Option<RaySample> {
        let mut hint = 0;
        sample_at_t(metric, &self.dense[i], t, &mut hint)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Conjugate,
    Crossing,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntersectionEvent {
    pub t_event: f64,
    pub q: SpacetimePoint,
    pub index1: usize,
    pub index2: usize,
    pub omega1: V3,
    pub omega2: V3,
    pub s1: f64,
    pub s2: f64,
    pub angle_at_q: f64,
    pub windings: [[i64; 3]; 2],
    /// Separation of the two ray points at t_event.
    pub separation: f64,
    pub match_tol: f64,
    /// Uncertainty of t_event implied by the matching tolerance.
    pub t_resolution: f64,
    pub kind: EventKind,
    /// Within one grid cell of the angular separation floor.
    pub unresolved: bool,
    /// Number of merged ray pairs meeting at the same (q, t).
    pub multiplicity: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct MatchSettings {
    /// Lower bound on the matching tolerance (interpolation error scale).
    pub tol_floor: f64,
    /// Matching tolerance per unit of coordinate depth and grid spacing.
    pub tol_factor: f64,
    /// Pairs closer than this multiple of the spacing approximate one geodesic.
    pub floor_factor: f64,
    /// Stop the ladder shortly after the first level with an event.
    pub first_only: bool,
}

impl Default for MatchSettings {
    fn default() -> Self {
        MatchSettings { tol_floor: 5e-9, tol_factor: 0.5, floor_factor: 2.0, first_only: true }
    }
}

/// Depths below which the cone is not searched, relative to the chart scale.
pub const LADDER_START: f64 = 0.02;

/// Descending t-levels from just below t(p) to `t_floor`, geometrically
/// spaced so that the cone grows by about half a grid cell per level.
pub fn t_ladder(t_p: f64, t_floor: f64, h: f64, scale: f64) -> Vec<f64> {
    let depth_max = t_p - t_floor;
    if !(depth_max > 0.0) {
        return Vec::new();
    }
    let mut d = (LADDER_START * scale).min(depth_max);
    let mut out = vec![t_p - d];
    while d < depth_max {
        d = (d * (1.0 + 0.5 * h)).max(d + 1e-3 * h * scale).min(depth_max);
        out.push(t_p - d);
    }
    out
}

fn cell_key(metric: &MetricField, p: &SpacetimePoint, size: f64, ncell: Option<i64>) -> [i64; 4] {
    let e = metric.embed(p);
    let mut k = [0i64; 4];
    match (metric.family.period(), ncell) {
        (Some(l), Some(nc)) => {
            for i in 0..3 {
                k[i] = ((e[i] / l * nc as f64).floor() as i64).rem_euclid(nc);
            }
        }
        _ => {
            for i in 0..4 {
                k[i] = (e[i] / size).floor() as i64;
            }
        }
    }
    k
}

fn neighbour_keys(k: &[i64; 4], dims: usize, ncell: Option<i64>) -> Vec<[i64; 4]> {
    let mut out: Vec<[i64; 4]> = vec![*k];
    for d in 0..dims {
        let mut next = Vec::with_capacity(out.len() * 3);
        for base in &out {
            for off in [-1i64, 0, 1] {
                let mut c = *base;
                c[d] += off;
                if let Some(nc) = ncell {
                    c[d] = c[d].rem_euclid(nc);
                }
                next.push(c);
            }
        }
        out = next;
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Unit-speed projection of a velocity onto T_qΣ_t, expressed in `chart`.
fn spatial_direction(metric: &MetricField, smp: &RaySample, chart: u8) -> V3 {
    let mut v = [smp.velocity[1], smp.velocity[2], smp.velocity[3]];
    if smp.point.chart != chart {
        let (_, _, jac) = metric.chart_transition(&smp.point.x, smp.point.chart);
        let mut w = [0.0; 3];
        for i in 0..3 {
            for k in 0..3 {
                w[i] += jac[i][k] * v[k];
            }
        }
        v = w;
    }
    v
}

/// Angle in T_qΣ_t between the spatial parts of the two velocities.
pub fn projected_angle(metric: &MetricField, a: &RaySample, b: &RaySample) -> f64 {
    let chart = a.point.chart;
    let va = spatial_direction(metric, a, chart);
    let vb = spatial_direction(metric, b, chart);
    let (_, g) = metric.lapse_metric(a.point.t, &a.point.x);
    let ip = |x: &V3, y: &V3| crate::tensor::dot_g(&g, x, y);
    let c = ip(&va, &vb) / (ip(&va, &va) * ip(&vb, &vb)).sqrt();
    c.clamp(-1.0, 1.0).acos()
}

fn coordinate_speed(metric: &MetricField, s: &RaySample) -> f64 {
    let (n, _) = metric.lapse_metric(s.point.t, &s.point.x);
    n
}

/// Relative g-speed of two rays in the slice, per unit t.
fn relative_slice_speed(metric: &MetricField, a: &RaySample, b: &RaySample) -> f64 {
    let chart = a.point.chart;
    let va = spatial_direction(metric, a, chart);
    let vb = spatial_direction(metric, b, chart);
    let (_, g) = metric.lapse_metric(a.point.t, &a.point.x);
    let mut d = [0.0; 3];
    for i in 0..3 {
        d[i] = va[i] / (-a.velocity[0]) - vb[i] / (-b.velocity[0]);
    }
    crate::tensor::dot_g(&g, &d, &d).max(0.0).sqrt()
}

fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let fa = f(a);
    let fb = f(b);
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    if fa < best.1 {
        best = (a, fa);
    }
    if fb < best.1 {
        best = (b, fb);
    }
    best
}

/// Searches the fan for pairs of distinct rays that meet on a common
/// t-slice between t(p) and min(`t_levels`).
pub fn detect_intersections(
    metric: &MetricField,
    fan: &Fan,
    t_levels: &[f64],
    settings: &MatchSettings,
    zeros: Option<&ConjugacyReport>,
) -> Result<Vec<IntersectionEvent>> {
    let t_p = fan.base.t;
    let requested = t_levels.iter().cloned().fold(t_p, f64::min);
    let t_floor = requested.max(fan.common_floor());
    let scale = metric.chart_scale();
    let ladder = t_ladder(t_p, t_floor, fan.h, scale);
    let h = fan.h;
    let n = fan.len();
    let excluded: HashSet<usize> = fan.excluded.iter().map(|e| e.0).collect();
    let (n_p, _) = metric.lapse_metric(t_p, &fan.base.x);
    let tol_at = |t: f64| settings.tol_floor.max(settings.tol_factor * n_p * (t_p - t) * h);
    let floor_angle = settings.floor_factor * h;
    let zero_of = |i: usize| -> Option<f64> { zeros.and_then(|z| z.rays.iter().find(|r| r.omega_index == i)).and_then(|r| r.first_zero.value()) };
    let mut tried: HashSet<(usize, usize)> = HashSet::new();
    let mut events: Vec<IntersectionEvent> = Vec::new();
    let mut stop_at: Option<usize> = None;
    let mut hints = vec![0usize; n];
    for k in 0..ladder.len() {
        if let Some(s) = stop_at {
            if k > s {
                break;
            }
        }
        let t = ladder[k];
        let pts: Vec<Option<RaySample>> = (0..n)
            .map(|i| {
                if excluded.contains(&i) {
                    return None;
                }
                sample_at_t(metric, &fan.dense[i], t, &mut hints[i])
            })
            .collect();
        let vmax = pts.iter().flatten().map(|s| coordinate_speed(metric, s)).fold(0.0, f64::max);
        let t_hi = ladder[k.saturating_sub(1)];
        let t_lo = if k + 1 < ladder.len() { ladder[k + 1] } else { t };
        let gap = (t_hi - t).max(t - t_lo);
        let rc = 2.0 * vmax * gap + tol_at(t);
        let ncell = metric.family.period().map(|l| ((l / rc).floor() as i64).max(1));
        let dims = if metric.is_cylinder() { 4 } else { 3 };
        let mut cells: HashMap<[i64; 4], Vec<usize>> = HashMap::new();
        for (i, s) in pts.iter().enumerate() {
            if let Some(s) = s {
                cells.entry(cell_key(metric, &s.point, rc, ncell)).or_default().push(i);
            }
        }
        let mut cand: Vec<(usize, usize)> = Vec::new();
        let mut keys: Vec<&[i64; 4]> = cells.keys().collect();
        keys.sort_unstable();
        for key in keys {
            for i in &cells[key] {
                let pi = pts[*i].as_ref().unwrap();
                for nk in neighbour_keys(key, dims, ncell) {
                    if let Some(list) = cells.get(&nk) {
                        for j in list {
                            if *j <= *i || tried.contains(&(*i, *j)) {
                                continue;
                            }
                            if angle_between(&fan.omegas[*i], &fan.omegas[*j]) < floor_angle {
                                continue;
                            }
                            let pj = pts[*j].as_ref().unwrap();
                            if metric.separation(&pi.point, &pj.point) < rc {
                                cand.push((*i, *j));
                            }
                        }
                    }
                }
            }
        }
        cand.sort_unstable();
        cand.dedup();
        for c in &cand {
            tried.insert(*c);
        }
        let t_a = t_lo.max(t_floor);
        let found: Vec<Option<IntersectionEvent>> = cand
            .par_iter()
            .map(|&(i, j)| {
                let dist = |t: f64| -> f64 {
                    match (fan.at_t(metric, i, t), fan.at_t(metric, j, t)) {
                        (Some(a), Some(b)) => metric.separation(&a.point, &b.point),
                        _ => f64::INFINITY,
                    }
                };
                let (te, d) = golden_min(dist, t_a, t_hi, 1e-13 * scale.max(t_p.abs()));
                let tol = tol_at(te);
                if !(d < tol) {
                    return None;
                }
                let a = fan.at_t(metric, i, te)?;
                let b = fan.at_t(metric, j, te)?;
                let ang_ij = angle_between(&fan.omegas[i], &fan.omegas[j]);
                let near_zero = |idx: usize, s: f64| zero_of(idx).map_or(false, |z| (z - s).abs() <= (2.0 * h * s).max(1e-6));
                let kind = if near_zero(i, a.s) || near_zero(j, b.s) { EventKind::Conjugate } else { EventKind::Crossing };
                let vrel = relative_slice_speed(metric, &a, &b);
                Some(IntersectionEvent {
                    t_event: te,
                    q: a.point,
                    index1: i,
                    index2: j,
                    omega1: fan.omegas[i],
                    omega2: fan.omegas[j],
                    s1: a.s,
                    s2: b.s,
                    angle_at_q: projected_angle(metric, &a, &b),
                    windings: [a.winding, b.winding],
                    separation: d,
                    match_tol: tol,
                    t_resolution: if vrel > 0.0 { tol / vrel } else { f64::INFINITY },
                    kind,
                    unresolved: ang_ij < floor_angle + h,
                    multiplicity: 1,
                })
            })
            .collect();
        let before = events.len();
        events.extend(found.into_iter().flatten());
        if settings.first_only && stop_at.is_none() && events.len() > before {
            stop_at = Some(k + 2);
        }
    }
    Ok(dedupe(metric, events, fan.h))
}

fn dedupe(metric: &MetricField, mut events: Vec<IntersectionEvent>, h: f64) -> Vec<IntersectionEvent> {
    events.sort_by(|a, b| {
        b.t_event
            .partial_cmp(&a.t_event)
            .unwrap()
            .then(a.index1.cmp(&b.index1))
            .then(a.index2.cmp(&b.index2))
    });
    let mut out: Vec<IntersectionEvent> = Vec::new();
    for e in events {
        let merged = out.iter_mut().find(|r| {
            (r.t_event - e.t_event).abs() <= r.match_tol.max(h * 1e-3) && metric.separation(&r.q, &e.q) <= r.match_tol.max(e.match_tol)
        });
        match merged {
            Some(r) => {
                r.multiplicity += 1;
                if e.kind == EventKind::Conjugate {
                    r.kind = EventKind::Conjugate;
                }
            }
            None => out.push(e),
        }
    }
    out
}

/// Marks rays of a fixed-t slice that lie beyond an earlier crossing.
pub fn mark_past_crossing(slice: &mut geodesics::ConeSlice, events: &[IntersectionEvent]) {
    if let LevelSpec::FixedT(t) = slice.kind {
        for e in events {
            if e.t_event > t {
                slice.past_crossing[e.index1] = true;
                slice.past_crossing[e.index2] = true;
            }
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ErrorBars {
    pub s_star: Option<f64>,
    pub ell_star: Option<f64>,
    pub ell_star_t: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridResolution {
    pub level: u32,
    pub rays: usize,
    pub spacing: f64,
    pub coarse_level: Option<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadiusReport {
    pub base: SpacetimePoint,
    pub s_star: Radius,
    pub ell_star: Radius,
    pub ell_star_t: Radius,
    pub i_star: Radius,
    pub events: Vec<IntersectionEvent>,
    pub grid_resolution: GridResolution,
    pub error_bars: ErrorBars,
    pub excluded_rays: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct InjectivitySettings {
    pub level: u32,
    pub s_max: f64,
    pub two_grid: bool,
    pub matching: MatchSettings,
}

impl Default for InjectivitySettings {
    fn default() -> Self {
        InjectivitySettings { level: 4, s_max: 3.0, two_grid: true, matching: MatchSettings::default() }
    }
}

struct SingleGrid {
    conj: ConjugacyReport,
    events: Vec<IntersectionEvent>,
    ell_star: Option<(f64, f64)>,
    ell_star_t: Option<(f64, f64)>,
    t_horizon: f64,
    excluded: usize,
}

fn single_grid(metric: &MetricField, p: &SpacetimePoint, level: u32, settings: &InjectivitySettings, opts: &Options) -> Result<SingleGrid> {
    let grid = Icosphere::new(level)?;
    let conj = conjugacy_radius(metric, p, &grid, settings.s_max, opts);
    let fan = trace_fan(metric, p, &grid, settings.s_max, opts);
    let floor = fan.common_floor();
    let events = detect_intersections(metric, &fan, &[floor], &settings.matching, Some(&conj))?;
    let ell_star_t = events.first().map(|e| (p.t - e.t_event, e.t_resolution));
    let ell_star = events
        .iter()
        .map(|e| (e.s1.max(e.s2), e.t_resolution * e.s1.max(e.s2) / (p.t - e.t_event).max(1e-300)))
        .fold(None, |acc: Option<(f64, f64)>, v| match acc {
            Some(a) if a.0 <= v.0 => Some(a),
            _ => Some(v),
        });
    Ok(SingleGrid { excluded: fan.excluded.len(), conj, events, ell_star, ell_star_t, t_horizon: p.t - floor })
}

/// ℓ*, s* and i* = min(ℓ*, s*) at p, with two-grid error bars.
pub fn injectivity_report(
    metric: &MetricField,
    p: &SpacetimePoint,
    budget: &AssumptionBudget,
    settings: &InjectivitySettings,
    opts: &Options,
) -> Result<RadiusReport> {
    budget.validate()?;
    let fine = single_grid(metric, p, settings.level, settings, opts)?;
    let coarse = if settings.two_grid && settings.level > 0 { Some(single_grid(metric, p, settings.level - 1, settings, opts)?) } else { None };
    let s_star = fine.conj.s_star;
    let ell_star = match fine.ell_star {
        Some((v, _)) => Radius::Finite(v),
        None => Radius::Beyond { beyond: settings.s_max },
    };
    let ell_star_t = match fine.ell_star_t {
        Some((v, _)) => Radius::Finite(v),
        None => Radius::Beyond { beyond: fine.t_horizon },
    };
    let i_star = ell_star.min(s_star);
    let two = |f: Option<f64>, c: Option<f64>, res: f64| -> Option<f64> {
        let f = f?;
        let diff = c.map(|c| (f - c).abs()).unwrap_or(0.0);
        Some(diff.max(res).max(1e-12))
    };
    let cs = coarse.as_ref();
    let error_bars = ErrorBars {
        s_star: two(s_star.value(), cs.and_then(|c| c.conj.s_star.value()), 0.0),
        ell_star: two(fine.ell_star.map(|v| v.0), cs.and_then(|c| c.ell_star.map(|v| v.0)), fine.ell_star.map_or(0.0, |v| v.1)),
        ell_star_t: two(fine.ell_star_t.map(|v| v.0), cs.and_then(|c| c.ell_star_t.map(|v| v.0)), fine.ell_star_t.map_or(0.0, |v| v.1)),
    };
    if let (Some(eb), Some(v)) = (error_bars.ell_star_t, ell_star_t.value()) {
        if eb >= v {
            return Err(Error::ResolutionTooCoarse { error_bar: eb, separation: v });
        }
    }
    Ok(RadiusReport {
        base: *p,
        s_star,
        ell_star,
        ell_star_t,
        i_star,
        events: fine.events,
        grid_resolution: GridResolution {
            level: settings.level,
            rays: 10 * 4usize.pow(settings.level) + 2,
            spacing: Icosphere::new(settings.level)?.nominal_spacing(),
            coarse_level: coarse.as_ref().map(|_| settings.level - 1),
        },
        error_bars,
        excluded_rays: fine.excluded,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OppositeAngle {
    pub deviation: f64,
    /// False when the event sits at a conjugate point, where the opposite
    /// direction property is not claimed.
    pub applicable: bool,
}

/// |angle_at_q − π| for the earliest event of a report.
pub fn opposite_angle_check(event: &IntersectionEvent) -> OppositeAngle {
    OppositeAngle { deviation: (event.angle_at_q - std::f64::consts::PI).abs(), applicable: event.kind == EventKind::Crossing }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BallInclusion {
    pub t_level: f64,
    pub eps: f64,
    pub audited_eps: f64,
    /// n(p)·|t − t(p)|.
    pub tau: f64,
    pub inner_ok: bool,
    pub outer_ok: bool,
    pub annulus_ok: bool,
    pub inner_margin: f64,
    pub outer_margin: f64,
    pub annulus_margin: f64,
}

/// Largest ρ along ω such that the straight segment from p to
/// (t, x(p) + ρω) stays timelike, sampled at `m` points.
fn timelike_reach(metric: &MetricField, p: &SpacetimePoint, t: f64, w: &V3, rho_hi: f64, m: usize) -> f64 {
    let dt = t - p.t;
    let timelike = |rho: f64| {
        (0..=m).all(|k| {
            let lam = k as f64 / m as f64;
            let x = [p.x[0] + lam * rho * w[0], p.x[1] + lam * rho * w[1], p.x[2] + lam * rho * w[2]];
            let (n, g) = metric.lapse_metric(p.t + lam * dt, &x);
            let dx = [rho * w[0], rho * w[1], rho * w[2]];
            crate::tensor::dot_g(&g, &dx, &dx) < n * n * dt * dt
        })
    };
    let (mut lo, mut hi) = (0.0, rho_hi);
    if timelike(hi) {
        return hi;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if timelike(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Inner, outer and annulus inclusions of the fixed-t cone section
/// against Euclidean balls of radius (1 ∓ 3ε)·n(p)|t|.
pub fn ball_inclusion_check(
    metric: &MetricField,
    p: &SpacetimePoint,
    t_level: f64,
    eps: f64,
    grid: &Icosphere,
    opts: &Options,
) -> Result<BallInclusion> {
    let (n_p, _) = metric.lapse_metric(p.t, &p.x);
    let depth = p.t - t_level;
    if !(depth > 0.0) {
        return Err(Error::InvalidArgument(format!("t_level {t_level} must lie below t(p) = {}", p.t)));
    }
    let tau = n_p * depth;
    let audited = metric::closeness_audit(metric, p, (1.0 + 3.0 * eps) * tau, depth, 8)?;
    if audited > eps * (1.0 + 1e-12) + 1e-15 {
        return Err(Error::AssumptionCViolated { measured: audited, declared: eps });
    }
    let slice = geodesics::exponential_map(metric, p, grid, &[LevelSpec::FixedT(t_level)], 10.0 * depth * n_p.max(1.0) / n_p.min(1.0), opts)?
        .pop()
        .unwrap();
    let l = metric.family.period().unwrap_or(0.0);
    let mut r_min = f64::INFINITY;
    let mut r_max: f64 = 0.0;
    for (i, pt) in slice.points.iter().enumerate() {
        let pt = pt.ok_or(Error::BallExitsChart { radius: tau })?;
        let w = slice.windings[i];
        let mut r2 = 0.0;
        for a in 0..3 {
            let d = pt.x[a] + l * w[a] as f64 - p.x[a];
            r2 += d * d;
        }
        let r = r2.sqrt();
        r_min = r_min.min(r);
        r_max = r_max.max(r);
    }
    let reach = grid
        .vertices
        .par_iter()
        .map(|w| timelike_reach(metric, p, t_level, w, 2.0 * tau, 32))
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let inner_margin = reach - (1.0 - 3.0 * eps) * tau;
    let outer_margin = (1.0 + 3.0 * eps) * tau - r_max;
    let annulus_margin = r_min - (1.0 - 3.0 * eps) * tau;
    let slack = 1e-12 * tau;
    Ok(BallInclusion {
        t_level,
        eps,
        audited_eps: audited,
        tau,
        inner_ok: inner_margin >= -slack,
        outer_ok: outer_margin >= -slack,
        annulus_ok: annulus_margin >= -slack,
        inner_margin,
        outer_margin,
        annulus_margin,
    })
}

/// Uniform random base points in the scenario chart at time `t`.
pub fn random_points(metric: &MetricField, count: usize, seed: u64, t: f64) -> Vec<SpacetimePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    (0..count)
        .map(|_| {
            let u = [unit(), unit(), unit()];
            let x = if metric.is_cylinder() {
                [0.5 + (std::f64::consts::PI - 1.0) * u[0], 2.0 * std::f64::consts::PI * u[1], u[2] - 0.5]
            } else {
                match metric.family.period() {
                    Some(l) => [l * u[0], l * u[1], l * u[2]],
                    None => [2.0 * u[0] - 1.0, 2.0 * u[1] - 1.0, 2.0 * u[2] - 1.0],
                }
            };
            SpacetimePoint::new(t, x)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlabRow {
    pub point: SpacetimePoint,
    pub report: RadiusReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlabScan {
    pub rows: Vec<SlabRow>,
    pub min_i_star: Radius,
    pub min_ell_star_t: Radius,
    pub min_s_star: Radius,
}

/// Radius reports over a sample of base points and their minima.
pub fn slab_scan(
    metric: &MetricField,
    points: &[SpacetimePoint],
    budget: &AssumptionBudget,
    settings: &InjectivitySettings,
    opts: &Options,
) -> Result<SlabScan> {
    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        rows.push(SlabRow { point: *p, report: injectivity_report(metric, p, budget, settings, opts)? });
    }
    let fold = |f: &dyn Fn(&RadiusReport) -> Radius| {
        rows.iter().map(|r| f(&r.report)).fold(None, |acc: Option<Radius>, r| Some(acc.map_or(r, |a| a.min(r))))
    };
    let none = Radius::Beyond { beyond: settings.s_max };
    Ok(SlabScan {
        min_i_star: fold(&|r| r.i_star).unwrap_or(none),
        min_ell_star_t: fold(&|r| r.ell_star_t).unwrap_or(none),
        min_s_star: fold(&|r| r.s_star).unwrap_or(none),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesics::default_options;
    use crate::metric::Family;
    use std::f64::consts::PI;

    fn torus() -> MetricField {
        MetricField::new(Family::FlatTorus { period: 1.0 })
    }

    /// Every pair on every ladder level, no hashing.
    fn brute_force_earliest(metric: &MetricField, fan: &Fan, t_floor: f64, floor_angle: f64) -> Option<f64> {
        let ladder = t_ladder(fan.base.t, t_floor, fan.h, metric.chart_scale());
        let n = fan.len();
        let mut best: Option<f64> = None;
        for w in ladder.windows(2) {
            let (ta, tb) = (w[0], w[1]);
            for i in 0..n {
                for j in i + 1..n {
                    if angle_between(&fan.omegas[i], &fan.omegas[j]) < floor_angle {
                        continue;
                    }
                    let d = |t: f64| {
                        let a = fan.at_t(metric, i, t).unwrap();
                        let b = fan.at_t(metric, j, t).unwrap();
                        metric.separation(&a.point, &b.point)
                    };
                    let (te, dm) = golden_min(d, tb, ta, 1e-13);
                    let tol = 0.5 * (fan.base.t - te) * fan.h;
                    if dm < tol && best.map_or(true, |b| te > b) {
                        best = Some(te);
                    }
                }
            }
            if best.is_some() {
                break;
            }
        }
        best
    }

    #[test]
    fn minkowski_has_no_events() {
        let m = MetricField::new(Family::Minkowski);
        let grid = Icosphere::new(3).unwrap();
        let fan = trace_fan(&m, &SpacetimePoint::new(0.0, [0.0; 3]), &grid, 5.0, &default_options(&m));
        let ev = detect_intersections(&m, &fan, &[-5.0], &MatchSettings::default(), None).unwrap();
        assert!(ev.is_empty());
    }

    #[test]
    fn torus_earliest_event_and_oracle() {
        let m = torus();
        let grid = Icosphere::new(2).unwrap();
        let p = SpacetimePoint::new(0.0, [0.3, 0.6, 0.1]);
        let fan = trace_fan(&m, &p, &grid, 0.8, &default_options(&m));
        let ev = detect_intersections(&m, &fan, &[-0.8], &MatchSettings::default(), None).unwrap();
        let first = &ev[0];
        assert!((first.t_event + 0.5).abs() < 1e-9, "{}", first.t_event);
        assert!(opposite_angle_check(first).deviation < 1e-9);
        let dw: i64 = (0..3).map(|a| (first.windings[0][a] - first.windings[1][a]).abs()).sum();
        assert_eq!(dw, 1);
        let oracle = brute_force_earliest(&m, &fan, -0.8, 2.0 * fan.h).unwrap();
        assert!(first.t_event >= oracle - 1e-12);
        let none = detect_intersections(&m, &fan, &[-0.4], &MatchSettings::default(), None).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn detection_is_invariant_under_grid_relabeling() {
        let m = torus();
        let grid = Icosphere::new(2).unwrap();
        let p = SpacetimePoint::new(0.0, [0.0; 3]);
        let fan = trace_fan(&m, &p, &grid, 0.8, &default_options(&m));
        let mut rev = trace_fan(&m, &p, &grid, 0.8, &default_options(&m));
        rev.omegas.reverse();
        rev.dense.reverse();
        rev.t_end.reverse();
        rev.s_end.reverse();
        let a = detect_intersections(&m, &fan, &[-0.8], &MatchSettings::default(), None).unwrap();
        let b = detect_intersections(&m, &rev, &[-0.8], &MatchSettings::default(), None).unwrap();
        assert_eq!(a.len(), b.len());
        assert!((a[0].t_event - b[0].t_event).abs() < 1e-12);
    }

    #[test]
    fn torus_report_obeys_min_rule() {
        let m = torus();
        let settings = InjectivitySettings { level: 3, s_max: 1.0, ..Default::default() };
        let r = injectivity_report(&m, &SpacetimePoint::new(0.0, [0.0; 3]), &AssumptionBudget::default(), &settings, &default_options(&m)).unwrap();
        assert!((r.ell_star_t.value().unwrap() - 0.5).abs() < 0.01);
        assert!(r.s_star.is_beyond());
        assert_eq!(r.i_star, r.ell_star.min(r.s_star));
        assert!(r.error_bars.ell_star_t.unwrap() < 0.02);
    }

    #[test]
    fn cylinder_refocusing_is_conjugate() {
        let m = MetricField::new(Family::SphericalCylinder { radius: 1.0 });
        let settings = InjectivitySettings { level: 2, s_max: 3.5, two_grid: false, ..Default::default() };
        let p = SpacetimePoint::new(0.0, [PI / 2.0, 0.0, 0.0]);
        let r = injectivity_report(&m, &p, &AssumptionBudget::default(), &settings, &default_options(&m)).unwrap();
        assert!((r.s_star.value().unwrap() - PI).abs() < 1e-8);
        let first = &r.events[0];
        assert!(r.ell_star_t.value().unwrap() <= PI + 1e-9);
        let bar = first.t_resolution;
        assert!((first.t_event + PI).abs() <= bar, "{} vs {}", first.t_event, bar);
        assert_eq!(first.kind, EventKind::Conjugate);
        assert!(!opposite_angle_check(first).applicable);
    }

    #[test]
    fn minkowski_balls_have_zero_margin() {
        let m = MetricField::new(Family::Minkowski);
        let grid = Icosphere::new(2).unwrap();
        let b = ball_inclusion_check(&m, &SpacetimePoint::new(0.0, [0.0; 3]), -1.0, 0.0, &grid, &default_options(&m)).unwrap();
        assert!(b.inner_ok && b.outer_ok && b.annulus_ok);
        assert!(b.inner_margin.abs() < 1e-9 && b.outer_margin.abs() < 1e-12 && b.annulus_margin.abs() < 1e-12);
    }

    #[test]
    fn closeness_violation_is_reported() {
        let m = MetricField::new(Family::LapseBump { amplitude: 0.1, width: 1.0 });
        let grid = Icosphere::new(1).unwrap();
        let r = ball_inclusion_check(&m, &SpacetimePoint::new(0.0, [0.0; 3]), -1.0, 0.01, &grid, &default_options(&m));
        assert!(matches!(r, Err(Error::AssumptionCViolated { .. })));
    }

    #[test]
    fn random_points_are_reproducible() {
        let m = torus();
        assert_eq!(random_points(&m, 5, 7, 0.0), random_points(&m, 5, 7, 0.0));
        assert!(random_points(&m, 50, 1, 0.0).iter().all(|p| p.x.iter().all(|v| (0.0..1.0).contains(v))));
    }
}
