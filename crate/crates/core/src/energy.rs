//! Slice integrals: curvature energy Q(t), the Gronwall comparison,
//! metric equivalence along the foliation and the volume radius.

use crate::error::{Error, Result};
use crate::frames;
use crate::icosphere::Icosphere;
use crate::metric::{AssumptionBudget, MetricField, MetricSample, SpacetimePoint};
use crate::ode::{self, Control, Options, System};
use crate::tensor::{self, M3, V3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default structural constant of the Gronwall step: 3/2 from the
/// divergence identity times 4 from |Q| ≤ 4(|E|² + |H|²).
pub const DEFAULT_GRONWALL_C: f64 = 6.0;

/// Midpoint quadrature of one slice.
#[derive(Clone, Debug)]
pub struct SliceGrid {
    pub t_level: f64,
    pub nodes: Vec<SpacetimePoint>,
    /// Coordinate cell volumes.
    pub weights: Vec<f64>,
    /// √det g at each node.
    pub dv_weights: Vec<f64>,
}

impl SliceGrid {
    /// n nodes per axis over the chart (periodic axes) or the declared
    /// cutoff box.
    pub fn new(metric: &MetricField, t_level: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("slice grid needs at least one node per axis".into()));
        }
        let (lo, hi) = slice_box(metric)?;
        let h: Vec<f64> = (0..3).map(|i| (hi[i] - lo[i]) / n as f64).collect();
        let cell = h[0] * h[1] * h[2];
        let mut g = SliceGrid { t_level, nodes: Vec::with_capacity(n * n * n), weights: Vec::new(), dv_weights: Vec::new() };
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let x = [
                        lo[0] + (i as f64 + 0.5) * h[0],
                        lo[1] + (j as f64 + 0.5) * h[1],
                        lo[2] + (k as f64 + 0.5) * h[2],
                    ];
                    let (_, gm) = metric.lapse_metric(t_level, &x);
                    g.nodes.push(SpacetimePoint::new(t_level, x));
                    g.weights.push(cell);
                    g.dv_weights.push(tensor::det3(&gm).max(0.0).sqrt());
                }
            }
        }
        Ok(g)
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().zip(&self.dv_weights).map(|(w, d)| w * d).sum()
    }
}

fn slice_box(metric: &MetricField) -> Result<(V3, V3)> {
    if let Some(l) = metric.family.period() {
        return Ok(([0.0; 3], [l; 3]));
    }
    let c = metric.cutoff.ok_or(Error::UnboundedDomain)?;
    if metric.is_cylinder() {
        Ok(([0.0, 0.0, -c], [PI, 2.0 * PI, c]))
    } else {
        Ok(([-c; 3], [c; 3]))
    }
}

/// Q(t) = ∫_{Σ_t} (|E|² + |H|²) dv_g.
pub fn slice_energy(metric: &MetricField, t_level: f64, n: usize) -> Result<f64> {
    let grid = SliceGrid::new(metric, t_level, n)?;
    energy_on(metric, &grid)
}

fn energy_on(metric: &MetricField, grid: &SliceGrid) -> Result<f64> {
    if metric.family.is_flat() {
        return Ok(0.0);
    }
    let dens: Vec<f64> = grid
        .nodes
        .par_iter()
        .map(|p| frames::electric_magnetic(metric, p).map(|eh| eh.e_sq() + eh.h_sq()))
        .collect::<Result<_>>()?;
    Ok(dens.iter().zip(&grid.weights).zip(&grid.dv_weights).map(|((d, w), v)| d * w * v).sum())
}

fn sup_pi(metric: &MetricField, grid: &SliceGrid) -> Result<f64> {
    let v: Vec<f64> = grid
        .nodes
        .par_iter()
        .map(|p| metric.deformation_tensor(p).map(|d| d.pointwise_norm))
        .collect::<Result<_>>()?;
    Ok(v.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: Vec<f64>,
    #[serde(rename = "Q_of_t")]
    pub q_of_t: Vec<f64>,
    #[serde(rename = "L2_curvature")]
    pub l2_curvature: Vec<f64>,
    /// ∫_{t₀}^t ‖π‖_{L∞} dt'.
    pub pi_integral: Vec<f64>,
    pub gronwall_bound: Vec<f64>,
    pub budget_constant: f64,
    /// Smallest c for which every sample satisfies the bound.
    pub tightest_c: f64,
    pub passed: bool,
    pub nodes_per_axis: usize,
}

/// Q(t) ≤ Q(t₀) exp(c N₀ ∫‖π‖_{L∞}) on `nt` equally spaced slices.
pub fn gronwall_check(metric: &MetricField, budget: &AssumptionBudget, t_range: [f64; 2], nt: usize, n: usize, c: f64) -> Result<EnergyReport> {
    if nt < 2 || !(t_range[1] > t_range[0]) {
        return Err(Error::InvalidArgument("gronwall_check needs an increasing t-range and at least two slices".into()));
    }
    let ts: Vec<f64> = (0..nt).map(|k| t_range[0] + (t_range[1] - t_range[0]) * k as f64 / (nt - 1) as f64).collect();
    let mut q = Vec::with_capacity(nt);
    let mut sp = Vec::with_capacity(nt);
    for t in &ts {
        let grid = SliceGrid::new(metric, *t, n)?;
        q.push(energy_on(metric, &grid)?);
        sp.push(sup_pi(metric, &grid)?);
    }
    let mut pi_integral = vec![0.0];
    for k in 1..nt {
        let last = pi_integral[k - 1];
        pi_integral.push(last + 0.5 * (ts[k] - ts[k - 1]) * (sp[k] + sp[k - 1]));
    }
    let q0 = q[0];
    let bound: Vec<f64> = pi_integral.iter().map(|i| q0 * (c * budget.n0 * i).exp()).collect();
    let slack = |k: usize| 1e-12 * q[k].abs().max(q0.abs());
    let passed = (0..nt).all(|k| q[k] <= bound[k] + slack(k));
    let mut tightest_c: f64 = 0.0;
    for k in 1..nt {
        if q[k] > q0 + slack(k) {
            let denom = budget.n0 * pi_integral[k];
            tightest_c = tightest_c.max(if denom > 0.0 && q0 > 0.0 { (q[k] / q0).ln() / denom } else { f64::INFINITY });
        }
    }
    Ok(EnergyReport {
        l2_curvature: q.iter().map(|v| v.max(0.0).sqrt()).collect(),
        t: ts,
        q_of_t: q,
        pi_integral,
        gronwall_bound: bound,
        budget_constant: c,
        tightest_c,
        passed,
        nodes_per_axis: n,
    })
}

fn cholesky3(g: &M3) -> Option<M3> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut s = g[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Eigenvalues of k relative to g.
fn relative_eigenvalues(g: &M3, k: &M3) -> Option<V3> {
    let l = cholesky3(g)?;
    let li = tensor::inv3(&l)?;
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    m[i][j] += li[i][a] * k[a][b] * li[j][b];
                }
            }
        }
    }
    Some(tensor::sym_eigenvalues3(&m))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricEquivalence {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Smallest C with C⁻¹|ξ|² ≤ g(ξ, ξ) ≤ C|ξ|² on the samples.
    pub empirical_c: f64,
    /// Same quantity on the initial slice.
    pub initial_c: f64,
    /// ∫ ‖n k‖_{L∞} dt over the range.
    pub nk_integral: f64,
    /// I₀ exp(½ ∫ ‖n k‖_{L∞}), from ∂_t g = −½ n k.
    pub predicted_c: f64,
    pub initial_ok: bool,
    pub passed: bool,
}

/// Two-sided eigenvalue bounds of g_ij over `nt` slices of `n³` nodes.
pub fn metric_equivalence(metric: &MetricField, budget: &AssumptionBudget, t_range: [f64; 2], nt: usize, n: usize) -> Result<MetricEquivalence> {
    if nt < 2 {
        return Err(Error::InvalidArgument("metric_equivalence needs at least two slices".into()));
    }
    let ts: Vec<f64> = (0..nt).map(|k| t_range[0] + (t_range[1] - t_range[0]) * k as f64 / (nt - 1) as f64).collect();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut initial_c = 1.0;
    let mut sup_nk = Vec::with_capacity(nt);
    for (it, t) in ts.iter().enumerate() {
        let grid = SliceGrid::new(metric, *t, n).or_else(|_| sample_box(metric, *t, n))?;
        let stats: Vec<(f64, f64, f64)> = grid
            .nodes
            .par_iter()
            .map(|p| -> Result<(f64, f64, f64)> {
                let s = metric.geometry(p, false)?;
                let ev = tensor::sym_eigenvalues3(&s.g);
                let (a, b) = (ev.iter().cloned().fold(f64::INFINITY, f64::min), ev.iter().cloned().fold(0.0, f64::max));
                let kk = relative_eigenvalues(&s.g, &s.k).ok_or(Error::DegenerateMetric { t: p.t, x: p.x })?;
                let nk = kk.iter().map(|v| (s.n * v).abs()).fold(0.0, f64::max);
                Ok((a, b, nk))
            })
            .collect::<Result<_>>()?;
        let slo = stats.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        let shi = stats.iter().map(|s| s.1).fold(0.0, f64::max);
        if it == 0 {
            initial_c = shi.max(1.0 / slo);
        }
        lo = lo.min(slo);
        hi = hi.max(shi);
        sup_nk.push(stats.iter().map(|s| s.2).fold(0.0, f64::max));
    }
    let mut nk_integral = 0.0;
    for k in 1..nt {
        nk_integral += 0.5 * (ts[k] - ts[k - 1]) * (sup_nk[k] + sup_nk[k - 1]);
    }
    let predicted_c = budget.i0 * (0.5 * nk_integral).exp();
    let empirical_c = hi.max(1.0 / lo);
    Ok(MetricEquivalence {
        min_eigenvalue: lo,
        max_eigenvalue: hi,
        empirical_c,
        initial_c,
        nk_integral,
        predicted_c,
        initial_ok: initial_c <= budget.i0 * (1.0 + 1e-12),
        passed: initial_c <= budget.i0 * (1.0 + 1e-12) && empirical_c <= predicted_c * (1.0 + 1e-9),
    })
}

/// Sample nodes for pointwise checks on charts without a cutoff box.
fn sample_box(metric: &MetricField, t: f64, n: usize) -> Result<SliceGrid> {
    let c = metric.chart_scale();
    let mut m = metric.clone();
    m.cutoff = Some(c);
    SliceGrid::new(&m, t, n)
}

/// Geodesics of (Σ_t, g) with state (x, v).
struct SliceGeodesic<'a> {
    metric: &'a MetricField,
    t: f64,
}

fn spatial_christoffel(s: &MetricSample) -> [[[f64; 3]; 3]; 3] {
    let mut c = [[[0.0; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                c[i][j][k] = s.christoffel4[i + 1][j + 1][k + 1];
            }
        }
    }
    c
}

impl System for SliceGeodesic<'_> {
    fn dim(&self) -> usize {
        6
    }

    fn rhs(&self, _s: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let s = self.metric.geometry(&SpacetimePoint::new(self.t, [y[0], y[1], y[2]]), false)?;
        let c = spatial_christoffel(&s);
        for i in 0..3 {
            dy[i] = y[3 + i];
            let mut a = 0.0;
            for j in 0..3 {
                for k in 0..3 {
                    a += c[i][j][k] * y[3 + j] * y[3 + k];
                }
            }
            dy[3 + i] = -a;
        }
        Ok(())
    }
}

/// Unwrapped endpoint of the slice geodesic with initial velocity `v`.
fn shoot(metric: &MetricField, t: f64, x0: &V3, v: &V3, s: f64, opts: &Options) -> Result<Vec<ode::DenseStep>> {
    let y0 = vec![x0[0], x0[1], x0[2], v[0], v[1], v[2]];
    let sys = SliceGeodesic { metric, t };
    let mut dense = Vec::new();
    ode::solve(&sys, 0.0, &y0, s, opts, |st| {
        dense.push(st.dense()?.clone());
        Ok(Control::Continue)
    })?;
    Ok(dense)
}

fn eval_dense(d: &[ode::DenseStep], s: f64) -> Vec<f64> {
    let i = d.iter().position(|st| s <= st.s1()).unwrap_or(d.len() - 1);
    d[i].eval(s)
}

/// A ray of the slice exponential map with its two ω-neighbours.
struct SliceRay {
    center: Vec<ode::DenseStep>,
    du: [[Vec<ode::DenseStep>; 2]; 2],
    eps: f64,
    cut: f64,
}

impl SliceRay {
    /// √det g · |det ∂(x)/∂(s, ω)| at affine parameter s.
    fn density(&self, metric: &MetricField, t: f64, s: f64) -> f64 {
        let y = eval_dense(&self.center, s);
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            m[i][0] = y[3 + i];
        }
        for a in 0..2 {
            let p = eval_dense(&self.du[a][0], s);
            let q = eval_dense(&self.du[a][1], s);
            for i in 0..3 {
                m[i][a + 1] = (p[i] - q[i]) / (2.0 * self.eps);
            }
        }
        let (_, g) = metric.lapse_metric(t, &[y[0], y[1], y[2]]);
        tensor::det3(&g).max(0.0).sqrt() * tensor::det3(&m)
    }
}

const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Composite Gauss-Legendre over [0, b] in `m` panels.
fn gauss<F: Fn(f64) -> f64>(f: F, b: f64, m: usize) -> f64 {
    let h = b / m as f64;
    let mut acc = 0.0;
    for k in 0..m {
        let a = k as f64 * h;
        for (x, w) in GL8 {
            acc += 0.5 * h * w * f(a + 0.5 * h * (x + 1.0));
        }
    }
    acc
}

fn triad_velocity(s: &MetricSample, w: &V3) -> V3 {
    let e = s.spatial_triad();
    let mut v = [0.0; 3];
    for a in 0..3 {
        for i in 0..3 {
            v[i] += w[a] * e[a][i];
        }
    }
    v
}

fn normalized(w: &V3) -> V3 {
    let n = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    [w[0] / n, w[1] / n, w[2] / n]
}

/// Length of the slice geodesic from x0 to `target` (unwrapped), by Newton
/// shooting from the straight-line guess; None if it does not converge.
fn shooting_distance(metric: &MetricField, t: f64, x0: &V3, target: &V3, opts: &Options) -> Option<f64> {
    let mut v = [target[0] - x0[0], target[1] - x0[1], target[2] - x0[2]];
    let scale = tensor::euclid_norm(&v).max(1e-300);
    let end = |v: &V3| -> Option<V3> {
        let d = shoot(metric, t, x0, v, 1.0, opts).ok()?;
        let y = eval_dense(&d, 1.0);
        Some([y[0], y[1], y[2]])
    };
    for _ in 0..20 {
        let x = end(&v)?;
        let f = [x[0] - target[0], x[1] - target[1], x[2] - target[2]];
        if tensor::euclid_norm(&f) <= 1e-12 * scale {
            let s0 = metric.geometry(&SpacetimePoint::new(t, *x0), false).ok()?;
            return Some(tensor::dot_g(&s0.g, &v, &v).sqrt());
        }
        let h = 1e-6 * scale;
        let mut jac = [[0.0; 3]; 3];
        for k in 0..3 {
            let mut vp = v;
            vp[k] += h;
            let xp = end(&vp)?;
            for i in 0..3 {
                jac[i][k] = (xp[i] - x[i]) / h;
            }
        }
        let ji = tensor::inv3(&jac)?;
        for i in 0..3 {
            for k in 0..3 {
                v[i] -= ji[i][k] * f[k];
            }
        }
    }
    None
}

/// First s where the ray stops minimizing: a conjugate point, or a
/// shorter geodesic to another lattice image on periodic charts.
fn cut_distance(metric: &MetricField, t: f64, x0: &V3, ray: &SliceRay, rho: f64, opts: &Options) -> f64 {
    let samples = 64;
    let dens = |s: f64| ray.density(metric, t, s);
    let mut conj = f64::INFINITY;
    let mut prev = (rho / samples as f64 * 1e-3, 1.0);
    for k in 1..=samples {
        let s = rho * k as f64 / samples as f64;
        let d = dens(s);
        if d <= 0.0 {
            conj = ode::bracket_root(dens, prev.0, s, prev.1, d, 1e-13 * rho);
            break;
        }
        prev = (s, d);
    }
    let limit = conj.min(rho);
    let Some(l) = metric.family.period() else { return conj };
    let lower = metric_lower_bound(metric, t);
    let gap = |s: f64| -> f64 {
        let y = eval_dense(&ray.center, s);
        let mut best = f64::INFINITY;
        for a in -1i64..=1 {
            for b in -1i64..=1 {
                for c in -1i64..=1 {
                    if a == 0 && b == 0 && c == 0 {
                        continue;
                    }
                    let target = [y[0] + l * a as f64, y[1] + l * b as f64, y[2] + l * c as f64];
                    let straight = tensor::euclid_norm(&[target[0] - x0[0], target[1] - x0[1], target[2] - x0[2]]);
                    if straight * lower >= s.min(best) {
                        continue;
                    }
                    if let Some(d) = shooting_distance(metric, t, x0, &target, opts) {
                        best = best.min(d);
                    }
                }
            }
        }
        best.min(2.0 * rho) - s
    };
    let mut lo = 0.0;
    let mut glo = 0.0;
    for k in 1..=samples {
        let s = limit * k as f64 / samples as f64;
        let gs = gap(s);
        if gs < 0.0 {
            if k == 1 {
                return s;
            }
            return ode::bracket_root(gap, lo, s, glo, gs, 1e-13 * rho);
        }
        lo = s;
        glo = gs;
    }
    conj
}

/// Smallest √λ of g over the slice sample, bounding lengths from below.
fn metric_lower_bound(metric: &MetricField, t: f64) -> f64 {
    let l = metric.family.period().unwrap_or(1.0);
    let mut lo = f64::INFINITY;
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                let x = [l * i as f64 / 4.0, l * j as f64 / 4.0, l * k as f64 / 4.0];
                let (_, g) = metric.lapse_metric(t, &x);
                lo = lo.min(tensor::sym_eigenvalues3(&g).iter().cloned().fold(f64::INFINITY, f64::min));
            }
        }
    }
    0.99 * lo.max(0.0).sqrt()
}

fn slice_rays(metric: &MetricField, p: &SpacetimePoint, rho: f64, grid: &Icosphere, opts: &Options) -> Result<Vec<SliceRay>> {
    let s0 = metric.geometry(p, false)?;
    let eps = 1e-4;
    let out: Vec<Result<SliceRay>> = grid
        .vertices
        .par_iter()
        .map(|w| {
            let (u1, u2) = frames::screen_basis(w);
            let trace = |w: &V3| -> Result<Vec<ode::DenseStep>> {
                shoot(metric, p.t, &p.x, &triad_velocity(&s0, &normalized(w)), rho, opts).map_err(|e| match e {
                    Error::PointOutsideAtlas { .. } | Error::DegenerateMetric { .. } => Error::BallExitsChart { radius: rho },
                    e => e,
                })
            };
            let side = |u: &V3, sign: f64| [w[0] + sign * eps * u[0], w[1] + sign * eps * u[1], w[2] + sign * eps * u[2]];
            let mut ray = SliceRay {
                center: trace(w)?,
                du: [[trace(&side(&u1, 1.0))?, trace(&side(&u1, -1.0))?], [trace(&side(&u2, 1.0))?, trace(&side(&u2, -1.0))?]],
                eps,
                cut: f64::INFINITY,
            };
            ray.cut = cut_distance(metric, p.t, &p.x, &ray, rho, opts);
            Ok(ray)
        })
        .collect();
    out.into_iter().collect()
}

/// |B_r(p)| in Σ_t for each radius, integrating the exponential map up to
/// the cut distance of every ray.
pub fn ball_volumes(metric: &MetricField, p: &SpacetimePoint, radii: &[f64], grid: &Icosphere, opts: &Options) -> Result<Vec<f64>> {
    let rho = radii.iter().cloned().fold(0.0, f64::max);
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument("radii must be positive".into()));
    }
    let rays = slice_rays(metric, p, rho, grid, opts)?;
    Ok(radii
        .iter()
        .map(|r| {
            rays.iter()
                .zip(&grid.weights)
                .map(|(ray, w)| {
                    let b = r.min(ray.cut);
                    w * gauss(|s| ray.density(metric, p.t, s), b, 4)
                })
                .sum()
        })
        .collect())
}

/// Log-spaced radii r_k = scale · 2^{k/8} in [r_min, ρ]; nested in ρ.
pub fn radius_ladder(scale: f64, r_min: f64, rho: f64) -> Vec<f64> {
    let k0 = (8.0 * (r_min / scale).log2()).ceil() as i64;
    let mut out = Vec::new();
    let mut k = k0;
    loop {
        let r = scale * 2f64.powf(k as f64 / 8.0);
        if r > rho * (1.0 + 1e-12) {
            break;
        }
        out.push(r);
        k += 1;
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VolumeRadiusRow {
    pub point: SpacetimePoint,
    pub r_vol: f64,
    pub argmin_r: f64,
    /// (r, |B_r|/r³).
    pub ladder: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VolumeRadiusReport {
    pub t_level: f64,
    pub rho: f64,
    pub rows: Vec<VolumeRadiusRow>,
    pub infimum: f64,
}

/// r_vol(p, ρ) = inf over the radius ladder of |B_r(p)|/r³.
pub fn volume_radius(metric: &MetricField, t_level: f64, points: &[V3], rho: f64, grid: &Icosphere, opts: &Options) -> Result<VolumeRadiusReport> {
    let scale = metric.chart_scale();
    let radii = radius_ladder(scale, 0.01 * scale, rho);
    if radii.is_empty() {
        return Err(Error::InvalidArgument(format!("rho = {rho} is below the smallest ladder radius")));
    }
    let mut rows = Vec::with_capacity(points.len());
    for x in points {
        let p = SpacetimePoint::new(t_level, *x);
        metric.locate(&p)?;
        let vols = ball_volumes(metric, &p, &radii, grid, opts)?;
        let ladder: Vec<[f64; 2]> = radii.iter().zip(&vols).map(|(r, v)| [*r, v / r.powi(3)]).collect();
        let best = ladder.iter().fold([f64::NAN, f64::INFINITY], |a, b| if b[1] < a[1] { *b } else { a });
        rows.push(VolumeRadiusRow { point: p, r_vol: best[1], argmin_r: best[0], ladder });
    }
    let infimum = rows.iter().map(|r| r.r_vol).fold(f64::INFINITY, f64::min);
    Ok(VolumeRadiusReport { t_level, rho, rows, infimum })
}

/// Options tuned for slice geodesics.
pub fn slice_options(metric: &MetricField) -> Options {
    let mut o = crate::geodesics::default_options(metric);
    o.rtol = 1e-12;
    o.atol = 1e-14;
    o
}
