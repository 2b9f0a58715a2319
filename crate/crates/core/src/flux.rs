//! Ricci coefficients and foliation scalars along the past cone, transport
//! residuals and the reduced curvature flux R(p, δ).

use crate::error::{Error, Result};
use crate::frames::{self, DensityContext, NullCurvatureComponents};
use crate::geodesics::{self, fan_map, quad, Leaf, Radius, TraceRequest, IP, IV};
use crate::icosphere::Icosphere;
use crate::metric::{MetricField, MetricSample, SpacetimePoint};
use crate::ode::Options;
use crate::tensor::{V3, V4};
use serde::{Deserialize, Serialize};

/// Lower end of the affine range where 1/s quantities are evaluated.
pub const S_FLOOR: f64 = 1e-3;
pub const FRAME_DRIFT_TOL: f64 = 1e-6;
pub const BOOTSTRAP_BOUND: f64 = 1e-2;
pub const IMPROVED_BOUND: f64 = 1e-3;

/// Full ray data at one affine node.
pub struct Node {
    pub s: f64,
    pub geo: MetricSample,
    pub leaf: Leaf,
    pub y: Vec<f64>,
}

fn v4(y: &[f64], i: usize) -> V4 {
    [y[i], y[i + 1], y[i + 2], y[i + 3]]
}

/// Integrates the full ray system for ω and reconstructs the leaf at each
/// of the ascending `s_nodes`.
pub fn trace_nodes(
    metric: &MetricField,
    p: &SpacetimePoint,
    omega: &V3,
    s_nodes: &[f64],
    with_riemann: bool,
    opts: &Options,
) -> Result<Vec<Node>> {
    let s_last = s_nodes.last().copied().unwrap_or(0.0);
    let req = TraceRequest {
        s_max: s_last.max(1e-12) * (1.0 + 1e-12),
        full: true,
        s_nodes: s_nodes.to_vec(),
        stop_when_done: true,
        ..Default::default()
    };
    let ray = geodesics::trace_ray(metric, p, omega, 0, &req, opts)?;
    let mut out = Vec::with_capacity(s_nodes.len());
    for snap in ray.s_snaps {
        let snap = snap.ok_or(Error::AtlasExit { s_exit: ray.s_end })?;
        let mut pt = SpacetimePoint::new(snap.y[0], [snap.y[1], snap.y[2], snap.y[3]]);
        pt.chart = snap.chart;
        let geo = metric.geometry(&pt, with_riemann)?;
        let leaf = geodesics::leaf_geometry(&geo, &snap.y)?;
        out.push(Node { s: snap.s, geo, leaf, y: snap.y });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RicciSample {
    pub s: f64,
    pub chi: [[f64; 2]; 2],
    pub trchi: f64,
    pub chihat_norm: f64,
    pub zeta: [f64; 2],
    pub zeta_norm: f64,
    pub frame_drift: f64,
}

/// χ, tr χ, |χ̂| and ζ along the ray. Nodes below [`S_FLOOR`] are skipped.
pub fn ricci_coefficients(nodes: &[Node]) -> Result<Vec<RicciSample>> {
    let mut out = Vec::new();
    for n in nodes.iter().filter(|n| n.s >= S_FLOOR && n.leaf.regular) {
        let drift = frames::frame_residual(&n.geo, &n.leaf.frame);
        if drift > FRAME_DRIFT_TOL {
            return Err(Error::FrameDrift { s: n.s, drift });
        }
        let l = &n.leaf;
        out.push(RicciSample {
            s: n.s,
            chi: l.chi,
            trchi: l.trchi,
            chihat_norm: l.chihat_sq.sqrt(),
            zeta: l.zeta,
            zeta_norm: l.zeta[0].hypot(l.zeta[1]),
            frame_drift: drift,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TransportSample {
    pub s: f64,
    /// From φ⁻¹ = g(T, L).
    pub phi: f64,
    /// From ψ_a = g(e_a, T).
    pub psi: [f64; 2],
    pub phi_transport: f64,
    pub psi_transport: [f64; 2],
    /// |φ − φ_transport|.
    pub residual_phi: f64,
    /// |ψ − ψ_transport|.
    pub residual_psi: f64,
    /// |½π_LL − ¼φ⁻²(π_TN + ½π_NN)|, the transport law read for φ⁻¹.
    pub phi_inverse_law_gap: f64,
    /// |dφ/ds − ¼φ⁻²(π_TN + ½π_NN)| with the left side taken literally.
    pub phi_literal_law_gap: f64,
    /// Gap between ∇_Lψ from the connection and the primed-frame right side.
    pub psi_law_gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransportState {
    pub omega: V3,
    pub samples: Vec<TransportSample>,
}

impl TransportState {
    pub fn max_residual_phi(&self) -> f64 {
        self.samples.iter().map(|s| s.residual_phi).fold(0.0, f64::max)
    }

    pub fn max_residual_psi(&self) -> f64 {
        self.samples.iter().map(|s| s.residual_psi).fold(0.0, f64::max)
    }

    /// max over s of |φ − 1| + |ψ|.
    pub fn smallness(&self) -> f64 {
        self.samples.iter().map(|s| (s.phi - 1.0).abs() + s.psi[0].hypot(s.psi[1])).fold(0.0, f64::max)
    }
}

/// Unit normal N to S_t inside Σ_t, from L = −½φ⁻¹(T + N).
fn leaf_normal(t: &V4, l: &V4, phi: f64) -> V4 {
    let mut nv = [0.0; 4];
    for i in 0..4 {
        nv[i] = -2.0 * phi * l[i] - t[i];
    }
    nv
}

/// e_a' = e_a − φψ_a L.
fn primed_leaf(l: &V4, e: &V4, phi: f64, psi: f64) -> V4 {
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = e[i] - phi * psi * l[i];
    }
    out
}

fn transport_sample(n: &Node) -> TransportSample {
    let geo = &n.geo;
    let leaf = &n.leaf;
    let l = v4(&n.y, IV);
    let t = geo.t_vector();
    let pi = geo.geometric_pi();
    let phi = leaf.phi;
    let psi = leaf.psi;
    let nv = leaf_normal(&t, &l, phi);
    let law = 0.25 / (phi * phi) * (quad(&pi, &t, &nv) + 0.5 * quad(&pi, &nv, &nv));
    let du = 0.5 * quad(&pi, &l, &l);
    let dphi = -phi * phi * du;
    let mut psi_law_gap: f64 = 0.0;
    if leaf.regular {
        let dt = geo.dt_tensor();
        for a in 0..2 {
            let geometric = quad(&dt, &l, leaf.frame.e(a)) - (1.0 / phi) * leaf.zeta[a];
            let ep = primed_leaf(&l, leaf.frame.e(a), phi, psi[a]);
            let mut rhs = -0.5 / phi * psi[a] * (quad(&pi, &t, &nv) + 0.5 * quad(&pi, &nv, &nv))
                - 0.5 / phi * (quad(&pi, &t, &ep) + quad(&pi, &nv, &ep));
            for b in 0..2 {
                rhs -= leaf.chi[a][b] * psi[b];
            }
            psi_law_gap = psi_law_gap.max((geometric - rhs).abs());
        }
    }
    let phi_t = 1.0 / leaf.u_transport;
    let pt = leaf.psi_transport;
    TransportSample {
        s: n.s,
        phi,
        psi,
        phi_transport: phi_t,
        psi_transport: pt,
        residual_phi: (phi - phi_t).abs(),
        residual_psi: (psi[0] - pt[0]).hypot(psi[1] - pt[1]),
        phi_inverse_law_gap: (du - law).abs(),
        phi_literal_law_gap: (dphi - law).abs(),
        psi_law_gap,
    }
}

/// φ, ψ from their definitions against the transported values.
pub fn foliation_scalars(omega: &V3, nodes: &[Node]) -> TransportState {
    TransportState { omega: *omega, samples: nodes.iter().map(transport_sample).collect() }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TFoliationSample {
    pub s: f64,
    /// max |χ_{a'b'} − χ_ab|.
    pub chi_gap: f64,
    /// max |ζ_{a'} − (ζ_a − φψ_b χ_ab)|.
    pub zeta_gap: f64,
}

/// Recomputes χ and ζ in the frame of S_t = Σ_t ∩ N⁻(p). The primed leaf
/// vectors come from dropping the t-component along L and L̄' from the
/// generic leaf-normal construction.
pub fn t_foliation_check(nodes: &[Node]) -> Result<Vec<TFoliationSample>> {
    let mut out = Vec::new();
    for n in nodes.iter().filter(|n| n.s >= S_FLOOR && n.leaf.regular) {
        let geo = &n.geo;
        let leaf = &n.leaf;
        let l = v4(&n.y, IV);
        let mut ep = [[0.0; 4]; 2];
        for a in 0..2 {
            let e = leaf.frame.e(a);
            let c = e[0] / l[0];
            for i in 0..4 {
                ep[a][i] = e[i] - c * l[i];
            }
        }
        let fp = frames::null_frame_from_leaf(geo, &l, &ep[0], &ep[1])?;
        let mi = inverse2(&leaf.m).ok_or_else(|| Error::FrameDegeneracy("singular Jacobi matrix".into()))?;
        let p = [v4(&n.y, IP[0]), v4(&n.y, IP[1])];
        let mut chi_gap: f64 = 0.0;
        let mut zeta_gap: f64 = 0.0;
        for a in 0..2 {
            let mut dl = [0.0; 4];
            for i in 0..2 {
                for k in 0..4 {
                    dl[k] += mi[i][a] * p[i][k];
                }
            }
            for b in 0..2 {
                chi_gap = chi_gap.max((geo.dot(&dl, &ep[b]) - leaf.chi[a][b]).abs());
            }
            let zp = 0.5 * geo.dot(&dl, &fp.lbar);
            let mut expect = leaf.zeta[a];
            for b in 0..2 {
                expect -= leaf.phi * leaf.psi[b] * leaf.chi[a][b];
            }
            zeta_gap = zeta_gap.max((zp - expect).abs());
        }
        out.push(TFoliationSample { s: n.s, chi_gap, zeta_gap });
    }
    Ok(out)
}

fn inverse2(m: &[[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let d = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    (d.abs() > 1e-300).then(|| [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]])
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub omega_index: usize,
    pub s: f64,
    pub trchi: f64,
    pub chihat: f64,
    pub zeta: f64,
    pub phi: f64,
    pub psi: f64,
    pub residual_phi: f64,
    pub residual_psi: f64,
}

/// Per-ray table of coefficients and transport residuals.
pub fn coefficient_rows(omega_index: usize, nodes: &[Node]) -> Result<Vec<CoefficientRow>> {
    let ricci = ricci_coefficients(nodes)?;
    let transport = foliation_scalars(&[0.0; 3], nodes);
    Ok(ricci
        .iter()
        .map(|r| {
            let t = transport.samples.iter().find(|t| t.s == r.s).unwrap();
            CoefficientRow {
                omega_index,
                s: r.s,
                trchi: r.trchi,
                chihat: r.chihat_norm,
                zeta: r.zeta_norm,
                phi: t.phi,
                psi: t.psi[0].hypot(t.psi[1]),
                residual_phi: t.residual_phi,
                residual_psi: t.residual_psi,
            }
        })
        .collect())
}

/// Induced geometry of the leaf S_s over an ω-grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeafGeometry {
    pub s_level: f64,
    /// σ_ij = g(J_i, J_j) in the ω-coordinates of each vertex cell.
    pub sigma_cells: Vec<[[f64; 2]; 2]>,
    pub area: f64,
    pub r_of_s: f64,
    pub trchi_field: Vec<f64>,
    pub chihat_norm_field: Vec<f64>,
    pub zeta_field: Vec<f64>,
    pub phi_field: Vec<f64>,
    pub psi_field: Vec<f64>,
}

pub fn leaf_at(metric: &MetricField, p: &SpacetimePoint, s: f64, grid: &Icosphere, opts: &Options) -> Result<LeafGeometry> {
    let leaves = fan_map(grid, |_, w| trace_nodes(metric, p, w, &[s], false, opts).map(|mut v| v.pop().unwrap()));
    let mut g = LeafGeometry {
        s_level: s,
        sigma_cells: Vec::new(),
        area: 0.0,
        r_of_s: 0.0,
        trchi_field: Vec::new(),
        chihat_norm_field: Vec::new(),
        zeta_field: Vec::new(),
        phi_field: Vec::new(),
        psi_field: Vec::new(),
    };
    for (i, n) in leaves.into_iter().enumerate() {
        let n = n?;
        let l = &n.leaf;
        let m = &l.m;
        let mut sig = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                sig[a][b] = m[0][a] * m[0][b] + m[1][a] * m[1][b];
            }
        }
        g.sigma_cells.push(sig);
        g.area += grid.weights[i] * l.det.abs();
        g.trchi_field.push(l.trchi);
        g.chihat_norm_field.push(l.chihat_sq.sqrt());
        g.zeta_field.push(l.zeta[0].hypot(l.zeta[1]));
        g.phi_field.push(l.phi);
        g.psi_field.push(l.psi[0].hypot(l.psi[1]));
    }
    g.r_of_s = (g.area / (4.0 * std::f64::consts::PI)).sqrt();
    Ok(g)
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct ComponentIntegrals {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub sigma: f64,
    pub betabar: f64,
}

impl ComponentIntegrals {
    pub fn sum(&self) -> f64 {
        self.alpha + self.beta + self.rho + self.sigma + self.betabar
    }

    fn add_scaled(&mut self, w: f64, c: &NullCurvatureComponents) {
        self.alpha += w * c.alpha_sq();
        self.beta += w * c.beta_sq();
        self.rho += w * c.rho * c.rho;
        self.sigma += w * c.sigma * c.sigma;
        self.betabar += w * c.betabar_sq();
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FluxReport {
    pub delta: f64,
    /// R(p, δ).
    pub reduced_flux: f64,
    pub component_integrals: ComponentIntegrals,
    /// ∫ Q(T, T, T, −L) over N⁻(p, δ).
    pub total_flux: f64,
    /// ∫ Q(T₀, T₀, T₀, −L).
    pub principal_flux: f64,
    /// Smallest pointwise flux density met by the quadrature.
    pub positivity_margin: f64,
    /// Bound on the omitted [0, s_floor] contribution to R².
    pub vertex_error: f64,
    pub grid_level: u32,
    pub s_nodes: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct FluxSettings {
    /// Target Simpson step in s.
    pub s_step: f64,
    pub s_floor: f64,
}

impl Default for FluxSettings {
    fn default() -> Self {
        FluxSettings { s_step: 0.025, s_floor: S_FLOOR }
    }
}

/// Largest δ allowed by an injectivity estimate with error bar.
pub fn injectivity_limit(i_star: &Radius, error_bar: f64) -> f64 {
    match i_star {
        Radius::Finite(v) => v - error_bar,
        Radius::Beyond { beyond } => *beyond,
    }
}

fn simpson_nodes(a: f64, b: f64, step: f64) -> Vec<f64> {
    let m = (((b - a) / (2.0 * step)).ceil() as usize).max(1);
    let h = (b - a) / (2 * m) as f64;
    (0..=2 * m).map(|k| if k == 2 * m { b } else { a + k as f64 * h }).collect()
}

fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let c = if k == 0 || k == n - 1 {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

struct NodeDensity {
    comps: NullCurvatureComponents,
    q_total: f64,
    q_principal: f64,
    area: f64,
}

/// R(p, δ) and the total flux for every δ of an ascending ladder, from one
/// traced fan. Fails if the largest δ reaches `i_limit`.
pub fn flux_ladder(
    metric: &MetricField,
    p: &SpacetimePoint,
    deltas: &[f64],
    grid: &Icosphere,
    i_limit: f64,
    settings: &FluxSettings,
    opts: &Options,
) -> Result<Vec<FluxReport>> {
    if deltas.is_empty() {
        return Ok(Vec::new());
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let d_max = *sorted.last().unwrap();
    if d_max >= i_limit {
        return Err(Error::DeltaBeyondInjectivity { delta: d_max, i_star: i_limit });
    }
    if sorted[0] <= settings.s_floor {
        return Err(Error::InvalidArgument(format!("delta must exceed s_floor = {}", settings.s_floor)));
    }
    let per_delta: Vec<Vec<f64>> = sorted.iter().map(|d| simpson_nodes(settings.s_floor, *d, settings.s_step)).collect();
    let mut all: Vec<f64> = per_delta.iter().flatten().copied().collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup();
    let fan = fan_map(grid, |_, w| -> Result<Vec<NodeDensity>> {
        let nodes = trace_nodes(metric, p, w, &all, true, opts)?;
        nodes
            .iter()
            .map(|n| {
                let comps = frames::null_decomposition(&n.geo, &n.geo.riemann, &n.leaf.frame);
                let ctx = DensityContext { sample: &n.geo, frame: &n.leaf.frame, phi: n.leaf.phi, psi: n.leaf.psi };
                let d = frames::bel_robinson_density(&comps, &ctx)?;
                Ok(NodeDensity { comps, q_total: d.q_total, q_principal: d.q_principal, area: n.leaf.det.abs() })
            })
            .collect()
    });
    let fan: Vec<Vec<NodeDensity>> = fan.into_iter().collect::<Result<_>>()?;
    let vertex_density = fan.iter().map(|r| r[0].comps.tangential_sq()).fold(0.0, f64::max);
    let vertex_error = vertex_density * 4.0 * std::f64::consts::PI * settings.s_floor.powi(3) / 3.0;
    let mut out = Vec::with_capacity(sorted.len());
    for (d, nodes) in sorted.iter().zip(&per_delta) {
        let h = nodes[1] - nodes[0];
        let sw = simpson_weights(nodes.len(), h);
        let idx: Vec<usize> = nodes.iter().map(|s| all.iter().position(|a| a == s).unwrap()).collect();
        let mut comps = ComponentIntegrals::default();
        let mut total = 0.0;
        let mut principal = 0.0;
        let mut margin = f64::INFINITY;
        for (r, ray) in fan.iter().enumerate() {
            let w = grid.weights[r];
            for (k, &j) in idx.iter().enumerate() {
                let nd = &ray[j];
                let m = w * sw[k] * nd.area;
                comps.add_scaled(m, &nd.comps);
                total += m * nd.q_total;
                principal += m * nd.q_principal;
                margin = margin.min(nd.q_total);
            }
        }
        out.push(FluxReport {
            delta: *d,
            reduced_flux: comps.sum().max(0.0).sqrt(),
            component_integrals: comps,
            total_flux: total,
            principal_flux: principal,
            positivity_margin: margin,
            vertex_error,
            grid_level: grid.level,
            s_nodes: nodes.len(),
        });
    }
    Ok(out)
}

pub fn reduced_flux(
    metric: &MetricField,
    p: &SpacetimePoint,
    delta: f64,
    grid: &Icosphere,
    i_limit: f64,
    opts: &Options,
) -> Result<FluxReport> {
    Ok(flux_ladder(metric, p, &[delta], grid, i_limit, &FluxSettings::default(), opts)?.remove(0))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SmallnessReport {
    pub max: f64,
    pub bootstrap_ok: bool,
    pub improved_ok: bool,
}

/// Running max of |φ − 1| + |ψ| against the bootstrap and improved bounds.
pub fn smallness_monitor(states: &[TransportState], delta: f64) -> SmallnessReport {
    let max = states
        .iter()
        .flat_map(|s| s.samples.iter())
        .filter(|s| s.s <= delta)
        .map(|s| (s.phi - 1.0).abs() + s.psi[0].hypot(s.psi[1]))
        .fold(0.0, f64::max);
    SmallnessReport { max, bootstrap_ok: max <= BOOTSTRAP_BOUND, improved_ok: max <= IMPROVED_BOUND }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrchiRay {
    pub max_deviation: f64,
    pub chihat_integral: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrchiDeviation {
    pub s_range: [f64; 2],
    pub rays: Vec<TrchiRay>,
    pub max_deviation: f64,
    pub max_chihat_integral: f64,
    /// |fine − coarse| for both maxima, if a coarser grid exists.
    pub error_bars: Option<[f64; 2]>,
}

fn trchi_on(metric: &MetricField, p: &SpacetimePoint, grid: &Icosphere, s_range: [f64; 2], step: f64, opts: &Options) -> Result<Vec<TrchiRay>> {
    let lo = s_range[0].max(S_FLOOR);
    let mut nodes = simpson_nodes(S_FLOOR, s_range[1], step);
    if !nodes.contains(&lo) {
        nodes.push(lo);
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    let h = nodes[1] - nodes[0];
    let rays = fan_map(grid, |_, w| -> Result<TrchiRay> {
        let traced = trace_nodes(metric, p, w, &nodes, false, opts)?;
        let ricci = ricci_coefficients(&traced)?;
        let max_deviation = ricci.iter().filter(|r| r.s >= lo).map(|r| (r.trchi - 2.0 / r.s).abs()).fold(0.0, f64::max);
        let grid_pts: Vec<&RicciSample> = ricci.iter().filter(|r| simpson_grid_member(r.s, S_FLOOR, h)).collect();
        let sw = simpson_weights(grid_pts.len(), h);
        let chihat_integral = grid_pts.iter().zip(&sw).map(|(r, w)| w * r.chihat_norm * r.chihat_norm).sum();
        Ok(TrchiRay { max_deviation, chihat_integral })
    });
    rays.into_iter().collect()
}

fn simpson_grid_member(s: f64, a: f64, h: f64) -> bool {
    let k = (s - a) / h;
    (k - k.round()).abs() < 1e-9
}

/// max |tr χ − 2/s| over `s_range` and ∫|χ̂|² from the vertex to the
/// upper end, per ray and over the fan.
pub fn trchi_deviation(metric: &MetricField, p: &SpacetimePoint, grid: &Icosphere, s_range: [f64; 2], opts: &Options) -> Result<TrchiDeviation> {
    let step = 0.01 * metric.chart_scale();
    let rays = trchi_on(metric, p, grid, s_range, step, opts)?;
    let maxima = |r: &[TrchiRay]| {
        (
            r.iter().map(|x| x.max_deviation).fold(0.0, f64::max),
            r.iter().map(|x| x.chihat_integral).fold(0.0, f64::max),
        )
    };
    let (max_deviation, max_chihat_integral) = maxima(&rays);
    let error_bars = if grid.level > 0 {
        let coarse = trchi_on(metric, p, &Icosphere::new(grid.level - 1)?, s_range, step, opts)?;
        let (a, b) = maxima(&coarse);
        Some([(a - max_deviation).abs(), (b - max_chihat_integral).abs()])
    } else {
        None
    };
    Ok(TrchiDeviation { s_range, rays, max_deviation, max_chihat_integral, error_bars })
}

/// Flux positivity margin below which a report counts as negative.
pub fn positivity_tolerance(r: &FluxReport) -> f64 {
    1e-9_f64.max(1e-9 * r.principal_flux.abs())
}
