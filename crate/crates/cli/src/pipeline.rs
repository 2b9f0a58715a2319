//! The trace, injectivity, flux and energy pipelines.

use crate::manifest::{RunManifest, Verdict};
use crate::scenario::Scenario;
use anyhow::{Context, Result};
use nullcone::cutlocus::{self, InjectivitySettings, MatchSettings, RadiusReport};
use nullcone::energy::{self, EnergyReport, MetricEquivalence, VolumeRadiusReport};
use nullcone::flux::{self, FluxReport, FluxSettings, SmallnessReport, S_FLOOR};
use nullcone::geodesics::{self, fan_map, LevelSpec, Radius, RayRow};
use nullcone::icosphere::Icosphere;
use nullcone::metric::{self, BudgetAudit, SpacetimePoint};
use nullcone::ode::Options;
use serde::Serialize;
use std::path::{Path, PathBuf};

pub struct Run {
    pub scenario: Scenario,
    /// Integrator tolerance override.
    pub tol: Option<f64>,
    pub out: PathBuf,
    pub manifest: RunManifest,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    scenario: &'a Scenario,
    tol: Option<f64>,
    report: &'a T,
}

impl Run {
    pub fn options(&self) -> Options {
        self.tuned(geodesics::default_options(&self.scenario.metric))
    }

    pub fn slice_options(&self) -> Options {
        self.tuned(energy::slice_options(&self.scenario.metric))
    }

    fn tuned(&self, mut o: Options) -> Options {
        if let Some(tol) = self.tol {
            o.rtol = tol;
            o.atol = 1e-2 * tol;
        }
        o
    }

    pub fn grid(&self) -> Result<Icosphere> {
        Ok(Icosphere::new(self.scenario.grid_level)?)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Writes `report` wrapped with the scenario it came from.
    pub fn write_json<T: Serialize>(&mut self, name: &str, report: &T) -> Result<()> {
        let env = Envelope { scenario: &self.scenario, tol: self.tol, report };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        write_file(&self.path(name), text.as_bytes())?;
        self.manifest.artifacts.push(name.into());
        Ok(())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.manifest.artifacts.push(name.into());
        Ok(())
    }

    pub fn write_manifest(&self) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        write_file(&self.path("manifest.json"), text.as_bytes())
    }

    pub fn audit(&mut self) -> BudgetAudit {
        let s = &self.scenario;
        let grid = metric::audit_grid(&s.metric, 5, 6);
        let audit = self.manifest.timed("budget_audit", || metric::budget_audit(&s.metric, &s.budget, &grid));
        self.manifest.verdicts.extend(audit_verdicts(&audit, &s.budget));
        audit
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub const ANCHOR_LAPSE: &str = "N₀⁻¹ ≤ n ≤ N₀";
pub const ANCHOR_DEFORMATION: &str = "|I| · sup ‖π(t)‖_{L∞} ≤ K₀";

/// Hypothesis rows; enforced through the exit status rather than asserted.
pub fn audit_verdicts(a: &BudgetAudit, b: &metric::AssumptionBudget) -> Vec<Verdict> {
    let lapse = Verdict::new("budget_lapse", ANCHOR_LAPSE, None).reported(a.sup_n.max(a.sup_n_inv), Some(b.n0));
    let pi = Verdict::new("budget_deformation", ANCHOR_DEFORMATION, None).reported(a.pi_times_interval, Some(b.k0));
    let mark = |mut v: Verdict, ok: bool| {
        v.detail = format!("{} over {} samples", if ok { "within budget" } else { "exceeds budget" }, a.samples);
        v
    };
    vec![mark(lapse, a.lapse_ok), mark(pi, a.deformation_ok)]
}

pub fn injectivity_settings(run: &Run) -> InjectivitySettings {
    InjectivitySettings {
        level: run.scenario.grid_level,
        s_max: run.scenario.s_max,
        two_grid: run.scenario.two_grid,
        matching: MatchSettings::default(),
    }
}

/// Largest admissible δ: the i* estimate less its error bar.
pub fn flux_limit(r: &RadiusReport) -> f64 {
    let bar = if r.ell_star.value().is_some() && r.i_star == r.ell_star { r.error_bars.ell_star } else { r.error_bars.s_star };
    flux::injectivity_limit(&r.i_star, bar.unwrap_or(0.0))
}

#[derive(Serialize)]
struct SliceSummary {
    kind: LevelSpec,
    covered: usize,
    area: f64,
    area_radius: f64,
}

#[derive(Serialize)]
struct TracePoint {
    point: SpacetimePoint,
    rays: usize,
    excluded: Vec<(usize, String)>,
    max_null_residual: f64,
    slices: Vec<SliceSummary>,
}

pub fn trace(run: &mut Run) -> Result<()> {
    let grid = run.grid()?;
    let opts = run.options();
    let s = run.scenario.clone();
    let mut levels: Vec<LevelSpec> = s.t_levels.iter().map(|t| LevelSpec::FixedT(*t)).collect();
    levels.extend(s.s_levels.iter().map(|v| LevelSpec::FixedS(*v)));
    let mut summary = Vec::new();
    for (b, p) in s.points().iter().enumerate() {
        let rays = run.manifest.timed("trace_rays", || {
            fan_map(&grid, |i, w| geodesics::integrate_geodesic(&s.metric, p, w, s.s_max, &opts).map(|g| (g.null_residual_max, g.csv_rows(i))))
        });
        let mut rows: Vec<RayRow> = Vec::new();
        let mut excluded = Vec::new();
        let mut residual: f64 = 0.0;
        for (i, r) in rays.into_iter().enumerate() {
            match r {
                Ok((res, rr)) => {
                    residual = residual.max(res);
                    rows.extend(rr);
                }
                Err(e) => excluded.push((i, e.to_string())),
            }
        }
        run.write_csv(&format!("rays_p{b}.csv"), &rows)?;
        let mut slices = Vec::new();
        if !levels.is_empty() {
            let cones = run.manifest.timed("exponential_map", || geodesics::exponential_map(&s.metric, p, &grid, &levels, s.s_max, &opts))?;
            for c in &cones {
                slices.push(SliceSummary { kind: c.kind, covered: c.covered(), area: c.area, area_radius: c.area_radius() });
            }
            run.write_json(&format!("slices_p{b}.json"), &cones)?;
        }
        summary.push(TracePoint { point: *p, rays: grid.len(), excluded, max_null_residual: residual, slices });
    }
    run.write_json("trace.json", &summary)
}

#[derive(Serialize)]
struct EventRow {
    point: usize,
    t_event: f64,
    q_t: f64,
    q_x1: f64,
    q_x2: f64,
    q_x3: f64,
    index1: usize,
    index2: usize,
    s1: f64,
    s2: f64,
    angle_at_q: f64,
    kind: cutlocus::EventKind,
    unresolved: bool,
    multiplicity: usize,
    t_resolution: f64,
}

pub fn record_radius_bars(m: &mut RunManifest, b: usize, r: &RadiusReport) {
    m.error_bar("s_star", Some(b), r.error_bars.s_star);
    m.error_bar("ell_star", Some(b), r.error_bars.ell_star);
    m.error_bar("ell_star_t", Some(b), r.error_bars.ell_star_t);
}

pub fn injectivity(run: &mut Run) -> Result<()> {
    let s = run.scenario.clone();
    let opts = run.options();
    let settings = injectivity_settings(run);
    let points = s.points();
    let scan = run.manifest.timed("slab_scan", || cutlocus::slab_scan(&s.metric, &points, &s.budget, &settings, &opts))?;
    let mut events = Vec::new();
    for (b, row) in scan.rows.iter().enumerate() {
        record_radius_bars(&mut run.manifest, b, &row.report);
        for e in &row.report.events {
            events.push(EventRow {
                point: b,
                t_event: e.t_event,
                q_t: e.q.t,
                q_x1: e.q.x[0],
                q_x2: e.q.x[1],
                q_x3: e.q.x[2],
                index1: e.index1,
                index2: e.index2,
                s1: e.s1,
                s2: e.s2,
                angle_at_q: e.angle_at_q,
                kind: e.kind,
                unresolved: e.unresolved,
                multiplicity: e.multiplicity,
                t_resolution: e.t_resolution,
            });
        }
    }
    run.write_json("injectivity.json", &scan)?;
    run.write_csv("events.csv", &events)
}

#[derive(Serialize)]
pub struct FluxPoint {
    pub point: SpacetimePoint,
    pub i_star: Radius,
    pub delta_limit: f64,
    pub ladder: Vec<FluxReport>,
    pub smallness: SmallnessReport,
    pub max_residual_phi: f64,
    pub max_residual_psi: f64,
}

#[derive(Serialize)]
struct FluxRow {
    point: usize,
    delta: f64,
    reduced_flux: f64,
    total_flux: f64,
    principal_flux: f64,
    alpha: f64,
    beta: f64,
    rho: f64,
    sigma: f64,
    betabar: f64,
    positivity_margin: f64,
}

/// Affine nodes on [S_FLOOR, s_hi] for per-ray coefficient tables.
pub fn coefficient_nodes(s_hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| S_FLOOR + (s_hi - S_FLOOR) * k as f64 / n as f64).collect()
}

/// Coefficient rows and transport states for the rays of a level-1 grid.
pub fn transport_fan(
    metric: &metric::MetricField,
    p: &SpacetimePoint,
    s_hi: f64,
    opts: &Options,
) -> nullcone::Result<(Vec<flux::CoefficientRow>, Vec<flux::TransportState>)> {
    let grid = Icosphere::new(1)?;
    let nodes = coefficient_nodes(s_hi, 40);
    let per_ray = fan_map(&grid, |i, w| -> nullcone::Result<_> {
        let traced = flux::trace_nodes(metric, p, w, &nodes, false, opts)?;
        Ok((flux::coefficient_rows(i, &traced)?, flux::foliation_scalars(w, &traced)))
    });
    let mut rows = Vec::new();
    let mut states = Vec::new();
    for r in per_ray {
        let (c, t) = r?;
        rows.extend(c);
        states.push(t);
    }
    Ok((rows, states))
}

pub fn flux(run: &mut Run) -> Result<()> {
    let s = run.scenario.clone();
    if s.deltas.is_empty() {
        anyhow::bail!("scenario declares no deltas");
    }
    let grid = run.grid()?;
    let opts = run.options();
    let settings = injectivity_settings(run);
    let d_max = s.deltas.iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::new();
    let mut table = Vec::new();
    let mut coeffs = Vec::new();
    for (b, p) in s.points().iter().enumerate() {
        let radius = run.manifest.timed("injectivity_report", || cutlocus::injectivity_report(&s.metric, p, &s.budget, &settings, &opts))?;
        record_radius_bars(&mut run.manifest, b, &radius);
        let limit = flux_limit(&radius);
        let ladder = run.manifest.timed("flux_ladder", || flux::flux_ladder(&s.metric, p, &s.deltas, &grid, limit, &FluxSettings::default(), &opts))?;
        if grid.level > 0 {
            let coarse = Icosphere::new(grid.level - 1)?;
            let c = run.manifest.timed("flux_ladder_coarse", || flux::flux_ladder(&s.metric, p, &s.deltas, &coarse, limit, &FluxSettings::default(), &opts))?;
            let last = |l: &[FluxReport]| l.last().map(|r| r.reduced_flux).unwrap_or(0.0);
            run.manifest.error_bar("reduced_flux", Some(b), Some((last(&ladder) - last(&c)).abs()));
        }
        let (rows, states) = run.manifest.timed("transport", || transport_fan(&s.metric, p, d_max, &opts))?;
        for r in &ladder {
            let c = &r.component_integrals;
            table.push(FluxRow {
                point: b,
                delta: r.delta,
                reduced_flux: r.reduced_flux,
                total_flux: r.total_flux,
                principal_flux: r.principal_flux,
                alpha: c.alpha,
                beta: c.beta,
                rho: c.rho,
                sigma: c.sigma,
                betabar: c.betabar,
                positivity_margin: r.positivity_margin,
            });
        }
        coeffs.extend(rows);
        out.push(FluxPoint {
            point: *p,
            i_star: radius.i_star,
            delta_limit: limit,
            ladder,
            smallness: flux::smallness_monitor(&states, d_max),
            max_residual_phi: states.iter().map(|t| t.max_residual_phi()).fold(0.0, f64::max),
            max_residual_psi: states.iter().map(|t| t.max_residual_psi()).fold(0.0, f64::max),
        });
    }
    run.write_json("flux.json", &out)?;
    run.write_csv("flux.csv", &table)?;
    run.write_csv("coefficients.csv", &coeffs)
}

#[derive(Serialize)]
pub struct EnergyOutput {
    pub gronwall: EnergyReport,
    pub gronwall_coarse: EnergyReport,
    pub metric_equivalence: MetricEquivalence,
    pub volume: Option<VolumeRadiusReport>,
}

#[derive(Serialize)]
struct EnergyRow {
    t: f64,
    q: f64,
    bound: f64,
}

#[derive(Serialize)]
struct VolumeRow {
    point: usize,
    r: f64,
    ratio: f64,
}

pub fn energy_output(run: &mut Run) -> Result<EnergyOutput> {
    let s = run.scenario.clone();
    let spec = s.energy.as_ref().context("scenario has no [energy] section")?;
    let coarse_n = (spec.nodes / 2).max(2);
    let gronwall = run.manifest.timed("gronwall_check", || energy::gronwall_check(&s.metric, &s.budget, spec.t_range, spec.slices, spec.nodes, spec.c))?;
    let gronwall_coarse =
        run.manifest.timed("gronwall_check_coarse", || energy::gronwall_check(&s.metric, &s.budget, spec.t_range, spec.slices, coarse_n, spec.c))?;
    let last = |r: &EnergyReport| r.q_of_t.last().copied().unwrap_or(0.0);
    run.manifest.error_bar("Q(t_end)", None, Some((last(&gronwall) - last(&gronwall_coarse)).abs()));
    let metric_equivalence =
        run.manifest.timed("metric_equivalence", || energy::metric_equivalence(&s.metric, &s.budget, spec.t_range, spec.slices, spec.nodes))?;
    let volume = match &s.volume {
        Some(v) => {
            let pts: Vec<_> = if v.points.is_empty() { s.points().iter().map(|p| p.x).collect() } else { v.points.clone() };
            let grid = Icosphere::new(v.grid_level)?;
            let opts = run.slice_options();
            Some(run.manifest.timed("volume_radius", || energy::volume_radius(&s.metric, v.t, &pts, v.rho, &grid, &opts))?)
        }
        None => None,
    };
    Ok(EnergyOutput { gronwall, gronwall_coarse, metric_equivalence, volume })
}

pub fn energy(run: &mut Run) -> Result<()> {
    let out = energy_output(run)?;
    let g = &out.gronwall;
    let rows: Vec<EnergyRow> = (0..g.t.len()).map(|k| EnergyRow { t: g.t[k], q: g.q_of_t[k], bound: g.gronwall_bound[k] }).collect();
    run.write_json("energy.json", &out)?;
    run.write_csv("energy.csv", &rows)?;
    if let Some(v) = &out.volume {
        let rows: Vec<VolumeRow> =
            v.rows.iter().enumerate().flat_map(|(b, row)| row.ladder.iter().map(move |l| VolumeRow { point: b, r: l[0], ratio: l[1] })).collect();
        run.write_csv("volume.csv", &rows)?;
    }
    Ok(())
}
