//! Self-checks against the configured environment.

use anyhow::{anyhow, bail, Result};
use rayon::prelude::*;
use rwre_core::decompose::{genealogy, record_from, total_variation};
use rwre_core::exitprob::Quenched;
use rwre_core::{
    drift, empirical_velocity, estimate_density_mc, geometric_series_mean_matrix, invariant_density, wald_check,
    Environment, EnvironmentLaw, LawKind, OffspringTables, TypeLayout, WalkPath,
};
use serde_json::json;

use crate::commands::{emitter_for, environment, ladder_paths};
use crate::config::ExperimentConfig;

enum Status {
    Pass(String),
    Fail(String),
    Skipped(String),
}

impl Status {
    fn check(pass: bool, detail: String) -> Self {
        if pass {
            Status::Pass(detail)
        } else {
            Status::Fail(detail)
        }
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    law: EnvironmentLaw,
    env: Environment,
    paths: Vec<WalkPath>,
    weights: Vec<u64>,
}

impl Ctx<'_> {
    fn layout(&self) -> TypeLayout {
        TypeLayout::new(self.env.range())
    }

    fn homogeneous(&self) -> bool {
        self.law.kind() == LawKind::Homogeneous
    }
}

fn time_identity(ctx: &Ctx) -> Result<Status> {
    let r = ctx.env.range();
    let failures: Vec<usize> = ctx
        .paths
        .par_iter()
        .enumerate()
        .map(|(k, p)| Ok((k, record_from(&genealogy(p, r)?).weighted_time(&ctx.weights) == p.t1() as u64)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter_map(|(k, ok)| (!ok).then_some(k))
        .collect();
    let detail =
        format!("{}/{} paths exact, weights {:?}", ctx.paths.len() - failures.len(), ctx.paths.len(), ctx.weights);
    Ok(match failures.first() {
        None => Status::Pass(detail),
        Some(k) => Status::Fail(format!("{detail}; first failing path {k}")),
    })
}

fn crossing_back_sum(ctx: &Ctx) -> Result<Status> {
    let mut q = Quenched::new(&ctx.env, ctx.cfg.series().exit);
    let mut worst = 0.0f64;
    for i in -5..=5 {
        let cb = q.crossing_back(i)?;
        worst = worst.max((cb.total() - ctx.env.law(i).q()).abs());
    }
    Ok(Status::check(worst < 1e-8, format!("levels -5..=5, max |sum - q| {worst:.2e}")))
}

fn offspring_tv(ctx: &Ctx) -> Result<Status> {
    if !ctx.homogeneous() {
        return Ok(Status::Skipped("pooled offspring laws need a homogeneous environment".into()));
    }
    let layout = ctx.layout();
    let mut tables = OffspringTables::new(layout);
    for p in &ctx.paths {
        tables.add(&genealogy(p, layout.r())?);
    }
    let base = Quenched::new(&ctx.env, ctx.cfg.series().exit).crossing_back(0)?.base().to_vec();
    let mut parts = Vec::new();
    let mut pass = true;
    for parent in 0..layout.len() {
        let cell = tables.pooled(parent);
        if cell.total == 0 {
            continue;
        }
        let tv = total_variation(&cell, layout, &base, parent, 10);
        // Sampling noise in TV shrinks like 1/sqrt(n).
        let bound = 0.02 + 2.0 / (cell.total as f64).sqrt();
        pass &= tv < bound;
        parts.push(format!("parent {parent}: TV {tv:.4} over {} (bound {bound:.4})", cell.total));
    }
    Ok(Status::check(pass, parts.join("; ")))
}

fn wald(ctx: &Ctx) -> Result<Status> {
    if !ctx.homogeneous() || ctx.env.range() != 2 {
        return Ok(Status::Skipped("needs a homogeneous environment with R = 2".into()));
    }
    let w = wald_check(ctx.env.law(0), &ctx.cfg.series())?;
    Ok(Status::check(
        w.residual_closed < 1e-8 && w.residual_series < 1e-8,
        format!("residuals {:.2e} (closed), {:.2e} (series)", w.residual_closed, w.residual_series),
    ))
}

fn geometric_series(ctx: &Ctx) -> Result<Status> {
    let n = Quenched::new(&ctx.env, ctx.cfg.series().exit).mean_matrix(0)?;
    let g = geometric_series_mean_matrix(&n, 200)?;
    let diff = (g.closed_form.matrix() - g.partial_sum.matrix()).amax();
    Ok(Status::check(
        diff < 1e-8,
        format!("spectral radius {:.4}, max |closed - partial| {diff:.2e}", g.spectral_radius),
    ))
}

fn density(ctx: &Ctx) -> Result<Status> {
    let exact = invariant_density(&ctx.env, &ctx.cfg.series())?.value;
    let per_shift = (ctx.cfg.paths / 20).max(1000);
    let mc = estimate_density_mc(&ctx.env, per_shift, 19, ctx.cfg.seed, ctx.cfg.max_steps)?;
    let z = (mc.value - exact) / mc.stderr;
    Ok(Status::check(
        z.abs() < 4.0,
        format!("series {exact:.5}, Monte Carlo {:.5} +- {:.5} (z {z:.2})", mc.value, mc.stderr),
    ))
}

fn drift_homogeneous(ctx: &Ctx) -> Result<Status> {
    if !ctx.homogeneous() {
        return Ok(Status::Skipped("needs a homogeneous environment".into()));
    }
    let v = drift(&ctx.law, &ctx.cfg.series(), 0, ctx.cfg.seed)?.v_p;
    let want = ctx.env.law(0).mean_step();
    let diff = (v - want).abs();
    Ok(Status::check(diff < 1e-10, format!("v_P {v:.12}, E(X_1) {want:.12}")))
}

fn lln(ctx: &Ctx) -> Result<Status> {
    let (target, se) = match ctx.law.kind() {
        LawKind::Homogeneous => (ctx.env.law(0).mean_step(), 0.0),
        LawKind::IidFiniteSupport => {
            let d = drift(&ctx.law, &ctx.cfg.series(), ctx.cfg.env_samples, ctx.cfg.seed)?;
            (d.v_p, d.stderr.unwrap_or(0.0))
        }
        LawKind::Periodic => {
            return Ok(Status::Skipped("the series velocity is not exact for periodic environments".into()))
        }
    };
    if ctx.cfg.replicas < 2 {
        bail!("lln needs at least 2 replicas");
    }
    let emp = empirical_velocity(&ctx.law, ctx.cfg.n_steps, ctx.cfg.replicas, ctx.cfg.seed);
    let z = (emp.mean - target) / (emp.stderr.powi(2) + se * se).sqrt();
    Ok(Status::check(z.abs() < 4.0, format!("X_n/n {:.5} +- {:.5} vs {target:.5} (z {z:.2})", emp.mean, emp.stderr)))
}

type Check = fn(&Ctx) -> Result<Status>;

const CHECKS: [(&str, Check); 8] = [
    ("time_identity", time_identity),
    ("crossing_back_sum", crossing_back_sum),
    ("offspring_tv", offspring_tv),
    ("wald", wald),
    ("geometric_series", geometric_series),
    ("density", density),
    ("drift_homogeneous", drift_homogeneous),
    ("lln", lln),
];

pub fn validate(cfg: &ExperimentConfig, weights: Option<Vec<u64>>) -> Result<()> {
    let (law, env) = environment(cfg)?;
    let layout = TypeLayout::new(env.range());
    let weights = weights.unwrap_or_else(|| layout.time_weights());
    if weights.len() != layout.len() {
        bail!("--weights needs {} values for R = {}, got {}", layout.len(), layout.r(), weights.len());
    }
    let (paths, exceeded): (Vec<_>, Vec<_>) = ladder_paths(&env, cfg).into_iter().partition(|r| r.is_ok());
    let paths: Vec<WalkPath> = paths.into_iter().map(Result::unwrap).collect();
    let ctx = Ctx { cfg, law, env, paths, weights };

    let mut out = emitter_for(cfg, &["check", "status", "detail"])?;
    let mut failed = Vec::new();
    if !exceeded.is_empty() {
        failed.push("ladder_paths");
        out.record(&json!({
            "check": "ladder_paths", "status": "fail",
            "detail": format!("{} of {} paths hit max_steps", exceeded.len(), cfg.paths),
        }))?;
    }
    for (name, check) in CHECKS {
        let (status, detail) = match check(&ctx) {
            Ok(Status::Pass(d)) => ("pass", d),
            Ok(Status::Skipped(d)) => ("skipped", d),
            Ok(Status::Fail(d)) => ("fail", d),
            Err(e) => ("fail", format!("{e:#}")),
        };
        if status == "fail" {
            failed.push(name);
        }
        out.record(&json!({"check": name, "status": status, "detail": detail}))?;
    }
    out.finish()?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("failed checks: {}", failed.join(", ")))
    }
}
