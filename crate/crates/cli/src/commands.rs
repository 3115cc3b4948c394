use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use rwre_core::analytics::{drift_terms, Estimator};
use rwre_core::decompose::{genealogy, offspring_probability, record_from, Genealogy};
use rwre_core::exitprob::Quenched;
use rwre_core::rng::{child_seed, stream, Domain};
use rwre_core::walk::simulate_until_ladder;
use rwre_core::{
    drift, empirical_velocity, expected_t1, homogeneous_closed_forms, invariant_density, verify_time_identity,
    wald_check, Environment, EnvironmentLaw, LawKind, MeanVar, OffspringTables, SiteLaw, TypeLayout, WalkError,
    WalkPath,
};
use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;
use crate::output::{self, Emitter};

/// Sites realized up front for i.i.d. environments.
const WINDOW: i64 = 4096;

pub fn environment(cfg: &ExperimentConfig) -> Result<(EnvironmentLaw, Environment)> {
    let law = cfg.environment.law()?;
    let mut env = law.realization(child_seed(cfg.seed, Domain::Environments, 0));
    env.realize(-WINDOW, WINDOW);
    Ok((law, env))
}

/// Ladder paths in replica order.
pub fn ladder_paths(env: &Environment, cfg: &ExperimentConfig) -> Vec<Result<WalkPath, WalkError>> {
    (0..cfg.paths)
        .into_par_iter()
        .map(|j| simulate_until_ladder(env, &mut stream(cfg.seed, Domain::Paths, j), cfg.max_steps))
        .collect()
}

/// `A, B, C` for `R = 2`, `l<landing>d<depth>` otherwise.
pub fn type_labels(layout: TypeLayout) -> Vec<String> {
    if layout.r() == 2 {
        return ["A", "B", "C"].map(String::from).to_vec();
    }
    layout.types().map(|t| format!("l{}d{}", t.landing, t.depth)).collect()
}

/// `q = 0.05 + 0.04 i`, `p_2 = (1 - q)(0.05 + 0.1 j)`: 100 drift-positive laws.
pub fn law_grid() -> Vec<SiteLaw> {
    (0..100)
        .map(|k| {
            let q = 0.05 + 0.04 * (k / 10) as f64;
            let p2 = (1.0 - q) * (0.05 + 0.1 * (k % 10) as f64);
            SiteLaw::elliptic(q, &[1.0 - q - p2, p2]).expect("grid laws are valid")
        })
        .collect()
}

pub fn emitter_for<S: AsRef<str>>(cfg: &ExperimentConfig, columns: &[S]) -> Result<Emitter> {
    Emitter::new(cfg.format, output::open(cfg.out.as_deref())?, columns)
}

pub fn simulate(cfg: &ExperimentConfig, with_sites: bool) -> Result<()> {
    let (_, env) = environment(cfg)?;
    let results = ladder_paths(&env, cfg);
    let mut out = emitter_for(
        cfg,
        &[
            "record",
            "index",
            "status",
            "t1",
            "end_position",
            "end_from",
            "end_size",
            "min_site",
            "sites",
            "paths",
            "completed",
            "max_steps_exceeded",
            "mean_t1",
            "stderr_t1",
            "seed",
        ],
    )?;
    let mut t1 = MeanVar::default();
    let mut exceeded = 0u64;
    for (index, r) in results.iter().enumerate() {
        let row = match r {
            Ok(p) => {
                t1.push(p.t1() as f64);
                let end = p.ended_by();
                json!({
                    "record": "path", "index": index, "status": "ok", "t1": p.t1(),
                    "end_position": p.end_position(), "end_from": end.from, "end_size": end.size,
                    "min_site": p.min_site(), "sites": with_sites.then(|| p.sites()),
                })
            }
            Err(WalkError::MaxStepsExceeded(_)) => {
                exceeded += 1;
                json!({"record": "path", "index": index, "status": "max_steps_exceeded"})
            }
            Err(e) => return Err(e.clone().into()),
        };
        out.record(&row)?;
    }
    out.record(&json!({
        "record": "summary", "paths": cfg.paths, "completed": t1.n, "max_steps_exceeded": exceeded,
        "mean_t1": (t1.n > 0).then(|| t1.mean()), "stderr_t1": (t1.n > 1).then(|| t1.stderr()), "seed": cfg.seed,
    }))?;
    out.finish()
}

fn read_paths(path: &Path, r: usize) -> Result<Vec<WalkPath>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).with_context(|| format!("line {}", k + 1))?;
        let Some(sites) = v.get("sites").filter(|s| !s.is_null()) else {
            continue;
        };
        let sites: Vec<i64> = serde_json::from_value(sites.clone()).with_context(|| format!("line {}", k + 1))?;
        out.push(WalkPath::from_sites(sites, r).with_context(|| format!("line {}", k + 1))?);
    }
    if out.is_empty() {
        bail!("no paths with sites in {} (write them with `simulate --sites --format jsonl`)", path.display());
    }
    Ok(out)
}

pub fn decompose(cfg: &ExperimentConfig, input: Option<&Path>, offspring: Option<&Path>) -> Result<()> {
    let (_, env) = environment(cfg)?;
    let layout = TypeLayout::new(env.range());
    let labels = type_labels(layout);
    let paths: Vec<WalkPath> = match input {
        Some(p) => read_paths(p, layout.r())?,
        None => ladder_paths(&env, cfg).into_iter().filter_map(Result::ok).collect(),
    };
    let gens: Vec<Genealogy> = paths.par_iter().map(|p| genealogy(p, layout.r())).collect::<Result<_, _>>()?;

    let mut levels: BTreeMap<i64, Vec<u64>> = BTreeMap::new();
    let mut immigrants = vec![0u64; layout.len()];
    let mut identity = 0u64;
    let mut tables = OffspringTables::new(layout);
    for (p, g) in paths.iter().zip(&gens) {
        let rec = record_from(g);
        identity += u64::from(verify_time_identity(p, &rec));
        for (lvl, counts) in rec.levels() {
            let row = levels.entry(lvl).or_insert_with(|| vec![0; layout.len()]);
            row.iter_mut().zip(counts).for_each(|(a, b)| *a += b);
        }
        immigrants[g.immigrant] += 1;
        tables.add(g);
    }

    let mut columns = vec!["record".to_string(), "level".to_string()];
    columns.extend(labels.iter().cloned());
    columns.extend(["paths", "identity_holds"].map(String::from));
    let mut out = emitter_for(cfg, &columns)?;
    let row = |record: &str, level: i64, counts: &[u64]| {
        let mut m = Map::new();
        m.insert("record".into(), record.into());
        m.insert("level".into(), level.into());
        for (l, c) in labels.iter().zip(counts) {
            m.insert(l.clone(), (*c).into());
        }
        Value::Object(m)
    };
    out.record(&row("immigration", 1, &immigrants))?;
    for (lvl, counts) in levels.iter().rev() {
        out.record(&row("level", *lvl, counts))?;
    }
    out.record(&json!({"record": "summary", "paths": paths.len(), "identity_holds": identity}))?;
    out.finish()?;

    if let Some(path) = offspring {
        write_offspring(path, &env, cfg, &tables, &labels)?;
    }
    Ok(())
}

fn write_offspring(
    path: &Path,
    env: &Environment,
    cfg: &ExperimentConfig,
    tables: &OffspringTables,
    labels: &[String],
) -> Result<()> {
    let layout = tables.layout();
    let mut q = Quenched::new(env, cfg.series().exit);
    let mut base: BTreeMap<i64, Option<Vec<f64>>> = BTreeMap::new();
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["child_level", "parent", "outcome", "count", "parent_total", "frequency", "analytic"])?;
    for ((level, parent), cell) in tables.cells() {
        let b = base.entry(level).or_insert_with(|| q.crossing_back(level).ok().map(|cb| cb.base().to_vec())).clone();
        for (outcome, count) in &cell.outcomes {
            let analytic = b.as_ref().map(|b| offspring_probability(layout, b, parent, outcome).to_string());
            w.write_record([
                level.to_string(),
                labels[parent].clone(),
                outcome.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" "),
                count.to_string(),
                cell.total.to_string(),
                (*count as f64 / cell.total as f64).to_string(),
                analytic.unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn exact(cfg: &ExperimentConfig, level: i64) -> Result<()> {
    let (law, env) = environment(cfg)?;
    let opts = cfg.series();
    let layout = TypeLayout::new(env.range());
    let labels = type_labels(layout);
    let mut rows = Vec::new();
    let mut push = |quantity: &str, index: String, value: f64, terms: Option<usize>| {
        rows.push(json!({"quantity": quantity, "index": index, "value": value, "terms": terms, "level": level}));
    };

    let mut q = Quenched::new(&env, opts.exit);
    let exit = q.exit_limit(level)?;
    for (j, p) in exit.probs.iter().enumerate() {
        push("exit_probability", (level + j as i64 + 1).to_string(), *p, Some(exit.truncation_n as usize));
    }
    let cb = q.crossing_back(level)?;
    for (l, p) in labels.iter().zip(&cb.probs) {
        push("crossing_back", l.clone(), *p, None);
    }
    let n = q.mean_matrix(level)?;
    for (r, row) in n.rows().iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            push("mean_matrix", format!("{}->{}", labels[r], labels[c]), *v, None);
        }
    }
    for (l, p) in labels.iter().zip(q.immigration(level)?) {
        push("immigration", l.clone(), p, None);
    }

    let shifted = env.shift(level);
    let t1 = expected_t1(&shifted, &opts)?;
    push("expected_t1", String::new(), t1.value, Some(t1.terms));
    let pi = invariant_density(&shifted, &opts)?;
    push("invariant_density", String::new(), pi.value, Some(pi.terms));
    let d = drift_terms(&shifted, &opts)?;
    push("drift_numerator", String::new(), d.numerator, Some(d.terms));
    push("drift_denominator", String::new(), d.denominator, Some(d.terms));

    if law.kind() == LawKind::Homogeneous && layout.r() == 2 {
        if let Ok(h) = homogeneous_closed_forms(env.law(0)) {
            if let Value::Object(m) = serde_json::to_value(h)? {
                for (k, v) in m {
                    push("closed_form", k, v.as_f64().unwrap_or(f64::NAN), None);
                }
            }
        }
    }

    let mut out = emitter_for(cfg, &["quantity", "index", "value", "terms", "level"])?;
    rows.iter().try_for_each(|r| out.record(r))?;
    out.finish()
}

pub fn drift_cmd(cfg: &ExperimentConfig, empirical: bool) -> Result<()> {
    let law = cfg.environment.law()?;
    let rep = drift(&law, &cfg.series(), cfg.env_samples, cfg.seed)?;
    let (estimator, samples) = match rep.estimator {
        Estimator::Exact => ("exact", None),
        Estimator::MonteCarlo { samples } => ("monte_carlo", Some(samples)),
    };
    let mut row = json!({
        "value": rep.v_p, "stderr": rep.stderr, "numerator": rep.numerator, "denominator": rep.denominator,
        "depth": rep.depth, "estimator": estimator, "samples": samples, "seed": cfg.seed,
    });
    if empirical {
        let e = empirical_velocity(&law, cfg.n_steps, cfg.replicas, cfg.seed);
        let m = row.as_object_mut().expect("object");
        m.insert("empirical".into(), e.mean.into());
        m.insert("empirical_stderr".into(), e.stderr.into());
        m.insert("n_steps".into(), cfg.n_steps.into());
        m.insert("replicas".into(), cfg.replicas.into());
    }
    let mut out = emitter_for(
        cfg,
        &[
            "value",
            "stderr",
            "numerator",
            "denominator",
            "depth",
            "estimator",
            "samples",
            "seed",
            "empirical",
            "empirical_stderr",
            "n_steps",
            "replicas",
        ],
    )?;
    out.record(&row)?;
    out.finish()
}

pub fn wald(cfg: &ExperimentConfig, grid: bool) -> Result<()> {
    let laws = if grid {
        law_grid()
    } else {
        let law = cfg.environment.law()?;
        if law.kind() != LawKind::Homogeneous {
            bail!("wald needs a homogeneous environment (or --grid)");
        }
        law.atoms().to_vec()
    };
    let opts = cfg.series();
    let reports = laws.par_iter().map(|s| wald_check(s, &opts)).collect::<Result<Vec<_>, _>>()?;
    let mut out = emitter_for(
        cfg,
        &[
            "q",
            "p1",
            "p2",
            "e_x1",
            "e_xt1",
            "e_t1_closed",
            "e_t1_series",
            "series_terms",
            "residual_closed",
            "residual_series",
        ],
    )?;
    for (s, r) in laws.iter().zip(&reports) {
        let mut row = json!({"q": s.q(), "p1": s.p_k(1), "p2": s.p_k(2)});
        if let (Value::Object(m), Value::Object(extra)) = (&mut row, serde_json::to_value(r)?) {
            m.extend(extra);
        }
        out.record(&row)?;
    }
    out.finish()
}
