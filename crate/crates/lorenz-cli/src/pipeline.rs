//! The pipelines behind `lorenz run` and the subcommands.

use anyhow::{bail, Context, Result};
use lorenz_measures::induced::{
    check_hypotheses, cylinder_tower, enumerate_return_branches, find_nice_interval, CylinderTower, Hypotheses,
    NiceInterval, ReturnBranchSet,
};
use lorenz_measures::measures::{base_measure, mass_distribution, measure_report, sample_superexpanding, MassDistribution};
use lorenz_measures::orbit::{iterate, singular_orbit, DEFAULT_C_TOL};
use lorenz_measures::perturbation::{shoot_for_connection, tune_both, tune_singular_orbit, METRIC_GRID};
use lorenz_measures::recurrence::{
    birkhoff_recurrence, recurrence_constants, srb_basin_diagnostic, verify_bound_period_corollaries, OrbitMode,
};
use lorenz_measures::{metric_dist, LorenzMap, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    CertifyConfig, Config, ConstructConfig, InduceConfig, MeasureConfig, OrbitConfig, SrbConfig, TuneConfig, SCHEMA,
};

/// Largest relative image error accepted for a first-return branch.
pub const IMAGE_TOL: f64 = 1e-8;
/// Residual accepted for a verified connection.
pub const CONNECTION_TOL: f64 = 1e-9;

/// Everything a pipeline produces. `report` already carries the schema tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub report: Value,
    /// Extra files: `(file name, contents)`.
    pub files: Vec<(String, String)>,
    pub violations: Vec<String>,
    /// File printed to stdout when no output directory is given; the report otherwise.
    pub stdout_file: Option<String>,
}

impl Artifacts {
    pub fn report_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("reports are plain JSON");
        s.push('\n');
        s
    }

    pub fn stdout_text(&self) -> String {
        self.stdout_file
            .as_ref()
            .and_then(|name| self.files.iter().find(|(n, _)| n == name))
            .map(|(_, body)| body.clone())
            .unwrap_or_else(|| self.report_text())
    }

    /// Write `report.json` and the extra files into `dir`.
    pub fn write_to(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("report.json"), self.report_text())?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

struct Output {
    result: Value,
    files: Vec<(String, String)>,
    violations: Vec<String>,
    stdout_file: Option<String>,
}

impl Output {
    fn new(result: Value) -> Self {
        Self {
            result,
            files: Vec::new(),
            violations: Vec::new(),
            stdout_file: None,
        }
    }
}

pub fn run(config: &Config) -> Result<Artifacts> {
    let out = match config {
        Config::TheoremBCertify(c) => certify(c)?,
        Config::TheoremAConstruct(c) => construct(c)?,
        Config::TuneToD(c) => tune(c)?,
        Config::Orbit(c) => orbit(c)?,
        Config::Induce(c) => induce(c)?,
        Config::Measure(c) => measure(c)?,
        Config::SrbDiagnostic(c) => srb(c)?,
    };
    let report = json!({
        "schema": SCHEMA,
        "pipeline": config.pipeline(),
        "config": config,
        "result": out.result,
        "violations": out.violations,
    });
    Ok(Artifacts {
        report,
        files: out.files,
        violations: out.violations,
        stdout_file: out.stdout_file,
    })
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable")
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn certify(c: &CertifyConfig) -> Result<Output> {
    let map = c.map.load()?;
    let k = recurrence_constants(&map, c.delta, c.horizon)?;
    let checks = verify_bound_period_corollaries(&map, &k, c.n_max, c.samples, c.seed)?;
    let mut violations = Vec::new();
    for ch in &checks {
        if ch.period_violations > 0 {
            violations.push(format!("n = {}: {} samples with m(p) < n", ch.n, ch.period_violations));
        }
        if ch.sum_violations > 0 {
            violations.push(format!("n = {}: {} samples break the Gamma-sum bound", ch.n, ch.sum_violations));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut starts = Vec::with_capacity(c.starts);
    let mut rows = Vec::with_capacity(c.starts);
    for i in 0..c.starts {
        let x0 = loop {
            let x: f64 = rng.random();
            if x > 0.0 && x != map.c() {
                break x;
            }
        };
        let r = birkhoff_recurrence(&map, x0, c.steps, c.delta, OrbitMode::Shadow)?;
        if r.max_running_min > k.upsilon {
            violations.push(format!("start {i}: running minimum {} exceeds Upsilon", r.max_running_min));
        }
        if r.sandwich_violations > 0 {
            violations.push(format!("start {i}: {} Lyapunov sandwich violations", r.sandwich_violations));
        }
        rows.push(vec![
            i.to_string(),
            x0.to_string(),
            r.steps.to_string(),
            r.truncated_average.to_string(),
            r.recurrence_average.to_string(),
            r.lyapunov_average.to_string(),
            r.max_running_min.to_string(),
            r.sandwich_violations.to_string(),
            r.shadow_residual.to_string(),
        ]);
        starts.push(json!({ "x0": x0, "record": r }));
    }
    let mut out = Output::new(json!({
        "constants": k,
        "checks": checks,
        "starts": starts,
    }));
    out.files.push((
        "starts.csv".into(),
        csv_text(
            &[
                "start",
                "x0",
                "steps",
                "truncated_average",
                "recurrence_average",
                "lyapunov_average",
                "max_running_min",
                "sandwich_violations",
                "shadow_residual",
            ],
            rows,
        )?,
    ));
    out.violations = violations;
    Ok(out)
}

struct Induced {
    hyp: Hypotheses,
    j: NiceInterval,
    set: ReturnBranchSet,
    tower: CylinderTower,
}

fn build_induced(map: &LorenzMap, r_cap: f64, max_word_len: usize, r_max: usize, depth: usize) -> Result<Induced> {
    let hyp = check_hypotheses(map, r_cap)?;
    let j = find_nice_interval(map, r_cap, max_word_len)?;
    let set = enumerate_return_branches(map, &j, r_max)?;
    let tower = cylinder_tower(map, &j, &set, depth)?;
    Ok(Induced { hyp, j, set, tower })
}

fn induced_violations(ind: &Induced) -> Vec<String> {
    let mut v = Vec::new();
    if ind.set.max_image_error > IMAGE_TOL {
        v.push(format!("first-return image error {:e}", ind.set.max_image_error));
    }
    match ind.set.leftmost() {
        Some(b) if b.r == ind.hyp.t0 => {}
        Some(b) => v.push(format!("leftmost branch returns at R = {}, not t0 = {}", b.r, ind.hyp.t0)),
        None => v.push("no first-return branch".into()),
    }
    v
}

fn induced_summary(ind: &Induced, map: &LorenzMap, list_through: usize) -> Value {
    let branches: Vec<Value> = ind
        .set
        .branches
        .iter()
        .filter(|b| b.r <= list_through)
        .map(|b| json!({ "word": b.word, "R": b.r, "interval": b.interval, "width": b.width }))
        .collect();
    let depth = ind.tower.depth();
    json!({
        "J": { "p": ind.j.p, "word": ind.j.word, "r_cap": ind.j.r_cap, "len": ind.j.len(map) },
        "t0": ind.hyp.t0,
        "q": ind.tower.q,
        "counts": ind.set.counts.iter().map(|n| n.to_string()).collect::<Vec<_>>(),
        "total_branches": ind.set.total().to_string(),
        "complete_through": ind.set.complete_through,
        "states": ind.set.states,
        "max_image_error": ind.set.max_image_error,
        "covered_length": ind.set.covered_length,
        "branches_listed_through": list_through.min(ind.set.complete_through),
        "branches": branches,
        "tower": {
            "widths": ind.tower.widths(),
            "ln_widths": ind.tower.ln_widths,
            "Rc": (0..=depth).map(CylinderTower::rc_of_level).collect::<Vec<_>>(),
            "below_double_from": ind.tower.below_double_from,
            "log_distance_slope": ind.tower.log_distance_slope(),
            "max_endpoint_error": ind.tower.max_endpoint_error,
        },
    })
}

fn induce(c: &InduceConfig) -> Result<Output> {
    let map = c.map.load()?;
    let ind = build_induced(&map, c.r_cap, c.max_word_len, c.r_max, c.depth)?;
    let mut out = Output::new(induced_summary(&ind, &map, c.list_through));
    out.violations = induced_violations(&ind);
    Ok(out)
}

fn mass_violations(m: &MassDistribution) -> Result<Vec<String>> {
    let t = m.total()?;
    Ok(if (t.value - 1.0).abs() > t.error {
        vec![format!("total mass {} differs from 1 by more than {:e}", t.value, t.error)]
    } else {
        Vec::new()
    })
}

fn construct(c: &ConstructConfig) -> Result<Output> {
    let map = c.map.load()?;
    let ind = build_induced(&map, c.r_cap, c.max_word_len, c.r_max, c.depth)?;
    let base = base_measure(&ind.tower)?;
    let m = mass_distribution(&base, &ind.tower, c.ell, c.alpha_mass)?;
    let rep = measure_report(&m, &ind.tower, &map, c.n_partial)?;
    let mut violations = induced_violations(&ind);
    violations.extend(mass_violations(&m)?);
    if !rep.entropy_fc.is_finite() {
        violations.push("entropy of F_c is not finite".into());
    }
    if !rep.int_rc.is_finite() {
        violations.push("integral of R_c is not finite".into());
    }
    if rep.rc_tail > rep.bound_c || rep.entropy_tail > rep.bound_c {
        violations.push("tail sums exceed 2 (ell + 1) zeta(1 + alpha_mass)".into());
    }
    let rows = rep
        .lyapunov_partials
        .iter()
        .map(|(n, s)| vec![n.to_string(), s.to_string()]);
    let lyap = csv_text(&["level", "lyapunov_partial"], rows)?;
    let mut out = Output::new(json!({
        "hypotheses": ind.hyp,
        "induced": induced_summary(&ind, &map, 0),
        "base_level_mass": base.level_mass,
        "measure": rep,
    }));
    out.files.push(("lyapunov.csv".into(), lyap));
    out.violations = violations;
    Ok(out)
}

fn measure(c: &MeasureConfig) -> Result<Output> {
    let map = c.map.load()?;
    let ind = build_induced(&map, c.r_cap, c.max_word_len, c.r_max, c.depth)?;
    let base = base_measure(&ind.tower)?;
    let m = mass_distribution(&base, &ind.tower, c.ell, c.alpha_mass)?;
    let rep = measure_report(&m, &ind.tower, &map, c.n_partial)?;
    let stats = sample_superexpanding(&map, &m, &ind.tower, c.seed, c.segments)?;
    let mut violations = mass_violations(&m)?;
    if !stats.lower_envelope_holds {
        violations.push("Lyapunov lower envelope fails on a prefix".into());
    }
    let rows = stats.prefixes.iter().map(|p| {
        vec![
            p.segments.to_string(),
            p.steps.to_string(),
            p.abs_log_dist.to_string(),
            p.log_slope.to_string(),
        ]
    });
    let prefixes = csv_text(&["segments", "steps", "abs_log_dist", "log_slope"], rows)?;
    let last = stats.prefixes.last();
    let mut out = Output::new(json!({
        "measure": rep,
        "sampling": {
            "seed": stats.seed,
            "segments": c.segments,
            "steps": last.map(|p| p.steps),
            "final_abs_log_dist": last.map(|p| p.abs_log_dist),
            "final_log_slope": last.map(|p| p.log_slope),
            "max_level": stats.max_level,
            "first_exceed": stats.first_exceed,
            "lower_envelope_holds": stats.lower_envelope_holds,
        },
    }));
    out.files.push(("prefix_averages.csv".into(), prefixes));
    out.violations = violations;
    Ok(out)
}

fn certificate(original: &LorenzMap, tuned: &LorenzMap, side: Side) -> Result<Value> {
    let orb = singular_orbit(tuned, side, 4096, DEFAULT_C_TOL)?;
    let t = orb.period;
    let residual = t.map(|t| (orb.record.points[t - 1] - tuned.c()).abs());
    Ok(json!({
        "side": side,
        "t": t,
        "residual": residual,
        "metric_dist": metric_dist(original, tuned, METRIC_GRID)?,
        "expansion_floor": tuned.expansion_floor(),
    }))
}

fn tune(c: &TuneConfig) -> Result<Output> {
    let map = c.map.load()?;
    let mut violations = Vec::new();
    let (tuned, certs) = match (c.shoot_t, c.side.single()) {
        (Some(t), Some(side)) => {
            let Some(bracket) = c.bracket else { bail!("shooting needs a bracket") };
            let g = shoot_for_connection(&map, side, t, bracket)?;
            (g, vec![certificate(&map, &g, side)?])
        }
        (Some(_), None) => bail!("shooting tunes one side at a time"),
        (None, side) => {
            let Some(eps) = c.eps else { bail!("tuning needs eps") };
            match side {
                Some(side) => {
                    let t = tune_singular_orbit(&map, side, eps, c.depth)?;
                    let mut cert = certificate(&map, &t.map, side)?;
                    cert["delta"] = json!(t.delta);
                    cert["shot"] = json!(t.shot);
                    (t.map, vec![cert])
                }
                None => {
                    let d = tune_both(&map, eps, c.eps_right.unwrap_or(eps), c.depth)?;
                    let certs = vec![
                        certificate(&map, &d.map, Side::Left)?,
                        certificate(&map, &d.map, Side::Right)?,
                    ];
                    (d.map, certs)
                }
            }
        }
    };
    for cert in &certs {
        let ok = cert["residual"].as_f64().is_some_and(|r| r <= CONNECTION_TOL);
        if !ok {
            violations.push(format!("{} singular orbit does not reach c", cert["side"]));
        }
    }
    if tuned.expansion_floor() <= 1.0 {
        violations.push("tuned map is not expanding".into());
    }
    let gate = match c.r_cap {
        Some(r_cap) => match check_hypotheses(&tuned, r_cap) {
            Ok(h) => json!({ "r_cap": r_cap, "passed": true, "hypotheses": h }),
            Err(e) => {
                violations.push(format!("hypothesis gate at r_cap = {r_cap}: {e}"));
                json!({ "r_cap": r_cap, "passed": false, "error": e.to_string() })
            }
        },
        None => Value::Null,
    };
    let doc = tuned.to_document();
    let mut out = Output::new(json!({
        "map": doc,
        "certificates": certs,
        "gate": gate,
    }));
    let mut map_text = serde_json::to_string_pretty(&doc)?;
    map_text.push('\n');
    out.files.push(("map.json".into(), map_text));
    out.violations = violations;
    Ok(out)
}

fn orbit(c: &OrbitConfig) -> Result<Output> {
    let map = c.map.load()?;
    let (record, first_step) = match (c.x0, c.side) {
        (Some(x0), None) => (iterate(&map, x0, c.steps, c.ctol)?, 0),
        (None, Some(side)) => (singular_orbit(&map, side, c.steps.max(1), c.ctol)?.record, 1),
        _ => bail!("give exactly one of x0 and side"),
    };
    let mut cum = 0.0;
    let mut rows = Vec::with_capacity(record.points.len());
    for (j, &x) in record.points.iter().enumerate() {
        let step = (j + first_step).to_string();
        match record.itinerary.get(j) {
            Some(&side) => {
                cum += map.log_slope(side, x);
                rows.push(vec![
                    step,
                    x.to_string(),
                    side.symbol().to_string(),
                    map.slope(side, x).to_string(),
                    cum.to_string(),
                ]);
            }
            None => rows.push(vec![step, x.to_string(), "C".into(), String::new(), String::new()]),
        }
    }
    let mut out = Output::new(json!({
        "first_step": first_step,
        "points": record.points.len(),
        "hit_c_at": record.hit_c_at.map(|j| j + first_step),
        "cycle": record.cycle,
        "stop": record.stop,
        "error_budget": record.error_budget,
        "cumulative_log_derivative": cum,
    }));
    out.files.push((
        "orbit.csv".into(),
        csv_text(&["step", "x", "symbol", "fprime", "cum_log_deriv"], rows)?,
    ));
    out.stdout_file = Some("orbit.csv".into());
    Ok(out)
}

fn srb(c: &SrbConfig) -> Result<Output> {
    let map = c.map.load()?;
    let d = srb_basin_diagnostic(&map, c.steps, c.samples, c.seed)?;
    Ok(Output::new(to_value(&d)))
}
