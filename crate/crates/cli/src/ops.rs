//! One function per operation. Each returns outputs, threshold checks and CSV files.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};
use thermoqm::bowen::{
    coboundary_solve, komlos_estimate_check, komlos_potential, livsic_quasicocycle_test, normalization_defect,
    potential_from_measure,
};
use thermoqm::clt::{
    clt_experiment, deviation_experiment, invariance_experiment, lil_experiment, per_trial_csv, KsThreshold,
    Observable, TrialOptions,
};
use thermoqm::group::{boundary_ray_clt, compactification_experiment, spherical_clt, FreeGroup};
use thermoqm::lc::LocallyConstantFn;
use thermoqm::markov::{integral, normalize_potential, solve_cohomological, variance, MarkovMeasure, MarkovPotential};
use thermoqm::measure::{tv_distance, CylinderMasses};
use thermoqm::qm::{cohomologous, quasicocycle_of, LivsicOptions, Quasimorphism, Verdict};
use thermoqm::sft::render;
use thermoqm::thermo::{
    entropy, gibbs_measure, gibbs_ratio_report, pressure, variational_check, weak_bernoulli_report,
};
use thermoqm::Exec;

use crate::config::{Config, Operation, Space, Thresholds};
use crate::failure::Failure;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: Value,
    pub limit: Value,
    pub pass: bool,
}

fn at_most(name: &str, value: f64, limit: f64) -> Check {
    Check { name: name.into(), value: json!(value), limit: json!(format!("<= {limit}")), pass: value <= limit }
}

fn at_least(name: &str, value: f64, limit: f64) -> Check {
    Check { name: name.into(), value: json!(value), limit: json!(format!(">= {limit}")), pass: value >= limit }
}

fn holds(name: &str, value: bool) -> Check {
    Check { name: name.into(), value: json!(value), limit: json!(true), pass: value }
}

pub struct Outcome {
    pub outputs: Value,
    pub checks: Vec<Check>,
    pub files: Vec<(String, String)>,
}

impl Outcome {
    fn new(outputs: impl Serialize) -> Self {
        Outcome { outputs: json!(outputs), checks: Vec::new(), files: Vec::new() }
    }

    fn check(mut self, c: Check) -> Self {
        self.checks.push(c);
        self
    }

    fn file(mut self, name: &str, body: String) -> Self {
        self.files.push((name.to_string(), body));
        self
    }
}

pub struct Ctx<'a> {
    pub cfg: &'a Config,
    pub space: Space,
    pub th: Thresholds,
    pub exec: Exec,
}

fn req<T: Clone>(v: &Option<T>, name: &str) -> Result<T, Failure> {
    v.clone().ok_or_else(|| Failure::input("missing_field", format!("{name} is required")))
}

fn positive(v: usize, name: &str) -> Result<usize, Failure> {
    if v == 0 {
        return Err(Failure::input("invalid_config", format!("{name} must be positive")));
    }
    Ok(v)
}

impl Ctx<'_> {
    fn qm(&self) -> Result<Quasimorphism, Failure> {
        self.space.quasimorphism(self.cfg.qm.as_ref().ok_or_else(|| Failure::input("missing_field", "qm is required"))?)
    }

    fn potential(&self) -> Result<LocallyConstantFn, Failure> {
        self.space.table(self.cfg.potential.as_ref().ok_or_else(|| Failure::input("missing_field", "potential is required"))?)
    }

    fn measure(&self) -> Result<MarkovMeasure, Failure> {
        self.space.measure(self.cfg.measure.as_ref())
    }

    fn group(&self) -> Result<&FreeGroup, Failure> {
        self.space.group.as_ref().ok_or_else(|| Failure::input("invalid_config", "operation needs a free_group shift"))
    }

    fn trials(&self) -> Result<TrialOptions, Failure> {
        Ok(TrialOptions {
            n: positive(req(&self.cfg.n, "n")?, "n")?,
            trials: positive(req(&self.cfg.trials, "trials")?, "trials")?,
            seed: self.cfg.seed.unwrap_or(0),
        })
    }

    fn ks_threshold(&self) -> KsThreshold {
        let d = KsThreshold::default();
        KsThreshold { alpha: self.cfg.alpha.unwrap_or(d.alpha), factor: self.cfg.ks_factor.unwrap_or(d.factor) }
    }

    /// A centered potential: the config potential, or the Markov potential of the quasimorphism.
    fn centered(&self, mu: &MarkovMeasure) -> Result<(LocallyConstantFn, f64), Failure> {
        let f = match (&self.cfg.potential, &self.cfg.qm) {
            (Some(_), _) => self.potential()?,
            (None, Some(_)) => self.qm()?.markov_potential().ok_or_else(|| {
                Failure::input("invalid_config", "quasimorphism has no Markov potential")
            })?,
            (None, None) => return Err(Failure::input("missing_field", "potential or qm is required")),
        };
        let mean = integral(&f, mu)?;
        if self.cfg.center.unwrap_or(true) {
            Ok((f.add_constant(-mean), mean))
        } else {
            Ok((f, mean))
        }
    }
}

pub fn dispatch(op: Operation, ctx: &Ctx) -> Result<Outcome, Failure> {
    match op {
        Operation::SftValidate => sft_validate(ctx),
        Operation::Words => words(ctx),
        Operation::Pressure => pressure_op(ctx),
        Operation::Gibbs => gibbs(ctx),
        Operation::GibbsCheck => gibbs_check(ctx),
        Operation::Entropy => entropy_op(ctx),
        Operation::Variational => variational(ctx),
        Operation::Potential => potential(ctx),
        Operation::Komlos => komlos(ctx),
        Operation::Livsic => livsic(ctx),
        Operation::Coboundary => coboundary(ctx),
        Operation::Normalize => normalize(ctx),
        Operation::SolveCohomological => solve(ctx),
        Operation::Variance => variance_op(ctx),
        Operation::Clt => clt(ctx),
        Operation::Invariance => invariance(ctx),
        Operation::Lil => lil(ctx),
        Operation::Deviations => deviations(ctx),
        Operation::Compactify => compactify(ctx),
        Operation::Spherical => spherical(ctx),
    }
}

fn table_csv(header: &str, rows: impl IntoIterator<Item = (String, f64)>) -> String {
    let mut out = format!("{header}\n");
    for (w, v) in rows {
        let _ = writeln!(out, "{w},{v:.17e}");
    }
    out
}

fn potential_csv(f: &LocallyConstantFn) -> String {
    table_csv("word,value", f.dump().values)
}

fn sft_validate(ctx: &Ctx) -> Result<Outcome, Failure> {
    let sft = &ctx.space.sft;
    let n = ctx.cfg.n.unwrap_or(8);
    let counts: Vec<String> = (1..=n).map(|k| sft.word_count(k).to_string()).collect();
    let periodic: Vec<String> = (1..=n).map(|k| sft.periodic_count(k).to_string()).collect();
    Ok(Outcome::new(json!({
        "alphabet_size": sft.alphabet_size(),
        "specification_constant": sft.specification_constant(),
        "full_shift": sft.is_full_shift(),
        "primitive": true,
        "matrix": sft.matrix(),
        "word_counts": counts,
        "periodic_counts": periodic,
    })))
}

fn words(ctx: &Ctx) -> Result<Outcome, Failure> {
    let n = req(&ctx.cfg.n, "n")?;
    let periodic = ctx.cfg.periodic.unwrap_or(false);
    let list = if periodic { ctx.space.sft.periodic_words(n)? } else { ctx.space.sft.words(n)? };
    let mut csv = String::from("word\n");
    for w in &list {
        csv.push_str(&render(w));
        csv.push('\n');
    }
    Ok(Outcome::new(json!({ "n": n, "periodic": periodic, "count": list.len() })).file("words.csv", csv))
}

fn pressure_op(ctx: &Ctx) -> Result<Outcome, Failure> {
    let l = ctx.qm()?;
    let est = pressure(&l, req(&ctx.cfg.n_max, "n_max")?, &ctx.exec)?;
    let csv = est.to_csv();
    let mut out = Outcome::new(json!({ "estimate": est, "width": est.width() }));
    if let Some(w) = ctx.th.get("max_width") {
        out = out.check(at_most("width", est.width(), w));
    }
    if let Some(p) = ctx.cfg.pressure {
        out = out.check(holds("contains_pressure", est.contains(p)));
    }
    Ok(out.file("pressure.csv", csv))
}

fn gibbs(ctx: &Ctx) -> Result<Outcome, Failure> {
    let l = ctx.qm()?;
    let mu = gibbs_measure(&l, req(&ctx.cfg.n, "n")?, req(&ctx.cfg.depth, "depth")?, &ctx.exec)?;
    let dump = mu.dump();
    let csv = table_csv("word,mass", dump.masses.clone());
    Ok(Outcome::new(json!({ "measure": dump, "invariance_defect": mu.invariance_defect() })).file("masses.csv", csv))
}

/// Ratio bounds of `measure` against `qm`, and optionally the distance from the
/// periodic-orbit approximant of size `n`.
fn gibbs_check(ctx: &Ctx) -> Result<Outcome, Failure> {
    let l = ctx.qm()?;
    let mu = ctx.measure()?;
    let ptop = match ctx.cfg.pressure {
        Some(p) => p,
        None => pressure(&l, ctx.cfg.n_max.unwrap_or(12), &ctx.exec)?.point,
    };
    let depths = ctx.cfg.depths.clone().unwrap_or_else(|| (1..=6).collect());
    let ratios = gibbs_ratio_report(&mu, &l, ptop, &depths)?;
    let mut outputs = json!({ "pressure": ptop, "ratios": ratios });
    let mut out_checks = Vec::new();
    let bound = ctx.th.or("ratio_bound", f64::INFINITY);
    out_checks.push(at_most("max_ratio", ratios.max_ratio, bound));
    out_checks.push(at_least("min_ratio", ratios.min_ratio, 1.0 / bound));
    if let Some(n) = ctx.cfg.n {
        let max_depth = depths.iter().copied().max().unwrap_or(1);
        let approx = gibbs_measure(&l, n, max_depth, &ctx.exec)?;
        let tv = depths.iter().map(|&k| tv_distance(&approx, &mu, k)).collect::<thermoqm::Result<Vec<_>>>()?;
        let worst = tv.iter().cloned().fold(0.0, f64::max);
        outputs["tv"] = json!(tv);
        if let Some(t) = ctx.th.get("max_tv") {
            out_checks.push(at_most("tv", worst, t));
        }
    }
    if let Some(gaps) = &ctx.cfg.gaps {
        outputs["weak_bernoulli"] = json!(weak_bernoulli_report(&mu, ctx.cfg.t.unwrap_or(2), gaps)?);
    }
    let mut out = Outcome::new(outputs);
    out.checks = out_checks;
    Ok(out)
}

fn entropy_op(ctx: &Ctx) -> Result<Outcome, Failure> {
    let mu = ctx.measure()?;
    let report = entropy(&mu, req(&ctx.cfg.n_max, "n_max")?)?;
    let mut csv = String::from("n,per_symbol,increment\n");
    for (i, (p, d)) in report.per_symbol.iter().zip(&report.increments).enumerate() {
        let _ = writeln!(csv, "{},{p:.17e},{d:.17e}", i + 1);
    }
    Ok(Outcome::new(&report).file("entropy.csv", csv))
}

fn variational(ctx: &Ctx) -> Result<Outcome, Failure> {
    let l = ctx.qm()?;
    let candidates = req(&ctx.cfg.candidates, "candidates")?;
    let measures = candidates
        .iter()
        .map(|c| ctx.space.measure(Some(&c.measure)))
        .collect::<Result<Vec<_>, _>>()?;
    let named: Vec<(&str, &dyn CylinderMasses)> =
        candidates.iter().zip(&measures).map(|(c, m)| (c.name.as_str(), m as &dyn CylinderMasses)).collect();
    let p = match ctx.cfg.pressure {
        Some(p) => p,
        None => pressure(&l, ctx.cfg.n_max.unwrap_or(16), &ctx.exec)?.point,
    };
    let table = variational_check(&l, &named, ctx.cfg.n.unwrap_or(8), p)?;
    let tol = ctx.th.or("tol", 1e-3);
    let best = table.rows.iter().map(|r| r.shortfall.abs()).fold(f64::INFINITY, f64::min);
    let lowest = table.rows.iter().map(|r| r.shortfall).fold(f64::INFINITY, f64::min);
    Ok(Outcome::new(&table)
        .check(at_most("best_shortfall", best, tol))
        .check(at_least("no_candidate_exceeds_pressure", lowest, -tol)))
}

fn potential(ctx: &Ctx) -> Result<Outcome, Failure> {
    let mu = ctx.measure()?;
    let phi = potential_from_measure(&mu, req(&ctx.cfg.depth, "depth")?)?;
    let defect = normalization_defect(&phi)?;
    Ok(Outcome::new(json!({ "potential": phi.dump(), "normalization_defect": defect }))
        .check(at_most("normalization_defect", defect, ctx.th.or("normalization", 1e-12)))
        .file("potential.csv", potential_csv(&phi)))
}

fn komlos(ctx: &Ctx) -> Result<Outcome, Failure> {
    let l = ctx.qm()?;
    let mu = ctx.measure()?;
    let n_list = req(&ctx.cfg.n_list, "n_list")?;
    let depth = req(&ctx.cfg.depth, "depth")?;
    let k = komlos_potential(&l, &mu, &n_list, depth, ctx.cfg.tol.unwrap_or(1e-2), ctx.cfg.check_len.unwrap_or(8))?;
    let mut outputs = json!({
        "potential": k.potential.dump(),
        "increments": k.increments,
        "slack": k.slack,
    });
    if let (Some(n), Some(t)) = (ctx.cfg.n, ctx.cfg.t) {
        outputs["estimate"] = json!(komlos_estimate_check(&l, n, t)?);
    }
    let csv = potential_csv(&k.potential);
    Ok(Outcome::new(outputs).check(at_most("slack", k.slack, ctx.th.or("slack", 0.0))).file("potential.csv", csv))
}

fn parse_verdict(text: &str) -> Result<Verdict, Failure> {
    match text {
        "cohomologous" => Ok(Verdict::Cohomologous),
        "distinct" => Ok(Verdict::Distinct),
        "inconclusive" => Ok(Verdict::Inconclusive),
        _ => Err(Failure::input("invalid_config", format!("unknown verdict {text:?}"))),
    }
}

fn livsic(ctx: &Ctx) -> Result<Outcome, Failure> {
    let l = ctx.qm()?;
    let r = ctx.space.quasimorphism(ctx.cfg.other.as_ref().ok_or_else(|| Failure::input("missing_field", "other is required"))?)?;
    let d = LivsicOptions::default();
    let opts = LivsicOptions {
        n_max: ctx.cfg.n_max.unwrap_or(d.n_max),
        m_homog: ctx.cfg.m_homog.unwrap_or(d.m_homog),
        resolution: ctx.cfg.resolution.unwrap_or(d.resolution),
    };
    let expect = ctx.cfg.expect.as_deref().map(parse_verdict).transpose()?;
    let (outputs, verdict) = if ctx.cfg.quasicocycle.unwrap_or(false) {
        let depth = ctx.cfg.depth.unwrap_or(8);
        let b = quasicocycle_of(&l, depth, &ctx.exec)?;
        let c = quasicocycle_of(&r, depth, &ctx.exec)?;
        let v = livsic_quasicocycle_test(&b, &c, opts, &ctx.exec)?;
        (json!(v), v.verdict.verdict)
    } else {
        let v = cohomologous(&l, &r, opts, &ctx.exec)?;
        (json!(v), v.verdict)
    };
    let mut out = Outcome::new(outputs);
    if let Some(e) = expect {
        out = out.check(Check {
            name: "verdict".into(),
            value: json!(verdict),
            limit: json!(e),
            pass: verdict == e,
        });
    }
    Ok(out)
}

fn coboundary(ctx: &Ctx) -> Result<Outcome, Failure> {
    let mu = ctx.measure()?;
    let (phi, mean) = ctx.centered(&mu)?;
    let depth = ctx.cfg.depth.unwrap_or(phi.depth().max(1));
    let sol = coboundary_solve(&phi, &mu, ctx.cfg.n_cesaro.unwrap_or(1_000_000_000), depth)?;
    let csv = potential_csv(&sol.u);
    Ok(Outcome::new(json!({
        "mean_removed": mean,
        "u": sol.u.dump(),
        "residual": sol.residual,
        "sup_u": sol.sup_u,
        "bowen_estimate": sol.bowen_estimate,
        "within_bound": sol.within_bound,
        "terms": sol.terms,
    }))
    .check(at_most("residual", sol.residual, ctx.th.or("residual", 1e-8)))
    .file("u.csv", csv))
}

fn normalize(ctx: &Ctx) -> Result<Outcome, Failure> {
    let phi = MarkovPotential::new(ctx.potential()?)?;
    let norm = normalize_potential(&phi)?;
    let defect = norm.potential.normalization_defect()?;
    let csv = potential_csv(norm.potential.table());
    Ok(Outcome::new(json!({
        "lambda": norm.lambda,
        "log_lambda": norm.log_lambda(),
        "normalized": norm.potential.table().dump(),
        "eigenfunction": norm.eigenfunction.dump(),
        "iterations": norm.iterations,
        "normalization_defect": defect,
    }))
    .check(at_most("normalization_defect", defect, ctx.th.or("normalization", 1e-12)))
    .file("normalized.csv", csv))
}

fn solve(ctx: &Ctx) -> Result<Outcome, Failure> {
    let mu = ctx.measure()?;
    let (psi, mean) = ctx.centered(&mu)?;
    let sol = solve_cohomological(&mu, &psi)?;
    let limit = ctx.th.or("residual", 1e-10) * (1.0 + psi.sup_norm());
    let csv = potential_csv(&sol.h);
    Ok(Outcome::new(json!({
        "mean_removed": mean,
        "h": sol.h.dump(),
        "residual": sol.residual,
        "lambda2": sol.lambda2,
        "spectral_constant": sol.spectral_constant,
        "bound": sol.bound,
        "sup_h": sol.h.sup_norm(),
    }))
    .check(at_most("residual", sol.residual, limit))
    .file("h.csv", csv))
}

fn variance_op(ctx: &Ctx) -> Result<Outcome, Failure> {
    let mu = ctx.measure()?;
    let (psi, mean) = ctx.centered(&mu)?;
    let v = variance(&mu, &psi)?;
    let gap = (v.sigma2_martingale - v.sigma2_green_kubo).abs();
    Ok(Outcome::new(json!({ "mean_removed": mean, "variance": v }))
        .check(at_most("two_way_gap", gap, ctx.th.or("agreement", 1e-8))))
}

fn observable(ctx: &Ctx) -> Result<(Observable, MarkovMeasure), Failure> {
    let mu = ctx.measure()?;
    Ok((Observable::new(&ctx.qm()?, &mu)?, mu))
}

fn clt(ctx: &Ctx) -> Result<Outcome, Failure> {
    let (obs, mu) = observable(ctx)?;
    let report = clt_experiment(&obs, &mu, ctx.trials()?, ctx.ks_threshold(), &ctx.exec)?;
    let limit = ctx.th.or("max_ks", report.threshold);
    let csv = report.statistics_csv();
    Ok(Outcome::new(&report).check(at_most("ks", report.ks, limit)).file("statistics.csv", csv))
}

fn invariance(ctx: &Ctx) -> Result<Outcome, Failure> {
    let (obs, mu) = observable(ctx)?;
    let sup = ctx.th.or("sup_ks", 0.05);
    let r = invariance_experiment(&obs, &mu, ctx.trials()?, ctx.ks_threshold(), sup, &ctx.exec)?;
    Ok(Outcome::new(&r)
        .check(at_most("terminal_ks", r.terminal_ks, r.terminal_threshold))
        .check(at_most("max_abs_correlation", r.max_abs_correlation, r.correlation_threshold))
        .check(at_most("sup_ks", r.sup_ks, sup))
        .check(holds("sup_dominates_terminal", r.sup_dominates_terminal)))
}

fn lil(ctx: &Ctx) -> Result<Outcome, Failure> {
    let (obs, mu) = observable(ctx)?;
    let r = lil_experiment(&obs, &mu, req(&ctx.cfg.n_max, "n_max")?, ctx.cfg.seed.unwrap_or(0))?;
    Ok(Outcome::new(&r).check(holds("in_band", r.in_band)))
}

fn deviations(ctx: &Ctx) -> Result<Outcome, Failure> {
    let (obs, mu) = observable(ctx)?;
    let r = deviation_experiment(
        &obs,
        &mu,
        &req(&ctx.cfg.n_list, "n_list")?,
        positive(req(&ctx.cfg.trials, "trials")?, "trials")?,
        req(&ctx.cfg.delta, "delta")?,
        ctx.cfg.seed.unwrap_or(0),
        &ctx.exec,
    )?;
    let mut csv = String::from("n,hits,probability,upper_bound\n");
    for row in &r.rows {
        let _ = writeln!(csv, "{},{},{:.17e},{:.17e}", row.n, row.hits, row.probability, row.upper_bound);
    }
    let mut out = Outcome::new(&r);
    if let Some(tol) = ctx.th.get("rate_tol") {
        out = out.check(at_most("relative_error", r.relative_error.unwrap_or(f64::INFINITY), tol));
    }
    out = out.check(holds("gaussian_exponent_negative", r.gaussian_exponent.is_some_and(|e| e < 0.0)));
    Ok(out.file("deviations.csv", csv))
}

fn compactify(ctx: &Ctx) -> Result<Outcome, Failure> {
    let group = ctx.group()?;
    let r = compactification_experiment(group, &req(&ctx.cfg.ns, "ns")?, req(&ctx.cfg.depth, "depth")?)?;
    let mut csv = String::from("n,words,tv\n");
    for p in &r.points {
        let _ = writeln!(csv, "{},{},{:.17e}", p.n, p.words, p.tv);
    }
    let last = r.points.last().map(|p| p.tv).unwrap_or(f64::INFINITY);
    let mut out = Outcome::new(&r).check(holds("decreasing", r.decreasing));
    if let Some(t) = ctx.th.get("max_tv") {
        out = out.check(at_most("final_tv", last, t));
    }
    Ok(out.file("compactification.csv", csv))
}

fn spherical(ctx: &Ctx) -> Result<Outcome, Failure> {
    let group = ctx.group()?;
    let l = ctx.qm()?;
    let n = req(&ctx.cfg.n, "n")?;
    let count = req(&ctx.cfg.count, "count")?;
    let seed = ctx.cfg.seed.unwrap_or(0);
    let r = if ctx.cfg.rays.unwrap_or(false) {
        boundary_ray_clt(group, &l, n, count, seed, ctx.ks_threshold(), &ctx.exec)?
    } else {
        spherical_clt(group, &l, n, count, seed, ctx.ks_threshold(), &ctx.exec)?
    };
    let limit = ctx.th.or("max_ks", r.threshold);
    let z = r.mean_statistic.abs() / r.mean_standard_error;
    let mut out = Outcome::new(&r).check(at_most("ks", r.ks, limit));
    if let Some(se) = ctx.th.get("mean_se") {
        out = out.check(at_most("mean_z", z, se));
    }
    Ok(out.file("statistics.csv", per_trial_csv(&r.statistics)))
}
