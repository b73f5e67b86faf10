//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thermoqm::clt::{
    clt_experiment, deviation_experiment, invariance_experiment, monte_carlo_variance, KsThreshold,
    Observable, TrialOptions,
};
use thermoqm::group::{compactification_experiment, spherical_clt, FreeGroup};
use thermoqm::lc::LocallyConstantFn;
use thermoqm::markov::{integral, solve_cohomological, variance, MarkovMeasure, MarkovPotential, TransferOperator};
use thermoqm::measure::{tv_distance, CylinderMasses};
use thermoqm::qm::{cohomologous, LivsicOptions, Quasimorphism, Verdict};
use thermoqm::sft::{full_shift, golden_mean, Sft};
use thermoqm::thermo::{gibbs_measure, gibbs_ratio_report, pressure, variational_check};
use thermoqm::{Exec, Result};

const PRESSURE_RUNTIME: Duration = Duration::from_secs(10);
const GOLDEN_WIDTH: f64 = 0.01;
const COUNT01_WIDTH: f64 = 0.02;
const GIBBS_TV: f64 = 0.01;
const GIBBS_RUNTIME: Duration = Duration::from_secs(30);
const RATIO_BOUND: f64 = 3.0;
const RATIO_DRIFT: f64 = 0.10;
const VARIATIONAL_TOL: f64 = 1e-3;
const KL_TOL: f64 = 1e-6;
const LIVSIC_DEPTH: usize = 10;
const LIVSIC_RUNTIME: Duration = Duration::from_secs(5);
const RANDOM_POTENTIALS: usize = 100;
const SOLVER_RESIDUAL: f64 = 1e-10;
const VARIANCE_AGREEMENT: f64 = 1e-8;
const IID_VARIANCE_TOL: f64 = 1e-12;
const MC_Z: f64 = 3.0;
const CLT_KS: f64 = 0.02;
const CLT_RUNTIME: Duration = Duration::from_secs(120);
const SUP_KS: f64 = 0.05;
const RATE_TOL: f64 = 0.15;
const COMPACT_TV: f64 = 0.05;
const COMPACT_RUNTIME: Duration = Duration::from_secs(60);
const SPHERE_KS: f64 = 0.03;
const SPHERE_SE: f64 = 3.0;

struct Check {
    pass: bool,
    detail: String,
    record: Value,
}

fn golden_ratio() -> f64 {
    (1.0 + 5f64.sqrt()) / 2.0
}

fn indicator(sft: &Arc<Sft>, pattern: &[u8]) -> LocallyConstantFn {
    LocallyConstantFn::from_fn(sft, pattern.len(), |w| if w == pattern { 1.0 } else { 0.0 }).unwrap()
}

fn timed(limit: Duration, start: Instant) -> (bool, String) {
    let elapsed = start.elapsed();
    (elapsed < limit, format!("{:.1}s/{}s", elapsed.as_secs_f64(), limit.as_secs()))
}

fn pressure_oracle(exec: &Exec) -> Result<Check> {
    let mut pass = true;
    let mut detail = Vec::new();
    let mut record = Vec::new();
    let cases: Vec<(&str, Quasimorphism, usize, f64, f64)> = vec![
        ("full2", Quasimorphism::zero(&full_shift(2)?), 16, 2f64.ln(), f64::INFINITY),
        ("full3", Quasimorphism::zero(&full_shift(3)?), 12, 3f64.ln(), f64::INFINITY),
        ("golden", Quasimorphism::zero(&golden_mean()), 18, golden_ratio().ln(), GOLDEN_WIDTH),
        (
            "count01",
            Quasimorphism::pattern_count(&full_shift(2)?, vec![0, 1])?,
            24,
            (1.0 + 0.5f64.exp()).ln(),
            COUNT01_WIDTH,
        ),
    ];
    for (name, l, n_max, exact, width) in cases {
        let start = Instant::now();
        let est = pressure(&l, n_max, exec)?;
        let (fast, time) = timed(PRESSURE_RUNTIME, start);
        let ok = est.contains(exact) && est.width() <= width && fast;
        pass &= ok;
        detail.push(format!("{name} [{:.6}, {:.6}] width {:.4} {time}", est.lower, est.upper, est.width()));
        record.push(json!({ "name": name, "estimate": est }));
    }
    Ok(Check { pass, detail: detail.join("; "), record: Value::Array(record) })
}

fn gibbs_consistency(exec: &Exec) -> Result<Check> {
    let sft = full_shift(2)?;
    let f = indicator(&sft, &[0, 1]);
    let start = Instant::now();
    let approx = gibbs_measure(&Quasimorphism::potential_sum(f.clone()), 14, 6, exec)?;
    let (chain, _) = MarkovMeasure::gibbs(&MarkovPotential::new(f)?)?;
    let tvs = (1..=6).map(|k| tv_distance(&approx, &chain, k)).collect::<Result<Vec<_>>>()?;
    let (fast, time) = timed(GIBBS_RUNTIME, start);
    let worst = tvs.iter().cloned().fold(0.0, f64::max);
    Ok(Check {
        pass: worst <= GIBBS_TV && fast,
        detail: format!("max TV {worst:.5} over depths 1..6, {time}"),
        record: json!({ "tv": tvs }),
    })
}

fn gibbs_ratios(_exec: &Exec) -> Result<Check> {
    let sft = golden_mean();
    let parry = MarkovMeasure::parry(&sft)?;
    let report = gibbs_ratio_report(&parry, &Quasimorphism::zero(&sft), golden_ratio().ln(), &[1, 2, 3, 4, 5, 6, 7, 8])?;
    let at = |k: usize| &report.per_depth[k - 1];
    let drift = |a: f64, b: f64| (a - b).abs() / a;
    let stable = drift(at(6).min_ratio, at(8).min_ratio) <= RATIO_DRIFT
        && drift(at(6).max_ratio, at(8).max_ratio) <= RATIO_DRIFT;
    let bounded = report.max_ratio <= RATIO_BOUND && report.min_ratio >= 1.0 / RATIO_BOUND;
    Ok(Check {
        pass: bounded && stable && report.zero_mass == 0,
        detail: format!("ratios in [{:.4}, {:.4}], depth 6 vs 8 stable: {stable}", report.min_ratio, report.max_ratio),
        record: json!(report),
    })
}

fn variational(exec: &Exec) -> Result<Check> {
    let sft = full_shift(2)?;
    let f = indicator(&sft, &[0, 1]);
    let l = Quasimorphism::potential_sum(f.clone());
    let (chain, _) = MarkovMeasure::gibbs(&MarkovPotential::new(f)?)?;
    let p = pressure(&l, 18, exec)?;
    let gibbs = variational_check(&l, &[("gibbs", &chain as &dyn CylinderMasses)], 8, p.point)?;
    let gibbs_gap = gibbs.rows[0].shortfall.abs();

    let zero = Quasimorphism::zero(&sft);
    let bern = MarkovMeasure::bernoulli(&sft, &[0.3, 0.7])?;
    let p0 = pressure(&zero, 16, exec)?;
    let table = variational_check(&zero, &[("bernoulli", &bern as &dyn CylinderMasses)], 8, p0.point)?;
    let kl = 0.3 * 0.6f64.ln() + 0.7 * 1.4f64.ln();
    let kl_gap = (table.rows[0].shortfall - kl).abs();
    Ok(Check {
        pass: gibbs_gap <= VARIATIONAL_TOL && kl_gap <= KL_TOL,
        detail: format!("|P - h - mu(L)| = {gibbs_gap:.2e}, shortfall vs KL off by {kl_gap:.2e}"),
        record: json!({ "gibbs": gibbs, "bernoulli": table }),
    })
}

fn livsic(exec: &Exec) -> Result<Check> {
    let sft = full_shift(2)?;
    let c01 = Quasimorphism::pattern_count(&sft, vec![0, 1])?;
    let c10 = Quasimorphism::pattern_count(&sft, vec![1, 0])?;
    let opts = LivsicOptions { n_max: LIVSIC_DEPTH, ..LivsicOptions::default() };
    let start = Instant::now();
    let same = cohomologous(&c01, &c10, opts, exec)?;
    let double = cohomologous(&c01, &c01.scaled(2.0), opts, exec)?;
    let (fast, time) = timed(LIVSIC_RUNTIME, start);
    let witness_len = double.witness_word.as_ref().map(|w| w.len()).unwrap_or(usize::MAX);
    Ok(Check {
        pass: same.verdict == Verdict::Cohomologous
            && same.certificate_depth == LIVSIC_DEPTH
            && double.verdict == Verdict::Distinct
            && witness_len <= 2
            && fast,
        detail: format!(
            "01 vs 10 {:?} at depth {}, L vs 2L {:?} witness {:?}, {time}",
            same.verdict, same.certificate_depth, double.verdict, double.witness
        ),
        record: json!({ "same": same, "double": double }),
    })
}

fn random_table(sft: &Arc<Sft>, depth: usize, rng: &mut ChaCha8Rng) -> LocallyConstantFn {
    LocallyConstantFn::from_fn(sft, depth, |_| rng.random_range(-1.0..1.0)).unwrap()
}

fn shifts_for_solver() -> Result<Vec<(&'static str, MarkovMeasure)>> {
    let free = FreeGroup::new(2)?;
    Ok(vec![
        ("full2", MarkovMeasure::parry(&full_shift(2)?)?),
        ("golden", MarkovMeasure::parry(&golden_mean())?),
        ("free2", free.parry()?),
    ])
}

/// `sup |(Id - R) h - psi|` through the operator action on tables.
fn operator_residual(mu: &MarkovMeasure, h: &LocallyConstantFn, psi: &LocallyConstantFn) -> Result<f64> {
    let rh = TransferOperator::new(mu.potential()).apply(h)?;
    let depth = h.depth().max(psi.depth()).max(rh.depth());
    let lhs = h.refine(depth)?.sub(&rh.refine(depth)?)?;
    Ok(lhs.sub(&psi.refine(depth)?)?.sup_norm())
}

fn cohomological_solver(_exec: &Exec) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut worst_round_trip: f64 = 0.0;
    let mut per_shift = Vec::new();
    for (name, mu) in shifts_for_solver()? {
        let sft = mu.sft().clone();
        let mut shift_worst: f64 = 0.0;
        for _ in 0..RANDOM_POTENTIALS {
            let raw = random_table(&sft, 4, &mut rng);
            let psi = raw.add_constant(-integral(&raw, &mu)?);
            let sol = solve_cohomological(&mu, &psi)?;
            let r = operator_residual(&mu, &sol.h, &psi)?;
            shift_worst = shift_worst.max(r);

            let g = random_table(&sft, 4, &mut rng);
            let rg = TransferOperator::new(mu.potential()).apply(&g)?;
            let psi2 = g.sub(&rg.refine(4)?)?;
            let sol2 = solve_cohomological(&mu, &psi2)?;
            worst_round_trip = worst_round_trip.max(operator_residual(&mu, &sol2.h, &psi2)?);
        }
        worst = worst.max(shift_worst);
        per_shift.push(json!({ "shift": name, "residual": shift_worst }));
    }
    Ok(Check {
        pass: worst <= SOLVER_RESIDUAL && worst_round_trip <= SOLVER_RESIDUAL,
        detail: format!(
            "{} potentials per shift, residual {worst:.2e}, round trip {worst_round_trip:.2e}",
            RANDOM_POTENTIALS
        ),
        record: json!({ "per_shift": per_shift, "round_trip": worst_round_trip }),
    })
}

fn variance_agreement(exec: &Exec) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for (_, mu) in shifts_for_solver()? {
        let sft = mu.sft().clone();
        for _ in 0..RANDOM_POTENTIALS {
            let raw = random_table(&sft, 4, &mut rng);
            let psi = raw.add_constant(-integral(&raw, &mu)?);
            let v = variance(&mu, &psi)?;
            worst = worst.max((v.sigma2_martingale - v.sigma2_green_kubo).abs());
            // keep the stream aligned with the solver criterion
            let _ = random_table(&sft, 4, &mut rng);
        }
    }

    let full2 = full_shift(2)?;
    let coin = MarkovMeasure::bernoulli(&full2, &[0.5, 0.5])?;
    let psi = indicator(&full2, &[0]).add_constant(-0.5);
    let iid = variance(&coin, &psi)?;
    let iid_gap = (iid.sigma2_martingale - 0.25).abs().max((iid.sigma2_green_kubo - 0.25).abs());

    // occupation of "01" under a fair coin: 3/16 - 2/16
    let obs = Observable::new(&Quasimorphism::pattern_count(&full2, vec![0, 1])?, &coin)?;
    let exact_gap = (obs.sigma2() - 1.0 / 16.0).abs();
    let mc = monte_carlo_variance(&obs, &coin, TrialOptions { n: 10_000, trials: 5000, seed: 7 }, exec)?;
    Ok(Check {
        pass: worst <= VARIANCE_AGREEMENT && iid_gap <= IID_VARIANCE_TOL && exact_gap <= IID_VARIANCE_TOL && mc.z <= MC_Z,
        detail: format!(
            "two-way gap {worst:.2e}, iid sigma^2 off by {iid_gap:.1e}, Monte Carlo z = {:.2}",
            mc.z
        ),
        record: json!({ "two_way_gap": worst, "iid": iid, "monte_carlo": mc }),
    })
}

fn clt(exec: &Exec) -> Result<Check> {
    let full2 = full_shift(2)?;
    let coin = MarkovMeasure::bernoulli(&full2, &[0.5, 0.5])?;
    let free = FreeGroup::new(2)?;
    let free_parry = free.parry()?;
    let ab = free.brooks(&free.parse("ab")?)?;
    let cases: Vec<(&str, Quasimorphism, &MarkovMeasure)> = vec![
        ("letter", Quasimorphism::letter_weights(&full2, vec![0.5, -0.5])?, &coin),
        ("count01", Quasimorphism::pattern_count(&full2, vec![0, 1])?, &coin),
        ("brooks_ab", ab, &free_parry),
    ];
    let opts = TrialOptions { n: 5000, trials: 20_000, seed: 8 };
    let mut pass = true;
    let mut detail = Vec::new();
    let mut record = Vec::new();
    for (name, l, mu) in cases {
        let start = Instant::now();
        let obs = Observable::new(&l, mu)?;
        let report = clt_experiment(&obs, mu, opts, KsThreshold::default(), exec)?;
        let (fast, time) = timed(CLT_RUNTIME, start);
        pass &= report.ks <= CLT_KS && fast;
        detail.push(format!("{name} KS {:.4} {time}", report.ks));
        record.push(json!({ "name": name, "report": report }));
    }
    Ok(Check { pass, detail: detail.join("; "), record: Value::Array(record) })
}

fn invariance(exec: &Exec) -> Result<Check> {
    let full2 = full_shift(2)?;
    let coin = MarkovMeasure::bernoulli(&full2, &[0.5, 0.5])?;
    let obs = Observable::new(&Quasimorphism::letter_weights(&full2, vec![0.5, -0.5])?, &coin)?;
    let opts = TrialOptions { n: 4096, trials: 10_000, seed: 9 };
    let report = invariance_experiment(&obs, &coin, opts, KsThreshold::default(), SUP_KS, exec)?;
    Ok(Check {
        pass: report.max_abs_correlation <= report.correlation_threshold && report.sup_ks <= SUP_KS,
        detail: format!(
            "max |corr| {:.4} (limit {:.4}), sup KS {:.4}",
            report.max_abs_correlation, report.correlation_threshold, report.sup_ks
        ),
        record: json!(report),
    })
}

fn deviations(exec: &Exec) -> Result<Check> {
    let full2 = full_shift(2)?;
    let coin = MarkovMeasure::bernoulli(&full2, &[0.5, 0.5])?;
    let obs = Observable::new(&Quasimorphism::letter_weights(&full2, vec![0.5, -0.5])?, &coin)?;
    let n_list: Vec<usize> = (1..=8).map(|k| 10 * k).collect();
    let report = deviation_experiment(&obs, &coin, &n_list, 500_000, 0.2, 10, exec)?;
    // fraction 0.7 of heads against a fair coin
    let exact = 0.7 * 1.4f64.ln() + 0.3 * 0.6f64.ln();
    let rate_ok = (report.rate - exact).abs() <= 1e-9;
    let rel = report.relative_error.unwrap_or(f64::INFINITY);
    let exponent = report.gaussian_exponent.unwrap_or(f64::NAN);
    Ok(Check {
        pass: rate_ok && rel <= RATE_TOL && exponent < 0.0,
        detail: format!("rate {:.4}, fitted slope {:?}, relative error {rel:.3}, gaussian exponent {exponent:.3}", report.rate, report.slope),
        record: json!(report),
    })
}

fn compactification(_exec: &Exec) -> Result<Check> {
    let free = FreeGroup::new(2)?;
    let start = Instant::now();
    let report = compactification_experiment(&free, &[8, 12, 16, 18], 3)?;
    let (fast, time) = timed(COMPACT_RUNTIME, start);
    let last = report.points.last().map(|p| p.tv).unwrap_or(f64::INFINITY);
    let tvs: Vec<String> = report.points.iter().map(|p| format!("{:.4}", p.tv)).collect();
    Ok(Check {
        pass: report.decreasing && last < COMPACT_TV && fast,
        detail: format!("TV {} , {time}", tvs.join(" > ")),
        record: json!(report),
    })
}

fn spherical(exec: &Exec) -> Result<Check> {
    let free = FreeGroup::new(2)?;
    let ab = free.brooks(&free.parse("ab")?)?;
    let report = spherical_clt(&free, &ab, 10_000, 100_000, 12, KsThreshold::default(), exec)?;
    let z = report.mean_statistic.abs() / report.mean_standard_error;
    Ok(Check {
        pass: report.ks <= SPHERE_KS && z <= SPHERE_SE,
        detail: format!("KS {:.4}, mean {:.4} = {z:.2} standard errors", report.ks, report.mean_statistic),
        record: json!(report),
    })
}

type Criterion = (&'static str, fn(&Exec) -> Result<Check>);

const CRITERIA: [Criterion; 12] = [
    ("pressure oracle", pressure_oracle),
    ("gibbs consistency", gibbs_consistency),
    ("gibbs ratio bound", gibbs_ratios),
    ("variational principle", variational),
    ("livsic decision", livsic),
    ("cohomological solver", cohomological_solver),
    ("variance agreement", variance_agreement),
    ("clt", clt),
    ("invariance principle", invariance),
    ("deviations", deviations),
    ("compactification", compactification),
    ("spherical clt", spherical),
];

fn run_suite(exec: &Exec, report: bool) -> (Vec<String>, bool) {
    let mut outputs = Vec::with_capacity(CRITERIA.len());
    let mut all = true;
    for (i, (name, check)) in CRITERIA.iter().enumerate() {
        let (pass, detail, record) = match check(exec) {
            Ok(c) => (c.pass, c.detail, c.record),
            Err(e) => (false, format!("error: {e}"), json!({ "error": e.to_string() })),
        };
        all &= pass;
        if report {
            println!("{} {:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" }, i + 1);
        }
        outputs.push(serde_json::to_string(&record).expect("records serialize"));
    }
    (outputs, all)
}

fn main() -> ExitCode {
    let (first, mut all) = run_suite(&Exec::with_threads(8), true);
    let (second, _) = run_suite(&Exec::with_threads(1), false);
    let (third, _) = run_suite(&Exec::with_threads(8), false);
    let mismatched: Vec<&str> = CRITERIA
        .iter()
        .enumerate()
        .filter(|(i, _)| first[*i] != second[*i] || first[*i] != third[*i])
        .map(|(_, c)| c.0)
        .collect();
    let deterministic = mismatched.is_empty();
    all &= deterministic;
    println!(
        "{} 13 determinism: {}",
        if deterministic { "PASS" } else { "FAIL" },
        if deterministic { "identical JSON for threads 8, 1, 8".to_string() } else { format!("differs in {mismatched:?}") }
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
