//! Partition functions, pressure, periodic-orbit Gibbs approximants and the
//! diagnostics built on cylinder masses.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::measure::{CylinderMasses, CylinderMeasure};
use crate::qm::Quasimorphism;
use crate::sft::{render, Symbol};
use crate::stats::{shannon, LogSumExp};

/// `log Z_n(L)`, summing `exp L(a)` over periodic words of length exactly `n`.
pub fn log_partition_function(l: &Quasimorphism, n: usize, exec: &Exec) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("partition function needs n >= 1".into()));
    }
    l.ensure_depth(n)?;
    let chunks = l.sft().fold_words(n, true, exec, LogSumExp::default, |acc, a| {
        acc.push(l.eval_periodic(a))
    })?;
    let mut total = LogSumExp::default();
    for c in &chunks {
        total.merge(c);
    }
    Ok(total.value())
}

pub fn partition_function(l: &Quasimorphism, n: usize, exec: &Exec) -> Result<f64> {
    Ok(log_partition_function(l, n, exec)?.exp())
}

#[derive(Clone, Debug, Serialize)]
pub struct PressureEstimate {
    /// `P_n = log Z_n` for `n = 1..=n_max`.
    pub log_z: Vec<f64>,
    /// Smallest `n` entering the constant and the interval.
    pub n0: usize,
    /// Observed `sup |P_{n+m} - P_n - P_m|` over `n, m >= n0`.
    pub c: f64,
    pub lower: f64,
    pub upper: f64,
    pub point: f64,
    /// The constant is a lower bound for the true one.
    pub empirical_c: bool,
}

impl PressureEstimate {
    pub fn n_max(&self) -> usize {
        self.log_z.len()
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }

    /// Rows `n,P_n,lower_n,upper_n` with per-`n` bounds `(P_n -+ C)/n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,P_n,lower,upper\n");
        for (i, p) in self.log_z.iter().enumerate() {
            let n = (i + 1) as f64;
            let _ = writeln!(out, "{},{:.17e},{:.17e},{:.17e}", i + 1, p, (p - self.c) / n, (p + self.c) / n);
        }
        out
    }
}

/// Pressure from periodic partition sums up to `n_max`.
pub fn pressure(l: &Quasimorphism, n_max: usize, exec: &Exec) -> Result<PressureEstimate> {
    if n_max < 4 {
        return Err(Error::InvalidInput("pressure needs n_max >= 4".into()));
    }
    let sft = l.sft();
    let total: u128 = (1..=n_max).map(|n| sft.periodic_count(n)).fold(0u128, u128::saturating_add);
    sft.check_budget(total)?;
    let log_z = (1..=n_max)
        .map(|n| log_partition_function(l, n, exec))
        .collect::<Result<Vec<_>>>()?;
    let p = |n: usize| log_z[n - 1];
    let n0 = (3 * sft.specification_constant()).min(n_max / 2).max(1);
    let mut c: f64 = 0.0;
    for n in n0..=n_max {
        for m in n0..=n_max.saturating_sub(n) {
            c = c.max((p(n + m) - p(n) - p(m)).abs());
        }
    }
    let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::INFINITY);
    for n in n0..=n_max {
        lower = lower.max((p(n) - c) / n as f64);
        upper = upper.min((p(n) + c) / n as f64);
    }
    let point = p(n_max) / n_max as f64;
    let pad = 1e-12 * (1.0 + point.abs());
    Ok(PressureEstimate { log_z, n0, c, lower: lower - pad, upper: upper + pad, point, empirical_c: true })
}

/// Periodic-orbit approximant: each periodic word `a` of length `n` carries
/// `exp(L(a) - P_n)`, spread evenly over its `n` cyclic windows of length `depth`.
pub fn gibbs_measure(l: &Quasimorphism, n: usize, depth: usize, exec: &Exec) -> Result<CylinderMeasure> {
    if depth == 0 || depth > n {
        return Err(Error::InvalidInput(format!("need 1 <= depth <= N, got depth {depth}, N {n}")));
    }
    let sft = l.sft().clone();
    let log_z = log_partition_function(l, n, exec)?;
    if !log_z.is_finite() {
        return Err(Error::NumericalFailure(format!("log Z_{n} = {log_z}")));
    }
    let idx = sft.index(depth)?;
    let chunks = sft.fold_words(
        n,
        true,
        exec,
        || vec![0.0; idx.len()],
        |acc, a| {
            let w = (l.eval_periodic(a) - log_z).exp() / n as f64;
            for start in 0..n {
                acc[idx.cyclic_position(a, start).expect("periodic")] += w;
            }
        },
    )?;
    let mut masses = vec![0.0; idx.len()];
    for c in &chunks {
        for (m, x) in masses.iter_mut().zip(c) {
            *m += x;
        }
    }
    CylinderMeasure::from_top(&sft, depth, masses)
}

/// Total-variation distances at `depth` between approximants at consecutive `N`.
pub fn gibbs_cauchy_sequence(l: &Quasimorphism, ns: &[usize], depth: usize, exec: &Exec) -> Result<Vec<f64>> {
    let measures = ns
        .iter()
        .map(|&n| gibbs_measure(l, n, depth, exec))
        .collect::<Result<Vec<_>>>()?;
    measures
        .windows(2)
        .map(|w| crate::measure::tv_distance(&w[0], &w[1], depth))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct DepthRatios {
    pub depth: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GibbsRatioReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub argmin: String,
    pub argmax: String,
    pub per_depth: Vec<DepthRatios>,
    /// Cylinders skipped for having zero mass.
    pub zero_mass: usize,
}

/// Extremes of `mu[a] / exp(L(lift a) - |a| P)` over `a` in `W_k`, `k` in `depths`.
pub fn gibbs_ratio_report(
    mu: &dyn CylinderMasses,
    l: &Quasimorphism,
    ptop: f64,
    depths: &[usize],
) -> Result<GibbsRatioReport> {
    let sft = mu.sft();
    let mut report = GibbsRatioReport {
        min_ratio: f64::INFINITY,
        max_ratio: f64::NEG_INFINITY,
        argmin: String::new(),
        argmax: String::new(),
        per_depth: Vec::with_capacity(depths.len()),
        zero_mass: 0,
    };
    for &k in depths {
        let idx = sft.index(k)?;
        let masses = mu.masses_at(k)?;
        let mut row = DepthRatios { depth: k, min_ratio: f64::INFINITY, max_ratio: f64::NEG_INFINITY };
        for (w, &m) in idx.iter().zip(&masses) {
            if m <= 0.0 {
                report.zero_mass += 1;
                continue;
            }
            let lifted = sft.lift(w)?;
            let r = (m.ln() - l.eval_periodic(&lifted) + k as f64 * ptop).exp();
            row.min_ratio = row.min_ratio.min(r);
            row.max_ratio = row.max_ratio.max(r);
            if r < report.min_ratio {
                report.min_ratio = r;
                report.argmin = render(w);
            }
            if r > report.max_ratio {
                report.max_ratio = r;
                report.argmax = render(w);
            }
        }
        report.per_depth.push(row);
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct MixingRatio {
    pub k: usize,
    pub ratio: f64,
}

/// `mu([a] cap tau^{-k}[b]) / (mu[a] mu[b])` for each `k`.
pub fn mixing_ratio_report(
    mu: &dyn CylinderMasses,
    a: &[Symbol],
    b: &[Symbol],
    ks: &[usize],
) -> Result<Vec<MixingRatio>> {
    let ma = mu.mass(a)?;
    let mb = mu.mass(b)?;
    if ma <= 0.0 {
        return Err(Error::ZeroMass { word: render(a) });
    }
    if mb <= 0.0 {
        return Err(Error::ZeroMass { word: render(b) });
    }
    ks.iter()
        .map(|&k| {
            let joint = if k >= a.len() {
                mu.separated_mass(a, k - a.len(), b)?
            } else {
                overlapping_mass(mu, a, k, b)?
            };
            Ok(MixingRatio { k, ratio: joint / (ma * mb) })
        })
        .collect()
}

fn overlapping_mass(mu: &dyn CylinderMasses, a: &[Symbol], k: usize, b: &[Symbol]) -> Result<f64> {
    let len = a.len().max(k + b.len());
    let mut merged = vec![None; len];
    for (i, &s) in a.iter().enumerate() {
        merged[i] = Some(s);
    }
    for (j, &s) in b.iter().enumerate() {
        match merged[k + j] {
            Some(t) if t != s => return Ok(0.0),
            _ => merged[k + j] = Some(s),
        }
    }
    let sft = mu.sft();
    let idx = sft.index(len)?;
    let masses = mu.masses_at(len)?;
    Ok(idx
        .iter()
        .zip(&masses)
        .filter(|(w, _)| w.iter().zip(&merged).all(|(s, m)| m.is_none_or(|t| t == *s)))
        .map(|(_, m)| m)
        .sum())
}

/// `beta(n, N) = sum_{A, B in W_n} |mu(A cap tau^{-N-n} B) - mu(A) mu(B)|`.
pub fn weak_bernoulli(mu: &dyn CylinderMasses, n: usize, gap: usize) -> Result<f64> {
    let joint = mu.separated_joint(n, gap)?;
    let marg = mu.masses_at(n)?;
    let k = marg.len();
    let mut beta = 0.0;
    for i in 0..k {
        for j in 0..k {
            beta += (joint[i * k + j] - marg[i] * marg[j]).abs();
        }
    }
    Ok(beta)
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakBernoulliReport {
    pub n: usize,
    pub gaps: Vec<usize>,
    pub beta: Vec<f64>,
    pub nonincreasing: bool,
}

pub fn weak_bernoulli_report(mu: &dyn CylinderMasses, n: usize, gaps: &[usize]) -> Result<WeakBernoulliReport> {
    let beta = gaps.iter().map(|&g| weak_bernoulli(mu, n, g)).collect::<Result<Vec<_>>>()?;
    let nonincreasing = beta.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Ok(WeakBernoulliReport { n, gaps: gaps.to_vec(), beta, nonincreasing })
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropyReport {
    /// `H(xi^n)/n` for `n = 1..=n_max`.
    pub per_symbol: Vec<f64>,
    /// `H(xi^n) - H(xi^{n-1})`, the conditional entropy of the last symbol.
    pub increments: Vec<f64>,
    /// Last increment, the `1/n`-corrected limit of `H(xi^n)/n`.
    pub extrapolated: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<f64>,
}

pub fn entropy(mu: &dyn CylinderMasses, n_max: usize) -> Result<EntropyReport> {
    if n_max == 0 {
        return Err(Error::InvalidInput("entropy needs n_max >= 1".into()));
    }
    let mut per_symbol = Vec::with_capacity(n_max);
    let mut increments = Vec::with_capacity(n_max);
    let mut prev = 0.0;
    for n in 1..=n_max {
        let h = shannon(&mu.masses_at(n)?);
        per_symbol.push(h / n as f64);
        increments.push(h - prev);
        prev = h;
    }
    let extrapolated = *increments.last().expect("nonempty");
    Ok(EntropyReport { per_symbol, increments, extrapolated, exact: mu.entropy_rate() })
}

/// `sum_{a in W_n} mu[a] L(a)`.
fn weighted_sum(mu: &dyn CylinderMasses, l: &Quasimorphism, n: usize) -> Result<f64> {
    l.ensure_depth(n)?;
    let idx = mu.sft().index(n)?;
    let masses = mu.masses_at(n)?;
    Ok(idx.iter().zip(&masses).map(|(w, m)| if *m > 0.0 { m * l.eval(w) } else { 0.0 }).sum())
}

/// `(1/n) sum_{a in W_n} mu[a] L(a)`.
pub fn qm_integral(mu: &dyn CylinderMasses, l: &Quasimorphism, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("qm_integral needs n >= 1".into()));
    }
    Ok(weighted_sum(mu, l, n)? / n as f64)
}

/// `sum_{W_n} mu L - sum_{W_{n-1}} mu L`, free of the `O(1/n)` boundary term.
pub fn qm_integral_increment(mu: &dyn CylinderMasses, l: &Quasimorphism, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidInput("increment needs n >= 2".into()));
    }
    Ok(weighted_sum(mu, l, n)? - weighted_sum(mu, l, n - 1)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct VariationalRow {
    pub name: String,
    pub entropy: f64,
    pub integral: f64,
    pub total: f64,
    /// `P - (h + mu(L))`.
    pub shortfall: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VariationalTable {
    pub pressure: f64,
    pub n: usize,
    pub rows: Vec<VariationalRow>,
    /// Name of the row with the largest `h + mu(L)`.
    pub maximizer: String,
}

/// `h_mu + mu(L)` for each candidate against `pressure`. Entropy is the exact
/// rate when known, else the depth-`n` increment; the integral is the increment
/// estimator at depth `n`.
pub fn variational_check(
    l: &Quasimorphism,
    candidates: &[(&str, &dyn CylinderMasses)],
    n: usize,
    pressure: f64,
) -> Result<VariationalTable> {
    if n < 2 {
        return Err(Error::InvalidInput("variational check needs n >= 2".into()));
    }
    let mut rows = Vec::with_capacity(candidates.len());
    for (name, mu) in candidates {
        if !Arc::ptr_eq(mu.sft(), l.sft()) {
            return Err(Error::InvalidInput(format!("candidate {name} lives on another shift")));
        }
        let entropy = match mu.entropy_rate() {
            Some(h) => h,
            None => shannon(&mu.masses_at(n)?) - shannon(&mu.masses_at(n - 1)?),
        };
        let integral = qm_integral_increment(*mu, l, n)?;
        let total = entropy + integral;
        rows.push(VariationalRow { name: name.to_string(), entropy, integral, total, shortfall: pressure - total });
    }
    let maximizer = rows
        .iter()
        .fold(None::<&VariationalRow>, |best, r| match best {
            Some(b) if b.total >= r.total => Some(b),
            _ => Some(r),
        })
        .map(|r| r.name.clone())
        .unwrap_or_default();
    Ok(VariationalTable { pressure, n, rows, maximizer })
}

/// Empirical `D = sup exp|P_{n+m} - P_n - P_m|` over the tabulated range.
pub fn submultiplicativity_constant(estimate: &PressureEstimate) -> f64 {
    estimate.c.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lc::LocallyConstantFn;
    use crate::markov::{MarkovMeasure, MarkovPotential};
    use crate::measure::tv_distance;
    use crate::sft::{build_sft, Sft};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const PHI: f64 = 1.618033988749895;

    fn full2() -> Arc<Sft> {
        build_sft(&[vec![1, 1], vec![1, 1]]).unwrap()
    }

    fn golden() -> Arc<Sft> {
        build_sft(&[vec![1, 1], vec![1, 0]]).unwrap()
    }

    #[test]
    fn partition_examples() {
        let e = Exec::sequential();
        let s = full2();
        let zero = Quasimorphism::zero(&s);
        for n in 1..=10 {
            assert_relative_eq!(partition_function(&zero, n, &e).unwrap(), 2f64.powi(n as i32), max_relative = 1e-14);
        }
        let g = golden();
        assert_relative_eq!(partition_function(&Quasimorphism::zero(&g), 2, &e).unwrap(), 3.0, epsilon = 1e-13);
        let c01 = Quasimorphism::pattern_count(&s, vec![0, 1]).unwrap();
        assert_relative_eq!(partition_function(&c01, 2, &e).unwrap(), 3.0 + 1f64.exp(), epsilon = 1e-13);
    }

    #[test]
    fn pressure_examples() {
        let e = Exec::global();
        let s = full2();
        let p = pressure(&Quasimorphism::zero(&s), 12, &e).unwrap();
        assert!(p.contains(2f64.ln()));
        let g = golden();
        let p = pressure(&Quasimorphism::zero(&g), 18, &e).unwrap();
        assert!(p.contains(PHI.ln()));
        assert!(p.width() <= 0.01);
        assert_eq!(p.to_csv().lines().count(), 19);
        assert!(pressure(&Quasimorphism::zero(&g), 3, &e).is_err());
    }

    #[test]
    fn gibbs_examples() {
        let e = Exec::global();
        let s = full2();
        let mu = gibbs_measure(&Quasimorphism::zero(&s), 9, 1, &e).unwrap();
        assert_relative_eq!(mu.masses_at(1).unwrap()[0], 0.5, epsilon = 1e-14);

        let g = golden();
        let mu = gibbs_measure(&Quasimorphism::zero(&g), 12, 4, &e).unwrap();
        assert!(mu.invariance_defect() < 1e-14);
        assert_relative_eq!(mu.total_mass(), 1.0, epsilon = 1e-14);
        let parry = MarkovMeasure::parry(&g).unwrap();
        let gap = (1.0 / (PHI * PHI)).powi(12);
        assert!(tv_distance(&mu, &parry, 1).unwrap() <= 10.0 * gap);

        let f = LocallyConstantFn::from_fn(&s, 2, |w| (w == [0, 1]) as u8 as f64).unwrap();
        let l = Quasimorphism::potential_sum(f.clone());
        let approx = gibbs_measure(&l, 14, 2, &e).unwrap();
        let (exact, _) = MarkovMeasure::gibbs(&MarkovPotential::new(f).unwrap()).unwrap();
        assert!(tv_distance(&approx, &exact, 2).unwrap() < 1e-3);
        assert!(gibbs_measure(&l, 4, 5, &e).is_err());
    }

    #[test]
    fn ratio_and_mixing_reports() {
        let s = full2();
        let bern = MarkovMeasure::bernoulli(&s, &[0.5, 0.5]).unwrap();
        let r = gibbs_ratio_report(&bern, &Quasimorphism::zero(&s), 2f64.ln(), &[1, 2, 3]).unwrap();
        assert_relative_eq!(r.min_ratio, 1.0, epsilon = 1e-13);
        assert_relative_eq!(r.max_ratio, 1.0, epsilon = 1e-13);

        let g = golden();
        let parry = MarkovMeasure::parry(&g).unwrap();
        let r = gibbs_ratio_report(&parry, &Quasimorphism::zero(&g), PHI.ln(), &(1..=8).collect::<Vec<_>>()).unwrap();
        assert!(r.max_ratio <= 3.0 && r.min_ratio >= 1.0 / 3.0);

        let m = mixing_ratio_report(&bern, &[0], &[1], &[0, 1, 2]).unwrap();
        assert_eq!(m[0].ratio, 0.0);
        assert_relative_eq!(m[1].ratio, 1.0, epsilon = 1e-13);
        let m = mixing_ratio_report(&parry, &[0], &[0], &[0, 1, 2, 3, 4, 5, 6]).unwrap();
        let pi0 = parry.mass(&[0]).unwrap();
        assert_relative_eq!(m[0].ratio, 1.0 / pi0, epsilon = 1e-12);
        for w in m[1..].windows(2) {
            assert!((w[1].ratio - 1.0).abs() < (w[0].ratio - 1.0).abs());
        }
    }

    #[test]
    fn weak_bernoulli_examples() {
        let s = full2();
        let bern = MarkovMeasure::bernoulli(&s, &[0.3, 0.7]).unwrap();
        assert!(weak_bernoulli(&bern, 2, 0).unwrap() < 1e-14);
        let g = golden();
        let parry = MarkovMeasure::parry(&g).unwrap();
        let rep = weak_bernoulli_report(&parry, 2, &[0, 1, 2, 3, 4, 5, 6]).unwrap();
        assert!(rep.nonincreasing);
        let rate = 1.0 / (PHI * PHI);
        for (gap, b) in rep.gaps.iter().zip(&rep.beta) {
            assert!(*b <= 4.0 * rate.powi(*gap as i32 + 1) + 1e-14);
        }
    }

    #[test]
    fn entropy_and_integral_examples() {
        let s = full2();
        let bern = MarkovMeasure::bernoulli(&s, &[0.5, 0.5]).unwrap();
        let h = entropy(&bern, 6).unwrap();
        for v in &h.per_symbol {
            assert_relative_eq!(*v, 2f64.ln(), epsilon = 1e-14);
        }
        let g = golden();
        let parry = MarkovMeasure::parry(&g).unwrap();
        let h = entropy(&parry, 8).unwrap();
        assert_relative_eq!(h.extrapolated, PHI.ln(), epsilon = 1e-13);
        assert!(h.per_symbol.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        let point = CylinderMeasure::from_top(&s, 3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(entropy(&point, 3).unwrap().extrapolated, 0.0);

        let hom = Quasimorphism::letter_weights(&s, vec![1.0, -3.0]).unwrap();
        let skew = MarkovMeasure::bernoulli(&s, &[0.25, 0.75]).unwrap();
        for n in 1..=5 {
            assert_relative_eq!(qm_integral(&skew, &hom, n).unwrap(), 0.25 - 2.25, epsilon = 1e-13);
        }
        let c01 = Quasimorphism::pattern_count(&s, vec![0, 1]).unwrap();
        assert_relative_eq!(qm_integral_increment(&bern, &c01, 6).unwrap(), 0.25, epsilon = 1e-13);
        assert_relative_eq!(qm_integral(&bern, &c01, 8).unwrap(), 7.0 / 32.0, epsilon = 1e-13);
    }

    #[test]
    fn variational_examples() {
        let s = full2();
        let zero = Quasimorphism::zero(&s);
        let uniform = MarkovMeasure::bernoulli(&s, &[0.5, 0.5]).unwrap();
        let skew = MarkovMeasure::bernoulli(&s, &[0.3, 0.7]).unwrap();
        let approx = gibbs_measure(&zero, 10, 4, &Exec::sequential()).unwrap();
        let t = variational_check(
            &zero,
            &[("gibbs", &approx), ("parry", &uniform), ("bernoulli", &skew)],
            4,
            2f64.ln(),
        )
        .unwrap();
        assert!(t.rows[0].shortfall.abs() < 1e-12);
        let kl = 0.3 * 0.6f64.ln() + 0.7 * 1.4f64.ln();
        assert_relative_eq!(t.rows[2].shortfall, kl, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn memory_one_pressure_brackets_eigenvalue(w in proptest::collection::vec(-1.5f64..1.5, 4)) {
            let s = full2();
            let f = LocallyConstantFn::from_values(&s, 2, w.clone()).unwrap();
            let l = Quasimorphism::potential_sum(f);
            let p = pressure(&l, 14, &Exec::global()).unwrap();
            let m = nalgebra::Matrix2::new(w[0].exp(), w[1].exp(), w[2].exp(), w[3].exp());
            let ev = m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(p.contains(ev.ln()), "{:?} vs {}", p, ev.ln());
        }

        #[test]
        fn gibbs_is_shift_invariant_and_consistent(w in proptest::collection::vec(-1.0f64..1.0, 3), n in 4usize..11) {
            let g = golden();
            let f = LocallyConstantFn::from_values(&g, 2, w).unwrap();
            let l = Quasimorphism::potential_sum(f);
            let depth = n.min(4);
            let mu = gibbs_measure(&l, n, depth, &Exec::sequential()).unwrap();
            prop_assert!(mu.invariance_defect() < 1e-14);
            prop_assert!((mu.total_mass() - 1.0).abs() < 1e-13);
            let snap = CylinderMeasure::snapshot(&mu, depth - 1).unwrap();
            prop_assert!(snap.invariance_defect() < 1e-14);
        }

        #[test]
        fn partition_sums_are_quasimultiplicative(w in proptest::collection::vec(-1.0f64..1.0, 3)) {
            let g = golden();
            let f = LocallyConstantFn::from_values(&g, 2, w).unwrap();
            let l = Quasimorphism::potential_sum(f);
            let e = Exec::sequential();
            let z: Vec<f64> = (1..=12).map(|n| log_partition_function(&l, n, &e).unwrap()).collect();
            let d = (1..=6).flat_map(|n| (1..=6).map(move |m| (n, m)))
                .map(|(n, m)| (z[n + m - 1] - z[n - 1] - z[m - 1]).abs())
                .fold(0.0, f64::max);
            prop_assert!(d.is_finite() && d < 10.0);
        }
    }
}
