//! Weak Bowen potentials: extraction from measures, the Komlós construction,
//! Birkhoff-sum comparisons, the Cesàro coboundary solver and the Livšic tests
//! for quasicocycles.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::lc::LocallyConstantFn;
use crate::markov::{integral, project, MarkovMeasure};
use crate::measure::CylinderMasses;
use crate::qm::{compare_enclosures, homogenize, Interval, LivsicOptions, LivsicVerdict, Quasicocycle, Quasimorphism, Verdict};
use crate::sft::{render, Sft, Symbol, Word};

/// `phi^k(w) = log mu[w] - log mu[w_1..w_{k-1}]` on `W_k`.
pub fn potential_from_measure(mu: &dyn CylinderMasses, k: usize) -> Result<LocallyConstantFn> {
    if k == 0 {
        return Err(Error::InvalidInput("potential depth must be >= 1".into()));
    }
    let sft = mu.sft().clone();
    let fine = sft.index(k)?;
    let coarse = sft.index(k - 1)?;
    let top = mu.masses_at(k)?;
    let tail = mu.masses_at(k - 1)?;
    let mut values = Vec::with_capacity(fine.len());
    for (i, w) in fine.iter().enumerate() {
        let t = tail[coarse.position(&w[1..]).expect("suffix")];
        if !(top[i] > 0.0 && t > 0.0) {
            return Err(Error::ZeroMass { word: render(w) });
        }
        values.push(top[i].ln() - t.ln());
    }
    LocallyConstantFn::from_values(&sft, k, values)
}

/// Finite-depth approximants `phi^1..phi^k_max` of a weak Bowen potential.
#[derive(Clone, Debug)]
pub struct WeakBowenFn {
    pub tables: Vec<LocallyConstantFn>,
    pub bowen_estimate: f64,
}

impl WeakBowenFn {
    pub fn from_measure(mu: &dyn CylinderMasses, k_max: usize, bowen_depth: usize) -> Result<Self> {
        let tables = (1..=k_max)
            .map(|k| potential_from_measure(mu, k))
            .collect::<Result<Vec<_>>>()?;
        let top = tables.last().ok_or_else(|| Error::InvalidInput("k_max must be >= 1".into()))?;
        let bowen_estimate = bowen_norm_estimate(top, bowen_depth)?;
        Ok(WeakBowenFn { tables, bowen_estimate })
    }

    pub fn table(&self, k: usize) -> &LocallyConstantFn {
        &self.tables[k - 1]
    }

    pub fn max_depth(&self) -> usize {
        self.tables.len()
    }
}

/// `sup_w |sum_s exp(phi(s w)) - 1|` over `w` in `W_{k-1}`.
pub fn normalization_defect(phi: &LocallyConstantFn) -> Result<f64> {
    let k = phi.depth();
    if k == 0 {
        return Err(Error::InvalidInput("normalization needs depth >= 1".into()));
    }
    let sft = phi.sft();
    let fine = sft.index(k)?;
    let coarse = sft.index(k - 1)?;
    let mut sums = vec![0.0; coarse.len()];
    for (i, w) in fine.iter().enumerate() {
        sums[coarse.position(&w[1..]).expect("suffix")] += phi.values()[i].exp();
    }
    Ok(sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max))
}

/// Birkhoff sum of a table along `p(a)`: `sum_{i<n} phi(tau^i p(a))`.
pub fn periodic_birkhoff_sum(phi: &LocallyConstantFn, a: &[Symbol], n: usize) -> f64 {
    let k = phi.depth();
    let mut window = Vec::with_capacity(k);
    (0..n)
        .map(|i| {
            window.clear();
            window.extend((0..k).map(|j| a[(i + j) % a.len()]));
            phi.value(&window)
        })
        .sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct BirkhoffCheck {
    pub n: usize,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

/// `|S_n phi(p(a)) + n P - L(lift(a_0..a_{n-1}))|` for each sample point `p(a)`.
pub fn birkhoff_check(
    phi: &LocallyConstantFn,
    l: &Quasimorphism,
    ptop: f64,
    n: usize,
    points: &[Word],
) -> Result<BirkhoffCheck> {
    let sft = phi.sft();
    let mut residuals = Vec::with_capacity(points.len());
    let mut prefix = Vec::with_capacity(n);
    for a in points {
        if !sft.is_periodic(a) {
            return Err(Error::InvalidInput(format!("{} is not periodic", render(a))));
        }
        prefix.clear();
        prefix.extend((0..n).map(|i| a[i % a.len()]));
        let lifted = sft.lift(&prefix)?;
        let s = periodic_birkhoff_sum(phi, a, n);
        residuals.push((s + n as f64 * ptop - l.eval_periodic(&lifted)).abs());
    }
    let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
    Ok(BirkhoffCheck { n, residuals, max_residual })
}

/// Running sup over `n = 1..=n_max` of `|S_n phi(x) - S_n phi(y)|` for `x, y`
/// in a common depth-`n` cylinder. Entry `n - 1` covers lengths up to `n`.
pub fn bowen_norm_profile(phi: &LocallyConstantFn, n_max: usize) -> Result<Vec<f64>> {
    let sft = phi.sft();
    let k = phi.depth();
    let mut out = Vec::with_capacity(n_max);
    let mut sup: f64 = 0.0;
    for n in 1..=n_max {
        if k > 1 {
            // words of length n + k - 1 sharing a prefix of length n are contiguous
            let mut current: Option<Word> = None;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            sft.for_each_word(n + k - 1, false, |v| {
                if current.as_deref() != Some(&v[..n]) {
                    if current.is_some() {
                        sup = sup.max(hi - lo);
                    }
                    current = Some(v[..n].to_vec());
                    lo = f64::INFINITY;
                    hi = f64::NEG_INFINITY;
                }
                let s = phi.birkhoff_sum(v, n);
                lo = lo.min(s);
                hi = hi.max(s);
            })?;
            if current.is_some() {
                sup = sup.max(hi - lo);
            }
        }
        out.push(sup);
    }
    Ok(out)
}

/// Lower bound for the Bowen constant of `phi` from cylinders of length `<= n_max`.
pub fn bowen_norm_estimate(phi: &LocallyConstantFn, n_max: usize) -> Result<f64> {
    Ok(bowen_norm_profile(phi, n_max.max(1))?.last().copied().unwrap_or(0.0))
}

/// `zeta_n(x) = (1/n) sum_{k=1}^n [L(x_0..x_k) - L(x_1..x_k)]` on `W_{n+1}`.
pub fn komlos_zeta(l: &Quasimorphism, n: usize) -> Result<LocallyConstantFn> {
    if n == 0 {
        return Err(Error::InvalidInput("komlos_zeta needs n >= 1".into()));
    }
    l.ensure_depth(n + 1)?;
    LocallyConstantFn::from_fn(l.sft(), n + 1, |x| {
        (1..=n).map(|k| l.eval(&x[..=k]) - l.eval(&x[1..=k])).sum::<f64>() / n as f64
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct KomlosEstimate {
    pub n: usize,
    pub t: usize,
    pub deviation: f64,
    pub bound: f64,
}

/// `sup_x |S_T zeta_n(x) - L(x_0..x_{T-1})|` against
/// `delta (2T/n + 1 - T/n) + (T/n) sup_letters |L|`.
pub fn komlos_estimate_check(l: &Quasimorphism, n: usize, t: usize) -> Result<KomlosEstimate> {
    if t == 0 || t >= n {
        return Err(Error::InvalidInput("need 1 <= T < n".into()));
    }
    let zeta = komlos_zeta(l, n)?;
    let sft = l.sft();
    let mut deviation: f64 = 0.0;
    sft.for_each_word(t + n, false, |x| {
        let s = zeta.birkhoff_sum(x, t);
        deviation = deviation.max((s - l.eval(&x[..t])).abs());
    })?;
    let mut letters: f64 = 0.0;
    for s in 0..sft.alphabet_size() as Symbol {
        letters = letters.max(l.eval(&[s]).abs());
    }
    let (tf, nf) = (t as f64, n as f64);
    let bound = l.declared_defect() * (2.0 * tf / nf + 1.0 - tf / nf) + tf / nf * letters;
    Ok(KomlosEstimate { n, t, deviation, bound })
}

#[derive(Clone, Debug)]
pub struct KomlosPotential {
    pub potential: LocallyConstantFn,
    /// `sup` of successive Cesàro differences, one per averaging step.
    pub increments: Vec<f64>,
    /// `max(0, sup_a |S_|a| phi(p(a)) - L(a)| - delta)` over periodic words up to `check_len`.
    pub slack: f64,
}

/// Cesàro average of the depth-`depth` projections of `zeta_r`, `r` in `n_list`.
pub fn komlos_potential(
    l: &Quasimorphism,
    mu: &dyn CylinderMasses,
    n_list: &[usize],
    depth: usize,
    tol: f64,
    check_len: usize,
) -> Result<KomlosPotential> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("n_list must be nonempty and increasing".into()));
    }
    let sft = l.sft().clone();
    let mut avg: Option<LocallyConstantFn> = None;
    let mut increments = Vec::with_capacity(n_list.len());
    for (j, &r) in n_list.iter().enumerate() {
        let zeta = komlos_zeta(l, r)?;
        let proj = if zeta.depth() >= depth { project(&zeta, mu, depth)? } else { zeta.refine(depth)? };
        let next = match &avg {
            None => proj,
            Some(a) => {
                let w = 1.0 / (j + 1) as f64;
                a.combine(1.0 - w, &proj, w)?
            }
        };
        if let Some(a) = &avg {
            increments.push(next.sub(a)?.sup_norm());
        }
        avg = Some(next);
    }
    let potential = avg.expect("nonempty");
    if let Some(&last) = increments.last() {
        if last > tol {
            return Err(Error::NonConvergence(format!(
                "Cesàro increment {last:e} exceeds tolerance {tol:e}"
            )));
        }
    }
    let mut worst: f64 = 0.0;
    for n in 1..=check_len {
        for a in sft.periodic_words(n)? {
            let lhs = potential.cyclic_sum(&a);
            worst = worst.max((lhs - l.eval_periodic(&a)).abs());
        }
    }
    let slack = (worst - l.declared_defect()).max(0.0);
    Ok(KomlosPotential { potential, increments, slack })
}

#[derive(Clone, Debug)]
pub struct CoboundarySolution {
    pub u: LocallyConstantFn,
    /// `sup |u - u o tau - phi|` over words of length `depth + 1`.
    pub residual: f64,
    pub sup_u: f64,
    pub bowen_estimate: f64,
    /// Whether `|u|_inf <= 6 bowen_estimate`; a diagnostic, not a gate.
    pub within_bound: bool,
    pub terms: usize,
}

/// Depth-`depth` conditional expectation of the Cesàro average
/// `u_N = (1/N) sum_{k=1}^N S_k phi`, computed as `A - B/N` with
/// `A = sum_{j<N} K^j phi`, `B = sum_{j<N} j K^j phi` and `K` the one-step
/// conditional expectation operator of the chain.
pub fn coboundary_solve(
    phi: &LocallyConstantFn,
    mu: &MarkovMeasure,
    n_cesaro: u64,
    depth: usize,
) -> Result<CoboundarySolution> {
    let scale = phi.sup_norm().max(1.0);
    let mean = integral(phi, mu)?;
    if mean.abs() > 1e-10 * scale {
        return Err(Error::MeanNotZero { mean });
    }
    let sft = mu.sft().clone();
    let q = mu.memory();
    let d = depth.max(phi.depth()).max(q);
    let idx = sft.index(d)?;
    let states = mu.states();

    // K f(w) = sum_b P(w_{d-q..d} -> b) f(w_1..w_{d-1} b)
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(idx.len());
    let mut buf: Word = Vec::with_capacity(d + 1);
    for w in idx.iter() {
        let state = states.position(&w[d - q..]).expect("admissible");
        let row = mu
            .transitions(state)
            .into_iter()
            .map(|(b, p)| {
                buf.clear();
                buf.extend_from_slice(&w[1..]);
                buf.push(b);
                (idx.position(&buf).expect("admissible") as u32, p)
            })
            .collect();
        rows.push(row);
    }
    let phi_d = phi.refine(d)?;
    let mut term = phi_d.values().to_vec();
    let mut next = vec![0.0; term.len()];
    let mut a = vec![0.0; term.len()];
    let mut b = vec![0.0; term.len()];
    let mut j: u64 = 0;
    let mut decayed = false;
    let (mut best, mut stale) = (f64::INFINITY, 0usize);
    while j < n_cesaro {
        for i in 0..term.len() {
            a[i] += term[i];
            b[i] += j as f64 * term[i];
        }
        j += 1;
        for (o, row) in next.iter_mut().zip(&rows) {
            *o = row.iter().map(|&(c, p)| p * term[c as usize]).sum();
        }
        std::mem::swap(&mut term, &mut next);
        let sup = term.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup <= 1e-16 * scale {
            decayed = true;
            break;
        }
        if sup < best {
            best = sup;
            stale = 0;
        } else {
            stale += 1;
            // rounding floor reached
            if stale >= 50 && best <= 1e-13 * scale {
                decayed = true;
                break;
            }
        }
        if j > 10_000_000 {
            break;
        }
    }
    if !decayed && j < n_cesaro {
        return Err(Error::NonConvergence(format!("conditional terms did not decay after {j} steps")));
    }
    let n = n_cesaro as f64;
    let values: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y / n).collect();
    let u = LocallyConstantFn::from_values(&sft, d, values)?;
    let mut residual: f64 = 0.0;
    sft.for_each_word(d + 1, false, |w| {
        let r = u.value(&w[..d]) - u.value(&w[1..]) - phi.value(w);
        residual = residual.max(r.abs());
    })?;
    let sup_u = u.sup_norm();
    let bowen_estimate = bowen_norm_estimate(phi, d + 2)?;
    Ok(CoboundarySolution {
        u,
        residual,
        sup_u,
        bowen_estimate,
        within_bound: sup_u <= 6.0 * bowen_estimate + 1e-12 * scale,
        terms: j as usize,
    })
}

/// Per-symbol periodic average `lim B_n(p(a)) / n` of a quasicocycle.
pub fn periodic_average_cocycle(b: &Quasicocycle, a: &[Symbol], m_homog: usize) -> Result<Interval> {
    let sft = b.sft();
    if !sft.is_periodic(a) {
        return Err(Error::InvalidInput(format!("{} is not periodic", render(a))));
    }
    let len = a.len() as f64;
    if let Some(q) = b.source() {
        let i = homogenize(q, a, m_homog)?;
        return Ok(Interval { center: i.center / len, radius: i.radius / len });
    }
    let reps = b.n_max() / a.len();
    if reps == 0 {
        return Err(Error::DepthExceeded { requested: a.len(), available: b.n_max() });
    }
    let word: Word = a.iter().cycle().take(reps * a.len()).cloned().collect();
    let value = b.eval(&word, word.len())?;
    let k = reps as f64;
    Ok(Interval { center: value / (k * len), radius: b.declared_defect() / (k * len) })
}

/// Exact cyclic average `(1/|a|) S_|a| phi(p(a))` of a table.
pub fn periodic_average_table(phi: &LocallyConstantFn, a: &[Symbol]) -> Result<f64> {
    if !phi.sft().is_periodic(a) {
        return Err(Error::InvalidInput(format!("{} is not periodic", render(a))));
    }
    Ok(phi.cyclic_sum(a) / a.len() as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct QuasicocycleVerdict {
    #[serde(flatten)]
    pub verdict: LivsicVerdict,
    /// `sup_n |B_n - B'_n|_inf` over the tabulated range, when cohomologous.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sup_difference: Option<f64>,
    /// Empirical defect of `B - B'`, the right-hand side of the bounded-sum check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub difference_defect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_holds: Option<bool>,
}

/// Periodic-orbit test for cohomology of two quasicocycles.
pub fn livsic_quasicocycle_test(
    b: &Quasicocycle,
    c: &Quasicocycle,
    opts: LivsicOptions,
    exec: &Exec,
) -> Result<QuasicocycleVerdict> {
    if !Arc::ptr_eq(b.sft(), c.sft()) {
        return Err(Error::InvalidInput("quasicocycles over different shifts".into()));
    }
    let verdict = compare_enclosures(
        b.sft(),
        opts.n_max,
        opts.resolution,
        exec,
        |a| periodic_average_cocycle(b, a, opts.m_homog),
        |a| periodic_average_cocycle(c, a, opts.m_homog),
    )?;
    let mut out = QuasicocycleVerdict { verdict, sup_difference: None, difference_defect: None, bound_holds: None };
    if out.verdict.verdict == Verdict::Cohomologous {
        let n = b.n_max().min(c.n_max());
        let diffs = (1..=n)
            .map(|k| b.table(k)?.sub(c.table(k)?))
            .collect::<Result<Vec<_>>>()?;
        let sup = diffs.iter().map(|t| t.sup_norm()).fold(0.0, f64::max);
        let diff = Quasicocycle::from_tables(b.sft(), diffs, exec)?;
        let rhs = diff.bowen_estimate() + diff.defect_estimate();
        out.sup_difference = Some(sup);
        out.difference_defect = Some(rhs);
        out.bound_holds = Some(sup <= rhs + 1e-12);
    }
    Ok(out)
}

/// Tables `B_n^phi = E_mu[S_n phi | xi^n]` for `n = 1..=n_max`.
pub fn conditional_birkhoff_tables(
    phi: &LocallyConstantFn,
    mu: &dyn CylinderMasses,
    n_max: usize,
    exec: &Exec,
) -> Result<Quasicocycle> {
    let sft: Arc<Sft> = phi.sft().clone();
    let k = phi.depth();
    let mut tables = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let len = n + k.saturating_sub(1);
        let big = sft.index(len)?;
        let masses = mu.masses_at(len)?;
        let small = sft.index(n)?;
        let mut num = vec![0.0; small.len()];
        let mut den = vec![0.0; small.len()];
        for (i, v) in big.iter().enumerate() {
            let p = small.position(&v[..n]).expect("prefix");
            num[p] += masses[i] * phi.birkhoff_sum(v, n);
            den[p] += masses[i];
        }
        let mut values = Vec::with_capacity(small.len());
        for (p, w) in small.iter().enumerate() {
            if den[p] <= 0.0 {
                return Err(Error::ZeroMass { word: render(w) });
            }
            values.push(num[p] / den[p]);
        }
        tables.push(LocallyConstantFn::from_values(&sft, n, values)?);
    }
    Quasicocycle::from_tables(&sft, tables, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::MarkovPotential;
    use crate::qm::quasicocycle_of;
    use crate::sft::build_sft;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PHI: f64 = 1.618033988749895;

    fn full2() -> Arc<Sft> {
        build_sft(&[vec![1, 1], vec![1, 1]]).unwrap()
    }

    fn golden() -> Arc<Sft> {
        build_sft(&[vec![1, 1], vec![1, 0]]).unwrap()
    }

    #[test]
    fn bernoulli_potential_is_constant() {
        let s = full2();
        let mu = MarkovMeasure::bernoulli(&s, &[0.5, 0.5]).unwrap();
        for k in 1..=4 {
            let phi = potential_from_measure(&mu, k).unwrap();
            for v in phi.values() {
                assert_relative_eq!(*v, -(2f64.ln()), epsilon = 1e-14);
            }
            assert!(normalization_defect(&phi).unwrap() < 1e-14);
        }
    }

    #[test]
    fn golden_parry_backward_ratios() {
        let g = golden();
        let mu = MarkovMeasure::parry(&g).unwrap();
        let phi = potential_from_measure(&mu, 2).unwrap();
        // backward ratios mu[ab]/mu[b]
        assert_relative_eq!(phi.value(&[0, 0]), -PHI.ln(), epsilon = 1e-13);
        assert_relative_eq!(phi.value(&[0, 1]), 0.0, epsilon = 1e-13);
        assert_relative_eq!(phi.value(&[1, 0]), -2.0 * PHI.ln(), epsilon = 1e-13);
        assert!(normalization_defect(&phi).unwrap() < 1e-13);
    }

    #[test]
    fn bowen_estimates() {
        let g = golden();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let one = LocallyConstantFn::from_fn(&g, 1, |_| rng.random_range(-1.0..1.0)).unwrap();
        assert_eq!(bowen_norm_estimate(&one, 6).unwrap(), 0.0);
        let three = LocallyConstantFn::from_fn(&g, 3, |_| rng.random_range(-1.0..1.0)).unwrap();
        let profile = bowen_norm_profile(&three, 6).unwrap();
        assert!(profile.windows(2).all(|w| w[0] <= w[1]));
        assert!(profile[5] <= 2.0 * three.oscillation() + 1e-12);
    }

    #[test]
    fn komlos_examples() {
        let s = full2();
        let hom = Quasimorphism::letter_weights(&s, vec![0.5, -2.0]).unwrap();
        let z = komlos_zeta(&hom, 5).unwrap();
        for w in z.index().iter() {
            assert_relative_eq!(z.value(w), [0.5, -2.0][w[0] as usize], epsilon = 1e-14);
        }
        let c01 = Quasimorphism::pattern_count(&s, vec![0, 1]).unwrap();
        let z = komlos_zeta(&c01, 6).unwrap();
        for w in z.index().iter() {
            assert_relative_eq!(z.value(w), (w[..2] == [0, 1]) as u8 as f64, epsilon = 1e-14);
        }
        let e = komlos_estimate_check(&c01, 8, 3).unwrap();
        assert!(e.deviation <= e.bound + 1e-12);

        let mu = MarkovMeasure::bernoulli(&s, &[0.5, 0.5]).unwrap();
        let k = komlos_potential(&c01, &mu, &[2, 4, 6, 8], 2, 1e-12, 8).unwrap();
        assert_relative_eq!(k.potential.value(&[0, 1]), 1.0, epsilon = 1e-14);
        assert_relative_eq!(k.potential.value(&[1, 1]), 0.0, epsilon = 1e-14);
        assert_eq!(k.slack, 0.0);
    }

    #[test]
    fn coboundary_recovered_up_to_constant() {
        let g = golden();
        let mu = MarkovMeasure::parry(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = LocallyConstantFn::from_fn(&g, 3, |_| rng.random_range(-1.0..1.0)).unwrap();
        let phi = h.refine(4).unwrap().sub(&h.compose_shift().unwrap()).unwrap();
        let sol = coboundary_solve(&phi, &mu, 1_000_000_000_000, 3).unwrap();
        assert!(sol.residual <= 1e-8, "residual {}", sol.residual);
        let h4 = h.refine(sol.u.depth()).unwrap();
        let shift = sol.u.values()[0] - h4.values()[0];
        for (a, b) in sol.u.values().iter().zip(h4.values()) {
            assert_relative_eq!(a - b, shift, epsilon = 1e-9);
        }
        assert!(sol.within_bound);
    }

    #[test]
    fn non_coboundary_keeps_residual() {
        let s = full2();
        let mu = MarkovMeasure::bernoulli(&s, &[0.5, 0.5]).unwrap();
        let phi = LocallyConstantFn::from_fn(&s, 1, |w| (w[0] == 0) as u8 as f64 - 0.5).unwrap();
        let sol = coboundary_solve(&phi, &mu, 1_000_000, 3).unwrap();
        assert!(sol.residual > 0.1);
        let zero = LocallyConstantFn::from_fn(&s, 1, |_| 0.0).unwrap();
        let sol = coboundary_solve(&zero, &mu, 100, 2).unwrap();
        assert_eq!(sol.u.sup_norm(), 0.0);
        let off = LocallyConstantFn::from_fn(&s, 1, |_| 1.0).unwrap();
        assert!(matches!(coboundary_solve(&off, &mu, 100, 2), Err(Error::MeanNotZero { .. })));
    }

    #[test]
    fn periodic_averages() {
        let s = full2();
        let c01 = Quasimorphism::pattern_count(&s, vec![0, 1]).unwrap();
        let b = quasicocycle_of(&c01, 6, &Exec::sequential()).unwrap();
        let i = periodic_average_cocycle(&b, &[0, 1], 100).unwrap();
        assert_relative_eq!(i.center, 0.5, epsilon = 1e-14);
        let c = LocallyConstantFn::from_fn(&s, 2, |_| 0.7).unwrap();
        assert_relative_eq!(periodic_average_table(&c, &[0, 1, 1]).unwrap(), 0.7, epsilon = 1e-14);
        let phi = LocallyConstantFn::from_fn(&s, 2, |w| (2 * w[0] + w[1]) as f64).unwrap();
        // cyclic windows of 011: 01, 11, 10
        assert_relative_eq!(periodic_average_table(&phi, &[0, 1, 1]).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn quasicocycle_livsic_examples() {
        let s = full2();
        let exec = Exec::global();
        let c01 = Quasimorphism::pattern_count(&s, vec![0, 1]).unwrap();
        let c10 = Quasimorphism::pattern_count(&s, vec![1, 0]).unwrap();
        let b = quasicocycle_of(&c01, 10, &exec).unwrap();
        let c = quasicocycle_of(&c10, 10, &exec).unwrap();
        let v = livsic_quasicocycle_test(&b, &c, LivsicOptions::default(), &exec).unwrap();
        assert_eq!(v.verdict.verdict, Verdict::Cohomologous);
        assert_eq!(v.bound_holds, Some(true));
        let v = livsic_quasicocycle_test(&b, &b.scaled(2.0), LivsicOptions::default(), &exec).unwrap();
        assert_eq!(v.verdict.verdict, Verdict::Distinct);
    }

    #[test]
    fn conditional_tables_defect_bound() {
        let g = golden();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw = LocallyConstantFn::from_fn(&g, 2, |_| rng.random_range(-1.0..1.0)).unwrap();
        let (mu, _) = MarkovMeasure::gibbs(&MarkovPotential::new(raw.clone()).unwrap()).unwrap();
        let phi = LocallyConstantFn::from_fn(&g, 3, |_| rng.random_range(-1.0..1.0)).unwrap();
        let b = conditional_birkhoff_tables(&phi, &mu, 7, &Exec::sequential()).unwrap();
        let bowen = bowen_norm_estimate(&phi, 7).unwrap();
        assert!(b.defect_estimate() <= 6.0 * bowen + 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn normalization_holds_for_gibbs_chains(seed in 0u64..10_000, k in 1usize..6) {
            let g = golden();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = LocallyConstantFn::from_fn(&g, 3, |_| rng.random_range(-1.0..1.0)).unwrap();
            let (mu, _) = MarkovMeasure::gibbs(&MarkovPotential::new(raw).unwrap()).unwrap();
            let phi = potential_from_measure(&mu, k).unwrap();
            prop_assert!(normalization_defect(&phi).unwrap() <= 1e-12);
        }

        #[test]
        fn bowen_profile_monotone(seed in 0u64..10_000) {
            let s = full2();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phi = LocallyConstantFn::from_fn(&s, 3, |_| rng.random_range(-1.0..1.0)).unwrap();
            let p = bowen_norm_profile(&phi, 7).unwrap();
            prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn coboundary_sums_stay_bounded(seed in 0u64..10_000) {
            let s = full2();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = LocallyConstantFn::from_fn(&s, 2, |_| rng.random_range(-1.0..1.0)).unwrap();
            let phi = g.refine(3).unwrap().sub(&g.compose_shift().unwrap()).unwrap();
            let bowen = bowen_norm_estimate(&phi, 6).unwrap();
            for n in 1..=8 {
                for a in s.periodic_words(n).unwrap() {
                    prop_assert!(periodic_average_table(&phi, &a).unwrap().abs() < 1e-12);
                    for len in 1..=16 {
                        prop_assert!(periodic_birkhoff_sum(&phi, &a, len).abs() <= 6.0 * bowen + 1e-12);
                    }
                }
            }
        }
    }
}
