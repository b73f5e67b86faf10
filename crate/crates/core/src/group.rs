//! Free groups as the no-cancellation shift: reduction, Brooks counting
//! quasimorphisms, the conjugacy-class compactification and sphere statistics.
//!
//! Symbols `0..r` are the generators and `r..2r` their inverses. Words render
//! as `a, b, c, ...` with capitals for inverses.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::clt::{expected_value, trial_rng, KsThreshold, Observable};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::markov::MarkovMeasure;
use crate::measure::{CylinderMasses, CylinderMeasure};
use crate::qm::Quasimorphism;
use crate::sft::{build_sft, Sft, Symbol, Word};
use crate::stats::{dkw_band, ks_distance, mean, normal_cdf, variance as sample_variance};

#[derive(Clone, Debug)]
pub struct FreeGroup {
    rank: usize,
    sft: Arc<Sft>,
}

impl FreeGroup {
    pub fn new(rank: usize) -> Result<Self> {
        if !(2..=13).contains(&rank) {
            return Err(Error::InvalidInput(format!("rank must be in 2..=13, got {rank}")));
        }
        let d = 2 * rank;
        let rows: Vec<Vec<u8>> = (0..d)
            .map(|x| (0..d).map(|y| (y != (x + rank) % d) as u8).collect())
            .collect();
        Ok(FreeGroup { rank, sft: build_sft(&rows)? })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn sft(&self) -> &Arc<Sft> {
        &self.sft
    }

    pub fn inverse(&self, s: Symbol) -> Symbol {
        ((s as usize + self.rank) % (2 * self.rank)) as Symbol
    }

    pub fn inverse_word(&self, w: &[Symbol]) -> Word {
        w.iter().rev().map(|&s| self.inverse(s)).collect()
    }

    pub fn parse(&self, text: &str) -> Result<Word> {
        text.chars()
            .map(|c| {
                let (base, offset) = if c.is_ascii_lowercase() {
                    (b'a', 0)
                } else if c.is_ascii_uppercase() {
                    (b'A', self.rank)
                } else {
                    return Err(Error::InvalidInput(format!("bad letter {c:?}")));
                };
                let i = (c as u8 - base) as usize;
                if i >= self.rank {
                    return Err(Error::InvalidInput(format!("letter {c:?} outside rank {}", self.rank)));
                }
                Ok((i + offset) as Symbol)
            })
            .collect()
    }

    pub fn render(&self, w: &[Symbol]) -> String {
        w.iter()
            .map(|&s| {
                let s = s as usize;
                if s < self.rank {
                    (b'a' + s as u8) as char
                } else {
                    (b'A' + (s - self.rank) as u8) as char
                }
            })
            .collect()
    }

    /// Free reduction: cancels every `x x^{-1}`.
    pub fn reduce(&self, w: &[Symbol]) -> Word {
        let mut out: Word = Vec::with_capacity(w.len());
        for &s in w {
            if out.last() == Some(&self.inverse(s)) {
                out.pop();
            } else {
                out.push(s);
            }
        }
        out
    }

    /// Free reduction followed by cancellation across the wrap.
    pub fn cyclic_reduce(&self, w: &[Symbol]) -> Word {
        let r = self.reduce(w);
        let (mut i, mut j) = (0, r.len());
        while j - i >= 2 && r[j - 1] == self.inverse(r[i]) {
            i += 1;
            j -= 1;
        }
        r[i..j].to_vec()
    }

    /// Brooks counting quasimorphism `h_w = occ(w) - occ(w^{-1})`.
    pub fn brooks(&self, w: &[Symbol]) -> Result<Quasimorphism> {
        if w.is_empty() || self.reduce(w).len() != w.len() {
            return Err(Error::InvalidInput(format!("pattern {} is not a reduced nonempty word", self.render(w))));
        }
        if w.len() == 1 {
            let mut weights = vec![0.0; 2 * self.rank];
            weights[w[0] as usize] = 1.0;
            weights[self.inverse(w[0]) as usize] = -1.0;
            return Quasimorphism::letter_weights(&self.sft, weights);
        }
        Quasimorphism::signed_pattern_count(&self.sft, w.to_vec(), self.inverse_word(w))
    }

    /// `#S_n = 2r (2r - 1)^{n-1}`.
    pub fn sphere_size(&self, n: usize) -> u128 {
        if n == 0 {
            return 1;
        }
        let d = 2 * self.rank as u128;
        (1..n).fold(d, |acc, _| acc.saturating_mul(d - 1))
    }

    /// Uniform element of the sphere of radius `n`.
    pub fn sample_sphere<R: Rng>(&self, n: usize, rng: &mut R) -> Word {
        let d = 2 * self.rank;
        let mut out = Vec::with_capacity(n);
        if n == 0 {
            return out;
        }
        let mut last = rng.random_range(0..d) as Symbol;
        out.push(last);
        for _ in 1..n {
            // uniform over the 2r - 1 letters other than last^{-1}
            let skip = self.inverse(last) as usize;
            let mut k = rng.random_range(0..d - 1);
            if k >= skip {
                k += 1;
            }
            last = k as Symbol;
            out.push(last);
        }
        out
    }

    pub fn parry(&self) -> Result<MarkovMeasure> {
        MarkovMeasure::parry(&self.sft)
    }
}

/// `count` uniform sphere samples, sample `i` drawn from stream `(seed, i)`.
pub fn sphere_sample(group: &FreeGroup, n: usize, count: usize, seed: u64, exec: &Exec) -> Result<Vec<Word>> {
    if n == 0 {
        return Err(Error::InvalidInput("sphere radius must be >= 1".into()));
    }
    Ok(exec.map(count, |i| group.sample_sphere(n, &mut trial_rng(seed, i as u64))))
}

#[derive(Clone, Debug, Serialize)]
pub struct CompactificationPoint {
    pub n: usize,
    /// Number of cyclically reduced words of length at most `n`.
    pub words: u128,
    pub tv: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompactificationReport {
    pub rank: usize,
    pub depth: usize,
    pub points: Vec<CompactificationPoint>,
    pub decreasing: bool,
}

/// Depth-`depth` masses of the uniform measure on cyclically reduced words of
/// length at most `n`, each word spread over its cyclic windows.
///
/// For `m >= depth` the number of length-`m` cyclic words with window `w` at the
/// origin is the number of closed paths `(R^{m-depth+1})_{w_last, w_first}`;
/// shorter lengths are enumerated.
pub fn cyclic_word_masses(group: &FreeGroup, n: usize, depth: usize) -> Result<CylinderMeasure> {
    if depth == 0 || n == 0 {
        return Err(Error::InvalidInput("need n >= 1 and depth >= 1".into()));
    }
    let sft = group.sft();
    let idx = sft.index(depth)?;
    let d = sft.alphabet_size();
    let mut counts = vec![0u128; idx.len()];
    let mut total = 0u128;
    // rotation invariance: counting the window at the origin suffices
    for m in 1..n.min(depth - 1) + 1 {
        for a in sft.periodic_words(m)? {
            counts[idx.cyclic_position(&a, 0).expect("periodic")] += 1;
            total += 1;
        }
    }
    let r = sft.matrix();
    let mut power: Vec<Vec<u128>> = (0..d).map(|i| (0..d).map(|j| (i == j) as u128).collect()).collect();
    let step = |p: &Vec<Vec<u128>>| -> Vec<Vec<u128>> {
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| (0..d).fold(0u128, |acc, k| acc.saturating_add(p[i][k].saturating_mul(r[k][j] as u128))))
                    .collect()
            })
            .collect()
    };
    // power = R^{m - depth + 1}
    for _m in depth..=n {
        power = step(&power);
        for (i, w) in idx.iter().enumerate() {
            let c = power[w[depth - 1] as usize][w[0] as usize];
            counts[i] = counts[i].saturating_add(c);
            total = total.saturating_add(c);
        }
    }
    if total == 0 {
        return Err(Error::InvalidInput("no cyclic words in range".into()));
    }
    let masses = counts.iter().map(|&c| c as f64 / total as f64).collect();
    CylinderMeasure::from_top(sft, depth, masses)
}

/// The same masses by direct enumeration of cyclic words.
pub fn cyclic_word_masses_enumerated(group: &FreeGroup, n: usize, depth: usize) -> Result<CylinderMeasure> {
    let sft = group.sft();
    let idx = sft.index(depth)?;
    let mut masses = vec![0.0; idx.len()];
    let mut words = 0u64;
    for m in 1..=n {
        sft.for_each_word(m, true, |a| {
            for start in 0..m {
                masses[idx.cyclic_position(a, start).expect("periodic")] += 1.0 / m as f64;
            }
            words += 1;
        })?;
    }
    for x in &mut masses {
        *x /= words as f64;
    }
    CylinderMeasure::from_top(sft, depth, masses)
}

/// Number of cyclic words of length at most `n`.
fn cyclic_word_total(sft: &Sft, n: usize) -> u128 {
    (1..=n).map(|m| sft.periodic_count(m)).fold(0u128, u128::saturating_add)
}

/// TV distance at `depth` between the cyclic-word pushforwards and the Parry measure.
pub fn compactification_experiment(group: &FreeGroup, ns: &[usize], depth: usize) -> Result<CompactificationReport> {
    let parry = group.parry()?;
    let reference = parry.masses_at(depth)?;
    let mut points = Vec::with_capacity(ns.len());
    for &n in ns {
        let nu = cyclic_word_masses(group, n, depth)?;
        let masses = nu.masses_at(depth)?;
        let tv = 0.5 * masses.iter().zip(&reference).map(|(a, b)| (a - b).abs()).sum::<f64>();
        points.push(CompactificationPoint { n, words: cyclic_word_total(group.sft(), n), tv });
    }
    let decreasing = points.windows(2).all(|w| w[1].tv < w[0].tv);
    Ok(CompactificationReport { rank: group.rank(), depth, points, decreasing })
}

#[derive(Clone, Debug, Serialize)]
pub struct SphericalReport {
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    pub sigma2: f64,
    pub mean_statistic: f64,
    pub mean_standard_error: f64,
    pub ks: f64,
    pub dkw_band: f64,
    pub threshold: f64,
    pub pass: bool,
    #[serde(skip)]
    pub statistics: Vec<f64>,
}

fn spherical_report(
    obs: &Observable,
    n: usize,
    count: usize,
    seed: u64,
    threshold: KsThreshold,
    statistics: Vec<f64>,
) -> SphericalReport {
    let ks = ks_distance(&statistics, normal_cdf);
    let limit = threshold.value(count);
    SphericalReport {
        n,
        count,
        seed,
        sigma2: obs.sigma2(),
        mean_statistic: mean(&statistics),
        mean_standard_error: (sample_variance(&statistics) / count as f64).sqrt(),
        ks,
        dkw_band: dkw_band(count, threshold.alpha),
        threshold: limit,
        pass: ks <= limit,
        statistics,
    }
}

/// `(L(g) - E L) / (sigma sqrt n)` for `g` uniform on the sphere of radius `n`.
pub fn spherical_clt(
    group: &FreeGroup,
    l: &Quasimorphism,
    n: usize,
    count: usize,
    seed: u64,
    threshold: KsThreshold,
    exec: &Exec,
) -> Result<SphericalReport> {
    if n == 0 || count < 2 {
        return Err(Error::InvalidInput("need n >= 1 and count >= 2".into()));
    }
    let parry = group.parry()?;
    let obs = Observable::new(l, &parry)?;
    let sigma = obs.require_nondegenerate()?;
    let norm = sigma * (n as f64).sqrt();
    let center = expected_value(l, &parry, n)?;
    let statistics = exec.map(count, |i| {
        let g = group.sample_sphere(n, &mut trial_rng(seed, i as u64));
        (l.eval(&g) - center) / norm
    });
    Ok(spherical_report(&obs, n, count, seed, threshold, statistics))
}

/// The same statistic along rays drawn from the Parry chain.
pub fn boundary_ray_clt(
    group: &FreeGroup,
    l: &Quasimorphism,
    n: usize,
    count: usize,
    seed: u64,
    threshold: KsThreshold,
    exec: &Exec,
) -> Result<SphericalReport> {
    if n == 0 || count < 2 {
        return Err(Error::InvalidInput("need n >= 1 and count >= 2".into()));
    }
    let parry = group.parry()?;
    let obs = Observable::new(l, &parry)?;
    let sigma = obs.require_nondegenerate()?;
    let norm = sigma * (n as f64).sqrt();
    let center = expected_value(l, &parry, n)?;
    let statistics = exec.map(count, |i| {
        let ray = parry.sample(n, &mut trial_rng(seed, i as u64));
        (l.eval(&ray) - center) / norm
    });
    Ok(spherical_report(&obs, n, count, seed, threshold, statistics))
}
