//! Markov potentials and their exact transfer-operator calculus.
//!
//! A potential of memory `s` is a table on `W_{s+1}`. The transfer operator is
//! `(R f)(x) = sum_{a : a x admissible} exp(phi(a x_0..x_{s-1})) f(a x)`, and a
//! potential is normalized when `R 1 = 1`. A normalized potential of memory
//! `q >= 1` defines a stationary chain on `W_q` whose cylinder masses satisfy
//! `mu[a w] = exp(phi(a w)) mu[w]` for `|w| >= q`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lc::LocallyConstantFn;
use crate::measure::CylinderMasses;
use crate::sft::{render, CylinderIndex, Sft, Symbol, Word};

const POWER_ITERATION_CAP: usize = 1_000_000;
const DENSE_SOLVE_LIMIT: usize = 4096;

/// Locally constant potential of memory `s`, stored on `W_{s+1}`.
#[derive(Clone, Debug)]
pub struct MarkovPotential {
    table: LocallyConstantFn,
}

impl MarkovPotential {
    pub fn new(table: LocallyConstantFn) -> Result<Self> {
        if table.depth() == 0 {
            return Err(Error::InvalidInput("a potential needs depth >= 1".into()));
        }
        Ok(MarkovPotential { table })
    }

    pub fn zero(sft: &Arc<Sft>) -> Result<Self> {
        Self::new(LocallyConstantFn::from_fn(sft, 1, |_| 0.0)?)
    }

    pub fn memory(&self) -> usize {
        self.table.depth() - 1
    }

    pub fn table(&self) -> &LocallyConstantFn {
        &self.table
    }

    pub fn sft(&self) -> &Arc<Sft> {
        self.table.sft()
    }

    /// `sup_w |sum_a exp(phi(a w)) - 1|` over `w` in `W_{max(s,1)}`.
    pub fn normalization_defect(&self) -> Result<f64> {
        let op = TransferOperator::new(self);
        let ones = LocallyConstantFn::constant(self.sft(), 1.0)?;
        Ok(op.apply(&ones)?.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max))
    }

    pub fn is_normalized(&self, tol: f64) -> Result<bool> {
        Ok(self.normalization_defect()? <= tol)
    }
}

/// `R` for a fixed potential, acting on locally constant functions.
#[derive(Clone, Debug)]
pub struct TransferOperator {
    weight: LocallyConstantFn,
}

impl TransferOperator {
    pub fn new(phi: &MarkovPotential) -> Self {
        TransferOperator { weight: phi.table.map(f64::exp) }
    }

    pub fn memory(&self) -> usize {
        self.weight.depth() - 1
    }

    /// Depth of `R f` for `f` of depth `m`.
    pub fn output_depth(&self, m: usize) -> usize {
        self.memory().max(m.saturating_sub(1)).max(1)
    }

    pub fn apply(&self, f: &LocallyConstantFn) -> Result<LocallyConstantFn> {
        let sft = self.weight.sft();
        let m = f.depth();
        let s1 = self.weight.depth();
        let r = self.output_depth(m);
        let mut buf: Word = Vec::with_capacity(r + 1);
        LocallyConstantFn::from_fn(sft, r, |w| {
            let mut total = 0.0;
            for a in 0..sft.alphabet_size() as Symbol {
                if sft.allowed(a, w[0]) {
                    buf.clear();
                    buf.push(a);
                    buf.extend_from_slice(w);
                    total += self.weight.value(&buf[..s1]) * f.value(&buf[..m]);
                }
            }
            total
        })
    }

    /// Sparse matrix of `R` on `LC_depth`, valid when `depth >= max(s, 1)`.
    pub fn matrix(&self, depth: usize) -> Result<SparseRows> {
        let sft = self.weight.sft();
        if depth < self.output_depth(depth) {
            return Err(Error::InvalidInput(format!(
                "transfer operator does not preserve depth {depth}"
            )));
        }
        let idx = sft.index(depth)?;
        let s1 = self.weight.depth();
        let mut rows = Vec::with_capacity(idx.len());
        let mut buf: Word = Vec::with_capacity(depth + 1);
        for w in idx.iter() {
            let mut row = Vec::new();
            for a in 0..sft.alphabet_size() as Symbol {
                if sft.allowed(a, w[0]) {
                    buf.clear();
                    buf.push(a);
                    buf.extend_from_slice(w);
                    let col = idx.position(&buf[..depth]).expect("admissible");
                    row.push((col as u32, self.weight.value(&buf[..s1])));
                }
            }
            rows.push(row);
        }
        Ok(SparseRows { rows })
    }
}

/// Row-sparse square matrix.
#[derive(Clone, Debug)]
pub struct SparseRows {
    rows: Vec<Vec<(u32, f64)>>,
}

impl SparseRows {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(c, v)| v * x[c as usize]).sum();
        }
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.rows.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[(i, c as usize)] += v;
            }
        }
        m
    }
}

/// Output of [`normalize_potential`].
#[derive(Clone, Debug)]
pub struct NormalizedPotential {
    pub potential: MarkovPotential,
    pub lambda: f64,
    /// Positive eigenfunction of the unnormalized operator on `W_{max(s,1)}`.
    pub eigenfunction: LocallyConstantFn,
    pub iterations: usize,
}

impl NormalizedPotential {
    pub fn log_lambda(&self) -> f64 {
        self.lambda.ln()
    }
}

/// `phi' = phi + log h - log h o tau - log lambda` with `R_phi h = lambda h`.
pub fn normalize_potential(phi: &MarkovPotential) -> Result<NormalizedPotential> {
    let sft = phi.sft().clone();
    let op = TransferOperator::new(phi);
    let q = phi.memory().max(1);
    let mat = op.matrix(q)?;
    let n = mat.dim();
    let mut h = vec![1.0; n];
    let mut next = vec![0.0; n];
    let mut lambda = f64::NAN;
    let mut iterations = 0;
    let mut converged = false;
    let mut best_gap = f64::INFINITY;
    let mut since_best = 0;
    while iterations < POWER_ITERATION_CAP {
        iterations += 1;
        mat.mul(&h, &mut next);
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for (a, b) in next.iter().zip(&h) {
            let r = a / b;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if !(lo > 0.0 && hi.is_finite()) {
            return Err(Error::NumericalFailure("transfer matrix iterate lost positivity".into()));
        }
        let scale = next.iter().cloned().fold(0.0, f64::max);
        for (a, b) in h.iter_mut().zip(&next) {
            *a = b / scale;
        }
        lambda = 0.5 * (lo + hi);
        let gap = (hi - lo) / hi;
        if gap <= 1e-15 {
            converged = true;
            break;
        }
        // rounding floor: accept once the gap stops shrinking
        if gap < best_gap {
            best_gap = gap;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 200 && best_gap <= 1e-13 {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "power iteration did not converge in {POWER_ITERATION_CAP} steps"
        )));
    }
    let eigenfunction = LocallyConstantFn::from_values(&sft, q, h)?;
    let log_lambda = lambda.ln();
    let table = LocallyConstantFn::from_fn(&sft, q + 1, |w| {
        phi.table.value(w) + eigenfunction.value(&w[..q]).ln()
            - eigenfunction.value(&w[1..]).ln()
            - log_lambda
    })?;
    let potential = MarkovPotential::new(table)?;
    let defect = potential.normalization_defect()?;
    if defect > 1e-12 {
        return Err(Error::NumericalFailure(format!("normalization defect {defect:e} after convergence")));
    }
    Ok(NormalizedPotential { potential, lambda, eigenfunction, iterations })
}

#[derive(Clone, Debug)]
struct Step {
    symbol: Symbol,
    next: u32,
    prob: f64,
    cumulative: f64,
}

/// Stationary chain of a normalized potential.
#[derive(Debug)]
pub struct MarkovMeasure {
    sft: Arc<Sft>,
    potential: MarkovPotential,
    states: Arc<CylinderIndex>,
    stationary: Vec<f64>,
    stationary_cumulative: Vec<f64>,
    steps: Vec<Vec<Step>>,
    cache: Mutex<HashMap<usize, Arc<Vec<f64>>>>,
}

impl MarkovMeasure {
    /// Chain of a normalized potential (memory 0 is promoted to memory 1).
    pub fn from_normalized(phi: &MarkovPotential) -> Result<Self> {
        let defect = phi.normalization_defect()?;
        if defect > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "potential is not normalized (defect {defect:e})"
            )));
        }
        let sft = phi.sft().clone();
        let q = phi.memory().max(1);
        let table = phi.table.refine(q + 1)?;
        let states = sft.index(q)?;
        let n = states.len();

        // K[u][v] = exp(phi(u b)) with v = u[1..] b is column-stochastic; pi = K pi
        let mut k_rows: Vec<Vec<(u32, Symbol, f64)>> = Vec::with_capacity(n);
        let mut buf: Word = Vec::with_capacity(q + 1);
        for u in states.iter() {
            let mut row = Vec::new();
            for &b in sft.successors(u[q - 1]) {
                buf.clear();
                buf.extend_from_slice(u);
                buf.push(b);
                let v = states.position(&buf[1..]).expect("admissible");
                row.push((v as u32, b, table.value(&buf).exp()));
            }
            k_rows.push(row);
        }
        let pi = stationary_vector(&k_rows, n)?;

        let mut steps = Vec::with_capacity(n);
        for (u, row) in k_rows.iter().enumerate() {
            let mut acc = 0.0;
            let mut out: Vec<Step> = row
                .iter()
                .map(|&(v, b, w)| {
                    let prob = w * pi[v as usize] / pi[u];
                    acc += prob;
                    Step { symbol: b, next: v, prob, cumulative: acc }
                })
                .collect();
            // exact 1 at the end so that sampling never falls off the row
            if let Some(last) = out.last_mut() {
                last.cumulative = 1.0;
            }
            steps.push(out);
        }
        let mut acc = 0.0;
        let mut stationary_cumulative: Vec<f64> = pi
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = stationary_cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(MarkovMeasure {
            sft,
            potential: MarkovPotential::new(table)?,
            states,
            stationary: pi,
            stationary_cumulative,
            steps,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Product measure with letter probabilities `p` on the full shift.
    pub fn bernoulli(sft: &Arc<Sft>, p: &[f64]) -> Result<Self> {
        if !sft.is_full_shift() {
            return Err(Error::InvalidInput("Bernoulli measures need the full shift".into()));
        }
        if p.len() != sft.alphabet_size() || p.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidInput("letter probabilities must be positive, one per symbol".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("letter probabilities sum to {total}")));
        }
        let table = LocallyConstantFn::from_fn(sft, 1, |w| p[w[0] as usize].ln())?;
        Self::from_normalized(&MarkovPotential::new(table)?)
    }

    /// Measure of maximal entropy.
    pub fn parry(sft: &Arc<Sft>) -> Result<Self> {
        let n = normalize_potential(&MarkovPotential::zero(sft)?)?;
        Self::from_normalized(&n.potential)
    }

    /// Equilibrium state of an arbitrary Markov potential.
    pub fn gibbs(phi: &MarkovPotential) -> Result<(Self, NormalizedPotential)> {
        let n = normalize_potential(phi)?;
        Ok((Self::from_normalized(&n.potential)?, n))
    }

    /// Memory of the normalized potential (at least 1).
    pub fn memory(&self) -> usize {
        self.states.depth()
    }

    pub fn potential(&self) -> &MarkovPotential {
        &self.potential
    }

    pub fn states(&self) -> &Arc<CylinderIndex> {
        &self.states
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// `P(u -> u[1..] b)` for each state `u`, as `(b, probability)`.
    pub fn transitions(&self, state: usize) -> Vec<(Symbol, f64)> {
        self.steps[state].iter().map(|s| (s.symbol, s.prob)).collect()
    }

    /// Dense forward kernel on the state space.
    pub fn kernel(&self) -> DMatrix<f64> {
        let n = self.states.len();
        let mut m = DMatrix::zeros(n, n);
        for (u, row) in self.steps.iter().enumerate() {
            for s in row {
                m[(u, s.next as usize)] += s.prob;
            }
        }
        m
    }

    /// Largest modulus among the non-Perron eigenvalues of the kernel.
    pub fn second_eigenvalue(&self) -> f64 {
        let n = self.states.len();
        if n <= 1 {
            return 0.0;
        }
        let mut moduli: Vec<f64> = self.kernel().complex_eigenvalues().iter().map(|z| z.norm()).collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        moduli[1].min(1.0)
    }

    /// `max_u |sum_v pi(u) P(u, v) - pi(v)|`.
    pub fn stationarity_defect(&self) -> f64 {
        let mut pushed = vec![0.0; self.stationary.len()];
        for (u, row) in self.steps.iter().enumerate() {
            for s in row {
                pushed[s.next as usize] += self.stationary[u] * s.prob;
            }
        }
        pushed
            .iter()
            .zip(&self.stationary)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn compute_masses(&self, depth: usize) -> Result<Vec<f64>> {
        let q = self.memory();
        if depth == q {
            return Ok(self.stationary.clone());
        }
        let idx = self.sft.index(depth)?;
        if depth < q {
            let fine = self.states.clone();
            let mut out = vec![0.0; idx.len()];
            for (i, w) in fine.iter().enumerate() {
                out[idx.position(&w[..depth]).expect("prefix")] += self.stationary[i];
            }
            return Ok(out);
        }
        let tail = self.masses_at(depth - 1)?;
        let tail_idx = self.sft.index(depth - 1)?;
        let table = &self.potential.table;
        Ok(idx
            .iter()
            .map(|w| table.value(&w[..q + 1]).exp() * tail[tail_idx.position(&w[1..]).expect("suffix")])
            .collect())
    }

    /// `P^steps` on the state space, dense.
    fn kernel_power(&self, steps: usize) -> DMatrix<f64> {
        let n = self.states.len();
        let mut m = DMatrix::identity(n, n);
        for _ in 0..steps {
            let mut next = DMatrix::zeros(n, n);
            for (u, row) in self.steps.iter().enumerate() {
                for s in row {
                    let v = s.next as usize;
                    for i in 0..n {
                        next[(i, v)] += m[(i, u)] * s.prob;
                    }
                }
            }
            m = next;
        }
        m
    }

    /// Inverse-CDF draw of the initial state.
    fn draw_state<R: Rng>(&self, rng: &mut R) -> usize {
        let x: f64 = rng.random();
        self.stationary_cumulative
            .partition_point(|&c| c <= x)
            .min(self.stationary.len() - 1)
    }

    /// Stationary path of length `n`.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Word {
        let mut out = Vec::with_capacity(n);
        self.sample_into(n, rng, |s| out.push(s));
        out
    }

    /// Stream a stationary path of length `n` symbol by symbol.
    pub fn sample_into<R: Rng, F: FnMut(Symbol)>(&self, n: usize, rng: &mut R, mut emit: F) {
        let mut state = self.draw_state(rng);
        let start = self.states.word(state);
        for &s in start.iter().take(n) {
            emit(s);
        }
        for _ in self.memory()..n {
            let row = &self.steps[state];
            let x: f64 = rng.random();
            let k = row.partition_point(|s| s.cumulative <= x).min(row.len() - 1);
            emit(row[k].symbol);
            state = row[k].next as usize;
        }
    }
}

fn stationary_vector(k_rows: &[Vec<(u32, Symbol, f64)>], n: usize) -> Result<Vec<f64>> {
    let mut pi = if n <= DENSE_SOLVE_LIMIT {
        // (K - I) pi = 0 with the last equation replaced by sum(pi) = 1
        let mut a = DMatrix::<f64>::zeros(n, n);
        for (u, row) in k_rows.iter().enumerate() {
            for &(v, _, w) in row {
                a[(u, v as usize)] += w;
            }
            a[(u, u)] -= 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(n);
        rhs[n - 1] = 1.0;
        a.lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NumericalFailure("stationary system is singular".into()))?
            .iter()
            .cloned()
            .collect::<Vec<f64>>()
    } else {
        let mut pi = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        let mut converged = false;
        for _ in 0..POWER_ITERATION_CAP {
            for (u, row) in k_rows.iter().enumerate() {
                next[u] = row.iter().map(|&(v, _, w)| w * pi[v as usize]).sum();
            }
            let s: f64 = next.iter().sum();
            let diff = next.iter().zip(&pi).map(|(a, b)| (a / s - b).abs()).fold(0.0, f64::max);
            for (p, x) in pi.iter_mut().zip(&next) {
                *p = x / s;
            }
            if diff < 1e-16 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NumericalFailure("stationary iteration did not converge".into()));
        }
        pi
    };
    if pi.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::NumericalFailure("stationary vector is not positive".into()));
    }
    let s: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= s;
    }
    Ok(pi)
}

impl CylinderMasses for MarkovMeasure {
    fn sft(&self) -> &Arc<Sft> {
        &self.sft
    }

    fn max_depth(&self) -> Option<usize> {
        None
    }

    fn masses_at(&self, depth: usize) -> Result<Vec<f64>> {
        if let Some(m) = self.cache.lock().expect("mass cache").get(&depth) {
            return Ok(m.as_ref().clone());
        }
        let m = Arc::new(self.compute_masses(depth)?);
        self.cache.lock().expect("mass cache").insert(depth, m.clone());
        Ok(m.as_ref().clone())
    }

    fn mass(&self, word: &[Symbol]) -> Result<f64> {
        let q = self.memory();
        if word.len() <= q {
            let idx = self.sft.index(word.len())?;
            let m = self.masses_at(word.len())?;
            return Ok(idx.position(word).map(|i| m[i]).unwrap_or(0.0));
        }
        if !self.sft.is_admissible(word) {
            return Ok(0.0);
        }
        let n = word.len();
        let mut total = self.stationary[self.states.position(&word[n - q..]).expect("admissible")];
        for i in 0..n - q {
            total *= self.potential.table.value(&word[i..i + q + 1]).exp();
        }
        Ok(total)
    }

    fn separated_mass(&self, a: &[Symbol], gap: usize, b: &[Symbol]) -> Result<f64> {
        let q = self.memory();
        if a.len() < q || b.len() < q {
            let depth = a.len() + gap + b.len();
            let idx = self.sft.index(depth)?;
            let masses = self.masses_at(depth)?;
            return Ok(idx
                .iter()
                .enumerate()
                .filter(|(_, w)| &w[..a.len()] == a && &w[a.len() + gap..] == b)
                .map(|(i, _)| masses[i])
                .sum());
        }
        let (ma, mb) = (self.mass(a)?, self.mass(b)?);
        if ma == 0.0 || mb == 0.0 {
            return Ok(0.0);
        }
        let sa = self.states.position(&a[a.len() - q..]).expect("admissible");
        let sb = self.states.position(&b[..q]).expect("admissible");
        let p = self.kernel_power(gap + q);
        Ok(ma * p[(sa, sb)] * mb / self.stationary[sb])
    }

    fn separated_joint(&self, n: usize, gap: usize) -> Result<Vec<f64>> {
        let q = self.memory();
        let idx = self.sft.index(n)?;
        let k = idx.len();
        if n < q {
            let depth = 2 * n + gap;
            let big = self.sft.index(depth)?;
            let masses = self.masses_at(depth)?;
            let mut joint = vec![0.0; k * k];
            for (i, w) in big.iter().enumerate() {
                let a = idx.position(&w[..n]).expect("prefix");
                let b = idx.position(&w[n + gap..]).expect("suffix");
                joint[a * k + b] += masses[i];
            }
            return Ok(joint);
        }
        let masses = self.masses_at(n)?;
        let p = self.kernel_power(gap + q);
        let mut joint = vec![0.0; k * k];
        for (i, a) in idx.iter().enumerate() {
            let sa = self.states.position(&a[n - q..]).expect("admissible");
            for (j, b) in idx.iter().enumerate() {
                let sb = self.states.position(&b[..q]).expect("admissible");
                joint[i * k + j] = masses[i] * p[(sa, sb)] * masses[j] / self.stationary[sb];
            }
        }
        Ok(joint)
    }

    fn entropy_rate(&self) -> Option<f64> {
        let q = self.memory();
        let m = self.masses_at(q + 1).ok()?;
        let idx = self.sft.index(q + 1).ok()?;
        Some(-idx.iter().zip(&m).map(|(w, mass)| mass * self.potential.table.value(w)).sum::<f64>())
    }
}

/// `P_s f`: conditional expectation of `f` onto depth-`s` cylinders.
pub fn project(f: &LocallyConstantFn, mu: &dyn CylinderMasses, s: usize) -> Result<LocallyConstantFn> {
    let sft = f.sft();
    let m = f.depth().max(s);
    let fine = sft.index(m)?;
    let masses = mu.masses_at(m)?;
    let coarse = sft.index(s)?;
    let mut num = vec![0.0; coarse.len()];
    let mut den = vec![0.0; coarse.len()];
    for (i, w) in fine.iter().enumerate() {
        let c = coarse.position(&w[..s]).expect("prefix");
        num[c] += masses[i] * f.value(w);
        den[c] += masses[i];
    }
    let mut values = Vec::with_capacity(coarse.len());
    for (c, w) in coarse.iter().enumerate() {
        if den[c] <= 0.0 {
            return Err(Error::ZeroMass { word: render(w) });
        }
        values.push(num[c] / den[c]);
    }
    LocallyConstantFn::from_values(sft, s, values)
}

/// `int f dmu`.
pub fn integral(f: &LocallyConstantFn, mu: &dyn CylinderMasses) -> Result<f64> {
    let m = mu.masses_at(f.depth())?;
    Ok(f.values().iter().zip(&m).map(|(a, b)| a * b).sum())
}

/// `int f^2 dmu`.
pub fn l2_norm_squared(f: &LocallyConstantFn, mu: &dyn CylinderMasses) -> Result<f64> {
    let m = mu.masses_at(f.depth())?;
    Ok(f.values().iter().zip(&m).map(|(a, b)| a * a * b).sum())
}

/// Solution of `(Id - R) h = psi` with `int h dmu = 0`.
#[derive(Clone, Debug)]
pub struct CohomologySolution {
    pub h: LocallyConstantFn,
    pub residual: f64,
    pub lambda2: f64,
    /// `sqrt(d) / (1 - |lambda_2|)`.
    pub spectral_constant: f64,
    /// `spectral_constant * sqrt(s + 1) * (|psi|_inf + Bowen estimate of psi)`.
    pub bound: f64,
}

fn check_centered(psi: &LocallyConstantFn, mu: &MarkovMeasure) -> Result<f64> {
    let mean = integral(psi, mu)?;
    if mean.abs() > 1e-10 * psi.sup_norm().max(1.0) {
        return Err(Error::MeanNotZero { mean });
    }
    Ok(mean)
}

pub fn solve_cohomological(mu: &MarkovMeasure, psi: &LocallyConstantFn) -> Result<CohomologySolution> {
    check_centered(psi, mu)?;
    let sft = mu.sft.clone();
    let s = mu.potential.memory();
    let depth = psi.depth().max(s).max(1);
    let psi = psi.refine(depth)?;
    let op = TransferOperator::new(&mu.potential);
    let r = op.matrix(depth)?;
    let n = r.dim();
    if n > DENSE_SOLVE_LIMIT {
        return Err(Error::ResourceLimit { requested: n as u128, cap: DENSE_SOLVE_LIMIT as u64 });
    }
    let masses = mu.masses_at(depth)?;
    // I - R + 1 m^T is invertible and agrees with I - R on zero-mean functions
    let mut a = -r.dense();
    for i in 0..n {
        a[(i, i)] += 1.0;
        for j in 0..n {
            a[(i, j)] += masses[j];
        }
    }
    let rhs = DVector::from_column_slice(psi.values());
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("cohomological system has no unique solution".into()))?;
    let h = LocallyConstantFn::from_values(&sft, depth, sol.iter().cloned().collect())?;

    let mut rh = vec![0.0; n];
    r.mul(h.values(), &mut rh);
    let residual = h
        .values()
        .iter()
        .zip(&rh)
        .zip(psi.values())
        .map(|((hv, rv), p)| (hv - rv - p).abs())
        .fold(0.0, f64::max);
    if residual > 1e-10 * (1.0 + psi.sup_norm()) {
        return Err(Error::SingularSystem(format!("residual {residual:e} after solve")));
    }
    let lambda2 = mu.second_eigenvalue();
    let spectral_constant = (sft.alphabet_size() as f64).sqrt() / (1.0 - lambda2).max(f64::EPSILON);
    let bowen = crate::bowen::bowen_norm_estimate(&psi, depth + 2)?;
    let bound = spectral_constant * ((s + 1) as f64).sqrt() * (psi.sup_norm() + bowen);
    Ok(CohomologySolution { h, residual, lambda2, spectral_constant, bound })
}

/// `psi_bar = h - (R h) o tau`.
pub fn martingale_part(mu: &MarkovMeasure, h: &LocallyConstantFn) -> Result<LocallyConstantFn> {
    let op = TransferOperator::new(&mu.potential);
    let rh = op.apply(h)?.compose_shift()?;
    h.sub(&rh)
}

#[derive(Clone, Debug, Serialize)]
pub struct VarianceReport {
    pub sigma2_martingale: f64,
    pub sigma2_green_kubo: f64,
    pub n_cut: usize,
    pub tail_bound: f64,
    pub lambda2: f64,
    pub agreement: bool,
}

/// Variance of the Birkhoff sums of a centered `psi`, by the martingale part
/// and by summing correlations.
pub fn variance(mu: &MarkovMeasure, psi: &LocallyConstantFn) -> Result<VarianceReport> {
    let sol = solve_cohomological(mu, psi)?;
    let bar = martingale_part(mu, &sol.h)?;
    let sigma2_martingale = l2_norm_squared(&bar, mu)?;

    let depth = sol.h.depth();
    let psi = psi.refine(depth)?;
    let op = TransferOperator::new(&mu.potential);
    let r = op.matrix(depth)?;
    let masses = mu.masses_at(depth)?;
    let weighted: Vec<f64> = psi.values().iter().zip(&masses).map(|(p, m)| p * m).collect();
    let l1: f64 = weighted.iter().map(|v| v.abs()).sum();
    let rho = sol.lambda2.clamp(0.0, 1.0 - 1e-9);
    let mut total: f64 = psi.values().iter().zip(&weighted).map(|(p, w)| p * w).sum();
    let mut g = psi.values().to_vec();
    let mut next = vec![0.0; g.len()];
    let mut n_cut = 0;
    let mut prev_sup = f64::INFINITY;
    let mut tail_bound = f64::INFINITY;
    while n_cut < POWER_ITERATION_CAP {
        n_cut += 1;
        r.mul(&g, &mut next);
        std::mem::swap(&mut g, &mut next);
        total += 2.0 * g.iter().zip(&weighted).map(|(a, b)| a * b).sum::<f64>();
        let sup = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let ratio = if prev_sup > 0.0 && prev_sup.is_finite() { (sup / prev_sup).min(1.0 - 1e-9) } else { rho };
        let rate = rho.max(ratio);
        tail_bound = 2.0 * sup * l1 * rate / (1.0 - rate);
        prev_sup = sup;
        // R^k psi only reaches the chain's own depth after `depth - 1` steps
        if sup == 0.0 || (n_cut + 1 >= depth && tail_bound < 1e-13) {
            break;
        }
    }
    if tail_bound >= 1e-10 {
        return Err(Error::NonConvergence(format!("correlation tail {tail_bound:e} after {n_cut} terms")));
    }
    let agreement = (sigma2_martingale - total).abs() <= 1e-8 * (1.0 + sigma2_martingale);
    Ok(VarianceReport {
        sigma2_martingale,
        sigma2_green_kubo: total,
        n_cut,
        tail_bound,
        lambda2: sol.lambda2,
        agreement,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DegeneracyReport {
    pub sigma2: f64,
    pub variance_trivial: bool,
    pub periodic_trivial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    pub certificate_depth: usize,
}

/// Cross-check `sigma^2 = 0` against vanishing periodic averages. Both tests
/// are relative to `|psi|_inf`, so the verdict is invariant under scaling.
pub fn degeneracy_test(mu: &MarkovMeasure, psi: &LocallyConstantFn, n_max: usize) -> Result<DegeneracyReport> {
    let scale = psi.sup_norm();
    let sigma2 = if scale == 0.0 { 0.0 } else { variance(mu, psi)?.sigma2_martingale };
    let variance_trivial = sigma2 <= 1e-10 * scale * scale;
    let mut witness = None;
    'outer: for n in 1..=n_max {
        for a in mu.sft.periodic_words(n)? {
            let avg = psi.cyclic_sum(&a) / n as f64;
            if avg.abs() > 1e-9 * scale {
                witness = Some(render(&a));
                break 'outer;
            }
        }
    }
    let periodic_trivial = witness.is_none();
    if variance_trivial != periodic_trivial {
        return Err(Error::InconsistentVerdicts(format!(
            "sigma^2 = {sigma2:e} but periodic averages say {}",
            if periodic_trivial { "trivial" } else { "nontrivial" }
        )));
    }
    Ok(DegeneracyReport { sigma2, variance_trivial, periodic_trivial, witness, certificate_depth: n_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sft::build_sft;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full2() -> Arc<Sft> {
        build_sft(&[vec![1, 1], vec![1, 1]]).unwrap()
    }

    fn golden() -> Arc<Sft> {
        build_sft(&[vec![1, 1], vec![1, 0]]).unwrap()
    }

    const PHI: f64 = 1.618033988749895;

    #[test]
    fn parry_full_shift_is_uniform() {
        let s = full2();
        let n = normalize_potential(&MarkovPotential::zero(&s).unwrap()).unwrap();
        assert_relative_eq!(n.lambda, 2.0, epsilon = 1e-14);
        for v in n.potential.table().values() {
            assert_relative_eq!(*v, -(2f64.ln()), epsilon = 1e-14);
        }
        let h = n.eigenfunction.values();
        assert_relative_eq!(h[0], h[1], epsilon = 1e-14);
    }

    #[test]
    fn golden_mean_parry_chain() {
        let g = golden();
        let mu = MarkovMeasure::parry(&g).unwrap();
        let t0 = mu.transitions(0);
        assert_relative_eq!(t0[0].1, 1.0 / PHI, epsilon = 1e-13);
        assert_relative_eq!(t0[1].1, 1.0 / (PHI * PHI), epsilon = 1e-13);
        let t1 = mu.transitions(1);
        assert_eq!(t1.len(), 1);
        assert_eq!(t1[0].0, 0);
        assert_relative_eq!(t1[0].1, 1.0, epsilon = 1e-14);
        let z = PHI * PHI + 1.0;
        assert_relative_eq!(mu.stationary()[0], PHI * PHI / z, epsilon = 1e-13);
        assert_relative_eq!(mu.stationary()[1], 1.0 / z, epsilon = 1e-13);
        assert_relative_eq!(mu.entropy_rate().unwrap(), PHI.ln(), epsilon = 1e-13);
        assert!(mu.stationarity_defect() < 1e-15);
    }

    #[test]
    fn count01_pressure_eigenvalue() {
        let s = full2();
        let f = LocallyConstantFn::from_fn(&s, 2, |w| (w == [0, 1]) as u8 as f64).unwrap();
        let n = normalize_potential(&MarkovPotential::new(f).unwrap()).unwrap();
        assert_relative_eq!(n.lambda, 1.0 + 1f64.exp().sqrt(), epsilon = 1e-13);
        assert!(n.potential.normalization_defect().unwrap() <= 1e-12);
    }

    #[test]
    fn markov_masses_are_invariant_and_consistent() {
        let s = build_sft(&[vec![1, 1, 0], vec![0, 1, 1], vec![1, 1, 1]]).unwrap();
        let f = LocallyConstantFn::from_fn(&s, 3, |w| 0.3 * w[0] as f64 - 0.7 * (w[2] == w[0]) as u8 as f64).unwrap();
        let (mu, _) = MarkovMeasure::gibbs(&MarkovPotential::new(f).unwrap()).unwrap();
        for depth in 1..=6 {
            let m = crate::measure::CylinderMeasure::snapshot(&mu, depth).unwrap();
            assert!(m.invariance_defect() < 1e-14);
            assert_relative_eq!(m.total_mass(), 1.0, epsilon = 1e-13);
            let direct = mu.masses_at(depth).unwrap();
            let idx = s.index(depth).unwrap();
            for (i, w) in idx.iter().enumerate() {
                assert_relative_eq!(mu.mass(w).unwrap(), direct[i], epsilon = 1e-15);
            }
        }
        assert!(mu.stationarity_defect() < 1e-14);
    }

    #[test]
    fn transfer_of_indicator_under_bernoulli() {
        let s = full2();
        let mu = MarkovMeasure::bernoulli(&s, &[0.5, 0.5]).unwrap();
        let op = TransferOperator::new(mu.potential());
        let f = LocallyConstantFn::from_fn(&s, 1, |w| (w[0] == 0) as u8 as f64).unwrap();
        for v in op.apply(&f).unwrap().values() {
            assert_relative_eq!(*v, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn projection_examples() {
        let s = full2();
        let mu = MarkovMeasure::bernoulli(&s, &[0.5, 0.5]).unwrap();
        let f = LocallyConstantFn::from_fn(&s, 2, |w| (w == [0, 1]) as u8 as f64).unwrap();
        let p = project(&f, &mu, 1).unwrap();
        assert_relative_eq!(p.value(&[0]), 0.5, epsilon = 1e-15);
        assert_relative_eq!(p.value(&[1]), 0.0, epsilon = 1e-15);
        assert_relative_eq!(project(&f, &mu, 0).unwrap().values()[0], 0.25, epsilon = 1e-15);
        let pp = project(&p, &mu, 1).unwrap();
        assert_eq!(pp.values(), p.values());
    }

    #[test]
    fn iid_indicator_variance() {
        let s = full2();
        let mu = MarkovMeasure::bernoulli(&s, &[0.5, 0.5]).unwrap();
        let psi = LocallyConstantFn::from_fn(&s, 1, |w| (w[0] == 0) as u8 as f64 - 0.5).unwrap();
        let sol = solve_cohomological(&mu, &psi).unwrap();
        // R psi = 0 here, so h = psi
        for (a, b) in sol.h.values().iter().zip(psi.values()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-14);
        }
        let v = variance(&mu, &psi).unwrap();
        assert_relative_eq!(v.sigma2_martingale, 0.25, epsilon = 1e-12);
        assert_relative_eq!(v.sigma2_green_kubo, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn count01_variance_is_one_sixteenth() {
        // Var(sum 1[x_i x_{i+1} = 01]) / n -> 1/4 * 3/4 - 2 * 1/16 = 1/16
        let s = full2();
        let mu = MarkovMeasure::bernoulli(&s, &[0.5, 0.5]).unwrap();
        let psi = LocallyConstantFn::from_fn(&s, 2, |w| (w == [0, 1]) as u8 as f64 - 0.25).unwrap();
        let v = variance(&mu, &psi).unwrap();
        assert_relative_eq!(v.sigma2_martingale, 1.0 / 16.0, epsilon = 1e-12);
        assert!(v.agreement);
    }

    #[test]
    fn deep_potential_under_iid_chain() {
        let s = full2();
        let mu = MarkovMeasure::bernoulli(&s, &[0.3, 0.7]).unwrap();
        let raw = LocallyConstantFn::from_fn(&s, 4, |w| w.iter().enumerate().map(|(i, &x)| (i + 1) as f64 * x as f64).sum::<f64>().sin()).unwrap();
        let psi = raw.add_constant(-integral(&raw, &mu).unwrap());
        let v = variance(&mu, &psi).unwrap();
        assert!(v.n_cut >= 3);
        assert_relative_eq!(v.sigma2_martingale, v.sigma2_green_kubo, epsilon = 1e-12);
    }

    #[test]
    fn uncentered_is_rejected() {
        let s = full2();
        let mu = MarkovMeasure::bernoulli(&s, &[0.5, 0.5]).unwrap();
        let psi = LocallyConstantFn::from_fn(&s, 1, |w| w[0] as f64).unwrap();
        assert!(matches!(solve_cohomological(&mu, &psi), Err(Error::MeanNotZero { .. })));
    }

    #[test]
    fn degeneracy_verdicts() {
        let s = full2();
        let mu = MarkovMeasure::bernoulli(&s, &[0.5, 0.5]).unwrap();
        let g = LocallyConstantFn::from_fn(&s, 2, |w| [0.3, -1.0, 2.0, 0.5][(2 * w[0] + w[1]) as usize]).unwrap();
        let cob = g.sub(&g.compose_shift().unwrap()).unwrap();
        let r = degeneracy_test(&mu, &cob, 8).unwrap();
        assert!(r.variance_trivial && r.periodic_trivial);
        let tiny = degeneracy_test(&mu, &cob.scale(1e-13), 8).unwrap();
        assert!(tiny.variance_trivial && tiny.periodic_trivial);
        let ind = LocallyConstantFn::from_fn(&s, 1, |w| (w[0] == 0) as u8 as f64 - 0.5).unwrap();
        let r = degeneracy_test(&mu, &ind, 8).unwrap();
        assert!(!r.variance_trivial && !r.periodic_trivial);
        assert_eq!(r.witness.as_deref(), Some("1"));
        assert_relative_eq!(r.sigma2, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn sampled_golden_paths_are_admissible() {
        let g = golden();
        let mu = MarkovMeasure::parry(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let path = mu.sample(20_000, &mut rng);
        assert!(g.is_admissible(&path));
        let ones = path.iter().filter(|&&s| s == 0).count() as f64 / path.len() as f64;
        assert!((ones - mu.stationary()[0]).abs() < 4.0 / (path.len() as f64).sqrt());
        let mut again = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(mu.sample(20_000, &mut again), path);
    }

    #[test]
    fn separated_masses_match_enumeration() {
        let g = golden();
        let mu = MarkovMeasure::parry(&g).unwrap();
        let snap = crate::measure::CylinderMeasure::snapshot(&mu, 9).unwrap();
        for gap in 0..4 {
            let a = mu.separated_joint(2, gap).unwrap();
            let b = snap.separated_joint(2, gap).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert_relative_eq!(*x, *y, epsilon = 1e-14);
            }
            let x = mu.separated_mass(&[0, 1], gap, &[0]).unwrap();
            let y = snap.separated_mass(&[0, 1], gap, &[0]).unwrap();
            assert_relative_eq!(x, y, epsilon = 1e-14);
        }
    }

    fn random_table(seed: u64, sft: &Arc<Sft>, depth: usize) -> LocallyConstantFn {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LocallyConstantFn::from_fn(sft, depth, |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn transference_identity(seed in 0u64..10_000) {
            let g = golden();
            let phi = random_table(seed, &g, 3);
            let (mu, _) = MarkovMeasure::gibbs(&MarkovPotential::new(phi).unwrap()).unwrap();
            let op = TransferOperator::new(mu.potential());
            let f = random_table(seed + 1, &g, 3);
            let gf = random_table(seed + 2, &g, 2);
            let g_shift = gf.compose_shift().unwrap();
            let product = LocallyConstantFn::from_fn(&g, 3, |w| f.value(w) * g_shift.value(w)).unwrap();
            let lhs = op.apply(&product).unwrap();
            let rf = op.apply(&f).unwrap();
            let depth = lhs.depth().max(rf.depth()).max(gf.depth());
            let rhs = LocallyConstantFn::from_fn(&g, depth, |w| rf.value(w) * gf.value(w)).unwrap();
            let lhs = lhs.refine(depth).unwrap();
            for (a, b) in lhs.values().iter().zip(rhs.values()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn transfer_preserves_integral(seed in 0u64..10_000) {
            let g = golden();
            let phi = random_table(seed, &g, 2);
            let (mu, _) = MarkovMeasure::gibbs(&MarkovPotential::new(phi).unwrap()).unwrap();
            let op = TransferOperator::new(mu.potential());
            let f = random_table(seed + 3, &g, 4);
            let rf = op.apply(&f).unwrap();
            prop_assert!((integral(&f, &mu).unwrap() - integral(&rf, &mu).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn martingale_part_is_in_kernel(seed in 0u64..10_000) {
            let s = full2();
            let phi = random_table(seed, &s, 2);
            let (mu, _) = MarkovMeasure::gibbs(&MarkovPotential::new(phi).unwrap()).unwrap();
            let raw = random_table(seed + 5, &s, 3);
            let psi = raw.add_constant(-integral(&raw, &mu).unwrap());
            let sol = solve_cohomological(&mu, &psi).unwrap();
            let bar = martingale_part(&mu, &sol.h).unwrap();
            let op = TransferOperator::new(mu.potential());
            prop_assert!(op.apply(&bar).unwrap().sup_norm() <= 1e-10);
            let v = variance(&mu, &psi).unwrap();
            prop_assert!(v.agreement);
        }

        #[test]
        fn degeneracy_is_scale_invariant(seed in 0u64..10_000, c in 1e-6f64..1e6) {
            let s = full2();
            let mu = MarkovMeasure::bernoulli(&s, &[0.5, 0.5]).unwrap();
            let raw = random_table(seed, &s, 2);
            let psi = raw.add_constant(-integral(&raw, &mu).unwrap());
            let a = degeneracy_test(&mu, &psi, 6).unwrap();
            let b = degeneracy_test(&mu, &psi.scale(c), 6).unwrap();
            prop_assert_eq!(a.variance_trivial, b.variance_trivial);
            prop_assert_eq!(a.periodic_trivial, b.periodic_trivial);
        }
    }
}
