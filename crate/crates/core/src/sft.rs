//! Topologically mixing subshifts of finite type.
//!
//! Symbols are `0..d` internally and rendered `1..=d`. All enumerations are in
//! lexicographic order, and the chunked parallel variants produce accumulators
//! in the same order regardless of the execution policy.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, NonPrimitiveCause, Result};
use crate::exec::Exec;

pub type Symbol = u8;
pub type Word = Vec<Symbol>;

pub const DEFAULT_WORD_CAP: u64 = 100_000_000;
pub const WORD_CAP_ENV: &str = "THERMOQM_MAX_WORDS";

/// Target number of chunks for parallel enumeration.
const CHUNK_TARGET: u128 = 256;

/// Render a word with 1-based digits, comma separated when `d > 9`.
pub fn render(word: &[Symbol]) -> String {
    let wide = word.iter().any(|&s| s >= 9);
    let mut out = String::with_capacity(word.len());
    for (i, &s) in word.iter().enumerate() {
        if wide {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", s as u32 + 1);
        } else {
            out.push((b'1' + s) as char);
        }
    }
    out
}

/// Parse a 1-based word, either as plain digits or comma separated.
pub fn parse_word(text: &str, alphabet: usize) -> Result<Word> {
    let text = text.trim();
    let parts: Vec<&str> = if text.contains(',') {
        text.split(',').map(str::trim).collect()
    } else {
        text.split("").filter(|s| !s.is_empty()).collect()
    };
    let mut word = Vec::with_capacity(parts.len());
    for p in parts {
        let v: usize = p
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad symbol {p:?} in word {text:?}")))?;
        if v == 0 || v > alphabet {
            return Err(Error::InvalidInput(format!(
                "symbol {v} outside alphabet 1..={alphabet}"
            )));
        }
        word.push((v - 1) as Symbol);
    }
    Ok(word)
}

pub struct Sft {
    d: usize,
    allowed: Vec<bool>,
    successors: Vec<Vec<Symbol>>,
    spec_const: usize,
    // reach[k][i * d + j] = (R^k)_{ij} > 0, for k = 0..=spec_const
    reach: Vec<Vec<bool>>,
    connectors: Vec<Word>,
    word_cap: AtomicU64,
    indices: Mutex<HashMap<usize, Arc<CylinderIndex>>>,
}

impl std::fmt::Debug for Sft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sft")
            .field("alphabet", &self.d)
            .field("specification_constant", &self.spec_const)
            .finish()
    }
}

/// The full shift on `d` symbols.
pub fn full_shift(d: usize) -> Result<Arc<Sft>> {
    build_sft(&vec![vec![1; d]; d])
}

/// The golden-mean shift: symbol 1 never follows itself.
pub fn golden_mean() -> Arc<Sft> {
    build_sft(&[vec![1, 1], vec![1, 0]]).expect("golden-mean matrix is primitive")
}

/// Validate a 0/1 matrix and build the shift.
pub fn build_sft(rows: &[Vec<u8>]) -> Result<Arc<Sft>> {
    let d = rows.len();
    if d == 0 {
        return Err(Error::InvalidMatrix("empty matrix".into()));
    }
    if d > 256 {
        return Err(Error::InvalidMatrix(format!("alphabet of size {d} exceeds 256")));
    }
    let mut allowed = vec![false; d * d];
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::InvalidMatrix(format!(
                "row {} has {} entries, expected {d}",
                i + 1,
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            match v {
                0 => {}
                1 => allowed[i * d + j] = true,
                _ => {
                    return Err(Error::InvalidMatrix(format!(
                        "entry ({}, {}) is {v}, expected 0 or 1",
                        i + 1,
                        j + 1
                    )))
                }
            }
        }
    }
    for i in 0..d {
        if !(0..d).any(|j| allowed[i * d + j]) {
            return Err(Error::InvalidMatrix(format!("row {} is zero", i + 1)));
        }
        if !(0..d).any(|j| allowed[j * d + i]) {
            return Err(Error::InvalidMatrix(format!("column {} is zero", i + 1)));
        }
    }
    let successors: Vec<Vec<Symbol>> = (0..d)
        .map(|i| (0..d).filter(|&j| allowed[i * d + j]).map(|j| j as Symbol).collect())
        .collect();

    let mut identity = vec![false; d * d];
    for i in 0..d {
        identity[i * d + i] = true;
    }
    let mut reach = vec![identity];
    let bound = (d - 1) * (d - 1) + 1;
    let mut spec_const = None;
    for k in 1..=bound {
        let prev = &reach[k - 1];
        let mut next = vec![false; d * d];
        for i in 0..d {
            for &s in &successors[i] {
                let s = s as usize;
                for j in 0..d {
                    next[i * d + j] |= prev[s * d + j];
                }
            }
        }
        let positive = next.iter().all(|&b| b);
        reach.push(next);
        if positive {
            spec_const = Some(k);
            break;
        }
    }
    let Some(spec_const) = spec_const else {
        return Err(Error::NotPrimitive(non_primitive_cause(d, &successors)));
    };

    let word_cap = std::env::var(WORD_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .unwrap_or(DEFAULT_WORD_CAP);

    let mut sft = Sft {
        d,
        allowed,
        successors,
        spec_const,
        reach,
        connectors: Vec::new(),
        word_cap: AtomicU64::new(word_cap),
        indices: Mutex::new(HashMap::new()),
    };
    let mut connectors = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            connectors.push(
                sft.least_bridge(i as Symbol, j as Symbol, spec_const - 1)
                    .expect("primitive matrix admits connectors of length M-1"),
            );
        }
    }
    sft.connectors = connectors;
    Ok(Arc::new(sft))
}

fn non_primitive_cause(d: usize, successors: &[Vec<Symbol>]) -> NonPrimitiveCause {
    // BFS levels from symbol 0; strongly connected iff every symbol reaches 0 and back
    let mut level = vec![usize::MAX; d];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &successors[u] {
            let v = v as usize;
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    if level.contains(&usize::MAX) {
        return NonPrimitiveCause::Reducible;
    }
    let mut back = vec![false; d];
    back[0] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for u in 0..d {
            if !back[u] && successors[u].iter().any(|&v| back[v as usize]) {
                back[u] = true;
                changed = true;
            }
        }
    }
    if back.iter().any(|&b| !b) {
        return NonPrimitiveCause::Reducible;
    }
    let mut period = 0usize;
    for u in 0..d {
        for &v in &successors[u] {
            let diff = (level[u] + 1).abs_diff(level[v as usize]);
            period = gcd(period, diff);
        }
    }
    NonPrimitiveCause::Periodic { period }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Sft {
    pub fn alphabet_size(&self) -> usize {
        self.d
    }

    /// Least `k` with `R^k > 0`.
    pub fn specification_constant(&self) -> usize {
        self.spec_const
    }

    pub fn allowed(&self, a: Symbol, b: Symbol) -> bool {
        self.allowed[a as usize * self.d + b as usize]
    }

    pub fn successors(&self, a: Symbol) -> &[Symbol] {
        &self.successors[a as usize]
    }

    pub fn is_full_shift(&self) -> bool {
        self.allowed.iter().all(|&b| b)
    }

    pub fn matrix(&self) -> Vec<Vec<u8>> {
        (0..self.d)
            .map(|i| (0..self.d).map(|j| self.allowed[i * self.d + j] as u8).collect())
            .collect()
    }

    /// Lexicographically least word `u` of length `M - 1` with `a u b` admissible.
    pub fn connector(&self, a: Symbol, b: Symbol) -> &[Symbol] {
        &self.connectors[a as usize * self.d + b as usize]
    }

    pub fn word_cap(&self) -> u64 {
        self.word_cap.load(Ordering::Relaxed)
    }

    pub fn set_word_cap(&self, cap: u64) {
        self.word_cap.store(cap, Ordering::Relaxed);
    }

    /// Whether some path of exactly `steps` transitions leads from `a` to `b`.
    pub fn reachable(&self, steps: usize, a: Symbol, b: Symbol) -> bool {
        if steps >= self.spec_const {
            true
        } else {
            self.reach[steps][a as usize * self.d + b as usize]
        }
    }

    pub fn is_admissible(&self, word: &[Symbol]) -> bool {
        word.iter().all(|&s| (s as usize) < self.d)
            && word.windows(2).all(|p| self.allowed(p[0], p[1]))
    }

    /// Admissible and closes up: `p(a)` is a point of the shift.
    pub fn is_periodic(&self, word: &[Symbol]) -> bool {
        !word.is_empty()
            && self.is_admissible(word)
            && self.allowed(word[word.len() - 1], word[0])
    }

    pub fn check_admissible(&self, word: &[Symbol]) -> Result<()> {
        if self.is_admissible(word) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("word {} is not admissible", render(word))))
        }
    }

    /// Lexicographically least `u` of length `interior` with `a u b` admissible.
    fn least_bridge(&self, a: Symbol, b: Symbol, interior: usize) -> Option<Word> {
        if !self.reachable(interior + 1, a, b) {
            return None;
        }
        let mut out = Vec::with_capacity(interior);
        let mut prev = a;
        for pos in 0..interior {
            let next = *self
                .successors(prev)
                .iter()
                .find(|&&s| self.reachable(interior - pos, s, b))?;
            out.push(next);
            prev = next;
        }
        Some(out)
    }

    /// Shortest, then lexicographically least, `u` with `a u b` admissible.
    fn shortest_bridge(&self, a: Symbol, b: Symbol) -> Word {
        (0..self.spec_const)
            .find_map(|len| self.least_bridge(a, b, len))
            .expect("a bridge of length M-1 always exists")
    }

    /// Periodic closure `a u`: `u` shortest, then lexicographically least,
    /// such that `a u` wraps around. `|u| <= M - 1`.
    pub fn lift(&self, word: &[Symbol]) -> Result<Word> {
        if word.is_empty() {
            return Err(Error::InvalidInput("cannot lift the empty word".into()));
        }
        self.check_admissible(word)?;
        let mut out = word.to_vec();
        out.extend(self.shortest_bridge(word[word.len() - 1], word[0]));
        Ok(out)
    }

    /// Periodic concatenation `a u b v` with shortest, then least, bridges.
    pub fn star(&self, a: &[Symbol], b: &[Symbol]) -> Result<Word> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidInput("star needs nonempty words".into()));
        }
        self.check_admissible(a)?;
        self.check_admissible(b)?;
        let mut out = a.to_vec();
        out.extend(self.shortest_bridge(a[a.len() - 1], b[0]));
        out.extend_from_slice(b);
        out.extend(self.shortest_bridge(b[b.len() - 1], a[0]));
        Ok(out)
    }

    /// `|W_n|`, saturating.
    pub fn word_count(&self, n: usize) -> u128 {
        if n == 0 {
            return 1;
        }
        let mut v = vec![1u128; self.d];
        for _ in 1..n {
            let mut next = vec![0u128; self.d];
            for i in 0..self.d {
                for &j in &self.successors[i] {
                    next[j as usize] = next[j as usize].saturating_add(v[i]);
                }
            }
            v = next;
        }
        v.into_iter().fold(0u128, |a, b| a.saturating_add(b))
    }

    /// `trace(R^n)`: periodic words of length exactly `n`, saturating.
    pub fn periodic_count(&self, n: usize) -> u128 {
        if n == 0 {
            return 0;
        }
        let mut total = 0u128;
        for start in 0..self.d {
            let mut v = vec![0u128; self.d];
            v[start] = 1;
            for _ in 0..n {
                let mut next = vec![0u128; self.d];
                for i in 0..self.d {
                    if v[i] == 0 {
                        continue;
                    }
                    for &j in &self.successors[i] {
                        next[j as usize] = next[j as usize].saturating_add(v[i]);
                    }
                }
                v = next;
            }
            total = total.saturating_add(v[start]);
        }
        total
    }

    pub fn check_budget(&self, requested: u128) -> Result<()> {
        let cap = self.word_cap();
        if requested > cap as u128 {
            Err(Error::ResourceLimit { requested, cap })
        } else {
            Ok(())
        }
    }

    /// All admissible words of length `n`, lexicographically.
    pub fn words(&self, n: usize) -> Result<Vec<Word>> {
        self.check_budget(self.word_count(n))?;
        let mut out = Vec::new();
        self.visit_from(&mut Vec::with_capacity(n), n, false, &mut |w| out.push(w.to_vec()));
        Ok(out)
    }

    /// All `a` of length exactly `n` with `p(a)` a point, lexicographically.
    pub fn periodic_words(&self, n: usize) -> Result<Vec<Word>> {
        self.check_budget(self.periodic_count(n))?;
        let mut out = Vec::new();
        if n > 0 {
            self.visit_from(&mut Vec::with_capacity(n), n, true, &mut |w| out.push(w.to_vec()));
        }
        Ok(out)
    }

    /// Sequential lexicographic visit of all words of length `n`.
    pub fn for_each_word<F: FnMut(&[Symbol])>(&self, n: usize, periodic: bool, mut f: F) -> Result<()> {
        let count = if periodic { self.periodic_count(n) } else { self.word_count(n) };
        self.check_budget(count)?;
        if !(periodic && n == 0) {
            self.visit_from(&mut Vec::with_capacity(n), n, periodic, &mut f);
        }
        Ok(())
    }

    /// Chunked enumeration: one accumulator per prefix chunk, in lexicographic
    /// chunk order. The chunking depends only on `n` and the shift.
    pub fn fold_words<T, I, F>(
        &self,
        n: usize,
        periodic: bool,
        exec: &Exec,
        init: I,
        visit: F,
    ) -> Result<Vec<T>>
    where
        T: Send,
        I: Fn() -> T + Sync + Send,
        F: Fn(&mut T, &[Symbol]) + Sync + Send,
    {
        let count = if periodic { self.periodic_count(n) } else { self.word_count(n) };
        self.check_budget(count)?;
        if periodic && n == 0 {
            return Ok(Vec::new());
        }
        let mut depth = 0;
        while depth < n && self.word_count(depth) < CHUNK_TARGET {
            depth += 1;
        }
        let mut prefixes = Vec::new();
        self.visit_prefixes(&mut Vec::new(), depth, n, periodic, &mut prefixes);
        Ok(exec.map(prefixes.len(), |c| {
            let mut acc = init();
            let mut buf = Vec::with_capacity(n);
            buf.extend_from_slice(&prefixes[c]);
            self.visit_from(&mut buf, n, periodic, &mut |w| visit(&mut acc, w));
            acc
        }))
    }

    fn visit_prefixes(&self, buf: &mut Word, depth: usize, n: usize, periodic: bool, out: &mut Vec<Word>) {
        if buf.len() == depth {
            out.push(buf.clone());
            return;
        }
        for s in 0..self.d as Symbol {
            if self.extends(buf, s, n, periodic) {
                buf.push(s);
                self.visit_prefixes(buf, depth, n, periodic, out);
                buf.pop();
            }
        }
    }

    #[inline]
    fn extends(&self, buf: &[Symbol], s: Symbol, n: usize, periodic: bool) -> bool {
        if let Some(&last) = buf.last() {
            if !self.allowed(last, s) {
                return false;
            }
        }
        if periodic {
            let first = buf.first().copied().unwrap_or(s);
            // remaining symbols plus the closing transition
            let steps = n - buf.len();
            self.reachable(steps, s, first)
        } else {
            true
        }
    }

    fn visit_from<F: FnMut(&[Symbol])>(&self, buf: &mut Word, n: usize, periodic: bool, f: &mut F) {
        if buf.len() == n {
            f(buf);
            return;
        }
        match buf.last().copied() {
            None => {
                for s in 0..self.d as Symbol {
                    if self.extends(buf, s, n, periodic) {
                        buf.push(s);
                        self.visit_from(buf, n, periodic, f);
                        buf.pop();
                    }
                }
            }
            Some(last) => {
                for &s in &self.successors[last as usize] {
                    if !periodic || self.reachable(n - buf.len(), s, buf[0]) {
                        buf.push(s);
                        self.visit_from(buf, n, periodic, f);
                        buf.pop();
                    }
                }
            }
        }
    }

    /// Lexicographic index of `W_k`, cached per depth.
    pub fn index(&self, depth: usize) -> Result<Arc<CylinderIndex>> {
        if let Some(idx) = self.indices.lock().expect("index cache").get(&depth) {
            return Ok(idx.clone());
        }
        let idx = Arc::new(CylinderIndex::build(self, depth)?);
        self.indices
            .lock()
            .expect("index cache")
            .entry(depth)
            .or_insert(idx.clone());
        Ok(idx)
    }
}

/// Bijection between `W_k` (in lexicographic order) and `0..|W_k|`.
#[derive(Debug)]
pub struct CylinderIndex {
    d: usize,
    depth: usize,
    words: Vec<Symbol>,
    lookup: Lookup,
}

#[derive(Debug)]
enum Lookup {
    Dense(Vec<u32>),
    Sparse(HashMap<u64, u32>),
}

const DENSE_LIMIT: u64 = 1 << 22;

impl CylinderIndex {
    fn build(sft: &Sft, depth: usize) -> Result<Self> {
        let count = sft.word_count(depth);
        sft.check_budget(count)?;
        if count >= u32::MAX as u128 {
            return Err(Error::ResourceLimit { requested: count, cap: u32::MAX as u64 });
        }
        let d = sft.d as u64;
        let span = d.checked_pow(depth as u32).ok_or(Error::ResourceLimit {
            requested: count,
            cap: sft.word_cap(),
        })?;
        let mut words = Vec::with_capacity(count as usize * depth);
        sft.visit_from(&mut Vec::with_capacity(depth), depth, false, &mut |w| {
            words.extend_from_slice(w)
        });
        let n = count as usize;
        let code = |w: &[Symbol]| w.iter().fold(0u64, |c, &s| c * d + s as u64);
        let lookup = if span <= DENSE_LIMIT {
            let mut table = vec![u32::MAX; span as usize];
            for i in 0..n {
                table[code(&words[i * depth..(i + 1) * depth]) as usize] = i as u32;
            }
            Lookup::Dense(table)
        } else {
            let mut map = HashMap::with_capacity(n);
            for i in 0..n {
                map.insert(code(&words[i * depth..(i + 1) * depth]), i as u32);
            }
            Lookup::Sparse(map)
        };
        Ok(CylinderIndex { d: sft.d, depth, words, lookup })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        if self.depth == 0 {
            1
        } else {
            self.words.len() / self.depth
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn word(&self, i: usize) -> &[Symbol] {
        &self.words[i * self.depth..(i + 1) * self.depth]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Symbol]> + '_ {
        (0..self.len()).map(move |i| self.word(i))
    }

    /// Position of the first `depth` symbols of `word`.
    #[inline]
    pub fn position(&self, word: &[Symbol]) -> Option<usize> {
        if word.len() < self.depth {
            return None;
        }
        let mut c = 0u64;
        for &s in &word[..self.depth] {
            if s as usize >= self.d {
                return None;
            }
            c = c * self.d as u64 + s as u64;
        }
        let i = match &self.lookup {
            Lookup::Dense(t) => t[c as usize],
            Lookup::Sparse(m) => *m.get(&c)?,
        };
        (i != u32::MAX).then_some(i as usize)
    }

    /// Position of a cyclic window of `a^infinity` starting at `start`.
    pub fn cyclic_position(&self, a: &[Symbol], start: usize) -> Option<usize> {
        let mut c = 0u64;
        let n = a.len();
        for k in 0..self.depth {
            c = c * self.d as u64 + a[(start + k) % n] as u64;
        }
        let i = match &self.lookup {
            Lookup::Dense(t) => t[c as usize],
            Lookup::Sparse(m) => *m.get(&c)?,
        };
        (i != u32::MAX).then_some(i as usize)
    }
}
