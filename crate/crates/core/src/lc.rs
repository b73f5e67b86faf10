//! Functions on the shift that depend only on the first `depth` coordinates.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sft::{render, CylinderIndex, Sft, Symbol};

/// JSON form `{depth, values by word}`.
#[derive(Clone, Debug, Serialize)]
pub struct PotentialDump {
    pub depth: usize,
    pub values: BTreeMap<String, f64>,
}

#[derive(Clone, Debug)]
pub struct LocallyConstantFn {
    sft: Arc<Sft>,
    index: Arc<CylinderIndex>,
    values: Vec<f64>,
}

impl LocallyConstantFn {
    pub fn from_fn<F: FnMut(&[Symbol]) -> f64>(sft: &Arc<Sft>, depth: usize, mut f: F) -> Result<Self> {
        let index = sft.index(depth)?;
        let values = index.iter().map(&mut f).collect();
        Ok(LocallyConstantFn { sft: sft.clone(), index, values })
    }

    /// Values listed in lexicographic order of `W_depth`.
    pub fn from_values(sft: &Arc<Sft>, depth: usize, values: Vec<f64>) -> Result<Self> {
        let index = sft.index(depth)?;
        if values.len() != index.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} values at depth {depth}, got {}",
                index.len(),
                values.len()
            )));
        }
        Ok(LocallyConstantFn { sft: sft.clone(), index, values })
    }

    pub fn constant(sft: &Arc<Sft>, c: f64) -> Result<Self> {
        Self::from_values(sft, 0, vec![c])
    }

    pub fn sft(&self) -> &Arc<Sft> {
        &self.sft
    }

    pub fn index(&self) -> &Arc<CylinderIndex> {
        &self.index
    }

    pub fn depth(&self) -> usize {
        self.index.depth()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dump(&self) -> PotentialDump {
        PotentialDump {
            depth: self.depth(),
            values: self.index.iter().zip(&self.values).map(|(w, &v)| (render(w), v)).collect(),
        }
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, word: &[Symbol]) -> Option<f64> {
        self.index.position(word).map(|i| self.values[i])
    }

    /// Value at any admissible word of length at least `depth`.
    ///
    /// # Panics
    /// If `word` is too short or its prefix is not admissible.
    #[inline]
    pub fn value(&self, word: &[Symbol]) -> f64 {
        match self.index.position(word) {
            Some(i) => self.values[i],
            None => panic!("no value for {} at depth {}", render(word), self.depth()),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn oscillation(&self) -> f64 {
        let max = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }

    /// The same function viewed at a larger depth.
    pub fn refine(&self, depth: usize) -> Result<Self> {
        if depth < self.depth() {
            return Err(Error::InvalidInput(format!(
                "cannot refine depth {} down to {depth}",
                self.depth()
            )));
        }
        if depth == self.depth() {
            return Ok(self.clone());
        }
        Self::from_fn(&self.sft, depth, |w| self.value(w))
    }

    /// `f o tau`, one level deeper.
    pub fn compose_shift(&self) -> Result<Self> {
        Self::from_fn(&self.sft, self.depth() + 1, |w| self.value(&w[1..]))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        LocallyConstantFn {
            sft: self.sft.clone(),
            index: self.index.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn add_constant(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    /// `a f + b g` at the larger of the two depths.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        let depth = self.depth().max(other.depth());
        Self::from_fn(&self.sft, depth, |w| a * self.value(w) + b * other.value(w))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, -1.0)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, 1.0)
    }

    /// `sum_{i < n} f(tau^i x)` for a finite word with `|x| >= n + depth - 1`.
    pub fn birkhoff_sum(&self, x: &[Symbol], n: usize) -> f64 {
        let k = self.depth();
        (0..n).map(|i| self.value(&x[i..i + k])).sum()
    }

    /// Sum over all windows of `x` that fit inside it.
    pub fn window_sum(&self, x: &[Symbol]) -> f64 {
        let k = self.depth();
        if x.len() < k {
            return 0.0;
        }
        self.birkhoff_sum(x, x.len() + 1 - k)
    }

    /// `S_{|a|} f (p(a))`: Birkhoff sum along one period of `a^infinity`.
    pub fn cyclic_sum(&self, a: &[Symbol]) -> f64 {
        (0..a.len())
            .map(|i| match self.index.cyclic_position(a, i) {
                Some(p) => self.values[p],
                None => panic!("{} is not periodic", render(a)),
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sft::build_sft;

    #[test]
    fn sums_on_golden_mean() {
        let g = build_sft(&[vec![1, 1], vec![1, 0]]).unwrap();
        let f = LocallyConstantFn::from_fn(&g, 2, |w| if w == [0, 1] { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(f.window_sum(&[0, 1, 0, 1, 0]), 2.0);
        assert_eq!(f.cyclic_sum(&[0, 1]), 1.0);
        assert_eq!(f.cyclic_sum(&[0, 0, 1]), 1.0);
        let r = f.refine(4).unwrap();
        assert_eq!(r.value(&[0, 1, 0, 0]), 1.0);
        let s = f.compose_shift().unwrap();
        assert_eq!(s.value(&[1, 0, 1]), 1.0);
        assert_eq!(s.value(&[0, 1, 0]), 0.0);
        assert!(f.refine(1).is_err());
        assert!(LocallyConstantFn::from_values(&g, 2, vec![0.0; 4]).is_err());
    }
}
