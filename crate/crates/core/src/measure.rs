//! Shift-invariant measures described by their cylinder masses.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sft::{render, Sft, Symbol};

/// A probability measure known through the masses of its cylinders.
pub trait CylinderMasses: Sync {
    fn sft(&self) -> &Arc<Sft>;

    /// Deepest available cylinder depth, or `None` when every depth is available.
    fn max_depth(&self) -> Option<usize>;

    /// Masses of `W_k` in lexicographic order.
    fn masses_at(&self, depth: usize) -> Result<Vec<f64>>;

    fn mass(&self, word: &[Symbol]) -> Result<f64> {
        let idx = self.sft().index(word.len())?;
        let masses = self.masses_at(word.len())?;
        Ok(idx.position(word).map(|i| masses[i]).unwrap_or(0.0))
    }

    /// `mu([a] cap tau^{-(|a| + gap)} [b])`.
    fn separated_mass(&self, a: &[Symbol], gap: usize, b: &[Symbol]) -> Result<f64> {
        let depth = a.len() + gap + b.len();
        let idx = self.sft().index(depth)?;
        let masses = self.masses_at(depth)?;
        let mut total = 0.0;
        for (i, w) in idx.iter().enumerate() {
            if &w[..a.len()] == a && &w[a.len() + gap..] == b {
                total += masses[i];
            }
        }
        Ok(total)
    }

    /// Joint masses `mu(A cap tau^{-(n + gap)} B)` for all `A, B` in `W_n`,
    /// row-major in the lexicographic order of `W_n`.
    fn separated_joint(&self, n: usize, gap: usize) -> Result<Vec<f64>> {
        let small = self.sft().index(n)?;
        let k = small.len();
        let depth = 2 * n + gap;
        let idx = self.sft().index(depth)?;
        let masses = self.masses_at(depth)?;
        let mut joint = vec![0.0; k * k];
        for (i, w) in idx.iter().enumerate() {
            let a = small.position(&w[..n]).expect("prefix is admissible");
            let b = small.position(&w[n + gap..]).expect("suffix is admissible");
            joint[a * k + b] += masses[i];
        }
        Ok(joint)
    }

    /// Exact entropy rate when known in closed form.
    fn entropy_rate(&self) -> Option<f64> {
        None
    }
}

/// Finite-depth measure: masses on `W_depth` and all coarser marginals.
#[derive(Clone, Debug)]
pub struct CylinderMeasure {
    sft: Arc<Sft>,
    levels: Vec<Vec<f64>>,
}

impl CylinderMeasure {
    /// From masses on `W_depth` (lexicographic order); marginals are derived.
    pub fn from_top(sft: &Arc<Sft>, depth: usize, masses: Vec<f64>) -> Result<Self> {
        let idx = sft.index(depth)?;
        if masses.len() != idx.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} masses at depth {depth}, got {}",
                idx.len(),
                masses.len()
            )));
        }
        if masses.iter().any(|&m| !(m >= 0.0)) {
            return Err(Error::InvalidInput("masses must be nonnegative".into()));
        }
        let mut levels = vec![masses];
        for k in (0..depth).rev() {
            let fine = sft.index(k + 1)?;
            let coarse = sft.index(k)?;
            let above = levels.last().expect("nonempty");
            let mut m = vec![0.0; coarse.len()];
            for (i, w) in fine.iter().enumerate() {
                m[coarse.position(&w[..k]).expect("prefix")] += above[i];
            }
            levels.push(m);
        }
        levels.reverse();
        Ok(CylinderMeasure { sft: sft.clone(), levels })
    }

    /// Restriction of any measure to depth `depth`.
    pub fn snapshot(mu: &dyn CylinderMasses, depth: usize) -> Result<Self> {
        Self::from_top(mu.sft(), depth, mu.masses_at(depth)?)
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn total_mass(&self) -> f64 {
        self.levels[0][0]
    }

    /// `sup_w |sum_a mu[a w] - mu[w]|` over `w` of length `depth - 1`.
    pub fn invariance_defect(&self) -> f64 {
        let k = self.depth();
        if k == 0 {
            return 0.0;
        }
        let fine = self.sft.index(k).expect("cached");
        let coarse = self.sft.index(k - 1).expect("cached");
        let mut pre = vec![0.0; coarse.len()];
        for (i, w) in fine.iter().enumerate() {
            pre[coarse.position(&w[1..]).expect("suffix")] += self.levels[k][i];
        }
        pre.iter()
            .zip(&self.levels[k - 1])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn dump(&self) -> MeasureDump {
        let k = self.depth();
        let idx = self.sft.index(k).expect("cached");
        MeasureDump {
            depth: k,
            masses: idx.iter().zip(&self.levels[k]).map(|(w, &m)| (render(w), m)).collect(),
        }
    }
}

impl CylinderMasses for CylinderMeasure {
    fn sft(&self) -> &Arc<Sft> {
        &self.sft
    }

    fn max_depth(&self) -> Option<usize> {
        Some(self.depth())
    }

    fn masses_at(&self, depth: usize) -> Result<Vec<f64>> {
        self.levels
            .get(depth)
            .cloned()
            .ok_or(Error::DepthExceeded { requested: depth, available: self.depth() })
    }
}

/// JSON form `{depth, masses by word}`.
#[derive(Clone, Debug, Serialize)]
pub struct MeasureDump {
    pub depth: usize,
    pub masses: BTreeMap<String, f64>,
}

/// Total variation `(1/2) sum |mu[w] - nu[w]|` at depth `k`.
pub fn tv_distance(mu: &dyn CylinderMasses, nu: &dyn CylinderMasses, depth: usize) -> Result<f64> {
    let a = mu.masses_at(depth)?;
    let b = nu.masses_at(depth)?;
    Ok(0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}
