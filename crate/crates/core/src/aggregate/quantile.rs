use crate::error::{Error, Result};

/// Five-number summary of one multiset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantiles5 {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quantiles5 {
    pub fn constant(v: f64) -> Self {
        Quantiles5 {
            min: v,
            q1: v,
            median: v,
            q3: v,
            max: v,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.min, self.q1, self.median, self.q3, self.max]
    }

    pub fn is_ordered(&self) -> bool {
        self.min <= self.q1
            && self.q1 <= self.median
            && self.median <= self.q3
            && self.q3 <= self.max
    }
}

/// Quantile of sorted data by linear interpolation between closest ranks:
/// fractional index `p * (n - 1)` (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantiles5(values: &[f64]) -> Result<Quantiles5> {
    if values.is_empty() {
        return Err(Error::Data("quantiles of an empty set".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("quantiles of a set containing NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Quantiles5 {
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

pub fn median(values: &[f64]) -> Result<f64> {
    quantiles5(values).map(|q| q.median)
}
