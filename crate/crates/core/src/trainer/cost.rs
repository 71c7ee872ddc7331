use serde::{Deserialize, Serialize};

use super::MultiExitModel;
use crate::error::{Error, Result};

/// Tolerance on `Σ fractions = 1` for externally supplied exit fractions.
const FRACTION_SUM_TOL: f64 = 0.01;

/// Cumulative compute cost at each exit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CostModel {
    cumulative_macs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for CostModel {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        CostModel::new(v)
    }
}

impl From<CostModel> for Vec<f64> {
    fn from(c: CostModel) -> Self {
        c.cumulative_macs
    }
}

impl CostModel {
    pub fn new(cumulative_macs: Vec<f64>) -> Result<Self> {
        if cumulative_macs.is_empty() {
            return Err(Error::Empty("cumulative_macs"));
        }
        if cumulative_macs.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::invalid("cumulative_macs", "must be positive and finite"));
        }
        if cumulative_macs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("cumulative_macs", "must be strictly increasing"));
        }
        Ok(CostModel { cumulative_macs })
    }

    /// Costs executed by [`MultiExitModel::stream`]: every block up to the exit,
    /// plus the heads of all exits visited on the way.
    pub fn from_model(model: &MultiExitModel) -> Self {
        let mut macs = Vec::with_capacity(model.num_exits());
        let mut total = 0u64;
        let mut block = 0;
        for (i, &last) in model.config().exit_after.iter().enumerate() {
            while block <= last {
                total += model.block_macs(block);
                block += 1;
            }
            total += model.exit_macs(i);
            macs.push(total as f64);
        }
        CostModel { cumulative_macs: macs }
    }

    pub fn num_exits(&self) -> usize {
        self.cumulative_macs.len()
    }

    pub fn cumulative_macs(&self) -> &[f64] {
        &self.cumulative_macs
    }

    pub fn macs_at_exit(&self, exit: usize) -> Result<f64> {
        self.cumulative_macs.get(exit).copied().ok_or(Error::DimensionMismatch {
            expected: self.num_exits(),
            got: exit,
        })
    }

    /// `1 − macs(exit) / macs(final)`.
    pub fn saved_fraction(&self, exit: usize) -> Result<f64> {
        Ok(1.0 - self.macs_at_exit(exit)? / self.cumulative_macs[self.num_exits() - 1])
    }

    /// `Σ_i fraction_i · saved(i)`; fractions must sum to 1 within 1%.
    pub fn mixture_saved_fraction(&self, fractions: &[f64]) -> Result<f64> {
        if fractions.len() != self.num_exits() {
            return Err(Error::DimensionMismatch {
                expected: self.num_exits(),
                got: fractions.len(),
            });
        }
        if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(Error::invalid("fractions", "must be nonnegative"));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > FRACTION_SUM_TOL {
            return Err(Error::invalid("fractions", format!("sum to {sum}, expected 1")));
        }
        fractions
            .iter()
            .enumerate()
            .map(|(i, f)| self.saved_fraction(i).map(|s| f * s))
            .sum()
    }
}

/// A fraction as a percentage truncated to one decimal, the convention of
/// published savings tables.
pub fn percent_truncated(fraction: f64) -> f64 {
    // Tiny nudge so exact decimal values do not lose a digit to binary rounding.
    (fraction * 1000.0 + 1e-9).floor() / 10.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::model::tests::small_config;
    use crate::trainer::Mode;

    fn mobile() -> CostModel {
        CostModel::new(vec![13.08e3, 19.41e3, 34.9e3]).unwrap()
    }

    #[test]
    fn published_single_exit_savings() {
        let c = mobile();
        assert_eq!(percent_truncated(c.saved_fraction(0).unwrap()), 62.5);
        assert_eq!(percent_truncated(c.saved_fraction(1).unwrap()), 44.3);
        assert_eq!(c.saved_fraction(2).unwrap(), 0.0);
    }

    #[test]
    fn published_mixture_savings() {
        let c = mobile();
        let a = c.mixture_saved_fraction(&[0.301, 0.391, 0.309]).unwrap();
        let b = c.mixture_saved_fraction(&[0.356, 0.367, 0.276]).unwrap();
        assert_eq!(percent_truncated(a), 36.1);
        assert_eq!(percent_truncated(b), 38.5);
    }

    #[test]
    fn invalid_costs_and_fractions() {
        assert!(CostModel::new(vec![3.0, 2.0]).is_err());
        assert!(CostModel::new(vec![0.0, 2.0]).is_err());
        assert!(CostModel::new(vec![]).is_err());
        assert!(mobile().mixture_saved_fraction(&[0.5, 0.5]).is_err());
        assert!(mobile().mixture_saved_fraction(&[0.5, 0.2, 0.1]).is_err());
        assert!(mobile().macs_at_exit(3).is_err());
    }

    #[test]
    fn model_costs_match_stream() {
        let m = MultiExitModel::new(small_config(Mode::Hyperbolic), 0).unwrap();
        let cost = CostModel::from_model(&m);
        let mut s = m.stream(&[0.0; 5]).unwrap();
        for i in 0..3 {
            s.next_exit().unwrap().unwrap();
            assert_eq!(s.macs() as f64, cost.macs_at_exit(i).unwrap());
        }
    }

    #[test]
    fn serde_rejects_decreasing_costs() {
        assert!(serde_json::from_str::<CostModel>("[1.0, 2.0]").is_ok());
        assert!(serde_json::from_str::<CostModel>("[2.0, 1.0]").is_err());
    }
}
