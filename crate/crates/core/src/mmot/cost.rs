use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostFamily {
    /// Ground metric summed over every unordered pair of indices in `0..=N`.
    PairwiseSum,
    /// Ground metric from index 0 to each other index.
    Star,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundMetric {
    L2,
    L1,
}

impl GroundMetric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            GroundMetric::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            GroundMetric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostSpec {
    pub family: CostFamily,
    pub metric: GroundMetric,
}

impl CostSpec {
    pub const PAIRWISE_L2: CostSpec = CostSpec {
        family: CostFamily::PairwiseSum,
        metric: GroundMetric::L2,
    };
    pub const STAR_L2: CostSpec = CostSpec {
        family: CostFamily::Star,
        metric: GroundMetric::L2,
    };

    /// Cost of one tuple of points, one per marginal; index 0 is the source.
    pub fn tuple<P: AsRef<[f64]>>(&self, points: &[P]) -> Result<f64> {
        let Some(first) = points.first() else {
            return Ok(0.0);
        };
        let d = first.as_ref().len();
        if let Some(bad) = points.iter().position(|p| p.as_ref().len() != d) {
            return Err(Error::Dimension {
                op: "cost",
                operand: "point",
                expected: format!("dimension {d}"),
                found: vec![bad, points[bad].as_ref().len()],
            });
        }
        Ok(self.tuple_unchecked(points))
    }

    pub(crate) fn tuple_unchecked<P: AsRef<[f64]>>(&self, points: &[P]) -> f64 {
        let dist = |i: usize, j: usize| self.metric.distance(points[i].as_ref(), points[j].as_ref());
        let n = points.len();
        match self.family {
            CostFamily::PairwiseSum => {
                let mut total = 0.0;
                for i in 0..n {
                    for j in i + 1..n {
                        total += dist(i, j);
                    }
                }
                total
            }
            CostFamily::Star => (1..n).map(|i| dist(0, i)).sum(),
        }
    }
}

/// Free-function form of [`CostSpec::tuple`].
pub fn cost_tuple<P: AsRef<[f64]>>(points: &[P], cost: &CostSpec) -> Result<f64> {
    cost.tuple(points)
}
