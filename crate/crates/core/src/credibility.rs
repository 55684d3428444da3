//! Pointwise credibility maps over posterior draws of a detail field.

use faer::Mat;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Draw count below which empirical probabilities are coarse.
pub const MIN_RECOMMENDED_DRAWS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    High,
    Low,
    Null,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::High => "high",
            Label::Low => "low",
            Label::Null => "null",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PWMap {
    pub labels: Vec<Label>,
    /// Share of draws strictly above zero.
    pub prob_pos: Vec<f64>,
    /// Share of draws exactly at zero.
    pub prob_zero: Vec<f64>,
    pub alpha: f64,
}

impl PWMap {
    pub fn prob_neg(&self, i: usize) -> f64 {
        1.0 - self.prob_pos[i] - self.prob_zero[i]
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }
}

/// Labels each location of a `B x n` matrix of draws.
pub fn pw_map(draws: &Mat<f64>, alpha: f64) -> Result<PWMap> {
    let b = draws.nrows();
    if b == 0 {
        return Err(Error::domain("credibility map needs at least one draw"));
    }
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(Error::domain(format!("credibility level must lie in (0.5, 1), got {alpha}")));
    }
    if b < MIN_RECOMMENDED_DRAWS {
        warn!("credibility map from only {b} draws; probabilities are coarse");
    }
    let n = draws.ncols();
    let mut prob_pos = Vec::with_capacity(n);
    let mut prob_zero = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let (mut pos, mut zero, mut neg) = (0usize, 0usize, 0usize);
        for v in draws.col(j).iter() {
            if *v > 0.0 {
                pos += 1;
            } else if *v == 0.0 {
                zero += 1;
            } else {
                neg += 1;
            }
        }
        let (pp, pz, pn) = (pos as f64 / b as f64, zero as f64 / b as f64, neg as f64 / b as f64);
        labels.push(if pp >= alpha {
            Label::High
        } else if pn >= alpha {
            Label::Low
        } else {
            Label::Null
        });
        prob_pos.push(pp);
        prob_zero.push(pz);
    }
    Ok(PWMap {
        labels,
        prob_pos,
        prob_zero,
        alpha,
    })
}
