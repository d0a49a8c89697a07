//! ADD and its area-under-curve summary.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::denoise::point_distance;
use crate::error::{Error, Result};
use crate::se3::Pose;

/// Mean keypoint distance between the ground-truth and predicted placements.
pub fn add_metric(gt: &Pose, pred: &Pose, keypoints: &[Vector3<f64>]) -> Result<f64> {
    point_distance(gt, pred, keypoints)
}

/// Linear threshold grid for [`auc`], in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub n_thresholds: usize,
}

impl Default for AucGrid {
    fn default() -> Self {
        Self {
            t_min: 1e-5,
            t_max: 0.1,
            n_thresholds: 2000,
        }
    }
}

impl AucGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_thresholds < 2 {
            return Err(Error::InvalidRange(format!(
                "need at least 2 thresholds, got {}",
                self.n_thresholds
            )));
        }
        if !(0.0 <= self.t_min && self.t_min < self.t_max && self.t_max.is_finite()) {
            return Err(Error::InvalidRange(format!(
                "need 0 <= t_min < t_max, got {} and {}",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }

    pub fn thresholds(&self) -> impl Iterator<Item = f64> + '_ {
        let step = (self.t_max - self.t_min) / (self.n_thresholds - 1) as f64;
        (0..self.n_thresholds).map(move |i| self.t_min + step * i as f64)
    }

    /// Accuracy-threshold AUC of `adds` on a 0–100 scale.
    pub fn auc(&self, adds: &[f64]) -> Result<f64> {
        auc(adds, self.t_min, self.t_max, self.n_thresholds)
    }
}

/// 100 × the mean, over a linear grid of `n_thresholds` thresholds spanning
/// `[t_min, t_max]`, of the fraction of `adds` strictly below the threshold.
/// NaN entries never count as successes.
pub fn auc(adds: &[f64], t_min: f64, t_max: f64, n_thresholds: usize) -> Result<f64> {
    if adds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let grid = AucGrid {
        t_min,
        t_max,
        n_thresholds,
    };
    grid.validate()?;
    let mut sorted: Vec<f64> = adds.iter().copied().filter(|a| !a.is_nan()).collect();
    sorted.sort_by(f64::total_cmp);
    let n = adds.len() as f64;
    let hits: usize = grid
        .thresholds()
        .map(|th| sorted.partition_point(|a| *a < th))
        .sum();
    Ok(100.0 * hits as f64 / (n * n_thresholds as f64))
}
