//! Linear β schedule, cumulative ᾱ products and the DDIM variance term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_STEPS: usize = 100;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// How σ_t² is computed for a DDIM step `t → t_prev`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaRule {
    /// `η² · (1−ᾱ_prev)/(1−ᾱ_t) · (1 − ᾱ_t/ᾱ_prev)`, the DDIM posterior variance.
    #[default]
    Standard,
    /// `η² · (1 − ᾱ_prev/ᾱ_t) · (1−ᾱ_t)/(1−ᾱ_prev)`, with the ᾱ ratio inverted.
    /// This is negative for every `t_prev < t`, so it is kept as a signed
    /// variance and only ever enters the deterministic update squared.
    Inverted,
}

/// Precomputed noise schedule. Index `t` runs over `0..=T`; `beta(0)` is
/// undefined and `alpha_bar(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    betas: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl Default for Schedule {
    fn default() -> Self {
        Self::linear(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule parameters are valid")
    }
}

impl Schedule {
    /// β linearly interpolated from `beta_start` (t = 1) to `beta_end` (t = T).
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidScheduleParams("T must be at least 1".into()));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidScheduleParams(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        for b in &betas {
            let prev = *alpha_bar.last().unwrap();
            alpha_bar.push(prev * (1.0 - b));
        }
        Ok(Self { betas, alpha_bar })
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.steps(), "beta index {t} out of range");
        self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn check_timestep(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::InvalidTimestep {
                t,
                max: self.steps(),
            });
        }
        Ok(())
    }

    /// σ² for the step `t → t_prev`.
    pub fn sigma_sq(&self, t: usize, t_prev: usize, eta: f64, rule: SigmaRule) -> f64 {
        let ab_t = self.alpha_bar[t];
        let ab_p = self.alpha_bar[t_prev];
        let v = match rule {
            SigmaRule::Standard => (1.0 - ab_p) / (1.0 - ab_t) * (1.0 - ab_t / ab_p),
            SigmaRule::Inverted => (1.0 - ab_p / ab_t) * (1.0 - ab_t) / (1.0 - ab_p),
        };
        eta * eta * v
    }

    /// σ for the step `t → t_prev`; NaN when the rule yields a negative variance.
    pub fn sigma(&self, t: usize, t_prev: usize, eta: f64, rule: SigmaRule) -> f64 {
        self.sigma_sq(t, t_prev, eta, rule).sqrt()
    }

    /// `count` evenly spaced timesteps from `start` down to `start/count`,
    /// strictly decreasing. The step after the last one is 0.
    pub fn ddim_timesteps(&self, count: usize, start: usize) -> Result<Vec<usize>> {
        self.check_timestep(start)?;
        if count == 0 {
            return Err(Error::InvalidConfig(
                "DDIM step count must be at least 1".into(),
            ));
        }
        let count = count.min(start);
        let mut ts: Vec<usize> = (1..=count)
            .rev()
            .map(|i| ((start * i) as f64 / count as f64).round() as usize)
            .collect();
        ts.dedup();
        Ok(ts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_schedule() {
        let s = Schedule::linear(1, 0.5, 0.5).unwrap();
        assert_eq!(s.alpha_bars(), &[1.0, 0.5]);
    }

    #[test]
    fn default_first_factor() {
        let s = Schedule::default();
        assert_eq!(s.alpha_bar(1), 0.9999);
        assert_eq!(s.steps(), 100);
        assert_eq!(s.beta(100), 0.02);
    }

    #[test]
    fn final_alpha_bar_matches_log_domain_oracle() {
        // Independent route: exp(Σ ln(1−β)) with β rebuilt from its closed form.
        let oracle: f64 = (0..100)
            .map(|i| (1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 99.0)).ln())
            .sum::<f64>()
            .exp();
        let s = Schedule::default();
        assert!((s.alpha_bar(100) - oracle).abs() < 1e-12);
        assert!((s.alpha_bar(100) - 0.364).abs() < 5e-4);
    }

    #[test]
    fn alpha_bar_strictly_decreasing() {
        let s = Schedule::default();
        assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn invalid_params() {
        assert!(Schedule::linear(0, 1e-4, 0.02).is_err());
        assert!(Schedule::linear(10, 0.0, 0.02).is_err());
        assert!(Schedule::linear(10, 0.03, 0.02).is_err());
        assert!(Schedule::linear(10, 1e-4, 1.0).is_err());
    }

    #[test]
    fn ddim_subsequence() {
        let s = Schedule::default();
        assert_eq!(s.ddim_timesteps(5, 100).unwrap(), vec![100, 80, 60, 40, 20]);
        assert_eq!(s.ddim_timesteps(1, 100).unwrap(), vec![100]);
        assert_eq!(
            s.ddim_timesteps(100, 100).unwrap(),
            (1..=100).rev().collect::<Vec<_>>()
        );
        assert_eq!(s.ddim_timesteps(3, 10).unwrap(), vec![10, 7, 3]);
        assert_eq!(s.ddim_timesteps(50, 5).unwrap(), vec![5, 4, 3, 2, 1]);
        assert!(s.ddim_timesteps(0, 100).is_err());
        assert!(s.ddim_timesteps(5, 101).is_err());
    }

    #[test]
    fn sigma_rules() {
        let s = Schedule::default();
        // Standard variance never exceeds the 1−ᾱ_prev budget.
        for t in 2..=100 {
            for tp in [0, t / 2, t - 1] {
                let v = s.sigma_sq(t, tp, 1.0, SigmaRule::Standard);
                assert!(
                    v >= 0.0 && v <= 1.0 - s.alpha_bar(tp) + 1e-15,
                    "t={t} tp={tp}"
                );
            }
        }
        assert_eq!(s.sigma_sq(40, 0, 1.0, SigmaRule::Standard), 0.0);
        assert_eq!(s.sigma_sq(40, 20, 0.0, SigmaRule::Standard), 0.0);
        // The literal expression is negative whenever ᾱ_prev > ᾱ_t.
        assert!(s.sigma_sq(40, 20, 1.0, SigmaRule::Inverted) < 0.0);
        assert!(s.sigma(40, 20, 1.0, SigmaRule::Inverted).is_nan());
    }
}
