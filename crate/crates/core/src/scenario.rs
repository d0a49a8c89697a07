//! Seeded synthetic evaluation scenarios.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::forward::{standard_normal9, FrustumBox, DEFAULT_MARGIN};
use crate::mononorm::{denormalize, NormConfig, NormalizedPose};
use crate::rng::{domain, stream, SimRng};
use crate::robot::{ChainSpec, JointConfig};
use crate::se3::{gram_schmidt_6d, Pose, Rotation6D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRanges {
    /// Focal length range (pixels).
    pub focal: (f64, f64),
    /// Image sizes, picked uniformly.
    pub sizes: Vec<(f64, f64)>,
    /// Margin of the in-view box the ground truth is drawn from.
    pub margin: f64,
    /// Keypoint observation noise (pixels).
    pub obs_noise_px: f64,
}

impl Default for ScenarioRanges {
    fn default() -> Self {
        Self {
            focal: (400.0, 900.0),
            sizes: vec![(640.0, 480.0), (1280.0, 720.0)],
            margin: DEFAULT_MARGIN,
            obs_noise_px: 0.0,
        }
    }
}

impl ScenarioRanges {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.focal;
        if !(0.0 < lo && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidRange(format!("focal range ({lo}, {hi})")));
        }
        if self.sizes.is_empty() {
            return Err(Error::InvalidRange("no image sizes".into()));
        }
        if self.sizes.iter().any(|(w, h)| !(*w > 0.0 && *h > 0.0)) {
            return Err(Error::InvalidRange("image sizes must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.margin) {
            return Err(Error::InvalidRange(format!("margin {}", self.margin)));
        }
        if !(self.obs_noise_px >= 0.0) {
            return Err(Error::InvalidRange(format!(
                "observation noise {}",
                self.obs_noise_px
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub index: usize,
    pub intrinsics: CameraIntrinsics,
    pub joints: JointConfig,
    pub gt_pose: Pose,
    pub obs_noise_px: f64,
}

impl Scenario {
    /// Scenario `index` of the set keyed by `seed`. Independent of every
    /// other index, so sets can be built in parallel.
    pub fn generate(
        seed: u64,
        index: usize,
        ranges: &ScenarioRanges,
        chain: &ChainSpec,
        norm: &NormConfig,
    ) -> Result<Self> {
        let mut rng = stream(seed, domain::SCENARIO, index as u64);
        let f = if ranges.focal.0 == ranges.focal.1 {
            ranges.focal.0
        } else {
            rng.random_range(ranges.focal.0..ranges.focal.1)
        };
        let (w, h) = ranges.sizes[rng.random_range(0..ranges.sizes.len())];
        let intrinsics = CameraIntrinsics::new(f, w, h)?;
        let rotation = uniform_rotation(&mut rng);
        let bounds = FrustumBox::new(&intrinsics, ranges.margin, norm)?;
        let tn = bounds.sample(&mut rng);
        let n = NormalizedPose::from_parts(&Rotation6D::from_matrix(&rotation), &tn);
        let t = denormalize(&n, &intrinsics, norm)?.translation;
        let joints = JointConfig::new(
            chain
                .limits()
                .iter()
                .map(|(lo, hi)| {
                    if lo == hi {
                        *lo
                    } else {
                        rng.random_range(*lo..*hi)
                    }
                })
                .collect(),
        );
        Ok(Self {
            index,
            intrinsics,
            joints,
            gt_pose: Pose::new(rotation, t),
            obs_noise_px: ranges.obs_noise_px,
        })
    }
}

/// Haar-uniform rotation: Gram-Schmidt of an isotropic Gaussian 6-vector.
pub fn uniform_rotation(rng: &mut SimRng) -> nalgebra::Matrix3<f64> {
    loop {
        let v = standard_normal9(rng);
        let r = Rotation6D::new(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[3], v[4], v[5]),
        );
        if let Ok(m) = gram_schmidt_6d(&r) {
            return m;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub seed: u64,
    pub scenarios: Vec<Scenario>,
}

pub fn generate_scenarios(
    seed: u64,
    count: usize,
    ranges: &ScenarioRanges,
    chain: &ChainSpec,
    norm: &NormConfig,
) -> Result<ScenarioSet> {
    if count == 0 {
        return Err(Error::InvalidRange(
            "scenario count must be at least 1".into(),
        ));
    }
    ranges.validate()?;
    chain.validate()?;
    norm.validate()?;
    let scenarios = (0..count)
        .map(|i| Scenario::generate(seed, i, ranges, chain, norm))
        .collect::<Result<_>>()?;
    Ok(ScenarioSet { seed, scenarios })
}
