//! Evaluation knobs shared by every pipeline stage.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Connectivity;

/// How point prompts are perturbed in robustness trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointJitterMode {
    /// Jitter the click set recorded by the ideal run, then issue one query.
    #[default]
    RecordedClicks,
    /// Re-run the whole click loop, jittering every click as it is placed.
    FullLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub click_limit: u32,
    pub iou_stop: f64,
    pub ofs_threshold: f64,
    pub binarize_threshold: f64,
    pub s_measure_alpha: f64,
    pub wfm_beta2: f64,
    pub wfm_sigma: f64,
    pub pro_fpr_cap: f64,
    pub n_trials: u32,
    pub rng_seed: u64,
    pub icl_count: u32,
    pub connectivity: Connectivity,
    /// Maximum absolute per-axis point shift, in pixels.
    pub point_max_shift: u32,
    /// Maximum box edge shift as a percentage of the box's shorter side.
    pub box_max_percent: u32,
    /// Upper bound of the uniform erosion/dilation iteration draw.
    pub morph_max_iterations: u32,
    pub point_jitter_mode: PointJitterMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            click_limit: 6,
            iou_stop: 0.9,
            ofs_threshold: 0.9,
            binarize_threshold: 0.5,
            s_measure_alpha: 0.5,
            wfm_beta2: 1.0,
            wfm_sigma: 5.0,
            pro_fpr_cap: 0.3,
            n_trials: 5,
            rng_seed: 0,
            icl_count: 20,
            connectivity: Connectivity::Eight,
            point_max_shift: 10,
            box_max_percent: 10,
            morph_max_iterations: 5,
            point_jitter_mode: PointJitterMode::RecordedClicks,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let ratios = [
            ("iou_stop", self.iou_stop),
            ("ofs_threshold", self.ofs_threshold),
            ("binarize_threshold", self.binarize_threshold),
            ("s_measure_alpha", self.s_measure_alpha),
            ("wfm_beta2", self.wfm_beta2),
            ("pro_fpr_cap", self.pro_fpr_cap),
        ];
        for (name, v) in ratios {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidConfig(format!("{name} = {v} is outside (0, 1]")));
            }
        }
        if self.binarize_threshold >= 1.0 {
            return Err(Error::InvalidConfig("binarize_threshold must be below 1".into()));
        }
        if !(self.wfm_sigma > 0.0 && self.wfm_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("wfm_sigma = {} must be positive", self.wfm_sigma)));
        }
        let counts = [
            ("click_limit", self.click_limit),
            ("n_trials", self.n_trials),
            ("icl_count", self.icl_count),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}
