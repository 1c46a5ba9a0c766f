use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{VideoConfig, ViewDirection};
use crate::grouping::SystemViewState;
use crate::powermin::{ChannelState, OfdmaConfig};
use crate::qualitymax::GreedyMetric;
use crate::sim::{ExperimentSpec, Mode, Scheme};

/// Scenario document. Quantities are SI with the unit in the field name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub video: VideoConfig,
    pub ofdma: OfdmaConfig,
    pub users: usize,
    pub zipf_gamma: f64,
    pub pathloss_d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoding_rate_bps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_gain: Option<f64>,
    #[serde(default = "default_channel_states")]
    pub n_channel_states: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_view_draws: Option<usize>,
}

fn default_channel_states() -> usize {
    100
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid("scenario", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid("scenario", e.to_string()))
    }

    /// Checks the fields shared by every mode plus the mode's own rate or
    /// budget field; the other one must be absent.
    pub fn validate(&self, mode: Mode) -> Result<()> {
        self.video.validate()?;
        self.ofdma.validate()?;
        if self.users == 0 {
            return Err(Error::invalid("users", "must be at least 1"));
        }
        if !(self.zipf_gamma.is_finite() && self.zipf_gamma >= 0.0) {
            return Err(Error::invalid("zipf_gamma", "must be finite and >= 0"));
        }
        if !(self.pathloss_d.is_finite() && self.pathloss_d > 0.0) {
            return Err(Error::invalid("pathloss_d", "must be finite and > 0"));
        }
        if self.n_channel_states == 0 {
            return Err(Error::invalid("n_channel_states", "must be >= 1"));
        }
        if let Some(g) = self.min_gain {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::invalid("min_gain", "must be finite and > 0"));
            }
        }
        match (mode, self.encoding_rate_bps, self.budget_w) {
            (Mode::Power, Some(d), None) if d.is_finite() && d >= 0.0 => Ok(()),
            (Mode::Power, Some(_), None) => Err(Error::invalid("encoding_rate_bps", "must be finite and >= 0")),
            (Mode::Power, _, Some(_)) => Err(Error::invalid("budget_w", "not allowed in power mode")),
            (Mode::Power, None, None) => Err(Error::invalid("encoding_rate_bps", "required in power mode")),
            (Mode::Quality, None, Some(p)) if p.is_finite() && p >= 0.0 => Ok(()),
            (Mode::Quality, None, Some(_)) => Err(Error::invalid("budget_w", "must be finite and >= 0")),
            (Mode::Quality, Some(_), _) => Err(Error::invalid("encoding_rate_bps", "not allowed in quality mode")),
            (Mode::Quality, None, None) => Err(Error::invalid("budget_w", "required in quality mode")),
        }
    }

    /// Mode implied by which of the rate and budget fields is present.
    pub fn implied_mode(&self) -> Option<Mode> {
        match (self.encoding_rate_bps, self.budget_w) {
            (Some(_), None) => Some(Mode::Power),
            (None, Some(_)) => Some(Mode::Quality),
            _ => None,
        }
    }

    pub fn experiment(&self, mode: Mode, gammas: Option<Vec<f64>>, schemes: Vec<Scheme>, seed: u64) -> ExperimentSpec {
        let gammas = gammas.or_else(|| self.gammas.clone()).unwrap_or_else(|| vec![self.zipf_gamma]);
        let mut spec = ExperimentSpec {
            video: self.video,
            ofdma: self.ofdma,
            users: self.users,
            pathloss_d: self.pathloss_d,
            encoding_rate_bps: self.encoding_rate_bps,
            budget_w: self.budget_w,
            min_gain: self.min_gain,
            gammas,
            n_channel_states: self.n_channel_states,
            n_view_draws: 50,
            seed,
            schemes: if schemes.is_empty() { Scheme::ALL.to_vec() } else { schemes },
            mode,
            sample: None,
            greedy_metric: GreedyMetric::RateFree,
        };
        if let Some(v) = self.n_view_draws {
            spec.n_view_draws = v;
        }
        spec
    }
}

/// Optional fixed view state and channel for `power-min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    /// `(row, col)` per user, 1-based.
    #[serde(default)]
    pub directions: Option<Vec<(u32, u32)>>,
    /// Rows are subcarriers, columns users.
    #[serde(default)]
    pub gains: Option<Vec<Vec<f64>>>,
}

impl StateFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid("state", format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::invalid("state", e.to_string()))
    }

    pub fn view_state(&self) -> Option<SystemViewState> {
        self.directions
            .as_ref()
            .map(|d| SystemViewState::new(d.iter().map(|&(r, c)| ViewDirection::new(r, c)).collect()))
    }

    pub fn channel(&self) -> Result<Option<ChannelState>> {
        self.gains.clone().map(ChannelState::new).transpose()
    }
}
