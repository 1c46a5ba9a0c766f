//! Monte-Carlo experiments: Zipf-distributed viewing directions, exponential
//! channel powers, and per-scheme averages written as CSV rows.
//!
//! Every random draw comes from its own ChaCha stream keyed by the experiment
//! seed and the draw's index, so results do not depend on thread scheduling.
//! View draw `v` uses the same stream for every exponent; with inverse-CDF
//! sampling this couples the states across exponents, and the channel set is
//! shared by all exponents and schemes.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_power, baseline_quality, BaselineKind};
use crate::error::{Error, Result};
use crate::geometry::{VideoConfig, ViewDirection};
use crate::grouping::{partition, required_tiles, SystemViewState};
use crate::powermin::{solve, ChannelState, OfdmaConfig};
use crate::qualitymax::{solve_quality, GreedyMetric, QualityScenario, StateSpaceOptions};

pub const CSV_HEADER: [&str; 7] = ["gamma", "scheme", "metric", "value", "stderr", "n_samples", "seed"];

const VIEW_STREAM: u64 = 1;
const CHANNEL_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZipfModel {
    pub gamma: f64,
    pub m_h: u32,
    pub m_v: u32,
}

impl ZipfModel {
    pub fn new(gamma: f64, m_h: u32, m_v: u32) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::invalid("zipf_gamma", "must be finite and >= 0"));
        }
        if m_h == 0 || m_v == 0 {
            return Err(Error::invalid("m_h/m_v", "must be >= 1"));
        }
        Ok(ZipfModel { gamma, m_h, m_v })
    }
}

/// Probability of each direction in row-major order; direction `(r, c)` has
/// rank `(r - 1) m_v + c`.
pub fn zipf_pmf(model: &ZipfModel) -> Vec<f64> {
    let m = (model.m_h * model.m_v) as usize;
    let w: Vec<f64> = (1..=m).map(|r| (r as f64).powf(-model.gamma)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// `k` independent Zipf draws.
pub fn draw_view_state<R: rand::Rng + ?Sized>(model: &ZipfModel, k: usize, rng: &mut R) -> SystemViewState {
    let pmf = zipf_pmf(model);
    let dist = WeightedIndex::new(&pmf).expect("pmf has positive mass");
    let directions = (0..k)
        .map(|_| {
            let i = dist.sample(rng) as u32;
            ViewDirection::new(i / model.m_v + 1, i % model.m_v + 1)
        })
        .collect();
    SystemViewState::new(directions)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub pathloss_d: f64,
    pub n_subcarriers: usize,
    pub users: usize,
}

impl ChannelModel {
    pub fn new(pathloss_d: f64, n_subcarriers: usize, users: usize) -> Result<Self> {
        if !(pathloss_d.is_finite() && pathloss_d > 0.0) {
            return Err(Error::invalid("pathloss_d", "must be finite and > 0"));
        }
        if n_subcarriers == 0 || users == 0 {
            return Err(Error::invalid("n_subcarriers/users", "must be >= 1"));
        }
        Ok(ChannelModel {
            pathloss_d,
            n_subcarriers,
            users,
        })
    }
}

/// Channel powers, exponential with mean `1/d`; exact zeros are redrawn.
pub fn draw_channel<R: rand::Rng + ?Sized>(model: &ChannelModel, rng: &mut R) -> ChannelState {
    let exp = Exp::new(model.pathloss_d).expect("d > 0");
    let gains = (0..model.n_subcarriers)
        .map(|_| {
            (0..model.users)
                .map(|_| loop {
                    let h: f64 = exp.sample(rng);
                    if h > 0.0 {
                        break h;
                    }
                })
                .collect()
        })
        .collect();
    ChannelState::new(gains).expect("positive finite gains")
}

/// Stream `index` of family `family` under `seed`.
pub fn stream_rng(seed: u64, family: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((family << 48) | index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    Unicast,
    Equal,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Proposed, Scheme::Unicast, Scheme::Equal];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Unicast => "unicast",
            Scheme::Equal => "equal",
        }
    }

    fn baseline(self) -> Option<BaselineKind> {
        match self {
            Scheme::Proposed => None,
            Scheme::Unicast => Some(BaselineKind::Unicast),
            Scheme::Equal => Some(BaselineKind::EqualSubcarrier),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Power,
    Quality,
}

fn default_channel_states() -> usize {
    100
}

fn default_view_draws() -> usize {
    50
}

fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub video: VideoConfig,
    pub ofdma: OfdmaConfig,
    pub users: usize,
    pub pathloss_d: f64,
    #[serde(default)]
    pub encoding_rate_bps: Option<f64>,
    #[serde(default)]
    pub budget_w: Option<f64>,
    /// Worst channel power for quality mode; drawn from the channel set when absent.
    #[serde(default)]
    pub min_gain: Option<f64>,
    pub gammas: Vec<f64>,
    #[serde(default = "default_channel_states")]
    pub n_channel_states: usize,
    #[serde(default = "default_view_draws")]
    pub n_view_draws: usize,
    pub seed: u64,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    pub mode: Mode,
    /// Sample this many view states in quality mode when the state space is too large.
    #[serde(default)]
    pub sample: Option<usize>,
    #[serde(default)]
    pub greedy_metric: GreedyMetric,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.video.validate()?;
        self.ofdma.validate()?;
        ChannelModel::new(self.pathloss_d, self.ofdma.n_subcarriers, self.users)?;
        if self.gammas.is_empty() {
            return Err(Error::invalid("gammas", "need at least one exponent"));
        }
        for &g in &self.gammas {
            ZipfModel::new(g, self.video.m_h, self.video.m_v)?;
        }
        if self.n_channel_states == 0 {
            return Err(Error::invalid("n_channel_states", "must be >= 1"));
        }
        if self.n_view_draws == 0 {
            return Err(Error::invalid("n_view_draws", "must be >= 1"));
        }
        if self.schemes.is_empty() {
            return Err(Error::invalid("schemes", "need at least one scheme"));
        }
        match self.mode {
            Mode::Power => match self.encoding_rate_bps {
                Some(d) if d.is_finite() && d >= 0.0 => Ok(()),
                Some(_) => Err(Error::invalid("encoding_rate_bps", "must be finite and >= 0")),
                None => Err(Error::invalid("encoding_rate_bps", "required in power mode")),
            },
            Mode::Quality => match self.budget_w {
                Some(_) => Ok(()),
                None => Err(Error::invalid("budget_w", "required in quality mode")),
            },
        }
    }

    pub fn channel_model(&self) -> ChannelModel {
        ChannelModel {
            pathloss_d: self.pathloss_d,
            n_subcarriers: self.ofdma.n_subcarriers,
            users: self.users,
        }
    }

    /// The shared channel set, one stream per state.
    pub fn channels(&self) -> Vec<ChannelState> {
        let model = self.channel_model();
        (0..self.n_channel_states as u64)
            .map(|h| draw_channel(&model, &mut stream_rng(self.seed, CHANNEL_STREAM, h)))
            .collect()
    }

    /// View draw `v` at exponent `gamma`.
    pub fn view_state(&self, gamma: f64, v: usize) -> SystemViewState {
        let zipf = ZipfModel {
            gamma,
            m_h: self.video.m_h,
            m_v: self.video.m_v,
        };
        draw_view_state(&zipf, self.users, &mut stream_rng(self.seed, VIEW_STREAM, v as u64))
    }

    /// Quality scenario with `min_gain` given or taken as the smallest power
    /// in the channel set.
    pub fn quality_scenario(&self) -> Result<QualityScenario> {
        let budget_w = self
            .budget_w
            .ok_or_else(|| Error::invalid("budget_w", "required in quality mode"))?;
        let min_gain = match self.min_gain {
            Some(g) => g,
            None => self
                .channels()
                .iter()
                .map(ChannelState::min_gain)
                .fold(f64::INFINITY, f64::min),
        };
        Ok(QualityScenario {
            video: self.video,
            ofdma: self.ofdma,
            users: self.users,
            budget_w,
            min_gain,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub gamma: f64,
    pub scheme: String,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Total power of one scheme on one `(X, H)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub gamma: f64,
    pub view_draw: usize,
    pub channel: usize,
    pub scheme: Scheme,
    /// `None` when the solver failed on this pair.
    pub power_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerExperiment {
    pub rows: Vec<Row>,
    pub samples: Vec<PowerSample>,
}

/// Power of `scheme` on one view state and channel.
pub fn scheme_power(
    scheme: Scheme,
    state: &SystemViewState,
    video: &VideoConfig,
    ch: &ChannelState,
    encoding_rate_bps: f64,
    ofdma: &OfdmaConfig,
) -> Result<f64> {
    match scheme.baseline() {
        None => {
            let part = partition(&required_tiles(state, video)?)?;
            Ok(solve(&part, ch, encoding_rate_bps, ofdma)?.primal_power_w)
        }
        Some(kind) => Ok(baseline_power(kind, state, video, ch, encoding_rate_bps, ofdma)?.total_power_w()),
    }
}

/// Mean power per exponent and scheme: averaged over the channel set for
/// each view draw, then over view draws. `stderr` is taken across view draws
/// and `n_samples` counts the solved `(X, H)` pairs. Failed pairs are left
/// out; a cell with no solved pair reports NaN.
pub fn run_power_experiment(spec: &ExperimentSpec) -> Result<PowerExperiment> {
    spec.validate()?;
    let d = spec.encoding_rate_bps.expect("validated");
    let channels = spec.channels();
    let tasks: Vec<(usize, usize)> = (0..spec.gammas.len())
        .flat_map(|g| (0..spec.n_view_draws).map(move |v| (g, v)))
        .collect();
    let per_task: Vec<Vec<PowerSample>> = tasks
        .par_iter()
        .map(|&(g, v)| {
            let gamma = spec.gammas[g];
            let state = spec.view_state(gamma, v);
            let mut out = Vec::with_capacity(channels.len() * spec.schemes.len());
            for (h, ch) in channels.iter().enumerate() {
                for &scheme in &spec.schemes {
                    let power_w = scheme_power(scheme, &state, &spec.video, ch, d, &spec.ofdma).ok();
                    out.push(PowerSample {
                        gamma,
                        view_draw: v,
                        channel: h,
                        scheme,
                        power_w,
                    });
                }
            }
            out
        })
        .collect();
    let samples: Vec<PowerSample> = per_task.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for &gamma in &spec.gammas {
        for &scheme in &spec.schemes {
            let mut view_means = Vec::new();
            let mut solved = 0;
            for v in 0..spec.n_view_draws {
                let vals: Vec<f64> = samples
                    .iter()
                    .filter(|s| s.gamma == gamma && s.scheme == scheme && s.view_draw == v)
                    .filter_map(|s| s.power_w)
                    .collect();
                if !vals.is_empty() {
                    solved += vals.len();
                    view_means.push(vals.iter().sum::<f64>() / vals.len() as f64);
                }
            }
            let (value, stderr) = mean_stderr(&view_means);
            rows.push(Row {
                gamma,
                scheme: scheme.name().into(),
                metric: "mean_power_w".into(),
                value,
                stderr,
                n_samples: solved,
                seed: spec.seed,
            });
        }
    }
    Ok(PowerExperiment { rows, samples })
}

/// Worst-case rate per scheme, repeated for every exponent since the minimum
/// over view states does not involve the direction distribution.
pub fn run_quality_experiment(spec: &ExperimentSpec) -> Result<Vec<Row>> {
    spec.validate()?;
    let scn = spec.quality_scenario()?;
    let opts = StateSpaceOptions {
        sample: spec.sample,
        seed: spec.seed,
        keep_states: false,
        metric: spec.greedy_metric,
        ..StateSpaceOptions::default()
    };
    let mut rows = Vec::new();
    let mut by_scheme = Vec::new();
    for &scheme in &spec.schemes {
        let res = match scheme.baseline() {
            None => solve_quality(&scn, &opts)?,
            Some(kind) => baseline_quality(kind, &scn, &opts)?,
        };
        by_scheme.push((scheme, res.rate_bps, res.n_states));
    }
    for &gamma in &spec.gammas {
        for &(scheme, rate, n_states) in &by_scheme {
            rows.push(Row {
                gamma,
                scheme: scheme.name().into(),
                metric: "rate_bps".into(),
                value: rate,
                stderr: 0.0,
                n_samples: n_states,
                seed: spec.seed,
            });
        }
    }
    Ok(rows)
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Serializes rows with the fixed header.
pub fn write_csv<W: std::io::Write>(rows: &[Row], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.gamma.to_string(),
            r.scheme.clone(),
            r.metric.clone(),
            r.value.to_string(),
            r.stderr.to_string(),
            r.n_samples.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()
}
