//! Evaluation suites: single batch, triple batch and off-axis velocity commands.
//! Every number in a report is an aggregation of per-episode results.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pipeline::{sample_rollout_tuples, DURATION_RANGE, VELOCITY_RANGE};
use crate::plant::{FailureKind, Gait, Vec2};
use crate::rollout::{run_episode, Controller, EpisodeConfig, Recording, RolloutTuple};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Single,
    Triple,
    Ood,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Single, Suite::Triple, Suite::Ood];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Single => "single",
            Suite::Triple => "triple",
            Suite::Ood => "ood",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Suite::Single => 1,
            Suite::Triple => 2,
            Suite::Ood => 3,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown suite '{s}' (expected single, triple or ood)"))
    }
}

/// Seed of episode `index`; identical for every policy evaluated on the same cell.
pub fn episode_seed(base: u64, suite: Suite, angle_index: usize, index: usize) -> u64 {
    base.wrapping_add(suite.stream() << 40)
        .wrapping_add((angle_index as u64) << 24)
        .wrapping_add(index as u64)
}

/// Command sequence of one evaluation episode. Off-axis commands draw a signed speed
/// from the training range and point it `angle_deg` away from the sagittal axis.
pub fn episode_tuples(suite: Suite, seed: u64, angle_deg: f64) -> Vec<RolloutTuple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match suite {
        Suite::Single => sample_rollout_tuples(&mut rng, 1),
        Suite::Triple => sample_rollout_tuples(&mut rng, 3),
        Suite::Ood => {
            let s = rng.gen_range(VELOCITY_RANGE.0..=VELOCITY_RANGE.1);
            let duration = rng.gen_range(DURATION_RANGE.0..=DURATION_RANGE.1);
            let gait = if rng.gen_bool(0.5) { Gait::Walk } else { Gait::Run };
            let th = angle_deg.to_radians();
            vec![RolloutTuple { v_d: Vec2::new(s * th.cos(), s * th.sin()), duration, gait }]
        }
    }
}

/// Result of one closed-loop episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalEpisodeResult {
    pub policy: String,
    pub dataset_size: Option<usize>,
    pub suite: Suite,
    pub angle_deg: Option<f64>,
    pub episode: usize,
    pub seed: u64,
    pub survived: bool,
    pub survival_time: f64,
    pub expected_duration: f64,
    pub failure: Option<FailureKind>,
    /// Per completed step: |average step velocity − v_d|, and its x and y parts.
    pub velocity_errors: Vec<f64>,
    pub velocity_errors_x: Vec<f64>,
    pub velocity_errors_y: Vec<f64>,
    /// Per touchdown: planar distance between planned and achieved contact.
    pub contact_errors: Vec<f64>,
}

/// What to evaluate and how it is labelled in the report.
pub struct Contender<'a> {
    pub policy: String,
    pub dataset_size: Option<usize>,
    pub controller: Controller<'a>,
}

/// Closed loop of one contender on episode `index` of a suite. Steps completed are
/// scored whether or not the episode later fails.
pub fn run_policy_episode(
    contender: &Contender<'_>,
    suite: Suite,
    angle: Option<(usize, f64)>,
    index: usize,
    seed: u64,
    config: &EpisodeConfig,
) -> EvalEpisodeResult {
    let (ai, deg) = angle.unwrap_or((0, 0.0));
    let s = episode_seed(seed, suite, ai, index);
    let tuples = episode_tuples(suite, s, deg);
    let o = run_episode(&tuples, &contender.controller, config, Recording::default());
    let mut r = EvalEpisodeResult {
        policy: contender.policy.clone(),
        dataset_size: contender.dataset_size,
        suite,
        angle_deg: angle.map(|a| a.1),
        episode: index,
        seed: s,
        survived: o.survived(),
        survival_time: o.survival_time,
        expected_duration: o.expected_duration,
        // A rejected non-finite state is scored as a fall.
        failure: o.failure.or(o.numerical_failure.then_some(FailureKind::Height)),
        velocity_errors: Vec::with_capacity(o.steps.len()),
        velocity_errors_x: Vec::with_capacity(o.steps.len()),
        velocity_errors_y: Vec::with_capacity(o.steps.len()),
        contact_errors: Vec::with_capacity(o.steps.len()),
    };
    for st in &o.steps {
        let e = st.velocity - st.v_d;
        r.velocity_errors.push(e.norm());
        r.velocity_errors_x.push(e.x.abs());
        r.velocity_errors_y.push(e.y.abs());
        r.contact_errors.push(st.contact_error);
    }
    r
}

/// Runs `n` paired episodes per contender. Results are ordered by contender, then episode.
pub fn eval_suite(
    contenders: &[Contender<'_>],
    suite: Suite,
    angle: Option<(usize, f64)>,
    n: usize,
    seed: u64,
    config: &EpisodeConfig,
) -> Vec<EvalEpisodeResult> {
    let mut out = Vec::with_capacity(contenders.len() * n);
    for c in contenders {
        let cell: Vec<EvalEpisodeResult> = (0..n)
            .into_par_iter()
            .map(|i| run_policy_episode(c, suite, angle, i, seed, config))
            .collect();
        out.extend(cell);
    }
    out
}

/// Minimum, quartiles and maximum with linear interpolation between order statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub count: usize,
    pub mean: Option<f64>,
    pub quartiles: Option<Quartiles>,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Self {
        let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
        Self { count: values.len(), mean, quartiles: Quartiles::of(values) }
    }
}

pub fn failure_rate(results: &[EvalEpisodeResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().filter(|r| !r.survived).count() as f64 / results.len() as f64
}

pub fn survival_quartiles(results: &[EvalEpisodeResult]) -> Option<Quartiles> {
    Quartiles::of(&results.iter().map(|r| r.survival_time).collect::<Vec<_>>())
}

/// Per-step velocity errors pooled over episodes, skipping each episode's first
/// `skip_steps` steps.
pub fn velocity_error(results: &[EvalEpisodeResult], skip_steps: usize) -> Distribution {
    pooled(results, skip_steps, |r| &r.velocity_errors)
}

pub fn contact_error(results: &[EvalEpisodeResult]) -> Distribution {
    pooled(results, 0, |r| &r.contact_errors)
}

fn pooled(
    results: &[EvalEpisodeResult],
    skip: usize,
    f: impl Fn(&EvalEpisodeResult) -> &Vec<f64>,
) -> Distribution {
    let v: Vec<f64> = results.iter().flat_map(|r| f(r).iter().skip(skip).copied()).collect();
    Distribution::of(&v)
}

/// One report cell: one policy at one dataset size on one suite (and angle).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub policy: String,
    pub dataset_size: Option<usize>,
    pub suite: Suite,
    pub angle_deg: Option<f64>,
    pub episodes: usize,
    pub failures: usize,
    /// Failures per 100 episodes.
    pub failures_per_100: f64,
    pub first_seed: Option<u64>,
    pub survival: Option<Quartiles>,
    pub velocity_error: Distribution,
    pub velocity_error_x: Distribution,
    pub velocity_error_y: Distribution,
    pub contact_error: Distribution,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub velocity_skip_steps: usize,
    pub cells: Vec<CellReport>,
}

type CellKey = (Suite, u64, String, Option<usize>);

impl EvalReport {
    /// Groups results into cells ordered by suite, angle, policy, dataset size.
    pub fn aggregate(results: &[EvalEpisodeResult], skip_steps: usize) -> Self {
        let mut groups: BTreeMap<CellKey, Vec<EvalEpisodeResult>> = BTreeMap::new();
        for r in results {
            let angle_key = r.angle_deg.map_or(0, |a| a.to_bits());
            groups
                .entry((r.suite, angle_key, r.policy.clone(), r.dataset_size))
                .or_default()
                .push(r.clone());
        }
        let cells = groups
            .into_values()
            .map(|mut g| {
                g.sort_by_key(|r| r.episode);
                let failures = g.iter().filter(|r| !r.survived).count();
                CellReport {
                    policy: g[0].policy.clone(),
                    dataset_size: g[0].dataset_size,
                    suite: g[0].suite,
                    angle_deg: g[0].angle_deg,
                    episodes: g.len(),
                    failures,
                    failures_per_100: 100.0 * failure_rate(&g),
                    first_seed: g.first().map(|r| r.seed),
                    survival: survival_quartiles(&g),
                    velocity_error: velocity_error(&g, skip_steps),
                    velocity_error_x: pooled(&g, skip_steps, |r| &r.velocity_errors_x),
                    velocity_error_y: pooled(&g, skip_steps, |r| &r.velocity_errors_y),
                    contact_error: contact_error(&g),
                }
            })
            .collect();
        Self { velocity_skip_steps: skip_steps, cells }
    }

    pub fn cell(
        &self,
        policy: &str,
        dataset_size: Option<usize>,
        suite: Suite,
        angle_deg: Option<f64>,
    ) -> Option<&CellReport> {
        self.cells.iter().find(|c| {
            c.policy == policy
                && c.dataset_size == dataset_size
                && c.suite == suite
                && c.angle_deg == angle_deg
        })
    }

    /// One row per (cell, metric) for plotting against dataset size.
    pub fn write_long_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["suite", "angle_deg", "policy", "dataset_size", "metric", "value"])?;
        for c in &self.cells {
            let mut metrics: Vec<(&str, Option<f64>)> = vec![
                ("failures_per_100", Some(c.failures_per_100)),
                ("survival_median", c.survival.map(|q| q.median)),
                ("survival_q1", c.survival.map(|q| q.q1)),
                ("survival_q3", c.survival.map(|q| q.q3)),
                ("velocity_error_mean", c.velocity_error.mean),
                ("velocity_error_x_mean", c.velocity_error_x.mean),
                ("velocity_error_y_mean", c.velocity_error_y.mean),
                ("contact_error_mean", c.contact_error.mean),
            ];
            if let Some(q) = c.velocity_error.quartiles {
                metrics.push(("velocity_error_median", Some(q.median)));
            }
            if let Some(q) = c.contact_error.quartiles {
                metrics.push(("contact_error_median", Some(q.median)));
            }
            for (name, v) in metrics {
                let Some(v) = v else { continue };
                w.write_record([
                    c.suite.as_str().to_string(),
                    c.angle_deg.map(|a| a.to_string()).unwrap_or_default(),
                    c.policy.clone(),
                    c.dataset_size.map(|n| n.to_string()).unwrap_or_default(),
                    name.to_string(),
                    v.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct EpisodeRow {
    policy: String,
    dataset_size: Option<usize>,
    suite: Suite,
    angle_deg: Option<f64>,
    episode: usize,
    seed: u64,
    survived: bool,
    survival_time: f64,
    expected_duration: f64,
    failure: Option<String>,
    steps: usize,
    velocity_errors: String,
    velocity_errors_x: String,
    velocity_errors_y: String,
    contact_errors: String,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(";")
}

fn split(s: &str) -> Result<Vec<f64>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(|x| x.parse::<f64>().map_err(|e| format!("bad number '{x}': {e}"))).collect()
}

/// One row per episode; error lists are `;`-joined with round-trip precision.
pub fn write_episodes_csv<W: Write>(w: W, results: &[EvalEpisodeResult]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(w);
    for r in results {
        w.serialize(EpisodeRow {
            policy: r.policy.clone(),
            dataset_size: r.dataset_size,
            suite: r.suite,
            angle_deg: r.angle_deg,
            episode: r.episode,
            seed: r.seed,
            survived: r.survived,
            survival_time: r.survival_time,
            expected_duration: r.expected_duration,
            failure: r.failure.map(|f| f.as_str().to_string()),
            steps: r.velocity_errors.len(),
            velocity_errors: join(&r.velocity_errors),
            velocity_errors_x: join(&r.velocity_errors_x),
            velocity_errors_y: join(&r.velocity_errors_y),
            contact_errors: join(&r.contact_errors),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: {msg}")]
    Field { row: usize, msg: String },
}

pub fn read_episodes_csv<R: Read>(r: R) -> Result<Vec<EvalEpisodeResult>, ReadError> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (row, rec) in rd.deserialize::<EpisodeRow>().enumerate() {
        let e = rec?;
        let field = |msg: String| ReadError::Field { row: row + 1, msg };
        let failure = match e.failure.as_deref() {
            None => None,
            Some("velocity") => Some(FailureKind::Velocity),
            Some("height") => Some(FailureKind::Height),
            Some(other) => return Err(field(format!("unknown failure kind '{other}'"))),
        };
        let r = EvalEpisodeResult {
            policy: e.policy,
            dataset_size: e.dataset_size,
            suite: e.suite,
            angle_deg: e.angle_deg,
            episode: e.episode,
            seed: e.seed,
            survived: e.survived,
            survival_time: e.survival_time,
            expected_duration: e.expected_duration,
            failure,
            velocity_errors: split(&e.velocity_errors).map_err(field)?,
            velocity_errors_x: split(&e.velocity_errors_x).map_err(field)?,
            velocity_errors_y: split(&e.velocity_errors_y).map_err(field)?,
            contact_errors: split(&e.contact_errors).map_err(field)?,
        };
        if r.velocity_errors.len() != e.steps || r.contact_errors.len() != e.steps {
            return Err(field("error lists disagree with the step count".into()));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn write_report_json<W: Write>(w: W, report: &EvalReport) -> io::Result<()> {
    serde_json::to_writer_pretty(w, report).map_err(io::Error::other)
}
