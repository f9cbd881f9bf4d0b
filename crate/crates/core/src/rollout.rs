//! Closed-loop episodes: command schedule, policy features, and per-step bookkeeping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::expert::{build_goals, initial_state, Command, ContactPlan, Expert, ExpertParams};
use crate::plant::{
    compute_phase, step_plant, Action, ContactMode, FailureKind, Gait, PlantParams, PlantState,
    TrajectoryRow, Vec2, Vec3,
};

pub const SHARED_DIM: usize = 16;
pub const ACTION_DIM: usize = 5;

/// Which goal vector a policy is conditioned on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Conditioning {
    Cc,
    Tcc,
    Vc,
}

impl Conditioning {
    pub const ALL: [Conditioning; 3] = [Conditioning::Cc, Conditioning::Tcc, Conditioning::Vc];

    pub fn goal_dim(self) -> usize {
        match self {
            Conditioning::Cc => crate::expert::GOAL_CC_DIM,
            Conditioning::Tcc => crate::expert::GOAL_TCC_DIM,
            Conditioning::Vc => crate::expert::GOAL_VC_DIM,
        }
    }

    pub fn input_dim(self) -> usize {
        SHARED_DIM + self.goal_dim()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Conditioning::Cc => "cc",
            Conditioning::Tcc => "tcc",
            Conditioning::Vc => "vc",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Conditioning::Cc => 1,
            Conditioning::Tcc => 2,
            Conditioning::Vc => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.tag() == tag)
    }
}

impl fmt::Display for Conditioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Conditioning {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown conditioning '{s}' (expected cc, tcc or vc)"))
    }
}

/// One command held for `duration` seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutTuple {
    pub v_d: Vec2,
    pub duration: f64,
    pub gait: Gait,
}

impl RolloutTuple {
    pub fn command(&self) -> Command {
        Command { v_d: self.v_d, gait: self.gait }
    }
}

pub fn expected_duration(tuples: &[RolloutTuple]) -> f64 {
    tuples.iter().map(|t| t.duration).sum()
}

/// Proprioceptive features shared by every policy: CoM relative to the support foot,
/// CoM height and velocity, both feet relative to the CoM, phase, and contact mode.
pub fn shared_features(s: &PlantState) -> [f64; SHARED_DIM] {
    let support = s.support_point();
    let lf = s.foot_pos[0] - s.com_pos;
    let rf = s.foot_pos[1] - s.com_pos;
    let mode = match s.mode {
        ContactMode::LeftStance => [1.0, 0.0, 0.0],
        ContactMode::RightStance => [0.0, 1.0, 0.0],
        ContactMode::Flight => [0.0, 0.0, 1.0],
    };
    [
        s.com_pos.x - support.x,
        s.com_pos.y - support.y,
        s.com_pos.z,
        s.com_vel.x,
        s.com_vel.y,
        s.com_vel.z,
        lf.x,
        lf.y,
        lf.z,
        rf.x,
        rf.y,
        rf.z,
        s.phase,
        mode[0],
        mode[1],
        mode[2],
    ]
}

/// Action with the swing target expressed relative to the support foot.
pub fn action_features(s: &PlantState, a: &Action) -> [f64; ACTION_DIM] {
    let support = s.support_point();
    [
        a.swing_target.x - support.x,
        a.swing_target.y - support.y,
        a.swing_target.z,
        a.h_ref,
        a.a_thrust,
    ]
}

/// Inverse of [`action_features`], projected onto the valid action set.
pub fn action_from_features(s: &PlantState, f: &[f64; ACTION_DIM]) -> Action {
    let support = s.support_point();
    Action {
        swing_target: Vec3::new(f[0] + support.x, f[1] + support.y, f[2]),
        h_ref: f[3],
        a_thrust: f[4],
    }
    .clamped()
}

/// Writes `[s_shared, goal]` for `conditioning` into `out`.
pub fn policy_input(
    conditioning: Conditioning,
    shared: &[f64; SHARED_DIM],
    plan: &ContactPlan,
    cmd: &Command,
    out: &mut Vec<f64>,
) {
    out.clear();
    out.extend_from_slice(shared);
    let (cc, tcc, vc) = build_goals(plan, cmd);
    match conditioning {
        Conditioning::Cc => out.extend_from_slice(&cc.0),
        Conditioning::Tcc => out.extend_from_slice(&tcc.0),
        Conditioning::Vc => out.extend_from_slice(&vc.0),
    }
}

/// A learned controller mapping `[s_shared, goal]` to action features.
pub trait Policy: Sync {
    fn conditioning(&self) -> Conditioning;
    fn act(&self, input: &[f64], out: &mut [f64; ACTION_DIM]);
}

pub enum Controller<'a> {
    Expert,
    Learned(&'a dyn Policy),
    /// Fixed world-frame action every tick.
    Constant(Action),
}

/// One dataset row in single precision; goals for all three conditionings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub shared: [f32; SHARED_DIM],
    pub cc: [f32; crate::expert::GOAL_CC_DIM],
    pub tcc: [f32; crate::expert::GOAL_TCC_DIM],
    pub vc: [f32; crate::expert::GOAL_VC_DIM],
    pub action: [f32; ACTION_DIM],
}

/// A completed step, closed by a touchdown.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based count of touchdowns in the episode.
    pub index: usize,
    pub time: f64,
    pub duration: f64,
    pub velocity: Vec2,
    /// Command active at touchdown.
    pub v_d: Vec2,
    pub gait: Gait,
    /// Planar distance between the planned and achieved touchdown.
    pub contact_error: f64,
}

#[derive(Clone, Debug)]
pub struct EpisodeOutcome {
    pub ticks: usize,
    pub expected_duration: f64,
    pub survival_time: f64,
    pub failure: Option<FailureKind>,
    /// Set when the plant rejected a state or action as non-finite.
    pub numerical_failure: bool,
    pub steps: Vec<StepRecord>,
    pub takeoffs: usize,
    pub samples: Vec<Sample>,
    pub trajectory: Vec<TrajectoryRow>,
    pub qp_fallbacks: u64,
}

impl EpisodeOutcome {
    pub fn survived(&self) -> bool {
        self.failure.is_none() && !self.numerical_failure
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Recording {
    pub samples: bool,
    pub trajectory: bool,
}

#[derive(Clone, Debug)]
pub struct EpisodeConfig {
    pub plant: PlantParams,
    pub expert: ExpertParams,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self { plant: PlantParams::default(), expert: ExpertParams::default() }
    }
}

fn to_f32<const N: usize>(v: &[f64; N]) -> [f32; N] {
    v.map(|x| x as f32)
}

/// Runs one episode of `tuples` from the periodic orbit of the first command. The
/// expert's planner runs on every tick regardless of who drives the plant.
pub fn run_episode(
    tuples: &[RolloutTuple],
    controller: &Controller<'_>,
    config: &EpisodeConfig,
    record: Recording,
) -> EpisodeOutcome {
    assert!(!tuples.is_empty(), "episode needs at least one command");
    let dt = config.plant.dt;
    let total = expected_duration(tuples);
    let n_ticks = (total / dt).round() as usize;
    let mut ends = Vec::with_capacity(tuples.len());
    let mut acc = 0.0;
    for t in tuples {
        acc += t.duration;
        ends.push((acc / dt).round() as usize);
    }

    let mut state = initial_state(&tuples[0].command(), &config.plant, &config.expert);
    let mut expert = Expert::new(config.plant.clone(), config.expert.clone(), &state);
    let mut out = EpisodeOutcome {
        ticks: 0,
        expected_duration: total,
        survival_time: total,
        failure: None,
        numerical_failure: false,
        steps: Vec::new(),
        takeoffs: 0,
        samples: Vec::new(),
        trajectory: Vec::new(),
        qp_fallbacks: 0,
    };
    if record.samples {
        out.samples.reserve(n_ticks);
    }
    let mut segment = 0;
    let mut last_touchdown_time = 0.0;
    let mut last_touchdown_com = state.com_pos.xy();
    let mut input = Vec::with_capacity(SHARED_DIM + 8);
    let mut raw = [0.0; ACTION_DIM];

    for k in 0..n_ticks {
        while segment + 1 < tuples.len() && k >= ends[segment] {
            segment += 1;
        }
        let cmd = tuples[segment].command();
        if state.mode != ContactMode::Flight {
            state.gait = cmd.gait;
        }
        let (plan, _, _) = expert.plan(&state, &cmd);
        state.planned_step_duration = plan.step_duration;
        state.phase = compute_phase(state.t_in_step, plan.step_duration);
        let shared = shared_features(&state);

        let needs_expert = record.samples || matches!(controller, Controller::Expert);
        let expert_action = needs_expert.then(|| expert.action(&state, &plan));
        if record.samples {
            let a = expert_action.expect("expert action computed when recording");
            let (cc, tcc, vc) = build_goals(&plan, &cmd);
            out.samples.push(Sample {
                shared: to_f32(&shared),
                cc: to_f32(&cc.0),
                tcc: to_f32(&tcc.0),
                vc: to_f32(&vc.0),
                action: to_f32(&action_features(&state, &a)),
            });
        }
        let action = match controller {
            Controller::Expert => expert_action.expect("expert action computed"),
            Controller::Learned(p) => {
                policy_input(p.conditioning(), &shared, &plan, &cmd, &mut input);
                p.act(&input, &mut raw);
                action_from_features(&state, &raw)
            }
            Controller::Constant(a) => *a,
        };

        let time = (k + 1) as f64 * dt;
        let (next, events) = match step_plant(&state, &action, &config.plant) {
            Ok(r) => r,
            Err(_) => {
                out.numerical_failure = true;
                out.survival_time = k as f64 * dt;
                out.ticks = k;
                break;
            }
        };
        if record.trajectory {
            out.trajectory.push(TrajectoryRow { time, state: next.clone(), action, events });
        }
        if events.takeoff.is_some() {
            out.takeoffs += 1;
        }
        if let Some(td) = events.touchdown {
            let com = next.com_pos.xy();
            let duration = time - last_touchdown_time;
            out.steps.push(StepRecord {
                index: out.steps.len() + 1,
                time,
                duration,
                velocity: (com - last_touchdown_com) / duration,
                v_d: cmd.v_d,
                gait: cmd.gait,
                contact_error: (plan.p_next - td.position).norm(),
            });
            last_touchdown_time = time;
            last_touchdown_com = com;
        }
        state = next;
        out.ticks = k + 1;
        if let Some(f) = events.failure {
            out.failure = Some(f);
            out.survival_time = time;
            break;
        }
    }
    if out.survived() {
        out.survival_time = total;
    }
    out.qp_fallbacks = expert.fallbacks();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tuple(v: f64, duration: f64, gait: Gait) -> RolloutTuple {
        RolloutTuple { v_d: Vec2::new(v, 0.0), duration, gait }
    }

    fn mean_velocity_error(o: &EpisodeOutcome) -> f64 {
        let e: Vec<f64> = o.steps.iter().filter(|s| s.index > 5).map(|s| (s.velocity - s.v_d).norm()).collect();
        e.iter().sum::<f64>() / e.len() as f64
    }

    #[test]
    fn expert_walks_at_half_a_metre_per_second() {
        let o = run_episode(&[tuple(0.5, 2.0, Gait::Walk)], &Controller::Expert, &EpisodeConfig::default(), Recording::default());
        assert!(o.survived(), "{:?}", o.failure);
        assert!(o.steps.len() >= 5, "{} steps", o.steps.len());
        assert!(mean_velocity_error(&o) < 0.15, "{}", mean_velocity_error(&o));
        assert_eq!(o.survival_time, o.expected_duration);
    }

    #[test]
    fn expert_runs_with_flight_phases() {
        let o = run_episode(&[tuple(1.0, 2.0, Gait::Run)], &Controller::Expert, &EpisodeConfig::default(), Recording::default());
        assert!(o.survived(), "{:?}", o.failure);
        assert!(o.takeoffs >= 5);
        assert!(mean_velocity_error(&o) < 0.15, "{}", mean_velocity_error(&o));
    }

    #[test]
    fn gait_transitions_survive() {
        let seq = [tuple(0.6, 2.0, Gait::Walk), tuple(1.0, 2.0, Gait::Run), tuple(0.4, 2.0, Gait::Walk)];
        let o = run_episode(&seq, &Controller::Expert, &EpisodeConfig::default(), Recording::default());
        assert!(o.survived(), "{:?} at {}", o.failure, o.survival_time);
        assert!(o.takeoffs > 0);
    }

    #[test]
    fn short_window_terminates_at_sequence_end() {
        let o = run_episode(&[tuple(0.3, 0.1, Gait::Walk)], &Controller::Expert, &EpisodeConfig::default(), Recording::default());
        assert_eq!(o.ticks, 100);
        assert!(o.survived());
        assert!(o.steps.is_empty());
    }

    #[test]
    fn constant_action_falls_quickly() {
        let a = Action { swing_target: Vec3::new(0.0, -0.05, 0.0), h_ref: 0.35, a_thrust: 0.0 };
        let o = run_episode(&[tuple(1.0, 3.0, Gait::Walk)], &Controller::Constant(a), &EpisodeConfig::default(), Recording::default());
        assert!(!o.survived());
        assert!(o.survival_time < 2.0);
    }

    #[test]
    fn samples_cover_every_tick() {
        let rec = Recording { samples: true, trajectory: true };
        let o = run_episode(&[tuple(0.2, 1.0, Gait::Walk)], &Controller::Expert, &EpisodeConfig::default(), rec);
        assert_eq!(o.samples.len(), 1000);
        assert_eq!(o.trajectory.len(), 1000);
        let s = o.samples[0];
        assert_eq!(s.vc, [0.2, 0.0, 1.0, 0.0]);
        assert_eq!(s.shared[13..], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn action_features_round_trip() {
        let state = initial_state(&Command { v_d: Vec2::new(0.4, 0.0), gait: Gait::Walk }, &PlantParams::default(), &ExpertParams::default());
        let a = Action { swing_target: Vec3::new(0.3, -0.1, 0.02), h_ref: 0.35, a_thrust: 4.0 };
        let back = action_from_features(&state, &action_features(&state, &a));
        assert!((back.swing_target - a.swing_target).norm() < 1e-15);
        assert_eq!(back.h_ref, a.h_ref);
        assert_eq!(back.a_thrust, a.a_thrust);
    }
}
