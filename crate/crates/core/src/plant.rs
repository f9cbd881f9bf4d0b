//! Point-mass biped plant stepped at a fixed 1 kHz.
//!
//! The trunk is a point mass, the feet are massless points. In single stance the
//! horizontal CoM follows the linear inverted pendulum about the stance foot and the
//! vertical axis is a fixed-gain PD "leg spring" with an optional feedforward thrust.
//! Running adds a ballistic flight phase entered when the leg would have to pull.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;

/// Upper clamp for the phase variable, which lives in `[0, 1)`.
const PHASE_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum PlantError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("action out of range: {0}")]
    ActionOutOfRange(&'static str),
    #[error("invalid plant parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    /// +1 for the left foot, -1 for the right foot (world y points left).
    pub fn lateral_sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContactMode {
    LeftStance,
    RightStance,
    Flight,
}

impl ContactMode {
    pub fn stance(side: Side) -> Self {
        match side {
            Side::Left => ContactMode::LeftStance,
            Side::Right => ContactMode::RightStance,
        }
    }

    pub fn stance_side(self) -> Option<Side> {
        match self {
            ContactMode::LeftStance => Some(Side::Left),
            ContactMode::RightStance => Some(Side::Right),
            ContactMode::Flight => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ContactMode::LeftStance => "left",
            ContactMode::RightStance => "right",
            ContactMode::Flight => "flight",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gait {
    Walk,
    Run,
}

impl Gait {
    pub fn as_str(self) -> &'static str {
        match self {
            Gait::Walk => "walk",
            Gait::Run => "run",
        }
    }
}

impl std::str::FromStr for Gait {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "walk" => Ok(Gait::Walk),
            "run" => Ok(Gait::Run),
            other => Err(format!("unknown gait `{other}` (expected walk or run)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantParams {
    pub mass: f64,
    pub gravity: f64,
    /// Nominal CoM height, sets the pendulum frequency.
    pub h_nom: f64,
    pub stance_kp: f64,
    pub stance_kd: f64,
    pub swing_kp: f64,
    pub swing_kd: f64,
    /// Norm clamp on the swing-foot PD acceleration.
    pub swing_max_acc: f64,
    /// Maximum distance between CoM and either foot.
    pub leg_reach: f64,
    pub touchdown_debounce: f64,
    pub dt: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            mass: 1.3,
            gravity: 9.81,
            h_nom: 0.35,
            stance_kp: 1000.0,
            stance_kd: 60.0,
            swing_kp: 2500.0,
            swing_kd: 100.0,
            swing_max_acc: 400.0,
            leg_reach: 0.45,
            touchdown_debounce: 0.05,
            dt: 0.001,
        }
    }
}

impl PlantParams {
    pub fn omega(&self) -> f64 {
        (self.gravity / self.h_nom).sqrt()
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("h_nom", self.h_nom),
            ("stance_kp", self.stance_kp),
            ("stance_kd", self.stance_kd),
            ("swing_kp", self.swing_kp),
            ("swing_kd", self.swing_kd),
            ("swing_max_acc", self.swing_max_acc),
            ("leg_reach", self.leg_reach),
            ("touchdown_debounce", self.touchdown_debounce),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlantError::InvalidParams(format!("{name} must be finite and > 0")));
            }
        }
        if (self.dt - 0.001).abs() > 1e-12 {
            return Err(PlantError::InvalidParams("dt must be 0.001 s (1 kHz)".into()));
        }
        if self.leg_reach <= self.h_nom {
            return Err(PlantError::InvalidParams("leg_reach must exceed h_nom".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub com_pos: Vec3,
    pub com_vel: Vec3,
    /// Indexed by [`Side::index`].
    pub foot_pos: [Vec3; 2],
    pub foot_vel: [Vec3; 2],
    pub mode: ContactMode,
    pub gait: Gait,
    /// Foot that carried the last stance; equals the stance foot outside flight.
    pub last_stance: Side,
    /// Seconds since the last contact-mode transition.
    pub t_in_phase: f64,
    /// Seconds since the last touchdown.
    pub t_in_step: f64,
    pub step_index: u64,
    /// Planned duration of the current step (stance plus flight), published by the planner.
    pub planned_step_duration: f64,
    pub phase: f64,
}

impl PlantState {
    /// Single stance on `stance` with the CoM at `com_pos`/`com_vel`. Both feet rest on
    /// the ground.
    pub fn standing(
        stance: Side,
        stance_foot: Vec2,
        swing_foot: Vec2,
        com_pos: Vec3,
        com_vel: Vec3,
        gait: Gait,
        planned_step_duration: f64,
    ) -> Self {
        let mut foot_pos = [Vec3::zeros(); 2];
        foot_pos[stance.index()] = Vec3::new(stance_foot.x, stance_foot.y, 0.0);
        foot_pos[stance.other().index()] = Vec3::new(swing_foot.x, swing_foot.y, 0.0);
        Self {
            com_pos,
            com_vel,
            foot_pos,
            foot_vel: [Vec3::zeros(); 2],
            mode: ContactMode::stance(stance),
            gait,
            last_stance: stance,
            t_in_phase: 0.0,
            t_in_step: 0.0,
            step_index: 0,
            planned_step_duration,
            phase: 0.0,
        }
    }

    pub fn stance_side(&self) -> Option<Side> {
        self.mode.stance_side()
    }

    /// The foot travelling to the next contact (in flight: the one that did not push off).
    pub fn swing_side(&self) -> Side {
        self.last_stance.other()
    }

    /// Ground point of the current (or, in flight, the most recent) stance foot.
    pub fn support_point(&self) -> Vec2 {
        self.foot_pos[self.last_stance.index()].xy()
    }

    /// Stance duration of the current step once airborne.
    pub fn stance_duration(&self) -> f64 {
        match self.mode {
            ContactMode::Flight => self.t_in_step - self.t_in_phase,
            _ => self.t_in_step,
        }
    }

    pub fn check_finite(&self) -> Result<(), PlantError> {
        let vectors_ok = self.com_pos.iter().all(|v| v.is_finite())
            && self.com_vel.iter().all(|v| v.is_finite())
            && self.foot_pos.iter().all(|p| p.iter().all(|v| v.is_finite()))
            && self.foot_vel.iter().all(|p| p.iter().all(|v| v.is_finite()));
        if !vectors_ok {
            return Err(PlantError::NonFinite("plant state"));
        }
        if ![self.t_in_phase, self.t_in_step, self.planned_step_duration, self.phase]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(PlantError::NonFinite("plant state timers"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// World-frame swing-foot PD setpoint.
    pub swing_target: Vec3,
    /// CoM height setpoint of the vertical leg PD.
    pub h_ref: f64,
    /// Vertical feedforward acceleration.
    pub a_thrust: f64,
}

impl Action {
    pub const H_REF_MIN: f64 = 0.05;
    pub const H_REF_MAX: f64 = 1.0;

    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.swing_target.iter().all(|v| v.is_finite())
            && self.h_ref.is_finite()
            && self.a_thrust.is_finite())
        {
            return Err(PlantError::NonFinite("action"));
        }
        if !(Self::H_REF_MIN..=Self::H_REF_MAX).contains(&self.h_ref) {
            return Err(PlantError::ActionOutOfRange("h_ref"));
        }
        if self.a_thrust < 0.0 {
            return Err(PlantError::ActionOutOfRange("a_thrust"));
        }
        Ok(())
    }

    /// Projects finite raw values (e.g. network outputs) onto the valid action set.
    /// Non-finite inputs are left untouched so the plant rejects them.
    pub fn clamped(self) -> Self {
        Self {
            swing_target: self.swing_target,
            h_ref: if self.h_ref.is_finite() {
                self.h_ref.clamp(Self::H_REF_MIN, Self::H_REF_MAX)
            } else {
                self.h_ref
            },
            a_thrust: if self.a_thrust.is_finite() { self.a_thrust.max(0.0) } else { self.a_thrust },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureKind {
    Velocity,
    Height,
}

impl FailureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureKind::Velocity => "velocity",
            FailureKind::Height => "height",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Touchdown {
    pub foot: Side,
    pub position: Vec2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Takeoff {
    pub velocity: Vec3,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepEvents {
    pub touchdown: Option<Touchdown>,
    pub takeoff: Option<Takeoff>,
    pub failure: Option<FailureKind>,
}

pub const MAX_ABS_FORWARD_VELOCITY: f64 = 3.0;
pub const MIN_COM_HEIGHT: f64 = 0.1;
pub const MAX_COM_HEIGHT: f64 = 0.6;

/// Failure when |ẋ_com| exceeds 3 m/s or the CoM height leaves the open band (0.1, 0.6) m.
pub fn detect_failure(state: &PlantState) -> Option<FailureKind> {
    if state.com_vel.x.abs() > MAX_ABS_FORWARD_VELOCITY {
        return Some(FailureKind::Velocity);
    }
    let h = state.com_pos.z;
    if h <= MIN_COM_HEIGHT || h >= MAX_COM_HEIGHT {
        return Some(FailureKind::Height);
    }
    None
}

/// Advances the plant by one control period with semi-implicit Euler.
pub fn step_plant(
    state: &PlantState,
    action: &Action,
    params: &PlantParams,
) -> Result<(PlantState, StepEvents), PlantError> {
    state.check_finite()?;
    action.validate()?;

    let dt = params.dt;
    let g = params.gravity;
    let ballistic = Vec3::new(0.0, 0.0, -g);
    let mut next = state.clone();
    let mut events = StepEvents::default();

    next.t_in_phase += dt;
    next.t_in_step += dt;

    let com_acc = match state.stance_side() {
        None => ballistic,
        Some(stance) => {
            let foot = state.foot_pos[stance.index()];
            if (state.com_pos - foot).norm() >= params.leg_reach {
                // Over-extended leg carries no load.
                ballistic
            } else {
                let omega2 = params.gravity / params.h_nom;
                let axy = (state.com_pos.xy() - foot.xy()) * omega2;
                // Walking carries no thrust channel.
                let thrust = if state.gait == Gait::Run { action.a_thrust } else { 0.0 };
                let az = params.stance_kp * (action.h_ref - state.com_pos.z)
                    - params.stance_kd * state.com_vel.z
                    + thrust;
                if az + g > 0.0 {
                    Vec3::new(axy.x, axy.y, az)
                } else {
                    if state.gait == Gait::Run {
                        next.mode = ContactMode::Flight;
                        next.t_in_phase = 0.0;
                    }
                    ballistic
                }
            }
        }
    };
    next.com_vel += com_acc * dt;
    next.com_pos += next.com_vel * dt;
    if state.mode != ContactMode::Flight && next.mode == ContactMode::Flight {
        events.takeoff = Some(Takeoff { velocity: next.com_vel });
    }

    let swing = state.swing_side();
    let s = swing.index();
    let p_old = state.foot_pos[s];
    let v_old = state.foot_vel[s];
    let mut acc = (action.swing_target - p_old) * params.swing_kp - v_old * params.swing_kd;
    let acc_norm = acc.norm();
    if acc_norm > params.swing_max_acc {
        acc *= params.swing_max_acc / acc_norm;
    }
    let mut v = v_old + acc * dt;
    let mut p = clamp_to_reach(p_old + v * dt, &next.com_pos, params.leg_reach);
    let descending = p.z <= 0.0 && p.z < p_old.z;
    if p.z <= 0.0 {
        p.z = 0.0;
    }
    v = (p - p_old) / dt;
    let touchdown = descending && next.t_in_phase > params.touchdown_debounce;
    if touchdown {
        p.z = 0.0;
        v = Vec3::zeros();
    }
    next.foot_pos[s] = p;
    next.foot_vel[s] = v;

    // The pushed-off foot hangs in place during flight, dragged only by leg reach.
    if next.mode == ContactMode::Flight {
        let f = state.last_stance.index();
        let q_old = state.foot_pos[f];
        let q = clamp_to_reach(q_old, &next.com_pos, params.leg_reach);
        let q = Vec3::new(q.x, q.y, q.z.max(0.0));
        next.foot_vel[f] = (q - q_old) / dt;
        next.foot_pos[f] = q;
    }

    if touchdown {
        next.mode = ContactMode::stance(swing);
        next.last_stance = swing;
        next.t_in_phase = 0.0;
        next.t_in_step = 0.0;
        next.step_index += 1;
        events.touchdown = Some(Touchdown { foot: swing, position: p.xy() });
    }

    next.phase = compute_phase(next.t_in_step, next.planned_step_duration);
    next.check_finite()?;
    events.failure = detect_failure(&next);
    Ok((next, events))
}

pub fn compute_phase(t_in_step: f64, planned: f64) -> f64 {
    if planned > 0.0 {
        (t_in_step / planned).clamp(0.0, 1.0 - PHASE_EPS)
    } else {
        1.0 - PHASE_EPS
    }
}

fn clamp_to_reach(p: Vec3, com: &Vec3, reach: f64) -> Vec3 {
    let d = p - com;
    let n = d.norm();
    if n > reach {
        com + d * (reach / n)
    } else {
        p
    }
}

/// One recorded tick of a trajectory dump.
#[derive(Clone, Debug)]
pub struct TrajectoryRow {
    pub time: f64,
    pub state: PlantState,
    pub action: Action,
    pub events: StepEvents,
}

pub const TRAJECTORY_CSV_HEADER: &str = "time,mode,gait,\
com_x,com_y,com_z,com_vx,com_vy,com_vz,\
lf_x,lf_y,lf_z,lf_vx,lf_vy,lf_vz,\
rf_x,rf_y,rf_z,rf_vx,rf_vy,rf_vz,\
phase,swing_x,swing_y,swing_z,h_ref,a_thrust,\
touchdown,takeoff,failure";

pub fn write_trajectory_csv<W: Write>(mut out: W, rows: &[TrajectoryRow]) -> io::Result<()> {
    writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
    for r in rows {
        let s = &r.state;
        write!(out, "{:.3},{},{}", r.time, s.mode.as_str(), s.gait.as_str())?;
        for v in s.com_pos.iter().chain(s.com_vel.iter()) {
            write!(out, ",{v}")?;
        }
        for side in [Side::Left, Side::Right] {
            for v in s.foot_pos[side.index()].iter().chain(s.foot_vel[side.index()].iter()) {
                write!(out, ",{v}")?;
            }
        }
        write!(out, ",{}", s.phase)?;
        for v in r.action.swing_target.iter() {
            write!(out, ",{v}")?;
        }
        writeln!(
            out,
            ",{},{},{},{},{}",
            r.action.h_ref,
            r.action.a_thrust,
            u8::from(r.events.touchdown.is_some()),
            u8::from(r.events.takeoff.is_some()),
            r.events.failure.map_or("", FailureKind::as_str),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> PlantParams {
        PlantParams::default()
    }

    fn walk_state() -> PlantState {
        let p = params();
        PlantState::standing(
            Side::Left,
            Vec2::zeros(),
            Vec2::new(0.0, -0.1),
            Vec3::new(0.0, 0.0, p.h_nom),
            Vec3::zeros(),
            Gait::Walk,
            0.3,
        )
    }

    fn hold(state: &PlantState, h_ref: f64) -> Action {
        Action { swing_target: state.foot_pos[state.swing_side().index()], h_ref, a_thrust: 0.0 }
    }

    #[test]
    fn equilibrium_above_stance_foot_is_stationary() {
        let p = params();
        let s = walk_state();
        let (n, ev) = step_plant(&s, &hold(&s, p.h_nom), &p).unwrap();
        assert!(n.com_vel.norm() < 1e-15);
        assert!((n.com_pos - s.com_pos).norm() < 1e-15);
        assert_eq!(ev, StepEvents::default());
    }

    #[test]
    fn flight_is_ballistic() {
        let p = params();
        let mut s = walk_state();
        s.gait = Gait::Run;
        s.mode = ContactMode::Flight;
        s.com_vel = Vec3::new(1.0, 0.0, 0.0);
        s.t_in_phase = 0.0;
        let (n, _) = step_plant(&s, &hold(&s, p.h_nom), &p).unwrap();
        assert_eq!(n.com_vel.x, 1.0);
        assert!((n.com_vel.z + p.gravity * p.dt).abs() < 1e-15);
    }

    #[test]
    fn stance_horizontal_acceleration_matches_pendulum() {
        let p = params();
        let mut s = walk_state();
        s.com_pos.x = 0.05;
        let (n, _) = step_plant(&s, &hold(&s, p.h_nom), &p).unwrap();
        let oracle: f64 = 9.81 / 0.35 * 0.05;
        assert!((oracle - 1.4014285714285714).abs() < 1e-12);
        assert!((n.com_vel.x / p.dt - oracle).abs() < 1e-9);
    }

    #[test]
    fn failure_band() {
        let mut s = walk_state();
        s.com_vel.x = 3.1;
        assert_eq!(detect_failure(&s), Some(FailureKind::Velocity));
        s.com_vel.x = -3.1;
        assert_eq!(detect_failure(&s), Some(FailureKind::Velocity));
        s.com_vel.x = 0.5;
        s.com_pos.z = 0.05;
        assert_eq!(detect_failure(&s), Some(FailureKind::Height));
        s.com_pos.z = 0.61;
        assert_eq!(detect_failure(&s), Some(FailureKind::Height));
        s.com_pos.z = 0.35;
        assert_eq!(detect_failure(&s), None);
    }

    #[test]
    fn non_finite_inputs_are_errors() {
        let p = params();
        let s = walk_state();
        let mut a = hold(&s, p.h_nom);
        a.swing_target.x = f64::NAN;
        assert_eq!(step_plant(&s, &a, &p), Err(PlantError::NonFinite("action")));
        let mut bad = s.clone();
        bad.com_vel.y = f64::INFINITY;
        assert!(matches!(step_plant(&bad, &hold(&s, p.h_nom), &p), Err(PlantError::NonFinite(_))));
        let mut a = hold(&s, p.h_nom);
        a.a_thrust = -1.0;
        assert_eq!(step_plant(&s, &a, &p), Err(PlantError::ActionOutOfRange("a_thrust")));
    }

    #[test]
    fn run_takes_off_when_leg_would_pull() {
        let p = params();
        let mut s = walk_state();
        s.gait = Gait::Run;
        s.com_pos.z = p.h_nom + 0.02;
        s.com_vel.z = 0.5;
        let (n, ev) = step_plant(&s, &hold(&s, p.h_nom), &p).unwrap();
        assert_eq!(n.mode, ContactMode::Flight);
        assert!(ev.takeoff.is_some());
        assert!((n.com_vel.z - (0.5 - p.gravity * p.dt)).abs() < 1e-12);

        // Walking never leaves the ground, the pulling force is simply dropped.
        s.gait = Gait::Walk;
        let (n, ev) = step_plant(&s, &hold(&s, p.h_nom), &p).unwrap();
        assert_eq!(n.mode, ContactMode::LeftStance);
        assert!(ev.takeoff.is_none());
        assert!((n.com_vel.z - (0.5 - p.gravity * p.dt)).abs() < 1e-12);
    }

    #[test]
    fn thrust_only_acts_while_running() {
        let p = params();
        let mut s = walk_state();
        let mut a = hold(&s, p.h_nom);
        a.a_thrust = 20.0;
        let (n, _) = step_plant(&s, &a, &p).unwrap();
        assert!(n.com_vel.z.abs() < 1e-15);
        s.gait = Gait::Run;
        let (n, _) = step_plant(&s, &a, &p).unwrap();
        assert!((n.com_vel.z - 20.0 * p.dt).abs() < 1e-12);
    }

    #[test]
    fn touchdown_swaps_support_after_debounce() {
        let p = params();
        let mut s = walk_state();
        let target = Vec3::new(0.1, -0.1, -0.05);
        let mut touchdowns = vec![];
        for _ in 0..400 {
            let a = Action { swing_target: target, h_ref: p.h_nom, a_thrust: 0.0 };
            let (n, ev) = step_plant(&s, &a, &p).unwrap();
            if let Some(td) = ev.touchdown {
                touchdowns.push((s.t_in_phase + p.dt, td, n.foot_pos[td.foot.index()]));
                assert_eq!(n.stance_side(), Some(td.foot));
                assert_eq!(n.t_in_step, 0.0);
                break;
            }
            s = n;
        }
        // Pressed into the ground from the start, the foot lands right after the debounce.
        let (t, td, pos) = touchdowns[0];
        assert!(t > p.touchdown_debounce);
        assert_eq!(td.foot, Side::Right);
        assert_eq!(td.position, pos.xy());
        assert_eq!(pos.z, 0.0);
    }

    #[test]
    fn trajectory_csv_has_one_line_per_tick() {
        let p = params();
        let s = walk_state();
        let a = hold(&s, p.h_nom);
        let (n, ev) = step_plant(&s, &a, &p).unwrap();
        let rows = vec![TrajectoryRow { time: 0.001, state: n, action: a, events: ev }];
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        assert_eq!(lines[0].split(',').count(), 30);
    }
}
