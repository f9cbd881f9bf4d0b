//! The step-adaptation expert and the goal vectors it publishes.
//!
//! Every tick the expert measures the DCM, re-solves the step QP, and turns the plan
//! into plant setpoints: a quintic swing-foot interpolant toward the planned foothold,
//! a height reference, and, when running, a push-off thrust that ends stance at the
//! planned time.

use std::f64::consts::PI;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::dcm::{compute_dcm, lip_flow, nominal_references, GaitParams, NominalGait};
use crate::plant::{Action, ContactMode, Gait, PlantParams, PlantState, Side, Vec2, Vec3};
use crate::stepqp::{self, QpWeights, StepPhase, StepQpProblem, StepQpSolution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub v_d: Vec2,
    pub gait: Gait,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertParams {
    pub gait: GaitParams,
    pub weights: QpWeights,
    /// Swing-foot apex height.
    pub swing_apex: f64,
    /// Length of the push-off window at the end of a running stance.
    pub thrust_window: f64,
    /// Cap on the desired vertical acceleration during push-off.
    pub thrust_max_acc: f64,
}

impl Default for ExpertParams {
    fn default() -> Self {
        Self {
            gait: GaitParams::default(),
            weights: QpWeights::default(),
            swing_apex: 0.05,
            thrust_window: 0.08,
            thrust_max_acc: 60.0,
        }
    }
}

impl ExpertParams {
    pub fn validate(&self) -> Result<(), String> {
        self.gait.validate()?;
        let w = self.weights;
        if ![w.w_u, w.w_tau, w.w_b].iter().all(|x| x.is_finite() && *x > 0.0) {
            return Err("weights must be finite and > 0".into());
        }
        for (name, v) in [
            ("swing_apex", self.swing_apex),
            ("thrust_window", self.thrust_window),
            ("thrust_max_acc", self.thrust_max_acc),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be finite and > 0"));
            }
        }
        Ok(())
    }
}

/// Next contacts as planned on one tick, in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactPlan {
    /// Ground point of the current (or last, when airborne) stance foot.
    pub stance_foot: Vec2,
    pub p_next: Vec2,
    pub t_rem: f64,
    pub p_next2: Vec2,
    pub t_next2: f64,
    pub d_nom: f64,
    /// Planned stance duration of the current step.
    pub t_stance: f64,
    /// Planned touchdown-to-touchdown duration of the current step.
    pub step_duration: f64,
    /// Set when the QP had no solution and the clamped nominal plan was substituted.
    pub fallback: bool,
}

pub const GOAL_CC_DIM: usize = 3;
pub const GOAL_TCC_DIM: usize = 6;
pub const GOAL_VC_DIM: usize = 4;

/// Next contact location (relative to the stance foot) and time to it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoalCC(pub [f64; GOAL_CC_DIM]);

/// Next two contacts; the second one comes from the nominal-step heuristic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoalTCC(pub [f64; GOAL_TCC_DIM]);

/// Desired velocity and one-hot gait.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoalVC(pub [f64; GOAL_VC_DIM]);

pub fn build_goals(plan: &ContactPlan, cmd: &Command) -> (GoalCC, GoalTCC, GoalVC) {
    let p1 = plan.p_next - plan.stance_foot;
    let p2 = plan.p_next2 - plan.stance_foot;
    let cc = GoalCC([p1.x, p1.y, plan.t_rem]);
    let tcc = GoalTCC([p1.x, p1.y, plan.t_rem, p2.x, p2.y, plan.d_nom + plan.t_rem]);
    let onehot = match cmd.gait {
        Gait::Walk => [1.0, 0.0],
        Gait::Run => [0.0, 1.0],
    };
    let vc = GoalVC([cmd.v_d.x, cmd.v_d.y, onehot[0], onehot[1]]);
    (cc, tcc, vc)
}

/// Stateful expert; one instance per episode.
#[derive(Clone, Debug)]
pub struct Expert {
    plant: PlantParams,
    params: ExpertParams,
    omega: f64,
    step_seen: u64,
    liftoff: Vec3,
    /// Last planned stance duration, used to predict the takeoff velocity.
    t_stance_prev: f64,
    fallbacks: u64,
}

impl Expert {
    pub fn new(plant: PlantParams, params: ExpertParams, initial: &PlantState) -> Self {
        let omega = plant.omega();
        let t_stance_prev = params.gait.timing(initial.gait).stance;
        Self {
            plant,
            params,
            omega,
            step_seen: initial.step_index,
            liftoff: initial.foot_pos[initial.swing_side().index()],
            t_stance_prev,
            fallbacks: 0,
        }
    }

    pub fn params(&self) -> &ExpertParams {
        &self.params
    }

    /// Number of ticks on which the QP was infeasible.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    pub fn nominal(&self, state: &PlantState, cmd: &Command) -> NominalGait {
        nominal_references(cmd.v_d, state.gait, state.swing_side(), &self.params.gait, self.omega)
    }

    /// Builds this tick's step QP from the measured state.
    pub fn problem(&self, state: &PlantState, cmd: &Command) -> StepQpProblem {
        let nominal = self.nominal(state, cmd);
        let u_cur = state.support_point();
        let xi_now = compute_dcm(&state.com_pos, &state.com_vel, self.omega).xi;
        let (t_elapsed, com_vel_xy, phase) = match state.mode {
            ContactMode::Flight => {
                let t_stance = state.stance_duration();
                let land = t_stance + nominal.t_flight - state.t_in_step;
                (t_stance, state.com_vel.xy(), StepPhase::Flight { t_land_remaining: land.max(0.0) })
            }
            _ => {
                let remaining = (self.t_stance_prev - state.t_in_step).max(0.0);
                let (_, v) = lip_flow(state.com_pos.xy() - u_cur, state.com_vel.xy(), self.omega, remaining);
                (state.t_in_step, v, StepPhase::Stance)
            }
        };
        StepQpProblem {
            u_cur,
            xi_now,
            t_elapsed,
            omega: self.omega,
            nominal,
            weights: self.params.weights,
            gait: state.gait,
            com_vel_xy,
            phase,
            dt: self.plant.dt,
        }
    }

    fn observe(&mut self, state: &PlantState) {
        if state.step_index != self.step_seen {
            self.step_seen = state.step_index;
            self.liftoff = state.foot_pos[state.swing_side().index()];
            self.t_stance_prev = self.params.gait.timing(state.gait).stance;
        }
    }

    /// Solves this tick's QP, substituting the clamped nominal plan when infeasible.
    pub fn plan(&mut self, state: &PlantState, cmd: &Command) -> (ContactPlan, StepQpProblem, Option<StepQpSolution>) {
        self.observe(state);
        let problem = self.problem(state, cmd);
        let nominal = &problem.nominal;
        let solution = stepqp::solve(&problem);
        let (u_next, t_stance, fallback) = match &solution {
            Ok(s) => (s.u_next, s.t_next, false),
            Err(e) => {
                self.fallbacks += 1;
                debug!("step QP fallback at step {}: {e}", state.step_index);
                let t_stance = match problem.phase {
                    StepPhase::Flight { .. } => problem.t_elapsed,
                    StepPhase::Stance => nominal
                        .t_nom
                        .clamp(nominal.t_min.max(state.t_in_step + 2.0 * self.plant.dt), nominal.t_max.max(state.t_in_step + 2.0 * self.plant.dt)),
                };
                let u = nominal.u_box.clamp(nominal.u_nom_offset) + problem.u_cur;
                (u, t_stance, true)
            }
        };
        if problem.phase == StepPhase::Stance {
            self.t_stance_prev = t_stance;
        }
        let step_duration = t_stance + nominal.t_flight;
        let t_rem = (step_duration - state.t_in_step).max(0.0);
        let d_nom = nominal.d_nom();
        let plan = ContactPlan {
            stance_foot: problem.u_cur,
            p_next: u_next,
            t_rem,
            p_next2: u_next + nominal.following_step_offset(),
            t_next2: d_nom + t_rem,
            d_nom,
            t_stance,
            step_duration,
            fallback,
        };
        (plan, problem, solution.ok())
    }

    /// One expert control tick: the published action and contact plan.
    pub fn tick(&mut self, state: &PlantState, cmd: &Command) -> (Action, ContactPlan) {
        let (plan, _, _) = self.plan(state, cmd);
        (self.action(state, &plan), plan)
    }

    /// Setpoints realising `plan` from `state`.
    pub fn action(&self, state: &PlantState, plan: &ContactPlan) -> Action {
        let desired = swing_reference(
            self.liftoff,
            Vec3::new(plan.p_next.x, plan.p_next.y, 0.0),
            self.params.swing_apex,
            state.t_in_step,
            plan.step_duration,
        );
        // Invert the fixed swing PD so the foot follows the reference itself.
        let swing_target = desired.pos
            + (desired.vel * self.plant.swing_kd + desired.acc) / self.plant.swing_kp;
        let a_thrust = if state.gait == Gait::Run && state.stance_side().is_some() {
            self.thrust(state, plan)
        } else {
            0.0
        };
        Action { swing_target, h_ref: self.plant.h_nom, a_thrust }
    }

    /// Push-off over the final window of a running stance. The desired vertical
    /// acceleration is a half-sine whose amplitude is re-sized every tick so the
    /// remaining area brings ż to g·t_f/2 at the planned takeoff; the thrust is that
    /// acceleration minus what the leg PD already provides.
    fn thrust(&self, state: &PlantState, plan: &ContactPlan) -> f64 {
        let t = state.t_in_step;
        let t_end = plan.t_stance;
        let window = self.params.thrust_window.min(0.6 * t_end);
        let t_start = t_end - window;
        if t < t_start || t >= t_end {
            return 0.0;
        }
        let t_flight = plan.step_duration - plan.t_stance;
        let v_takeoff = self.plant.gravity * t_flight / 2.0;
        let sigma = (t - t_start) / window;
        let deficit = v_takeoff - state.com_vel.z;
        if deficit <= 0.0 {
            return 0.0;
        }
        let acc_d = (deficit * PI / window * (PI * sigma / 2.0).tan()).clamp(0.0, self.params.thrust_max_acc);
        let pd = self.plant.stance_kp * (self.plant.h_nom - state.com_pos.z) - self.plant.stance_kd * state.com_vel.z;
        (acc_d - pd).max(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwingReference {
    pub pos: Vec3,
    pub vel: Vec3,
    pub acc: Vec3,
}

/// Quintic horizontal blend from `from` to `to` with a sine bump of height `apex` on z,
/// at time `t` of a swing lasting `duration`. Past the end the reference keeps pressing
/// down so the foot is guaranteed to make contact.
pub fn swing_reference(from: Vec3, to: Vec3, apex: f64, t: f64, duration: f64) -> SwingReference {
    let duration = duration.max(1e-3);
    let s = (t / duration).max(0.0);
    let (q, dq, ddq) = if s < 1.0 {
        (
            s * s * s * (10.0 - 15.0 * s + 6.0 * s * s),
            30.0 * s * s * (1.0 - s) * (1.0 - s),
            60.0 * s * (1.0 - s) * (1.0 - 2.0 * s),
        )
    } else {
        (1.0, 0.0, 0.0)
    };
    let sb = s.min(1.5);
    let (bump, dbump, ddbump) = if s < 1.5 {
        (apex * (PI * sb).sin(), apex * PI * (PI * sb).cos(), -apex * PI * PI * (PI * sb).sin())
    } else {
        (-apex, 0.0, 0.0)
    };
    let delta = to - from;
    let pos = Vec3::new(
        from.x + delta.x * q,
        from.y + delta.y * q,
        from.z * (1.0 - q) + bump,
    );
    let vel = Vec3::new(delta.x * dq, delta.y * dq, -from.z * dq + dbump) / duration;
    let acc = Vec3::new(delta.x * ddq, delta.y * ddq, -from.z * ddq + ddbump) / (duration * duration);
    SwingReference { pos, vel, acc }
}

/// Plant state at the start of a step on the periodic orbit of `cmd`, standing on the
/// left foot with the right foot at its previous foothold.
pub fn initial_state(cmd: &Command, plant: &PlantParams, expert: &ExpertParams) -> PlantState {
    let omega = plant.omega();
    let n = nominal_references(cmd.v_d, cmd.gait, Side::Right, &expert.gait, omega);
    let stance = Vec2::new(0.0, 0.5 * expert.gait.step_width);
    // The previous step was taken with the left foot: undo a left-side nominal step.
    let previous = nominal_references(cmd.v_d, cmd.gait, Side::Left, &expert.gait, omega);
    let swing = stance - previous.u_nom_offset;
    let com = stance + n.touchdown_offset;
    PlantState::standing(
        Side::Left,
        stance,
        swing,
        Vec3::new(com.x, com.y, plant.h_nom),
        // Running lands from a symmetric flight.
        Vec3::new(n.touchdown_velocity.x, n.touchdown_velocity.y, -0.5 * plant.gravity * n.t_flight),
        cmd.gait,
        n.d_nom(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::step_plant;

    fn setup(v: f64, gait: Gait) -> (PlantParams, ExpertParams, Command, PlantState) {
        let plant = PlantParams::default();
        let expert = ExpertParams::default();
        let cmd = Command { v_d: Vec2::new(v, 0.0), gait };
        let state = initial_state(&cmd, &plant, &expert);
        (plant, expert, cmd, state)
    }

    #[test]
    fn stationary_orbit_plans_mirrored_foothold() {
        let (plant, params, cmd, state) = setup(0.0, Gait::Walk);
        let mut expert = Expert::new(plant.clone(), params, &state);
        let (action, plan) = expert.tick(&state, &cmd);
        let mirrored = state.support_point() + Vec2::new(0.0, -0.1);
        assert!((plan.p_next - mirrored).norm() < 1e-9);
        assert_eq!(action.h_ref, plant.h_nom);
        assert_eq!(action.a_thrust, 0.0);
        assert!((plan.t_rem - 0.3).abs() < 1e-9);
        assert!(!plan.fallback);
    }

    #[test]
    fn second_contact_uses_nominal_step() {
        let (plant, params, cmd, state) = setup(0.8, Gait::Run);
        let mut expert = Expert::new(plant, params, &state);
        let (_, plan) = expert.tick(&state, &cmd);
        let d_nom = 0.2 + 0.1;
        // Stepping right now, so the following step goes left.
        let expected = plan.p_next + Vec2::new(0.8 * d_nom, 0.1);
        assert!((plan.p_next2 - expected).norm() < 1e-12);
        assert_eq!(plan.t_next2, plan.d_nom + plan.t_rem);
        assert!((plan.d_nom - d_nom).abs() < 1e-15);
    }

    #[test]
    fn swing_reference_endpoints() {
        let from = Vec3::new(-0.2, -0.05, 0.0);
        let to = Vec3::new(0.25, -0.05, 0.0);
        let start = swing_reference(from, to, 0.05, 0.0, 0.3);
        assert_eq!(start.pos, from);
        let end = swing_reference(from, to, 0.05, 0.3 - 1e-9, 0.3);
        assert!((end.pos - to).norm() < 1e-6);
        assert!(end.vel.z < 0.0);
        let late = swing_reference(from, to, 0.05, 0.4, 0.3);
        assert!(late.pos.z < 0.0);
        assert_eq!(late.pos.xy(), to.xy());
    }

    #[test]
    fn goal_vectors() {
        let plan = ContactPlan {
            stance_foot: Vec2::zeros(),
            p_next: Vec2::new(0.3, 0.1),
            t_rem: 0.3 - 0.1,
            p_next2: Vec2::new(0.6, 0.0),
            t_next2: 0.5,
            d_nom: 0.3,
            t_stance: 0.3,
            step_duration: 0.3,
            fallback: false,
        };
        let walk = Command { v_d: Vec2::new(0.7, 0.0), gait: Gait::Walk };
        let (cc, tcc, vc) = build_goals(&plan, &walk);
        assert!((cc.0[2] - 0.2).abs() < 1e-15);
        assert_eq!(&cc.0[..2], &[0.3, 0.1]);
        assert_eq!(tcc.0[5], plan.d_nom + plan.t_rem);
        assert_eq!(vc.0, [0.7, 0.0, 1.0, 0.0]);
        let run = Command { gait: Gait::Run, ..walk };
        assert_eq!(build_goals(&plan, &run).2 .0, [0.7, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn replanning_is_smooth_and_t_rem_counts_down() {
        let (plant, params, cmd, mut state) = setup(0.5, Gait::Walk);
        let mut expert = Expert::new(plant.clone(), params, &state);
        let mut prev: Option<ContactPlan> = None;
        for _ in 0..200 {
            let (action, plan) = expert.tick(&state, &cmd);
            state.planned_step_duration = plan.step_duration;
            if let Some(p) = prev {
                assert!((plan.p_next - p.p_next).norm() < 1e-3);
                if (plan.t_stance - p.t_stance).abs() < 1e-12 {
                    assert!((p.t_rem - plan.t_rem - plant.dt).abs() < 1e-9);
                }
            }
            let (next, ev) = step_plant(&state, &action, &plant).unwrap();
            if ev.touchdown.is_some() {
                break;
            }
            prev = Some(plan);
            state = next;
        }
    }
}
