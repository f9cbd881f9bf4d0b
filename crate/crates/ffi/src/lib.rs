//! C ABI over the gaitbc workbench.
//!
//! Every fallible function returns a [`GbcStatus`]; on failure a message for the
//! calling thread is available from [`gbc_last_error`]. Handles are opaque and must be
//! released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gaitbc::dcm::propagate_dcm;
use gaitbc::expert::{initial_state, Command, ContactPlan, Expert, ExpertParams};
use gaitbc::pipeline::{PipelineError, PolicyModel};
use gaitbc::plant::{
    compute_phase, step_plant, Action, ContactMode, FailureKind, Gait, PlantParams, PlantState, Side, Vec2,
    Vec3,
};
use gaitbc::rollout::{action_from_features, policy_input, shared_features, Conditioning, Policy, ACTION_DIM};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GbcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    DimMismatch = 5,
    NumericalFailure = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GbcGait {
    Walk = 0,
    Run = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GbcMode {
    LeftStance = 0,
    RightStance = 1,
    Flight = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GbcConditioning {
    Cc = 1,
    Tcc = 2,
    Vc = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GbcFailure {
    #[default]
    None = 0,
    Velocity = 1,
    Height = 2,
}

/// Plant setpoints: swing-foot target (world frame), CoM height reference, thrust.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GbcAction {
    pub swing_target: [f64; 3],
    pub h_ref: f64,
    pub a_thrust: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GbcState {
    pub com_pos: [f64; 3],
    pub com_vel: [f64; 3],
    pub left_foot: [f64; 3],
    pub right_foot: [f64; 3],
    pub mode: GbcMode,
    pub gait: GbcGait,
    pub t_in_phase: f64,
    pub phase: f64,
    pub step_index: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GbcEvents {
    pub touchdown: bool,
    pub touchdown_pos: [f64; 2],
    pub takeoff: bool,
    pub failure: GbcFailure,
}

/// Planner output for the current tick, world coordinates.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GbcPlan {
    pub p_next: [f64; 2],
    pub t_rem: f64,
    pub p_next2: [f64; 2],
    pub t_next2: f64,
    pub step_duration: f64,
    pub fallback: bool,
}

/// A trained policy.
pub struct GbcModel {
    model: PolicyModel,
}

/// Plant plus the expert planner, stepped at 1 kHz.
pub struct GbcSim {
    plant: PlantParams,
    state: PlantState,
    expert: Expert,
    cmd: Command,
    plan: Option<ContactPlan>,
    failed: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn fail(status: GbcStatus, msg: impl Into<String>) -> GbcStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> GbcStatus) -> GbcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(GbcStatus::Panic, "internal panic"),
    }
}

fn gait_from(g: GbcGait) -> Gait {
    match g {
        GbcGait::Walk => Gait::Walk,
        GbcGait::Run => Gait::Run,
    }
}

fn gait_to(g: Gait) -> GbcGait {
    match g {
        Gait::Walk => GbcGait::Walk,
        Gait::Run => GbcGait::Run,
    }
}

fn conditioning_to(c: Conditioning) -> GbcConditioning {
    match c {
        Conditioning::Cc => GbcConditioning::Cc,
        Conditioning::Tcc => GbcConditioning::Tcc,
        Conditioning::Vc => GbcConditioning::Vc,
    }
}

fn command(vx: f64, vy: f64, gait: GbcGait) -> Result<Command, GbcStatus> {
    if !(vx.is_finite() && vy.is_finite()) {
        return Err(fail(GbcStatus::InvalidArgument, "velocity must be finite"));
    }
    Ok(Command { v_d: Vec2::new(vx, vy), gait: gait_from(gait) })
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn gbc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn gbc_status_string(status: GbcStatus) -> *const c_char {
    let s: &'static CStr = match status {
        GbcStatus::Ok => c"ok",
        GbcStatus::NullPointer => c"null pointer",
        GbcStatus::InvalidArgument => c"invalid argument",
        GbcStatus::Io => c"i/o error",
        GbcStatus::Format => c"bad file format",
        GbcStatus::DimMismatch => c"dimension mismatch",
        GbcStatus::NumericalFailure => c"numerical failure",
        GbcStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Closed-form DCM under a fixed stance foot: ξ(dt) = u + (ξ0 − u)·e^{ω·dt}.
///
/// # Safety
/// `xi0`, `u` and `out` must each point to two doubles.
#[no_mangle]
pub unsafe extern "C" fn gbc_dcm_propagate(
    xi0: *const f64,
    u: *const f64,
    omega: f64,
    dt: f64,
    out: *mut f64,
) -> GbcStatus {
    if xi0.is_null() || u.is_null() || out.is_null() {
        return fail(GbcStatus::NullPointer, "null argument");
    }
    if !(omega.is_finite() && omega > 0.0 && dt.is_finite() && dt >= 0.0) {
        return fail(GbcStatus::InvalidArgument, "need omega > 0 and dt >= 0");
    }
    let x = Vec2::new(*xi0, *xi0.add(1));
    let f = Vec2::new(*u, *u.add(1));
    let r = propagate_dcm(x, f, omega, dt);
    *out = r.x;
    *out.add(1) = r.y;
    GbcStatus::Ok
}

/// Loads a model file written by `gaitbc train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn gbc_model_load(path: *const c_char, out: *mut *mut GbcModel) -> GbcStatus {
    if path.is_null() || out.is_null() {
        return fail(GbcStatus::NullPointer, "null argument");
    }
    *out = ptr::null_mut();
    let Ok(p) = CStr::from_ptr(path).to_str() else {
        return fail(GbcStatus::InvalidArgument, "path is not UTF-8");
    };
    guard(|| match PolicyModel::load(Path::new(p)) {
        Ok(model) => {
            *out = Box::into_raw(Box::new(GbcModel { model }));
            GbcStatus::Ok
        }
        Err(e @ PipelineError::Io { .. }) => fail(GbcStatus::Io, e.to_string()),
        Err(e) => fail(GbcStatus::Format, e.to_string()),
    })
}

/// # Safety
/// `model` must be null or a handle from [`gbc_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gbc_model_free(model: *mut GbcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn gbc_model_conditioning(model: *const GbcModel, out: *mut GbcConditioning) -> GbcStatus {
    if model.is_null() || out.is_null() {
        return fail(GbcStatus::NullPointer, "null argument");
    }
    *out = conditioning_to((*model).model.conditioning);
    GbcStatus::Ok
}

/// Network input width, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gbc_model_input_dim(model: *const GbcModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).model.conditioning.input_dim()
}

/// Raw network evaluation: `output` receives the five action features (swing target
/// relative to the support point, swing height, h_ref, thrust).
///
/// # Safety
/// `input` must hold `n_in` doubles and `output` room for `n_out`.
#[no_mangle]
pub unsafe extern "C" fn gbc_model_forward(
    model: *const GbcModel,
    input: *const f64,
    n_in: usize,
    output: *mut f64,
    n_out: usize,
) -> GbcStatus {
    if model.is_null() || input.is_null() || output.is_null() {
        return fail(GbcStatus::NullPointer, "null argument");
    }
    let m = &(*model).model;
    if n_in != m.conditioning.input_dim() || n_out != ACTION_DIM {
        return fail(
            GbcStatus::DimMismatch,
            format!("expected {} inputs and {ACTION_DIM} outputs", m.conditioning.input_dim()),
        );
    }
    let x = std::slice::from_raw_parts(input, n_in);
    let mut y = [0.0; ACTION_DIM];
    guard(|| {
        m.act(x, &mut y);
        std::slice::from_raw_parts_mut(output, n_out).copy_from_slice(&y);
        GbcStatus::Ok
    })
}

/// Starts a simulation on the periodic orbit of the given command.
///
/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn gbc_sim_new(vx: f64, vy: f64, gait: GbcGait, out: *mut *mut GbcSim) -> GbcStatus {
    if out.is_null() {
        return fail(GbcStatus::NullPointer, "null argument");
    }
    *out = ptr::null_mut();
    let cmd = match command(vx, vy, gait) {
        Ok(c) => c,
        Err(s) => return s,
    };
    guard(|| {
        let plant = PlantParams::default();
        let params = ExpertParams::default();
        let state = initial_state(&cmd, &plant, &params);
        let expert = Expert::new(plant.clone(), params, &state);
        *out = Box::into_raw(Box::new(GbcSim { plant, state, expert, cmd, plan: None, failed: false }));
        GbcStatus::Ok
    })
}

/// # Safety
/// `sim` must be null or a handle from [`gbc_sim_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gbc_sim_free(sim: *mut GbcSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Changes the command from the next tick on.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gbc_sim_set_command(sim: *mut GbcSim, vx: f64, vy: f64, gait: GbcGait) -> GbcStatus {
    if sim.is_null() {
        return fail(GbcStatus::NullPointer, "null argument");
    }
    match command(vx, vy, gait) {
        Ok(c) => {
            (*sim).cmd = c;
            (*sim).plan = None;
            GbcStatus::Ok
        }
        Err(s) => s,
    }
}

impl GbcSim {
    /// Runs the planner once per tick and publishes phase information on the state.
    fn prepare(&mut self) -> ContactPlan {
        if let Some(p) = self.plan {
            return p;
        }
        if self.state.mode != ContactMode::Flight {
            self.state.gait = self.cmd.gait;
        }
        let (plan, _, _) = self.expert.plan(&self.state, &self.cmd);
        self.state.planned_step_duration = plan.step_duration;
        self.state.phase = compute_phase(self.state.t_in_step, plan.step_duration);
        self.plan = Some(plan);
        plan
    }

    fn advance(&mut self, action: &Action, events: *mut GbcEvents) -> GbcStatus {
        if self.failed {
            return fail(GbcStatus::InvalidArgument, "simulation already failed");
        }
        self.prepare();
        match step_plant(&self.state, action, &self.plant) {
            Ok((next, ev)) => {
                self.state = next;
                self.plan = None;
                self.failed = ev.failure.is_some();
                if !events.is_null() {
                    let td = ev.touchdown.map(|t| t.position);
                    // SAFETY: caller guarantees `events` is valid when non-null.
                    unsafe {
                        *events = GbcEvents {
                            touchdown: td.is_some(),
                            touchdown_pos: td.map_or([0.0; 2], |p| [p.x, p.y]),
                            takeoff: ev.takeoff.is_some(),
                            failure: match ev.failure {
                                None => GbcFailure::None,
                                Some(FailureKind::Velocity) => GbcFailure::Velocity,
                                Some(FailureKind::Height) => GbcFailure::Height,
                            },
                        };
                    }
                }
                GbcStatus::Ok
            }
            Err(e) => {
                self.failed = true;
                fail(GbcStatus::NumericalFailure, e.to_string())
            }
        }
    }
}

/// Planner output for the current state.
///
/// # Safety
/// `sim` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn gbc_sim_plan(sim: *mut GbcSim, out: *mut GbcPlan) -> GbcStatus {
    if sim.is_null() || out.is_null() {
        return fail(GbcStatus::NullPointer, "null argument");
    }
    guard(|| {
        let p = (*sim).prepare();
        *out = GbcPlan {
            p_next: [p.p_next.x, p.p_next.y],
            t_rem: p.t_rem,
            p_next2: [p.p_next2.x, p.p_next2.y],
            t_next2: p.t_next2,
            step_duration: p.step_duration,
            fallback: p.fallback,
        };
        GbcStatus::Ok
    })
}

/// The expert's action for the current state, without stepping.
///
/// # Safety
/// `sim` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn gbc_sim_expert_action(sim: *mut GbcSim, out: *mut GbcAction) -> GbcStatus {
    if sim.is_null() || out.is_null() {
        return fail(GbcStatus::NullPointer, "null argument");
    }
    guard(|| {
        let s = &mut *sim;
        let plan = s.prepare();
        let a = s.expert.action(&s.state, &plan);
        *out = GbcAction {
            swing_target: [a.swing_target.x, a.swing_target.y, a.swing_target.z],
            h_ref: a.h_ref,
            a_thrust: a.a_thrust,
        };
        GbcStatus::Ok
    })
}

/// Steps one tick with a caller-supplied action. `events` may be null.
///
/// # Safety
/// `sim` must be a live handle, `action` valid for reading, `events` null or valid.
#[no_mangle]
pub unsafe extern "C" fn gbc_sim_step(sim: *mut GbcSim, action: *const GbcAction, events: *mut GbcEvents) -> GbcStatus {
    if sim.is_null() || action.is_null() {
        return fail(GbcStatus::NullPointer, "null argument");
    }
    let a = &*action;
    let act = Action {
        swing_target: Vec3::new(a.swing_target[0], a.swing_target[1], a.swing_target[2]),
        h_ref: a.h_ref,
        a_thrust: a.a_thrust,
    };
    if let Err(e) = act.validate() {
        return fail(GbcStatus::InvalidArgument, e.to_string());
    }
    guard(|| (*sim).advance(&act, events))
}

/// Steps one tick under the expert.
///
/// # Safety
/// `sim` must be a live handle and `events` null or valid.
#[no_mangle]
pub unsafe extern "C" fn gbc_sim_step_expert(sim: *mut GbcSim, events: *mut GbcEvents) -> GbcStatus {
    if sim.is_null() {
        return fail(GbcStatus::NullPointer, "null argument");
    }
    guard(|| {
        let s = &mut *sim;
        let plan = s.prepare();
        let a = s.expert.action(&s.state, &plan);
        s.advance(&a, events)
    })
}

/// Steps one tick under a trained policy, with goals from the planner.
///
/// # Safety
/// `sim` and `model` must be live handles and `events` null or valid.
#[no_mangle]
pub unsafe extern "C" fn gbc_sim_step_model(
    sim: *mut GbcSim,
    model: *const GbcModel,
    events: *mut GbcEvents,
) -> GbcStatus {
    if sim.is_null() || model.is_null() {
        return fail(GbcStatus::NullPointer, "null argument");
    }
    guard(|| {
        let s = &mut *sim;
        let m = &(*model).model;
        let plan = s.prepare();
        let shared = shared_features(&s.state);
        let mut input = Vec::with_capacity(m.conditioning.input_dim());
        policy_input(m.conditioning, &shared, &plan, &s.cmd, &mut input);
        let mut raw = [0.0; ACTION_DIM];
        m.act(&input, &mut raw);
        let a = action_from_features(&s.state, &raw);
        s.advance(&a, events)
    })
}

/// # Safety
/// `sim` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn gbc_sim_state(sim: *const GbcSim, out: *mut GbcState) -> GbcStatus {
    if sim.is_null() || out.is_null() {
        return fail(GbcStatus::NullPointer, "null argument");
    }
    let s = &(*sim).state;
    let v = |x: &Vec3| [x.x, x.y, x.z];
    *out = GbcState {
        com_pos: v(&s.com_pos),
        com_vel: v(&s.com_vel),
        left_foot: v(&s.foot_pos[Side::Left.index()]),
        right_foot: v(&s.foot_pos[Side::Right.index()]),
        mode: match s.mode {
            ContactMode::LeftStance => GbcMode::LeftStance,
            ContactMode::RightStance => GbcMode::RightStance,
            ContactMode::Flight => GbcMode::Flight,
        },
        gait: gait_to(s.gait),
        t_in_phase: s.t_in_phase,
        phase: s.phase,
        step_index: s.step_index,
    };
    GbcStatus::Ok
}
