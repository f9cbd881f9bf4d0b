//! Divergent component of motion: closed-form flows and nominal periodic gaits.

use serde::{Deserialize, Serialize};

use crate::plant::{Gait, Side, Vec2, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DcmState {
    pub xi: Vec2,
}

/// ξ = c + ċ/ω on the horizontal plane.
pub fn compute_dcm(com_pos: &Vec3, com_vel: &Vec3, omega: f64) -> DcmState {
    DcmState { xi: com_pos.xy() + com_vel.xy() / omega }
}

/// Exact solution of ξ̇ = ω(ξ − u) after `dt` seconds.
pub fn propagate_dcm(xi0: Vec2, u: Vec2, omega: f64, dt: f64) -> Vec2 {
    (xi0 - u) * (omega * dt).exp() + u
}

/// DCM shift accumulated over a ballistic flight of length `t_f`.
pub fn flight_drift(xi: Vec2, com_vel_xy: Vec2, t_f: f64) -> Vec2 {
    xi + com_vel_xy * t_f
}

/// Pendulum flow of a CoM offset `x` (relative to the stance point) and velocity `v`.
pub fn lip_flow(x: Vec2, v: Vec2, omega: f64, t: f64) -> (Vec2, Vec2) {
    let (sh, ch) = ((omega * t).sinh(), (omega * t).cosh());
    (x * ch + v * (sh / omega), x * (omega * sh) + v * ch)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitTiming {
    pub stance: f64,
    pub flight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb2 {
    pub lo: Vec2,
    pub hi: Vec2,
}

impl Aabb2 {
    pub fn contains(&self, p: &Vec2) -> bool {
        (0..2).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }

    pub fn is_empty(&self) -> bool {
        (0..2).any(|a| !(self.lo[a] <= self.hi[a]))
    }

    pub fn translate(&self, by: Vec2) -> Self {
        Self { lo: self.lo + by, hi: self.hi + by }
    }

    pub fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x.clamp(self.lo.x, self.hi.x), p.y.clamp(self.lo.y, self.hi.y))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitParams {
    pub walk: GaitTiming,
    pub run: GaitTiming,
    pub t_min: f64,
    pub t_max: f64,
    pub step_width: f64,
    /// Sagittal footstep range relative to the stance foot.
    pub step_forward_range: (f64, f64),
    /// Lateral footstep range on the stepping side, as (min, max) of |Δy|.
    pub step_lateral_range: (f64, f64),
    /// Half-widths of the DCM-offset box centred on the nominal offset.
    pub offset_half_width: Vec2,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            walk: GaitTiming { stance: 0.30, flight: 0.0 },
            run: GaitTiming { stance: 0.20, flight: 0.10 },
            t_min: 0.12,
            t_max: 0.50,
            step_width: 0.10,
            step_forward_range: (-0.5, 0.5),
            step_lateral_range: (0.03, 0.4),
            offset_half_width: Vec2::new(0.25, 0.2),
        }
    }
}

impl GaitParams {
    pub fn timing(&self, gait: Gait) -> GaitTiming {
        match gait {
            Gait::Walk => self.walk,
            Gait::Run => self.run,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.t_min > 0.0 && self.t_min < self.t_max) {
            return Err("gait: need 0 < t_min < t_max".into());
        }
        for (name, t) in [("walk", self.walk), ("run", self.run)] {
            if !(self.t_min..=self.t_max).contains(&t.stance) {
                return Err(format!("gait: {name} stance duration outside [t_min, t_max]"));
            }
        }
        if self.walk.flight != 0.0 {
            return Err("gait: walking has no flight phase".into());
        }
        if !(self.run.flight > 0.0) {
            return Err("gait: running needs a positive flight duration".into());
        }
        let (lo, hi) = self.step_forward_range;
        let (llo, lhi) = self.step_lateral_range;
        if !(lo < 0.0 && hi > 0.0 && llo >= 0.0 && llo < lhi && self.step_width > 0.0) {
            return Err("gait: footstep ranges malformed".into());
        }
        if !(self.offset_half_width.x > 0.0 && self.offset_half_width.y > 0.0) {
            return Err("gait: offset box half-widths must be positive".into());
        }
        Ok(())
    }
}

/// References of the periodic gait at a commanded velocity, for the step about to be
/// taken with foot `side`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NominalGait {
    pub gait: Gait,
    pub side: Side,
    pub t_nom: f64,
    pub t_flight: f64,
    pub step_width: f64,
    pub tau_nom: f64,
    /// DCM at the end of this step minus the next footstep.
    pub b_nom: Vec2,
    /// Nominal next footstep minus the current stance foot.
    pub u_nom_offset: Vec2,
    /// Periodic-orbit CoM offset and velocity at the touchdown that started this step.
    pub touchdown_offset: Vec2,
    pub touchdown_velocity: Vec2,
    /// Periodic-orbit CoM velocity at the end of stance.
    pub stance_end_velocity: Vec2,
    pub t_min: f64,
    pub t_max: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Admissible next footstep relative to the stance foot.
    pub u_box: Aabb2,
    pub b_box: Aabb2,
}

impl NominalGait {
    /// Nominal contact-to-contact duration (stance plus flight).
    pub fn d_nom(&self) -> f64 {
        self.t_nom + self.t_flight
    }

    /// Step displacement of the step after this one (opposite foot).
    pub fn following_step_offset(&self) -> Vec2 {
        Vec2::new(self.u_nom_offset.x, self.u_nom_offset.y - 2.0 * self.side.lateral_sign() * self.step_width)
    }
}

pub fn nominal_references(v_d: Vec2, gait: Gait, side: Side, params: &GaitParams, omega: f64) -> NominalGait {
    let timing = params.timing(gait);
    let (t, t_f) = (timing.stance, timing.flight);
    let d_nom = t + t_f;
    let sign = side.lateral_sign();
    let step = Vec2::new(v_d.x * d_nom, v_d.y * d_nom + sign * params.step_width);
    let following = Vec2::new(v_d.x * d_nom, v_d.y * d_nom - sign * params.step_width);

    // Per axis, the step map on the touchdown state s = (x, v) relative to the stance
    // foot is s' = M s - (L, 0) with M = flight ∘ stance. The two-step cycle fixes s.
    let (sh, ch) = ((omega * t).sinh(), (omega * t).cosh());
    let stance = [[ch, sh / omega], [omega * sh, ch]];
    let m = [
        [stance[0][0] + t_f * stance[1][0], stance[0][1] + t_f * stance[1][1]],
        [stance[1][0], stance[1][1]],
    ];
    let m2 = mat_mul(&m, &m);
    let a = [[1.0 - m2[0][0], -m2[0][1]], [-m2[1][0], 1.0 - m2[1][1]]];
    let mut touchdown_offset = Vec2::zeros();
    let mut touchdown_velocity = Vec2::zeros();
    let mut b_nom = Vec2::zeros();
    let mut stance_end_velocity = Vec2::zeros();
    for axis in 0..2 {
        let (l1, l2) = (step[axis], following[axis]);
        // rhs = -(M (l1, 0) + (l2, 0))
        let rhs = [-(m[0][0] * l1 + l2), -(m[1][0] * l1)];
        let s = solve2(&a, &rhs);
        touchdown_offset[axis] = s[0];
        touchdown_velocity[axis] = s[1];
        stance_end_velocity[axis] = stance[1][0] * s[0] + stance[1][1] * s[1];
        let nx = m[0][0] * s[0] + m[0][1] * s[1] - l1;
        let nv = m[1][0] * s[0] + m[1][1] * s[1];
        b_nom[axis] = nx + nv / omega;
    }

    let (flo, fhi) = params.step_forward_range;
    let (llo, lhi) = params.step_lateral_range;
    let u_box = if sign > 0.0 {
        Aabb2 { lo: Vec2::new(flo, llo), hi: Vec2::new(fhi, lhi) }
    } else {
        Aabb2 { lo: Vec2::new(flo, -lhi), hi: Vec2::new(fhi, -llo) }
    };
    let b_box = Aabb2 { lo: b_nom - params.offset_half_width, hi: b_nom + params.offset_half_width };

    NominalGait {
        gait,
        side,
        t_nom: t,
        t_flight: t_f,
        step_width: params.step_width,
        tau_nom: (omega * t).exp(),
        b_nom,
        u_nom_offset: step,
        touchdown_offset,
        touchdown_velocity,
        stance_end_velocity,
        t_min: params.t_min,
        t_max: params.t_max,
        tau_min: (omega * params.t_min).exp(),
        tau_max: (omega * params.t_max).exp(),
        u_box,
        b_box,
    }
}

fn mat_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn solve2(a: &[[f64; 2]; 2], rhs: &[f64; 2]) -> [f64; 2] {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [
        (rhs[0] * a[1][1] - a[0][1] * rhs[1]) / det,
        (a[0][0] * rhs[1] - a[1][0] * rhs[0]) / det,
    ]
}
