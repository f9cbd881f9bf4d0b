//! Next-step adaptation as a small convex QP.
//!
//! Decision variables are the next footstep `u`, the step-time variable `τ = e^{ωT}`
//! and the DCM offset `b`. Per horizontal axis the DCM prediction
//! `u = α τ + u_cur + d − b` holds, with `α = (ξ − u_cur) e^{−ω t_elapsed}` and `d` the
//! flight drift of a running step. Eliminating `u` leaves a strictly convex problem in
//! `(τ, b_x, b_y)` with ten linear inequalities, solved exactly by a dual active-set
//! method.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dcm::{flight_drift, NominalGait};
use crate::plant::{Gait, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepQpError {
    #[error("step QP is infeasible: {0}")]
    InfeasibleProblem(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QpWeights {
    pub w_u: f64,
    pub w_tau: f64,
    pub w_b: f64,
}

impl Default for QpWeights {
    fn default() -> Self {
        Self { w_u: 1.0, w_tau: 5.0, w_b: 1000.0 }
    }
}

impl QpWeights {
    pub fn scaled(self, k: f64) -> Self {
        Self { w_u: self.w_u * k, w_tau: self.w_tau * k, w_b: self.w_b * k }
    }
}

/// Where the stepping leg is in its cycle when the problem is posed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepPhase {
    /// Stance is ongoing; the remaining stance time is free.
    Stance,
    /// Airborne after a stance of `t_elapsed`; landing expected in `t_land_remaining`.
    Flight { t_land_remaining: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepQpProblem {
    pub u_cur: Vec2,
    pub xi_now: Vec2,
    /// Time since touchdown; in flight, the completed stance duration.
    pub t_elapsed: f64,
    pub omega: f64,
    pub nominal: NominalGait,
    pub weights: QpWeights,
    pub gait: Gait,
    /// Running stance: predicted horizontal CoM velocity at takeoff. Flight: current
    /// horizontal CoM velocity. Unused for walking.
    pub com_vel_xy: Vec2,
    pub phase: StepPhase,
    /// Control period; the step cannot end sooner than two periods from now.
    pub dt: f64,
}

/// Identifier of one inequality of the reduced problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Bound {
    TauLower,
    TauUpper,
    OffsetLower(usize),
    OffsetUpper(usize),
    StepLower(usize),
    StepUpper(usize),
}

impl Bound {
    const ALL: [Bound; 10] = [
        Bound::TauLower,
        Bound::TauUpper,
        Bound::OffsetLower(0),
        Bound::OffsetUpper(0),
        Bound::OffsetLower(1),
        Bound::OffsetUpper(1),
        Bound::StepLower(0),
        Bound::StepUpper(0),
        Bound::StepLower(1),
        Bound::StepUpper(1),
    ];

    fn bit(self) -> u16 {
        1 << Self::ALL.iter().position(|b| *b == self).expect("bound listed")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ActiveBounds(u16);

impl ActiveBounds {
    pub fn insert(&mut self, b: Bound) {
        self.0 |= b.bit();
    }

    pub fn contains(&self, b: Bound) -> bool {
        self.0 & b.bit() != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Bound> + '_ {
        Bound::ALL.into_iter().filter(move |b| self.contains(*b))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepQpSolution {
    pub u_next: Vec2,
    pub t_next: f64,
    pub b: Vec2,
    pub tau: f64,
    pub cost: f64,
    pub active_bounds: ActiveBounds,
}

/// The problem after eliminating `u`: everything is a function of `(τ, b)`.
#[derive(Clone, Debug)]
struct Reduced {
    alpha: Vec2,
    /// u = α τ + offset − b
    offset: Vec2,
    tau_lo: f64,
    tau_hi: f64,
    tau_nom: f64,
    u_nom: Vec2,
    b_nom: Vec2,
    u_lo: Vec2,
    u_hi: Vec2,
    b_lo: Vec2,
    b_hi: Vec2,
    w: QpWeights,
}

impl Reduced {
    fn from_problem(p: &StepQpProblem) -> Result<Self, StepQpError> {
        let n = &p.nominal;
        let decay = (-p.omega * p.t_elapsed).exp();
        let (alpha, drift, tau_lo, tau_hi) = match p.phase {
            StepPhase::Stance => {
                let drift = match p.gait {
                    Gait::Walk => Vec2::zeros(),
                    Gait::Run => flight_drift(Vec2::zeros(), p.com_vel_xy, n.t_flight),
                };
                let t_lo = n.t_min.max(p.t_elapsed + 2.0 * p.dt);
                // A step already past its upper bound is pinned to end right away.
                let t_hi = n.t_max.max(t_lo);
                (
                    (p.xi_now - p.u_cur) * decay,
                    drift,
                    (p.omega * t_lo).exp(),
                    (p.omega * t_hi).exp(),
                )
            }
            StepPhase::Flight { t_land_remaining } => {
                let xi_land = flight_drift(p.xi_now, p.com_vel_xy, t_land_remaining.max(0.0));
                let tau = (p.omega * p.t_elapsed).exp();
                ((xi_land - p.u_cur) * decay, Vec2::zeros(), tau, tau)
            }
        };
        let u_box = n.u_box.translate(p.u_cur);
        if u_box.is_empty() || n.b_box.is_empty() || !(tau_lo <= tau_hi) {
            return Err(StepQpError::InfeasibleProblem("empty bound box"));
        }
        for w in [p.weights.w_u, p.weights.w_tau, p.weights.w_b] {
            if !(w > 0.0 && w.is_finite()) {
                return Err(StepQpError::InfeasibleProblem("weights must be positive"));
            }
        }
        Ok(Self {
            alpha,
            offset: p.u_cur + drift,
            tau_lo,
            tau_hi,
            tau_nom: n.tau_nom,
            u_nom: p.u_cur + n.u_nom_offset,
            b_nom: n.b_nom,
            u_lo: u_box.lo,
            u_hi: u_box.hi,
            b_lo: n.b_box.lo,
            b_hi: n.b_box.hi,
            w: p.weights,
        })
    }

    fn step(&self, tau: f64, b: &Vec2) -> Vec2 {
        self.alpha * tau + self.offset - b
    }

    fn cost(&self, tau: f64, b: &Vec2) -> f64 {
        let u = self.step(tau, b);
        self.w.w_u * (u - self.u_nom).norm_squared()
            + self.w.w_tau * (tau - self.tau_nom).powi(2)
            + self.w.w_b * (b - self.b_nom).norm_squared()
    }

    /// Inequalities as `n·x ≥ r` over x = (τ, b_x, b_y).
    fn constraints(&self) -> [(Bound, Vector3<f64>, f64); 10] {
        let (a, c) = (self.alpha, self.offset);
        [
            (Bound::TauLower, Vector3::new(1.0, 0.0, 0.0), self.tau_lo),
            (Bound::TauUpper, Vector3::new(-1.0, 0.0, 0.0), -self.tau_hi),
            (Bound::OffsetLower(0), Vector3::new(0.0, 1.0, 0.0), self.b_lo.x),
            (Bound::OffsetUpper(0), Vector3::new(0.0, -1.0, 0.0), -self.b_hi.x),
            (Bound::OffsetLower(1), Vector3::new(0.0, 0.0, 1.0), self.b_lo.y),
            (Bound::OffsetUpper(1), Vector3::new(0.0, 0.0, -1.0), -self.b_hi.y),
            (Bound::StepLower(0), Vector3::new(a.x, -1.0, 0.0), self.u_lo.x - c.x),
            (Bound::StepUpper(0), Vector3::new(-a.x, 1.0, 0.0), c.x - self.u_hi.x),
            (Bound::StepLower(1), Vector3::new(a.y, 0.0, -1.0), self.u_lo.y - c.y),
            (Bound::StepUpper(1), Vector3::new(-a.y, 0.0, 1.0), c.y - self.u_hi.y),
        ]
    }

    /// ½ xᵀHx + gᵀx equal to the cost up to a constant.
    fn quadratic(&self) -> (Matrix3<f64>, Vector3<f64>) {
        let QpWeights { w_u, w_tau, w_b } = self.w;
        let a = self.alpha;
        let e = self.offset - self.u_nom;
        let h = Matrix3::new(
            2.0 * (w_u * a.norm_squared() + w_tau),
            -2.0 * w_u * a.x,
            -2.0 * w_u * a.y,
            -2.0 * w_u * a.x,
            2.0 * (w_u + w_b),
            0.0,
            -2.0 * w_u * a.y,
            0.0,
            2.0 * (w_u + w_b),
        );
        let g = Vector3::new(
            2.0 * (w_u * a.dot(&e) - w_tau * self.tau_nom),
            2.0 * (-w_u * e.x - w_b * self.b_nom.x),
            2.0 * (-w_u * e.y - w_b * self.b_nom.y),
        );
        (h, g)
    }

    /// Per-axis minimisation over `b` for a fixed τ. Returns None if some axis has no
    /// admissible offset.
    fn best_offsets(&self, tau: f64) -> Option<Vec2> {
        let mut b = Vec2::zeros();
        for axis in 0..2 {
            // u = k − b with k = α τ + offset
            let k = self.alpha[axis] * tau + self.offset[axis];
            let lo = self.b_lo[axis].max(k - self.u_hi[axis]);
            let hi = self.b_hi[axis].min(k - self.u_lo[axis]);
            if lo > hi {
                return None;
            }
            let un = self.u_nom[axis];
            let bn = self.b_nom[axis];
            let free = (self.w.w_u * (k - un) + self.w.w_b * bn) / (self.w.w_u + self.w.w_b);
            b[axis] = free.clamp(lo, hi);
        }
        Some(b)
    }
}

pub fn solve(p: &StepQpProblem) -> Result<StepQpSolution, StepQpError> {
    let r = Reduced::from_problem(p)?;
    let (tau, b, mut active) = if r.tau_lo == r.tau_hi {
        let tau = r.tau_lo;
        let b = r.best_offsets(tau).ok_or(StepQpError::InfeasibleProblem("no admissible offset at fixed timing"))?;
        let mut active = ActiveBounds::default();
        active.insert(Bound::TauLower);
        active.insert(Bound::TauUpper);
        (tau, b, active)
    } else {
        let (h, g) = r.quadratic();
        let (x, active) = dual_active_set(&h, &g, &r.constraints())?;
        (x[0], Vec2::new(x[1], x[2]), active)
    };

    let tau = tau.clamp(r.tau_lo, r.tau_hi);
    let b = Vec2::new(b.x.clamp(r.b_lo.x, r.b_hi.x), b.y.clamp(r.b_lo.y, r.b_hi.y));
    let u_raw = r.step(tau, &b);
    let u = Vec2::new(u_raw.x.clamp(r.u_lo.x, r.u_hi.x), u_raw.y.clamp(r.u_lo.y, r.u_hi.y));
    if (u - u_raw).amax() > 1e-9 {
        return Err(StepQpError::InfeasibleProblem("footstep box unreachable"));
    }
    if r.tau_lo == r.tau_hi {
        // Report only the bounds that actually bind on the b-axes.
        for axis in 0..2 {
            for (bound, hit) in [
                (Bound::OffsetLower(axis), b[axis] <= r.b_lo[axis]),
                (Bound::OffsetUpper(axis), b[axis] >= r.b_hi[axis]),
                (Bound::StepLower(axis), u[axis] <= r.u_lo[axis]),
                (Bound::StepUpper(axis), u[axis] >= r.u_hi[axis]),
            ] {
                if hit {
                    active.insert(bound);
                }
            }
        }
    }
    Ok(StepQpSolution {
        u_next: u,
        t_next: tau.ln() / p.omega,
        b,
        tau,
        cost: r.cost(tau, &b),
        active_bounds: active,
    })
}

/// Goldfarb–Idnani style dual active set for min ½xᵀHx + gᵀx s.t. nᵢ·x ≥ rᵢ with a
/// positive definite 3×3 Hessian.
fn dual_active_set(
    h: &Matrix3<f64>,
    g: &Vector3<f64>,
    cons: &[(Bound, Vector3<f64>, f64); 10],
) -> Result<(Vector3<f64>, ActiveBounds), StepQpError> {
    let hinv = h
        .cholesky()
        .ok_or(StepQpError::InfeasibleProblem("Hessian not positive definite"))?
        .inverse();
    let mut x = -(hinv * g);
    // (constraint index, multiplier)
    let mut active: Vec<(usize, f64)> = Vec::with_capacity(3);
    let slack = |x: &Vector3<f64>, i: usize| cons[i].1.dot(x) - cons[i].2;
    let tol = |i: usize| 1e-12 * (1.0 + cons[i].2.abs());

    for _ in 0..64 {
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..cons.len() {
            if active.iter().any(|(j, _)| *j == i) {
                continue;
            }
            let s = slack(&x, i);
            if s < -tol(i) {
                let scaled = s / cons[i].1.norm();
                if worst.is_none_or(|(_, w)| scaled < w) {
                    worst = Some((i, scaled));
                }
            }
        }
        let Some((p, _)) = worst else {
            let mut set = ActiveBounds::default();
            for (i, lambda) in &active {
                if *lambda > 0.0 {
                    set.insert(cons[*i].0);
                }
            }
            return Ok((x, set));
        };

        let np = cons[p].1;
        let mut lambda_p = 0.0;
        loop {
            let k = active.len();
            let (z, r) = if k == 0 {
                (hinv * np, [0.0; 3])
            } else {
                // M = Nᵀ H⁻¹ N padded to 3×3 with the identity.
                let mut m = Matrix3::identity();
                let mut rhs = Vector3::zeros();
                let hn = hinv * np;
                for a in 0..k {
                    let na = cons[active[a].0].1;
                    for bb in 0..k {
                        m[(a, bb)] = na.dot(&(hinv * cons[active[bb].0].1));
                    }
                    rhs[a] = na.dot(&hn);
                }
                let sol = m
                    .lu()
                    .solve(&rhs)
                    .ok_or(StepQpError::InfeasibleProblem("degenerate active set"))?;
                let mut corrected = np;
                let mut r = [0.0; 3];
                for a in 0..k {
                    r[a] = sol[a];
                    corrected -= cons[active[a].0].1 * sol[a];
                }
                (hinv * corrected, r)
            };

            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for a in 0..k {
                if r[a] > 1e-14 {
                    let t = active[a].1 / r[a];
                    if t < t1 {
                        t1 = t;
                        drop = Some(a);
                    }
                }
            }
            let zn = z.dot(&np);
            let t2 = if z.norm() > 1e-14 && zn > 1e-14 { -slack(&x, p) / zn } else { f64::INFINITY };

            if t1.is_infinite() && t2.is_infinite() {
                return Err(StepQpError::InfeasibleProblem("constraints inconsistent"));
            }
            let t = t1.min(t2);
            for a in 0..k {
                active[a].1 -= t * r[a];
            }
            lambda_p += t;
            if t2.is_finite() {
                x += z * t;
            }
            if t2 <= t1 {
                active.push((p, lambda_p));
                break;
            }
            active.remove(drop.expect("partial step drops a constraint"));
        }
    }
    Err(StepQpError::InfeasibleProblem("active-set iteration limit"))
}

/// Exhaustive search over an evenly spaced `(τ, b_x, b_y)` grid on the bound box.
/// Points whose reconstructed footstep leaves its box are skipped. At a fixed τ the
/// cost and the footstep bounds separate across axes, so each axis is scanned on its
/// own; this visits the same grid minimum as the full triple loop.
pub fn grid_oracle(p: &StepQpProblem, resolution: usize) -> Result<StepQpSolution, StepQpError> {
    assert!(resolution >= 2, "grid needs at least two points per axis");
    let r = Reduced::from_problem(p)?;
    let lin = |lo: f64, hi: f64, i: usize| {
        if resolution == 1 || lo == hi {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (resolution - 1) as f64
        }
    };
    let tau_points = if r.tau_lo == r.tau_hi { 1 } else { resolution };
    let mut best: Option<(f64, f64, Vec2)> = None;
    for i in 0..tau_points {
        let tau = lin(r.tau_lo, r.tau_hi, i);
        let mut b = Vec2::zeros();
        let mut axis_cost = 0.0;
        let mut feasible = true;
        for axis in 0..2 {
            let k = r.alpha[axis] * tau + r.offset[axis];
            let mut best_axis: Option<(f64, f64)> = None;
            for j in 0..resolution {
                let bj = lin(r.b_lo[axis], r.b_hi[axis], j);
                let u = k - bj;
                if u < r.u_lo[axis] || u > r.u_hi[axis] {
                    continue;
                }
                let c = r.w.w_u * (u - r.u_nom[axis]).powi(2) + r.w.w_b * (bj - r.b_nom[axis]).powi(2);
                if best_axis.is_none_or(|(bc, _)| c < bc) {
                    best_axis = Some((c, bj));
                }
            }
            match best_axis {
                Some((c, bj)) => {
                    axis_cost += c;
                    b[axis] = bj;
                }
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if !feasible {
            continue;
        }
        let cost = axis_cost + r.w.w_tau * (tau - r.tau_nom).powi(2);
        if best.is_none_or(|(bc, _, _)| cost < bc) {
            best = Some((cost, tau, b));
        }
    }
    let (cost, tau, b) = best.ok_or(StepQpError::InfeasibleProblem("no feasible grid point"))?;
    Ok(StepQpSolution {
        u_next: r.step(tau, &b),
        t_next: tau.ln() / p.omega,
        b,
        tau,
        cost,
        active_bounds: ActiveBounds::default(),
    })
}

/// Cost of an arbitrary `(τ, b)` pair under the problem's objective, `u` reconstructed.
pub fn objective(p: &StepQpProblem, tau: f64, b: &Vec2) -> Result<f64, StepQpError> {
    Ok(Reduced::from_problem(p)?.cost(tau, b))
}

/// Footstep implied by `(τ, b)` through the DCM equality.
pub fn implied_step(p: &StepQpProblem, tau: f64, b: &Vec2) -> Result<Vec2, StepQpError> {
    Ok(Reduced::from_problem(p)?.step(tau, b))
}

/// Largest per-axis residual of the DCM equality at a solution.
pub fn equality_residual(p: &StepQpProblem, s: &StepQpSolution) -> Result<f64, StepQpError> {
    let u = implied_step(p, s.tau, &s.b)?;
    Ok((u - s.u_next).amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcm::{nominal_references, GaitParams};
    use crate::plant::Side;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const OMEGA: f64 = 5.294_235_004_1;

    /// A problem whose nominal triple satisfies the DCM equality exactly.
    fn on_orbit(v: f64, gait: Gait) -> StepQpProblem {
        let nominal = nominal_references(Vec2::new(v, 0.0), gait, Side::Right, &GaitParams::default(), OMEGA);
        let u_cur = Vec2::new(0.4, 0.05);
        let xi_td = u_cur + nominal.touchdown_offset + nominal.touchdown_velocity / OMEGA;
        StepQpProblem {
            u_cur,
            xi_now: xi_td,
            t_elapsed: 0.0,
            omega: OMEGA,
            weights: QpWeights::default(),
            gait,
            com_vel_xy: nominal.stance_end_velocity,
            phase: StepPhase::Stance,
            dt: 0.001,
            nominal,
        }
    }

    fn random_problem(rng: &mut ChaCha8Rng) -> StepQpProblem {
        let gait = if rng.gen_bool(0.5) { Gait::Walk } else { Gait::Run };
        let mut p = on_orbit(rng.gen_range(-1.0..1.3), gait);
        p.t_elapsed = rng.gen_range(0.0..0.25);
        p.xi_now += Vec2::new(rng.gen_range(-0.15..0.15), rng.gen_range(-0.1..0.1));
        p.com_vel_xy += Vec2::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
        p
    }

    #[test]
    fn nominal_triple_is_returned_when_unconstrained() {
        for (v, gait) in [(0.0, Gait::Walk), (0.5, Gait::Walk), (1.0, Gait::Run), (-0.8, Gait::Run)] {
            let p = on_orbit(v, gait);
            let s = solve(&p).unwrap();
            assert!((s.u_next - (p.u_cur + p.nominal.u_nom_offset)).norm() < 1e-9, "{v} {gait:?}");
            assert!((s.t_next - p.nominal.t_nom).abs() < 1e-9);
            assert!((s.b - p.nominal.b_nom).norm() < 1e-9);
            assert!(s.cost < 1e-12);
            assert!(s.active_bounds.is_empty());

            let g = grid_oracle(&p, 200).unwrap();
            let cells = (p.nominal.tau_max - p.nominal.tau_min) / 199.0;
            assert!((g.tau - s.tau).abs() <= cells);
        }
    }

    #[test]
    fn solver_never_loses_to_the_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 60 {
            let p = random_problem(&mut rng);
            let Ok(s) = solve(&p) else { continue };
            let g = grid_oracle(&p, 120).unwrap();
            assert!(s.cost <= g.cost + 1e-6, "solver {} grid {}", s.cost, g.cost);
            assert!(equality_residual(&p, &s).unwrap() < 1e-9);
            // With a footstep bound active the admissible offsets at a fixed τ can be
            // narrower than one grid cell, so only the cost comparison is meaningful.
            let step_bound = s.active_bounds.iter().any(|b| {
                matches!(b, Bound::StepLower(_) | Bound::StepUpper(_))
            });
            if !step_bound {
                let tau_cell = (p.nominal.tau_max - p.nominal.tau_min) / 119.0;
                let b_cell = (p.nominal.b_box.hi - p.nominal.b_box.lo) / 119.0;
                assert!((s.tau - g.tau).abs() <= tau_cell + 1e-9, "tau {} vs {}", s.tau, g.tau);
                assert!((s.b.x - g.b.x).abs() <= b_cell.x + 1e-9);
                assert!((s.b.y - g.b.y).abs() <= b_cell.y + 1e-9);
            }
            checked += 1;
        }
    }

    #[test]
    fn forward_push_steps_sooner_and_farther() {
        let base = on_orbit(0.5, Gait::Walk);
        let mut pushed = base.clone();
        pushed.xi_now.x += 0.08;
        let s = solve(&pushed).unwrap();
        assert!(s.t_next < base.nominal.t_nom);
        assert!(s.u_next.x > base.u_cur.x + base.nominal.u_nom_offset.x);
        let g = grid_oracle(&pushed, 300).unwrap();
        assert!(g.t_next < base.nominal.t_nom);
        assert!(s.cost <= g.cost + 1e-9);
    }

    #[test]
    fn weights_scale_out_of_the_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = random_problem(&mut rng);
            let Ok(a) = solve(&p) else { continue };
            let mut q = p.clone();
            q.weights = p.weights.scaled(37.5);
            let b = solve(&q).unwrap();
            assert!((a.u_next - b.u_next).amax() < 1e-9);
            assert!((a.tau - b.tau).abs() < 1e-9);
        }
    }

    #[test]
    fn bounds_hold_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut p = random_problem(&mut rng);
            p.xi_now += Vec2::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.3..0.3));
            let Ok(s) = solve(&p) else { continue };
            let r = Reduced::from_problem(&p).unwrap();
            assert!(s.tau >= r.tau_lo && s.tau <= r.tau_hi);
            assert!(p.nominal.b_box.contains(&s.b));
            assert!(p.nominal.u_box.translate(p.u_cur).contains(&s.u_next));
            assert!(s.t_next >= p.t_elapsed.max(p.nominal.t_min) - 1e-12);
            assert!(equality_residual(&p, &s).unwrap() < 1e-9);
        }
    }

    #[test]
    fn far_away_dcm_is_infeasible() {
        let mut p = on_orbit(0.5, Gait::Walk);
        p.xi_now.x += 5.0;
        assert!(matches!(solve(&p), Err(StepQpError::InfeasibleProblem(_))));
        assert!(matches!(grid_oracle(&p, 60), Err(StepQpError::InfeasibleProblem(_))));
    }

    #[test]
    fn flight_replans_landing_foothold() {
        let mut p = on_orbit(1.0, Gait::Run);
        p.t_elapsed = p.nominal.t_nom;
        // Shortly after takeoff on the periodic orbit.
        let (x, v) = crate::dcm::lip_flow(p.nominal.touchdown_offset, p.nominal.touchdown_velocity, OMEGA, p.nominal.t_nom);
        p.xi_now = p.u_cur + x + v / OMEGA;
        p.com_vel_xy = v;
        p.phase = StepPhase::Flight { t_land_remaining: p.nominal.t_flight };
        let s = solve(&p).unwrap();
        assert!((s.t_next - p.nominal.t_nom).abs() < 1e-12);
        assert!((s.u_next - (p.u_cur + p.nominal.u_nom_offset)).norm() < 1e-9);
        assert!((s.b - p.nominal.b_nom).norm() < 1e-9);
    }

    #[test]
    fn grid_refinement_is_self_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 10 {
            let p = random_problem(&mut rng);
            let Ok(s) = solve(&p) else { continue };
            if !s.active_bounds.is_empty() {
                continue;
            }
            let coarse = grid_oracle(&p, 200).unwrap();
            let fine = grid_oracle(&p, 400).unwrap();
            // Nearest-point error of the coarse grid under the cost curvature.
            let r = Reduced::from_problem(&p).unwrap();
            let (h, _) = r.quadratic();
            let cell = Vector3::new(
                (r.tau_hi - r.tau_lo) / 199.0,
                (r.b_hi.x - r.b_lo.x) / 199.0,
                (r.b_hi.y - r.b_lo.y) / 199.0,
            );
            let bound = 0.5 * h.abs().dot(&(cell * cell.transpose())) / 4.0;
            assert!((coarse.cost - fine.cost).abs() <= bound, "{} {} {}", coarse.cost, fine.cost, bound);
            checked += 1;
        }
    }
}
