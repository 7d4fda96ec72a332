//! Preview MPC over a linearized kinematic model, a small dense active-set QP
//! solver, and the chassis/arm frequency split.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{lag_keep, ControlInput};
use crate::pose::{pose_error, DisturbanceVec, Pose, RobotState};

pub const N_INPUTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    pub v: f64,
    pub omega: f64,
    pub arm_vel: f64,
    /// Half-widths of the arm offset box.
    pub arm_box: [f64; 3],
}

impl Default for InputBounds {
    fn default() -> Self {
        Self {
            v: 1.0,
            omega: 1.0,
            arm_vel: 0.2,
            arm_box: [0.3, 0.3, 0.15],
        }
    }
}

impl InputBounds {
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            v: self.v * k,
            omega: self.omega * k,
            arm_vel: self.arm_vel * k,
            arm_box: self.arm_box.map(|b| b * k),
        }
    }

    fn per_input(&self) -> [f64; N_INPUTS] {
        [self.v, self.omega, self.arm_vel, self.arm_vel, self.arm_vel]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpcParams {
    pub horizon: usize,
    pub control_horizon: usize,
    pub dt: f64,
    /// Diagonal error weight: position (m⁻²) then orientation (rad⁻²).
    pub q: [f64; 6],
    /// Diagonal input-increment weight: v, omega, arm x/y/z.
    pub r: [f64; 5],
    pub bounds: InputBounds,
    /// Validity window of one predictor output.
    pub preview_horizon: f64,
    pub max_iterations: usize,
    /// First-order lag between commanded and actual chassis rates, s.
    pub chassis_lag: f64,
}

impl Default for MpcParams {
    fn default() -> Self {
        Self {
            horizon: 10,
            control_horizon: 5,
            dt: 0.1,
            q: [1e6, 1e6, 1e6, 1e5, 1e5, 1e5],
            r: [1.0, 1.0, 10.0, 10.0, 10.0],
            bounds: InputBounds::default(),
            preview_horizon: 0.5,
            max_iterations: 200,
            chassis_lag: 0.0,
        }
    }
}

impl MpcParams {
    pub fn validate(&self) -> Result<()> {
        if self.control_horizon < 1 || self.horizon < self.control_horizon {
            return Err(Error::config("mpc.horizon", "need horizon >= control_horizon >= 1"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("mpc.dt", "must be > 0"));
        }
        if !(self.chassis_lag >= 0.0) {
            return Err(Error::config("mpc.chassis_lag", "must be >= 0"));
        }
        if self.q.iter().any(|&q| q < 0.0 || !q.is_finite()) {
            return Err(Error::config("mpc.q", "weights must be finite and >= 0"));
        }
        if self.r.iter().any(|&r| r <= 0.0 || !r.is_finite()) {
            return Err(Error::config("mpc.r", "weights must be finite and > 0"));
        }
        let b = &self.bounds;
        if [b.v, b.omega, b.arm_vel].iter().chain(b.arm_box.iter()).any(|&v| !(v > 0.0)) {
            return Err(Error::config("mpc.bounds", "bounds must be > 0"));
        }
        Ok(())
    }

    pub fn n_vars(&self) -> usize {
        self.control_horizon * N_INPUTS
    }

    /// Number of leading horizon steps covered by one prediction.
    pub fn preview_steps(&self) -> usize {
        ((self.preview_horizon / self.dt).round() as usize).min(self.horizon)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcProblem {
    pub x0: RobotState,
    /// Current end-effector estimate.
    pub ee0: Pose,
    pub ref_now: Pose,
    /// Reference poses at steps 1..=N.
    pub reference: Vec<Pose>,
    /// Disturbance previews d̂_k for steps 0..N-1, chassis frame.
    pub previews: Vec<DisturbanceVec>,
    pub u_prev: ControlInput,
    pub tool_offset: Vector3<f64>,
    pub params: MpcParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcSolution {
    pub u_seq: Vec<ControlInput>,
    pub predicted_errors: Vec<DisturbanceVec>,
    pub cost: f64,
    pub solve_time: f64,
    pub active_constraints: usize,
    pub iterations: usize,
    /// Set when the QP did not converge and a saturated fallback was returned.
    pub fallback: bool,
}

/// Preview profile over the horizon: the prediction holds for its validity
/// window and then decays linearly to zero at the last step.
pub fn preview_profile(prediction: &DisturbanceVec, params: &MpcParams) -> Vec<DisturbanceVec> {
    let n = params.horizon;
    let valid = params.preview_steps();
    (0..n)
        .map(|k| {
            if k < valid {
                *prediction
            } else {
                let span = (n - valid) as f64;
                prediction.scale((n - 1 - k) as f64 / span)
            }
        })
        .collect()
}

/// Assembles one MPC problem.
#[allow(clippy::too_many_arguments)]
pub fn build_problem(
    x0: &RobotState,
    ee0: Pose,
    ref_now: Pose,
    reference: Vec<Pose>,
    prediction: &DisturbanceVec,
    u_prev: ControlInput,
    tool_offset: Vector3<f64>,
    params: &MpcParams,
) -> Result<MpcProblem> {
    params.validate()?;
    if reference.len() != params.horizon {
        return Err(Error::DimensionMismatch {
            expected: params.horizon,
            got: reference.len(),
        });
    }
    Ok(MpcProblem {
        x0: *x0,
        ee0,
        ref_now,
        reference,
        previews: preview_profile(prediction, params),
        u_prev,
        tool_offset,
        params: params.clone(),
    })
}

/// Affine error model e_k(x) = f_k - G_k x for k = 1..N, plus arm-offset rows.
struct Condensed {
    e0: [f64; 6],
    free: Vec<DVector<f64>>,
    gain: Vec<DMatrix<f64>>,
    /// (axis, coefficients, offset at x = 0) for the arm offset at each step
    arm: Vec<(usize, DVector<f64>, f64)>,
}

fn var(j: usize, input: usize) -> usize {
    j * N_INPUTS + input
}

fn condense(p: &MpcProblem) -> Condensed {
    let prm = &p.params;
    let n = prm.n_vars();
    let nc = prm.control_horizon;
    let dt = prm.dt;
    let yaw0 = p.x0.odom.yaw;
    let (s0, c0) = yaw0.sin_cos();
    let heading = [c0, s0];
    let normal = [-s0, c0];
    let lever = p.tool_offset + p.x0.arm_offset;
    // world-frame lever and its derivative with respect to yaw
    let lever_w = [c0 * lever.x - s0 * lever.y, s0 * lever.x + c0 * lever.y];
    let dlever = [-lever_w[1], lever_w[0]];
    let v_lin = p.u_prev.v;
    let rate = dt / prm.preview_horizon;

    let e0 = pose_error(&p.ref_now, &p.ee0).to_array();

    // actual chassis rates relax toward the command: over one interval the
    // mean rate is u + (w - u)·mean_keep and the end rate u + (w - u)·end_keep
    let (mean_keep, end_keep) = lag_keep(dt, prm.chassis_lag);
    // rate at the start of the interval: constant part plus gain on x
    let mut v_rate = (p.x0.base_vel.v, DVector::<f64>::zeros(n));
    let mut w_rate = (p.x0.base_vel.omega, DVector::<f64>::zeros(n));
    let mut base_c = [0.0; 2];
    let mut psi_c = 0.0;

    let mut psi = DVector::<f64>::zeros(n);
    let mut base = [DVector::<f64>::zeros(n), DVector::<f64>::zeros(n)];
    let mut arm = [DVector::<f64>::zeros(n), DVector::<f64>::zeros(n), DVector::<f64>::zeros(n)];
    let mut dist = DisturbanceVec::zero();

    let mut free = Vec::with_capacity(prm.horizon);
    let mut gain = Vec::with_capacity(prm.horizon);
    let mut arm_rows = Vec::new();
    for k in 1..=prm.horizon {
        let j = (k - 1).min(nc - 1);
        // heading coupling uses the yaw deviation at the start of the interval
        let mut v_mean = &v_rate.1 * mean_keep;
        v_mean[var(j, 0)] += 1.0 - mean_keep;
        let mut w_mean = &w_rate.1 * mean_keep;
        w_mean[var(j, 1)] += 1.0 - mean_keep;
        for a in 0..2 {
            base[a] += &psi * (dt * v_lin * normal[a]) + &v_mean * (dt * heading[a]);
            base_c[a] += dt * v_lin * normal[a] * psi_c + dt * heading[a] * v_rate.0 * mean_keep;
        }
        psi += &w_mean * dt;
        psi_c += dt * w_rate.0 * mean_keep;
        for rate in [&mut v_rate, &mut w_rate] {
            rate.0 *= end_keep;
            rate.1 *= end_keep;
        }
        v_rate.1[var(j, 0)] += 1.0 - end_keep;
        w_rate.1[var(j, 1)] += 1.0 - end_keep;
        for a in 0..3 {
            arm[a][var(j, 2 + a)] += dt;
        }
        dist = dist + p.previews[k - 1].scale(rate);

        let mut g = DMatrix::<f64>::zeros(6, n);
        for a in 0..2 {
            let arm_w = if a == 0 {
                &arm[0] * c0 - &arm[1] * s0
            } else {
                &arm[0] * s0 + &arm[1] * c0
            };
            let row = &base[a] + arm_w + &psi * dlever[a];
            g.row_mut(a).copy_from(&row.transpose());
        }
        g.row_mut(2).copy_from(&arm[2].transpose());
        g.row_mut(5).copy_from(&psi.transpose());

        let r = &p.reference[k - 1];
        let dist_w = Vector3::new(c0 * dist.dp.x - s0 * dist.dp.y, s0 * dist.dp.x + c0 * dist.dp.y, dist.dp.z);
        let ride = r.position.z - p.ref_now.position.z;
        let drift = Vector3::new(base_c[0] + dlever[0] * psi_c, base_c[1] + dlever[1] * psi_c, 0.0);
        let ee_free = p.ee0.position + dist_w + drift + Vector3::new(0.0, 0.0, ride);
        let rot = pose_error(r, &p.ee0).dr - dist.dr - Vector3::new(0.0, 0.0, psi_c);
        let f = r.position - ee_free;
        free.push(DVector::from_vec(vec![f.x, f.y, f.z, rot.x, rot.y, rot.z]));
        gain.push(g);

        for a in 0..3 {
            arm_rows.push((a, arm[a].clone(), p.x0.arm_offset[a]));
        }
    }
    Condensed {
        e0,
        free,
        gain,
        arm: arm_rows,
    }
}

/// Dense QP `min ½ xᵀHx + gᵀx  s.t.  A x ≤ b`.
#[derive(Clone, Debug)]
pub struct Qp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct QpResult {
    pub x: DVector<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

/// Primal active-set method started from a feasible point.
pub fn solve_qp(qp: &Qp, x0: DVector<f64>, max_iter: usize) -> QpResult {
    let n = qp.h.nrows();
    let mut x = x0;
    let mut work: Vec<usize> = Vec::new();
    // set after an unblocked step: x already minimizes over the working set
    let mut at_min = false;
    for it in 0..max_iter {
        let m = work.len();
        let mut kkt = DMatrix::<f64>::zeros(n + m, n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        for (r, &i) in work.iter().enumerate() {
            for c in 0..n {
                kkt[(n + r, c)] = qp.a[(i, c)];
                kkt[(c, n + r)] = qp.a[(i, c)];
            }
        }
        let grad = &qp.h * &x + &qp.g;
        let mut rhs = DVector::<f64>::zeros(n + m);
        rhs.rows_mut(0, n).copy_from(&(-grad));
        let Some(sol) = kkt.lu().solve(&rhs) else {
            return QpResult {
                x,
                active: work,
                iterations: it,
                converged: false,
            };
        };
        let mut step = sol.rows(0, n).into_owned();
        // variables pinned by an active simple bound must not drift by roundoff
        for &i in &work {
            if let Some((j, _)) = simple_bound(qp, i) {
                step[j] = 0.0;
            }
        }
        let scale = 1.0 + x.amax();
        if at_min || step.amax() <= 1e-12 * scale {
            at_min = false;
            let lambda = sol.rows(n, m);
            let worst = (0..m).min_by(|&a, &b| lambda[a].total_cmp(&lambda[b]));
            match worst {
                Some(w) if lambda[w] < -1e-10 => {
                    work.remove(w);
                    continue;
                }
                _ => {
                    return QpResult {
                        x,
                        active: work,
                        iterations: it + 1,
                        converged: true,
                    }
                }
            }
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..qp.a.nrows() {
            if work.contains(&i) {
                continue;
            }
            let ap = qp.a.row(i).dot(&step.transpose());
            if ap > 1e-14 {
                let slack = qp.b[i] - qp.a.row(i).dot(&x.transpose());
                let t = (slack / ap).max(0.0);
                if t < alpha {
                    alpha = t;
                    blocking = Some(i);
                }
            }
        }
        x += &step * alpha;
        match blocking {
            Some(i) => {
                // land exactly on simple bounds rather than within roundoff of them
                if let Some((j, c)) = simple_bound(qp, i) {
                    x[j] = qp.b[i] / c;
                }
                work.push(i);
            }
            None => at_min = true,
        }
    }
    QpResult {
        x,
        active: work,
        iterations: max_iter,
        converged: false,
    }
}

/// Column and coefficient of a constraint row with a single nonzero.
fn simple_bound(qp: &Qp, i: usize) -> Option<(usize, f64)> {
    let row = qp.a.row(i);
    let mut nz = row.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(j, &c)| (j, c));
    match (nz.next(), nz.next()) {
        (Some(hit), None) => Some(hit),
        _ => None,
    }
}

fn weighted_sq(v: &[f64], w: &[f64]) -> f64 {
    v.iter().zip(w).map(|(a, b)| a * a * b).sum()
}

fn unpack(x: &DVector<f64>, nc: usize) -> Vec<ControlInput> {
    (0..nc)
        .map(|j| ControlInput::from_array(std::array::from_fn(|i| x[var(j, i)])))
        .collect()
}

/// Full objective for an input sequence, including the constant e_0 term.
pub fn evaluate_cost(p: &MpcProblem, u: &[ControlInput]) -> f64 {
    let c = condense(p);
    let x = DVector::from_iterator(p.params.n_vars(), u.iter().flat_map(|u| u.to_array()));
    cost_of(p, &c, &x).0
}

fn cost_of(p: &MpcProblem, c: &Condensed, x: &DVector<f64>) -> (f64, Vec<DisturbanceVec>) {
    let q = &p.params.q;
    let mut cost = weighted_sq(&c.e0, q);
    let mut errs = Vec::with_capacity(c.free.len());
    for (f, g) in c.free.iter().zip(&c.gain) {
        let e = f - g * x;
        cost += weighted_sq(e.as_slice(), q);
        errs.push(DisturbanceVec::from_array(std::array::from_fn(|i| e[i])));
    }
    let mut prev = p.u_prev.to_array();
    for j in 0..p.params.control_horizon {
        let cur: [f64; 5] = std::array::from_fn(|i| x[var(j, i)]);
        let du: Vec<f64> = cur.iter().zip(&prev).map(|(a, b)| a - b).collect();
        cost += weighted_sq(&du, &p.params.r);
        prev = cur;
    }
    (cost, errs)
}

/// Builds the condensed QP for a problem.
pub fn condensed_qp(p: &MpcProblem) -> Qp {
    let c = condense(p);
    qp_from(p, &c)
}

fn qp_from(p: &MpcProblem, c: &Condensed) -> Qp {
    let prm = &p.params;
    let n = prm.n_vars();
    let nc = prm.control_horizon;
    let q = DMatrix::from_diagonal(&DVector::from_row_slice(&prm.q));
    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut g = DVector::<f64>::zeros(n);
    for (f, gk) in c.free.iter().zip(&c.gain) {
        let gq = gk.transpose() * &q;
        h += &gq * gk;
        g -= &gq * f;
    }
    // input increments: Δu_j = u_j - u_{j-1}, u_{-1} = u_prev
    let up = p.u_prev.to_array();
    for j in 0..nc {
        for i in 0..N_INPUTS {
            let r = prm.r[i];
            let a = var(j, i);
            h[(a, a)] += r;
            if j > 0 {
                let b = var(j - 1, i);
                h[(b, b)] += r;
                h[(a, b)] -= r;
                h[(b, a)] -= r;
            } else {
                g[a] -= r * up[i];
            }
        }
    }
    h *= 2.0;
    g *= 2.0;

    let lim = prm.bounds.per_input();
    let m = 2 * n + 2 * c.arm.len();
    let mut a = DMatrix::<f64>::zeros(m, n);
    let mut b = DVector::<f64>::zeros(m);
    for j in 0..nc {
        for i in 0..N_INPUTS {
            let v = var(j, i);
            a[(2 * v, v)] = 1.0;
            b[2 * v] = lim[i];
            a[(2 * v + 1, v)] = -1.0;
            b[2 * v + 1] = lim[i];
        }
    }
    for (r, (axis, coef, off)) in c.arm.iter().enumerate() {
        let bx = prm.bounds.arm_box[*axis];
        let row = 2 * n + 2 * r;
        a.row_mut(row).copy_from(&coef.transpose());
        a.row_mut(row + 1).copy_from(&(-coef).transpose());
        // keep x = 0 feasible even if the arm already sits outside the box
        b[row] = (bx - off).max(0.0);
        b[row + 1] = (bx + off).max(0.0);
    }
    Qp { h, g, a, b }
}

/// Solves the MPC problem.
pub fn solve(problem: &MpcProblem) -> MpcSolution {
    let start = Instant::now();
    let prm = &problem.params;
    let c = condense(problem);
    let qp = qp_from(problem, &c);
    let n = prm.n_vars();
    let res = solve_qp(&qp, DVector::zeros(n), prm.max_iterations);
    let (x, fallback) = if res.converged {
        (res.x, false)
    } else {
        // saturated unconstrained optimum
        let lim = prm.bounds.per_input();
        let x = qp.h.clone().lu().solve(&(-&qp.g)).unwrap_or_else(|| DVector::zeros(n));
        (DVector::from_fn(n, |i, _| x[i].clamp(-lim[i % N_INPUTS], lim[i % N_INPUTS])), true)
    };
    let (cost, predicted_errors) = cost_of(problem, &c, &x);
    MpcSolution {
        u_seq: unpack(&x, prm.control_horizon),
        predicted_errors,
        cost,
        solve_time: start.elapsed().as_secs_f64(),
        active_constraints: res.active.len(),
        iterations: res.iterations,
        fallback,
    }
}

/// First-order low-pass with the pole mapped exactly: a = exp(-2π f_c T).
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencySplitter {
    pole: f64,
    state: Option<Vector3<f64>>,
}

impl FrequencySplitter {
    pub fn new(split_hz: f64, sample_period: f64) -> Self {
        Self {
            pole: (-2.0 * std::f64::consts::PI * split_hz * sample_period).exp(),
            state: None,
        }
    }

    pub fn pole(&self) -> f64 {
        self.pole
    }

    /// Returns `(chassis_share, arm_share)`; the two sum to `total`.
    pub fn split(&mut self, total: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        let prev = self.state.unwrap_or_else(Vector3::zeros);
        let low = prev * self.pole + total * (1.0 - self.pole);
        self.state = Some(low);
        (low, total - low)
    }

    pub fn reset(&mut self) {
        self.state = None;
    }
}

/// Splits a correction stream sampled every `sample_period` seconds into
/// chassis (low-frequency) and arm (complementary) shares.
pub fn decompose_command(
    stream: &[DisturbanceVec],
    split_hz: f64,
    sample_period: f64,
) -> Vec<(DisturbanceVec, DisturbanceVec)> {
    let mut fp = FrequencySplitter::new(split_hz, sample_period);
    let mut fr = FrequencySplitter::new(split_hz, sample_period);
    stream
        .iter()
        .map(|d| {
            let (lp, _) = fp.split(d.dp);
            let (lr, _) = fr.split(d.dr);
            let chassis = DisturbanceVec::new(lp, lr);
            // arm share as the exact remainder
            (chassis, *d - chassis)
        })
        .collect()
}

/// Keeps the commanded arm offset inside the workspace box; any excess is
/// handed back to be rerouted to the chassis on the next cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmAllocator {
    pub arm_box: Vector3<f64>,
    pub reroutes: u64,
    pending: Vector3<f64>,
}

impl ArmAllocator {
    pub fn new(arm_box: Vector3<f64>) -> Self {
        Self {
            arm_box,
            reroutes: 0,
            pending: Vector3::zeros(),
        }
    }

    /// Clamps a requested offset; returns the admissible offset.
    pub fn clamp_arm(&mut self, request: Vector3<f64>) -> Vector3<f64> {
        let clamped = Vector3::from_fn(|i, _| request[i].clamp(-self.arm_box[i], self.arm_box[i]));
        let overflow = request - clamped;
        if overflow.amax() > 0.0 {
            self.reroutes += 1;
            self.pending += overflow;
        }
        clamped
    }

    /// Overflow accumulated since the last call, for the chassis share.
    pub fn take_reroute(&mut self) -> Vector3<f64> {
        std::mem::take(&mut self.pending)
    }
}
