//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use terrasim::mpc::{build_problem, MpcParams, MpcProblem, N_INPUTS};
use terrasim::plant::ControlInput;
use terrasim::pose::{pose_error, DisturbanceVec, Planar, Pose, RobotState};

/// Predicted end-effector errors for an input sequence, stepping the
/// linearized model one interval at a time.
pub fn simulate_errors(p: &MpcProblem, u: &[ControlInput]) -> Vec<[f64; 6]> {
    let prm = &p.params;
    let dt = prm.dt;
    let yaw = p.x0.odom.yaw;
    let (s, c) = yaw.sin_cos();
    let lever = p.tool_offset + p.x0.arm_offset;
    let lever_w = Vector3::new(c * lever.x - s * lever.y, s * lever.x + c * lever.y, 0.0);
    let v_lin = p.u_prev.v;

    // actual chassis rates follow the commands through a first-order lag
    let (mean_keep, end_keep) = if prm.chassis_lag > 0.0 {
        let end = (-dt / prm.chassis_lag).exp();
        (prm.chassis_lag / dt * (1.0 - end), end)
    } else {
        (0.0, 0.0)
    };
    let mut v_act = p.x0.base_vel.v;
    let mut w_act = p.x0.base_vel.omega;

    let mut base = Vector3::zeros();
    let mut dyaw = 0.0;
    let mut arm = Vector3::zeros();
    let mut dist = DisturbanceVec::zero();
    let mut out = Vec::new();
    for k in 0..prm.horizon {
        let uk = u[k.min(prm.control_horizon - 1)];
        // heading change of this interval only affects the next one
        let v_mean = uk.v + (v_act - uk.v) * mean_keep;
        let w_mean = uk.omega + (w_act - uk.omega) * mean_keep;
        v_act = uk.v + (v_act - uk.v) * end_keep;
        w_act = uk.omega + (w_act - uk.omega) * end_keep;
        base.x += dt * (v_mean * c - v_lin * dyaw * s);
        base.y += dt * (v_mean * s + v_lin * dyaw * c);
        dyaw += dt * w_mean;
        arm += uk.arm() * dt;
        dist = dist + p.previews[k].scale(dt / prm.preview_horizon);

        let arm_w = Vector3::new(c * arm.x - s * arm.y, s * arm.x + c * arm.y, arm.z);
        let swing = Vector3::new(-lever_w.y, lever_w.x, 0.0) * dyaw;
        let dist_w = Vector3::new(c * dist.dp.x - s * dist.dp.y, s * dist.dp.x + c * dist.dp.y, dist.dp.z);
        let r = &p.reference[k];
        let ride = Vector3::new(0.0, 0.0, r.position.z - p.ref_now.position.z);
        let ee = p.ee0.position + base + arm_w + swing + dist_w + ride;
        let ep = r.position - ee;
        let er = pose_error(r, &p.ee0).dr - dist.dr - Vector3::new(0.0, 0.0, dyaw);
        out.push([ep.x, ep.y, ep.z, er.x, er.y, er.z]);
    }
    out
}

/// Weighted residual vector: √Q e_k for every step, then √R Δu_j.
pub fn residual(p: &MpcProblem, x: &DVector<f64>) -> DVector<f64> {
    let prm = &p.params;
    let u: Vec<ControlInput> = (0..prm.control_horizon)
        .map(|j| ControlInput::from_array(std::array::from_fn(|i| x[j * N_INPUTS + i])))
        .collect();
    let mut r = Vec::new();
    for e in simulate_errors(p, &u) {
        for i in 0..6 {
            r.push(prm.q[i].sqrt() * e[i]);
        }
    }
    let mut prev = p.u_prev.to_array();
    for uj in &u {
        let cur = uj.to_array();
        for i in 0..N_INPUTS {
            r.push(prm.r[i].sqrt() * (cur[i] - prev[i]));
        }
        prev = cur;
    }
    DVector::from_vec(r)
}

/// Unconstrained minimizer of ‖residual(x)‖² via the normal equations.
pub fn oracle(p: &MpcProblem) -> DVector<f64> {
    let n = p.params.n_vars();
    let r0 = residual(p, &DVector::zeros(n));
    let mut jac = DMatrix::zeros(r0.len(), n);
    for i in 0..n {
        let mut unit = DVector::zeros(n);
        unit[i] = 1.0;
        jac.set_column(i, &(residual(p, &unit) - &r0));
    }
    let normal = jac.transpose() * &jac;
    let rhs = -(jac.transpose() * &r0);
    normal.cholesky().expect("normal matrix is positive definite").solve(&rhs)
}

fn small_rotation(rng: &mut impl Rng, amp: f64) -> Pose {
    Pose::from_xyz_rpy(
        Vector3::zeros(),
        rng.random_range(-amp..amp),
        rng.random_range(-amp..amp),
        rng.random_range(-amp..amp),
    )
}

pub fn random_problem(seed: u64) -> MpcProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = MpcParams::default();
    params.bounds = params.bounds.scaled(10.0);
    params.chassis_lag = if seed % 2 == 0 { 0.05 } else { 0.0 };
    let odom = Planar {
        x: rng.random_range(-5.0..5.0),
        y: rng.random_range(-5.0..5.0),
        yaw: rng.random_range(-3.1..3.1),
    };
    let mut x0 = RobotState::at_rest(odom);
    x0.arm_offset = Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.05..0.05));
    x0.base_vel.v = rng.random_range(-0.4..0.4);
    x0.base_vel.omega = rng.random_range(-0.3..0.3);
    let tool = Vector3::new(rng.random_range(0.2..0.5), 0.0, rng.random_range(0.05..0.15));

    let ee_pos = Vector3::new(odom.x, odom.y, 0.1) + Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 0.0);
    let mut ee0 = small_rotation(&mut rng, 0.05);
    ee0.position = ee_pos;
    let mut ref_now = small_rotation(&mut rng, 0.05);
    ref_now.position = ee_pos + Vector3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(-0.01..0.01));
    let (s, c) = odom.yaw.sin_cos();
    let speed = rng.random_range(0.0..0.4);
    let climb = rng.random_range(-0.01..0.01);
    let reference = (1..=params.horizon)
        .map(|k| {
            let d = speed * 0.1 * k as f64;
            let mut r = ref_now;
            r.position += Vector3::new(c * d, s * d, climb * k as f64);
            r
        })
        .collect();
    let prediction = DisturbanceVec::from_array(std::array::from_fn(|i| {
        let amp = if i < 3 { 0.005 } else { 0.01 };
        rng.random_range(-amp..amp)
    }));
    let u_prev = ControlInput::from_array([
        rng.random_range(-0.4..0.4),
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.1..0.1),
        rng.random_range(-0.1..0.1),
        rng.random_range(-0.1..0.1),
    ]);
    build_problem(&x0, ee0, ref_now, reference, &prediction, u_prev, tool, &params).unwrap()
}


pub const FEATURES: usize = 16;
pub const ACTIVE: usize = 4;
pub const SAMPLES: usize = 400;

/// Linear data with `ACTIVE` informative columns and additive noise at
/// 20 dB SNR, i.e. noise power 1 % of signal power.
pub fn synthetic(seed: u64) -> (DMatrix<f64>, DMatrix<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(SAMPLES, FEATURES, |_, _| StandardNormal.sample(&mut rng));
    let mut truth = vec![false; FEATURES];
    while truth.iter().filter(|&&t| t).count() < ACTIVE {
        truth[rng.random_range(0..FEATURES)] = true;
    }
    let coef: Vec<f64> = truth
        .iter()
        .map(|&t| if t { rng.random_range(0.5..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 } } else { 0.0 })
        .collect();
    let signal: Vec<f64> = (0..SAMPLES).map(|r| (0..FEATURES).map(|c| x[(r, c)] * coef[c]).sum()).collect();
    let power = signal.iter().map(|s| s * s).sum::<f64>() / SAMPLES as f64;
    let sigma = (power / 100.0).sqrt();
    let y = DMatrix::from_fn(SAMPLES, 1, |r, _| {
        let n: f64 = StandardNormal.sample(&mut rng);
        signal[r] + sigma * n
    });
    (x, y, truth)
}

