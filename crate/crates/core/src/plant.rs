//! Kinematic plant stepped at 1 ms and the 100 Hz command executor.
//!
//! The chassis is a unicycle on the ground plane; its height, roll and pitch are
//! slaved to a least-squares plane through the four wheel contact heights. Each
//! wheel's transform is perturbed by an independent noise draw every step. The
//! arm is a bounded task-space offset integrated from commanded velocity.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::mpc::{ArmAllocator, FrequencySplitter};
use crate::pose::{compose, pose_error, BaseVel, DisturbanceVec, Planar, Pose, RobotState};
use crate::rng::Stream;
use crate::terrain::{wheel_noise, TerrainField};

/// Chassis and arm velocity command: `[v, omega, arm_vx, arm_vy, arm_vz]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub v: f64,
    pub omega: f64,
    pub arm_vel: [f64; 3],
}

impl ControlInput {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.v, self.omega, self.arm_vel[0], self.arm_vel[1], self.arm_vel[2]]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            v: a[0],
            omega: a[1],
            arm_vel: [a[2], a[3], a[4]],
        }
    }

    pub fn arm(&self) -> Vector3<f64> {
        Vector3::from(self.arm_vel)
    }

    pub fn lerp(&self, other: &Self, s: f64) -> Self {
        let a = self.to_array();
        let b = other.to_array();
        let mut out = [0.0; 5];
        for i in 0..5 {
            out[i] = a[i] + (b[i] - a[i]) * s;
        }
        Self::from_array(out)
    }
}

/// How per-wheel noise reaches the chassis pose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Independent draw per wheel: heights enter the contact-plane fit, planar
    /// translation and yaw are averaged over the four wheels.
    PerWheel,
    /// One draw applied to the whole chassis transform.
    Chassis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub dt: f64,
    pub executor_rate_hz: f64,
    pub wheelbase: f64,
    pub track: f64,
    /// Half-widths of the arm workspace box, chassis frame.
    pub arm_box: [f64; 3],
    pub chassis_lag: f64,
    pub arm_lag: f64,
    /// Nominal tool point in the chassis frame.
    pub tool_offset: [f64; 3],
    pub v_max: f64,
    pub omega_max: f64,
    pub arm_vel_max: f64,
    pub noise_amplitude: f64,
    pub noise_mode: NoiseMode,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            dt: 0.001,
            executor_rate_hz: 100.0,
            wheelbase: 1.2,
            track: 0.8,
            arm_box: [0.3, 0.3, 0.15],
            chassis_lag: 0.05,
            arm_lag: 0.01,
            tool_offset: [0.0, 0.0, 0.1],
            v_max: 1.0,
            omega_max: 1.0,
            arm_vel_max: 0.2,
            noise_amplitude: 0.005,
            noise_mode: NoiseMode::PerWheel,
        }
    }
}

impl PlantConfig {
    pub fn tool(&self) -> Vector3<f64> {
        Vector3::from(self.tool_offset)
    }

    pub fn arm_box(&self) -> Vector3<f64> {
        Vector3::from(self.arm_box)
    }

    /// Plant steps per executor tick.
    pub fn steps_per_tick(&self) -> usize {
        (1.0 / (self.executor_rate_hz * self.dt)).round() as usize
    }

    /// Checks that `period` is an integer multiple of the plant step.
    pub fn divides(&self, period: f64) -> bool {
        let n = period / self.dt;
        (n - n.round()).abs() < 1e-9 && n.round() >= 1.0
    }
}

/// Per-step ground truth emitted by the plant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruth {
    pub state: RobotState,
    pub ee_world: Pose,
    /// End-effector pose the same step would have produced without wheel noise.
    pub ee_nominal: Pose,
    /// Net wheel-noise effect at the end-effector, `ee_world - ee_nominal`.
    pub injected_disturbance: DisturbanceVec,
    /// RMS residual of the four contact heights about the fitted plane.
    pub plane_residual: f64,
    pub saturated: bool,
    /// Raw per-wheel perturbations drawn this step.
    pub wheel_draws: [Pose; 4],
}

/// `compose(base, tool_nominal + arm_offset)`.
pub fn end_effector_pose(state: &RobotState, tool: &Vector3<f64>) -> Pose {
    compose(&state.base, &Pose::new(tool + state.arm_offset, UnitQuaternion::identity()))
}

/// End-effector pose predicted by the flat kinematic model: planar chassis pose,
/// tool riding the terrain height beneath it, yaw-only orientation.
pub fn kinematic_ee(odom: &Planar, arm_offset: &Vector3<f64>, tool: &Vector3<f64>, field: &TerrainField) -> Pose {
    let r = UnitQuaternion::from_euler_angles(0.0, 0.0, odom.yaw);
    let local = tool + arm_offset;
    let xy = r * Vector3::new(local.x, local.y, 0.0);
    let x = odom.x + xy.x;
    let y = odom.y + xy.y;
    let z = field.height(x, y) + local.z;
    Pose::new(Vector3::new(x, y, z), r)
}

/// End-effector displacement not explained by the flat kinematic model,
/// expressed in the chassis heading frame.
pub fn ee_disturbance(ee: &Pose, state: &RobotState, tool: &Vector3<f64>, field: &TerrainField) -> DisturbanceVec {
    let kin = kinematic_ee(&state.odom, &state.arm_offset, tool, field);
    let e = pose_error(ee, &kin);
    DisturbanceVec::new(kin.rotation.inverse() * e.dp, e.dr)
}

fn lag_gain(dt: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        1.0
    } else {
        1.0 - (-dt / tau).exp()
    }
}

/// For a first-order lag held at a constant input over `dt`: the fraction of
/// the initial gap left on average over the interval and at its end.
pub fn lag_keep(dt: f64, tau: f64) -> (f64, f64) {
    if tau <= 0.0 {
        (0.0, 0.0)
    } else {
        let end = (-dt / tau).exp();
        (tau * (1.0 - end) / dt, end)
    }
}

fn clamp_sym(v: f64, lim: f64, flag: &mut bool) -> f64 {
    if v > lim {
        *flag = true;
        lim
    } else if v < -lim {
        *flag = true;
        -lim
    } else {
        v
    }
}

/// Exact integration of a unicycle with constant `v`, `omega` over `dt`.
pub fn integrate_unicycle(p: &Planar, v: f64, omega: f64, dt: f64) -> Planar {
    if omega.abs() < 1e-12 {
        Planar {
            x: p.x + v * dt * p.yaw.cos(),
            y: p.y + v * dt * p.yaw.sin(),
            yaw: p.yaw,
        }
    } else {
        let yaw = p.yaw + omega * dt;
        Planar {
            x: p.x + v / omega * (yaw.sin() - p.yaw.sin()),
            y: p.y - v / omega * (yaw.cos() - p.yaw.cos()),
            yaw,
        }
    }
}

/// Chassis orientation from heading and the plane gradients along the body
/// x (forward) and y (left) axes.
fn plane_orientation(yaw: f64, g_fwd: f64, g_left: f64) -> UnitQuaternion<f64> {
    let h = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let n = Vector3::new(-yaw.sin(), yaw.cos(), 0.0);
    let x = (h + Vector3::z() * g_fwd).normalize();
    let y0 = (n + Vector3::z() * g_left).normalize();
    let z = x.cross(&y0).normalize();
    let y = z.cross(&x);
    let m = Matrix3::from_columns(&[x, y, z]);
    UnitQuaternion::from_matrix(&m)
}

struct ContactPlane {
    z0: f64,
    g_fwd: f64,
    g_left: f64,
    residual: f64,
}

/// Least-squares plane through the four contacts at `(±L/2, ±W/2)`. With this
/// symmetric layout the normal equations are diagonal.
fn fit_plane(local: &[(f64, f64); 4], h: &[f64; 4]) -> ContactPlane {
    let mut z0 = 0.0;
    let (mut su, mut suu, mut sw, mut sww) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..4 {
        z0 += h[i] / 4.0;
        su += local[i].0 * h[i];
        suu += local[i].0 * local[i].0;
        sw += local[i].1 * h[i];
        sww += local[i].1 * local[i].1;
    }
    let g_fwd = su / suu;
    let g_left = sw / sww;
    let mut r2 = 0.0;
    for i in 0..4 {
        let r = h[i] - (z0 + g_fwd * local[i].0 + g_left * local[i].1);
        r2 += r * r;
    }
    ContactPlane {
        z0,
        g_fwd,
        g_left,
        residual: (r2 / 4.0).sqrt(),
    }
}

/// Extra inputs that are not commands: a persistent vertical chassis offset
/// (step-disturbance events).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlantEvents {
    pub z_offset: f64,
}

/// Advances the plant by one `cfg.dt` step.
pub fn step(
    state: &RobotState,
    cmd: &ControlInput,
    field: &TerrainField,
    noise: &mut Stream,
    cfg: &PlantConfig,
    events: &PlantEvents,
) -> GroundTruth {
    let dt = cfg.dt;
    let mut saturated = false;
    let v_cmd = clamp_sym(cmd.v, cfg.v_max, &mut saturated);
    let w_cmd = clamp_sym(cmd.omega, cfg.omega_max, &mut saturated);
    let mut a_cmd = Vector3::zeros();
    for i in 0..3 {
        a_cmd[i] = clamp_sym(cmd.arm_vel[i], cfg.arm_vel_max, &mut saturated);
    }

    let kc = lag_gain(dt, cfg.chassis_lag);
    let ka = lag_gain(dt, cfg.arm_lag);
    let base_vel = BaseVel {
        v: state.base_vel.v + kc * (v_cmd - state.base_vel.v),
        omega: state.base_vel.omega + kc * (w_cmd - state.base_vel.omega),
    };
    let mut arm_vel = state.arm_vel + (a_cmd - state.arm_vel) * ka;

    let odom = integrate_unicycle(&state.odom, base_vel.v, base_vel.omega, dt);

    let bx = cfg.arm_box();
    let mut arm_offset = state.arm_offset + arm_vel * dt;
    for i in 0..3 {
        if arm_offset[i].abs() > bx[i] {
            arm_offset[i] = arm_offset[i].clamp(-bx[i], bx[i]);
            arm_vel[i] = 0.0;
            saturated = true;
        }
    }

    let hl = cfg.wheelbase / 2.0;
    let hw = cfg.track / 2.0;
    let local = [(hl, hw), (hl, -hw), (-hl, hw), (-hl, -hw)];
    let (s, c) = odom.yaw.sin_cos();
    let mut h_nom = [0.0; 4];
    for (i, (u, w)) in local.iter().enumerate() {
        let x = odom.x + c * u - s * w;
        let y = odom.y + s * u + c * w;
        h_nom[i] = field.height(x, y) + events.z_offset;
    }

    // wheel perturbations; drawn unconditionally so the stream length does not
    // depend on the mode
    let draws: [Pose; 4] = std::array::from_fn(|_| wheel_noise(noise, cfg.noise_amplitude, cfg.wheelbase));

    let nominal_plane = fit_plane(&local, &h_nom);
    let nominal_rot = plane_orientation(odom.yaw, nominal_plane.g_fwd, nominal_plane.g_left);
    let nominal_base = Pose::new(Vector3::new(odom.x, odom.y, nominal_plane.z0), nominal_rot);

    let (base, residual) = match cfg.noise_mode {
        NoiseMode::PerWheel => {
            let mut h = h_nom;
            let mut mean_t = Vector3::zeros();
            let mut mean_yaw = 0.0;
            for i in 0..4 {
                h[i] += draws[i].position.z;
                mean_t += draws[i].position / 4.0;
                mean_yaw += draws[i].rotation.scaled_axis().z / 4.0;
            }
            let plane = fit_plane(&local, &h);
            let rot = plane_orientation(odom.yaw + mean_yaw, plane.g_fwd, plane.g_left);
            let planar = UnitQuaternion::from_euler_angles(0.0, 0.0, odom.yaw) * Vector3::new(mean_t.x, mean_t.y, 0.0);
            (
                Pose::new(Vector3::new(odom.x + planar.x, odom.y + planar.y, plane.z0), rot),
                plane.residual,
            )
        }
        NoiseMode::Chassis => (compose(&nominal_base, &draws[0]), nominal_plane.residual),
    };

    let next = RobotState {
        base,
        odom,
        base_vel,
        arm_offset,
        arm_vel,
        time: state.time + dt,
    };
    let tool = cfg.tool();
    let ee_world = end_effector_pose(&next, &tool);
    let ee_nominal = end_effector_pose(&RobotState { base: nominal_base, ..next }, &tool);
    GroundTruth {
        state: next,
        ee_world,
        ee_nominal,
        injected_disturbance: pose_error(&ee_world, &ee_nominal),
        plane_residual: residual,
        saturated,
        wheel_draws: draws,
    }
}

/// Places the chassis at rest on the terrain with zero noise.
pub fn settle(odom: Planar, field: &TerrainField, cfg: &PlantConfig) -> GroundTruth {
    let quiet = PlantConfig {
        noise_amplitude: 0.0,
        dt: 0.0,
        ..cfg.clone()
    };
    let mut rng = crate::rng::stream(0, 0);
    let mut gt = step(&RobotState::at_rest(odom), &ControlInput::zero(), field, &mut rng, &quiet, &PlantEvents::default());
    gt.state.time = 0.0;
    gt
}

/// Plant bundled with its terrain, noise stream and event offset.
pub struct Plant {
    pub cfg: PlantConfig,
    pub field: TerrainField,
    noise: Stream,
    pub events: PlantEvents,
    pub last: GroundTruth,
    pub steps: u64,
    pub saturation_steps: u64,
}

impl Plant {
    pub fn new(cfg: PlantConfig, field: TerrainField, noise: Stream, start: Planar) -> Self {
        let last = settle(start, &field, &cfg);
        Self {
            cfg,
            field,
            noise,
            events: PlantEvents::default(),
            last,
            steps: 0,
            saturation_steps: 0,
        }
    }

    pub fn state(&self) -> &RobotState {
        &self.last.state
    }

    pub fn step(&mut self, cmd: &ControlInput) -> &GroundTruth {
        let gt = step(&self.last.state, cmd, &self.field, &mut self.noise, &self.cfg, &self.events);
        // keep logical time exact rather than accumulating rounding
        self.steps += 1;
        let mut gt = gt;
        gt.state.time = self.steps as f64 * self.cfg.dt;
        if gt.saturated {
            self.saturation_steps += 1;
        }
        self.last = gt;
        &self.last
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Zoh,
    Linear,
}

/// Command published by the 10 Hz layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpcCommand {
    pub issued_at: f64,
    pub u: ControlInput,
    /// Feedforward chassis speed of the reference at issue time.
    pub v_ff: f64,
    /// Measured arm offset at issue time; the intended offset starts here.
    pub arm_start: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    pub interpolation: Interpolation,
    pub trim_gain: f64,
    /// Commands older than this many MPC periods stop the chassis.
    pub stale_periods: f64,
    /// Chassis/arm split frequency; 0 passes MPC commands through unsplit.
    pub split_hz: f64,
    pub tick_period: f64,
    pub mpc_period: f64,
    pub arm_box: [f64; 3],
    /// Chassis rate lag the arm reproduces for the share it takes over.
    pub chassis_lag: f64,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            interpolation: Interpolation::Zoh,
            trim_gain: 20.0,
            stale_periods: 3.0,
            split_hz: 1.0,
            tick_period: 0.01,
            mpc_period: 0.1,
            arm_box: [0.3, 0.3, 0.15],
            chassis_lag: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExecutorOutput {
    pub cmd: ControlInput,
    pub stale: bool,
    /// Forward correction rate given to the chassis and kept on the arm.
    pub chassis_share: f64,
    pub arm_share: f64,
}

/// 100 Hz lower layer: holds or interpolates the latest MPC command, splits
/// the forward correction between chassis and arm, and trims the arm toward
/// the offset it intends to hold.
#[derive(Clone, Debug)]
pub struct Executor {
    pub cfg: ExecutorConfig,
    latest: Option<MpcCommand>,
    previous: Option<MpcCommand>,
    splitter: Option<FrequencySplitter>,
    pub allocator: ArmAllocator,
    arm_intent: Vector3<f64>,
    /// Lagged chassis correction handed to the arm.
    handover: f64,
    pub stale_trips: u64,
}

impl Executor {
    pub fn new(cfg: ExecutorConfig) -> Self {
        let splitter = (cfg.split_hz > 0.0).then(|| FrequencySplitter::new(cfg.split_hz, cfg.tick_period));
        Self {
            allocator: ArmAllocator::new(Vector3::from(cfg.arm_box)),
            cfg,
            latest: None,
            previous: None,
            splitter,
            arm_intent: Vector3::zeros(),
            handover: 0.0,
            stale_trips: 0,
        }
    }

    pub fn publish(&mut self, cmd: MpcCommand) {
        self.arm_intent = cmd.arm_start;
        self.previous = self.latest.replace(cmd);
    }

    pub fn latest(&self) -> Option<&MpcCommand> {
        self.latest.as_ref()
    }

    pub fn arm_intent(&self) -> Vector3<f64> {
        self.arm_intent
    }

    /// Part of the commanded forward rate currently carried by the arm.
    pub fn handover(&self) -> f64 {
        self.handover
    }

    /// Produces the actuator command for time `t` given the measured arm offset.
    pub fn executor_tick(&mut self, t: f64, arm_meas: &Vector3<f64>) -> ExecutorOutput {
        let idle = ExecutorOutput {
            cmd: ControlInput::zero(),
            stale: false,
            chassis_share: 0.0,
            arm_share: 0.0,
        };
        let Some(latest) = self.latest else {
            return idle;
        };
        let age = t - latest.issued_at;
        if age > self.cfg.stale_periods * self.cfg.mpc_period + 1e-9 {
            self.stale_trips += 1;
            return ExecutorOutput { stale: true, ..idle };
        }
        let (u, v_ff) = match (self.cfg.interpolation, self.previous) {
            (Interpolation::Linear, Some(prev)) => {
                let s = (age / self.cfg.mpc_period).clamp(0.0, 1.0);
                (prev.u.lerp(&latest.u, s), prev.v_ff + (latest.v_ff - prev.v_ff) * s)
            }
            _ => (latest.u, latest.v_ff),
        };

        let dt = self.cfg.tick_period;
        let mut cmd = u;
        let (mut chassis_share, mut arm_share) = (u.v - v_ff, u.arm_vel[0]);
        if let Some(split) = &mut self.splitter {
            // forward correction rate; lateral and vertical stay on the arm
            let correction = u.v - v_ff;
            let total = u.arm_vel[0] + correction;
            let (c, a) = split.split(Vector3::new(total, 0.0, 0.0));
            chassis_share = c.x;
            arm_share = a.x;
            let reroute = self.allocator.take_reroute();
            cmd.v = v_ff + chassis_share + reroute.x / dt;
            // the controller expects its chassis correction to arrive through
            // the chassis lag, so the arm delivers its part of it the same way
            let handed = correction - chassis_share;
            let (mean_keep, end_keep) = lag_keep(dt, self.cfg.chassis_lag);
            let mean = handed + (self.handover - handed) * mean_keep;
            self.handover = handed + (self.handover - handed) * end_keep;
            cmd.arm_vel[0] = u.arm_vel[0] + mean;
        }

        let trim = (self.arm_intent - arm_meas) * self.cfg.trim_gain;
        let next = self.allocator.clamp_arm(self.arm_intent + cmd.arm() * dt);
        let nominal = (next - self.arm_intent) / dt;
        self.arm_intent = next;
        for i in 0..3 {
            cmd.arm_vel[i] = nominal[i] + trim[i];
        }
        ExecutorOutput {
            cmd,
            stale: false,
            chassis_share,
            arm_share,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::terrain::{build_scenario, TerrainSpec};
    use std::f64::consts::FRAC_PI_2;

    fn quiet() -> PlantConfig {
        PlantConfig {
            noise_amplitude: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn equilibrium_without_commands() {
        let mut p = Plant::new(quiet(), TerrainField::flat(), rng::stream(1, 1), Planar::default());
        let s0 = *p.state();
        for _ in 0..500 {
            p.step(&ControlInput::zero());
        }
        let s = p.state();
        assert_eq!(s.base, s0.base);
        assert_eq!(s.arm_offset, s0.arm_offset);
        assert_eq!(s.odom, s0.odom);
    }

    #[test]
    fn constant_velocity_advances_exactly() {
        let cfg = PlantConfig {
            chassis_lag: 0.0,
            ..quiet()
        };
        let mut p = Plant::new(cfg, TerrainField::flat(), rng::stream(1, 1), Planar::default());
        let cmd = ControlInput { v: 0.5, ..Default::default() };
        for _ in 0..2000 {
            p.step(&cmd);
        }
        assert!((p.state().odom.x - 1.0).abs() < 1e-9);
        assert!((p.state().base.position.x - 1.0).abs() < 1e-9);
        assert!((p.state().time - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unicycle_arc_matches_closed_form() {
        let p = integrate_unicycle(&Planar::default(), 1.0, 0.5, FRAC_PI_2 / 0.5);
        // quarter circle of radius 2
        assert!((p.x - 2.0).abs() < 1e-12);
        assert!((p.y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pitch_on_incline() {
        let field = build_scenario(&TerrainSpec::reference_slope()).unwrap();
        let gt = settle(Planar { x: 7.0, y: 0.0, yaw: 0.0 }, &field, &quiet());
        let (_, pitch, _) = gt.state.base.rpy();
        // nose-up is a negative rotation about +y
        assert!((pitch.abs().to_degrees() - 5.0).abs() < 0.05);
        assert!(pitch < 0.0);
        assert!(gt.plane_residual < 1e-12);
        assert!((gt.state.base.position.z - 2.0 * 5f64.to_radians().tan()).abs() < 1e-12);
    }

    #[test]
    fn ee_pose_cases() {
        let tool = Vector3::new(0.0, 0.0, 0.1);
        let mut s = RobotState::default();
        assert_eq!(end_effector_pose(&s, &tool).position, tool);

        s.base = Pose::from_xyz_rpy(Vector3::zeros(), 0.0, 0.0, FRAC_PI_2);
        s.arm_offset = Vector3::new(0.1, 0.0, 0.0);
        let p = end_effector_pose(&s, &Vector3::zeros()).position;
        assert!((p - Vector3::new(0.0, 0.1, 0.0)).norm() < 1e-15);

        // pitched chassis: tool 0.5 m forward rises by 0.5 sin(θ)
        let th = 5f64.to_radians();
        s.base = Pose::from_xyz_rpy(Vector3::zeros(), 0.0, -th, 0.0);
        s.arm_offset = Vector3::zeros();
        let p = end_effector_pose(&s, &Vector3::new(0.5, 0.0, 0.0)).position;
        assert!((p.z - 0.5 * th.sin()).abs() < 1e-12);
        assert!((p.x - 0.5 * th.cos()).abs() < 1e-12);
    }

    #[test]
    fn arm_stays_in_box() {
        let cfg = PlantConfig { arm_lag: 0.0, ..quiet() };
        let mut p = Plant::new(cfg, TerrainField::flat(), rng::stream(1, 1), Planar::default());
        let cmd = ControlInput { arm_vel: [0.0, 0.0, 0.2], ..Default::default() };
        for _ in 0..2000 {
            p.step(&cmd);
        }
        assert!((p.state().arm_offset.z - 0.15).abs() < 1e-12);
        assert!(p.saturation_steps > 0);
    }

    #[test]
    fn commands_clamped_and_flagged() {
        let mut r = rng::stream(1, 1);
        let s = RobotState::default();
        let gt = step(&s, &ControlInput { v: 5.0, ..Default::default() }, &TerrainField::flat(), &mut r, &PlantConfig { chassis_lag: 0.0, ..quiet() }, &PlantEvents::default());
        assert!(gt.saturated);
        assert!((gt.state.base_vel.v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn noise_moves_ee_but_not_nominal() {
        let cfg = PlantConfig::default();
        let mut p = Plant::new(cfg, TerrainField::flat(), rng::stream(5, rng::ids::WHEELS), Planar::default());
        let mut max = 0.0f64;
        for _ in 0..1000 {
            let gt = p.step(&ControlInput::zero());
            assert_eq!(gt.ee_nominal.position, Vector3::new(0.0, 0.0, 0.1));
            let d = gt.injected_disturbance.dp;
            max = max.max(d.amax());
            assert!(d.amax() < 0.0075);
        }
        assert!(max > 1e-4);
        // odometry is not perturbed, so noise never accumulates
        assert_eq!(p.state().odom, Planar::default());
    }

    fn pass_through() -> ExecutorConfig {
        ExecutorConfig {
            split_hz: 0.0,
            ..Default::default()
        }
    }

    fn mpc_cmd(t: f64, u: ControlInput) -> MpcCommand {
        MpcCommand { issued_at: t, u, v_ff: 0.0, arm_start: Vector3::zeros() }
    }

    #[test]
    fn executor_zoh_linear_and_watchdog() {
        let u1 = ControlInput::from_array([0.2, 0.0, 0.0, 0.01, 0.0]);
        let u2 = ControlInput::from_array([0.4, 0.1, 0.0, 0.03, 0.0]);
        let mut ex = Executor::new(pass_through());
        ex.publish(mpc_cmd(0.0, u1));
        let out = ex.executor_tick(0.0, &Vector3::zeros());
        assert_eq!(out.cmd, u1);

        let mut ex = Executor::new(ExecutorConfig { interpolation: Interpolation::Linear, ..pass_through() });
        ex.publish(mpc_cmd(0.0, u1));
        ex.publish(mpc_cmd(0.1, u2));
        let out = ex.executor_tick(0.15, &Vector3::zeros());
        let mid = [0.3, 0.05, 0.0, 0.02, 0.0];
        for (a, b) in out.cmd.to_array().iter().zip(mid) {
            assert!((a - b).abs() < 1e-12);
        }

        let out = ex.executor_tick(0.1 + 0.31, &Vector3::zeros());
        assert!(out.stale);
        assert_eq!(out.cmd.v, 0.0);
        assert_eq!(out.cmd.omega, 0.0);
        assert_eq!(ex.stale_trips, 1);
        assert!(!ex.executor_tick(0.1 + 0.3, &Vector3::zeros()).stale);
    }

    #[test]
    fn executor_trims_arm_toward_intent() {
        let mut ex = Executor::new(pass_through());
        let u = ControlInput::from_array([0.0, 0.0, 0.01, 0.0, 0.0]);
        ex.publish(MpcCommand { issued_at: 1.0, u, v_ff: 0.0, arm_start: Vector3::new(0.0, 0.0, 0.002) });
        for k in 0..5 {
            ex.executor_tick(1.0 + k as f64 * 0.01, &Vector3::zeros());
        }
        let out = ex.executor_tick(1.05, &Vector3::zeros());
        // intended offset after five ticks: x = 0.0005, z = 0.002
        assert!((out.cmd.arm_vel[0] - (0.01 + 20.0 * 0.0005)).abs() < 1e-12);
        assert!((out.cmd.arm_vel[2] - 20.0 * 0.002).abs() < 1e-12);
    }

    #[test]
    fn executor_splits_forward_correction() {
        let mut ex = Executor::new(ExecutorConfig::default());
        // MPC asks for a 0.05 m/s forward correction on the arm at cruise 0.3
        let u = ControlInput::from_array([0.3, 0.0, 0.05, 0.0, 0.0]);
        ex.publish(MpcCommand { issued_at: 0.0, u, v_ff: 0.3, arm_start: Vector3::zeros() });
        let first = ex.executor_tick(0.0, &Vector3::zeros());
        assert!((first.chassis_share + first.arm_share - 0.05).abs() < 1e-15);
        assert!(first.arm_share > first.chassis_share);
        let mut out = first;
        for k in 1..100 {
            let t = k as f64 * 0.01;
            ex.publish(MpcCommand { issued_at: t, u, v_ff: 0.3, arm_start: ex.arm_intent() });
            out = ex.executor_tick(t, &ex.arm_intent());
        }
        // a sustained correction migrates to the chassis
        assert!((out.cmd.v - 0.35).abs() < 0.001);
        assert!(out.cmd.arm_vel[0].abs() < 0.001);
    }

    #[test]
    fn arm_reproduces_chassis_lag_for_its_share() {
        let tau = 0.05;
        let cfg = ExecutorConfig { chassis_lag: tau, trim_gain: 0.0, ..Default::default() };
        let mut ex = Executor::new(cfg);
        let u = ControlInput::from_array([0.4, 0.0, 0.0, 0.0, 0.0]);
        ex.publish(MpcCommand { issued_at: 0.0, u, v_ff: 0.3, arm_start: Vector3::zeros() });
        let keep = (-0.001 / tau).exp();
        let (mut v_act, mut x) = (0.3, 0.0);
        for k in 0..50 {
            let t = k as f64 * 0.01;
            if k > 0 && k % 10 == 0 {
                ex.publish(MpcCommand { issued_at: t, u, v_ff: 0.3, arm_start: ex.arm_intent() });
            }
            let out = ex.executor_tick(t, &ex.arm_intent());
            for _ in 0..10 {
                v_act = out.cmd.v + (v_act - out.cmd.v) * keep;
                x += v_act * 0.001;
            }
            x += out.cmd.arm_vel[0] * 0.01;
        }
        // same travel as the whole command going through the chassis lag
        let mut v_ref = 0.3;
        let mut x_ref = 0.0;
        for _ in 0..500 {
            v_ref = 0.4 + (v_ref - 0.4) * keep;
            x_ref += v_ref * 0.001;
        }
        assert!(ex.handover().abs() > 0.0);
        assert!((x - x_ref).abs() < 1e-5, "{x} vs {x_ref}");
    }

    #[test]
    fn executor_keeps_intent_in_box() {
        let mut ex = Executor::new(pass_through());
        let u = ControlInput::from_array([0.0, 0.0, 0.0, 0.0, 0.2]);
        ex.publish(MpcCommand { issued_at: 0.0, u, v_ff: 0.0, arm_start: Vector3::new(0.0, 0.0, 0.149) });
        for k in 0..3 {
            ex.executor_tick(k as f64 * 0.01, &ex.arm_intent());
        }
        assert_eq!(ex.arm_intent().z, 0.15);
        assert!(ex.allocator.reroutes >= 2);
    }

    #[test]
    fn determinism_bit_identical() {
        let field = build_scenario(&crate::terrain::TerrainClass::Gravel.preset(3)).unwrap();
        let run = || {
            let mut p = Plant::new(PlantConfig::default(), field.clone(), rng::stream(77, rng::ids::WHEELS), Planar::default());
            let cmd = ControlInput::from_array([0.3, 0.05, 0.01, -0.01, 0.0]);
            for _ in 0..3000 {
                p.step(&cmd);
            }
            p.last
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rate_divisibility() {
        let cfg = PlantConfig::default();
        assert_eq!(cfg.steps_per_tick(), 10);
        assert!(cfg.divides(0.01));
        assert!(cfg.divides(0.1));
        assert!(cfg.divides(10.0));
        assert!(!cfg.divides(0.0105));
    }
}
