//! Multi-rate sensor suite and the fused feature vector fed to the predictor.
//!
//! No images are synthesized: the depth channel emits geometric descriptors of
//! the terrain ahead computed from the height field plus noise.

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::plant::end_effector_pose;
use crate::pose::{BaseVel, Pose, RobotState};
use crate::rng::Stream;
use crate::terrain::TerrainField;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub imu_hz: f64,
    pub encoder_hz: f64,
    pub vision_hz: f64,
    pub depth_hz: f64,
    pub imu_acc_sigma: f64,
    pub gyro_sigma: f64,
    pub vision_sigma: f64,
    pub depth_sigma: f64,
    pub orientation_sigma: f64,
    /// Distance ahead of the chassis center probed by the depth camera.
    pub lookahead: f64,
    /// Baseline of the two-point slope estimate.
    pub slope_baseline: f64,
    pub tool_offset: [f64; 3],
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            imu_hz: 100.0,
            encoder_hz: 1000.0,
            vision_hz: 30.0,
            depth_hz: 30.0,
            imu_acc_sigma: 0.02,
            gyro_sigma: 0.002,
            vision_sigma: 0.001,
            depth_sigma: 0.002,
            orientation_sigma: 0.0005,
            lookahead: 0.8,
            slope_baseline: 0.5,
            tool_offset: [0.0, 0.0, 0.1],
        }
    }
}

impl SensorConfig {
    pub fn noiseless() -> Self {
        Self {
            imu_acc_sigma: 0.0,
            gyro_sigma: 0.0,
            vision_sigma: 0.0,
            depth_sigma: 0.0,
            orientation_sigma: 0.0,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TerrainAhead {
    /// Height of the terrain ahead relative to the current chassis plane.
    pub height_var: f64,
    /// Forward and lateral terrain slope ahead.
    pub slope_est: [f64; 2],
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SensorFrame {
    pub t: f64,
    pub imu_acc: Vector3<f64>,
    pub imu_gyro: Vector3<f64>,
    /// Roll, pitch, yaw.
    pub base_orientation_est: Vector3<f64>,
    pub ee_pose_meas: Pose,
    pub terrain_ahead: TerrainAhead,
    pub joint_pos_meas: Vector3<f64>,
    /// Wheel-encoder odometry rates.
    pub base_vel_meas: BaseVel,
}

/// Optional blocks of the feature vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureOptions {
    pub ee_orientation: bool,
    pub velocity: bool,
}

/// Ordered feature names; fixed for a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub names: Vec<String>,
}

impl FeatureLayout {
    pub fn new(opts: FeatureOptions) -> Self {
        let mut names: Vec<&str> = vec![
            "imu_acc_x",
            "imu_acc_y",
            "imu_acc_z",
            "gyro_x",
            "gyro_y",
            "gyro_z",
            "base_roll",
            "base_pitch",
            "base_yaw",
            "height_var",
            "slope_fwd",
            "slope_lat",
            "ee_rel_x",
            "ee_rel_y",
            "ee_rel_z",
        ];
        if opts.ee_orientation {
            names.extend(["ee_rel_rx", "ee_rel_ry", "ee_rel_rz"]);
        }
        if opts.velocity {
            names.extend(["base_v", "base_omega"]);
        }
        Self {
            names: names.into_iter().map(String::from).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn options(&self) -> FeatureOptions {
        FeatureOptions {
            ee_orientation: self.names.iter().any(|n| n == "ee_rel_rx"),
            velocity: self.names.iter().any(|n| n == "base_v"),
        }
    }
}

impl Default for FeatureLayout {
    fn default() -> Self {
        Self::new(FeatureOptions::default())
    }
}

pub type FeatureVec = Vec<f64>;

/// Index of the last rate boundary at or before `t`.
fn tick_index(t: f64, hz: f64) -> i64 {
    (t * hz + 1e-9).floor() as i64
}

fn gauss(rng: &mut Stream, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let z: f64 = rng.sample(StandardNormal);
    z * sigma
}

fn gauss3(rng: &mut Stream, sigma: f64) -> Vector3<f64> {
    Vector3::new(gauss(rng, sigma), gauss(rng, sigma), gauss(rng, sigma))
}

/// Terrain-slaved chassis motion without wheel noise, used as the IMU truth.
#[derive(Clone, Copy, Debug)]
struct ImuSample {
    t: f64,
    p: Vector3<f64>,
    vel: Vector3<f64>,
    rpy: Vector3<f64>,
}

/// Stateful sampler holding the last value of every channel.
pub struct SensorSuite {
    pub cfg: SensorConfig,
    rng: Stream,
    frame: SensorFrame,
    last: [Option<i64>; 4],
    imu_prev: Option<ImuSample>,
}

const IMU: usize = 0;
const ENC: usize = 1;
const VIS: usize = 2;
const DEPTH: usize = 3;

impl SensorSuite {
    pub fn new(cfg: SensorConfig, rng: Stream) -> Self {
        Self {
            cfg,
            rng,
            frame: SensorFrame::default(),
            last: [None; 4],
            imu_prev: None,
        }
    }

    pub fn frame(&self) -> &SensorFrame {
        &self.frame
    }

    fn due(&mut self, ch: usize, t: f64, hz: f64) -> bool {
        let k = tick_index(t, hz);
        if self.last[ch].is_none_or(|l| k > l) {
            self.last[ch] = Some(k);
            true
        } else {
            false
        }
    }

    /// Refreshes every channel whose rate boundary has been crossed and
    /// returns the held frame.
    pub fn sample_sensors(&mut self, state: &RobotState, field: &TerrainField, t: f64) -> SensorFrame {
        self.frame.t = t;
        let cfg = self.cfg.clone();

        if self.due(ENC, t, cfg.encoder_hz) {
            self.frame.joint_pos_meas = state.arm_offset;
            self.frame.base_vel_meas = state.base_vel;
        }

        if self.due(IMU, t, cfg.imu_hz) {
            let g = field.query(state.odom.x, state.odom.y);
            let (s, c) = state.odom.yaw.sin_cos();
            let g_fwd = c * g.gradient.x + s * g.gradient.y;
            let g_lat = -s * g.gradient.x + c * g.gradient.y;
            let cur = ImuSample {
                t,
                p: Vector3::new(state.odom.x, state.odom.y, g.height),
                vel: Vector3::zeros(),
                rpy: Vector3::new(g_lat.atan(), -g_fwd.atan(), state.odom.yaw),
            };
            let (acc, gyro, cur) = match self.imu_prev {
                Some(prev) if t > prev.t => {
                    let dt = t - prev.t;
                    let vel = (cur.p - prev.p) / dt;
                    let acc_w = (vel - prev.vel) / dt;
                    let heading = UnitQuaternion::from_euler_angles(0.0, 0.0, state.odom.yaw);
                    let gyro = (cur.rpy - prev.rpy) / dt;
                    (heading.inverse() * acc_w, gyro, ImuSample { vel, ..cur })
                }
                _ => (Vector3::zeros(), Vector3::zeros(), cur),
            };
            self.imu_prev = Some(cur);
            self.frame.imu_acc = acc + gauss3(&mut self.rng, cfg.imu_acc_sigma);
            self.frame.imu_gyro = gyro + gauss3(&mut self.rng, cfg.gyro_sigma);
            let (r, p, y) = state.base.rpy();
            self.frame.base_orientation_est = Vector3::new(r, p, y) + gauss3(&mut self.rng, cfg.orientation_sigma);
        }

        if self.due(VIS, t, cfg.vision_hz) {
            let ee = end_effector_pose(state, &Vector3::from(cfg.tool_offset));
            let noise = gauss3(&mut self.rng, cfg.vision_sigma);
            self.frame.ee_pose_meas = Pose::new(ee.position + noise, ee.rotation);
        }

        if self.due(DEPTH, t, cfg.depth_hz) {
            self.frame.terrain_ahead = self.depth_descriptors(state, field);
        }

        self.frame
    }

    fn depth_descriptors(&mut self, state: &RobotState, field: &TerrainField) -> TerrainAhead {
        let cfg = &self.cfg;
        let (s, c) = state.odom.yaw.sin_cos();
        let la = cfg.lookahead;
        let ax = state.odom.x + c * la;
        let ay = state.odom.y + s * la;
        let sd = cfg.depth_sigma;
        let h_ahead = field.height(ax, ay) + gauss(&mut self.rng, sd);

        // forward slope of the chassis plane from its x axis
        let xb = state.base.rotation * Vector3::x();
        let plane_slope = xb.z / xb.x.hypot(xb.y).max(1e-12);
        let plane_h = state.base.position.z + plane_slope * la;

        let b = cfg.slope_baseline / 2.0;
        let hf = field.height(ax + c * b, ay + s * b) + gauss(&mut self.rng, sd);
        let hb = field.height(ax - c * b, ay - s * b) + gauss(&mut self.rng, sd);
        let hl = field.height(ax - s * b, ay + c * b) + gauss(&mut self.rng, sd);
        let hr = field.height(ax + s * b, ay - c * b) + gauss(&mut self.rng, sd);
        TerrainAhead {
            height_var: h_ahead - plane_h,
            slope_est: [(hf - hb) / (2.0 * b), (hl - hr) / (2.0 * b)],
        }
    }
}

/// Maps a frame into the fixed feature layout. Values stay in physical units.
pub fn extract_features(frame: &SensorFrame, layout: &FeatureLayout) -> FeatureVec {
    let opts = layout.options();
    let mut z = Vec::with_capacity(layout.dim());
    z.extend(frame.imu_acc.iter());
    z.extend(frame.imu_gyro.iter());
    z.extend(frame.base_orientation_est.iter());
    z.push(frame.terrain_ahead.height_var);
    z.extend(frame.terrain_ahead.slope_est);
    // ee relative to the chassis from the encoders; the nominal tool point is a
    // constant and is left out so an all-zero frame maps to zero
    z.extend(frame.joint_pos_meas.iter());
    if opts.ee_orientation {
        let base = UnitQuaternion::from_euler_angles(
            frame.base_orientation_est.x,
            frame.base_orientation_est.y,
            frame.base_orientation_est.z,
        );
        let rel = base.inverse() * frame.ee_pose_meas.rotation;
        z.extend(rel.scaled_axis().iter());
    }
    if opts.velocity {
        z.push(frame.base_vel_meas.v);
        z.push(frame.base_vel_meas.omega);
    }
    debug_assert_eq!(z.len(), layout.dim());
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{ControlInput, Plant, PlantConfig};
    use crate::pose::Planar;
    use crate::rng;
    use crate::terrain::{build_scenario, TerrainSpec};

    #[test]
    fn layout_dimensions() {
        assert_eq!(FeatureLayout::default().dim(), 15);
        let d = |o, v| FeatureLayout::new(FeatureOptions { ee_orientation: o, velocity: v }).dim();
        assert_eq!(d(true, false), 18);
        assert_eq!(d(false, true), 17);
        assert_eq!(d(true, true), 20);
        for o in [false, true] {
            for v in [false, true] {
                assert!((12..=20).contains(&d(o, v)));
            }
        }
    }

    #[test]
    fn zero_frame_gives_zero_features() {
        for o in [false, true] {
            for v in [false, true] {
                let layout = FeatureLayout::new(FeatureOptions { ee_orientation: o, velocity: v });
                let z = extract_features(&SensorFrame::default(), &layout);
                assert_eq!(z.len(), layout.dim());
                assert!(z.iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn rest_on_flat_without_noise() {
        let mut s = SensorSuite::new(SensorConfig::noiseless(), rng::stream(1, rng::ids::SENSORS));
        let state = RobotState::default();
        let field = TerrainField::flat();
        for i in 0..50 {
            let f = s.sample_sensors(&state, &field, i as f64 * 0.001 * 7.0);
            assert_eq!(f.imu_acc, Vector3::zeros());
            assert_eq!(f.imu_gyro, Vector3::zeros());
        }
    }

    #[test]
    fn vision_holds_between_updates() {
        let mut s = SensorSuite::new(SensorConfig::default(), rng::stream(1, rng::ids::SENSORS));
        let state = RobotState::default();
        let field = TerrainField::flat();
        let a = s.sample_sensors(&state, &field, 0.0);
        let b = s.sample_sensors(&state, &field, 0.01);
        assert_eq!(a.ee_pose_meas, b.ee_pose_meas);
        assert_eq!(a.terrain_ahead, b.terrain_ahead);
        // IMU refreshed at 0.01 s
        assert_ne!(a.imu_acc, b.imu_acc);
    }

    #[test]
    fn vision_noise_sigma() {
        let mut s = SensorSuite::new(SensorConfig::default(), rng::stream(9, rng::ids::SENSORS));
        let state = RobotState::default();
        let field = TerrainField::flat();
        let n = 10_000;
        let mut xs = Vec::with_capacity(n);
        for i in 0..n {
            let f = s.sample_sensors(&state, &field, i as f64 / 30.0);
            xs.push(f.ee_pose_meas.position.x);
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sigma = var.sqrt();
        assert!((sigma - 0.001).abs() <= 0.15 * 0.001, "sigma {sigma}");
    }

    #[test]
    fn rate_fidelity_over_one_second() {
        let mut s = SensorSuite::new(SensorConfig::default(), rng::stream(2, rng::ids::SENSORS));
        let field = build_scenario(&TerrainSpec::reference_slope()).unwrap();
        let mut plant = Plant::new(PlantConfig::default(), field.clone(), rng::stream(2, rng::ids::WHEELS), Planar::default());
        let cmd = ControlInput { v: 0.3, ..Default::default() };
        let mut prev = s.sample_sensors(plant.state(), &field, 0.0);
        let (mut vis, mut imu) = (1, 1);
        for k in 1..=1000 {
            let st = *plant.step(&cmd);
            let f = s.sample_sensors(&st.state, &field, k as f64 * 0.001);
            if f.ee_pose_meas != prev.ee_pose_meas {
                vis += 1;
            }
            if f.imu_acc != prev.imu_acc {
                imu += 1;
            }
            prev = f;
        }
        assert!(vis <= 31, "vision changed {vis} times");
        assert!(imu <= 101, "imu changed {imu} times");
        assert!(vis >= 30 && imu >= 100);
    }

    #[test]
    fn zero_noise_vision_is_exact() {
        let mut s = SensorSuite::new(SensorConfig::noiseless(), rng::stream(3, rng::ids::SENSORS));
        let field = build_scenario(&TerrainSpec::reference_slope()).unwrap();
        let cfg = PlantConfig::default();
        let mut plant = Plant::new(cfg.clone(), field.clone(), rng::stream(3, rng::ids::WHEELS), Planar { x: 4.5, y: 0.0, yaw: 0.0 });
        let cmd = ControlInput { v: 0.4, omega: 0.05, arm_vel: [0.01, 0.0, -0.01] };
        for k in 1..=3000 {
            let gt = *plant.step(&cmd);
            let t = k as f64 * 0.001;
            let f = s.sample_sensors(&gt.state, &field, t);
            if tick_index(t, 30.0) != tick_index(t - 0.001, 30.0) {
                assert_eq!(f.ee_pose_meas, gt.ee_world);
            }
        }
    }

    #[test]
    fn features_deterministic() {
        let run = || {
            let mut s = SensorSuite::new(SensorConfig::default(), rng::stream(4, rng::ids::SENSORS));
            let field = build_scenario(&TerrainSpec::reference_slope()).unwrap();
            let mut st = RobotState::at_rest(Planar { x: 4.6, y: 0.0, yaw: 0.0 });
            st.base_vel.v = 0.3;
            let layout = FeatureLayout::new(FeatureOptions { ee_orientation: true, velocity: true });
            let f = s.sample_sensors(&st, &field, 0.0);
            extract_features(&f, &layout)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn depth_sees_incline_ahead() {
        let mut s = SensorSuite::new(SensorConfig::noiseless(), rng::stream(4, rng::ids::SENSORS));
        let field = build_scenario(&TerrainSpec::reference_slope()).unwrap();
        let st = RobotState::at_rest(Planar { x: 4.5, y: 0.0, yaw: 0.0 });
        let f = s.sample_sensors(&st, &field, 0.0);
        let t = 5f64.to_radians().tan();
        assert!((f.terrain_ahead.height_var - 0.3 * t).abs() < 1e-12);
        assert!((f.terrain_ahead.slope_est[0] - t).abs() < 1e-12);
        assert_eq!(f.terrain_ahead.slope_est[1], 0.0);
    }
}
