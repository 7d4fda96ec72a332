//! Scenario runner: wires planner, sensors, predictor, MPC, executor and
//! plant into one multi-rate loop, and drives the ablation, the terrain
//! battery and training-data generation on top of it.

use std::collections::VecDeque;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::UnitQuaternion;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{PredictorSource, ScenarioConfig};
use crate::error::{Error, Result};
use crate::mpc::{build_problem, solve};
use crate::planner::{plan_velocity, segment_path, PathPlan, VelocityPlan};
use crate::plant::{ee_disturbance, kinematic_ee, ControlInput, Executor, MpcCommand, Plant};
use crate::pose::{pose_error, DisturbanceVec, Planar, Pose};
use crate::predictor::{select_features, train, PredictorNet, Trajectory, TrajectoryDataset};
use crate::report::{error_stats, versions, write_errors_csv, Counters, ErrorRow, RunReport, TimingStats};
use crate::rng::{ids, stream};
use crate::sensors::{extract_features, FeatureLayout, SensorSuite};
use crate::terrain::{build_scenario, TerrainClass, TerrainKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpcRow {
    pub t: f64,
    pub e: [f64; 6],
    pub d_hat: [f64; 6],
    pub u: [f64; 5],
    pub cost: f64,
    pub active_constraints: usize,
    pub iterations: usize,
    pub fallback: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthRow {
    pub t: f64,
    pub base: [f64; 6],
    pub arm_offset: [f64; 3],
    pub ee: [f64; 6],
    pub injected: [f64; 6],
}

/// Samples captured for training: features and the noise-free disturbance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Capture {
    pub t: Vec<f64>,
    pub features: Vec<Vec<f64>>,
    pub disturbance: Vec<[f64; 6]>,
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub errors: Vec<ErrorRow>,
    pub mpc: Vec<MpcRow>,
    pub truth: Vec<TruthRow>,
    pub solve_times: Vec<f64>,
    pub predict_times: Vec<f64>,
    pub counters: Counters,
    pub noise_checksum: String,
    pub capture: Option<Capture>,
    pub plan: PathPlan,
}

fn xyz_rpy(p: &Pose) -> [f64; 6] {
    let (r, pi, y) = p.rpy();
    [p.position.x, p.position.y, p.position.z, r, pi, y]
}

fn plan_for(cfg: &ScenarioConfig, field: &crate::terrain::TerrainField) -> Result<(PathPlan, VelocityPlan)> {
    let plan = segment_path(&cfg.waypoint_poses(), cfg.chord_tol, field)?;
    let vplan = plan_velocity(&plan, &cfg.limits);
    Ok((plan, vplan))
}

fn periods(cfg: &ScenarioConfig, period: f64) -> usize {
    ((period / cfg.plant.dt).round() as usize).max(1)
}

/// Runs the closed loop for `cfg.duration`. With `capture_hz` set, features
/// and the noise-free disturbance are sampled at that rate for training.
pub fn simulate(cfg: &ScenarioConfig, net: &PredictorNet, capture_hz: Option<f64>) -> Result<SimOutput> {
    let field = build_scenario(&cfg.terrain)?;
    let layout = FeatureLayout::new(cfg.features);
    if net.layout != layout.names {
        return Err(Error::config(
            "predictor.source",
            format!("predictor layout {:?} does not match sensor layout {:?}", net.layout, layout.names),
        ));
    }
    let (mut plan, mut vplan) = plan_for(cfg, &field)?;
    let start_ref = vplan.sample(&plan, 0.0);
    let start = Planar {
        x: cfg.waypoints[0][0],
        y: cfg.waypoints[0][1],
        yaw: start_ref.yaw,
    };
    let tool = cfg.tool();
    let mut plant = Plant::new(cfg.plant.clone(), field.clone(), stream(cfg.seeds.noise, ids::WHEELS), start);
    let mut sensors = SensorSuite::new(cfg.sensors.clone(), stream(cfg.seeds.sensors, ids::SENSORS));
    let mut executor = Executor::new(cfg.executor.clone());

    let dt = cfg.plant.dt;
    let n_steps = (cfg.duration / dt).round() as usize;
    let per_tick = cfg.plant.steps_per_tick();
    let per_mpc = periods(cfg, cfg.mpc.dt);
    let per_replan = periods(cfg, cfg.replan_period);
    let per_capture = capture_hz.map(|hz| periods(cfg, 1.0 / hz));

    let mut out = SimOutput {
        errors: Vec::with_capacity(n_steps / per_tick + 1),
        mpc: Vec::with_capacity(n_steps / per_mpc + 1),
        truth: Vec::with_capacity(n_steps / per_tick + 1),
        solve_times: Vec::new(),
        predict_times: Vec::new(),
        counters: Counters::default(),
        noise_checksum: String::new(),
        capture: capture_hz.map(|_| Capture::default()),
        plan: plan.clone(),
    };
    let mut hasher = Sha256::new();
    let mut window: VecDeque<DisturbanceVec> = VecDeque::with_capacity(cfg.estimate_window);
    let mut u_prev = ControlInput::zero();
    let mut cmd = ControlInput::zero();
    let wall = Instant::now();

    sensors.sample_sensors(plant.state(), &field, 0.0);
    for i in 0..n_steps {
        let t = i as f64 * dt;
        let gt = plant.last;
        if let Some(ev) = cfg.step_event {
            if t >= ev.time {
                plant.events.z_offset = ev.offset;
            }
        }

        if let (Some(cap), Some(every)) = (out.capture.as_mut(), per_capture) {
            if i % every == 0 {
                cap.t.push(t);
                cap.features.push(extract_features(sensors.frame(), &layout));
                cap.disturbance.push(ee_disturbance(&gt.ee_nominal, &gt.state, &tool, &field).to_array());
            }
        }

        if window.len() == cfg.estimate_window {
            window.pop_front();
        }
        window.push_back(ee_disturbance(&gt.ee_world, &gt.state, &tool, &field));

        if i % per_tick == 0 {
            out.counters.executor_ticks += 1;

            if i % per_replan == 0 {
                // waypoints are fixed, so replanning reproduces the same schedule
                (plan, vplan) = plan_for(cfg, &field)?;
                out.counters.replans += 1;
            }
            let r_now = vplan.sample(&plan, t);

            if i % per_mpc == 0 {
                if cfg.realtime {
                    let due = Duration::from_secs_f64(t);
                    if let Some(wait) = due.checked_sub(wall.elapsed()) {
                        std::thread::sleep(wait);
                    }
                }
                let features = extract_features(sensors.frame(), &layout);
                let tp = Instant::now();
                let d_hat = net.forward(&features)?;
                out.predict_times.push(tp.elapsed().as_secs_f64());

                let mut d_est = window.iter().fold(DisturbanceVec::zero(), |a, d| a + *d).scale(1.0 / window.len() as f64);
                if cfg.lag_compensation {
                    // the window mean lags the newest sample by half its span
                    let lag = 0.5 * (window.len() - 1) as f64 * dt;
                    d_est = d_est + d_hat.scale(lag / cfg.mpc.preview_horizon);
                }
                let kin = kinematic_ee(&gt.state.odom, &gt.state.arm_offset, &tool, &field);
                let ee0 = Pose::new(
                    kin.position + kin.rotation * d_est.dp,
                    kin.rotation * UnitQuaternion::from_scaled_axis(d_est.dr),
                );
                let reference: Vec<Pose> = (1..=cfg.mpc.horizon)
                    .map(|k| vplan.sample(&plan, t + k as f64 * cfg.mpc.dt).pose)
                    .collect();
                // the chassis rate the controller commanded, including the part
                // the arm is standing in for
                let mut x0 = gt.state;
                x0.base_vel.v += executor.handover();
                let problem = build_problem(&x0, ee0, r_now.pose, reference, &d_hat, u_prev, tool, &cfg.mpc)?;
                let sol = solve(&problem);
                out.solve_times.push(sol.solve_time);
                out.counters.mpc_ticks += 1;
                out.counters.mpc_fallbacks += sol.fallback as u64;
                u_prev = sol.u_seq[0];
                executor.publish(MpcCommand {
                    issued_at: t,
                    u: u_prev,
                    v_ff: r_now.speed,
                    arm_start: gt.state.arm_offset,
                });
                out.mpc.push(MpcRow {
                    t,
                    e: pose_error(&r_now.pose, &ee0).to_array(),
                    d_hat: d_hat.to_array(),
                    u: u_prev.to_array(),
                    cost: sol.cost,
                    active_constraints: sol.active_constraints,
                    iterations: sol.iterations,
                    fallback: sol.fallback,
                });
            }

            cmd = executor.executor_tick(t, &gt.state.arm_offset).cmd;

            let e = pose_error(&r_now.pose, &gt.ee_world);
            out.errors.push(ErrorRow {
                t,
                ref_x: r_now.pose.position.x,
                ref_z: r_now.pose.position.z,
                e: [e.dp.x * 1e3, e.dp.y * 1e3, e.dp.z * 1e3, e.dr.x, e.dr.y, e.dr.z],
            });
            let a = gt.state.arm_offset;
            out.truth.push(TruthRow {
                t,
                base: xyz_rpy(&gt.state.base),
                arm_offset: [a.x, a.y, a.z],
                ee: xyz_rpy(&gt.ee_world),
                injected: gt.injected_disturbance.to_array(),
            });
        }

        let next = plant.step(&cmd);
        for d in &next.wheel_draws {
            for v in d.position.iter().chain(d.rotation.coords.iter()) {
                hasher.update(v.to_le_bytes());
            }
        }
        sensors.sample_sensors(plant.state(), &field, (i + 1) as f64 * dt);
    }

    out.counters.plant_steps = plant.steps;
    out.counters.saturation_steps = plant.saturation_steps;
    out.counters.reroutes = executor.allocator.reroutes;
    out.counters.stale_trips = executor.stale_trips;
    out.noise_checksum = hex::encode(hasher.finalize());
    Ok(out)
}

/// A finished run: report plus the series it was computed from.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub timing: TimingStats,
    pub sim: SimOutput,
}

fn slope_start(cfg: &ScenarioConfig) -> Option<f64> {
    matches!(cfg.terrain.kind, TerrainKind::Slope | TerrainKind::Mixed).then_some(cfg.terrain.slope_start_m)
}

pub fn build_report(cfg: &ScenarioConfig, config_text: &str, net: &PredictorNet, sim: &SimOutput) -> RunReport {
    let errors = error_stats(&sim.errors, cfg.step_event.map(|e| e.time), slope_start(cfg));
    let settling_protocol = match cfg.step_event {
        Some(ev) => format!(
            "vertical chassis offset of {} mm at t = {} s; settled once |e_z| < {} mm holds for {} s",
            ev.offset * 1e3,
            ev.time,
            crate::report::SETTLE_BAND_MM,
            crate::report::SETTLE_HOLD_S
        ),
        None => "none".to_string(),
    };
    RunReport {
        name: cfg.name.clone(),
        terrain_class: None,
        duration_s: cfg.duration,
        predictor: cfg.predictor.label(),
        seeds: cfg.seeds,
        mean_height_deviation_mm: errors.z_mm.mean,
        errors,
        settling_protocol,
        counters: sim.counters,
        noise_checksum: sim.noise_checksum.clone(),
        feature_layout: net.layout.clone(),
        feature_mask: net.mask.clone(),
        config_echo: config_text.to_string(),
        versions: versions(),
    }
}

/// Runs one scenario with an already resolved predictor.
pub fn run_with(cfg: &ScenarioConfig, config_text: &str, net: &PredictorNet) -> Result<RunOutput> {
    let sim = simulate(cfg, net, None)?;
    let report = build_report(cfg, config_text, net, &sim);
    let timing = TimingStats::of(&sim.solve_times, &sim.predict_times);
    Ok(RunOutput { report, timing, sim })
}

/// Resolves the predictor source and runs the scenario.
pub fn run_scenario(cfg: &ScenarioConfig, config_text: &str) -> Result<RunOutput> {
    let net = resolve_predictor(cfg)?.net;
    run_with(cfg, config_text, &net)
}

fn write_rows<const N: usize>(path: &Path, header: [&str; N], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn strs(vals: &[f64]) -> impl Iterator<Item = String> + '_ {
    vals.iter().map(f64::to_string)
}

/// Writes report.json, errors.csv, mpc.csv, groundtruth.csv, plan.csv and
/// the timing files into `dir`.
pub fn emit_report(run: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join("report.json");
    std::fs::write(&p, run.report.to_json()?).map_err(|e| Error::io(&p, e))?;
    write_errors_csv(&dir.join("errors.csv"), &run.sim.errors)?;
    write_rows(
        &dir.join("mpc.csv"),
        [
            "t", "e_x", "e_y", "e_z", "e_rx", "e_ry", "e_rz", "dhat_x", "dhat_y", "dhat_z", "dhat_rx", "dhat_ry", "dhat_rz",
            "v", "omega", "arm_vx", "arm_vy", "arm_vz", "cost", "active_constraints", "iterations", "fallback",
        ],
        run.sim.mpc.iter().map(|r| {
            let mut rec = vec![r.t.to_string()];
            rec.extend(strs(&r.e));
            rec.extend(strs(&r.d_hat));
            rec.extend(strs(&r.u));
            rec.push(r.cost.to_string());
            rec.push(r.active_constraints.to_string());
            rec.push(r.iterations.to_string());
            rec.push(r.fallback.to_string());
            rec
        }),
    )?;
    write_rows(
        &dir.join("groundtruth.csv"),
        [
            "t", "base_x", "base_y", "base_z", "base_roll", "base_pitch", "base_yaw", "arm_x", "arm_y", "arm_z", "ee_x",
            "ee_y", "ee_z", "ee_roll", "ee_pitch", "ee_yaw", "dist_x", "dist_y", "dist_z", "dist_rx", "dist_ry", "dist_rz",
        ],
        run.sim.truth.iter().map(|r| {
            let mut rec = vec![r.t.to_string()];
            rec.extend(strs(&r.base));
            rec.extend(strs(&r.arm_offset));
            rec.extend(strs(&r.ee));
            rec.extend(strs(&r.injected));
            rec
        }),
    )?;
    run.sim.plan.write_csv(&dir.join("plan.csv"))?;
    let p = dir.join("timing.json");
    std::fs::write(&p, serde_json::to_string_pretty(&run.timing)?).map_err(|e| Error::io(&p, e))?;
    write_rows(
        &dir.join("timing.csv"),
        ["t", "solve_s", "predict_s"],
        run.sim
            .mpc
            .iter()
            .zip(run.sim.solve_times.iter().zip(&run.sim.predict_times))
            .map(|(r, (s, p))| vec![r.t.to_string(), s.to_string(), p.to_string()]),
    )?;
    Ok(())
}

/// Summary of a `train-first` training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub samples: usize,
    pub trajectories: usize,
    pub mask: Vec<bool>,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
}

pub struct Resolved {
    pub net: PredictorNet,
    pub training: Option<TrainSummary>,
}

pub fn resolve_predictor(cfg: &ScenarioConfig) -> Result<Resolved> {
    let layout = FeatureLayout::new(cfg.features).names;
    match &cfg.predictor {
        PredictorSource::Zero => Ok(Resolved {
            net: PredictorNet::zero(layout),
            training: None,
        }),
        PredictorSource::Path(p) => {
            let net = PredictorNet::load(p)?;
            if net.layout != layout {
                return Err(Error::config("predictor.source", format!("{} was trained on a different feature layout", p.display())));
            }
            Ok(Resolved { net, training: None })
        }
        PredictorSource::TrainFirst => {
            let data = generate_dataset(cfg)?;
            train_on(cfg, &data)
        }
    }
}

/// Selects features with STLSQ and trains the network on `data`.
pub fn train_on(cfg: &ScenarioConfig, data: &TrajectoryDataset) -> Result<Resolved> {
    let mut mask = select_features(data, cfg.training.stlsq_threshold, cfg.training.ridge)?;
    if !mask.iter().any(|&m| m) {
        mask.iter_mut().for_each(|m| *m = true);
    }
    let res = train(data, &cfg.training.hyper, Some(&mask))?;
    let samples = data.trajectories.iter().map(Trajectory::len).sum();
    Ok(Resolved {
        training: Some(TrainSummary {
            samples,
            trajectories: data.trajectories.len(),
            mask,
            train_loss: res.train_loss,
            val_loss: res.val_loss,
            best_epoch: res.best_epoch,
        }),
        net: res.net,
    })
}

/// Configuration of traverse `i` used for training data: a terrain class
/// preset, a jittered cruise speed and per-traverse seeds.
pub fn traverse_config(cfg: &ScenarioConfig, i: usize, rng: &mut impl Rng) -> ScenarioConfig {
    let class = TerrainClass::ALL[i % TerrainClass::ALL.len()];
    let mut t = cfg.clone();
    t.name = format!("traverse-{i:03}-{}", class.name());
    t.terrain = class.preset(cfg.seeds.training.wrapping_mul(1000).wrapping_add(i as u64));
    t.plant.noise_amplitude = cfg.plant.noise_amplitude * class.noise_scale();
    t.terrain.slope_start_m = rng.random_range(3.0..6.0);
    let jitter = cfg.training.speed_jitter;
    t.limits.v_max = cfg.limits.v_max * (1.0 + rng.random_range(-jitter..=jitter));
    t.duration = cfg.training.duration;
    t.predictor = PredictorSource::Zero;
    t.step_event = None;
    t.seeds.noise = rng.random();
    t.seeds.sensors = rng.random();
    t.realtime = false;
    t
}

/// Drives reactive (zero-predictor) traverses over the terrain presets and
/// returns the trajectory dataset.
pub fn generate_dataset(cfg: &ScenarioConfig) -> Result<TrajectoryDataset> {
    let layout = FeatureLayout::new(cfg.features).names;
    let mut rng = stream(cfg.seeds.training, ids::DATAGEN);
    let configs: Vec<ScenarioConfig> = (0..cfg.training.trajectories).map(|i| traverse_config(cfg, i, &mut rng)).collect();
    let horizon = (cfg.mpc.preview_horizon * cfg.training.sample_hz).round() as usize;
    let zero = PredictorNet::zero(layout.clone());
    let trajs: Vec<Result<Trajectory>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let zero = &zero;
                s.spawn(move || -> Result<Trajectory> {
                    let sim = simulate(c, zero, Some(c.training.sample_hz))?;
                    let cap = sim.capture.expect("capture requested");
                    Ok(Trajectory::from_series(i, &cap.t, &cap.features, &cap.disturbance, horizon))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("traverse thread panicked")).collect()
    });
    let trajs = trajs.into_iter().collect::<Result<Vec<_>>>()?;
    TrajectoryDataset::new(layout, trajs, cfg.seeds.training)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub predictive: RunReport,
    pub reactive: RunReport,
    /// Reactive minus predictive mean ‖e‖; positive favours prediction.
    pub margin_mm: f64,
    pub predictive_not_worse: bool,
    pub same_noise: bool,
}

/// Paired runs that differ only in the predictor: `net` versus zero.
pub fn run_ablation(cfg: &ScenarioConfig, config_text: &str, net: &PredictorNet) -> Result<(AblationReport, [RunOutput; 2])> {
    let zero = PredictorNet::zero(net.layout.clone());
    let mut reactive_cfg = cfg.clone();
    reactive_cfg.predictor = PredictorSource::Zero;
    let (p, r) = std::thread::scope(|s| {
        let hp = s.spawn(|| run_with(cfg, config_text, net));
        let hr = s.spawn(|| run_with(&reactive_cfg, config_text, &zero));
        (hp.join().expect("run panicked"), hr.join().expect("run panicked"))
    });
    let (p, r) = (p?, r?);
    let margin_mm = r.report.errors.norm_mm.mean - p.report.errors.norm_mm.mean;
    let rep = AblationReport {
        predictive: p.report.clone(),
        reactive: r.report.clone(),
        margin_mm,
        predictive_not_worse: margin_mm >= 0.0,
        same_noise: p.report.noise_checksum == r.report.noise_checksum,
    };
    Ok((rep, [p, r]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    /// (class, mean height deviation in mm) in battery order.
    pub mean_height_deviation_mm: Vec<(String, f64)>,
    /// flat < slope ≤ grass ≤ mixed ≤ gravel.
    pub ordering_holds: bool,
    pub reports: Vec<RunReport>,
}

pub fn class_config(cfg: &ScenarioConfig, class: TerrainClass) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.name = format!("{}-{}", cfg.name, class.name());
    c.terrain = class.preset(cfg.seeds.terrain);
    c.plant.noise_amplitude = cfg.plant.noise_amplitude * class.noise_scale();
    c
}

pub fn ordering_holds(devs: &[f64]) -> bool {
    devs.len() == 5 && devs[0] < devs[1] && devs[1] <= devs[2] && devs[2] <= devs[3] && devs[3] <= devs[4]
}

/// Runs every terrain class preset with the same predictor and seeds.
pub fn run_terrain_battery(cfg: &ScenarioConfig, config_text: &str, net: &PredictorNet) -> Result<(BatteryReport, Vec<RunOutput>)> {
    let configs: Vec<(TerrainClass, ScenarioConfig)> = TerrainClass::ALL.iter().map(|&c| (c, class_config(cfg, c))).collect();
    let runs: Vec<Result<RunOutput>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|(class, c)| {
                s.spawn(move || {
                    let mut run = run_with(c, config_text, net)?;
                    run.report.terrain_class = Some(class.name().to_string());
                    Ok(run)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run panicked")).collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let devs: Vec<(String, f64)> = runs
        .iter()
        .map(|r| (r.report.terrain_class.clone().unwrap_or_default(), r.report.mean_height_deviation_mm))
        .collect();
    let values: Vec<f64> = devs.iter().map(|d| d.1).collect();
    let rep = BatteryReport {
        ordering_holds: ordering_holds(&values),
        mean_height_deviation_mm: devs,
        reports: runs.iter().map(|r| r.report.clone()).collect(),
    };
    Ok((rep, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_text, REFERENCE_CONFIG};

    fn short(text_extra: &str) -> (ScenarioConfig, String) {
        let text = format!(
            "{}{text_extra}",
            REFERENCE_CONFIG.replace("duration = 30", "duration = 3").replace("train-first", "zero")
        );
        (ScenarioConfig::from_raw(&parse_text(&text).unwrap()).unwrap(), text)
    }

    #[test]
    fn row_counts_follow_rates() {
        let (cfg, text) = short("");
        let run = run_scenario(&cfg, &text).unwrap();
        assert_eq!(run.sim.errors.len(), 300);
        assert_eq!(run.sim.mpc.len(), 30);
        assert_eq!(run.report.counters.plant_steps, 3000);
        assert_eq!(run.report.counters.replans, 1);
        assert_eq!(run.report.config_echo, text);
    }

    #[test]
    fn capture_rate() {
        let (cfg, _) = short("");
        let net = PredictorNet::zero(FeatureLayout::default().names);
        let sim = simulate(&cfg, &net, Some(50.0)).unwrap();
        let cap = sim.capture.unwrap();
        assert_eq!(cap.t.len(), 150);
        assert!((cap.t[1] - cap.t[0] - 0.02).abs() < 1e-12);
    }

    #[test]
    fn ordering_rule() {
        assert!(ordering_holds(&[1.0, 2.0, 2.0, 3.0, 3.0]));
        assert!(!ordering_holds(&[2.0, 2.0, 2.0, 3.0, 3.0]));
        assert!(!ordering_holds(&[1.0, 2.0, 3.0, 2.5, 4.0]));
    }
}
