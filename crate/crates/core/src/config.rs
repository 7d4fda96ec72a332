//! Flat `key = value` scenario files. Sections are key prefixes
//! (`terrain.kind`, `mpc.horizon`, ...). `#` starts a comment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::{InputBounds, MpcParams};
use crate::plant::{ExecutorConfig, Interpolation, NoiseMode, PlantConfig};
use crate::planner::VelocityLimits;
use crate::pose::Pose;
use crate::predictor::{Activation, TrainHyper};
use crate::sensors::{FeatureOptions, SensorConfig};
use crate::terrain::{TerrainKind, TerrainSpec};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorSource {
    Zero,
    TrainFirst,
    Path(PathBuf),
}

impl PredictorSource {
    pub fn label(&self) -> String {
        match self {
            PredictorSource::Zero => "zero".into(),
            PredictorSource::TrainFirst => "train-first".into(),
            PredictorSource::Path(p) => p.display().to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub terrain: u64,
    pub noise: u64,
    pub sensors: u64,
    pub training: u64,
}

/// Step disturbance: a persistent vertical chassis offset applied at `time`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub time: f64,
    pub offset: f64,
}

/// Training-data generation and training settings for `train-first`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub trajectories: usize,
    pub duration: f64,
    pub speed_jitter: f64,
    pub sample_hz: f64,
    pub stlsq_threshold: f64,
    pub ridge: f64,
    pub hyper: TrainHyper,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            trajectories: 15,
            duration: 30.0,
            speed_jitter: 0.2,
            sample_hz: 50.0,
            stlsq_threshold: 0.02,
            ridge: 1e-3,
            hyper: TrainHyper {
                lr: 0.005,
                epochs: 30,
                batch: 128,
                ..TrainHyper::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration: f64,
    pub terrain: TerrainSpec,
    /// `[x, y, z]`: ground position and print height above the terrain.
    pub waypoints: Vec<[f64; 3]>,
    pub chord_tol: f64,
    pub limits: VelocityLimits,
    pub replan_period: f64,
    pub mpc: MpcParams,
    /// Plant-rate samples averaged into the MPC's end-effector estimate.
    pub estimate_window: usize,
    pub lag_compensation: bool,
    pub executor: ExecutorConfig,
    pub plant: PlantConfig,
    pub sensors: SensorConfig,
    pub features: FeatureOptions,
    pub predictor: PredictorSource,
    pub activation: Activation,
    pub training: TrainingConfig,
    pub step_event: Option<StepEvent>,
    pub seeds: Seeds,
    pub out_dir: PathBuf,
    pub realtime: bool,
}

impl ScenarioConfig {
    pub fn waypoint_poses(&self) -> Vec<Pose> {
        self.waypoints.iter().map(|w| Pose::from_translation(w[0], w[1], w[2])).collect()
    }

    pub fn tool(&self) -> Vector3<f64> {
        self.plant.tool()
    }

    pub fn noise_free(&self) -> bool {
        self.plant.noise_amplitude == 0.0
    }
}

/// Parsed key/value pairs with the raw text kept for echoing.
#[derive(Clone, Debug, PartialEq)]
pub struct RawConfig {
    pub text: String,
    pub entries: BTreeMap<String, String>,
}

pub fn parse_text(text: &str) -> Result<RawConfig> {
    let mut entries = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::config(format!("line {}", no + 1), format!("expected `key = value`, got `{line}`")));
        };
        let k = k.trim().to_string();
        if k.is_empty() {
            return Err(Error::config(format!("line {}", no + 1), "empty key"));
        }
        if entries.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::config(k, "duplicate key"));
        }
    }
    Ok(RawConfig {
        text: text.to_string(),
        entries,
    })
}

pub fn read_file(path: &Path) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_text(&text)
}

/// Applies `K=V` overrides; a bare key such as `noise` means `seeds.noise`.
pub fn apply_overrides(raw: &mut RawConfig, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let Some((k, v)) = o.split_once('=') else {
            return Err(Error::config("--seed-override", format!("expected K=V, got `{o}`")));
        };
        let k = k.trim();
        let key = if k.contains('.') { k.to_string() } else { format!("seeds.{k}") };
        if !key.starts_with("seeds.") {
            return Err(Error::config("--seed-override", format!("`{key}` is not a seed")));
        }
        raw.entries.insert(key, v.trim().to_string());
    }
    Ok(())
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
    used: std::cell::RefCell<Vec<String>>,
}

impl<'a> Reader<'a> {
    fn raw(&self, key: &str) -> Option<&'a str> {
        self.used.borrow_mut().push(key.to_string());
        self.map.get(key).map(String::as_str)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|e| Error::config(key, format!("cannot parse `{s}`: {e}"))),
        }
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let s = self.raw(key).ok_or_else(|| Error::config(key, "required"))?;
        s.parse().map_err(|e| Error::config(key, format!("cannot parse `{s}`: {e}")))
    }

    fn list<const N: usize>(&self, key: &str, default: [f64; N]) -> Result<[f64; N]> {
        let Some(s) = self.raw(key) else {
            return Ok(default);
        };
        let vals: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| Error::config(key, format!("`{p}`: {e}"))))
            .collect::<Result<_>>()?;
        vals.try_into()
            .map_err(|v: Vec<f64>| Error::config(key, format!("expected {N} values, got {}", v.len())))
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "on" | "yes" | "1") => Ok(true),
            Some("false" | "off" | "no" | "0") => Ok(false),
            Some(s) => Err(Error::config(key, format!("expected a boolean, got `{s}`"))),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be > 0, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be >= 0, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let r = Reader {
            map: &raw.entries,
            used: Default::default(),
        };

        let name = r.parse("name", "scenario".to_string())?;
        let duration = positive("duration", r.parse("duration", 30.0)?)?;

        let kind: TerrainKind = r.parse("terrain.kind", TerrainKind::Flat)?;
        let terrain = TerrainSpec {
            kind,
            slope_deg: r.parse("terrain.slope_deg", 0.0)?,
            slope_start_m: r.parse("terrain.slope_start_m", 0.0)?,
            rough_amp_mm: r.parse("terrain.rough_amp_mm", 0.0)?,
            rough_cutoff_cpm: r.parse("terrain.rough_cutoff_cpm", 0.0)?,
            seed: 0,
        };

        let waypoints = match r.raw("waypoints") {
            None => return Err(Error::config("waypoints", "required")),
            Some(s) => s
                .split(';')
                .map(|p| {
                    let v: Vec<f64> = p
                        .split(',')
                        .map(|x| x.trim().parse::<f64>().map_err(|e| Error::config("waypoints", format!("`{x}`: {e}"))))
                        .collect::<Result<_>>()?;
                    <[f64; 3]>::try_from(v).map_err(|_| Error::config("waypoints", format!("`{p}` is not x,y,z")))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        if waypoints.len() < 2 {
            return Err(Error::config("waypoints", "need at least 2 waypoints"));
        }

        let limits = VelocityLimits {
            v_max: positive("plan.v_max", r.parse("plan.v_max", 0.36)?)?,
            a_max: positive("plan.a_max", r.parse("plan.a_max", 0.2)?)?,
            turn_rate: positive("plan.turn_rate", r.parse("plan.turn_rate", 0.5)?)?,
        };
        let chord_tol = positive("plan.chord_tol", r.parse("plan.chord_tol", 0.002)?)?;
        let replan_period = positive("plan.replan_period", r.parse("plan.replan_period", 10.0)?)?;

        let d = MpcParams::default();
        let bounds = InputBounds {
            v: r.parse("mpc.v_max", d.bounds.v)?,
            omega: r.parse("mpc.omega_max", d.bounds.omega)?,
            arm_vel: r.parse("mpc.arm_vel_max", d.bounds.arm_vel)?,
            arm_box: r.list("mpc.arm_box", d.bounds.arm_box)?,
        };
        let chassis_lag = non_negative("plant.chassis_lag", r.parse("plant.chassis_lag", PlantConfig::default().chassis_lag)?)?;
        let mpc = MpcParams {
            horizon: r.parse("mpc.horizon", d.horizon)?,
            control_horizon: r.parse("mpc.control_horizon", d.control_horizon)?,
            dt: r.parse("mpc.dt", d.dt)?,
            q: r.list("mpc.q", d.q)?,
            r: r.list("mpc.r", d.r)?,
            bounds,
            preview_horizon: positive("mpc.preview_horizon", r.parse("mpc.preview_horizon", d.preview_horizon)?)?,
            max_iterations: r.parse("mpc.max_iterations", d.max_iterations)?,
            // the controller's model of the chassis lag defaults to the plant's
            chassis_lag: non_negative("mpc.chassis_lag", r.parse("mpc.chassis_lag", chassis_lag)?)?,
        };
        mpc.validate()?;
        let estimate_window = r.parse("mpc.estimate_window", 20usize)?;
        if estimate_window == 0 {
            return Err(Error::config("mpc.estimate_window", "must be >= 1"));
        }
        let lag_compensation = r.flag("mpc.lag_compensation", true)?;

        let pd = PlantConfig::default();
        let noise_mode = match r.parse("noise.mode", "per_wheel".to_string())?.as_str() {
            "per_wheel" => NoiseMode::PerWheel,
            "chassis" => NoiseMode::Chassis,
            other => return Err(Error::config("noise.mode", format!("unknown mode `{other}`"))),
        };
        let plant = PlantConfig {
            noise_amplitude: non_negative("noise.amplitude", r.parse("noise.amplitude", pd.noise_amplitude)?)?,
            noise_mode,
            chassis_lag,
            arm_lag: non_negative("plant.arm_lag", r.parse("plant.arm_lag", pd.arm_lag)?)?,
            tool_offset: r.list("plant.tool_offset", pd.tool_offset)?,
            arm_box: bounds.arm_box,
            v_max: bounds.v,
            omega_max: bounds.omega,
            arm_vel_max: bounds.arm_vel,
            ..pd
        };

        let ed = ExecutorConfig::default();
        let interpolation = match r.parse("executor.interpolation", "zoh".to_string())?.as_str() {
            "zoh" => Interpolation::Zoh,
            "linear" => Interpolation::Linear,
            other => return Err(Error::config("executor.interpolation", format!("unknown mode `{other}`"))),
        };
        let executor = ExecutorConfig {
            interpolation,
            trim_gain: non_negative("executor.trim_gain", r.parse("executor.trim_gain", ed.trim_gain)?)?,
            stale_periods: positive("executor.stale_periods", r.parse("executor.stale_periods", ed.stale_periods)?)?,
            split_hz: non_negative("executor.split_hz", r.parse("executor.split_hz", ed.split_hz)?)?,
            tick_period: 1.0 / plant.executor_rate_hz,
            mpc_period: mpc.dt,
            arm_box: bounds.arm_box,
            chassis_lag: mpc.chassis_lag,
        };
        for (key, period) in [("mpc.dt", mpc.dt), ("plan.replan_period", replan_period)] {
            if !plant.divides(period) || !plant.divides(period / plant.steps_per_tick() as f64) {
                return Err(Error::config(key, format!("{period} s is not a multiple of the executor period")));
            }
        }

        let sd = SensorConfig::default();
        let sensors_noise = r.flag("sensors.noise", true)?;
        let sensors = SensorConfig {
            lookahead: positive("sensors.lookahead", r.parse("sensors.lookahead", sd.lookahead)?)?,
            tool_offset: plant.tool_offset,
            ..if sensors_noise { sd } else { SensorConfig::noiseless() }
        };
        let features = FeatureOptions {
            ee_orientation: r.flag("sensors.ee_orientation", false)?,
            velocity: r.flag("sensors.velocity", false)?,
        };

        let predictor = match r.parse("predictor.source", "zero".to_string())?.as_str() {
            "zero" => PredictorSource::Zero,
            "train-first" => PredictorSource::TrainFirst,
            p => PredictorSource::Path(PathBuf::from(p)),
        };
        let activation: Activation = r.parse("predictor.activation", Activation::Relu)?;
        let td = TrainingConfig::default();
        let training = TrainingConfig {
            trajectories: r.parse("training.trajectories", td.trajectories)?,
            duration: positive("training.duration", r.parse("training.duration", td.duration)?)?,
            speed_jitter: non_negative("training.speed_jitter", r.parse("training.speed_jitter", td.speed_jitter)?)?,
            sample_hz: positive("training.sample_hz", r.parse("training.sample_hz", td.sample_hz)?)?,
            stlsq_threshold: non_negative("training.stlsq_threshold", r.parse("training.stlsq_threshold", td.stlsq_threshold)?)?,
            ridge: non_negative("training.ridge", r.parse("training.ridge", td.ridge)?)?,
            hyper: TrainHyper {
                lr: positive("training.lr", r.parse("training.lr", td.hyper.lr)?)?,
                epochs: r.parse("training.epochs", td.hyper.epochs)?,
                batch: r.parse("training.batch", td.hyper.batch)?,
                momentum: r.parse("training.momentum", td.hyper.momentum)?,
                activation,
                seed: 0,
            },
        };
        if training.trajectories < 2 {
            return Err(Error::config("training.trajectories", "need at least 2"));
        }

        let step_mm: f64 = r.parse("event.step_mm", 0.0)?;
        let step_event = if step_mm != 0.0 {
            Some(StepEvent {
                time: non_negative("event.step_time", r.parse("event.step_time", 15.0)?)?,
                offset: step_mm * 1e-3,
            })
        } else {
            r.raw("event.step_time");
            None
        };

        let seeds = Seeds {
            terrain: r.required("seeds.terrain")?,
            noise: r.required("seeds.noise")?,
            sensors: r.required("seeds.sensors")?,
            training: r.required("seeds.training")?,
        };
        let mut terrain = terrain;
        terrain.seed = seeds.terrain;
        let mut training = training;
        training.hyper.seed = seeds.training;

        let out_dir = PathBuf::from(r.parse("out_dir", format!("out/{name}"))?);
        let realtime = r.flag("realtime", false)?;

        let used = r.used.borrow();
        if let Some(k) = raw.entries.keys().find(|k| !used.contains(k)) {
            return Err(Error::config(k.clone(), "unknown key"));
        }

        let cfg = Self {
            name,
            duration,
            terrain,
            waypoints,
            chord_tol,
            limits,
            replan_period,
            mpc,
            estimate_window,
            lag_compensation,
            executor,
            plant,
            sensors,
            features,
            predictor,
            activation,
            training,
            step_event,
            seeds,
            out_dir,
            realtime,
        };
        // terrain validation happens here so errors name the config field
        crate::terrain::build_scenario(&cfg.terrain)?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<(Self, RawConfig)> {
        let mut raw = read_file(path)?;
        apply_overrides(&mut raw, overrides)?;
        Ok((Self::from_raw(&raw)?, raw))
    }
}

/// The reference scenario used by the acceptance suite and `scenarios/reference.cfg`.
pub const REFERENCE_CONFIG: &str = "\
name = reference
duration = 30
terrain.kind = slope
terrain.slope_deg = 5
terrain.slope_start_m = 5
waypoints = 0,0,0.1; 10,0,0.1
plan.v_max = 0.36
plan.a_max = 0.2
noise.amplitude = 0.005
predictor.source = train-first
seeds.terrain = 1
seeds.noise = 2
seeds.sensors = 3
seeds.training = 4
";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_parses() {
        let raw = parse_text(REFERENCE_CONFIG).unwrap();
        let c = ScenarioConfig::from_raw(&raw).unwrap();
        assert_eq!(c.waypoints.len(), 2);
        assert_eq!(c.mpc.horizon, 10);
        assert_eq!(c.mpc.control_horizon, 5);
        assert_eq!(c.plant.noise_amplitude, 0.005);
        assert_eq!(c.predictor, PredictorSource::TrainFirst);
        assert_eq!(c.seeds.noise, 2);
        assert_eq!(c.step_event, None);
        assert_eq!(raw.text, REFERENCE_CONFIG);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = |text: &str, field: &str| {
            let raw = parse_text(text).unwrap();
            match ScenarioConfig::from_raw(&raw) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("expected config error for {field}, got {other:?}"),
            }
        };
        let base = REFERENCE_CONFIG.replace("duration = 30\n", "");
        bad(&format!("{base}duration = -1\n"), "duration");
        bad(&REFERENCE_CONFIG.replace("seeds.noise = 2\n", ""), "seeds.noise");
        bad(&format!("{REFERENCE_CONFIG}bogus.key = 1\n"), "bogus.key");
        bad(&REFERENCE_CONFIG.replace("waypoints = 0,0,0.1; 10,0,0.1", "waypoints = 0,0,0.1"), "waypoints");
        bad(&format!("{REFERENCE_CONFIG}mpc.dt = 0.1005\n"), "mpc.dt");
        bad(&format!("{REFERENCE_CONFIG}mpc.control_horizon = 12\n"), "mpc.horizon");
        bad(&REFERENCE_CONFIG.replace("terrain.slope_deg = 5", "terrain.slope_deg = 40"), "terrain.slope_deg");
        assert!(matches!(parse_text("just words"), Err(Error::Config { .. })));
        assert!(matches!(parse_text("a = 1\na = 2"), Err(Error::Config { .. })));
    }

    #[test]
    fn seed_overrides() {
        let mut raw = parse_text(REFERENCE_CONFIG).unwrap();
        apply_overrides(&mut raw, &["noise=9".into(), "seeds.training=11".into()]).unwrap();
        let c = ScenarioConfig::from_raw(&raw).unwrap();
        assert_eq!(c.seeds.noise, 9);
        assert_eq!(c.seeds.training, 11);
        assert_eq!(c.training.hyper.seed, 11);
        assert!(apply_overrides(&mut raw, &["mpc.dt=0.2".into()]).is_err());
    }

    #[test]
    fn step_event_and_comments() {
        let text = format!("{REFERENCE_CONFIG}# settling protocol\nevent.step_mm = 10   # vertical\nevent.step_time = 15\n");
        let c = ScenarioConfig::from_raw(&parse_text(&text).unwrap()).unwrap();
        assert_eq!(c.step_event, Some(StepEvent { time: 15.0, offset: 0.01 }));
    }
}
