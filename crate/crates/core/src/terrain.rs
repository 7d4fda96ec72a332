//! Procedural terrain fields and wheel-level noise injection.
//!
//! A field is an optional planar incline starting at `slope_start` along x plus
//! band-limited roughness built from at most 16 random-phase plane waves whose
//! spatial frequencies all lie below the configured cutoff.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::rng;

/// Spatial-frequency envelope of terrain the stack is expected to handle.
pub const MAX_CUTOFF_CPM: f64 = 0.5;
pub const MAX_SLOPE_DEG: f64 = 15.0;
const N_WAVES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerrainKind {
    Flat,
    Slope,
    Rough,
    Mixed,
}

impl std::str::FromStr for TerrainKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "flat" => Ok(Self::Flat),
            "slope" => Ok(Self::Slope),
            "rough" => Ok(Self::Rough),
            "mixed" => Ok(Self::Mixed),
            other => Err(Error::config("terrain.kind", format!("unknown kind `{other}`"))),
        }
    }
}

/// Terrain description as it appears in a scenario config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerrainSpec {
    pub kind: TerrainKind,
    pub slope_deg: f64,
    pub slope_start_m: f64,
    pub rough_amp_mm: f64,
    pub rough_cutoff_cpm: f64,
    pub seed: u64,
}

impl Default for TerrainSpec {
    fn default() -> Self {
        Self::flat()
    }
}

impl TerrainSpec {
    pub fn flat() -> Self {
        Self {
            kind: TerrainKind::Flat,
            slope_deg: 0.0,
            slope_start_m: 0.0,
            rough_amp_mm: 0.0,
            rough_cutoff_cpm: 0.0,
            seed: 0,
        }
    }

    /// Flat for x < 5 m, then a 5° incline.
    pub fn reference_slope() -> Self {
        Self {
            kind: TerrainKind::Slope,
            slope_deg: 5.0,
            slope_start_m: 5.0,
            ..Self::flat()
        }
    }
}

/// Terrain classes used by the battery, ordered by expected difficulty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerrainClass {
    Flat,
    Slope,
    Grass,
    Mixed,
    Gravel,
}

impl TerrainClass {
    pub const ALL: [TerrainClass; 5] = [
        TerrainClass::Flat,
        TerrainClass::Slope,
        TerrainClass::Grass,
        TerrainClass::Mixed,
        TerrainClass::Gravel,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TerrainClass::Flat => "flat",
            TerrainClass::Slope => "slope",
            TerrainClass::Grass => "grass",
            TerrainClass::Mixed => "mixed",
            TerrainClass::Gravel => "gravel",
        }
    }

    /// Wheel-noise amplitude multiplier: soft or loose ground perturbs the
    /// wheels more than firm ground.
    pub fn noise_scale(&self) -> f64 {
        match self {
            TerrainClass::Flat | TerrainClass::Slope => 1.0,
            TerrainClass::Grass => 1.2,
            TerrainClass::Mixed => 1.3,
            TerrainClass::Gravel => 1.4,
        }
    }

    pub fn preset(&self, seed: u64) -> TerrainSpec {
        let base = TerrainSpec {
            seed,
            ..TerrainSpec::flat()
        };
        match self {
            TerrainClass::Flat => base,
            TerrainClass::Slope => TerrainSpec {
                seed,
                ..TerrainSpec::reference_slope()
            },
            TerrainClass::Grass => TerrainSpec {
                kind: TerrainKind::Rough,
                rough_amp_mm: 6.0,
                rough_cutoff_cpm: 0.3,
                ..base
            },
            TerrainClass::Gravel => TerrainSpec {
                kind: TerrainKind::Rough,
                rough_amp_mm: 8.0,
                rough_cutoff_cpm: 0.5,
                ..base
            },
            TerrainClass::Mixed => TerrainSpec {
                kind: TerrainKind::Mixed,
                rough_amp_mm: 6.0,
                rough_cutoff_cpm: 0.3,
                seed,
                ..TerrainSpec::reference_slope()
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Wave {
    amplitude: f64,
    /// wavevector, rad/m
    k: [f64; 2],
    phase: f64,
}

/// Immutable, queryable height field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerrainField {
    pub kind: TerrainKind,
    pub slope_angle: f64,
    pub slope_start: f64,
    pub roughness_amplitude: f64,
    pub roughness_cutoff: f64,
    pub seed: u64,
    waves: Vec<Wave>,
}

/// Height and gradient at a query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TerrainSample {
    pub height: f64,
    pub gradient: Vector2<f64>,
}

/// Validates a spec and builds its field.
pub fn build_scenario(spec: &TerrainSpec) -> Result<TerrainField> {
    if !(0.0..=MAX_SLOPE_DEG).contains(&spec.slope_deg) {
        return Err(Error::config(
            "terrain.slope_deg",
            format!("{} outside [0, {MAX_SLOPE_DEG}]", spec.slope_deg),
        ));
    }
    if spec.rough_amp_mm < 0.0 || !spec.rough_amp_mm.is_finite() {
        return Err(Error::config("terrain.rough_amp_mm", "must be finite and >= 0"));
    }
    if spec.rough_cutoff_cpm > MAX_CUTOFF_CPM {
        return Err(Error::Envelope(format!(
            "roughness cutoff {} cycles/m exceeds {MAX_CUTOFF_CPM}",
            spec.rough_cutoff_cpm
        )));
    }
    if spec.rough_cutoff_cpm < 0.0 || !spec.slope_start_m.is_finite() {
        return Err(Error::config("terrain", "cutoff must be >= 0 and slope start finite"));
    }

    let has_slope = matches!(spec.kind, TerrainKind::Slope | TerrainKind::Mixed);
    let has_rough = matches!(spec.kind, TerrainKind::Rough | TerrainKind::Mixed);
    let amp = if has_rough { spec.rough_amp_mm * 1e-3 } else { 0.0 };
    if has_rough && amp > 0.0 && spec.rough_cutoff_cpm <= 0.0 {
        return Err(Error::config("terrain.rough_cutoff_cpm", "must be > 0 for rough terrain"));
    }

    let mut waves = Vec::new();
    if amp > 0.0 {
        let mut rng = rng::stream(spec.seed, rng::ids::TERRAIN);
        // Equal-amplitude waves; `amp` is the RMS height of the sum.
        let a = amp * (2.0 / N_WAVES as f64).sqrt();
        for _ in 0..N_WAVES {
            // keep a margin below the cutoff so a finite transect shows no leakage past it
            let f = spec.rough_cutoff_cpm * rng.random_range(0.05..0.9);
            let dir = rng.random_range(0.0..2.0 * PI);
            let phase = rng.random_range(0.0..2.0 * PI);
            let w = 2.0 * PI * f;
            waves.push(Wave {
                amplitude: a,
                k: [w * dir.cos(), w * dir.sin()],
                phase,
            });
        }
    }

    Ok(TerrainField {
        kind: spec.kind,
        slope_angle: if has_slope { spec.slope_deg.to_radians() } else { 0.0 },
        slope_start: spec.slope_start_m,
        roughness_amplitude: amp,
        roughness_cutoff: if has_rough { spec.rough_cutoff_cpm } else { 0.0 },
        seed: spec.seed,
        waves,
    })
}

impl TerrainField {
    pub fn flat() -> Self {
        build_scenario(&TerrainSpec::flat()).expect("flat spec is valid")
    }

    pub fn query(&self, x: f64, y: f64) -> TerrainSample {
        let mut height = 0.0;
        let mut gradient = Vector2::zeros();
        if self.slope_angle != 0.0 && x >= self.slope_start {
            let t = self.slope_angle.tan();
            height += (x - self.slope_start) * t;
            gradient.x += t;
        }
        for w in &self.waves {
            let arg = w.k[0] * x + w.k[1] * y + w.phase;
            height += w.amplitude * arg.sin();
            let c = w.amplitude * arg.cos();
            gradient.x += c * w.k[0];
            gradient.y += c * w.k[1];
        }
        TerrainSample { height, gradient }
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.query(x, y).height
    }

    /// Upper bound on the gradient magnitude anywhere on the field.
    pub fn max_gradient(&self) -> f64 {
        self.slope_angle.tan()
            + self
                .waves
                .iter()
                .map(|w| w.amplitude * (w.k[0].hypot(w.k[1])))
                .sum::<f64>()
    }

    /// Highest spatial frequency present, cycles/m.
    pub fn max_frequency(&self) -> f64 {
        self.waves
            .iter()
            .map(|w| w.k[0].hypot(w.k[1]) / (2.0 * PI))
            .fold(0.0, f64::max)
    }
}

fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, sigma: f64, bound: f64) -> f64 {
    if sigma <= 0.0 || bound <= 0.0 {
        return 0.0;
    }
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let v = z * sigma;
        if v.abs() <= bound {
            return v;
        }
    }
}

/// Draws one wheel-transform perturbation.
///
/// Translation components are Gaussian with σ = amplitude/3 truncated at
/// ±amplitude; the rotation vector uses σ = (amplitude/3)/wheelbase with the
/// matching truncation.
pub fn wheel_noise<R: Rng + ?Sized>(rng: &mut R, amplitude: f64, wheelbase: f64) -> Pose {
    if amplitude <= 0.0 {
        return Pose::identity();
    }
    let sigma = amplitude / 3.0;
    let t = Vector3::new(
        truncated_normal(rng, sigma, amplitude),
        truncated_normal(rng, sigma, amplitude),
        truncated_normal(rng, sigma, amplitude),
    );
    let rs = sigma / wheelbase;
    let rb = amplitude / wheelbase;
    let r = Vector3::new(
        truncated_normal(rng, rs, rb),
        truncated_normal(rng, rs, rb),
        truncated_normal(rng, rs, rb),
    );
    Pose::exp(t, r)
}
