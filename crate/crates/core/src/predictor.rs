//! Feedforward disturbance predictor, its trainer, and sparse-regression
//! feature selection.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::pose::DisturbanceVec;
use crate::rng;

pub const HIDDEN: [usize; 2] = [128, 64];
pub const OUT: usize = 6;
pub const TARGET_NAMES: [&str; 6] = ["d_dx", "d_dy", "d_dz", "d_rx", "d_ry", "d_rz"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation.
    fn deriv(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(Error::config("predictor.activation", format!("unknown activation `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// out × in
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct LayerWire {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Serialize for Layer {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let w = (0..self.w.nrows()).map(|r| self.w.row(r).iter().copied().collect()).collect();
        LayerWire {
            w,
            b: self.b.iter().copied().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Layer {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = LayerWire::deserialize(d)?;
        let rows = wire.w.len();
        let cols = wire.w.first().map_or(0, Vec::len);
        if wire.w.iter().any(|r| r.len() != cols) || wire.b.len() != rows {
            return Err(serde::de::Error::custom("ragged layer matrix or bias length mismatch"));
        }
        Ok(Layer {
            w: DMatrix::from_fn(rows, cols, |r, c| wire.w[r][c]),
            b: DVector::from_vec(wire.b),
        })
    }
}

/// Per-feature input standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    /// Column statistics of `x` (samples × features); near-constant columns get σ = 1.
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for c in x.column_iter() {
            let m = c.sum() / n;
            let v = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            std.push(if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 });
        }
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorNet {
    pub layout: Vec<String>,
    pub mask: Vec<bool>,
    pub standardization: Standardization,
    #[serde(default)]
    pub activation: Activation,
    pub layers: Vec<Layer>,
}

impl PredictorNet {
    /// Randomly initialized d→128→64→6 net (Glorot uniform, zero biases).
    pub fn init(layout: Vec<String>, activation: Activation, seed: u64) -> Self {
        let d = layout.len();
        let mut rng = rng::stream(seed, rng::ids::TRAINING);
        let dims = [d, HIDDEN[0], HIDDEN[1], OUT];
        let layers = dims
            .windows(2)
            .map(|w| {
                let lim = (6.0 / (w[0] + w[1]) as f64).sqrt();
                // row-major fill keeps the draw order independent of storage order
                let vals: Vec<f64> = (0..w[1] * w[0]).map(|_| rng.random_range(-lim..lim)).collect();
                Layer {
                    w: DMatrix::from_row_slice(w[1], w[0], &vals),
                    b: DVector::zeros(w[1]),
                }
            })
            .collect();
        Self {
            mask: vec![true; d],
            standardization: Standardization::identity(d),
            layout,
            activation,
            layers,
        }
    }

    /// All-zero network: always predicts no disturbance.
    pub fn zero(layout: Vec<String>) -> Self {
        let mut net = Self::init(layout, Activation::Relu, 0);
        for l in &mut net.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.input_dim();
        for (name, len) in [
            ("layout", self.layout.len()),
            ("mask", self.mask.len()),
            ("standardization.mean", self.standardization.mean.len()),
            ("standardization.std", self.standardization.std.len()),
        ] {
            if len != d {
                return Err(Error::config(format!("predictor.{name}"), format!("length {len} != input dim {d}")));
            }
        }
        if self.layers.len() != 3 {
            return Err(Error::config("predictor.layers", "expected 3 layers"));
        }
        let mut prev = d;
        for l in &self.layers {
            if l.w.ncols() != prev || l.b.len() != l.w.nrows() {
                return Err(Error::config("predictor.layers", "inconsistent layer shapes"));
            }
            prev = l.w.nrows();
        }
        if prev != OUT {
            return Err(Error::config("predictor.layers", "output must have 6 rows"));
        }
        Ok(())
    }

    /// Masked, standardized input column.
    fn prepare(&self, z: &[f64]) -> Result<DVector<f64>> {
        let d = self.input_dim();
        if z.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: z.len() });
        }
        let s = &self.standardization;
        Ok(DVector::from_fn(d, |i, _| {
            if self.mask[i] {
                (z[i] - s.mean[i]) / s.std[i]
            } else {
                0.0
            }
        }))
    }

    pub fn forward_raw(&self, z: &[f64]) -> Result<[f64; 6]> {
        let x = self.prepare(z)?;
        let act = self.activation;
        let h1 = (&self.layers[0].w * x + &self.layers[0].b).map(|v| act.apply(v));
        let h2 = (&self.layers[1].w * h1 + &self.layers[1].b).map(|v| act.apply(v));
        let y = &self.layers[2].w * h2 + &self.layers[2].b;
        Ok([y[0], y[1], y[2], y[3], y[4], y[5]])
    }

    pub fn forward(&self, z: &[f64]) -> Result<DisturbanceVec> {
        Ok(DisturbanceVec::from_array(self.forward_raw(z)?))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters flattened layer by layer: weights row-major, then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            for r in 0..l.w.nrows() {
                out.extend(l.w.row(r).iter());
            }
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            for r in 0..l.w.nrows() {
                for c in 0..l.w.ncols() {
                    l.w[(r, c)] = p[k];
                    k += 1;
                }
            }
            for v in l.b.iter_mut() {
                *v = p[k];
                k += 1;
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self)?;
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let net: Self = serde_json::from_str(&s)?;
        net.validate()?;
        Ok(net)
    }
}

/// Gradients for a batch, same shapes as the layers.
struct Grads {
    w: [DMatrix<f64>; 3],
    b: [DVector<f64>; 3],
}

fn add_bias(m: &mut DMatrix<f64>, b: &DVector<f64>) {
    for mut c in m.column_iter_mut() {
        c += b;
    }
}

/// Mean squared error over a batch (`x`: d × B, `t`: 6 × B) and its gradient.
fn loss_and_grads(layers: &[Layer], act: Activation, x: &DMatrix<f64>, t: &DMatrix<f64>, scale: f64) -> (f64, Grads) {
    let mut a1 = &layers[0].w * x;
    add_bias(&mut a1, &layers[0].b);
    let h1 = a1.map(|v| act.apply(v));
    let mut a2 = &layers[1].w * &h1;
    add_bias(&mut a2, &layers[1].b);
    let h2 = a2.map(|v| act.apply(v));
    let mut y = &layers[2].w * &h2;
    add_bias(&mut y, &layers[2].b);

    let n = (t.len()) as f64;
    let diff = y - t;
    let loss = scale * diff.norm_squared() / n;
    let dy = diff * (2.0 * scale / n);

    let gw3 = &dy * h2.transpose();
    let gb3 = dy.column_sum();
    let dh2 = layers[2].w.transpose() * &dy;
    let da2 = dh2.component_mul(&a2.map(|v| act.deriv(v)));
    let gw2 = &da2 * h1.transpose();
    let gb2 = da2.column_sum();
    let dh1 = layers[1].w.transpose() * &da2;
    let da1 = dh1.component_mul(&a1.map(|v| act.deriv(v)));
    let gw1 = &da1 * x.transpose();
    let gb1 = da1.column_sum();
    (
        loss,
        Grads {
            w: [gw1, gw2, gw3],
            b: [gb1, gb2, gb3],
        },
    )
}

fn flatten(g: &Grads) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..3 {
        for r in 0..g.w[i].nrows() {
            out.extend(g.w[i].row(r).iter());
        }
        out.extend(g.b[i].iter());
    }
    out
}

/// Loss `scale · mean((forward(z) - target)²)` and its analytic gradient with
/// respect to every parameter, in `params()` order.
pub fn loss_gradient(net: &PredictorNet, z: &[f64], target: &[f64; 6], scale: f64) -> Result<(f64, Vec<f64>)> {
    let x = net.prepare(z)?;
    let x = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
    let t = DMatrix::from_column_slice(6, 1, target);
    let (l, g) = loss_and_grads(&net.layers, net.activation, &x, &t, scale);
    Ok((l, flatten(&g)))
}

/// Maximum relative error between analytic and central-difference gradients
/// (step 1e-5) over all parameters.
pub fn numerical_gradient_check(net: &PredictorNet, z: &[f64], target: &[f64; 6]) -> Result<f64> {
    const H: f64 = 1e-5;
    let (_, analytic) = loss_gradient(net, z, target, 1.0)?;
    let loss = |n: &PredictorNet| -> Result<f64> {
        let y = n.forward_raw(z)?;
        Ok(y.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 6.0)
    };
    let base = net.params();
    let mut probe = net.clone();
    let mut p = base.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        p[i] = base[i] + H;
        probe.set_params(&p);
        let lp = loss(&probe)?;
        p[i] = base[i] - H;
        probe.set_params(&p);
        let lm = loss(&probe)?;
        p[i] = base[i];
        let numeric = (lp - lm) / (2.0 * H);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

/// One recorded trajectory sampled at a fixed rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub t: Vec<f64>,
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<[f64; 6]>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Builds training pairs from synchronous series: the target at sample `i`
    /// is the change of `disturbance` over the next `horizon` samples.
    pub fn from_series(id: usize, t: &[f64], features: &[Vec<f64>], disturbance: &[[f64; 6]], horizon: usize) -> Self {
        let n = t.len().saturating_sub(horizon);
        let targets = (0..n)
            .map(|i| std::array::from_fn(|k| disturbance[i + horizon][k] - disturbance[i][k]))
            .collect();
        Self {
            id,
            t: t[..n].to_vec(),
            features: features[..n].to_vec(),
            targets,
        }
    }

    pub fn write_csv(&self, path: &Path, layout: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend(layout.iter().cloned());
        header.extend(TARGET_NAMES.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![format!("{}", self.t[i])];
            row.extend(self.features[i].iter().map(|v| format!("{v}")));
            row.extend(self.targets[i].iter().map(|v| format!("{v}")));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a trajectory CSV; returns it with the feature names from its header.
    pub fn read_csv(path: &Path, id: usize) -> Result<(Self, Vec<String>)> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        if header.len() < 8 || header[0] != "t" {
            return Err(Error::InvalidInput(format!("{}: unexpected header", path.display())));
        }
        let d = header.len() - 7;
        let layout = header[1..1 + d].to_vec();
        let mut traj = Trajectory {
            id,
            t: Vec::new(),
            features: Vec::new(),
            targets: Vec::new(),
        };
        for rec in r.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display()))))
                .collect::<Result<_>>()?;
            if vals.len() != header.len() {
                return Err(Error::DimensionMismatch { expected: header.len(), got: vals.len() });
            }
            traj.t.push(vals[0]);
            traj.features.push(vals[1..1 + d].to_vec());
            traj.targets.push(std::array::from_fn(|k| vals[1 + d + k]));
        }
        Ok((traj, layout))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub layout: Vec<String>,
    pub trajectories: Vec<Trajectory>,
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
}

impl TrajectoryDataset {
    /// Splits 80/20 by trajectory with a seeded shuffle.
    pub fn new(layout: Vec<String>, trajectories: Vec<Trajectory>, seed: u64) -> Result<Self> {
        if trajectories.len() < 2 {
            return Err(Error::EmptySplit(format!(
                "need at least 2 trajectories, got {}",
                trajectories.len()
            )));
        }
        let mut ids: Vec<usize> = trajectories.iter().map(|t| t.id).collect();
        let mut rng = rng::stream(seed, rng::ids::TRAINING);
        ids.shuffle(&mut rng);
        let n_val = ((ids.len() as f64 * 0.2).round() as usize).clamp(1, ids.len() - 1);
        let val_ids = ids[..n_val].to_vec();
        let train_ids = ids[n_val..].to_vec();
        let ds = Self {
            layout,
            trajectories,
            train_ids,
            val_ids,
        };
        ds.check()?;
        Ok(ds)
    }

    pub fn check(&self) -> Result<()> {
        if self.train_ids.is_empty() || self.val_ids.is_empty() {
            return Err(Error::EmptySplit("train and validation splits must be non-empty".into()));
        }
        if self.train_ids.iter().any(|id| self.val_ids.contains(id)) {
            return Err(Error::InvalidInput("trajectory appears in both splits".into()));
        }
        let d = self.layout.len();
        for tr in &self.trajectories {
            if let Some(f) = tr.features.iter().find(|f| f.len() != d) {
                return Err(Error::DimensionMismatch { expected: d, got: f.len() });
            }
        }
        Ok(())
    }

    /// Stacked samples (rows) of the given trajectories.
    pub fn matrices(&self, ids: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.layout.len();
        let rows: Vec<(&Vec<f64>, &[f64; 6])> = self
            .trajectories
            .iter()
            .filter(|t| ids.contains(&t.id))
            .flat_map(|t| t.features.iter().zip(t.targets.iter()))
            .collect();
        let x = DMatrix::from_fn(rows.len(), d, |r, c| rows[r].0[c]);
        let y = DMatrix::from_fn(rows.len(), 6, |r, c| rows[r].1[c]);
        (x, y)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for t in &self.trajectories {
            t.write_csv(&dir.join(format!("traj_{:03}.csv", t.id)), &self.layout)?;
        }
        Ok(())
    }

    /// Loads every `*.csv` in `dir` (sorted by name) and splits them.
    pub fn read_dir(dir: &Path, seed: u64) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        let mut layout = None;
        let mut trajs = Vec::new();
        for (i, p) in paths.iter().enumerate() {
            let (t, l) = Trajectory::read_csv(p, i)?;
            if layout.get_or_insert_with(|| l.clone()) != &l {
                return Err(Error::InvalidInput(format!("{}: feature layout differs", p.display())));
            }
            trajs.push(t);
        }
        Self::new(layout.unwrap_or_default(), trajs, seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub momentum: f64,
    pub activation: Activation,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: 0.01,
            epochs: 60,
            batch: 64,
            seed: 0,
            momentum: 0.9,
            activation: Activation::Relu,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub net: PredictorNet,
    /// Entry 0 is the loss at initialization, then one entry per epoch.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Epoch whose weights were kept (lowest validation loss).
    pub best_epoch: usize,
}

fn standardized(x: &DMatrix<f64>, s: &Standardization, mask: &[bool]) -> DMatrix<f64> {
    // returns features × samples
    DMatrix::from_fn(x.ncols(), x.nrows(), |c, r| {
        if mask[c] {
            (x[(r, c)] - s.mean[c]) / s.std[c]
        } else {
            0.0
        }
    })
}

fn eval_loss(layers: &[Layer], act: Activation, x: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
    if x.ncols() == 0 {
        return 0.0;
    }
    loss_and_grads(layers, act, x, t, 1.0).0
}

/// Trains on standardized inputs and targets with momentum SGD; the target
/// scaling is folded into the output layer of the returned net.
pub fn train(data: &TrajectoryDataset, hyper: &TrainHyper, mask: Option<&[bool]>) -> Result<TrainResult> {
    data.check()?;
    let d = data.layout.len();
    let mask: Vec<bool> = match mask {
        Some(m) if m.len() != d => return Err(Error::DimensionMismatch { expected: d, got: m.len() }),
        Some(m) => m.to_vec(),
        None => vec![true; d],
    };
    let (xtr, ytr) = data.matrices(&data.train_ids);
    let (xva, yva) = data.matrices(&data.val_ids);
    if xtr.nrows() == 0 || xva.nrows() == 0 {
        return Err(Error::EmptySplit("a split has no samples".into()));
    }

    let mut std_in = Standardization::fit(&xtr);
    for i in 0..d {
        if !mask[i] {
            std_in.mean[i] = 0.0;
            std_in.std[i] = 1.0;
        }
    }
    let std_out = Standardization::fit(&ytr);
    let xs = standardized(&xtr, &std_in, &mask);
    let ts = standardized(&ytr, &std_out, &[true; 6]);
    let xv = standardized(&xva, &std_in, &mask);
    let tv = standardized(&yva, &std_out, &[true; 6]);

    let mut net = PredictorNet::init(data.layout.clone(), hyper.activation, hyper.seed);
    net.mask = mask;
    net.standardization = std_in;
    let act = hyper.activation;

    let mut train_loss = vec![eval_loss(&net.layers, act, &xs, &ts)];
    let mut val_loss = vec![eval_loss(&net.layers, act, &xv, &tv)];
    let mut best = (val_loss[0], net.layers.clone(), 0);

    let mut vel_w: Vec<DMatrix<f64>> = net.layers.iter().map(|l| DMatrix::zeros(l.w.nrows(), l.w.ncols())).collect();
    let mut vel_b: Vec<DVector<f64>> = net.layers.iter().map(|l| DVector::zeros(l.b.len())).collect();
    let mut shuffle_rng = rng::stream(hyper.seed.wrapping_add(1), rng::ids::TRAINING);
    let n = xs.ncols();
    let batch = hyper.batch.max(1);
    let mut order: Vec<usize> = (0..n).collect();

    for _ in 0..hyper.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(batch) {
            let xb = DMatrix::from_fn(d, chunk.len(), |r, c| xs[(r, chunk[c])]);
            let tb = DMatrix::from_fn(6, chunk.len(), |r, c| ts[(r, chunk[c])]);
            let (_, g) = loss_and_grads(&net.layers, act, &xb, &tb, 1.0);
            for i in 0..3 {
                vel_w[i] *= hyper.momentum;
                vel_w[i] -= &g.w[i] * hyper.lr;
                vel_b[i] *= hyper.momentum;
                vel_b[i] -= &g.b[i] * hyper.lr;
                net.layers[i].w += &vel_w[i];
                net.layers[i].b += &vel_b[i];
            }
        }
        train_loss.push(eval_loss(&net.layers, act, &xs, &ts));
        val_loss.push(eval_loss(&net.layers, act, &xv, &tv));
        if val_loss[val_loss.len() - 1] < best.0 {
            best = (val_loss[val_loss.len() - 1], net.layers.clone(), val_loss.len() - 1);
        }
    }
    // keep the weights with the lowest validation loss
    net.layers = best.1;

    // fold target de-standardization into the output layer
    let out = &mut net.layers[2];
    for r in 0..OUT {
        let s = std_out.std[r];
        out.w.row_mut(r).scale_mut(s);
        out.b[r] = out.b[r] * s + std_out.mean[r];
    }
    Ok(TrainResult {
        net,
        train_loss,
        val_loss,
        best_epoch: best.2,
    })
}

/// Sequentially thresholded least squares on standardized, centered data.
///
/// Returns the surviving-feature mask. A feature survives while the largest
/// magnitude of its coefficients across the six outputs is at least `threshold`.
pub fn select_features(data: &TrajectoryDataset, threshold: f64, ridge: f64) -> Result<Vec<bool>> {
    if threshold < 0.0 || ridge < 0.0 {
        return Err(Error::InvalidInput("threshold and ridge must be >= 0".into()));
    }
    let (x, y) = data.matrices(&data.train_ids);
    stlsq(&x, &y, threshold, ridge)
}

/// STLSQ on raw sample matrices (rows are samples).
pub fn stlsq(x: &DMatrix<f64>, y: &DMatrix<f64>, threshold: f64, ridge: f64) -> Result<Vec<bool>> {
    let d = x.ncols();
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptySplit("no samples for feature selection".into()));
    }
    let center_scale = |m: &DMatrix<f64>| {
        let mut out = m.clone();
        for mut c in out.column_iter_mut() {
            let mean = c.mean();
            c.add_scalar_mut(-mean);
            let s = (c.norm_squared() / n as f64).sqrt();
            if s > 1e-12 {
                c /= s;
            } else {
                c.fill(0.0);
            }
        }
        out
    };
    let xs = center_scale(x);
    let ys = center_scale(y);

    let mut active: Vec<usize> = (0..d).collect();
    for _ in 0..20 {
        if active.is_empty() {
            break;
        }
        let xa = DMatrix::from_fn(n, active.len(), |r, c| xs[(r, active[c])]);
        let coef = ridge_solve(&xa, &ys, ridge)?;
        let keep: Vec<usize> = active
            .iter()
            .enumerate()
            .filter(|(i, _)| coef.row(*i).amax() >= threshold)
            .map(|(_, &f)| f)
            .collect();
        if keep == active {
            break;
        }
        active = keep;
    }
    let mut mask = vec![false; d];
    for f in active {
        mask[f] = true;
    }
    Ok(mask)
}

fn ridge_solve(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    let n = x.nrows() as f64;
    let mut g = x.transpose() * x / n;
    let rhs = x.transpose() * y / n;
    if ridge == 0.0 {
        let sv = g.clone().singular_values();
        let max = sv.max();
        let min = sv.min();
        if !(max > 0.0) || min / max < 1e-12 {
            return Err(Error::IllConditioned(format!(
                "normal matrix condition estimate {:.3e}",
                if min > 0.0 { max / min } else { f64::INFINITY }
            )));
        }
    }
    for i in 0..g.nrows() {
        g[(i, i)] += ridge;
    }
    g.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::IllConditioned("normal matrix not positive definite".into()))
}
