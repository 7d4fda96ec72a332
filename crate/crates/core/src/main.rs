use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use terrasim::config::{RawConfig, ScenarioConfig};
use terrasim::harness::{
    emit_report, generate_dataset, resolve_predictor, run_ablation, run_terrain_battery, run_with, train_on, RunOutput,
};
use terrasim::predictor::TrajectoryDataset;
use terrasim::Error;

#[derive(Parser)]
#[command(name = "terrasim", version, about = "Terrain-adaptive mobile printing simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Output directory (defaults to the config's out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a seed, e.g. `noise=7` or `seeds.terrain=3`. Repeatable.
    #[arg(long = "seed-override", value_name = "K=V")]
    seed_override: Vec<String>,
    /// Pace the loop to wall-clock time.
    #[arg(long)]
    realtime: bool,
    /// Exit with status 3 if an acceptance threshold is violated.
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write its report and logs.
    Run(Common),
    /// Predictive versus reactive paired runs.
    Ablation(Common),
    /// Run every terrain class preset.
    Battery(Common),
    /// Train a predictor from a dataset written by gen-data.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory (defaults to <out>/dataset).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Drive reactive traverses and write trajectory CSVs.
    GenData(Common),
}

enum Failure {
    Config(Error),
    Runtime(Error),
    Check(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Config(e),
            other => Failure::Runtime(other),
        }
    }
}

fn load(c: &Common) -> Result<(ScenarioConfig, RawConfig, PathBuf), Failure> {
    let (mut cfg, raw) = ScenarioConfig::load(&c.config, &c.seed_override)?;
    cfg.realtime |= c.realtime;
    let out = c.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    Ok((cfg, raw, out))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn run_checks(cfg: &ScenarioConfig, run: &RunOutput) -> Vec<String> {
    let r = &run.report;
    let mut v = Vec::new();
    // a deliberate step disturbance is judged by its settling time alone
    if cfg.step_event.is_none() {
        if r.errors.max_axis_mm() >= 5.0 {
            v.push(format!("max per-axis error {:.3} mm >= 5 mm", r.errors.max_axis_mm()));
        }
        if r.errors.final_drift_slope_mm_per_s.abs() >= 0.05 {
            v.push(format!("drift slope {:.4} mm/s exceeds 0.05", r.errors.final_drift_slope_mm_per_s));
        }
    } else {
        match r.errors.settling_time_s {
            Some(s) if s <= 0.6 => {}
            Some(s) => v.push(format!("settling time {s:.3} s > 0.6 s")),
            None => v.push("step disturbance never settled".into()),
        }
    }
    if run.timing.solve_max_ms >= 100.0 {
        v.push(format!("max solve time {:.2} ms >= 100 ms", run.timing.solve_max_ms));
    }
    if r.counters.stale_trips > 0 {
        v.push(format!("{} stale-command trips", r.counters.stale_trips));
    }
    v
}

fn summarize(run: &RunOutput) {
    let e = &run.report.errors;
    println!(
        "{}: max |e| x/y/z = {:.3}/{:.3}/{:.3} mm, mean ‖e‖ = {:.3} mm, drift = {:+.4} mm/s, solve mean/max = {:.2}/{:.2} ms",
        run.report.name,
        e.x_mm.max,
        e.y_mm.max,
        e.z_mm.max,
        e.norm_mm.mean,
        e.final_drift_slope_mm_per_s,
        run.timing.solve_mean_ms,
        run.timing.solve_max_ms
    );
    if let Some(s) = e.settling_time_s {
        println!("  settling time {s:.3} s");
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Run(c) => {
            let (cfg, raw, out) = load(&c)?;
            let resolved = resolve_predictor(&cfg)?;
            let run = run_with(&cfg, &raw.text, &resolved.net)?;
            emit_report(&run, &out)?;
            if let Some(t) = &resolved.training {
                write_json(&out.join("training.json"), t)?;
                resolved.net.save(&out.join("predictor.json"))?;
            }
            summarize(&run);
            if c.check {
                let v = run_checks(&cfg, &run);
                if !v.is_empty() {
                    return Err(Failure::Check(v));
                }
            }
        }
        Cmd::Ablation(c) => {
            let (cfg, raw, out) = load(&c)?;
            let net = resolve_predictor(&cfg)?.net;
            let (rep, [p, r]) = run_ablation(&cfg, &raw.text, &net)?;
            emit_report(&p, &out.join("predictive"))?;
            emit_report(&r, &out.join("reactive"))?;
            write_json(&out.join("ablation.json"), &rep)?;
            summarize(&p);
            summarize(&r);
            println!("margin (reactive - predictive mean ‖e‖): {:+.4} mm", rep.margin_mm);
            if c.check && !rep.same_noise {
                return Err(Failure::Check(vec!["paired runs saw different noise".into()]));
            }
        }
        Cmd::Battery(c) => {
            let (cfg, raw, out) = load(&c)?;
            let net = resolve_predictor(&cfg)?.net;
            let (rep, runs) = run_terrain_battery(&cfg, &raw.text, &net)?;
            for run in &runs {
                emit_report(run, &out.join(run.report.terrain_class.as_deref().unwrap_or("class")))?;
            }
            write_json(&out.join("battery.json"), &rep)?;
            for (class, dev) in &rep.mean_height_deviation_mm {
                println!("{class:>8}: mean height deviation {dev:.3} mm");
            }
            println!("ordering flat < slope <= grass <= mixed <= gravel: {}", rep.ordering_holds);
            if c.check {
                let mut v = Vec::new();
                if !rep.ordering_holds {
                    v.push("terrain ordering violated".to_string());
                }
                if rep.mean_height_deviation_mm[0].1 >= 3.0 {
                    v.push(format!("flat mean height deviation {:.3} mm >= 3 mm", rep.mean_height_deviation_mm[0].1));
                }
                if rep.reports.iter().any(|r| r.counters.stale_trips > 0) {
                    v.push("stale-command trips in the battery".into());
                }
                if !v.is_empty() {
                    return Err(Failure::Check(v));
                }
            }
        }
        Cmd::Train { common, data } => {
            let (cfg, _, out) = load(&common)?;
            let dir = data.unwrap_or_else(|| out.join("dataset"));
            let dataset = TrajectoryDataset::read_dir(&dir, cfg.seeds.training)?;
            let resolved = train_on(&cfg, &dataset)?;
            resolved.net.save(&out.join("predictor.json"))?;
            if let Some(t) = &resolved.training {
                write_json(&out.join("training.json"), t)?;
                println!(
                    "trained on {} samples; validation loss {:.6} -> {:.6}",
                    t.samples,
                    t.val_loss.first().copied().unwrap_or(f64::NAN),
                    t.val_loss.last().copied().unwrap_or(f64::NAN)
                );
            }
        }
        Cmd::GenData(c) => {
            let (cfg, _, out) = load(&c)?;
            let data = generate_dataset(&cfg)?;
            let dir = out.join("dataset");
            data.write_dir(&dir)?;
            println!("wrote {} trajectories to {}", data.trajectories.len(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Check(v)) => {
            for m in v {
                eprintln!("check failed: {m}");
            }
            ExitCode::from(3)
        }
    }
}
