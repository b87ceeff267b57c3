use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use bifloc_core::activity::{classify, misiurewicz_check};
use bifloc_core::config::RunConfig;
use bifloc_core::continuation::{continue_backward_orbit, continue_cycle, stability_probe, ProbeConfig};
use bifloc_core::families::{builtin, summarize, Family, BUILTIN_IDS};
use bifloc_core::orbit::{find_cycle_newton, iterate_orbit, CycleRecord};
use bifloc_core::scan::{export, period_report, render, scan_grid_threads, ExportFormat, GridSpec, Palette, ScanTask};
use bifloc_core::shooting::{
    find_misiurewicz, find_truncation_parameters, shoot, verify_attracting_near_virtual, ShootTarget,
    ShootingProblem, DEFAULT_MAX_NEWTON,
};
use bifloc_core::sphere::SpherePoint;
use bifloc_core::verify::{render_table, run_suite, Suite};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "bifloc", version, about = "Bifurcation loci of natural families of holomorphic maps")]
struct Cli {
    /// JSON file overriding the run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Quadratic,
    Exponential,
    Tangent,
    QuadraticConjugated,
}

impl FamilyArg {
    fn load(self) -> anyhow::Result<std::sync::Arc<dyn Family>> {
        let id = match self {
            FamilyArg::Quadratic => "quadratic",
            FamilyArg::Exponential => "exponential",
            FamilyArg::Tangent => "tangent",
            FamilyArg::QuadraticConjugated => "quadratic-conjugated",
        };
        Ok(builtin(id)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Fate,
    Period,
    Multiplier,
    Activity,
}

#[derive(Clone, Copy, ValueEnum)]
enum PaletteArg {
    Period,
    Fate,
    LogMultiplier,
    Activity,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Quadratic,
    Tangent,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum MisiurewiczMode {
    Find,
    Check,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamiliesAction {
    List,
}

/// A complex number: `1.5`, `-0.5,2`, `0.3+0.9i` or `-1.5i`.
fn parse_complex(s: &str) -> Result<Complex64, String> {
    if let Some((re, im)) = s.split_once(',') {
        let re = re.trim().parse::<f64>().map_err(|e| format!("{s}: {e}"))?;
        let im = im.trim().parse::<f64>().map_err(|e| format!("{s}: {e}"))?;
        return Ok(Complex64::new(re, im));
    }
    s.trim().parse::<Complex64>().map_err(|_| format!("not a complex number: {s}"))
}

#[derive(Args)]
struct FamilySel {
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Singular value index.
    #[arg(long, default_value_t = 0)]
    sv: usize,
}

#[derive(Args)]
struct JsonOut {
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Built-in families.
    Families {
        #[arg(value_enum)]
        action: FamiliesAction,
    },
    /// Iterate a singular value (or `--z0`) and report its fate.
    Orbit {
        #[command(flatten)]
        sel: FamilySel,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        lambda: Complex64,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        z0: Option<Complex64>,
        #[command(flatten)]
        out: JsonOut,
    },
    /// Passive/active verdict on a parameter disk.
    Classify {
        #[command(flatten)]
        sel: FamilySel,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        lambda0: Complex64,
        #[arg(long)]
        radius: f64,
        #[command(flatten)]
        out: JsonOut,
    },
    /// J-stability probe on a parameter disk.
    Probe {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        lambda0: Complex64,
        #[arg(long)]
        radius: f64,
        #[command(flatten)]
        out: JsonOut,
    },
    /// Solve one orbit relation f^n(v(λ)) = target by Newton in λ.
    Shoot {
        #[command(flatten)]
        sel: FamilySel,
        #[arg(long)]
        n: usize,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        seed: Complex64,
        /// Target a pole (f^n(v) = ∞).
        #[arg(long, conflicts_with_all = ["point", "cycle_period"])]
        pole: bool,
        /// Constant target point.
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        point: Option<Complex64>,
        /// Target the repelling cycle of this period found at the seed.
        #[arg(long)]
        cycle_period: Option<usize>,
        /// Newton seed for the target cycle.
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        cycle_seed: Option<Complex64>,
        #[command(flatten)]
        out: JsonOut,
    },
    /// Misiurewicz relations: find parameters or check one parameter.
    Misiurewicz {
        #[command(flatten)]
        sel: FamilySel,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        lambda0: Complex64,
        #[arg(long, value_enum, default_value = "find")]
        mode: MisiurewiczMode,
        /// Relation depth (find).
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Period of the target repelling cycle (find).
        #[arg(long, default_value_t = 1)]
        period: usize,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        cycle_seed: Option<Complex64>,
        #[arg(long, default_value_t = 0.3)]
        radius: f64,
        /// Orbit points scanned (check).
        #[arg(long, default_value_t = 8)]
        n_max: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        out: JsonOut,
    },
    /// Truncation parameters and attracting cycles near virtual cycles.
    Virtual {
        #[command(flatten)]
        sel: FamilySel,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        lambda0: Complex64,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        depths: Vec<usize>,
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        #[arg(long, default_value_t = 4)]
        k_max: usize,
        #[command(flatten)]
        out: JsonOut,
    },
    /// Continue a repelling cycle (or a backward-orbit tree) along a path.
    Continue {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        lambda0: Complex64,
        #[arg(long, default_value_t = 1)]
        period: usize,
        /// Newton seed for the cycle (or the base point with --depth).
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        seed: Option<Complex64>,
        /// JSON list of waypoints: numbers, [re, im] pairs or {"re", "im"} objects.
        #[arg(long)]
        path: String,
        /// Continue the preimage tree of the base point to this depth.
        #[arg(long)]
        depth: Option<usize>,
        #[command(flatten)]
        out: JsonOut,
    },
    /// Parameter-grid scan with optional pixmap and export.
    Scan {
        #[command(flatten)]
        sel: FamilySel,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true, default_value = "0")]
        center: Complex64,
        #[arg(long, default_value_t = 4.0)]
        width: f64,
        #[arg(long, default_value_t = 4.0)]
        height: f64,
        #[arg(long, default_value_t = 64)]
        nx: usize,
        #[arg(long, default_value_t = 64)]
        ny: usize,
        #[arg(long, value_enum, default_value = "period")]
        task: TaskArg,
        /// Pixmap (P6) output; a sidecar `<out>.json` is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        palette: Option<PaletteArg>,
        /// JSON or CSV export, chosen by extension.
        #[arg(long)]
        export: Option<PathBuf>,
        /// Worker threads (overrides the config; 0 = all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the acceptance suite and print a pass/fail table.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
        /// Print outcomes as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Print the effective configuration.
    Config,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(RunConfig::from_json(&text)?)
        }
    }
}

fn say(text: &str) -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()
}

fn emit(value: &Value, out: &JsonOut) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match &out.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => say(&text)?,
    }
    Ok(())
}

fn parse_path(text: &str) -> anyhow::Result<Vec<Complex64>> {
    let v: Value = serde_json::from_str(text).context("--path must be a JSON list")?;
    let Value::Array(items) = v else { bail!("--path must be a JSON list") };
    items
        .iter()
        .map(|item| {
            let pair = match item {
                Value::Number(n) => (n.as_f64(), Some(0.0)),
                Value::Array(a) if a.len() == 2 => (a[0].as_f64(), a[1].as_f64()),
                Value::Object(o) => (o.get("re").and_then(Value::as_f64), o.get("im").and_then(Value::as_f64)),
                _ => (None, None),
            };
            match pair {
                (Some(re), Some(im)) => Ok(Complex64::new(re, im)),
                _ => bail!("bad waypoint {item}"),
            }
        })
        .collect()
}

/// Repelling cycle of `period` at `λ`: from `seed`, or the first one found
/// on a fixed seed grid.
fn locate_cycle(
    fam: &dyn Family,
    lambda: Complex64,
    period: usize,
    seed: Option<Complex64>,
    cfg: &RunConfig,
) -> anyhow::Result<CycleRecord> {
    let orbit = cfg.orbit();
    let found = match seed {
        Some(s) => find_cycle_newton(fam, lambda, period, SpherePoint::Finite(s), &orbit),
        None => (-8..=8)
            .flat_map(|i| (-8..=8).map(move |j| Complex64::new(0.25 * i as f64 + 0.01, 0.25 * j as f64 + 0.02)))
            .find_map(|s| {
                find_cycle_newton(fam, lambda, period, SpherePoint::Finite(s), &orbit).filter(|c| c.is_repelling())
            }),
    };
    found.with_context(|| format!("no cycle of period {period} found at {lambda}"))
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Families { action: FamiliesAction::List } => {
            for id in BUILTIN_IDS {
                say(&(serde_json::to_string(&summarize(builtin(id)?.as_ref())?)? + "\n"))?;
            }
        }
        Command::Orbit { sel, lambda, z0, out } => {
            let fam = sel.family.load()?;
            let start = match z0 {
                Some(z) => SpherePoint::Finite(z),
                None => bifloc_core::families::singular_value(fam.as_ref(), sel.sv)?.value(lambda),
            };
            let rec = iterate_orbit(fam.as_ref(), lambda, start, &cfg.orbit())?;
            emit(&serde_json::to_value(rec)?, &out)?;
        }
        Command::Classify { sel, lambda0, radius, out } => {
            let fam = sel.family.load()?;
            let v = classify(fam.as_ref(), sel.sv, lambda0, radius, &cfg.classify())?;
            emit(&serde_json::to_value(v)?, &out)?;
        }
        Command::Probe { family, lambda0, radius, out } => {
            let fam = family.load()?;
            let probe = ProbeConfig { step: cfg.step_control(), classify: cfg.classify(), ..ProbeConfig::default() };
            emit(&serde_json::to_value(stability_probe(fam.as_ref(), lambda0, radius, &probe)?)?, &out)?;
        }
        Command::Shoot { sel, n, seed, pole, point, cycle_period, cycle_seed, out } => {
            let fam = sel.family.load()?;
            let target = match (pole, point, cycle_period) {
                (true, _, _) => ShootTarget::Pole,
                (_, Some(p), _) => ShootTarget::Point(SpherePoint::Finite(p)),
                (_, _, Some(period)) => ShootTarget::ContinuedCycle {
                    cycle: locate_cycle(fam.as_ref(), seed, period, cycle_seed, &cfg)?,
                    lambda0: seed,
                    index: 0,
                },
                _ => bail!("one of --pole, --point or --cycle-period is required"),
            };
            let problem = ShootingProblem {
                step: cfg.step_control(),
                ..ShootingProblem::new(fam.as_ref(), sel.sv, n, target, seed)
            };
            let results: Vec<_> = shoot(&problem, DEFAULT_MAX_NEWTON).into_iter().collect();
            emit(&serde_json::to_value(results)?, &out)?;
        }
        Command::Misiurewicz { sel, lambda0, mode, n, period, cycle_seed, radius, n_max, tol, out } => {
            let fam = sel.family.load()?;
            let value = match mode {
                MisiurewiczMode::Check => {
                    serde_json::to_value(misiurewicz_check(fam.as_ref(), sel.sv, lambda0, n_max, tol, &cfg.orbit())?)?
                }
                MisiurewiczMode::Find => {
                    let target = locate_cycle(fam.as_ref(), lambda0, period, cycle_seed, &cfg)?;
                    let found = find_misiurewicz(
                        fam.as_ref(),
                        sel.sv,
                        lambda0,
                        n,
                        &target,
                        radius,
                        &cfg.step_control(),
                        cfg.rng_seed,
                    )?;
                    Value::Array(found.iter().map(|l| json!({ "re": l.re, "im": l.im })).collect())
                }
            };
            emit(&value, &out)?;
        }
        Command::Virtual { sel, lambda0, depths, radius, k_max, out } => {
            let fam = sel.family.load()?;
            let records = find_truncation_parameters(fam.as_ref(), sel.sv, lambda0, &depths, radius, cfg.rng_seed)?;
            let asymptotic = bifloc_core::families::singular_value(fam.as_ref(), sel.sv)?.is_asymptotic();
            let mut rows = Vec::new();
            for rec in records {
                let confirmation = if asymptotic {
                    match verify_attracting_near_virtual(fam.as_ref(), &rec, k_max, &cfg.orbit()) {
                        Ok(entries) => json!({ "entries": entries }),
                        Err(e) => json!({ "error": e.to_string() }),
                    }
                } else {
                    Value::Null
                };
                rows.push(json!({ "virtual_cycle": rec, "confirmation": confirmation }));
            }
            emit(&Value::Array(rows), &out)?;
        }
        Command::Continue { family, lambda0, period, seed, path, depth, out } => {
            let fam = family.load()?;
            let mut waypoints = parse_path(&path)?;
            if waypoints.first() != Some(&lambda0) {
                waypoints.insert(0, lambda0);
            }
            let trace = match depth {
                Some(depth) => {
                    let base = match seed {
                        Some(z) => z,
                        None => locate_cycle(fam.as_ref(), lambda0, period, None, &cfg)?.points[0]
                            .finite()
                            .context("base point at infinity")?,
                    };
                    continue_backward_orbit(
                        fam.as_ref(),
                        lambda0,
                        SpherePoint::Finite(base),
                        depth,
                        &waypoints,
                        &cfg.step_control(),
                        &cfg.orbit(),
                        cfg.branch_bound,
                    )?
                }
                None => {
                    let cycle = locate_cycle(fam.as_ref(), lambda0, period, seed, &cfg)?;
                    continue_cycle(fam.as_ref(), &cycle, &waypoints, &cfg.step_control())?
                }
            };
            emit(&serde_json::to_value(trace)?, &out)?;
        }
        Command::Scan { sel, center, width, height, nx, ny, task, out, palette, export: export_path, threads } => {
            let fam = sel.family.load()?;
            let task = match task {
                TaskArg::Fate => ScanTask::FateMap,
                TaskArg::Period => ScanTask::PeriodMap,
                TaskArg::Multiplier => ScanTask::MultiplierMap,
                TaskArg::Activity => ScanTask::ActivityMap,
            };
            let spec = GridSpec { orbit: cfg.orbit(), ..GridSpec::new(center, width, height, nx, ny, task) };
            let result = scan_grid_threads(fam.as_ref(), sel.sv, &spec, threads.unwrap_or(cfg.threads))?;
            if let Some(p) = &out {
                let palette = match palette {
                    Some(PaletteArg::Period) => Palette::Period,
                    Some(PaletteArg::Fate) => Palette::Fate,
                    Some(PaletteArg::LogMultiplier) => Palette::LogMultiplier,
                    Some(PaletteArg::Activity) => Palette::Activity,
                    None => match task {
                        ScanTask::FateMap => Palette::Fate,
                        ScanTask::PeriodMap => Palette::Period,
                        ScanTask::MultiplierMap => Palette::LogMultiplier,
                        ScanTask::ActivityMap => Palette::Activity,
                    },
                };
                render(&result, palette, p)?;
            }
            if let Some(p) = &export_path {
                export(&result, ExportFormat::from_path(p), p)?;
            }
            let mut summary = json!({
                "metadata": result.metadata,
                "cells": result.cells.len(),
                "pixmap": out.as_ref().map(|p| p.display().to_string()),
                "export": export_path.as_ref().map(|p| p.display().to_string()),
            });
            if task == ScanTask::PeriodMap {
                summary["period_report"] = serde_json::to_value(period_report(&result)?)?;
            }
            say(&(serde_json::to_string_pretty(&summary)? + "\n"))?;
        }
        Command::Verify { suite, json } => {
            let suite = match suite {
                SuiteArg::Quadratic => Suite::Quadratic,
                SuiteArg::Tangent => Suite::Tangent,
                SuiteArg::All => Suite::All,
            };
            let outcomes = run_suite(suite, &cfg);
            if json {
                say(&(serde_json::to_string_pretty(&outcomes)? + "\n"))?;
            } else {
                let color = std::env::var_os("NO_COLOR").is_none() && std::io::stdout().is_terminal();
                say(&render_table(&outcomes, color))?;
            }
            if !outcomes.iter().all(|o| o.passed()) {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Config => say(&(cfg.to_json() + "\n"))?,
    }
    Ok(ExitCode::SUCCESS)
}

/// Error chain joined by `: `, skipping links already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for link in e.chain() {
        let text = link.to_string();
        if msg.ends_with(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let broken_pipe = e
                .downcast_ref::<std::io::Error>()
                .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe);
            if broken_pipe {
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}
