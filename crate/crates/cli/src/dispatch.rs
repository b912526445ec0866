//! Command dispatch and output files.
//!
//! Layout of an output directory:
//!
//! - `config.toml`: the effective config (after `--seed`), reparseable.
//! - `validate.json`, `certificate.json`.
//! - `<experiment>.json`: the report, listing its side files.
//! - `<experiment>.csv` and, for decay-type series, `<experiment>.svg`.
//! - `summary.json` for `all`.
//!
//! Every JSON file carries `config_echo` and `seed`; CSV and SVG files
//! carry both in a header comment.

use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use amz_core::certificate::{check_certificate, find_certificate};
use amz_core::experiments::{run_named, ExperimentReport, EXPERIMENT_NAMES};
use amz_core::ifs::AssumptionReport;
use clap::ValueEnum;
use serde_json::json;

use crate::config::{parse_config, to_toml, ConfigError, RunConfig};
use crate::plot::{emit_plot, PlotSpec};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Default output directory when neither `--out` nor `output_dir` is set.
pub const OUT_DIR_ENV: &str = "AMZ_OUT_DIR";
pub const FALLBACK_OUT_DIR: &str = "amz-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Validate,
    Certificate,
    Stationary,
    Stability,
    Slln,
    Prop1,
    Prop2,
    Escape,
    Reach,
    Equicontinuity,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Certificate => "certificate",
            Command::Stationary => "stationary",
            Command::Stability => "stability",
            Command::Slln => "slln",
            Command::Prop1 => "prop1",
            Command::Prop2 => "prop2",
            Command::Escape => "escape",
            Command::Reach => "reach",
            Command::Equicontinuity => "equicontinuity",
            Command::All => "all",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("cannot read {path}: {source}")]
    ReadConfig { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Plot(#[from] crate::plot::PlotError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::ReadConfig { .. } | RunError::Config(_) => EXIT_CONFIG,
            RunError::Io(_) | RunError::Plot(_) => EXIT_FAIL,
        }
    }
}

/// Output directory: `--out`, then the config's `output_dir`, then
/// `$AMZ_OUT_DIR`, then `./amz-out`.
pub fn resolve_out_dir(cli: Option<&Path>, cfg: &RunConfig, env: Option<&str>) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| env.filter(|e| !e.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
}

/// Load the config at `path`, apply overrides and run `command`.
pub fn run(command: Command, path: &Path, out: Option<&Path>, seed: Option<u64>) -> i32 {
    let result = fs::read_to_string(path)
        .map_err(|source| RunError::ReadConfig {
            path: path.to_path_buf(),
            source,
        })
        .and_then(|text| Ok(parse_config(&text)?))
        .and_then(|mut cfg| {
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let env = std::env::var(OUT_DIR_ENV).ok();
            let dir = resolve_out_dir(out, &cfg, env.as_deref());
            dispatch(&cfg, command, &dir)
        });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("amz: {e}");
            e.exit_code()
        }
    }
}

/// Run `command` on a validated config, writing into `out_dir`. Returns
/// the exit code.
pub fn dispatch(cfg: &RunConfig, command: Command, out_dir: &Path) -> Result<i32, RunError> {
    crate::config::validate(cfg)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.toml"), to_toml(cfg))?;
    let echo = serde_json::to_value(cfg).expect("configs serialize");
    let names: Vec<&str> = match command {
        Command::Validate => return write_validate(cfg, &echo, out_dir).map(|_| EXIT_PASS),
        Command::Certificate => {
            return write_certificate(cfg, &echo, out_dir).map(|ok| if ok { EXIT_PASS } else { EXIT_FAIL })
        }
        Command::All => EXPERIMENT_NAMES.to_vec(),
        single => vec![single.name()],
    };

    let mut results = Vec::new();
    let mut worst = EXIT_PASS;
    if command == Command::All {
        write_validate(cfg, &echo, out_dir)?;
        let ok = write_certificate(cfg, &echo, out_dir)?;
        println!("{:<16}{}", "certificate", if ok { "PASS" } else { "FAIL" });
        results.push(json!({ "name": "certificate", "passed": ok }));
        if !ok {
            worst = EXIT_FAIL;
        }
    }
    let setup = cfg.setup();
    for name in names {
        let started = Instant::now();
        match run_named(name, &setup, &cfg.experiments) {
            Ok(mut report) => {
                write_report(&mut report, out_dir)?;
                println!(
                    "{name:<16}{}  ({:.2} s)",
                    if report.passed { "PASS" } else { "FAIL" },
                    started.elapsed().as_secs_f64()
                );
                results.push(json!({ "name": name, "passed": report.passed }));
                if !report.passed {
                    worst = worst.max(EXIT_FAIL);
                }
            }
            Err(e) => {
                eprintln!("amz: {name}: {e}");
                println!("{name:<16}ERROR");
                results.push(json!({ "name": name, "passed": false, "error": e.to_string() }));
                let code = match e {
                    amz_core::Error::Parameter(_) | amz_core::Error::Domain { .. } | amz_core::Error::GridSize { .. } => {
                        EXIT_CONFIG
                    }
                    _ => EXIT_FAIL,
                };
                worst = worst.max(code);
            }
        }
    }
    if command == Command::All {
        write_json(
            &out_dir.join("summary.json"),
            &json!({
                "command": "all",
                "passed": worst == EXIT_PASS,
                "results": results,
                "config_echo": echo,
                "seed": cfg.seed,
            }),
        )?;
    }
    Ok(worst)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    fs::write(path, text)
}

fn write_validate(cfg: &RunConfig, echo: &serde_json::Value, out_dir: &Path) -> Result<(), RunError> {
    let assumptions = AssumptionReport::evaluate(cfg.system.x0, cfg.system.y0, &cfg.p0);
    write_json(
        &out_dir.join("validate.json"),
        &json!({
            "passed": assumptions.all_ok(),
            "assumptions": assumptions,
            "field": cfg.p0.validate(),
            "config_echo": echo,
            "seed": cfg.seed,
        }),
    )?;
    Ok(())
}

/// Writes the certificate as a flat object with its checks, or the reason
/// none was found. Returns whether a checked certificate exists.
fn write_certificate(cfg: &RunConfig, echo: &serde_json::Value, out_dir: &Path) -> Result<bool, RunError> {
    let setup = cfg.setup();
    let (value, ok) = match find_certificate(&setup.params, &setup.field) {
        Ok(cert) => {
            let report = check_certificate(&cert, &setup.params, &setup.field);
            let mut v = serde_json::to_value(cert).expect("certificates serialize");
            v["passed"] = json!(report.passed());
            v["checks"] = serde_json::to_value(&report.checks).expect("checks serialize");
            (v, report.passed())
        }
        Err(e) => (json!({ "passed": false, "error": e.to_string() }), false),
    };
    let mut value = value;
    value["config_echo"] = echo.clone();
    value["seed"] = json!(cfg.seed);
    write_json(&out_dir.join("certificate.json"), &value)?;
    Ok(ok)
}

/// How each experiment's series is plotted, if at all.
fn plot_spec(name: &str) -> Option<PlotSpec> {
    let spec = |title: &str, x: &str, y: &str, log_y: bool, ys: Vec<usize>| PlotSpec {
        title: title.into(),
        x_label: x.into(),
        y_label: y.into(),
        log_y,
        x_column: 0,
        y_columns: ys,
    };
    match name {
        "stability" => Some(spec("Distance between P^n ν1 and P^n ν2", "n", "distance", true, vec![1, 2])),
        "prop2" => Some(spec("Coupled deviation", "n", "|X^x_n - X^y_n|", true, vec![1, 2])),
        "equicontinuity" => Some(spec("Modulus of U^n φ near c", "n", "modulus", true, vec![1, 2, 3])),
        "stationary" => Some(spec("Grid fixed point", "x", "bin mass", false, vec![2])),
        _ => None,
    }
}

fn write_report(report: &mut ExperimentReport, out_dir: &Path) -> Result<(), RunError> {
    let comment = format!(
        "seed = {}\nconfig_echo = {}",
        report.seed,
        serde_json::to_string(&report.config_echo).expect("echo serializes")
    );
    for series in &report.series {
        let stem = if series.name == report.name {
            series.name.clone()
        } else {
            format!("{}_{}", report.name, series.name)
        };
        let csv = out_dir.join(format!("{stem}.csv"));
        series.write_csv(BufWriter::new(fs::File::create(&csv)?), Some(&comment))?;
        report.files.push(format!("{stem}.csv"));
        if let Some(mut spec) = plot_spec(&report.name) {
            spec.y_columns.retain(|&c| c < series.columns.len());
            spec.log_y &= series.log_y;
            let svg = out_dir.join(format!("{stem}.svg"));
            emit_plot(&csv, &svg, &spec)?;
            report.files.push(format!("{stem}.svg"));
        }
    }
    write_json(&out_dir.join(format!("{}.json", report.name)), report)?;
    Ok(())
}
