//! Command-line front end: loads a model file, runs a pricing, boundary,
//! decomposition, or validation job, and writes the report to a file or
//! stdout.
//!
//! Exit codes: 0 success, 1 input error, 2 validation failures (the report
//! is still written).

mod report;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use margex::{MCConfig, QuadratureSpec, TwoAssetModel};

use report::{fmt17, InputsEcho};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    PriceEuropean,
    PriceAmerican,
    Boundary,
    Decompose,
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Exchange-option pricer on two jointly jumping assets.
#[derive(Debug, Parser)]
#[command(name = "margex", version)]
struct Cli {
    /// Model file (JSON).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    command: Command,
    /// Spot of the delivered asset.
    #[arg(long)]
    s1: Option<f64>,
    /// Spot of the numeraire asset.
    #[arg(long)]
    s2: Option<f64>,
    /// Valuation time.
    #[arg(long)]
    t: Option<f64>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo path count.
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    /// Monte Carlo time steps.
    #[arg(long, default_value_t = 64)]
    steps: usize,
    /// Boundary grid points.
    #[arg(long, default_value_t = 64)]
    grid: usize,
}

fn input_err(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn load_model(cli: &Cli) -> Result<TwoAssetModel, String> {
    let path = cli
        .model
        .as_ref()
        .ok_or("--model is required for this command")?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let model: TwoAssetModel = serde_json::from_str(&text)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    model.validate().map_err(|e| format!("invalid model: {e}"))?;
    Ok(model)
}

fn market(cli: &Cli) -> Result<(f64, f64, f64), String> {
    match (cli.s1, cli.s2, cli.t) {
        (Some(s1), Some(s2), Some(t)) => Ok((s1, s2, t)),
        _ => Err("--s1, --s2 and --t are required for this command".into()),
    }
}

fn emit(cli: &Cli, body: &str) -> Result<(), String> {
    match &cli.out {
        Some(path) => std::fs::write(path, body)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            use std::io::Write;
            // tolerate a closed pipe (e.g. piping into head)
            let _ = writeln!(std::io::stdout(), "{body}");
            Ok(())
        }
    }
}

fn inputs_echo(cli: &Cli, model: &TwoAssetModel, s1: f64, s2: f64, t: f64) -> InputsEcho {
    InputsEcho {
        model: model.clone(),
        s1,
        s2,
        t,
        seed: cli.seed,
        paths: cli.paths,
        steps: cli.steps,
        grid: cli.grid,
    }
}

fn mc_config(cli: &Cli) -> MCConfig {
    MCConfig {
        n_paths: cli.paths,
        n_steps: cli.steps,
        seed: cli.seed,
        ..MCConfig::default()
    }
}

fn run(cli: &Cli) -> Result<u8, String> {
    let quad = QuadratureSpec::default();
    match cli.command {
        Command::PriceEuropean => {
            let model = load_model(cli)?;
            let (s1, s2, t) = market(cli)?;
            let inputs = inputs_echo(cli, &model, s1, s2, t);
            let rep = report::price_european(&model, s1, s2, t, &quad, inputs)
                .map_err(|e| e.to_string())?;
            emit(cli, &render(cli.format, &rep)?)?;
            Ok(0)
        }
        Command::PriceAmerican => {
            let model = load_model(cli)?;
            let (s1, s2, t) = market(cli)?;
            let inputs = inputs_echo(cli, &model, s1, s2, t);
            let rep = report::price_american(&model, s1, s2, t, &quad, inputs)
                .map_err(|e| e.to_string())?;
            emit(cli, &render(cli.format, &rep)?)?;
            Ok(0)
        }
        Command::Decompose => {
            let model = load_model(cli)?;
            let (s1, s2, t) = market(cli)?;
            let inputs = inputs_echo(cli, &model, s1, s2, t);
            let rep = report::decompose(&model, s1, s2, t, &mc_config(cli), &quad, inputs)
                .map_err(|e| e.to_string())?;
            emit(cli, &render(cli.format, &rep)?)?;
            Ok(0)
        }
        Command::Boundary => {
            let model = load_model(cli)?;
            let curve = margex::build_boundary_curve(&model, cli.grid, &quad)
                .map_err(|e| e.to_string())?;
            let body = match cli.format {
                Format::Csv => curve.to_csv(),
                Format::Json => serde_json::to_string_pretty(&curve)
                    .map_err(|e| e.to_string())?,
            };
            emit(cli, &body)?;
            Ok(0)
        }
        Command::Validate => {
            let suite = validate::run_suite(cli.seed);
            let body = match cli.format {
                Format::Csv => validate::to_csv(&suite),
                Format::Json => serde_json::to_string_pretty(&suite)
                    .map_err(|e| e.to_string())?,
            };
            emit(cli, &body)?;
            let failed = suite.checks.iter().filter(|c| !c.pass).count();
            if failed > 0 {
                eprintln!("{failed} validation check(s) failed");
                Ok(2)
            } else {
                Ok(0)
            }
        }
    }
}

fn render<T: serde::Serialize>(format: Format, rep: &T) -> Result<String, String> {
    match format {
        Format::Json => serde_json::to_string_pretty(rep).map_err(|e| e.to_string()),
        Format::Csv => {
            // flatten the report to key,value rows with lossless floats
            let value = serde_json::to_value(rep).map_err(|e| e.to_string())?;
            let mut rows = String::from("key,value\n");
            flatten("", &value, &mut rows);
            Ok(rows)
        }
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut String) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, val) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, val, out);
            }
        }
        serde_json::Value::Array(items) => {
            for (i, val) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), val, out);
            }
        }
        serde_json::Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                out.push_str(&format!("{prefix},{}\n", fmt17(f)));
            } else {
                out.push_str(&format!("{prefix},{n}\n"));
            }
        }
        other => out.push_str(&format!("{prefix},{other}\n")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => input_err(msg),
    }
}
