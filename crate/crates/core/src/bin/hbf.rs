use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hbf_core::channel::write_channel_dump;
use hbf_core::complexity::{complexity_estimate, reference_inputs, ComplexityInputs};
use hbf_core::experiment::{emit, run_experiment, ExperimentSpec};
use hbf_core::selftest::run_selftest;
use hbf_core::{generate_channel, AlgorithmVariant, HbfError};

#[derive(Parser)]
#[command(
    name = "hbf",
    version,
    about = "Hybrid beamforming design and experiment harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep described by a TOML spec (or a JSON manifest).
    Run {
        spec: PathBuf,
        /// Field overrides as `--section.key value` pairs.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Write channel realizations in the binary dump format.
    ChannelDump {
        /// Optional spec supplying the geometry and base seed.
        spec: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Complex-multiplication estimate of the analog solvers.
    Complexity {
        #[arg(long)]
        variant: Option<AlgorithmVariant>,
        #[arg(long)]
        n_ant: Option<usize>,
        #[arg(long)]
        n_rf: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        n_in: Option<f64>,
        #[arg(long)]
        n_out: Option<f64>,
        #[arg(long)]
        n_g: Option<f64>,
    },
    /// Run the built-in consistency checks.
    Selftest,
}

/// Family, bit count, display name and SNR in millidecibels.
type GroupKey = (usize, Option<u32>, String, i64);

fn exit_code(err: &HbfError) -> u8 {
    match err {
        HbfError::Io { .. } => 2,
        e if e.is_invariant_abort() => 3,
        _ => 1,
    }
}

fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, HbfError> {
    let mut out = Vec::new();
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let Some(key) = arg.strip_prefix("--") else {
            return Err(HbfError::InvalidConfig(format!(
                "expected --key, found {arg:?}"
            )));
        };
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
        } else {
            let value = iter
                .next()
                .ok_or_else(|| HbfError::InvalidConfig(format!("missing value for --{key}")))?;
            out.push((key.to_string(), value.clone()));
        }
    }
    Ok(out)
}

fn load_spec(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<ExperimentSpec, HbfError> {
    match path {
        Some(p) => ExperimentSpec::load(p, overrides),
        None => default_with_overrides(overrides),
    }
}

fn default_with_overrides(overrides: &[(String, String)]) -> Result<ExperimentSpec, HbfError> {
    let mut value = serde_json::to_value(ExperimentSpec::default())
        .map_err(|e| HbfError::InvalidConfig(e.to_string()))?;
    for (k, v) in overrides {
        hbf_core::experiment::apply_override(&mut value, k, v)?;
    }
    let spec: ExperimentSpec =
        serde_json::from_value(value).map_err(|e| HbfError::InvalidConfig(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

fn run(spec_path: &Path, raw: &[String]) -> Result<u8, HbfError> {
    let overrides = parse_overrides(raw)?;
    let spec = ExperimentSpec::load(spec_path, &overrides)?;
    let output = run_experiment(&spec)?;
    emit(&output, &spec)?;

    let mut means: BTreeMap<GroupKey, (f64, usize)> = BTreeMap::new();
    for r in output.rows.iter().filter(|r| r.rate.is_finite()) {
        let key = (
            r.variant.family_index(),
            r.variant.bits(),
            r.variant.to_string(),
            (r.snr_db * 1000.0).round() as i64,
        );
        let e = means.entry(key).or_insert((0.0, 0));
        e.0 += r.rate;
        e.1 += 1;
    }
    for ((_, _, name, snr), (sum, n)) in &means {
        println!(
            "{name:<16} snr {:>7.2} dB  mean rate {:.4} ({n} runs)",
            *snr as f64 / 1000.0,
            sum / *n as f64
        );
    }
    println!(
        "wrote {} rows to {}",
        output.rows.len(),
        spec.output.results_csv.display()
    );

    let aborted = output.aborted_rows();
    if aborted > 0 {
        eprintln!("{aborted} run(s) aborted on an invariant check");
        return Ok(3);
    }
    Ok(0)
}

fn channel_dump(
    spec: Option<&Path>,
    out_dir: &Path,
    count: u64,
    set: &[String],
) -> Result<u8, HbfError> {
    let overrides = set
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| HbfError::InvalidConfig(format!("expected KEY=VALUE, found {s:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let spec = load_spec(spec, &overrides)?;
    let config = spec.base_config();
    fs::create_dir_all(out_dir).map_err(|e| HbfError::io(out_dir, e))?;
    for i in 0..count {
        let seed = config.seed + i;
        let channel = generate_channel(&config, seed)?;
        let path = out_dir.join(format!("channel_{seed}.bin"));
        write_channel_dump(&path, &channel)?;
        println!("{}", path.display());
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn complexity(
    variant: Option<AlgorithmVariant>,
    n_ant: Option<usize>,
    n_rf: Option<usize>,
    k: Option<usize>,
    n_in: Option<f64>,
    n_out: Option<f64>,
    n_g: Option<f64>,
) -> Result<u8, HbfError> {
    let variants = match variant {
        Some(v) => vec![v],
        None => vec![
            AlgorithmVariant::WmmseEi,
            AlgorithmVariant::WmmseMo,
            AlgorithmVariant::MmseEi,
        ],
    };
    for v in variants {
        let r = reference_inputs(v);
        let inputs = ComplexityInputs {
            n_ant: n_ant.unwrap_or(r.n_ant),
            n_rf: n_rf.unwrap_or(r.n_rf),
            n_subcarriers: k.unwrap_or(r.n_subcarriers),
            n_in: n_in.unwrap_or(r.n_in),
            n_out: n_out.unwrap_or(r.n_out),
            n_g: n_g.unwrap_or(r.n_g),
        };
        if inputs.n_ant == 0
            || inputs.n_rf == 0
            || inputs.n_subcarriers == 0
            || inputs.n_in <= 0.0
            || inputs.n_out <= 0.0
        {
            return Err(HbfError::InvalidConfig(
                "complexity inputs must be positive".into(),
            ));
        }
        println!(
            "{:<16} {:.4e}",
            v.to_string(),
            complexity_estimate(&inputs, v)
        );
    }
    Ok(0)
}

fn selftest() -> u8 {
    let results = run_selftest();
    let mut failures = 0;
    for r in &results {
        println!(
            "{} {:<28} {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
        if !r.passed {
            failures += 1;
        }
    }
    if failures > 0 {
        3
    } else {
        0
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run { spec, overrides } => run(spec, overrides),
        Command::ChannelDump {
            spec,
            out_dir,
            count,
            set,
        } => channel_dump(spec.as_deref(), out_dir, *count, set),
        Command::Complexity {
            variant,
            n_ant,
            n_rf,
            k,
            n_in,
            n_out,
            n_g,
        } => complexity(*variant, *n_ant, *n_rf, *k, *n_in, *n_out, *n_g),
        Command::Selftest => Ok(selftest()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
