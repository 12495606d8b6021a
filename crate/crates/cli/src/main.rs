use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use lrformer_bench as bench;
use lrformer_core::model::{count_parameters, load_checkpoint, save_checkpoint};
use lrformer_core::pipeline::ablate::{ablate_components, ablate_samples, write_ablation};
use lrformer_core::pipeline::evaluate::{evaluate, fmt_db};
use lrformer_core::pipeline::train::{train, write_curve};
use lrformer_core::pipeline::Dataset;
use lrformer_core::{Error, Result};

mod config;

use config::{read_file, RunConfig, KEYS};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_MISSING_INPUT: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_IO: u8 = 5;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Sizing(_) | Error::Dimension(_) => EXIT_CONFIG,
        Error::MissingInput(_) | Error::Format(_) => EXIT_MISSING_INPUT,
        Error::Numeric(_) | Error::Capacity(_) => EXIT_NUMERIC,
        Error::Io(_) => EXIT_IO,
    }
}

fn category(e: &Error) -> &'static str {
    match exit_code(e) {
        EXIT_CONFIG => "config error",
        EXIT_MISSING_INPUT => "missing input",
        EXIT_NUMERIC => "numeric failure",
        _ => "io error",
    }
}

fn flag_name(key: &str) -> &'static str {
    Box::leak(key.replace('_', "-").into_boxed_str())
}

fn cli() -> Command {
    let mut root = Command::new("lrformer")
        .about("Prior-guided frequency-attention restoration on synthetic medical phantoms")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .after_help(
            "Settings resolve as: built-in defaults, then --config file (key=value lines), \
             then flags. Exit codes: 2 config error, 3 missing input, 4 numeric failure, 5 io error.",
        )
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .global(true)
                .help("key=value configuration file; unknown keys are rejected"),
        )
        .arg(
            Arg::new("paper_exact")
                .long("paper-exact")
                .action(ArgAction::SetTrue)
                .global(true)
                .help("Attention without temperature (softmax_scale=unit)"),
        )
        .arg(
            Arg::new("full_scale")
                .long("full-scale")
                .action(ArgAction::SetTrue)
                .global(true)
                .help("Full-size network: groups=6 blocks=6 channels=180 patch=128 side=256"),
        );
    for k in KEYS {
        let help = if k.default.is_empty() {
            k.help.to_string()
        } else {
            format!("{} [default: {}]", k.help, k.default)
        };
        root = root.arg(
            Arg::new(k.name)
                .long(flag_name(k.name))
                .value_name("VALUE")
                .global(true)
                .help(help),
        );
    }
    root.subcommand(
        Command::new("synth").about("Generate phantoms, degrade them and write the dataset"),
    )
    .subcommand(
        Command::new("prior")
            .about("Produce and cache the reliability prior of every degraded image"),
    )
    .subcommand(Command::new("train").about("Train a model; writes checkpoint.lrt and loss.csv"))
    .subcommand(Command::new("eval").about("Score a checkpoint on the test split; writes eval.csv"))
    .subcommand(
        Command::new("ablate")
            .about("Component ablation and prior-sample sweep; writes ablation CSVs"),
    )
    .subcommand(
        Command::new("bench").about("Attention cost curve, optionally timed; writes bench.csv"),
    )
}

fn resolve(m: &ArgMatches) -> Result<RunConfig> {
    let mut layers = Vec::new();
    if let Some(path) = m.get_one::<String>("config") {
        layers.push(read_file(Path::new(path))?);
    }
    let mut flags = BTreeMap::new();
    if m.get_flag("full_scale") {
        for (k, v) in [
            ("groups", "6"),
            ("blocks", "6"),
            ("channels", "180"),
            ("patch", "128"),
            ("side", "256"),
        ] {
            flags.insert(k.to_string(), v.to_string());
        }
    }
    if m.get_flag("paper_exact") {
        flags.insert("softmax_scale".into(), "unit".into());
    }
    for k in KEYS {
        if let Some(v) = m.get_one::<String>(k.name) {
            flags.insert(k.name.to_string(), v.clone());
        }
    }
    layers.push(flags);
    RunConfig::resolve(&layers)
}

fn write_meta(cfg: &RunConfig, command: &str, extra: &[(String, String)]) -> Result<()> {
    let dir = cfg.run_dir.join("run-meta");
    fs::create_dir_all(&dir)?;
    let mut s = format!(
        "command={command}\nversion={}\nseed={}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.seed
    );
    for (k, v) in extra {
        s.push_str(&format!("{k}={v}\n"));
    }
    s.push_str("[config]\n");
    s.push_str(&cfg.snapshot());
    fs::write(dir.join(format!("{command}.txt")), s)?;
    Ok(())
}

fn load_with_priors(cfg: &RunConfig) -> Result<Dataset> {
    let root = cfg.data_dir();
    let mut data = Dataset::load(&root)?;
    data.load_priors(&root)?;
    Ok(data)
}

fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let data = Dataset::synthesize(&cfg.synth)?;
    data.write(&cfg.data_dir())?;
    write_meta(cfg, "synth", &[])?;
    println!(
        "synth: {} images ({} train, {} test), degradation {} -> {}",
        data.samples.len(),
        cfg.synth.train_count,
        cfg.synth.test_count,
        data.spec_id(),
        cfg.data_dir().display()
    );
    Ok(())
}

fn cmd_prior(cfg: &RunConfig) -> Result<()> {
    let root = cfg.data_dir();
    let mut data = Dataset::load(&root)?;
    data.compute_priors(&cfg.prior)?;
    let n = data.write_priors(&root, &cfg.prior)?;
    write_meta(cfg, "prior", &[])?;
    println!(
        "prior: {n} maps (T={}, alpha={}, beta={}) -> {}",
        cfg.prior.samples,
        cfg.prior.alpha,
        cfg.prior.beta,
        Dataset::prior_dir(&root, &data.degradation).display()
    );
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let data = load_with_priors(cfg)?;
    let outcome = train(&cfg.model, &cfg.train, &data)?;
    let ckpt = cfg.run_dir.join("checkpoint.lrt");
    save_checkpoint(&ckpt, &cfg.model, &outcome.params)?;
    write_curve(&cfg.run_dir.join("loss.csv"), &outcome.curve)?;
    write_meta(
        cfg,
        "train",
        &[(
            "parameters".into(),
            count_parameters(&outcome.params).to_string(),
        )],
    )?;
    let last = outcome.curve.last().map(|p| p.loss).unwrap_or(f64::NAN);
    println!(
        "train: {} steps, {} parameters, final loss {last:.6} -> {}",
        cfg.train.steps,
        count_parameters(&outcome.params),
        ckpt.display()
    );
    Ok(())
}

fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let (model, params) = load_checkpoint(&cfg.checkpoint)?;
    let data = load_with_priors(cfg)?;
    if data.degradation.task() != model.task {
        return Err(Error::Usage(format!(
            "checkpoint is for task '{}', dataset needs '{}'",
            model.task,
            data.degradation.task()
        )));
    }
    let report = evaluate(&params, &model, &data, cfg.train.patch)?;
    let out = cfg.run_dir.join("eval.csv");
    report.write_csv(&out)?;
    write_meta(
        cfg,
        "eval",
        &[("checkpoint".into(), cfg.checkpoint.display().to_string())],
    )?;
    println!(
        "eval: PSNR {} dB (input {}), SSIM {:.4} (input {:.4}) -> {}",
        fmt_db(report.psnr_db),
        fmt_db(report.input_psnr_db),
        report.ssim,
        report.input_ssim,
        out.display()
    );
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig) -> Result<()> {
    let data = Dataset::load(&cfg.data_dir())?;
    let mut written: Vec<PathBuf> = Vec::new();
    if cfg.ablate_components {
        let rows = ablate_components(
            &cfg.model,
            &cfg.train,
            &data,
            &cfg.prior,
            &cfg.ablate_variants,
        )?;
        let p = cfg.run_dir.join("ablation_components.csv");
        write_ablation(&p, &rows)?;
        written.push(p);
    }
    if cfg.ablate_samples {
        let rows = ablate_samples(&cfg.model, &cfg.train, &data, &cfg.prior, &cfg.ablate_sweep)?;
        let p = cfg.run_dir.join("ablation_samples.csv");
        write_ablation(&p, &rows)?;
        written.push(p);
    }
    write_meta(cfg, "ablate", &[])?;
    for p in written {
        println!("ablate: wrote {}", p.display());
    }
    Ok(())
}

fn cmd_bench(cfg: &RunConfig) -> Result<()> {
    let out = cfg.run_dir.join("bench.csv");
    let reports = if cfg.bench_measure {
        let r = cfg
            .bench_grid
            .iter()
            .map(|&n| bench::measure(n, cfg.bench_channels, cfg.bench_repeats, cfg.seed))
            .collect::<Result<Vec<_>>>()?;
        bench::write_csv(&r, &out)?;
        r
    } else {
        bench::emit_curve(&cfg.bench_grid, &out)?
    };
    let env: Vec<(String, String)> = bench::environment()
        .into_iter()
        .map(|(k, v)| (format!("env.{k}"), v))
        .collect();
    write_meta(cfg, "bench", &env)?;
    let crossover = reports.iter().find(|r| r.deviation > 0.0).map(|r| r.n);
    println!(
        "bench: {} rows, first positive deviation at n={} -> {}",
        reports.len(),
        crossover
            .map(|n| n.to_string())
            .unwrap_or_else(|| "none".into()),
        out.display()
    );
    Ok(())
}

fn run(m: &ArgMatches) -> Result<()> {
    let (name, sub) = m.subcommand().expect("subcommand is required");
    let cfg = resolve(sub)?;
    match name {
        "synth" => cmd_synth(&cfg),
        "prior" => cmd_prior(&cfg),
        "train" => cmd_train(&cfg),
        "eval" => cmd_eval(&cfg),
        "ablate" => cmd_ablate(&cfg),
        "bench" => cmd_bench(&cfg),
        _ => unreachable!("unknown subcommand {name}"),
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lrformer: {}: {e}", category(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
