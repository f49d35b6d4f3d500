use std::path::{Path, PathBuf};

use cbc_core::compress::{compress_model, CompressedModel, CompressionMethod, InitScheme};
use cbc_core::eval::{merge_metrics, metrics_csv, parse_metrics_csv, run_benchmark, Candidate, METRICS_CSV_HEADER};
use cbc_core::io::config::Config;
use cbc_core::io::Artifact;
use cbc_core::model::{build_slice_kernels, lipschitz, LinearOperator, SliceConvModel};
use cbc_core::parallel::Parallelism;
use cbc_core::solver::{
    build_network, ista_solve, default_lambda, Arch, NetworkInit, NetworkSource, NetworkSpec, Trainability,
    UnrolledNet,
};
use cbc_core::train::{
    ablation_summary_csv, calibrate_lambda, run_ablation, synthesize_indexed, train_network, validation_set, Snr,
};
use cbc_core::Error;

use crate::manifest::{with_out, RunManifest};
use crate::{Cli, Command};
use clap::Parser;

pub const DENSE_CAP_ENV: &str = "CBC_DENSE_CAP_BYTES";

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::Format(_) => 2,
            Error::Numerical(_) => 3,
            _ => 1,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError {
        code: 1,
        message: msg.into(),
    }
}

/// Load `path` or fall back to defaults.
fn load_config(path: Option<&Path>) -> CliResult<Config> {
    let mut cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Ok(v) = std::env::var(DENSE_CAP_ENV) {
        cfg.dense_cap_bytes = v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{DENSE_CAP_ENV} must be a byte count, got '{v}'")))?;
    }
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn load_model(path: &Path, m: &mut RunManifest) -> CliResult<SliceConvModel> {
    m.input(path);
    match Artifact::load(path)? {
        Artifact::Model(model) => Ok(model),
        other => Err(Error::Format(format!(
            "{}: expected a model artifact, found '{}'",
            path.display(),
            other.kind()
        ))
        .into()),
    }
}

fn save(a: &Artifact, path: PathBuf, m: &mut RunManifest) -> CliResult<()> {
    a.save(&path)?;
    m.output(&path);
    Ok(())
}

fn write_text(text: &str, path: PathBuf, m: &mut RunManifest) -> CliResult<()> {
    std::fs::write(&path, text)?;
    m.output(&path);
    Ok(())
}

fn write_json(v: &serde_json::Value, path: PathBuf, m: &mut RunManifest) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    write_text(&text, path, m)
}

fn json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn parse_snr(s: &str) -> CliResult<Snr> {
    s.parse::<Snr>().map_err(CliError::from)
}

pub fn run(cmd: Command, argv: &[String]) -> CliResult<()> {
    let mode = Parallelism::default();
    match cmd {
        Command::Build { config, out } => {
            let mut m = RunManifest::new("build", argv);
            let cfg = load_config(Some(&config))?;
            m.input(&config);
            prepare_out(&out)?;
            let model = build_slice_kernels(&cfg.setup)?;
            save(&Artifact::Model(model), out.join("model.cbc"), &mut m)?;
            m.config = json(&cfg);
            m.write(&out)?;
        }
        Command::Compress {
            model,
            method,
            scheme,
            basis,
            tol,
            seed,
            out,
        } => {
            let mut m = RunManifest::new("compress", argv);
            let model = load_model(&model, &mut m)?;
            let method = CompressionMethod::parse(&method, scheme.as_deref())?;
            prepare_out(&out)?;
            let c = compress_model(&model, method, basis, tol, seed)?;
            let report = serde_json::json!({
                "method": method.to_string(),
                "basis": basis,
                "tol": tol,
                "parameters": json(&c.parameter_counts()),
                "slices": json(&c.reports),
            });
            save(&Artifact::Compressed(c), out.join("compressed.cbc"), &mut m)?;
            write_json(&report, out.join("compress_report.json"), &mut m)?;
            m.config = serde_json::json!({"method": method.to_string(), "basis": basis, "tol": tol});
            m.seeds = serde_json::json!({ "compress": seed });
            m.write(&out)?;
        }
        Command::Simulate {
            model,
            snr,
            seed,
            index,
            config,
            out,
        } => {
            let mut m = RunManifest::new("simulate", argv);
            let model = load_model(&model, &mut m)?;
            let cfg = load_config(config.as_deref())?;
            if let Some(c) = &config {
                m.input(c);
            }
            let mut data = cfg.train.data.clone();
            data.snr = parse_snr(&snr)?;
            prepare_out(&out)?;
            let (x, y) = synthesize_indexed(&model, &data, seed, index)?;
            save(&Artifact::Cube(y), out.join("cube.cbc"), &mut m)?;
            save(&Artifact::Reflectivity(x), out.join("truth.cbc"), &mut m)?;
            m.config = json(&data);
            m.seeds = serde_json::json!({ "data": seed, "index": index });
            m.write(&out)?;
        }
        Command::Solve {
            model,
            data,
            algo,
            iters,
            lambda,
            stop_tol,
            seed,
            out,
        } => {
            let mut m = RunManifest::new("solve", argv);
            if !algo.eq_ignore_ascii_case("ista") {
                return Err(usage(format!("unknown algorithm '{algo}'; only ista is available")));
            }
            m.input(&model);
            let (op, nz, nx): (Box<dyn LinearOperator>, usize, usize) = match Artifact::load(&model)? {
                Artifact::Model(a) => {
                    let (z, x) = (a.setup.grid_nz, a.setup.grid_nx);
                    (Box::new(a), z, x)
                }
                Artifact::Compressed(c) => {
                    let (z, x) = (c.setup.grid_nz, c.setup.grid_nx);
                    (Box::new(c), z, x)
                }
                other => {
                    return Err(Error::Format(format!("solve needs a model, got '{}'", other.kind())).into())
                }
            };
            m.input(&data);
            let y = match Artifact::load(&data)? {
                Artifact::Cube(y) => y,
                other => return Err(Error::Format(format!("solve needs a cube, got '{}'", other.kind())).into()),
            };
            if y.values.len() != op.output_len() {
                return Err(Error::InvalidSetup(format!(
                    "cube has {} values but the operator expects {}",
                    y.values.len(),
                    op.output_len()
                ))
                .into());
            }
            prepare_out(&out)?;
            let l = lipschitz(op.as_ref(), seed)?;
            let lam = match lambda {
                Some(v) => v,
                None => default_lambda(op.as_ref(), &y.values)?,
            };
            let res = ista_solve(&y.values, op.as_ref(), lam, l.value, iters, stop_tol)?;
            let x = cbc_core::model::ReflectivityMap::from_vec(nz, nx, res.x)?;
            save(&Artifact::Reflectivity(x), out.join("reconstruction.cbc"), &mut m)?;
            let mut csv = String::from("iteration,objective\n");
            for (i, v) in res.objective.iter().enumerate() {
                csv.push_str(&format!("{i},{v}\n"));
            }
            write_text(&csv, out.join("objective.csv"), &mut m)?;
            m.config = serde_json::json!({
                "algo": "ista", "iterations": iters, "performed": res.iterations,
                "lambda": lam, "lipschitz": l.value, "stop_tol": stop_tol,
            });
            m.seeds = serde_json::json!({ "power": seed });
            m.write(&out)?;
        }
        Command::Train {
            model,
            compressed,
            config,
            arch,
            blocks,
            init,
            snr,
            max_epochs,
            seed,
            out,
        } => {
            let mut m = RunManifest::new("train", argv);
            let mut cfg = load_config(config.as_deref())?;
            if let Some(c) = &config {
                m.input(c);
            }
            if let Some(a) = arch {
                cfg.network.arch = a.parse::<Arch>()?;
            }
            if let Some(b) = blocks {
                cfg.network.blocks = b;
            }
            if let Some(i) = init {
                cfg.network.init = i;
            }
            if let Some(s) = snr {
                cfg.train.data.snr = parse_snr(&s)?;
            }
            if let Some(e) = max_epochs {
                cfg.train.max_epochs = e;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
                cfg.network.init_seed = s;
                cfg.compress.seed = s;
            }
            cfg.train.validate()?;
            let model = load_model(&model, &mut m)?;
            prepare_out(&out)?;
            let net = initial_network(&cfg, &model, compressed.as_deref(), &mut m)?;
            let outcome = train_network(&net, &model, &cfg.train, mode)?;
            save(&Artifact::Network(Box::new(outcome.net)), out.join("network.cbc"), &mut m)?;
            write_text(&outcome.record.to_csv(), out.join("train_record.csv"), &mut m)?;
            let mut summary = outcome.record.summary_json();
            summary["lambda"] = json(&net.lambda);
            summary["lipschitz"] = json(&net.lipschitz);
            write_json(&summary, out.join("train_summary.json"), &mut m)?;
            m.config = json(&cfg);
            m.seeds = serde_json::json!({
                "train": cfg.train.seed, "init": cfg.network.init_seed, "compress": cfg.compress.seed,
            });
            let diverged = outcome.record.diverged();
            if diverged {
                m.status = "diverged".into();
            }
            m.write(&out)?;
            if diverged {
                return Err(CliError {
                    code: 3,
                    message: format!("training diverged: {:?}", outcome.record.stop_reason),
                });
            }
        }
        Command::Ablate { model, config, out } => {
            let mut m = RunManifest::new("ablate", argv);
            let cfg = load_config(Some(&config))?;
            m.input(&config);
            let model = load_model(&model, &mut m)?;
            prepare_out(&out)?;
            let acfg = cfg.ablation_config();
            let results = run_ablation(&model, &acfg, mode)?;
            let curves = out.join("curves");
            std::fs::create_dir_all(&curves)?;
            for r in &results {
                write_text(&r.record.to_csv(), curves.join(format!("cell{}.csv", r.index)), &mut m)?;
            }
            write_text(&ablation_summary_csv(&results), out.join("ablation_summary.csv"), &mut m)?;
            write_json(&json(&results), out.join("ablation.json"), &mut m)?;
            m.config = json(&acfg);
            m.seeds = serde_json::json!({
                "train": acfg.train.seed,
                "cells": results.iter().map(|r| r.init_seed).collect::<Vec<_>>(),
            });
            m.write(&out)?;
        }
        Command::Eval {
            model,
            networks,
            ista,
            oracle,
            config,
            set_size,
            conditions,
            seed,
            precision,
            out,
        } => {
            let mut m = RunManifest::new("eval", argv);
            let cfg = load_config(config.as_deref())?;
            if let Some(c) = &config {
                m.input(c);
            }
            let mut ecfg = cfg.eval.clone();
            if let Some(n) = set_size {
                ecfg.set_size = n;
            }
            if let Some(c) = conditions {
                ecfg.conditions = c
                    .split(',')
                    .map(|s| parse_snr(s.trim()))
                    .collect::<CliResult<Vec<_>>>()?;
            }
            if let Some(s) = seed {
                ecfg.seed = s;
            }
            if let Some(p) = precision {
                ecfg.precision = p;
            }
            let model = load_model(&model, &mut m)?;
            let mut nets: Vec<(String, UnrolledNet)> = Vec::new();
            for p in &networks {
                m.input(p);
                let net = match Artifact::load(p)? {
                    Artifact::Network(n) => *n,
                    other => {
                        return Err(Error::Format(format!(
                            "{}: expected a network, found '{}'",
                            p.display(),
                            other.kind()
                        ))
                        .into())
                    }
                };
                let id = network_id(p, &net, &nets);
                nets.push((id, net));
            }
            if nets.is_empty() && ista.is_empty() && !oracle {
                return Err(usage("nothing to evaluate: pass --network, --ista or --oracle"));
            }
            prepare_out(&out)?;
            let l = if ista.is_empty() {
                0.0
            } else {
                lipschitz(&model, ecfg.seed)?.value
            };
            let mut cands: Vec<Candidate<'_>> = nets
                .iter()
                .map(|(id, net)| Candidate::Network { id: id.clone(), net })
                .collect();
            for &n in &ista {
                cands.push(Candidate::Ista {
                    id: format!("ISTA-{n}"),
                    op: &model,
                    iterations: n,
                    lambda: None,
                    lipschitz: l,
                });
            }
            if oracle {
                cands.push(Candidate::Oracle { id: "oracle".into() });
            }
            let records = run_benchmark(&model, &cands, &ecfg, mode)?;
            write_text(&metrics_csv(&records), out.join("metrics.csv"), &mut m)?;
            write_json(&json(&records), out.join("metrics.json"), &mut m)?;
            m.config = json(&ecfg);
            m.seeds = serde_json::json!({ "eval": ecfg.seed });
            m.write(&out)?;
        }
        Command::Report { records, out } => {
            let mut m = RunManifest::new("report", argv);
            if records.is_empty() {
                return Err(usage("report needs at least one --record"));
            }
            prepare_out(&out)?;
            let curves = out.join("curves");
            let mut tables = Vec::new();
            let mut curve_names = Vec::new();
            for p in &records {
                m.input(p);
                let text = std::fs::read_to_string(p)?;
                let header = text.lines().next().unwrap_or("");
                if header == METRICS_CSV_HEADER {
                    tables.push(parse_metrics_csv(&text)?);
                } else if header.starts_with("epoch,train_loss,val_loss") {
                    std::fs::create_dir_all(&curves)?;
                    let name = unique_curve_name(p, &curve_names);
                    write_text(&text, curves.join(&name), &mut m)?;
                    curve_names.push(name);
                } else {
                    return Err(Error::Format(format!("{}: unrecognized table header '{header}'", p.display())).into());
                }
            }
            let (merged, warnings) = merge_metrics(tables);
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            if !merged.is_empty() {
                write_text(&metrics_csv(&merged), out.join("report.csv"), &mut m)?;
            }
            write_json(
                &serde_json::json!({ "rows": merged.len(), "curves": curve_names, "warnings": warnings }),
                out.join("report.json"),
                &mut m,
            )?;
            m.write(&out)?;
        }
        Command::Replay { manifest, out } => {
            let recorded = RunManifest::read(&manifest)?;
            if recorded.command == "replay" {
                return Err(usage("cannot replay a replay manifest"));
            }
            let args = match &out {
                Some(o) => with_out(&recorded.argv, o),
                None => recorded.argv.clone(),
            };
            let full: Vec<String> = std::iter::once("cbc-lista".to_string()).chain(args.iter().cloned()).collect();
            let cli = Cli::try_parse_from(&full).map_err(|e| usage(format!("recorded arguments no longer parse: {e}")))?;
            return run(cli.command, &args);
        }
    }
    Ok(())
}

fn network_id(path: &Path, net: &UnrolledNet, taken: &[(String, UnrolledNet)]) -> String {
    let base = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| s != "network")
        .or_else(|| {
            path.parent()
                .and_then(|p| p.file_name())
                .map(|s| s.to_string_lossy().into_owned())
        })
        .unwrap_or_else(|| format!("{}-{}", net.arch, net.num_blocks));
    let mut id = base.clone();
    let mut k = 2;
    while taken.iter().any(|(t, _)| *t == id) {
        id = format!("{base}-{k}");
        k += 1;
    }
    id
}

fn unique_curve_name(path: &Path, taken: &[String]) -> String {
    let stem = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "curve".into());
    let mut name = format!("{stem}.csv");
    let mut k = 2;
    while taken.contains(&name) {
        name = format!("{stem}-{k}.csv");
        k += 1;
    }
    name
}

/// Untrained network for `train`, following `[network]` and `[compress]`.
fn initial_network(
    cfg: &Config,
    model: &SliceConvModel,
    compressed: Option<&Path>,
    m: &mut RunManifest,
) -> CliResult<UnrolledNet> {
    let n = &cfg.network;
    let init = if n.init.eq_ignore_ascii_case("analytic") {
        NetworkInit::Analytic
    } else {
        NetworkInit::Random {
            scheme: n.init.parse::<InitScheme>()?,
            seed: n.init_seed,
        }
    };
    let comp: Option<CompressedModel> = if n.arch == Arch::Cbc {
        Some(match compressed {
            Some(p) => {
                m.input(p);
                match Artifact::load(p)? {
                    Artifact::Compressed(c) => c,
                    other => {
                        return Err(Error::Format(format!(
                            "{}: expected a compressed model, found '{}'",
                            p.display(),
                            other.kind()
                        ))
                        .into())
                    }
                }
            }
            None => compress_model(
                model,
                cfg.compress.method()?,
                cfg.compress.basis,
                cfg.compress.tol,
                cfg.compress.seed,
            )?,
        })
    } else {
        None
    };
    if let Some(c) = &comp {
        if c.setup != model.setup {
            return Err(Error::InvalidSetup("compressed model and model use different setups".into()).into());
        }
    }
    let lambda = match n.lambda {
        Some(l) => l,
        None => calibrate_lambda(model, &validation_set(model, &cfg.train)?)?,
    };
    let l = match &comp {
        Some(c) => lipschitz(c, n.init_seed)?.value,
        None => lipschitz(model, n.init_seed)?.value,
    };
    let spec = NetworkSpec {
        arch: n.arch,
        num_blocks: n.blocks,
        init,
        lambda,
        lipschitz: l,
        trainable: Trainability {
            forward: n.train_forward,
            transposed: n.train_transposed,
            thresholds: n.train_thresholds,
        },
        shared: n.shared,
        dense_cap_bytes: cfg.dense_cap_bytes,
    };
    let source = match &comp {
        Some(c) => NetworkSource::Compressed(c),
        None => NetworkSource::Model(model),
    };
    Ok(build_network(&spec, source)?)
}
