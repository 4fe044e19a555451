use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use risnet_core::baselines::{bcd_optimize, random_phase_eval, Link};
use risnet_core::channel::{read_dataset, sample_dataset, write_dataset, Dataset, Split};
use risnet_core::report::{aggregate, eval_csv, method_rows, parse_eval_csv, series_csv, with_summaries, EvalRow};
use risnet_core::risnet::{init_params, load_params, save_params, RisnetParams};
use risnet_core::training::{evaluate, load_adam_state, save_adam_state, TrainLog, Trainer};
use risnet_core::{Error, Result};

use crate::config::RunConfig;

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| with_path(e, dir))?;
    }
    Ok(())
}

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn io_at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => with_path(io, path),
        Error::Format { offset, msg } => Error::Format {
            offset,
            msg: format!("{}: {msg}", path.display()),
        },
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| with_path(e, path))
}

fn load_split(cfg: &RunConfig, path: &Path) -> Result<Dataset> {
    let ds = io_at(path, read_dataset(path))?;
    ds.check_dims(&cfg.scenario)?;
    Ok(ds)
}

/// Path of the optimizer state stored next to a checkpoint.
pub fn adam_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".adam");
    s.into()
}

pub fn cmd_gen(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    for (split, path) in [
        (Split::Train, &cfg.paths.train_data),
        (Split::Test, &cfg.paths.test_data),
    ] {
        let ds = sample_dataset(&cfg.scenario, split)?;
        ensure_parent(path)?;
        io_at(path, write_dataset(&ds, path))?;
        println!("wrote {} samples to {}", ds.len(), path.display());
    }
    Ok(())
}

fn save_progress(cfg: &RunConfig, trainer: &Trainer<'_>, log: &TrainLog) -> Result<()> {
    let ckpt = &cfg.paths.checkpoint;
    ensure_parent(ckpt)?;
    io_at(ckpt, save_params(trainer.params(), ckpt))?;
    let sidecar = adam_path(ckpt);
    io_at(&sidecar, save_adam_state(trainer.adam_state(), &sidecar))?;
    write_text(&cfg.paths.train_log, &log.to_csv())
}

pub fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<()> {
    cfg.validate()?;
    let tc = cfg.train_config();
    let ds = load_split(cfg, &cfg.paths.train_data)?;
    let samples = ds.prepare()?;
    let arch = cfg.risnet().arch;

    let (params, adam, mut log) = if resume {
        let ckpt = &cfg.paths.checkpoint;
        let params = io_at(ckpt, load_params(ckpt, None))?;
        check_arch(&params, cfg)?;
        let shapes: Vec<_> = params.blocks.iter().map(|b| b.shape()).collect();
        let sidecar = adam_path(ckpt);
        let adam = io_at(&sidecar, load_adam_state(&sidecar, &shapes))?;
        let text = fs::read_to_string(&cfg.paths.train_log).map_err(|e| with_path(e, &cfg.paths.train_log))?;
        let mut log = io_at(&cfg.paths.train_log, TrainLog::parse_csv(&text))?;
        log.records.retain(|r| r.iteration as u64 <= adam.t);
        if log.records.len() as u64 != adam.t {
            return Err(Error::Config(format!(
                "train log has {} rows but the optimizer state is at iteration {}",
                log.records.len(),
                adam.t
            )));
        }
        (params, Some(adam), log)
    } else {
        (init_params(&cfg.risnet())?, None, TrainLog::default())
    };
    debug_assert_eq!(params.arch, arch);

    let mut trainer = match adam {
        Some(a) => Trainer::resume(&samples, &ds.h, &cfg.scenario, tc.clone(), params, a)?,
        None => Trainer::new(&samples, &ds.h, &cfg.scenario, tc.clone(), params)?,
    };
    while trainer.iteration() < tc.iterations {
        let rec = trainer.step()?;
        log.records.push(rec);
        if tc.eval_every > 0 && rec.iteration % tc.eval_every == 0 {
            eprintln!(
                "iteration {:>6}  batch WSR {:.6}  grad norm {:.4e}",
                rec.iteration, rec.mean_wsr, rec.grad_norm
            );
        }
        if tc.checkpoint_every > 0 && rec.iteration % tc.checkpoint_every == 0 {
            save_progress(cfg, &trainer, &log)?;
        }
    }
    save_progress(cfg, &trainer, &log)?;
    println!(
        "trained {} network for {} iterations; checkpoint {}",
        arch.variant,
        trainer.iteration(),
        cfg.paths.checkpoint.display()
    );
    Ok(())
}

fn check_arch(params: &RisnetParams, cfg: &RunConfig) -> Result<()> {
    let want = cfg.risnet().arch;
    if params.arch.variant != want.variant {
        return Err(Error::Config(format!(
            "checkpoint holds a {} network but the configuration selects {}",
            params.arch.variant, want.variant
        )));
    }
    if params.arch != want {
        return Err(Error::Config(format!(
            "checkpoint architecture {:?} does not match the configuration {:?}",
            params.arch, want
        )));
    }
    Ok(())
}

/// Random phases for sample `i` come from stream `i` of the evaluation seed,
/// so they do not depend on thread scheduling and repeat across SNRs.
fn random_rows(cfg: &RunConfig, ds: &Dataset, rho: f64) -> Result<Vec<f64>> {
    let sc = cfg.scenario_at(rho);
    let opts = cfg.train.wmmse;
    ds.samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.eval_seed);
            rng.set_stream(i as u64);
            random_phase_eval(Link::from_sample(s, &ds.h), &sc, &mut rng, opts)
        })
        .collect()
}

fn bcd_rows(cfg: &RunConfig, ds: &Dataset, rho: f64) -> Result<Vec<f64>> {
    let sc = cfg.scenario_at(rho);
    ds.samples
        .par_iter()
        .map(|s| Ok(bcd_optimize(Link::from_sample(s, &ds.h), &sc, &cfg.bcd, cfg.train.wmmse)?.wsr))
        .collect()
}

pub fn cmd_eval(cfg: &RunConfig, with_bcd: bool) -> Result<()> {
    cfg.validate()?;
    let ckpt = &cfg.paths.checkpoint;
    let params = io_at(ckpt, load_params(ckpt, None))?;
    check_arch(&params, cfg)?;
    let ds = load_split(cfg, &cfg.paths.test_data)?;
    let samples = ds.prepare()?;
    let label = format!("risnet_{}", params.arch.variant);

    let mut rows: Vec<EvalRow> = Vec::new();
    for &rho in &cfg.eval_rho {
        let ev = evaluate(&params, &samples, &ds.h, &cfg.scenario_at(rho), cfg.train.wmmse)?;
        rows.extend(method_rows(&label, rho, &ev.per_sample));
        rows.extend(method_rows("random", rho, &random_rows(cfg, &ds, rho)?));
        if with_bcd {
            rows.extend(method_rows("bcd", rho, &bcd_rows(cfg, &ds, rho)?));
        }
    }
    let rows = with_summaries(rows);
    write_text(&cfg.paths.report, &eval_csv(&rows))?;
    for p in aggregate(&rows) {
        println!("{:<10} rho={:<10} mean WSR {:.6}", p.method, p.rho, p.mean_wsr);
    }
    println!("report {}", cfg.paths.report.display());
    Ok(())
}

pub fn cmd_report(inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for path in inputs {
        let text = fs::read_to_string(path).map_err(|e| with_path(e, path))?;
        rows.extend(io_at(path, parse_eval_csv(&text))?);
    }
    let points = aggregate(&rows);
    write_text(out, &series_csv(&points))?;
    println!("{} series points written to {}", points.len(), out.display());
    Ok(())
}
