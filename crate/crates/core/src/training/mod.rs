//! Alternating optimization: per-sample WMMSE with the RIS fixed, then one
//! Adam ascent step on the network parameters with the precoders fixed.

mod adam;

pub use adam::{adam_step, load_adam_state, save_adam_state, AdamConfig, AdamState, ADAM_MAGIC};

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::channel::{Dataset, PreparedSample, ScenarioConfig};
use crate::error::{Error, Result};
use crate::precoder::{composite_channel, wmmse_precode, wsr, PrecodeResult, WmmseOptions};
use crate::risnet::{self, forward_tape, init_params, phases_to_phi, NetInput, RisnetConfig, RisnetParams, Variant};
use crate::tensor::{ComplexMat, RealMat, Tape};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub eval_every: usize,
    pub checkpoint_every: usize,
    pub seed: u64,
    /// Rescale the batch gradient to at most this L2 norm. Off by default.
    pub clip_grad_norm: Option<f64>,
    pub wmmse: WmmseOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            batch_size: 512,
            adam: AdamConfig::default(),
            eval_every: 50,
            checkpoint_every: 100,
            seed: 0,
            clip_grad_norm: None,
            wmmse: WmmseOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if let Some(c) = self.clip_grad_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip_grad_norm must be positive, got {c}")));
            }
        }
        if self.wmmse.max_iters == 0 {
            return Err(Error::Config("wmmse max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    pub mean_wsr: f64,
    pub grad_norm: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

pub const TRAIN_LOG_HEADER: &str = "iteration,mean_wsr,grad_norm,wall_ms";

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRAIN_LOG_HEADER);
        s.push('\n');
        for r in &self.records {
            writeln!(s, "{},{},{},{:.3}", r.iteration, r.mean_wsr, r.grad_norm, r.wall_ms).unwrap();
        }
        s
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// Parses a log written by [`TrainLog::to_csv`].
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TRAIN_LOG_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header `{TRAIN_LOG_HEADER}`"),
                })
            }
        }
        let mut records = Vec::new();
        for (idx, raw) in lines {
            if raw.trim().is_empty() {
                continue;
            }
            let line = idx + 1;
            let bad = |what: &str| Error::Parse {
                line,
                msg: format!("invalid {what} in `{raw}`"),
            };
            let f: Vec<&str> = raw.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(bad("field count"));
            }
            records.push(TrainRecord {
                iteration: f[0].parse().map_err(|_| bad("iteration"))?,
                mean_wsr: f[1].parse().map_err(|_| bad("mean_wsr"))?,
                grad_norm: f[2].parse().map_err(|_| bad("grad_norm"))?,
                wall_ms: f[3].parse().map_err(|_| bad("wall_ms"))?,
            });
        }
        Ok(Self { records })
    }

    /// Mean of `mean_wsr` over the `window` records ending at `iteration`.
    pub fn moving_average(&self, iteration: usize, window: usize) -> Option<f64> {
        let end = self.records.iter().position(|r| r.iteration == iteration)?;
        let start = (end + 1).checked_sub(window)?;
        let slice = &self.records[start..=end];
        Some(slice.iter().map(|r| r.mean_wsr).sum::<f64>() / window as f64)
    }
}

fn input_of<'a>(params: &RisnetParams, sample: &'a PreparedSample) -> NetInput<'a> {
    match params.arch.variant {
        Variant::Pv => NetInput::Full(&sample.gamma),
        Variant::Pi => NetInput::PerUser(&sample.gamma_users),
    }
}

/// Network phases for one sample.
pub fn phases(params: &RisnetParams, sample: &PreparedSample) -> Result<RealMat> {
    risnet::forward(params, input_of(params, sample))
}

/// WMMSE precoder for the RIS configuration the network proposes.
pub fn precode_sample(
    params: &RisnetParams,
    sample: &PreparedSample,
    h: &ComplexMat,
    scenario: &ScenarioConfig,
    opts: WmmseOptions,
) -> Result<PrecodeResult> {
    let psi = phases(params, sample)?;
    let phi = phases_to_phi(&psi);
    let a = composite_channel(&sample.g, &phi, h, &sample.d)?;
    wmmse_precode(&a, &scenario.alpha, scenario.rho, scenario.e_tr, opts)
}

/// WSR of one sample with the precoder `v` held fixed, and its gradient
/// with respect to every parameter block.
pub fn objective_and_gradient(
    params: &RisnetParams,
    sample: &PreparedSample,
    h: &ComplexMat,
    v: &ComplexMat,
    scenario: &ScenarioConfig,
) -> Result<(f64, Vec<RealMat>)> {
    let mut tape = Tape::new();
    let vars = params.to_tape(&mut tape, true);
    let psi = forward_tape(&mut tape, params, &vars, input_of(params, sample))?;
    let phi = tape.unit_phase(psi)?;
    // C = (G·diag(φ)·H + D)·V evaluated as (G·diag(φ))·(H·V) + D·V
    let g = tape.complex_constant(sample.g.clone());
    let hv = tape.complex_constant(h.matmul(v)?);
    let dv = tape.complex_constant(sample.d.matmul(v)?);
    let g_phi = tape.scale_cols(g, phi)?;
    let cascade = tape.cmatmul(g_phi, hv)?;
    let c = tape.cadd(cascade, dv)?;
    let objective = tape.wsr(c, &scenario.alpha, scenario.rho)?;
    let grads = tape.backward(objective)?;
    let value = tape.real(objective).data()[0];
    let blocks = vars
        .iter()
        .map(|&var| grads.real(var).expect("trainable leaf has an adjoint").clone())
        .collect();
    Ok((value, blocks))
}

/// WSR of one sample with the precoder `v` held fixed (no gradient).
pub fn objective(
    params: &RisnetParams,
    sample: &PreparedSample,
    h: &ComplexMat,
    v: &ComplexMat,
    scenario: &ScenarioConfig,
) -> Result<f64> {
    let psi = phases(params, sample)?;
    let a = composite_channel(&sample.g, &phases_to_phi(&psi), h, &sample.d)?;
    wsr(&a.matmul(v)?, &scenario.alpha, scenario.rho)
}

fn grad_norm(grads: &[RealMat]) -> f64 {
    grads.iter().map(RealMat::frobenius_norm_sq).sum::<f64>().sqrt()
}

/// Runs the training loop one iteration at a time. Batch selection for
/// iteration `k` is drawn from its own RNG stream, so a trainer resumed from
/// a checkpoint and optimizer state continues exactly where it stopped.
pub struct Trainer<'a> {
    samples: &'a [PreparedSample],
    h: &'a ComplexMat,
    scenario: &'a ScenarioConfig,
    cfg: TrainConfig,
    params: RisnetParams,
    adam: AdamState,
}

impl<'a> Trainer<'a> {
    pub fn new(
        samples: &'a [PreparedSample],
        h: &'a ComplexMat,
        scenario: &'a ScenarioConfig,
        cfg: TrainConfig,
        params: RisnetParams,
    ) -> Result<Self> {
        let adam = AdamState::new(&params.blocks);
        Self::resume(samples, h, scenario, cfg, params, adam)
    }

    pub fn resume(
        samples: &'a [PreparedSample],
        h: &'a ComplexMat,
        scenario: &'a ScenarioConfig,
        cfg: TrainConfig,
        params: RisnetParams,
        adam: AdamState,
    ) -> Result<Self> {
        cfg.validate()?;
        scenario.validate()?;
        params.check()?;
        if samples.is_empty() {
            return Err(Error::EmptyInput("training set"));
        }
        if params.arch.variant == Variant::Pv && params.arch.n_users != scenario.n_users {
            return Err(Error::Config(format!(
                "network built for {} users, scenario has {}",
                params.arch.n_users, scenario.n_users
            )));
        }
        if adam.m.len() != params.blocks.len() {
            return Err(Error::Config("optimizer state does not match the parameters".into()));
        }
        Ok(Self {
            samples,
            h,
            scenario,
            cfg,
            params,
            adam,
        })
    }

    /// Number of completed iterations.
    pub fn iteration(&self) -> usize {
        self.adam.t as usize
    }

    pub fn params(&self) -> &RisnetParams {
        &self.params
    }

    pub fn adam_state(&self) -> &AdamState {
        &self.adam
    }

    pub fn into_params(self) -> RisnetParams {
        self.params
    }

    fn batch_indices(&self, iteration: usize) -> Vec<usize> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(iteration as u64);
        (0..self.cfg.batch_size)
            .map(|_| rng.random_range(0..self.samples.len()))
            .collect()
    }

    pub fn step(&mut self) -> Result<TrainRecord> {
        let started = Instant::now();
        let iteration = self.iteration() + 1;
        let batch = self.batch_indices(iteration);

        let per_sample: Vec<Result<(f64, Vec<RealMat>)>> = batch
            .par_iter()
            .map(|&idx| {
                let sample = &self.samples[idx];
                let pre = precode_sample(&self.params, sample, self.h, self.scenario, self.cfg.wmmse)?;
                objective_and_gradient(&self.params, sample, self.h, &pre.v, self.scenario)
            })
            .collect();

        // fixed-order reduction keeps results independent of thread count
        let mut total = 0.0;
        let mut sum: Vec<RealMat> = self
            .params
            .blocks
            .iter()
            .map(|b| RealMat::zeros(b.rows(), b.cols()))
            .collect();
        for (pos, result) in per_sample.into_iter().enumerate() {
            let (value, grads) = result?;
            if !value.is_finite() || !grads.iter().all(RealMat::is_finite) {
                return Err(Error::Numeric(format!(
                    "non-finite objective or gradient at iteration {iteration}, sample {}",
                    batch[pos]
                )));
            }
            total += value;
            for (s, g) in sum.iter_mut().zip(&grads) {
                s.add_assign(g);
            }
        }
        let inv = 1.0 / batch.len() as f64;
        for s in &mut sum {
            s.data_mut().iter_mut().for_each(|x| *x *= inv);
        }
        let mean_wsr = total * inv;
        let norm = grad_norm(&sum);
        if let Some(limit) = self.cfg.clip_grad_norm {
            if norm > limit {
                let f = limit / norm;
                for s in &mut sum {
                    s.data_mut().iter_mut().for_each(|x| *x *= f);
                }
            }
        }
        adam_step(&mut self.params.blocks, &sum, &mut self.adam, &self.cfg.adam)?;
        Ok(TrainRecord {
            iteration,
            mean_wsr,
            grad_norm: norm,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }
}

/// Initializes a network and trains it for `train_cfg.iterations` steps.
pub fn train(
    dataset: &Dataset,
    risnet_cfg: &RisnetConfig,
    train_cfg: &TrainConfig,
    scenario: &ScenarioConfig,
) -> Result<(RisnetParams, TrainLog)> {
    dataset.check_dims(scenario)?;
    let params = init_params(risnet_cfg)?;
    let samples = dataset.prepare()?;
    train_prepared(&samples, &dataset.h, params, train_cfg, scenario)
}

pub fn train_prepared(
    samples: &[PreparedSample],
    h: &ComplexMat,
    params: RisnetParams,
    train_cfg: &TrainConfig,
    scenario: &ScenarioConfig,
) -> Result<(RisnetParams, TrainLog)> {
    let mut trainer = Trainer::new(samples, h, scenario, train_cfg.clone(), params)?;
    let mut log = TrainLog::default();
    while trainer.iteration() < train_cfg.iterations {
        log.records.push(trainer.step()?);
    }
    Ok((trainer.into_params(), log))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub per_sample: Vec<f64>,
    pub mean: f64,
}

impl Evaluation {
    pub fn from_values(per_sample: Vec<f64>) -> Self {
        let mean = if per_sample.is_empty() {
            0.0
        } else {
            per_sample.iter().sum::<f64>() / per_sample.len() as f64
        };
        Self { per_sample, mean }
    }
}

/// Test-set WSR of a trained network: forward, WMMSE, objective per sample.
pub fn evaluate(
    params: &RisnetParams,
    samples: &[PreparedSample],
    h: &ComplexMat,
    scenario: &ScenarioConfig,
    opts: WmmseOptions,
) -> Result<Evaluation> {
    let values = samples
        .par_iter()
        .map(|s| precode_sample(params, s, h, scenario, opts).map(|r| r.wsr))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Evaluation::from_values(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_dataset, Split};
    use crate::risnet::Architecture;

    fn setup() -> (ScenarioConfig, Dataset) {
        let cfg = ScenarioConfig {
            n_bs: 2,
            n_ris: 6,
            n_users: 2,
            rho: 10.0,
            e_tr: 1.0,
            alpha: vec![0.5, 0.5],
            seed: 3,
            train_samples: 12,
            test_samples: 4,
        };
        let ds = sample_dataset(&cfg, Split::Train).unwrap();
        (cfg, ds)
    }

    fn net(variant: Variant) -> RisnetConfig {
        RisnetConfig {
            arch: Architecture {
                variant,
                layers: 3,
                n_users: 2,
                branch_dim: 4,
            },
            init_seed: 9,
        }
    }

    #[test]
    fn zero_iterations_returns_initial_params() {
        let (sc, ds) = setup();
        let tc = TrainConfig {
            iterations: 0,
            batch_size: 4,
            ..Default::default()
        };
        let (p, log) = train(&ds, &net(Variant::Pv), &tc, &sc).unwrap();
        assert_eq!(p, init_params(&net(Variant::Pv)).unwrap());
        assert!(log.records.is_empty());
    }

    #[test]
    fn training_is_reproducible_and_logs_every_step() {
        let (sc, ds) = setup();
        let tc = TrainConfig {
            iterations: 3,
            batch_size: 4,
            ..Default::default()
        };
        for variant in [Variant::Pv, Variant::Pi] {
            let (a, la) = train(&ds, &net(variant), &tc, &sc).unwrap();
            let (b, lb) = train(&ds, &net(variant), &tc, &sc).unwrap();
            assert_eq!(a, b);
            assert_eq!(la.records.len(), 3);
            for (x, y) in la.records.iter().zip(&lb.records) {
                assert_eq!(x.mean_wsr.to_bits(), y.mean_wsr.to_bits());
                assert_eq!(x.grad_norm.to_bits(), y.grad_norm.to_bits());
            }
            assert!(la.records.iter().all(|r| r.mean_wsr.is_finite() && r.mean_wsr >= 0.0));
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (sc, ds) = setup();
        let samples = ds.prepare().unwrap();
        let tc = TrainConfig {
            iterations: 4,
            batch_size: 3,
            ..Default::default()
        };
        let p0 = init_params(&net(Variant::Pv)).unwrap();
        let (full, full_log) = train_prepared(&samples, &ds.h, p0.clone(), &tc, &sc).unwrap();

        let mut first = Trainer::new(&samples, &ds.h, &sc, tc.clone(), p0).unwrap();
        first.step().unwrap();
        first.step().unwrap();
        let (params, adam) = (first.params().clone(), first.adam_state().clone());
        let mut second = Trainer::resume(&samples, &ds.h, &sc, tc, params, adam).unwrap();
        let r3 = second.step().unwrap();
        let r4 = second.step().unwrap();
        assert_eq!(second.into_params(), full);
        assert_eq!(r3.mean_wsr.to_bits(), full_log.records[2].mean_wsr.to_bits());
        assert_eq!(r4.mean_wsr.to_bits(), full_log.records[3].mean_wsr.to_bits());
    }

    #[test]
    fn evaluation_does_not_touch_params() {
        let (sc, ds) = setup();
        let samples = ds.prepare().unwrap();
        let p = init_params(&net(Variant::Pi)).unwrap();
        let before = p.clone();
        let a = evaluate(&p, &samples, &ds.h, &sc, WmmseOptions::default()).unwrap();
        let b = evaluate(&p, &samples, &ds.h, &sc, WmmseOptions::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(a, b);
        assert_eq!(a.per_sample.len(), samples.len());
    }

    #[test]
    fn train_log_csv_and_moving_average() {
        let log = TrainLog {
            records: (1..=4)
                .map(|i| TrainRecord {
                    iteration: i,
                    mean_wsr: i as f64,
                    grad_norm: 0.5,
                    wall_ms: 1.0,
                })
                .collect(),
        };
        let csv = log.to_csv();
        assert!(csv.starts_with("iteration,mean_wsr,grad_norm,wall_ms\n1,1,0.5,1.000\n"));
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(TrainLog::parse_csv(&csv).unwrap(), log);
        assert!(matches!(
            TrainLog::parse_csv("iteration,mean_wsr,grad_norm,wall_ms\n1,x,0,0\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert_eq!(log.moving_average(4, 2), Some(3.5));
        assert_eq!(log.moving_average(1, 2), None);
    }
}
