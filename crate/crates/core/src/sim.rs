//! Monte Carlo BER over i.i.d. Rayleigh block fading.
//!
//! Model: `Y = √(ρ/μ) C(s) H + W` with `H` (`M×N`) and `W` (`T×N`) having
//! i.i.d. `CN(0, 1)` entries and `μ = E‖C(s)‖_F² / T`, so `ρ` is the average
//! SNR per receive antenna.
//!
//! Trial `i` at SNR index `k` draws from ChaCha8 stream `(k << 40) | i` of
//! the run seed, so every decoder sees the same `(bits, H, W)` for trial `i`
//! and results do not depend on thread count or batch size.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::codes::CodeSpec;
use crate::constellation::{Constellation, Modulation};
use crate::cxnum::{CMatrix, C64};
use crate::detect::{decode, pic_sic_group_decode, Decoder};
use crate::equivch::build;
use crate::error::{Error, Result};

pub const DEFAULT_MIN_ERRORS: u64 = 200;
pub const DEFAULT_MAX_TRIALS: u64 = 1_000_000;
pub const CSV_HEADER: &str =
    "code,decoder,modulation,N,snr_db,trials,bit_errors,ber,norm_evals_total,seed";

/// `μ` such that `√(ρ/μ)·C(s)` carries average energy `ρ` per time slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationMu {
    pub mu: f64,
}

/// Exact `μ` for i.i.d. zero-mean symbols: each layer contributes
/// `E‖Θ s_p‖² = ‖Θ‖_F² E|s|²`, so `μ = P ‖Θ‖_F² E|s|² / T`.
pub fn compute_mu(spec: &CodeSpec, c: &Constellation) -> NormalizationMu {
    let theta = spec.rotation().matrix().frobenius_norm().powi(2);
    NormalizationMu {
        mu: spec.layers() as f64 * theta * c.average_energy() / spec.block_len() as f64,
    }
}

/// Sample mean of `‖C(s)‖_F² / T` over `draws` uniform symbol vectors.
pub fn estimate_mu(spec: &CodeSpec, c: &Constellation, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: f64 = (0..draws)
        .map(|_| {
            let s: Vec<C64> = (0..spec.symbols())
                .map(|_| c.point(rng.random_range(0..c.size())))
                .collect();
            spec.encode(&s)
                .expect("length matches")
                .matrix()
                .frobenius_norm()
                .powi(2)
        })
        .sum();
    total / draws as f64 / spec.block_len() as f64
}

fn cn01(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `M×N` channel with i.i.d. `CN(0, 1)` entries.
pub fn rayleigh_channel(m: usize, n: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(m, n, |_, _| cn01(rng))
}

/// `T×N` noise with i.i.d. `CN(0, 1)` entries.
pub fn awgn(t: usize, n: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(t, n, |_, _| cn01(rng))
}

/// Parses `start:step:stop` (inclusive) or a comma-separated list.
pub fn parse_snr_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("invalid SNR grid `{s}`"));
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    let grid: Vec<f64> = if s.contains(':') {
        let parts: Vec<f64> = s.split(':').map(parse).collect::<Result<_>>()?;
        let [start, step, stop] = parts[..] else {
            return Err(bad());
        };
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| start + step * i as f64).collect()
    } else {
        s.split(',').map(parse).collect::<Result<_>>()?
    };
    check_grid(&grid)?;
    Ok(grid)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty()
        || grid.iter().any(|x| !x.is_finite())
        || grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::Config(
            "SNR grid must be non-empty, finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub code: CodeSpec,
    pub rx: usize,
    pub modulation: Modulation,
    pub decoders: Vec<Decoder>,
    pub snr_db: Vec<f64>,
    pub min_errors: u64,
    pub max_trials: u64,
    pub seed: u64,
    /// PIC-SIC group order; natural order when `None`.
    pub sic_order: Option<Vec<usize>>,
}

impl SimConfig {
    pub fn new(
        code: CodeSpec,
        rx: usize,
        modulation: Modulation,
        decoders: Vec<Decoder>,
        snr_db: Vec<f64>,
    ) -> Self {
        Self {
            code,
            rx,
            modulation,
            decoders,
            snr_db,
            min_errors: DEFAULT_MIN_ERRORS,
            max_trials: DEFAULT_MAX_TRIALS,
            seed: 0,
            sic_order: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_grid(&self.snr_db)?;
        if self.rx == 0 {
            return Err(Error::Config("need at least one receive antenna".into()));
        }
        if self.max_trials == 0 {
            return Err(Error::Config("trial cap must be at least 1".into()));
        }
        if self.decoders.is_empty() {
            return Err(Error::Config("no decoder selected".into()));
        }
        self.modulation.constellation()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BerRecord {
    pub code: String,
    pub decoder: String,
    pub modulation: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub snr_db: f64,
    pub trials: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub norm_evals_total: u64,
    pub seed: u64,
}

/// A decoder that hit a feasibility guard and was dropped from the run.
#[derive(Debug)]
pub struct DecoderFailure {
    pub decoder: Decoder,
    pub snr_db: f64,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct SimOutcome {
    /// Ordered by decoder (as configured), then SNR.
    pub records: Vec<BerRecord>,
    pub failures: Vec<DecoderFailure>,
}

struct Trial {
    bit_errors: Vec<Result<(u64, u64)>>,
}

fn trial_rng(seed: u64, snr_index: usize, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((snr_index as u64) << 40) | trial);
    rng
}

struct Context<'a> {
    cfg: &'a SimConfig,
    c: Constellation,
    disp: crate::codes::DispersionSet,
    scale: f64,
    snr_index: usize,
}

impl Context<'_> {
    fn run_trial(&self, trial: u64, decoders: &[Decoder]) -> Trial {
        let spec = &self.cfg.code;
        let mut rng = trial_rng(self.cfg.seed, self.snr_index, trial);
        let bits: Vec<bool> = (0..spec.symbols() * self.c.bits_per_symbol())
            .map(|_| rng.random())
            .collect();
        let truth = self.c.bits_to_symbols(&bits).expect("whole symbols");
        let s: Vec<C64> = truth.iter().map(|&i| self.c.point(i)).collect();
        let h = rayleigh_channel(spec.antennas(), self.cfg.rx, &mut rng);
        let w = awgn(spec.block_len(), self.cfg.rx, &mut rng);
        let codeword = spec.encode(&s).expect("length matches");
        let y = (codeword.matrix() * &h)
            .scaled(C64::new(self.scale, 0.0))
            .add(&w)
            .vectorize();
        let bit_errors = match build(&self.disp, &h, spec.grouping()) {
            Ok(eq) => decoders
                .iter()
                .map(|&d| {
                    let result = match (d, &self.cfg.sic_order) {
                        (Decoder::PicSic, Some(order)) => {
                            pic_sic_group_decode(&y, &eq, &self.c, self.scale, Some(order))
                        }
                        _ => decode(d, &y, &eq, &self.c, self.scale),
                    };
                    result.map(|r| {
                        let errs = truth
                            .iter()
                            .zip(&r.symbol_indices)
                            .map(|(&a, &b)| self.c.bit_distance(a, b) as u64)
                            .sum();
                        (errs, r.norm_evals)
                    })
                })
                .collect(),
            Err(e) => {
                let msg = e.to_string();
                decoders
                    .iter()
                    .map(|_| Err(Error::Config(msg.clone())))
                    .collect()
            }
        };
        Trial { bit_errors }
    }
}

#[derive(Clone, Copy, Default)]
struct Tally {
    trials: u64,
    bit_errors: u64,
    norm_evals: u64,
    done: bool,
}

/// Runs the configured simulation. Each decoder stops at the first trial
/// where its cumulative bit errors reach `min_errors`, or at `max_trials`.
/// A decoder that returns a guard error is reported in `failures` and
/// produces no further records; input errors abort the run.
pub fn run_ber(cfg: &SimConfig) -> Result<SimOutcome> {
    cfg.validate()?;
    let c = cfg.modulation.constellation()?;
    let mu = compute_mu(&cfg.code, &c).mu;
    let disp = cfg.code.dispersion_set();
    let bits_per_trial = (cfg.code.symbols() * c.bits_per_symbol()) as f64;
    let mut failed: Vec<bool> = vec![false; cfg.decoders.len()];
    let mut per_decoder: Vec<Vec<BerRecord>> = vec![Vec::new(); cfg.decoders.len()];
    let mut failures = Vec::new();

    for (snr_index, &snr_db) in cfg.snr_db.iter().enumerate() {
        let rho = 10f64.powf(snr_db / 10.0);
        let ctx = Context {
            cfg,
            c: c.clone(),
            disp: disp.clone(),
            scale: (rho / mu).sqrt(),
            snr_index,
        };
        let mut tallies: Vec<Tally> = failed
            .iter()
            .map(|&f| Tally {
                done: f,
                ..Tally::default()
            })
            .collect();
        let mut next_trial = 0u64;
        let mut batch = 64u64;
        while tallies.iter().any(|t| !t.done) && next_trial < cfg.max_trials {
            let active: Vec<usize> = (0..tallies.len()).filter(|&k| !tallies[k].done).collect();
            let decoders: Vec<Decoder> = active.iter().map(|&k| cfg.decoders[k]).collect();
            let end = (next_trial + batch).min(cfg.max_trials);
            let results: Vec<Trial> = (next_trial..end)
                .into_par_iter()
                .map(|t| ctx.run_trial(t, &decoders))
                .collect();
            for trial in results {
                for (slot, &k) in active.iter().enumerate() {
                    let tally = &mut tallies[k];
                    if tally.done {
                        continue;
                    }
                    match &trial.bit_errors[slot] {
                        Ok((errs, evals)) => {
                            tally.trials += 1;
                            tally.bit_errors += errs;
                            tally.norm_evals += evals;
                            if tally.bit_errors >= cfg.min_errors {
                                tally.done = true;
                            }
                        }
                        Err(e) if e.is_decoder_guard() => {
                            tally.done = true;
                            failed[k] = true;
                            failures.push(DecoderFailure {
                                decoder: cfg.decoders[k],
                                snr_db,
                                error: clone_guard(e),
                            });
                        }
                        Err(e) => return Err(Error::Config(e.to_string())),
                    }
                }
            }
            next_trial = end;
            batch = (batch * 2).min(1 << 16);
        }
        for (k, tally) in tallies.iter().enumerate() {
            if failed[k] {
                continue;
            }
            per_decoder[k].push(BerRecord {
                code: cfg.code.id().to_string(),
                decoder: cfg.decoders[k].name().to_string(),
                modulation: cfg.modulation.to_string(),
                n: cfg.rx,
                snr_db,
                trials: tally.trials,
                bit_errors: tally.bit_errors,
                ber: tally.bit_errors as f64 / (tally.trials as f64 * bits_per_trial),
                norm_evals_total: tally.norm_evals,
                seed: cfg.seed,
            });
        }
    }
    // A decoder that failed part-way keeps the points it completed.
    Ok(SimOutcome {
        records: per_decoder.into_iter().flatten().collect(),
        failures,
    })
}

fn clone_guard(e: &Error) -> Error {
    match e {
        Error::SearchSpace { evals, limit } => Error::SearchSpace {
            evals: *evals,
            limit: *limit,
        },
        Error::RankDeficient {
            rank,
            needed,
            stage,
        } => Error::RankDeficient {
            rank: *rank,
            needed: *needed,
            stage: *stage,
        },
        other => Error::Config(other.to_string()),
    }
}

pub fn write_csv<W: Write>(records: &[BerRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(','))
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    for r in records {
        w.serialize(r).map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Diversity estimate `−d log₁₀(BER) / d(SNR_dB/10)` by least squares over
/// the `top` highest-SNR points with nonzero BER.
pub fn estimate_diversity_slope(records: &[BerRecord], top: usize) -> Result<f64> {
    let mut pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.ber > 0.0)
        .map(|r| (r.snr_db / 10.0, r.ber.log10()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pts = &pts[pts.len().saturating_sub(top)..];
    if pts.len() < 2 {
        return Err(Error::InsufficientPoints(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(-sxy / sxx)
}

/// SNR (dB) at which the BER curve crosses `target`, by interpolating
/// `log₁₀ BER` linearly between the bracketing points.
pub fn snr_at_ber(records: &[BerRecord], target: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.ber > 0.0)
        .map(|r| (r.snr_db, r.ber))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t = target.log10();
    pts.windows(2).find_map(|w| {
        let (x0, y0) = (w[0].0, w[0].1.log10());
        let (x1, y1) = (w[1].0, w[1].1.log10());
        if y0 >= t && y1 <= t && y0 != y1 {
            Some(x0 + (t - y0) * (x1 - x0) / (y1 - y0))
        } else {
            None
        }
    })
}
