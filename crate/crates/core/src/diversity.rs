//! Numerical full-diversity checks: codeword-difference rank and
//! group independence of the equivalent channel under PIC and PIC-SIC.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::codes::CodeSpec;
use crate::constellation::Constellation;
use crate::cxnum::{complement_projection_or_identity, vec_norm, CMatrix, C64, DEFAULT_RTOL, ZERO};
use crate::equivch::{build, EquivalentChannel};
use crate::error::{Error, Result};

/// Largest number of codeword pairs checked exhaustively.
pub const PAIR_BUDGET: u128 = 1 << 24;
/// Pairs drawn when the budget is exceeded.
pub const DEFAULT_SAMPLED_PAIRS: usize = 100_000;
/// Dense random channels added to every probe set.
pub const DEFAULT_DENSE_CHANNELS: usize = 1000;
/// Largest `M` whose zero patterns are enumerated exhaustively.
pub const MAX_ENUMERATED_PATTERN_ANTENNAS: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DifferenceRankReport {
    pub code: String,
    pub modulation: String,
    pub sampled: bool,
    pub pairs_checked: u64,
    pub min_rank: usize,
    pub full_rank: bool,
    /// A pair attaining `min_rank`, as symbol index vectors.
    pub worst_pair: Option<(Vec<usize>, Vec<usize>)>,
}

fn index_points(indices: &[usize], c: &Constellation) -> Vec<C64> {
    indices.iter().map(|&i| c.point(i)).collect()
}

fn digits(mut code: u64, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = (code % base as u64) as usize;
        code /= base as u64;
    }
    out
}

fn difference_rank(spec: &CodeSpec, c: &Constellation, a: &[usize], b: &[usize]) -> usize {
    let d: Vec<C64> = index_points(a, c)
        .iter()
        .zip(index_points(b, c))
        .map(|(x, y)| x - y)
        .collect();
    spec.encode(&d)
        .expect("symbol count matches")
        .matrix()
        .numerical_rank(DEFAULT_RTOL)
}

/// Checks `rank(C(s) − C(s')) = M` over all distinct pairs when there are at
/// most [`PAIR_BUDGET`] of them, otherwise over [`DEFAULT_SAMPLED_PAIRS`]
/// sampled pairs.
pub fn check_difference_rank(spec: &CodeSpec, c: &Constellation) -> DifferenceRankReport {
    let words = (c.size() as u128).checked_pow(spec.symbols() as u32);
    match words {
        Some(w) if w * (w - 1) / 2 <= PAIR_BUDGET => exhaustive_difference_rank(spec, c, w as u64),
        _ => check_difference_rank_sampled(spec, c, DEFAULT_SAMPLED_PAIRS, 0),
    }
}

fn exhaustive_difference_rank(
    spec: &CodeSpec,
    c: &Constellation,
    words: u64,
) -> DifferenceRankReport {
    let l = spec.symbols();
    let rows: Vec<(u64, usize, u64)> = (0..words)
        .into_par_iter()
        .map(|i| {
            let a = digits(i, c.size(), l);
            let mut worst = (usize::MAX, 0u64);
            for j in i + 1..words {
                let r = difference_rank(spec, c, &a, &digits(j, c.size(), l));
                if r < worst.0 {
                    worst = (r, j);
                }
            }
            (i, worst.0, worst.1)
        })
        .collect();
    let (i, min_rank, j) = rows
        .into_iter()
        .filter(|r| r.1 != usize::MAX)
        .min_by_key(|r| (r.1, r.0))
        .unwrap_or((0, spec.antennas(), 0));
    DifferenceRankReport {
        code: spec.id().to_string(),
        modulation: c.name().to_string(),
        sampled: false,
        pairs_checked: words * (words - 1) / 2,
        min_rank,
        full_rank: min_rank == spec.antennas(),
        worst_pair: Some((digits(i, c.size(), l), digits(j, c.size(), l))),
    }
}

/// Sampled difference-rank check. Each pair differs on a random number of
/// symbol positions (from one to `L`), so sparse differences confined to
/// a single layer are exercised as often as dense ones.
pub fn check_difference_rank_sampled(
    spec: &CodeSpec,
    c: &Constellation,
    pairs: usize,
    seed: u64,
) -> DifferenceRankReport {
    let l = spec.symbols();
    let k = c.size();
    let results: Vec<(usize, Vec<usize>, Vec<usize>)> = (0..pairs)
        .into_par_iter()
        .map(|n| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(n as u64);
            let a: Vec<usize> = (0..l).map(|_| rng.random_range(0..k)).collect();
            let mut b = a.clone();
            let count = rng.random_range(1..=l);
            let mut positions: Vec<usize> = (0..l).collect();
            for i in 0..count {
                let j = rng.random_range(i..l);
                positions.swap(i, j);
                let pos = positions[i];
                b[pos] = (a[pos] + rng.random_range(1..k)) % k;
            }
            (difference_rank(spec, c, &a, &b), a, b)
        })
        .collect();
    let worst = results.into_iter().min_by_key(|r| r.0);
    let min_rank = worst.as_ref().map_or(spec.antennas(), |w| w.0);
    DifferenceRankReport {
        code: spec.id().to_string(),
        modulation: c.name().to_string(),
        sampled: true,
        pairs_checked: pairs as u64,
        min_rank,
        full_rank: min_rank == spec.antennas(),
        worst_pair: worst.map(|(_, a, b)| (a, b)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Pic,
    PicSic,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pic" => Ok(Mode::Pic),
            "pic-sic" => Ok(Mode::PicSic),
            _ => Err(Error::Config(format!(
                "unknown mode `{s}`; expected pic or pic-sic"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Pic => "pic",
            Mode::PicSic => "pic-sic",
        })
    }
}

/// A channel on which some column of a group lies in the span of the groups
/// it is tested against.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    /// Index of the channel in the probe set.
    pub channel: usize,
    /// `(re, im)` of each entry of `h`.
    pub h: Vec<(f64, f64)>,
    /// Decoding stage (equals `group` in PIC mode).
    pub stage: usize,
    pub group: usize,
    /// Column within the group.
    pub column: usize,
    pub rank_before: usize,
    pub rank_after: usize,
    /// `‖Q g‖ / ‖g‖` with `Q` the projector onto the complement of the
    /// interfering columns (0 for a zero column).
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndependenceReport {
    pub code: String,
    pub mode: Mode,
    pub order: Vec<usize>,
    pub channels_tested: usize,
    pub channels_failed: usize,
    pub passed: bool,
    /// Verdict per probe channel.
    pub verdicts: Vec<bool>,
    /// Smallest normalized residual seen over passing columns.
    pub min_residual: f64,
    /// First failing column of each failing channel.
    pub witnesses: Vec<Witness>,
}

/// Probe channels for the independence tests: one random draw per zero
/// pattern of `h` (all `2^M − 1` patterns for `M ≤ 6`, `dense` random
/// patterns beyond), followed by `dense` fully random channels.
pub fn probe_channels(antennas: usize, dense: usize, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    };
    let masks: Vec<u64> = if antennas <= MAX_ENUMERATED_PATTERN_ANTENNAS {
        (1..1u64 << antennas).collect()
    } else {
        let full = if antennas >= 64 {
            u64::MAX
        } else {
            (1u64 << antennas) - 1
        };
        (0..dense)
            .map(|_| loop {
                let m = rng.random::<u64>() & full;
                if m != 0 {
                    break m;
                }
            })
            .collect()
    };
    let mut out = Vec::with_capacity(masks.len() + dense);
    for mask in masks {
        out.push(
            (0..antennas)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        draw(&mut rng)
                    } else {
                        ZERO
                    }
                })
                .collect(),
        );
    }
    for _ in 0..dense {
        out.push((0..antennas).map(|_| draw(&mut rng)).collect());
    }
    out
}

struct StageOutcome {
    witness: Option<Witness>,
    min_residual: f64,
}

/// Tests every column of `group` for independence from the columns in
/// `interferers`.
fn test_columns(
    eq: &EquivalentChannel,
    group: usize,
    interferers: &[usize],
    stage: usize,
) -> StageOutcome {
    let h = eq.matrix();
    let others = h.select_columns(interferers);
    let rank_before = others
        .as_ref()
        .map_or(0, |g| g.numerical_rank(DEFAULT_RTOL));
    let q = complement_projection_or_identity(eq.rows(), others.as_ref());
    let mut min_residual = f64::INFINITY;
    for (column, &l) in eq.groups().blocks()[group].iter().enumerate() {
        let g = h.column(l);
        let mut idx = interferers.to_vec();
        idx.push(l);
        let rank_after = h
            .select_columns(&idx)
            .expect("nonempty")
            .numerical_rank(DEFAULT_RTOL);
        let norm = vec_norm(&g);
        let residual = if norm > 0.0 {
            vec_norm(&q.mul_vec(&g)) / norm
        } else {
            0.0
        };
        if rank_after != rank_before + 1 {
            return StageOutcome {
                witness: Some(Witness {
                    channel: 0,
                    h: Vec::new(),
                    stage,
                    group,
                    column,
                    rank_before,
                    rank_after,
                    residual,
                }),
                min_residual,
            };
        }
        min_residual = min_residual.min(residual);
    }
    StageOutcome {
        witness: None,
        min_residual,
    }
}

fn single_antenna_channel(spec: &CodeSpec, h: &[C64]) -> Result<EquivalentChannel> {
    let hm = CMatrix::from_columns(&[h.to_vec()])?;
    build(&spec.dispersion_set(), &hm, spec.grouping())
}

/// Stages `(group, interfering groups)` for a mode and order.
fn stages(mode: Mode, order: &[usize]) -> Vec<(usize, Vec<usize>)> {
    match mode {
        Mode::Pic => order
            .iter()
            .map(|&p| (p, order.iter().copied().filter(|&q| q != p).collect()))
            .collect(),
        Mode::PicSic => order
            .iter()
            .enumerate()
            .map(|(k, &p)| (p, order[k + 1..].to_vec()))
            .collect(),
    }
}

fn check_channel(spec: &CodeSpec, h: &[C64], mode: Mode, order: &[usize]) -> Result<StageOutcome> {
    let eq = single_antenna_channel(spec, h)?;
    let mut min_residual = f64::INFINITY;
    for (stage, (p, others)) in stages(mode, order).into_iter().enumerate() {
        let cols: Vec<usize> = others
            .iter()
            .flat_map(|&q| eq.groups().blocks()[q].iter().copied())
            .collect();
        let out = test_columns(&eq, p, &cols, stage);
        min_residual = min_residual.min(out.min_residual);
        if let Some(mut w) = out.witness {
            w.h = h.iter().map(|z| (z.re, z.im)).collect();
            return Ok(StageOutcome {
                witness: Some(w),
                min_residual,
            });
        }
    }
    Ok(StageOutcome {
        witness: None,
        min_residual,
    })
}

fn run_checks(
    spec: &CodeSpec,
    channels: &[Vec<C64>],
    mode: Mode,
    order: Vec<usize>,
) -> Result<IndependenceReport> {
    let p = spec.layers();
    let mut seen = vec![false; p];
    if order.len() != p
        || order
            .iter()
            .any(|&q| q >= p || std::mem::replace(&mut seen[q], true))
    {
        return Err(Error::Config(format!(
            "order {order:?} is not a permutation of 0..{p}"
        )));
    }
    if let Some(bad) = channels.iter().find(|h| h.len() != spec.antennas()) {
        return Err(Error::Dimension(format!(
            "channel of length {} for {} antennas",
            bad.len(),
            spec.antennas()
        )));
    }
    let tested: Vec<(usize, &Vec<C64>)> = channels
        .iter()
        .enumerate()
        .filter(|(_, h)| h.iter().any(|z| *z != ZERO))
        .collect();
    let outcomes: Vec<Result<StageOutcome>> = tested
        .par_iter()
        .map(|(_, h)| check_channel(spec, h, mode, &order))
        .collect();
    let mut verdicts = Vec::with_capacity(tested.len());
    let mut witnesses = Vec::new();
    let mut min_residual = f64::INFINITY;
    for ((index, _), out) in tested.iter().zip(outcomes) {
        let out = out?;
        min_residual = min_residual.min(out.min_residual);
        verdicts.push(out.witness.is_none());
        if let Some(mut w) = out.witness {
            w.channel = *index;
            witnesses.push(w);
        }
    }
    Ok(IndependenceReport {
        code: spec.id().to_string(),
        mode,
        order,
        channels_tested: verdicts.len(),
        channels_failed: witnesses.len(),
        passed: witnesses.is_empty(),
        verdicts,
        min_residual,
        witnesses,
    })
}

/// PIC criterion: for every tested `h ≠ 0`, every column of every group is
/// independent of the union of all other groups. Zero channels are skipped.
pub fn check_group_independence(
    spec: &CodeSpec,
    channels: &[Vec<C64>],
) -> Result<IndependenceReport> {
    run_checks(spec, channels, Mode::Pic, (0..spec.layers()).collect())
}

/// PIC-SIC criterion: at stage `k`, every column of group `order[k]` is
/// independent of the groups not yet decoded. Natural order when `None`.
pub fn check_sic_independence(
    spec: &CodeSpec,
    channels: &[Vec<C64>],
    order: Option<&[usize]>,
) -> Result<IndependenceReport> {
    let order = order.map_or_else(|| (0..spec.layers()).collect(), <[usize]>::to_vec);
    run_checks(spec, channels, Mode::PicSic, order)
}

/// Re-runs the check that produced `witness`; true when it still fails at
/// the same stage, group and column.
pub fn replay_witness(
    spec: &CodeSpec,
    witness: &Witness,
    mode: Mode,
    order: &[usize],
) -> Result<bool> {
    let h: Vec<C64> = witness.h.iter().map(|&(re, im)| C64::new(re, im)).collect();
    let out = check_channel(spec, &h, mode, order)?;
    Ok(out.witness.is_some_and(|w| {
        (w.stage, w.group, w.column, w.rank_before, w.rank_after)
            == (
                witness.stage,
                witness.group,
                witness.column,
                witness.rank_before,
                witness.rank_after,
            )
    }))
}

impl fmt::Display for IndependenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let order: Vec<String> = self.order.iter().map(|p| (p + 1).to_string()).collect();
        writeln!(
            f,
            "{} {} order ({}): {} ({} channels, {} failing, min residual {:.3e})",
            self.code,
            self.mode,
            order.join(","),
            if self.passed { "PASS" } else { "FAIL" },
            self.channels_tested,
            self.channels_failed,
            self.min_residual
        )?;
        if let Some(w) = self.witnesses.first() {
            let h: Vec<String> =
                w.h.iter()
                    .map(|(re, im)| format!("{re:+.4}{im:+.4}i"))
                    .collect();
            writeln!(
                f,
                "  witness channel {}: column {} of group {} at stage {}, rank {} -> {}, residual {:.3e}, h = [{}]",
                w.channel,
                w.column + 1,
                w.group + 1,
                w.stage + 1,
                w.rank_before,
                w.rank_after,
                w.residual,
                h.join(", ")
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::build_code;
    use crate::constellation::make_qam;
    use crate::rotation::RotationMatrix;

    #[test]
    fn digits_are_msb_first() {
        assert_eq!(digits(6, 4, 3), vec![0, 1, 2]);
        assert_eq!(digits(63, 4, 3), vec![3, 3, 3]);
    }

    #[test]
    fn c232_exhaustive_full_rank() {
        let spec = build_code("c2-3-2", None).unwrap();
        let r = check_difference_rank(&spec, &make_qam(4).unwrap());
        assert!(!r.sampled);
        assert_eq!(r.pairs_checked, 256 * 255 / 2);
        assert_eq!(r.min_rank, 2);
        assert!(r.full_rank);
    }

    #[test]
    fn unrotated_and_zero_rotation_are_caught() {
        let c = make_qam(4).unwrap();
        let spec = build_code("c2-3-2", None).unwrap();
        let ident = spec
            .clone()
            .with_rotation(RotationMatrix::from_matrix(CMatrix::identity(2)).unwrap())
            .unwrap();
        let r = check_difference_rank(&ident, &c);
        assert_eq!(r.min_rank, 1);
        assert!(!r.full_rank);
        let (a, b) = r.worst_pair.unwrap();
        assert_ne!(a, b);
        let zero = spec
            .with_rotation(RotationMatrix::from_matrix(CMatrix::zeros(2, 2)).unwrap())
            .unwrap();
        assert_eq!(check_difference_rank_sampled(&zero, &c, 100, 1).min_rank, 0);
    }

    #[test]
    fn probe_set_shape() {
        let chans = probe_channels(4, 10, 3);
        assert_eq!(chans.len(), 15 + 10);
        assert!(chans[0][0] != ZERO && chans[0][1..].iter().all(|z| *z == ZERO));
        assert!(chans[14].iter().all(|z| *z != ZERO));
        assert_eq!(probe_channels(8, 20, 3).len(), 40);
        assert_eq!(probe_channels(4, 10, 3), chans);
    }

    #[test]
    fn c452_pic_passes() {
        let spec = build_code("c4-5-2", None).unwrap();
        let r = check_group_independence(&spec, &probe_channels(4, 200, 1)).unwrap();
        assert!(r.passed, "{r}");
        assert_eq!(r.channels_tested, 215);
        assert!(r.min_residual > 1e-6);
    }

    #[test]
    fn c463_pic_fails_with_replayable_witness() {
        let spec = build_code("c4-6-3", None).unwrap();
        let r = check_group_independence(&spec, &probe_channels(4, 50, 2)).unwrap();
        assert!(!r.passed);
        let w = &r.witnesses[0];
        assert!(w.residual < 1e-6);
        assert_eq!(w.rank_after, w.rank_before);
        assert!(replay_witness(&spec, w, Mode::Pic, &[0, 1, 2]).unwrap());
        // Dense channels all fail: the outer groups span the whole space.
        assert!(r.verdicts[15..].iter().all(|v| !v));
    }

    #[test]
    fn c463_sic_passes_in_both_orders() {
        let spec = build_code("c4-6-3", None).unwrap();
        let chans = probe_channels(4, 200, 4);
        for order in [[0, 1, 2], [2, 1, 0]] {
            let r = check_sic_independence(&spec, &chans, Some(&order)).unwrap();
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn zero_channel_skipped_and_single_group_vacuous() {
        let spec = build_code("c4-5-2", None).unwrap();
        let r = check_group_independence(&spec, &[vec![ZERO; 4]]).unwrap();
        assert_eq!(r.channels_tested, 0);
        assert!(r.passed);
        let one = build_code("d1:3,3", None).unwrap();
        let r = check_sic_independence(&one, &probe_channels(3, 20, 5), None).unwrap();
        assert!(r.passed);
        assert!(check_sic_independence(&spec, &[], Some(&[0, 0])).is_err());
    }

    #[test]
    fn pic_pass_implies_sic_pass() {
        for name in ["c2-3-2", "c4-6-2", "d2-4"] {
            let spec = build_code(name, None).unwrap();
            let chans = probe_channels(spec.antennas(), 50, 6);
            let pic = check_group_independence(&spec, &chans).unwrap();
            let sic = check_sic_independence(&spec, &chans, None).unwrap();
            for (a, b) in pic.verdicts.iter().zip(&sic.verdicts) {
                assert!(!a || *b);
            }
        }
    }

    #[test]
    fn report_text() {
        let spec = build_code("c4-6-3", None).unwrap();
        let r = check_group_independence(&spec, &probe_channels(4, 0, 2)).unwrap();
        let text = r.to_string();
        assert!(text.starts_with("c4-6-3 pic order (1,2,3): FAIL"));
        assert!(text.contains("witness channel"));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"mode\":\"pic\""));
    }
}
