//! Decoders over the equivalent channel: ML, ZF, PIC group decoding,
//! PIC-SIC group decoding and symbol-wise SIC.
//!
//! Every decoder takes `y`, the equivalent channel and `scale = √(ρ/μ)` and
//! minimizes `‖y − scale·ℋ s‖²`, possibly after linear interference
//! cancellation. Complexity is counted in squared-norm evaluations: one per
//! candidate vector visited by an exhaustive search.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::constellation::Constellation;
use crate::cxnum::{
    complement_projection_or_identity, projected_qr_reduce, vec_norm, CMatrix, ComplementProjector,
    C64, DEFAULT_RTOL,
};
use crate::equivch::EquivalentChannel;
use crate::error::{Error, Result};

/// Upper bound on norm evaluations per decode call.
pub const SEARCH_GUARD: u128 = 1 << 26;

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub symbol_indices: Vec<usize>,
    pub norm_evals: u64,
    /// Minimum metric reached by each group search, in group order.
    pub per_group_residuals: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Decoder {
    Ml,
    Zf,
    Pic,
    PicSic,
    Sic,
}

impl Decoder {
    pub const ALL: [Decoder; 5] = [
        Decoder::Ml,
        Decoder::Zf,
        Decoder::Pic,
        Decoder::PicSic,
        Decoder::Sic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Decoder::Ml => "ml",
            Decoder::Zf => "zf",
            Decoder::Pic => "pic",
            Decoder::PicSic => "pic-sic",
            Decoder::Sic => "sic",
        }
    }

    /// Norm evaluations per decode, without running it.
    pub fn complexity(self, group_sizes: &[usize], alphabet: usize) -> u128 {
        let pow = |l: usize| {
            (alphabet as u128)
                .checked_pow(l as u32)
                .unwrap_or(u128::MAX)
        };
        let total: usize = group_sizes.iter().sum();
        match self {
            Decoder::Ml => pow(total),
            Decoder::Zf | Decoder::Sic => (total * alphabet) as u128,
            Decoder::Pic | Decoder::PicSic => group_sizes
                .iter()
                .map(|&l| pow(l))
                .fold(0u128, u128::saturating_add),
        }
    }
}

impl fmt::Display for Decoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Decoder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Decoder::ALL
            .into_iter()
            .find(|d| d.name() == lower)
            .ok_or_else(|| Error::Config(format!("unknown decoder `{s}`")))
    }
}

fn check_guard(evals: u128) -> Result<()> {
    if evals > SEARCH_GUARD {
        return Err(Error::SearchSpace {
            evals,
            limit: SEARCH_GUARD,
        });
    }
    Ok(())
}

fn check_y(y: &[C64], eq: &EquivalentChannel) -> Result<()> {
    if y.len() != eq.rows() {
        return Err(Error::Dimension(format!(
            "received vector has {} entries, channel has {} rows",
            y.len(),
            eq.rows()
        )));
    }
    Ok(())
}

/// Exhaustive `argmin_x ‖z − B x‖²` over `x ∈ 𝒜^l`, ties resolved to the
/// lexicographically smallest index vector.
///
/// `B` is QR-reduced first; the triangular factor lets the walk assign
/// `x_{l−1}` down to `x_0` and finish each row as soon as its last unknown is
/// fixed, so a leaf costs O(1). Every one of the `|𝒜|^l` leaves is visited.
fn exhaustive_search(z: &[C64], b: &CMatrix, points: &[C64]) -> (Vec<usize>, f64, u64) {
    let (r, zr, rest) = b.qr_reduce(z);
    search_reduced(&r, zr, rest, points)
}

/// Exhaustive search of `‖zr − R x‖² + rest` with `R` upper trapezoidal.
fn search_reduced(r: &CMatrix, zr: Vec<C64>, rest: f64, points: &[C64]) -> (Vec<usize>, f64, u64) {
    let l = r.cols();
    let k = r.rows();
    let na = points.len();
    // contrib[v][a][i] = R[i][v] · points[a] for the rows i ≤ v that x_v touches.
    let contrib: Vec<Vec<Vec<C64>>> = (0..l)
        .map(|v| {
            let touched = (v + 1).min(k);
            points
                .iter()
                .map(|&pt| (0..touched).map(|i| r[(i, v)] * pt).collect())
                .collect()
        })
        .collect();

    // resid[d][i] = zr_i − Σ R_ij x_j over the d variables fixed so far.
    let mut resid = vec![zr; l];
    let mut metric = vec![rest; l];
    let mut idx = vec![0usize; l];
    let mut best_idx = vec![0usize; l];
    let mut best = f64::INFINITY;
    let mut evals = 0u64;
    let mut next = vec![0usize; l];
    let mut depth = 0usize;
    loop {
        if depth == l - 1 {
            // Leaf level: x_0 completes row 0.
            let base = resid[depth][0];
            for (a, c) in contrib[0].iter().enumerate() {
                let m = metric[depth] + (base - c[0]).norm_sqr();
                evals += 1;
                idx[0] = a;
                if m < best || (m == best && idx < best_idx) {
                    best = m;
                    best_idx.copy_from_slice(&idx);
                }
            }
            if depth == 0 {
                break;
            }
            depth -= 1;
            continue;
        }
        if next[depth] == na {
            next[depth] = 0;
            if depth == 0 {
                break;
            }
            depth -= 1;
            continue;
        }
        let v = l - 1 - depth;
        let a = next[depth];
        next[depth] += 1;
        idx[v] = a;
        let c = &contrib[v][a];
        let (head, tail) = resid.split_at_mut(depth + 1);
        let child = &mut tail[0];
        child.copy_from_slice(&head[depth]);
        for (x, y) in child.iter_mut().zip(c) {
            *x -= y;
        }
        metric[depth + 1] = metric[depth] + if v < k { child[v].norm_sqr() } else { 0.0 };
        depth += 1;
    }
    (best_idx, best, evals)
}

fn points_of(indices: &[usize], c: &Constellation) -> Vec<C64> {
    indices.iter().map(|&i| c.point(i)).collect()
}

/// Exact ML decision over all of `𝒜^L`.
pub fn ml_decode(
    y: &[C64],
    eq: &EquivalentChannel,
    c: &Constellation,
    scale: f64,
) -> Result<DecodeResult> {
    check_y(y, eq)?;
    check_guard(Decoder::Ml.complexity(&[eq.symbols()], c.size()))?;
    let b = eq.matrix().scaled(C64::new(scale, 0.0));
    let (idx, metric, evals) = exhaustive_search(y, &b, c.points());
    Ok(DecodeResult {
        symbol_indices: idx,
        norm_evals: evals,
        per_group_residuals: Some(vec![metric]),
    })
}

/// Zero-forcing: per-symbol quantization of `(ℋᴴℋ)⁻¹ℋᴴ y / scale`.
pub fn zf_decode(
    y: &[C64],
    eq: &EquivalentChannel,
    c: &Constellation,
    scale: f64,
) -> Result<DecodeResult> {
    check_y(y, eq)?;
    let x = eq.matrix().least_squares(y)?;
    let symbol_indices: Vec<usize> = x.iter().map(|&v| c.nearest(v / scale)).collect();
    Ok(DecodeResult {
        norm_evals: (symbol_indices.len() * c.size()) as u64,
        symbol_indices,
        per_group_residuals: None,
    })
}

/// Interference-cancelling projectors `Q_p`, one per group, each
/// annihilating the columns of every other group.
pub fn pic_projectors(eq: &EquivalentChannel) -> Vec<CMatrix> {
    (0..eq.groups().len())
        .map(|p| complement_projection_or_identity(eq.rows(), eq.complement_block(p).as_ref()))
        .collect()
}

/// ML search for one group after cancelling the columns in `interf`.
fn decode_group(
    y: &[C64],
    g: &CMatrix,
    interf: Option<&CMatrix>,
    c: &Constellation,
    scale: f64,
) -> (Vec<usize>, f64, u64) {
    let b = g.scaled(C64::new(scale, 0.0));
    let Some(interf) = interf else {
        return exhaustive_search(y, &b, c.points());
    };
    if let Some((r, zr, rest)) = projected_qr_reduce(interf, &b, y) {
        return search_reduced(&r, zr, rest, c.points());
    }
    let q = ComplementProjector::new(y.len(), Some(interf));
    exhaustive_search(&q.apply(y), &q.apply_matrix(&b), c.points())
}

/// PIC group decoding: each group is decoded independently after its
/// interference has been projected out.
pub fn pic_group_decode(
    y: &[C64],
    eq: &EquivalentChannel,
    c: &Constellation,
    scale: f64,
) -> Result<DecodeResult> {
    check_y(y, eq)?;
    let groups = eq.groups();
    check_guard(Decoder::Pic.complexity(&groups.sizes(), c.size()))?;
    let mut symbol_indices = vec![0usize; eq.symbols()];
    let mut residuals = Vec::with_capacity(groups.len());
    let mut norm_evals = 0;
    for p in 0..groups.len() {
        let interf = eq.complement_block(p);
        let (idx, metric, evals) = decode_group(y, &eq.block(p), interf.as_ref(), c, scale);
        for (&slot, i) in groups.blocks()[p].iter().zip(idx) {
            symbol_indices[slot] = i;
        }
        residuals.push(metric);
        norm_evals += evals;
    }
    Ok(DecodeResult {
        symbol_indices,
        norm_evals,
        per_group_residuals: Some(residuals),
    })
}

fn check_order(order: &[usize], groups: usize) -> Result<()> {
    let mut seen = vec![false; groups];
    for &p in order {
        if p >= groups || seen[p] {
            return Err(Error::Config(format!(
                "decoding order {order:?} is not a permutation of 0..{groups}"
            )));
        }
        seen[p] = true;
    }
    if order.len() != groups {
        return Err(Error::Config(format!(
            "decoding order {order:?} is not a permutation of 0..{groups}"
        )));
    }
    Ok(())
}

fn successive(
    y: &[C64],
    eq: &EquivalentChannel,
    c: &Constellation,
    scale: f64,
    order: &[usize],
    require_rank: bool,
) -> Result<DecodeResult> {
    check_y(y, eq)?;
    let groups = eq.groups();
    check_order(order, groups.len())?;
    check_guard(Decoder::PicSic.complexity(&groups.sizes(), c.size()))?;
    let h = eq.matrix();
    let mut y_res = y.to_vec();
    let mut symbol_indices = vec![0usize; eq.symbols()];
    let mut residuals = vec![0.0; groups.len()];
    let mut norm_evals = 0;
    for (stage, &p) in order.iter().enumerate() {
        let remaining: Vec<usize> = order[stage + 1..]
            .iter()
            .flat_map(|&q| groups.blocks()[q].iter().copied())
            .collect();
        let interf = h.select_columns(&remaining);
        let g = eq.block(p);
        if require_rank {
            let q = ComplementProjector::new(eq.rows(), interf.as_ref());
            let projected = q.apply_matrix(&g);
            let rank = projected.numerical_rank(DEFAULT_RTOL);
            let scale_ref = g.frobenius_norm();
            if rank < g.cols() || projected.frobenius_norm() <= DEFAULT_RTOL * scale_ref {
                return Err(Error::RankDeficient {
                    rank,
                    needed: g.cols(),
                    stage: Some(stage),
                });
            }
        }
        let (idx, metric, evals) = decode_group(&y_res, &g, interf.as_ref(), c, scale);
        let s_hat = points_of(&idx, c);
        let contribution = g.mul_vec(&s_hat);
        for (r, v) in y_res.iter_mut().zip(contribution) {
            *r -= v * scale;
        }
        for (&slot, i) in groups.blocks()[p].iter().zip(idx) {
            symbol_indices[slot] = i;
        }
        residuals[p] = metric;
        norm_evals += evals;
    }
    Ok(DecodeResult {
        symbol_indices,
        norm_evals,
        per_group_residuals: Some(residuals),
    })
}

/// PIC-SIC group decoding. Groups are decoded in `order` (natural order when
/// `None`); decided groups are subtracted from `y` and only the groups still
/// pending are projected out.
pub fn pic_sic_group_decode(
    y: &[C64],
    eq: &EquivalentChannel,
    c: &Constellation,
    scale: f64,
    order: Option<&[usize]>,
) -> Result<DecodeResult> {
    let natural: Vec<usize> = (0..eq.groups().len()).collect();
    successive(y, eq, c, scale, order.unwrap_or(&natural), false)
}

/// Symbol-wise successive interference cancellation in natural order.
pub fn sic_symbolwise_decode(
    y: &[C64],
    eq: &EquivalentChannel,
    c: &Constellation,
    scale: f64,
) -> Result<DecodeResult> {
    let singles = eq.with_groups(crate::codes::GroupingScheme::singletons(eq.symbols()))?;
    let order: Vec<usize> = (0..eq.symbols()).collect();
    successive(y, &singles, c, scale, &order, true)
}

/// Runs `decoder`; PIC and PIC-SIC use the grouping carried by `eq`.
pub fn decode(
    decoder: Decoder,
    y: &[C64],
    eq: &EquivalentChannel,
    c: &Constellation,
    scale: f64,
) -> Result<DecodeResult> {
    match decoder {
        Decoder::Ml => ml_decode(y, eq, c, scale),
        Decoder::Zf => zf_decode(y, eq, c, scale),
        Decoder::Pic => pic_group_decode(y, eq, c, scale),
        Decoder::PicSic => pic_sic_group_decode(y, eq, c, scale, None),
        Decoder::Sic => sic_symbolwise_decode(y, eq, c, scale),
    }
}

/// Largest `‖Q_p G_q‖_F` over `q ≠ p`.
pub fn projector_leakage(eq: &EquivalentChannel) -> f64 {
    let projectors = pic_projectors(eq);
    let mut worst: f64 = 0.0;
    for (p, q) in projectors.iter().enumerate() {
        for other in (0..eq.groups().len()).filter(|&o| o != p) {
            worst = worst.max((q * &eq.block(other)).frobenius_norm());
        }
    }
    worst
}

/// Squared residual `‖y − scale·ℋ ŝ‖` of a decision.
pub fn residual_norm(
    y: &[C64],
    eq: &EquivalentChannel,
    c: &Constellation,
    scale: f64,
    indices: &[usize],
) -> f64 {
    let s = points_of(indices, c);
    let fit = eq.apply(&s);
    let diff: Vec<C64> = y.iter().zip(fit).map(|(a, b)| a - b * scale).collect();
    vec_norm(&diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{build_code, GroupingScheme, SHIPPED_CODES};
    use crate::constellation::make_qam;
    use crate::equivch::build;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn cn(rng: &mut impl Rng) -> C64 {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    struct Instance {
        eq: EquivalentChannel,
        truth: Vec<usize>,
        y: Vec<C64>,
    }

    fn instance(
        name: &str,
        n: usize,
        noise: f64,
        c: &Constellation,
        scale: f64,
        rng: &mut impl Rng,
    ) -> Instance {
        let spec = build_code(name, None).unwrap();
        let h = CMatrix::from_fn(spec.antennas(), n, |_, _| cn(rng));
        let eq = build(&spec.dispersion_set(), &h, spec.grouping()).unwrap();
        let truth: Vec<usize> = (0..spec.symbols())
            .map(|_| rng.random_range(0..c.size()))
            .collect();
        let clean = eq.apply(&points_of(&truth, c));
        let y = clean.iter().map(|&v| v * scale + cn(rng) * noise).collect();
        Instance { eq, truth, y }
    }

    #[test]
    fn decoder_names_roundtrip() {
        for d in Decoder::ALL {
            assert_eq!(d.name().parse::<Decoder>().unwrap(), d);
        }
        assert_eq!("PIC-SIC".parse::<Decoder>().unwrap(), Decoder::PicSic);
        assert!("mmse".parse::<Decoder>().is_err());
    }

    #[test]
    fn complexity_formulas() {
        assert_eq!(Decoder::Ml.complexity(&[8], 16), 1u128 << 32);
        assert_eq!(Decoder::Pic.complexity(&[4, 4], 16), 1u128 << 17);
        assert_eq!(Decoder::Zf.complexity(&[8], 16), 128);
        assert_eq!(Decoder::Pic.complexity(&[4, 4, 4], 4), 768);
    }

    #[test]
    fn ml_guard_rejects_c452_16qam() {
        let c = make_qam(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = instance("c4-5-2", 1, 0.1, &c, 1.0, &mut rng);
        let err = ml_decode(&inst.y, &inst.eq, &c, 1.0).unwrap_err();
        assert!(matches!(err, Error::SearchSpace { evals, .. } if evals == 1u128 << 32));
        assert!(err.is_decoder_guard());
    }

    #[test]
    fn noiseless_recovery() {
        let c = make_qam(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for name in SHIPPED_CODES {
            for _ in 0..20 {
                let inst = instance(name, 1, 0.0, &c, 2.0, &mut rng);
                let pic = pic_group_decode(&inst.y, &inst.eq, &c, 2.0).unwrap();
                let sic = pic_sic_group_decode(&inst.y, &inst.eq, &c, 2.0, None).unwrap();
                if name != "c4-6-3" {
                    assert_eq!(pic.symbol_indices, inst.truth, "{name} pic");
                }
                assert_eq!(sic.symbol_indices, inst.truth, "{name} pic-sic");
                if inst.eq.symbols() <= 8 {
                    let ml = ml_decode(&inst.y, &inst.eq, &c, 2.0).unwrap();
                    assert_eq!(ml.symbol_indices, inst.truth, "{name} ml");
                }
            }
        }
    }

    #[test]
    fn ml_single_symbol_is_quantization() {
        let c = make_qam(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let g = cn(&mut rng);
            let eq = EquivalentChannel::new(
                CMatrix::new(1, 1, vec![g]).unwrap(),
                GroupingScheme::single(1),
            )
            .unwrap();
            let y = [cn(&mut rng)];
            let ml = ml_decode(&y, &eq, &c, 1.5).unwrap();
            assert_eq!(ml.symbol_indices, vec![c.nearest(y[0] / (g * 1.5))]);
            assert_eq!(ml.norm_evals, 16);
            let zf = zf_decode(&y, &eq, &c, 1.5).unwrap();
            assert_eq!(zf.symbol_indices, ml.symbol_indices);
            let sic = sic_symbolwise_decode(&y, &eq, &c, 1.5).unwrap();
            assert_eq!(sic.symbol_indices, zf.symbol_indices);
        }
    }

    #[test]
    fn pic_single_group_equals_ml() {
        let c = make_qam(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let inst = instance("c4-5-2", 1, 0.6, &c, 1.0, &mut rng);
            let eq = inst.eq.with_groups(GroupingScheme::single(8)).unwrap();
            let ml = ml_decode(&inst.y, &eq, &c, 1.0).unwrap();
            let pic = pic_group_decode(&inst.y, &eq, &c, 1.0).unwrap();
            assert_eq!(pic.symbol_indices, ml.symbol_indices);
            assert_eq!(pic.norm_evals, 65536);
            let ps = pic_sic_group_decode(&inst.y, &eq, &c, 1.0, None).unwrap();
            assert_eq!(ps.symbol_indices, ml.symbol_indices);
        }
    }

    #[test]
    fn pic_singletons_equal_zf() {
        let c = make_qam(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let inst = instance("c4-5-2", 2, 0.3, &c, 1.0, &mut rng);
            let eq = inst.eq.with_groups(GroupingScheme::singletons(8)).unwrap();
            let zf = zf_decode(&inst.y, &eq, &c, 1.0).unwrap();
            let pic = pic_group_decode(&inst.y, &eq, &c, 1.0).unwrap();
            assert_eq!(pic.symbol_indices, zf.symbol_indices);
            assert_eq!(pic.norm_evals, zf.norm_evals);
        }
    }

    #[test]
    fn zf_equals_ml_on_orthogonal_columns() {
        let c = make_qam(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            // Scaled columns of a unitary built from a complement projector.
            let a = CMatrix::from_fn(6, 3, |_, _| cn(&mut rng));
            let mut cols: Vec<Vec<C64>> = Vec::new();
            for j in 0..3 {
                let v = a.column(j);
                let prev = CMatrix::from_columns(&cols).ok();
                let q = complement_projection_or_identity(6, prev.as_ref());
                let w = q.mul_vec(&v);
                let k = rng.random_range(0.5..2.0) / vec_norm(&w);
                cols.push(w.iter().map(|&x| x * k).collect());
            }
            let eq = EquivalentChannel::new(
                CMatrix::from_columns(&cols).unwrap(),
                GroupingScheme::single(3),
            )
            .unwrap();
            let y: Vec<C64> = (0..6).map(|_| cn(&mut rng)).collect();
            let ml = ml_decode(&y, &eq, &c, 1.0).unwrap();
            let zf = zf_decode(&y, &eq, &c, 1.0).unwrap();
            assert_eq!(ml.symbol_indices, zf.symbol_indices);
        }
    }

    #[test]
    fn zf_rank_deficient() {
        let c = make_qam(4).unwrap();
        let eq = EquivalentChannel::new(CMatrix::zeros(4, 2), GroupingScheme::single(2)).unwrap();
        let err = zf_decode(&[C64::new(0.0, 0.0); 4], &eq, &c, 1.0).unwrap_err();
        assert!(matches!(
            err,
            Error::RankDeficient {
                rank: 0,
                needed: 2,
                ..
            }
        ));
        let err = sic_symbolwise_decode(&[C64::new(0.0, 0.0); 4], &eq, &c, 1.0).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { stage: Some(0), .. }));
    }

    #[test]
    fn sic_equals_pic_sic_with_singletons() {
        let c = make_qam(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for name in ["c4-5-2", "c2-3-2", "d2-4"] {
            for _ in 0..30 {
                let inst = instance(name, 1, 0.2, &c, 1.0, &mut rng);
                let l = inst.eq.symbols();
                let single = inst.eq.with_groups(GroupingScheme::singletons(l)).unwrap();
                let a = sic_symbolwise_decode(&inst.y, &inst.eq, &c, 1.0);
                let b = pic_sic_group_decode(&inst.y, &single, &c, 1.0, None).unwrap();
                match a {
                    Ok(a) => assert_eq!(a.symbol_indices, b.symbol_indices),
                    Err(e) => assert!(e.is_decoder_guard()),
                }
            }
        }
    }

    #[test]
    fn pic_sic_orders_for_c463() {
        let c = make_qam(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let inst = instance("c4-6-3", 1, 0.0, &c, 1.0, &mut rng);
            for order in [[0, 1, 2], [2, 1, 0]] {
                let r = pic_sic_group_decode(&inst.y, &inst.eq, &c, 1.0, Some(&order)).unwrap();
                assert_eq!(r.symbol_indices, inst.truth);
            }
        }
        let inst = instance("c4-6-3", 1, 0.0, &c, 1.0, &mut rng);
        assert!(pic_sic_group_decode(&inst.y, &inst.eq, &c, 1.0, Some(&[0, 0, 1])).is_err());
    }

    #[test]
    fn projectors_cancel_other_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = make_qam(4).unwrap();
        for name in SHIPPED_CODES {
            for n in 1..=2 {
                let inst = instance(name, n, 0.1, &c, 1.0, &mut rng);
                assert!(projector_leakage(&inst.eq) < 1e-10, "{name}");
            }
        }
    }

    #[test]
    fn norm_evals_counters() {
        let c = make_qam(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let inst = instance("d2-4", 1, 0.1, &c, 1.0, &mut rng);
        let pic = pic_group_decode(&inst.y, &inst.eq, &c, 1.0).unwrap();
        assert_eq!(pic.norm_evals, 3 * 256);
        let ps = pic_sic_group_decode(&inst.y, &inst.eq, &c, 1.0, None).unwrap();
        assert_eq!(ps.norm_evals, 3 * 256);
        assert!(zf_decode(&inst.y, &inst.eq, &c, 1.0)
            .unwrap_err()
            .is_decoder_guard());
        let inst = instance("d2-4", 3, 0.1, &c, 1.0, &mut rng);
        let zf = zf_decode(&inst.y, &inst.eq, &c, 1.0).unwrap();
        assert_eq!(zf.norm_evals, 48);
        let inst = instance("c2-3-2", 1, 0.1, &c, 1.0, &mut rng);
        assert_eq!(
            ml_decode(&inst.y, &inst.eq, &c, 1.0).unwrap().norm_evals,
            256
        );
    }

    #[test]
    fn ml_is_global_minimum() {
        let c = make_qam(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let inst = instance("c2-3-2", 1, 0.8, &c, 1.0, &mut rng);
            let ml = ml_decode(&inst.y, &inst.eq, &c, 1.0).unwrap();
            let best = residual_norm(&inst.y, &inst.eq, &c, 1.0, &ml.symbol_indices);
            for code in 0..256usize {
                let idx: Vec<usize> = (0..4).map(|k| (code >> (2 * (3 - k))) & 3).collect();
                assert!(residual_norm(&inst.y, &inst.eq, &c, 1.0, &idx) >= best - 1e-12);
            }
        }
    }

    #[test]
    fn ties_resolve_lexicographically() {
        // A zero channel makes every candidate tie.
        let c = make_qam(4).unwrap();
        let eq = EquivalentChannel::new(CMatrix::zeros(3, 3), GroupingScheme::single(3)).unwrap();
        let ml = ml_decode(&[C64::new(1.0, 0.0); 3], &eq, &c, 1.0).unwrap();
        assert_eq!(ml.symbol_indices, vec![0, 0, 0]);
        let pic = pic_group_decode(&[C64::new(1.0, 0.0); 3], &eq, &c, 1.0).unwrap();
        assert_eq!(pic.symbol_indices, vec![0, 0, 0]);
    }
}
