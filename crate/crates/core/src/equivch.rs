//! Equivalent channel `ℋ` with `vec(C(s) H) = ℋ s`.

use crate::codes::{DispersionSet, GroupingScheme};
use crate::cxnum::{CMatrix, C64, ZERO};
use crate::error::{Error, Result};
use crate::rotation::RotationMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalentChannel {
    h_eq: CMatrix,
    groups: GroupingScheme,
}

impl EquivalentChannel {
    pub fn new(h_eq: CMatrix, groups: GroupingScheme) -> Result<Self> {
        if groups.symbols() != h_eq.cols() {
            return Err(Error::Dimension(format!(
                "grouping covers {} symbols, channel has {} columns",
                groups.symbols(),
                h_eq.cols()
            )));
        }
        Ok(Self { h_eq, groups })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.h_eq
    }

    pub fn groups(&self) -> &GroupingScheme {
        &self.groups
    }

    pub fn with_groups(&self, groups: GroupingScheme) -> Result<Self> {
        Self::new(self.h_eq.clone(), groups)
    }

    /// `TN`.
    pub fn rows(&self) -> usize {
        self.h_eq.rows()
    }

    /// `L`.
    pub fn symbols(&self) -> usize {
        self.h_eq.cols()
    }

    /// Column block `G_p`.
    pub fn block(&self, p: usize) -> CMatrix {
        self.h_eq
            .select_columns(&self.groups.blocks()[p])
            .expect("groups are non-empty")
    }

    /// Columns of every group except `p`; `None` when there is only one group.
    pub fn complement_block(&self, p: usize) -> Option<CMatrix> {
        self.h_eq.select_columns(&self.groups.complement(p))
    }

    /// `ℋ s`.
    pub fn apply(&self, s: &[C64]) -> Vec<C64> {
        self.h_eq.mul_vec(s)
    }
}

/// Generic construction: column `l` is `vec(A_l H)`.
pub fn build(
    disp: &DispersionSet,
    h: &CMatrix,
    groups: GroupingScheme,
) -> Result<EquivalentChannel> {
    let first = disp
        .matrices()
        .first()
        .ok_or_else(|| Error::Dimension("empty dispersion set".into()))?;
    if first.cols() != h.rows() {
        return Err(Error::Dimension(format!(
            "codeword has {} columns, channel has {} rows",
            first.cols(),
            h.rows()
        )));
    }
    let columns: Vec<Vec<C64>> = disp
        .matrices()
        .iter()
        .map(|a| (a * h).vectorize())
        .collect();
    EquivalentChannel::new(CMatrix::from_columns(&columns)?, groups)
}

fn check_receive_vector(rot: &RotationMatrix, h: &[C64]) -> Result<()> {
    if h.len() != rot.size() {
        return Err(Error::Dimension(format!(
            "channel vector of length {} for {} antennas",
            h.len(),
            rot.size()
        )));
    }
    Ok(())
}

/// Single-receive-antenna closed form for the consecutive-diagonal code:
/// `G_p = [0_{(p-1)×M}; diag(h) Θ; 0_{(P-p)×M}]`.
pub fn design1_closed_form(
    block_len: usize,
    rot: &RotationMatrix,
    h: &[C64],
) -> Result<EquivalentChannel> {
    check_receive_vector(rot, h)?;
    let m = rot.size();
    if block_len < m {
        return Err(Error::BlockTooShort { m, t: block_len });
    }
    let layers = block_len - m + 1;
    let mat = CMatrix::from_fn(block_len, m * layers, |t, l| {
        let (p, k) = (l / m, l % m);
        match t.checked_sub(p) {
            Some(i) if i < m => h[i] * rot.entry(i, k),
            _ => ZERO,
        }
    });
    EquivalentChannel::new(mat, GroupingScheme::contiguous(layers, m))
}

/// Single-receive-antenna closed form for the three-layer code with
/// `M = 3p`. Row `t` of `ℋ` is `[a_t, b_t, c_t]` with each entry either zero
/// or `g_i = h_i Θ_i` (a scaled row of `Θ`).
pub fn design2_closed_form(rot: &RotationMatrix, h: &[C64]) -> Result<EquivalentChannel> {
    check_receive_vector(rot, h)?;
    let m = rot.size();
    if !m.is_multiple_of(3) {
        return Err(Error::UnsupportedAntennas(m));
    }
    let p = (m / 3) as isize;
    // 1-based g indices per group; values outside 1..=M mean zero.
    let mut rows: Vec<[isize; 3]> = Vec::new();
    for q in 1..=p {
        rows.push([3 * q - 2, 3 * q - 5, 0]);
        rows.push([0, 3 * q - 1, 3 * q - 4]);
        rows.push([3 * q - 3, 0, 3 * q]);
    }
    rows.push([2, 3 * p - 2, 0]);
    rows.push([0, 3, 3 * p - 1]);
    rows.push([3 * p, 0, 1]);
    for q in 2..=p {
        rows.push([3 * q - 1, 3 * q, 3 * q - 2]);
    }
    let mat = CMatrix::from_fn(rows.len(), 3 * m, |t, l| {
        let g = rows[t][l / m];
        if g >= 1 && g as usize <= m {
            let i = g as usize - 1;
            h[i] * rot.entry(i, l % m)
        } else {
            ZERO
        }
    });
    EquivalentChannel::new(mat, GroupingScheme::contiguous(3, m))
}
