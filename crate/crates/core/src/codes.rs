//! Layered space-time block codes.
//!
//! Both families share one representation: `P` layers, each the rotated
//! symbol vector `X_p = Θ s_p` of length `M`, with entry `X_{p,j}` written to
//! column `j` at a row given by a placement table. The diagonal-layer family
//! stacks descending diagonals; the three-layer family interleaves three
//! layers so that every column carries exactly one entry of each layer.

use std::fmt;

use num_rational::Rational64;
use serde::Serialize;

use crate::cxnum::{CMatrix, C64, ZERO};
use crate::error::{Error, Result};
use crate::rotation::{
    cyclotomic_rotation, default_params, CyclotomicParams, Lattice, RotationMatrix,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Descending-diagonal layers (`T >= M`).
    DiagonalLayers,
    /// Three interleaved layers.
    ThreeLayer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodeSpec {
    id: String,
    family: Family,
    antennas: usize,
    block_len: usize,
    rotation: RotationMatrix,
    /// `placement[p][j]` is the row holding `X_{p,j}`.
    placement: Vec<Vec<usize>>,
}

/// A `T x M` codeword.
#[derive(Clone, Debug, PartialEq)]
pub struct Codeword(CMatrix);

impl Codeword {
    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }
}

/// The `L` basis matrices `A_l` with `C(s) = Σ A_l s_l`.
#[derive(Clone, Debug, PartialEq)]
pub struct DispersionSet {
    matrices: Vec<CMatrix>,
}

impl DispersionSet {
    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn combine(&self, s: &[C64]) -> Result<CMatrix> {
        if s.len() != self.matrices.len() {
            return Err(Error::SymbolCount {
                expected: self.matrices.len(),
                got: s.len(),
            });
        }
        let first = &self.matrices[0];
        let mut acc = CMatrix::zeros(first.rows(), first.cols());
        for (a, &x) in self.matrices.iter().zip(s) {
            acc = acc.add(&a.scaled(x));
        }
        Ok(acc)
    }
}

/// Partition of symbol indices `0..L` into decoding groups.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GroupingScheme {
    blocks: Vec<Vec<usize>>,
}

impl GroupingScheme {
    pub fn new(blocks: Vec<Vec<usize>>, symbols: usize) -> Result<Self> {
        let mut seen = vec![false; symbols];
        for &i in blocks.iter().flatten() {
            if i >= symbols || seen[i] {
                return Err(Error::Config(format!(
                    "grouping is not a partition of 0..{symbols}"
                )));
            }
            seen[i] = true;
        }
        if blocks.iter().any(Vec::is_empty) || seen.iter().any(|s| !s) {
            return Err(Error::Config(format!(
                "grouping is not a partition of 0..{symbols}"
            )));
        }
        Ok(Self { blocks })
    }

    /// `count` consecutive blocks of `size` indices.
    pub fn contiguous(count: usize, size: usize) -> Self {
        Self {
            blocks: (0..count)
                .map(|p| (p * size..(p + 1) * size).collect())
                .collect(),
        }
    }

    pub fn single(symbols: usize) -> Self {
        Self::contiguous(1, symbols)
    }

    pub fn singletons(symbols: usize) -> Self {
        Self::contiguous(symbols, 1)
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn symbols(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    /// Indices of every block except `p`, in increasing block order.
    pub fn complement(&self, p: usize) -> Vec<usize> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|&(q, _)| q != p)
            .flat_map(|(_, b)| b.iter().copied())
            .collect()
    }
}

/// Diagonal-layer code with `P = T - M + 1` consecutive diagonals.
pub fn design1_spec(
    antennas: usize,
    block_len: usize,
    rotation: RotationMatrix,
) -> Result<CodeSpec> {
    if block_len < antennas {
        return Err(Error::BlockTooShort {
            m: antennas,
            t: block_len,
        });
    }
    design1_spec_layers(antennas, block_len, block_len - antennas + 1, rotation)
}

/// Diagonal-layer code with `layers` diagonals spread evenly over the block:
/// layer `p` starts at row `p (T - M) / (P - 1)`. With `P = T - M + 1` this is
/// the consecutive-diagonal layout; `(4, 6, 2)` shifts the second layer by two.
pub fn design1_spec_layers(
    antennas: usize,
    block_len: usize,
    layers: usize,
    rotation: RotationMatrix,
) -> Result<CodeSpec> {
    if block_len < antennas {
        return Err(Error::BlockTooShort {
            m: antennas,
            t: block_len,
        });
    }
    check_rotation(antennas, &rotation)?;
    let slack = block_len - antennas;
    let offsets: Vec<usize> = match layers {
        0 => return Err(Error::Layout("need at least one layer".into())),
        1 if slack == 0 => vec![0],
        1 => {
            return Err(Error::Layout(format!(
                "one layer needs T = M, got T = {block_len}"
            )))
        }
        _ if layers - 1 > slack || !slack.is_multiple_of(layers - 1) => {
            return Err(Error::Layout(format!(
                "{layers} layers cannot be spaced evenly over {} spare rows",
                slack
            )))
        }
        _ => {
            let step = slack / (layers - 1);
            (0..layers).map(|p| p * step).collect()
        }
    };
    let placement = offsets
        .iter()
        .map(|&off| (0..antennas).map(|j| off + j).collect())
        .collect();
    let spec = CodeSpec {
        id: format!("c{antennas}-{block_len}-{layers}"),
        family: Family::DiagonalLayers,
        antennas,
        block_len,
        rotation,
        placement,
    };
    spec.check_placement()?;
    Ok(spec)
}

/// Three-layer code for `M >= 3` antennas (see [`design2_layout`]).
pub fn design2_spec(antennas: usize, rotation: RotationMatrix) -> Result<CodeSpec> {
    check_rotation(antennas, &rotation)?;
    let (block_len, placement) = design2_layout(antennas)?;
    let spec = CodeSpec {
        id: format!("d2-{antennas}"),
        family: Family::ThreeLayer,
        antennas,
        block_len,
        rotation,
        placement,
    };
    spec.check_placement()?;
    Ok(spec)
}

fn check_rotation(antennas: usize, rotation: &RotationMatrix) -> Result<()> {
    if rotation.size() != antennas {
        return Err(Error::Dimension(format!(
            "{0}x{0} rotation for {antennas} antennas",
            rotation.size()
        )));
    }
    Ok(())
}

/// Row layout of the three-layer code: `(T, placement)` with 0-based rows.
///
/// Columns fall into three classes by `j mod 3`. Within the first rows,
/// block `q` (rows `3q-2..3q`) carries `X_{1,3q-2}` next to `X_{2,3q-5}`,
/// `X_{2,3q-1}` next to `X_{3,3q-4}`, and `X_{1,3q-3}` next to `X_{3,3q}`;
/// the third entry of each column wraps into the trailing rows.
///
/// * `M = 3p`: `T = 4p + 2`.
/// * `M = 3p + 1`: `T = 4p + 3`, the last column fills three extra rows and
///   the first wrap row gathers `X_{3,1}, X_{1,2}, X_{2,3}`.
/// * `M = 3p - 1` (`p >= 2`): `T = 4p + 1`, columns `3p-2` and `3p-1` take
///   over the slots the missing column `3p` would occupy.
pub fn design2_layout(antennas: usize) -> Result<(usize, Vec<Vec<usize>>)> {
    let m = antennas;
    // (row, layer, col), all 1-based.
    type Put<'a> = dyn FnMut(usize, &[(usize, isize)]) + 'a;
    let mut cells: Vec<(usize, usize, usize)> = Vec::new();
    let mut put = |row: usize, entries: &[(usize, isize)]| {
        for &(layer, col) in entries {
            if col >= 1 && col as usize <= m {
                cells.push((row, layer, col as usize));
            }
        }
    };
    let block = |put: &mut Put, q: usize| {
        let r0 = 3 * (q - 1);
        let q = q as isize;
        put(r0 + 1, &[(1, 3 * q - 2), (2, 3 * q - 5)]);
        put(r0 + 2, &[(2, 3 * q - 1), (3, 3 * q - 4)]);
        put(r0 + 3, &[(1, 3 * q - 3), (3, 3 * q)]);
    };
    let tail = |put: &mut Put, row: usize, q: usize| {
        let q = q as isize;
        put(row, &[(3, 3 * q - 2), (1, 3 * q - 1), (2, 3 * q)]);
    };

    let block_len = match m % 3 {
        0 if m >= 3 => {
            let p = m / 3;
            let pi = p as isize;
            for q in 1..=p {
                block(&mut put, q);
            }
            put(3 * p + 1, &[(1, 2), (2, 3 * pi - 2)]);
            put(3 * p + 2, &[(2, 3), (3, 3 * pi - 1)]);
            put(3 * p + 3, &[(3, 1), (1, 3 * pi)]);
            for q in 2..=p {
                tail(&mut put, 3 * p + 3 + q - 1, q);
            }
            4 * p + 2
        }
        1 if m >= 4 => {
            let p = (m - 1) / 3;
            let pi = p as isize;
            for q in 1..=p {
                block(&mut put, q);
            }
            put(3 * p + 1, &[(2, 3 * pi - 2), (1, 3 * pi + 1)]);
            put(3 * p + 2, &[(3, 3 * pi - 1), (2, 3 * pi + 1)]);
            put(3 * p + 3, &[(1, 3 * pi), (3, 3 * pi + 1)]);
            put(3 * p + 4, &[(3, 1), (1, 2), (2, 3)]);
            for q in 2..=p {
                tail(&mut put, 3 * p + 4 + q - 1, q);
            }
            4 * p + 3
        }
        2 if m >= 5 => {
            let p = (m + 1) / 3;
            let pi = p as isize;
            for q in 1..p {
                block(&mut put, q);
            }
            put(3 * p - 2, &[(1, 3 * pi - 2), (2, 3 * pi - 5)]);
            put(3 * p - 1, &[(2, 3 * pi - 1), (3, 3 * pi - 4)]);
            put(3 * p, &[(1, 3 * pi - 3), (3, 3 * pi - 2)]);
            put(3 * p + 1, &[(1, 2), (2, 3 * pi - 2)]);
            put(3 * p + 2, &[(2, 3), (3, 3 * pi - 1)]);
            put(3 * p + 3, &[(3, 1), (1, 3 * pi - 1)]);
            for q in 2..p {
                tail(&mut put, 3 * p + 3 + q - 1, q);
            }
            4 * p + 1
        }
        _ => return Err(Error::UnsupportedAntennas(m)),
    };

    let mut placement = vec![vec![usize::MAX; m]; 3];
    for (row, layer, col) in cells {
        let slot = &mut placement[layer - 1][col - 1];
        if *slot != usize::MAX {
            return Err(Error::Layout(format!("X_{{{layer},{col}}} placed twice")));
        }
        *slot = row - 1;
    }
    Ok((block_len, placement))
}

/// Rate `M P / T` of a diagonal-layer code.
pub fn design1_rate(antennas: usize, block_len: usize, layers: usize) -> Rational64 {
    Rational64::new((antennas * layers) as i64, block_len as i64)
}

/// Closed-form rate of the three-layer family:
/// `9M/(4M+6)`, `9M/(4M+4)`, `9M/(4M+5)` for `M ≡ 0, 2, 1 (mod 3)`.
pub fn design2_rate(antennas: usize) -> Rational64 {
    let m = antennas as i64;
    let den = match m % 3 {
        0 => 4 * m + 6,
        2 => 4 * m + 4,
        _ => 4 * m + 5,
    };
    Rational64::new(9 * m, den)
}

impl CodeSpec {
    fn check_placement(&self) -> Result<()> {
        let mut occupied = vec![vec![false; self.antennas]; self.block_len];
        for (p, rows) in self.placement.iter().enumerate() {
            if rows.len() != self.antennas {
                return Err(Error::Layout(format!(
                    "layer {} has {} entries",
                    p + 1,
                    rows.len()
                )));
            }
            for (j, &t) in rows.iter().enumerate() {
                if t >= self.block_len {
                    return Err(Error::Layout(format!("X_{{{},{}}} unplaced", p + 1, j + 1)));
                }
                if occupied[t][j] {
                    return Err(Error::Layout(format!(
                        "cell ({}, {}) used twice",
                        t + 1,
                        j + 1
                    )));
                }
                occupied[t][j] = true;
            }
        }
        if let Some(t) = occupied.iter().position(|r| r.iter().all(|x| !x)) {
            return Err(Error::Layout(format!("row {} is empty", t + 1)));
        }
        Ok(())
    }

    /// Replaces the display identifier, e.g. with a CLI alias.
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Same layout with a different rotation.
    pub fn with_rotation(mut self, rotation: RotationMatrix) -> Result<Self> {
        check_rotation(self.antennas, &rotation)?;
        self.rotation = rotation;
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// `M`.
    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// `T`.
    pub fn block_len(&self) -> usize {
        self.block_len
    }

    /// `P`.
    pub fn layers(&self) -> usize {
        self.placement.len()
    }

    /// `L = M P`.
    pub fn symbols(&self) -> usize {
        self.antennas * self.layers()
    }

    pub fn rotation(&self) -> &RotationMatrix {
        &self.rotation
    }

    pub fn placement(&self) -> &[Vec<usize>] {
        &self.placement
    }

    /// Code rate. Diagonal layers: `M P / T`. Three layers: the closed form
    /// of [`design2_rate`].
    pub fn rate(&self) -> Rational64 {
        match self.family {
            Family::DiagonalLayers => design1_rate(self.antennas, self.block_len, self.layers()),
            Family::ThreeLayer => design2_rate(self.antennas),
        }
    }

    /// `L / T` of the constructed layout.
    pub fn layout_rate(&self) -> Rational64 {
        Rational64::new(self.symbols() as i64, self.block_len as i64)
    }

    /// Layer-major symbol grouping: block `p` holds `s_p`.
    pub fn grouping(&self) -> GroupingScheme {
        GroupingScheme::contiguous(self.layers(), self.antennas)
    }

    pub fn encode(&self, s: &[C64]) -> Result<Codeword> {
        if s.len() != self.symbols() {
            return Err(Error::SymbolCount {
                expected: self.symbols(),
                got: s.len(),
            });
        }
        let m = self.antennas;
        let mut c = CMatrix::zeros(self.block_len, m);
        for (p, rows) in self.placement.iter().enumerate() {
            let x = self.rotation.apply(&s[p * m..(p + 1) * m]);
            for (j, &t) in rows.iter().enumerate() {
                c[(t, j)] = x[j];
            }
        }
        Ok(Codeword(c))
    }

    pub fn dispersion_set(&self) -> DispersionSet {
        let l = self.symbols();
        let matrices = (0..l)
            .map(|i| {
                let mut e = vec![ZERO; l];
                e[i] = C64::new(1.0, 0.0);
                self.encode(&e)
                    .expect("unit vector has L entries")
                    .into_matrix()
            })
            .collect();
        DispersionSet { matrices }
    }

    /// Cell map: `pattern()[t][j] = Some((p, j))` when `X_{p+1,j+1}` sits at
    /// `(t, j)`.
    pub fn pattern(&self) -> Vec<Vec<Option<usize>>> {
        let mut out = vec![vec![None; self.antennas]; self.block_len];
        for (p, rows) in self.placement.iter().enumerate() {
            for (j, &t) in rows.iter().enumerate() {
                out[t][j] = Some(p);
            }
        }
        out
    }
}

impl fmt::Display for CodeSpec {
    /// Renders the placement pattern, one codeword row per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = format!("X{},{}", self.layers(), self.antennas).len();
        for row in self.pattern() {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, cell)| match cell {
                    Some(p) => format!("{:>width$}", format!("X{},{}", p + 1, j + 1)),
                    None => format!("{:>width$}", "0"),
                })
                .collect();
            writeln!(f, "{}", cells.join(" "))?;
        }
        Ok(())
    }
}

/// Codes with CLI aliases.
pub const SHIPPED_CODES: [&str; 8] = [
    "c2-3-2", "c4-5-2", "c4-6-2", "c4-6-3", "c5-6-2", "d2-4", "d2-6", "d2-9",
];

fn rotation_for(antennas: usize, custom: Option<&CyclotomicParams>) -> Result<RotationMatrix> {
    match custom {
        Some(p) if p.antennas() != antennas => Err(Error::Config(format!(
            "rotation has {} offsets for {antennas} antennas",
            p.antennas()
        ))),
        Some(p) => Ok(cyclotomic_rotation(p)),
        None if antennas == 2 => Ok(RotationMatrix::default_for(2)),
        None => Ok(cyclotomic_rotation(&default_params(
            antennas,
            Lattice::Square,
        ))),
    }
}

fn parse_counts(s: &str, sep: char) -> Option<Vec<usize>> {
    s.split(sep).map(|t| t.trim().parse().ok()).collect()
}

/// Resolves a code name: an alias (`c4-5-2`, `d2-6`), `cM-T-P`, `d1:M,T[,P]`
/// or `d2:M`. `rotation` overrides the default rotation.
pub fn build_code(name: &str, rotation: Option<&CyclotomicParams>) -> Result<CodeSpec> {
    let unknown = || Error::UnknownCode(name.to_string());
    let lower = name.trim().to_ascii_lowercase();
    if let Some(rest) = lower.strip_prefix("d1:") {
        let v = parse_counts(rest, ',').ok_or_else(unknown)?;
        return match v[..] {
            [m, t] => design1_spec(m, t, rotation_for(m, rotation)?),
            [m, t, p] => design1_spec_layers(m, t, p, rotation_for(m, rotation)?),
            _ => Err(unknown()),
        };
    }
    if let Some(rest) = lower
        .strip_prefix("d2:")
        .or_else(|| lower.strip_prefix("d2-"))
    {
        let m: usize = rest.parse().map_err(|_| unknown())?;
        return Ok(design2_spec(m, rotation_for(m, rotation)?)?.with_id(format!("d2-{m}")));
    }
    if let Some(rest) = lower.strip_prefix('c') {
        if let Some([m, t, p]) = parse_counts(rest, '-').as_deref() {
            return design1_spec_layers(*m, *t, *p, rotation_for(*m, rotation)?);
        }
    }
    Err(unknown())
}
