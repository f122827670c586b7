//! Constellation rotations applied to each layer before it is spread over
//! the codeword.
//!
//! The cyclotomic construction takes integers `(m, n)` with `K = m n` and
//! offsets `n_1 = 0, n_2, ..., n_M`; row `i` of the rotation is
//! `(ζ^{e_i}, ζ^{2 e_i}, ..., ζ^{M e_i})` with `ζ = exp(j 2π / K)` and
//! `e_i = 1 + n_i m`. Every `e_i` must be a unit modulo `K`, and distinct
//! modulo `K`, otherwise two rows coincide.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::cxnum::{CMatrix, C64};
use crate::error::{Error, Result};

/// Angle of the default two-antenna rotation, in radians.
pub const DEFAULT_PLANAR_ANGLE: f64 = 1.02;

fn gcd(mut a: i64, mut b: i64) -> i64 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CyclotomicParams {
    m: i64,
    n: i64,
    /// `offsets[0]` is always 0.
    offsets: Vec<i64>,
}

impl CyclotomicParams {
    /// `rest` holds `n_2, ..., n_M`; `n_1 = 0` is implied.
    pub fn new(m: i64, n: i64, rest: &[i64]) -> Result<Self> {
        let mut offsets = vec![0];
        offsets.extend_from_slice(rest);
        Self::from_offsets(m, n, offsets)
    }

    pub fn from_offsets(m: i64, n: i64, offsets: Vec<i64>) -> Result<Self> {
        if m < 1 || n < 1 {
            return Err(Error::RotationParams(format!(
                "m = {m}, n = {n} must be positive"
            )));
        }
        if offsets.first() != Some(&0) {
            return Err(Error::RotationParams("the first offset must be 0".into()));
        }
        let k = m * n;
        for (i, &a) in offsets.iter().enumerate() {
            if offsets[..i].contains(&a) {
                return Err(Error::DuplicateOffsets);
            }
        }
        let exps: Vec<i64> = offsets.iter().map(|&o| (1 + o * m).rem_euclid(k)).collect();
        for (i, &o) in offsets.iter().enumerate().skip(1) {
            let e = 1 + o * m;
            if gcd(e, k) != 1 {
                return Err(Error::NotCoprime {
                    offset: o,
                    m,
                    exponent: e,
                    k,
                });
            }
            if let Some(j) = exps[..i].iter().position(|&x| x == exps[i]) {
                return Err(Error::CollidingExponents(offsets[j], o));
            }
        }
        Ok(Self { m, n, offsets })
    }

    pub fn antennas(&self) -> usize {
        self.offsets.len()
    }

    pub fn m(&self) -> i64 {
        self.m
    }

    pub fn n(&self) -> i64 {
        self.n
    }

    pub fn k(&self) -> i64 {
        self.m * self.n
    }

    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    /// Row exponents `e_i = 1 + n_i m`, reduced modulo `K`.
    pub fn exponents(&self) -> Vec<i64> {
        self.offsets
            .iter()
            .map(|&o| (1 + o * self.m).rem_euclid(self.k()))
            .collect()
    }
}

/// `m,n,n2,...,nM` as accepted by `--rotation`.
impl FromStr for CyclotomicParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let nums = s
            .split(',')
            .map(|t| t.trim().parse::<i64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("bad rotation `{s}`: {e}")))?;
        if nums.len() < 2 {
            return Err(Error::Config(format!(
                "bad rotation `{s}`: need m,n,n2,..."
            )));
        }
        Self::new(nums[0], nums[1], &nums[2..])
    }
}

impl fmt::Display for CyclotomicParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.m, self.n)?;
        for o in &self.offsets[1..] {
            write!(f, ",{o}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Lattice {
    Triangular,
    Square,
}

/// Preset lattice parameters for `antennas` transmit antennas.
///
/// Four antennas use `(3, 5; 0, 1, 2, 4)` on the triangular lattice and
/// `(4, 4; 0, 1, 2, 3)` on the square one; five antennas use
/// `(5, 5; 0, 1, 2, 3, 4)`. Anything else gets `m = 4` with the smallest `n`
/// for which `M` residues `r < n` have `1 + 4r` coprime with `4n`, taking
/// those residues in increasing order.
pub fn default_params(antennas: usize, lattice: Lattice) -> CyclotomicParams {
    assert!(antennas >= 1, "need at least one antenna");
    let (m, n, offsets): (i64, i64, Vec<i64>) = match (antennas, lattice) {
        (4, Lattice::Triangular) => (3, 5, vec![0, 1, 2, 4]),
        (4, Lattice::Square) => (4, 4, vec![0, 1, 2, 3]),
        (5, _) => (5, 5, vec![0, 1, 2, 3, 4]),
        _ => {
            let mut n = 1i64;
            loop {
                let k = 4 * n;
                let found: Vec<i64> = (0..n)
                    .filter(|&r| gcd(1 + 4 * r, k) == 1)
                    .take(antennas)
                    .collect();
                if found.len() == antennas {
                    break (4, n, found);
                }
                n += 1;
            }
        }
    };
    CyclotomicParams::from_offsets(m, n, offsets).expect("preset parameters are valid")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RotationKind {
    Cyclotomic(CyclotomicParams),
    Planar { theta: f64 },
    Custom,
}

/// Square precoding matrix applied to each layer's symbol vector.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationMatrix {
    theta: CMatrix,
    kind: RotationKind,
}

pub fn cyclotomic_rotation(params: &CyclotomicParams) -> RotationMatrix {
    let m = params.antennas();
    let k = params.k();
    let exps = params.exponents();
    let theta = CMatrix::from_fn(m, m, |i, j| {
        let power = ((j as i64 + 1) * exps[i]).rem_euclid(k);
        C64::from_polar(1.0, 2.0 * PI * power as f64 / k as f64)
    });
    RotationMatrix {
        theta,
        kind: RotationKind::Cyclotomic(params.clone()),
    }
}

/// `[[cos θ, sin θ], [-sin θ, cos θ]]`.
pub fn planar_rotation_2x2(theta: f64) -> Result<RotationMatrix> {
    let (s, c) = theta.sin_cos();
    if !theta.is_finite() || s.abs() < 1e-12 || c.abs() < 1e-12 {
        return Err(Error::AxisAligned(theta));
    }
    let theta_m = CMatrix::from_rows(&[
        vec![C64::new(c, 0.0), C64::new(s, 0.0)],
        vec![C64::new(-s, 0.0), C64::new(c, 0.0)],
    ])?;
    Ok(RotationMatrix {
        theta: theta_m,
        kind: RotationKind::Planar { theta },
    })
}

impl RotationMatrix {
    /// Wraps an arbitrary square matrix without the structural checks the
    /// named constructors enforce. Useful for negative controls.
    pub fn from_matrix(theta: CMatrix) -> Result<Self> {
        if theta.rows() != theta.cols() {
            return Err(Error::Dimension(format!(
                "rotation must be square, got {}x{}",
                theta.rows(),
                theta.cols()
            )));
        }
        Ok(Self {
            theta,
            kind: RotationKind::Custom,
        })
    }

    /// Default rotation for a given antenna count: the planar rotation at
    /// 1.02 rad for two antennas, the square-lattice cyclotomic one otherwise.
    pub fn default_for(antennas: usize) -> Self {
        if antennas == 2 {
            planar_rotation_2x2(DEFAULT_PLANAR_ANGLE).expect("1.02 rad is not axis aligned")
        } else {
            cyclotomic_rotation(&default_params(antennas, Lattice::Square))
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.theta
    }

    pub fn kind(&self) -> &RotationKind {
        &self.kind
    }

    pub fn size(&self) -> usize {
        self.theta.rows()
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.theta[(i, j)]
    }

    pub fn apply(&self, s: &[C64]) -> Vec<C64> {
        self.theta.mul_vec(s)
    }
}

impl fmt::Display for RotationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RotationKind::Cyclotomic(p) => write!(f, "cyclotomic({p})"),
            RotationKind::Planar { theta } => write!(f, "planar({theta})"),
            RotationKind::Custom => write!(f, "custom"),
        }
    }
}
