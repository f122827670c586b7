//! Gray-labelled square QAM alphabets scaled to unit average energy.
//!
//! A symbol index is the integer value of its bit label (MSB first), so
//! `points[i]` is the point carrying label `i`. The upper half of the label
//! selects the in-phase level and the lower half the quadrature level, each
//! through a binary-reflected Gray code.

use std::fmt;
use std::str::FromStr;

use crate::cxnum::C64;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    name: String,
    points: Vec<C64>,
    bits_per_symbol: usize,
}

fn gray_to_binary(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

/// Builds a square QAM alphabet of the given order.
pub fn make_qam(order: usize) -> Result<Constellation> {
    let bits_per_symbol = match order {
        4 => 2,
        16 => 4,
        64 => 6,
        256 => 8,
        _ => return Err(Error::UnsupportedOrder(order)),
    };
    let half = bits_per_symbol / 2;
    let side = 1usize << half;
    // Mean of |a|^2 over the odd-integer grid is 2(side^2 - 1)/3.
    let scale = (2.0 * (order as f64 - 1.0) / 3.0).sqrt().recip();
    let level = |label: usize| 2.0 * gray_to_binary(label) as f64 - (side as f64 - 1.0);
    let mask = side - 1;
    let points = (0..order)
        .map(|label| C64::new(level(label >> half), level(label & mask)) * scale)
        .collect();
    Ok(Constellation {
        name: format!("{order}qam"),
        points,
        bits_per_symbol,
    })
}

impl Constellation {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn point(&self, index: usize) -> C64 {
        self.points[index]
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Index of the closest point; ties go to the smaller index.
    pub fn nearest(&self, z: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Groups bits (MSB first) into symbol indices.
    pub fn bits_to_symbols(&self, bits: &[bool]) -> Result<Vec<usize>> {
        let k = self.bits_per_symbol;
        if !bits.len().is_multiple_of(k) {
            return Err(Error::BitLength {
                len: bits.len(),
                bits_per_symbol: k,
            });
        }
        Ok(bits
            .chunks(k)
            .map(|chunk| chunk.iter().fold(0, |acc, &b| (acc << 1) | b as usize))
            .collect())
    }

    pub fn symbols_to_bits(&self, symbols: &[usize]) -> Vec<bool> {
        let k = self.bits_per_symbol;
        symbols
            .iter()
            .flat_map(|&s| (0..k).rev().map(move |i| (s >> i) & 1 == 1))
            .collect()
    }

    /// Number of differing label bits between two symbol indices.
    pub fn bit_distance(&self, a: usize, b: usize) -> u32 {
        (a ^ b).count_ones()
    }
}

/// CLI-facing modulation label (`4qam`, `16qam`, ...).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulation(pub usize);

impl Modulation {
    pub fn constellation(self) -> Result<Constellation> {
        make_qam(self.0)
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let digits = lower
            .strip_suffix("qam")
            .ok_or_else(|| Error::Config(format!("unknown modulation `{s}`")))?;
        let order: usize = digits
            .parse()
            .map_err(|_| Error::Config(format!("unknown modulation `{s}`")))?;
        make_qam(order)?;
        Ok(Modulation(order))
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}qam", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn qpsk_points() {
        let c = make_qam(4).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for p in c.points() {
            assert!((p.re.abs() - r).abs() < 1e-15 && (p.im.abs() - r).abs() < 1e-15);
        }
        assert!((c.average_energy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scale_factors() {
        // Raw grid energies: 10 for 16QAM, 42 for 64QAM.
        for (order, raw) in [(16usize, 10.0f64), (64, 42.0)] {
            let c = make_qam(order).unwrap();
            let min_re = c
                .points()
                .iter()
                .map(|p| p.re.abs())
                .fold(f64::INFINITY, f64::min);
            assert!((min_re - raw.sqrt().recip()).abs() < 1e-15);
            assert!((c.average_energy() - 1.0).abs() < 1e-12);
        }
        assert!((make_qam(256).unwrap().average_energy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_other_orders() {
        assert!(matches!(make_qam(8), Err(Error::UnsupportedOrder(8))));
        assert!(matches!(make_qam(32), Err(Error::UnsupportedOrder(32))));
    }

    #[test]
    fn points_distinct_and_gray_neighbours() {
        for order in [4, 16, 64, 256] {
            let c = make_qam(order).unwrap();
            let spacing = 2.0 / (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
            for i in 0..order {
                for j in (i + 1)..order {
                    let d = (c.point(i) - c.point(j)).norm();
                    assert!(d > 1e-9);
                    if (d - spacing).abs() < 1e-9 {
                        assert_eq!(c.bit_distance(i, j), 1, "order {order}: {i} vs {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn bit_mapping() {
        let c4 = make_qam(4).unwrap();
        assert!(c4.bits_to_symbols(&[]).unwrap().is_empty());
        assert_eq!(c4.bits_to_symbols(&[false; 10]).unwrap(), vec![0; 5]);
        assert!(c4.bits_to_symbols(&[true; 3]).is_err());

        let c16 = make_qam(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bits: Vec<bool> = (0..1000).map(|_| rng.random()).collect();
        let symbols = c16.bits_to_symbols(&bits).unwrap();
        assert_eq!(c16.symbols_to_bits(&symbols), bits);
    }

    #[test]
    fn nearest_recovers_points() {
        let c = make_qam(64).unwrap();
        for i in 0..64 {
            assert_eq!(c.nearest(c.point(i) + C64::new(0.01, -0.01)), i);
        }
    }

    #[test]
    fn modulation_flag() {
        assert_eq!("16QAM".parse::<Modulation>().unwrap(), Modulation(16));
        assert_eq!(Modulation(64).to_string(), "64qam");
        assert!("8psk".parse::<Modulation>().is_err());
        assert!("8qam".parse::<Modulation>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bits_roundtrip(order in prop::sample::select(vec![4usize, 16, 64, 256]), n in 0usize..40, seed in any::<u64>()) {
                let c = make_qam(order).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let bits: Vec<bool> = (0..n * c.bits_per_symbol()).map(|_| rng.random()).collect();
                let s = c.bits_to_symbols(&bits).unwrap();
                prop_assert_eq!(c.symbols_to_bits(&s), bits);
            }
        }
    }
}
