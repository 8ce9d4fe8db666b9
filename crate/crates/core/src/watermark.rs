//! Watermark bit strings and their hexadecimal form.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `L` bits, used as `{0, 1}` regression targets by the network.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Watermark {
    bits: Vec<bool>,
}

impl Watermark {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn random(len: usize, rng: &mut impl Rng) -> Self {
        Self {
            bits: (0..len).map(|_| rng.random_bool(0.5)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn as_reals(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Most significant bit of each hex digit first; `len` must equal `4 * hex.len()`.
    pub fn from_hex(hex: &str, len: usize) -> Result<Self> {
        if hex.len() * 4 != len {
            return Err(Error::Config(format!(
                "watermark needs {} hex digits for {len} bits, got {}",
                len.div_ceil(4),
                hex.len()
            )));
        }
        let mut bits = Vec::with_capacity(len);
        for c in hex.chars() {
            let d = c
                .to_digit(16)
                .ok_or_else(|| Error::Config(format!("invalid hex digit {c:?}")))?;
            bits.extend((0..4).rev().map(|k| d >> k & 1 == 1));
        }
        Ok(Self { bits })
    }

    /// Hex form; a trailing partial digit is padded with zero bits.
    pub fn to_hex(&self) -> String {
        self.bits
            .chunks(4)
            .map(|chunk| {
                let d = chunk.iter().enumerate().fold(0, |acc, (k, &b)| acc | (u32::from(b) << (3 - k)));
                char::from_digit(d, 16).expect("nibble")
            })
            .collect()
    }
}

impl fmt::Display for Watermark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Thresholds extractor outputs at 0.5 (strictly greater means 1).
pub fn decode_bits(w_ext: &[f64]) -> Result<Watermark> {
    if let Some(k) = w_ext.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("extracted value {k}")));
    }
    Ok(Watermark::new(w_ext.iter().map(|&v| v > 0.5).collect()))
}
