//! Core value types shared by every stage of the pipeline.

use crate::error::{Error, Result};

/// A flat real-valued latent, optionally tagged with a 2-D grid shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector {
    data: Vec<f64>,
    shape: Option<(usize, usize)>,
}

impl LatentVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Domain("latent must have at least one dimension".into()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite latent value at index {i}")));
        }
        Ok(Self { data, shape: None })
    }

    pub fn with_shape(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        let mut v = Self::new(data)?;
        v.set_shape(Some((rows, cols)))?;
        Ok(v)
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn set_shape(&mut self, shape: Option<(usize, usize)>) -> Result<()> {
        if let Some((r, c)) = shape {
            if r.checked_mul(c) != Some(self.data.len()) {
                return Err(Error::Shape(format!(
                    "{r}x{c} grid does not match dimension {}",
                    self.data.len()
                )));
            }
        }
        self.shape = shape;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Rebuilds a latent with the same shape tag from new values.
    pub fn like(&self, data: Vec<f64>) -> Result<Self> {
        let mut v = Self::new(data)?;
        v.set_shape(self.shape)?;
        Ok(v)
    }
}

/// `n_steps` uniform steps over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Config("time grid needs at least one step".into()));
        }
        let n = n_steps as f64;
        let nodes = (0..=n_steps).map(|k| k as f64 / n).collect();
        Ok(Self { nodes })
    }

    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_steps() as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

/// A non-empty bit string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Message {
    bits: Vec<u8>,
}

impl Message {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::Domain("message must contain at least one bit".into()));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Domain("message bits must be 0 or 1".into()));
        }
        Ok(Self { bits })
    }

    /// Low `len` bits of `value`, most significant first.
    pub fn from_u64(value: u64, len: usize) -> Result<Self> {
        if len > 64 {
            return Err(Error::Domain("at most 64 bits fit in a u64".into()));
        }
        Self::new((0..len).rev().map(|i| ((value >> i) & 1) as u8).collect())
    }

    /// Parses a bit string such as `"0110"`.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Format(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(bits)
    }

    /// Parses hex, each digit contributing four bits, most significant first.
    pub fn from_hex(s: &str) -> Result<Self> {
        let mut bits = Vec::new();
        for c in s.trim().trim_start_matches("0x").chars() {
            let v = c
                .to_digit(16)
                .ok_or_else(|| Error::Format(format!("invalid hex digit {c:?}")))?;
            bits.extend((0..4).rev().map(|i| ((v >> i) & 1) as u8));
        }
        Self::new(bits)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }

    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| 1 - b).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// States run from t=0 to t=1.
    Forward,
    /// Produced by a reverse pass; still stored by node index, so
    /// `states[0]` is the recovered starting latent.
    Reverse,
}

/// States at every grid node plus the velocity used on every step.
///
/// For forward records `velocities[n]` drove the step from node `n` to `n+1`.
/// For reverse records `velocities[n]` drove the step from node `n+1` down to `n`.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub states: Vec<LatentVector>,
    pub velocities: Vec<LatentVector>,
    pub grid: TimeGrid,
    pub direction: Direction,
}

impl TrajectoryRecord {
    pub fn start(&self) -> &LatentVector {
        &self.states[0]
    }

    pub fn end(&self) -> &LatentVector {
        &self.states[self.states.len() - 1]
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }
}
