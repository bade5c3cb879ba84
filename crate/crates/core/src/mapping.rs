//! Keyed sign/magnitude mapping between bit strings and standard-normal latents.
//!
//! Every dimension gets a keyed half-normal magnitude `g_i = |Φ⁻¹(u_i)|`. A
//! dimension that carries bit `b` holds `+g_i` for `b = 1` and `-g_i` for
//! `b = 0`; bit `j` lands on dimension `π_K(j)` for a keyed permutation `π_K`.
//! Dimensions without a bit hold an ordinary keyed normal draw. With unbiased
//! bits every coordinate is exactly standard normal.

use crate::error::{check_dim, Error, Result};
use crate::keyed::StegoKey;
use crate::latent::{LatentVector, Message};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MappingParams {
    pub latent_dim: usize,
    pub message_len: usize,
    /// Route bits through a keyed permutation; identity routing otherwise.
    pub permutation_seeded: bool,
    pub shape: Option<(usize, usize)>,
}

impl MappingParams {
    pub const BITS_PER_DIM: usize = 1;

    pub fn new(latent_dim: usize, message_len: usize) -> Result<Self> {
        let p = Self {
            latent_dim,
            message_len,
            permutation_seeded: true,
            shape: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_shape(mut self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.latent_dim {
            return Err(Error::Shape(format!(
                "{rows}x{cols} grid does not match latent dimension {}",
                self.latent_dim
            )));
        }
        self.shape = Some((rows, cols));
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.message_len == 0 {
            return Err(Error::Config("latent and message sizes must be positive".into()));
        }
        if self.message_len > self.latent_dim * Self::BITS_PER_DIM {
            return Err(Error::Capacity {
                bits: self.message_len,
                capacity: self.latent_dim,
            });
        }
        Ok(())
    }
}

fn sub_key(key: &StegoKey, part: &str) -> StegoKey {
    key.with_domain(&format!("{}/mapping/{part}", key.domain()))
}

/// Dimension index that carries each message bit.
pub fn carrier_indices(key: &StegoKey, params: &MappingParams) -> Vec<usize> {
    let mut routes = if params.permutation_seeded {
        sub_key(key, "perm").permutation(params.latent_dim)
    } else {
        (0..params.latent_dim).collect()
    };
    routes.truncate(params.message_len);
    routes
}

/// Keyed half-normal magnitude of every dimension.
pub fn magnitudes(key: &StegoKey, dim: usize) -> Vec<f64> {
    let k = sub_key(key, "mag");
    (0..dim as u64).map(|i| k.normal(i).abs()).collect()
}

/// Applies the sign rule with explicit magnitudes, routes and filler values.
pub fn embed_with(bits: &[u8], magnitudes: &[f64], routes: &[usize], filler: &[f64]) -> Result<Vec<f64>> {
    check_dim(magnitudes.len(), filler.len())?;
    check_dim(bits.len(), routes.len())?;
    let mut x = filler.to_vec();
    for (&bit, &i) in bits.iter().zip(routes) {
        let g = *magnitudes
            .get(i)
            .ok_or_else(|| Error::Domain(format!("route {i} outside latent")))?;
        x[i] = if bit == 1 { g } else { -g };
    }
    Ok(x)
}

pub fn embed_message(m: &Message, key: &StegoKey, params: &MappingParams) -> Result<LatentVector> {
    if m.len() > params.latent_dim {
        return Err(Error::Capacity {
            bits: m.len(),
            capacity: params.latent_dim,
        });
    }
    let params = MappingParams {
        message_len: m.len(),
        ..*params
    };
    params.validate()?;
    let d = params.latent_dim;
    let filler = sub_key(key, "fill").normals(0, d);
    let data = embed_with(m.bits(), &magnitudes(key, d), &carrier_indices(key, &params), &filler)?;
    let mut x = LatentVector::new(data)?;
    x.set_shape(params.shape)?;
    Ok(x)
}

/// Sign read-out. Exact zeros decode as 1.
pub fn extract_message(x_hat: &LatentVector, key: &StegoKey, params: &MappingParams) -> Result<Message> {
    params.validate()?;
    if x_hat.dim() != params.latent_dim {
        return Err(Error::Capacity {
            bits: params.message_len,
            capacity: x_hat.dim(),
        });
    }
    let x = x_hat.as_slice();
    let bits = carrier_indices(key, params)
        .into_iter()
        .map(|i| u8::from(x[i] >= 0.0))
        .collect();
    Message::new(bits)
}

/// Smallest carrier magnitude: any perturbation with smaller sup-norm leaves
/// every decoded bit intact.
pub fn tolerance_radius(x0: &LatentVector, key: &StegoKey, params: &MappingParams) -> f64 {
    let x = x0.as_slice();
    carrier_indices(key, params)
        .into_iter()
        .filter_map(|i| x.get(i))
        .map(|v| v.abs())
        .fold(f64::INFINITY, f64::min)
}
