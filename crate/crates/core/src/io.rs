//! Little-endian binary formats.
//!
//! Latent record:
//! ```text
//! "FSTG" | version u16 | dim u64 | has_shape u8 | [rows u64 | cols u64] | dim x f64
//! ```
//! Trajectory dump: `"FSTT" | version u16 | count u64`, then `count` entries of
//! `step u64 | latent record`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::latent::{LatentVector, TrajectoryRecord};

pub const LATENT_MAGIC: [u8; 4] = *b"FSTG";
pub const TRAJECTORY_MAGIC: [u8; 4] = *b"FSTT";
pub const FORMAT_VERSION: u16 = 1;

/// Largest dimension accepted on read, guards against absurd allocations.
const MAX_DIM: u64 = 1 << 28;

pub fn write_latent_to<W: Write>(w: &mut W, x: &LatentVector) -> Result<()> {
    w.write_all(&LATENT_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(x.dim() as u64).to_le_bytes())?;
    match x.shape() {
        Some((r, c)) => {
            w.write_all(&[1])?;
            w.write_all(&(r as u64).to_le_bytes())?;
            w.write_all(&(c as u64).to_le_bytes())?;
        }
        None => w.write_all(&[0])?,
    }
    for v in x.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_latent_from<R: Read>(r: &mut R) -> Result<LatentVector> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic)?;
    if magic != LATENT_MAGIC {
        return Err(Error::Format(format!("bad latent magic {magic:?}")));
    }
    let version = u16::from_le_bytes(read_array(r)?);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported latent format version {version}")));
    }
    let dim = u64::from_le_bytes(read_array(r)?);
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::Format(format!("implausible latent dimension {dim}")));
    }
    let [flag] = read_array::<_, 1>(r)?;
    let shape = match flag {
        0 => None,
        1 => {
            let rows = u64::from_le_bytes(read_array(r)?) as usize;
            let cols = u64::from_le_bytes(read_array(r)?) as usize;
            Some((rows, cols))
        }
        other => return Err(Error::Format(format!("bad shape flag {other}"))),
    };
    let mut data = Vec::with_capacity(dim as usize);
    for i in 0..dim {
        let v = f64::from_le_bytes(read_array(r)?);
        if !v.is_finite() {
            return Err(Error::Format(format!("non-finite scalar at index {i}")));
        }
        data.push(v);
    }
    let mut x = LatentVector::new(data)?;
    x.set_shape(shape)
        .map_err(|e| Error::Format(format!("inconsistent shape header: {e}")))?;
    Ok(x)
}

pub fn write_latent(path: impl AsRef<Path>, x: &LatentVector) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_latent_to(&mut w, x)?;
    w.flush()?;
    Ok(())
}

pub fn read_latent(path: impl AsRef<Path>) -> Result<LatentVector> {
    read_latent_from(&mut BufReader::new(File::open(path)?))
}

pub fn latent_to_bytes(x: &LatentVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(23 + 8 * x.dim());
    write_latent_to(&mut out, x).expect("writing to a Vec cannot fail");
    out
}

pub fn latent_from_bytes(bytes: &[u8]) -> Result<LatentVector> {
    let mut cursor = bytes;
    let x = read_latent_from(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", cursor.len())));
    }
    Ok(x)
}

/// Dumps every state of a trajectory, tagged with its node index.
pub fn write_trajectory(path: impl AsRef<Path>, traj: &TrajectoryRecord) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&TRAJECTORY_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(traj.states.len() as u64).to_le_bytes())?;
    for (step, x) in traj.states.iter().enumerate() {
        w.write_all(&(step as u64).to_le_bytes())?;
        write_latent_to(&mut w, x)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Vec<(u64, LatentVector)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if magic != TRAJECTORY_MAGIC {
        return Err(Error::Format(format!("bad trajectory magic {magic:?}")));
    }
    let version = u16::from_le_bytes(read_array(&mut r)?);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported trajectory version {version}")));
    }
    let count = u64::from_le_bytes(read_array(&mut r)?);
    let mut out = Vec::new();
    for _ in 0..count {
        let step = u64::from_le_bytes(read_array(&mut r)?);
        out.push((step, read_latent_from(&mut r)?));
    }
    Ok(out)
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated payload".into()),
        _ => Error::Io(e),
    })
}

pub(crate) fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}
