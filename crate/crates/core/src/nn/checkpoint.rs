//! Checkpoint layout (little-endian):
//! `"FSCK" | version u16 | t_embed u64 | n_dims u64 | dims u64… | n_params u64 | params f64…`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::read_array;
use crate::nn::Mlp;

const MAGIC: [u8; 4] = *b"FSCK";
const VERSION: u16 = 1;

pub fn write_checkpoint_to<W: Write>(w: &mut W, net: &Mlp) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(net.t_embed() as u64).to_le_bytes())?;
    w.write_all(&(net.layer_dims().len() as u64).to_le_bytes())?;
    for &d in net.layer_dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&(net.params().len() as u64).to_le_bytes())?;
    for p in net.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint_from<R: Read>(r: &mut R) -> Result<Mlp> {
    if read_array::<_, 4>(r)? != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = u16::from_le_bytes(read_array(r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let t_embed = u64::from_le_bytes(read_array(r)?) as usize;
    let n_dims = u64::from_le_bytes(read_array(r)?);
    if !(2..=64).contains(&n_dims) {
        return Err(Error::Format(format!("implausible layer count {n_dims}")));
    }
    let dims = (0..n_dims)
        .map(|_| Ok(u64::from_le_bytes(read_array(r)?) as usize))
        .collect::<Result<Vec<_>>>()?;
    let n_params = u64::from_le_bytes(read_array(r)?);
    if n_params > 1 << 30 {
        return Err(Error::Format(format!("implausible parameter count {n_params}")));
    }
    let params = (0..n_params)
        .map(|_| Ok(f64::from_le_bytes(read_array(r)?)))
        .collect::<Result<Vec<_>>>()?;
    Mlp::from_parts(dims, t_embed, params).map_err(|e| Error::Format(format!("inconsistent checkpoint: {e}")))
}

pub fn write_checkpoint(path: impl AsRef<Path>, net: &Mlp) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint_to(&mut w, net)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Mlp> {
    read_checkpoint_from(&mut BufReader::new(File::open(path)?))
}
