use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tensor, MAX_RANK};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::volnet;

pub const MAGIC: &[u8; 8] = b"GMVNETCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub omega: usize,
    pub dt_in: usize,
    pub layer_sizes: Vec<usize>,
    /// SHA-256 of the canonical training configuration.
    pub config_hash: String,
    pub calibration_end: String,
    pub seed: u64,
    pub epoch: usize,
    pub param_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(params: ModelParams, config_hash: String, calibration_end: String, seed: u64, epoch: usize) -> Self {
        let meta = CheckpointMeta {
            omega: params.omega(),
            dt_in: params.dt_in(),
            layer_sizes: volnet::LAYER_SIZES.to_vec(),
            config_hash,
            calibration_end,
            seed,
            epoch,
            param_count: params.param_count(),
        };
        Self { meta, params }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let meta = serde_json::to_vec(&self.meta)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(&meta)?;
        let names = self.params.names();
        let tensors = self.params.tensors();
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for (name, t) in names.iter().zip(tensors) {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.rank() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for x in t.data() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("version {version}, expected {VERSION}")));
        }
        let meta_len = read_u32(&mut r)? as usize;
        let mut meta = vec![0u8; meta_len];
        read_exact(&mut r, &mut meta)?;
        let meta: CheckpointMeta = serde_json::from_slice(&meta).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        if meta.layer_sizes != volnet::LAYER_SIZES {
            return Err(Error::Checkpoint(format!("layer sizes {:?} differ from this build", meta.layer_sizes)));
        }

        let count = read_u32(&mut r)? as usize;
        let expected_names = ModelParams::canonical_names();
        if count != expected_names.len() {
            return Err(Error::Checkpoint(format!("{count} arrays, expected {}", expected_names.len())));
        }
        let mut tensors = Vec::with_capacity(count);
        for expected in &expected_names {
            let name_len = read_u32(&mut r)? as usize;
            if name_len > 256 {
                return Err(Error::Checkpoint(format!("array name of {name_len} bytes")));
            }
            let mut name = vec![0u8; name_len];
            read_exact(&mut r, &mut name)?;
            if name != expected.as_bytes() {
                return Err(Error::Checkpoint(format!("array {:?} where {expected:?} was expected", String::from_utf8_lossy(&name))));
            }
            let rank = read_u32(&mut r)? as usize;
            if rank > MAX_RANK {
                return Err(Error::Checkpoint(format!("{expected}: rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u64(&mut r)? as usize);
            }
            let len: usize = shape.iter().product();
            if len > 1 << 28 {
                return Err(Error::Checkpoint(format!("{expected}: {len} elements")));
            }
            let mut bytes = vec![0u8; len * 8];
            read_exact(&mut r, &mut bytes)?;
            let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push(Tensor::new(&shape, data)?);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        let params =
            ModelParams::from_tensors(meta.dt_in, meta.omega, tensors).map_err(|e| Error::Checkpoint(format!("parameter layout: {e}")))?;
        if params.param_count() != meta.param_count {
            return Err(Error::Checkpoint(format!("declared {} parameters, found {}", meta.param_count, params.param_count())));
        }
        Ok(Self { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Checkpoint("truncated file".into()),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
