//! Binary snapshots of every agent's parameters.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! b"CPRP"  u32 version
//! u32 signal_dim  u32 n_agents  f64 e_max
//! u32 n_hidden  u32 hidden[n_hidden]
//! repeated n_agents times: u64 n_params  f64 params[n_params]
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::policy::PolicyParams;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CPRP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub signal_dim: usize,
    pub e_max: f64,
    pub hidden: Vec<usize>,
    pub agents: Vec<Vec<f64>>,
}

impl Checkpoint {
    /// Collects parameters that must all share one shape.
    pub fn from_params<'a, I>(params: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a PolicyParams>,
    {
        let params: Vec<&PolicyParams> = params.into_iter().collect();
        let Some(first) = params.first() else {
            return Err(Error::State("no agents to checkpoint".into()));
        };
        if params
            .iter()
            .any(|p| p.obs_dim() != first.obs_dim() || p.hidden() != first.hidden() || p.e_max() != first.e_max())
        {
            return Err(Error::State("agents have differing network shapes".into()));
        }
        Ok(Checkpoint {
            signal_dim: first.signal_dim(),
            e_max: first.e_max(),
            hidden: first.hidden().to_vec(),
            agents: params.iter().map(|p| p.as_flat().to_vec()).collect(),
        })
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn policy_params(&self) -> Result<Vec<PolicyParams>> {
        self.agents
            .iter()
            .map(|flat| PolicyParams::from_flat(self.signal_dim + 2, &self.hidden, self.e_max, flat.clone()))
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.signal_dim as u32).to_le_bytes())?;
        w.write_all(&(self.agents.len() as u32).to_le_bytes())?;
        w.write_all(&self.e_max.to_le_bytes())?;
        w.write_all(&(self.hidden.len() as u32).to_le_bytes())?;
        for h in &self.hidden {
            w.write_all(&(*h as u32).to_le_bytes())?;
        }
        for a in &self.agents {
            w.write_all(&(a.len() as u64).to_le_bytes())?;
            for x in a {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let signal_dim = read_u32(&mut r)? as usize;
        let n_agents = read_u32(&mut r)? as usize;
        let e_max = read_f64(&mut r)?;
        let n_hidden = read_u32(&mut r)? as usize;
        if n_hidden > 64 {
            return Err(Error::Format(format!("implausible layer count {n_hidden}")));
        }
        let hidden = (0..n_hidden)
            .map(|_| read_u32(&mut r).map(|h| h as usize))
            .collect::<Result<Vec<_>>>()?;
        let expected = PolicyParams::zeros(signal_dim + 2, &hidden, e_max)
            .map_err(|e| Error::Format(format!("bad checkpoint header: {e}")))?
            .len();
        let mut agents = Vec::with_capacity(n_agents.min(1024));
        for i in 0..n_agents {
            let n = read_u64(&mut r)? as usize;
            if n != expected {
                return Err(Error::Format(format!(
                    "agent {i} has {n} parameters, header implies {expected}"
                )));
            }
            let flat = (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
            agents.push(flat);
        }
        Ok(Checkpoint {
            signal_dim,
            e_max,
            hidden,
            agents,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Checkpoint::read_from(std::io::BufReader::new(f))
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("checkpoint is truncated".into())
    } else {
        Error::Io(e)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}
