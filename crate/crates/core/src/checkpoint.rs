//! Binary checkpoints: a magic line, a little-endian `u64` header length,
//! a JSON header, then `ρ` and `c` as little-endian `f64` in cell order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Drift, Params, SchemeConfig, State, Stepper};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const MAGIC: &[u8; 6] = b"KSCK1\n";
pub const FORMAT_VERSION: u32 = 1;
const MAX_HEADER: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub grid: Grid,
    pub t: f64,
    pub params: Params,
    pub scheme: SchemeConfig,
    pub dt_current: f64,
    pub clean_steps: usize,
    /// Drift in use when the checkpoint was taken.
    pub drift: Drift,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub state: State,
}

impl Checkpoint {
    pub fn new(state: &State, stepper: &Stepper) -> Self {
        Checkpoint {
            header: CheckpointHeader {
                format_version: FORMAT_VERSION,
                grid: *state.grid(),
                t: state.t,
                params: stepper.params,
                scheme: stepper.scheme,
                dt_current: stepper.dt_current(),
                clean_steps: stepper.clean_steps(),
                drift: stepper.drift(),
            },
            state: state.clone(),
        }
    }

    /// A stepper that continues exactly where the checkpointed one stopped.
    pub fn stepper(&self) -> Result<Stepper> {
        let h = &self.header;
        Ok(Stepper::new(h.grid, h.params, h.scheme)?.with_adaptive_state(h.dt_current, h.clean_steps)
            .with_drift(h.drift))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let n = self.state.rho.values().len();
        let mut out = Vec::with_capacity(MAGIC.len() + 8 + header.len() + 16 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in self.state.rho.values().iter().chain(self.state.c.values()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("checkpoint truncated before magic".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)
            .map_err(|_| Error::Format("checkpoint truncated in header length".into()))?;
        let len = u64::from_le_bytes(len);
        if len > MAX_HEADER || len as usize > r.len() {
            return Err(Error::Format(format!("implausible header length {len}")));
        }
        let (head, rest) = r.split_at(len as usize);
        let header: CheckpointHeader = serde_json::from_slice(head)
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                header.format_version
            )));
        }
        let n = header.grid.len();
        if rest.len() != 16 * n {
            return Err(Error::Format(format!(
                "checkpoint payload holds {} bytes, expected {}",
                rest.len(),
                16 * n
            )));
        }
        let vals: Vec<f64> = rest
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect();
        let rho = Field::new(header.grid, vals[..n].to_vec())?;
        let c = Field::new(header.grid, vals[n..].to_vec())?;
        let state = State::new(rho, c, header.t)?;
        Ok(Checkpoint { header, state })
    }

    /// Writes through a temporary file and renames it into place.
    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("partial");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, simulate_with, ProbeSchedule};

    fn sample() -> (State, Stepper) {
        let g = Grid::new(2, &[1.0, 0.7], &[8, 6]).unwrap();
        let rho = Field::from_fn(g, |x| 1.0 + 0.3 * (3.0 * x[0]).sin() + 1e-17 * x[1]);
        let c = Field::from_fn(g, |x| 2.0 + (x[0] * x[1]).exp().recip());
        let s = State::new(rho.clone(), c, 0.125).unwrap();
        let p = Params::new(1.0, 1.0, 0.1, &rho).unwrap();
        let st = Stepper::new(g, p, SchemeConfig::default()).unwrap().with_adaptive_state(2.5e-4, 7);
        (s, st)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (s, st) = sample();
        let ck = Checkpoint::new(&s, &st);
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        for (a, b) in s.rho.values().iter().zip(back.state.rho.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ksck");
        ck.write(&path).unwrap();
        assert_eq!(Checkpoint::read(&path).unwrap(), ck);
        assert_eq!(back.stepper().unwrap().dt_current(), 2.5e-4);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let (s, st) = sample();
        let bytes = Checkpoint::new(&s, &st).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }

    #[test]
    fn resumed_run_matches_unbroken_run() {
        let g = Grid::unit(1, 32).unwrap();
        let rho = Field::from_fn(g, |x| 1.0 + 0.4 * (std::f64::consts::PI * x[0]).cos());
        let c = Field::constant(g, 1.3);
        let s = State::new(rho.clone(), c, 0.0).unwrap();
        let p = Params::new(1.0, 1.0, 0.0, &rho).unwrap();
        let scheme = SchemeConfig::default();
        let probes = ProbeSchedule::every(0.05);
        let full = simulate(&s, &p, &scheme, 0.4, &probes).unwrap();
        let first = simulate(&s, &p, &scheme, 0.2, &probes).unwrap();
        let st = Stepper::new(g, p, scheme).unwrap().with_adaptive_state(first.dt_current, first.clean_steps);
        let ck = Checkpoint::from_bytes(&Checkpoint::new(&first.final_state, &st).to_bytes().unwrap()).unwrap();
        let rest = simulate_with(ck.stepper().unwrap(), &ck.state, 0.4, &probes).unwrap();
        let a = full.records.last().unwrap();
        let b = rest.records.last().unwrap();
        assert!((a.rho_dev_linf - b.rho_dev_linf).abs() <= 1e-12 * a.rho_dev_linf);
        assert!((a.energy.unwrap().energy - b.energy.unwrap().energy).abs() <= 1e-12);
    }
}
