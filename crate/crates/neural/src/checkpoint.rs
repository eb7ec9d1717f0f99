//! Checkpoint files: one JSON header line describing the layout, followed by
//! every network's parameters as little-endian `f32` in storage order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::models::NetworkConfig;
use crate::net::{NetSpec, NetworkParams};
use crate::NeuralError;

pub const FORMAT: &str = "leader-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArrayHeader {
    name: String,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetworkHeader {
    name: String,
    spec: NetSpec,
    version: u64,
    arrays: Vec<ArrayHeader>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    format_version: u32,
    seed: u64,
    config: NetworkConfig,
    networks: Vec<NetworkHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub config: NetworkConfig,
    pub generator: NetworkParams,
    pub critic: NetworkParams,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NeuralError> {
        let networks = [("generator", &self.generator), ("critic", &self.critic)]
            .into_iter()
            .map(|(name, p)| NetworkHeader {
                name: name.to_string(),
                spec: p.spec().clone(),
                version: p.version(),
                arrays: p
                    .spec()
                    .arrays()
                    .into_iter()
                    .map(|(name, len)| ArrayHeader { name, len })
                    .collect(),
            })
            .collect();
        let header = Header {
            format: FORMAT.to_string(),
            format_version: FORMAT_VERSION,
            seed: self.seed,
            config: self.config,
            networks,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for p in [&self.generator, &self.critic] {
            let mut bytes = Vec::with_capacity(4 * p.len());
            for &v in p.values() {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, NeuralError> {
        let mut r = BufReader::new(r);
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)?;
        let header: Header = serde_json::from_slice(&line)?;
        if header.format != FORMAT || header.format_version != FORMAT_VERSION {
            return Err(NeuralError::Checkpoint(format!(
                "unsupported format {} v{}",
                header.format, header.format_version
            )));
        }
        let mut nets = Vec::new();
        for net in &header.networks {
            let declared: usize = net.arrays.iter().map(|a| a.len).sum();
            if declared != net.spec.param_count() {
                return Err(NeuralError::Checkpoint(format!("{}: array sizes disagree with spec", net.name)));
            }
            let mut bytes = vec![0u8; 4 * declared];
            r.read_exact(&mut bytes)?;
            let values = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            nets.push((net.name.clone(), NetworkParams::from_values(net.spec.clone(), values, net.version)?));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(NeuralError::Checkpoint(format!("{} trailing bytes", rest.len())));
        }
        let mut take = |name: &str| {
            nets.iter()
                .position(|(n, _)| n == name)
                .map(|i| nets.remove(i).1)
                .ok_or_else(|| NeuralError::Checkpoint(format!("missing network {name}")))
        };
        let generator = take("generator")?;
        let critic = take("critic")?;
        Ok(Self {
            seed: header.seed,
            config: header.config,
            generator,
            critic,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Layout;
    use crate::optim::Adam;

    fn config() -> NetworkConfig {
        NetworkConfig {
            layout: Layout {
                slots: 2,
                max_intentions: 2,
            },
            width: 5,
            hidden: 4,
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = config();
        let mut generator = NetworkParams::init(cfg.generator_spec(), 1);
        let critic = NetworkParams::init(cfg.critic_spec(), 2);
        // a few optimiser steps so the values are not just the initialisation
        let mut opt = Adam::new(generator.len());
        let grad: Vec<f64> = (0..generator.len()).map(|i| (i as f64).sin()).collect();
        for _ in 0..3 {
            opt.step(&mut generator, &grad, 1e-3).unwrap();
        }
        let ck = Checkpoint {
            seed: 77,
            config: cfg,
            generator,
            critic,
        };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&buf[..]).unwrap();
        assert_eq!(back, ck);
        for (a, b) in back.generator.values().iter().zip(ck.generator.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let cfg = config();
        let ck = Checkpoint {
            seed: 0,
            config: cfg,
            generator: NetworkParams::init(cfg.generator_spec(), 1),
            critic: NetworkParams::init(cfg.critic_spec(), 2),
        };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(Checkpoint::read_from(&buf[..]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let cfg = config();
        let ck = Checkpoint {
            seed: 5,
            config: cfg,
            generator: NetworkParams::init(cfg.generator_spec(), 3),
            critic: NetworkParams::init(cfg.critic_spec(), 4),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }
}
