use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExperimentConfig, ResultRow};
use crate::error::Result;

/// Sidecar written next to each table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub scenario: String,
    /// SHA-256 of the compact JSON form of the config.
    pub config_sha256: String,
    pub base_seed: u64,
    pub n_drops: usize,
    pub generator: String,
}

impl RunMetadata {
    pub fn for_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            scenario: cfg.scenario.name().to_string(),
            config_sha256: config_digest(cfg)?,
            base_seed: cfg.base_seed,
            n_drops: cfg.n_drops,
            generator: concat!("cran-core ", env!("CARGO_PKG_VERSION")).to_string(),
        })
    }
}

pub fn config_digest(cfg: &ExperimentConfig) -> Result<String> {
    let json = serde_json::to_vec(cfg)?;
    Ok(Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes rows with the header
/// `sweep_value,scheme,per_ms_rate_mean,per_ms_rate_stderr,n_drops`.
pub fn write_csv<W: Write>(writer: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metadata(path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, &RunMetadata::for_config(cfg)?)?;
    f.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::Scenario;

    #[test]
    fn csv_header_and_digest() {
        let rows = vec![ResultRow {
            sweep_value: 0.5,
            scheme: "maxrate_si".into(),
            per_ms_rate_mean: 1.25,
            per_ms_rate_stderr: 0.125,
            n_drops: 4,
        }];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "sweep_value,scheme,per_ms_rate_mean,per_ms_rate_stderr,n_drops\n0.5,maxrate_si,1.25,0.125,4\n"
        );
        let c = ExperimentConfig::preset(Scenario::Robustness);
        let d = config_digest(&c).unwrap();
        assert_eq!(d.len(), 64);
        assert_eq!(d, config_digest(&c.clone()).unwrap());
        let mut c2 = c.clone();
        c2.base_seed += 1;
        assert_ne!(d, config_digest(&c2).unwrap());
    }
}
