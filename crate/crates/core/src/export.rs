//! CSV and manifest output.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::continuation::{Branch, SweepRecord};

/// Hex SHA-256 of the canonical config text.
pub fn config_hash(config_text: &str) -> String {
    hex::encode(Sha256::digest(config_text.as_bytes()))
}

pub fn write_hash_comment<W: Write>(w: &mut W, hash: &str) -> io::Result<()> {
    writeln!(w, "# config_sha256={hash}")
}

pub fn write_branch_csv<W: Write>(mut w: W, branch: &Branch, hash: &str) -> io::Result<()> {
    write_hash_comment(&mut w, hash)?;
    writeln!(w, "index,mu,y,stability,residual_std,K_st_y,K_st_mu,a")?;
    for (i, p) in branch.points.iter().enumerate() {
        writeln!(
            w,
            "{i},{},{},{},{},{},{},{}",
            p.mu,
            p.y,
            p.stability.as_str(),
            p.residual_std,
            p.gains.k_st_y,
            p.gains.k_st_mu,
            p.gains.a
        )?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_sweep_csv<W: Write>(mut w: W, records: &[SweepRecord], hash: &str) -> io::Result<()> {
    write_hash_comment(&mut w, hash)?;
    writeln!(w, "mu,y_end,y_mean,y_std,aux_end,diverged")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.mu,
            r.y_end,
            r.y_mean,
            r.y_std,
            opt(r.aux_end),
            u8::from(r.diverged)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub system: String,
    pub config_sha256: String,
    pub seed: u64,
    pub provenance: String,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, system: &str, hash: &str, seed: u64) -> Self {
        Self {
            command: command.into(),
            system: system.into(),
            config_sha256: hash.into(),
            seed,
            provenance: format!("cbc {}+{}", env!("CARGO_PKG_VERSION"), &hash[..hash.len().min(12)]),
            files: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
