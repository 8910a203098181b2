use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::Result;

/// Hex SHA-256 of the canonical config text.
pub fn config_hash(cfg: &RunConfig) -> String {
    Sha256::digest(cfg.to_config_string().as_bytes())
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").expect("writing to a String");
            s
        })
}

/// `key=value` text listing the version, config hash, every setting and `extra`.
pub fn manifest_text(cfg: &RunConfig, extra: &[(String, String)]) -> String {
    let mut out = String::new();
    let mut line = |k: &str, v: &str| writeln!(out, "{k}={v}").expect("writing to a String");
    line("version", env!("CARGO_PKG_VERSION"));
    line("config_hash", &config_hash(cfg));
    for (k, v) in cfg.entries() {
        line(&format!("config.{k}"), &v);
    }
    for (k, v) in extra {
        line(k, v);
    }
    out
}

pub fn write_manifest(
    path: impl AsRef<Path>,
    cfg: &RunConfig,
    extra: &[(String, String)],
) -> Result<()> {
    std::fs::write(path, manifest_text(cfg, extra))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_settings() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = 9;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn every_setting_is_listed() {
        let text = manifest_text(
            &RunConfig::default(),
            &[("seeds_used".into(), "1,2".into())],
        );
        for (k, v) in RunConfig::default().entries() {
            assert!(text.contains(&format!("config.{k}={v}\n")), "missing {k}");
        }
        assert!(text.ends_with("seeds_used=1,2\n"));
    }
}
