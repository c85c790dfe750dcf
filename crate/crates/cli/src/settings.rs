use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context};
use facecap::config::KeyValues;

/// Resolves each setting from its flag, then the config file, then the
/// built-in default.
pub struct Settings {
    kv: KeyValues,
    seed: Option<u64>,
}

impl Settings {
    pub fn load(config: Option<&Path>, seed: Option<u64>) -> anyhow::Result<Self> {
        let kv = match config {
            Some(p) => KeyValues::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => KeyValues::default(),
        };
        Ok(Self { kv, seed })
    }

    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> anyhow::Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        Ok(self.kv.get(key)?.unwrap_or(default))
    }

    pub fn seed(&self, default: u64) -> anyhow::Result<u64> {
        self.pick(self.seed, "seed", default)
    }

    pub fn config(&self) -> &KeyValues {
        &self.kv
    }
}

pub fn parse_size(s: &str) -> anyhow::Result<(usize, usize)> {
    let Some((w, h)) = s.split_once(['x', 'X']) else {
        bail!("expected WxH, got `{s}`");
    };
    let (w, h): (usize, usize) = (w.trim().parse()?, h.trim().parse()?);
    if w == 0 || h == 0 {
        bail!("image size must be positive, got `{s}`");
    }
    Ok((w, h))
}
