//! The `synth` command.

use std::path::{Path, PathBuf};

use pmbench_core::episode::write_episode;
use pmbench_core::synth::{generate_synthetic, SynthConfig};

use crate::UsageError;

/// Writes `count` episodes seeded `cfg.seed, cfg.seed + 1, ...` under `out`,
/// one directory per episode id. Returns the directories.
pub fn synth(cfg: &SynthConfig, count: u64, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if count == 0 {
        return Err(UsageError("--episodes must be at least 1".into()).into());
    }
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let mut dirs = Vec::new();
    for k in 0..count {
        let c = SynthConfig { seed: cfg.seed.wrapping_add(k), ..cfg.clone() };
        let ep = generate_synthetic(&c)?;
        let dir = out.join(&ep.metadata.episode_id);
        write_episode(&ep, &dir)?;
        dirs.push(dir);
    }
    Ok(dirs)
}
