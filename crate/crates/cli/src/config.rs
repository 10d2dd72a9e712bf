use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

/// Values read from `--config`. Every key is optional; flags override them.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub max_len: Option<usize>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub learning_rate: Option<f64>,
    pub no_rule: Option<bool>,
    pub no_cnn: Option<bool>,
    pub debug_small: Option<bool>,
    pub lexicon_dir: Option<PathBuf>,
    pub alias_table: Option<PathBuf>,
    pub ratio: Option<String>,
    pub min_weight: Option<u32>,
    pub top_k: Option<usize>,
    pub keep_isolated: Option<bool>,
    pub format: Option<Vec<String>>,
    pub weighted: Option<bool>,
    pub normalized: Option<bool>,
    pub rank_filtered: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// A boolean flag wins when set; otherwise the file decides.
pub fn flag(cli: bool, file: Option<bool>) -> bool {
    cli || file.unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_keys() {
        let c: FileConfig = toml::from_str("seed = 7\nformat = [\"dot\"]\nno_rule = true\n").unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.format.unwrap(), ["dot"]);
        assert!(flag(false, c.no_rule));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(toml::from_str::<FileConfig>("sed = 7\n").is_err());
    }
}
