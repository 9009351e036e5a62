//! Run configuration: `key = value` files merged with command-line flags.

use std::path::{Path, PathBuf};

use poolnet::model::ModelConfig;
use poolnet::train::TrainConfig;
use poolnet::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Paths {
    pub saliency_manifest: Option<PathBuf>,
    pub edge_manifest: Option<PathBuf>,
    pub eval_manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub pred_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub paths: Paths,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("{}:{}: expected `key = value`, got `{line}`", origin.display(), i + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("{}:{}: empty key", origin.display(), i + 1)));
        }
        pairs.push((k.to_owned(), v.to_owned()));
    }
    Ok(pairs)
}

impl RunConfig {
    /// Builds a configuration from file pairs followed by flag pairs. Later
    /// pairs win; `preset` is applied before everything else.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some((_, v)) = pairs.iter().rev().find(|(k, _)| k == "preset") {
            cfg.model.set("preset", v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(file: Option<&Path>, flags: &[(String, String)]) -> Result<Self> {
        let mut pairs = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", p.display())))?;
                parse_pairs(&text, p)?
            }
            None => Vec::new(),
        };
        pairs.extend_from_slice(flags);
        Self::from_pairs(&pairs)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.model.set(key, value)? || self.train.set(key, value)? {
            return Ok(());
        }
        let slot = match key {
            "saliency_manifest" => &mut self.paths.saliency_manifest,
            "edge_manifest" => &mut self.paths.edge_manifest,
            "eval_manifest" => &mut self.paths.eval_manifest,
            "checkpoint" => &mut self.paths.checkpoint,
            "resume" => &mut self.paths.resume,
            "output_dir" => &mut self.paths.output_dir,
            "pred_dir" => &mut self.paths.pred_dir,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        };
        *slot = Some(PathBuf::from(value));
        Ok(())
    }

    /// Model and training settings as a config file.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# written by poolnet train\n");
        for (k, v) in self.model.to_pairs().into_iter().chain(self.train.to_pairs()) {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

pub fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    value.as_deref().ok_or_else(|| Error::Config(format!("missing `{key}` (flag --{} or config key)", key.replace('_', "-"))))
}
