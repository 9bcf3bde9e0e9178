//! Run configuration: a flat `key = value` file with `#` comments, then
//! command-line overrides, all funnelled through [`ConfigBuilder::set`].

use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::bm25::Bm25Params;
use crate::corpus::FilterConfig;
use crate::distiller::{Direction, DistillConfig};
use crate::error::{Error, Result};
use crate::matcher::{MatchHyper, DEFAULT_DIM};
use crate::model::{LmHyper, LossWeights, StudentMode};
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub paired: Option<PathBuf>,
    pub unpaired: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Generate the bundled corpus when no input paths are given.
    pub synthetic: bool,
    pub synth: SynthConfig,
    pub filter: FilterConfig,
    pub bm25: Bm25Params,
    /// `seed` here is ignored; the run seed is used.
    pub distill: DistillConfig,
    pub external_scorer: Option<String>,
    pub matcher: MatchHyper,
    pub feature_dim: usize,
    pub neg_per_pos: usize,
    pub lm: LmHyper,
    pub max_len: usize,
    pub weights: LossWeights,
    pub mode: StudentMode,
    /// Worker cap; never changes outputs.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paired: None,
            unpaired: None,
            test: None,
            out_dir: PathBuf::from("out"),
            synthetic: false,
            synth: SynthConfig::default(),
            filter: FilterConfig::default(),
            bm25: Bm25Params::default(),
            distill: DistillConfig::default(),
            external_scorer: None,
            matcher: MatchHyper::default(),
            feature_dim: DEFAULT_DIM,
            neg_per_pos: 1,
            lm: LmHyper::default(),
            max_len: 20,
            weights: LossWeights::default(),
            mode: StudentMode::Full,
            threads: None,
        }
    }
}

/// Keys that do not affect any output and are left out of the hash.
const UNHASHED: [&str; 2] = ["out_dir", "threads"];

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, T::to_string)
}

fn path(v: &Option<PathBuf>) -> String {
    v.as_ref().map_or_else(String::new, |p| p.display().to_string())
}

impl RunConfig {
    /// Every setting as `(key, value)` in a fixed order, in the syntax the
    /// config file accepts.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let d = &self.distill;
        let direction = match d.direction {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        };
        vec![
            ("seed", self.seed.to_string()),
            ("paired", path(&self.paired)),
            ("unpaired", path(&self.unpaired)),
            ("test", path(&self.test)),
            ("out_dir", self.out_dir.display().to_string()),
            ("synthetic", self.synthetic.to_string()),
            ("synth_pairs", self.synth.pairs.to_string()),
            ("synth_unpaired", self.synth.unpaired.to_string()),
            ("synth_test", self.synth.test.to_string()),
            ("min_tokens", self.filter.min_tokens.to_string()),
            ("max_tokens", self.filter.max_tokens.to_string()),
            ("min_content_ratio", format!("{:?}", self.filter.min_content_ratio)),
            ("max_token_run", self.filter.max_token_run.to_string()),
            ("bm25_k1", format!("{:?}", self.bm25.k1)),
            ("bm25_b", format!("{:?}", self.bm25.b)),
            ("k", d.k.to_string()),
            ("eta", format!("{:?}", d.eta)),
            ("n", d.n.to_string()),
            ("m", d.m.to_string()),
            ("max_attempts", opt(&d.max_attempts)),
            ("direction", direction.to_string()),
            ("ranking", d.ranking.to_string()),
            ("external_scorer", opt(&self.external_scorer)),
            ("match_epochs", self.matcher.epochs.to_string()),
            ("match_lr", format!("{:?}", self.matcher.lr)),
            ("match_l2", format!("{:?}", self.matcher.l2)),
            ("feature_dim", self.feature_dim.to_string()),
            ("neg_per_pos", self.neg_per_pos.to_string()),
            ("lm_epochs", self.lm.epochs.to_string()),
            ("lm_lr", format!("{:?}", self.lm.lr)),
            ("lm_dim", self.lm.shape.dim.to_string()),
            ("lm_hidden", self.lm.shape.hidden.to_string()),
            ("lm_window", self.lm.shape.window.to_string()),
            ("max_len", self.max_len.to_string()),
            ("alpha_m", format!("{:?}", self.weights.alpha_m)),
            ("alpha_g", format!("{:?}", self.weights.alpha_g)),
            ("mode", self.mode.name().to_string()),
            ("threads", opt(&self.threads)),
        ]
    }

    /// SHA-256 over every setting that can change an output.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if !UNHASHED.contains(&k) {
                h.update(format!("{k}={v}\n"));
            }
        }
        hex(&h.finalize())
    }

    /// The hashed settings in config-file syntax; loading the text back
    /// reproduces every field except `out_dir` and `threads`.
    pub fn render(&self) -> String {
        self.entries()
            .into_iter()
            .filter(|(k, _)| !UNHASHED.contains(k))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn distill_config(&self) -> DistillConfig {
        DistillConfig {
            seed: self.seed,
            ..self.distill
        }
    }

    pub fn match_hyper(&self) -> MatchHyper {
        MatchHyper {
            seed: self.seed,
            ..self.matcher
        }
    }

    pub fn lm_hyper(&self) -> LmHyper {
        LmHyper {
            seed: self.seed,
            ..self.lm
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects settings; the seed has no default and must be given.
#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    cfg: RunConfig,
    seed: Option<u64>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("invalid value {value:?} for {key}")))
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<&mut Self> {
        let value = value.trim();
        let c = &mut self.cfg;
        match key.trim() {
            "seed" => self.seed = Some(parse(key, value)?),
            "paired" => c.paired = parse_path(value),
            "unpaired" => c.unpaired = parse_path(value),
            "test" => c.test = parse_path(value),
            "out_dir" => c.out_dir = PathBuf::from(value),
            "synthetic" => c.synthetic = parse(key, value)?,
            "synth_pairs" => c.synth.pairs = parse(key, value)?,
            "synth_unpaired" => c.synth.unpaired = parse(key, value)?,
            "synth_test" => c.synth.test = parse(key, value)?,
            "min_tokens" => c.filter.min_tokens = parse(key, value)?,
            "max_tokens" => c.filter.max_tokens = parse(key, value)?,
            "min_content_ratio" => c.filter.min_content_ratio = parse(key, value)?,
            "max_token_run" => c.filter.max_token_run = parse(key, value)?,
            "bm25_k1" => c.bm25.k1 = parse(key, value)?,
            "bm25_b" => c.bm25.b = parse(key, value)?,
            "k" => c.distill.k = parse(key, value)?,
            "eta" => c.distill.eta = parse(key, value)?,
            "n" => c.distill.n = parse(key, value)?,
            "m" => c.distill.m = parse(key, value)?,
            "max_attempts" => c.distill.max_attempts = parse_opt(key, value)?,
            "direction" => {
                c.distill.direction = match value {
                    "forward" => Direction::Forward,
                    "reverse" => Direction::Reverse,
                    _ => return Err(Error::InvalidConfig(format!("unknown direction {value:?}"))),
                }
            }
            "ranking" => c.distill.ranking = parse(key, value)?,
            "external_scorer" => c.external_scorer = (!value.is_empty()).then(|| value.to_string()),
            "match_epochs" => c.matcher.epochs = parse(key, value)?,
            "match_lr" => c.matcher.lr = parse(key, value)?,
            "match_l2" => c.matcher.l2 = parse(key, value)?,
            "feature_dim" => c.feature_dim = parse(key, value)?,
            "neg_per_pos" => c.neg_per_pos = parse(key, value)?,
            "lm_epochs" => c.lm.epochs = parse(key, value)?,
            "lm_lr" => c.lm.lr = parse(key, value)?,
            "lm_dim" => c.lm.shape.dim = parse(key, value)?,
            "lm_hidden" => c.lm.shape.hidden = parse(key, value)?,
            "lm_window" => c.lm.shape.window = parse(key, value)?,
            "max_len" => c.max_len = parse(key, value)?,
            "alpha_m" => c.weights.alpha_m = parse(key, value)?,
            "alpha_g" => c.weights.alpha_g = parse(key, value)?,
            "alpha" => {
                let a = parse(key, value)?;
                c.weights.alpha_m = a;
                c.weights.alpha_g = a;
            }
            "mode" => {
                c.mode = StudentMode::parse(value)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown mode {value:?}")))?
            }
            "threads" => c.threads = parse_opt(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown config key {other:?}"))),
        }
        Ok(self)
    }

    /// Applies every `key = value` line of a config file.
    pub fn load_file(&mut self, path: &Path) -> Result<&mut Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::MalformedLine {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected key = value".into(),
            })?;
            self.set(k, v).map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(self)
    }

    pub fn build(&self) -> Result<RunConfig> {
        let seed = self
            .seed
            .ok_or_else(|| Error::InvalidConfig("a seed is required (--seed or `seed =` in the config file)".into()))?;
        let cfg = RunConfig {
            seed,
            ..self.cfg.clone()
        };
        cfg.distill_config().validate()?;
        cfg.bm25.validate()?;
        if cfg.weights.alpha_m < 0.0 || cfg.weights.alpha_g < 0.0 {
            return Err(Error::InvalidConfig("loss weights must be non-negative".into()));
        }
        if cfg.feature_dim <= crate::matcher::DENSE_SLOTS {
            return Err(Error::InvalidConfig("feature_dim too small".into()));
        }
        if cfg.lm.shape.dim == 0 || cfg.lm.shape.hidden == 0 || cfg.lm.shape.window == 0 {
            return Err(Error::InvalidConfig("lm_dim, lm_hidden and lm_window must be positive".into()));
        }
        if cfg.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        Ok(cfg)
    }
}
