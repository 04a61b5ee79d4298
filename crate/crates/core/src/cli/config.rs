//! Run configuration file.
//!
//! ```toml
//! seed = 0
//! output_path = "out.jsonl"
//!
//! [backend.remote]
//! url = "http://localhost:8000"      # remote model, or:
//! [backend.ngram]
//! corpus_path = "corpus.txt"         # relative to this file
//! order = 2
//! alpha = 1.0
//!
//! [decoder]
//! lambda = 1.0
//! beam_width = 5
//!
//! [scorer]
//! mode = "likelihood"                # or "binary"
//! include_prompt_in_prefix = false
//! [scorer.ngram]                     # optional separate scoring model
//! corpus_path = "scorer.txt"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use serde::Deserialize;

use crate::backend::{LanguageModel, NgramModel, RemoteBackend};
use crate::constraint::{BinaryScorer, LikelihoodScorer, SatisfactionScorer, ScoreMode};
use crate::decoder::{DecodeMode, DecoderConfig, SamplingConfig};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NgramSection {
    pub corpus_path: PathBuf,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_order() -> usize {
    2
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub remote: Option<RemoteSection>,
    pub ngram: Option<NgramSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSection {
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSection {
    pub lambda: f64,
    pub beam_width: usize,
    pub pool_factor: usize,
    pub max_len: usize,
    pub mode: DecodeMode,
    pub memoize: bool,
    /// Add keyword tokens to every candidate pool for keyword constraints.
    pub keyword_augmentation: bool,
}

impl Default for DecoderSection {
    fn default() -> Self {
        let d = DecoderConfig::default();
        Self {
            lambda: d.lambda,
            beam_width: d.beam_width,
            pool_factor: d.pool_factor,
            max_len: d.max_len,
            mode: d.mode,
            memoize: d.memoize,
            keyword_augmentation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSection {
    pub mode: ScoreMode,
    pub include_prompt_in_prefix: bool,
    /// Ranking tie tolerance.
    pub epsilon: f64,
    pub ngram: Option<NgramSection>,
}

impl Default for ScorerSection {
    fn default() -> Self {
        Self {
            mode: ScoreMode::Likelihood,
            include_prompt_in_prefix: false,
            epsilon: 0.0,
            ngram: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub decoder: DecoderSection,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub scorer: ScorerSection,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub backend_url: Option<String>,
    pub lambda: Option<f64>,
    pub beam: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> anyhow::Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).context("invalid config")?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in {}", path.display()))
    }

    /// Applies flag overrides and resolves the backend url from
    /// `BACKEND_URL` when neither the flag nor the file names a backend.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(url) = &o.backend_url {
            self.backend.remote = Some(RemoteSection { url: url.clone() });
            self.backend.ngram = None;
        }
        if self.backend.remote.is_none() && self.backend.ngram.is_none() {
            if let Ok(url) = std::env::var(crate::backend::BACKEND_URL_ENV) {
                self.backend.remote = Some(RemoteSection { url });
            }
        }
        if let Some(l) = o.lambda {
            self.decoder.lambda = l;
        }
        if let Some(k) = o.beam {
            self.decoder.beam_width = k;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.output_path = Some(out.clone());
        }
        self.sampling.rng_seed = self.seed;
    }

    /// Checks the backend choice, corpus paths and decoder parameters.
    pub fn validate(&self) -> anyhow::Result<()> {
        match (&self.backend.remote, &self.backend.ngram) {
            (Some(_), Some(_)) => bail!("config sets both backend.remote and backend.ngram"),
            (None, None) => bail!("no backend: set backend.remote, backend.ngram or BACKEND_URL"),
            _ => {}
        }
        for section in [&self.backend.ngram, &self.scorer.ngram].into_iter().flatten() {
            let p = self.resolve(&section.corpus_path);
            if !p.is_file() {
                bail!("corpus {} does not exist", p.display());
            }
        }
        self.decoder_config().validate()?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn decoder_config(&self) -> DecoderConfig {
        DecoderConfig {
            lambda: self.decoder.lambda,
            beam_width: self.decoder.beam_width,
            pool_factor: self.decoder.pool_factor,
            keyword_tokens: Default::default(),
            max_len: self.decoder.max_len,
            mode: self.decoder.mode,
            sampling: SamplingConfig {
                rng_seed: self.seed,
                ..self.sampling.clone()
            },
            memoize: self.decoder.memoize,
        }
    }

    fn fit(&self, s: &NgramSection) -> anyhow::Result<NgramModel> {
        let path = self.resolve(&s.corpus_path);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read corpus {}", path.display()))?;
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        Ok(NgramModel::fit(&lines, s.order, s.alpha)?)
    }

    pub fn build_backend(&self) -> anyhow::Result<Arc<dyn LanguageModel>> {
        match (&self.backend.remote, &self.backend.ngram) {
            (Some(r), _) => Ok(Arc::new(RemoteBackend::new(r.url.clone()))),
            (None, Some(s)) => Ok(Arc::new(self.fit(s)?)),
            (None, None) => bail!("no backend configured"),
        }
    }

    pub fn build_scorer(
        &self,
        backend: &Arc<dyn LanguageModel>,
    ) -> anyhow::Result<Box<dyn SatisfactionScorer>> {
        let include = self.scorer.include_prompt_in_prefix;
        let separate = match &self.scorer.ngram {
            Some(s) => Some(Arc::new(self.fit(s)?) as Arc<dyn LanguageModel>),
            None => None,
        };
        Ok(match (self.scorer.mode, separate) {
            (ScoreMode::Likelihood, Some(m)) => {
                Box::new(LikelihoodScorer::separate(m).include_prompt(include))
            }
            (ScoreMode::Likelihood, None) => {
                Box::new(LikelihoodScorer::new(backend.clone()).include_prompt(include))
            }
            (ScoreMode::Binary, m) => Box::new(
                BinaryScorer::new(m.unwrap_or_else(|| backend.clone())).include_prompt(include),
            ),
        })
    }
}
