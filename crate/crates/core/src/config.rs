//! Declarative experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classlm::Smoothing;
use crate::contextmap::RobustnessPolicy;
use crate::dialog::PolicyConfig;
use crate::error::{Error, Result};
use crate::wordclass::ExchangeOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Fraction of the field-trial class sizes to generate.
    pub scale: f64,
    pub test_ratio: f64,
    /// Probability of a `<noise>` token before each generated utterance.
    pub noise_rate: f64,
    pub min_count: usize,
    /// Alternative utterance grammar; the built-in one when absent.
    pub grammar: Option<PathBuf>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            scale: 0.1,
            test_ratio: 0.2,
            noise_rate: 0.0,
            min_count: 1,
            grammar: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Number of word classes; 0 keeps one class per word.
    pub classes: u32,
    pub max_sweeps: usize,
    /// Exchange runs from different starting maps; the best is kept.
    pub restarts: usize,
    /// Cluster each specific model's training data separately instead of
    /// sharing one global map. Implies per-model emission tables.
    pub per_model: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            classes: 40,
            max_sweeps: 20,
            restarts: 1,
            per_model: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub smoothing: Smoothing,
    pub unk_floor: f64,
    /// Specific models reuse the global word-given-class table and only
    /// re-estimate class transitions.
    pub shared_emissions: bool,
    /// Use the context-independent trigram for rescoring in every context.
    pub shared_trigram: bool,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            smoothing: Smoothing::WittenBell,
            unk_floor: 1e-6,
            shared_emissions: true,
            shared_trigram: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    pub min_utterances: u64,
    pub min_multiword: u64,
    /// Thresholds are given for a full-size corpus and scaled to the
    /// generated training set.
    pub full_scale: bool,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig {
            min_utterances: 250,
            min_multiword: 200,
            full_scale: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognizerConfig {
    pub nbest: usize,
    pub noise: f64,
    pub lambda: f64,
    /// Alternative confusion table; the built-in one when absent.
    pub confusions: Option<PathBuf>,
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        RecognizerConfig {
            nbest: 10,
            noise: 0.5,
            lambda: 1.0,
            confusions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Number of consecutive seeds, starting at `seed`, used by `compare`.
    pub seeds: usize,
    /// Point both conditions at the context-independent model.
    pub control: bool,
    pub corpus: CorpusConfig,
    pub clustering: ClusterConfig,
    pub lm: LmConfig,
    pub robustness: RobustnessConfig,
    pub recognizer: RecognizerConfig,
    pub dialog: PolicyConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            seeds: 5,
            control: false,
            corpus: CorpusConfig::default(),
            clustering: ClusterConfig::default(),
            lm: LmConfig::default(),
            robustness: RobustnessConfig::default(),
            recognizer: RecognizerConfig::default(),
            dialog: PolicyConfig::default(),
        }
    }
}

fn bad(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Dotted key of the assignment containing byte `pos`, or its line number.
fn field_at(text: &str, pos: usize) -> String {
    let start = text[..pos].rfind('\n').map_or(0, |i| i + 1);
    let line = text[start..].lines().next().unwrap_or("");
    let Some((key, _)) = line.split_once('=') else {
        return format!("line {}", text[..pos].matches('\n').count() + 1);
    };
    let table = text[..start]
        .lines()
        .rev()
        .find_map(|l| l.trim().strip_prefix('[').and_then(|l| l.strip_suffix(']')));
    match table {
        Some(t) => format!("{}.{}", t.trim(), key.trim()),
        None => key.trim().to_string(),
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.corpus.grammar, &mut cfg.recognizer.confusions]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let reason = e.message().to_string();
            let field = reason
                .split('`')
                .nth(1)
                .filter(|_| reason.starts_with("unknown field"))
                .map(str::to_string)
                .or_else(|| e.span().map(|s| field_at(text, s.start)))
                .unwrap_or_else(|| "-".into());
            bad(&field, reason)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.corpus;
        if !(c.scale > 0.0 && c.scale.is_finite()) {
            return Err(bad("corpus.scale", "must be positive"));
        }
        if !(c.test_ratio > 0.0 && c.test_ratio < 1.0) {
            return Err(bad("corpus.test_ratio", "must lie strictly between 0 and 1"));
        }
        if !(0.0..=1.0).contains(&c.noise_rate) {
            return Err(bad("corpus.noise_rate", "must lie in [0, 1]"));
        }
        if c.min_count == 0 {
            return Err(bad("corpus.min_count", "must be at least 1"));
        }
        if self.seeds == 0 {
            return Err(bad("seeds", "must be at least 1"));
        }
        if self.clustering.max_sweeps == 0 {
            return Err(bad("clustering.max_sweeps", "must be at least 1"));
        }
        if self.clustering.restarts == 0 {
            return Err(bad("clustering.restarts", "must be at least 1"));
        }
        if !(self.lm.unk_floor > 0.0 && self.lm.unk_floor < 1.0) {
            return Err(bad("lm.unk_floor", "must lie strictly between 0 and 1"));
        }
        let r = &self.recognizer;
        if r.nbest == 0 {
            return Err(bad("recognizer.nbest", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&r.noise) {
            return Err(bad("recognizer.noise", "must lie in [0, 1]"));
        }
        if !(r.lambda >= 0.0 && r.lambda.is_finite()) {
            return Err(bad("recognizer.lambda", "must be finite and non-negative"));
        }
        if self.dialog.max_turns == 0 {
            return Err(bad("dialog.max_turns", "must be at least 1"));
        }
        Ok(())
    }

    pub fn exchange_options(&self, seed: u64) -> ExchangeOptions {
        ExchangeOptions {
            max_sweeps: self.clustering.max_sweeps,
            restarts: self.clustering.restarts,
            seed,
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    /// Robustness thresholds in units of the generated training set.
    pub fn policy(&self) -> RobustnessPolicy {
        let r = &self.robustness;
        if !r.full_scale {
            return RobustnessPolicy {
                min_utterances: r.min_utterances,
                min_multiword: r.min_multiword,
            };
        }
        let f = self.corpus.scale * (1.0 - self.corpus.test_ratio);
        RobustnessPolicy {
            min_utterances: (r.min_utterances as f64 * f).round() as u64,
            min_multiword: (r.min_multiword as f64 * f).round() as u64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = Config::default();
        cfg.validate().unwrap();
        assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(Config::from_toml("").unwrap(), cfg);
        assert_eq!(cfg.seed_list(), [1, 2, 3, 4, 5]);
    }

    #[test]
    fn partial_files_keep_defaults() {
        let cfg = Config::from_toml("seed = 9\n[recognizer]\nlambda = 2.5\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.recognizer.lambda, 2.5);
        assert_eq!(cfg.recognizer.nbest, 10);
    }

    #[test]
    fn errors_name_the_field() {
        let field = |text: &str| match Config::from_toml(text) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(field("[corpus]\ntest_ratio = 1.5\n"), "corpus.test_ratio");
        assert_eq!(field("[recognizer]\nnoise = -1.0\n"), "recognizer.noise");
        assert_eq!(field("[corpus]\nscael = 1.0\n"), "scael");
        assert_eq!(field("seed = \"x\"\n"), "seed");
        assert_eq!(field("[recognizer]\nnbest = 2.5\n"), "recognizer.nbest");
    }

    #[test]
    fn scaled_policy() {
        let p = Config::default().policy();
        assert_eq!(p.min_utterances, 20);
        assert_eq!(p.min_multiword, 16);
    }
}
