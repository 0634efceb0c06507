//! Run configuration: every training key plus data and output locations, read
//! from a flat `key = value` file and overridable key by key.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::data::{build_vocab, load_corpus, synth_generate, Corpus, SynthSpec, Vocabulary};
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    /// Directory with one TSV subdirectory per domain.
    pub corpus: Option<PathBuf>,
    /// Synthetic spec string, used when no corpus is given.
    pub synth: Option<String>,
    pub out: PathBuf,
    pub vocab_size: usize,
    /// Inferred from the labels when absent.
    pub num_classes: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            corpus: None,
            synth: None,
            out: PathBuf::from("run"),
            vocab_size: 5000,
            num_classes: None,
        }
    }
}

/// Keys outside [`TrainConfig`].
pub const RUN_KEYS: &[(&str, &str)] = &[
    ("corpus", "corpus directory (one subdirectory per domain)"),
    ("synth", "synthetic data spec, e.g. preset=separable,seed=3"),
    ("out", "output directory"),
    ("vocab_size", "number of most frequent features kept"),
    ("num_classes", "class count (none: one past the largest label)"),
];

fn opt(v: &str) -> Option<&str> {
    match v.trim() {
        "" | "none" => None,
        s => Some(s),
    }
}

impl RunConfig {
    /// All `(key, help)` pairs: training keys first.
    pub fn keys() -> impl Iterator<Item = (&'static str, &'static str)> {
        TrainConfig::KEYS.iter().chain(RUN_KEYS).copied()
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "corpus" => self.corpus = opt(v).map(PathBuf::from),
            "synth" => self.synth = opt(v).map(str::to_string),
            "out" => self.out = PathBuf::from(v.trim()),
            "vocab_size" => {
                self.vocab_size = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("vocab_size: cannot parse {v:?}")))?
            }
            "num_classes" => {
                self.num_classes = opt(v)
                    .map(|s| {
                        s.parse()
                            .map_err(|_| Error::Config(format!("num_classes: cannot parse {v:?}")))
                    })
                    .transpose()?
            }
            k => self.train.set(k, v)?,
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let key = key.replace('-', "_");
        let s = match key.as_str() {
            "corpus" => self
                .corpus
                .as_ref()
                .map_or("none".into(), |p| p.display().to_string()),
            "synth" => self.synth.clone().unwrap_or_else(|| "none".into()),
            "out" => self.out.display().to_string(),
            "vocab_size" => self.vocab_size.to_string(),
            "num_classes" => self.num_classes.map_or("none".into(), |k| k.to_string()),
            k => return self.train.get(k),
        };
        Some(s)
    }

    /// Applies a `key = value` text. `#` starts a comment; blank lines are skipped.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key = value, got {line:?}")))?;
            self.set(k, v).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::default();
        c.apply_text(&text, path)?;
        Ok(c)
    }

    /// The file form: one `key = value` line per key.
    pub fn to_text(&self) -> String {
        Self::keys()
            .map(|(k, _)| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    /// Every key with its text value, for the metrics header.
    pub fn echo(&self) -> serde_json::Value {
        let map = Self::keys()
            .map(|(k, _)| (k.to_string(), serde_json::Value::String(self.get(k).expect("known key"))))
            .collect();
        serde_json::Value::Object(map)
    }

    /// Loads the corpus directory, or generates the synthetic spec.
    pub fn load_data(&self) -> Result<Corpus> {
        self.load_data_with(None)
    }

    /// Like [`load_data`](Self::load_data), but a corpus directory is
    /// vectorized with `vocab` when given instead of a fresh vocabulary.
    pub fn load_data_with(&self, vocab: Option<Vocabulary>) -> Result<Corpus> {
        match (&self.corpus, &self.synth) {
            (Some(_), Some(_)) => Err(Error::Config("give either corpus or synth, not both".into())),
            (Some(dir), None) => {
                let raw = load_corpus(dir)?;
                let vocab = vocab.unwrap_or_else(|| build_vocab(&raw, self.vocab_size));
                Corpus::from_raw(&raw, vocab, self.num_classes)
            }
            (None, Some(s)) => {
                let spec = SynthSpec::parse(s)?;
                if let Some(k) = self.num_classes {
                    if k != spec.num_classes {
                        return Err(Error::Config(format!(
                            "num_classes {k} disagrees with the synthetic spec ({})",
                            spec.num_classes
                        )));
                    }
                }
                synth_generate(&spec)
            }
            (None, None) => Err(Error::Config("no data: set corpus or synth".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trips() {
        let mut c = RunConfig::default();
        c.set("synth", "preset=tiny").unwrap();
        c.set("lambda", "0.5").unwrap();
        c.set("num-classes", "2").unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.to_text(), Path::new("x.conf")).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn comments_and_unknown_keys() {
        let mut c = RunConfig::default();
        c.apply_text("# top\nlr = 0.01  # trailing\n\n", Path::new("a")).unwrap();
        assert_eq!(c.train.lr, 0.01);
        let e = c.apply_text("lr = 1\nfoo = 2\n", Path::new("a")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        assert!(c.apply_text("lr 1\n", Path::new("a")).is_err());
    }

    #[test]
    fn echo_lists_every_key() {
        let c = RunConfig::default();
        let v = c.echo();
        for (k, _) in RunConfig::keys() {
            assert!(v.get(k).is_some(), "{k}");
        }
    }

    #[test]
    fn data_source_is_required() {
        assert!(matches!(RunConfig::default().load_data(), Err(Error::Config(_))));
    }
}
