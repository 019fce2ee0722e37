//! Flat `key = value` configuration files. `#` starts a comment; blank
//! lines are ignored; every key may appear once. Relative paths in values
//! are resolved against the directory holding the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use inflow_core::attention::{AttentionConfig, Bandwidth, EncoderKind};
use inflow_core::flow::SubnetKind;
use inflow_core::numerics::AdamConfig;

use crate::dataset::DatasetSpec;
use crate::error::{usage, CliResult};

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "output",
    "model.blocks",
    "model.subnet",
    "model.hidden",
    "model.shared",
    "model.perm_seed",
    "model.init_seed",
    "train.data",
    "train.epochs",
    "train.steps",
    "train.batch",
    "train.lr",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.decay",
    "attention.encoder",
    "attention.encoder_seed",
    "attention.dim",
    "attention.bandwidth",
    "attention.permutations",
    "attention.alpha",
    "attention.seed",
    "attention.reference_size",
    "attention.test_batch",
    "threshold.alpha",
    "threshold.sigma",
    "detect.data",
    "detect.name",
    "detect.checkpoint",
    "detect.reference",
    "eval.in",
    "eval.bins",
    "gendata.data",
    "gendata.name",
];

/// Prefix for `eval.test.<name> = <score file>` entries.
const EVAL_TEST_PREFIX: &str = "eval.test.";
/// Prefix for `detect.data.<name> = <dataset>` entries.
const DETECT_DATA_PREFIX: &str = "detect.data.";

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed but untyped configuration.
#[derive(Debug, Clone)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
    base: PathBuf,
}

impl RawConfig {
    pub fn parse(text: &str, base: &Path) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(usage(format!("config line {line}: expected `key = value`")));
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(usage(format!("config line {line}: empty key")));
            }
            if !KNOWN_KEYS.contains(&key)
                && !is_named_key(key, EVAL_TEST_PREFIX)
                && !is_named_key(key, DETECT_DATA_PREFIX)
            {
                return Err(usage(format!("config line {line}: unknown key `{key}`")));
            }
            let entry = Entry { value: value.to_string(), line };
            if let Some(prev) = entries.insert(key.to_string(), entry) {
                return Err(usage(format!("config line {line}: `{key}` already set on line {}", prev.line)));
            }
        }
        Ok(Self { entries, base: base.to_path_buf() })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .get(key)
            .map(|e| e.value.parse().map_err(|err| usage(format!("config line {}: `{key}`: {err}", e.line))))
            .transpose()
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.entries.get(key).map(|e| self.base.join(&e.value))
    }

    fn dataset(&self, key: &str) -> CliResult<Option<DatasetSpec>> {
        self.entries
            .get(key)
            .map(|e| {
                DatasetSpec::parse(&e.value, &self.base)
                    .map_err(|msg| usage(format!("config line {}: `{key}`: {msg}", e.line)))
            })
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(e) = self.entries.get(key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(|s| s.trim().parse::<T>())
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
            .map_err(|err| usage(format!("config line {}: `{key}`: {err}", e.line)))
    }
}

fn is_plain_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || "_-".contains(c))
}

fn is_named_key(key: &str, prefix: &str) -> bool {
    key.strip_prefix(prefix).is_some_and(is_plain_name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub blocks: usize,
    /// `None`: conv for images, dense for vectors.
    pub subnet: Option<SubnetKind>,
    /// `None`: `[256]` for conv, `[64, 64]` for dense.
    pub hidden: Option<Vec<usize>>,
    pub shared: bool,
    pub perm_seed: u64,
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub data: Option<DatasetSpec>,
    pub epochs: usize,
    pub steps: usize,
    pub batch: usize,
    pub adam: AdamConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSection {
    pub alpha: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectSection {
    /// Named test sets: `detect.data` under `detect.name`, then every
    /// `detect.data.<name>` in key order.
    pub sets: Vec<(String, DatasetSpec)>,
    pub checkpoint: Option<PathBuf>,
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub in_scores: Option<PathBuf>,
    pub tests: Vec<(String, PathBuf)>,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GendataSection {
    pub data: Option<DatasetSpec>,
    pub name: String,
}

/// Everything a subcommand may need, with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub model: ModelSection,
    pub train: TrainSection,
    pub attention: AttentionConfig,
    pub threshold: ThresholdSection,
    pub detect: DetectSection,
    pub eval: EvalSection,
    pub gendata: GendataSection,
}

fn check_name(name: &str, key: &str) -> CliResult<()> {
    if !is_plain_name(name) {
        return Err(usage(format!("`{key}` must be a plain file-name stem, got {name:?}")));
    }
    Ok(())
}

impl RunConfig {
    /// `seed` and `out` override the file's `seed` and `output`.
    pub fn from_raw(raw: &RawConfig, seed: Option<u64>, out: Option<PathBuf>) -> CliResult<Self> {
        let seed = match seed {
            Some(s) => s,
            None => raw.get_or("seed", 0u64)?,
        };
        let output = out.unwrap_or_else(|| raw.path("output").unwrap_or_else(|| raw.base.join("out")));

        let model = ModelSection {
            blocks: raw.get_or("model.blocks", 2usize)?,
            subnet: raw.get::<SubnetKind>("model.subnet")?,
            hidden: raw.list("model.hidden")?,
            shared: raw.get_or("model.shared", false)?,
            perm_seed: raw.get_or("model.perm_seed", seed)?,
            init_seed: raw.get_or("model.init_seed", seed)?,
        };
        if model.blocks == 0 {
            return Err(usage("`model.blocks` must be at least 1"));
        }

        let d = AdamConfig::default();
        let train = TrainSection {
            data: raw.dataset("train.data")?,
            epochs: raw.get_or("train.epochs", 200usize)?,
            steps: raw.get_or("train.steps", 100usize)?,
            batch: raw.get_or("train.batch", 250usize)?,
            adam: AdamConfig {
                lr: raw.get_or("train.lr", d.lr)?,
                beta1: raw.get_or("train.beta1", d.beta1)?,
                beta2: raw.get_or("train.beta2", d.beta2)?,
                eps: raw.get_or("train.eps", d.eps)?,
                decay: raw.get_or("train.decay", d.decay)?,
            },
        };
        if train.batch == 0 {
            return Err(usage("`train.batch` must be positive"));
        }

        let a = AttentionConfig::default();
        let attention = AttentionConfig {
            encoder: raw.get::<EncoderKind>("attention.encoder")?,
            encoder_seed: raw.get_or("attention.encoder_seed", seed)?,
            dim: raw.get_or("attention.dim", a.dim)?,
            bandwidth: raw.get_or::<Bandwidth>("attention.bandwidth", a.bandwidth)?,
            permutations: raw.get_or("attention.permutations", a.permutations)?,
            alpha: raw.get_or("attention.alpha", a.alpha)?,
            seed: raw.get_or("attention.seed", seed)?,
            reference_size: raw.get_or("attention.reference_size", a.reference_size)?,
            test_batch: raw.get_or("attention.test_batch", a.test_batch)?,
        };
        if !(attention.alpha > 0.0 && attention.alpha < 1.0) {
            return Err(usage("`attention.alpha` must lie in (0, 1)"));
        }
        if attention.permutations == 0 || attention.dim == 0 {
            return Err(usage("`attention.permutations` and `attention.dim` must be positive"));
        }
        if attention.reference_size < 2 {
            return Err(usage("`attention.reference_size` must be at least 2"));
        }
        if attention.test_batch == 1 {
            return Err(usage(
                "`attention.test_batch` must be 0 (whole set) or at least 2: the MMD test needs two samples",
            ));
        }

        let threshold = ThresholdSection {
            alpha: raw.get_or("threshold.alpha", attention.alpha)?,
            sigma: raw.get_or("threshold.sigma", 1.0)?,
        };
        if !(threshold.alpha > 0.0 && threshold.alpha < 1.0) || !(threshold.sigma > 0.0) {
            return Err(usage("`threshold.alpha` must lie in (0, 1) and `threshold.sigma` be positive"));
        }

        let name: String = raw.get_or("detect.name", "test".to_string())?;
        check_name(&name, "detect.name")?;
        let mut sets = Vec::new();
        if let Some(d) = raw.dataset("detect.data")? {
            sets.push((name, d));
        }
        for key in raw.entries.keys().filter(|k| k.starts_with(DETECT_DATA_PREFIX)) {
            let name = key[DETECT_DATA_PREFIX.len()..].to_string();
            if sets.iter().any(|(n, _)| *n == name) {
                return Err(usage(format!("test set `{name}` is defined twice")));
            }
            sets.push((name, raw.dataset(key)?.expect("present")));
        }
        let detect =
            DetectSection { sets, checkpoint: raw.path("detect.checkpoint"), reference: raw.path("detect.reference") };

        let tests = raw
            .entries
            .keys()
            .filter_map(|k| k.strip_prefix(EVAL_TEST_PREFIX))
            .map(|name| (name.to_string(), raw.path(&format!("{EVAL_TEST_PREFIX}{name}")).expect("present")))
            .collect();
        let eval = EvalSection { in_scores: raw.path("eval.in"), tests, bins: raw.get_or("eval.bins", 50usize)? };
        if eval.bins == 0 {
            return Err(usage("`eval.bins` must be positive"));
        }

        let gendata = GendataSection {
            data: raw.dataset("gendata.data")?,
            name: raw.get_or("gendata.name", "data".to_string())?,
        };
        check_name(&gendata.name, "gendata.name")?;

        Ok(Self { seed, output, model, train, attention, threshold, detect, eval, gendata })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(text: &str) -> CliResult<RunConfig> {
        RunConfig::from_raw(&RawConfig::parse(text, Path::new("/cfg"))?, None, None)
    }

    #[test]
    fn defaults_follow_reference_setup() {
        let c = run("").unwrap();
        assert_eq!((c.train.epochs, c.train.steps, c.train.batch), (200, 100, 250));
        assert_eq!(c.train.adam, AdamConfig::default());
        assert_eq!(c.attention.permutations, 100);
        assert_eq!(c.attention.alpha, 0.05);
        assert_eq!((c.attention.reference_size, c.attention.test_batch), (250, 50));
        assert_eq!(c.threshold.alpha, 0.05);
        assert_eq!(c.model.blocks, 2);
        assert_eq!(c.output, PathBuf::from("/cfg/out"));
    }

    #[test]
    fn comments_overrides_and_paths() {
        let c = RunConfig::from_raw(
            &RawConfig::parse(
                "# comment\nseed = 4\nattention.alpha = 0.1   # trailing\nmodel.hidden = 8, 16\n\
                 eval.test.noise = scores/noise.csv\noutput = res\n",
                Path::new("/cfg"),
            )
            .unwrap(),
            Some(9),
            None,
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.model.perm_seed, 9);
        assert_eq!(c.threshold.alpha, 0.1);
        assert_eq!(c.model.hidden, Some(vec![8, 16]));
        assert_eq!(c.eval.tests, vec![("noise".to_string(), PathBuf::from("/cfg/scores/noise.csv"))]);
        assert_eq!(c.output, PathBuf::from("/cfg/res"));
    }

    #[test]
    fn named_test_sets() {
        let c = run("detect.data = noise n=3\ndetect.data.b = noise n=4\ndetect.data.a = noise n=5").unwrap();
        let names: Vec<&str> = c.detect.sets.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["test", "a", "b"]);
    }

    #[test]
    fn rejects_bad_files() {
        for text in [
            "unknown.key = 1",
            "seed = 1\nseed = 2",
            "justtext",
            "train.epochs = many",
            "attention.alpha = 1.5",
            "attention.test_batch = 1",
            "detect.name = ../x",
            "eval.test. = a.csv",
            "detect.data.a/b = noise n=3",
            "detect.name = x\ndetect.data = noise n=3\ndetect.data.x = noise n=4",
        ] {
            assert!(run(text).is_err(), "{text:?} accepted");
        }
    }
}
