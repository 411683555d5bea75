use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Split;
use crate::decontam::DecontamConfig;
use crate::error::{Error, Result};
use crate::hash::fnv1a64;
use crate::ranker::{Aggregation, Granularity, RankMode, RankOptions, TargetSampling, ValueKind};
use crate::scorer::{Balancing, Hyperparams};

/// Prefix of environment overrides: `BETR__SECTION__KEY=value` sets
/// `section.key`. `BETR_SEED` and `BETR_WORKERS` are shorthands.
pub const ENV_PREFIX: &str = "BETR__";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Sample,
    BuildTargets,
    Rank,
    Diagnostics,
    TrainScorer,
    Score,
    Calibrate,
    Filter,
    Decontam,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Ingest,
        Stage::Sample,
        Stage::BuildTargets,
        Stage::Rank,
        Stage::Diagnostics,
        Stage::TrainScorer,
        Stage::Score,
        Stage::Calibrate,
        Stage::Filter,
        Stage::Decontam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Sample => "sample",
            Stage::BuildTargets => "build-targets",
            Stage::Rank => "rank",
            Stage::Diagnostics => "diagnostics",
            Stage::TrainScorer => "train-scorer",
            Stage::Score => "score",
            Stage::Calibrate => "calibrate",
            Stage::Filter => "filter",
            Stage::Decontam => "decontam",
        }
    }

    /// Stages whose artifacts this one reads.
    pub fn dependencies(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Sample | Stage::BuildTargets => &[Stage::Ingest],
            Stage::Rank => &[Stage::Sample, Stage::BuildTargets],
            Stage::Diagnostics => &[Stage::Rank],
            Stage::TrainScorer => &[Stage::Ingest, Stage::Rank],
            Stage::Score => &[Stage::Ingest, Stage::TrainScorer],
            Stage::Calibrate => &[Stage::Sample, Stage::Score],
            Stage::Filter => &[Stage::Ingest, Stage::Score, Stage::Calibrate],
            Stage::Decontam => &[Stage::Ingest, Stage::Filter],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Worker threads for parallel stages; 0 uses every core. Results do not
    /// depend on it.
    pub workers: usize,
    /// Run root; artifacts are written here.
    pub output_dir: String,
    /// Relative to the run root.
    pub manifest_dir: String,
    pub stages: Vec<Stage>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            workers: 0,
            output_dir: "out".into(),
            manifest_dir: "manifests".into(),
            stages: Stage::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputsSection {
    pub documents: String,
    pub benchmarks: String,
    pub document_embeddings: String,
    pub benchmark_embeddings: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// Recount tokens even when a count is present.
    pub recount: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub size: usize,
    pub seed: Option<u64>,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            size: 10_000_000,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetsSection {
    pub granularity: Granularity,
    pub sampling: TargetSampling,
    pub splits: Vec<Split>,
    pub seed: Option<u64>,
}

impl Default for TargetsSection {
    fn default() -> Self {
        TargetsSection {
            granularity: Granularity::PerExample,
            sampling: TargetSampling::AllExamples,
            splits: vec![Split::Train, Split::Unsplit],
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSection {
    pub mode: RankMode,
    pub block_size: usize,
    pub value: ValueKind,
    pub aggregation: Aggregation,
    pub label_fraction: f64,
}

impl Default for RankSection {
    fn default() -> Self {
        let opts = RankOptions::default();
        RankSection {
            mode: opts.mode,
            block_size: opts.block_size,
            value: ValueKind::Log2Inv,
            aggregation: Aggregation::Max,
            label_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSection {
    pub hyperparams: Hyperparams,
    pub balancing: Balancing,
    pub holdout_fraction: f64,
    /// More than one thread trains with shared unsynchronized weights, which
    /// is not reproducible.
    pub threads: usize,
    pub seed: Option<u64>,
}

impl Default for ScorerSection {
    fn default() -> Self {
        ScorerSection {
            hyperparams: Hyperparams::default(),
            balancing: Balancing::DownsampleMajority,
            holdout_fraction: 0.1,
            threads: 1,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub target_fraction: f64,
    pub holdout_size: usize,
    /// Draw the holdout from documents outside the ranking sample.
    pub disjoint_from_sample: bool,
    pub seed: Option<u64>,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        CalibrateSection {
            target_fraction: 0.1,
            holdout_size: 100_000,
            disjoint_from_sample: true,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecontamSection {
    /// Benchmark splits whose texts are removed from the corpus.
    pub splits: Vec<Split>,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub excision_radius_chars: usize,
    pub max_splits: usize,
    pub common_ngram_skip_count: u64,
}

impl Default for DecontamSection {
    fn default() -> Self {
        let c = DecontamConfig::default();
        DecontamSection {
            splits: vec![Split::Test],
            ngram_min: c.ngram_min,
            ngram_max: c.ngram_max,
            excision_radius_chars: c.excision_radius_chars,
            max_splits: c.max_splits,
            common_ngram_skip_count: c.common_ngram_skip_count,
        }
    }
}

impl DecontamSection {
    pub fn config(&self) -> DecontamConfig {
        DecontamConfig {
            ngram_min: self.ngram_min,
            ngram_max: self.ngram_max,
            excision_radius_chars: self.excision_radius_chars,
            max_splits: self.max_splits,
            common_ngram_skip_count: self.common_ngram_skip_count,
        }
    }
}

/// A whole run. Relative paths resolve against the directory holding the
/// config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub run: RunSection,
    pub inputs: InputsSection,
    pub ingest: IngestSection,
    pub sample: SampleSection,
    pub targets: TargetsSection,
    pub rank: RankSection,
    pub scorer: ScorerSection,
    pub calibrate: CalibrateSection,
    pub decontam: DecontamSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Seed for one stage, derived from the run seed and the stage name.
pub fn derive_seed(run_seed: u64, stage: &str) -> u64 {
    let mut z = run_seed ^ fnv1a64(stage.as_bytes());
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::invalid(format!("bad config key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::invalid(format!("config key {key:?} crosses a non-table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw));
    Ok(())
}

/// Maps an environment variable to a dotted config key.
pub fn env_key(name: &str) -> Option<String> {
    match name {
        "BETR_SEED" => Some("run.seed".into()),
        "BETR_WORKERS" => Some("run.workers".into()),
        _ => name
            .strip_prefix(ENV_PREFIX)
            .map(|rest| rest.to_ascii_lowercase().replace("__", ".")),
    }
}

impl PipelineConfig {
    /// Layers overrides on top of the file: flag > env > file > default.
    /// `flags` holds `(dotted key, value)` pairs; values are parsed as TOML
    /// and fall back to plain strings.
    pub fn resolve(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        flags: &[(String, String)],
    ) -> Result<Self> {
        let (mut table, base_dir) = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
                let table: toml::Table = toml::from_str(&text)
                    .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (table, base)
            }
            None => (toml::Table::new(), PathBuf::new()),
        };
        let mut env: Vec<(String, String)> = env
            .into_iter()
            .filter_map(|(k, v)| env_key(&k).map(|k| (k, v)))
            .collect();
        env.sort();
        for (k, v) in &env {
            set_dotted(&mut table, k, v)?;
        }
        for (k, v) in flags {
            set_dotted(&mut table, k, v)?;
        }
        let mut cfg: PipelineConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::invalid(format!("config: {e}")))?;
        cfg.base_dir = base_dir;
        cfg.materialize();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fills derived defaults so that the serialized config is complete.
    pub fn materialize(&mut self) {
        let s = self.run.seed;
        self.sample.seed.get_or_insert(derive_seed(s, "sample"));
        self.targets
            .seed
            .get_or_insert(derive_seed(s, "build-targets"));
        self.scorer
            .seed
            .get_or_insert(derive_seed(s, "train-scorer"));
        self.calibrate
            .seed
            .get_or_insert(derive_seed(s, "calibrate"));
    }

    pub fn validate(&self) -> Result<()> {
        let stages = &self.run.stages;
        if stages.is_empty() {
            return Err(Error::invalid("no stages to run"));
        }
        if stages.windows(2).any(|w| w[0] >= w[1]) {
            let names: Vec<&str> = Stage::ALL.iter().map(|s| s.name()).collect();
            return Err(Error::invalid(format!(
                "stages must be distinct and in order: {}",
                names.join(", ")
            )));
        }
        let need = |field: &str, value: &str| {
            if value.is_empty() {
                Err(Error::invalid(format!("inputs.{field} is required")))
            } else {
                Ok(())
            }
        };
        for stage in stages {
            match stage {
                Stage::Ingest => {
                    need("documents", &self.inputs.documents)?;
                    need("benchmarks", &self.inputs.benchmarks)?;
                }
                Stage::BuildTargets => {
                    need("benchmark_embeddings", &self.inputs.benchmark_embeddings)?
                }
                Stage::Rank => need("document_embeddings", &self.inputs.document_embeddings)?,
                _ => {}
            }
        }
        if !(self.rank.label_fraction > 0.0 && self.rank.label_fraction < 1.0) {
            return Err(Error::invalid("rank.label_fraction must be in (0, 1)"));
        }
        if !(self.calibrate.target_fraction > 0.0 && self.calibrate.target_fraction <= 1.0) {
            return Err(Error::invalid(
                "calibrate.target_fraction must be in (0, 1]",
            ));
        }
        if !(0.0..1.0).contains(&self.scorer.holdout_fraction) {
            return Err(Error::invalid("scorer.holdout_fraction must be in [0, 1)"));
        }
        if self.scorer.threads == 0 {
            return Err(Error::invalid("scorer.threads must be at least 1"));
        }
        self.decontam.config().validate()
    }

    pub fn resolve_path(&self, p: &str) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve_path(&self.run.output_dir)
    }

    pub fn manifest_dir(&self) -> PathBuf {
        self.output_dir().join(&self.run.manifest_dir)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
