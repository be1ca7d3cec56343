//! Run configuration: one TOML (or JSON) file describing tiers, labeling,
//! routing, verification and paths. Relative paths resolve against the
//! config file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use tierwise::backends::{build_backend, BackendConfig, ModelTier, TierSet};
use tierwise::classifier::{Classifier, PromptClassifier, ReplayClassifier};
use tierwise::corpus::SplitSpec;
use tierwise::labeling::{MappingSpec, MappingTable, Scheme};
use tierwise::router::{PolicySpec, RoutingPolicy};
use tierwise::verifier::{RunnerCommand, RunnerPool, StubVerifier, Verifier, DEFAULT_TIMEOUT_MS};

fn default_trials() -> u32 {
    5
}
fn default_temperature() -> f64 {
    tierwise::backends::DEFAULT_TEMPERATURE
}
fn default_max_tokens() -> u32 {
    tierwise::backends::DEFAULT_MAX_TOKENS
}
fn default_concurrency() -> usize {
    4
}
fn default_verify_timeout() -> u64 {
    DEFAULT_TIMEOUT_MS
}
fn default_train_fraction() -> f64 {
    0.8
}
fn default_scheme() -> Scheme {
    Scheme::FiveLevel
}
fn default_pool_size() -> usize {
    4
}
fn default_model_id() -> String {
    "complexity".to_string()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Corpus consumed by `collect`, `label` and `route`.
    pub corpus: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VerifierConfig {
    /// Scripted verdict table, line-delimited `{task_id, code|code_hash, kind, detail, duration_ms}`.
    Stub { table: PathBuf },
    /// External runner speaking the line protocol.
    Runner {
        command: Vec<String>,
        #[serde(default = "default_pool_size")]
        pool_size: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierConfig {
    /// Recorded `{task_id, level}` rows.
    Replay { predictions: PathBuf },
    /// A model queried through any backend.
    Prompt {
        #[serde(default = "default_model_id")]
        model_id: String,
        backend: BackendConfig,
        #[serde(default)]
        instruction: Option<String>,
        #[serde(default)]
        temperature: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_trials")]
    pub trials: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_verify_timeout")]
    pub verify_timeout_ms: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub include_classifier_overhead: bool,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub tiers: Vec<ModelTier>,
    #[serde(default)]
    pub mapping: Option<MappingSpec>,
    #[serde(default)]
    pub policy: Option<PolicySpec>,
    #[serde(default)]
    pub verifier: Option<VerifierConfig>,
    #[serde(default)]
    pub classifier: Option<ClassifierConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub concurrency: Option<usize>,
    pub replay: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// A validated configuration.
pub struct Run {
    pub config: RunConfig,
    pub tiers: Option<TierSet>,
    pub table: MappingTable,
    pub policy: Option<RoutingPolicy>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let is_json = path.extension().is_some_and(|e| e == "json");
        if is_json {
            serde_json::from_str(text).with_context(|| format!("parsing {}", path.display()))
        } else {
            toml::from_str(text).with_context(|| format!("parsing {}", path.display()))
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.paths.corpus.as_mut() {
            fix(p);
        }
        if let Some(p) = self.paths.out_dir.as_mut() {
            fix(p);
        }
        let fix_backend = |b: &mut BackendConfig| {
            if let BackendConfig::Replay { store } = b {
                fix(store);
            }
        };
        for t in &mut self.tiers {
            fix_backend(&mut t.backend);
        }
        match self.verifier.as_mut() {
            Some(VerifierConfig::Stub { table }) => fix(table),
            Some(VerifierConfig::Runner { .. }) | None => {}
        }
        match self.classifier.as_mut() {
            Some(ClassifierConfig::Replay { predictions }) => fix(predictions),
            Some(ClassifierConfig::Prompt { backend, .. }) => fix_backend(backend),
            None => {}
        }
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(c) = o.concurrency {
            self.concurrency = c;
        }
        if let Some(store) = &o.replay {
            for t in &mut self.tiers {
                t.backend = BackendConfig::Replay { store: store.clone() };
            }
            if let Some(ClassifierConfig::Prompt { backend, .. }) = self.classifier.as_mut() {
                *backend = BackendConfig::Replay { store: store.clone() };
            }
        }
        if let Some(dir) = &o.out_dir {
            self.paths.out_dir = Some(dir.clone());
        }
    }

    /// Checks everything and reports all problems at once.
    pub fn validate(self) -> Result<Run, Vec<String>> {
        let mut problems = Vec::new();
        let c = &self;

        if c.trials == 0 {
            problems.push("trials must be >= 1".to_string());
        }
        if c.scheme == Scheme::SingleTrial && c.trials != 1 {
            problems.push(format!("scheme single_trial needs trials = 1, got {}", c.trials));
        }
        if c.temperature.is_nan() || c.temperature < 0.0 {
            problems.push(format!("temperature must be >= 0, got {}", c.temperature));
        }
        if c.max_tokens == 0 {
            problems.push("max_tokens must be >= 1".to_string());
        }
        if c.concurrency == 0 {
            problems.push("concurrency must be >= 1".to_string());
        }
        if c.verify_timeout_ms == 0 {
            problems.push("verify_timeout_ms must be >= 1".to_string());
        }
        if let Err(e) = (SplitSpec {
            train_fraction: c.train_fraction,
            seed: c.seed,
        })
        .train_size(1)
        {
            problems.push(e.to_string());
        }

        let tiers = if c.tiers.is_empty() {
            None
        } else {
            match TierSet::new(c.tiers.clone()) {
                Ok(t) => Some(t),
                Err(p) => {
                    problems.extend(p.into_iter().map(|m| format!("tiers: {m}")));
                    None
                }
            }
        };

        let table = match &c.mapping {
            None => MappingTable::default_five_trial(),
            Some(spec) => match MappingTable::new(spec.clone()) {
                Ok(t) => t,
                Err(e) => {
                    problems.push(format!("mapping: {e}"));
                    MappingTable::default_five_trial()
                }
            },
        };
        if c.scheme == Scheme::FiveLevel {
            if table.trials() != c.trials {
                problems.push(format!(
                    "mapping is for M = {} but trials = {}",
                    table.trials(),
                    c.trials
                ));
            }
            if !c.tiers.is_empty() && table.tiers() != c.tiers.len() {
                problems.push(format!(
                    "mapping is for {} tiers but {} are configured",
                    table.tiers(),
                    c.tiers.len()
                ));
            }
        }

        let policy = match (&tiers, &c.policy) {
            (Some(t), None) => match RoutingPolicy::default_for(c.scheme, t) {
                Ok(p) => Some(p),
                Err(e) => {
                    problems.push(format!("default policy: {e}"));
                    None
                }
            },
            (Some(t), Some(spec)) => {
                if spec.scheme != c.scheme {
                    problems.push(format!(
                        "policy scheme {} differs from scheme {}",
                        spec.scheme, c.scheme
                    ));
                }
                match RoutingPolicy::from_spec(spec, t) {
                    Ok(p) => Some(p),
                    Err(e) => {
                        problems.push(format!("policy: {e}"));
                        None
                    }
                }
            }
            (None, Some(_)) => {
                problems.push("policy given without tiers".to_string());
                None
            }
            (None, None) => None,
        };

        fn must_exist(problems: &mut Vec<String>, what: &str, p: &Path) {
            if !p.is_file() {
                problems.push(format!("{what} {} does not exist", p.display()));
            }
        }
        for t in &c.tiers {
            if let BackendConfig::Replay { store } = &t.backend {
                must_exist(&mut problems, &format!("tier {:?} replay store", t.tier_id), store);
            }
        }
        match &c.verifier {
            Some(VerifierConfig::Stub { table }) => must_exist(&mut problems, "verifier table", table),
            Some(VerifierConfig::Runner { command, pool_size }) => {
                if command.is_empty() {
                    problems.push("verifier runner command is empty".to_string());
                }
                if *pool_size == 0 {
                    problems.push("verifier pool_size must be >= 1".to_string());
                }
            }
            None => {}
        }
        match &c.classifier {
            Some(ClassifierConfig::Replay { predictions }) => {
                must_exist(&mut problems, "classifier predictions", predictions)
            }
            Some(ClassifierConfig::Prompt {
                backend: BackendConfig::Replay { store },
                ..
            }) => must_exist(&mut problems, "classifier replay store", store),
            Some(ClassifierConfig::Prompt { .. }) | None => {}
        }

        if !problems.is_empty() {
            return Err(problems);
        }
        let out_dir = self.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
        Ok(Run {
            config: self,
            tiers,
            table,
            policy,
            out_dir,
        })
    }
}

/// Loads `path` (or defaults when absent), applies overrides and validates.
pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Run> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            let mut cfg = RunConfig::parse(&text, p)?;
            let base = p
                .parent()
                .filter(|b| !b.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            cfg.resolve_paths(base);
            cfg
        }
        None => RunConfig::default(),
    };
    cfg.apply(overrides);
    cfg.validate().map_err(|problems| {
        let list: Vec<String> = problems.iter().map(|p| format!("  - {p}")).collect();
        anyhow::anyhow!(
            "invalid configuration ({} problem(s)):\n{}",
            problems.len(),
            list.join("\n")
        )
    })
}

impl Run {
    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn tiers(&self) -> Result<&TierSet> {
        match &self.tiers {
            Some(t) => Ok(t),
            None => bail!("this command needs [[tiers]] in the config"),
        }
    }

    pub fn policy(&self) -> Result<&RoutingPolicy> {
        self.tiers()?;
        Ok(self.policy.as_ref().expect("validated with tiers"))
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.config.train_fraction,
            seed: self.config.seed,
        }
    }

    /// The configured corpus, or the one `ingest` writes to the output dir.
    pub fn corpus_path(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.config.paths.corpus.clone())
            .unwrap_or_else(|| self.out("corpus.jsonl"))
    }

    pub fn verifier(&self) -> Result<Box<dyn Verifier>> {
        match &self.config.verifier {
            Some(VerifierConfig::Stub { table }) => {
                Ok(Box::new(StubVerifier::load(table).with_context(|| {
                    format!("loading verifier table {}", table.display())
                })?))
            }
            Some(VerifierConfig::Runner { command, pool_size }) => {
                let cmd = RunnerCommand::new(command[0].clone(), command[1..].to_vec());
                Ok(Box::new(RunnerPool::new(cmd, *pool_size)))
            }
            None => bail!("this command needs a [verifier] section in the config"),
        }
    }

    pub fn classifier(&self, predictions: Option<&Path>) -> Result<Box<dyn Classifier>> {
        let scheme = self.config.scheme;
        if let Some(p) = predictions {
            return Ok(Box::new(
                ReplayClassifier::load(p, scheme).with_context(|| format!("loading predictions {}", p.display()))?,
            ));
        }
        match &self.config.classifier {
            Some(ClassifierConfig::Replay { predictions }) => Ok(Box::new(
                ReplayClassifier::load(predictions, scheme)
                    .with_context(|| format!("loading predictions {}", predictions.display()))?,
            )),
            Some(ClassifierConfig::Prompt {
                model_id,
                backend,
                instruction,
                temperature,
            }) => {
                let b: Arc<dyn tierwise::backends::Backend> = build_backend(backend)?;
                let mut c = PromptClassifier::new(b, model_id.clone(), scheme).with_temperature(*temperature);
                if let Some(i) = instruction {
                    c = c.with_instruction(i.clone());
                }
                Ok(Box::new(c))
            }
            None => bail!("no classifier: pass --predictions or add a [classifier] section"),
        }
    }
}
