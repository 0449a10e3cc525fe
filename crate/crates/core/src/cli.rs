//! Command-line front end: `synth`, `preprocess`, `run` and `validate`.
//!
//! Runs are described by a TOML file (see `docs/run_config.md`); flags
//! override individual fields. Exit codes: 0 success, 1 runtime failure,
//! 2 usage error. Failures print one JSON object on stderr:
//! `{"error": "<kind>", "message": "<text>"}`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{with_threads, Execution};
use crate::experiment::{run_experiment, ExperimentConfig};
use crate::ingest::{read_recording, synthesize_subject, write_recording, DatasetManifest, SynthesisConfig};
use crate::learn::Architecture;
use crate::model::{default_montage, default_task_catalog, TaskSetName};
use crate::pipeline::{
    features_from_manifest, features_from_synthesis, hash_manifest_inputs, hash_synthesis_inputs, read_store,
    read_store_header, store_is_current, write_store, FeatureDataset, PipelineConfig,
};
use crate::report::{emit, RunSummary};
use crate::xplan::{Analysis, ScopeKind};

/// Overrides the output directory of `run` unless `--out` is given.
pub const OUT_DIR_ENV: &str = "EMGTASK_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Manifest JSON referencing recording containers.
    Manifest(PathBuf),
    /// Feature store written by `preprocess`.
    Store(PathBuf),
    /// Generated in memory; the run seed replaces `synthesis.seed`.
    Synthesis(SynthesisConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds synthesis and training.
    pub seed: u64,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Feature store reused across runs (manifest and synthesis sources).
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub sequential: bool,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Parses TOML and resolves relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut cfg.dataset {
            DatasetSource::Manifest(p) | DatasetSource::Store(p) => resolve(p),
            DatasetSource::Synthesis(_) => {}
        }
        resolve(&mut cfg.out_dir);
        if let Some(p) = &mut cfg.cache_dir {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Copies the run seed into every seeded component.
    pub fn seeded(mut self) -> Self {
        self.experiment.train.seed = self.seed;
        if let DatasetSource::Synthesis(s) = &mut self.dataset {
            s.seed = self.seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        match &self.dataset {
            DatasetSource::Manifest(p) if !p.is_file() => {
                Err(Error::InvalidConfig(format!("manifest {} does not exist", p.display())))
            }
            DatasetSource::Store(p) if !p.is_dir() => {
                Err(Error::InvalidConfig(format!("store {} does not exist", p.display())))
            }
            DatasetSource::Synthesis(s) => s.validate(),
            _ => Ok(()),
        }
    }

    pub fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "emgtask",
    version,
    about = "EMG artifact detection experiments on EEG recordings"
)]
pub struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset (manifest plus containers).
    Synth(SynthArgs),
    /// Build or refresh the feature store for a run configuration.
    Preprocess(PreprocessArgs),
    /// Plan, train, score, test and emit reports.
    Run(RunArgs),
    /// Check a manifest, container or feature store.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML synthesis configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub snr_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Store directory; defaults to the config's `cache_dir`.
    #[arg(long)]
    pub store: Option<PathBuf>,
}

fn parse_analysis(s: &str) -> std::result::Result<Analysis, String> {
    Analysis::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Analysis::ALL.iter().map(|a| a.as_str()).collect();
        format!("unknown analysis {s:?}; expected one of {}", names.join(", "))
    })
}

fn parse_scope(s: &str) -> std::result::Result<ScopeKind, String> {
    match s {
        "individual" => Ok(ScopeKind::Individual),
        "generalized" => Ok(ScopeKind::Generalized),
        _ => Err(format!("unknown scope {s:?}; expected individual or generalized")),
    }
}

fn parse_task_set(s: &str) -> std::result::Result<TaskSetName, String> {
    match s {
        "full" => Ok(TaskSetName::Full),
        "selected" => Ok(TaskSetName::Selected),
        _ => Err(format!("unknown task set {s:?}; expected full or selected")),
    }
}

fn parse_architecture(s: &str) -> std::result::Result<Architecture, String> {
    match s {
        "reference_cnn" => Ok(Architecture::ReferenceCnn),
        "linear_baseline" => Ok(Architecture::LinearBaseline),
        _ => Err(format!(
            "unknown classifier {s:?}; expected reference_cnn or linear_baseline"
        )),
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides EMGTASK_OUT_DIR and the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Repeatable; replaces the configured analyses.
    #[arg(long = "analysis", value_parser = parse_analysis)]
    pub analyses: Vec<Analysis>,
    #[arg(long = "scope", value_parser = parse_scope)]
    pub scopes: Vec<ScopeKind>,
    #[arg(long = "task-set", value_parser = parse_task_set)]
    pub task_sets: Vec<TaskSetName>,
    #[arg(long, value_parser = parse_architecture)]
    pub classifier: Option<Architecture>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Manifest (.json), container, or feature store directory.
    pub path: PathBuf,
}

/// Writes `manifest.json` and one container per subject into `out`.
pub fn cmd_synth(config: &SynthesisConfig, out: &Path) -> Result<PathBuf> {
    config.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let catalog = default_task_catalog();
    let montage = default_montage();
    let mut manifest = DatasetManifest {
        version: crate::ingest::manifest::MANIFEST_VERSION,
        subjects: Vec::with_capacity(config.subjects),
    };
    for i in 0..config.subjects {
        let (entry, recording) = synthesize_subject(config, i, &catalog, &montage, Execution::default())?;
        for r in &entry.recordings {
            info!("writing {}", r.path);
            write_recording(&recording, &out.join(&r.path))?;
        }
        manifest.subjects.push(entry);
    }
    let path = out.join("manifest.json");
    manifest.write(&path)?;
    Ok(path)
}

fn input_hash(cfg: &RunConfig) -> Result<String> {
    match &cfg.dataset {
        DatasetSource::Manifest(p) => hash_manifest_inputs(p, &cfg.pipeline),
        DatasetSource::Synthesis(s) => hash_synthesis_inputs(s, &cfg.pipeline),
        DatasetSource::Store(_) => Err(Error::InvalidConfig("dataset is already a feature store".into())),
    }
}

fn compute_features(cfg: &RunConfig) -> Result<FeatureDataset> {
    let exec = cfg.execution();
    match &cfg.dataset {
        DatasetSource::Manifest(p) => features_from_manifest(p, &cfg.pipeline, exec),
        DatasetSource::Synthesis(s) => features_from_synthesis(s, &cfg.pipeline, exec),
        DatasetSource::Store(p) => Ok(read_store(p)?.1),
    }
}

/// Builds the store at `store` unless it already matches the inputs.
/// Returns `false` when nothing had to be done.
pub fn cmd_preprocess(cfg: &RunConfig, store: &Path) -> Result<bool> {
    cfg.validate()?;
    let hash = input_hash(cfg)?;
    if store_is_current(store, &hash) {
        info!("{} is up to date", store.display());
        return Ok(false);
    }
    let ds = compute_features(cfg)?;
    write_store(store, &ds, &hash, &cfg.pipeline)?;
    Ok(true)
}

fn load_features(cfg: &RunConfig) -> Result<FeatureDataset> {
    match (&cfg.dataset, &cfg.cache_dir) {
        (DatasetSource::Store(_), _) | (_, None) => compute_features(cfg),
        (_, Some(dir)) => {
            cmd_preprocess(cfg, dir)?;
            Ok(read_store(dir)?.1)
        }
    }
}

/// Runs the configured experiment and emits reports into `cfg.out_dir`.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let snapshot = cfg.clone();
    with_threads(cfg.threads, move || {
        let ds = load_features(&snapshot)?;
        info!("{} epochs from {} subjects", ds.len(), ds.subjects().len());
        let out = run_experiment(&ds, &snapshot.experiment, snapshot.execution())?;
        // parallelism settings do not change results, so they stay out of
        // the fingerprinted snapshot
        let mut fingerprinted = snapshot.clone();
        fingerprinted.threads = 0;
        fingerprinted.sequential = false;
        fingerprinted.out_dir = PathBuf::new();
        let summary = RunSummary::build(&fingerprinted, out.records, out.statistics)?;
        emit(&summary, &snapshot.out_dir)?;
        Ok(summary)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub path: String,
    pub kind: &'static str,
    pub ok: bool,
    pub messages: Vec<String>,
}

/// Checks a manifest (and every container it references), a single
/// container, or a feature store.
pub fn cmd_validate(path: &Path) -> Result<Diagnostics> {
    let mut messages = Vec::new();
    let kind;
    if path.is_dir() {
        kind = "store";
        let header = read_store_header(path)?;
        let (_, ds) = read_store(path)?;
        messages.push(format!("{} epochs from {} subjects", ds.len(), ds.subjects().len()));
        messages.push(format!("input hash {}", header.input_hash));
    } else if path.extension().is_some_and(|e| e == "json") {
        kind = "manifest";
        let manifest = DatasetManifest::read(path)?;
        manifest.validate(&default_task_catalog())?;
        for subject in &manifest.subjects {
            for entry in &subject.recordings {
                let p = DatasetManifest::resolve(path, entry);
                let rec = read_recording(&p)?;
                if rec.subject_id != subject.subject_id {
                    return Err(Error::InvalidManifest(format!(
                        "{} holds subject {}, manifest says {}",
                        p.display(),
                        rec.subject_id,
                        subject.subject_id
                    )));
                }
                let end = rec.duration_s();
                for a in &entry.artifacts {
                    if a.onset_s + a.duration_s > end + 1e-9 {
                        return Err(Error::AnnotationOutOfRange {
                            onset_s: a.onset_s,
                            duration_s: a.duration_s,
                            recording_s: end,
                        });
                    }
                }
            }
        }
        messages.push(format!("{} subjects", manifest.subjects.len()));
    } else {
        kind = "container";
        let rec = read_recording(path)?;
        messages.push(format!(
            "subject {}, {} channels, {:.1} s at {} Hz",
            rec.subject_id,
            rec.channels.len(),
            rec.duration_s(),
            rec.sampling_rate_hz
        ));
    }
    Ok(Diagnostics {
        path: path.display().to_string(),
        kind,
        ok: true,
        messages,
    })
}

fn run_command(cli: Cli) -> std::result::Result<(), (i32, Error)> {
    // configuration problems are usage errors, everything after is runtime
    let usage = |e: Error| (EXIT_USAGE, e);
    let runtime = |e: Error| (EXIT_RUNTIME, e);
    match cli.command {
        Command::Synth(a) => {
            let mut cfg = match &a.config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| usage(Error::io(p, e)))?;
                    toml::from_str(&text).map_err(|e| usage(Error::InvalidConfig(e.to_string())))?
                }
                None => SynthesisConfig::default(),
            };
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(n) = a.subjects {
                cfg.subjects = n;
            }
            if let Some(x) = a.snr_scale {
                cfg.snr_scale = x;
            }
            cfg.validate().map_err(usage)?;
            let path = cmd_synth(&cfg, &a.out).map_err(runtime)?;
            println!("{}", path.display());
        }
        Command::Preprocess(a) => {
            let cfg = RunConfig::load(&a.config).map_err(usage)?.seeded();
            cfg.validate().map_err(usage)?;
            let store = a.store.or_else(|| cfg.cache_dir.clone()).ok_or_else(|| {
                usage(Error::InvalidConfig(
                    "no store directory: pass --store or set cache_dir".into(),
                ))
            })?;
            let built = cmd_preprocess(&cfg, &store).map_err(runtime)?;
            println!("{} {}", if built { "built" } else { "up-to-date" }, store.display());
        }
        Command::Run(a) => {
            let mut cfg = RunConfig::load(&a.config).map_err(usage)?;
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(out) = a.out {
                cfg.out_dir = out;
            } else if let Some(env) = std::env::var_os(OUT_DIR_ENV) {
                cfg.out_dir = PathBuf::from(env);
            }
            if !a.analyses.is_empty() {
                cfg.experiment.analyses = a.analyses;
            }
            if !a.scopes.is_empty() {
                cfg.experiment.scopes = a.scopes;
            }
            if !a.task_sets.is_empty() {
                cfg.experiment.task_sets = a.task_sets;
            }
            if let Some(c) = a.classifier {
                cfg.experiment.architecture = c;
            }
            if let Some(t) = a.threads {
                cfg.threads = t;
            }
            cfg.sequential |= a.sequential;
            let cfg = cfg.seeded();
            cfg.validate().map_err(usage)?;
            let summary = cmd_run(&cfg).map_err(runtime)?;
            println!("{} {}", summary.fingerprint, cfg.out_dir.display());
        }
        Command::Validate(a) => {
            let d = cmd_validate(&a.path).map_err(runtime)?;
            println!("{}", serde_json::to_string(&d).map_err(|e| runtime(e.into()))?);
        }
    }
    Ok(())
}

/// Error JSON printed on stderr.
pub fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

/// Parses `args`, runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            eprintln!("{}", error_json("usage", e.to_string().trim()));
            return EXIT_USAGE;
        }
    };
    let _ = env_logger::Builder::new().parse_filters(&cli.log).try_init();
    match run_command(cli) {
        Ok(()) => EXIT_OK,
        Err((code, e)) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            code
        }
    }
}
