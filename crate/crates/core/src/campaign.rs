//! Campaign configuration and the resumable trial loop.
//!
//! A campaign directory holds:
//!
//! ```text
//! campaign.toml        effective configuration
//! features.csv         corpus feature counts (when clustered here)
//! model.json           cluster model used by the plan
//! plan.json            schedule, strategy, budget and master seed
//! records.jsonl        one trial record per line, in trial order
//! trials/trial-<i>/    retained sources and binaries
//! failing/             failing-test suite and manifest.json
//! summary.txt          table report
//! summary.json         machine report
//! ```
//!
//! Records are appended strictly in trial order, so the log is always a
//! prefix of the full run. Resuming drops a torn last line and continues
//! with the next index.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clustering::{xmeans, ClusteringParams, ModelFile};
use crate::features::{extract_features, FeatureCatalog, FeatureMatrix};
use crate::harness::{run_trial, Toolchain, TrialRecord};
use crate::planner::{config_gen, plan_schedule, CampaignPlan, Strategy};
use crate::reporting::{self, CampaignSummary, ReportFormat};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    /// Seed corpus, clustered when no model file is given.
    pub corpus_dir: Option<PathBuf>,
    /// Catalog file, or `builtin`.
    pub catalog: String,
    /// Existing model file; takes precedence over `corpus_dir`.
    pub model: Option<PathBuf>,
    pub clustering: ClusteringParams,
    pub strategy: Strategy,
    pub budget: u64,
    pub master_seed: u64,
    pub toolchain: Toolchain,
    pub workers: usize,
    pub keep_all: bool,
    pub output_dir: PathBuf,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            corpus_dir: None,
            catalog: "builtin".into(),
            model: None,
            clustering: ClusteringParams::default(),
            strategy: Strategy::RoundRobin,
            budget: 10_000,
            master_seed: 0,
            toolchain: Toolchain::default(),
            workers: default_workers(),
            keep_all: false,
            output_dir: PathBuf::from("campaign"),
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl CampaignConfig {
    /// Parses a TOML configuration. Relative paths are taken relative to
    /// `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut config: CampaignConfig =
            toml::from_str(text).map_err(|e| Error::format("campaign config", e))?;
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = config.corpus_dir.as_mut() {
            rebase(p);
        }
        if let Some(p) = config.model.as_mut() {
            rebase(p);
        }
        rebase(&mut config.output_dir);
        if config.catalog != "builtin" && Path::new(&config.catalog).is_relative() {
            config.catalog = base.join(&config.catalog).to_string_lossy().into_owned();
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget < 1 {
            return Err(Error::Validation("budget must be at least 1".into()));
        }
        if self.workers < 1 {
            return Err(Error::Validation("workers must be at least 1".into()));
        }
        self.clustering.validate()?;
        self.toolchain.validate()?;
        if let Some(dir) = &self.corpus_dir {
            if !dir.is_dir() {
                return Err(Error::Validation(format!(
                    "corpus_dir {} is not a directory",
                    dir.display()
                )));
            }
        }
        if let Some(model) = &self.model {
            if !model.is_file() {
                return Err(Error::Validation(format!(
                    "model file {} does not exist",
                    model.display()
                )));
            }
        }
        if self.catalog != "builtin" && !Path::new(&self.catalog).is_file() {
            return Err(Error::Validation(format!(
                "catalog file {} does not exist",
                self.catalog
            )));
        }
        if self.strategy.uses_model() && self.model.is_none() && self.corpus_dir.is_none() {
            return Err(Error::Validation(format!(
                "strategy {} needs a model file or a corpus_dir",
                self.strategy
            )));
        }
        Ok(())
    }
}

/// Paths inside a campaign directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Layout { root: root.to_path_buf() }
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("campaign.toml")
    }
    pub fn features(&self) -> PathBuf {
        self.root.join("features.csv")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model.json")
    }
    pub fn plan(&self) -> PathBuf {
        self.root.join("plan.json")
    }
    pub fn records(&self) -> PathBuf {
        self.root.join("records.jsonl")
    }
    pub fn trials(&self) -> PathBuf {
        self.root.join("trials")
    }
    pub fn failing(&self) -> PathBuf {
        self.root.join("failing")
    }
    pub fn summary_txt(&self) -> PathBuf {
        self.root.join("summary.txt")
    }
    pub fn summary_json(&self) -> PathBuf {
        self.root.join("summary.json")
    }
}

/// A corpus file that yielded no feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub path: PathBuf,
    pub message: String,
}

const SOURCE_EXTENSIONS: [&str; 3] = ["c", "h", "i"];

/// Extracts feature counts from every C file under `dir`, walking
/// subdirectories in name order. Program ids are paths relative to `dir`.
pub fn extract_corpus(dir: &Path, catalog: &FeatureCatalog) -> Result<(FeatureMatrix, Vec<Diagnostic>)> {
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    files.sort();
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for path in files {
        let is_source = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| SOURCE_EXTENSIONS.contains(&e));
        if !is_source {
            diagnostics.push(Diagnostic {
                path,
                message: "not a C source file".into(),
            });
            continue;
        }
        let id = path.strip_prefix(dir).unwrap_or(&path).to_string_lossy().into_owned();
        let outcome = std::fs::read(&path)
            .map_err(|e| Error::io(&path, e))
            .and_then(|bytes| extract_features(&id, &bytes, catalog));
        match outcome {
            Ok(v) => rows.push(v),
            Err(e) => diagnostics.push(Diagnostic {
                path,
                message: e.to_string(),
            }),
        }
    }
    if rows.is_empty() {
        return Err(Error::Validation(format!(
            "no corpus files could be read from {}",
            dir.display()
        )));
    }
    Ok((FeatureMatrix::new(catalog, rows)?, diagnostics))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if path.is_file() {
            out.push(path);
        }
    }
    Ok(())
}

/// Normalizes `matrix` and clusters it with X-Means.
pub fn cluster_matrix(matrix: &FeatureMatrix, params: &ClusteringParams) -> Result<ModelFile> {
    let normalized = matrix.normalize()?;
    let points = normalized.normalized().expect("just normalized");
    let model = xmeans(points, params)?;
    Ok(ModelFile::new(
        &matrix.catalog_version,
        matrix.feature_names.clone(),
        params.clone(),
        matrix.rows.iter().map(|r| r.program_id.clone()).collect(),
        &model,
    ))
}

/// `config` with every path made absolute, so the copy saved in the
/// campaign directory means the same thing wherever it is loaded from.
fn absolute_paths(config: &CampaignConfig, root: &Path) -> CampaignConfig {
    let absolute = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let mut out = config.clone();
    out.corpus_dir = config.corpus_dir.as_deref().map(absolute);
    out.model = config.model.as_deref().map(absolute);
    if config.catalog != "builtin" {
        out.catalog = absolute(Path::new(&config.catalog)).display().to_string();
    }
    out.output_dir = root.to_path_buf();
    out
}

/// Reads the records log. `Ok(None)` when the file does not exist.
pub fn read_records(path: &Path) -> Result<Option<Vec<TrialRecord>>> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    };
    Ok(Some(
        String::from_utf8_lossy(&bytes)
            .lines()
            .filter_map(|l| TrialRecord::from_json_line(l).ok())
            .collect(),
    ))
}

/// Length in bytes of the longest prefix of `log` made of complete,
/// well-formed records numbered 0, 1, 2, ..., and the number of records in
/// it.
fn valid_prefix(log: &[u8]) -> (usize, u64) {
    let mut offset = 0;
    let mut next = 0u64;
    while let Some(end) = log[offset..].iter().position(|&b| b == b'\n') {
        let line = String::from_utf8_lossy(&log[offset..offset + end]);
        match TrialRecord::from_json_line(&line) {
            Ok(r) if r.trial_index == next => {
                next += 1;
                offset += end + 1;
            }
            _ => break,
        }
    }
    (offset, next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub summary: CampaignSummary,
    /// Trials run by this invocation.
    pub executed: u64,
    /// Trials already in the log when it started.
    pub resumed: u64,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads or builds the model for a centroid strategy and checks that it
/// matches the catalog.
fn prepare_model(config: &CampaignConfig, catalog: &FeatureCatalog, layout: &Layout) -> Result<Option<ModelFile>> {
    if !config.strategy.uses_model() {
        return Ok(None);
    }
    let model = if layout.model().is_file() {
        ModelFile::load(&layout.model())?
    } else {
        let model = match (&config.model, &config.corpus_dir) {
            (Some(path), _) => ModelFile::load(path)?,
            (None, Some(dir)) => {
                let (matrix, diagnostics) = extract_corpus(dir, catalog)?;
                for d in &diagnostics {
                    log::warn!("skipped {}: {}", d.path.display(), d.message);
                }
                let file = std::fs::File::create(layout.features()).map_err(|e| Error::io(layout.features(), e))?;
                matrix.write_csv(file)?;
                cluster_matrix(&matrix, &config.clustering)?
            }
            (None, None) => unreachable!("validated"),
        };
        model.save(&layout.model())?;
        model
    };
    let names: Vec<&str> = catalog.names().collect();
    if model.feature_names != names {
        return Err(Error::Validation(format!(
            "model features do not match catalog `{}`",
            catalog.version()
        )));
    }
    log::info!("model: k = {}, sizes {:?}", model.k, model.sizes);
    Ok(Some(model))
}

/// Runs (or resumes) the campaign described by `config`.
///
/// Trials are spread over `config.workers` threads; their records are
/// committed in trial order. Setting `cancel` stops the run after killing
/// running children; committed records stay and a later call resumes.
pub fn run_campaign(config: &CampaignConfig, cancel: &AtomicBool) -> Result<RunOutcome> {
    config.validate()?;
    config.toolchain.check_tools()?;
    let root = &config.output_dir;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let root = root.canonicalize().map_err(|e| Error::io(root, e))?;
    let layout = Layout::new(&root);
    let catalog = FeatureCatalog::load(Path::new(&config.catalog))?;

    let model_file = prepare_model(config, &catalog, &layout)?;
    let model = model_file.as_ref().map(ModelFile::model);
    let mut plan = plan_schedule(model.as_ref(), config.strategy, config.budget, config.master_seed)?;
    if model.is_some() {
        plan.model_ref = Some("model.json".into());
    }
    if layout.plan().is_file() {
        let existing = CampaignPlan::load(&layout.plan())?;
        if existing != plan {
            return Err(Error::Validation(format!(
                "{} holds a different plan (strategy, budget, seed or model changed); use a new output directory",
                layout.plan().display()
            )));
        }
    } else {
        plan.save(&layout.plan())?;
    }
    write_file(&layout.config(), &absolute_paths(config, &root).to_toml())?;

    let records_path = layout.records();
    let existing = match std::fs::read(&records_path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Error::io(&records_path, e)),
    };
    let (keep, resumed) = valid_prefix(&existing);
    if keep < existing.len() {
        log::warn!(
            "dropping {} bytes of incomplete records after trial {}",
            existing.len() - keep,
            resumed
        );
    }
    let log_file = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(false)
        .open(&records_path)
        .map_err(|e| Error::io(&records_path, e))?;
    log_file.set_len(keep as u64).map_err(|e| Error::io(&records_path, e))?;
    let mut log_file = OpenOptions::new()
        .append(true)
        .open(&records_path)
        .map_err(|e| Error::io(&records_path, e))?;

    let workdir = layout.trials();
    std::fs::create_dir_all(&workdir).map_err(|e| Error::io(&workdir, e))?;
    if resumed > 0 {
        log::info!("resuming after {resumed} recorded trials");
    }

    let executed = run_trials(
        &plan,
        model.as_ref(),
        &catalog,
        config,
        &workdir,
        resumed,
        &mut log_file,
        cancel,
    )?;

    let records = read_records(&records_path)?.unwrap_or_default();
    let summary = reporting::tally_records(&records, plan.strategy.name());
    write_file(&layout.summary_txt(), &reporting::report(&summary, ReportFormat::Table))?;
    write_file(&layout.summary_json(), &reporting::report(&summary, ReportFormat::Machine))?;
    reporting::collect_failing_suite(&records, &workdir, &layout.failing())?;
    Ok(RunOutcome {
        summary,
        executed,
        resumed,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_trials(
    plan: &CampaignPlan,
    model: Option<&crate::clustering::ClusterModel>,
    catalog: &FeatureCatalog,
    config: &CampaignConfig,
    workdir: &Path,
    first: u64,
    log_file: &mut std::fs::File,
    cancel: &AtomicBool,
) -> Result<u64> {
    let budget = plan.budget;
    let next = AtomicU64::new(first);
    let stop = AtomicBool::new(false);
    let mut pending: BTreeMap<u64, TrialRecord> = BTreeMap::new();
    let mut committed = first;
    let mut failure: Option<Error> = None;
    let step = (budget / 10).max(1);

    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(u64, Result<TrialRecord>)>();
        for _ in 0..config.workers.min((budget - first).max(1) as usize) {
            let tx = tx.clone();
            let (next, stop) = (&next, &stop);
            scope.spawn(move || loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let t = next.fetch_add(1, Ordering::Relaxed);
                if t >= budget {
                    break;
                }
                let result = config_gen(plan, model, catalog.len(), t).and_then(|gc| {
                    run_trial(&gc, catalog, &config.toolchain, workdir, config.keep_all, stop)
                });
                if tx.send((t, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        loop {
            match rx.recv_timeout(Duration::from_millis(50)) {
                Ok((t, Ok(record))) => {
                    pending.insert(t, record);
                    while let Some(record) = pending.remove(&committed) {
                        let line = record.to_json_line() + "\n";
                        if let Err(e) = log_file.write_all(line.as_bytes()) {
                            failure.get_or_insert(Error::io("records.jsonl", e));
                            stop.store(true, Ordering::Relaxed);
                            break;
                        }
                        committed += 1;
                        if committed.is_multiple_of(step) || committed == budget {
                            log::info!("{committed}/{budget} trials");
                        }
                    }
                }
                Ok((_, Err(Error::Cancelled))) => {}
                Ok((t, Err(e))) => {
                    log::error!("trial {t}: {e}");
                    failure.get_or_insert(e);
                    stop.store(true, Ordering::Relaxed);
                }
                Err(mpsc::RecvTimeoutError::Timeout) => {}
                Err(mpsc::RecvTimeoutError::Disconnected) => break,
            }
            if cancel.load(Ordering::Relaxed) {
                stop.store(true, Ordering::Relaxed);
            }
        }
    });

    if let Some(e) = failure {
        return Err(e);
    }
    if committed < budget {
        return Err(Error::Cancelled);
    }
    Ok(committed - first)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let config = CampaignConfig::from_toml("strategy = \"swarm\"\nbudget = 5\n", Path::new("/tmp")).unwrap();
        assert_eq!(config.strategy, Strategy::Swarm);
        assert_eq!(config.toolchain.opt_low, "-O0");
        assert_eq!(config.output_dir, Path::new("/tmp/campaign"));
        config.validate().unwrap();

        let needs_model = CampaignConfig::from_toml("budget = 5\n", Path::new("/tmp")).unwrap();
        let err = needs_model.validate().unwrap_err().to_string();
        assert!(err.contains("needs a model file or a corpus_dir"), "{err}");

        let zero = CampaignConfig::from_toml("strategy = \"default\"\nbudget = 0\n", Path::new(".")).unwrap();
        assert!(zero.validate().is_err());

        assert!(CampaignConfig::from_toml("bugdet = 5\n", Path::new(".")).is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = CampaignConfig {
            corpus_dir: Some("/data/corpus".into()),
            budget: 77,
            output_dir: "/runs/a".into(),
            ..Default::default()
        };
        let back = CampaignConfig::from_toml(&config.to_toml(), Path::new("/elsewhere")).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn prefix_stops_at_torn_or_out_of_order_lines() {
        let rec = |i: u64| {
            let mut r = TrialRecord {
                schema: crate::harness::RECORD_SCHEMA,
                trial_index: i,
                config: crate::planner::GeneratorConfig {
                    trial_index: i,
                    strategy: Strategy::Default,
                    centroid_index: None,
                    generator_seed: 1,
                    decisions: vec![],
                },
                flags: vec![],
                program_path: String::new(),
                source_retained: false,
                compile_low: None,
                compile_high: None,
                exec_low: None,
                exec_high: None,
                failure_class: None,
                skip_reason: Some("x".into()),
            };
            r.trial_index = i;
            r.to_json_line() + "\n"
        };
        let good = rec(0) + &rec(1);
        assert_eq!(valid_prefix(good.as_bytes()), (good.len(), 2));
        let torn = good.clone() + &rec(2)[..10];
        assert_eq!(valid_prefix(torn.as_bytes()), (good.len(), 2));
        let gap = good.clone() + &rec(3);
        assert_eq!(valid_prefix(gap.as_bytes()), (good.len(), 2));
    }
}
