//! One trial end to end: generate, compile at two levels, run, compare.
//!
//! Layout of a trial inside the work directory:
//!
//! ```text
//! trial-<index>/program.c        generated source
//! trial-<index>/prog-low         binary built with opt_low
//! trial-<index>/prog-high        binary built with opt_high
//! trial-<index>/compile-*.stderr compiler diagnostics
//! ```
//!
//! Passing trials lose their binaries; their sources survive only with
//! `keep_all`. Every other outcome keeps everything.

mod classify;
pub mod process;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::features::FeatureCatalog;
use crate::planner::{render_flags, GeneratorConfig};
use crate::{Error, Result};

pub use classify::{classify, FailureClass};
use process::{RunError, Termination};

/// Version of the trial record layout written to the records log.
pub const RECORD_SCHEMA: u32 = 1;

/// External programs and limits for a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toolchain {
    /// Generator executable followed by base arguments.
    pub generator: Vec<String>,
    /// Compiler executable followed by base arguments.
    pub compiler: Vec<String>,
    /// Extra compiler arguments placed after the optimization flag
    /// (standard, include paths, warnings).
    pub compiler_args: Vec<String>,
    pub opt_low: String,
    pub opt_high: String,
    /// Seconds.
    pub compile_timeout: f64,
    /// Seconds.
    pub exec_timeout: f64,
    /// Seconds.
    pub generate_timeout: f64,
}

impl Default for Toolchain {
    fn default() -> Self {
        Toolchain {
            generator: vec!["csmith".into()],
            compiler: vec!["gcc".into()],
            compiler_args: vec!["-w".into()],
            opt_low: "-O0".into(),
            opt_high: "-O3".into(),
            compile_timeout: 10.0,
            exec_timeout: 10.0,
            generate_timeout: 60.0,
        }
    }
}

impl Toolchain {
    pub fn validate(&self) -> Result<()> {
        if self.generator.is_empty() || self.generator[0].is_empty() {
            return Err(Error::Validation("toolchain.generator is empty".into()));
        }
        if self.compiler.is_empty() || self.compiler[0].is_empty() {
            return Err(Error::Validation("toolchain.compiler is empty".into()));
        }
        if self.opt_low == self.opt_high {
            return Err(Error::Validation(format!(
                "opt_low and opt_high are both `{}`",
                self.opt_low
            )));
        }
        for (name, t) in [
            ("compile_timeout", self.compile_timeout),
            ("exec_timeout", self.exec_timeout),
            ("generate_timeout", self.generate_timeout),
        ] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Validation(format!(
                    "toolchain.{name} must be a positive number of seconds, got {t}"
                )));
            }
        }
        Ok(())
    }

    /// Checks that both executables can be found.
    pub fn check_tools(&self) -> Result<()> {
        self.validate()?;
        for (role, cmd) in [("generator", &self.generator), ("compiler", &self.compiler)] {
            if find_executable(&cmd[0]).is_none() {
                return Err(Error::Environment(format!(
                    "{role} `{}` not found or not executable",
                    cmd[0]
                )));
            }
        }
        Ok(())
    }
}

fn find_executable(program: &str) -> Option<PathBuf> {
    let is_exec = |p: &Path| {
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            p.metadata()
                .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
                .unwrap_or(false)
        }
        #[cfg(not(unix))]
        {
            p.is_file()
        }
    };
    if program.contains(std::path::MAIN_SEPARATOR) {
        let p = PathBuf::from(program);
        return is_exec(&p).then_some(p);
    }
    std::env::var_os("PATH").and_then(|paths| {
        std::env::split_paths(&paths)
            .map(|dir| dir.join(program))
            .find(|p| is_exec(p))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Ok,
    Crash,
    Timeout,
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageKind::Ok => "ok",
            StageKind::Crash => "crash",
            StageKind::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExitTag {
    Code(i32),
    Signal(i32),
    /// Killed by the harness at the time limit.
    Killed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub kind: StageKind,
    pub exit: ExitTag,
    /// SHA-256 of the exact stdout bytes; execution stages only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stdout_digest: Option<String>,
    /// Stdout as text when it is short UTF-8.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stdout: Option<String>,
    /// Seconds.
    pub wall_time: f64,
}

const STDOUT_TEXT_LIMIT: usize = 4096;

impl StageResult {
    fn from_run(finished: &process::Finished, compile: bool, binary_ok: bool) -> StageResult {
        let (kind, exit) = match finished.termination {
            Termination::TimedOut => (StageKind::Timeout, ExitTag::Killed),
            Termination::Signaled(s) => (StageKind::Crash, ExitTag::Signal(s)),
            Termination::Exited(0) if compile && !binary_ok => (StageKind::Crash, ExitTag::Code(0)),
            Termination::Exited(c) if compile && c != 0 => (StageKind::Crash, ExitTag::Code(c)),
            Termination::Exited(c) => (StageKind::Ok, ExitTag::Code(c)),
        };
        let (stdout_digest, stdout) = if compile {
            (None, None)
        } else {
            let text = std::str::from_utf8(&finished.stdout)
                .ok()
                .filter(|s| s.len() <= STDOUT_TEXT_LIMIT)
                .map(String::from);
            (Some(digest(&finished.stdout)), text)
        };
        StageResult {
            kind,
            exit,
            stdout_digest,
            stdout,
            wall_time: finished.wall_time.as_secs_f64(),
        }
    }
}

fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// One line of the records log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema: u32,
    pub trial_index: u64,
    pub config: GeneratorConfig,
    /// Generator arguments, enough to regenerate the program.
    pub flags: Vec<String>,
    /// Relative to the work directory.
    pub program_path: String,
    pub source_retained: bool,
    pub compile_low: Option<StageResult>,
    pub compile_high: Option<StageResult>,
    pub exec_low: Option<StageResult>,
    pub exec_high: Option<StageResult>,
    /// `None` for skipped trials.
    pub failure_class: Option<FailureClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
}

impl TrialRecord {
    /// Recomputes the class from the stored stages and compares.
    pub fn check_consistency(&self) -> Result<()> {
        match (&self.compile_low, &self.compile_high, self.failure_class) {
            (None, None, None) if self.skip_reason.is_some() => Ok(()),
            (Some(low), Some(high), Some(class)) => {
                let again = classify(low, high, self.exec_low.as_ref(), self.exec_high.as_ref())?;
                if again == class {
                    Ok(())
                } else {
                    Err(Error::Validation(format!(
                        "trial {} recorded as {class} but its stages classify as {again}",
                        self.trial_index
                    )))
                }
            }
            _ => Err(Error::Validation(format!(
                "trial {} has an incomplete record",
                self.trial_index
            ))),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let record: TrialRecord =
            serde_json::from_str(line).map_err(|e| Error::format("trial record", e))?;
        if record.schema != RECORD_SCHEMA {
            return Err(Error::format(
                "trial record",
                format!("unsupported schema {}", record.schema),
            ));
        }
        Ok(record)
    }

    /// Copy with every wall-time field zeroed, for comparisons across runs.
    pub fn without_timing(&self) -> TrialRecord {
        let mut r = self.clone();
        for stage in [
            &mut r.compile_low,
            &mut r.compile_high,
            &mut r.exec_low,
            &mut r.exec_high,
        ]
        .into_iter()
        .flatten()
        {
            stage.wall_time = 0.0;
        }
        r
    }
}

pub fn trial_dir_name(trial_index: u64) -> String {
    format!("trial-{trial_index}")
}

fn secs(t: f64) -> Duration {
    Duration::from_secs_f64(t)
}

fn describe(cmd: &[String]) -> String {
    cmd.join(" ")
}

/// Runs the generator with `flags` and returns the path of the program.
///
/// Invocation: `<generator...> <flags> -o <dir>/program.c`.
pub fn generate_program(
    flags: &[String],
    toolchain: &Toolchain,
    dir: &Path,
    cancel: &AtomicBool,
) -> Result<PathBuf> {
    let program = dir.join("program.c");
    let mut cmd = Command::new(&toolchain.generator[0]);
    cmd.args(&toolchain.generator[1..])
        .args(flags)
        .arg("-o")
        .arg(&program);
    let what = describe(&toolchain.generator);
    let finished = match process::run(&mut cmd, secs(toolchain.generate_timeout), false, None, cancel) {
        Ok(f) => f,
        Err(RunError::Cancelled) => return Err(Error::Cancelled),
        Err(RunError::Spawn(e)) => {
            return Err(Error::Generation(format!("cannot run generator `{what}`: {e}")))
        }
    };
    match finished.termination {
        Termination::Exited(0) => {}
        Termination::Exited(c) => {
            return Err(Error::Generation(format!("generator `{what}` exited with status {c}")))
        }
        Termination::Signaled(s) => {
            return Err(Error::Generation(format!("generator `{what}` killed by signal {s}")))
        }
        Termination::TimedOut => {
            return Err(Error::Generation(format!(
                "generator `{what}` ran past {} s",
                toolchain.generate_timeout
            )))
        }
    }
    match std::fs::metadata(&program) {
        Ok(m) if m.len() > 0 => Ok(program),
        _ => Err(Error::Generation(format!(
            "generator `{what}` produced no program"
        ))),
    }
}

/// Compiles `program` into `binary` with one optimization flag.
///
/// Invocation: `<compiler...> <opt> <compiler_args> <program> -o <binary>`.
/// A missing compiler is an environment error, not a crash.
pub fn compile(
    program: &Path,
    opt: &str,
    binary: &Path,
    toolchain: &Toolchain,
    cancel: &AtomicBool,
) -> Result<StageResult> {
    let mut cmd = Command::new(&toolchain.compiler[0]);
    cmd.args(&toolchain.compiler[1..])
        .arg(opt)
        .args(&toolchain.compiler_args)
        .arg(program)
        .arg("-o")
        .arg(binary);
    let stderr = binary.with_extension("stderr");
    let finished = match process::run(
        &mut cmd,
        secs(toolchain.compile_timeout),
        false,
        Some(&stderr),
        cancel,
    ) {
        Ok(f) => f,
        Err(RunError::Cancelled) => return Err(Error::Cancelled),
        Err(RunError::Spawn(e)) => {
            return Err(Error::Environment(format!(
                "cannot run compiler `{}`: {e}",
                describe(&toolchain.compiler)
            )))
        }
    };
    if std::fs::metadata(&stderr).is_ok_and(|m| m.len() == 0) {
        let _ = std::fs::remove_file(&stderr);
    }
    Ok(StageResult::from_run(&finished, true, binary.is_file()))
}

/// Runs a compiled binary with no input and captures its stdout.
pub fn execute(binary: &Path, toolchain: &Toolchain, cancel: &AtomicBool) -> Result<StageResult> {
    let mut cmd = Command::new(binary);
    match process::run(&mut cmd, secs(toolchain.exec_timeout), true, None, cancel) {
        Ok(f) => Ok(StageResult::from_run(&f, false, true)),
        Err(RunError::Cancelled) => Err(Error::Cancelled),
        // The file exists but cannot be started: no result to compare.
        Err(RunError::Spawn(_)) => Ok(StageResult {
            kind: StageKind::Crash,
            exit: ExitTag::Code(-1),
            stdout_digest: Some(digest(b"")),
            stdout: None,
            wall_time: 0.0,
        }),
    }
}

/// Runs one trial inside `workdir/trial-<index>/` and returns its record.
///
/// A generation failure yields a skipped record. Environment errors and
/// cancellation propagate.
pub fn run_trial(
    config: &GeneratorConfig,
    catalog: &FeatureCatalog,
    toolchain: &Toolchain,
    workdir: &Path,
    keep_all: bool,
    cancel: &AtomicBool,
) -> Result<TrialRecord> {
    let flags = render_flags(config, catalog)?;
    let name = trial_dir_name(config.trial_index);
    let dir = workdir.join(&name);
    if dir.exists() {
        // Leftovers of an interrupted attempt.
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut record = TrialRecord {
        schema: RECORD_SCHEMA,
        trial_index: config.trial_index,
        config: config.clone(),
        flags,
        program_path: format!("{name}/program.c"),
        source_retained: false,
        compile_low: None,
        compile_high: None,
        exec_low: None,
        exec_high: None,
        failure_class: None,
        skip_reason: None,
    };

    let program = match generate_program(&record.flags, toolchain, &dir, cancel) {
        Ok(p) => p,
        Err(Error::Generation(reason)) => {
            log::warn!("trial {} skipped: {reason}", config.trial_index);
            record.skip_reason = Some(reason);
            let _ = std::fs::remove_dir_all(&dir);
            return Ok(record);
        }
        Err(e) => return Err(e),
    };

    let bin_low = dir.join("prog-low");
    let bin_high = dir.join("prog-high");
    let compile_low = compile(&program, &toolchain.opt_low, &bin_low, toolchain, cancel)?;
    let compile_high = compile(&program, &toolchain.opt_high, &bin_high, toolchain, cancel)?;
    let exec_low = match compile_low.kind {
        StageKind::Ok => Some(execute(&bin_low, toolchain, cancel)?),
        _ => None,
    };
    let exec_high = match compile_high.kind {
        StageKind::Ok => Some(execute(&bin_high, toolchain, cancel)?),
        _ => None,
    };
    let class = classify(&compile_low, &compile_high, exec_low.as_ref(), exec_high.as_ref())?;

    if class == FailureClass::Pass {
        if keep_all {
            let _ = std::fs::remove_file(&bin_low);
            let _ = std::fs::remove_file(&bin_high);
        } else {
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
    }
    record.source_retained = program.is_file();
    record.compile_low = Some(compile_low);
    record.compile_high = Some(compile_high);
    record.exec_low = exec_low;
    record.exec_high = exec_high;
    record.failure_class = Some(class);
    Ok(record)
}
