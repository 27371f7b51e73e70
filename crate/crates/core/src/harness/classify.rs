use std::fmt;

use serde::{Deserialize, Serialize};

use super::{StageKind, StageResult};
use crate::{Error, Result};

/// Outcome of one trial. Exactly one per trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    Pass,
    CrashO0Only,
    CrashO3Only,
    CrashBoth,
    TimeoutO0Only,
    TimeoutO3Only,
    TimeoutBoth,
    Miscompilation,
    /// A binary crashed or hung, so there was no output to compare.
    ExecInconclusive,
}

impl FailureClass {
    pub const ALL: [FailureClass; 9] = [
        FailureClass::Pass,
        FailureClass::CrashO0Only,
        FailureClass::CrashO3Only,
        FailureClass::CrashBoth,
        FailureClass::TimeoutO0Only,
        FailureClass::TimeoutO3Only,
        FailureClass::TimeoutBoth,
        FailureClass::Miscompilation,
        FailureClass::ExecInconclusive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FailureClass::Pass => "pass",
            FailureClass::CrashO0Only => "crash_o0_only",
            FailureClass::CrashO3Only => "crash_o3_only",
            FailureClass::CrashBoth => "crash_both",
            FailureClass::TimeoutO0Only => "timeout_o0_only",
            FailureClass::TimeoutO3Only => "timeout_o3_only",
            FailureClass::TimeoutBoth => "timeout_both",
            FailureClass::Miscompilation => "miscompilation",
            FailureClass::ExecInconclusive => "exec_inconclusive",
        }
    }

    /// Differential verdict: a crash at one level only, or differing
    /// outputs. Crashing at both levels is not a differential failure.
    pub fn is_differential_failure(self) -> bool {
        matches!(
            self,
            FailureClass::CrashO0Only | FailureClass::CrashO3Only | FailureClass::Miscompilation
        )
    }
}

impl fmt::Display for FailureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Classifies a trial from its stage results.
///
/// Compile crashes outrank compile timeouts when the two levels disagree.
/// Executions are compared only when both compiles succeeded; identical
/// stdout bytes and exit status is a pass, any difference a
/// miscompilation, and a crashed or hung binary leaves the trial
/// inconclusive.
pub fn classify(
    compile_low: &StageResult,
    compile_high: &StageResult,
    exec_low: Option<&StageResult>,
    exec_high: Option<&StageResult>,
) -> Result<FailureClass> {
    for (compile, exec, level) in [
        (compile_low, exec_low, "low"),
        (compile_high, exec_high, "high"),
    ] {
        let compiled = compile.kind == StageKind::Ok;
        if compiled != exec.is_some() {
            return Err(Error::Validation(format!(
                "{level} execution {} but compile was {}",
                if exec.is_some() { "present" } else { "absent" },
                compile.kind
            )));
        }
    }

    use StageKind::{Crash, Ok as Fine, Timeout};
    let class = match (compile_low.kind, compile_high.kind) {
        (Crash, Crash) => FailureClass::CrashBoth,
        (Crash, _) => FailureClass::CrashO0Only,
        (_, Crash) => FailureClass::CrashO3Only,
        (Timeout, Timeout) => FailureClass::TimeoutBoth,
        (Timeout, Fine) => FailureClass::TimeoutO0Only,
        (Fine, Timeout) => FailureClass::TimeoutO3Only,
        (Fine, Fine) => {
            let (low, high) = (exec_low.expect("checked"), exec_high.expect("checked"));
            if low.kind != Fine || high.kind != Fine {
                FailureClass::ExecInconclusive
            } else if low.stdout_digest == high.stdout_digest && low.exit == high.exit {
                FailureClass::Pass
            } else {
                FailureClass::Miscompilation
            }
        }
    };
    Ok(class)
}
