//! Child processes with a wall-clock limit and whole-group termination.

use std::io::{self, Read};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::{Duration, Instant};

/// Cap on captured stdout. Generated programs print a checksum line, so
/// anything near this size is already a divergence worth keeping.
pub const STDOUT_LIMIT: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Exited(i32),
    Signaled(i32),
    /// Killed by the runner after the limit elapsed.
    TimedOut,
}

#[derive(Debug)]
pub struct Finished {
    pub termination: Termination,
    pub stdout: Vec<u8>,
    pub wall_time: Duration,
}

/// Why a child never produced a [`Finished`].
#[derive(Debug)]
pub enum RunError {
    Spawn(io::Error),
    Cancelled,
}

/// Runs `cmd` in its own process group with stdin closed.
///
/// stdout is captured when `capture` is set and discarded otherwise; stderr
/// goes to `stderr_file` when given. When the limit elapses or `cancel`
/// turns true the whole group is killed with SIGKILL. The group is also
/// killed after a normal exit so that stray grandchildren cannot outlive the
/// trial.
pub fn run(
    cmd: &mut Command,
    limit: Duration,
    capture: bool,
    stderr_file: Option<&Path>,
    cancel: &AtomicBool,
) -> Result<Finished, RunError> {
    cmd.stdin(Stdio::null());
    cmd.stdout(if capture { Stdio::piped() } else { Stdio::null() });
    match stderr_file.map(std::fs::File::create) {
        Some(Ok(f)) => cmd.stderr(f),
        _ => cmd.stderr(Stdio::null()),
    };
    new_process_group(cmd);

    let start = Instant::now();
    let mut child = cmd.spawn().map_err(RunError::Spawn)?;
    let reader = child.stdout.take().map(|mut out| {
        thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = (&mut out).take(STDOUT_LIMIT as u64).read_to_end(&mut buf);
            // Drain the rest so the child never blocks on a full pipe.
            let _ = io::copy(&mut out, &mut io::sink());
            buf
        })
    });

    let outcome = wait_with_limit(&mut child, start, limit, cancel);
    kill_group(&child);
    let status = match outcome {
        Wait::Exited(status) => Some(status),
        Wait::Limit | Wait::Cancelled => {
            let _ = child.wait();
            None
        }
    };
    let wall_time = start.elapsed();
    let stdout = reader
        .map(|r| r.join().unwrap_or_default())
        .unwrap_or_default();

    let termination = match (outcome, status) {
        (Wait::Cancelled, _) => return Err(RunError::Cancelled),
        (_, Some(status)) => termination_of(status),
        _ => Termination::TimedOut,
    };
    Ok(Finished {
        termination,
        stdout,
        wall_time,
    })
}

#[derive(Clone, Copy)]
enum Wait {
    Exited(std::process::ExitStatus),
    Limit,
    Cancelled,
}

fn wait_with_limit(child: &mut Child, start: Instant, limit: Duration, cancel: &AtomicBool) -> Wait {
    let mut nap = Duration::from_micros(50);
    loop {
        match child.try_wait() {
            Ok(Some(status)) => return Wait::Exited(status),
            Ok(None) => {}
            // The child is unusable; treat it like a limit hit so it is
            // killed and reaped.
            Err(_) => return Wait::Limit,
        }
        if cancel.load(Ordering::Relaxed) {
            return Wait::Cancelled;
        }
        let elapsed = start.elapsed();
        if elapsed >= limit {
            return Wait::Limit;
        }
        thread::sleep(nap.min(limit - elapsed));
        nap = (nap * 2).min(Duration::from_millis(10));
    }
}

#[cfg(unix)]
fn new_process_group(cmd: &mut Command) {
    use std::os::unix::process::CommandExt;
    cmd.process_group(0);
}

#[cfg(not(unix))]
fn new_process_group(_cmd: &mut Command) {}

#[cfg(unix)]
fn kill_group(child: &Child) {
    let pgid = child.id() as libc::pid_t;
    // SAFETY: plain syscall; a group that has already vanished yields ESRCH.
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
}

#[cfg(not(unix))]
fn kill_group(child: &Child) {
    let _ = child;
}

#[cfg(unix)]
fn termination_of(status: std::process::ExitStatus) -> Termination {
    use std::os::unix::process::ExitStatusExt;
    match (status.code(), status.signal()) {
        (Some(code), _) => Termination::Exited(code),
        (None, Some(sig)) => Termination::Signaled(sig),
        (None, None) => Termination::Exited(-1),
    }
}

#[cfg(not(unix))]
fn termination_of(status: std::process::ExitStatus) -> Termination {
    Termination::Exited(status.code().unwrap_or(-1))
}
