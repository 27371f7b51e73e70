//! Deterministic stand-ins for the program generator and the compiler.
//!
//! The generator accepts the same feature flags as the real one and writes a
//! small C program whose first line records the enabled features:
//!
//! ```text
//! /* mock-features: volatiles unions structs */
//! ```
//!
//! The compiler reads that line and a scenario file, then either fails the
//! way the scenario says or writes a shell script standing in for the
//! binary. The script prints `checksum = <hex>` where the value is a hash of
//! the source, so both optimization levels agree unless a rule says
//! otherwise.
//!
//! Scenario files hold one rule per line; the first rule that applies wins
//! and no rule means a clean compile:
//!
//! ```text
//! # action     [at <opt>] [when <feature> !<feature> ...] [p=<prob>]
//! miscompile   at -O3 when volatiles unions !pointers
//! crash        at -O3 when jumps p=0.1
//! hang         when float
//! exec-crash   at -O0 when bitfields
//! exec-hang    when packed-struct
//! ```
//!
//! `crash` aborts the compiler (SIGABRT), `hang` sleeps until killed,
//! `fail` exits with status 1, `miscompile` builds a binary with a wrong
//! checksum, `exec-crash` a binary that kills itself with SIGSEGV and
//! `exec-hang` one that never finishes. `p` makes a rule fire for that
//! fraction of programs, chosen by a hash of the source.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;

use crate::features::FeatureCatalog;
use crate::{rng, Error, Result};

const FEATURE_MARKER: &str = "/* mock-features:";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Crash,
    Hang,
    Fail,
    Miscompile,
    ExecCrash,
    ExecHang,
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "crash" => Action::Crash,
            "hang" => Action::Hang,
            "fail" => Action::Fail,
            "miscompile" => Action::Miscompile,
            "exec-crash" => Action::ExecCrash,
            "exec-hang" => Action::ExecHang,
            other => return Err(Error::Validation(format!("unknown scenario action `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub action: Action,
    /// Optimization flag the rule is limited to.
    pub at: Option<String>,
    pub require: Vec<String>,
    pub forbid: Vec<String>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub rules: Vec<Rule>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario> {
        let mut rules = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::Validation(format!("scenario line {}: {m}", n + 1));
            let mut words = line.split_whitespace().peekable();
            let action: Action = words.next().expect("non-empty line").parse().map_err(|e: Error| err(e.to_string()))?;
            let mut rule = Rule {
                action,
                at: None,
                require: Vec::new(),
                forbid: Vec::new(),
                probability: 1.0,
            };
            let mut in_when = false;
            while let Some(w) = words.next() {
                if let Some(p) = w.strip_prefix("p=") {
                    rule.probability = p
                        .parse()
                        .ok()
                        .filter(|p: &f64| (0.0..=1.0).contains(p))
                        .ok_or_else(|| err(format!("bad probability `{p}`")))?;
                } else if w == "at" {
                    rule.at = Some(words.next().ok_or_else(|| err("`at` needs a flag".into()))?.to_string());
                    in_when = false;
                } else if w == "when" {
                    in_when = true;
                } else if in_when {
                    match w.strip_prefix('!') {
                        Some(f) => rule.forbid.push(f.to_string()),
                        None => rule.require.push(w.to_string()),
                    }
                } else {
                    return Err(err(format!("unexpected `{w}`")));
                }
            }
            rules.push(rule);
        }
        Ok(Scenario { rules })
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scenario::parse(&text)
    }

    /// First rule applying to a program with `features` compiled at `opt`.
    pub fn decide(&self, features: &BTreeSet<String>, opt: &str, source: &[u8]) -> Option<Action> {
        let h = rng::fnv1a(source);
        self.rules.iter().enumerate().find_map(|(i, rule)| {
            let applies = rule.at.as_deref().is_none_or(|a| a == opt)
                && rule.require.iter().all(|f| features.contains(f))
                && !rule.forbid.iter().any(|f| features.contains(f))
                && fraction(h, i) < rule.probability;
            applies.then_some(rule.action)
        })
    }
}

/// Hash-derived value in [0, 1) shared by both optimization levels.
fn fraction(source_hash: u64, rule: usize) -> f64 {
    (rng::mix64(source_hash ^ rng::mix64(rule as u64)) >> 11) as f64 / (1u64 << 53) as f64
}

/// Features recorded in a program's marker line.
pub fn features_of(source: &str) -> Option<BTreeSet<String>> {
    let rest = source.lines().next()?.strip_prefix(FEATURE_MARKER)?;
    let body = rest.trim_end().strip_suffix("*/")?;
    Some(body.split_whitespace().map(String::from).collect())
}

/// Builds the program text for an enabled feature set and seed.
pub fn generate_source(enabled: &BTreeSet<String>, seed: u64) -> String {
    let mut r = rng::stream(seed);
    let on = |f: &str| enabled.contains(f);
    let mut globals = String::new();
    let mut body = String::new();
    let mut add = |g: &str, b: &str| {
        globals.push_str(g);
        body.push_str(b);
    };

    let statements = r.random_range(3..12);
    for i in 0..statements {
        let v: u32 = r.random_range(1..1000);
        let pick = r.random_range(0..8);
        let line = match pick {
            0 if on("volatiles") => (format!("volatile unsigned g_v{i} = {v}u;\n"), format!("    mix(g_v{i});\n")),
            1 if on("unions") => (
                format!("union u{i} {{ unsigned a; unsigned short b; }};\nunion u{i} g_u{i} = {{ {v}u }};\n"),
                format!("    mix(g_u{i}.a);\n"),
            ),
            2 if on("structs") => (
                format!("struct s{i} {{ int x; unsigned y; }};\nstruct s{i} g_s{i} = {{ {v}, 7u }};\n"),
                format!("    mix(g_s{i}.y + (unsigned)g_s{i}.x);\n"),
            ),
            3 if on("pointers") => (
                format!("static unsigned g_p{i} = {v}u;\n"),
                format!("    {{ unsigned *p = &g_p{i}; mix(*p); }}\n"),
            ),
            4 if on("arrays") => (
                format!("static unsigned g_a{i}[3] = {{ {v}u, 2u, 3u }};\n"),
                format!("    mix(g_a{i}[{}]);\n", v % 3),
            ),
            5 if on("muls") => (String::new(), format!("    mix({v}u * 31u);\n")),
            6 if on("jumps") => (String::new(), format!("    goto l{i};\nl{i}:\n    mix({v}u);\n")),
            _ => (String::new(), format!("    mix({v}u);\n")),
        };
        add(&line.0, &line.1);
    }

    let mut out = String::new();
    let names: Vec<&str> = enabled.iter().map(String::as_str).collect();
    let _ = writeln!(out, "{FEATURE_MARKER} {} */", names.join(" "));
    let _ = writeln!(out, "/* mock-seed: {seed} */");
    out.push_str("#include <stdio.h>\n\nstatic unsigned long crc = 0xFFFFFFFFUL;\n\n");
    out.push_str("static void mix(unsigned long v)\n{\n    crc = (crc * 31UL + v) & 0xFFFFFFFFUL;\n}\n\n");
    out.push_str(&globals);
    out.push_str("\nint main(void)\n{\n");
    out.push_str(&body);
    out.push_str("    printf(\"checksum = %lX\\n\", crc);\n    return 0;\n}\n");
    out
}

fn usage(message: &str) -> i32 {
    eprintln!("cfgsmith-mock: {message}");
    eprintln!("usage: cfgsmith-mock generate [--catalog FILE] [FLAGS...] --seed N -o FILE");
    eprintln!("       cfgsmith-mock compile --scenario FILE <-Ox> [ARGS...] SOURCE -o BINARY");
    2
}

/// Entry point of the mock binary; returns the exit status.
pub fn main(args: &[String]) -> i32 {
    match args.first().map(String::as_str) {
        Some("generate") => generator(&args[1..]),
        Some("compile") => compiler(&args[1..]),
        _ => usage("expected `generate` or `compile`"),
    }
}

fn generator(args: &[String]) -> i32 {
    let mut catalog_path = None;
    let mut seed = None;
    let mut out = None;
    let mut flags = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        match a.as_str() {
            "--catalog" => catalog_path = it.next().cloned(),
            "--seed" => seed = it.next().and_then(|s| s.parse::<u64>().ok()),
            "-o" => out = it.next().map(PathBuf::from),
            _ => flags.push(a.clone()),
        }
    }
    let (Some(seed), Some(out)) = (seed, out) else {
        return usage("generate needs --seed N and -o FILE");
    };
    let catalog = match catalog_path {
        Some(p) => FeatureCatalog::load(Path::new(&p)),
        None => Ok(FeatureCatalog::builtin()),
    };
    let catalog = match catalog {
        Ok(c) => c,
        Err(e) => return usage(&e.to_string()),
    };
    // No feature flags: every feature on, like the real generator's defaults.
    let mut enabled: BTreeSet<String> = catalog.names().map(String::from).collect();
    for flag in &flags {
        let hit = catalog.features().iter().find_map(|f| {
            if *flag == f.enable_flag {
                Some((true, &f.name))
            } else if *flag == f.disable_flag {
                Some((false, &f.name))
            } else {
                None
            }
        });
        match hit {
            Some((true, name)) => {
                enabled.insert(name.clone());
            }
            Some((false, name)) => {
                enabled.remove(name);
            }
            None => return usage(&format!("unknown option `{flag}`")),
        }
    }
    match std::fs::write(&out, generate_source(&enabled, seed)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("cfgsmith-mock: {}: {e}", out.display());
            1
        }
    }
}

fn compiler(args: &[String]) -> i32 {
    let mut scenario = None;
    let mut opt = None;
    let mut out = None;
    let mut source = None;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        match a.as_str() {
            "--scenario" => scenario = it.next().cloned(),
            "-o" => out = it.next().map(PathBuf::from),
            s if s.starts_with("-O") => opt = Some(s.to_string()),
            s if s.starts_with('-') => {}
            s => source = Some(PathBuf::from(s)),
        }
    }
    let (Some(opt), Some(out), Some(source)) = (opt, out, source) else {
        return usage("compile needs an -O flag, a source file and -o BINARY");
    };
    let scenario = match scenario.map(|p| Scenario::load(Path::new(&p))).transpose() {
        Ok(s) => s.unwrap_or_default(),
        Err(e) => return usage(&e.to_string()),
    };
    let text = match std::fs::read(&source) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cfgsmith-mock: {}: {e}", source.display());
            return 1;
        }
    };
    let features = features_of(&String::from_utf8_lossy(&text)).unwrap_or_default();
    let checksum = rng::fnv1a(&text) & 0xFFFF_FFFF;
    let script = match scenario.decide(&features, &opt, &text) {
        Some(Action::Crash) => {
            eprintln!("internal compiler error: scripted crash");
            no_core_dump();
            std::process::abort();
        }
        Some(Action::Hang) => hang(&out),
        Some(Action::Fail) => {
            eprintln!("error: scripted compile failure");
            return 1;
        }
        Some(Action::Miscompile) => format!("printf 'checksum = %X\\n' {}\n", checksum ^ 1),
        Some(Action::ExecCrash) => "kill -SEGV $$\n".to_string(),
        Some(Action::ExecHang) => "exec sleep 3600\n".to_string(),
        None => format!("printf 'checksum = %X\\n' {checksum}\n"),
    };
    match write_executable(&out, &format!("#!/bin/sh\n{script}")) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("cfgsmith-mock: {}: {e}", out.display());
            1
        }
    }
}

fn no_core_dump() {
    #[cfg(unix)]
    {
        let zero = libc::rlimit {
            rlim_cur: 0,
            rlim_max: 0,
        };
        // SAFETY: plain syscall on a valid struct.
        unsafe {
            libc::setrlimit(libc::RLIMIT_CORE, &zero);
        }
    }
}

/// Starts a sleeping child, leaves its pid next to the output path, and
/// waits forever. The child shares our process group, so it shows whether
/// the harness cleans up whole groups.
fn hang(out: &Path) -> ! {
    if let Ok(child) = std::process::Command::new("sleep").arg("3600").spawn() {
        let _ = std::fs::write(out.with_extension("sleeper"), child.id().to_string());
    }
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}

fn write_executable(path: &Path, text: &str) -> std::io::Result<()> {
    std::fs::write(path, text)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o755))?;
    }
    Ok(())
}
