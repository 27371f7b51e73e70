#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cfgsmith_core::harness::Toolchain;

pub fn cfgsmith() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_cfgsmith"))
}

pub fn mock() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_cfgsmith-mock"))
}

/// Miscompiles at -O3 when volatiles and unions are on and pointers off.
/// The generator's default mode turns every feature on, pointers included,
/// so default campaigns pass.
pub const VOLATILE_UNION_SCENARIO: &str = "miscompile at -O3 when volatiles unions !pointers\n";

/// Mock toolchain whose compiler follows `scenario`, written to `dir`.
pub fn mock_toolchain(dir: &Path, scenario: &str) -> Toolchain {
    let path = dir.join("scenario.txt");
    std::fs::write(&path, scenario).unwrap();
    let mock = mock().to_string_lossy().into_owned();
    Toolchain {
        generator: vec![mock.clone(), "generate".into()],
        compiler: vec![mock, "compile".into(), "--scenario".into(), path.to_string_lossy().into_owned()],
        compiler_args: vec![],
        ..Default::default()
    }
}

/// Seed corpus of `rich` programs dense in volatile and union use with no
/// pointer operations, and `plain` programs built around pointers. Other
/// constructs vary at random so the rich programs do not all coincide.
pub fn synthetic_corpus(dir: &Path, seed: u64, rich: usize, plain: usize) {
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..rich {
        let mut src = String::from("#include <stdio.h>\n");
        let vols = rng.random_range(8..=10);
        let unions = rng.random_range(4..=5);
        for v in 0..vols {
            let _ = writeln!(src, "volatile int v{v} = {v};");
        }
        for u in 0..unions {
            let _ = writeln!(src, "union u{u} {{ int a; short b; }};\nunion u{u} g{u};");
        }
        let gotos = if rng.random_bool(0.5) { rng.random_range(3..=6) } else { 0 };
        let floats = if rng.random_bool(0.5) { rng.random_range(2..=4) } else { 0 };
        src.push_str("int main(void) {\n");
        for f in 0..floats {
            let _ = writeln!(src, "    float f{f} = {f}.5f;");
        }
        for g in 0..gotos {
            let _ = writeln!(src, "    goto l{g};\nl{g}:");
        }
        src.push_str("    printf(\"%d\\n\", v0 + g0.a);\n    return 0;\n}\n");
        std::fs::write(dir.join(format!("rich{i:03}.c")), src).unwrap();
    }
    for i in 0..plain {
        let mut src = String::from("int x;\nint main(void) {\n");
        let derefs = rng.random_range(6..=10);
        src.push_str("    int *p = &x;\n");
        for _ in 0..derefs {
            src.push_str("    *p = *p + 1;\n");
        }
        src.push_str("    return *p;\n}\n");
        std::fs::write(dir.join(format!("plain{i:03}.c")), src).unwrap();
    }
}

pub fn read_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(String::from)
        .collect()
}
