//! Mock generator and compiler used by tests and demos.

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    std::process::exit(cfgsmith_core::mock::main(&args));
}
