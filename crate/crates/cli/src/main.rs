use clap::Parser;

use tierspec_cli::{run, Cli};

/// Deeply nested terms recurse; give the worker room.
const STACK_SIZE: usize = 256 * 1024 * 1024;

fn main() {
    let cli = Cli::parse();
    let code = std::thread::Builder::new()
        .stack_size(STACK_SIZE)
        .spawn(move || {
            let stdout = std::io::stdout();
            let stderr = std::io::stderr();
            run(&cli, &mut stdout.lock(), &mut stderr.lock())
        })
        .expect("spawn worker thread")
        .join()
        .unwrap_or(101);
    std::process::exit(code);
}
