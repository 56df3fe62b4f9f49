use std::io::{self, Write};

fn main() {
    if let Some(threads) = std::env::var("COLLATZ_THREADS").ok().and_then(|v| v.parse().ok()) {
        // Ignore the error: the pool can only be built once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    let code = collatz_chain::cli::run(std::env::args_os(), &mut out, &mut err);
    let _ = out.flush();
    std::process::exit(code);
}
