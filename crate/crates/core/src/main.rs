use std::process::ExitCode;

use clap::Parser;

use elite_pixel::cli::Cli;

fn main() -> ExitCode {
    // Usage errors exit with code 2 (clap's default).
    let cli = Cli::parse();

    let threads = cli.threads.or_else(|| {
        std::env::var("ELITE_PIXEL_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }

    match cli.run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
