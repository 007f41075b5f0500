use ctvseg_pipeline::cli::{execute, exit_code, parse};

fn main() {
    let cli = match parse(std::env::args_os()) {
        Ok(c) => c,
        Err(code) => std::process::exit(code),
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = execute(&cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
