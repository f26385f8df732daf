use std::process::ExitCode;

use maxent::cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let env = cli::env_overrides(std::env::vars());
    let code = cli::run(std::env::args_os(), env, &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code as u8)
}
