use std::process::ExitCode;

fn main() -> ExitCode {
    resilient_evo::cli::run_cli()
}
