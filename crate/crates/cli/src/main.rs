use std::process::ExitCode;

fn main() -> ExitCode {
    match ecoplan_cli::run_from(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
