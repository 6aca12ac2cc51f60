use std::process::ExitCode;

fn main() -> ExitCode {
    match cfdist_cli::main_with_args(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.qualified_name());
            ExitCode::FAILURE
        }
    }
}
