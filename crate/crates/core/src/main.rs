use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(tilecast::cli::main_with(std::env::args_os()))
}
