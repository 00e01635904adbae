use std::process::ExitCode;

fn main() -> ExitCode {
    fflab::cli::main_with(std::env::args_os())
}
