use std::process::ExitCode;

fn main() -> ExitCode {
    wesma::cli::main_with_args(std::env::args_os())
}
