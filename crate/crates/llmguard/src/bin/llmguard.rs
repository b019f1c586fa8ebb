use std::process::ExitCode;

fn main() -> ExitCode {
    llmguard::cli::main_with_args(std::env::args_os())
}
