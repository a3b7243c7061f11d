use std::process::ExitCode;

fn main() -> ExitCode {
    v2x_calib::cli::main_with_args(std::env::args_os())
}
