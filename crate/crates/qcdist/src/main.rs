use std::process::ExitCode;

fn main() -> ExitCode {
    qcdist::cli::run()
}
