use std::process::ExitCode;

fn main() -> ExitCode {
    pcflow::bench::cli::main()
}
