use std::process::ExitCode;

fn main() -> ExitCode {
    esd_server::cli::main()
}
