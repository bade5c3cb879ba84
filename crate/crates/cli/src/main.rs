use std::process::ExitCode;

fn main() -> ExitCode {
    flowstego_cli::commands::main()
}
