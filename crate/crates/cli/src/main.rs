use std::process::ExitCode;

fn main() -> ExitCode {
    pwacert::commands::main_entry()
}
