fn main() -> std::process::ExitCode {
    thermometry::cli::main_entry()
}
