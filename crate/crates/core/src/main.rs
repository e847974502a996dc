fn main() -> std::process::ExitCode {
    foghorn::cli::main()
}
