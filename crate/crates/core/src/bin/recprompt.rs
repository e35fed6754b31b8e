fn main() -> std::process::ExitCode {
    recprompt::cli::main()
}
