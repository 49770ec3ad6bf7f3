fn main() -> std::process::ExitCode {
    pufsim::cli::main()
}
