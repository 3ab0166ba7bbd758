fn main() -> std::process::ExitCode {
    fracmin::cli::main()
}
