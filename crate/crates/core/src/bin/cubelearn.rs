fn main() -> std::process::ExitCode {
    cubelearn::cli::main()
}
