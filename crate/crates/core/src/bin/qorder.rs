fn main() -> std::process::ExitCode {
    qorder::experiment::cli::main()
}
