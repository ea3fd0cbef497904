fn main() -> std::process::ExitCode {
    dfpipe::cli::main()
}
