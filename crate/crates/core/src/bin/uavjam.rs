fn main() -> std::process::ExitCode {
    uavjam::cli::run()
}
