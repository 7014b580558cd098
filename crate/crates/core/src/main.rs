fn main() {
    std::process::exit(procunc::cli::run(std::env::args_os()));
}
