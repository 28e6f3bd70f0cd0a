fn main() {
    std::process::exit(aircomp_cli::run(std::env::args_os()));
}
