fn main() {
    std::process::exit(apifeat::cli::main_from(std::env::args_os()));
}
