fn main() {
    std::process::exit(panelfe::cli::run(std::env::args_os()));
}
