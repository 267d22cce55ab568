fn main() {
    std::process::exit(maxent_gfn::cli::run(std::env::args_os()));
}
