fn main() {
    std::process::exit(crfmatch::cli::execute(std::env::args_os()));
}
