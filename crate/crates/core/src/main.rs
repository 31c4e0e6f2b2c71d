fn main() {
    std::process::exit(contact_sketch::cli::run(std::env::args_os()));
}
