fn main() {
    std::process::exit(hardy_sphere::cli::run(std::env::args_os()));
}
