fn main() {
    std::process::exit(latent_treat_cli::run(std::env::args_os()));
}
