use clap::Parser;

fn main() {
    aegis::cli::init_tracing();
    let cli = aegis::cli::Cli::parse();
    std::process::exit(aegis::cli::execute(&cli));
}
