use clap::Parser;

fn main() {
    let args = sflab::cli::Args::parse();
    std::process::exit(sflab::cli::main_with(args));
}
