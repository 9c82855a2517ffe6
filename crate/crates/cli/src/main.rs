use clap::Parser;

fn main() {
    let cli = abducer_cli::Cli::parse();
    let code = abducer_cli::run(&cli, &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}
