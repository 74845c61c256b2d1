fn main() {
    let code = permadid_gateway::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
