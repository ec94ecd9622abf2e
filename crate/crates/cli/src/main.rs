fn main() {
    let code = objfield_cli::run(std::env::args_os());
    std::process::exit(code);
}
