fn main() {
    let code = clauseviz::run(std::env::args_os(), |key| std::env::var(key).ok());
    std::process::exit(code);
}
