fn main() {
    eprintln!("floe: not yet wired up");
    std::process::exit(2);
}
