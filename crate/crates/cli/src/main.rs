fn main() {
    std::process::exit(rlpf_cli::run_command(std::env::args().skip(1)));
}
