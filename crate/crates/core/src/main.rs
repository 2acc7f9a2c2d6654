fn main() {
    std::process::exit(swarm_infer::cli::main(std::env::args_os()));
}
