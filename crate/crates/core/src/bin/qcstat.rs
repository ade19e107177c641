fn main() {
    std::process::exit(qcstat::cli::main_exit_code());
}
