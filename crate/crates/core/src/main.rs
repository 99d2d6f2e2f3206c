fn main() {
    std::process::exit(pfcert::cli::main_entry());
}
