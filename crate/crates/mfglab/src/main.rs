fn main() {
    std::process::exit(mfglab::run::main_entry());
}
