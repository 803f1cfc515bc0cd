fn main() {
    std::process::exit(wasm_debloat::run(std::env::args_os()));
}
