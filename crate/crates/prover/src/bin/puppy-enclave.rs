//! Enclave child process. Spawned by the prover host; speaks the enclave
//! request protocol over stdin/stdout.

fn main() {
    if let Err(e) = puppy_core::tee::child::child_main(std::env::args().skip(1)) {
        eprintln!("puppy-enclave: {e}");
        std::process::exit(2);
    }
}
