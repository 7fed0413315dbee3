use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include").join("adiaband.h");
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            bindings.write_to_file(header);
        }
        Err(e) => {
            // Header generation is a convenience; don't fail the build when
            // cbindgen cannot parse (e.g. during `cargo check` of a broken
            // intermediate state).
            println!("cargo:warning=cbindgen failed: {e}");
        }
    }
}
