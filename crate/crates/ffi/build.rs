fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let config = cbindgen::Config::from_file(format!("{crate_dir}/cbindgen.toml"))
        .expect("cbindgen.toml must parse");
    match cbindgen::Builder::new().with_crate(&crate_dir).with_config(config).generate() {
        Ok(header) => {
            header.write_to_file(format!("{crate_dir}/include/mementum.h"));
        }
        // Keep `cargo build` alive when cbindgen chokes on an intermediate
        // state of lib.rs; the committed header stays as-is.
        Err(err) => println!("cargo:warning=header generation skipped: {err}"),
    }
}
