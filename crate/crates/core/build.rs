// Links the system LAPACK/BLAS; override the library names with ICMOR_LAPACK_LIBS (comma separated).
fn main() {
    println!("cargo:rerun-if-env-changed=ICMOR_LAPACK_LIBS");
    let libs = std::env::var("ICMOR_LAPACK_LIBS").unwrap_or_else(|_| "lapack,blas".to_string());
    for lib in libs.split(',').map(str::trim).filter(|l| !l.is_empty()) {
        println!("cargo:rustc-link-lib=dylib={lib}");
    }
}
