use std::process::Command;

fn main() {
    // Best-effort build identifier for CSV metadata headers.
    let describe = Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|out| out.status.success())
        .and_then(|out| String::from_utf8(out.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".to_string());
    println!("cargo:rustc-env=PCFLOW_GIT_DESCRIBE={describe}");
    println!("cargo:rerun-if-changed=build.rs");
}
