use std::process::Command;

fn main() {
    println!("cargo:rerun-if-changed=../../.git/HEAD");
    println!("cargo:rerun-if-changed=../../.git/refs");
    let fallback = format!("v{}", env!("CARGO_PKG_VERSION"));
    let describe = Command::new("git")
        .args(["describe", "--tags", "--always"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    let version = match describe {
        Some(d) if d.starts_with('v') => d,
        // Untagged history: describe falls back to the bare commit hash.
        Some(hash) => format!("{fallback}-g{hash}"),
        None => fallback,
    };
    println!("cargo:rustc-env=GPMIDAS_VERSION={version}");
}
