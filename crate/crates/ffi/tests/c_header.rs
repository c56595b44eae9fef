//! Compiles and runs a C program against the generated header and static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "exposure_lens.h"

int main(void) {
    double p = 0.0;
    if (el_plim(1.0, 2.0, INFINITY, &p) != EL_STATUS_OK || p != 0.5) return 1;
    ElIdentifiedSet set;
    if (el_bounds(0.0, 1.0, &set) != EL_STATUS_VALIDATION) return 2;
    if (el_last_error_message() == NULL) return 3;
    ElShareTable *t = NULL;
    if (el_share_table_load("/missing.csv", "x", false, false, &t) != EL_STATUS_IO) return 4;
    printf("%s\n", el_version());
    return 0;
}
"#;

fn compiler() -> Option<String> {
    ["cc", "clang", "gcc"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .map(String::from)
}

#[test]
fn header_compiles_and_links() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = crate_dir.join("include");
    let tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let src = tmp.join("el_smoke.c");
    std::fs::write(&src, PROGRAM).unwrap();

    let syntax = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(syntax.status.success(), "{}", String::from_utf8_lossy(&syntax.stderr));

    // cargo places the static library beside the test binary in deps/
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib = deps.join("libexposure_lens_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; link step skipped", lib.display());
        return;
    }
    let exe = tmp.join("el_smoke");
    let link = Command::new(&cc)
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(link.status.success(), "{}", String::from_utf8_lossy(&link.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with(env!("CARGO_PKG_VERSION")));
}
