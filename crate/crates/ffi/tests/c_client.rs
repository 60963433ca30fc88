//! Compiles a small C program against the generated header and the static
//! library, then runs it.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "mcan.h"

int main(void) {
    McanDataset *ds = NULL;
    const char *cfg = "[generate]\nroads = 2\ndays = 2\n";
    if (mcan_dataset_generate(cfg, 3, &ds) != MCAN_STATUS_OK) {
        fprintf(stderr, "generate: %s\n", mcan_last_error_message());
        return 1;
    }
    size_t roads = 0;
    if (mcan_dataset_road_count(ds, &roads) != MCAN_STATUS_OK || roads != 2) return 2;
    McanModel *m = NULL;
    if (mcan_model_load("/nonexistent/model.json", &m) != MCAN_STATUS_IO) return 3;
    if (m != NULL || strstr(mcan_last_error_message(), "model.json") == NULL) return 4;
    mcan_dataset_free(ds);
    printf("ok %s\n", mcan_version());
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // Test binaries live in <target>/<profile>/deps.
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("libmcan_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    let exe = dir.path().join("client");
    fs::write(&src, PROGRAM).unwrap();

    let cc = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .expect("a C compiler is installed");
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));

    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status, String::from_utf8_lossy(&run.stderr));
    assert_eq!(
        String::from_utf8(run.stdout).unwrap().trim(),
        format!("ok {}", env!("CARGO_PKG_VERSION"))
    );
}
