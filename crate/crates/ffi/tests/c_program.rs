//! Compiles a C program against the generated header and static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "biaspipe.h"

static double additive(const uint8_t *mask, size_t m, void *user) {
    const double *w = (const double *)user;
    double total = 0.25;
    for (size_t j = 0; j < m; j++) total += mask[j] ? w[j] : 0.0;
    return total;
}

int main(void) {
    BpConfusion cm = {43, 11, 5, 0};
    BpMetrics metrics;
    if (bp_confusion_metrics(&cm, &metrics) != BP_STATUS_OK) return 1;
    if (metrics.accuracy.numerator != 43 || metrics.accuracy.denominator != 59) return 2;

    double w[4] = {1.0, -2.0, 0.5, 0.0};
    double phi[4], base;
    if (bp_kernel_shap(4, additive, w, 64, 1, phi, &base) != BP_STATUS_OK) return 3;
    for (int j = 0; j < 4; j++) {
        double d = phi[j] - w[j];
        if (d > 1e-9 || d < -1e-9) return 4;
    }

    BpCorpus *corpus = NULL;
    if (bp_corpus_from_jsonl(NULL, 1, &corpus) != BP_STATUS_NULL_ARGUMENT) return 5;
    if (bp_last_error() == NULL || strlen(bp_last_error()) == 0) return 6;
    printf("%s\n", bp_version());
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let lib = target_dir().join("libbiaspipe_ffi.a");
    if !lib.exists() {
        eprintln!("static library not built at {}; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new(&cc)
        .args(["-std=c11", "-Wall", "-Werror", "-I"])
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
