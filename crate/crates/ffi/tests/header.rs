use std::path::PathBuf;
use std::process::Command;

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/gpa.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).expect("build script writes include/gpa.h");
    for name in [
        "gpa_last_error",
        "gpa_dataset_load",
        "gpa_dataset_stats",
        "gpa_dataset_free",
        "gpa_model_load",
        "gpa_model_embedding_dim",
        "gpa_model_embed",
        "gpa_model_pair_scores",
        "gpa_model_free",
        "gpa_train_from_config",
        "GPA_STATUS_NULL_POINTER",
        "typedef struct GpaModel GpaModel",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"gpa.h\"\nint main(void) { GpaDatasetStats s; GpaDataset *d = 0; return gpa_dataset_stats(d, &s) == GPA_STATUS_OK; }\n",
    )
    .unwrap();
    let include = header().parent().unwrap().to_path_buf();
    let status = Command::new(std::env::var("CC").unwrap_or_else(|_| "cc".into()))
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
}
