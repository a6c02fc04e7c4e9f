use std::path::Path;
use std::process::{Command, Output};

use circle_rds::experiment::RunManifest;
use sha2::{Digest, Sha256};

fn circle_rds(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circle-rds"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn manifest(out: &Path) -> RunManifest {
    serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap()
}

const AFFINE: &str = "[map]\nfamily = \"affine_doubling\"\n[lyapunov]\nn = 100000\n";

#[test]
fn failed_preflight_blocks_the_run_unless_forced() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("affine.toml");
    std::fs::write(&config, AFFINE).unwrap();

    let out = tmp.path().join("blocked");
    let run = circle_rds(&["lyapunov", "--theta", "0.2"], &config, &out);
    assert_eq!(run.status.code(), Some(3), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(!out.join("lyapunov.csv").exists());

    let out = tmp.path().join("forced");
    let run = circle_rds(&["lyapunov", "--theta", "0.2", "--force"], &config, &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let m = manifest(&out);
    assert!(m.notes.iter().any(|n| n.contains("forced")), "{:?}", m.notes);
    assert_eq!(m.hypothesis_report_hashes.len(), 1);
}

#[test]
fn manifest_lists_every_csv_with_its_checksum() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    std::fs::write(&config, "seed = 5\n[grid]\nn = 256\n[density]\norbit_n = 100000\n").unwrap();
    let out = tmp.path().join("density");
    let run = circle_rds(&["density", "--theta", "0.3"], &config, &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let m = manifest(&out);
    assert_eq!(m.subcommand, "density");
    assert_eq!(m.seed, 5);
    assert!(!m.hypothesis_report_hashes.is_empty());
    let mut csvs: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|f| f.ends_with(".csv"))
        .collect();
    csvs.sort();
    assert!(!csvs.is_empty());
    for f in &csvs {
        let entry = m.outputs.iter().find(|o| &o.file == f).unwrap_or_else(|| panic!("{f} not listed"));
        let bytes = std::fs::read(out.join(f)).unwrap();
        assert_eq!(entry.sha256, format!("{:x}", Sha256::digest(&bytes)), "{f}");
        assert_eq!(entry.bytes, bytes.len() as u64);
    }
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    std::fs::write(&config, "[lyapunov]\nn = 100000\nsamples = 3\n").unwrap();
    let run = circle_rds(&["lyapunov"], &config, &tmp.path().join("out"));
    assert_eq!(run.status.code(), Some(2));

    std::fs::write(&config, "").unwrap();
    let run = circle_rds(&["lyapunov", "--theta", "0.7"], &config, &tmp.path().join("out"));
    assert_eq!(run.status.code(), Some(2));
}
