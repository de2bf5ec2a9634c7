use std::path::Path;
use std::process::{Command, Output};

use fsmmr_core::read_ply;

fn fsmmr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsmmr")).args(args).output().unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn upsample_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (p(dir.path(), "in.ply"), p(dir.path(), "out.ply"));
    let synth = fsmmr(&["synth", "--points", "1500", "--density", "50", &input]);
    assert!(synth.status.success());
    let run = fsmmr(&["upsample", "--method", "fsmmr", "--block-size", "4", &input, &output]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let cloud = read_ply(&std::fs::read(&output).unwrap()).unwrap();
    assert_eq!(cloud.len(), 1500);
    assert!(cloud.is_fully_colored());
}

#[test]
fn lin2_gaps_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (p(dir.path(), "in.ply"), p(dir.path(), "out.ply"));
    assert!(fsmmr(&["synth", "--points", "1500", "--density", "30", "--format", "ascii", &input]).status.success());
    let run = fsmmr(&["upsample", "--method", "lin2", &input, &output]);
    assert_eq!(run.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&run.stderr).contains("without a value"));
    assert!(read_ply(&std::fs::read(&output).unwrap()).unwrap().is_fully_colored());
}

#[test]
fn usage_errors_exit_1() {
    let bad_method = fsmmr(&["upsample", "--method", "cubic", "a.ply", "b.ply"]);
    assert_eq!(bad_method.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_method.stderr).contains("unknown method"));
    assert_eq!(fsmmr(&["evaluate", "--densities", "0", "a.ply", "b.csv"]).status.code(), Some(1));
    assert_eq!(fsmmr(&["evaluate", "--sigma", "1.5", "a.ply", "b.csv"]).status.code(), Some(1));
    assert_eq!(fsmmr(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fsmmr(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = p(dir.path(), "missing.ply");
    assert_eq!(fsmmr(&["upsample", &missing, &p(dir.path(), "o.ply")]).status.code(), Some(2));
    let garbage = p(dir.path(), "garbage.ply");
    std::fs::write(&garbage, b"not a ply file\n").unwrap();
    assert_eq!(fsmmr(&["evaluate", &garbage, &p(dir.path(), "o.csv")]).status.code(), Some(2));
}

#[test]
fn evaluate_record_count() {
    let dir = tempfile::tempdir().unwrap();
    let (input, csv) = (p(dir.path(), "in.ply"), p(dir.path(), "r.csv"));
    assert!(fsmmr(&["synth", "--points", "1200", "--shape", "plane", "--size", "12", &input]).status.success());
    let run = fsmmr(&["evaluate", "--densities", "10,50,80", "--runs", "3", "--seed", "7", "--method", "nn3,idw3", &input, &csv]);
    assert_eq!(run.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 3 * 2);
    assert!(text.starts_with("method,density,run,seed,psnr_r,psnr_g,psnr_b,color_psnr,uncolored_count,wall_time_ms,flags\n"));
}

#[test]
fn flatten_dump() {
    let dir = tempfile::tempdir().unwrap();
    let (input, csv) = (p(dir.path(), "in.ply"), p(dir.path(), "b.csv"));
    assert!(fsmmr(&["synth", "--points", "800", "--density", "0.5", &input]).status.success());
    assert_eq!(fsmmr(&["flatten", "--block", "3", &input, &csv]).status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("point_id,role,x,y\n"));
    assert!(text.lines().count() > 1);
    assert_eq!(fsmmr(&["flatten", "--block", "100000", &input, &csv]).status.code(), Some(1));
}

#[test]
fn help_lists_pinned_defaults() {
    let help = String::from_utf8(fsmmr(&["upsample", "--help"]).stdout).unwrap();
    for needle in ["[default: 4]", "[default: 16]", "[default: 0.8]", "[default: 0.7]", "[default: 0.5]", "[default: 100]"] {
        assert!(help.contains(needle), "{needle} missing from:\n{help}");
    }
}
