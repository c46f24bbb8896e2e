mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cabcd::sparse::write_libsvm;
use common::*;

const HEADER: &str = "iter,epoch,objective,rel_obj_err,rel_sol_err,residual,flops,words,messages,gram_cond,wall_s";

fn dataset(dir: &Path, name: &str, d: usize, n: usize, seed: u64) -> PathBuf {
    let x = random_sparse(d, n, 0.2, seed);
    let y = random_vec(n, seed);
    let path = dir.join(name);
    write_libsvm(&x, &y, std::fs::File::create(&path).unwrap()).unwrap();
    path
}

fn cabcd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cabcd")).args(args).output().unwrap()
}

fn without_wall(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

#[test]
fn solve_is_deterministic_apart_from_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "toy.svm", 20, 50, 1);
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}.csv"));
        let res = cabcd(&[
            "solve", "--data", data.to_str().unwrap(), "--algo", "cabcd", "--block", "4", "--s", "3", "--lambda", "0.1",
            "--ranks", "4", "--backend", "threaded", "--epochs", "3", "--record-every", "2", "--gram-cond",
            "--seed", "17", "--output", out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        let stdout = String::from_utf8(res.stdout).unwrap();
        assert!(stdout.contains("predicted_time=") && stdout.contains("rel_obj_err="), "{stdout}");
        outputs.push(std::fs::read_to_string(out).unwrap());
    }
    assert_eq!(outputs[0].lines().next().unwrap(), HEADER);
    assert!(outputs[0].lines().count() > 3);
    assert_eq!(without_wall(&outputs[0]), without_wall(&outputs[1]));
}

#[test]
fn csv_goes_to_stdout_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "toy.svm", 6, 10, 2);
    let res = cabcd(&["solve", "--data", data.to_str().unwrap(), "--algo", "cg", "--lambda", "0.5", "--iters", "4", "--record-every", "1"]);
    assert!(res.status.success());
    let csv = String::from_utf8(res.stdout).unwrap();
    assert_eq!(csv.lines().next().unwrap(), HEADER);
    assert!(String::from_utf8(res.stderr).unwrap().contains("cg iters="));
}

#[test]
fn single_spec_compare_equals_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "toy.svm", 15, 40, 3);
    let common = ["--data", data.to_str().unwrap(), "--lambda", "0.2", "--block", "3", "--epochs", "2", "--seed", "5", "--record-every", "1"];
    let run_csv = dir.path().join("run.csv");
    let cmp_csv = dir.path().join("cmp.csv");
    let mut a = vec!["solve", "--algo", "bcd", "--output", run_csv.to_str().unwrap()];
    a.extend(common);
    assert!(cabcd(&a).status.success());
    let mut b = vec!["compare", "--algos", "bcd", "--output", cmp_csv.to_str().unwrap()];
    b.extend(common);
    let res = cabcd(&b);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let run = std::fs::read_to_string(run_csv).unwrap();
    let cmp = std::fs::read_to_string(cmp_csv).unwrap();
    let mut cmp_lines = cmp.lines();
    assert_eq!(
        cmp_lines.next().unwrap(),
        "algo,iter,epoch,passes,objective,rel_obj_err,rel_sol_err,residual,flops,words,messages,gram_cond,wall_s"
    );
    // drop the compare-only algo and passes columns, then the wall time
    let reduced: Vec<String> = cmp_lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            [&f[1..3], &f[4..f.len() - 1]].concat().join(",")
        })
        .collect();
    assert_eq!(reduced, without_wall(&run)[1..].to_vec());
}

#[test]
fn compare_interleaves_by_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "toy.svm", 10, 30, 4);
    let res = cabcd(&[
        "compare", "--data", data.to_str().unwrap(), "--lambda", "0.3", "--algos", "cg,bcd,cabcd,bdcd", "--block", "2",
        "--dual-block", "3", "--s", "4", "--epochs", "3", "--tol", "0",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = String::from_utf8(res.stdout).unwrap();
    let mut epochs = Vec::new();
    let mut algos = std::collections::BTreeSet::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        algos.insert(f[0].to_string());
        epochs.push(f[2].parse::<f64>().unwrap());
    }
    assert!(epochs.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(algos.into_iter().collect::<Vec<_>>(), ["bcd", "bdcd", "cabcd-s4", "cg"]);
}

#[test]
fn costs_table_on_one_rank_predicts_no_messages() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "toy.svm", 20, 40, 6);
    let res = cabcd(&["costs", "--data", data.to_str().unwrap(), "--algo", "cabcd", "--block", "2", "--s", "4", "--lambda", "0.1", "--iters", "16"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = String::from_utf8(res.stdout).unwrap();
    let messages = table.lines().find(|l| l.starts_with("messages")).unwrap();
    let cols: Vec<&str> = messages.split_whitespace().collect();
    assert_eq!(cols[cols.len() - 2], "0");
    assert_eq!(cols[cols.len() - 1], "-");
    assert!(table.contains("predicted_time="));
}

#[test]
fn usage_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "toy.svm", 5, 8, 7);
    let res = cabcd(&["solve", "--data", data.to_str().unwrap(), "--algo", "bcd", "--block", "9", "--lambda", "0.1"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("block_size"));
    let res = cabcd(&["solve", "--data", "nope.svm", "--algo", "bcd", "--lambda", "0.1"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn dataset_dir_and_machine_file() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), "news20.binary", 6, 4, 8);
    let machine = dir.path().join("machine.toml");
    std::fs::write(&machine, "gamma = 1.0\nalpha = 0.0\nbeta = 0.0\n").unwrap();
    let res = Command::new(env!("CARGO_BIN_EXE_cabcd"))
        .env("CABCD_DATA_DIR", dir.path())
        .args(["solve", "--data", "news20.binary", "--algo", "bcd", "--lambda-mult", "1000", "--iters", "3", "--check-interval", "never"])
        .arg("--machine")
        .arg(&machine)
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary = String::from_utf8(res.stderr).unwrap();
    // with gamma = 1 and no communication the prediction is the flop count
    let flops: f64 = summary.split("flops=").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    let t: f64 = summary.split("predicted_time=").nth(1).unwrap().trim().trim_end_matches('s').parse().unwrap();
    assert!((t - flops).abs() <= 1e-9 * flops, "{summary}");
}
