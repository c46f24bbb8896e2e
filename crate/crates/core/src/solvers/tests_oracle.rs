use super::*;
use crate::comm::Comm;
use crate::partition::partition;

fn toy() -> (CsrMatrix, Vec<f64>) {
    let x = CsrMatrix::from_dense_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]], 2).unwrap();
    (x, vec![1.0, 1.0])
}

/// Solves the dense system by Gaussian elimination with partial pivoting.
fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// `((1/n) X X^T + lambda I)^{-1} (1/n) X y` from dense arithmetic.
fn normal_equations(x: &CsrMatrix, y: &[f64], lambda: f64) -> Vec<f64> {
    let (d, n) = (x.n_rows(), x.n_cols());
    let dense: Vec<Vec<f64>> = (0..d).map(|i| (0..n).map(|j| x.get(i, j)).collect()).collect();
    let a = (0..d)
        .map(|i| {
            (0..d)
                .map(|k| {
                    let g: f64 = (0..n).map(|j| dense[i][j] * dense[k][j]).sum();
                    g / n as f64 + if i == k { lambda } else { 0.0 }
                })
                .collect()
        })
        .collect();
    let rhs = (0..d)
        .map(|i| (0..n).map(|j| dense[i][j] * y[j]).sum::<f64>() / n as f64)
        .collect();
    gauss(a, rhs)
}

fn objective(x: &CsrMatrix, w: &[f64], y: &[f64], lambda: f64) -> f64 {
    let n = x.n_cols();
    let mut fit = 0.0;
    for j in 0..n {
        let pred: f64 = (0..x.n_rows()).map(|i| x.get(i, j) * w[i]).sum();
        fit += (pred - y[j]).powi(2);
    }
    fit / (2.0 * n as f64) + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

fn run(x: &CsrMatrix, y: &[f64], cfg: &SolverConfig) -> SolveOutput {
    solve(x, y, cfg, &RunOptions::default()).unwrap()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|q| q * q).sum::<f64>().sqrt();
    num / den
}

#[test]
fn cg_toy_matches_closed_form() {
    let (x, y) = toy();
    let r = cg_reference(&x, &y, 0.1, 1e-15, 100).unwrap();
    assert!(r.converged);
    assert!((r.w[0] - 0.5 / 0.6).abs() < 1e-12);
    assert!((r.w[1] - 1.0 / 2.1).abs() < 1e-12);
}

#[test]
fn cg_identity_system() {
    let x = CsrMatrix::from_dense_rows(
        &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        3,
    )
    .unwrap();
    let y = vec![0.3, -2.0, 5.5];
    let r = cg_reference(&x, &y, 0.0, 1e-14, 100).unwrap();
    assert!(r.iterations <= 3);
    assert!(rel_err(&r.w, &y) < 1e-12);
}

#[test]
fn full_block_bcd_is_one_step() {
    let (x, y) = toy();
    let mut cfg = SolverConfig::new(Algorithm::Bcd, 2, 0.1, 1);
    cfg.check_interval = CheckInterval::Never;
    let out = run(&x, &y, &cfg);
    let cg = cg_reference(&x, &y, 0.1, 1e-15, 100).unwrap();
    assert!(rel_err(&out.w, &cg.w) < 1e-10);
}

#[test]
fn bcd_toy_monotone_to_optimum() {
    let (x, y) = toy();
    let mut cfg = SolverConfig::new(Algorithm::Bcd, 1, 0.1, 60);
    cfg.record_interval = 1;
    cfg.check_interval = CheckInterval::Never;
    cfg.seed = 11;
    let out = run(&x, &y, &cfg);
    let f: Vec<f64> = out.snapshots.iter().map(|s| objective(&x, &s.w, &y, 0.1)).collect();
    for pair in f.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-15, "{pair:?}");
    }
    let opt = normal_equations(&x, &y, 0.1);
    assert!(rel_err(&out.w, &opt) < 1e-12);
}

#[test]
fn toy_flop_hand_count() {
    // setup: X y (2 nnz -> 4) and the 1/n scaling (2); per iteration with
    // b = 1 and one nonzero per row: Gram 2, residual 2, shift 2, rhs 4,
    // solve 2, w update 1, z update 2
    let (x, y) = toy();
    let mut cfg = SolverConfig::new(Algorithm::Bcd, 1, 0.1, 2);
    cfg.check_interval = CheckInterval::Never;
    let out = run(&x, &y, &cfg);
    assert_eq!(out.counters.flops, 6 + 2 * 15);
    assert_eq!(out.counters.messages, 0);
    assert_eq!(out.counters.words, 0);
}

#[test]
fn full_block_bdcd_reaches_dual_optimum() {
    let (x, y) = toy();
    let mut cfg = SolverConfig::new(Algorithm::Bdcd, 2, 0.1, 1);
    cfg.check_interval = CheckInterval::Never;
    let out = run(&x, &y, &cfg);
    let opt = normal_equations(&x, &y, 0.1);
    assert!(rel_err(&out.w, &opt) < 1e-10);
    assert!(out.snapshots[0].w.iter().all(|&v| v == 0.0));
}

#[test]
fn ca_with_unit_depth_is_identical() {
    let x = CsrMatrix::from_dense_rows(
        &[
            vec![1.0, 0.5, 0.0, 2.0, 0.0],
            vec![0.0, 1.5, 1.0, 0.0, 0.3],
            vec![0.7, 0.0, 0.0, 1.0, 1.0],
        ],
        5,
    )
    .unwrap();
    let y = vec![1.0, -1.0, 0.5, 2.0, 0.0];
    for (std, ca, b) in [(Algorithm::Bcd, Algorithm::CaBcd, 2), (Algorithm::Bdcd, Algorithm::CaBdcd, 2)] {
        let mut cfg = SolverConfig::new(std, b, 0.2, 9);
        cfg.seed = 3;
        cfg.record_updates = true;
        let a = run(&x, &y, &cfg);
        cfg.algorithm = ca;
        let c = run(&x, &y, &cfg);
        assert_eq!(a.updates, c.updates, "{std} vs {ca}");
        assert_eq!(a.w, c.w);
        assert_eq!(a.counters, c.counters);
    }
}

#[test]
fn ca_unrolled_matches_standard() {
    let x = CsrMatrix::from_dense_rows(
        &[
            vec![1.0, 0.5, 0.0, 2.0, 0.0, 1.0],
            vec![0.0, 1.5, 1.0, 0.0, 0.3, 0.0],
            vec![0.7, 0.0, 0.0, 1.0, 1.0, 0.2],
            vec![0.0, 0.4, 0.9, 0.0, 0.0, 1.1],
        ],
        6,
    )
    .unwrap();
    let y = vec![1.0, -1.0, 0.5, 2.0, 0.0, 0.7];
    for (std, ca, init_len) in [(Algorithm::Bcd, Algorithm::CaBcd, 4), (Algorithm::Bdcd, Algorithm::CaBdcd, 6)] {
        let mut cfg = SolverConfig::new(std, 2, 0.3, 11);
        cfg.seed = 8;
        cfg.record_updates = true;
        let base = run(&x, &y, &cfg).iterates(&vec![0.0; init_len]);
        for s in [2, 3, 4] {
            cfg.algorithm = ca;
            cfg.s = s;
            let other = run(&x, &y, &cfg).iterates(&vec![0.0; init_len]);
            assert_eq!(base.len(), other.len());
            for (a, c) in base.iter().zip(&other).skip(1) {
                assert!(rel_err(c, a) < 1e-12, "{ca} s={s}");
            }
            cfg.algorithm = std;
        }
    }
}

#[test]
fn stopping_check_at_optimum_and_origin() {
    let (x, y) = toy();
    let w_opt = normal_equations(&x, &y, 0.1);
    let shards = partition(&x, 1, LayoutKind::OneDColumn).unwrap();
    let mut cfg = SolverConfig::new(Algorithm::Bcd, 1, 0.1, 1);
    cfg.tol = 1e-12;
    let cc = CommConfig::serial(1);
    let got = run_spmd(&cc, |comm: &mut Comm| {
        let z_opt = shards[0].local().spmv_t(&w_opt).unwrap();
        let at_opt = check_stopping(
            comm,
            &shards[0],
            &y,
            IterateView::Primal { w: &w_opt, z_local: &z_opt },
            &cfg,
        )
        .unwrap();
        let zero = check_stopping(
            comm,
            &shards[0],
            &y,
            IterateView::Primal { w: &[0.0, 0.0], z_local: &[0.0, 0.0] },
            &cfg,
        )
        .unwrap();
        (at_opt, zero)
    })
    .unwrap();
    let (at_opt, zero) = got[0];
    assert!(at_opt.is_converged() && at_opt.norm() <= 1e-12);
    // |X y / n| = |(0.5, 1.0)|
    assert!(!zero.is_converged());
    assert!((zero.norm() - 1.25f64.sqrt()).abs() < 1e-15);
}

#[test]
fn converges_and_stops_early() {
    let (x, y) = toy();
    let mut cfg = SolverConfig::new(Algorithm::Bcd, 1, 0.1, 10_000);
    cfg.tol = 1e-10;
    cfg.check_interval = CheckInterval::Every(2);
    let out = run(&x, &y, &cfg);
    assert!(out.converged);
    assert!(out.iterations < 10_000);
    assert!(out.residual_norm.unwrap() <= 1e-10);
    assert_eq!(out.snapshots.last().unwrap().iteration, out.iterations);
}

#[test]
fn cg_needs_column_layout() {
    let (x, y) = toy();
    let shards = partition(&x, 1, LayoutKind::OneDRow).unwrap();
    let cfg = SolverConfig::new(Algorithm::Cg, 1, 0.1, 10);
    assert!(run_sharded(&shards, &y, &cfg, &CommConfig::serial(1)).is_err());
}
