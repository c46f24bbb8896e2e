mod common;

use cabcd::comm::{ceil_log2, Backend};
use cabcd::partition::LayoutKind;
use cabcd::solvers::{sample_block, solve, Algorithm, CheckInterval, RunOptions, SolveOutput, SolverConfig};
use cabcd::sparse::CsrMatrix;
use common::*;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Instance {
    x: CsrMatrix,
    y: Vec<f64>,
    lambda: f64,
    seed: u64,
}

fn instance(max_d: usize, max_n: usize) -> impl Strategy<Value = Instance> {
    (2..=max_d, 2..=max_n, 0.05f64..0.4, 0.05f64..1.0, any::<u64>()).prop_map(|(d, n, f, lambda, seed)| Instance {
        x: random_sparse(d, n, f, seed),
        y: random_vec(n, seed),
        lambda,
        seed,
    })
}

fn block_for(universe: usize, frac: f64) -> usize {
    1 + ((universe.min(8) - 1) as f64 * frac) as usize
}

fn config(inst: &Instance, alg: Algorithm, frac: f64, s: usize, iters: usize) -> SolverConfig {
    let (d, n) = (inst.x.n_rows(), inst.x.n_cols());
    let universe = if alg.is_dual() { n } else { d };
    let mut cfg = SolverConfig::new(alg, block_for(universe, frac), inst.lambda, iters);
    cfg.s = s;
    cfg.seed = inst.seed;
    cfg.check_interval = CheckInterval::Never;
    cfg
}

fn run(inst: &Instance, cfg: &SolverConfig, ranks: usize, backend: Backend, layout: Option<LayoutKind>) -> SolveOutput {
    let opts = RunOptions { ranks, backend, layout, ..RunOptions::default() };
    solve(&inst.x, &inst.y, cfg, &opts).unwrap()
}

fn layout_strategy() -> impl Strategy<Value = Option<LayoutKind>> {
    prop_oneof![Just(None), Just(Some(LayoutKind::OneDRow)), Just(Some(LayoutKind::OneDColumn))]
}

fn primal_alg() -> impl Strategy<Value = Algorithm> {
    prop_oneof![Just(Algorithm::Bcd), Just(Algorithm::CaBcd)]
}

fn dual_alg() -> impl Strategy<Value = Algorithm> {
    prop_oneof![Just(Algorithm::Bdcd), Just(Algorithm::CaBdcd)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn z_tracks_xt_w(inst in instance(50, 200), alg in primal_alg(), frac in 0.0f64..1.0, s in 1usize..5,
                     ranks in 1usize..5, layout in layout_strategy()) {
        let mut cfg = config(&inst, alg, frac, s, 12);
        cfg.record_interval = 1;
        cfg.record_updates = true;
        let out = run(&inst, &cfg, ranks, Backend::LockstepSerial, layout);
        prop_assert!(out.snapshots.len() > 1);
        for snap in &out.snapshots {
            let z = snap.z.as_ref().expect("traced z");
            let err = diff_norm(z, &xt_times(&inst.x, &snap.w));
            prop_assert!(err <= 1e-10 * (1.0 + norm(z)), "iteration {}: {:e}", snap.iteration, err);
        }
    }

    #[test]
    fn dual_iterates_stay_consistent(inst in instance(50, 200), alg in dual_alg(), frac in 0.0f64..1.0, s in 1usize..5,
                                     ranks in 1usize..5, layout in layout_strategy()) {
        let mut cfg = config(&inst, alg, frac, s, 12);
        cfg.record_interval = 1;
        let out = run(&inst, &cfg, ranks, Backend::LockstepSerial, layout);
        let n = inst.x.n_cols() as f64;
        for snap in &out.snapshots {
            let alpha = snap.alpha.as_ref().unwrap();
            let xa = x_times(&inst.x, alpha);
            let resid: Vec<f64> = snap.w.iter().zip(&xa).map(|(w, v)| w + v / (inst.lambda * n)).collect();
            prop_assert!(norm(&resid) <= 1e-10 * (1.0 + norm(&snap.w)), "iteration {}", snap.iteration);
        }
    }

    #[test]
    fn bcd_primal_objective_never_increases(inst in instance(30, 80), frac in 0.0f64..1.0) {
        let mut cfg = config(&inst, Algorithm::Bcd, frac, 1, 30);
        cfg.record_interval = 1;
        let out = run(&inst, &cfg, 1, Backend::LockstepSerial, None);
        let f: Vec<f64> = out.snapshots.iter().map(|s| primal_objective(&inst.x, &s.w, &inst.y, inst.lambda)).collect();
        for w in f.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "{:?}", w);
        }
    }

    #[test]
    fn bdcd_dual_objective_never_increases(inst in instance(30, 80), frac in 0.0f64..1.0) {
        let mut cfg = config(&inst, Algorithm::Bdcd, frac, 1, 30);
        cfg.record_interval = 1;
        let out = run(&inst, &cfg, 1, Backend::LockstepSerial, None);
        let g: Vec<f64> = out
            .snapshots
            .iter()
            .map(|s| dual_objective(&inst.x, s.alpha.as_ref().unwrap(), &inst.y, inst.lambda))
            .collect();
        for w in g.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "{:?}", w);
        }
    }

    #[test]
    fn subproblem_matrices_are_spd(inst in instance(20, 40), frac in 0.0f64..1.0, h in 1u64..20) {
        let (d, n) = (inst.x.n_rows(), inst.x.n_cols());
        let nf = n as f64;
        let b = block_for(d, frac);
        let rows = sample_block(inst.seed, h, d, b).unwrap();
        let mut gamma = gram_of_rows(&inst.x, rows.indices(), 1.0 / nf);
        for (i, r) in gamma.iter_mut().enumerate() {
            r[i] += inst.lambda;
        }
        prop_assert!(jacobi_eigenvalues(gamma)[0] >= inst.lambda * (1.0 - 1e-12));
        let bp = block_for(n, frac);
        let cols = sample_block(inst.seed, h, n, bp).unwrap();
        let mut theta = gram_of_cols(&inst.x, cols.indices(), 1.0 / (inst.lambda * nf * nf));
        for (i, r) in theta.iter_mut().enumerate() {
            r[i] += 1.0 / nf;
        }
        prop_assert!(jacobi_eigenvalues(theta)[0] >= (1.0 - 1e-12) / nf);
        for alg in [Algorithm::Bcd, Algorithm::CaBcd, Algorithm::Bdcd, Algorithm::CaBdcd] {
            let out = run(&inst, &config(&inst, alg, frac, 3, 10), 1, Backend::LockstepSerial, None);
            prop_assert_eq!(out.cholesky_retries, 0);
        }
    }

    #[test]
    fn rank_count_does_not_change_iterates(inst in instance(30, 60), frac in 0.0f64..1.0, s in 1usize..5,
                                           alg in prop_oneof![Just(Algorithm::Cg), primal_alg(), dual_alg()]) {
        let cfg = config(&inst, alg, frac, s, 10);
        let base = run(&inst, &cfg, 1, Backend::LockstepSerial, None);
        for p in [2, 4, 8] {
            let other = run(&inst, &cfg, p, Backend::LockstepSerial, None);
            let scale = 1.0 + norm(&base.w);
            prop_assert!(diff_norm(&other.w, &base.w) <= 1e-10 * scale, "{} P={}", alg, p);
        }
    }

    #[test]
    fn backends_agree_bitwise(inst in instance(20, 40), frac in 0.0f64..1.0, s in 1usize..4, ranks in 1usize..5,
                              alg in prop_oneof![Just(Algorithm::Cg), primal_alg(), dual_alg()], layout in layout_strategy()) {
        let mut cfg = config(&inst, alg, frac, s, 8);
        cfg.check_interval = CheckInterval::Every(3);
        cfg.record_interval = 2;
        let a = run(&inst, &cfg, ranks, Backend::LockstepSerial, layout);
        let b = run(&inst, &cfg, ranks, Backend::Threaded, layout);
        prop_assert!(a.w.iter().zip(&b.w).all(|(p, q)| p.to_bits() == q.to_bits()));
        prop_assert_eq!(a.counters, b.counters);
        prop_assert_eq!(a.rank_counters, b.rank_counters);
        prop_assert_eq!(a.iterations, b.iterations);
        prop_assert_eq!(a.snapshots.len(), b.snapshots.len());
    }

    #[test]
    fn ca_iterates_match_standard(inst in instance(40, 120), frac in 0.0f64..1.0, ranks in 1usize..4,
                                  pair in prop_oneof![Just((Algorithm::Bcd, Algorithm::CaBcd)), Just((Algorithm::Bdcd, Algorithm::CaBdcd))]) {
        let (std_alg, ca_alg) = pair;
        let mut cfg = config(&inst, std_alg, frac, 1, 24);
        cfg.record_updates = true;
        let init = vec![0.0; if std_alg.is_dual() { inst.x.n_cols() } else { inst.x.n_rows() }];
        let base = run(&inst, &cfg, ranks, Backend::LockstepSerial, None).iterates(&init);
        for s in [1, 2, 4, 8] {
            let mut ca = cfg.clone();
            ca.algorithm = ca_alg;
            ca.s = s;
            ca.record_gram_cond = true;
            let out = run(&inst, &ca, ranks, Backend::LockstepSerial, None);
            let cond = out.gram_conds.iter().cloned().fold(1.0, f64::max);
            prop_assume!(cond <= 1e6);
            let its = out.iterates(&init);
            prop_assert_eq!(its.len(), base.len());
            for (h, (c, b)) in its.iter().zip(&base).enumerate().skip(1) {
                let dev = diff_norm(c, b) / norm(b).max(f64::MIN_POSITIVE);
                prop_assert!(dev <= 1e-8 * cond, "{} s={} h={}: {:e} (cond {:e})", ca_alg, s, h, dev, cond);
            }
        }
    }

    #[test]
    fn latency_drops_by_s(inst in instance(30, 60), frac in 0.0f64..1.0, s in 1usize..9, outer in 1usize..6,
                          ranks in prop_oneof![Just(2usize), Just(4), Just(8)]) {
        let h = s * outer;
        let lg = ceil_log2(ranks);
        for (std_alg, ca_alg) in [(Algorithm::Bcd, Algorithm::CaBcd), (Algorithm::Bdcd, Algorithm::CaBdcd)] {
            let std_cfg = config(&inst, std_alg, frac, 1, h);
            let mut ca_cfg = std_cfg.clone();
            ca_cfg.algorithm = ca_alg;
            ca_cfg.s = s;
            let l_std = run(&inst, &std_cfg, ranks, Backend::LockstepSerial, None).counters.messages;
            let ca = run(&inst, &ca_cfg, ranks, Backend::LockstepSerial, None).counters;
            // Gram and residual allreduces per (outer) iteration, plus the
            // X y / n setup allreduce for the primal methods
            let setup = if std_alg.is_dual() { 0 } else { lg };
            prop_assert_eq!(l_std, setup + 2 * h as u64 * lg);
            prop_assert_eq!(ca.messages, setup + 2 * outer as u64 * lg);
            let su = s as u64;
            prop_assert!(ca.messages * su >= l_std && ca.messages * su <= l_std + su * lg, "{}", ca_alg);
        }
    }

    #[test]
    fn row_and_column_layouts_agree(inst in instance(30, 60), frac in 0.0f64..1.0, s in 1usize..4, ranks in 2usize..5,
                                    alg in prop_oneof![primal_alg(), dual_alg()]) {
        let cfg = config(&inst, alg, frac, s, 10);
        let row = run(&inst, &cfg, ranks, Backend::LockstepSerial, Some(LayoutKind::OneDRow));
        let col = run(&inst, &cfg, ranks, Backend::LockstepSerial, Some(LayoutKind::OneDColumn));
        prop_assert!(diff_norm(&row.w, &col.w) <= 1e-10 * (1.0 + norm(&col.w)));
    }
}

#[test]
fn full_block_steps_hit_the_optimum() {
    let x = random_sparse(12, 30, 0.2, 3);
    let y = random_vec(30, 3);
    let inst = Instance { x, y, lambda: 0.1, seed: 3 };
    let w_opt = normal_equations(&inst.x, &inst.y, 0.1);
    let mut cfg = SolverConfig::new(Algorithm::Bcd, 12, 0.1, 1);
    cfg.check_interval = CheckInterval::Never;
    assert!(rel_err(&run(&inst, &cfg, 3, Backend::Threaded, None).w, &w_opt) <= 1e-10);
    cfg.algorithm = Algorithm::Bdcd;
    cfg.block_size = 30;
    let out = run(&inst, &cfg, 3, Backend::Threaded, None);
    assert!(rel_err(&out.w, &w_opt) <= 1e-10);
    assert!(rel_err(out.alpha.as_ref().unwrap(), &dual_optimum(&inst.x, &inst.y, 0.1)) <= 1e-10);
}
