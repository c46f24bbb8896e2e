use std::fmt;

use super::{CliError, Dataset, RunSpec};
use crate::comm::{ceil_log2, predicted_time, AllToAllModel, CostCounters};
use crate::partition::LayoutKind;
use crate::solvers::{solve, Algorithm, CheckInterval};

/// Max-load estimate for `b` sampled indices over `p` ranks (balls into bins).
pub fn eta(b: usize, p: usize) -> f64 {
    let (bf, pf) = (b as f64, p as f64);
    if p <= 1 || b <= 1 {
        return bf;
    }
    let lnp = pf.ln();
    let spread = || bf / pf + (bf * lnp / pf).sqrt();
    let v = if bf > pf * lnp {
        spread()
    } else if b == p {
        let lnb = bf.ln();
        if lnb.ln() > 0.0 {
            lnb / lnb.ln()
        } else {
            lnb
        }
    } else if bf < pf / lnp {
        lnp / (pf / bf).ln()
    } else {
        spread()
    };
    v.clamp(1.0, bf)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    pub quantity: &'static str,
    pub formula: &'static str,
    pub predicted: f64,
    pub measured: u64,
}

impl CostRow {
    /// `measured / predicted`, `None` when nothing is predicted.
    pub fn ratio(&self) -> Option<f64> {
        (self.predicted > 0.0).then(|| self.measured as f64 / self.predicted)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub algorithm: Algorithm,
    pub layout: LayoutKind,
    pub ranks: usize,
    pub iterations: usize,
    pub block_size: usize,
    pub s: usize,
    pub density: f64,
    pub d: usize,
    pub n: usize,
    pub rows: Vec<CostRow>,
    pub measured: CostCounters,
    pub predicted_time: f64,
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} layout={} P={} H={} b={} s={} d={} n={} f={:.3e}",
            self.algorithm,
            self.layout.name(),
            self.ranks,
            self.iterations,
            self.block_size,
            self.s,
            self.d,
            self.n,
            self.density
        )?;
        writeln!(f, "{:<9} {:<34} {:>14} {:>14} {:>8}", "quantity", "leading order", "predicted", "measured", "ratio")?;
        for r in &self.rows {
            let ratio = r.ratio().map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
            writeln!(
                f,
                "{:<9} {:<34} {:>14.4e} {:>14} {:>8}",
                r.quantity, r.formula, r.predicted, r.measured, ratio
            )?;
        }
        write!(f, "predicted_time={:.6e}s", self.predicted_time)
    }
}

/// Leading-order `(F, W, L)` of the run, counting one allreduce for the Gram
/// matrix and one for the residual per (outer) iteration, and, off the
/// natural layout, one all-to-all of the max-loaded rank's sampled entries.
#[allow(clippy::too_many_arguments)]
pub fn predicted_counters(
    algorithm: Algorithm,
    layout: LayoutKind,
    model: AllToAllModel,
    h: usize,
    b: usize,
    s: usize,
    d: usize,
    n: usize,
    nnz: usize,
    p: usize,
) -> (f64, f64, f64) {
    let lg = ceil_log2(p) as f64;
    let pf = p as f64;
    let (hf, df, nf) = (h as f64, d as f64, n as f64);
    let f = nnz as f64 / (df * nf).max(1.0);
    if algorithm == Algorithm::Cg {
        let flops = hf * (4.0 * f * df * nf / pf + 13.0 * df) + 2.0 * f * df * nf / pf;
        return (flops, (hf + 1.0) * df * lg, (hf + 1.0) * lg);
    }
    let s = if algorithm.is_ca() { s.max(1) } else { 1 };
    let outer = h.div_ceil(s) as f64;
    let m = (s * b) as f64;
    let bf = b as f64;
    // nonzeros per sampled row (primal) or column (dual)
    let line = if algorithm.is_dual() { f * df } else { f * nf };
    let mut flops = outer * (2.0 * m * m * line / pf + 4.0 * m * line / pf + m * m)
        + hf * (bf * bf * bf / 3.0);
    let mut words = outer * (m * m + m) * lg;
    let mut msgs = outer * 2.0 * lg;
    if !algorithm.is_dual() {
        // X y / n
        flops += 2.0 * f * df * nf / pf + df;
        words += df * lg;
        msgs += lg;
    }
    if layout != algorithm.natural_layout() && p > 1 {
        let moved = eta(s * b, p) * line;
        match model {
            AllToAllModel::SmallMessage => {
                words += outer * moved * lg;
                msgs += outer * lg;
            }
            AllToAllModel::LargeMessage => {
                words += outer * moved;
                msgs += outer * (pf - 1.0);
            }
        }
    }
    (flops, words, msgs)
}

fn formulas(algorithm: Algorithm) -> [&'static str; 3] {
    match algorithm {
        Algorithm::Cg => ["k f d n / P", "k d log P", "k log P"],
        Algorithm::Bcd => ["H b^2 f n / P + H b^3", "H b^2 log P", "H log P"],
        Algorithm::CaBcd => ["H b^2 s f n / P + H b^3", "H b^2 s log P", "(H / s) log P"],
        Algorithm::Bdcd => ["H' b'^2 f d / P + H' b'^3", "H' b'^2 log P", "H' log P"],
        Algorithm::CaBdcd => ["H' b'^2 s f d / P + H' b'^3", "H' b'^2 s log P", "(H' / s) log P"],
    }
}

/// Evaluates the leading-order cost expressions for `spec` and compares them
/// with the counters of a dry run (stopping checks off).
pub fn theoretical_costs(dataset: &Dataset, spec: &RunSpec) -> Result<CostReport, CliError> {
    let mut cfg = spec.solver_config(dataset)?;
    cfg.check_interval = CheckInterval::Never;
    cfg.record_interval = 0;
    cfg.record_gram_cond = false;
    let opts = spec.run_options(dataset);
    let layout = opts.resolved_layout(cfg.algorithm);
    let out = solve(&dataset.x, &dataset.y, &cfg, &opts)?;
    let (d, n, nnz) = (dataset.d(), dataset.n(), dataset.x.nnz());
    let (pf, pw, pl) = predicted_counters(
        cfg.algorithm,
        layout,
        spec.all_to_all,
        out.iterations,
        cfg.block_size,
        cfg.s,
        d,
        n,
        nnz,
        spec.ranks,
    );
    let [ff, fw, fl] = formulas(cfg.algorithm);
    let m = out.counters;
    Ok(CostReport {
        algorithm: cfg.algorithm,
        layout,
        ranks: spec.ranks,
        iterations: out.iterations,
        block_size: cfg.block_size,
        s: cfg.s,
        density: nnz as f64 / (d as f64 * n as f64).max(1.0),
        d,
        n,
        rows: vec![
            CostRow { quantity: "flops", formula: ff, predicted: pf, measured: m.flops },
            CostRow { quantity: "words", formula: fw, predicted: pw, measured: m.words },
            CostRow { quantity: "messages", formula: fl, predicted: pl, measured: m.messages },
        ],
        measured: m,
        predicted_time: predicted_time(&m, &spec.machine_params()?),
    })
}
