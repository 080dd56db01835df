//! The planted benchmark grid and its CSV report.

use std::fmt::Write as _;
use std::time::Duration;

use crate::driver::{solve, SolverParams};
use crate::error::Result;
use crate::instance::{generate_planted, PlantedSpec};

pub const DEFAULT_SEED: u64 = 20_240_683;
pub const SCHEMA_VERSION: u32 = 1;

const SIZES: [(usize, usize); 10] = [
    (10, 10),
    (15, 10),
    (15, 15),
    (20, 10),
    (20, 15),
    (20, 20),
    (25, 10),
    (25, 15),
    (25, 20),
    (25, 25),
];
const KS: [usize; 3] = [2, 3, 4];
pub const SIGMAS: [f64; 2] = [0.1, 0.3];

/// All 60 instances, noise level outermost, then `n`, `m`, `k`. Instance
/// `i` uses seed `base_seed + i`.
pub fn grid(base_seed: u64) -> Vec<PlantedSpec> {
    let mut out = Vec::with_capacity(60);
    for sigma in SIGMAS {
        for (n, m) in SIZES {
            for k in KS {
                let seed = base_seed + out.len() as u64;
                out.push(PlantedSpec { n, m, k, sigma, seed });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub spec: PlantedSpec,
    pub cp: usize,
    pub nodes: usize,
    pub lb: f64,
    pub ub: f64,
    pub gap_pct: f64,
    pub status: &'static str,
    pub time: Duration,
}

pub fn run_instance(spec: &PlantedSpec, params: &SolverParams) -> Result<BenchRow> {
    let (a, _) = generate_planted(spec)?;
    let params = SolverParams { seed: spec.seed, ..params.clone() };
    let r = solve(&a, spec.k, &params)?;
    Ok(BenchRow {
        spec: *spec,
        cp: r.cp_rounds_root,
        nodes: r.nodes,
        lb: r.lb,
        ub: r.ub,
        gap_pct: 100.0 * r.gap,
        status: r.termination.as_str(),
        time: r.wall_time,
    })
}

/// Runs every spec in order; `progress` sees each finished row.
pub fn run(specs: &[PlantedSpec], params: &SolverParams, mut progress: impl FnMut(&BenchRow)) -> Result<Vec<BenchRow>> {
    specs
        .iter()
        .map(|s| {
            let row = run_instance(s, params)?;
            progress(&row);
            Ok(row)
        })
        .collect()
}

/// CSV with a schema line. Wall times are included only on request so
/// that the default output is reproducible byte for byte.
pub fn to_csv(rows: &[BenchRow], with_time: bool) -> String {
    let mut out = format!("# schema_version={SCHEMA_VERSION}\n");
    out.push_str("instance,n,m,k,sigma,seed,cp,nodes,lb,ub,gap_pct,status");
    if with_time {
        out.push_str(",time_s");
    }
    out.push('\n');
    for r in rows {
        let s = &r.spec;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{:.9},{:.9},{:.6},{}",
            s.name(),
            s.n,
            s.m,
            s.k,
            s.sigma,
            s.seed,
            r.cp,
            r.nodes,
            r.lb,
            r.ub,
            r.gap_pct,
            r.status
        );
        if with_time {
            let _ = write!(out, ",{:.3}", r.time.as_secs_f64());
        }
        out.push('\n');
    }
    out
}
