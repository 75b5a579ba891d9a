//! Benchmark harness: runs algorithm x instance x p x n/p grids on the
//! simulator, verifies every output, and renders byte-stable CSV. Also
//! hosts the median-error experiment and the size-based algorithm selector.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::baselines::{all_gather_merge_sort, bitonic_sort, gather_merge, simple_sample_sort};
use crate::instances::{
    generate, verify, InstanceName, InstanceSpec, NPerPe, OutputKind, SortReport,
};
use crate::median::{local_window, merge_windows, root_pick, DEFAULT_K};
use crate::netsim::{derived_rng, run_spmd, ClusterConfig, SimError};
use crate::rams::{rams_sort, AmsConfig, DmaMode};
use crate::rfis::{rfis_sort, RfisConfig};
use crate::rquick::{rquick_sort, RQuickConfig};

pub const DEFAULT_ALPHA: f64 = 1000.0;
pub const DEFAULT_BETA: f64 = 1.0;

/// Replicating collectors stay off cells where every PE would hold the
/// whole input and the total transcript would not fit in memory.
const REPLICATION_WORD_LIMIT: u64 = 1 << 28;

/// Benchmarkable algorithm variants. The suffixed ids are fixed A/B
/// configurations of the two robust algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Algo {
    Gather,
    GatherAll,
    Bitonic,
    Ssort,
    Rfis,
    Rquick,
    RquickNtb,
    RquickNoShuffle,
    Rams,
    RamsL1,
    RamsL2,
    RamsNtb,
    RamsDma,
    RamsNoDma,
}

pub const ALL_ALGOS: [Algo; 14] = [
    Algo::Gather,
    Algo::GatherAll,
    Algo::Bitonic,
    Algo::Ssort,
    Algo::Rfis,
    Algo::Rquick,
    Algo::RquickNtb,
    Algo::RquickNoShuffle,
    Algo::Rams,
    Algo::RamsL1,
    Algo::RamsL2,
    Algo::RamsNtb,
    Algo::RamsDma,
    Algo::RamsNoDma,
];

impl Algo {
    pub fn id(&self) -> &'static str {
        match self {
            Algo::Gather => "gather",
            Algo::GatherAll => "gatherall",
            Algo::Bitonic => "bitonic",
            Algo::Ssort => "ssort",
            Algo::Rfis => "rfis",
            Algo::Rquick => "rquick",
            Algo::RquickNtb => "rquick-ntb",
            Algo::RquickNoShuffle => "rquick-noshuffle",
            Algo::Rams => "rams",
            Algo::RamsL1 => "rams-l1",
            Algo::RamsL2 => "rams-l2",
            Algo::RamsNtb => "rams-ntb",
            Algo::RamsDma => "rams-dma",
            Algo::RamsNoDma => "rams-nodma",
        }
    }

    pub fn output_kind(&self) -> OutputKind {
        match self {
            Algo::GatherAll => OutputKind::Replicated,
            _ => OutputKind::Partitioned,
        }
    }

    fn rquick_config(&self) -> RQuickConfig {
        match self {
            Algo::RquickNtb => RQuickConfig { tie_break: false, ..RQuickConfig::default() },
            Algo::RquickNoShuffle => RQuickConfig { shuffle: false, ..RQuickConfig::default() },
            _ => RQuickConfig::default(),
        }
    }

    fn rams_config(&self) -> AmsConfig {
        match self {
            Algo::RamsL1 => AmsConfig { levels: 1, ..AmsConfig::default() },
            Algo::RamsL2 => AmsConfig { levels: 2, ..AmsConfig::default() },
            Algo::RamsNtb => AmsConfig { tie_break: false, ..AmsConfig::default() },
            Algo::RamsDma => AmsConfig { dma: DmaMode::Always, ..AmsConfig::default() },
            Algo::RamsNoDma => AmsConfig { dma: DmaMode::Never, ..AmsConfig::default() },
            _ => AmsConfig::default(),
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_ALGOS.into_iter().find(|a| a.id() == s).ok_or_else(|| {
            let ids: Vec<&str> = ALL_ALGOS.iter().map(|a| a.id()).collect();
            format!("unknown algorithm {s:?}; valid ids: {}", ids.join(", "))
        })
    }
}

#[derive(Debug, Clone)]
pub struct GridConfig {
    pub algos: Vec<Algo>,
    pub instances: Vec<InstanceName>,
    pub log_ps: Vec<u32>,
    pub n_per_pes: Vec<NPerPe>,
    pub reps: usize,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentRow {
    pub algo: Algo,
    pub instance: InstanceName,
    pub p: usize,
    pub n_per_pe: NPerPe,
    pub seed: u64,
    pub rep: usize,
    pub warmup: bool,
    pub status: String,
    pub report: Option<SortReport>,
}

/// Run one algorithm on one generated instance. `Err` is reserved for
/// simulator faults; expected per-cell refusals come back as a status.
fn run_cell(
    algo: Algo,
    spec: &InstanceSpec,
    d: u32,
    alpha: f64,
    beta: f64,
) -> Result<(String, Option<SortReport>), SimError> {
    let p = 1usize << d;
    let total = spec.n_per_pe.total(p) as u64;
    if algo == Algo::GatherAll && total.saturating_mul(p as u64) > REPLICATION_WORD_LIMIT {
        return Ok(("skipped".into(), None));
    }
    let inputs: Vec<Vec<u64>> = (0..p).map(|pe| generate(spec, pe, p)).collect();
    let cfg = ClusterConfig::new(d, alpha, beta, spec.seed)?;
    let outcome = match algo {
        Algo::Gather => run_spmd(&cfg, inputs.clone(), |ctx, a| gather_merge(ctx, a)),
        Algo::GatherAll => run_spmd(&cfg, inputs.clone(), |ctx, a| all_gather_merge_sort(ctx, a)),
        Algo::Bitonic => run_spmd(&cfg, inputs.clone(), |ctx, a| bitonic_sort(ctx, a)),
        Algo::Ssort => run_spmd(&cfg, inputs.clone(), |ctx, a| simple_sample_sort(ctx, a, 1)),
        Algo::Rfis => {
            let rc = RfisConfig::default();
            run_spmd(&cfg, inputs.clone(), move |ctx, a| rfis_sort(ctx, a, &rc))
        }
        Algo::Rquick | Algo::RquickNtb | Algo::RquickNoShuffle => {
            let rc = algo.rquick_config();
            run_spmd(&cfg, inputs.clone(), move |ctx, a| rquick_sort(ctx, a, &rc))
        }
        _ => {
            let ac = algo.rams_config();
            run_spmd(&cfg, inputs.clone(), move |ctx, a| {
                rams_sort(ctx, a, &ac).map(|o| o.data)
            })
        }
    };
    match outcome {
        Ok((outputs, ledger)) => {
            let verdict = verify(&inputs, &outputs, algo.output_kind());
            let report = SortReport::new(verdict, &ledger, alpha, beta);
            Ok(("ok".into(), Some(report)))
        }
        Err(SimError::Unsupported(_)) => Ok(("unsupported".into(), None)),
        Err(SimError::Deadlock { .. }) => Ok(("deadlock".into(), None)),
        Err(e) => Err(e),
    }
}

/// One row per (cell, repetition); repetition 0 is flagged as warmup so
/// aggregation can drop it. Cell failures become status rows, never aborts.
pub fn run_experiment(grid: &GridConfig) -> Result<Vec<ExperimentRow>, SimError> {
    let mut rows = Vec::new();
    for &algo in &grid.algos {
        for &instance in &grid.instances {
            for &d in &grid.log_ps {
                for &npp in &grid.n_per_pes {
                    for rep in 0..grid.reps {
                        let seed = grid.seed.wrapping_add(rep as u64);
                        let spec = InstanceSpec::new(instance, npp, seed);
                        let (status, report) =
                            run_cell(algo, &spec, d, grid.alpha, grid.beta)?;
                        rows.push(ExperimentRow {
                            algo,
                            instance,
                            p: 1usize << d,
                            n_per_pe: npp,
                            seed,
                            rep,
                            warmup: rep == 0,
                            status,
                            report,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Floats are rendered with 6 significant digits, switching to scientific
/// notation outside [1e-4, 1e6). Stable across runs by construction.
pub fn fmt_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mut exp = x.abs().log10().floor() as i32;
    // log10 can land one off at power-of-ten boundaries.
    if x.abs() / 10f64.powi(exp) >= 10.0 {
        exp += 1;
    } else if x.abs() / 10f64.powi(exp) < 1.0 {
        exp -= 1;
    }
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if !(-4..6).contains(&exp) {
        let mut m = x / 10f64.powi(exp);
        let mut e = exp;
        if format!("{:.5}", m.abs()).starts_with("10") {
            m /= 10.0;
            e += 1;
        }
        format!("{}e{e}", trim(format!("{m:.5}")))
    } else {
        let prec = (5 - exp).max(0) as usize;
        trim(format!("{x:.prec$}"))
    }
}

pub const CSV_HEADER: &str = "algo,instance,p,n_per_pe,seed,rep,warmup,status,sorted_ok,\
permutation_ok,imbalance,startups_max,words_max,modeled_time,wall_time";

fn render_row(r: &ExperimentRow) -> String {
    let (sorted_ok, permutation_ok, imbalance, startups, words, modeled) = match &r.report {
        Some(rep) => (
            rep.sorted_ok as u8,
            rep.permutation_ok as u8,
            fmt_g6(rep.imbalance),
            rep.startups_max,
            rep.words_max,
            fmt_g6(rep.modeled_time),
        ),
        None => (0, 0, "0".into(), 0, 0, "0".into()),
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.algo,
        r.instance,
        r.p,
        r.n_per_pe,
        r.seed,
        r.rep,
        r.warmup as u8,
        r.status,
        sorted_ok,
        permutation_ok,
        imbalance,
        startups,
        words,
        modeled,
        // wall_time stays 0: the harness reports modeled cost only, so the
        // CSV is byte-stable across machines and runs.
        0,
    )
}

/// Header plus lexicographically ordered rows; byte-identical for
/// identical grids and seeds.
pub fn rows_to_csv(rows: &[ExperimentRow]) -> String {
    let mut lines: Vec<String> = rows.iter().map(render_row).collect();
    lines.sort_unstable();
    let mut out = String::with_capacity(lines.len() * 64 + CSV_HEADER.len() + 1);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

/// Fastest algorithm for n total elements on p = 2^log_p PEs, by the
/// measured crossover thresholds on n/p.
pub fn select_algorithm(n: u64, log_p: u32) -> Algo {
    let p = 1u128 << log_p;
    let n = n as u128;
    if 27 * n <= p {
        Algo::Gather
    } else if n <= 4 * p {
        Algo::Rfis
    } else if n <= (1 << 14) * p {
        Algo::Rquick
    } else {
        Algo::Rams
    }
}

#[derive(Debug, Clone)]
pub struct MedianErrorRow {
    pub n: u64,
    pub trials: usize,
    pub max_error: f64,
    pub mean_rank: f64,
    pub var_rank: f64,
    /// Empirical fit for the binary window tree.
    pub bound: f64,
    /// Ternary-tree reference curve, for comparison only.
    pub reference: f64,
}

/// Rank error of the window-tree median estimator on a random permutation
/// of 0..n: leaves are sorted chunks of k elements, inner nodes merge
/// windows pairwise, the root picks around the center. Elements are their
/// own ranks, so the returned key is the achieved rank.
pub fn median_error_trial(n: u64, k: usize, rng: &mut impl Rng) -> u64 {
    let mut vals: Vec<u64> = (0..n).collect();
    vals.shuffle(rng);
    let mut windows: Vec<_> = vals
        .chunks(k)
        .map(|c| {
            let mut c = c.to_vec();
            c.sort_unstable();
            local_window(&c, k, rng.gen())
        })
        .collect();
    while windows.len() > 1 {
        let mut next = Vec::with_capacity(windows.len() / 2 + 1);
        let mut it = windows.chunks_exact(2);
        for pair in &mut it {
            next.push(merge_windows(&pair[0], &pair[1], k, rng.gen()));
        }
        next.extend(it.remainder().iter().cloned());
        windows = next;
    }
    root_pick(&windows[0], k, rng.gen()).expect("nonempty input")
}

pub fn median_error_experiment(ns: &[u64], trials: usize, seed: u64) -> Vec<MedianErrorRow> {
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut max_error: f64 = 0.0;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for trial in 0..trials {
            let mut rng = derived_rng(seed, n, trial as u64);
            let r = median_error_trial(n, DEFAULT_K, &mut rng) as f64;
            max_error = max_error.max((r / (n as f64 - 1.0) - 0.5).abs());
            sum += r;
            sumsq += r * r;
        }
        let mean_rank = sum / trials as f64;
        rows.push(MedianErrorRow {
            n,
            trials,
            max_error,
            mean_rank,
            var_rank: sumsq / trials as f64 - mean_rank * mean_rank,
            bound: 1.44 * (n as f64).powf(-0.39),
            reference: 2.0 * (n as f64).powf(-0.369),
        });
    }
    rows
}

pub const MEDIAN_CSV_HEADER: &str = "n,trials,max_error,mean_rank,var_rank,bound,reference";

pub fn median_rows_to_csv(rows: &[MedianErrorRow]) -> String {
    let mut lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.n,
                r.trials,
                fmt_g6(r.max_error),
                fmt_g6(r.mean_rank),
                fmt_g6(r.var_rank),
                fmt_g6(r.bound),
                fmt_g6(r.reference),
            )
        })
        .collect();
    lines.sort_unstable();
    let mut out = String::from(MEDIAN_CSV_HEADER);
    out.push('\n');
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}
