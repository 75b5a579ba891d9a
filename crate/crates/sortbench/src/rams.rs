//! Robust adaptive multi-level samplesort. Each level partitions the current
//! subcube's data into b*k buckets via sampled splitters with positional
//! tie-breaking, assigns contiguous bucket runs to k subcube groups with a
//! greedy balancer, and delivers the data either naively (whole buckets to
//! their owner PEs) or through deterministic message assignment that bounds
//! every PE's message count by O(k).

use rand::seq::index::sample as sample_indices;

use crate::collectives::{
    all_gather_merge_records, all_reduce_sum, prefix_sum_vec, sparse_exchange, Cube,
};
use crate::netsim::{Ctx, SimError, Word};

const PHASE_SAMPLE: u64 = 0x3000;

/// When to use deterministic message assignment for a level's delivery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmaMode {
    /// One all-reduce pre-scan per level; switch on when some PE would
    /// receive more than `4k` naive messages.
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone)]
pub struct AmsConfig {
    /// Levels of recursion; capped at log p.
    pub levels: usize,
    /// Target max imbalance: final load stays within (1+epsilon) of even.
    pub epsilon: f64,
    /// Positional tie-breaking of splitters and elements. Without it the
    /// algorithm collapses on heavily duplicated inputs.
    pub tie_break: bool,
    pub dma: DmaMode,
    /// Local samples drawn per splitter slot (c_s).
    pub oversampling: usize,
}

impl Default for AmsConfig {
    fn default() -> Self {
        AmsConfig {
            levels: 3,
            epsilon: 0.2,
            tie_break: true,
            dma: DmaMode::Auto,
            oversampling: 4,
        }
    }
}

/// Splitters per way: b = ceil(2 / ((1+eps)^(1/l) - 1)).
pub fn oversample_b(levels: usize, epsilon: f64) -> usize {
    let root = (1.0 + epsilon).powf(1.0 / levels as f64);
    // Nudge below the float noise so exact quotients do not round up.
    (2.0 / (root - 1.0) - 1e-9).ceil() as usize
}

/// Split the d cube dimensions into at most `levels` nearly equal chunks,
/// larger chunks first. The first level splits over the highest dimensions.
pub fn arity_schedule(d: u32, levels: usize) -> Vec<u32> {
    if d == 0 {
        return Vec::new();
    }
    let l = levels.clamp(1, d as usize) as u32;
    let base = d / l;
    let extra = d % l;
    (0..l).map(|i| base + u32::from(i < extra)).collect()
}

/// Per-level delivery statistics for one PE.
#[derive(Debug, Clone)]
pub struct LevelStats {
    /// Messages received from other PEs during the data exchange.
    pub recv_msgs: u64,
    pub dma_used: bool,
    /// Globally agreed group loads after assignment.
    pub max_group_load: u64,
    pub total: u64,
    pub groups: usize,
}

#[derive(Debug, Clone)]
pub struct RamsOutput {
    pub data: Vec<Word>,
    pub levels: Vec<LevelStats>,
}

/// Contiguous greedy assignment of `sizes` into `k` groups: cut j lands on
/// the prefix sum closest to j*total/k (ties to the earlier cut). Returns
/// k+1 cut indices into `sizes`.
pub fn assign_groups(sizes: &[u64], k: usize) -> Vec<usize> {
    let mut prefix = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0u64;
    prefix.push(0u64);
    for &s in sizes {
        acc += s;
        prefix.push(acc);
    }
    let total = acc as u128;
    let mut cuts = vec![0usize; k + 1];
    cuts[k] = sizes.len();
    for j in 1..k {
        let target = (j as u128 * total / k as u128) as u64;
        let lo = prefix.partition_point(|&x| x < target);
        let mut best = lo.min(sizes.len());
        if lo > 0 && target - prefix[lo - 1] <= prefix[best] - target {
            best = lo - 1;
        }
        cuts[j] = best.clamp(cuts[j - 1], sizes.len());
    }
    cuts
}

/// Compare the element triple (key, pe, index) against a splitter record.
fn elem_less(key: Word, pe: usize, idx: usize, rec: &[Word]) -> bool {
    if rec.len() == 1 {
        return key < rec[0];
    }
    (key, pe as u64, idx as u64) < (rec[0], rec[1], rec[2])
}

/// Bucket boundaries of locally sorted `a` under the sorted splitter
/// records: boundary t counts the elements below splitter t.
fn partition_boundaries(
    a: &[Word],
    pe: usize,
    width: usize,
    splitters: &[Word],
) -> Vec<usize> {
    let mut out = Vec::with_capacity(splitters.len() / width);
    for rec in splitters.chunks(width) {
        // Elements are sorted by (key, idx), so triple order is index order.
        let mut lo = *out.last().unwrap_or(&0);
        let mut hi = a.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if elem_less(a[mid], pe, mid, rec) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        out.push(lo);
    }
    out
}

struct GroupGeom {
    /// Low dims of the current cube kept by each group.
    group_bits: u32,
    base: usize,
}

impl GroupGeom {
    fn pe(&self, group: usize, slot: usize) -> usize {
        self.base | (group << self.group_bits) | slot
    }
}

/// One level's delivery plan: per-destination messages of raw keys.
/// `starts[t]..starts[t+1]` is bucket t's range in the local sorted data.
fn naive_messages(
    a: &[Word],
    starts: &[usize],
    cuts: &[usize],
    totals: &[u64],
    geom: &GroupGeom,
) -> Vec<(usize, Vec<Word>)> {
    let mut messages: Vec<(usize, Vec<Word>)> = Vec::new();
    for g in 0..cuts.len() - 1 {
        let slots = 1usize << geom.group_bits;
        // Buckets of one group are balanced over its PEs the same way the
        // groups themselves were cut.
        let inner = assign_groups(&totals[cuts[g]..cuts[g + 1]], slots);
        for s in 0..slots {
            let lo = starts[cuts[g] + inner[s]];
            let hi = starts[cuts[g] + inner[s + 1]];
            if hi > lo {
                messages.push((geom.pe(g, s), a[lo..hi].to_vec()));
            }
        }
    }
    messages
}

/// Deterministic message assignment: senders agree on receiver slots from
/// the word-offset prefix sums and their own cube rank, splitting payloads
/// at slot boundaries. A slot's rank window covers at most 2k senders and
/// about twice the even word share, so every PE receives O(k) messages
/// regardless of how the words are distributed over senders.
fn dma_messages(
    a: &[Word],
    starts: &[usize],
    cuts: &[usize],
    bucket_prefix: &[u64],
    totals: &[u64],
    rank: usize,
    senders: usize,
    geom: &GroupGeom,
) -> Vec<(usize, Vec<Word>)> {
    let k = cuts.len() - 1;
    let slots = 1u128 << geom.group_bits;
    let mut messages: Vec<(usize, Vec<Word>)> = Vec::new();
    for g in 0..k {
        let lo = starts[cuts[g]];
        let hi = starts[cuts[g + 1]];
        let c = (hi - lo) as u128;
        if c == 0 {
            continue;
        }
        // The group's payloads are laid out in sender-rank order; my word
        // offset is the sum of the lower ranks' bucket counts.
        let t_w: u64 = totals[cuts[g]..cuts[g + 1]].iter().sum();
        let off_w: u64 = bucket_prefix[cuts[g]..cuts[g + 1]].iter().sum();
        let (t_w, off_w) = (t_w as u128, off_w as u128);
        let (rank, senders) = (rank as u128, senders as u128);
        // slot(j) = floor((phi/2)·P) with phi = (off_w+j)/T + rank/S.
        let slot_of = |j: u128| -> usize {
            (((off_w + j) * senders + rank * t_w) * slots / (2 * t_w * senders)) as usize
        };
        let mut j = 0u128;
        while j < c {
            let s = slot_of(j);
            // Smallest j' with a later slot, by binary search (monotone).
            let (mut lo_j, mut hi_j) = (j + 1, c);
            while lo_j < hi_j {
                let mid = (lo_j + hi_j) / 2;
                if slot_of(mid) > s {
                    hi_j = mid;
                } else {
                    lo_j = mid + 1;
                }
            }
            let end = if slot_of(c - 1) > s { lo_j } else { c };
            let from = lo + j as usize;
            let to = lo + end as usize;
            messages.push((geom.pe(g, s), a[from..to].to_vec()));
            j = end;
        }
    }
    messages
}

/// Sort across the whole machine with `cfg.levels` rounds of k-way
/// partitioning. Returns this PE's slice of the globally sorted sequence
/// plus per-level delivery statistics.
pub fn rams_sort(ctx: &mut Ctx, mut a: Vec<Word>, cfg: &AmsConfig) -> Result<RamsOutput, SimError> {
    assert!(cfg.levels >= 1 && cfg.epsilon > 0.0 && cfg.oversampling >= 1);
    let schedule = arity_schedule(ctx.d(), cfg.levels);
    let b = oversample_b(schedule.len().max(1), cfg.epsilon);
    let width = if cfg.tie_break { 3 } else { 1 };
    let mut stats = Vec::with_capacity(schedule.len());
    let mut hi_dims = ctx.d();

    for (level, &di) in schedule.iter().enumerate() {
        let cube = Cube::low(ctx.pe(), hi_dims);
        let k = 1usize << di;
        let geom = GroupGeom {
            group_bits: hi_dims - di,
            base: ctx.pe() & !((1usize << hi_dims) - 1),
        };
        a.sort_unstable();
        let m = a.len();

        // Distinct random local positions, tagged for tie-breaking.
        let want = (cfg.oversampling * b * k).div_ceil(cube.size()).max(1);
        let mut rng = ctx.rng(PHASE_SAMPLE + level as u64);
        let mut picked = sample_indices(&mut rng, m, want.min(m)).into_vec();
        picked.sort_unstable();
        let mut local: Vec<Word> = Vec::with_capacity(picked.len() * width);
        for idx in picked {
            local.push(a[idx]);
            if cfg.tie_break {
                local.push(ctx.pe() as u64);
                local.push(idx as u64);
            }
        }

        let samples = all_gather_merge_records(ctx, &cube, width, local)?;
        let s_total = samples.len() / width;
        let ways = b * k;
        // Every ceil(j·S/(bk))-th sample; with fewer samples than slots the
        // degenerate input just uses them all.
        let splitters: Vec<Word> = if s_total >= ways {
            let mut out = Vec::with_capacity((ways - 1) * width);
            for j in 1..ways {
                let idx = (j * s_total).div_ceil(ways) - 1;
                out.extend_from_slice(&samples[idx * width..(idx + 1) * width]);
            }
            out
        } else {
            samples
        };

        let bounds = partition_boundaries(&a, ctx.pe(), width, &splitters);
        let buckets = splitters.len() / width + 1;
        let mut starts = Vec::with_capacity(buckets + 1);
        starts.push(0usize);
        starts.extend_from_slice(&bounds);
        starts.push(m);
        let counts: Vec<u64> = (0..buckets)
            .map(|t| (starts[t + 1] - starts[t]) as u64)
            .collect();
        let (bucket_prefix, totals) = prefix_sum_vec(ctx, &cube, counts.clone())?;
        let cuts = assign_groups(&totals, k);

        let group_load = |g: usize| totals[cuts[g]..cuts[g + 1]].iter().sum::<u64>();
        let loads: Vec<u64> = (0..k).map(group_load).collect();
        let total: u64 = loads.iter().sum();

        let naive = naive_messages(&a, &starts, &cuts, &totals, &geom);
        let use_dma = match cfg.dma {
            DmaMode::Always => true,
            DmaMode::Never => false,
            DmaMode::Auto => {
                let mut indeg = vec![0u64; cube.size()];
                for (dest, _) in &naive {
                    indeg[cube.rank_of(*dest)] += 1;
                }
                let indeg = all_reduce_sum(ctx, &cube, indeg)?;
                indeg.into_iter().max().unwrap_or(0) > 4 * k as u64
            }
        };
        let messages = if use_dma {
            dma_messages(
                &a,
                &starts,
                &cuts,
                &bucket_prefix,
                &totals,
                cube.rank_of(ctx.pe()),
                cube.size(),
                &geom,
            )
        } else {
            naive
        };

        let received = sparse_exchange(ctx, &cube, messages)?;
        let recv_msgs = received.iter().filter(|(src, _)| *src != ctx.pe()).count() as u64;
        a = Vec::with_capacity(received.iter().map(|(_, p)| p.len()).sum());
        for (_, payload) in received {
            a.extend_from_slice(&payload);
        }
        stats.push(LevelStats {
            recv_msgs,
            dma_used: use_dma,
            max_group_load: loads.iter().copied().max().unwrap_or(0),
            total,
            groups: k,
        });
        hi_dims -= di;
    }
    a.sort_unstable();
    Ok(RamsOutput { data: a, levels: stats })
}
