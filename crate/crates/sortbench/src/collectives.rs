//! Hypercube-pattern communication primitives shared by all sorting
//! algorithms.
//!
//! All collectives operate inside a [`Cube`]: a set of PEs spanned by a list
//! of id bit positions with all other bits fixed. The full machine, the
//! low-dimensional subcubes of quicksort, and the row/column groups of the
//! grid ranking algorithm are all cubes over different dimension lists.
//!
//! `all_reduce`, `all_gather_merge` and `random_shuffle` use exactly `d`
//! point-to-point rounds per PE, routing uses at most `d` sends per PE, where
//! `d` is the cube dimension.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::netsim::{Ctx, SimError, Word, TAG_COLL, TAG_DATA};

/// A `k`-dimensional subcube: the set of PEs whose ids agree outside the
/// `dims` bit positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cube {
    dims: Vec<u32>,
    base: usize,
}

impl Cube {
    /// The whole machine of `2^d` PEs.
    pub fn full(d: u32) -> Cube {
        Cube { dims: (0..d).collect(), base: 0 }
    }

    /// The cube spanned by the given id bits, containing `pe`.
    pub fn from_dims(pe: usize, dims: Vec<u32>) -> Cube {
        debug_assert!(dims.windows(2).all(|w| w[0] < w[1]));
        let mask: usize = dims.iter().map(|&b| 1usize << b).sum();
        Cube { base: pe & !mask, dims }
    }

    /// The `j`-dimensional subcube over id bits `0..j` containing `pe`.
    pub fn low(pe: usize, j: u32) -> Cube {
        Cube::from_dims(pe, (0..j).collect())
    }

    /// Number of spanned dimensions.
    pub fn dim(&self) -> u32 {
        self.dims.len() as u32
    }

    pub fn size(&self) -> usize {
        1 << self.dims.len()
    }

    pub fn contains(&self, pe: usize) -> bool {
        let mask: usize = self.dims.iter().map(|&b| 1usize << b).sum();
        pe & !mask == self.base
    }

    /// Position of `pe` within the cube: its id bits at `dims`, packed.
    pub fn rank_of(&self, pe: usize) -> usize {
        let mut r = 0;
        for (j, &b) in self.dims.iter().enumerate() {
            r |= ((pe >> b) & 1) << j;
        }
        r
    }

    /// PE id at cube position `rank`.
    pub fn pe_at(&self, rank: usize) -> usize {
        let mut pe = self.base;
        for (j, &b) in self.dims.iter().enumerate() {
            pe |= ((rank >> j) & 1) << b;
        }
        pe
    }

    /// Partner of `pe` across cube dimension `j`.
    pub fn partner(&self, pe: usize, j: u32) -> usize {
        pe ^ (1 << self.dims[j as usize])
    }

    pub fn members(&self) -> Vec<usize> {
        (0..self.size()).map(|r| self.pe_at(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    LowToHigh,
    HighToLow,
}

/// The hypercube design pattern: `dim` steps, pairing this PE with its
/// partner across one dimension per step.
pub fn hypercube_loop<F>(
    ctx: &mut Ctx,
    cube: &Cube,
    direction: Direction,
    mut step: F,
) -> Result<(), SimError>
where
    F: FnMut(&mut Ctx, u32, usize) -> Result<(), SimError>,
{
    let d = cube.dim();
    let order: Vec<u32> = match direction {
        Direction::LowToHigh => (0..d).collect(),
        Direction::HighToLow => (0..d).rev().collect(),
    };
    for j in order {
        let partner = cube.partner(ctx.pe(), j);
        step(ctx, j, partner)?;
    }
    Ok(())
}

/// Butterfly all-reduce: every PE ends with `combine` folded over all cube
/// members' values in ascending rank order. `dim` startups per PE.
pub fn all_reduce<F>(
    ctx: &mut Ctx,
    cube: &Cube,
    mut value: Vec<Word>,
    combine: F,
) -> Result<Vec<Word>, SimError>
where
    F: Fn(&[Word], &[Word]) -> Vec<Word>,
{
    let my_rank = cube.rank_of(ctx.pe());
    for j in 0..cube.dim() {
        let partner = cube.partner(ctx.pe(), j);
        let incoming = ctx.exchange_tagged(partner, TAG_COLL, value.clone())?;
        if incoming.len() != value.len() {
            return Err(SimError::ContractViolation(format!(
                "all_reduce shape mismatch: {} vs {} words",
                value.len(),
                incoming.len()
            )));
        }
        value = if my_rank < cube.rank_of(partner) {
            combine(&value, &incoming)
        } else {
            combine(&incoming, &value)
        };
    }
    Ok(value)
}

pub fn all_reduce_sum(ctx: &mut Ctx, cube: &Cube, value: Vec<u64>) -> Result<Vec<u64>, SimError> {
    all_reduce(ctx, cube, value, |a, b| a.iter().zip(b).map(|(x, y)| x + y).collect())
}

/// Synchronizes all cube members: no PE returns before every member entered.
pub fn barrier(ctx: &mut Ctx, cube: &Cube) -> Result<(), SimError> {
    all_reduce(ctx, cube, Vec::new(), |_, _| Vec::new()).map(|_| ())
}

/// Merge two sorted runs; on equal keys elements of `lo` precede elements of
/// `hi`.
pub fn merge_lo_hi(lo: &[Word], hi: &[Word]) -> Vec<Word> {
    let mut out = Vec::with_capacity(lo.len() + hi.len());
    let (mut i, mut j) = (0, 0);
    while i < lo.len() && j < hi.len() {
        if lo[i] <= hi[j] {
            out.push(lo[i]);
            i += 1;
        } else {
            out.push(hi[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&lo[i..]);
    out.extend_from_slice(&hi[j..]);
    out
}

/// Result of [`all_gather_merge`]: the global multiset union of all locals,
/// kept as three sorted runs by origin side relative to this PE's cube rank.
///
/// Each run is ordered by (key, origin rank, origin position), so the
/// three-way merge [`GatheredRuns::merged`] is the same sequence on every
/// member of the cube.
#[derive(Debug, Clone, Default)]
pub struct GatheredRuns {
    pub lower: Vec<Word>,
    pub own: Vec<Word>,
    pub higher: Vec<Word>,
}

impl GatheredRuns {
    pub fn total_len(&self) -> usize {
        self.lower.len() + self.own.len() + self.higher.len()
    }

    /// The full sorted sequence; ties ordered lower-origin first.
    pub fn merged(&self) -> Vec<Word> {
        merge_lo_hi(&merge_lo_hi(&self.lower, &self.own), &self.higher)
    }
}

/// All-gather with merging: every cube member ends with the sorted union of
/// all members' locals, split by origin side. `dim` startups per PE.
pub fn all_gather_merge(ctx: &mut Ctx, cube: &Cube, a: Vec<Word>) -> Result<GatheredRuns, SimError> {
    if a.windows(2).any(|w| w[0] > w[1]) {
        return Err(SimError::ContractViolation(
            "all_gather_merge requires a sorted local sequence".into(),
        ));
    }
    let my_rank = cube.rank_of(ctx.pe());
    let mut runs = GatheredRuns { lower: Vec::new(), own: a, higher: Vec::new() };
    for j in 0..cube.dim() {
        let partner = cube.partner(ctx.pe(), j);
        let incoming = ctx.exchange_tagged(partner, TAG_COLL, runs.merged())?;
        // The incoming batch covers partner's whole rank-j half, so every
        // origin in it is on one side of every origin held so far.
        if cube.rank_of(partner) > my_rank {
            runs.higher = merge_lo_hi(&runs.higher, &incoming);
        } else {
            runs.lower = merge_lo_hi(&incoming, &runs.lower);
        }
    }
    Ok(runs)
}

fn rec_less(a: &[Word], b: &[Word]) -> bool {
    a < b
}

/// Merge two runs of fixed-width records in lexicographic record order; on
/// equal records elements of `lo` precede elements of `hi`.
pub fn merge_records_lo_hi(width: usize, lo: &[Word], hi: &[Word]) -> Vec<Word> {
    debug_assert!(lo.len() % width == 0 && hi.len() % width == 0);
    let mut out = Vec::with_capacity(lo.len() + hi.len());
    let (mut i, mut j) = (0, 0);
    while i < lo.len() && j < hi.len() {
        if rec_less(&hi[j..j + width], &lo[i..i + width]) {
            out.extend_from_slice(&hi[j..j + width]);
            j += width;
        } else {
            out.extend_from_slice(&lo[i..i + width]);
            i += width;
        }
    }
    out.extend_from_slice(&lo[i..]);
    out.extend_from_slice(&hi[j..]);
    out
}

/// Sort a flat buffer of fixed-width records lexicographically.
pub fn sort_records(width: usize, recs: &[Word]) -> Vec<Word> {
    let mut chunks: Vec<&[Word]> = recs.chunks(width).collect();
    chunks.sort_unstable();
    let mut out = Vec::with_capacity(recs.len());
    for c in chunks {
        out.extend_from_slice(c);
    }
    out
}

/// All-gather with merging over fixed-width records: every cube member ends
/// with the lexicographically sorted union of all members' records. `dim`
/// startups per PE.
pub fn all_gather_merge_records(
    ctx: &mut Ctx,
    cube: &Cube,
    width: usize,
    recs: Vec<Word>,
) -> Result<Vec<Word>, SimError> {
    let my_rank = cube.rank_of(ctx.pe());
    let mut all = recs;
    debug_assert!(all
        .chunks(width)
        .zip(all.chunks(width).skip(1))
        .all(|(a, b)| !rec_less(b, a)));
    for j in 0..cube.dim() {
        let partner = cube.partner(ctx.pe(), j);
        let incoming = ctx.exchange_tagged(partner, TAG_COLL, all.clone())?;
        all = if cube.rank_of(partner) > my_rank {
            merge_records_lo_hi(width, &all, &incoming)
        } else {
            merge_records_lo_hi(width, &incoming, &all)
        };
    }
    Ok(all)
}

/// Route fixed-width records to their destinations by high-to-low bit
/// fixing. Each record is `width ≥ 2` words, word 0 holding the destination
/// PE id. At most `dim` sends per PE; arrival order is deterministic but
/// unspecified.
pub fn route_records(
    ctx: &mut Ctx,
    cube: &Cube,
    width: usize,
    mut records: Vec<Word>,
) -> Result<Vec<Word>, SimError> {
    assert!(width >= 2, "records need a destination word and a payload");
    assert_eq!(records.len() % width, 0);
    for rec in records.chunks(width) {
        if !cube.contains(rec[0] as usize) {
            return Err(SimError::ContractViolation(format!(
                "route destination {} outside the cube",
                rec[0]
            )));
        }
    }
    for j in (0..cube.dim()).rev() {
        let bit = 1u64 << cube.dims[j as usize];
        let my_side = ctx.pe() as u64 & bit;
        let mut keep = Vec::with_capacity(records.len());
        let mut send = Vec::new();
        for rec in records.chunks(width) {
            if rec[0] & bit == my_side {
                keep.extend_from_slice(rec);
            } else {
                send.extend_from_slice(rec);
            }
        }
        let partner = cube.partner(ctx.pe(), j);
        let incoming = ctx.exchange_tagged(partner, TAG_COLL, send)?;
        records = keep;
        records.extend_from_slice(&incoming);
    }
    Ok(records)
}

/// Randomized redistribution: in each of `dim` rounds the PE splits its
/// holdings into two random halves and trades one with its partner. With an
/// odd count, a fair coin decides which half gets the extra element.
pub fn random_shuffle(
    ctx: &mut Ctx,
    cube: &Cube,
    mut a: Vec<Word>,
    phase: u64,
) -> Result<Vec<Word>, SimError> {
    let mut rng = ctx.rng(phase);
    for j in 0..cube.dim() {
        a.shuffle(&mut rng);
        let m = a.len();
        let send_count = if m % 2 == 0 {
            m / 2
        } else {
            m / 2 + rng.gen_range(0..2usize)
        };
        let send_half = a.split_off(m - send_count);
        let partner = cube.partner(ctx.pe(), j);
        let incoming = ctx.exchange_tagged(partner, TAG_COLL, send_half)?;
        a.extend_from_slice(&incoming);
    }
    Ok(a)
}

/// Exclusive prefix sums over cube rank order, elementwise on a vector.
/// Returns (prefix, global total). `dim` startups per PE.
pub fn prefix_sum_vec(
    ctx: &mut Ctx,
    cube: &Cube,
    values: Vec<u64>,
) -> Result<(Vec<u64>, Vec<u64>), SimError> {
    let my_rank = cube.rank_of(ctx.pe());
    let mut prefix = vec![0u64; values.len()];
    let mut total = values;
    for j in 0..cube.dim() {
        let partner = cube.partner(ctx.pe(), j);
        let incoming = ctx.exchange_tagged(partner, TAG_COLL, total.clone())?;
        if incoming.len() != total.len() {
            return Err(SimError::ContractViolation("prefix_sum shape mismatch".into()));
        }
        if cube.rank_of(partner) < my_rank {
            for (p, x) in prefix.iter_mut().zip(&incoming) {
                *p += x;
            }
        }
        for (t, x) in total.iter_mut().zip(&incoming) {
            *t += x;
        }
    }
    Ok((prefix, total))
}

/// Exclusive prefix sum of a single counter.
pub fn prefix_sum(ctx: &mut Ctx, cube: &Cube, value: u64) -> Result<(u64, u64), SimError> {
    let (p, t) = prefix_sum_vec(ctx, cube, vec![value])?;
    Ok((p[0], t[0]))
}

/// Binomial-tree reduction to cube rank 0. Returns `Some(folded)` there,
/// `None` elsewhere. Values are folded in ascending rank order. Every PE
/// sends at most once; rank 0 receives `dim` messages.
pub fn reduce_binomial<F>(
    ctx: &mut Ctx,
    cube: &Cube,
    value: Vec<Word>,
    mut combine: F,
) -> Result<Option<Vec<Word>>, SimError>
where
    F: FnMut(&[Word], &[Word]) -> Vec<Word>,
{
    let rank = cube.rank_of(ctx.pe());
    let mut value = value;
    for j in 0..cube.dim() {
        let span = 1usize << (j + 1);
        if rank % span == 0 {
            let src = cube.pe_at(rank + (1 << j));
            let incoming = ctx.recv_tagged(src, TAG_COLL)?;
            value = combine(&value, &incoming);
        } else if rank % span == 1 << j {
            let dest = cube.pe_at(rank - (1 << j));
            ctx.send_tagged(dest, TAG_COLL, value)?;
            return Ok(None);
        }
    }
    Ok(Some(value))
}

/// Binomial-tree broadcast from cube rank 0, which must pass `Some(value)`;
/// all other PEs pass `None` and receive the value.
pub fn broadcast_binomial(
    ctx: &mut Ctx,
    cube: &Cube,
    value: Option<Vec<Word>>,
) -> Result<Vec<Word>, SimError> {
    let rank = cube.rank_of(ctx.pe());
    if (rank == 0) != value.is_some() {
        return Err(SimError::ContractViolation(
            "broadcast value must be supplied exactly at cube rank 0".into(),
        ));
    }
    let mut value = value;
    let recv_round = if rank == 0 { None } else { Some(rank.trailing_zeros()) };
    for j in (0..cube.dim()).rev() {
        if let Some(b) = recv_round {
            if j == b {
                let src = cube.pe_at(rank - (1 << b));
                value = Some(ctx.recv_tagged(src, TAG_COLL)?);
            }
            if j >= b {
                continue;
            }
        }
        let dest_rank = rank + (1 << j);
        if rank % (1usize << (j + 1)) == 0 && dest_rank < cube.size() {
            ctx.send_tagged(cube.pe_at(dest_rank), TAG_COLL, value.clone().unwrap())?;
        }
    }
    Ok(value.unwrap())
}

/// Sparse data exchange across the cube: deliver point-to-point messages
/// whose receivers do not know their in-degree. All cube members must call
/// this collectively. Received messages are returned sorted by source PE,
/// preserving per-source send order.
pub fn sparse_exchange(
    ctx: &mut Ctx,
    cube: &Cube,
    messages: Vec<(usize, Vec<Word>)>,
) -> Result<Vec<(usize, Vec<Word>)>, SimError> {
    // Every payload carries the sender's round number. A fast member may
    // race ahead into the next collective round and its data can land in a
    // slow member's drain below; the round word lets the receiver hold such
    // messages back for its own next round instead of paying a second
    // release barrier. Sound as long as matching calls pair up globally,
    // which the SPMD algorithms here guarantee.
    let epoch = ctx.data_epoch;
    ctx.data_epoch += 1;
    let mut to_self = Vec::new();
    for (dest, payload) in messages {
        if !cube.contains(dest) {
            return Err(SimError::ContractViolation(format!(
                "sparse_exchange destination {dest} outside the cube"
            )));
        }
        if dest == ctx.pe() {
            to_self.push((dest, payload));
        } else {
            let mut framed = Vec::with_capacity(payload.len() + 1);
            framed.push(epoch);
            framed.extend_from_slice(&payload);
            ctx.send_tagged(dest, TAG_DATA, framed)?;
        }
    }
    // Exiting the barrier implies every member has entered it, so all data
    // sends of this round are enqueued and the drain below sees them all.
    barrier(ctx, cube)?;
    let mut received = Vec::new();
    let stash = std::mem::take(&mut ctx.data_stash);
    for (e, src, payload) in stash {
        if e == epoch {
            received.push((src, payload));
        } else {
            ctx.data_stash.push((e, src, payload));
        }
    }
    for (src, mut framed) in ctx.drain_tagged(TAG_DATA) {
        let e = framed[0];
        framed.remove(0);
        if e == epoch {
            received.push((src, framed));
        } else {
            ctx.data_stash.push((e, src, framed));
        }
    }
    received.extend(to_self);
    received.sort_by_key(|(src, _)| *src);
    Ok(received)
}
