//! Baseline sorting algorithms: binomial-tree gather-merge, all-gather-merge
//! sort, bitonic sort on blocks, and a simple p-way samplesort. These are the
//! comparison points; none of them is robust against the adversarial
//! instances the robust algorithms target.

use rand::seq::SliceRandom;

use crate::collectives::{
    all_reduce, broadcast_binomial, merge_lo_hi, reduce_binomial, sparse_exchange, Cube,
};
use crate::netsim::{Ctx, SimError, Word, TAG_COLL};

/// Gather all elements onto PE 0 in sorted order via a binomial tree with
/// pairwise merging. All other PEs end empty. Deliberately ignores the
/// balance constraint.
pub fn gather_merge(ctx: &mut Ctx, mut a: Vec<Word>) -> Result<Vec<Word>, SimError> {
    a.sort_unstable();
    let cube = Cube::full(ctx.d());
    let folded = reduce_binomial(ctx, &cube, a, |lo, hi| merge_lo_hi(lo, hi))?;
    Ok(folded.unwrap_or_default())
}

/// Every PE ends with the full globally sorted sequence.
pub fn all_gather_merge_sort(ctx: &mut Ctx, mut a: Vec<Word>) -> Result<Vec<Word>, SimError> {
    a.sort_unstable();
    let cube = Cube::full(ctx.d());
    let runs = crate::collectives::all_gather_merge(ctx, &cube, a)?;
    Ok(runs.merged())
}

/// Bitonic sort with block merge-split: local sort, then `d(d+1)/2` rounds
/// where partners exchange whole blocks and keep the lower or upper half of
/// the merge. Requires equal nonzero local counts on all PEs.
pub fn bitonic_sort(ctx: &mut Ctx, mut a: Vec<Word>) -> Result<Vec<Word>, SimError> {
    let cube = Cube::full(ctx.d());
    let m = a.len() as u64;
    let minmax = all_reduce(ctx, &cube, vec![m, m], |x, y| {
        vec![x[0].min(y[0]), x[1].max(y[1])]
    })?;
    if minmax[0] != minmax[1] || minmax[0] == 0 {
        return Err(SimError::Unsupported(format!(
            "bitonic sort needs equal nonzero local counts, got {} to {}",
            minmax[0], minmax[1]
        )));
    }
    a.sort_unstable();
    let m = a.len();
    let pe = ctx.pe();
    for i in 0..ctx.d() {
        for j in (0..=i).rev() {
            let partner = pe ^ (1 << j);
            let incoming = ctx.exchange_tagged(partner, TAG_COLL, a.clone())?;
            let merged = merge_lo_hi(&a, &incoming);
            let ascending = (pe >> (i + 1)) & 1 == 0;
            let keep_low = ((pe >> j) & 1 == 0) == ascending;
            a = if keep_low {
                merged[..m].to_vec()
            } else {
                merged[m..].to_vec()
            };
        }
    }
    Ok(a)
}

/// Samples drawn per PE: `16 log p`.
fn sample_count(d: u32) -> usize {
    16 * d as usize
}

/// Simple p-way samplesort: every PE contributes `16 log p` random samples,
/// PE 0 sorts them and picks `p - 1` equidistant splitters, elements travel
/// directly to their bucket's PE (up to `p` startups per PE). No
/// tie-breaking: heavily duplicated inputs may land on one PE.
pub fn simple_sample_sort(ctx: &mut Ctx, mut a: Vec<Word>, phase: u64) -> Result<Vec<Word>, SimError> {
    let cube = Cube::full(ctx.d());
    let p = ctx.p();
    a.sort_unstable();

    let mut rng = ctx.rng(phase);
    let mut samples: Vec<Word> = (0..sample_count(ctx.d()))
        .filter_map(|_| a.choose(&mut rng).copied())
        .collect();
    samples.sort_unstable();

    let gathered = reduce_binomial(ctx, &cube, samples, |lo, hi| merge_lo_hi(lo, hi))?;
    let splitters = gathered.map(|s| {
        (0..p - 1)
            .map(|t| {
                let idx = (t + 1) * s.len() / p;
                s[idx.min(s.len().saturating_sub(1))]
            })
            .collect::<Vec<Word>>()
    });
    let splitters = broadcast_binomial(ctx, &cube, splitters)?;

    let mut messages: Vec<(usize, Vec<Word>)> = Vec::new();
    let mut rest = a.as_slice();
    for (t, &s) in splitters.iter().enumerate() {
        let cut = rest.partition_point(|&x| x <= s);
        if cut > 0 {
            messages.push((t, rest[..cut].to_vec()));
        }
        rest = &rest[cut..];
    }
    if !rest.is_empty() {
        messages.push((p - 1, rest.to_vec()));
    }
    let received = sparse_exchange(ctx, &cube, messages)?;
    Ok(received
        .into_iter()
        .fold(Vec::new(), |acc, (_, run)| merge_lo_hi(&acc, &run)))
}
