//! Robust hypercube quicksort: random shuffle, local sort, then one
//! split-and-exchange per dimension from high to low, using the approximate
//! median of the current subcube as splitter and splitting duplicate keys so
//! both sides stay as close to half as possible.

use crate::collectives::{merge_lo_hi, random_shuffle, Cube};
use crate::median::{approx_median, DEFAULT_K};
use crate::netsim::{Ctx, SimError, Word, TAG_COLL};

const PHASE_SHUFFLE: u64 = 0x2000;
const PHASE_MEDIAN: u64 = 0x2100;

#[derive(Debug, Clone)]
pub struct RQuickConfig {
    /// Pre-shuffle the input to remove skew.
    pub shuffle: bool,
    /// Split runs of the splitter key between both sides. Without it the
    /// split is a plain `< s` partition.
    pub tie_break: bool,
    /// Median window parameter.
    pub k: usize,
}

impl Default for RQuickConfig {
    fn default() -> Self {
        RQuickConfig { shuffle: true, tie_break: true, k: DEFAULT_K }
    }
}

/// Split sorted `a` at splitter `s` into `L . R == a` with every key in `L`
/// at most `s` and every key in `R` at least `s`. Among the feasible cuts
/// through the run of `s`-keys, picks the one bringing `|L|` closest to
/// `|a|/2`; exact ties go to the smaller cut.
pub fn split_with_ties(a: &[Word], s: Word) -> (Vec<Word>, Vec<Word>) {
    let lo = a.partition_point(|&x| x < s);
    let hi = a.partition_point(|&x| x <= s);
    let m = hi - lo;
    let len = a.len() as i64;
    // Minimize |2(lo + x) - len| over x in 0..=m; the two integer points
    // around the unconstrained optimum plus the bounds cover all cases.
    let ideal = (len - 2 * lo as i64).div_euclid(2);
    let mut best_x = 0usize;
    let mut best_val = i64::MAX;
    for cand in [0, ideal, ideal + 1, m as i64] {
        let x = cand.clamp(0, m as i64) as usize;
        let val = (2 * (lo + x) as i64 - len).abs();
        if val < best_val || (val == best_val && x < best_x) {
            best_val = val;
            best_x = x;
        }
    }
    let cut = lo + best_x;
    (a[..cut].to_vec(), a[cut..].to_vec())
}

fn split_plain(a: &[Word], s: Word) -> (Vec<Word>, Vec<Word>) {
    let cut = a.partition_point(|&x| x < s);
    (a[..cut].to_vec(), a[cut..].to_vec())
}

/// Robust hypercube quicksort over the full machine. Returns this PE's slice
/// of the globally sorted sequence.
pub fn rquick_sort(ctx: &mut Ctx, mut a: Vec<Word>, cfg: &RQuickConfig) -> Result<Vec<Word>, SimError> {
    let full = Cube::full(ctx.d());
    if cfg.shuffle {
        a = random_shuffle(ctx, &full, a, PHASE_SHUFFLE)?;
    }
    a.sort_unstable();
    for j in (0..ctx.d()).rev() {
        let cube = Cube::low(ctx.pe(), j + 1);
        let s = match approx_median(ctx, &cube, &a, cfg.k, PHASE_MEDIAN + j as u64)? {
            Some(s) => s,
            // No elements in the subcube: nothing left to split.
            None => return Ok(a),
        };
        let (l, r) = if cfg.tie_break {
            split_with_ties(&a, s)
        } else {
            split_plain(&a, s)
        };
        let partner = ctx.pe() ^ (1 << j);
        let i_am_lower = ctx.pe() & (1 << j) == 0;
        let (keep, send) = if i_am_lower { (l, r) } else { (r, l) };
        let incoming = ctx.exchange_tagged(partner, TAG_COLL, send)?;
        a = merge_lo_hi(&keep, &incoming);
    }
    Ok(a)
}
