//! Approximate median selection with a single binary-tree reduction.
//!
//! Every PE forwards a window of `k` keys centered on its local median;
//! internal tree nodes merge two windows into `2k` candidates and re-center
//! back to `k`. Where a window reaches past the available data it is padded
//! with sentinels, tracked as counts rather than reserved key values so the
//! full 64-bit key domain stays usable. The root picks one of the two middle
//! candidates by a fair coin, giving a truthful estimator of the median on
//! randomly permuted input.

use rand::Rng;

use crate::collectives::{broadcast_binomial, reduce_binomial, Cube};
use crate::netsim::{Ctx, SimError, Word};

/// Default window parameter; configurable per call.
pub const DEFAULT_K: usize = 16;

/// A sorted window of exactly `k` median candidates: `neg` low sentinels,
/// the real keys, `pos` high sentinels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MedianWindow {
    pub neg: usize,
    pub keys: Vec<Word>,
    pub pos: usize,
}

impl MedianWindow {
    pub fn k(&self) -> usize {
        self.neg + self.keys.len() + self.pos
    }

    fn assert_valid(&self, k: usize) {
        debug_assert!(k >= 2 && k % 2 == 0);
        debug_assert_eq!(self.k(), k);
        debug_assert!(self.keys.windows(2).all(|w| w[0] <= w[1]));
    }
}

/// Extract positions `[lo, lo + k)` of the conceptual sequence
/// (neg sentinels, keys, pos sentinels).
fn slice_window(neg: usize, keys: &[Word], pos: usize, lo: usize, k: usize) -> MedianWindow {
    let hi = lo + k;
    let keys_lo = neg;
    let keys_hi = neg + keys.len();
    let total = keys_hi + pos;
    debug_assert!(hi <= total);
    let take_lo = lo.clamp(keys_lo, keys_hi);
    let take_hi = hi.clamp(keys_lo, keys_hi);
    MedianWindow {
        neg: take_lo - lo,
        keys: keys[take_lo - neg..take_hi - neg].to_vec(),
        pos: hi - take_hi,
    }
}

/// Window center for a length-`m` sequence: the median position, with
/// `coin` choosing between floor and ceil when `m` is odd.
fn window_center(m: usize, coin: bool) -> usize {
    m / 2 + (m % 2 == 1 && coin) as usize
}

/// The `k` entries of sorted `a` centered on its median; out-of-range
/// positions become sentinels. For odd `m` the `coin` picks the floor
/// (false) or ceil (true) centered window.
pub fn local_window(a: &[Word], k: usize, coin: bool) -> MedianWindow {
    debug_assert!(a.windows(2).all(|w| w[0] <= w[1]));
    let m = a.len();
    let c = window_center(m, coin);
    // Conceptual sequence: k/2 low sentinels, a, k/2 high sentinels; the
    // window [c - k/2, c + k/2) in a-coordinates is [c, c + k) there.
    let w = slice_window(k / 2, a, k / 2, c, k);
    w.assert_valid(k);
    w
}

/// Merge two windows into `2k` candidates, then re-center to `k`. The
/// candidate count is even, so the centering coin is never consulted; it is
/// accepted for uniformity with [`local_window`].
pub fn merge_windows(w1: &MedianWindow, w2: &MedianWindow, k: usize, coin: bool) -> MedianWindow {
    w1.assert_valid(k);
    w2.assert_valid(k);
    let keys = crate::collectives::merge_lo_hi(&w1.keys, &w2.keys);
    let neg = w1.neg + w2.neg;
    let pos = w1.pos + w2.pos;
    let c = window_center(2 * k, coin);
    let w = slice_window(neg, &keys, pos, c - k / 2, k);
    w.assert_valid(k);
    w
}

/// Root rule: pick candidate `k/2` or `k/2 + 1` (1-indexed) by the coin,
/// clamped into the real keys so sentinels never escape. `None` if the
/// window holds no real key.
pub fn root_pick(w: &MedianWindow, k: usize, coin: bool) -> Option<Word> {
    w.assert_valid(k);
    if w.keys.is_empty() {
        return None;
    }
    let idx = k / 2 - 1 + coin as usize; // 0-indexed
    let idx = idx.clamp(w.neg, w.neg + w.keys.len() - 1);
    Some(w.keys[idx - w.neg])
}

fn encode(w: &MedianWindow, count: u64) -> Vec<Word> {
    let mut msg = Vec::with_capacity(w.keys.len() + 2);
    msg.push(((w.neg as u64) << 32) | w.pos as u64);
    msg.push(count);
    msg.extend_from_slice(&w.keys);
    msg
}

fn decode(msg: &[Word]) -> (MedianWindow, u64) {
    let neg = (msg[0] >> 32) as usize;
    let pos = (msg[0] & 0xffff_ffff) as usize;
    let count = msg[1];
    (MedianWindow { neg, keys: msg[2..].to_vec(), pos }, count)
}

/// Distributed approximate median of the multiset union of all cube
/// members' sorted locals: binomial-tree reduction of median windows to
/// cube rank 0, then a broadcast of the root's pick. Every PE returns the
/// same `Some(key)` with the key drawn from the global multiset, or `None`
/// when the cube holds no elements.
///
/// Each reduction message carries at most `k + 2` words (window keys plus
/// sentinel-count and element-count headers).
pub fn approx_median(
    ctx: &mut Ctx,
    cube: &Cube,
    a: &[Word],
    k: usize,
    phase: u64,
) -> Result<Option<Word>, SimError> {
    assert!(k >= 2 && k % 2 == 0, "window parameter must be even and >= 2");
    let mut rng = ctx.rng(phase);
    let w = local_window(a, k, rng.gen());
    let msg = encode(&w, a.len() as u64);
    let folded = reduce_binomial(ctx, cube, msg, |lo, hi| {
        let (w1, c1) = decode(lo);
        let (w2, c2) = decode(hi);
        encode(&merge_windows(&w1, &w2, k, rng.gen()), c1 + c2)
    })?;
    let root_msg = folded.map(|msg| {
        let (w, count) = decode(&msg);
        match (count, root_pick(&w, k, rng.gen())) {
            (0, _) => vec![0],
            (_, Some(key)) => vec![1, key],
            // count > 0 forces at least one real key into the root window.
            (_, None) => unreachable!("nonempty input but all-sentinel root window"),
        }
    });
    let result = broadcast_binomial(ctx, cube, root_msg)?;
    Ok(if result[0] == 0 { None } else { Some(result[1]) })
}
