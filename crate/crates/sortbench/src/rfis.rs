//! Robust fast work-inefficient sort: the PEs form a near-square grid, every
//! PE learns its whole row and column via all-gather-merge, ranks the row
//! elements against its column with an origin-based tie-breaking comparator,
//! sums ranks along rows, and finally routes elements to the PE owning their
//! rank range.
//!
//! Duplicate keys are ordered by the implicit quadruple (key, row, column,
//! local position) without ever sending the tie-break identity over the
//! wire: the all-gather-merge direction buckets encode origin side for free.

use crate::collectives::{
    all_gather_merge, all_reduce_sum, route_records, sparse_exchange, Cube, GatheredRuns,
};
use crate::netsim::{Ctx, SimError, Word};

/// Origin label of a row element relative to the comparing PE's column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowLabel {
    FromLeft,
    Here,
    FromRight,
}

/// Origin label of a column element relative to the comparing PE's row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColLabel {
    FromAbove,
    Here,
    FromBelow,
}

/// Is row element `a` greater than column element `b`? Unequal keys compare
/// by key; equal keys are resolved by the origin labels, and by local
/// positions when both elements live on the comparing PE. Positions are only
/// consulted in that both-`Here` case.
pub fn tie_compare(
    a_key: Word,
    a_label: RowLabel,
    a_pos: Option<usize>,
    b_key: Word,
    b_label: ColLabel,
    b_pos: Option<usize>,
) -> bool {
    if a_key != b_key {
        return a_key > b_key;
    }
    match (b_label, a_label) {
        (ColLabel::FromAbove, _) => true,
        (ColLabel::Here, RowLabel::FromLeft) => false,
        (ColLabel::Here, RowLabel::Here) => a_pos.unwrap() > b_pos.unwrap(),
        (ColLabel::Here, RowLabel::FromRight) => true,
        (ColLabel::FromBelow, _) => false,
    }
}

/// Grid coordinates: `rows = 2^ceil(d/2)` and `cols = 2^floor(d/2)`, with
/// `pe = r * cols + c`.
#[derive(Debug, Clone, Copy)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub r: usize,
    pub c: usize,
    d: u32,
}

impl Grid {
    pub fn new(pe: usize, d: u32) -> Grid {
        let col_bits = d / 2;
        let cols = 1usize << col_bits;
        Grid {
            rows: 1 << (d - col_bits),
            cols,
            r: pe >> col_bits,
            c: pe & (cols - 1),
            d,
        }
    }

    /// PEs sharing this row (the low id bits vary: the column index).
    pub fn row_cube(&self, pe: usize) -> Cube {
        Cube::from_dims(pe, (0..self.d / 2).collect())
    }

    /// PEs sharing this column (the high id bits vary: the row index).
    pub fn col_cube(&self, pe: usize) -> Cube {
        Cube::from_dims(pe, (self.d / 2..self.d).collect())
    }
}

fn labeled_row(runs: &GatheredRuns) -> Vec<(Word, RowLabel, usize)> {
    let mut out = Vec::with_capacity(runs.total_len());
    let (mut i, mut j, mut k) = (0, 0, 0);
    let (l, o, h) = (&runs.lower, &runs.own, &runs.higher);
    // Stable three-way merge; ties resolve left < here < right, matching the
    // global (key, origin, position) order.
    while i < l.len() || j < o.len() || k < h.len() {
        let lv = l.get(i).copied();
        let ov = o.get(j).copied();
        let hv = h.get(k).copied();
        let min = [lv, ov, hv].into_iter().flatten().min().unwrap();
        if lv == Some(min) {
            out.push((min, RowLabel::FromLeft, i));
            i += 1;
        } else if ov == Some(min) {
            out.push((min, RowLabel::Here, j));
            j += 1;
        } else {
            out.push((min, RowLabel::FromRight, k));
            k += 1;
        }
    }
    out
}

/// Rank all elements of this PE's row against this PE's column. Returns the
/// row elements as (global rank, key) pairs in row-sequence order, identical
/// on every PE of the row, plus the global element count.
pub fn fir_rank(ctx: &mut Ctx, a: &[Word]) -> Result<(Vec<(u64, Word)>, u64), SimError> {
    let grid = Grid::new(ctx.pe(), ctx.d());
    let mut local = a.to_vec();
    local.sort_unstable();

    let row_cube = grid.row_cube(ctx.pe());
    let col_cube = grid.col_cube(ctx.pe());
    let row = all_gather_merge(ctx, &row_cube, local.clone())?;
    let col = all_gather_merge(ctx, &col_cube, local)?;

    let row_seq = labeled_row(&row);
    let lb = |run: &[Word], key: Word| run.partition_point(|&x| x < key) as u64;
    let ub = |run: &[Word], key: Word| run.partition_point(|&x| x <= key) as u64;
    let counts: Vec<u64> = row_seq
        .iter()
        .map(|&(key, label, pos)| {
            // Column elements below this row element, per the tie-break
            // table: above-origin ties count, below-origin ties do not, and
            // same-PE ties compare local positions (own runs are the same
            // sorted local list, so that count is just the position).
            let here = match label {
                RowLabel::FromLeft => lb(&col.own, key),
                RowLabel::Here => pos as u64,
                RowLabel::FromRight => ub(&col.own, key),
            };
            ub(&col.lower, key) + here + lb(&col.higher, key)
        })
        .collect();

    let ranks = all_reduce_sum(ctx, &row_cube, counts)?;
    let n = all_reduce_sum(ctx, &Cube::full(ctx.d()), vec![a.len() as u64])?[0];
    Ok((
        ranks
            .into_iter()
            .zip(row_seq)
            .map(|(rank, (key, _, _))| (rank, key))
            .collect(),
        n,
    ))
}

#[derive(Debug, Clone, Default)]
pub struct RfisConfig {
    /// Use direct single-message delivery when `n/p` is below this
    /// threshold; `None` means `log2 p`.
    pub direct_threshold: Option<f64>,
}

/// Send each ranked element to PE `floor(rank * p / n)`. Within a row, the
/// PE whose column contains the destination keeps the element and routes it
/// through its column; for sparse inputs, elements travel as direct single
/// messages instead.
pub fn deliver_by_rank(
    ctx: &mut Ctx,
    ranked: &[(u64, Word)],
    n: u64,
    cfg: &RfisConfig,
) -> Result<Vec<Word>, SimError> {
    let p = ctx.p() as u64;
    let grid = Grid::new(ctx.pe(), ctx.d());
    if n == 0 {
        return Ok(Vec::new());
    }
    let threshold = cfg.direct_threshold.unwrap_or(ctx.d() as f64);
    let direct = (n as f64 / p as f64) < threshold;

    let mine: Vec<(u64, Word)> = ranked
        .iter()
        .copied()
        .filter(|&(rank, _)| (rank * p / n) as usize % grid.cols == grid.c)
        .collect();

    let mut received: Vec<(u64, Word)> = if direct {
        let msgs = mine
            .iter()
            .map(|&(rank, key)| ((rank * p / n) as usize, vec![rank, key]))
            .collect();
        sparse_exchange(ctx, &Cube::full(ctx.d()), msgs)?
            .into_iter()
            .map(|(_, m)| (m[0], m[1]))
            .collect()
    } else {
        let mut recs = Vec::with_capacity(mine.len() * 3);
        for (rank, key) in mine {
            recs.extend_from_slice(&[rank * p / n, rank, key]);
        }
        route_records(ctx, &grid.col_cube(ctx.pe()), 3, recs)?
            .chunks(3)
            .map(|r| (r[1], r[2]))
            .collect()
    };

    received.sort_unstable();
    for w in received.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(SimError::ContractViolation(format!("duplicate rank {}", w[0].0)));
        }
    }
    for &(rank, _) in &received {
        if rank >= n || (rank * p / n) as usize != ctx.pe() {
            return Err(SimError::ContractViolation(format!(
                "rank {rank} out of place on {}",
                crate::netsim::PeId(ctx.pe())
            )));
        }
    }
    Ok(received.into_iter().map(|(_, key)| key).collect())
}

/// Fast work-inefficient sort: grid ranking followed by rank-based delivery.
pub fn rfis_sort(ctx: &mut Ctx, a: Vec<Word>, cfg: &RfisConfig) -> Result<Vec<Word>, SimError> {
    let (ranked, n) = fir_rank(ctx, &a)?;
    deliver_by_rank(ctx, &ranked, n, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate, verify, InstanceName, InstanceSpec, NPerPe, OutputKind};
    use crate::netsim::{run_spmd, ClusterConfig};

    #[test]
    fn tie_compare_table_entries() {
        use ColLabel as C;
        use RowLabel as R;
        // Equal keys throughout.
        assert!(tie_compare(5, R::FromLeft, None, 5, C::FromAbove, None));
        assert!(!tie_compare(5, R::Here, Some(2), 5, C::Here, Some(5)));
        assert!(tie_compare(5, R::Here, Some(5), 5, C::Here, Some(2)));
        assert!(!tie_compare(5, R::FromRight, None, 5, C::FromBelow, None));
        assert!(!tie_compare(5, R::FromLeft, None, 5, C::Here, Some(0)));
        assert!(tie_compare(5, R::FromRight, None, 5, C::Here, Some(0)));
        // Unequal keys ignore labels.
        assert!(tie_compare(6, R::FromLeft, None, 5, C::FromBelow, None));
        assert!(!tie_compare(4, R::FromRight, None, 5, C::FromAbove, None));
    }

    /// The comparator agrees with the lexicographic order on quadruples
    /// (key, row, column, position), exhaustively over a small domain.
    #[test]
    fn tie_compare_is_the_quadruple_order() {
        let quads: Vec<(u64, usize, usize, usize)> = (0..2u64)
            .flat_map(|k| {
                (0..3).flat_map(move |r| {
                    (0..3).flat_map(move |c| (0..3).map(move |i| (k, r, c, i)))
                })
            })
            .collect();
        for &(r0, c0) in &[(0, 0), (1, 2), (2, 1)] {
            for a in quads.iter().filter(|q| q.1 == r0) {
                for b in quads.iter().filter(|q| q.2 == c0) {
                    let a_label = match a.2.cmp(&c0) {
                        std::cmp::Ordering::Less => RowLabel::FromLeft,
                        std::cmp::Ordering::Equal => RowLabel::Here,
                        std::cmp::Ordering::Greater => RowLabel::FromRight,
                    };
                    let b_label = match b.1.cmp(&r0) {
                        std::cmp::Ordering::Less => ColLabel::FromAbove,
                        std::cmp::Ordering::Equal => ColLabel::Here,
                        std::cmp::Ordering::Greater => ColLabel::FromBelow,
                    };
                    // Positions are only comparable when both elements live
                    // on the comparing PE (r0, c0).
                    if a_label == RowLabel::Here && b_label == ColLabel::Here {
                        if a.1 != b.1 || a.2 != b.2 {
                            continue;
                        }
                    }
                    let got = tie_compare(a.0, a_label, Some(a.3), b.0, b_label, Some(b.3));
                    assert_eq!(got, a > b, "a={a:?} b={b:?} at ({r0},{c0})");
                }
            }
        }
    }

    fn cfg(d: u32, seed: u64) -> ClusterConfig {
        ClusterConfig::new(d, 1000.0, 1.0, seed).unwrap()
    }

    #[test]
    fn single_element_gets_rank_zero() {
        let mut inputs = vec![vec![]; 4];
        inputs[2] = vec![99u64];
        let (out, _) = run_spmd(&cfg(2, 1), inputs, |ctx, a: Vec<u64>| {
            fir_rank(ctx, &a)
        })
        .unwrap();
        for (ranked, n) in &out {
            assert_eq!(*n, 1);
            for &(rank, key) in ranked {
                assert_eq!((rank, key), (0, 99));
            }
        }
    }

    #[test]
    fn duplicate_keys_get_unique_ranks() {
        let (out, _) = run_spmd(&cfg(2, 1), vec![vec![5u64]; 4], |ctx, a: Vec<u64>| {
            fir_rank(ctx, &a)
        })
        .unwrap();
        let mut all_ranks: Vec<u64> = Vec::new();
        for (pe, (ranked, n)) in out.iter().enumerate() {
            assert_eq!(*n, 4);
            let grid = Grid::new(pe, 2);
            // Keep one copy per row: PEs in the same row see the same list.
            if grid.c == 0 {
                all_ranks.extend(ranked.iter().map(|&(r, _)| r));
            }
        }
        all_ranks.sort_unstable();
        assert_eq!(all_ranks, vec![0, 1, 2, 3]);
    }

    #[test]
    fn distinct_keys_rank_as_argsort() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut vals: Vec<u64> = (0..64u64).map(|v| v * 10).collect();
        vals.shuffle(&mut rng);
        let inputs: Vec<Vec<u64>> = vals.chunks(4).map(|c| c.to_vec()).collect();
        let (out, _) = run_spmd(&cfg(4, 8), inputs, |ctx, a: Vec<u64>| fir_rank(ctx, &a))
            .unwrap();
        for (ranked, _) in &out {
            for &(rank, key) in ranked {
                assert_eq!(rank * 10, key);
            }
        }
    }

    fn check_sort(d: u32, inputs: Vec<Vec<u64>>, seed: u64) {
        let (out, _) = run_spmd(&cfg(d, seed), inputs.clone(), |ctx, a| {
            rfis_sort(ctx, a, &RfisConfig::default())
        })
        .unwrap();
        let v = verify(&inputs, &out, OutputKind::Partitioned);
        assert!(v.sorted_ok && v.permutation_ok, "d={d}");
        let n: usize = inputs.iter().map(|l| l.len()).sum();
        let p = 1usize << d;
        if n >= p {
            let max = out.iter().map(|o| o.len()).max().unwrap();
            assert!(max <= n.div_ceil(p), "load {max} above ceil(n/p)");
        }
    }

    #[test]
    fn sorts_at_fractional_and_small_loads() {
        for n_per_pe in [NPerPe::new(1, 4).unwrap(), NPerPe::int(1), NPerPe::int(4)] {
            for name in [InstanceName::Uniform, InstanceName::Zero, InstanceName::AllToOne] {
                let spec = InstanceSpec::new(name, n_per_pe, 17);
                let inputs: Vec<Vec<u64>> = (0..16).map(|pe| generate(&spec, pe, 16)).collect();
                check_sort(4, inputs, 17);
            }
        }
    }

    #[test]
    fn sparse_direct_delivery_targets_every_other_pe() {
        // n = 4 on p = 8: ranks 0..3 map to PEs 0, 2, 4, 6.
        let mut inputs = vec![vec![]; 8];
        inputs[3] = vec![30u64, 10];
        inputs[5] = vec![20u64, 40];
        let (out, _) = run_spmd(&cfg(3, 2), inputs, |ctx, a| {
            rfis_sort(ctx, a, &RfisConfig::default())
        })
        .unwrap();
        let expect: Vec<Vec<u64>> = vec![
            vec![10],
            vec![],
            vec![20],
            vec![],
            vec![30],
            vec![],
            vec![40],
            vec![],
        ];
        assert_eq!(out, expect);
    }

    #[test]
    fn odd_dimension_grid_sorts() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let inputs: Vec<Vec<u64>> =
            (0..8).map(|_| (0..6).map(|_| rng.gen_range(0..40u64)).collect()).collect();
        check_sort(3, inputs, 31);
    }
}
