//! Input-distribution generators and output verification.
//!
//! The generator suite covers uniform and adversarial inputs: globally
//! presorted data, heavy duplicates, skew aimed at hypercube routing, and a
//! hot-spot instance that concentrates traffic on PE 0. Generators are pure:
//! the same (spec, pe, p) always yields the same local list, independent of
//! execution order.
//!
//! Keys are 64-bit unsigned integers drawn from a 32-bit value range (a
//! float mode reinterprets them as order-preserved `f64` bit patterns).

use rand::Rng;

use crate::netsim::{derived_rng, CostLedger, SimError};

const R32: u64 = 1 << 32;

/// Bucket granularity of the BucketSorted instance: consecutive runs of
/// PEs share one bucket of few distinct values. The coarse buckets flood
/// the instance with duplicate keys while keeping it globally range-sorted,
/// which is what makes it adversarial for splitters without tie-breaking:
/// each distinct key carries far more copies than one PE's fair share.
pub const BUCKET_SORTED_PES_PER_BUCKET: usize = 16;
pub const BUCKET_SORTED_VALUES_PER_BUCKET: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InstanceName {
    Uniform,
    Gaussian,
    BucketSorted,
    Staggered,
    DeterDupl,
    RandDupl,
    Zero,
    GGroup,
    Reverse,
    Mirrored,
    AllToOne,
}

pub const ALL_INSTANCES: [InstanceName; 11] = [
    InstanceName::Uniform,
    InstanceName::Gaussian,
    InstanceName::BucketSorted,
    InstanceName::Staggered,
    InstanceName::DeterDupl,
    InstanceName::RandDupl,
    InstanceName::Zero,
    InstanceName::GGroup,
    InstanceName::Reverse,
    InstanceName::Mirrored,
    InstanceName::AllToOne,
];

impl InstanceName {
    /// Stable CLI identifier.
    pub fn id(&self) -> &'static str {
        match self {
            InstanceName::Uniform => "uniform",
            InstanceName::Gaussian => "gaussian",
            InstanceName::BucketSorted => "bucket-sorted",
            InstanceName::Staggered => "staggered",
            InstanceName::DeterDupl => "deter-dupl",
            InstanceName::RandDupl => "rand-dupl",
            InstanceName::Zero => "zero",
            InstanceName::GGroup => "g-group",
            InstanceName::Reverse => "reverse",
            InstanceName::Mirrored => "mirrored",
            InstanceName::AllToOne => "all-to-one",
        }
    }
}

impl std::fmt::Display for InstanceName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for InstanceName {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        ALL_INSTANCES
            .iter()
            .copied()
            .find(|n| n.id() == s)
            .ok_or_else(|| {
                let ids: Vec<_> = ALL_INSTANCES.iter().map(|n| n.id()).collect();
                SimError::Config(format!("unknown instance '{s}', valid: {}", ids.join(", ")))
            })
    }
}

/// Elements per PE as an exact rational; values below one describe sparse
/// inputs where only every few PEs holds an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NPerPe {
    pub num: u64,
    pub den: u64,
}

impl NPerPe {
    pub fn new(num: u64, den: u64) -> Result<Self, SimError> {
        if num == 0 || den == 0 {
            return Err(SimError::Config("n-per-pe must be positive".into()));
        }
        Ok(NPerPe { num, den })
    }

    pub fn int(n: u64) -> Self {
        NPerPe { num: n, den: 1 }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Total element count for `p` PEs: `ceil(p * n_per_pe)`.
    pub fn total(&self, p: usize) -> usize {
        ((p as u64 * self.num + self.den - 1) / self.den) as usize
    }
}

impl std::str::FromStr for NPerPe {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        let parse = |t: &str| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| SimError::Config(format!("bad n-per-pe component '{t}'")))
        };
        match s.split_once('/') {
            Some((a, b)) => NPerPe::new(parse(a)?, parse(b)?),
            None => NPerPe::new(parse(s)?, 1),
        }
    }
}

impl std::fmt::Display for NPerPe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeyMode {
    #[default]
    U64,
    /// Keys are reinterpreted as the IEEE-754 bit patterns of their `f64`
    /// values; the mapping preserves order, so verification is unaffected.
    F64Bits,
}

#[derive(Debug, Clone)]
pub struct InstanceSpec {
    pub name: InstanceName,
    pub n_per_pe: NPerPe,
    pub seed: u64,
    pub key_mode: KeyMode,
}

impl InstanceSpec {
    pub fn new(name: InstanceName, n_per_pe: NPerPe, seed: u64) -> Self {
        InstanceSpec { name, n_per_pe, seed, key_mode: KeyMode::U64 }
    }
}

/// Per-PE element counts. Dense inputs (`n >= p`) spread near-evenly; sparse
/// inputs place one element on every `s`-th PE for sparsity factor `s`.
pub fn local_counts(spec: &InstanceSpec, p: usize) -> Vec<usize> {
    let n = spec.n_per_pe.total(p);
    let mut counts = vec![0usize; p];
    if n >= p {
        let q = n / p;
        let r = n % p;
        for (pe, c) in counts.iter_mut().enumerate() {
            *c = q + (pe < r) as usize;
        }
    } else if n > 0 {
        let (num, den) = (spec.n_per_pe.num, spec.n_per_pe.den);
        let s = if num > 0 && den % num == 0 {
            (den / num) as usize
        } else {
            (p / n).max(1)
        };
        let s = if (p - 1) / s + 1 >= n { s } else { (p / n).max(1) };
        for i in 0..n {
            counts[i * s] = 1;
        }
    }
    counts
}

fn bit_reverse(i: usize, d: u32) -> usize {
    let mut r = 0;
    for b in 0..d {
        r |= ((i >> b) & 1) << (d - 1 - b);
    }
    r
}

fn bucket_range(bucket: usize, p: usize, span: u64) -> (u64, u64) {
    let lo = (bucket as u128 * span as u128 / p as u128) as u64;
    let hi = ((bucket + 1) as u128 * span as u128 / p as u128) as u64;
    (lo, hi.max(lo + 1))
}

/// Generate PE `pe`'s local input. Pure in (spec, pe, p).
pub fn generate(spec: &InstanceSpec, pe: usize, p: usize) -> Vec<u64> {
    assert!(p.is_power_of_two() && pe < p);
    let d = p.trailing_zeros();
    let counts = local_counts(spec, p);
    let m = counts[pe];
    let offset: usize = counts[..pe].iter().sum();
    let n = spec.n_per_pe.total(p);
    let mut rng = derived_rng(spec.seed, pe as u64, 0x1000 + spec.name as u64);
    let mut keys: Vec<u64> = match spec.name {
        InstanceName::Uniform => (0..m).map(|_| rng.gen_range(0..R32)).collect(),
        InstanceName::Gaussian => (0..m)
            .map(|_| (0..4).map(|_| rng.gen_range(0..R32 / 4)).sum())
            .collect(),
        InstanceName::BucketSorted => {
            // Locally random, globally sorted: PE i draws only from its own
            // bucket's slab of a deliberately small value universe.
            let c = BUCKET_SORTED_VALUES_PER_BUCKET;
            let bucket = (pe / BUCKET_SORTED_PES_PER_BUCKET) as u64;
            (0..m).map(|_| bucket * c + rng.gen_range(0..c)).collect()
        }
        InstanceName::Staggered => {
            let b = if p == 1 {
                0
            } else if pe < p / 2 {
                2 * pe + 1
            } else {
                2 * (pe - p / 2)
            };
            let (lo, hi) = bucket_range(b, p, R32);
            (0..m).map(|_| rng.gen_range(lo..hi)).collect()
        }
        InstanceName::DeterDupl => {
            // The first p/2 PEs hold the value log n, the next p/4 hold
            // log(n/2), and so on: at most log p + 1 distinct keys overall.
            let mut lo = 0usize;
            let mut size = (p / 2).max(1);
            let mut g = 0u32;
            while pe >= lo + size {
                lo += size;
                size = (size / 2).max(1);
                g += 1;
            }
            let log_n = 63 - (n.max(1) as u64).leading_zeros();
            let v = log_n.saturating_sub(g) as u64;
            vec![v; m]
        }
        InstanceName::RandDupl => {
            let mut cuts: Vec<usize> = (0..31).map(|_| rng.gen_range(0..=m)).collect();
            cuts.sort_unstable();
            cuts.push(m);
            let mut keys = Vec::with_capacity(m);
            let mut prev = 0;
            for cut in cuts {
                let v = rng.gen_range(0..32u64);
                keys.extend(std::iter::repeat(v).take(cut - prev));
                prev = cut;
            }
            keys
        }
        InstanceName::Zero => vec![0; m],
        InstanceName::GGroup => {
            let g = 1usize << d.div_ceil(2);
            let b = ((pe % g) * g + pe / g + g / 2) % p;
            let (lo, hi) = bucket_range(b, p, R32);
            (0..m).map(|_| rng.gen_range(lo..hi)).collect()
        }
        InstanceName::Reverse => (0..m)
            .map(|j| {
                let gidx = (offset + j) as u128;
                ((n as u128 - 1 - gidx) * R32 as u128 / n as u128) as u64
            })
            .collect(),
        InstanceName::Mirrored => {
            let mi = bit_reverse(pe, d);
            let (lo, hi) = bucket_range(mi, p, 1 << 31);
            (0..m).map(|_| rng.gen_range(lo..hi)).collect()
        }
        InstanceName::AllToOne => {
            let pi = (p - pe) as u128;
            let span = (R32 - p as u64) as u128;
            let lo = (p as u128 + pi * span / p as u128) as u64;
            let hi = (p as u128 + (pi + 1) * span / p as u128) as u64;
            let mut keys: Vec<u64> =
                (0..m.saturating_sub(1)).map(|_| rng.gen_range(lo..=hi)).collect();
            if m > 0 {
                keys.push((p - pe) as u64);
            }
            keys
        }
    };
    if spec.key_mode == KeyMode::F64Bits {
        for k in &mut keys {
            // All generated values are far below 2^53, so the conversion is
            // exact and strictly monotone.
            *k = (*k as f64).to_bits();
        }
    }
    keys
}

/// How an algorithm leaves its output across PEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    /// Globally sorted with consecutive ranks per PE.
    Partitioned,
    /// Every PE holds the full sorted sequence.
    Replicated,
}

/// Verification verdict plus the measured load imbalance factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub sorted_ok: bool,
    pub permutation_ok: bool,
    /// max per-PE output load divided by n/p; for replicated outputs this is
    /// p by definition.
    pub imbalance: f64,
}

/// Check outputs against inputs. Never aborts; reports.
pub fn verify(inputs: &[Vec<u64>], outputs: &[Vec<u64>], kind: OutputKind) -> Verdict {
    let p = inputs.len();
    let mut reference: Vec<u64> = inputs.concat();
    reference.sort_unstable();
    let n = reference.len();

    let max_load = outputs.iter().map(|o| o.len()).max().unwrap_or(0);
    let imbalance = if n == 0 { 1.0 } else { max_load as f64 * p as f64 / n as f64 };

    match kind {
        OutputKind::Partitioned => {
            let mut sorted_ok = outputs
                .iter()
                .all(|o| o.windows(2).all(|w| w[0] <= w[1]));
            let mut last_max: Option<u64> = None;
            for o in outputs {
                if let (&Some(prev), Some(&first)) = (&last_max, o.first()) {
                    sorted_ok &= prev <= first;
                }
                if let Some(&m) = o.last() {
                    last_max = Some(m);
                }
            }
            let mut got: Vec<u64> = outputs.concat();
            got.sort_unstable();
            Verdict { sorted_ok, permutation_ok: got == reference, imbalance }
        }
        OutputKind::Replicated => {
            let ok = outputs.iter().all(|o| *o == reference);
            Verdict { sorted_ok: ok, permutation_ok: ok, imbalance }
        }
    }
}

/// Verification verdict combined with ledger maxima and modeled time.
#[derive(Debug, Clone, PartialEq)]
pub struct SortReport {
    pub sorted_ok: bool,
    pub permutation_ok: bool,
    pub imbalance: f64,
    pub startups_max: u64,
    pub words_max: u64,
    pub modeled_time: f64,
}

impl SortReport {
    pub fn new(verdict: Verdict, ledger: &CostLedger, alpha: f64, beta: f64) -> Self {
        SortReport {
            sorted_ok: verdict.sorted_ok,
            permutation_ok: verdict.permutation_ok,
            imbalance: verdict.imbalance,
            startups_max: ledger.startups_max(),
            words_max: ledger.words_max(),
            modeled_time: ledger.modeled_time(alpha, beta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(name: InstanceName, n_per_pe: NPerPe) -> InstanceSpec {
        InstanceSpec::new(name, n_per_pe, 123)
    }

    fn all_locals(s: &InstanceSpec, p: usize) -> Vec<Vec<u64>> {
        (0..p).map(|pe| generate(s, pe, p)).collect()
    }

    #[test]
    fn zero_is_all_equal() {
        let s = spec(InstanceName::Zero, NPerPe::int(8));
        for pe in 0..4 {
            assert!(generate(&s, pe, 4).iter().all(|&k| k == 0));
        }
    }

    #[test]
    fn all_to_one_last_element_value() {
        let s = spec(InstanceName::AllToOne, NPerPe::int(2));
        let local = generate(&s, 1, 4);
        assert_eq!(local.len(), 2);
        assert_eq!(*local.last().unwrap(), 3); // p - i = 4 - 1
        assert!(local[0] >= 4);
    }

    #[test]
    fn mirrored_bit_reversed_bucket() {
        let s = spec(InstanceName::Mirrored, NPerPe::int(32));
        // pe 1 of p=4 is binary 01, reversed 10 = 2: range [2^31*2/4, 2^31*3/4).
        let local = generate(&s, 1, 4);
        assert_eq!(local.len(), 32);
        for &k in &local {
            assert!((1u64 << 30..3u64 << 29).contains(&k), "key {k}");
        }
    }

    #[test]
    fn generate_is_pure() {
        for name in ALL_INSTANCES {
            let s = spec(name, NPerPe::int(16));
            assert_eq!(all_locals(&s, 8), all_locals(&s, 8), "{name:?}");
        }
    }

    #[test]
    fn sparse_counts_are_exact() {
        let s = spec(InstanceName::Uniform, NPerPe::new(1, 27).unwrap());
        let counts = local_counts(&s, 256);
        assert_eq!(counts.iter().sum::<usize>(), 10); // ceil(256/27)
        assert!(counts.iter().enumerate().all(|(pe, &c)| c == 0 || pe % 27 == 0));

        let counts = local_counts(&spec(InstanceName::Zero, NPerPe::new(1, 4).unwrap()), 4);
        assert_eq!(counts, vec![1, 0, 0, 0]);

        for name in ALL_INSTANCES {
            let s = spec(name, NPerPe::new(1, 4).unwrap());
            let total: usize = all_locals(&s, 16).iter().map(|l| l.len()).sum();
            assert_eq!(total, 4, "{name:?}");
        }
    }

    #[test]
    fn bucket_sorted_ranges_are_globally_ordered() {
        let s = spec(InstanceName::BucketSorted, NPerPe::int(64));
        let locals = all_locals(&s, 64);
        let c = BUCKET_SORTED_VALUES_PER_BUCKET;
        for pe in 0..64 {
            let bucket = (pe / BUCKET_SORTED_PES_PER_BUCKET) as u64;
            assert!(locals[pe].iter().all(|&k| k / c == bucket), "pe {pe}");
        }
        // Range upper bound of PE i never exceeds the lower bound of PE i+1.
        for pe in 0..63 {
            let hi = locals[pe].iter().max().unwrap();
            let lo = locals[pe + 1].iter().min().unwrap();
            let same = pe / BUCKET_SORTED_PES_PER_BUCKET
                == (pe + 1) / BUCKET_SORTED_PES_PER_BUCKET;
            assert!(if same { hi / c == lo / c } else { hi < lo });
        }
    }

    #[test]
    fn deter_dupl_has_few_distinct_keys() {
        let s = spec(InstanceName::DeterDupl, NPerPe::int(64));
        let locals = all_locals(&s, 64);
        let distinct: std::collections::HashSet<u64> = locals.concat().into_iter().collect();
        assert!(distinct.len() <= 7, "{} distinct keys", distinct.len()); // log2(64) + 1
    }

    #[test]
    fn reverse_is_globally_descending() {
        let s = spec(InstanceName::Reverse, NPerPe::int(8));
        let all: Vec<u64> = all_locals(&s, 4).concat();
        assert!(all.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn staggered_and_ggroup_buckets_within_range() {
        for name in [InstanceName::Staggered, InstanceName::GGroup] {
            let s = spec(name, NPerPe::int(16));
            for local in all_locals(&s, 8) {
                assert_eq!(local.len(), 16);
                assert!(local.iter().all(|&k| k < R32));
            }
        }
    }

    #[test]
    fn float_mode_preserves_order() {
        let mut s = spec(InstanceName::Uniform, NPerPe::int(64));
        let ints = generate(&s, 0, 4);
        s.key_mode = KeyMode::F64Bits;
        let floats = generate(&s, 0, 4);
        let mut i_sorted: Vec<usize> = (0..64).collect();
        let mut f_sorted = i_sorted.clone();
        i_sorted.sort_by_key(|&j| ints[j]);
        f_sorted.sort_by_key(|&j| floats[j]);
        assert_eq!(i_sorted, f_sorted);
    }

    #[test]
    fn verify_partitioned_examples() {
        let v = verify(&[vec![2, 1]], &[vec![1, 2]], OutputKind::Partitioned);
        assert!(v.sorted_ok && v.permutation_ok);
        assert_eq!(v.imbalance, 1.0);

        let v = verify(
            &[vec![3, 3], vec![2, 4]],
            &[vec![3, 3], vec![2, 4]],
            OutputKind::Partitioned,
        );
        assert!(!v.sorted_ok); // boundary 3 > 2

        let v = verify(
            &[vec![1, 2], vec![3, 4], vec![5, 6], vec![7, 8]],
            &[vec![1, 2, 3], vec![4, 5, 6], vec![7, 8], vec![]],
            OutputKind::Partitioned,
        );
        assert!(v.sorted_ok && v.permutation_ok);
        assert_eq!(v.imbalance, 1.5); // loads 3,3,2,0 with n/p = 2
    }

    #[test]
    fn verify_replicated() {
        let v = verify(
            &[vec![2], vec![1]],
            &[vec![1, 2], vec![1, 2]],
            OutputKind::Replicated,
        );
        assert!(v.sorted_ok && v.permutation_ok);
        assert_eq!(v.imbalance, 2.0);

        let v = verify(&[vec![2], vec![1]], &[vec![1, 2], vec![2, 1]], OutputKind::Replicated);
        assert!(!v.sorted_ok);
    }

    #[test]
    fn n_per_pe_parsing() {
        assert_eq!("1024".parse::<NPerPe>().unwrap(), NPerPe::int(1024));
        assert_eq!("1/27".parse::<NPerPe>().unwrap(), NPerPe::new(1, 27).unwrap());
        assert_eq!(NPerPe::new(1, 27).unwrap().to_string(), "1/27");
        assert!("0".parse::<NPerPe>().is_err());
        assert!("x/2".parse::<NPerPe>().is_err());
    }

    #[test]
    fn instance_ids_round_trip() {
        for name in ALL_INSTANCES {
            assert_eq!(name.id().parse::<InstanceName>().unwrap(), name);
        }
        assert!("nope".parse::<InstanceName>().is_err());
    }
}
