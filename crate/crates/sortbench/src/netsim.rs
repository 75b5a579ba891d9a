//! Deterministic simulated cluster of `p = 2^d` logical PEs with
//! single-ported point-to-point messaging and cost accounting.
//!
//! Each PE runs on its own executor; PE-local state is never shared and only
//! messages cross PE boundaries. Messages between a fixed ordered pair of PEs
//! (and tag) are delivered in send order, so program behaviour is independent
//! of the thread schedule. Sending a message of `l` words is accounted as one
//! startup plus `l` words in the sender's and receiver's ledgers.

use std::collections::{HashMap, VecDeque};
use std::sync::{Condvar, Mutex};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// One machine word. Data elements occupy exactly one word; metadata messages
/// are encoded into words and charged at their actual length.
pub type Word = u64;

/// Identifier of a processing element, in `0..p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeId(pub usize);

impl std::fmt::Display for PeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PE {}", self.0)
    }
}

/// Static description of the simulated cluster.
#[derive(Debug, Clone)]
pub struct ClusterConfig {
    /// Hypercube dimension; the cluster has `p = 2^d` PEs.
    pub d: u32,
    /// Message startup cost in abstract time units.
    pub alpha: f64,
    /// Per-word transfer cost in abstract time units.
    pub beta: f64,
    /// Master seed; every PE derives its own streams from it.
    pub seed: u64,
}

impl ClusterConfig {
    pub fn new(d: u32, alpha: f64, beta: f64, seed: u64) -> Result<Self, SimError> {
        if d >= usize::BITS - 1 {
            return Err(SimError::Config(format!("dimension {d} too large")));
        }
        if !(alpha >= 0.0) || !(beta >= 0.0) {
            return Err(SimError::Config(format!(
                "costs must be non-negative, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(ClusterConfig { d, alpha, beta, seed })
    }

    /// Number of PEs, always a power of two.
    pub fn p(&self) -> usize {
        1 << self.d
    }
}

/// Per-PE cost counters, all monotone non-decreasing during a run.
#[derive(Debug, Clone, Default)]
pub struct CostLedger {
    /// Messages sent by each PE.
    pub startups: Vec<u64>,
    /// Words sent by each PE.
    pub words_sent: Vec<u64>,
    /// Words received by each PE.
    pub words_recv: Vec<u64>,
    /// Messages received by each PE.
    pub recv_msgs: Vec<u64>,
    /// Comparison-level local work per PE.
    pub local_work: Vec<u64>,
}

impl CostLedger {
    fn new(p: usize) -> Self {
        CostLedger {
            startups: vec![0; p],
            words_sent: vec![0; p],
            words_recv: vec![0; p],
            recv_msgs: vec![0; p],
            local_work: vec![0; p],
        }
    }

    pub fn total_words_sent(&self) -> u64 {
        self.words_sent.iter().sum()
    }

    pub fn total_words_recv(&self) -> u64 {
        self.words_recv.iter().sum()
    }

    /// Max over PEs of message events (sends plus receives). Under the
    /// single-ported model a PE pays a startup on both ends of a transfer.
    pub fn startups_max(&self) -> u64 {
        self.startups
            .iter()
            .zip(&self.recv_msgs)
            .map(|(s, r)| s + r)
            .max()
            .unwrap_or(0)
    }

    /// Max over PEs of transferred words (sent plus received).
    pub fn words_max(&self) -> u64 {
        self.words_sent
            .iter()
            .zip(&self.words_recv)
            .map(|(s, r)| s + r)
            .max()
            .unwrap_or(0)
    }

    /// `alpha * startups_max + beta * words_max`. This upper-bounds the
    /// send-only figure `max_pe alpha*startups[pe] + beta*words_sent[pe]`.
    pub fn modeled_time(&self, alpha: f64, beta: f64) -> f64 {
        alpha * self.startups_max() as f64 + beta * self.words_max() as f64
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("invalid cluster configuration: {0}")]
    Config(String),
    #[error("{pe} addressed out-of-range PE {dest} (p = {p})")]
    InvalidPe { pe: usize, dest: usize, p: usize },
    #[error("{0} attempted to message itself")]
    SelfMessage(PeId),
    #[error("deadlock: all live PEs blocked on receives with no matching messages; blocked PEs {blocked:?}")]
    Deadlock { blocked: Vec<usize> },
    #[error("collective contract violation: {0}")]
    ContractViolation(String),
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("run aborted because another PE failed")]
    Aborted,
}

/// Message tag. Distinct tags form independent FIFO channels per ordered PE
/// pair, so a phase that drains arbitrary traffic cannot swallow collective
/// messages in flight.
pub(crate) const TAG_P2P: u32 = 0;
pub(crate) const TAG_COLL: u32 = 1;
pub(crate) const TAG_DATA: u32 = 2;

struct NetState {
    /// queues[dest][(src, tag)] -> pending payloads in send order.
    queues: Vec<HashMap<(usize, u32), VecDeque<Vec<Word>>>>,
    /// What each PE is currently blocked on, if anything.
    waiting: Vec<Option<(usize, u32)>>,
    finished: Vec<bool>,
    deadlocked: Option<Vec<usize>>,
    aborted: bool,
}

impl NetState {
    fn check_deadlock(&mut self) {
        let p = self.finished.len();
        let mut blocked = Vec::new();
        for pe in 0..p {
            if self.finished[pe] {
                continue;
            }
            match self.waiting[pe] {
                Some(key) => {
                    if self.queues[pe].get(&key).is_some_and(|q| !q.is_empty()) {
                        return; // has a deliverable message, not blocked
                    }
                    blocked.push(pe);
                }
                None => return, // still running
            }
        }
        if !blocked.is_empty() {
            self.deadlocked = Some(blocked);
        }
    }
}

pub(crate) struct Net {
    state: Mutex<NetState>,
    cv: Condvar,
    p: usize,
}

impl Net {
    fn new(p: usize) -> Self {
        Net {
            state: Mutex::new(NetState {
                queues: (0..p).map(|_| HashMap::new()).collect(),
                waiting: vec![None; p],
                finished: vec![false; p],
                deadlocked: None,
                aborted: false,
            }),
            cv: Condvar::new(),
            p,
        }
    }

    fn push(&self, src: usize, dest: usize, tag: u32, payload: Vec<Word>) -> Result<(), SimError> {
        let mut st = self.state.lock().unwrap();
        if st.aborted {
            return Err(SimError::Aborted);
        }
        st.queues[dest].entry((src, tag)).or_default().push_back(payload);
        self.cv.notify_all();
        Ok(())
    }

    fn pop(&self, pe: usize, src: usize, tag: u32) -> Result<Vec<Word>, SimError> {
        let mut st = self.state.lock().unwrap();
        loop {
            if st.aborted {
                return Err(SimError::Aborted);
            }
            if let Some(blocked) = &st.deadlocked {
                return Err(SimError::Deadlock { blocked: blocked.clone() });
            }
            if let Some(q) = st.queues[pe].get_mut(&(src, tag)) {
                if let Some(m) = q.pop_front() {
                    st.waiting[pe] = None;
                    return Ok(m);
                }
            }
            st.waiting[pe] = Some((src, tag));
            st.check_deadlock();
            if st.deadlocked.is_some() {
                self.cv.notify_all();
                continue;
            }
            st = self.cv.wait(st).unwrap();
        }
    }

    /// Non-blocking: takes every currently queued message with this tag, in
    /// sender order. Deterministic only after a synchronizing collective.
    fn drain(&self, pe: usize, tag: u32) -> Vec<(usize, Vec<Word>)> {
        let mut st = self.state.lock().unwrap();
        let mut out = Vec::new();
        for src in 0..self.p {
            if let Some(q) = st.queues[pe].get_mut(&(src, tag)) {
                while let Some(m) = q.pop_front() {
                    out.push((src, m));
                }
            }
        }
        out
    }

    fn finish(&self, pe: usize) {
        let mut st = self.state.lock().unwrap();
        st.finished[pe] = true;
        st.check_deadlock();
        self.cv.notify_all();
    }

    fn abort(&self) {
        let mut st = self.state.lock().unwrap();
        st.aborted = true;
        self.cv.notify_all();
    }
}

#[derive(Default)]
struct Counters {
    startups: u64,
    words_sent: u64,
    words_recv: u64,
    recv_msgs: u64,
    local_work: u64,
}

/// Handle through which a PE program talks to the cluster.
pub struct Ctx<'a> {
    pe: usize,
    cfg: &'a ClusterConfig,
    net: &'a Net,
    counters: Counters,
    /// Sparse-exchange round counter and hold-back buffer for data messages
    /// drained one round early (see `collectives::sparse_exchange`).
    pub(crate) data_epoch: u64,
    pub(crate) data_stash: Vec<(u64, usize, Vec<Word>)>,
}

impl<'a> Ctx<'a> {
    pub fn pe(&self) -> usize {
        self.pe
    }

    pub fn p(&self) -> usize {
        self.cfg.p()
    }

    pub fn d(&self) -> u32 {
        self.cfg.d
    }

    pub fn config(&self) -> &ClusterConfig {
        self.cfg
    }

    /// Deterministic per-PE random stream for an algorithm phase. Streams
    /// depend only on (master seed, pe, phase), never on scheduling.
    pub fn rng(&self, phase: u64) -> ChaCha8Rng {
        derived_rng(self.cfg.seed, self.pe as u64, phase)
    }

    /// Charge comparison-level local work.
    pub fn charge_work(&mut self, comparisons: u64) {
        self.counters.local_work += comparisons;
    }

    pub fn send(&mut self, dest: usize, payload: Vec<Word>) -> Result<(), SimError> {
        self.send_tagged(dest, TAG_P2P, payload)
    }

    pub fn recv(&mut self, src: usize) -> Result<Vec<Word>, SimError> {
        self.recv_tagged(src, TAG_P2P)
    }

    pub(crate) fn send_tagged(
        &mut self,
        dest: usize,
        tag: u32,
        payload: Vec<Word>,
    ) -> Result<(), SimError> {
        if dest >= self.p() {
            return Err(SimError::InvalidPe { pe: self.pe, dest, p: self.p() });
        }
        if dest == self.pe {
            return Err(SimError::SelfMessage(PeId(self.pe)));
        }
        self.counters.startups += 1;
        self.counters.words_sent += payload.len() as u64;
        self.net.push(self.pe, dest, tag, payload)
    }

    pub(crate) fn recv_tagged(&mut self, src: usize, tag: u32) -> Result<Vec<Word>, SimError> {
        if src >= self.p() {
            return Err(SimError::InvalidPe { pe: self.pe, dest: src, p: self.p() });
        }
        if src == self.pe {
            return Err(SimError::SelfMessage(PeId(self.pe)));
        }
        let m = self.net.pop(self.pe, src, tag)?;
        self.counters.recv_msgs += 1;
        self.counters.words_recv += m.len() as u64;
        Ok(m)
    }

    /// Simultaneous send/receive with a partner; safe because sends are
    /// buffered.
    pub(crate) fn exchange_tagged(
        &mut self,
        partner: usize,
        tag: u32,
        payload: Vec<Word>,
    ) -> Result<Vec<Word>, SimError> {
        self.send_tagged(partner, tag, payload)?;
        self.recv_tagged(partner, tag)
    }

    pub fn exchange(&mut self, partner: usize, payload: Vec<Word>) -> Result<Vec<Word>, SimError> {
        self.exchange_tagged(partner, TAG_P2P, payload)
    }

    /// Collect all pending messages with `tag`, in sender order. Only
    /// deterministic when called after a collective that synchronizes all
    /// potential senders (see `collectives::sparse_exchange`).
    pub(crate) fn drain_tagged(&mut self, tag: u32) -> Vec<(usize, Vec<Word>)> {
        let msgs = self.net.drain(self.pe, tag);
        for (_, m) in &msgs {
            self.counters.recv_msgs += 1;
            self.counters.words_recv += m.len() as u64;
        }
        msgs
    }
}

fn split_mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream derivation shared by the simulator and the pure generators.
pub fn derived_rng(seed: u64, stream: u64, phase: u64) -> ChaCha8Rng {
    let s = split_mix(seed ^ split_mix(stream ^ split_mix(phase)));
    ChaCha8Rng::seed_from_u64(s)
}

/// Run `program` on every PE of the cluster described by `cfg` and collect
/// per-PE outputs and the cost ledger. Bit-identical across repeated runs
/// with the same config and inputs.
pub fn run_spmd<I, O, F>(
    cfg: &ClusterConfig,
    inputs: Vec<I>,
    program: F,
) -> Result<(Vec<O>, CostLedger), SimError>
where
    I: Send,
    O: Send,
    F: Fn(&mut Ctx, I) -> Result<O, SimError> + Sync,
{
    let p = cfg.p();
    if inputs.len() != p {
        return Err(SimError::Config(format!(
            "expected {p} per-PE inputs, got {}",
            inputs.len()
        )));
    }
    let net = Net::new(p);
    let mut results: Vec<Option<(Result<O, SimError>, Counters)>> = Vec::new();
    for _ in 0..p {
        results.push(None);
    }

    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(p);
        for (pe, input) in inputs.into_iter().enumerate() {
            let net = &net;
            let program = &program;
            handles.push(scope.spawn(move || {
                let mut ctx = Ctx {
                    pe,
                    cfg,
                    net,
                    counters: Counters::default(),
                    data_epoch: 0,
                    data_stash: Vec::new(),
                };
                let out = program(&mut ctx, input);
                if out.is_err() {
                    // Wake everyone; a failed PE can no longer send.
                    if !matches!(out, Err(SimError::Deadlock { .. }) | Err(SimError::Aborted)) {
                        net.abort();
                    }
                }
                net.finish(pe);
                (out, ctx.counters)
            }));
        }
        for (pe, h) in handles.into_iter().enumerate() {
            results[pe] = Some(h.join().expect("PE thread panicked"));
        }
    });

    let mut ledger = CostLedger::new(p);
    let mut outputs = Vec::with_capacity(p);
    let mut first_err: Option<SimError> = None;
    for (pe, slot) in results.into_iter().enumerate() {
        let (out, c) = slot.unwrap();
        ledger.startups[pe] = c.startups;
        ledger.words_sent[pe] = c.words_sent;
        ledger.words_recv[pe] = c.words_recv;
        ledger.recv_msgs[pe] = c.recv_msgs;
        ledger.local_work[pe] = c.local_work;
        match out {
            Ok(o) => outputs.push(o),
            Err(e) => {
                // Prefer the root cause over secondary aborts.
                let replace = match (&first_err, &e) {
                    (None, _) => true,
                    (Some(SimError::Aborted), e) if *e != SimError::Aborted => true,
                    (Some(SimError::Deadlock { .. }), _) => false,
                    (Some(_), SimError::Deadlock { .. }) => true,
                    _ => false,
                };
                if replace {
                    first_err = Some(e);
                }
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok((outputs, ledger)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(d: u32) -> ClusterConfig {
        ClusterConfig::new(d, 1000.0, 1.0, 42).unwrap()
    }

    #[test]
    fn single_pe_local_sort_no_comm() {
        let (out, ledger) = run_spmd(&cfg(0), vec![vec![3u64, 1, 2]], |_ctx, mut a: Vec<u64>| {
            a.sort_unstable();
            Ok(a)
        })
        .unwrap();
        assert_eq!(out, vec![vec![1, 2, 3]]);
        assert_eq!(ledger.startups, vec![0]);
        assert_eq!(ledger.words_sent, vec![0]);
        assert_eq!(ledger.words_recv, vec![0]);
    }

    #[test]
    fn pairwise_exchange_charges_symmetrically() {
        let (out, ledger) = run_spmd(&cfg(1), vec![7u64, 9u64], |ctx, x| {
            let partner = ctx.pe() ^ 1;
            let got = ctx.exchange(partner, vec![x])?;
            Ok(got[0])
        })
        .unwrap();
        assert_eq!(out, vec![9, 7]);
        assert_eq!(ledger.startups, vec![1, 1]);
        assert_eq!(ledger.words_sent, vec![1, 1]);
        assert_eq!(ledger.words_recv, vec![1, 1]);
    }

    #[test]
    fn pair_fifo_order() {
        let (out, _) = run_spmd(&cfg(1), vec![(), ()], |ctx, _| {
            if ctx.pe() == 0 {
                ctx.send(1, vec![10])?;
                ctx.send(1, vec![20])?;
                Ok(vec![])
            } else {
                let a = ctx.recv(0)?;
                let b = ctx.recv(0)?;
                Ok(vec![a[0], b[0]])
            }
        })
        .unwrap();
        assert_eq!(out[1], vec![10, 20]);
    }

    #[test]
    fn payload_transferred_intact() {
        let (out, ledger) = run_spmd(&cfg(1), vec![(), ()], |ctx, _| {
            if ctx.pe() == 0 {
                ctx.send(1, vec![7, 9])?;
                Ok(vec![])
            } else {
                ctx.recv(0)
            }
        })
        .unwrap();
        assert_eq!(out[1], vec![7, 9]);
        assert_eq!(ledger.startups[0], 1);
        assert_eq!(ledger.words_sent[0], 2);
        assert_eq!(ledger.words_recv[1], 2);
    }

    #[test]
    fn deadlock_detected_and_names_blocked_pe() {
        let err = run_spmd(&cfg(2), vec![(), (), (), ()], |ctx, _| {
            if ctx.pe() == 1 {
                ctx.recv(0)?; // no matching send anywhere
            }
            Ok(())
        })
        .unwrap_err();
        match err {
            SimError::Deadlock { blocked } => assert_eq!(blocked, vec![1]),
            other => panic!("expected deadlock, got {other:?}"),
        }
    }

    #[test]
    fn self_send_rejected() {
        let err = run_spmd(&cfg(1), vec![(), ()], |ctx, _| {
            if ctx.pe() == 0 {
                ctx.send(0, vec![1])?;
            }
            Ok(())
        })
        .unwrap_err();
        assert_eq!(err, SimError::SelfMessage(PeId(0)));
    }

    #[test]
    fn out_of_range_dest_rejected() {
        let err = run_spmd(&cfg(1), vec![(), ()], |ctx, _| {
            if ctx.pe() == 0 {
                ctx.send(5, vec![1])?;
            }
            Ok(())
        })
        .unwrap_err();
        assert!(matches!(err, SimError::InvalidPe { dest: 5, .. }));
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            run_spmd(&cfg(3), (0..8).map(|i| vec![i as u64; 4]).collect(), |ctx, a: Vec<u64>| {
                let mut rng = ctx.rng(99);
                use rand::Rng;
                let partner = ctx.pe() ^ 1;
                let mut m = a.clone();
                m.push(rng.gen());
                let got = ctx.exchange(partner, m)?;
                Ok(got)
            })
            .unwrap()
        };
        let (o1, l1) = run();
        let (o2, l2) = run();
        assert_eq!(o1, o2);
        assert_eq!(l1.startups, l2.startups);
        assert_eq!(l1.words_sent, l2.words_sent);
    }

    #[test]
    fn conservation_of_words() {
        let (_, ledger) = run_spmd(&cfg(2), vec![(); 4], |ctx, _| {
            let partner = ctx.pe() ^ 1;
            ctx.exchange(partner, vec![1, 2, 3])?;
            let partner2 = ctx.pe() ^ 2;
            ctx.exchange(partner2, vec![4])?;
            Ok(())
        })
        .unwrap();
        assert_eq!(ledger.total_words_sent(), ledger.total_words_recv());
    }
}
