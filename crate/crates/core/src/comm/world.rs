use std::any::Any;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;

use super::cost::{ceil_log2, CostCounters};
use super::CommError;
use crate::sparse::FlopCount;

/// How rank programs are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// One rank runs at a time, handing control to the next rank in
    /// round-robin order whenever it enters a collective.
    #[default]
    LockstepSerial,
    /// Every rank runs freely on its own thread and blocks at collectives.
    Threaded,
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lockstep" | "serial" | "lockstep-serial" => Ok(Backend::LockstepSerial),
            "threaded" | "threads" => Ok(Backend::Threaded),
            other => Err(format!("unknown backend `{other}` (expected lockstep|threaded)")),
        }
    }
}

/// Counter convention for all-to-all exchanges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AllToAllModel {
    /// `L += lg P`, `W += sent * lg P`.
    #[default]
    SmallMessage,
    /// `L += P - 1`, `W += sent`.
    LargeMessage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommConfig {
    pub ranks: usize,
    pub backend: Backend,
    pub all_to_all: AllToAllModel,
}

impl CommConfig {
    pub fn new(ranks: usize, backend: Backend) -> Self {
        CommConfig {
            ranks,
            backend,
            all_to_all: AllToAllModel::default(),
        }
    }

    pub fn serial(ranks: usize) -> Self {
        Self::new(ranks, Backend::LockstepSerial)
    }
}

/// Something that can be shipped through [`Comm::all_to_all`]; `words` is what
/// the bandwidth counter is charged for it.
pub trait Payload: Send + 'static {
    fn words(&self) -> u64;
}

impl Payload for Vec<f64> {
    fn words(&self) -> u64 {
        self.len() as u64
    }
}

impl Payload for f64 {
    fn words(&self) -> u64 {
        1
    }
}

enum Deposit {
    Reduce(Vec<f64>),
    Broadcast {
        root: usize,
        buf: Vec<f64>,
    },
    AllToAll {
        bufs: Vec<Option<Box<dyn Any + Send>>>,
        sent_words: u64,
    },
    Sync,
}

impl Deposit {
    fn kind(&self) -> &'static str {
        match self {
            Deposit::Reduce(_) => "allreduce",
            Deposit::Broadcast { .. } => "broadcast",
            Deposit::AllToAll { .. } => "all_to_all",
            Deposit::Sync => "sync",
        }
    }
}

struct Slot {
    deposit: Deposit,
    pending: FlopCount,
}

enum Delivered {
    Values(Vec<f64>),
    Boxes(Vec<Box<dyn Any + Send>>),
    Nothing,
}

struct Outcome {
    delivered: Result<Delivered, CommError>,
    local: CostCounters,
    critical: CostCounters,
}

/// Deterministic binomial-tree sum: at stride `k`, rank `r` (a multiple of
/// `2k`) absorbs rank `r + k`. Both backends use this exact order.
pub(crate) fn tree_sum(mut bufs: Vec<Vec<f64>>) -> Vec<f64> {
    let p = bufs.len();
    let mut stride = 1;
    while stride < p {
        let mut r = 0;
        while r + stride < p {
            let (head, tail) = bufs.split_at_mut(r + stride);
            for (a, b) in head[r].iter_mut().zip(&tail[0]) {
                *a += *b;
            }
            r += 2 * stride;
        }
        stride *= 2;
    }
    bufs.swap_remove(0)
}

fn resolve(slots: Vec<Slot>, model: AllToAllModel) -> Vec<Outcome> {
    let p = slots.len();
    let lg = ceil_log2(p);
    let mut critical = CostCounters {
        flops: slots.iter().map(|s| s.pending.charged).max().unwrap_or(0),
        flops_actual: slots.iter().map(|s| s.pending.actual).max().unwrap_or(0),
        ..Default::default()
    };

    let fail = |msg: String, critical: CostCounters| -> Vec<Outcome> {
        (0..p)
            .map(|_| Outcome {
                delivered: Err(CommError::ContractViolation(msg.clone())),
                local: CostCounters::default(),
                critical,
            })
            .collect()
    };

    let kind = slots[0].deposit.kind();
    if let Some(s) = slots.iter().find(|s| s.deposit.kind() != kind) {
        return fail(
            format!("ranks entered different collectives ({kind} vs {})", s.deposit.kind()),
            critical,
        );
    }

    let uniform = |critical: CostCounters, local: CostCounters, values: Option<Vec<f64>>| {
        (0..p)
            .map(|_| Outcome {
                delivered: Ok(match &values {
                    Some(v) => Delivered::Values(v.clone()),
                    None => Delivered::Nothing,
                }),
                local,
                critical,
            })
            .collect()
    };

    match slots[0].deposit {
        Deposit::Sync => uniform(critical, CostCounters::default(), None),
        Deposit::Reduce(ref first) => {
            let len = first.len();
            let mut bufs = Vec::with_capacity(p);
            for s in slots {
                match s.deposit {
                    Deposit::Reduce(b) if b.len() == len => bufs.push(b),
                    Deposit::Reduce(b) => {
                        return fail(
                            format!("allreduce length mismatch ({len} vs {})", b.len()),
                            critical,
                        )
                    }
                    _ => unreachable!(),
                }
            }
            let comm = CostCounters {
                words: len as u64 * lg,
                messages: lg,
                ..Default::default()
            };
            critical += comm;
            uniform(critical, comm, Some(tree_sum(bufs)))
        }
        Deposit::Broadcast { root, .. } => {
            if root >= p {
                return (0..p)
                    .map(|_| Outcome {
                        delivered: Err(CommError::InvalidRoot { root, size: p }),
                        local: CostCounters::default(),
                        critical,
                    })
                    .collect();
            }
            let mut root_buf = None;
            for (rank, s) in slots.into_iter().enumerate() {
                match s.deposit {
                    Deposit::Broadcast { root: r, .. } if r != root => {
                        return fail(format!("broadcast roots disagree ({root} vs {r})"), critical)
                    }
                    Deposit::Broadcast { buf, .. } if rank == root => root_buf = Some(buf),
                    _ => {}
                }
            }
            let buf = root_buf.expect("root deposited");
            let comm = CostCounters {
                words: buf.len() as u64 * lg,
                messages: lg,
                ..Default::default()
            };
            critical += comm;
            uniform(critical, comm, Some(buf))
        }
        Deposit::AllToAll { .. } => {
            let mut matrix = Vec::with_capacity(p);
            let mut sent = Vec::with_capacity(p);
            for s in slots {
                match s.deposit {
                    Deposit::AllToAll { bufs, sent_words } => {
                        if bufs.len() != p {
                            return fail(
                                format!("all_to_all expects {p} send buffers, got {}", bufs.len()),
                                critical,
                            );
                        }
                        matrix.push(bufs);
                        sent.push(sent_words);
                    }
                    _ => unreachable!(),
                }
            }
            let messages = match model {
                AllToAllModel::SmallMessage => lg,
                AllToAllModel::LargeMessage => p as u64 - 1,
            };
            let charge = |w: u64| match model {
                AllToAllModel::SmallMessage => w * lg,
                AllToAllModel::LargeMessage => w,
            };
            critical.words += charge(sent.iter().copied().max().unwrap_or(0));
            critical.messages += messages;
            (0..p)
                .map(|dst| {
                    let recv = matrix
                        .iter_mut()
                        .map(|row| row[dst].take().expect("each cell delivered once"))
                        .collect();
                    Outcome {
                        delivered: Ok(Delivered::Boxes(recv)),
                        local: CostCounters {
                            words: charge(sent[dst]),
                            messages,
                            ..Default::default()
                        },
                        critical,
                    }
                })
                .collect()
        }
    }
}

struct State {
    generation: u64,
    arrived: usize,
    slots: Vec<Option<Slot>>,
    outcomes: Vec<Option<Outcome>>,
    turn: usize,
    finished: usize,
    poisoned: bool,
}

struct Shared {
    size: usize,
    backend: Backend,
    model: AllToAllModel,
    state: Mutex<State>,
    cv: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn wait_turn<'a>(&self, mut st: MutexGuard<'a, State>, rank: usize) -> MutexGuard<'a, State> {
        if self.backend == Backend::LockstepSerial {
            while st.turn != rank && !st.poisoned {
                st = self.cv.wait(st).unwrap_or_else(|e| e.into_inner());
            }
        }
        st
    }

    fn exchange(&self, rank: usize, slot: Slot) -> Result<Outcome, CommError> {
        let st = self.lock();
        let mut st = self.wait_turn(st, rank);
        if st.poisoned {
            return Err(CommError::RankExited);
        }
        if st.finished > 0 {
            st.poisoned = true;
            self.cv.notify_all();
            return Err(CommError::RankExited);
        }
        st.slots[rank] = Some(slot);
        st.arrived += 1;
        let generation = st.generation;
        if st.arrived == self.size {
            let slots = st
                .slots
                .iter_mut()
                .map(|s| s.take().expect("every rank deposited"))
                .collect();
            for (dst, out) in resolve(slots, self.model).into_iter().enumerate() {
                st.outcomes[dst] = Some(out);
            }
            st.arrived = 0;
            st.generation += 1;
            st.turn = 0;
            self.cv.notify_all();
        } else {
            if self.backend == Backend::LockstepSerial {
                st.turn = (rank + 1) % self.size;
                self.cv.notify_all();
            }
            while st.generation == generation && !st.poisoned {
                st = self.cv.wait(st).unwrap_or_else(|e| e.into_inner());
            }
            if st.generation == generation {
                return Err(CommError::RankExited);
            }
        }
        let out = st.outcomes[rank].take().expect("outcome for this rank");
        drop(self.wait_turn(st, rank));
        Ok(out)
    }

    fn finish(&self, rank: usize) {
        let st = self.lock();
        let mut st = self.wait_turn(st, rank);
        st.finished += 1;
        if st.arrived > 0 {
            st.poisoned = true;
        }
        if self.backend == Backend::LockstepSerial {
            st.turn = (rank + 1) % self.size;
        }
        self.cv.notify_all();
    }
}

struct FinishGuard {
    shared: Arc<Shared>,
    rank: usize,
}

impl Drop for FinishGuard {
    fn drop(&mut self) {
        self.shared.finish(self.rank);
    }
}

/// A rank's handle to the collective world and its cost counters.
pub struct Comm {
    rank: usize,
    size: usize,
    backend: Backend,
    model: AllToAllModel,
    shared: Option<Arc<Shared>>,
    local: CostCounters,
    critical: CostCounters,
    pending: FlopCount,
}

impl Comm {
    fn new(rank: usize, config: &CommConfig, shared: Option<Arc<Shared>>) -> Self {
        Comm {
            rank,
            size: config.ranks,
            backend: config.backend,
            model: config.all_to_all,
            shared,
            local: CostCounters::default(),
            critical: CostCounters::default(),
            pending: FlopCount::default(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// Credits local floating-point work to this rank.
    pub fn charge(&mut self, work: FlopCount) {
        self.local.add_flops(work);
        self.pending += work;
    }

    pub fn charge_flops(&mut self, flops: u64) {
        self.charge(FlopCount::exact(flops));
    }

    /// This rank's own counters.
    pub fn counters(&self) -> CostCounters {
        self.local
    }

    /// Critical-path counters as of the last collective (call
    /// [`Comm::sync_counters`] first to fold in trailing local work).
    pub fn critical_path(&self) -> CostCounters {
        self.critical
    }

    fn collective(&mut self, deposit: Deposit) -> Result<Delivered, CommError> {
        let slot = Slot {
            deposit,
            pending: std::mem::take(&mut self.pending),
        };
        let outcome = match &self.shared {
            None => resolve(vec![slot], self.model)
                .pop()
                .expect("one outcome"),
            Some(shared) => shared.exchange(self.rank, slot)?,
        };
        self.local.words += outcome.local.words;
        self.local.messages += outcome.local.messages;
        self.critical += outcome.critical;
        outcome.delivered
    }

    /// Elementwise sum across ranks, in place; every rank receives the
    /// bitwise-identical result.
    pub fn allreduce_sum(&mut self, buf: &mut [f64]) -> Result<(), CommError> {
        match self.collective(Deposit::Reduce(buf.to_vec()))? {
            Delivered::Values(v) => {
                buf.copy_from_slice(&v);
                Ok(())
            }
            _ => unreachable!(),
        }
    }

    /// Replaces `buf` on every rank with the root's buffer.
    pub fn broadcast(&mut self, root: usize, buf: &mut Vec<f64>) -> Result<(), CommError> {
        if root >= self.size {
            return Err(CommError::InvalidRoot {
                root,
                size: self.size,
            });
        }
        let deposit = Deposit::Broadcast {
            root,
            buf: if self.rank == root {
                buf.clone()
            } else {
                Vec::new()
            },
        };
        match self.collective(deposit)? {
            Delivered::Values(v) => {
                *buf = v;
                Ok(())
            }
            _ => unreachable!(),
        }
    }

    /// `send[j]` goes to rank `j`; the result's entry `j` came from rank `j`.
    /// Words sent to oneself are not charged.
    pub fn all_to_all<T: Payload>(&mut self, send: Vec<T>) -> Result<Vec<T>, CommError> {
        let sent_words = send
            .iter()
            .enumerate()
            .filter(|&(dst, _)| dst != self.rank)
            .map(|(_, t)| t.words())
            .sum();
        let bufs = send
            .into_iter()
            .map(|t| Some(Box::new(t) as Box<dyn Any + Send>))
            .collect();
        match self.collective(Deposit::AllToAll { bufs, sent_words })? {
            Delivered::Boxes(boxes) => boxes
                .into_iter()
                .map(|b| {
                    b.downcast::<T>().map(|t| *t).map_err(|_| {
                        CommError::ContractViolation("all_to_all payload types differ".into())
                    })
                })
                .collect(),
            _ => unreachable!(),
        }
    }

    /// Folds every rank's pending local flops into the critical path.
    /// Collective, but moves no data and charges no messages.
    pub fn sync_counters(&mut self) -> Result<(), CommError> {
        self.collective(Deposit::Sync).map(|_| ())
    }
}

/// Runs `program` once per rank and returns the per-rank results in rank order.
pub fn run_spmd<R, F>(config: &CommConfig, program: F) -> Result<Vec<R>, CommError>
where
    R: Send,
    F: Fn(&mut Comm) -> R + Sync,
{
    let p = config.ranks;
    if p == 0 {
        return Err(CommError::ZeroRanks);
    }
    if p == 1 {
        let mut comm = Comm::new(0, config, None);
        return Ok(vec![program(&mut comm)]);
    }
    let shared = Arc::new(Shared {
        size: p,
        backend: config.backend,
        model: config.all_to_all,
        state: Mutex::new(State {
            generation: 0,
            arrived: 0,
            slots: (0..p).map(|_| None).collect(),
            outcomes: (0..p).map(|_| None).collect(),
            turn: 0,
            finished: 0,
            poisoned: false,
        }),
        cv: Condvar::new(),
    });
    let program = &program;
    let results = thread::scope(|scope| {
        let handles: Vec<_> = (0..p)
            .map(|rank| {
                let shared = Arc::clone(&shared);
                thread::Builder::new()
                    .name(format!("rank-{rank}"))
                    .spawn_scoped(scope, move || {
                        let _guard = FinishGuard {
                            shared: Arc::clone(&shared),
                            rank,
                        };
                        drop(shared.wait_turn(shared.lock(), rank));
                        let mut comm = Comm::new(rank, config, Some(shared));
                        program(&mut comm)
                    })
                    .expect("spawn rank thread")
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)))
            .collect::<Vec<R>>()
    });
    Ok(results)
}
