use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use crate::hierarchy::{HcsspModel, HierarchicalSolution};

use super::{initial_partition, split_longest_edge, BnbError, Bounder, Partition, PartitionBounds};

#[derive(Debug, Clone)]
pub struct BnbConfig {
    /// Stop once `alpha - beta <= epsilon`.
    pub epsilon: f64,
    /// Stage-2 expansion cap passed to every constrained SSP solve.
    pub l: Option<usize>,
    pub max_iterations: Option<usize>,
    pub time_budget: Option<Duration>,
    /// Bound the two children of a split on separate threads.
    pub parallel: bool,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            l: None,
            max_iterations: None,
            time_budget: None,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnbTraceRecord {
    pub k: usize,
    pub wall_time_s: f64,
    pub alpha: f64,
    pub beta: f64,
    pub incumbent_obj: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    IterationLimit,
    TimeBudget,
    /// Every remaining partition is degenerate and cannot be split.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct BnbOutcome {
    pub solution: Option<HierarchicalSolution>,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub partitions_bounded: usize,
    pub activity_solves: usize,
    pub stop: StopReason,
    pub trace: Vec<BnbTraceRecord>,
}

impl BnbOutcome {
    pub fn gap(&self) -> f64 {
        self.alpha - self.beta
    }

    pub fn relative_gap(&self) -> f64 {
        if self.alpha == self.beta {
            0.0
        } else {
            (self.alpha - self.beta) / self.alpha.abs()
        }
    }
}

struct Node {
    q: Partition,
    beta: f64,
    depth: usize,
    seq: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Reversed so the max-heap pops the smallest bound; ties go to the
    // deepest partition, then the oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .beta
            .total_cmp(&self.beta)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    config: &'a BnbConfig,
    bounder: Bounder<'a>,
    start: Instant,
    heap: BinaryHeap<Node>,
    seq: usize,
    /// Smallest bound among partitions set aside without splitting.
    parked: f64,
    alpha: f64,
    beta: f64,
    incumbent: Option<HierarchicalSolution>,
    trace: Vec<BnbTraceRecord>,
    bounded: usize,
}

impl Search<'_> {
    fn offer(&mut self, q: Partition, b: PartitionBounds, parent_beta: f64, depth: usize) {
        self.bounded += 1;
        if b.upper.alpha < self.alpha {
            self.alpha = b.upper.alpha;
            self.incumbent = b.upper.solution;
        }
        let beta = b.beta.max(parent_beta);
        if beta == f64::INFINITY {
            return;
        }
        if beta >= self.alpha - self.config.epsilon {
            self.parked = self.parked.min(beta);
            return;
        }
        self.seq += 1;
        self.heap.push(Node {
            q,
            beta,
            depth,
            seq: self.seq,
        });
    }

    fn refresh_beta(&mut self) {
        let open = self.heap.peek().map_or(f64::INFINITY, |n| n.beta);
        let b = open.min(self.parked).min(self.alpha);
        self.beta = self.beta.max(b).min(self.alpha);
    }

    fn record(&mut self, k: usize) {
        self.trace.push(BnbTraceRecord {
            k,
            wall_time_s: self.start.elapsed().as_secs_f64(),
            alpha: self.alpha,
            beta: self.beta,
            incumbent_obj: self.incumbent.as_ref().map(|s| s.objective),
        });
    }

    fn bound_pair(
        &self,
        a: &Partition,
        b: &Partition,
    ) -> Result<(PartitionBounds, PartitionBounds), BnbError> {
        if self.config.parallel {
            std::thread::scope(|scope| {
                let right = scope.spawn(|| self.bounder.bound(b));
                let left = self.bounder.bound(a);
                let right = right.join().expect("bounding thread panicked");
                Ok((left?, right?))
            })
        } else {
            Ok((self.bounder.bound(a)?, self.bounder.bound(b)?))
        }
    }
}

/// Branch and bound over budget allocations. Returns the incumbent with the
/// final `alpha`/`beta` certificate, or an error carrying the outcome when
/// no feasible solution was found.
pub fn branch_and_bound(model: &HcsspModel, config: &BnbConfig) -> Result<BnbOutcome, BnbError> {
    let root = initial_partition(model)?;
    let mut s = Search {
        config,
        bounder: Bounder::new(model, config.l)?,
        start: Instant::now(),
        heap: BinaryHeap::new(),
        seq: 0,
        parked: f64::INFINITY,
        alpha: f64::INFINITY,
        beta: f64::NEG_INFINITY,
        incumbent: None,
        trace: Vec::new(),
        bounded: 0,
    };
    let b = s.bounder.bound(&root)?;
    s.offer(root, b, f64::NEG_INFINITY, 0);
    s.refresh_beta();
    s.record(0);

    let mut k = 0;
    let stop = loop {
        if s.alpha - s.beta <= config.epsilon || s.beta == f64::INFINITY {
            break StopReason::Converged;
        }
        let Some(node) = s.heap.pop() else {
            break if s.parked < f64::INFINITY || s.alpha < f64::INFINITY {
                StopReason::Stalled
            } else {
                StopReason::Converged
            };
        };
        if config.max_iterations.is_some_and(|m| k >= m) {
            s.heap.push(node);
            break StopReason::IterationLimit;
        }
        if config.time_budget.is_some_and(|t| s.start.elapsed() >= t) {
            s.heap.push(node);
            break StopReason::TimeBudget;
        }
        k += 1;
        match split_longest_edge(&node.q) {
            Ok((left, right)) => {
                let (bl, br) = s.bound_pair(&left, &right)?;
                s.offer(left, bl, node.beta, node.depth + 1);
                s.offer(right, br, node.beta, node.depth + 1);
            }
            Err(BnbError::DegeneratePartition) => s.parked = s.parked.min(node.beta),
            Err(e) => return Err(e),
        }
        s.refresh_beta();
        s.record(k);
    };
    if stop == StopReason::Converged && s.heap.is_empty() && s.parked == f64::INFINITY {
        s.beta = s.alpha;
        if let Some(last) = s.trace.last_mut() {
            last.beta = s.beta;
        }
    }

    let outcome = BnbOutcome {
        solution: s.incumbent,
        alpha: s.alpha,
        beta: s.beta,
        iterations: k,
        partitions_bounded: s.bounded,
        activity_solves: s.bounder.activity_solves(),
        stop,
        trace: s.trace,
    };
    if outcome.solution.is_some() {
        Ok(outcome)
    } else if outcome.beta == f64::INFINITY {
        Err(BnbError::ConvergedInfeasible(Box::new(outcome)))
    } else {
        Err(BnbError::NoFeasibleSolution(Box::new(outcome)))
    }
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Writes `k,wall_time_s,alpha_k,beta_k,incumbent_obj`; a missing incumbent
/// is an empty field.
pub fn write_bnb_trace_csv(trace: &[BnbTraceRecord], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "k,wall_time_s,alpha_k,beta_k,incumbent_obj")?;
    for r in trace {
        writeln!(
            out,
            "{},{:.6},{},{},{}",
            r.k,
            r.wall_time_s,
            num(r.alpha),
            num(r.beta),
            r.incumbent_obj.map(num).unwrap_or_default()
        )?;
    }
    Ok(())
}
