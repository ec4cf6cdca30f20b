//! (m,k)-frame policy: dynamic-failure detection over sliding windows,
//! per-class degradation arithmetic, drop planning over a k-frames pattern
//! and the send/reject rule applied by video servers.

use std::collections::VecDeque;

use thiserror::Error;

use crate::stream::{Frame, FrameClass, KFramePattern, PatternLabel};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("invalid (m,k) = ({m},{k}): need m <= k")]
    BadConstraint { m: u32, k: u32 },
    #[error("I frames are never shed: need m_i = k_i, got ({m},{k})")]
    SheddingMandatory { m: u32, k: u32 },
    #[error("class ordering m_i >= m_p >= m_b violated: ({i}, {p}, {b})")]
    Ordering { i: u32, p: u32, b: u32 },
    #[error("cannot drop {requested} frames labeled {label:?}: pattern has only {available}")]
    TooManyDrops {
        label: PatternLabel,
        requested: usize,
        available: usize,
    },
}

/// At least `m` of any `k` consecutive frames must meet their deadline.
///
/// `m = 0` is accepted so that a class can be shed entirely, and `(0,0)`
/// stands for a class absent from the GoP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MkConstraint {
    m: u32,
    k: u32,
}

impl MkConstraint {
    pub fn new(m: u32, k: u32) -> Result<Self, PolicyError> {
        if m > k {
            return Err(PolicyError::BadConstraint { m, k });
        }
        Ok(MkConstraint { m, k })
    }

    /// `(k,k)`: every frame must arrive.
    pub fn hard(k: u32) -> Result<Self, PolicyError> {
        Self::new(k, k)
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Largest number of misses a window may contain without dynamic failure.
    pub fn tolerated_misses(&self) -> u32 {
        self.k - self.m
    }

    pub fn is_full(&self) -> bool {
        self.m == self.k
    }
}

/// How [`ClassConstraintSet::check_ordering`] compares `m_i`, `m_p`, `m_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrderingRule {
    /// No ordering check.
    #[default]
    Off,
    /// `m_i >= m_p >= m_b`
    NonStrict,
    /// `m_i > m_p > m_b`
    Strict,
}

/// One constraint per frame class. `i` is always `(k,k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClassConstraintSet {
    i: MkConstraint,
    p: MkConstraint,
    b: MkConstraint,
}

impl ClassConstraintSet {
    pub fn new(i: MkConstraint, p: MkConstraint, b: MkConstraint) -> Result<Self, PolicyError> {
        if !i.is_full() {
            return Err(PolicyError::SheddingMandatory { m: i.m, k: i.k });
        }
        Ok(ClassConstraintSet { i, p, b })
    }

    /// Shorthand for tests and configs: `((m_i,k_i),(m_p,k_p),(m_b,k_b))`.
    pub fn from_pairs(i: (u32, u32), p: (u32, u32), b: (u32, u32)) -> Result<Self, PolicyError> {
        Self::new(
            MkConstraint::new(i.0, i.1)?,
            MkConstraint::new(p.0, p.1)?,
            MkConstraint::new(b.0, b.1)?,
        )
    }

    /// Full quality for one GoP with the given class counts.
    pub fn full(n_i: u32, n_p: u32, n_b: u32) -> Result<Self, PolicyError> {
        Self::from_pairs((n_i, n_i), (n_p, n_p), (n_b, n_b))
    }

    pub fn i(&self) -> MkConstraint {
        self.i
    }

    pub fn p(&self) -> MkConstraint {
        self.p
    }

    pub fn b(&self) -> MkConstraint {
        self.b
    }

    pub fn class(&self, class: FrameClass) -> MkConstraint {
        match class {
            FrameClass::I => self.i,
            FrameClass::P => self.p,
            FrameClass::B => self.b,
        }
    }

    /// Σm: frames per window that are actually transmitted.
    pub fn total_m(&self) -> u32 {
        self.i.m + self.p.m + self.b.m
    }

    /// Σk: frames per window at full quality.
    pub fn total_k(&self) -> u32 {
        self.i.k + self.p.k + self.b.k
    }

    pub fn is_full(&self) -> bool {
        self.p.is_full() && self.b.is_full()
    }

    pub(crate) fn with_m(&self, m_p: u32, m_b: u32) -> Self {
        ClassConstraintSet {
            i: self.i,
            p: MkConstraint { m: m_p.min(self.p.k), k: self.p.k },
            b: MkConstraint { m: m_b.min(self.b.k), k: self.b.k },
        }
    }

    pub fn check_ordering(&self, rule: OrderingRule) -> Result<(), PolicyError> {
        let (i, p, b) = (self.i.m, self.p.m, self.b.m);
        let ok = match rule {
            OrderingRule::Off => true,
            OrderingRule::NonStrict => i >= p && p >= b,
            OrderingRule::Strict => i > p && p > b,
        };
        if ok {
            Ok(())
        } else {
            Err(PolicyError::Ordering { i, p, b })
        }
    }
}

/// True iff some full window of `k` consecutive outcomes (`true` = deadline
/// met) holds more than `k - m` misses. Histories shorter than `k` have no
/// full window and never fail.
pub fn dynamic_failure(history: &[bool], constraint: MkConstraint) -> bool {
    let k = constraint.k as usize;
    if k == 0 || history.len() < k {
        return false;
    }
    let limit = constraint.tolerated_misses() as usize;
    let mut misses = history[..k].iter().filter(|&&met| !met).count();
    if misses > limit {
        return true;
    }
    for idx in k..history.len() {
        misses += usize::from(!history[idx]);
        misses -= usize::from(!history[idx - k]);
        if misses > limit {
            return true;
        }
    }
    false
}

/// Sliding window over the `k` most recent outcomes of one frame class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeWindow {
    constraint: MkConstraint,
    outcomes: VecDeque<bool>,
    misses: usize,
}

impl OutcomeWindow {
    pub fn new(constraint: MkConstraint) -> Self {
        OutcomeWindow {
            constraint,
            outcomes: VecDeque::with_capacity(constraint.k as usize),
            misses: 0,
        }
    }

    pub fn constraint(&self) -> MkConstraint {
        self.constraint
    }

    pub fn outcomes(&self) -> impl Iterator<Item = bool> + '_ {
        self.outcomes.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Appends one outcome, evicting the oldest beyond `k`, and returns the
    /// failure flag of the stored window.
    pub fn record_outcome(&mut self, met: bool) -> bool {
        if self.constraint.k == 0 {
            return false;
        }
        if self.outcomes.len() == self.constraint.k as usize {
            if let Some(old) = self.outcomes.pop_front() {
                self.misses -= usize::from(!old);
            }
        }
        self.outcomes.push_back(met);
        self.misses += usize::from(!met);
        self.in_failure()
    }

    pub fn in_failure(&self) -> bool {
        self.outcomes.len() == self.constraint.k as usize
            && self.misses > self.constraint.tolerated_misses() as usize
    }
}

/// Frames removed per class for one window, `k_c - m_c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassRemoval {
    pub i: usize,
    pub p: usize,
    pub b: usize,
}

impl ClassRemoval {
    pub fn total(&self) -> usize {
        self.i + self.p + self.b
    }
}

/// `M - N = (k_i - m_i) + (k_p - m_p) + (k_b - m_b)`; the I term is always zero.
pub fn frames_to_remove(classes: &ClassConstraintSet) -> ClassRemoval {
    let gap = |c: MkConstraint| (c.k - c.m) as usize;
    ClassRemoval {
        i: gap(classes.i),
        p: gap(classes.p),
        b: gap(classes.b),
    }
}

/// Smallest distance between consecutive entries of an ascending position
/// list, `None` for fewer than two positions.
pub fn min_gap(positions: &[usize]) -> Option<usize> {
    positions.windows(2).map(|w| w[1] - w[0]).min()
}

/// Picks `count` of `candidates` (ascending) maximizing the minimum gap;
/// among optimal selections, the lexicographically smallest.
fn spread_selection(candidates: &[usize], count: usize) -> Vec<usize> {
    if count == 0 {
        return Vec::new();
    }
    if count >= candidates.len() {
        return candidates.to_vec();
    }
    if count == 1 {
        return vec![candidates[0]];
    }
    let span = candidates[candidates.len() - 1] - candidates[0];
    // Leftmost greedy with gap >= d succeeds iff any selection with min gap
    // >= d exists, and its result is the lexicographically smallest one.
    let greedy = |d: usize| {
        let mut picked = Vec::with_capacity(count);
        for &pos in candidates {
            if picked.last().map_or(true, |&last: &usize| pos - last >= d) {
                picked.push(pos);
                if picked.len() == count {
                    return Some(picked);
                }
            }
        }
        None
    };
    (1..=span / (count - 1))
        .rev()
        .find_map(greedy)
        .expect("gap 1 always feasible when count <= candidates")
}

/// Chooses which pattern positions to drop: `removal.b` O positions and
/// `removal.p` H positions, each set spread as evenly as possible. M
/// positions are never selected. Returned positions are ascending.
pub fn plan_degradation(
    pattern: &KFramePattern,
    removal: ClassRemoval,
) -> Result<Vec<usize>, PolicyError> {
    if removal.i > 0 {
        return Err(PolicyError::TooManyDrops {
            label: PatternLabel::M,
            requested: removal.i,
            available: 0,
        });
    }
    let mut out = Vec::with_capacity(removal.p + removal.b);
    for (label, count) in [(PatternLabel::H, removal.p), (PatternLabel::O, removal.b)] {
        let candidates = pattern.positions(label);
        if count > candidates.len() {
            return Err(PolicyError::TooManyDrops {
                label,
                requested: count,
                available: candidates.len(),
            });
        }
        out.extend(spread_selection(&candidates, count));
    }
    out.sort_unstable();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServerAvailability {
    Occupied,
    Available,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleDecision {
    Send,
    Reject,
}

impl ScheduleDecision {
    /// Server state the decision leaves behind: sending occupies it.
    pub fn server_state_after(self) -> ServerAvailability {
        match self {
            ScheduleDecision::Send => ServerAvailability::Occupied,
            ScheduleDecision::Reject => ServerAvailability::Available,
        }
    }
}

/// Send/reject rule by k-frames label:
/// mandatory frames are always sent, optional frames are rejected once late,
/// hard optional frames only when late *and* every optional frame of the
/// current GoP has already been rejected.
pub fn schedule_label(
    label: PatternLabel,
    deadline_missed: bool,
    all_optional_rejected: bool,
) -> ScheduleDecision {
    let reject = match label {
        PatternLabel::M => false,
        PatternLabel::H => all_optional_rejected && deadline_missed,
        PatternLabel::O => deadline_missed,
    };
    if reject {
        ScheduleDecision::Reject
    } else {
        ScheduleDecision::Send
    }
}

pub fn schedule_frame<T>(
    frame: &Frame<T>,
    deadline_missed: bool,
    all_optional_rejected: bool,
) -> ScheduleDecision {
    schedule_label(frame.label, deadline_missed, all_optional_rejected)
}
