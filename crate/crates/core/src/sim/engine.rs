//! Event loop of one replicate.
//!
//! Actors: the master (dispatch, feedback controller), video servers (token
//! bucket queues), the shared network (capacity per tick, random loss,
//! constant latency) and clients (deadline check, decode references).

use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet, VecDeque};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arrivals::{draw_arrivals, popularity_cdf, sample_index};
use super::config::{ConfigError, SimConfig};
use super::controller::{ControlState, FeedbackController, ServerLoad, SessionDemand};
use super::event::{EventKind, EventQueue, Payload};
use super::network::{network_step, Fate};
use super::metrics::{collect_metrics, BucketClose, BucketCounters, LossCause, MetricsSample, Rates};
use crate::mk::{frames_to_remove, plan_degradation, schedule_label, OutcomeWindow, ScheduleDecision};
use crate::replication::{
    apply_replication, handle_saturation, NeighborReport, ReplicationError, SaturationDecision,
    VideoCatalog,
};
use crate::scalar::{cmp_scalar, Scalar};
use crate::stream::{
    build_gop_template, classify_gop, deadline_slack, frame_at, FrameClass, GopTemplate,
    KFramePattern, PatternLabel, ServerId, StreamId, VideoId,
};

/// A request injected at a fixed time instead of a Poisson draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedRequest<T> {
    pub time: T,
    pub video: VideoId,
}

/// Overrides of the generated workload. `catalogs[s]` lists the videos
/// initially stored on server `s` (the server count follows its length).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scenario<T> {
    pub catalogs: Option<Vec<Vec<VideoId>>>,
    pub requests: Option<Vec<ScriptedRequest<T>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Served by the best holder.
    Direct,
    /// A saturated holder handed the request to a neighbor holding the video.
    Redirect,
    /// Served by a server that received a fresh copy.
    Replicated,
    /// Served after waiting for capacity.
    Waited,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RequestOutcome<T> {
    Served { server: ServerId, at: T, route: Route },
    Rejected { at: T },
    UnknownVideo,
    /// Still waiting when the run ended.
    Pending,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestRecord<T> {
    pub id: u32,
    pub video: VideoId,
    pub arrival: T,
    pub outcome: RequestOutcome<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationRecord<T> {
    pub video: VideoId,
    pub source: ServerId,
    pub target: ServerId,
    pub started: T,
    pub completed: Option<T>,
}

/// Controller activity during one sampling period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerPeriod<T> {
    pub time: T,
    pub sessions: u32,
    pub full_sessions: u32,
    pub changed: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunStats {
    pub requests: u64,
    pub sessions_started: u64,
    pub rejected_requests: u64,
    pub unknown_requests: u64,
    pub refused_sessions: u64,
    pub redirects: u64,
    pub replications_started: u64,
    pub replications_completed: u64,
    /// Frames recorded while their class window was in dynamic failure.
    pub window_failures: u64,
    /// Most frames one server sent within one unit-aligned time unit.
    pub max_server_sends_per_unit: u64,
    pub max_catalog_len: usize,
}

/// Everything observed in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport<T> {
    pub samples: Vec<MetricsSample<T>>,
    pub closes: Vec<BucketClose>,
    pub totals: BucketCounters,
    /// Frames still queued or in transit at `t_sim`.
    pub in_flight_end: u64,
    pub stats: RunStats,
    pub requests: Vec<RequestRecord<T>>,
    pub replications: Vec<ReplicationRecord<T>>,
    pub controller: Vec<ControllerPeriod<T>>,
    pub event_counts: [u64; EventKind::COUNT],
    /// FNV-1a digest of every processed event.
    pub trace_digest: u64,
}

impl<T: Scalar> SimReport<T> {
    pub fn rates(&self) -> Rates<T> {
        Rates::from_counters(&self.totals)
    }
}

#[derive(Debug, Clone, Copy)]
struct Queued<T> {
    prio: u8,
    order: u64,
    session: u32,
    gop: u32,
    seq: u32,
    label: PatternLabel,
    deadline: T,
    bucket: u32,
    first_tick: u64,
}

impl<T> PartialEq for Queued<T> {
    fn eq(&self, other: &Self) -> bool {
        self.prio == other.prio && self.order == other.order
    }
}

impl<T> Eq for Queued<T> {}

impl<T> PartialOrd for Queued<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Queued<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.prio
            .cmp(&other.prio)
            .then(other.order.cmp(&self.order))
    }
}

#[derive(Debug, Clone, Copy)]
struct InTransit<T> {
    session: u32,
    gop: u32,
    seq: u32,
    label: PatternLabel,
    deadline: T,
    bucket: u32,
}

#[derive(Debug, Clone, Copy, Default)]
struct GopTrack {
    received: u128,
    plan: u128,
    o_released: u16,
    o_rejected: u16,
}

#[derive(Debug)]
struct Session<T> {
    server: usize,
    qos: u32,
    start: T,
    next_index: u64,
    releasing: bool,
    gops: Vec<GopTrack>,
    windows: [OutcomeWindow; 3],
}

#[derive(Debug)]
struct Server<T> {
    id: ServerId,
    catalog: VideoCatalog,
    tokens: T,
    queue: BinaryHeap<Queued<T>>,
    committed: u64,
    sessions: Vec<u32>,
    sends_unit: u64,
    sends_in_unit: u64,
}

#[derive(Debug, Clone, Copy)]
struct Pending<T> {
    request: u32,
    video: VideoId,
    deadline: T,
    awaiting_copy: bool,
}

/// Per-position template data.
#[derive(Debug, Clone)]
struct Layout {
    template: GopTemplate,
    pattern: KFramePattern,
    refs: Vec<u128>,
}

impl Layout {
    fn new(template: GopTemplate) -> Self {
        let pattern = classify_gop(&template);
        let mut refs = Vec::with_capacity(template.len());
        let mut chain = 0u128;
        let mut last_p: Option<usize> = None;
        let mut i_mask = 0u128;
        for (pos, class) in template.frames().iter().enumerate() {
            match class {
                FrameClass::I => {
                    refs.push(0);
                    i_mask = 1 << pos;
                }
                FrameClass::P => {
                    refs.push(i_mask | chain);
                    chain |= 1 << pos;
                    last_p = Some(pos);
                }
                FrameClass::B => refs.push(i_mask | last_p.map_or(0, |p| 1u128 << p)),
            }
        }
        Layout {
            template,
            pattern,
            refs,
        }
    }
}

fn label_prio(label: PatternLabel) -> u8 {
    match label {
        PatternLabel::M => 2,
        PatternLabel::H => 1,
        PatternLabel::O => 0,
    }
}

const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv(hash: &mut u64, word: u64) {
    for b in word.to_le_bytes() {
        *hash ^= u64::from(b);
        *hash = hash.wrapping_mul(FNV_PRIME);
    }
}

/// One replicate: build with [`Simulation::new`], consume with
/// [`Simulation::run`].
pub struct Simulation<T: Scalar> {
    cfg: SimConfig<T>,
    layout: Layout,
    controller: FeedbackController,
    events: EventQueue<T>,
    now: T,
    servers: Vec<Server<T>>,
    sessions: Vec<Session<T>>,
    control: BTreeMap<u32, ControlState>,
    requests: Vec<RequestRecord<T>>,
    pending: Vec<Pending<T>>,
    replications: Vec<ReplicationRecord<T>>,
    replicas: HashSet<(usize, VideoId)>,
    deliveries: VecDeque<Vec<InTransit<T>>>,
    in_transit: u64,
    buckets: Vec<BucketCounters>,
    totals: BucketCounters,
    closes: Vec<BucketClose>,
    controller_trace: Vec<ControllerPeriod<T>>,
    stats: RunStats,
    event_counts: [u64; EventKind::COUNT],
    digest: u64,
    net_tokens: T,
    next_tick: Option<u64>,
    sampling_scheduled: bool,
    enqueue_order: u64,
    net_rng: ChaCha8Rng,
    plan_rng: ChaCha8Rng,
    offered: Vec<InTransit<T>>,
    frames_per_video: u64,
    slack: T,
}

impl<T: Scalar> Simulation<T> {
    /// Validates `cfg` against the reference parameter ranges.
    pub fn new(cfg: SimConfig<T>) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Self::build(cfg, Scenario::default())
    }

    /// Positivity checks only; catalogs and requests may be scripted.
    pub fn with_scenario(cfg: SimConfig<T>, scenario: Scenario<T>) -> Result<Self, ConfigError> {
        cfg.validate_basic()?;
        Self::build(cfg, scenario)
    }

    fn build(mut cfg: SimConfig<T>, scenario: Scenario<T>) -> Result<Self, ConfigError> {
        let template = build_gop_template(cfg.nb_p as usize, cfg.b_per_group as usize)
            .map_err(|_| ConfigError::Range {
                key: "nb_p",
                value: cfg.nb_p.to_string(),
                range: "[1, 40]",
            })?;
        let layout = Layout::new(template);
        let mut catalogs: Vec<VideoCatalog> = match &scenario.catalogs {
            Some(lists) => {
                cfg.nb_vs = lists.len() as u32;
                let mut out = Vec::with_capacity(lists.len());
                for list in lists {
                    let cat = VideoCatalog::with_videos(cfg.capacity_c as usize, list.iter().copied())
                        .map_err(|_| ConfigError::CatalogOverflow {
                            nb_video: list.len() as u32,
                            nb_vs: 1,
                            capacity_c: cfg.capacity_c,
                        })?;
                    out.push(cat);
                }
                out
            }
            None => (0..cfg.nb_vs)
                .map(|_| VideoCatalog::new(cfg.capacity_c as usize))
                .collect(),
        };
        if scenario.catalogs.is_none() {
            for v in 0..cfg.nb_video {
                let s = (v % cfg.nb_vs) as usize;
                catalogs[s].insert(VideoId(v)).expect("catalog sized by validation");
            }
        }
        let servers: Vec<Server<T>> = catalogs
            .into_iter()
            .enumerate()
            .map(|(i, catalog)| Server {
                id: ServerId(i as u32),
                catalog,
                tokens: T::zero(),
                queue: BinaryHeap::new(),
                committed: 0,
                sessions: Vec::new(),
                sends_unit: 0,
                sends_in_unit: 0,
            })
            .collect();

        let mut arrival_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        arrival_rng.set_stream(0);
        let mut net_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        net_rng.set_stream(1);
        let mut plan_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        plan_rng.set_stream(2);

        let requests: Vec<ScriptedRequest<T>> = match scenario.requests {
            Some(mut r) => {
                r.sort_by(|a, b| cmp_scalar(a.time, b.time));
                r
            }
            None => {
                let times = draw_arrivals(cfg.lambda, cfg.t_sim, &mut arrival_rng);
                let cdf = popularity_cdf(cfg.nb_video as usize, cfg.popularity_skew.as_f64());
                times
                    .into_iter()
                    .map(|time| ScriptedRequest {
                        time,
                        video: VideoId(sample_index(&cdf, &mut arrival_rng) as u32),
                    })
                    .collect()
            }
        };

        let mut events = EventQueue::default();
        let mut records = Vec::with_capacity(requests.len());
        for (i, r) in requests.iter().enumerate() {
            if r.time < cfg.t_sim {
                events.push(r.time, EventKind::RequestArrival, Payload::Request(i as u32));
            }
            records.push(RequestRecord {
                id: i as u32,
                video: r.video,
                arrival: r.time,
                outcome: RequestOutcome::Pending,
            });
        }
        let interval = cfg.bucket_interval();
        for b in 0..cfg.nb_measure {
            let t = if b + 1 == cfg.nb_measure {
                cfg.t_sim
            } else {
                interval * T::from_count(u64::from(b + 1))
            };
            events.push(t, EventKind::MeasureBucketClose, Payload::Bucket(b));
        }

        let controller = FeedbackController::new(
            &layout.template,
            cfg.floors(),
            cfg.restore_step,
            cfg.restore_hold,
        )
        .with_server_cap(cfg.beta.floor().to_u64().unwrap_or(u64::MAX));
        let frames_per_video = u64::from(cfg.nb_gop) * layout.template.len() as u64;
        let slack = deadline_slack(T::from_count(u64::from(cfg.qos)), cfg.deadline_slack_multiplier);

        Ok(Simulation {
            buckets: vec![BucketCounters::default(); cfg.nb_measure as usize],
            cfg,
            layout,
            controller,
            events,
            now: T::zero(),
            servers,
            sessions: Vec::new(),
            control: BTreeMap::new(),
            requests: records,
            pending: Vec::new(),
            replications: Vec::new(),
            replicas: HashSet::new(),
            deliveries: VecDeque::new(),
            in_transit: 0,
            totals: BucketCounters::default(),
            closes: Vec::new(),
            controller_trace: Vec::new(),
            stats: RunStats::default(),
            event_counts: [0; EventKind::COUNT],
            digest: 0xcbf2_9ce4_8422_2325,
            net_tokens: T::zero(),
            next_tick: None,
            sampling_scheduled: false,
            enqueue_order: 0,
            net_rng,
            plan_rng,
            offered: Vec::new(),
            frames_per_video,
            slack,
        })
    }

    pub fn run(mut self) -> SimReport<T> {
        while let Some(ev) = self.events.pop() {
            if ev.time > self.cfg.t_sim {
                break;
            }
            self.now = ev.time;
            self.event_counts[ev.kind.index()] += 1;
            self.trace(ev.time, ev.kind, ev.payload);
            match (ev.kind, ev.payload) {
                (EventKind::SamplingTick, _) => self.on_sampling(),
                (EventKind::FrameDelivery, _) => self.on_delivery(),
                (EventKind::FrameRelease, Payload::Session(s)) => self.on_release(s),
                (EventKind::ServiceTick, _) => self.on_service(),
                (EventKind::RequestArrival, Payload::Request(r)) => self.on_request(r),
                (
                    EventKind::ReplicationComplete,
                    Payload::Replication {
                        source,
                        target,
                        video,
                    },
                ) => self.on_replicated(source, target, video),
                (EventKind::MeasureBucketClose, Payload::Bucket(_)) => self.on_bucket_close(),
                (kind, payload) => unreachable!("{kind:?} with {payload:?}"),
            }
        }
        self.finish()
    }

    fn trace(&mut self, time: T, kind: EventKind, payload: Payload) {
        let h = &mut self.digest;
        fnv(h, time.as_f64().to_bits());
        fnv(h, kind.index() as u64);
        match payload {
            Payload::None => fnv(h, 0),
            Payload::Session(s) | Payload::Request(s) | Payload::Bucket(s) => fnv(h, u64::from(s)),
            Payload::Replication {
                source,
                target,
                video,
            } => {
                fnv(h, u64::from(source.0));
                fnv(h, u64::from(target.0));
                fnv(h, u64::from(video.0));
            }
        }
    }

    fn finish(mut self) -> SimReport<T> {
        self.stats.max_catalog_len = self
            .stats
            .max_catalog_len
            .max(self.servers.iter().map(|s| s.catalog.len()).max().unwrap_or(0));
        for s in &self.servers {
            self.stats.max_server_sends_per_unit = self.stats.max_server_sends_per_unit.max(s.sends_in_unit);
        }
        let in_flight_end = self.in_flight();
        let samples = self
            .buckets
            .iter()
            .enumerate()
            .map(|(i, c)| collect_metrics(c, i as u32))
            .collect();
        SimReport {
            samples,
            closes: self.closes,
            totals: self.totals,
            in_flight_end,
            stats: self.stats,
            requests: self.requests,
            replications: self.replications,
            controller: self.controller_trace,
            event_counts: self.event_counts,
            trace_digest: self.digest,
        }
    }

    fn in_flight(&self) -> u64 {
        self.servers.iter().map(|s| s.queue.len() as u64).sum::<u64>() + self.in_transit
    }

    fn bucket_of(&self, t: T) -> u32 {
        let idx = (t / self.cfg.bucket_interval()).floor().to_u64().unwrap_or(0);
        idx.min(u64::from(self.cfg.nb_measure - 1)) as u32
    }

    fn tick_index_at_or_after(&self, t: T) -> u64 {
        let dt = self.cfg.tick;
        let mut n = (t / dt).ceil().to_u64().unwrap_or(0);
        while T::from_count(n) * dt < t {
            n += 1;
        }
        n
    }

    fn ensure_tick(&mut self) {
        if self.next_tick.is_some() {
            return;
        }
        let n = self.tick_index_at_or_after(self.now);
        let t = T::from_count(n) * self.cfg.tick;
        self.next_tick = Some(n);
        self.events.push(t, EventKind::ServiceTick, Payload::None);
    }

    fn ensure_sampling(&mut self) {
        if self.sampling_scheduled {
            return;
        }
        let sp = self.cfg.sampling_period;
        let n = (self.now / sp).floor() + T::one();
        self.sampling_scheduled = true;
        self.events.push(n * sp, EventKind::SamplingTick, Payload::None);
    }

    fn lose(&mut self, bucket: u32, session: u32, label: PatternLabel, cause: LossCause) {
        self.buckets[bucket as usize].record_loss(cause);
        self.totals.record_loss(cause);
        if label == PatternLabel::M && cause == LossCause::Policy {
            self.buckets[bucket as usize].i_policy_drops += 1;
            self.totals.i_policy_drops += 1;
        }
        self.record_outcome(session, label, false);
    }

    fn record_outcome(&mut self, session: u32, label: PatternLabel, met: bool) {
        let s = &mut self.sessions[session as usize];
        if s.windows[label.class().index()].record_outcome(met) {
            self.stats.window_failures += 1;
        }
    }

    // ---- requests and dispatch ----

    fn score(&self, server: usize) -> T {
        let s = &self.servers[server];
        let backlog = T::from_count(s.queue.len() as u64) / self.cfg.tm_service;
        (self.cfg.beta - T::from_count(s.committed) - backlog) / self.cfg.beta
    }

    fn saturated_for(&self, server: usize, qos: u32) -> bool {
        let s = &self.servers[server];
        let backlog = T::from_count(s.queue.len() as u64) / self.cfg.tm_service;
        T::from_count(s.committed + u64::from(qos)) + backlog > self.cfg.beta
    }

    /// Best-scored server holding `video`, preferring original copies over
    /// replicas.
    fn best_holder(&self, video: VideoId) -> Option<usize> {
        self.best_where(|i, s| s.catalog.holds(video) && !self.replicas.contains(&(i, video)))
            .or_else(|| self.best_where(|_, s| s.catalog.holds(video)))
    }

    fn best_where(&self, keep: impl Fn(usize, &Server<T>) -> bool) -> Option<usize> {
        let mut best: Option<(usize, T)> = None;
        for (i, s) in self.servers.iter().enumerate() {
            if !keep(i, s) {
                continue;
            }
            let sc = self.score(i);
            if best.map_or(true, |(_, b)| sc > b) {
                best = Some((i, sc));
            }
        }
        best.map(|b| b.0)
    }

    fn on_request(&mut self, r: u32) {
        self.stats.requests += 1;
        let video = self.requests[r as usize].video;
        let known = self
            .servers
            .iter()
            .any(|s| s.catalog.holds(video) || s.catalog.is_receiving(video));
        if !known {
            self.stats.unknown_requests += 1;
            self.requests[r as usize].outcome = RequestOutcome::UnknownVideo;
            return;
        }
        if !self.cfg.strategy.replication() {
            let s = self.best_holder(video).expect("known video has a holder");
            self.start_session(r, s, Route::Direct);
            return;
        }
        let deadline = self.now + self.cfg.tm_service;
        if !self.try_dispatch(r, video, Route::Direct) {
            let awaiting_copy = self.servers.iter().any(|s| s.catalog.is_receiving(video));
            self.pending.push(Pending {
                request: r,
                video,
                deadline,
                awaiting_copy,
            });
            self.ensure_tick();
        }
    }

    /// Replication-aware dispatch. Returns false when the request must wait.
    fn try_dispatch(&mut self, r: u32, video: VideoId, direct: Route) -> bool {
        let qos = self.cfg.qos;
        let primary = match self.best_holder(video) {
            Some(p) => p,
            None => return false,
        };
        if !self.saturated_for(primary, qos) {
            self.start_session(r, primary, direct);
            return true;
        }
        if self.servers.iter().any(|s| s.catalog.is_receiving(video)) {
            return false;
        }
        let mut reports: Vec<NeighborReport> = (0..self.servers.len())
            .filter(|&i| i != primary)
            .map(|i| NeighborReport {
                server_id: self.servers[i].id,
                has_video: self.servers[i].catalog.holds(video),
                saturated: self.saturated_for(i, qos),
            })
            .collect();
        let scores: HashMap<ServerId, T> = (0..self.servers.len())
            .map(|i| (self.servers[i].id, self.score(i)))
            .collect();
        while !reports.is_empty() {
            let decision = handle_saturation(&reports, &scores).expect("scores cover all servers");
            match decision {
                SaturationDecision::Redirect(id) => {
                    self.stats.redirects += 1;
                    self.start_session(r, id.0 as usize, Route::Redirect);
                    return true;
                }
                SaturationDecision::Replicate(id) => {
                    let target = id.0 as usize;
                    let source = self.servers[primary].catalog.clone();
                    match apply_replication(
                        &source,
                        self.cfg.beta,
                        &mut self.servers[target].catalog,
                        video,
                        self.frames_per_video,
                    ) {
                        Ok(delay) => {
                            self.stats.replications_started += 1;
                            let len = self.servers[target].catalog.len();
                            self.stats.max_catalog_len = self.stats.max_catalog_len.max(len);
                            self.replications.push(ReplicationRecord {
                                video,
                                source: self.servers[primary].id,
                                target: id,
                                started: self.now,
                                completed: None,
                            });
                            self.events.push(
                                self.now + delay,
                                EventKind::ReplicationComplete,
                                Payload::Replication {
                                    source: self.servers[primary].id,
                                    target: id,
                                    video,
                                },
                            );
                            return false;
                        }
                        Err(ReplicationError::CatalogFull { .. })
                        | Err(ReplicationError::AlreadyHeld(_)) => {
                            reports.retain(|rep| rep.server_id != id);
                        }
                        Err(e) => unreachable!("replication precondition: {e}"),
                    }
                }
                SaturationDecision::NoAction => return false,
            }
        }
        false
    }

    fn on_replicated(&mut self, source: ServerId, target: ServerId, video: VideoId) {
        let t = target.0 as usize;
        if self.servers[t].catalog.complete(video) {
            self.stats.replications_completed += 1;
            self.replicas.insert((t, video));
        }
        if let Some(rec) = self
            .replications
            .iter_mut()
            .find(|r| r.video == video && r.target == target && r.source == source && r.completed.is_none())
        {
            rec.completed = Some(self.now);
        }
        let waiting: Vec<Pending<T>> = self
            .pending
            .iter()
            .copied()
            .filter(|p| p.awaiting_copy && p.video == video)
            .collect();
        self.pending.retain(|p| !(p.awaiting_copy && p.video == video));
        for p in waiting {
            if !self.saturated_for(t, self.cfg.qos) {
                self.start_session(p.request, t, Route::Replicated);
            } else if !self.try_dispatch(p.request, video, Route::Waited) {
                self.pending.push(Pending {
                    awaiting_copy: false,
                    ..p
                });
                self.ensure_tick();
            }
        }
    }

    fn retry_pending(&mut self) {
        if self.pending.is_empty() {
            return;
        }
        let list = std::mem::take(&mut self.pending);
        for p in list {
            if p.awaiting_copy {
                self.pending.push(p);
                continue;
            }
            if self.try_dispatch(p.request, p.video, Route::Waited) {
                continue;
            }
            if self.now >= p.deadline {
                self.stats.rejected_requests += 1;
                self.requests[p.request as usize].outcome = RequestOutcome::Rejected { at: self.now };
            } else {
                let awaiting_copy = self.servers.iter().any(|s| s.catalog.is_receiving(p.video));
                self.pending.push(Pending { awaiting_copy, ..p });
            }
        }
    }

    fn start_session(&mut self, r: u32, server: usize, route: Route) {
        let id = self.sessions.len() as u32;
        let qos = self.cfg.qos;
        let full = self.controller.full();
        self.sessions.push(Session {
            server,
            qos,
            start: self.now,
            next_index: 0,
            releasing: true,
            gops: vec![GopTrack::default(); self.cfg.nb_gop as usize],
            windows: [
                OutcomeWindow::new(full.i()),
                OutcomeWindow::new(full.p()),
                OutcomeWindow::new(full.b()),
            ],
        });
        self.requests[r as usize].outcome = RequestOutcome::Served {
            server: self.servers[server].id,
            at: self.now,
            route,
        };
        self.stats.sessions_started += 1;
        let srv = &mut self.servers[server];
        srv.committed += u64::from(qos);
        srv.sessions.push(id);
        if self.cfg.strategy.fair_share() {
            self.control.insert(id, ControlState::new(full));
        }
        self.events.push(self.now, EventKind::FrameRelease, Payload::Session(id));
        self.ensure_sampling();
    }

    fn stop_session(&mut self, id: u32) {
        let s = &mut self.sessions[id as usize];
        if !s.releasing {
            return;
        }
        s.releasing = false;
        let (server, qos) = (s.server, s.qos);
        let srv = &mut self.servers[server];
        srv.committed -= u64::from(qos);
        srv.sessions.retain(|&x| x != id);
        self.control.remove(&id);
    }

    // ---- frame release ----

    fn plan_gop(&mut self, session: u32) -> u128 {
        let Some(state) = self.control.get(&session) else {
            return 0;
        };
        let removal = frames_to_remove(&state.constraints);
        if removal.total() == 0 {
            return 0;
        }
        let positions: Vec<usize> = if self.cfg.strategy.kframes() {
            plan_degradation(&self.layout.pattern, removal).expect("removal fits the pattern")
        } else {
            let mut out = Vec::with_capacity(removal.total());
            for (label, count) in [(PatternLabel::H, removal.p), (PatternLabel::O, removal.b)] {
                let cands = self.layout.pattern.positions(label);
                let count = count.min(cands.len());
                out.extend(sample(&mut self.plan_rng, cands.len(), count).iter().map(|i| cands[i]));
            }
            out
        };
        positions.iter().fold(0u128, |m, &p| m | (1 << p))
    }

    fn on_release(&mut self, id: u32) {
        if !self.sessions[id as usize].releasing {
            return;
        }
        let (index, start, server) = {
            let s = &self.sessions[id as usize];
            (s.next_index, s.start, s.server)
        };
        let rate = T::from_count(u64::from(self.sessions[id as usize].qos));
        let frame = frame_at(
            StreamId(id),
            &self.layout.template,
            &self.layout.pattern,
            index,
            rate,
            start,
            self.slack,
        );
        let bucket = self.bucket_of(frame.release_time);
        self.buckets[bucket as usize].sent += 1;
        self.totals.sent += 1;
        if frame.seq_in_gop == 0 {
            let plan = self.plan_gop(id);
            self.sessions[id as usize].gops[frame.gop_index as usize].plan = plan;
        }
        let gop = &mut self.sessions[id as usize].gops[frame.gop_index as usize];
        if frame.label == PatternLabel::O {
            gop.o_released += 1;
        }
        if gop.plan & (1 << frame.seq_in_gop) != 0 {
            if frame.label == PatternLabel::O {
                gop.o_rejected += 1;
            }
            self.lose(bucket, id, frame.label, LossCause::Policy);
        } else {
            let prio = if self.cfg.strategy.kframes() {
                label_prio(frame.label)
            } else {
                0
            };
            let first_tick = self.tick_index_at_or_after(self.now);
            self.servers[server].queue.push(Queued {
                prio,
                order: self.enqueue_order,
                session: id,
                gop: frame.gop_index,
                seq: frame.seq_in_gop,
                label: frame.label,
                deadline: frame.deadline,
                bucket,
                first_tick,
            });
            self.enqueue_order += 1;
            self.ensure_tick();
        }
        let next = index + 1;
        self.sessions[id as usize].next_index = next;
        if next >= self.frames_per_video {
            self.stop_session(id);
            return;
        }
        let t = start + T::from_count(next) / rate;
        if t <= self.cfg.t_sim {
            self.events.push(t, EventKind::FrameRelease, Payload::Session(id));
        }
    }

    // ---- servers and network ----

    fn on_service(&mut self) {
        let n = self.next_tick.take().expect("service tick was scheduled");
        let dt = self.cfg.tick;
        let one = T::one();
        let unit = self.now.floor().to_u64().unwrap_or(0);
        self.offered.clear();
        for si in 0..self.servers.len() {
            {
                let srv = &mut self.servers[si];
                srv.tokens = srv.tokens.min(one) + self.cfg.beta * dt;
                if srv.sends_unit != unit {
                    self.stats.max_server_sends_per_unit =
                        self.stats.max_server_sends_per_unit.max(srv.sends_in_unit);
                    srv.sends_unit = unit;
                    srv.sends_in_unit = 0;
                }
            }
            while self.servers[si].tokens >= one {
                let Some(q) = self.servers[si].queue.pop() else {
                    break;
                };
                if n > q.first_tick {
                    self.buckets[q.bucket as usize].waiting += 1;
                    self.totals.waiting += 1;
                }
                let decision = if self.cfg.strategy.kframes() {
                    let missed = self.now + self.cfg.latency > q.deadline;
                    let g = self.sessions[q.session as usize].gops[q.gop as usize];
                    let all_rejected = g.o_released > 0 && g.o_rejected == g.o_released;
                    schedule_label(q.label, missed, all_rejected)
                } else {
                    ScheduleDecision::Send
                };
                match decision {
                    ScheduleDecision::Reject => {
                        if q.label == PatternLabel::O {
                            self.sessions[q.session as usize].gops[q.gop as usize].o_rejected += 1;
                        }
                        self.lose(q.bucket, q.session, q.label, LossCause::Policy);
                    }
                    ScheduleDecision::Send => {
                        let srv = &mut self.servers[si];
                        srv.tokens = srv.tokens - one;
                        srv.sends_in_unit += 1;
                        self.buckets[q.bucket as usize].served += 1;
                        self.totals.served += 1;
                        self.offered.push(InTransit {
                            session: q.session,
                            gop: q.gop,
                            seq: q.seq,
                            label: q.label,
                            deadline: q.deadline,
                            bucket: q.bucket,
                        });
                    }
                }
            }
        }
        self.network_step();
        self.retry_pending();
        let busy = self.servers.iter().any(|s| !s.queue.is_empty()) || !self.pending.is_empty();
        if busy {
            let t = T::from_count(n + 1) * dt;
            self.next_tick = Some(n + 1);
            self.events.push(t, EventKind::ServiceTick, Payload::None);
        }
    }

    fn network_step(&mut self) {
        let one = T::one();
        self.net_tokens =
            self.net_tokens.min(one) + T::from_count(self.cfg.net_capacity) * self.cfg.tick;
        let budget = self.net_tokens.floor().to_usize().unwrap_or(0);
        let mut offered = std::mem::take(&mut self.offered);
        if offered.is_empty() {
            self.offered = offered;
            return;
        }
        let labels: Vec<PatternLabel> = offered.iter().map(|f| f.label).collect();
        let fates = network_step(
            &labels,
            budget,
            self.cfg.p_loss.as_f64(),
            self.cfg.strategy,
            &mut self.net_rng,
        );
        let non_m_kept = offered
            .iter()
            .zip(&fates)
            .any(|(f, x)| *x != Fate::Overflow && f.label != PatternLabel::M);
        let sent = offered.len().min(budget);
        self.net_tokens = self.net_tokens - T::from_count(sent as u64);
        let mut batch = Vec::with_capacity(sent);
        for (f, fate) in offered.drain(..).zip(fates) {
            match fate {
                Fate::Overflow => {
                    if f.label == PatternLabel::M {
                        let b = &mut self.buckets[f.bucket as usize];
                        b.i_overflow_drops += 1;
                        self.totals.i_overflow_drops += 1;
                        if non_m_kept {
                            b.i_overflow_drops_avoidable += 1;
                            self.totals.i_overflow_drops_avoidable += 1;
                        }
                    }
                    self.lose(f.bucket, f.session, f.label, LossCause::Overflow);
                }
                Fate::Random => self.lose(f.bucket, f.session, f.label, LossCause::Random),
                Fate::Delivered => batch.push(f),
            }
        }
        self.offered = offered;
        if !batch.is_empty() {
            self.in_transit += batch.len() as u64;
            self.deliveries.push_back(batch);
            self.events
                .push(self.now + self.cfg.latency, EventKind::FrameDelivery, Payload::None);
        }
    }

    fn on_delivery(&mut self) {
        let batch = self.deliveries.pop_front().expect("delivery batch queued");
        self.in_transit -= batch.len() as u64;
        for f in batch {
            if self.now > f.deadline {
                self.lose(f.bucket, f.session, f.label, LossCause::Expired);
                continue;
            }
            let refs = self.layout.refs[f.seq as usize];
            let g = &mut self.sessions[f.session as usize].gops[f.gop as usize];
            g.received |= 1 << f.seq;
            let useful = g.received & refs == refs;
            let b = &mut self.buckets[f.bucket as usize];
            b.received += 1;
            self.totals.received += 1;
            if useful {
                b.useful += 1;
                self.totals.useful += 1;
            }
            self.record_outcome(f.session, f.label, true);
        }
    }

    // ---- feedback loop ----

    fn on_sampling(&mut self) {
        self.sampling_scheduled = false;
        if self.cfg.strategy.fair_share() {
            self.feedback_tick();
        }
        let active = self.servers.iter().any(|s| !s.sessions.is_empty());
        if active || !self.pending.is_empty() {
            self.ensure_sampling();
        }
    }

    fn feedback_tick(&mut self) {
        let loads: Vec<ServerLoad> = self
            .servers
            .iter()
            .map(|s| {
                let mut ids = s.sessions.clone();
                ids.sort_unstable();
                ServerLoad {
                    server_id: s.id,
                    sessions: ids
                        .into_iter()
                        .map(|id| SessionDemand {
                            session: id,
                            qos: self.sessions[id as usize].qos,
                        })
                        .collect(),
                }
            })
            .collect();
        let out = self
            .controller
            .tick(self.cfg.net_capacity, &loads, &mut self.control)
            .expect("controller inputs are well formed");
        for &id in &out.changed {
            let c = self.control[&id].constraints;
            self.sessions[id as usize].windows =
                [OutcomeWindow::new(c.i()), OutcomeWindow::new(c.p()), OutcomeWindow::new(c.b())];
        }
        if let Some(&newest) = out.infeasible.iter().max() {
            self.stats.refused_sessions += 1;
            self.stop_session(newest);
        }
        let full = self.control.values().filter(|s| s.constraints.is_full()).count() as u32;
        self.controller_trace.push(ControllerPeriod {
            time: self.now,
            sessions: self.control.len() as u32,
            full_sessions: full,
            changed: out.changed.len() as u32,
        });
    }

    fn on_bucket_close(&mut self) {
        self.closes.push(BucketClose {
            sent: self.totals.sent,
            received: self.totals.received,
            lost: self.totals.lost,
            in_flight: self.in_flight(),
        });
    }
}

/// Runs one replicate and returns its `nb_measure` samples.
pub fn run_simulation<T: Scalar>(config: SimConfig<T>) -> Result<Vec<MetricsSample<T>>, ConfigError> {
    Ok(Simulation::new(config)?.run().samples)
}

/// Runs one replicate and returns the full report.
pub fn run_report<T: Scalar>(config: SimConfig<T>) -> Result<SimReport<T>, ConfigError> {
    Ok(Simulation::new(config)?.run())
}
