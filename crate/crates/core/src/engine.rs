//! Lockstep event engine: replays keyed Poisson arrivals in time order and
//! applies the update rules of one or more processes sharing the same log.
//!
//! The tracked window grows lazily. A site outside the window evolves
//! autonomously (healing plus, for the spontaneous-blocking dynamics,
//! unconditioned blocking arrows), so on first contact its state is
//! reconstructed exactly by replaying its own streams. Growth order cannot
//! change results because streams are pure functions of their key.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::dynamics::{DynError, ProcessKind};
use crate::events::{EventLog, ObjectKey, StreamKind};
use crate::lattice::{BoundaryPolicy, Configuration, SiteState};

/// Declaration of one process evolved by the engine.
pub(crate) struct ProcSpec {
    pub kind: ProcessKind,
    pub init: Configuration,
    /// Sites strictly below this are frozen at `Empty` and ignore all rules.
    pub hard_lo: Option<i64>,
    /// Record the first time each site becomes occupied (used by audits).
    pub track_first_occupied: bool,
}

impl ProcSpec {
    pub fn new(kind: ProcessKind, init: Configuration) -> Self {
        Self { kind, init, hard_lo: None, track_first_occupied: false }
    }
}

/// Dense site-indexed storage with amortized two-sided growth.
struct SiteArray {
    base: i64,
    buf: Vec<SiteState>,
    lo: i64,
    hi: i64,
}

impl SiteArray {
    fn new(lo: i64, hi: i64) -> Self {
        let n = (hi - lo + 1) as usize;
        Self { base: lo, buf: vec![SiteState::Empty; n], lo, hi }
    }

    #[inline]
    fn get(&self, site: i64) -> SiteState {
        self.buf[(site - self.base) as usize]
    }

    #[inline]
    fn set(&mut self, site: i64, v: SiteState) {
        self.buf[(site - self.base) as usize] = v;
    }

    fn grow_right(&mut self, v: SiteState) {
        self.buf.push(v);
        self.hi += 1;
        debug_assert_eq!(self.buf.len() as i64, self.hi - self.base + 1);
    }

    fn grow_left(&mut self, v: SiteState) {
        if self.lo == self.base {
            let slack = (self.buf.len() / 2).max(8);
            let mut next = Vec::with_capacity(self.buf.len() + slack);
            next.resize(slack, SiteState::Empty);
            next.extend_from_slice(&self.buf);
            self.buf = next;
            self.base -= slack as i64;
        }
        self.lo -= 1;
        self.set(self.lo, v);
    }
}

struct ProcState {
    kind: ProcessKind,
    policy: BoundaryPolicy,
    hard_lo: Option<i64>,
    states: SiteArray,
    occupied: usize,
    /// Cached extremes of the occupied set inside the window.
    rmost: i64,
    lmost: i64,
    first_occupied: Option<std::collections::HashMap<i64, f64>>,
}

impl ProcState {
    #[inline]
    fn clamp(&self) -> Option<i64> {
        match self.policy {
            BoundaryPolicy::OccupiedLeftClamp { clamp } => Some(clamp),
            _ => None,
        }
    }

    /// Greatest occupied site (clamp boundary when the window is vacant).
    fn rightmost(&self) -> Option<i64> {
        if self.occupied > 0 {
            Some(self.rmost)
        } else {
            self.clamp()
        }
    }

    fn leftmost(&self) -> Option<i64> {
        if self.clamp().is_some() {
            return None;
        }
        if self.occupied > 0 {
            Some(self.lmost)
        } else {
            None
        }
    }

    fn is_extinct(&self) -> bool {
        self.occupied == 0 && self.clamp().is_none()
    }

    fn note_occupy(&mut self, site: i64, time: f64) {
        if self.occupied == 0 {
            self.rmost = site;
            self.lmost = site;
        } else {
            if site > self.rmost {
                self.rmost = site;
            }
            if site < self.lmost {
                self.lmost = site;
            }
        }
        self.occupied += 1;
        if let Some(map) = self.first_occupied.as_mut() {
            map.entry(site).or_insert(time);
        }
    }

    fn note_vacate(&mut self, site: i64) {
        self.occupied -= 1;
        if self.occupied == 0 {
            return;
        }
        if site == self.rmost {
            let mut x = site - 1;
            while self.states.get(x) != SiteState::Occupied {
                x -= 1;
            }
            self.rmost = x;
        }
        if site == self.lmost {
            let mut x = site + 1;
            while self.states.get(x) != SiteState::Occupied {
                x += 1;
            }
            self.lmost = x;
        }
    }
}

/// One state change applied during a step.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Change {
    pub proc: usize,
    pub site: i64,
    pub old: SiteState,
    pub new: SiteState,
}

/// A site entering the tracked window, with its reconstructed state.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Entry {
    pub proc: usize,
    pub site: i64,
    pub state: SiteState,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct StepEvent {
    pub time: f64,
    pub key: ObjectKey,
}

struct Pending {
    time: f64,
    key: ObjectKey,
    sid: u32,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.key == other.key
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time.total_cmp(&other.time).then_with(|| self.key.cmp(&other.key))
    }
}

struct StreamCursor {
    times: Arc<[f64]>,
    next: usize,
}

pub(crate) struct Engine<'a> {
    log: &'a EventLog,
    start: f64,
    end: f64,
    wlo: i64,
    whi: i64,
    procs: Vec<ProcState>,
    heap: BinaryHeap<Reverse<Pending>>,
    streams: Vec<StreamCursor>,
    now: f64,
    last_time: f64,
    tie_events: u64,
    window_cap: usize,
    changes: Vec<Change>,
    entries: Vec<Entry>,
}

pub(crate) const DEFAULT_WINDOW_CAP: usize = 1_000_000;

impl<'a> Engine<'a> {
    /// Evolve the given processes over `[start, end]` on a shared log.
    pub fn new(
        log: &'a EventLog,
        start: f64,
        end: f64,
        specs: Vec<ProcSpec>,
        window_cap: usize,
    ) -> Result<Self, DynError> {
        assert!(!specs.is_empty());
        if end > log.horizon() {
            return Err(DynError::OutOfHorizon { requested: end, horizon: log.horizon() });
        }
        let wlo = specs.iter().map(|s| s.init.lo).min().unwrap();
        let whi = specs.iter().map(|s| s.init.hi).max().unwrap();
        let mut procs = Vec::with_capacity(specs.len());
        for spec in &specs {
            let mut st = SiteArray::new(wlo, whi);
            let mut occupied = 0usize;
            let mut rmost = i64::MIN;
            let mut lmost = i64::MAX;
            for site in wlo..=whi {
                let v = spec.init.state(site);
                st.set(site, v);
                if v == SiteState::Occupied {
                    occupied += 1;
                    rmost = rmost.max(site);
                    lmost = lmost.min(site);
                }
            }
            let mut first_occupied =
                spec.track_first_occupied.then(std::collections::HashMap::new);
            if let Some(map) = first_occupied.as_mut() {
                for site in wlo..=whi {
                    if st.get(site) == SiteState::Occupied {
                        map.insert(site, start);
                    }
                }
            }
            procs.push(ProcState {
                kind: spec.kind,
                policy: spec.init.policy,
                hard_lo: spec.hard_lo,
                states: st,
                occupied,
                rmost,
                lmost,
                first_occupied,
            });
        }
        let mut eng = Self {
            log,
            start,
            end,
            wlo,
            whi,
            procs,
            heap: BinaryHeap::new(),
            streams: Vec::new(),
            now: start,
            last_time: f64::NEG_INFINITY,
            tie_events: 0,
            window_cap,
            changes: Vec::new(),
            entries: Vec::new(),
        };
        for site in wlo..=whi {
            eng.add_stream(ObjectKey::healing(site));
        }
        for x in (wlo - 1)..=whi {
            eng.add_edge_streams(x);
        }
        Ok(eng)
    }

    /// Register the four arrow streams of the directed edge pair (x, x+1).
    fn add_edge_streams(&mut self, x: i64) {
        self.add_stream(ObjectKey::fertile(x, x + 1));
        self.add_stream(ObjectKey::fertile(x + 1, x));
        self.add_stream(ObjectKey::blocking(x, x + 1));
        self.add_stream(ObjectKey::blocking(x + 1, x));
    }

    fn add_stream(&mut self, key: ObjectKey) {
        let times = self.log.stream(key);
        // First arrival at or after `start` but strictly after `now`
        // (a stream added mid-run must not replay passed times).
        let from = if self.now > self.start { self.now } else { self.start };
        let mut idx = times.partition_point(|&t| t < from);
        if self.now > self.start {
            while idx < times.len() && times[idx] <= self.now {
                idx += 1;
            }
        }
        let sid = self.streams.len() as u32;
        if idx < times.len() && times[idx] <= self.end {
            self.heap.push(Reverse(Pending { time: times[idx], key, sid }));
        }
        self.streams.push(StreamCursor { times, next: idx });
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn tie_events(&self) -> u64 {
        self.tie_events
    }

    pub fn window(&self) -> (i64, i64) {
        (self.wlo, self.whi)
    }

    pub fn changes(&self) -> &[Change] {
        &self.changes
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn rightmost(&self, proc: usize) -> Option<i64> {
        self.procs[proc].rightmost()
    }

    pub fn leftmost(&self, proc: usize) -> Option<i64> {
        self.procs[proc].leftmost()
    }

    pub fn is_extinct(&self, proc: usize) -> bool {
        self.procs[proc].is_extinct()
    }

    pub fn occupied_count(&self, proc: usize) -> usize {
        self.procs[proc].occupied
    }

    pub fn state(&self, proc: usize, site: i64) -> SiteState {
        let p = &self.procs[proc];
        if site >= self.wlo && site <= self.whi {
            if let Some(h) = p.hard_lo {
                if site < h {
                    return SiteState::Empty;
                }
            }
            p.states.get(site)
        } else {
            self.tail_state_now(proc, site)
        }
    }

    pub fn first_occupied(&self, proc: usize, site: i64) -> Option<f64> {
        self.procs[proc].first_occupied.as_ref().and_then(|m| m.get(&site).copied())
    }

    /// Snapshot the current configuration of one process.
    pub fn config(&self, proc: usize) -> Configuration {
        let p = &self.procs[proc];
        Configuration {
            lo: self.wlo,
            hi: self.whi,
            states: (self.wlo..=self.whi).map(|x| self.state(proc, x)).collect(),
            policy: p.policy,
        }
    }

    /// State of an untracked site at the current time, by autonomous replay.
    fn tail_state_now(&self, proc: usize, site: i64) -> SiteState {
        let p = &self.procs[proc];
        if let Some(clamp) = p.clamp() {
            return if site <= clamp { SiteState::Occupied } else { SiteState::Empty };
        }
        let initial = match p.policy {
            BoundaryPolicy::EmptyTail => SiteState::Empty,
            BoundaryPolicy::BlockedTail => SiteState::Blocked,
            BoundaryPolicy::OccupiedLeftClamp { .. } => unreachable!(),
        };
        tail_state(self.log, p.kind, initial, site, self.start, self.now)
    }

    /// Whether the origin of an arrow is occupied, including virtual tails.
    #[inline]
    fn origin_occupied(&self, proc: usize, site: i64) -> bool {
        let p = &self.procs[proc];
        if site >= self.wlo && site <= self.whi {
            if let Some(h) = p.hard_lo {
                if site < h {
                    return false;
                }
            }
            p.states.get(site) == SiteState::Occupied
        } else {
            // Untracked sites are never occupied except inside a clamp tail.
            matches!(p.clamp(), Some(clamp) if site <= clamp)
        }
    }

    fn set_state(&mut self, proc: usize, site: i64, new: SiteState) {
        let time = self.now;
        let p = &mut self.procs[proc];
        let old = p.states.get(site);
        if old == new {
            return;
        }
        p.states.set(site, new);
        if old == SiteState::Occupied {
            p.note_vacate(site);
        }
        if new == SiteState::Occupied {
            p.note_occupy(site, time);
        }
        self.changes.push(Change { proc, site, old, new });
    }

    fn grow_to(&mut self, site: i64) -> Result<(), DynError> {
        while site > self.whi {
            if (self.whi - self.wlo) as usize + 1 >= self.window_cap {
                return Err(DynError::WindowOverflow { cap: self.window_cap });
            }
            let v = self.whi + 1;
            for pidx in 0..self.procs.len() {
                let st = self.entry_state(pidx, v);
                self.procs[pidx].states.grow_right(st);
                if st == SiteState::Occupied {
                    // Tails are never occupied; defensive bookkeeping.
                    self.procs[pidx].note_occupy(v, self.now);
                }
                self.entries.push(Entry { proc: pidx, site: v, state: st });
            }
            self.whi = v;
            self.add_stream(ObjectKey::healing(v));
            self.add_edge_streams(v);
        }
        while site < self.wlo {
            if (self.whi - self.wlo) as usize + 1 >= self.window_cap {
                return Err(DynError::WindowOverflow { cap: self.window_cap });
            }
            let v = self.wlo - 1;
            for pidx in 0..self.procs.len() {
                let st = self.entry_state(pidx, v);
                self.procs[pidx].states.grow_left(st);
                if st == SiteState::Occupied {
                    self.procs[pidx].note_occupy(v, self.now);
                }
                self.entries.push(Entry { proc: pidx, site: v, state: st });
            }
            self.wlo = v;
            self.add_stream(ObjectKey::healing(v));
            self.add_edge_streams(v - 1);
        }
        Ok(())
    }

    /// State a site carries when it enters the window at the current time.
    fn entry_state(&self, proc: usize, site: i64) -> SiteState {
        let p = &self.procs[proc];
        if let Some(h) = p.hard_lo {
            if site < h {
                return SiteState::Empty;
            }
        }
        self.tail_state_now(proc, site)
    }

    /// Process the next arrival at or before `end`. Returns `None` when no
    /// arrivals remain in the evolution interval.
    pub fn step(&mut self) -> Result<Option<StepEvent>, DynError> {
        self.changes.clear();
        self.entries.clear();
        let Reverse(pending) = match self.heap.peek() {
            None => return Ok(None),
            Some(Reverse(p)) if p.time > self.end => return Ok(None),
            Some(_) => self.heap.pop().unwrap(),
        };
        let Pending { time, key, sid } = pending;
        if time == self.last_time {
            self.tie_events += 1;
        }
        self.last_time = time;
        self.now = time;

        // Queue this stream's next arrival.
        {
            let cur = &mut self.streams[sid as usize];
            cur.next += 1;
            if let Some(&t) = cur.times.get(cur.next) {
                if t <= self.end {
                    self.heap.push(Reverse(Pending { time: t, key, sid }));
                }
            }
        }

        match key.kind {
            StreamKind::Healing => self.apply_healing(key.origin),
            StreamKind::FertileArrow => self.apply_fertile(key.origin, key.target)?,
            StreamKind::BlockingArrow => self.apply_blocking(key.origin, key.target)?,
        }
        Ok(Some(StepEvent { time, key }))
    }

    fn apply_healing(&mut self, site: i64) {
        if site < self.wlo || site > self.whi {
            return;
        }
        for pidx in 0..self.procs.len() {
            let p = &self.procs[pidx];
            if let Some(h) = p.hard_lo {
                if site < h {
                    continue;
                }
            }
            if let Some(clamp) = p.clamp() {
                if site <= clamp {
                    continue; // pinned occupied
                }
            }
            if p.states.get(site) != SiteState::Empty {
                self.set_state(pidx, site, SiteState::Empty);
            }
        }
    }

    /// A rule firing at `target` could change this process's state there.
    #[inline]
    fn target_mutable(&self, proc: usize, target: i64) -> bool {
        let p = &self.procs[proc];
        if let Some(h) = p.hard_lo {
            if target < h {
                return false;
            }
        }
        if let Some(clamp) = p.clamp() {
            if target <= clamp {
                return false;
            }
        }
        true
    }

    fn apply_fertile(&mut self, origin: i64, target: i64) -> Result<(), DynError> {
        if target < self.wlo || target > self.whi {
            // Only matters if some process can push occupation outward.
            let need = (0..self.procs.len())
                .any(|p| self.target_mutable(p, target) && self.origin_occupied(p, origin));
            if !need {
                return Ok(());
            }
            self.grow_to(target)?;
        }
        for pidx in 0..self.procs.len() {
            if !self.target_mutable(pidx, target) {
                continue;
            }
            let tgt_empty = self.procs[pidx].states.get(target) == SiteState::Empty;
            if tgt_empty && self.origin_occupied(pidx, origin) {
                self.set_state(pidx, target, SiteState::Occupied);
            }
        }
        Ok(())
    }

    fn apply_blocking(&mut self, origin: i64, target: i64) -> Result<(), DynError> {
        if target < self.wlo || target > self.whi {
            // Spontaneous blocking outside the window is autonomous and will
            // be replayed on first contact; only an inherited-sterility birth
            // forces the window to grow.
            let need = (0..self.procs.len()).any(|p| {
                self.procs[p].kind == ProcessKind::IS
                    && self.target_mutable(p, target)
                    && self.origin_occupied(p, origin)
            });
            if !need {
                return Ok(());
            }
            self.grow_to(target)?;
        }
        for pidx in 0..self.procs.len() {
            if !self.target_mutable(pidx, target) {
                continue;
            }
            match self.procs[pidx].kind {
                ProcessKind::CP => continue,
                ProcessKind::Spont => {
                    if self.procs[pidx].states.get(target) == SiteState::Empty {
                        self.set_state(pidx, target, SiteState::Blocked);
                    }
                }
                ProcessKind::IS => {
                    let tgt_empty = self.procs[pidx].states.get(target) == SiteState::Empty;
                    if tgt_empty && self.origin_occupied(pidx, origin) {
                        self.set_state(pidx, target, SiteState::Blocked);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Autonomous state of an untracked site at time `t1`, starting from
/// `initial` at `t0`. Replays the site's own healing (and, for the
/// spontaneous-blocking dynamics, incoming blocking) streams over `[t0, t1)`.
pub(crate) fn tail_state(
    log: &EventLog,
    kind: ProcessKind,
    initial: SiteState,
    site: i64,
    t0: f64,
    t1: f64,
) -> SiteState {
    debug_assert!(initial != SiteState::Occupied);
    match kind {
        ProcessKind::CP => initial,
        ProcessKind::IS => {
            // Untouched sites cannot be re-blocked (a sterile birth needs an
            // occupied neighbour), so a single healing mark settles it.
            let heals = log.stream(ObjectKey::healing(site));
            let i = heals.partition_point(|&t| t < t0);
            if i < heals.len() && heals[i] < t1 {
                SiteState::Empty
            } else {
                initial
            }
        }
        ProcessKind::Spont => {
            let heal = log.stream(ObjectKey::healing(site));
            let bl = log.stream(ObjectKey::blocking(site - 1, site));
            let br = log.stream(ObjectKey::blocking(site + 1, site));
            let mut ih = heal.partition_point(|&t| t < t0);
            let mut il = bl.partition_point(|&t| t < t0);
            let mut ir = br.partition_point(|&t| t < t0);
            let mut state = initial;
            loop {
                let th = heal.get(ih).copied().unwrap_or(f64::INFINITY);
                let tl = bl.get(il).copied().unwrap_or(f64::INFINITY);
                let tr = br.get(ir).copied().unwrap_or(f64::INFINITY);
                // Blocking precedes healing on (measure-zero) ties, matching
                // the global stream-kind tie order.
                let (t, which) = if tl <= tr && tl <= th {
                    (tl, 0)
                } else if tr <= th {
                    (tr, 1)
                } else {
                    (th, 2)
                };
                if t >= t1 {
                    break;
                }
                match which {
                    0 => {
                        il += 1;
                        if state == SiteState::Empty {
                            state = SiteState::Blocked;
                        }
                    }
                    1 => {
                        ir += 1;
                        if state == SiteState::Empty {
                            state = SiteState::Blocked;
                        }
                    }
                    _ => {
                        ih += 1;
                        state = SiteState::Empty;
                    }
                }
            }
            state
        }
    }
}
