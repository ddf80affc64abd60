//! Evolution of the three dynamics over a shared graphical construction:
//! the spontaneous-blocking process, the inherited-sterility process and the
//! classical contact process, plus the truncated constructions used to pin
//! down the infinite-lattice limits.

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, ProcSpec, DEFAULT_WINDOW_CAP};
use crate::events::{ArrivalSource, EventError, EventLog, ObjectKey, StreamKind};
use crate::lattice::{BoundaryPolicy, Configuration, SiteState};

/// Which update rules a process follows.
///
/// All three share fertile arrows (birth onto an empty site from an occupied
/// origin) and healing marks (any site becomes empty). They differ on
/// blocking arrows: the spontaneous variant blocks an empty target
/// unconditionally, inherited sterility requires an occupied origin, and the
/// contact process ignores them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProcessKind {
    Spont,
    IS,
    CP,
}

impl ProcessKind {
    pub fn label(self) -> &'static str {
        match self {
            ProcessKind::Spont => "spont",
            ProcessKind::IS => "is",
            ProcessKind::CP => "cp",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DynError {
    #[error("window-overflow: tracked window exceeded cap of {cap} sites")]
    WindowOverflow { cap: usize },
    #[error("out-of-horizon: requested {requested} beyond horizon {horizon}")]
    OutOfHorizon { requested: f64, horizon: f64 },
    #[error("precondition-violation: {0}")]
    Precondition(String),
    #[error(transparent)]
    Event(#[from] EventError),
}

/// One recorded state change.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub time: f64,
    pub site: i64,
    pub state: SiteState,
}

/// Piecewise-constant front position over time; `steps` holds changes only.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FrontPath {
    pub start: f64,
    pub initial: Option<i64>,
    pub steps: Vec<(f64, Option<i64>)>,
}

impl FrontPath {
    /// Value at time `t` (right-continuous).
    pub fn at(&self, t: f64) -> Option<i64> {
        let i = self.steps.partition_point(|&(u, _)| u <= t);
        if i == 0 {
            self.initial
        } else {
            self.steps[i - 1].1
        }
    }

    pub fn final_value(&self) -> Option<i64> {
        self.steps.last().map(|&(_, v)| v).unwrap_or(self.initial)
    }

    /// First time the front disappears, if it ever does.
    pub fn first_none(&self) -> Option<f64> {
        if self.initial.is_none() {
            return Some(self.start);
        }
        self.steps.iter().find(|(_, v)| v.is_none()).map(|&(t, _)| t)
    }
}

/// Full record of one evolution: initial snapshot plus time-ordered deltas.
///
/// `entries` records the reconstructed state a site carried when it first
/// joined the tracked window; together with `initial` and `deltas` this
/// reproduces every tracked state. Untracked sites are never occupied.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub kind: ProcessKind,
    pub initial: Configuration,
    pub start: f64,
    pub horizon: f64,
    pub deltas: Vec<Delta>,
    pub entries: Vec<Delta>,
    pub rightmost_path: FrontPath,
    pub leftmost_path: FrontPath,
    pub final_config: Configuration,
    pub tie_events: u64,
}

/// Extinction status of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Extinction {
    At(f64),
    Censored(f64),
}

impl Extinction {
    pub fn is_censored(&self) -> bool {
        matches!(self, Extinction::Censored(_))
    }
}

/// First time without any occupied site, censored at the horizon. A
/// configuration with a pinned occupied tail never goes extinct.
pub fn extinction_time(traj: &Trajectory) -> Extinction {
    match traj.rightmost_path.first_none() {
        Some(t) => Extinction::At(t),
        None => Extinction::Censored(traj.horizon),
    }
}

impl Trajectory {
    pub fn rightmost_at(&self, t: f64) -> Option<i64> {
        self.rightmost_path.at(t)
    }

    /// Per-site state index for repeated queries.
    pub fn index(&self) -> TrajectoryIndex {
        TrajectoryIndex::build(self)
    }
}

/// Per-site history of a trajectory over its final window.
pub struct TrajectoryIndex {
    lo: i64,
    hi: i64,
    initial: Vec<SiteState>,
    changes: Vec<Vec<(f64, SiteState)>>,
    policy: BoundaryPolicy,
}

impl TrajectoryIndex {
    fn build(traj: &Trajectory) -> Self {
        let lo = traj.final_config.lo;
        let hi = traj.final_config.hi;
        let n = (hi - lo + 1) as usize;
        let initial: Vec<SiteState> = (lo..=hi).map(|x| traj.initial.state(x)).collect();
        let mut changes = vec![Vec::new(); n];
        for d in traj.entries.iter().chain(traj.deltas.iter()) {
            if d.site >= lo && d.site <= hi {
                changes[(d.site - lo) as usize].push((d.time, d.state));
            }
        }
        Self { lo, hi, initial, changes, policy: traj.initial.policy }
    }

    /// State at `(site, t)`, right-continuous in `t`. For sites the window
    /// never reached, this is the policy value at the start of the run;
    /// such sites are never occupied, so occupancy queries are exact.
    pub fn state_at(&self, site: i64, t: f64) -> SiteState {
        if site < self.lo || site > self.hi {
            return match self.policy {
                BoundaryPolicy::EmptyTail => SiteState::Empty,
                BoundaryPolicy::BlockedTail => SiteState::Blocked,
                BoundaryPolicy::OccupiedLeftClamp { clamp } => {
                    if site <= clamp {
                        SiteState::Occupied
                    } else {
                        SiteState::Empty
                    }
                }
            };
        }
        let idx = (site - self.lo) as usize;
        let ch = &self.changes[idx];
        let i = ch.partition_point(|&(u, _)| u <= t);
        if i == 0 {
            self.initial[idx]
        } else {
            ch[i - 1].1
        }
    }

    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }
}

struct Recorder {
    deltas: Vec<Delta>,
    entries: Vec<Delta>,
    rpath: FrontPath,
    lpath: FrontPath,
}

impl Recorder {
    fn new(start: f64, r0: Option<i64>, l0: Option<i64>) -> Self {
        Self {
            deltas: Vec::new(),
            entries: Vec::new(),
            rpath: FrontPath { start, initial: r0, steps: Vec::new() },
            lpath: FrontPath { start, initial: l0, steps: Vec::new() },
        }
    }

    fn note_fronts(&mut self, t: f64, r: Option<i64>, l: Option<i64>) {
        if self.rpath.final_value() != r {
            self.rpath.steps.push((t, r));
        }
        if self.lpath.final_value() != l {
            self.lpath.steps.push((t, l));
        }
    }
}

fn run_engine(
    log: &EventLog,
    start: f64,
    until: f64,
    specs: Vec<ProcSpec>,
    window_cap: usize,
    record_deltas: bool,
) -> Result<(Vec<Recorder>, Vec<Configuration>, u64), DynError> {
    let nproc = specs.len();
    let inits: Vec<Configuration> = specs.iter().map(|s| s.init.clone()).collect();
    let mut eng = Engine::new(log, start, until, specs, window_cap)?;
    let mut recs: Vec<Recorder> = (0..nproc)
        .map(|i| Recorder::new(start, eng.rightmost(i), eng.leftmost(i)))
        .collect();
    for (i, rec) in recs.iter_mut().enumerate() {
        debug_assert_eq!(rec.rpath.initial, inits[i].rightmost());
    }
    while let Some(ev) = eng.step()? {
        if record_deltas {
            for e in eng.entries() {
                recs[e.proc].entries.push(Delta { time: ev.time, site: e.site, state: e.state });
            }
            for c in eng.changes() {
                recs[c.proc].deltas.push(Delta { time: ev.time, site: c.site, state: c.new });
            }
        }
        for (i, rec) in recs.iter_mut().enumerate() {
            rec.note_fronts(ev.time, eng.rightmost(i), eng.leftmost(i));
        }
    }
    let finals: Vec<Configuration> = (0..nproc).map(|i| eng.config(i)).collect();
    Ok((recs, finals, eng.tie_events()))
}

/// Evolve one process from `c0` over `[src.start(), until]`.
pub fn evolve(
    kind: ProcessKind,
    c0: &Configuration,
    src: &impl ArrivalSource,
    until: f64,
    window_cap: usize,
) -> Result<Trajectory, DynError> {
    if kind == ProcessKind::CP && has_blocked(c0) {
        return Err(DynError::Precondition(
            "contact process configurations take values in {0, 1}".into(),
        ));
    }
    let start = src.start();
    let (mut recs, mut finals, ties) = run_engine(
        src.log(),
        start,
        until,
        vec![ProcSpec::new(kind, c0.clone())],
        window_cap,
        true,
    )?;
    let rec = recs.pop().unwrap();
    Ok(Trajectory {
        kind,
        initial: c0.clone(),
        start,
        horizon: until,
        deltas: rec.deltas,
        entries: rec.entries,
        rightmost_path: rec.rpath,
        leftmost_path: rec.lpath,
        final_config: finals.pop().unwrap(),
        tie_events: ties,
    })
}

/// Streamed evolution keeping only front paths (for large sweeps).
pub struct FrontSummary {
    pub kind: ProcessKind,
    pub start: f64,
    pub horizon: f64,
    pub rightmost_path: FrontPath,
    pub leftmost_path: FrontPath,
    pub extinction: Extinction,
    pub tie_events: u64,
}

pub fn evolve_front(
    kind: ProcessKind,
    c0: &Configuration,
    src: &impl ArrivalSource,
    until: f64,
    window_cap: usize,
) -> Result<FrontSummary, DynError> {
    let start = src.start();
    let (mut recs, _finals, ties) = run_engine(
        src.log(),
        start,
        until,
        vec![ProcSpec::new(kind, c0.clone())],
        window_cap,
        false,
    )?;
    let rec = recs.pop().unwrap();
    let extinction = match rec.rpath.first_none() {
        Some(t) => Extinction::At(t),
        None => Extinction::Censored(until),
    };
    Ok(FrontSummary {
        kind,
        start,
        horizon: until,
        rightmost_path: rec.rpath,
        leftmost_path: rec.lpath,
        extinction,
        tie_events: ties,
    })
}

fn has_blocked(c: &Configuration) -> bool {
    c.states.contains(&SiteState::Blocked) || matches!(c.policy, BoundaryPolicy::BlockedTail)
}

/// Evolve the three coupled processes on one log over `[0, until]`.
///
/// Requires `xi0 <= eta0 <= zeta0` pointwise with `zeta0` free of blocked
/// sites; the returned trajectories then satisfy the same order at all
/// times, which [`coupled_order_violations`] checks exhaustively.
pub fn evolve_coupled(
    xi0: &Configuration,
    eta0: &Configuration,
    zeta0: &Configuration,
    log: &EventLog,
    until: f64,
    window_cap: usize,
) -> Result<(Trajectory, Trajectory, Trajectory), DynError> {
    if !xi0.le_pointwise(eta0) || !eta0.le_pointwise(zeta0) {
        return Err(DynError::Precondition(
            "coupled start requires xi0 <= eta0 <= zeta0 pointwise".into(),
        ));
    }
    if has_blocked(zeta0) {
        return Err(DynError::Precondition(
            "contact process start must take values in {0, 1}".into(),
        ));
    }
    let specs = vec![
        ProcSpec::new(ProcessKind::Spont, xi0.clone()),
        ProcSpec::new(ProcessKind::IS, eta0.clone()),
        ProcSpec::new(ProcessKind::CP, zeta0.clone()),
    ];
    let (recs, finals, ties) = run_engine(log, 0.0, until, specs, window_cap, true)?;
    let mut out = Vec::new();
    for ((rec, fin), (kind, init)) in recs.into_iter().zip(finals).zip([
        (ProcessKind::Spont, xi0),
        (ProcessKind::IS, eta0),
        (ProcessKind::CP, zeta0),
    ]) {
        out.push(Trajectory {
            kind,
            initial: init.clone(),
            start: 0.0,
            horizon: until,
            deltas: rec.deltas,
            entries: rec.entries,
            rightmost_path: rec.rpath,
            leftmost_path: rec.lpath,
            final_config: fin,
            tie_events: ties,
        });
    }
    let zeta = out.pop().unwrap();
    let eta = out.pop().unwrap();
    let xi = out.pop().unwrap();
    Ok((xi, eta, zeta))
}

/// Count pointwise-order violations `xi <= eta <= zeta` across all delta
/// times and sites of a coupled triple. Only changed sites can break an
/// order that held before, so the scan is linear in the delta count after
/// an initial full-window pass.
pub fn coupled_order_violations(xi: &Trajectory, eta: &Trajectory, zeta: &Trajectory) -> u64 {
    let lo = xi.final_config.lo.min(eta.final_config.lo).min(zeta.final_config.lo);
    let hi = xi.final_config.hi.max(eta.final_config.hi).max(zeta.final_config.hi);
    let ix = xi.index();
    let ie = eta.index();
    let iz = zeta.index();
    let mut violations = 0u64;
    let t0 = xi.start;
    for site in lo..=hi {
        if !(ix.state_at(site, t0) <= ie.state_at(site, t0)
            && ie.state_at(site, t0) <= iz.state_at(site, t0))
        {
            violations += 1;
        }
    }
    let mut probes: Vec<(f64, i64)> = Vec::new();
    for traj in [xi, eta, zeta] {
        for d in traj.entries.iter().chain(traj.deltas.iter()) {
            probes.push((d.time, d.site));
        }
    }
    probes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    probes.dedup();
    for (t, site) in probes {
        if !(ix.state_at(site, t) <= ie.state_at(site, t)
            && ie.state_at(site, t) <= iz.state_at(site, t))
        {
            violations += 1;
        }
    }
    violations
}

/// Count pointwise-order violations `lower <= upper` for two trajectories of
/// one attractive dynamics evolved on the same log.
pub fn pair_order_violations(lower: &Trajectory, upper: &Trajectory) -> u64 {
    let lo = lower.final_config.lo.min(upper.final_config.lo);
    let hi = lower.final_config.hi.max(upper.final_config.hi);
    let il = lower.index();
    let iu = upper.index();
    let mut violations = 0u64;
    for site in lo..=hi {
        if il.state_at(site, lower.start) > iu.state_at(site, lower.start) {
            violations += 1;
        }
    }
    let mut probes: Vec<(f64, i64)> = Vec::new();
    for traj in [lower, upper] {
        for d in traj.entries.iter().chain(traj.deltas.iter()) {
            probes.push((d.time, d.site));
        }
    }
    probes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    probes.dedup();
    for (t, site) in probes {
        if il.state_at(site, t) > iu.state_at(site, t) {
            violations += 1;
        }
    }
    violations
}

/// Spontaneous-blocking dynamics confined to the box `[-n, n]`, from the
/// initial configuration truncated to the box. The restriction keeps healing
/// marks of box sites, fertile arrows between box sites, and blocking arrows
/// pointing into the box. Blocking ignores the origin's state, so admitting
/// arrows from just outside keeps every box site's blocking rate at the
/// generator value `2 * lambda * (1 - p)`; restricting blocking to interior
/// origins would halve it at the box edge and break monotonicity in `n`.
pub fn truncated_evolve_spont(
    n: i64,
    xi0: &Configuration,
    log: &EventLog,
    until: f64,
) -> Result<Trajectory, DynError> {
    assert!(n >= 0);
    if until > log.horizon() {
        return Err(DynError::OutOfHorizon { requested: until, horizon: log.horizon() });
    }
    let init = Configuration {
        lo: -n,
        hi: n,
        states: (-n..=n).map(|x| xi0.state(x)).collect(),
        policy: BoundaryPolicy::EmptyTail,
    };
    let mut states = init.states.clone();
    let at = |states: &Vec<SiteState>, x: i64| states[(x + n) as usize];

    let mut arrivals: Vec<(f64, ObjectKey)> = Vec::new();
    for x in -n..=n {
        for t in log.stream(ObjectKey::healing(x)).iter() {
            arrivals.push((*t, ObjectKey::healing(x)));
        }
        for o in [x - 1, x + 1] {
            let key = ObjectKey::blocking(o, x);
            for t in log.stream(key).iter() {
                arrivals.push((*t, key));
            }
        }
        if x < n {
            for (o, g) in [(x, x + 1), (x + 1, x)] {
                let key = ObjectKey::fertile(o, g);
                for t in log.stream(key).iter() {
                    arrivals.push((*t, key));
                }
            }
        }
    }
    arrivals.retain(|&(t, _)| t <= until);
    arrivals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut rec = Recorder::new(0.0, init.rightmost(), init.leftmost_one());
    for (t, key) in arrivals {
        let changed = match key.kind {
            StreamKind::Healing => {
                if at(&states, key.origin) != SiteState::Empty {
                    states[(key.origin + n) as usize] = SiteState::Empty;
                    Some((key.origin, SiteState::Empty))
                } else {
                    None
                }
            }
            StreamKind::FertileArrow => {
                if at(&states, key.origin) == SiteState::Occupied
                    && at(&states, key.target) == SiteState::Empty
                {
                    states[(key.target + n) as usize] = SiteState::Occupied;
                    Some((key.target, SiteState::Occupied))
                } else {
                    None
                }
            }
            StreamKind::BlockingArrow => {
                if at(&states, key.target) == SiteState::Empty {
                    states[(key.target + n) as usize] = SiteState::Blocked;
                    Some((key.target, SiteState::Blocked))
                } else {
                    None
                }
            }
        };
        if let Some((site, new)) = changed {
            rec.deltas.push(Delta { time: t, site, state: new });
            let r = states.iter().rposition(|s| *s == SiteState::Occupied).map(|i| i as i64 - n);
            let l = states.iter().position(|s| *s == SiteState::Occupied).map(|i| i as i64 - n);
            rec.note_fronts(t, r, l);
        }
    }
    let final_config =
        Configuration { lo: -n, hi: n, states, policy: BoundaryPolicy::EmptyTail };
    Ok(Trajectory {
        kind: ProcessKind::Spont,
        initial: init,
        start: 0.0,
        horizon: until,
        deltas: rec.deltas,
        entries: Vec::new(),
        rightmost_path: rec.rpath,
        leftmost_path: rec.lpath,
        final_config,
        tie_events: 0,
    })
}

/// Inherited-sterility dynamics built by the growing-box recursion: the
/// k-th accepted arrival is the next arrival of the construction restricted
/// to the box `[-(n+k), n+k]`, starting from the configuration truncated to
/// `[-n, n]`.
///
/// Arrivals far from the cluster never change any state, so only their count
/// matters. The implementation keeps an exact running lower bound on that
/// count (all arrivals of the fixed box `[-n, n]` plus every accepted
/// arrival outside it), which provably admits an event whenever the paper's
/// recursion does; before the first box arrival both constructions reject
/// outward growth, so realized trajectories agree exactly.
pub fn truncated_evolve_is(
    n: i64,
    eta0: &Configuration,
    log: &EventLog,
    until: f64,
) -> Result<Trajectory, DynError> {
    assert!(n >= 0);
    if until > log.horizon() {
        return Err(DynError::OutOfHorizon { requested: until, horizon: log.horizon() });
    }
    let mut halo = 16 + (4.0 * log.lambda().max(1.0) * until).ceil() as i64;
    loop {
        match try_truncated_is(n, eta0, log, until, halo) {
            Some(traj) => return Ok(traj),
            None => halo *= 2,
        }
    }
}

/// One attempt at the growing-box recursion with all streams inside
/// `[-(n+halo), n+halo]` collected up front. Returns `None` when the cluster
/// reached the halo edge, meaning the halo must be enlarged.
fn try_truncated_is(
    n: i64,
    eta0: &Configuration,
    log: &EventLog,
    until: f64,
    halo: i64,
) -> Option<Trajectory> {
    let init = Configuration {
        lo: -n,
        hi: n,
        states: (-n..=n).map(|x| eta0.state(x)).collect(),
        policy: BoundaryPolicy::EmptyTail,
    };

    // All arrivals of the fixed box [-n, n]: a certified lower bound on the
    // growing-box event count at any time.
    let mut box_arrivals: Vec<f64> = Vec::new();
    for x in -n..=n {
        box_arrivals.extend(log.stream(ObjectKey::healing(x)).iter());
        if x < n {
            for kind in [StreamKind::FertileArrow, StreamKind::BlockingArrow] {
                for (o, g) in [(x, x + 1), (x + 1, x)] {
                    box_arrivals
                        .extend(log.stream(ObjectKey { kind, origin: o, target: g }).iter());
                }
            }
        }
    }
    box_arrivals.retain(|&t| t <= until);
    box_arrivals.sort_by(f64::total_cmp);

    let reach = n + halo;
    let mut arrivals: Vec<(f64, ObjectKey)> = Vec::new();
    for x in -reach..=reach {
        for t in log.stream(ObjectKey::healing(x)).iter().copied() {
            if t <= until {
                arrivals.push((t, ObjectKey::healing(x)));
            }
        }
        if x < reach {
            for kind in [StreamKind::FertileArrow, StreamKind::BlockingArrow] {
                for (o, g) in [(x, x + 1), (x + 1, x)] {
                    let key = ObjectKey { kind, origin: o, target: g };
                    for t in log.stream(key).iter().copied() {
                        if t <= until {
                            arrivals.push((t, key));
                        }
                    }
                }
            }
        }
    }
    arrivals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut lo = -n;
    let mut hi = n;
    let mut states: Vec<SiteState> = init.states.clone();
    let mut accepted_outside: u64 = 0;
    let mut rec = Recorder::new(0.0, init.rightmost(), init.leftmost_one());

    for &(t, key) in &arrivals {
        let span = key.origin.abs().max(key.target.abs());
        if span > n {
            let kappa = box_arrivals.partition_point(|&u| u < t) as u64;
            if span as u64 > n as u64 + kappa + accepted_outside {
                continue; // the growing box has not reached this far yet
            }
            accepted_outside += 1;
        }
        let get = |states: &Vec<SiteState>, x: i64| -> SiteState {
            if x < lo || x > hi {
                SiteState::Empty
            } else {
                states[(x - lo) as usize]
            }
        };
        let changed = match key.kind {
            StreamKind::Healing => {
                (get(&states, key.origin) != SiteState::Empty)
                    .then_some((key.origin, SiteState::Empty))
            }
            StreamKind::FertileArrow => (get(&states, key.origin) == SiteState::Occupied
                && get(&states, key.target) == SiteState::Empty)
                .then_some((key.target, SiteState::Occupied)),
            StreamKind::BlockingArrow => (get(&states, key.origin) == SiteState::Occupied
                && get(&states, key.target) == SiteState::Empty)
                .then_some((key.target, SiteState::Blocked)),
        };
        if let Some((site, new)) = changed {
            if site < lo {
                states.insert(0, SiteState::Empty);
                lo -= 1;
            } else if site > hi {
                states.push(SiteState::Empty);
                hi += 1;
            }
            if lo <= -reach + 1 || hi >= reach - 1 {
                return None; // cluster reached the halo; retry larger
            }
            states[(site - lo) as usize] = new;
            rec.deltas.push(Delta { time: t, site, state: new });
            let r = states.iter().rposition(|s| *s == SiteState::Occupied).map(|j| j as i64 + lo);
            let l = states.iter().position(|s| *s == SiteState::Occupied).map(|j| j as i64 + lo);
            rec.note_fronts(t, r, l);
        }
    }
    let final_config = Configuration { lo, hi, states, policy: BoundaryPolicy::EmptyTail };
    Some(Trajectory {
        kind: ProcessKind::IS,
        initial: init,
        start: 0.0,
        horizon: until,
        deltas: rec.deltas,
        entries: Vec::new(),
        rightmost_path: rec.rpath,
        leftmost_path: rec.lpath,
        final_config,
        tie_events: 0,
    })
}

/// Result of replaying a trajectory against its log.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ReplayAudit {
    pub n_deltas_checked: u64,
    pub n_violations: u64,
    pub first_violation: Option<String>,
}

/// Verify that every delta is justified by exactly one arrival and the
/// pre-arrival states of at most two sites.
pub fn verify_trajectory(traj: &Trajectory, log: &EventLog) -> ReplayAudit {
    let idx = traj.index();
    let mut audit = ReplayAudit::default();
    let mut fail = |audit: &mut ReplayAudit, d: &Delta, why: &str| {
        audit.n_violations += 1;
        if audit.first_violation.is_none() {
            audit.first_violation =
                Some(format!("delta t={} site={} -> {:?}: {}", d.time, d.site, d.state, why));
        }
    };
    for d in &traj.deltas {
        audit.n_deltas_checked += 1;
        let before = just_before(&idx, d.site, d.time, traj);
        match d.state {
            SiteState::Empty => {
                if !log.has_arrival(ObjectKey::healing(d.site), d.time, d.time) {
                    fail(&mut audit, d, "no healing arrival at this time");
                } else if before == SiteState::Empty {
                    fail(&mut audit, d, "healing applied to an already empty site");
                }
            }
            SiteState::Occupied => {
                let mut ok = false;
                for o in [d.site - 1, d.site + 1] {
                    if log.has_arrival(ObjectKey::fertile(o, d.site), d.time, d.time)
                        && just_before(&idx, o, d.time, traj) == SiteState::Occupied
                    {
                        ok = true;
                    }
                }
                if !ok || before != SiteState::Empty {
                    fail(&mut audit, d, "birth without occupied origin onto empty target");
                }
            }
            SiteState::Blocked => {
                if traj.kind == ProcessKind::CP {
                    fail(&mut audit, d, "contact process cannot block");
                    continue;
                }
                let mut ok = false;
                for o in [d.site - 1, d.site + 1] {
                    if log.has_arrival(ObjectKey::blocking(o, d.site), d.time, d.time) {
                        let origin_ok = match traj.kind {
                            ProcessKind::Spont => true,
                            ProcessKind::IS => {
                                just_before(&idx, o, d.time, traj) == SiteState::Occupied
                            }
                            ProcessKind::CP => false,
                        };
                        if origin_ok {
                            ok = true;
                        }
                    }
                }
                if !ok || before != SiteState::Empty {
                    fail(&mut audit, d, "blocking without a justifying arrow");
                }
            }
        }
    }
    audit
}

/// State strictly before time `t` at `site` (left limit).
fn just_before(idx: &TrajectoryIndex, site: i64, t: f64, traj: &Trajectory) -> SiteState {
    // Shift the query just below t: use the largest representable time < t
    // via direct search over the site's change list.
    let (lo, hi) = idx.window();
    if site < lo || site > hi {
        return idx.state_at(site, t);
    }
    // Replay changes strictly before t.
    let mut state = traj.initial.state(site);
    for d in traj.entries.iter().chain(traj.deltas.iter()) {
        if d.site == site && d.time < t {
            state = d.state;
        }
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_initial, InitialSpec};

    fn single0() -> Configuration {
        make_initial(&InitialSpec::SingleOne(0)).unwrap()
    }

    #[test]
    fn empty_log_no_deltas() {
        let log = EventLog::explicit(2.0, 0.5, 5.0, vec![]).unwrap();
        let traj = evolve(ProcessKind::Spont, &single0(), &log, 5.0, 1 << 20).unwrap();
        assert!(traj.deltas.is_empty());
        assert_eq!(traj.rightmost_path.at(4.9), Some(0));
    }

    #[test]
    fn hand_replay_oracle() {
        // One birth 0 -> 1 at 0.5, then healing at site 0 at 0.8.
        let log = EventLog::explicit(
            2.0,
            0.5,
            1.0,
            vec![
                (ObjectKey::fertile(0, 1), vec![0.5]),
                (ObjectKey::healing(0), vec![0.8]),
            ],
        )
        .unwrap();
        let traj = evolve(ProcessKind::Spont, &single0(), &log, 1.0, 1 << 20).unwrap();
        assert_eq!(
            traj.deltas,
            vec![
                Delta { time: 0.5, site: 1, state: SiteState::Occupied },
                Delta { time: 0.8, site: 0, state: SiteState::Empty },
            ]
        );
        assert_eq!(traj.rightmost_path.at(0.25), Some(0));
        assert_eq!(traj.rightmost_path.at(0.5), Some(1));
        assert_eq!(traj.rightmost_path.at(1.0), Some(1));
        let idx = traj.index();
        assert_eq!(idx.state_at(0, 0.6), SiteState::Occupied);
        assert_eq!(idx.state_at(0, 0.8), SiteState::Empty);
        assert_eq!(idx.state_at(1, 0.8), SiteState::Occupied);
        assert!(verify_trajectory(&traj, &log).n_violations == 0);
    }

    #[test]
    fn blocking_rules_differ_by_kind() {
        // Blocking arrow 0 -> 1 at t=0.3 with origin NOT occupied.
        let log = EventLog::explicit(
            2.0,
            0.5,
            1.0,
            vec![(ObjectKey::blocking(0, 1), vec![0.3])],
        )
        .unwrap();
        let empty0 = make_initial(&InitialSpec::Explicit {
            lo: 0,
            states: vec![SiteState::Empty, SiteState::Empty],
            policy: BoundaryPolicy::EmptyTail,
            claimed_rightmost: None,
        })
        .unwrap();
        let spont = evolve(ProcessKind::Spont, &empty0, &log, 1.0, 1 << 20).unwrap();
        assert_eq!(spont.deltas.len(), 1);
        assert_eq!(spont.deltas[0].state, SiteState::Blocked);
        let is = evolve(ProcessKind::IS, &empty0, &log, 1.0, 1 << 20).unwrap();
        assert!(is.deltas.is_empty());
        let cp = evolve(ProcessKind::CP, &empty0, &log, 1.0, 1 << 20).unwrap();
        assert!(cp.deltas.is_empty());
    }

    #[test]
    fn cp_at_p_one_equals_spont() {
        let log = EventLog::build(404, 3.0, 1.0, 15.0).unwrap();
        let spont = evolve(ProcessKind::Spont, &single0(), &log, 15.0, 1 << 20).unwrap();
        let cp = evolve(ProcessKind::CP, &single0(), &log, 15.0, 1 << 20).unwrap();
        assert_eq!(spont.deltas, cp.deltas);
        assert_eq!(spont.rightmost_path.steps, cp.rightmost_path.steps);
    }

    #[test]
    fn coupled_order_holds() {
        for seed in 0..20 {
            let log = EventLog::build(seed, 4.0, 0.9, 8.0).unwrap();
            let c = single0();
            let (xi, eta, zeta) = evolve_coupled(&c, &c, &c, &log, 8.0, 1 << 20).unwrap();
            assert_eq!(coupled_order_violations(&xi, &eta, &zeta), 0, "seed {seed}");
        }
    }

    #[test]
    fn coupled_rejects_bad_order() {
        let hostile = make_initial(&InitialSpec::Hostile(0)).unwrap();
        let single = single0();
        let log = EventLog::build(1, 2.0, 0.5, 1.0).unwrap();
        assert!(evolve_coupled(&single, &hostile, &single, &log, 1.0, 1 << 20).is_err());
    }

    #[test]
    fn extinction_reported() {
        let log = EventLog::explicit(2.0, 0.5, 5.0, vec![(ObjectKey::healing(0), vec![2.0])])
            .unwrap();
        let traj = evolve(ProcessKind::Spont, &single0(), &log, 5.0, 1 << 20).unwrap();
        assert_eq!(extinction_time(&traj), Extinction::At(2.0));
        let heav = make_initial(&InitialSpec::Heaviside { front: 0, clamp_depth: 4 }).unwrap();
        let traj = evolve(ProcessKind::CP, &heav, &log, 5.0, 1 << 20).unwrap();
        assert!(extinction_time(&traj).is_censored());
    }

    #[test]
    fn growth_schedule_independence() {
        let a = EventLog::build(77, 4.0, 0.8, 10.0).unwrap();
        let b = EventLog::build(77, 4.0, 0.8, 10.0).unwrap();
        b.extend_window(40);
        b.extend_window(-17);
        let ta = evolve(ProcessKind::IS, &single0(), &a, 10.0, 1 << 20).unwrap();
        let tb = evolve(ProcessKind::IS, &single0(), &b, 10.0, 1 << 20).unwrap();
        assert_eq!(ta.deltas, tb.deltas);
    }

    #[test]
    fn spont_attractive_on_random_pairs() {
        for seed in 0..15 {
            let log = EventLog::build(1000 + seed, 3.5, 0.7, 6.0).unwrap();
            let lower = make_initial(&InitialSpec::Hostile(0)).unwrap();
            let upper = single0();
            let (a, b, _c) = {
                let tl = evolve(ProcessKind::Spont, &lower, &log, 6.0, 1 << 20).unwrap();
                let tu = evolve(ProcessKind::Spont, &upper, &log, 6.0, 1 << 20).unwrap();
                (tl, tu, ())
            };
            assert_eq!(pair_order_violations(&a, &b), 0, "seed {seed}");
        }
    }

    #[test]
    fn truncated_spont_box_zero() {
        // Only healing at the origin acts; the single occupied site dies at
        // its first healing mark.
        let log = EventLog::build(9, 4.0, 0.9, 50.0).unwrap();
        let heal0 = log.stream(ObjectKey::healing(0));
        let traj = truncated_evolve_spont(0, &single0(), &log, 50.0).unwrap();
        assert_eq!(extinction_time(&traj), Extinction::At(heal0[0]));
    }

    #[test]
    fn truncated_spont_monotone_in_box() {
        for seed in 0..10 {
            let log = EventLog::build(2000 + seed, 4.0, 0.9, 5.0).unwrap();
            let c0 = single0();
            let small = truncated_evolve_spont(6, &c0, &log, 5.0).unwrap();
            let big = truncated_evolve_spont(12, &c0, &log, 5.0).unwrap();
            let is_ = small.index();
            let ib = big.index();
            let mut probes: Vec<(f64, i64)> = small
                .deltas
                .iter()
                .chain(big.deltas.iter())
                .map(|d| (d.time, d.site))
                .filter(|&(_, s)| (-6..=6).contains(&s))
                .collect();
            probes.push((0.0, 0));
            for (t, s) in probes {
                assert!(
                    is_.state_at(s, t) <= ib.state_at(s, t),
                    "seed {seed} at ({s}, {t})"
                );
            }
        }
    }

    #[test]
    fn truncated_spont_matches_full_when_box_large() {
        // With the box far beyond the light cone, the truncated process must
        // agree with the lazy-window evolution wherever the latter tracked
        // states, and the fronts must coincide.
        for seed in 0..8 {
            let log = EventLog::build(3000 + seed, 3.0, 0.9, 4.0).unwrap();
            let full = evolve(ProcessKind::Spont, &single0(), &log, 4.0, 1 << 20).unwrap();
            let trunc = truncated_evolve_spont(60, &single0(), &log, 4.0).unwrap();
            assert_eq!(full.rightmost_path.steps, trunc.rightmost_path.steps, "seed {seed}");
            let (lo, hi) = (full.final_config.lo, full.final_config.hi);
            // The lazy window is exact at a site only from its entry on.
            let mut entered: std::collections::HashMap<i64, f64> = (full.initial.lo
                ..=full.initial.hi)
                .map(|s| (s, 0.0))
                .collect();
            for e in &full.entries {
                entered.entry(e.site).or_insert(e.time);
            }
            let fi = full.index();
            let ti = trunc.index();
            let mut probes: Vec<(f64, i64)> = full
                .deltas
                .iter()
                .chain(trunc.deltas.iter())
                .map(|d| (d.time, d.site))
                .filter(|&(t, s)| {
                    s >= lo && s <= hi && entered.get(&s).is_some_and(|&e| t >= e)
                })
                .collect();
            probes.push((0.0, 0));
            for (t, s) in probes {
                assert_eq!(fi.state_at(s, t), ti.state_at(s, t), "seed {seed} at ({s},{t})");
            }
        }
    }

    #[test]
    fn truncated_is_agrees_for_large_boxes() {
        for seed in 0..8 {
            let log = EventLog::build(4000 + seed, 4.0, 0.7, 5.0).unwrap();
            let c0 = single0();
            let a = truncated_evolve_is(20, &c0, &log, 5.0).unwrap();
            let b = truncated_evolve_is(33, &c0, &log, 5.0).unwrap();
            let ia = a.index();
            let ib = b.index();
            let mut probes: Vec<(f64, i64)> = a
                .deltas
                .iter()
                .chain(b.deltas.iter())
                .map(|d| (d.time, d.site))
                .filter(|&(_, s)| (-5..=5).contains(&s))
                .collect();
            probes.push((0.0, 0));
            for (t, s) in probes {
                assert_eq!(ia.state_at(s, t), ib.state_at(s, t), "seed {seed} at ({s},{t})");
            }
        }
    }

    #[test]
    fn truncated_is_matches_lazy_window_for_large_box() {
        for seed in 0..8 {
            let log = EventLog::build(5000 + seed, 4.0, 0.7, 5.0).unwrap();
            let full = evolve(ProcessKind::IS, &single0(), &log, 5.0, 1 << 20).unwrap();
            let trunc = truncated_evolve_is(40, &single0(), &log, 5.0).unwrap();
            assert_eq!(full.deltas, trunc.deltas, "seed {seed}");
        }
    }

    #[test]
    fn replay_audit_flags_corruption() {
        let log = EventLog::build(42, 4.0, 0.8, 6.0).unwrap();
        let mut traj = evolve(ProcessKind::Spont, &single0(), &log, 6.0, 1 << 20).unwrap();
        assert_eq!(verify_trajectory(&traj, &log).n_violations, 0);
        if let Some(d) = traj.deltas.first_mut() {
            d.time += 1e-3;
        }
        assert!(verify_trajectory(&traj, &log).n_violations > 0);
    }
}
