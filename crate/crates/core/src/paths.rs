//! Active infection paths: reachability with witnesses, the occupancy
//! equivalence audit, the leftmost active path, and the never-healed
//! frontier.
//!
//! An active infection path is a càdlàg site-valued step function that never
//! sits through a healing mark (P1), jumps only along fertile arrows (P2)
//! and never visits a site while the host process has it blocked (P3).
//! Reachability is decided relative to a host trajectory's realized states
//! over its tracked window.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Trajectory, TrajectoryIndex};
use crate::events::{EventLog, ObjectKey, StreamKind};
use crate::lattice::SiteState;

/// One constant piece of a path: the path occupies `site` on
/// `[t_start, t_end)`, or `[t_start, t_end]` for the final segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub site: i64,
}

/// Reference to the fertile arrow justifying one jump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpRef {
    pub time: f64,
    pub origin: i64,
    pub target: i64,
}

/// A concrete active infection path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathWitness {
    pub segments: Vec<Segment>,
    pub jumps: Vec<JumpRef>,
}

impl PathWitness {
    pub fn source(&self) -> (i64, f64) {
        let s = self.segments.first().expect("witness has segments");
        (s.site, s.t_start)
    }

    pub fn target(&self) -> (i64, f64) {
        let s = self.segments.last().expect("witness has segments");
        (s.site, s.t_end)
    }

    /// Path position at time `u` (right-continuous).
    pub fn at(&self, u: f64) -> Option<i64> {
        self.segments
            .iter()
            .find(|s| (u >= s.t_start && u < s.t_end) || (u == s.t_end && s.t_end == self.target().1))
            .map(|s| s.site)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PathError {
    #[error("no-occupied-site: host process extinct at the queried time")]
    NoOccupiedSite,
}

/// Relevant event for the path sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Ev {
    /// Fertile arrow origin -> target.
    Jump { origin: i64, target: i64 },
    /// Healing mark at a site (kills any path sitting there).
    Heal { site: i64 },
    /// The host trajectory flipped this site to blocked.
    Block { site: i64 },
}

/// Time-ordered sweep events over the host window in `(after, until]`.
fn sweep_events(traj: &Trajectory, log: &EventLog, after: f64, until: f64) -> Vec<(f64, Ev)> {
    let lo = traj.final_config.lo;
    let hi = traj.final_config.hi;
    let mut evs: Vec<(f64, Ev, u8)> = Vec::new();
    for site in lo..=hi {
        for &t in log.stream(ObjectKey::healing(site)).iter() {
            if t > after && t <= until {
                evs.push((t, Ev::Heal { site }, 2));
            }
        }
    }
    for o in lo..=hi {
        for tgt in [o - 1, o + 1] {
            if tgt < lo || tgt > hi {
                continue;
            }
            for &t in log.stream(ObjectKey::fertile(o, tgt)).iter() {
                if t > after && t <= until {
                    evs.push((t, Ev::Jump { origin: o, target: tgt }, 0));
                }
            }
        }
    }
    for d in &traj.deltas {
        if d.state == SiteState::Blocked && d.time > after && d.time <= until {
            evs.push((d.time, Ev::Block { site: d.site }, 1));
        }
    }
    // Same tie order as the evolution: fertile, then blocking, then healing;
    // within a kind, by (origin, target).
    let ev_sites = |e: &Ev| -> (i64, i64) {
        match *e {
            Ev::Jump { origin, target } => (origin, target),
            Ev::Heal { site } | Ev::Block { site } => (site, site),
        }
    };
    evs.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)).then_with(|| ev_sites(&a.1).cmp(&ev_sites(&b.1)))
    });
    evs.into_iter().map(|(t, e, _)| (t, e)).collect()
}

/// A path may start or jump onto a site only if the host state there is not
/// blocked and no healing mark sits exactly at that instant.
fn can_sit(idx: &TrajectoryIndex, log: &EventLog, site: i64, t: f64) -> bool {
    idx.state_at(site, t) != SiteState::Blocked
        && !log.has_arrival(ObjectKey::healing(site), t, t)
}

/// Decide whether an active infection path `(from) => (to)` exists for the
/// host trajectory, returning a witness when it does.
///
/// Paths are confined to the host's tracked window; for sources occupied in
/// the host this is exact, since active paths from occupied sites travel on
/// occupied sites only.
pub fn active_reachable(
    traj: &Trajectory,
    log: &EventLog,
    from: (i64, f64),
    to: (i64, f64),
) -> (bool, Option<PathWitness>) {
    let idx = traj.index();
    let (fs, ft) = from;
    let (ts, tt) = to;
    if ft > tt {
        return (false, None);
    }
    let (lo, hi) = idx.window();
    if fs < lo || fs > hi || ts < lo || ts > hi {
        return (false, None);
    }
    if !can_sit(&idx, log, fs, ft) {
        return (false, None);
    }

    // Parent-linked records for witness extraction.
    struct Rec {
        site: i64,
        time: f64,
        parent: Option<usize>,
    }
    let mut arena: Vec<Rec> = vec![Rec { site: fs, time: ft, parent: None }];
    let n = (hi - lo + 1) as usize;
    let mut live: Vec<Option<usize>> = vec![None; n];
    live[(fs - lo) as usize] = Some(0);

    for (t, ev) in sweep_events(traj, log, ft, tt) {
        match ev {
            Ev::Heal { site } => {
                live[(site - lo) as usize] = None;
            }
            Ev::Block { site } => {
                live[(site - lo) as usize] = None;
            }
            Ev::Jump { origin, target } => {
                let oi = (origin - lo) as usize;
                let ti = (target - lo) as usize;
                if let Some(par) = live[oi] {
                    if live[ti].is_none() && can_sit(&idx, log, target, t) {
                        arena.push(Rec { site: target, time: t, parent: Some(par) });
                        live[ti] = Some(arena.len() - 1);
                    }
                }
            }
        }
    }

    match live[(ts - lo) as usize] {
        None => (false, None),
        Some(mut rec) => {
            let mut rev: Vec<(i64, f64)> = Vec::new();
            loop {
                let r = &arena[rec];
                rev.push((r.site, r.time));
                match r.parent {
                    Some(p) => rec = p,
                    None => break,
                }
            }
            rev.reverse();
            let mut segments = Vec::new();
            let mut jumps = Vec::new();
            for (i, &(site, t0)) in rev.iter().enumerate() {
                let t1 = rev.get(i + 1).map(|&(_, u)| u).unwrap_or(tt);
                segments.push(Segment { t_start: t0, t_end: t1, site });
                if i + 1 < rev.len() {
                    jumps.push(JumpRef { time: t1, origin: site, target: rev[i + 1].0 });
                }
            }
            (true, Some(PathWitness { segments, jumps }))
        }
    }
}

/// Independent validation of a witness against the raw log and host states.
pub fn check_witness(
    w: &PathWitness,
    traj: &Trajectory,
    log: &EventLog,
    from: (i64, f64),
    to: (i64, f64),
) -> bool {
    let idx = traj.index();
    if w.segments.is_empty() {
        return false;
    }
    if w.source() != from || w.target() != (to.0, to.1) {
        return false;
    }
    let last = w.segments.len() - 1;
    for (i, seg) in w.segments.iter().enumerate() {
        if seg.t_end < seg.t_start {
            return false;
        }
        if i + 1 < w.segments.len() {
            let next = &w.segments[i + 1];
            if next.t_start != seg.t_end || (next.site - seg.site).abs() != 1 {
                return false;
            }
        }
        // (P1) no healing while sitting: [t_start, t_end) for inner
        // segments, [t_start, t_end] for the final one.
        let heals = log.stream(ObjectKey::healing(seg.site));
        let a = heals.partition_point(|&t| t < seg.t_start);
        if a < heals.len() {
            let h = heals[a];
            let violates = if i == last { h <= seg.t_end } else { h < seg.t_end };
            if violates {
                return false;
            }
        }
        // (P3) never blocked while sitting: check at entry and at every
        // host blocking flip inside the segment.
        if idx.state_at(seg.site, seg.t_start) == SiteState::Blocked {
            return false;
        }
        for d in &traj.deltas {
            if d.site == seg.site
                && d.state == SiteState::Blocked
                && d.time > seg.t_start
                && (d.time < seg.t_end || (i == last && d.time <= seg.t_end))
            {
                return false;
            }
        }
    }
    // (P2) every jump rides a fertile arrow.
    for j in &w.jumps {
        if !log.has_arrival(ObjectKey::fertile(j.origin, j.target), j.time, j.time) {
            return false;
        }
    }
    true
}

/// Occupancy/path equivalence audit at time `t`: a site is occupied exactly
/// when an active infection path reaches it from a site occupied at the
/// start. Exact for the spontaneous-blocking and inherited-sterility
/// dynamics.
pub fn occupancy_path_equivalence(traj: &Trajectory, log: &EventLog, t: f64) -> bool {
    let idx = traj.index();
    let (lo, hi) = idx.window();
    let n = (hi - lo + 1) as usize;
    let start = traj.start;
    let mut live: Vec<bool> = vec![false; n];
    for site in lo..=hi {
        if traj.initial.state(site) == SiteState::Occupied && can_sit(&idx, log, site, start) {
            live[(site - lo) as usize] = true;
        }
    }
    for (u, ev) in sweep_events(traj, log, start, t) {
        match ev {
            Ev::Heal { site } | Ev::Block { site } => live[(site - lo) as usize] = false,
            Ev::Jump { origin, target } => {
                if live[(origin - lo) as usize]
                    && !live[(target - lo) as usize]
                    && can_sit(&idx, log, target, u)
                {
                    live[(target - lo) as usize] = true;
                }
            }
        }
    }
    (lo..=hi).all(|site| (idx.state_at(site, t) == SiteState::Occupied) == live[(site - lo) as usize])
}

/// Witnesses for every occupied site at time `t`, each re-validated against
/// the raw events; `None` when some occupied site has no validated witness
/// or some unoccupied site is reachable.
pub fn occupancy_witnesses(
    traj: &Trajectory,
    log: &EventLog,
    t: f64,
) -> Option<Vec<(i64, PathWitness)>> {
    let idx = traj.index();
    let (lo, hi) = idx.window();
    let sources: Vec<i64> = (lo..=hi)
        .filter(|&s| traj.initial.state(s) == SiteState::Occupied)
        .collect();
    let mut out = Vec::new();
    for site in lo..=hi {
        let occupied = idx.state_at(site, t) == SiteState::Occupied;
        let mut found = None;
        for &src in &sources {
            let (ok, w) = active_reachable(traj, log, (src, traj.start), (site, t));
            if ok {
                let w = w.unwrap();
                if !check_witness(&w, traj, log, (src, traj.start), (site, t)) {
                    return None;
                }
                found = Some(w);
                break;
            }
        }
        match (occupied, found) {
            (true, Some(w)) => out.push((site, w)),
            (true, None) => return None,
            (false, Some(_)) => return None,
            (false, None) => {}
        }
    }
    Some(out)
}

/// The minimal active path (leftmost start, then leftmost at the first
/// divergence) from an initially occupied site to the leftmost occupied
/// site at time `t`.
pub fn leftmost_active_path(
    traj: &Trajectory,
    log: &EventLog,
    t: f64,
) -> Result<PathWitness, PathError> {
    let idx = traj.index();
    let (lo, hi) = idx.window();
    let n = (hi - lo + 1) as usize;
    let target = (lo..=hi)
        .find(|&s| idx.state_at(s, t) == SiteState::Occupied)
        .ok_or(PathError::NoOccupiedSite)?;

    let events = sweep_events(traj, log, traj.start, t);
    let m = events.len();
    // g[k][z]: a path sitting at z just after event k (or at the start for
    // k = 0) can still reach (target, t).
    let mut g = vec![vec![false; n]; m + 1];
    g[m][(target - lo) as usize] = true;
    for k in (0..m).rev() {
        let (u, ev) = events[k];
        let (next, cur) = {
            let (a, b) = g.split_at_mut(k + 1);
            (&b[0], &mut a[k])
        };
        cur.copy_from_slice(next);
        match ev {
            Ev::Heal { site } | Ev::Block { site } => cur[(site - lo) as usize] = false,
            Ev::Jump { origin, target: tgt } => {
                if next[(tgt - lo) as usize] && can_sit(&idx, log, tgt, u) {
                    cur[(origin - lo) as usize] = true;
                }
            }
        }
    }

    // Leftmost feasible source.
    let source = (lo..=hi).find(|&s| {
        traj.initial.state(s) == SiteState::Occupied
            && can_sit(&idx, log, s, traj.start)
            && g[0][(s - lo) as usize]
    });
    let Some(source) = source else {
        return Err(PathError::NoOccupiedSite);
    };

    // Greedy forward walk: jump left whenever feasible, jump right only
    // when staying is not.
    let mut site = source;
    let mut since = traj.start;
    let mut segments = Vec::new();
    let mut jumps = Vec::new();
    for (k, &(u, ev)) in events.iter().enumerate() {
        if let Ev::Jump { origin, target: tgt } = ev {
            if origin == site {
                let stay_ok = g[k + 1][(site - lo) as usize];
                let jump_ok = g[k + 1][(tgt - lo) as usize] && can_sit(&idx, log, tgt, u);
                let jump = if tgt < site { jump_ok } else { !stay_ok && jump_ok };
                if jump {
                    segments.push(Segment { t_start: since, t_end: u, site });
                    jumps.push(JumpRef { time: u, origin: site, target: tgt });
                    site = tgt;
                    since = u;
                }
            }
        }
    }
    segments.push(Segment { t_start: since, t_end: t, site });
    debug_assert_eq!(site, target);
    Ok(PathWitness { segments, jumps })
}

/// Least site right of `x` with no healing mark during `[1, t]` (the paper's
/// anchor interval starts at 1, not 0). Scan cost grows like `e^t`; use
/// [`frontier_within`] for large `t`.
pub fn never_healed_frontier(log: &EventLog, x: i64, t: f64) -> i64 {
    assert!(t >= 1.0);
    let mut y = x + 1;
    loop {
        if !log.has_arrival(ObjectKey::healing(y), 1.0, t) {
            return y;
        }
        y += 1;
    }
}

/// As [`never_healed_frontier`] but giving up beyond `x + cap`.
pub fn frontier_within(log: &EventLog, x: i64, t: f64, cap: i64) -> Option<i64> {
    assert!(t >= 1.0);
    (x + 1..=x + cap).find(|&y| !log.has_arrival(ObjectKey::healing(y), 1.0, t))
}

/// Check that the never-healed frontier anchored just above `a` clears the
/// line `b + slope * s` for every `s` in `[1, t_end]`, with healing marks
/// read from `[shift + 1, shift + s]`.
///
/// Site by site: a site `y` in the band must have healed by the time the
/// line reaches it, so only `O(slope * t_end)` stream queries are needed.
pub fn frontier_clears_line(
    log: &EventLog,
    a: i64,
    b: f64,
    slope: f64,
    shift: f64,
    t_end: f64,
) -> bool {
    if t_end < 1.0 {
        return true;
    }
    let top = (b + slope * t_end).floor() as i64;
    let mut y = a + 1;
    while y <= top {
        let s_y = ((y as f64 - b) / slope).max(1.0);
        if s_y > t_end {
            break;
        }
        if !log.has_arrival(ObjectKey::healing(y), shift + 1.0, shift + s_y) {
            return false;
        }
        y += 1;
    }
    true
}

/// Exhaustive reachability oracle over all candidate step functions. Only
/// for tiny instances; kept independent of the sweep so the two can check
/// each other.
pub mod oracle {
    use super::*;

    pub fn reachable(
        traj: &Trajectory,
        log: &EventLog,
        from: (i64, f64),
        to: (i64, f64),
    ) -> bool {
        let idx = traj.index();
        let (lo, hi) = idx.window();
        if from.0 < lo || from.0 > hi || to.0 < lo || to.0 > hi || from.1 > to.1 {
            return false;
        }
        let events = sweep_events(traj, log, from.1, to.1);
        if !can_sit(&idx, log, from.0, from.1) {
            return false;
        }
        dfs(&idx, log, &events, 0, from.0, to)
    }

    fn dfs(
        idx: &TrajectoryIndex,
        log: &EventLog,
        events: &[(f64, Ev)],
        k: usize,
        site: i64,
        to: (i64, f64),
    ) -> bool {
        if k == events.len() {
            return site == to.0;
        }
        let (u, ev) = events[k];
        match ev {
            Ev::Heal { site: z } | Ev::Block { site: z } if z == site => false,
            Ev::Jump { origin, target } if origin == site => {
                // Either stay or take the arrow.
                if dfs(idx, log, events, k + 1, site, to) {
                    return true;
                }
                if can_sit(idx, log, target, u) {
                    return dfs(idx, log, events, k + 1, target, to);
                }
                false
            }
            _ => dfs(idx, log, events, k + 1, site, to),
        }
    }

    /// All witnesses to the target, for checking leftmost-path minimality.
    pub fn all_paths(
        traj: &Trajectory,
        log: &EventLog,
        from: (i64, f64),
        to: (i64, f64),
    ) -> Vec<Vec<(f64, i64)>> {
        let idx = traj.index();
        let (lo, hi) = idx.window();
        if from.0 < lo || from.0 > hi || to.0 < lo || to.0 > hi {
            return Vec::new();
        }
        if !can_sit(&idx, log, from.0, from.1) {
            return Vec::new();
        }
        let events = sweep_events(traj, log, from.1, to.1);
        let mut acc = Vec::new();
        let mut cur = vec![(from.1, from.0)];
        collect(&idx, log, &events, 0, from.0, to, &mut cur, &mut acc);
        acc
    }

    #[allow(clippy::too_many_arguments)]
    fn collect(
        idx: &TrajectoryIndex,
        log: &EventLog,
        events: &[(f64, Ev)],
        k: usize,
        site: i64,
        to: (i64, f64),
        cur: &mut Vec<(f64, i64)>,
        acc: &mut Vec<Vec<(f64, i64)>>,
    ) {
        if k == events.len() {
            if site == to.0 {
                acc.push(cur.clone());
            }
            return;
        }
        let (u, ev) = events[k];
        match ev {
            Ev::Heal { site: z } | Ev::Block { site: z } if z == site => {}
            Ev::Jump { origin, target } if origin == site => {
                collect(idx, log, events, k + 1, site, to, cur, acc);
                if can_sit(idx, log, target, u) {
                    cur.push((u, target));
                    collect(idx, log, events, k + 1, target, to, cur, acc);
                    cur.pop();
                }
            }
            _ => collect(idx, log, events, k + 1, site, to, cur, acc),
        }
    }
}
