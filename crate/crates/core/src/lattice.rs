//! Site states, boundary policies and finite-window configurations.

use serde::{Deserialize, Serialize};

/// State of one lattice site. The derived order `Blocked < Empty < Occupied`
/// is the pointwise order used by all coupling and attractivity checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SiteState {
    Blocked,
    Empty,
    Occupied,
}

impl SiteState {
    pub fn as_i8(self) -> i8 {
        match self {
            SiteState::Blocked => -1,
            SiteState::Empty => 0,
            SiteState::Occupied => 1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            -1 => Some(SiteState::Blocked),
            0 => Some(SiteState::Empty),
            1 => Some(SiteState::Occupied),
            _ => None,
        }
    }
}

/// How the infinite tails outside the stored window behave.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundaryPolicy {
    /// Outside sites start empty. For the spontaneous-blocking dynamics they
    /// still flicker between empty and blocked autonomously; for the other
    /// dynamics they stay empty until the window reaches them.
    EmptyTail,
    /// Outside sites start blocked at time 0 and evolve autonomously until
    /// first contact, at which point their history is replayed exactly from
    /// their keyed streams.
    BlockedTail,
    /// Sites at or left of `clamp` are pinned occupied forever. A dominating
    /// approximation of the Heaviside start, used for the contact-process
    /// envelope diagnostic only.
    OccupiedLeftClamp { clamp: i64 },
}

#[derive(Debug, thiserror::Error)]
pub enum LatticeError {
    #[error("inconsistent-spec: {0}")]
    InconsistentSpec(String),
}

/// Snapshot of states over a finite window plus a tail policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    /// Inclusive window bounds; `states.len() == hi - lo + 1`.
    pub lo: i64,
    pub hi: i64,
    pub states: Vec<SiteState>,
    pub policy: BoundaryPolicy,
}

/// Canonical initial conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialSpec {
    /// One occupied site, empty elsewhere.
    SingleOne(i64),
    /// One occupied site, blocked elsewhere (the hostile environment).
    Hostile(i64),
    /// Occupied at and left of the front, empty to the right. `clamp_depth`
    /// sites are stored explicitly; deeper sites are pinned occupied.
    Heaviside { front: i64, clamp_depth: u32 },
    Explicit {
        lo: i64,
        states: Vec<SiteState>,
        policy: BoundaryPolicy,
        /// Optional claim that the rightmost occupied site is here.
        claimed_rightmost: Option<i64>,
    },
}

/// Build a configuration from a canonical spec.
pub fn make_initial(spec: &InitialSpec) -> Result<Configuration, LatticeError> {
    match spec {
        InitialSpec::SingleOne(x) => Ok(Configuration {
            lo: *x,
            hi: *x,
            states: vec![SiteState::Occupied],
            policy: BoundaryPolicy::EmptyTail,
        }),
        InitialSpec::Hostile(x) => Ok(Configuration {
            lo: *x,
            hi: *x,
            states: vec![SiteState::Occupied],
            policy: BoundaryPolicy::BlockedTail,
        }),
        InitialSpec::Heaviside { front, clamp_depth } => {
            let depth = (*clamp_depth).max(1) as i64;
            let clamp = front - depth;
            let lo = clamp + 1;
            let mut states = vec![SiteState::Occupied; depth as usize];
            states.push(SiteState::Empty); // site front + 1
            Ok(Configuration { lo, hi: *front + 1, states, policy: BoundaryPolicy::OccupiedLeftClamp { clamp } })
        }
        InitialSpec::Explicit { lo, states, policy, claimed_rightmost } => {
            if states.is_empty() {
                return Err(LatticeError::InconsistentSpec("empty explicit window".into()));
            }
            let cfg = Configuration {
                lo: *lo,
                hi: *lo + states.len() as i64 - 1,
                states: states.clone(),
                policy: *policy,
            };
            if let Some(r) = claimed_rightmost {
                if cfg.rightmost() != Some(*r) {
                    return Err(LatticeError::InconsistentSpec(format!(
                        "claimed rightmost {} but actual {:?}",
                        r,
                        cfg.rightmost()
                    )));
                }
            }
            Ok(cfg)
        }
    }
}

impl Configuration {
    pub fn state(&self, site: i64) -> SiteState {
        if site >= self.lo && site <= self.hi {
            self.states[(site - self.lo) as usize]
        } else {
            match self.policy {
                BoundaryPolicy::EmptyTail => SiteState::Empty,
                BoundaryPolicy::BlockedTail => SiteState::Blocked,
                BoundaryPolicy::OccupiedLeftClamp { clamp } => {
                    if site <= clamp {
                        SiteState::Occupied
                    } else {
                        SiteState::Empty
                    }
                }
            }
        }
    }

    /// Greatest occupied site. With an occupied left clamp and no occupied
    /// site in the window this is the clamp boundary; otherwise `None` means
    /// no occupied site exists.
    pub fn rightmost(&self) -> Option<i64> {
        for (i, s) in self.states.iter().enumerate().rev() {
            if *s == SiteState::Occupied {
                return Some(self.lo + i as i64);
            }
        }
        match self.policy {
            BoundaryPolicy::OccupiedLeftClamp { clamp } => Some(clamp),
            _ => None,
        }
    }

    /// Least occupied site. Left-infinite occupied tails have no leftmost;
    /// this returns `None` both then and when nothing is occupied.
    pub fn leftmost_one(&self) -> Option<i64> {
        if let BoundaryPolicy::OccupiedLeftClamp { .. } = self.policy {
            return None;
        }
        self.states
            .iter()
            .position(|s| *s == SiteState::Occupied)
            .map(|i| self.lo + i as i64)
    }

    pub fn occupied_sites(&self) -> Vec<i64> {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == SiteState::Occupied)
            .map(|(i, _)| self.lo + i as i64)
            .collect()
    }

    /// Pointwise order against another configuration over all of Z.
    pub fn le_pointwise(&self, other: &Configuration) -> bool {
        let lo = self.lo.min(other.lo) - 1;
        let hi = self.hi.max(other.hi) + 1;
        (lo..=hi).all(|x| self.state(x) <= other.state(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_one_shape() {
        let c = make_initial(&InitialSpec::SingleOne(0)).unwrap();
        assert_eq!(c.rightmost(), Some(0));
        assert_eq!(c.state(0), SiteState::Occupied);
        assert_eq!(c.state(1), SiteState::Empty);
        assert_eq!(c.state(-5), SiteState::Empty);
    }

    #[test]
    fn hostile_shape() {
        let c = make_initial(&InitialSpec::Hostile(3)).unwrap();
        assert_eq!(c.state(3), SiteState::Occupied);
        assert_eq!(c.state(2), SiteState::Blocked);
        assert_eq!(c.state(100), SiteState::Blocked);
        assert_eq!(c.rightmost(), Some(3));
        assert_eq!(c.leftmost_one(), Some(3));
    }

    #[test]
    fn heaviside_shape() {
        let c = make_initial(&InitialSpec::Heaviside { front: 0, clamp_depth: 8 }).unwrap();
        for y in -8..=0 {
            assert_eq!(c.state(y), SiteState::Occupied, "site {y}");
        }
        assert_eq!(c.state(-9), SiteState::Occupied); // clamped tail
        assert_eq!(c.state(1), SiteState::Empty);
        assert_eq!(c.rightmost(), Some(0));
        assert_eq!(c.leftmost_one(), None);
    }

    #[test]
    fn rightmost_and_leftmost_cases() {
        let c = make_initial(&InitialSpec::Explicit {
            lo: -3,
            states: vec![
                SiteState::Occupied, // -3
                SiteState::Empty,
                SiteState::Empty,
                SiteState::Empty, // 0
                SiteState::Blocked, // 1
                SiteState::Empty,
                SiteState::Empty,
                SiteState::Empty,
                SiteState::Occupied, // 5
            ],
            policy: BoundaryPolicy::EmptyTail,
            claimed_rightmost: Some(5),
        })
        .unwrap();
        assert_eq!(c.rightmost(), Some(5));
        assert_eq!(c.leftmost_one(), Some(-3));

        let empty = make_initial(&InitialSpec::Explicit {
            lo: 0,
            states: vec![SiteState::Empty; 4],
            policy: BoundaryPolicy::EmptyTail,
            claimed_rightmost: None,
        })
        .unwrap();
        assert_eq!(empty.rightmost(), None);
        assert_eq!(empty.leftmost_one(), None);
    }

    #[test]
    fn explicit_claim_checked() {
        let bad = make_initial(&InitialSpec::Explicit {
            lo: 0,
            states: vec![SiteState::Occupied, SiteState::Occupied],
            policy: BoundaryPolicy::EmptyTail,
            claimed_rightmost: Some(0),
        });
        assert!(bad.is_err());
    }

    #[test]
    fn pointwise_order() {
        let hostile = make_initial(&InitialSpec::Hostile(0)).unwrap();
        let single = make_initial(&InitialSpec::SingleOne(0)).unwrap();
        assert!(hostile.le_pointwise(&single));
        assert!(!single.le_pointwise(&hostile));
    }
}
