//! Harris graphical construction as deterministic, seed-keyed Poisson streams.
//!
//! Three stream kinds drive all dynamics: fertile transmission arrows per
//! directed edge (rate `lambda * p`), blocking transmission arrows per
//! directed edge (rate `lambda * (1 - p)`), and healing marks per site
//! (rate 1). Streams live on `[0, horizon]` and are materialized on demand;
//! each one is a pure function of `(master_seed, key)`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::rng::{mix_words, SplitMix64};

/// Which Poisson family a stream belongs to.
///
/// The declaration order is also the tie-break order applied when two
/// distinct streams produce an identical floating-point arrival time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StreamKind {
    FertileArrow,
    BlockingArrow,
    Healing,
}

impl StreamKind {
    pub fn label(self) -> &'static str {
        match self {
            StreamKind::FertileArrow => "fertile",
            StreamKind::BlockingArrow => "blocking",
            StreamKind::Healing => "healing",
        }
    }
}

/// Identity of one arrival stream.
///
/// Arrow kinds connect nearest neighbours (`|origin - target| = 1`);
/// healing marks have `origin == target`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectKey {
    pub kind: StreamKind,
    pub origin: i64,
    pub target: i64,
}

impl ObjectKey {
    pub fn fertile(origin: i64, target: i64) -> Self {
        Self { kind: StreamKind::FertileArrow, origin, target }
    }

    pub fn blocking(origin: i64, target: i64) -> Self {
        Self { kind: StreamKind::BlockingArrow, origin, target }
    }

    pub fn healing(site: i64) -> Self {
        Self { kind: StreamKind::Healing, origin: site, target: site }
    }

    pub fn validate(&self) -> Result<(), EventError> {
        let ok = match self.kind {
            StreamKind::Healing => self.origin == self.target,
            _ => (self.origin - self.target).abs() == 1,
        };
        if ok {
            Ok(())
        } else {
            Err(EventError::InvalidKey(*self))
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EventError {
    #[error("invalid-parameter: {0}")]
    InvalidParameter(String),
    #[error("out-of-horizon: requested {requested} beyond horizon {horizon}")]
    OutOfHorizon { requested: f64, horizon: f64 },
    #[error("invalid stream key {0:?}")]
    InvalidKey(ObjectKey),
}

enum StreamSource {
    /// Streams generated from `(master_seed, key)`.
    Keyed { master_seed: u64 },
    /// Streams given explicitly; any key not listed is empty.
    Explicit,
}

/// The realized graphical construction for one run.
pub struct EventLog {
    source: StreamSource,
    lambda: f64,
    p: f64,
    horizon: f64,
    realized: RwLock<HashMap<ObjectKey, Arc<[f64]>>>,
}


impl EventLog {
    /// Build a lazily generated log. Streams are produced on first query.
    pub fn build(master_seed: u64, lambda: f64, p: f64, horizon: f64) -> Result<Self, EventError> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(EventError::InvalidParameter(format!("lambda = {lambda}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(EventError::InvalidParameter(format!("p = {p}")));
        }
        if !horizon.is_finite() || horizon < 0.0 {
            return Err(EventError::InvalidParameter(format!("horizon = {horizon}")));
        }
        Ok(Self {
            source: StreamSource::Keyed { master_seed },
            lambda,
            p,
            horizon,
            realized: RwLock::new(HashMap::new()),
        })
    }

    /// Build a log from explicit arrival lists. Unlisted streams are empty.
    /// Used for hand-constructed scenarios and replayed dumps.
    pub fn explicit(
        lambda: f64,
        p: f64,
        horizon: f64,
        streams: Vec<(ObjectKey, Vec<f64>)>,
    ) -> Result<Self, EventError> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(EventError::InvalidParameter(format!("lambda = {lambda}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(EventError::InvalidParameter(format!("p = {p}")));
        }
        if !horizon.is_finite() || horizon < 0.0 {
            return Err(EventError::InvalidParameter(format!("horizon = {horizon}")));
        }
        let mut map = HashMap::new();
        for (key, times) in streams {
            key.validate()?;
            for w in times.windows(2) {
                if w[1] <= w[0] {
                    return Err(EventError::InvalidParameter(format!(
                        "stream {key:?} not strictly increasing at {}",
                        w[1]
                    )));
                }
            }
            if let Some(&t) = times.last() {
                if t > horizon || times[0] < 0.0 {
                    return Err(EventError::InvalidParameter(format!(
                        "stream {key:?} leaves [0, horizon]"
                    )));
                }
            }
            map.insert(key, Arc::from(times.into_boxed_slice()));
        }
        Ok(Self {
            source: StreamSource::Explicit,
            lambda,
            p,
            horizon,
            realized: RwLock::new(map),
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Poisson intensity of a stream kind under this log's parameters.
    pub fn rate(&self, kind: StreamKind) -> f64 {
        match kind {
            StreamKind::FertileArrow => self.lambda * self.p,
            StreamKind::BlockingArrow => self.lambda * (1.0 - self.p),
            StreamKind::Healing => 1.0,
        }
    }

    fn generate(&self, key: ObjectKey) -> Arc<[f64]> {
        match self.source {
            StreamSource::Explicit => Arc::from(Vec::new().into_boxed_slice()),
            StreamSource::Keyed { master_seed } => {
                let rate = self.rate(key.kind);
                if rate == 0.0 {
                    return Arc::from(Vec::new().into_boxed_slice());
                }
                let seed = mix_words(
                    master_seed,
                    &[key.kind as u64 + 1, key.origin as u64, key.target as u64],
                );
                let mut rng = SplitMix64::new(seed);
                let mut times = Vec::new();
                let mut t = rng.next_exp(rate);
                while t <= self.horizon {
                    times.push(t);
                    t += rng.next_exp(rate);
                }
                Arc::from(times.into_boxed_slice())
            }
        }
    }

    /// Full arrival list of one stream over `[0, horizon]`, materializing it
    /// if needed. Concurrent readers are fine; generation happens at most
    /// once per key.
    pub fn stream(&self, key: ObjectKey) -> Arc<[f64]> {
        if let Some(s) = self.realized.read().unwrap().get(&key) {
            return Arc::clone(s);
        }
        let generated = self.generate(key);
        let mut map = self.realized.write().unwrap();
        Arc::clone(map.entry(key).or_insert(generated))
    }

    /// Arrival times in the closed interval `[a, b]`.
    pub fn arrivals(&self, key: ObjectKey, a: f64, b: f64) -> Result<Vec<f64>, EventError> {
        key.validate()?;
        if b > self.horizon {
            return Err(EventError::OutOfHorizon { requested: b, horizon: self.horizon });
        }
        if !(0.0 <= a && a <= b) {
            return Err(EventError::InvalidParameter(format!("interval [{a}, {b}]")));
        }
        let s = self.stream(key);
        let lo = s.partition_point(|&t| t < a);
        let hi = s.partition_point(|&t| t <= b);
        Ok(s[lo..hi].to_vec())
    }

    /// First arrival strictly after `t`, if any.
    pub fn next_after(&self, key: ObjectKey, t: f64) -> Option<f64> {
        let s = self.stream(key);
        let i = s.partition_point(|&u| u <= t);
        s.get(i).copied()
    }

    /// Whether the stream has an arrival in the closed interval `[a, b]`.
    pub fn has_arrival(&self, key: ObjectKey, a: f64, b: f64) -> bool {
        let s = self.stream(key);
        let i = s.partition_point(|&t| t < a);
        i < s.len() && s[i] <= b
    }

    /// Materialize every stream touching `site` over the full horizon:
    /// its healing marks plus the four incoming/outgoing arrow streams of
    /// each kind. Idempotent; previously realized streams are untouched.
    pub fn extend_window(&self, site: i64) {
        for key in Self::keys_touching(site) {
            let _ = self.stream(key);
        }
    }

    fn keys_touching(site: i64) -> impl Iterator<Item = ObjectKey> {
        let mut v = Vec::with_capacity(9);
        v.push(ObjectKey::healing(site));
        for d in [-1i64, 1] {
            v.push(ObjectKey::fertile(site, site + d));
            v.push(ObjectKey::fertile(site + d, site));
            v.push(ObjectKey::blocking(site, site + d));
            v.push(ObjectKey::blocking(site + d, site));
        }
        v.into_iter()
    }

    /// Restriction of the construction to `[s, horizon]`.
    pub fn restrict(&self, s: f64) -> Result<RestrictedView<'_>, EventError> {
        if s > self.horizon {
            return Err(EventError::OutOfHorizon { requested: s, horizon: self.horizon });
        }
        if !(s >= 0.0) {
            return Err(EventError::InvalidParameter(format!("restriction start {s}")));
        }
        Ok(RestrictedView { base: self, start: s })
    }

    /// Snapshot of every realized stream, sorted by key, for debug dumps.
    pub fn dump_realized(&self) -> Vec<RealizedStream> {
        let map = self.realized.read().unwrap();
        let mut out: Vec<RealizedStream> = map
            .iter()
            .map(|(k, v)| RealizedStream {
                kind: k.kind,
                origin: k.origin,
                target: k.target,
                times: v.to_vec(),
            })
            .collect();
        out.sort_by_key(|r| (r.kind, r.origin, r.target));
        out
    }
}

/// One record of the debug dump schema.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RealizedStream {
    pub kind: StreamKind,
    pub origin: i64,
    pub target: i64,
    pub times: Vec<f64>,
}

/// A view of an [`EventLog`] with everything before `start` hidden.
#[derive(Clone, Copy)]
pub struct RestrictedView<'a> {
    base: &'a EventLog,
    start: f64,
}

impl<'a> RestrictedView<'a> {
    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn arrivals(&self, key: ObjectKey, a: f64, b: f64) -> Result<Vec<f64>, EventError> {
        let a = a.max(self.start);
        if a > b {
            return Ok(Vec::new());
        }
        self.base.arrivals(key, a, b)
    }
}

/// Read-only access to arrivals; implemented by logs and restricted views.
pub trait ArrivalSource {
    fn log(&self) -> &EventLog;
    /// Times before this instant are invisible.
    fn start(&self) -> f64;

    fn horizon(&self) -> f64 {
        self.log().horizon()
    }
}

impl ArrivalSource for EventLog {
    fn log(&self) -> &EventLog {
        self
    }
    fn start(&self) -> f64 {
        0.0
    }
}

impl<'a> ArrivalSource for RestrictedView<'a> {
    fn log(&self) -> &EventLog {
        self.base
    }
    fn start(&self) -> f64 {
        self.start
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_horizon_streams_empty() {
        let log = EventLog::build(1, 2.0, 0.5, 0.0).unwrap();
        for key in [ObjectKey::fertile(0, 1), ObjectKey::blocking(1, 0), ObjectKey::healing(3)] {
            assert!(log.arrivals(key, 0.0, 0.0).unwrap().is_empty());
        }
    }

    #[test]
    fn zero_rate_streams_empty() {
        let log = EventLog::build(1, 2.0, 1.0, 10.0).unwrap();
        assert!(log.stream(ObjectKey::blocking(0, 1)).is_empty());
        assert!(!log.stream(ObjectKey::fertile(0, 1)).is_empty());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(EventLog::build(0, -1.0, 0.5, 1.0).is_err());
        assert!(EventLog::build(0, 1.0, 1.5, 1.0).is_err());
        assert!(EventLog::build(0, 1.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn arrivals_deterministic_and_increasing() {
        let log = EventLog::build(99, 3.0, 0.4, 25.0).unwrap();
        let key = ObjectKey::fertile(-2, -1);
        let a = log.arrivals(key, 0.0, 25.0).unwrap();
        let b = log.arrivals(key, 0.0, 25.0).unwrap();
        assert_eq!(a, b);
        for w in a.windows(2) {
            assert!(w[1] > w[0]);
        }
        let fresh = EventLog::build(99, 3.0, 0.4, 25.0).unwrap();
        assert_eq!(fresh.arrivals(key, 0.0, 25.0).unwrap(), a);
    }

    #[test]
    fn degenerate_interval_without_arrival_is_empty() {
        let log = EventLog::build(5, 2.0, 0.5, 10.0).unwrap();
        let key = ObjectKey::healing(0);
        assert!(log.arrivals(key, 0.123456, 0.123456).unwrap().is_empty());
    }

    #[test]
    fn partition_additivity() {
        let log = EventLog::build(17, 4.0, 0.7, 20.0).unwrap();
        let key = ObjectKey::fertile(3, 4);
        let whole = log.arrivals(key, 0.0, 20.0).unwrap();
        let s = 7.5;
        let mut parts = log.arrivals(key, 0.0, s).unwrap();
        parts.extend(log.arrivals(key, s, 20.0).unwrap().into_iter().filter(|&t| t > s));
        assert_eq!(parts, whole);
    }

    #[test]
    fn out_of_horizon_rejected() {
        let log = EventLog::build(5, 2.0, 0.5, 10.0).unwrap();
        assert!(matches!(
            log.arrivals(ObjectKey::healing(0), 0.0, 10.5),
            Err(EventError::OutOfHorizon { .. })
        ));
        assert!(log.restrict(10.5).is_err());
    }

    #[test]
    fn restriction_identities() {
        let log = EventLog::build(23, 3.0, 0.6, 15.0).unwrap();
        let key = ObjectKey::blocking(0, 1);
        let id = log.restrict(0.0).unwrap();
        assert_eq!(
            id.arrivals(key, 0.0, 15.0).unwrap(),
            log.arrivals(key, 0.0, 15.0).unwrap()
        );
        let full = log.restrict(15.0).unwrap();
        assert!(full.arrivals(key, 0.0, 15.0).unwrap().len() <= 1); // at most an arrival exactly at the horizon
        let s = 6.0;
        let view = log.restrict(s).unwrap();
        assert_eq!(
            view.arrivals(key, 0.0, 15.0).unwrap(),
            log.arrivals(key, s, 15.0).unwrap()
        );
    }

    #[test]
    fn extend_window_idempotent_and_order_free() {
        let a = EventLog::build(31, 2.5, 0.8, 12.0).unwrap();
        a.extend_window(5);
        a.extend_window(5);
        a.extend_window(-3);
        let b = EventLog::build(31, 2.5, 0.8, 12.0).unwrap();
        b.extend_window(-3);
        b.extend_window(5);
        for key in [
            ObjectKey::healing(5),
            ObjectKey::healing(-3),
            ObjectKey::fertile(5, 6),
            ObjectKey::blocking(-4, -3),
        ] {
            assert_eq!(a.stream(key).to_vec(), b.stream(key).to_vec());
        }
    }

    #[test]
    fn explicit_log_round_trip() {
        let key = ObjectKey::fertile(0, 1);
        let log = EventLog::explicit(2.0, 0.5, 1.0, vec![(key, vec![0.25, 0.5, 0.75])]).unwrap();
        assert_eq!(log.arrivals(key, 0.3, 0.75).unwrap(), vec![0.5, 0.75]);
        assert!(log.arrivals(ObjectKey::healing(0), 0.0, 1.0).unwrap().is_empty());
        assert!(EventLog::explicit(2.0, 0.5, 1.0, vec![(key, vec![0.5, 0.5])]).is_err());
        assert!(EventLog::explicit(2.0, 0.5, 1.0, vec![(key, vec![0.5, 1.5])]).is_err());
    }

    #[test]
    fn fertile_rate_matches_lambda_p() {
        // Sample mean over many keyed streams vs the Poisson mean/variance identity.
        let log = EventLog::build(7, 4.0, 0.9, 100.0).unwrap();
        let n = 10_000;
        let mut total = 0usize;
        for i in 0..n {
            let site = i as i64 * 2;
            total += log.stream(ObjectKey::fertile(site, site + 1)).len();
        }
        let mean = total as f64 / n as f64;
        let expected = 4.0 * 0.9 * 100.0;
        let se = (expected / n as f64).sqrt();
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean {mean} vs {expected} (3se = {})",
            3.0 * se
        );
    }
}
