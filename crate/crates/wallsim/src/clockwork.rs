//! Keyed Poisson clocks.
//!
//! Every stream is addressed by `(master_seed, replica_id, StreamKey)` and is
//! generated from its start, so the events seen up to any horizon never depend
//! on how far the stream was read before.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    Site,
    Label,
}

/// Address of one Poisson clock. Sites drive the Harris construction,
/// labels drive clock coupling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub kind: StreamKind,
    pub index: i64,
}

impl StreamKey {
    pub fn site(index: i64) -> Self {
        Self { kind: StreamKind::Site, index }
    }

    pub fn label(index: i64) -> Self {
        Self { kind: StreamKind::Label, index }
    }

    fn stream_id(self) -> u64 {
        let tag = match self.kind {
            StreamKind::Site => 0,
            StreamKind::Label => 1,
        };
        ((self.index as u64) << 1) | tag
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replica_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replica_id: u64) -> Self {
        Self { master_seed, replica_id }
    }

    fn key_bytes(&self, domain: u64) -> [u8; 32] {
        let mut state = self.master_seed ^ domain.wrapping_mul(0xa076_1d64_78bd_642f);
        let mut out = [0u8; 32];
        for (i, chunk) in out.chunks_mut(8).enumerate() {
            state = state.wrapping_add(self.replica_id.wrapping_mul(0xe703_7ed1_a0b4_28db) ^ i as u64);
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        out
    }

    fn stream_rng(&self, key: StreamKey) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key_bytes(0));
        rng.set_stream(key.stream_id());
        rng
    }

    /// Randomness that is not a clock (initial conditions). Separate keyspace
    /// from every `StreamKey`.
    pub fn auxiliary_rng(&self, tag: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key_bytes(1));
        rng.set_stream(tag);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform on (0, 1] with 53 bits.
pub fn unit_uniform(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Exp(1) by inverse CDF.
pub fn unit_exponential(rng: &mut impl RngCore) -> f64 {
    -unit_uniform(rng).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    pub key: StreamKey,
    pub horizon: f64,
    pub times: Vec<f64>,
}

/// Where clocks come from: seeded streams, or a fixed script for hand-built
/// scenarios.
#[derive(Clone, Debug)]
pub enum Randomness {
    Seeded(SeedSpec),
    Scripted(Arc<BTreeMap<StreamKey, Vec<f64>>>),
}

impl Randomness {
    pub fn seeded(master_seed: u64, replica_id: u64) -> Self {
        Randomness::Seeded(SeedSpec::new(master_seed, replica_id))
    }

    /// Script entries are sorted per key; unlisted keys never ring.
    pub fn scripted<I>(events: I) -> Self
    where
        I: IntoIterator<Item = (StreamKey, f64)>,
    {
        let mut map: BTreeMap<StreamKey, Vec<f64>> = BTreeMap::new();
        for (key, t) in events {
            map.entry(key).or_default().push(t);
        }
        for times in map.values_mut() {
            times.sort_by(f64::total_cmp);
            times.dedup();
        }
        Randomness::Scripted(Arc::new(map))
    }

    pub fn clock(&self, key: StreamKey) -> Clock {
        let source = match self {
            Randomness::Seeded(seed) => Source::Seeded(Box::new(seed.stream_rng(key))),
            Randomness::Scripted(map) => Source::Scripted {
                times: map.get(&key).map(|v| Arc::from(v.as_slice())).unwrap_or_else(|| Arc::from(Vec::new())),
                next: 0,
            },
        };
        Clock { source, last: 0.0 }
    }

    pub fn events(&self, key: StreamKey, horizon: f64) -> EventStream {
        let mut clock = self.clock(key);
        let mut times = Vec::new();
        let mut t = 0.0;
        loop {
            t = clock.next_after(t);
            if t > horizon {
                break;
            }
            times.push(t);
        }
        EventStream { key, horizon, times }
    }

    pub fn seed(&self) -> Option<SeedSpec> {
        match self {
            Randomness::Seeded(s) => Some(*s),
            Randomness::Scripted(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
enum Source {
    Seeded(Box<ChaCha8Rng>),
    Scripted { times: Arc<[f64]>, next: usize },
}

/// Forward-only reader over one stream.
#[derive(Clone, Debug)]
pub struct Clock {
    source: Source,
    last: f64,
}

impl Clock {
    /// First event strictly after `t`; `f64::INFINITY` once a script runs out.
    pub fn next_after(&mut self, t: f64) -> f64 {
        while self.last <= t {
            self.last = match &mut self.source {
                Source::Seeded(rng) => self.last + unit_exponential(rng.as_mut()),
                Source::Scripted { times, next } => {
                    let v = times.get(*next).copied().unwrap_or(f64::INFINITY);
                    *next += 1;
                    v
                }
            };
        }
        self.last
    }
}

/// All events of `key` in `(0, horizon]`.
pub fn stream_events(seed: SeedSpec, key: StreamKey, horizon: f64) -> EventStream {
    Randomness::Seeded(seed).events(key, horizon.max(0.0))
}

/// Global time order over several streams. Equal times fall back to
/// `(kind, index)` with sites before labels.
pub fn merged_schedule(keys: &[StreamKey], seed: SeedSpec, horizon: f64) -> Vec<(f64, StreamKey)> {
    let mut out: Vec<(f64, StreamKey)> = keys
        .iter()
        .flat_map(|&k| stream_events(seed, k, horizon).times.into_iter().map(move |t| (t, k)))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_horizon_is_empty() {
        let s = stream_events(SeedSpec::new(1, 0), StreamKey::site(0), 0.0);
        assert!(s.times.is_empty());
    }

    #[test]
    fn poisson_moments_at_horizon_100() {
        let counts: Vec<f64> = (0..10_000u64)
            .map(|r| stream_events(SeedSpec::new(7, r), StreamKey::label(1), 100.0).times.len() as f64)
            .collect();
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((99.0..=101.0).contains(&mean), "mean {mean}");
        assert!((95.0..=105.0).contains(&var), "var {var}");
    }

    #[test]
    fn gaps_pass_ks_against_unit_exponential() {
        // a fixed number of gaps per stream; cutting streams at a horizon
        // would bias toward short gaps
        let mut gaps = Vec::new();
        for r in 0..5_000u64 {
            let mut clock = Randomness::seeded(11, r).clock(StreamKey::site(r as i64 - 50));
            let mut prev = 0.0;
            for _ in 0..20 {
                let t = clock.next_after(prev);
                gaps.push(t - prev);
                prev = t;
            }
        }
        gaps.sort_by(f64::total_cmp);
        let n = gaps.len() as f64;
        let d = gaps
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let f = 1.0 - (-g).exp();
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        // asymptotic Kolmogorov critical value at level 0.01
        let critical = (-(0.01f64 / 2.0).ln() / 2.0).sqrt() / n.sqrt();
        assert!(d < critical, "D = {d}, critical {critical}");
    }

    #[test]
    fn distinct_keys_are_uncorrelated() {
        let pairs = [
            (StreamKey::site(0), StreamKey::site(1)),
            (StreamKey::site(3), StreamKey::label(3)),
            (StreamKey::label(-2), StreamKey::label(2)),
        ];
        for (a, b) in pairs {
            let (xs, ys): (Vec<f64>, Vec<f64>) = (0..1000u64)
                .map(|r| {
                    let s = SeedSpec::new(5, r);
                    (
                        stream_events(s, a, 20.0).times.len() as f64,
                        stream_events(s, b, 20.0).times.len() as f64,
                    )
                })
                .unzip();
            let c = crate::harness::stats::pearson(&xs, &ys).unwrap();
            assert!(c.abs() <= 0.1, "{a:?} vs {b:?}: {c}");
        }
    }

    #[test]
    fn replicas_differ() {
        let a = stream_events(SeedSpec::new(5, 0), StreamKey::site(0), 10.0);
        let b = stream_events(SeedSpec::new(5, 1), StreamKey::site(0), 10.0);
        assert_ne!(a.times, b.times);
    }

    #[test]
    fn schedule_edge_cases() {
        let seed = SeedSpec::new(3, 4);
        assert!(merged_schedule(&[], seed, 50.0).is_empty());
        let k = StreamKey::label(9);
        let single: Vec<f64> = merged_schedule(&[k], seed, 50.0).into_iter().map(|e| e.0).collect();
        assert_eq!(single, stream_events(seed, k, 50.0).times);
    }

    #[test]
    fn schedule_matches_concatenate_and_sort() {
        let seed = SeedSpec::new(3, 4);
        let (a, b) = (StreamKey::site(-1), StreamKey::label(2));
        let merged = merged_schedule(&[a, b], seed, 50.0);
        let mut oracle: Vec<(f64, StreamKey)> = stream_events(seed, a, 50.0)
            .times
            .into_iter()
            .map(|t| (t, a))
            .chain(stream_events(seed, b, 50.0).times.into_iter().map(|t| (t, b)))
            .collect();
        oracle.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        assert_eq!(merged, oracle);
    }

    #[test]
    fn ties_break_by_kind_then_index() {
        let r = Randomness::scripted([
            (StreamKey::label(1), 1.0),
            (StreamKey::site(5), 1.0),
            (StreamKey::site(-2), 1.0),
        ]);
        let Randomness::Scripted(map) = &r else { unreachable!() };
        let mut all: Vec<(f64, StreamKey)> =
            map.iter().flat_map(|(k, ts)| ts.iter().map(move |&t| (t, *k))).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let keys: Vec<StreamKey> = all.into_iter().map(|e| e.1).collect();
        assert_eq!(keys, vec![StreamKey::site(-2), StreamKey::site(5), StreamKey::label(1)]);
    }

    #[test]
    fn scripted_clock_runs_out() {
        let r = Randomness::scripted([(StreamKey::label(1), 0.7)]);
        let mut c = r.clock(StreamKey::label(1));
        assert_eq!(c.next_after(0.0), 0.7);
        assert_eq!(c.next_after(0.7), f64::INFINITY);
        assert_eq!(r.clock(StreamKey::label(2)).next_after(0.0), f64::INFINITY);
    }

    proptest! {
        #[test]
        fn prefix_consistent(seed in any::<u64>(), replica in 0u64..1000, index in -1000i64..1000,
                             site in any::<bool>(), h in 0.0f64..30.0, extra in 0.0f64..30.0) {
            let key = if site { StreamKey::site(index) } else { StreamKey::label(index) };
            let s = SeedSpec::new(seed, replica);
            let short = stream_events(s, key, h);
            let long = stream_events(s, key, h + extra);
            prop_assert!(short.times.len() <= long.times.len());
            prop_assert_eq!(&short.times[..], &long.times[..short.times.len()]);
            prop_assert!(long.times.get(short.times.len()).is_none_or(|&t| t > h));
            prop_assert!(long.times.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(long.times.iter().all(|&t| t > 0.0 && t <= h + extra));
        }

        #[test]
        fn clock_reads_are_order_independent(seed in any::<u64>(), a in 0.0f64..20.0, b in 0.0f64..20.0) {
            let r = Randomness::seeded(seed, 0);
            let key = StreamKey::site(0);
            let mut c1 = r.clock(key);
            let mut c2 = r.clock(key);
            let direct = c1.next_after(b);
            c2.next_after(a.min(b));
            prop_assert_eq!(direct, c2.next_after(b));
        }
    }
}
