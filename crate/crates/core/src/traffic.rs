//! Synthetic per-slice packet traces, trace CSV I/O, 2-minute chunking and
//! bucketing of arrivals into 250 ms KPI periods.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::slice::Slice;

pub const DEFAULT_PERIOD_MS: u64 = 250;
pub const DEFAULT_CHUNK_S: f64 = 120.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Downlink,
    Uplink,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t_ms: u64,
    pub bytes: u32,
    pub direction: Direction,
}

/// A packet trace together with the span it covers. Events are sorted by
/// `t_ms` and every event lies in `[0, duration_ms)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub duration_ms: u64,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn total_bytes(&self) -> u64 {
        self.events.iter().map(|e| u64::from(e.bytes)).sum()
    }
}

/// Traffic shape of one application class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrafficModel {
    /// Downlink streaming: constant-rate bursts of `on_s` seconds separated
    /// by exponentially distributed silences. One uplink ack of `ack_bytes`
    /// is sent every `ack_every` downlink packets (0 disables acks).
    OnOff {
        rate_bps: f64,
        on_s: f64,
        off_mean_s: f64,
        packet_bytes: u32,
        ack_every: u32,
        ack_bytes: u32,
    },
    /// Fixed-rate packets with uniform integer jitter. Uplink packets, when
    /// enabled, are offset by half a packet interval.
    Periodic {
        packets_per_s: f64,
        packet_bytes: u32,
        jitter_ms: u64,
        bidirectional: bool,
    },
    /// Poisson arrivals of bursts. Each burst carries a uniform number of
    /// packets with uniform sizes, spaced `spacing_ms` apart; each packet is
    /// uplink with probability `uplink_fraction`.
    PoissonBurst {
        mean_interburst_s: f64,
        burst_min: u32,
        burst_max: u32,
        bytes_min: u32,
        bytes_max: u32,
        spacing_ms: u64,
        uplink_fraction: f64,
    },
    /// No application traffic.
    Idle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceProfile {
    pub slice: Slice,
    pub model: TrafficModel,
}

impl SliceProfile {
    pub fn default_for(slice: Slice) -> Self {
        let model = match slice {
            Slice::Embb => TrafficModel::OnOff {
                rate_bps: 8.0e6,
                on_s: 2.0,
                off_mean_s: 1.0,
                packet_bytes: 1400,
                ack_every: 10,
                ack_bytes: 60,
            },
            Slice::Urllc => TrafficModel::Periodic {
                packets_per_s: 50.0,
                packet_bytes: 200,
                jitter_ms: 2,
                bidirectional: true,
            },
            Slice::Mmtc => TrafficModel::PoissonBurst {
                mean_interburst_s: 10.0,
                burst_min: 5,
                burst_max: 20,
                bytes_min: 100,
                bytes_max: 400,
                spacing_ms: 10,
                uplink_fraction: 0.5,
            },
        };
        SliceProfile { slice, model }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Parameter(format!("{} profile: {what}", self.slice)));
        match self.model {
            TrafficModel::OnOff {
                rate_bps,
                on_s,
                off_mean_s,
                packet_bytes,
                ..
            } => {
                if !(rate_bps >= 0.0) || !rate_bps.is_finite() {
                    return bad("rate_bps must be a finite value >= 0");
                }
                if !(on_s > 0.0) || !(off_mean_s > 0.0) {
                    return bad("on_s and off_mean_s must be > 0");
                }
                if packet_bytes == 0 {
                    return bad("packet_bytes must be >= 1");
                }
            }
            TrafficModel::Periodic {
                packets_per_s,
                packet_bytes,
                ..
            } => {
                if !(packets_per_s >= 0.0) || !packets_per_s.is_finite() {
                    return bad("packets_per_s must be a finite value >= 0");
                }
                if packet_bytes == 0 {
                    return bad("packet_bytes must be >= 1");
                }
            }
            TrafficModel::PoissonBurst {
                mean_interburst_s,
                burst_min,
                burst_max,
                bytes_min,
                bytes_max,
                uplink_fraction,
                ..
            } => {
                if !(mean_interburst_s > 0.0) {
                    return bad("mean_interburst_s must be > 0");
                }
                if burst_min == 0 || burst_min > burst_max {
                    return bad("need 1 <= burst_min <= burst_max");
                }
                if bytes_min == 0 || bytes_min > bytes_max {
                    return bad("need 1 <= bytes_min <= bytes_max");
                }
                if !(0.0..=1.0).contains(&uplink_fraction) {
                    return bad("uplink_fraction must lie in [0, 1]");
                }
            }
            TrafficModel::Idle => {}
        }
        Ok(())
    }
}

/// Generates a packet trace covering `[0, duration_s * 1000)` ms. Output is a
/// pure function of `(profile, duration_s, seed)`.
pub fn generate_trace(profile: &SliceProfile, duration_s: f64, seed: u64) -> Result<Trace> {
    if !(duration_s >= 0.0) || !duration_s.is_finite() {
        return Err(Error::Parameter(format!(
            "duration_s must be a finite value >= 0, got {duration_s}"
        )));
    }
    profile.validate()?;
    let duration_ms = (duration_s * 1000.0).round() as u64;
    let mut rng = seed::rng(seed);
    let mut events = Vec::new();
    if duration_ms == 0 {
        return Ok(Trace {
            duration_ms,
            events,
        });
    }
    let end = duration_ms as f64;

    match profile.model {
        TrafficModel::OnOff {
            rate_bps,
            on_s,
            off_mean_s,
            packet_bytes,
            ack_every,
            ack_bytes,
        } => {
            if rate_bps > 0.0 {
                let interval_ms = f64::from(packet_bytes) * 8.0 / rate_bps * 1000.0;
                let off = Exp::new(1.0 / (off_mean_s * 1000.0))
                    .map_err(|e| Error::Parameter(e.to_string()))?;
                let mut t = if rng.random_bool(0.5) {
                    off.sample(&mut rng)
                } else {
                    0.0
                };
                let mut sent = 0u64;
                while t < end {
                    let on_end = (t + on_s * 1000.0).min(end);
                    let mut k = 0u64;
                    loop {
                        let at = t + k as f64 * interval_ms;
                        if at >= on_end {
                            break;
                        }
                        let t_ms = at.floor() as u64;
                        events.push(TraceEvent {
                            t_ms,
                            bytes: packet_bytes,
                            direction: Direction::Downlink,
                        });
                        sent += 1;
                        if ack_every > 0 && ack_bytes > 0 && sent.is_multiple_of(u64::from(ack_every)) {
                            events.push(TraceEvent {
                                t_ms,
                                bytes: ack_bytes,
                                direction: Direction::Uplink,
                            });
                        }
                        k += 1;
                    }
                    t = on_end + off.sample(&mut rng);
                }
            }
        }
        TrafficModel::Periodic {
            packets_per_s,
            packet_bytes,
            jitter_ms,
            bidirectional,
        } => {
            if packets_per_s > 0.0 {
                let interval_ms = 1000.0 / packets_per_s;
                let jitter = jitter_ms as i64;
                let mut push = |nominal: f64, direction: Direction, rng: &mut seed::Rng| {
                    let j = if jitter > 0 {
                        rng.random_range(-jitter..=jitter)
                    } else {
                        0
                    };
                    let t = (nominal.floor() as i64 + j).clamp(0, duration_ms as i64 - 1);
                    events.push(TraceEvent {
                        t_ms: t as u64,
                        bytes: packet_bytes,
                        direction,
                    });
                };
                let mut k = 0u64;
                loop {
                    let nominal = k as f64 * interval_ms;
                    if nominal >= end {
                        break;
                    }
                    push(nominal, Direction::Downlink, &mut rng);
                    if bidirectional {
                        let up = nominal + interval_ms / 2.0;
                        if up < end {
                            push(up, Direction::Uplink, &mut rng);
                        }
                    }
                    k += 1;
                }
            }
        }
        TrafficModel::PoissonBurst {
            mean_interburst_s,
            burst_min,
            burst_max,
            bytes_min,
            bytes_max,
            spacing_ms,
            uplink_fraction,
        } => {
            let gap = Exp::new(1.0 / (mean_interburst_s * 1000.0))
                .map_err(|e| Error::Parameter(e.to_string()))?;
            let mut t = gap.sample(&mut rng);
            while t < end {
                let n = rng.random_range(burst_min..=burst_max);
                let start = t.floor() as u64;
                for i in 0..u64::from(n) {
                    let t_ms = start + i * spacing_ms;
                    let bytes = rng.random_range(bytes_min..=bytes_max);
                    let direction = if rng.random_bool(uplink_fraction) {
                        Direction::Uplink
                    } else {
                        Direction::Downlink
                    };
                    if t_ms < duration_ms {
                        events.push(TraceEvent {
                            t_ms,
                            bytes,
                            direction,
                        });
                    }
                }
                t += gap.sample(&mut rng);
            }
        }
        TrafficModel::Idle => {}
    }

    events.sort_by_key(|e| e.t_ms);
    Ok(Trace {
        duration_ms,
        events,
    })
}

/// Splits a trace into consecutive chunks of `chunk_s` seconds, each rebased
/// to t = 0. A trailing remainder shorter than `chunk_s` is dropped.
pub fn chunk_trace(trace: &Trace, chunk_s: f64) -> Result<Vec<Trace>> {
    if !(chunk_s > 0.0) || !chunk_s.is_finite() {
        return Err(Error::Parameter(format!("chunk_s must be > 0, got {chunk_s}")));
    }
    let chunk_ms = (chunk_s * 1000.0).round() as u64;
    if chunk_ms == 0 {
        return Err(Error::Parameter("chunk_s rounds to 0 ms".into()));
    }
    let n_chunks = trace.duration_ms / chunk_ms;
    let mut chunks: Vec<Trace> = (0..n_chunks)
        .map(|_| Trace {
            duration_ms: chunk_ms,
            events: Vec::new(),
        })
        .collect();
    for e in &trace.events {
        let idx = e.t_ms / chunk_ms;
        if let Some(chunk) = chunks.get_mut(idx as usize) {
            chunk.events.push(TraceEvent {
                t_ms: e.t_ms - idx * chunk_ms,
                ..*e
            });
        }
    }
    Ok(chunks)
}

/// Traffic offered by one source in one KPI period.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodArrivals {
    pub period_idx: u64,
    pub dl_bytes: u64,
    pub ul_bytes: u64,
    pub dl_pkts: u64,
    pub ul_pkts: u64,
}

impl PeriodArrivals {
    pub fn idle(period_idx: u64) -> Self {
        PeriodArrivals {
            period_idx,
            ..Default::default()
        }
    }
}

/// Buckets events into half-open periods `[k * period_ms, (k+1) * period_ms)`.
/// One entry per period up to the one holding the last event.
pub fn arrivals_by_period(events: &[TraceEvent], period_ms: u64) -> Vec<PeriodArrivals> {
    match events.last() {
        None => Vec::new(),
        Some(last) => bucket(events, period_ms, (last.t_ms / period_ms + 1) as usize),
    }
}

/// Like [`arrivals_by_period`] but always covers the whole trace span,
/// padding with idle periods.
pub fn arrivals_for_trace(trace: &Trace, period_ms: u64) -> Vec<PeriodArrivals> {
    let n = trace.duration_ms.div_ceil(period_ms) as usize;
    let last_needed = trace
        .events
        .last()
        .map_or(0, |e| (e.t_ms / period_ms + 1) as usize);
    bucket(&trace.events, period_ms, n.max(last_needed))
}

fn bucket(events: &[TraceEvent], period_ms: u64, n_periods: usize) -> Vec<PeriodArrivals> {
    assert!(period_ms > 0, "period_ms must be positive");
    let mut out: Vec<PeriodArrivals> = (0..n_periods as u64).map(PeriodArrivals::idle).collect();
    for e in events {
        let p = &mut out[(e.t_ms / period_ms) as usize];
        match e.direction {
            Direction::Downlink => {
                p.dl_bytes += u64::from(e.bytes);
                p.dl_pkts += 1;
            }
            Direction::Uplink => {
                p.ul_bytes += u64::from(e.bytes);
                p.ul_pkts += 1;
            }
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    t_ms: u64,
    bytes: u32,
    direction: String,
}

/// Writes a trace as CSV with header `t_ms,bytes,direction`.
pub fn write_trace_csv<W: Write>(trace: &Trace, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in &trace.events {
        w.serialize(CsvRow {
            t_ms: e.t_ms,
            bytes: e.bytes,
            direction: match e.direction {
                Direction::Downlink => "downlink".into(),
                Direction::Uplink => "uplink".into(),
            },
        })?;
    }
    if trace.events.is_empty() {
        w.write_record(["t_ms", "bytes", "direction"])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `t_ms,bytes,direction` CSV. Rows are sorted by time on load. When
/// `duration_ms` is `None` the span ends one millisecond after the last event.
pub fn read_trace_csv<R: Read>(reader: R, duration_ms: Option<u64>) -> Result<Trace> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t_ms", "bytes", "direction"] {
        return Err(Error::Parameter(format!(
            "trace CSV header must be `t_ms,bytes,direction`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut events = Vec::new();
    for row in r.deserialize::<CsvRow>() {
        let row = row?;
        if row.bytes == 0 {
            return Err(Error::Parameter(format!("zero-byte event at t_ms={}", row.t_ms)));
        }
        let direction = match row.direction.to_ascii_lowercase().as_str() {
            "downlink" | "dl" => Direction::Downlink,
            "uplink" | "ul" => Direction::Uplink,
            other => return Err(Error::Parameter(format!("unknown direction `{other}`"))),
        };
        events.push(TraceEvent {
            t_ms: row.t_ms,
            bytes: row.bytes,
            direction,
        });
    }
    events.sort_by_key(|e| e.t_ms);
    let natural = events.last().map_or(0, |e| e.t_ms + 1);
    let duration_ms = match duration_ms {
        Some(d) if d < natural => {
            return Err(Error::Parameter(format!(
                "duration {d} ms is shorter than the last event at {} ms",
                natural - 1
            )))
        }
        Some(d) => d,
        None => natural,
    };
    Ok(Trace {
        duration_ms,
        events,
    })
}

pub fn read_trace_file(path: &Path, duration_ms: Option<u64>) -> Result<Trace> {
    let file = std::fs::File::open(path)?;
    read_trace_csv(std::io::BufReader::new(file), duration_ms)
}

/// Per-slice pool of pre-bucketed 2-minute trace chunks. UEs draw a random
/// chunk of their slice at the start of each trial.
#[derive(Clone, Debug)]
pub struct TraceLibrary {
    chunks: [Vec<Vec<PeriodArrivals>>; 3],
}

impl TraceLibrary {
    /// Generates `traces_per_slice` traces of `trace_s` seconds per slice and
    /// chunks them into `chunk_s` pieces bucketed at `period_ms`.
    pub fn generate(
        profiles: &[SliceProfile; 3],
        traces_per_slice: usize,
        trace_s: f64,
        chunk_s: f64,
        period_ms: u64,
        root_seed: u64,
    ) -> Result<Self> {
        if traces_per_slice == 0 {
            return Err(Error::Parameter("traces_per_slice must be >= 1".into()));
        }
        let mut chunks: [Vec<Vec<PeriodArrivals>>; 3] = Default::default();
        for profile in profiles {
            let idx = profile.slice.index();
            for k in 0..traces_per_slice {
                let s = seed::derive(root_seed, &[seed::stage::LIBRARY, idx as u64, k as u64]);
                let trace = generate_trace(profile, trace_s, s)?;
                for c in chunk_trace(&trace, chunk_s)? {
                    chunks[idx].push(arrivals_for_trace(&c, period_ms));
                }
            }
            if chunks[idx].is_empty() {
                return Err(Error::Parameter(format!(
                    "{} traces of {trace_s} s yield no {chunk_s} s chunk",
                    profile.slice
                )));
            }
        }
        Ok(TraceLibrary { chunks })
    }

    pub fn chunks(&self, slice: Slice) -> &[Vec<PeriodArrivals>] {
        &self.chunks[slice.index()]
    }

    pub fn pick<R: rand::Rng>(&self, slice: Slice, rng: &mut R) -> &[PeriodArrivals] {
        let pool = self.chunks(slice);
        &pool[rng.random_range(0..pool.len())]
    }
}
