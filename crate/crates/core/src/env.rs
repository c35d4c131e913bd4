//! Simulated gNB. Every slice owns a downlink queue served at a linear
//! PRB capacity once per KPI period; the resulting per-slice aggregates drive
//! the reward, and per-UE sub-queues produce the KPI rows used for
//! classification.

use std::io::{Read, Write};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::RbAllocation;
use crate::slice::Slice;
use crate::traffic::PeriodArrivals;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Bits one PRB carries in one 1 ms subframe.
    pub bits_per_prb_subframe: u64,
    pub period_ms: u64,
    pub radio: RadioConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            bits_per_prb_subframe: 350,
            period_ms: 250,
            radio: RadioConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bits_per_prb_subframe == 0 {
            return Err(Error::config("env.bits_per_prb_subframe", "must be >= 1"));
        }
        if self.period_ms == 0 {
            return Err(Error::config("env.period_ms", "must be >= 1"));
        }
        self.radio.validate()
    }

    pub fn period_s(&self) -> f64 {
        self.period_ms as f64 / 1000.0
    }
}

/// Clamped Gaussian used for KPIs the queue model does not produce.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stationary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stationary {
    const fn new(mean: f64, std: f64, min: f64, max: f64) -> Self {
        Stationary { mean, std, min, max }
    }

    fn sample<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        let x = if self.std > 0.0 {
            // std validated > 0
            Normal::new(self.mean, self.std).map_or(self.mean, |n| n.sample(rng))
        } else {
            self.mean
        };
        x.clamp(self.min, self.max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub dl_mcs: Stationary,
    pub ul_mcs: Stationary,
    pub dl_cqi: Stationary,
    pub ul_sinr: Stationary,
    pub phr: Stationary,
    pub ul_turbo_iters: Stationary,
    pub rx_errors_up_perc: Stationary,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            dl_mcs: Stationary::new(20.0, 1.0, 0.0, 28.0),
            ul_mcs: Stationary::new(18.0, 1.0, 0.0, 28.0),
            dl_cqi: Stationary::new(15.0, 0.5, 1.0, 15.0),
            ul_sinr: Stationary::new(20.0, 2.0, -10.0, 40.0),
            phr: Stationary::new(40.0, 2.0, -23.0, 63.0),
            ul_turbo_iters: Stationary::new(1.0, 0.1, 0.0, 8.0),
            rx_errors_up_perc: Stationary::new(0.0, 0.5, 0.0, 100.0),
        }
    }
}

impl RadioConfig {
    fn fields(&self) -> [(&'static str, &Stationary); 7] {
        [
            ("dl_mcs", &self.dl_mcs),
            ("ul_mcs", &self.ul_mcs),
            ("dl_cqi", &self.dl_cqi),
            ("ul_sinr", &self.ul_sinr),
            ("phr", &self.phr),
            ("ul_turbo_iters", &self.ul_turbo_iters),
            ("rx_errors_up_perc", &self.rx_errors_up_perc),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in self.fields() {
            if !(s.std >= 0.0) || !(s.min <= s.max) || !s.mean.is_finite() {
                return Err(Error::config(
                    format!("env.radio.{name}"),
                    "need std >= 0, min <= max and a finite mean",
                ));
            }
        }
        Ok(())
    }
}

/// Bits deliverable by `n_prbs` PRBs over one period of 1 ms subframes.
pub fn capacity_bits(n_prbs: u32, bits_per_prb_subframe: u64, period_ms: u64) -> u64 {
    u64::from(n_prbs) * period_ms * bits_per_prb_subframe
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceQueueState {
    pub dl_buffer_bytes: u64,
}

/// Per-slice aggregate KPIs of one period.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceKpis {
    pub tx_brate_mbps: f64,
    /// End-of-period backlog.
    pub dl_buffer_bytes: u64,
    pub prb_req: u64,
    pub prb_granted: u64,
    pub slice_prb: u32,
    pub n_users: u32,
    pub served_bytes: u64,
    pub arrived_bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KpiFrame {
    pub period_idx: u64,
    /// Indexed by [`Slice::index`].
    pub slices: [SliceKpis; 3],
}

impl KpiFrame {
    pub fn get(&self, slice: Slice) -> &SliceKpis {
        &self.slices[slice.index()]
    }
}

/// Serves one slice queue for one period.
///
/// Served traffic is `min(backlog, capacity)` in whole bytes; PRB demand is
/// the backlog expressed in PRB-subframes and the grant is capped by the
/// slice's PRB-subframes in the period.
pub fn step_slice(
    state: SliceQueueState,
    arrivals: &PeriodArrivals,
    slice_prbs: u32,
    cfg: &EnvConfig,
) -> Result<(SliceQueueState, SliceKpis)> {
    if slice_prbs == 0 {
        return Err(Error::config(
            "slice_prbs",
            "every slice needs at least one PRB",
        ));
    }
    let backlog = state.dl_buffer_bytes + arrivals.dl_bytes;
    let cap_bytes = capacity_bits(slice_prbs, cfg.bits_per_prb_subframe, cfg.period_ms) / 8;
    let served = backlog.min(cap_bytes);
    let left = backlog - served;
    let prb_req = (backlog * 8).div_ceil(cfg.bits_per_prb_subframe);
    let prb_granted = prb_req.min(u64::from(slice_prbs) * cfg.period_ms);
    let kpis = SliceKpis {
        tx_brate_mbps: served as f64 * 8.0 / cfg.period_s() / 1e6,
        dl_buffer_bytes: left,
        prb_req,
        prb_granted,
        slice_prb: slice_prbs,
        n_users: 0,
        served_bytes: served,
        arrived_bytes: arrivals.dl_bytes,
    };
    Ok((SliceQueueState { dl_buffer_bytes: left }, kpis))
}

/// Maps the Rb allocation to PRBs and steps every slice.
pub fn step_env(
    queues: &[SliceQueueState; 3],
    arrivals: &[PeriodArrivals; 3],
    rbs: RbAllocation,
    period_idx: u64,
    cfg: &EnvConfig,
) -> Result<([SliceQueueState; 3], KpiFrame)> {
    let prbs = rbs.prbs();
    let mut next = [SliceQueueState::default(); 3];
    let mut frame = KpiFrame {
        period_idx,
        ..Default::default()
    };
    for s in Slice::ALL {
        let i = s.index();
        let (q, k) = step_slice(queues[i], &arrivals[i], prbs[i], cfg)?;
        next[i] = q;
        frame.slices[i] = k;
    }
    Ok((next, frame))
}

/// Splits `capacity` bytes across `demands` with equal shares, handing
/// capacity unused by small demands to the larger ones. The result sums to
/// `min(sum(demands), capacity)`.
pub fn water_fill(demands: &[u64], capacity: u64) -> Vec<u64> {
    let mut order: Vec<usize> = (0..demands.len()).collect();
    order.sort_by_key(|&i| (demands[i], i));
    let mut out = vec![0; demands.len()];
    let mut remaining = capacity;
    for (k, &i) in order.iter().enumerate() {
        let left = (order.len() - k) as u64;
        if demands[i] <= remaining / left {
            out[i] = demands[i];
            remaining -= demands[i];
        } else {
            // every remaining UE wants more than an equal share
            let base = remaining / left;
            let extra = remaining % left;
            for (j, &idx) in order[k..].iter().enumerate() {
                out[idx] = base + u64::from((j as u64) < extra);
            }
            break;
        }
    }
    out
}

#[derive(Clone, Debug)]
struct UeQueue {
    slice: Slice,
    backlog_bytes: u64,
    backlog_pkts: u64,
}

/// Per-UE quantities of one period.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UeKpis {
    pub ue_id: u32,
    pub slice: Option<Slice>,
    pub served_bytes: u64,
    pub dl_buffer_bytes: u64,
    pub tx_pkts: u64,
    pub dl_n_samples: u64,
    pub ul_bytes: u64,
    pub ul_pkts: u64,
    pub ul_n_samples: u64,
    pub prb_req: u64,
    pub prb_granted: u64,
}

/// gNB with per-UE sub-queues. Slice aggregates are produced by
/// [`step_env`]; UE queues split each slice's service by [`water_fill`].
#[derive(Clone, Debug)]
pub struct Gnb {
    cfg: EnvConfig,
    ues: Vec<UeQueue>,
    slices: [SliceQueueState; 3],
    period: u64,
}

impl Gnb {
    pub fn new(cfg: EnvConfig, ue_slices: &[Slice]) -> Self {
        Gnb {
            cfg,
            ues: ue_slices
                .iter()
                .map(|&slice| UeQueue {
                    slice,
                    backlog_bytes: 0,
                    backlog_pkts: 0,
                })
                .collect(),
            slices: Default::default(),
            period: 0,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn n_ues(&self) -> usize {
        self.ues.len()
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn slice_queues(&self) -> &[SliceQueueState; 3] {
        &self.slices
    }

    /// Advances one period with `arrivals[i]` offered to UE `i`.
    pub fn step(&mut self, arrivals: &[PeriodArrivals], rbs: RbAllocation) -> Result<(KpiFrame, Vec<UeKpis>)> {
        if arrivals.len() != self.ues.len() {
            return Err(Error::Shape(format!(
                "{} arrival entries for {} UEs",
                arrivals.len(),
                self.ues.len()
            )));
        }
        let mut agg = [PeriodArrivals::idle(self.period); 3];
        for (ue, a) in self.ues.iter().zip(arrivals) {
            let s = &mut agg[ue.slice.index()];
            s.dl_bytes += a.dl_bytes;
            s.ul_bytes += a.ul_bytes;
            s.dl_pkts += a.dl_pkts;
            s.ul_pkts += a.ul_pkts;
        }
        let (next, mut frame) = step_env(&self.slices, &agg, rbs, self.period, &self.cfg)?;
        let prbs = rbs.prbs();
        let bpp = self.cfg.bits_per_prb_subframe;
        let subframes = self.cfg.period_ms;

        let mut out = vec![UeKpis::default(); self.ues.len()];
        for slice in Slice::ALL {
            let members: Vec<usize> = (0..self.ues.len())
                .filter(|&i| self.ues[i].slice == slice)
                .collect();
            frame.slices[slice.index()].n_users = members.len() as u32;
            if members.is_empty() {
                continue;
            }
            for &i in &members {
                self.ues[i].backlog_bytes += arrivals[i].dl_bytes;
                self.ues[i].backlog_pkts += arrivals[i].dl_pkts;
            }
            let demands: Vec<u64> = members.iter().map(|&i| self.ues[i].backlog_bytes).collect();
            let served = water_fill(&demands, frame.slices[slice.index()].served_bytes);
            let active = demands.iter().filter(|&&d| d > 0).count().max(1) as u64;
            let slice_bits_per_subframe = u64::from(prbs[slice.index()]) * bpp;
            let ue_bits_per_subframe = (slice_bits_per_subframe / active).max(1);
            for (k, &i) in members.iter().enumerate() {
                let ue = &mut self.ues[i];
                let backlog = ue.backlog_bytes;
                let sent = served[k];
                let tx_pkts = if sent == backlog {
                    ue.backlog_pkts
                } else {
                    ((ue.backlog_pkts as u128 * sent as u128) / backlog.max(1) as u128) as u64
                };
                ue.backlog_bytes -= sent;
                ue.backlog_pkts -= tx_pkts;
                let prb_req = (backlog * 8).div_ceil(bpp);
                let ul_bits = arrivals[i].ul_bytes * 8;
                out[i] = UeKpis {
                    ue_id: i as u32,
                    slice: Some(slice),
                    served_bytes: sent,
                    dl_buffer_bytes: ue.backlog_bytes,
                    tx_pkts,
                    dl_n_samples: (sent * 8).div_ceil(ue_bits_per_subframe).min(subframes),
                    ul_bytes: arrivals[i].ul_bytes,
                    ul_pkts: arrivals[i].ul_pkts,
                    ul_n_samples: ul_bits.div_ceil(slice_bits_per_subframe.max(1)).min(subframes),
                    prb_req,
                    prb_granted: prb_req.min((sent * 8).div_ceil(bpp)),
                };
            }
            debug_assert_eq!(
                members.iter().map(|&i| self.ues[i].backlog_bytes).sum::<u64>(),
                next[slice.index()].dl_buffer_bytes
            );
        }
        self.slices = next;
        self.period += 1;
        Ok((frame, out))
    }
}

/// KPI names, in column order.
pub const KPI_NAMES: [&str; 17] = [
    "dl_mcs",
    "dl_n_samples",
    "dl_buffer_bytes",
    "tx_brate_downlink_Mbps",
    "tx_pkts_downlink",
    "dl_cqi",
    "ul_mcs",
    "ul_n_samples",
    "ul_buffer_bytes",
    "rx_brate_uplink_Mbps",
    "rx_pkts_uplink",
    "rx_errors_up_perc",
    "ul_sinr",
    "phr",
    "sum_reqsted_prbs",
    "sum_granted_prbs",
    "ul_turbo_iters",
];
pub const N_KPIS: usize = KPI_NAMES.len();

/// Column indices of the traffic-volume KPIs (sample counts, packet counts
/// and bitrates).
pub const TRAFFIC_KPIS: [usize; 6] = [1, 3, 4, 7, 9, 10];

/// One KPI log row: metadata plus the 17 KPI columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpiRecord {
    pub timestamp_ms: u64,
    pub ue_id: u32,
    pub slice_id: u8,
    pub dl_mcs: f64,
    pub dl_n_samples: u64,
    pub dl_buffer_bytes: u64,
    #[serde(rename = "tx_brate_downlink_Mbps")]
    pub tx_brate_downlink_mbps: f64,
    pub tx_pkts_downlink: u64,
    pub dl_cqi: f64,
    pub ul_mcs: f64,
    pub ul_n_samples: u64,
    pub ul_buffer_bytes: u64,
    #[serde(rename = "rx_brate_uplink_Mbps")]
    pub rx_brate_uplink_mbps: f64,
    pub rx_pkts_uplink: u64,
    pub rx_errors_up_perc: f64,
    pub ul_sinr: f64,
    pub phr: f64,
    pub sum_reqsted_prbs: u64,
    pub sum_granted_prbs: u64,
    pub ul_turbo_iters: f64,
}

impl KpiRecord {
    /// The 17 KPI values in [`KPI_NAMES`] order.
    pub fn features(&self) -> [f64; N_KPIS] {
        [
            self.dl_mcs,
            self.dl_n_samples as f64,
            self.dl_buffer_bytes as f64,
            self.tx_brate_downlink_mbps,
            self.tx_pkts_downlink as f64,
            self.dl_cqi,
            self.ul_mcs,
            self.ul_n_samples as f64,
            self.ul_buffer_bytes as f64,
            self.rx_brate_uplink_mbps,
            self.rx_pkts_uplink as f64,
            self.rx_errors_up_perc,
            self.ul_sinr,
            self.phr,
            self.sum_reqsted_prbs as f64,
            self.sum_granted_prbs as f64,
            self.ul_turbo_iters,
        ]
    }
}

/// One row per UE for the period of `frame`. Radio KPIs the queue model
/// does not produce are drawn from `radio`.
pub fn emit_kpi_records<R: rand::Rng>(
    frame: &KpiFrame,
    ues: &[UeKpis],
    cfg: &EnvConfig,
    rng: &mut R,
) -> Vec<KpiRecord> {
    let period_s = cfg.period_s();
    let r = &cfg.radio;
    ues.iter()
        .map(|u| KpiRecord {
            timestamp_ms: frame.period_idx * cfg.period_ms,
            ue_id: u.ue_id,
            slice_id: u.slice.map_or(u8::MAX, |s| s.index() as u8),
            dl_mcs: r.dl_mcs.sample(rng),
            dl_n_samples: u.dl_n_samples,
            dl_buffer_bytes: u.dl_buffer_bytes,
            tx_brate_downlink_mbps: u.served_bytes as f64 * 8.0 / period_s / 1e6,
            tx_pkts_downlink: u.tx_pkts,
            dl_cqi: r.dl_cqi.sample(rng),
            ul_mcs: r.ul_mcs.sample(rng),
            ul_n_samples: u.ul_n_samples,
            ul_buffer_bytes: 0,
            rx_brate_uplink_mbps: u.ul_bytes as f64 * 8.0 / period_s / 1e6,
            rx_pkts_uplink: u.ul_pkts,
            rx_errors_up_perc: r.rx_errors_up_perc.sample(rng),
            ul_sinr: r.ul_sinr.sample(rng),
            phr: r.phr.sample(rng),
            sum_reqsted_prbs: u.prb_req,
            sum_granted_prbs: u.prb_granted,
            ul_turbo_iters: r.ul_turbo_iters.sample(rng),
        })
        .collect()
}

pub fn kpi_csv_header() -> String {
    let mut cols = vec!["timestamp_ms", "ue_id", "slice_id"];
    cols.extend(KPI_NAMES);
    cols.join(",")
}

pub fn write_kpi_csv<W: Write>(records: &[KpiRecord], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(kpi_csv_header().split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_kpi_csv<R: Read>(reader: R) -> Result<Vec<KpiRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != kpi_csv_header() {
        return Err(Error::Parameter(format!("unexpected KPI CSV header `{header}`")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Stream for radio KPI noise, kept apart from traffic randomness.
pub fn radio_rng(seed: u64) -> crate::seed::Rng {
    crate::seed::rng(seed ^ 0x5ad1_0000_0000_0000)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> EnvConfig {
        EnvConfig::default()
    }

    fn dl(bytes: u64) -> PeriodArrivals {
        PeriodArrivals {
            dl_bytes: bytes,
            dl_pkts: u64::from(bytes > 0),
            ..Default::default()
        }
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(capacity_bits(0, 350, 250), 0);
        assert_eq!(capacity_bits(1, 350, 250), 87_500);
        assert_eq!(capacity_bits(50, 350, 250), 4_375_000);
    }

    #[test]
    fn step_slice_examples() {
        let (q, k) = step_slice(SliceQueueState::default(), &dl(0), 3, &cfg()).unwrap();
        assert_eq!((q.dl_buffer_bytes, k.tx_brate_mbps, k.prb_req), (0, 0.0, 0));

        let (q, k) = step_slice(SliceQueueState { dl_buffer_bytes: 125_000 }, &dl(0), 50, &cfg()).unwrap();
        assert_eq!(q.dl_buffer_bytes, 0);
        assert!((k.tx_brate_mbps - 4.0).abs() < 1e-12);

        let (q, k) = step_slice(SliceQueueState::default(), &dl(1_093_750), 50, &cfg()).unwrap();
        assert_eq!(k.served_bytes * 8, 4_375_000);
        assert_eq!(q.dl_buffer_bytes, 546_875);
        assert_eq!(k.prb_req, 25_000);
        assert_eq!(k.prb_granted, 12_500);

        assert!(matches!(
            step_slice(SliceQueueState::default(), &dl(0), 0, &cfg()),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn idle_env_frame() {
        let (q, f) = step_env(&Default::default(), &Default::default(), RbAllocation::default(), 0, &cfg()).unwrap();
        assert_eq!(q, [SliceQueueState::default(); 3]);
        for s in Slice::ALL {
            let k = f.get(s);
            assert_eq!((k.tx_brate_mbps, k.prb_req, k.dl_buffer_bytes), (0.0, 0, 0));
        }
        assert_eq!(f.get(Slice::Embb).slice_prb, 17);
    }

    #[test]
    fn embb_streaming_under_capacity_tracks_arrivals() {
        // 8 Mbps into 44 PRBs (15.4 Mbps)
        let rbs = RbAllocation::new(1, 1).unwrap();
        let per_period = 8_000_000 / 8 / 4;
        let mut q = [SliceQueueState::default(); 3];
        for p in 0..40 {
            let arr = [dl(0), dl(0), dl(per_period)];
            let (nq, f) = step_env(&q, &arr, rbs, p, &cfg()).unwrap();
            q = nq;
            assert_eq!(f.get(Slice::Embb).dl_buffer_bytes, 0);
            assert!((f.get(Slice::Embb).tx_brate_mbps - 8.0).abs() < 1e-9);
        }
    }

    #[test]
    fn water_fill_examples() {
        assert_eq!(water_fill(&[10, 100, 100], 90), vec![10, 40, 40]);
        assert_eq!(water_fill(&[10, 100, 100], 1000), vec![10, 100, 100]);
        assert_eq!(water_fill(&[5, 5, 5], 4), vec![2, 1, 1]);
        assert_eq!(water_fill(&[], 4), Vec::<u64>::new());
    }

    #[test]
    fn kpi_rows_and_header() {
        let mut gnb = Gnb::new(cfg(), &[Slice::Urllc]);
        let (frame, ues) = gnb.step(&[PeriodArrivals::idle(0)], RbAllocation::default()).unwrap();
        let rows = emit_kpi_records(&frame, &ues, &cfg(), &mut radio_rng(1));
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].features().len(), 17);
        let r = &rows[0];
        assert_eq!(
            (r.tx_brate_downlink_mbps, r.rx_brate_uplink_mbps, r.dl_n_samples, r.ul_n_samples),
            (0.0, 0.0, 0, 0)
        );
        assert!((1.0..=15.0).contains(&r.dl_cqi));

        let mut buf = Vec::new();
        write_kpi_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), kpi_csv_header());
        assert_eq!(text.lines().next().unwrap().split(',').count(), 20);
        assert_eq!(read_kpi_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn trial_row_count() {
        let mut gnb = Gnb::new(cfg(), &[Slice::Embb, Slice::Urllc, Slice::Mmtc]);
        let mut rng = radio_rng(3);
        let mut rows = 0;
        for _ in 0..480 {
            let (f, u) = gnb.step(&[PeriodArrivals::default(); 3], RbAllocation::default()).unwrap();
            rows += emit_kpi_records(&f, &u, &cfg(), &mut rng).len();
        }
        assert_eq!(rows, 1440);
    }

    fn arb_arrivals() -> impl Strategy<Value = PeriodArrivals> {
        (0u64..400_000, 0u64..50_000).prop_map(|(d, u)| PeriodArrivals {
            dl_bytes: d,
            ul_bytes: u,
            dl_pkts: d / 1000 + u64::from(d > 0),
            ul_pkts: u / 100,
            ..Default::default()
        })
    }

    proptest! {
        #[test]
        fn queue_conservation_and_work_conservation(buf in 0u64..2_000_000, a in arb_arrivals(), prbs in 1u32..50) {
            let (q, k) = step_slice(SliceQueueState { dl_buffer_bytes: buf }, &a, prbs, &cfg()).unwrap();
            prop_assert_eq!(q.dl_buffer_bytes + k.served_bytes, buf + a.dl_bytes);
            let cap = capacity_bits(prbs, 350, 250) / 8;
            if k.served_bytes < cap {
                prop_assert_eq!(q.dl_buffer_bytes, 0);
            }
            prop_assert!(k.prb_granted <= u64::from(prbs) * 250);
        }

        #[test]
        fn more_prbs_never_larger_buffer(buf in 0u64..2_000_000, a in arb_arrivals(), prbs in 1u32..49, extra in 1u32..10) {
            let (q1, _) = step_slice(SliceQueueState { dl_buffer_bytes: buf }, &a, prbs, &cfg()).unwrap();
            let (q2, _) = step_slice(SliceQueueState { dl_buffer_bytes: buf }, &a, prbs + extra, &cfg()).unwrap();
            prop_assert!(q2.dl_buffer_bytes <= q1.dl_buffer_bytes);
        }

        #[test]
        fn water_fill_sums(demands in prop::collection::vec(0u64..10_000, 0..8), cap in 0u64..50_000) {
            let out = water_fill(&demands, cap);
            prop_assert_eq!(out.iter().sum::<u64>(), demands.iter().sum::<u64>().min(cap));
            for (o, d) in out.iter().zip(&demands) {
                prop_assert!(o <= d);
            }
        }

        #[test]
        fn per_ue_queues_match_slice_aggregate(
            steps in prop::collection::vec(prop::collection::vec(arb_arrivals(), 4), 1..20),
            m in 1u8..8, u in 1u8..8,
        ) {
            let rbs = RbAllocation::new(m, u).unwrap();
            let slices = [Slice::Embb, Slice::Embb, Slice::Mmtc, Slice::Urllc];
            let mut gnb = Gnb::new(cfg(), &slices);
            let mut q = [SliceQueueState::default(); 3];
            for arr in steps {
                let mut agg = [PeriodArrivals::default(); 3];
                for (s, a) in slices.iter().zip(&arr) {
                    agg[s.index()].dl_bytes += a.dl_bytes;
                }
                let (nq, want) = step_env(&q, &agg, rbs, gnb.period(), &cfg()).unwrap();
                q = nq;
                let (got, ues) = gnb.step(&arr, rbs).unwrap();
                for s in Slice::ALL {
                    prop_assert_eq!(got.get(s).dl_buffer_bytes, want.get(s).dl_buffer_bytes);
                    prop_assert_eq!(got.get(s).served_bytes, want.get(s).served_bytes);
                    let per_ue: u64 = ues.iter().filter(|k| k.slice == Some(s)).map(|k| k.dl_buffer_bytes).sum();
                    prop_assert_eq!(per_ue, want.get(s).dl_buffer_bytes);
                }
            }
        }
    }
}
