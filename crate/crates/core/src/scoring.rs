//! Per-slice performance scores and the MDP reward.
//!
//! All scores lie in [0, 1]. eMBB rewards draining the downlink queue, URLLC
//! penalises the queueing-delay proxy `buffer / rate`, and mMTC compares
//! granted with requested PRBs while charging idle slices for every PRB held.

use serde::{Deserialize, Serialize};

use crate::env::{KpiFrame, SliceKpis};
use crate::error::{Error, Result};
use crate::slice::Slice;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConstants {
    /// eMBB scale.
    pub alpha: f64,
    /// eMBB offset, megabits.
    pub beta: f64,
    /// Largest tolerated RAN queueing delay, seconds.
    pub gamma_delay: f64,
    /// Measurement period, seconds.
    pub period_s: f64,
    /// Bytes to megabits.
    pub kappa: f64,
}

impl Default for ScoreConstants {
    fn default() -> Self {
        ScoreConstants {
            alpha: 1.0 / 3.0,
            beta: 1.5,
            gamma_delay: 1.0,
            period_s: 0.25,
            kappa: 8.0 / 1e6,
        }
    }
}

impl ScoreConstants {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("score.alpha", self.alpha),
            ("score.beta", self.beta),
            ("score.gamma_delay", self.gamma_delay),
            ("score.period_s", self.period_s),
            ("score.kappa", self.kappa),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(key, format!("must be a finite value > 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// `alpha * (beta + tx_brate * T - dl_buffer * kappa)`, clipped to [0, 1].
pub fn score_embb(tx_brate_mbps: f64, dl_buffer_bytes: f64, c: &ScoreConstants) -> f64 {
    clip01(c.alpha * (c.beta + tx_brate_mbps * c.period_s - dl_buffer_bytes * c.kappa))
}

/// `max(0, gamma - delay) / gamma` with `delay = dl_buffer * kappa / tx_brate`.
/// An empty idle queue scores 1; a backlog with no service scores 0.
pub fn score_urllc(tx_brate_mbps: f64, dl_buffer_bytes: f64, c: &ScoreConstants) -> f64 {
    if tx_brate_mbps <= 0.0 {
        return if dl_buffer_bytes <= 0.0 { 1.0 } else { 0.0 };
    }
    let delay_s = dl_buffer_bytes * c.kappa / tx_brate_mbps;
    clip01((c.gamma_delay - delay_s).max(0.0) / c.gamma_delay)
}

/// `1 / slice_prb` when nothing was requested, else `min(1, granted / req)`.
pub fn score_mmtc(prb_req: u64, prb_granted: u64, slice_prb: u32) -> Result<f64> {
    if slice_prb == 0 {
        return Err(Error::Domain("mMTC score needs slice_prb >= 1".into()));
    }
    Ok(if prb_req == 0 {
        1.0 / f64::from(slice_prb)
    } else {
        (prb_granted as f64 / prb_req as f64).min(1.0)
    })
}

pub fn score_slice(slice: Slice, k: &SliceKpis, c: &ScoreConstants) -> Result<f64> {
    Ok(match slice {
        Slice::Embb => score_embb(k.tx_brate_mbps, k.dl_buffer_bytes as f64, c),
        Slice::Urllc => score_urllc(k.tx_brate_mbps, k.dl_buffer_bytes as f64, c),
        Slice::Mmtc => score_mmtc(k.prb_req, k.prb_granted, k.slice_prb)?,
    })
}

/// Per-slice scores in (mMTC, URLLC, eMBB) order.
pub fn slice_scores(frame: &KpiFrame, c: &ScoreConstants) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for s in Slice::ALL {
        out[s.index()] = score_slice(s, frame.get(s), c)?;
    }
    Ok(out)
}

/// Mean of the three slice scores of the frame observed after the action.
pub fn reward(frame: &KpiFrame, c: &ScoreConstants) -> Result<f64> {
    Ok(slice_scores(frame, c)?.iter().sum::<f64>() / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: f64 = 1e-12;

    fn c() -> ScoreConstants {
        ScoreConstants::default()
    }

    #[test]
    fn embb_examples() {
        assert!((score_embb(0.0, 0.0, &c()) - 0.5).abs() < EPS);
        assert!((score_embb(6.0, 0.0, &c()) - 1.0).abs() < EPS);
        assert!(score_embb(0.0, 187_500.0, &c()).abs() < EPS);
        assert_eq!(score_embb(100.0, 0.0, &c()), 1.0);
    }

    #[test]
    fn urllc_examples() {
        assert_eq!(score_urllc(0.0, 0.0, &c()), 1.0);
        assert_eq!(score_urllc(4.0, 0.0, &c()), 1.0);
        assert!((score_urllc(4.0, 250_000.0, &c()) - 0.5).abs() < EPS);
        assert_eq!(score_urllc(1.0, 1e6, &c()), 0.0);
        assert_eq!(score_urllc(0.0, 10.0, &c()), 0.0);
    }

    #[test]
    fn mmtc_examples() {
        assert!((score_mmtc(0, 0, 3).unwrap() - 1.0 / 3.0).abs() < EPS);
        assert!((score_mmtc(10, 5, 7).unwrap() - 0.5).abs() < EPS);
        assert_eq!(score_mmtc(4, 9, 3).unwrap(), 1.0);
        assert!(matches!(score_mmtc(0, 0, 0), Err(Error::Domain(_))));
    }

    fn idle(slice_prb: u32) -> SliceKpis {
        SliceKpis {
            slice_prb,
            ..Default::default()
        }
    }

    #[test]
    fn reward_examples() {
        let frame = KpiFrame {
            period_idx: 0,
            slices: [idle(3), idle(3), idle(44)],
        };
        assert!((reward(&frame, &c()).unwrap() - 11.0 / 18.0).abs() < EPS);

        let busy = |tx| SliceKpis {
            tx_brate_mbps: tx,
            prb_req: 10,
            prb_granted: 10,
            slice_prb: 3,
            ..Default::default()
        };
        let all_one = KpiFrame {
            period_idx: 0,
            slices: [busy(0.1), busy(1.0), busy(10.0)],
        };
        assert!((reward(&all_one, &c()).unwrap() - 1.0).abs() < EPS);

        let all_zero = KpiFrame {
            period_idx: 0,
            slices: [
                SliceKpis {
                    prb_req: 10,
                    prb_granted: 0,
                    slice_prb: 3,
                    ..Default::default()
                },
                SliceKpis {
                    dl_buffer_bytes: 10,
                    slice_prb: 3,
                    ..Default::default()
                },
                SliceKpis {
                    dl_buffer_bytes: 1_000_000,
                    slice_prb: 44,
                    ..Default::default()
                },
            ],
        };
        assert_eq!(reward(&all_zero, &c()).unwrap(), 0.0);
    }

    #[test]
    fn constants_validation_names_key() {
        let mut k = c();
        k.gamma_delay = -1.0;
        match k.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "score.gamma_delay"),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn scores_in_unit_interval(tx in 0.0f64..1e3, buf in 0.0f64..1e9, req in 0u64..100_000, g in 0u64..100_000, prb in 1u32..60) {
            for s in [score_embb(tx, buf, &c()), score_urllc(tx, buf, &c()), score_mmtc(req, g, prb).unwrap()] {
                prop_assert!((0.0..=1.0).contains(&s));
            }
        }

        #[test]
        fn embb_monotone(tx in 0.0f64..50.0, buf in 0.0f64..1e7, d in 0.0f64..1e6, dt in 0.0f64..10.0) {
            prop_assert!(score_embb(tx, buf + d, &c()) <= score_embb(tx, buf, &c()));
            prop_assert!(score_embb(tx + dt, buf, &c()) >= score_embb(tx, buf, &c()));
        }

        #[test]
        fn urllc_monotone_in_buffer(tx in 0.0f64..50.0, buf in 0.0f64..1e7, d in 0.0f64..1e6) {
            prop_assert!(score_urllc(tx, buf + d, &c()) <= score_urllc(tx, buf, &c()));
        }

        #[test]
        fn urllc_continuous_in_buffer(tx in 0.01f64..50.0, buf in 0.0f64..1e7) {
            let h = 1e-3;
            prop_assert!((score_urllc(tx, buf + h, &c()) - score_urllc(tx, buf, &c())).abs() <= 8e-6 * h / tx + 1e-12);
        }

        #[test]
        fn mmtc_monotone_and_idle_incentive(req in 1u64..10_000, g in 0u64..10_000, prb in 1u32..49) {
            prop_assert!(score_mmtc(req, g + 1, prb).unwrap() >= score_mmtc(req, g, prb).unwrap());
            prop_assert!(score_mmtc(0, 0, prb + 1).unwrap() < score_mmtc(0, 0, prb).unwrap());
        }
    }
}
