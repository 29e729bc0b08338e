//! Detrended interest rates and loan sizes by tie classification.
//!
//! Raw rates are detrended day by day against the volume-weighted market
//! mean, then averaged per pair with volume weights across the window:
//!
//! ```text
//! r_{t',ij} = sum_t (r_{t,ij} - <r_t>) w_{t,ij} / sum_t w_{t,ij}
//! <r_t>    = sum_{i<j} r_{t,ij} w_{t,ij} / sum_{i<j} w_{t,ij}
//! ```
//!
//! Any market-wide additive shift cancels exactly. The mean loan size of a
//! pair divides its window volume by its trade-day count. Group contrasts
//! between significant and non-significant pairs carry a two-sample normal
//! 95% confidence interval.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Network, WindowedCounts};
use crate::Real;

/// Window-level rate and size aggregates of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRateStats {
    pub pair: (u32, u32),
    /// Volume-weighted detrended rate across the window.
    pub detrended_rate: Real,
    /// Window volume divided by trade-day count.
    pub mean_loan_size: Real,
    pub volume: Real,
    pub trade_days: u32,
    pub significant: bool,
}

/// Two-sample contrast with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupDifference {
    pub mean_significant: Real,
    pub mean_other: Real,
    pub difference: Real,
    pub ci_low: Option<Real>,
    pub ci_high: Option<Real>,
    pub n_significant: usize,
    pub n_other: usize,
}

fn group_difference(sig: &[Real], other: &[Real]) -> GroupDifference {
    let mean = |xs: &[Real]| xs.iter().sum::<Real>() / xs.len().max(1) as Real;
    let var = |xs: &[Real], m: Real| {
        if xs.len() < 2 {
            return Real::NAN;
        }
        xs.iter().map(|x| (x - m).powi(2)).sum::<Real>() / (xs.len() - 1) as Real
    };
    let ms = mean(sig);
    let mo = mean(other);
    let difference = ms - mo;
    let (ci_low, ci_high) = if sig.len() >= 2 && other.len() >= 2 {
        let se = (var(sig, ms) / sig.len() as Real + var(other, mo) / other.len() as Real).sqrt();
        (Some(difference - 1.96 * se), Some(difference + 1.96 * se))
    } else {
        (None, None)
    };
    GroupDifference {
        mean_significant: ms,
        mean_other: mo,
        difference,
        ci_low,
        ci_high,
        n_significant: sig.len(),
        n_other: other.len(),
    }
}

/// Detrended rates, loan sizes and group contrasts for one window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateAnalysis {
    pub window_index: usize,
    pub pairs: Vec<PairRateStats>,
    pub rate: GroupDifference,
    pub loan_size: GroupDifference,
    /// Dates skipped in the market mean because no volume traded.
    pub skipped_days: usize,
}

/// Computes per-pair detrended rates over the window's days and contrasts
/// significant against non-significant pairs.
pub fn detrended_rates(
    network: &Network,
    window: &WindowedCounts,
    significant: &BTreeSet<(u32, u32)>,
) -> Result<RateAnalysis> {
    let bank_index = network.bank_index();
    let mut window_local: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
    for (local, bank) in window.banks.iter().enumerate() {
        let global = *bank_index.get(bank).ok_or(Error::BankSetMismatch)?;
        window_local.insert(global, local as u32);
    }

    let mut weighted_dev: std::collections::BTreeMap<(u32, u32), Real> = Default::default();
    let mut skipped_days = 0usize;
    for date in &window.dates {
        let snapshot = network.day_by_date(*date).ok_or_else(|| {
            Error::InvalidArgument(format!("window date {date} missing from snapshots"))
        })?;
        let total_volume: Real = snapshot.edges.values().map(|e| e.volume).sum();
        if total_volume <= 0.0 {
            skipped_days += 1;
            continue;
        }
        let market_rate: Real =
            snapshot.edges.values().map(|e| e.rate_volume).sum::<Real>() / total_volume;
        for (&(gi, gj), edge) in &snapshot.edges {
            if edge.volume <= 0.0 {
                continue;
            }
            let (Some(&li), Some(&lj)) = (window_local.get(&gi), window_local.get(&gj)) else {
                continue;
            };
            let key = if li < lj { (li, lj) } else { (lj, li) };
            let pair_rate = edge.rate_volume / edge.volume;
            *weighted_dev.entry(key).or_insert(0.0) += (pair_rate - market_rate) * edge.volume;
        }
    }

    let mut pairs = Vec::with_capacity(window.pairs.len());
    let mut sig_rates = Vec::new();
    let mut other_rates = Vec::new();
    let mut sig_sizes = Vec::new();
    let mut other_sizes = Vec::new();
    for (&pair, counts) in &window.pairs {
        if counts.volume <= 0.0 || counts.days == 0 {
            continue;
        }
        let detrended = weighted_dev.get(&pair).copied().unwrap_or(0.0) / counts.volume;
        let mean_size = counts.volume / counts.days as Real;
        let is_sig = significant.contains(&pair);
        pairs.push(PairRateStats {
            pair,
            detrended_rate: detrended,
            mean_loan_size: mean_size,
            volume: counts.volume,
            trade_days: counts.days,
            significant: is_sig,
        });
        if is_sig {
            sig_rates.push(detrended);
            sig_sizes.push(mean_size);
        } else {
            other_rates.push(detrended);
            other_sizes.push(mean_size);
        }
    }

    Ok(RateAnalysis {
        window_index: window.index,
        pairs,
        rate: group_difference(&sig_rates, &other_rates),
        loan_size: group_difference(&sig_sizes, &other_sizes),
        skipped_days,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_daily_snapshots, window_counts, TradingHours, WindowMode};
    use crate::ingest::TransactionRecord;
    use crate::BankId;
    use chrono::{Datelike, NaiveDate, NaiveTime};

    fn record(day: u32, lender: &str, borrower: &str, rate: Real, amount: Real) -> TransactionRecord {
        TransactionRecord {
            date: NaiveDate::from_ymd_opt(2001, 1, 1).unwrap() + chrono::Days::new(day as u64),
            time: NaiveTime::from_hms_opt(10, 0, 0).unwrap(),
            lender: BankId::from(lender),
            borrower: BankId::from(borrower),
            maturity: "ON".into(),
            rate,
            amount,
        }
    }

    fn pipeline(records: &[TransactionRecord], tau: usize) -> (Network, WindowedCounts) {
        let net = build_daily_snapshots(records, TradingHours::default());
        let mut windows = window_counts(&net, tau, WindowMode::Fixed, false).unwrap();
        (net, windows.remove(0))
    }

    #[test]
    fn identical_rates_detrend_to_zero() {
        let records = vec![
            record(0, "AA", "BB", 4.5, 10.0),
            record(0, "AA", "CC", 4.5, 25.0),
            record(1, "BB", "CC", 4.5, 5.0),
            record(1, "AA", "BB", 4.5, 7.0),
        ];
        let (net, w) = pipeline(&records, 2);
        let out = detrended_rates(&net, &w, &BTreeSet::new()).unwrap();
        for p in &out.pairs {
            assert!(p.detrended_rate.abs() < 1e-12);
        }
    }

    #[test]
    fn additive_market_shift_cancels() {
        let base = vec![
            record(0, "AA", "BB", 4.5, 10.0),
            record(0, "AA", "CC", 4.1, 25.0),
            record(1, "BB", "CC", 4.9, 5.0),
            record(1, "AA", "BB", 4.3, 7.0),
        ];
        let mut shifted = base.clone();
        for r in &mut shifted {
            // different shift per day
            let day_shift = if r.date.day() == 1 { 2.5 } else { -1.25 };
            r.rate += day_shift;
        }
        let (net_a, w_a) = pipeline(&base, 2);
        let (net_b, w_b) = pipeline(&shifted, 2);
        let out_a = detrended_rates(&net_a, &w_a, &BTreeSet::new()).unwrap();
        let out_b = detrended_rates(&net_b, &w_b, &BTreeSet::new()).unwrap();
        for (pa, pb) in out_a.pairs.iter().zip(&out_b.pairs) {
            assert_eq!(pa.pair, pb.pair);
            assert!(
                (pa.detrended_rate - pb.detrended_rate).abs() < 1e-12,
                "{} vs {}",
                pa.detrended_rate,
                pb.detrended_rate
            );
        }
    }

    #[test]
    fn mean_loan_size_divides_by_trade_days() {
        // one pair trading 300 total over three trade-days
        let records = vec![
            record(0, "AA", "BB", 4.0, 100.0),
            record(1, "AA", "BB", 4.0, 150.0),
            record(2, "AA", "BB", 4.0, 50.0),
        ];
        let (net, w) = pipeline(&records, 3);
        let out = detrended_rates(&net, &w, &BTreeSet::new()).unwrap();
        assert_eq!(out.pairs.len(), 1);
        assert!((out.pairs[0].mean_loan_size - 100.0).abs() < 1e-12);
        assert_eq!(out.pairs[0].trade_days, 3);
    }

    #[test]
    fn group_difference_recovers_premium() {
        // significant pairs pay a 5bp premium over a noisy market
        let mut records = Vec::new();
        let mut state = 99u64;
        let mut noise = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.01
        };
        for day in 0..10u32 {
            let market = 4.0 + 0.1 * (day as f64);
            for k in 0..6u32 {
                let (a, b) = (format!("L{k:02}"), format!("B{k:02}"));
                let premium = if k < 2 { 0.05 } else { 0.0 };
                records.push(record(day, &a, &b, market + premium + noise(), 10.0));
            }
        }
        let (net, w) = pipeline(&records, 10);
        let sig: BTreeSet<(u32, u32)> = w
            .pairs
            .keys()
            .filter(|&&(i, j)| {
                let name = &w.banks[i as usize];
                (name.as_str() == "L00" || name.as_str() == "L01")
                    || w.banks[j as usize].as_str() == "L00"
                    || w.banks[j as usize].as_str() == "L01"
            })
            .copied()
            .collect();
        assert_eq!(sig.len(), 2);
        let out = detrended_rates(&net, &w, &sig).unwrap();
        assert!(
            (out.rate.difference - 0.05).abs() < 0.01,
            "difference = {}",
            out.rate.difference
        );
        let (lo, hi) = (out.rate.ci_low.unwrap(), out.rate.ci_high.unwrap());
        assert!(lo < 0.05 && 0.05 < hi, "CI [{lo}, {hi}]");
    }

    #[test]
    fn zero_volume_days_are_skipped() {
        let records = vec![record(0, "AA", "BB", 4.0, 10.0)];
        let (net, mut w) = pipeline(&records, 1);
        // extend the window with a date that has no snapshot volume
        w.dates = vec![w.dates[0]];
        let out = detrended_rates(&net, &w, &BTreeSet::new()).unwrap();
        assert_eq!(out.skipped_days, 0);
        assert_eq!(out.pairs.len(), 1);
    }
}
