//! Transaction parsing, daily snapshots, and windowed pair counts.
//!
//! Input files are UTF-8 CSV with a header and the columns
//! `date (YYYY-MM-DD), time (HH:MM:SS), lender, borrower, maturity, rate,
//! amount`. Trades are filtered to a maturity whitelist and to market hours,
//! then collapsed into one unweighted edge per pair per day. Windows of
//! `tau` business days carry the trade-day counts `m_ij <= tau` that the
//! estimator and the significance tests consume. A "business day" is any
//! calendar date with at least one record; no external holiday calendar is
//! consulted.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{BankId, Real};

/// One validated loan record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub date: NaiveDate,
    pub time: NaiveTime,
    pub lender: BankId,
    pub borrower: BankId,
    pub maturity: String,
    /// Percent per annum; negative rates are legitimate.
    pub rate: Real,
    /// Millions of currency; strictly positive.
    pub amount: Real,
}

/// A row that failed validation, with its 1-based line number.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

/// Result of parsing one input file.
#[derive(Debug, Clone)]
pub struct ParseOutcome {
    /// Valid records passing the maturity filter, in file order.
    pub records: Vec<TransactionRecord>,
    /// Malformed rows with reasons; never silently dropped.
    pub rejects: Vec<RejectedRow>,
    /// Rows dropped by the maturity filter (well-formed, out of scope).
    pub filtered: usize,
}

/// Parsing knobs. The reject-rate guard aborts when more than
/// `max_reject_fraction` of the rows are malformed, which usually means the
/// file layout drifted; `allow_high_reject_rate` overrides it.
#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub maturities: BTreeSet<String>,
    pub max_reject_fraction: f64,
    pub allow_high_reject_rate: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            maturities: ["ON", "ONL"].iter().map(|s| s.to_string()).collect(),
            max_reject_fraction: 0.01,
            allow_high_reject_rate: false,
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawRow {
    date: String,
    time: String,
    lender: String,
    borrower: String,
    maturity: String,
    rate: String,
    amount: String,
}

fn validate_row(raw: &RawRow) -> std::result::Result<TransactionRecord, String> {
    let date = NaiveDate::parse_from_str(raw.date.trim(), "%Y-%m-%d")
        .map_err(|e| format!("bad date {:?}: {e}", raw.date))?;
    let time = NaiveTime::parse_from_str(raw.time.trim(), "%H:%M:%S")
        .map_err(|e| format!("bad time {:?}: {e}", raw.time))?;
    let lender = raw.lender.trim();
    let borrower = raw.borrower.trim();
    if lender.is_empty() || borrower.is_empty() {
        return Err("empty bank id".into());
    }
    if lender == borrower {
        return Err(format!("self-loop on {lender}"));
    }
    let rate: Real = raw
        .rate
        .trim()
        .parse()
        .map_err(|e| format!("bad rate {:?}: {e}", raw.rate))?;
    if !rate.is_finite() {
        return Err(format!("non-finite rate {rate}"));
    }
    let amount: Real = raw
        .amount
        .trim()
        .parse()
        .map_err(|e| format!("bad amount {:?}: {e}", raw.amount))?;
    if !(amount > 0.0) || !amount.is_finite() {
        return Err(format!("non-positive amount {amount}"));
    }
    Ok(TransactionRecord {
        date,
        time,
        lender: BankId(lender.to_owned()),
        borrower: BankId(borrower.to_owned()),
        maturity: raw.maturity.trim().to_owned(),
        rate,
        amount,
    })
}

/// Parses a transaction CSV, keeping records whose maturity is whitelisted.
pub fn parse_transactions(path: &Path, options: &ParseOptions) -> Result<ParseOutcome> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(file);

    let mut outcome = ParseOutcome {
        records: Vec::new(),
        rejects: Vec::new(),
        filtered: 0,
    };
    let mut total = 0usize;
    for (idx, row) in reader.deserialize::<RawRow>().enumerate() {
        total += 1;
        let line = idx as u64 + 2; // header occupies line 1
        match row {
            Err(e) => outcome.rejects.push(RejectedRow {
                line,
                reason: format!("unparseable row: {e}"),
            }),
            Ok(raw) => match validate_row(&raw) {
                Err(reason) => outcome.rejects.push(RejectedRow { line, reason }),
                Ok(record) => {
                    if options.maturities.contains(&record.maturity) {
                        outcome.records.push(record);
                    } else {
                        outcome.filtered += 1;
                    }
                }
            },
        }
    }

    if total > 0 {
        let fraction = outcome.rejects.len() as f64 / total as f64;
        if fraction > options.max_reject_fraction && !options.allow_high_reject_rate {
            return Err(Error::RejectRate {
                rejected: outcome.rejects.len(),
                total,
                percent: 100.0 * fraction,
                limit: 100.0 * options.max_reject_fraction,
            });
        }
    }
    if outcome.records.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(outcome)
}

/// Per-pair aggregates for a single day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayEdge {
    /// Number of trades that day (the edge itself stays unweighted).
    pub trades: u32,
    /// Total volume traded by the pair that day.
    pub volume: Real,
    /// Sum of rate * amount, for volume-weighted rates.
    pub rate_volume: Real,
    /// Lending from the lower-indexed bank to the higher-indexed one occurred.
    pub low_to_high: bool,
    /// Lending in the opposite orientation occurred.
    pub high_to_low: bool,
}

/// Edge set of one business day. Keys are `(i, j)` bank indices with `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySnapshot {
    pub date: NaiveDate,
    pub edges: BTreeMap<(u32, u32), DayEdge>,
}

/// A sequence of daily snapshots over a shared bank registry.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// Bank ids, indexed by the `u32` keys used in snapshots.
    pub banks: Vec<BankId>,
    /// Snapshots in date order; dates with no surviving trades are absent.
    pub days: Vec<DailySnapshot>,
}

impl Network {
    pub fn bank_index(&self) -> HashMap<&BankId, u32> {
        self.banks
            .iter()
            .enumerate()
            .map(|(i, b)| (b, i as u32))
            .collect()
    }

    pub fn day_by_date(&self, date: NaiveDate) -> Option<&DailySnapshot> {
        self.days
            .binary_search_by_key(&date, |d| d.date)
            .ok()
            .map(|i| &self.days[i])
    }
}

/// Market hours, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradingHours {
    pub open: NaiveTime,
    pub close: NaiveTime,
}

impl Default for TradingHours {
    fn default() -> Self {
        TradingHours {
            open: NaiveTime::from_hms_opt(9, 0, 0).unwrap(),
            close: NaiveTime::from_hms_opt(18, 0, 0).unwrap(),
        }
    }
}

impl TradingHours {
    pub fn contains(&self, t: NaiveTime) -> bool {
        t >= self.open && t <= self.close
    }
}

/// Collapses records into one snapshot per calendar date present.
///
/// Trades outside `hours` are excluded; several same-day trades of a pair
/// become a single edge carrying count and volume aggregates.
pub fn build_daily_snapshots(records: &[TransactionRecord], hours: TradingHours) -> Network {
    let mut banks: Vec<BankId> = Vec::new();
    let mut index: HashMap<BankId, u32> = HashMap::new();
    let mut days: BTreeMap<NaiveDate, BTreeMap<(u32, u32), DayEdge>> = BTreeMap::new();

    for record in records {
        if !hours.contains(record.time) {
            continue;
        }
        let mut idx_of = |bank: &BankId| -> u32 {
            *index.entry(bank.clone()).or_insert_with(|| {
                banks.push(bank.clone());
                banks.len() as u32 - 1
            })
        };
        let lender = idx_of(&record.lender);
        let borrower = idx_of(&record.borrower);
        let (lo, hi) = if lender < borrower {
            (lender, borrower)
        } else {
            (borrower, lender)
        };
        let edge = days
            .entry(record.date)
            .or_default()
            .entry((lo, hi))
            .or_insert(DayEdge {
                trades: 0,
                volume: 0.0,
                rate_volume: 0.0,
                low_to_high: false,
                high_to_low: false,
            });
        edge.trades += 1;
        edge.volume += record.amount;
        edge.rate_volume += record.rate * record.amount;
        if lender == lo {
            edge.low_to_high = true;
        } else {
            edge.high_to_low = true;
        }
    }

    Network {
        banks,
        days: days
            .into_iter()
            .map(|(date, edges)| DailySnapshot { date, edges })
            .collect(),
    }
}

/// How consecutive windows are laid over the day axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    /// Disjoint windows of `tau` days; a trailing remainder is dropped.
    Fixed,
    /// Start dates slide by one day; adjacent windows share `tau - 1` days.
    Rolling,
}

impl std::fmt::Display for WindowMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WindowMode::Fixed => "fixed",
            WindowMode::Rolling => "rolling",
        })
    }
}

/// Windowed pair aggregates. Local bank indices point into `banks`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PairCounts {
    /// Trade-day count `m_ij`: days with at least one trade in either
    /// orientation, at most `tau`.
    pub days: u32,
    /// Days on which the lower-indexed bank lent to the higher-indexed one.
    pub days_low_to_high: u32,
    /// Days with the opposite orientation.
    pub days_high_to_low: u32,
    /// Total number of trades across the window.
    pub trades: u32,
    /// Total volume across the window.
    pub volume: Real,
}

/// Counts for one aggregate period of `tau` business days.
///
/// Only active banks (at least one trade-day inside the window) are listed;
/// `pairs` holds the sparse symmetric count matrix keyed by local indices
/// `(i, j)` with `i < j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowedCounts {
    pub index: usize,
    pub dates: Vec<NaiveDate>,
    pub banks: Vec<BankId>,
    pub pairs: BTreeMap<(u32, u32), PairCounts>,
    /// Whether orientation counts were collected.
    pub directed: bool,
}

impl WindowedCounts {
    pub fn n_banks(&self) -> usize {
        self.banks.len()
    }

    pub fn tau(&self) -> usize {
        self.dates.len()
    }

    /// `m_ij` for a local unordered pair.
    pub fn m(&self, i: u32, j: u32) -> u32 {
        let key = if i < j { (i, j) } else { (j, i) };
        self.pairs.get(&key).map_or(0, |p| p.days)
    }

    /// Directed trade-day count for the ordered pair `from -> to`.
    pub fn directed_m(&self, from: u32, to: u32) -> u32 {
        if from < to {
            self.pairs
                .get(&(from, to))
                .map_or(0, |p| p.days_low_to_high)
        } else {
            self.pairs
                .get(&(to, from))
                .map_or(0, |p| p.days_high_to_low)
        }
    }

    /// Unique-partner count of a bank (its aggregate degree).
    pub fn degree(&self, bank: u32) -> u32 {
        self.pairs
            .keys()
            .filter(|&&(i, j)| i == bank || j == bank)
            .count() as u32
    }

    /// Dense symmetric `m` matrix, row-major.
    pub fn dense_m(&self) -> Vec<u32> {
        let n = self.banks.len();
        let mut m = vec![0u32; n * n];
        for (&(i, j), counts) in &self.pairs {
            m[i as usize * n + j as usize] = counts.days;
            m[j as usize * n + i as usize] = counts.days;
        }
        m
    }

    /// Dense directed day-count matrix, row-major (`from * n + to`).
    pub fn dense_directed_m(&self) -> Vec<u32> {
        let n = self.banks.len();
        let mut m = vec![0u32; n * n];
        for (&(i, j), counts) in &self.pairs {
            m[i as usize * n + j as usize] = counts.days_low_to_high;
            m[j as usize * n + i as usize] = counts.days_high_to_low;
        }
        m
    }
}

/// Splits snapshots into windowed counts.
///
/// `fixed` mode yields `floor(days / tau)` disjoint windows and drops the
/// remainder; `rolling` mode yields `days - tau + 1` overlapping windows.
/// With `directed`, per-orientation day counts are recorded alongside the
/// undirected `m` so both views come out of one pass.
pub fn window_counts(
    network: &Network,
    tau: usize,
    mode: WindowMode,
    directed: bool,
) -> Result<Vec<WindowedCounts>> {
    if tau == 0 {
        return Err(Error::InvalidArgument("tau must be at least 1".into()));
    }
    let days = network.days.len();
    if tau > days {
        return Err(Error::WindowTooLong { tau, days });
    }
    let starts: Vec<usize> = match mode {
        WindowMode::Fixed => (0..days / tau).map(|w| w * tau).collect(),
        WindowMode::Rolling => (0..=days - tau).collect(),
    };

    let mut windows = Vec::with_capacity(starts.len());
    for (index, &start) in starts.iter().enumerate() {
        let slice = &network.days[start..start + tau];

        // Global-index aggregation first, then compaction to active banks.
        let mut agg: BTreeMap<(u32, u32), PairCounts> = BTreeMap::new();
        for snapshot in slice {
            for (&(i, j), edge) in &snapshot.edges {
                let entry = agg.entry((i, j)).or_default();
                entry.days += 1;
                entry.trades += edge.trades;
                entry.volume += edge.volume;
                if directed {
                    if edge.low_to_high {
                        entry.days_low_to_high += 1;
                    }
                    if edge.high_to_low {
                        entry.days_high_to_low += 1;
                    }
                }
            }
        }
        let mut active: BTreeSet<u32> = BTreeSet::new();
        for &(i, j) in agg.keys() {
            active.insert(i);
            active.insert(j);
        }
        let locals: HashMap<u32, u32> = active
            .iter()
            .enumerate()
            .map(|(local, &global)| (global, local as u32))
            .collect();
        let banks: Vec<BankId> = active
            .iter()
            .map(|&g| network.banks[g as usize].clone())
            .collect();
        let pairs = agg
            .into_iter()
            .map(|((i, j), counts)| ((locals[&i], locals[&j]), counts))
            .collect();

        windows.push(WindowedCounts {
            index,
            dates: slice.iter().map(|d| d.date).collect(),
            banks,
            pairs,
            directed,
        });
    }
    Ok(windows)
}

/// Two-letter country prefix of a bank id, uppercased.
///
/// Returns `None` for ids that do not start with two ASCII letters; callers
/// treat those as an explicit "unknown" group.
pub fn country_code(id: &BankId) -> Option<String> {
    let mut chars = id.as_str().chars();
    let a = chars.next()?;
    let b = chars.next()?;
    if a.is_ascii_alphabetic() && b.is_ascii_alphabetic() {
        Some(format!(
            "{}{}",
            a.to_ascii_uppercase(),
            b.to_ascii_uppercase()
        ))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const HEADER: &str = "date,time,lender,borrower,maturity,rate,amount\n";

    #[test]
    fn parses_and_filters_maturities() {
        let f = write_csv(&format!(
            "{HEADER}2000-09-04,09:12:40,IT0002,IT0005,ON,4.58,10\n\
             2000-09-04,10:00:00,IT0002,IT0005,1W,4.60,5\n\
             2000-09-04,11:00:00,IT0003,DE0007,ONL,4.55,150\n"
        ));
        let out = parse_transactions(f.path(), &ParseOptions::default()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.filtered, 1);
        assert!(out.rejects.is_empty());
        assert_eq!(out.records[0].lender, BankId::from("IT0002"));
        assert_eq!(out.records[1].maturity, "ONL");
    }

    #[test]
    fn rejects_malformed_rows_with_reasons() {
        let f = write_csv(&format!(
            "{HEADER}2000-09-04,09:12:40,IT0002,IT0002,ON,4.58,10\n\
             2000-09-04,09:12:40,IT0002,IT0005,ON,4.58,-3\n\
             2000-13-01,09:12:40,IT0002,IT0005,ON,4.58,10\n\
             2000-09-04,09:12:40,IT0002,IT0005,ON,4.58,10\n"
        ));
        let mut opts = ParseOptions::default();
        opts.allow_high_reject_rate = true;
        let out = parse_transactions(f.path(), &opts).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.rejects.len(), 3);
        assert!(out.rejects[0].reason.contains("self-loop"));
        assert!(out.rejects[1].reason.contains("amount"));
        assert!(out.rejects[2].reason.contains("date"));
        assert_eq!(out.rejects[0].line, 2);
    }

    #[test]
    fn reject_rate_guard_trips() {
        let f = write_csv(&format!(
            "{HEADER}2000-09-04,09:12:40,IT0002,IT0002,ON,4.58,10\n\
             2000-09-04,09:12:40,IT0002,IT0005,ON,4.58,10\n"
        ));
        let err = parse_transactions(f.path(), &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::RejectRate { rejected: 1, .. }));
    }

    #[test]
    fn empty_input_is_an_error() {
        let f = write_csv(&format!("{HEADER}2000-09-04,09:12:40,IT0002,IT0005,1W,4.58,10\n"));
        let err = parse_transactions(f.path(), &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyInput));
    }

    fn record(date: &str, time: &str, lender: &str, borrower: &str, amount: Real) -> TransactionRecord {
        TransactionRecord {
            date: date.parse().unwrap(),
            time: NaiveTime::parse_from_str(time, "%H:%M:%S").unwrap(),
            lender: BankId::from(lender),
            borrower: BankId::from(borrower),
            maturity: "ON".into(),
            rate: 4.5,
            amount,
        }
    }

    #[test]
    fn same_day_trades_collapse_to_one_edge() {
        let records = vec![
            record("2001-01-02", "09:10:00", "AA", "BB", 100.0),
            record("2001-01-02", "11:00:00", "BB", "AA", 50.0),
            record("2001-01-02", "15:30:00", "AA", "BB", 25.0),
        ];
        let net = build_daily_snapshots(&records, TradingHours::default());
        assert_eq!(net.days.len(), 1);
        let edge = net.days[0].edges.get(&(0, 1)).unwrap();
        assert_eq!(edge.trades, 3);
        assert!((edge.volume - 175.0).abs() < 1e-12);
        assert!(edge.low_to_high && edge.high_to_low);
    }

    #[test]
    fn out_of_hours_trades_are_dropped() {
        let records = vec![
            record("2001-01-02", "08:30:00", "AA", "BB", 100.0),
            record("2001-01-02", "09:00:00", "AA", "BB", 10.0),
            record("2001-01-02", "18:00:00", "AA", "CC", 10.0),
            record("2001-01-02", "18:00:01", "AA", "DD", 10.0),
        ];
        let net = build_daily_snapshots(&records, TradingHours::default());
        assert_eq!(net.days[0].edges.len(), 2);
        assert_eq!(net.days[0].edges.get(&(0, 1)).unwrap().trades, 1);
    }

    fn ladder_network(days: usize) -> Network {
        // AA-BB trade every day, AA-CC every other day.
        let mut records = Vec::new();
        for d in 0..days {
            let date = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap() + chrono::Days::new(d as u64);
            let ds = date.format("%Y-%m-%d").to_string();
            records.push(record(&ds, "10:00:00", "AA", "BB", 10.0));
            if d % 2 == 0 {
                records.push(record(&ds, "12:00:00", "CC", "AA", 5.0));
            }
        }
        build_daily_snapshots(&records, TradingHours::default())
    }

    #[test]
    fn fixed_windows_drop_remainder() {
        let net = ladder_network(23);
        let windows = window_counts(&net, 10, WindowMode::Fixed, false).unwrap();
        assert_eq!(windows.len(), 2);
        assert_eq!(windows[0].m(0, 1), 10);
        assert_eq!(windows[0].m(0, 2), 5);
        assert_eq!(windows[0].tau(), 10);
    }

    #[test]
    fn rolling_window_count() {
        let net = ladder_network(20);
        let windows = window_counts(&net, 10, WindowMode::Rolling, false).unwrap();
        assert_eq!(windows.len(), 11);
        // adjacent rolling windows share tau - 1 dates
        for pair in windows.windows(2) {
            let shared = pair[0]
                .dates
                .iter()
                .filter(|d| pair[1].dates.contains(d))
                .count();
            assert_eq!(shared, 9);
        }
    }

    #[test]
    fn window_longer_than_data_errors() {
        let net = ladder_network(5);
        let err = window_counts(&net, 10, WindowMode::Fixed, false).unwrap_err();
        assert!(matches!(err, Error::WindowTooLong { tau: 10, days: 5 }));
    }

    #[test]
    fn single_day_windows_equal_daily_adjacency() {
        let net = ladder_network(4);
        let windows = window_counts(&net, 1, WindowMode::Fixed, false).unwrap();
        assert_eq!(windows.len(), 4);
        for w in &windows {
            for counts in w.pairs.values() {
                assert_eq!(counts.days, 1);
            }
        }
        assert_eq!(windows[1].n_banks(), 2); // CC idle on odd days
    }

    #[test]
    fn directed_counts_cover_undirected() {
        let records = vec![
            record("2001-01-01", "10:00:00", "AA", "BB", 10.0),
            record("2001-01-02", "10:00:00", "BB", "AA", 10.0),
            record("2001-01-02", "11:00:00", "AA", "BB", 10.0),
        ];
        let net = build_daily_snapshots(&records, TradingHours::default());
        let windows = window_counts(&net, 2, WindowMode::Fixed, true).unwrap();
        let w = &windows[0];
        assert_eq!(w.m(0, 1), 2);
        assert_eq!(w.directed_m(0, 1), 2);
        assert_eq!(w.directed_m(1, 0), 1);
        assert!(w.directed_m(0, 1) + w.directed_m(1, 0) >= w.m(0, 1));
    }

    #[test]
    fn country_codes() {
        assert_eq!(country_code(&BankId::from("IT0002")).unwrap(), "IT");
        assert_eq!(country_code(&BankId::from("de0007")).unwrap(), "DE");
        assert_eq!(country_code(&BankId::from("0X42")), None);
        assert_eq!(country_code(&BankId::from("A")), None);
    }
}
