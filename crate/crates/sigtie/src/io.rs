//! Serialized artifact layouts shared by the library and the CLI.
//!
//! JSON artifacts use index-based edge entries with the bank list as the
//! legend; activity estimates serialize as bank-to-activity maps. All maps
//! are ordered, so serialization is byte-deterministic for equal inputs.
//!
//! Layouts:
//! - snapshots: `{ banks, days: [{ date, edges: [{i, j, trades, volume,
//!   rate_volume, low_to_high, high_to_low}] }] }`
//! - windows: `{ tau, mode, directed, windows: [{ index, dates, banks,
//!   pairs: [{i, j, days, days_low_to_high, days_high_to_low, trades,
//!   volume}] }] }`
//! - estimates: `{ variant, estimates: [{ window, activity maps,
//!   residual_norm, iterations, converged, clipped }] }`

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitness::{ActivityEstimate, ActivityValues, ClippedPair, Variant};
use crate::ingest::{
    DailySnapshot, DayEdge, Network, PairCounts, WindowMode, WindowedCounts,
};
use crate::sigtest::{Correction, Direction, NodeTestResult, TestFlag, TieTestResult};
use crate::{BankId, Real};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut writer = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)?;
    use std::io::Write;
    writer.write_all(b"\n").map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(Error::Csv)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(Error::Csv)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// snapshots

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeEntry {
    pub i: u32,
    pub j: u32,
    pub trades: u32,
    pub volume: Real,
    pub rate_volume: Real,
    pub low_to_high: bool,
    pub high_to_low: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DayDto {
    pub date: chrono::NaiveDate,
    pub edges: Vec<EdgeEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDto {
    pub banks: Vec<BankId>,
    pub days: Vec<DayDto>,
}

impl From<&Network> for NetworkDto {
    fn from(network: &Network) -> Self {
        NetworkDto {
            banks: network.banks.clone(),
            days: network
                .days
                .iter()
                .map(|day| DayDto {
                    date: day.date,
                    edges: day
                        .edges
                        .iter()
                        .map(|(&(i, j), e)| EdgeEntry {
                            i,
                            j,
                            trades: e.trades,
                            volume: e.volume,
                            rate_volume: e.rate_volume,
                            low_to_high: e.low_to_high,
                            high_to_low: e.high_to_low,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl From<NetworkDto> for Network {
    fn from(dto: NetworkDto) -> Self {
        Network {
            banks: dto.banks,
            days: dto
                .days
                .into_iter()
                .map(|day| DailySnapshot {
                    date: day.date,
                    edges: day
                        .edges
                        .into_iter()
                        .map(|e| {
                            (
                                (e.i, e.j),
                                DayEdge {
                                    trades: e.trades,
                                    volume: e.volume,
                                    rate_volume: e.rate_volume,
                                    low_to_high: e.low_to_high,
                                    high_to_low: e.high_to_low,
                                },
                            )
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// windows

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairEntry {
    pub i: u32,
    pub j: u32,
    pub days: u32,
    pub days_low_to_high: u32,
    pub days_high_to_low: u32,
    pub trades: u32,
    pub volume: Real,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowDto {
    pub index: usize,
    pub dates: Vec<chrono::NaiveDate>,
    pub banks: Vec<BankId>,
    pub pairs: Vec<PairEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowsDto {
    pub tau: usize,
    pub mode: WindowMode,
    pub directed: bool,
    pub windows: Vec<WindowDto>,
}

impl WindowsDto {
    pub fn new(tau: usize, mode: WindowMode, directed: bool, windows: &[WindowedCounts]) -> Self {
        WindowsDto {
            tau,
            mode,
            directed,
            windows: windows
                .iter()
                .map(|w| WindowDto {
                    index: w.index,
                    dates: w.dates.clone(),
                    banks: w.banks.clone(),
                    pairs: w
                        .pairs
                        .iter()
                        .map(|(&(i, j), c)| PairEntry {
                            i,
                            j,
                            days: c.days,
                            days_low_to_high: c.days_low_to_high,
                            days_high_to_low: c.days_high_to_low,
                            trades: c.trades,
                            volume: c.volume,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn into_windows(self) -> Vec<WindowedCounts> {
        let directed = self.directed;
        self.windows
            .into_iter()
            .map(|w| WindowedCounts {
                index: w.index,
                dates: w.dates,
                banks: w.banks,
                pairs: w
                    .pairs
                    .into_iter()
                    .map(|p| {
                        (
                            (p.i, p.j),
                            PairCounts {
                                days: p.days,
                                days_low_to_high: p.days_low_to_high,
                                days_high_to_low: p.days_high_to_low,
                                trades: p.trades,
                                volume: p.volume,
                            },
                        )
                    })
                    .collect(),
                directed,
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// estimates

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClippedPairDto {
    pub i: BankId,
    pub j: BankId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub day: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateDto {
    pub window: usize,
    pub variant: Variant,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub activity: Option<BTreeMap<BankId, Real>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub activity_out: Option<BTreeMap<BankId, Real>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub activity_in: Option<BTreeMap<BankId, Real>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub daily_activity: Option<Vec<BTreeMap<BankId, Real>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub daily_activity_out: Option<Vec<BTreeMap<BankId, Real>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub daily_activity_in: Option<Vec<BTreeMap<BankId, Real>>>,
    pub residual_norm: Real,
    pub iterations: usize,
    pub converged: bool,
    pub clipped_pairs: Vec<ClippedPairDto>,
    /// Bank order used for index-based consumers.
    pub banks: Vec<BankId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatesDto {
    pub variant: Variant,
    pub estimates: Vec<EstimateDto>,
}

fn bank_map(banks: &[BankId], values: &[Real]) -> BTreeMap<BankId, Real> {
    banks.iter().cloned().zip(values.iter().copied()).collect()
}

impl From<&ActivityEstimate> for EstimateDto {
    fn from(est: &ActivityEstimate) -> Self {
        let mut dto = EstimateDto {
            window: est.window_index,
            variant: est.variant,
            activity: None,
            activity_out: None,
            activity_in: None,
            daily_activity: None,
            daily_activity_out: None,
            daily_activity_in: None,
            residual_norm: est.residual_norm,
            iterations: est.iterations,
            converged: est.converged,
            clipped_pairs: est
                .clipped_pairs
                .iter()
                .map(|c| ClippedPairDto {
                    i: est.banks[c.i as usize].clone(),
                    j: est.banks[c.j as usize].clone(),
                    day: c.day,
                })
                .collect(),
            banks: est.banks.clone(),
        };
        match &est.values {
            ActivityValues::UndirectedConstant(a) => {
                dto.activity = Some(bank_map(&est.banks, a));
            }
            ActivityValues::DirectedConstant { out, inn } => {
                dto.activity_out = Some(bank_map(&est.banks, out));
                dto.activity_in = Some(bank_map(&est.banks, inn));
            }
            ActivityValues::UndirectedDaily(days) => {
                dto.daily_activity =
                    Some(days.iter().map(|a| bank_map(&est.banks, a)).collect());
            }
            ActivityValues::DirectedDaily { out, inn } => {
                dto.daily_activity_out =
                    Some(out.iter().map(|a| bank_map(&est.banks, a)).collect());
                dto.daily_activity_in =
                    Some(inn.iter().map(|a| bank_map(&est.banks, a)).collect());
            }
        }
        dto
    }
}

impl EstimateDto {
    pub fn into_estimate(self) -> Result<ActivityEstimate> {
        let banks = self.banks;
        let unmap = |map: BTreeMap<BankId, Real>| -> Result<Vec<Real>> {
            banks
                .iter()
                .map(|b| map.get(b).copied().ok_or(Error::BankSetMismatch))
                .collect()
        };
        let unmap_days = |days: Vec<BTreeMap<BankId, Real>>| -> Result<Vec<Vec<Real>>> {
            days.into_iter()
                .map(|m| {
                    banks
                        .iter()
                        .map(|b| m.get(b).copied().ok_or(Error::BankSetMismatch))
                        .collect()
                })
                .collect()
        };
        let values = match self.variant {
            Variant::UndirectedConstant => ActivityValues::UndirectedConstant(unmap(
                self.activity.ok_or(Error::BankSetMismatch)?,
            )?),
            Variant::DirectedConstant => ActivityValues::DirectedConstant {
                out: unmap(self.activity_out.ok_or(Error::BankSetMismatch)?)?,
                inn: unmap(self.activity_in.ok_or(Error::BankSetMismatch)?)?,
            },
            Variant::UndirectedDaily => ActivityValues::UndirectedDaily(unmap_days(
                self.daily_activity.ok_or(Error::BankSetMismatch)?,
            )?),
            Variant::DirectedDaily => ActivityValues::DirectedDaily {
                out: unmap_days(self.daily_activity_out.ok_or(Error::BankSetMismatch)?)?,
                inn: unmap_days(self.daily_activity_in.ok_or(Error::BankSetMismatch)?)?,
            },
        };
        let index: BTreeMap<&BankId, u32> = banks
            .iter()
            .enumerate()
            .map(|(i, b)| (b, i as u32))
            .collect();
        let clipped = self
            .clipped_pairs
            .iter()
            .map(|c| {
                Ok(ClippedPair {
                    i: *index.get(&c.i).ok_or(Error::BankSetMismatch)?,
                    j: *index.get(&c.j).ok_or(Error::BankSetMismatch)?,
                    day: c.day,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ActivityEstimate::from_parts(
            self.window,
            self.variant,
            banks,
            values,
            self.residual_norm,
            self.iterations,
            self.converged,
            clipped,
        ))
    }
}

// ---------------------------------------------------------------------------
// test results as CSV rows

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TieRow {
    pub window: usize,
    pub variant: Variant,
    pub correction: Correction,
    pub bank_a: BankId,
    pub bank_b: BankId,
    pub m: u32,
    pub p_value: Real,
    pub threshold: u32,
    pub significant: bool,
    pub flag: TestFlag,
    pub lecam_bound: Option<Real>,
}

impl TieRow {
    pub fn from_result(window: &WindowedCounts, tie: &TieTestResult) -> Self {
        TieRow {
            window: window.index,
            variant: tie.variant,
            correction: tie.correction,
            bank_a: window.banks[tie.pair.0 as usize].clone(),
            bank_b: window.banks[tie.pair.1 as usize].clone(),
            m: tie.m,
            p_value: tie.p_value,
            threshold: tie.threshold,
            significant: tie.significant,
            flag: tie.flag,
            lecam_bound: tie.lecam_bound,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRow {
    pub window: usize,
    pub variant: Variant,
    pub direction: Direction,
    pub bank: BankId,
    pub degree: u32,
    pub lambda: Real,
    pub p_value: Real,
    pub threshold: u32,
    pub dependent: bool,
    pub lecam_bound: Real,
    pub flag: TestFlag,
}

impl NodeRow {
    pub fn from_result(window: &WindowedCounts, node: &NodeTestResult, variant: Variant) -> Self {
        NodeRow {
            window: window.index,
            variant,
            direction: node.direction,
            bank: window.banks[node.bank as usize].clone(),
            degree: node.degree,
            lambda: node.lambda,
            p_value: node.p_value,
            threshold: node.threshold,
            dependent: node.dependent,
            lecam_bound: node.lecam_bound,
            flag: node.flag,
        }
    }
}

// ---------------------------------------------------------------------------
// analysis rows

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpellRow {
    pub bank_a: BankId,
    pub bank_b: BankId,
    pub kind: crate::analysis::TieKind,
    pub start_window: usize,
    pub length: usize,
    pub censored: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CensusRow {
    pub window: usize,
    pub total: i64,
    pub t0: i64,
    pub t1: i64,
    pub t2: i64,
    pub t3: i64,
    pub p_nonsig: Option<Real>,
    pub s_nonsig: Option<Real>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JaccardRow {
    pub window: usize,
    pub measure: String,
    pub jaccard: Real,
    pub n_significant: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateDiffRow {
    pub window: usize,
    pub n_significant: usize,
    pub n_other: usize,
    pub rate_difference: Real,
    pub rate_ci_low: Option<Real>,
    pub rate_ci_high: Option<Real>,
    pub size_difference: Real,
    pub size_ci_low: Option<Real>,
    pub size_ci_high: Option<Real>,
    pub skipped_days: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthDto {
    pub planted_pairs: Vec<(BankId, BankId)>,
    pub n_core: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitness::{estimate_undirected, EstimateOptions};
    use crate::synth::{generate, SyntheticConfig};
    use crate::ingest::window_counts;

    fn sample_network() -> Network {
        generate(&SyntheticConfig {
            n_banks: 12,
            burn_in_days: 3,
            window_days: 5,
            seed: 5,
            ..SyntheticConfig::default()
        })
        .unwrap()
        .network
    }

    #[test]
    fn network_round_trips_through_json() {
        let net = sample_network();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snapshots.json");
        write_json(&path, &NetworkDto::from(&net)).unwrap();
        let back: Network = read_json::<NetworkDto>(&path).unwrap().into();
        assert_eq!(net, back);
    }

    #[test]
    fn windows_round_trip_through_json() {
        let net = sample_network();
        let windows = window_counts(&net, 5, WindowMode::Fixed, true).unwrap();
        let dto = WindowsDto::new(5, WindowMode::Fixed, true, &windows);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("windows.json");
        write_json(&path, &dto).unwrap();
        let back = read_json::<WindowsDto>(&path).unwrap().into_windows();
        assert_eq!(windows.len(), back.len());
        for (a, b) in windows.iter().zip(&back) {
            assert_eq!(a.banks, b.banks);
            assert_eq!(a.pairs, b.pairs);
            assert_eq!(a.dates, b.dates);
        }
    }

    #[test]
    fn estimates_round_trip_preserving_probabilities() {
        let net = sample_network();
        let windows = window_counts(&net, 5, WindowMode::Fixed, false).unwrap();
        let est = estimate_undirected(&windows[0], &EstimateOptions::default()).unwrap();
        let dto = EstimateDto::from(&est);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("estimates.json");
        write_json(&path, &EstimatesDto {
            variant: est.variant,
            estimates: vec![dto],
        })
        .unwrap();
        let back = read_json::<EstimatesDto>(&path)
            .unwrap()
            .estimates
            .remove(0)
            .into_estimate()
            .unwrap();
        let n = est.n_banks() as u32;
        for i in 0..n {
            for j in (i + 1)..n {
                assert!((est.pair_prob(i, j) - back.pair_prob(i, j)).abs() < 1e-15);
            }
        }
        assert_eq!(est.converged, back.converged);
        assert_eq!(est.clipped_pairs, back.clipped_pairs);
    }

    #[test]
    fn csv_rows_round_trip() {
        let rows = vec![
            TieRow {
                window: 0,
                variant: Variant::UndirectedConstant,
                correction: Correction::None,
                bank_a: BankId::from("A"),
                bank_b: BankId::from("B"),
                m: 5,
                p_value: 0.01,
                threshold: 4,
                significant: true,
                flag: TestFlag::Ok,
                lecam_bound: None,
            },
            TieRow {
                window: 1,
                variant: Variant::UndirectedDaily,
                correction: Correction::Bonferroni,
                bank_a: BankId::from("A"),
                bank_b: BankId::from("C"),
                m: 2,
                p_value: 0.5,
                threshold: 3,
                significant: false,
                flag: TestFlag::Ok,
                lecam_bound: Some(0.02),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ties.csv");
        write_csv(&path, &rows).unwrap();
        let back: Vec<TieRow> = read_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].bank_a, rows[0].bank_a);
        assert_eq!(back[1].lecam_bound, rows[1].lecam_bound);
        assert_eq!(back[1].correction, Correction::Bonferroni);
    }
}
