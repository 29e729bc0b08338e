//! Post-hoc analytics over classified windows.

pub mod duration;
pub mod measures;
pub mod nationality;
pub mod rates;
pub mod triangles;

pub use duration::{duration_spells, powerlaw_exponent, scan_d_min, DurationSpell, PowerLawFit, TieKind};
pub use measures::{jaccard_vs_truth, lpi_scores, rl_scores, MeasureScore};
pub use nationality::{nationality_groups, NationalityBreakdown, NationalityShares};
pub use rates::{detrended_rates, GroupDifference, PairRateStats, RateAnalysis};
pub use triangles::{triangle_census, TriangleCensus};
