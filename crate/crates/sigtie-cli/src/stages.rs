//! Pipeline stages. Each stage reads and writes files in the artifact
//! directory, file-based handoff only, and records a manifest so reruns are
//! reproducible byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};
use serde::Serialize;

use sigtie::analysis::{
    detrended_rates, duration_spells, jaccard_vs_truth, lpi_scores, nationality_groups,
    powerlaw_exponent, rl_scores, scan_d_min, triangle_census, TieKind,
};
use sigtie::analysis::duration::ClassifiedWindow;
use sigtie::fitness::{estimate as fit_estimate, EstimateOptions, Variant};
use sigtie::ingest::{
    build_daily_snapshots, parse_transactions, window_counts, Network, ParseOptions,
    TradingHours, WindowMode, WindowedCounts,
};
use sigtie::io::{
    read_csv, read_json, write_csv, write_json, CensusRow, EstimateDto, EstimatesDto,
    JaccardRow, NetworkDto, NodeRow, RateDiffRow, SpellRow, TieRow, TruthDto, WindowsDto,
};
use sigtie::sigtest::{classify_window, edge_test, node_test, Correction, Direction};
use sigtie::synth::{generate, power_experiment, SyntheticConfig};
use sigtie::{BankId, Real};

use crate::manifest::Manifest;

/// Estimates failed to converge and strict mode is on.
#[derive(Debug)]
pub struct NonConverged(pub Vec<usize>);

impl std::fmt::Display for NonConverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "estimation did not converge in windows {:?}", self.0)
    }
}

impl std::error::Error for NonConverged {}

/// Shared invocation context: artifact directory, strictness, and the
/// optional TOML config file (flags take precedence over it).
pub struct Ctx {
    pub dir: PathBuf,
    pub strict: bool,
    pub file: toml::Table,
}

impl Ctx {
    pub fn lookup_f64(&self, key: &str) -> Option<f64> {
        match self.file.get(key) {
            Some(toml::Value::Float(v)) => Some(*v),
            Some(toml::Value::Integer(v)) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn lookup_usize(&self, key: &str) -> Option<usize> {
        match self.file.get(key) {
            Some(toml::Value::Integer(v)) if *v >= 0 => Some(*v as usize),
            _ => None,
        }
    }

    pub fn lookup_u64(&self, key: &str) -> Option<u64> {
        match self.file.get(key) {
            Some(toml::Value::Integer(v)) if *v >= 0 => Some(*v as u64),
            _ => None,
        }
    }

    pub fn lookup_bool(&self, key: &str) -> Option<bool> {
        match self.file.get(key) {
            Some(toml::Value::Boolean(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn lookup_str(&self, key: &str) -> Option<String> {
        match self.file.get(key) {
            Some(toml::Value::String(v)) => Some(v.clone()),
            _ => None,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

fn correction_tag(variant: Variant, correction: Correction) -> String {
    match correction {
        Correction::None => variant.name().to_string(),
        Correction::Bonferroni => format!("{}-bonferroni", variant.name()),
    }
}

fn load_windows(ctx: &Ctx, manifest: &mut Manifest) -> anyhow::Result<WindowsDto> {
    let path = ctx.path("windows.json");
    manifest.record_input(&path)?;
    read_json::<WindowsDto>(&path).context("reading windows.json")
}

fn load_network(ctx: &Ctx, manifest: &mut Manifest) -> anyhow::Result<Network> {
    let path = ctx.path("snapshots.json");
    manifest.record_input(&path)?;
    Ok(read_json::<NetworkDto>(&path)
        .context("reading snapshots.json")?
        .into())
}

fn load_ties(
    ctx: &Ctx,
    manifest: &mut Manifest,
    variant: Variant,
    correction: Correction,
) -> anyhow::Result<Vec<TieRow>> {
    let path = ctx.path(&format!("ties-{}.csv", correction_tag(variant, correction)));
    manifest.record_input(&path)?;
    read_csv::<TieRow>(&path).with_context(|| format!("reading {}", path.display()))
}

/// Significant unordered pairs of one window, in window-local indices.
fn significant_pairs(
    window: &WindowedCounts,
    ties: &[TieRow],
) -> anyhow::Result<BTreeSet<(u32, u32)>> {
    let local: BTreeMap<&BankId, u32> = window
        .banks
        .iter()
        .enumerate()
        .map(|(i, b)| (b, i as u32))
        .collect();
    let mut out = BTreeSet::new();
    for row in ties.iter().filter(|r| r.window == window.index && r.significant) {
        let (Some(&a), Some(&b)) = (local.get(&row.bank_a), local.get(&row.bank_b)) else {
            bail!("tie row references unknown bank {} or {}", row.bank_a, row.bank_b);
        };
        out.insert(if a < b { (a, b) } else { (b, a) });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// ingest

#[derive(Debug, Clone, clap::Args)]
pub struct IngestArgs {
    /// Transaction CSV (date,time,lender,borrower,maturity,rate,amount).
    #[arg(long)]
    pub input: PathBuf,
    /// Window length in business days.
    #[arg(long)]
    pub tau: Option<usize>,
    /// Window layout.
    #[arg(long, value_parser = parse_mode)]
    pub window: Option<WindowMode>,
    /// Collect per-orientation day counts as well.
    #[arg(long)]
    pub directed: bool,
    /// Comma-separated maturity whitelist.
    #[arg(long)]
    pub maturities: Option<String>,
    /// Start of trading hours (HH:MM:SS, inclusive).
    #[arg(long)]
    pub open: Option<String>,
    /// End of trading hours (HH:MM:SS, inclusive).
    #[arg(long)]
    pub close: Option<String>,
    /// Continue even when more than 1% of the rows are malformed.
    #[arg(long)]
    pub allow_high_reject_rate: bool,
}

fn parse_mode(s: &str) -> Result<WindowMode, String> {
    match s {
        "fixed" => Ok(WindowMode::Fixed),
        "rolling" => Ok(WindowMode::Rolling),
        other => Err(format!("unknown window mode {other:?} (fixed|rolling)")),
    }
}

#[derive(Serialize)]
struct IngestConfig {
    input: String,
    tau: usize,
    window: WindowMode,
    directed: bool,
    maturities: Vec<String>,
    open: String,
    close: String,
    allow_high_reject_rate: bool,
}

pub fn run_ingest(ctx: &Ctx, args: &IngestArgs) -> anyhow::Result<()> {
    let tau = args.tau.or(ctx.lookup_usize("tau")).unwrap_or(10);
    let mode = args
        .window
        .or(ctx
            .lookup_str("window")
            .map(|s| parse_mode(&s))
            .transpose()
            .map_err(|e| anyhow::anyhow!(e))?)
        .unwrap_or(WindowMode::Fixed);
    let directed = args.directed || ctx.lookup_bool("directed").unwrap_or(false);
    let maturities: Vec<String> = args
        .maturities
        .clone()
        .or(ctx.lookup_str("maturities"))
        .map(|s| s.split(',').map(|m| m.trim().to_string()).collect())
        .unwrap_or_else(|| vec!["ON".into(), "ONL".into()]);
    let parse_time = |s: &str| {
        chrono::NaiveTime::parse_from_str(s, "%H:%M:%S")
            .with_context(|| format!("bad time of day {s:?}"))
    };
    let open = args.open.clone().or(ctx.lookup_str("open"));
    let close = args.close.clone().or(ctx.lookup_str("close"));
    let mut hours = TradingHours::default();
    if let Some(s) = &open {
        hours.open = parse_time(s)?;
    }
    if let Some(s) = &close {
        hours.close = parse_time(s)?;
    }
    let allow = args.allow_high_reject_rate || ctx.lookup_bool("allow_high_reject_rate").unwrap_or(false);

    let config = IngestConfig {
        input: args.input.display().to_string(),
        tau,
        window: mode,
        directed,
        maturities: maturities.clone(),
        open: hours.open.format("%H:%M:%S").to_string(),
        close: hours.close.format("%H:%M:%S").to_string(),
        allow_high_reject_rate: allow,
    };
    let mut manifest = Manifest::new("ingest", &config)?;
    manifest.record_input(&args.input)?;

    let options = ParseOptions {
        maturities: maturities.into_iter().collect(),
        allow_high_reject_rate: allow,
        ..ParseOptions::default()
    };
    let outcome = parse_transactions(&args.input, &options)?;
    let network = build_daily_snapshots(&outcome.records, hours);
    let windows = window_counts(&network, tau, mode, directed)?;
    if mode == WindowMode::Fixed {
        let dropped = network.days.len() % tau;
        if dropped > 0 {
            eprintln!("note: {dropped} trailing days do not fill a window and were dropped");
        }
    }

    let snapshots_path = ctx.path("snapshots.json");
    write_json(&snapshots_path, &NetworkDto::from(&network))?;
    manifest.record_output(&snapshots_path);
    let windows_path = ctx.path("windows.json");
    write_json(&windows_path, &WindowsDto::new(tau, mode, directed, &windows))?;
    manifest.record_output(&windows_path);
    let rejects_path = ctx.path("rejects.csv");
    write_csv(&rejects_path, &outcome.rejects)?;
    manifest.record_output(&rejects_path);
    manifest.write(&ctx.dir)?;

    println!(
        "ingest: {} records ({} rejected, {} filtered), {} days, {} banks, {} windows",
        outcome.records.len(),
        outcome.rejects.len(),
        outcome.filtered,
        network.days.len(),
        network.banks.len(),
        windows.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// estimate

#[derive(Debug, Clone, clap::Args)]
pub struct EstimateArgs {
    /// Null-model variant: undirected, directed, undirected-daily, directed-daily.
    #[arg(long)]
    pub variant: Option<String>,
    /// Convergence tolerance on the FOC residual.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Serialize)]
struct EstimateConfig {
    variant: Variant,
    tol: f64,
    max_iter: usize,
}

pub fn resolve_variant(ctx: &Ctx, flag: &Option<String>) -> anyhow::Result<Variant> {
    let name = flag
        .clone()
        .or(ctx.lookup_str("variant"))
        .unwrap_or_else(|| "undirected".to_string());
    Ok(Variant::from_str(&name)?)
}

pub fn run_estimate(ctx: &Ctx, args: &EstimateArgs) -> anyhow::Result<()> {
    let variant = resolve_variant(ctx, &args.variant)?;
    let options = EstimateOptions {
        tol: args.tol.or(ctx.lookup_f64("tol")).unwrap_or(1e-10),
        max_iter: args.max_iter.or(ctx.lookup_usize("max_iter")).unwrap_or(200),
    };
    let config = EstimateConfig {
        variant,
        tol: options.tol,
        max_iter: options.max_iter,
    };
    let mut manifest = Manifest::new("estimate", &config)?;

    let windows_dto = load_windows(ctx, &mut manifest)?;
    let network: Network = if variant.daily() {
        load_network(ctx, &mut manifest)?
    } else {
        Network {
            banks: vec![],
            days: vec![],
        }
    };
    let windows = windows_dto.into_windows();

    use rayon::prelude::*;
    let estimates: Result<Vec<_>, _> = windows
        .par_iter()
        .map(|w| fit_estimate(&network, w, variant, &options))
        .collect();
    let estimates = estimates?;

    let failed: Vec<usize> = estimates
        .iter()
        .filter(|e| !e.converged)
        .map(|e| e.window_index)
        .collect();
    let path = ctx.path(&format!("estimates-{}.json", variant.name()));
    write_json(
        &path,
        &EstimatesDto {
            variant,
            estimates: estimates.iter().map(EstimateDto::from).collect(),
        },
    )?;
    manifest.record_output(&path);
    manifest.write(&ctx.dir)?;

    println!(
        "estimate: {} windows fitted ({} variant), {} non-converged",
        estimates.len(),
        variant.name(),
        failed.len()
    );
    if !failed.is_empty() {
        eprintln!("warning: non-converged windows: {failed:?}");
        if ctx.strict {
            return Err(NonConverged(failed).into());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// test

#[derive(Debug, Clone, clap::Args)]
pub struct TestArgs {
    #[arg(long)]
    pub variant: Option<String>,
    /// Edge-test percentile c; significance level is 1 - c/100.
    #[arg(long)]
    pub level: Option<f64>,
    /// Node-test percentile c'.
    #[arg(long)]
    pub node_level: Option<f64>,
    /// Apply the Bonferroni correction within each window.
    #[arg(long)]
    pub bonferroni: bool,
}

#[derive(Serialize)]
struct TestConfig {
    variant: Variant,
    level: f64,
    node_level: f64,
    correction: Correction,
}

pub fn run_test(ctx: &Ctx, args: &TestArgs) -> anyhow::Result<()> {
    let variant = resolve_variant(ctx, &args.variant)?;
    let level = args.level.or(ctx.lookup_f64("level")).unwrap_or(99.0);
    let node_level = args
        .node_level
        .or(ctx.lookup_f64("node_level"))
        .unwrap_or(1.0);
    let correction = if args.bonferroni || ctx.lookup_bool("bonferroni").unwrap_or(false) {
        Correction::Bonferroni
    } else {
        Correction::None
    };
    let config = TestConfig {
        variant,
        level,
        node_level,
        correction,
    };
    let mut manifest = Manifest::new("test", &config)?;

    let windows = load_windows(ctx, &mut manifest)?.into_windows();
    let estimates_path = ctx.path(&format!("estimates-{}.json", variant.name()));
    manifest.record_input(&estimates_path)?;
    let estimates_dto: EstimatesDto = read_json(&estimates_path)
        .with_context(|| format!("reading {}", estimates_path.display()))?;
    if estimates_dto.variant != variant {
        bail!(
            "estimates file holds variant {}, requested {}",
            estimates_dto.variant.name(),
            variant.name()
        );
    }
    let estimates: Result<Vec<_>, _> = estimates_dto
        .estimates
        .into_iter()
        .map(|dto| dto.into_estimate())
        .collect();
    let estimates = estimates?;
    if estimates.len() != windows.len() {
        bail!(
            "{} windows but {} estimates; rerun the estimate stage",
            windows.len(),
            estimates.len()
        );
    }

    let effective_node_level = |w: &WindowedCounts| match correction {
        Correction::None => node_level,
        Correction::Bonferroni => node_level / w.n_banks().max(1) as f64,
    };

    use rayon::prelude::*;
    let per_window: Result<Vec<_>, anyhow::Error> = windows
        .par_iter()
        .zip(&estimates)
        .map(|(w, est)| {
            let ties = edge_test(w, est, level, correction)?;
            let directions: &[Direction] = if variant.directed() {
                &[Direction::Borrowing, Direction::Lending]
            } else {
                &[Direction::Undirected]
            };
            let mut nodes = Vec::new();
            for &dir in directions {
                nodes.extend(node_test(w, est, effective_node_level(w), dir)?);
            }
            let classification = classify_window(w, est, level, node_level, correction)?;
            let tie_rows: Vec<TieRow> =
                ties.iter().map(|t| TieRow::from_result(w, t)).collect();
            let node_rows: Vec<NodeRow> = nodes
                .iter()
                .map(|n| NodeRow::from_result(w, n, variant))
                .collect();
            Ok((tie_rows, node_rows, classification))
        })
        .collect();
    let per_window = per_window?;

    let tag = correction_tag(variant, correction);
    let mut tie_rows = Vec::new();
    let mut node_rows = Vec::new();
    let mut classifications = Vec::new();
    for (t, n, c) in per_window {
        tie_rows.extend(t);
        node_rows.extend(n);
        classifications.push(c);
    }
    let ties_path = ctx.path(&format!("ties-{tag}.csv"));
    write_csv(&ties_path, &tie_rows)?;
    manifest.record_output(&ties_path);
    let nodes_path = ctx.path(&format!("nodes-{tag}.csv"));
    write_csv(&nodes_path, &node_rows)?;
    manifest.record_output(&nodes_path);
    let class_path = ctx.path(&format!("classification-{tag}.csv"));
    write_csv(&class_path, &classifications)?;
    manifest.record_output(&class_path);
    manifest.write(&ctx.dir)?;

    let n_sig: usize = tie_rows.iter().filter(|t| t.significant).count();
    println!(
        "test: {} ties tested, {} significant; {} node verdicts ({tag})",
        tie_rows.len(),
        n_sig,
        node_rows.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// report

pub fn run_report(ctx: &Ctx) -> anyhow::Result<()> {
    let mut manifest = Manifest::new("report", &serde_json::json!({}))?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(&ctx.dir)
        .with_context(|| format!("listing {}", ctx.dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("classification-") && n.ends_with(".csv"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no classification files found; run the test stage first");
    }
    let mut rows: Vec<sigtie::sigtest::WindowClassification> = Vec::new();
    for file in &files {
        manifest.record_input(file)?;
        rows.extend(read_csv::<sigtie::sigtest::WindowClassification>(file)?);
    }
    rows.sort_by(|a, b| {
        (a.variant.name(), a.correction.to_string(), a.window_index).cmp(&(
            b.variant.name(),
            b.correction.to_string(),
            b.window_index,
        ))
    });
    let path = ctx.path("report.csv");
    write_csv(&path, &rows)?;
    manifest.record_output(&path);
    manifest.write(&ctx.dir)?;
    println!("report: {} window rows from {} classification files", rows.len(), files.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// duration

#[derive(Debug, Clone, clap::Args)]
pub struct DurationArgs {
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub bonferroni: bool,
    /// Smallest duration included in the exponent fit.
    #[arg(long)]
    pub d_min: Option<u32>,
    /// Pick d_min by scanning for the best Kolmogorov-Smirnov fit.
    #[arg(long)]
    pub scan_dmin: bool,
    /// Keep spells that touch the data boundary in the fit.
    #[arg(long)]
    pub include_censored: bool,
}

#[derive(Serialize)]
struct DurationConfig {
    variant: Variant,
    correction: Correction,
    d_min: u32,
    scan_dmin: bool,
    include_censored: bool,
}

#[derive(Serialize)]
struct HazardDto {
    kind: TieKind,
    n_spells: usize,
    fit: Option<sigtie::analysis::PowerLawFit>,
    ks_distance: Option<Real>,
    fit_error: Option<String>,
    include_censored: bool,
}

pub fn run_duration(ctx: &Ctx, args: &DurationArgs) -> anyhow::Result<()> {
    let variant = resolve_variant(ctx, &args.variant)?;
    let correction = if args.bonferroni {
        Correction::Bonferroni
    } else {
        Correction::None
    };
    let d_min = args.d_min.or(ctx.lookup_usize("d_min").map(|v| v as u32)).unwrap_or(1);
    let config = DurationConfig {
        variant,
        correction,
        d_min,
        scan_dmin: args.scan_dmin,
        include_censored: args.include_censored,
    };
    let mut manifest = Manifest::new("duration", &config)?;

    let windows_dto = load_windows(ctx, &mut manifest)?;
    let ties = load_ties(ctx, &mut manifest, variant, correction)?;

    let mut by_window: BTreeMap<usize, Vec<(BankId, BankId, bool)>> = BTreeMap::new();
    for w in &windows_dto.windows {
        by_window.entry(w.index).or_default();
    }
    for row in &ties {
        by_window.entry(row.window).or_default().push((
            row.bank_a.clone(),
            row.bank_b.clone(),
            row.significant,
        ));
    }
    let classified: Vec<ClassifiedWindow> = by_window
        .into_iter()
        .map(|(index, ties)| ClassifiedWindow { index, ties })
        .collect();
    let spells = duration_spells(&classified, windows_dto.mode)?;

    let spell_rows: Vec<SpellRow> = spells
        .iter()
        .map(|s| SpellRow {
            bank_a: s.bank_a.clone(),
            bank_b: s.bank_b.clone(),
            kind: s.kind,
            start_window: s.start_window,
            length: s.length,
            censored: s.censored,
        })
        .collect();
    let spells_path = ctx.path("spells.csv");
    write_csv(&spells_path, &spell_rows)?;
    manifest.record_output(&spells_path);

    let mut hazards = Vec::new();
    for kind in [TieKind::Significant, TieKind::NonSignificant] {
        let durations: Vec<u32> = spells
            .iter()
            .filter(|s| s.kind == kind && (args.include_censored || !s.censored))
            .map(|s| s.length as u32)
            .collect();
        let (fit, ks, fit_error) = if args.scan_dmin {
            match scan_d_min(&durations) {
                Ok((fit, ks)) => (Some(fit), Some(ks), None),
                Err(e) => (None, None, Some(e.to_string())),
            }
        } else {
            match powerlaw_exponent(&durations, d_min) {
                Ok(fit) => (Some(fit), None, None),
                Err(e) => (None, None, Some(e.to_string())),
            }
        };
        hazards.push(HazardDto {
            kind,
            n_spells: durations.len(),
            fit,
            ks_distance: ks,
            fit_error,
            include_censored: args.include_censored,
        });
    }
    let hazard_path = ctx.path("hazard.json");
    write_json(&hazard_path, &hazards)?;
    manifest.record_output(&hazard_path);
    manifest.write(&ctx.dir)?;

    println!(
        "duration: {} spells across {} windows",
        spell_rows.len(),
        classified.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// triangles

#[derive(Debug, Clone, clap::Args)]
pub struct VariantArgs {
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub bonferroni: bool,
}

#[derive(Serialize)]
struct VariantConfig {
    variant: Variant,
    correction: Correction,
}

fn variant_config(ctx: &Ctx, args: &VariantArgs) -> anyhow::Result<VariantConfig> {
    Ok(VariantConfig {
        variant: resolve_variant(ctx, &args.variant)?,
        correction: if args.bonferroni {
            Correction::Bonferroni
        } else {
            Correction::None
        },
    })
}

pub fn run_triangles(ctx: &Ctx, args: &VariantArgs) -> anyhow::Result<()> {
    let config = variant_config(ctx, args)?;
    let mut manifest = Manifest::new("triangles", &config)?;
    let windows = load_windows(ctx, &mut manifest)?.into_windows();
    let ties = load_ties(ctx, &mut manifest, config.variant, config.correction)?;

    let mut rows = Vec::new();
    for window in &windows {
        let sig = significant_pairs(window, &ties)?;
        let edges: Vec<(u32, u32)> = window.pairs.keys().copied().collect();
        let census = triangle_census(window.n_banks(), &edges, &sig)?;
        let n_edges = edges.len();
        rows.push(CensusRow {
            window: window.index,
            total: census.total,
            t0: census.by_significant[0],
            t1: census.by_significant[1],
            t2: census.by_significant[2],
            t3: census.by_significant[3],
            p_nonsig: census.p_nonsig(),
            s_nonsig: if n_edges > 0 {
                Some((n_edges - sig.len()) as Real / n_edges as Real)
            } else {
                None
            },
        });
    }
    let path = ctx.path("triangles.csv");
    write_csv(&path, &rows)?;
    manifest.record_output(&path);
    manifest.write(&ctx.dir)?;
    println!("triangles: {} windows censused", rows.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// compare

pub fn run_compare(ctx: &Ctx, args: &VariantArgs) -> anyhow::Result<()> {
    let config = variant_config(ctx, args)?;
    let mut manifest = Manifest::new("compare", &config)?;
    let windows = load_windows(ctx, &mut manifest)?.into_windows();
    let ties = load_ties(ctx, &mut manifest, config.variant, config.correction)?;

    let mut rows: Vec<JaccardRow> = Vec::new();
    let mut skipped = 0usize;
    for window in &windows {
        let sig = significant_pairs(window, &ties)?;
        if sig.is_empty() {
            skipped += 1;
            continue;
        }
        let rl = rl_scores(window);
        let (lpi, flagged) = lpi_scores(window);
        if !flagged.is_empty() {
            eprintln!(
                "warning: window {}: {} banks with zero volume excluded from LPI",
                window.index,
                flagged.len()
            );
        }
        rows.push(JaccardRow {
            window: window.index,
            measure: "RL".into(),
            jaccard: jaccard_vs_truth(&rl, &sig, window)?,
            n_significant: sig.len(),
        });
        rows.push(JaccardRow {
            window: window.index,
            measure: "LPI".into(),
            jaccard: jaccard_vs_truth(&lpi, &sig, window)?,
            n_significant: sig.len(),
        });
    }
    let path = ctx.path("compare.csv");
    write_csv(&path, &rows)?;
    manifest.record_output(&path);
    manifest.write(&ctx.dir)?;
    println!(
        "compare: {} rows ({} windows without significant ties skipped)",
        rows.len(),
        skipped
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// rates

pub fn run_rates(ctx: &Ctx, args: &VariantArgs) -> anyhow::Result<()> {
    let config = variant_config(ctx, args)?;
    let mut manifest = Manifest::new("rates", &config)?;
    let network = load_network(ctx, &mut manifest)?;
    let windows = load_windows(ctx, &mut manifest)?.into_windows();
    let ties = load_ties(ctx, &mut manifest, config.variant, config.correction)?;

    let mut rows = Vec::new();
    for window in &windows {
        let sig = significant_pairs(window, &ties)?;
        let analysis = detrended_rates(&network, window, &sig)?;
        rows.push(RateDiffRow {
            window: window.index,
            n_significant: analysis.rate.n_significant,
            n_other: analysis.rate.n_other,
            rate_difference: analysis.rate.difference,
            rate_ci_low: analysis.rate.ci_low,
            rate_ci_high: analysis.rate.ci_high,
            size_difference: analysis.loan_size.difference,
            size_ci_low: analysis.loan_size.ci_low,
            size_ci_high: analysis.loan_size.ci_high,
            skipped_days: analysis.skipped_days,
        });
    }
    let path = ctx.path("rates.csv");
    write_csv(&path, &rows)?;
    manifest.record_output(&path);
    manifest.write(&ctx.dir)?;
    println!("rates: {} windows analyzed", rows.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// nationality

#[derive(Debug, Clone, clap::Args)]
pub struct NationalityArgs {
    #[command(flatten)]
    pub variant: VariantArgs,
    /// Home country code for the domestic/foreign split.
    #[arg(long)]
    pub home_country: Option<String>,
}

#[derive(Serialize)]
struct NationalityRow {
    window: usize,
    home: String,
    all_domestic_domestic: Real,
    all_domestic_foreign: Real,
    all_foreign_foreign: Real,
    sig_domestic_domestic: Option<Real>,
    sig_domestic_foreign: Option<Real>,
    sig_foreign_foreign: Option<Real>,
    home_bank_share: Real,
    dependent_home_share: Option<Real>,
    flagged_unknown: usize,
}

pub fn run_nationality(ctx: &Ctx, args: &NationalityArgs) -> anyhow::Result<()> {
    let config = variant_config(ctx, &args.variant)?;
    let home = args
        .home_country
        .clone()
        .or(ctx.lookup_str("home_country"))
        .unwrap_or_else(|| "IT".to_string());
    let mut manifest = Manifest::new(
        "nationality",
        &serde_json::json!({
            "variant": config.variant,
            "correction": config.correction,
            "home_country": home,
        }),
    )?;
    let windows = load_windows(ctx, &mut manifest)?.into_windows();
    let ties = load_ties(ctx, &mut manifest, config.variant, config.correction)?;
    let tag = correction_tag(config.variant, config.correction);
    let nodes_path = ctx.path(&format!("nodes-{tag}.csv"));
    manifest.record_input(&nodes_path)?;
    let nodes: Vec<NodeRow> = read_csv(&nodes_path)?;

    let mut rows = Vec::new();
    for window in &windows {
        let sig = significant_pairs(window, &ties)?;
        let local: BTreeMap<&BankId, u32> = window
            .banks
            .iter()
            .enumerate()
            .map(|(i, b)| (b, i as u32))
            .collect();
        let dependent: BTreeSet<u32> = nodes
            .iter()
            .filter(|n| n.window == window.index && n.dependent)
            .filter_map(|n| local.get(&n.bank).copied())
            .collect();
        let breakdown = nationality_groups(window, &sig, &dependent, &home);
        rows.push(NationalityRow {
            window: window.index,
            home: breakdown.home.clone(),
            all_domestic_domestic: breakdown.all_ties.domestic_domestic,
            all_domestic_foreign: breakdown.all_ties.domestic_foreign,
            all_foreign_foreign: breakdown.all_ties.foreign_foreign,
            sig_domestic_domestic: breakdown.significant_ties.map(|s| s.domestic_domestic),
            sig_domestic_foreign: breakdown.significant_ties.map(|s| s.domestic_foreign),
            sig_foreign_foreign: breakdown.significant_ties.map(|s| s.foreign_foreign),
            home_bank_share: breakdown.home_bank_share,
            dependent_home_share: breakdown.dependent_home_share,
            flagged_unknown: breakdown.flagged_unknown,
        });
    }
    let path = ctx.path("nationality.csv");
    write_csv(&path, &rows)?;
    manifest.record_output(&path);
    manifest.write(&ctx.dir)?;
    println!("nationality: {} windows grouped (home {home})", rows.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, clap::Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub core_fraction: Option<f64>,
    /// Daily core-core edge probability.
    #[arg(long)]
    pub p_cc: Option<f64>,
    /// Daily core-periphery edge probability.
    #[arg(long)]
    pub p_cp: Option<f64>,
    /// Fraction of trading pairs planted as relationship pairs.
    #[arg(long)]
    pub f_rel: Option<f64>,
    #[arg(long)]
    pub b0: Option<f64>,
    #[arg(long)]
    pub b1: Option<f64>,
    #[arg(long)]
    pub b2: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn synthetic_config(ctx: &Ctx, args: &SimulateArgs) -> SyntheticConfig {
    let defaults = SyntheticConfig::default();
    SyntheticConfig {
        n_banks: args.n.or(ctx.lookup_usize("n")).unwrap_or(defaults.n_banks),
        core_fraction: args
            .core_fraction
            .or(ctx.lookup_f64("core_fraction"))
            .unwrap_or(defaults.core_fraction),
        p_core_core: args
            .p_cc
            .or(ctx.lookup_f64("p_cc"))
            .unwrap_or(defaults.p_core_core),
        p_core_periphery: args
            .p_cp
            .or(ctx.lookup_f64("p_cp"))
            .unwrap_or(defaults.p_core_periphery),
        relationship_fraction: args
            .f_rel
            .or(ctx.lookup_f64("f_rel"))
            .unwrap_or(defaults.relationship_fraction),
        hazard_b0: args.b0.or(ctx.lookup_f64("b0")).unwrap_or(defaults.hazard_b0),
        hazard_b1: args.b1.or(ctx.lookup_f64("b1")).unwrap_or(defaults.hazard_b1),
        hazard_b2: args.b2.or(ctx.lookup_f64("b2")).unwrap_or(defaults.hazard_b2),
        burn_in_days: args
            .burn_in
            .or(ctx.lookup_usize("burn_in"))
            .unwrap_or(defaults.burn_in_days),
        window_days: args.tau.or(ctx.lookup_usize("tau")).unwrap_or(defaults.window_days),
        seed: args.seed.or(ctx.lookup_u64("seed")).unwrap_or(defaults.seed),
    }
}

pub fn run_simulate(ctx: &Ctx, args: &SimulateArgs) -> anyhow::Result<()> {
    let config = synthetic_config(ctx, args);
    let mut manifest = Manifest::new("simulate", &config)?;
    let synthetic = generate(&config)?;
    let windows = window_counts(
        &synthetic.network,
        config.window_days,
        WindowMode::Fixed,
        false,
    )?;

    let snapshots_path = ctx.path("snapshots.json");
    write_json(&snapshots_path, &NetworkDto::from(&synthetic.network))?;
    manifest.record_output(&snapshots_path);
    let windows_path = ctx.path("windows.json");
    write_json(
        &windows_path,
        &WindowsDto::new(config.window_days, WindowMode::Fixed, false, &windows),
    )?;
    manifest.record_output(&windows_path);
    let truth_path = ctx.path("truth.json");
    write_json(
        &truth_path,
        &TruthDto {
            planted_pairs: synthetic.planted_ids(),
            n_core: synthetic.n_core,
        },
    )?;
    manifest.record_output(&truth_path);
    manifest.write(&ctx.dir)?;

    println!(
        "simulate: {} banks, {} days emitted, {} planted pairs (seed {})",
        config.n_banks,
        synthetic.network.days.len(),
        synthetic.planted.len(),
        config.seed
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// power

#[derive(Debug, Clone, clap::Args)]
pub struct PowerArgs {
    #[command(flatten)]
    pub base: SimulateArgs,
    /// Monte Carlo replications per grid point.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Comma-separated hazard strengths to scan (overrides --b2).
    #[arg(long)]
    pub b2_list: Option<String>,
    /// Comma-separated window lengths to scan (overrides --tau).
    #[arg(long)]
    pub tau_list: Option<String>,
}

#[derive(Serialize)]
struct PowerRow {
    n_banks: usize,
    b2: f64,
    tau: usize,
    correction: Correction,
    replications: usize,
    mean_detected_fraction: Real,
    sd_detected_fraction: Real,
    q05: Real,
    median: Real,
    q95: Real,
    mean_precision: Real,
    mean_recall: Real,
    mean_f1: Real,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("bad {what} entry {v:?}: {e}"))
        })
        .collect()
}

pub fn run_power(ctx: &Ctx, args: &PowerArgs) -> anyhow::Result<()> {
    let base = synthetic_config(ctx, &args.base);
    let reps = args.reps.or(ctx.lookup_usize("reps")).unwrap_or(200);
    let level = args.level.or(ctx.lookup_f64("level")).unwrap_or(99.0);
    let b2_values: Vec<f64> = match &args.b2_list {
        Some(s) => parse_list(s, "b2")?,
        None => vec![base.hazard_b2],
    };
    let tau_values: Vec<usize> = match &args.tau_list {
        Some(s) => parse_list(s, "tau")?,
        None => vec![base.window_days],
    };
    let mut grid = Vec::new();
    for &b2 in &b2_values {
        for &tau in &tau_values {
            let mut config = base.clone();
            config.hazard_b2 = b2;
            // keep the total simulated span fixed when tau changes
            let total = base.burn_in_days + base.window_days;
            config.window_days = tau;
            config.burn_in_days = total.saturating_sub(tau);
            grid.push(config);
        }
    }

    let mut manifest = Manifest::new(
        "power",
        &serde_json::json!({
            "base": base,
            "replications": reps,
            "level": level,
            "b2_values": b2_values,
            "tau_values": tau_values,
        }),
    )?;

    let corrections = [Correction::None, Correction::Bonferroni];
    let points = power_experiment(&grid, reps, level, &corrections)?;

    let mut rows = Vec::new();
    for point in &points {
        for s in &point.summaries {
            rows.push(PowerRow {
                n_banks: point.config.n_banks,
                b2: point.config.hazard_b2,
                tau: point.config.window_days,
                correction: s.correction,
                replications: s.replications,
                mean_detected_fraction: s.mean_detected_fraction,
                sd_detected_fraction: s.sd_detected_fraction,
                q05: s.q05_detected_fraction,
                median: s.median_detected_fraction,
                q95: s.q95_detected_fraction,
                mean_precision: s.mean_precision,
                mean_recall: s.mean_recall,
                mean_f1: s.mean_f1,
            });
        }
    }
    let json_path = ctx.path("power.json");
    write_json(&json_path, &points)?;
    manifest.record_output(&json_path);
    let csv_path = ctx.path("power.csv");
    write_csv(&csv_path, &rows)?;
    manifest.record_output(&csv_path);
    manifest.write(&ctx.dir)?;

    for row in &rows {
        println!(
            "power: b2={} tau={} {}: detected {:.4} (sd {:.4}), precision {:.3}, recall {:.3}",
            row.b2,
            row.tau,
            row.correction,
            row.mean_detected_fraction,
            row.sd_detected_fraction,
            row.mean_precision,
            row.mean_recall
        );
    }
    Ok(())
}
