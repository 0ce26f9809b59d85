//! Command-line front end: configuration, the four commands, and the
//! `result.json` / `table.csv` / `figure.svg` outputs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::equilibria::{
    analyze_psi1_shape, classify_sequence, find_equilibria_with, sequence_of, Equilibrium, Fold, ManifoldGeometry,
    SequenceTag, Trichotomy,
};
use crate::error::{Error, Result};
use crate::flow::{
    canard_explosion_sweep, classify_cycle, find_limit_cycle_with, section_abscissa, simulate_compare_3d_2d,
    ComparisonReport, CycleClass, CycleOptions, CycleSearch, LimitCycle, RowStatus, Stability, SweepOptions, SweepRow,
    TimeDirection,
};
use crate::gspt::{
    canard_curve, classify_folds, hopf_criticality, hopf_curve, hopf_value_exact, reduced_flow_points_to_fold,
    saddle_node_analysis, Criticality, FoldAnalysis, SaddleNodeReport,
};
use crate::integrate::{integrate, Planar, Stats, Status, ThreeSpecies, Tolerances};
use crate::model::{
    psi1_jet, psi2_jet, reduce_to_dimensionless, state3_to_state2, BiologicalParams, DimensionlessParams, State3,
};
use crate::svg::{self, Panel, Series};
use crate::taxonomy::{build_witnesses, Construction, TaxonomyEntry};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "CANARD_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "canard-lab",
    version,
    about = "Slow-fast analysis of a two-variable circadian oscillator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Equilibria, manifold geometry and fold analyses.
    Analyze(RunArgs),
    /// Limit-cycle amplitude sweep over `v` and the canard explosion value.
    Sweep(RunArgs),
    /// Trajectory, limit cycles, and optionally the three-species comparison.
    Simulate(RunArgs),
    /// Parameter witnesses for equilibrium sequence tags.
    Taxonomy(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Analyze(_) => "analyze",
            Command::Sweep(_) => "sweep",
            Command::Simulate(_) => "simulate",
            Command::Taxonomy(_) => "taxonomy",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Analyze(a) | Command::Sweep(a) | Command::Simulate(a) | Command::Taxonomy(a) => a,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
#[command(allow_negative_numbers = true)]
pub struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Omit the generation timestamp from the SVG.
    #[arg(long)]
    pub no_timestamp: bool,
    /// Override any configuration key, e.g. `--set bio_params.k_a=2000`.
    #[arg(long = "set", value_name = "PATH=JSON")]
    pub set: Vec<String>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b1: Option<f64>,
    #[arg(long)]
    pub b2: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub v: Option<f64>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Comma-separated `v` values.
    #[arg(long, value_delimiter = ',')]
    pub v_grid: Option<Vec<f64>>,
    /// Comma-separated sequence tags.
    #[arg(long, value_delimiter = ',')]
    pub tags: Option<Vec<String>>,
    /// Initial state `x,y`.
    #[arg(long, value_delimiter = ',')]
    pub initial: Option<Vec<f64>>,
    /// Run the three-species comparison (needs `bio_params`).
    #[arg(long)]
    pub compare_3d: bool,
    /// Evaluate sweep points independently instead of by continuation.
    #[arg(long)]
    pub no_continuation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            GridSpec::List(v) => Ok(v.clone()),
            GridSpec::Range { start, stop, step } => {
                if !(step.abs() > 0.0 && step.is_finite() && start.is_finite() && stop.is_finite()) {
                    return Err(Error::param("v_grid.step", "must be finite and nonzero"));
                }
                let n = ((stop - start) / step + 1e-9).floor();
                if n < 0.0 {
                    return Err(Error::param("v_grid", "step points away from stop"));
                }
                Ok((0..=n as usize).map(|k| start + step * k as f64).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolConfig {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
}

/// Contents of the `--config` file; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: Option<DimensionlessParams>,
    pub bio_params: Option<BiologicalParams>,
    pub v_grid: Option<GridSpec>,
    pub tolerances: Option<TolConfig>,
    pub t_end: Option<f64>,
    pub initial: Option<[f64; 2]>,
    pub initial_3d: Option<[f64; 3]>,
    pub tags: Option<Vec<String>>,
    pub continuation: Option<bool>,
    pub refine_steps: Option<usize>,
    pub compare_3d: Option<bool>,
    /// Extra random forward seeds for `simulate`.
    pub random_seeds: Option<usize>,
    pub seed: Option<u64>,
}

fn config_error(reason: impl Into<String>) -> Error {
    Error::param("config", reason)
}

fn set_path(root: &mut serde_json::Value, path: &str, value: serde_json::Value) -> Result<()> {
    let mut cur = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        if key.is_empty() {
            return Err(config_error(format!("empty key in `{path}`")));
        }
        if cur.is_null() {
            *cur = serde_json::Value::Object(Default::default());
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| config_error(format!("`{path}` descends into a non-object")))?;
        if i + 1 == keys.len() {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        cur = obj.entry((*key).to_string()).or_insert(serde_json::Value::Null);
    }
    Ok(())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_error(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_error(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// File, then `--set` overrides, then dedicated flags.
    pub fn from_args(args: &RunArgs) -> Result<Self> {
        let base = match &args.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        let mut value = serde_json::to_value(&base)?;
        for item in &args.set {
            let (path, raw) = item
                .split_once('=')
                .ok_or_else(|| config_error(format!("`--set {item}` needs PATH=VALUE")))?;
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            set_path(&mut value, path, parsed)?;
        }
        let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| config_error(e.to_string()))?;

        let flags = [args.a, args.b1, args.b2, args.c, args.delta, args.v];
        if flags.iter().any(Option::is_some) {
            let mut p = match cfg.params {
                Some(p) => p,
                None => {
                    if flags.iter().any(Option::is_none) {
                        return Err(Error::param(
                            "params",
                            "without a `params` block all of --a --b1 --b2 --c --delta --v are required",
                        ));
                    }
                    DimensionlessParams {
                        a: 0.0,
                        b1: 0.0,
                        b2: 0.0,
                        c: 0.0,
                        delta: 0.0,
                        v: 0.0,
                    }
                }
            };
            for (slot, flag) in [&mut p.a, &mut p.b1, &mut p.b2, &mut p.c, &mut p.delta, &mut p.v]
                .into_iter()
                .zip(flags)
            {
                if let Some(value) = flag {
                    *slot = value;
                }
            }
            cfg.params = Some(p);
        }
        if args.rtol.is_some() || args.atol.is_some() {
            let t = cfg.tolerances.get_or_insert_with(TolConfig::default);
            t.rtol = args.rtol.or(t.rtol);
            t.atol = args.atol.or(t.atol);
        }
        if let Some(t) = args.t_end {
            cfg.t_end = Some(t);
        }
        if let Some(g) = &args.v_grid {
            cfg.v_grid = Some(GridSpec::List(g.clone()));
        }
        if let Some(t) = &args.tags {
            cfg.tags = Some(t.clone());
        }
        if let Some(init) = &args.initial {
            if init.len() != 2 {
                return Err(Error::param("initial", "expects two values x,y"));
            }
            cfg.initial = Some([init[0], init[1]]);
        }
        if args.compare_3d {
            cfg.compare_3d = Some(true);
        }
        if args.no_continuation {
            cfg.continuation = Some(false);
        }
        if let Some(s) = args.seed {
            cfg.seed = Some(s);
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn tolerances(&self) -> Result<Tolerances> {
        let mut tol = Tolerances::default();
        if let Some(t) = self.tolerances {
            tol.rtol = t.rtol.unwrap_or(tol.rtol);
            tol.atol = t.atol.unwrap_or(tol.atol);
        }
        tol.validate()?;
        Ok(tol)
    }

    /// Dimensionless parameters, reduced from `bio_params` when only those
    /// are given.
    pub fn dimensionless(&self) -> Result<DimensionlessParams> {
        let p = match (self.params, self.bio_params) {
            (Some(p), _) => p,
            (None, Some(bp)) => reduce_to_dimensionless(&bp)?,
            (None, None) => return Err(Error::param("params", "missing: give `params` or `bio_params`")),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub analysis: FoldAnalysis,
    pub criticality: Option<Criticality>,
    /// First-order Hopf value at the configured `delta`.
    pub v_hopf: f64,
    /// First-order canard-explosion value at the configured `delta`.
    pub v_canard: f64,
    /// Trace-zero value on the equilibrium branch, when it exists.
    pub v_hopf_exact: Option<f64>,
    pub homoclinic_possible: bool,
    pub reduced_flow_points_to_fold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub geometry: ManifoldGeometry,
    pub equilibria: Vec<Equilibrium>,
    pub sequence: Option<SequenceTag>,
    pub folds: Vec<FoldReport>,
    pub saddle_nodes: Vec<SaddleNodeReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub explosion_v: Option<f64>,
    pub explosion_bracket: Option<[f64; 2]>,
    /// Fold whose canard value lies closest to the grid.
    pub fold: Option<Fold>,
    pub v_hopf: Option<f64>,
    pub v_canard: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub initial: [f64; 2],
    pub t_end: f64,
    pub status: Status,
    pub stats: Stats,
    pub final_state: [f64; 2],
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: LimitCycle,
    pub class: Option<CycleClass>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub seed: [f64; 2],
    pub direction: TimeDirection,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub equilibria: Vec<Equilibrium>,
    pub trajectory: Option<TrajectorySummary>,
    pub cycles: Vec<CycleRecord>,
    pub searches: Vec<SearchRecord>,
    pub comparison: Option<ComparisonReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyReport {
    pub entries: Vec<TaxonomyEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum Payload {
    Analyze(AnalyzeReport),
    Sweep(SweepReport),
    Simulate(SimulateReport),
    Taxonomy(TaxonomyReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub params: Option<DimensionlessParams>,
    pub bio_params: Option<BiologicalParams>,
    pub payload: Payload,
    pub diagnostics: Vec<String>,
}

impl ResultRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// String table written as CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Seventeen significant digits: exact round trip for `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn snake<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let io = |e: csv::Error| Error::Io(e.to_string());
        let header = r.headers().map_err(io)?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()).map_err(io))
            .collect::<Result<_>>()?;
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

pub fn sweep_table(report: &SweepReport) -> Table {
    let mut t = Table::new(&["v", "found", "x_min", "x_max", "period", "class", "v_H", "v_c"]);
    for r in &report.rows {
        t.rows.push(vec![
            fmt_f64(r.v),
            r.found.to_string(),
            fmt_opt(r.x_min),
            fmt_opt(r.x_max),
            fmt_opt(r.period),
            r.class.map(|c| snake(&c)).unwrap_or_default(),
            fmt_opt(report.v_hopf),
            fmt_opt(report.v_canard),
        ]);
    }
    t
}

/// Rebuild sweep rows from their CSV form (the columns the table carries).
pub fn sweep_rows_from_table(
    t: &Table,
) -> Result<Vec<(f64, bool, Option<f64>, Option<f64>, Option<f64>, Option<CycleClass>)>> {
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse::<f64>()
                .map(Some)
                .map_err(|e| Error::Io(format!("bad number {s}: {e}")))
        }
    };
    t.rows
        .iter()
        .map(|r| {
            let class = if r[5].is_empty() {
                None
            } else {
                Some(
                    serde_json::from_value(serde_json::Value::String(r[5].clone()))
                        .map_err(|e| Error::Io(e.to_string()))?,
                )
            };
            Ok((
                num(&r[0])?.unwrap_or(f64::NAN),
                r[1] == "true",
                num(&r[2])?,
                num(&r[3])?,
                num(&r[4])?,
                class,
            ))
        })
        .collect()
}

/// Everything one command produces.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub record: ResultRecord,
    pub table: Table,
    /// SVG body without a timestamp.
    pub panels: Vec<Panel>,
    /// Some results are missing or failed.
    pub partial: bool,
}

impl CommandOutput {
    pub fn svg(&self, timestamp: Option<&str>) -> String {
        svg::render(&self.panels, timestamp)
    }

    pub fn write(&self, dir: &Path, timestamp: Option<&str>) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("result.json"), self.record.to_json()?)?;
        std::fs::write(dir.join("table.csv"), self.table.to_csv()?)?;
        std::fs::write(dir.join("figure.svg"), self.svg(timestamp))?;
        Ok(())
    }
}

fn record(
    cmd: &str,
    cfg: &RunConfig,
    params: Option<DimensionlessParams>,
    payload: Payload,
    diagnostics: Vec<String>,
) -> ResultRecord {
    ResultRecord {
        command: cmd.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed(),
        params,
        bio_params: cfg.bio_params,
        payload,
        diagnostics,
    }
}

/// Right end of the interesting phase-plane window.
fn phase_extent(p: &DimensionlessParams, geom: &ManifoldGeometry, extra: &[f64]) -> f64 {
    let mut x = match geom.folds {
        Some(f) => 1.15 * f.x_right_landing,
        None => 3.0 * geom.x_plus.max(1.0),
    };
    for e in extra.iter().filter(|e| e.is_finite()) {
        x = x.max(1.1 * e);
    }
    x.min(p.box_size().max(1.0))
}

fn nullcline_panel(title: &str, p: &DimensionlessParams, x_max: f64, y_hint: f64) -> Panel {
    let n = 600;
    let xs: Vec<f64> = (0..=n).map(|k| x_max * k as f64 / n as f64).collect();
    let psi1: Vec<[f64; 2]> = xs.iter().map(|&x| [x, psi1_jet(x, p)[0]]).collect();
    let psi2: Vec<[f64; 2]> = xs.iter().map(|&x| [x, psi2_jet(x, p)[0]]).collect();
    let y_top = psi1
        .iter()
        .map(|q| q[1])
        .fold(y_hint, f64::max)
        .min(p.box_size().max(1.0))
        * 1.08;
    let mut panel = Panel::new(title, "x (scaled total protein)", "y (scaled mRNA)");
    panel.x_range = Some([0.0, x_max]);
    panel.y_range = Some([0.0, y_top]);
    panel.series.push(Series::line("y = psi1(x)", psi1, "#d62728").dashed());
    panel.series.push(Series::line("y = psi2(x)", psi2, "#1f77b4").dashed());
    panel
}

fn equilibrium_markers(eqs: &[Equilibrium]) -> Vec<Series> {
    let (stable, unstable): (Vec<&Equilibrium>, Vec<&Equilibrium>) =
        eqs.iter().partition(|e| e.linear_type.is_stable());
    let mut out = Vec::new();
    if !stable.is_empty() {
        out.push(
            Series::line(
                "stable equilibrium",
                stable.iter().map(|e| [e.x, e.y]).collect(),
                "black",
            )
            .markers(),
        );
    }
    if !unstable.is_empty() {
        out.push(
            Series::line(
                "unstable equilibrium",
                unstable.iter().map(|e| [e.x, e.y]).collect(),
                "#7f7f7f",
            )
            .markers(),
        );
    }
    out
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<CommandOutput> {
    let p = cfg.dimensionless()?;
    let geom = analyze_psi1_shape(&p)?;
    let eqs = find_equilibria_with(&p, &geom)?;
    let mut diagnostics = Vec::new();
    let sequence = if geom.trichotomy == Trichotomy::SShaped {
        match sequence_of(&eqs) {
            Ok(s) => Some(s),
            Err(e) => {
                diagnostics.push(format!("sequence: {e}"));
                None
            }
        }
    } else {
        None
    };
    let mut folds = Vec::new();
    if let Some(fp) = geom.folds {
        match classify_folds(&geom, &p) {
            Ok(fa) => {
                for f in fa {
                    let criticality = hopf_criticality(&f)
                        .map_err(|e| diagnostics.push(format!("{} fold criticality: {e}", f.which)))
                        .ok();
                    let v_hopf_exact = match hopf_value_exact(&geom, &p, f.which, p.delta) {
                        Ok(v) => Some(v),
                        Err(e) => {
                            diagnostics.push(format!("{} fold exact Hopf value: {e}", f.which));
                            None
                        }
                    };
                    folds.push(FoldReport {
                        analysis: f,
                        criticality,
                        v_hopf: hopf_curve(&f, p.delta),
                        v_canard: canard_curve(&f, p.delta),
                        v_hopf_exact,
                        homoclinic_possible: f.homoclinic_possible(),
                        reduced_flow_points_to_fold: reduced_flow_points_to_fold(&fp, &p, f.which),
                    });
                }
            }
            Err(e) => diagnostics.push(format!("fold analysis: {e}")),
        }
    }
    let mut saddle_nodes = Vec::new();
    for e in eqs.iter().filter(|e| e.tangency) {
        match saddle_node_analysis(&p, &geom, e.x) {
            Ok(r) => saddle_nodes.push(r),
            Err(err) => diagnostics.push(format!("tangency at x = {}: {err}", e.x)),
        }
    }

    let mut table = Table::new(&[
        "x",
        "y",
        "det",
        "trace",
        "discriminant",
        "linear_type",
        "region",
        "tangency",
        "degenerate",
    ]);
    for e in &eqs {
        table.rows.push(vec![
            fmt_f64(e.x),
            fmt_f64(e.y),
            fmt_f64(e.det),
            fmt_f64(e.trace),
            fmt_f64(e.discriminant),
            snake(&e.linear_type),
            e.region.map(|r| r.to_string()).unwrap_or_default(),
            e.tangency.to_string(),
            e.degenerate.to_string(),
        ]);
    }
    let x_max = phase_extent(&p, &geom, &eqs.iter().map(|e| e.x).collect::<Vec<_>>());
    let mut panel = nullcline_panel(
        "Nullclines and equilibria",
        &p,
        x_max,
        eqs.iter().map(|e| e.y).fold(0.0, f64::max),
    );
    panel.series.extend(equilibrium_markers(&eqs));
    let report = AnalyzeReport {
        geometry: geom,
        equilibria: eqs,
        sequence,
        folds,
        saddle_nodes,
    };
    Ok(CommandOutput {
        record: record("analyze", cfg, Some(p), Payload::Analyze(report), diagnostics),
        table,
        panels: vec![panel],
        partial: false,
    })
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<CommandOutput> {
    let p = cfg.dimensionless()?;
    let grid = cfg
        .v_grid
        .as_ref()
        .ok_or_else(|| Error::param("v_grid", "missing"))?
        .values()?;
    if grid.is_empty() {
        return Err(Error::param("v_grid", "must be nonempty"));
    }
    let tol = cfg.tolerances()?;
    let geom = analyze_psi1_shape(&p)?;
    geom.fold_pair()
        .map_err(|_| Error::param("params", "sweep needs an S-shaped psi1"))?;
    let opts = SweepOptions {
        cycle: CycleOptions {
            tol,
            ..CycleOptions::default()
        },
        continuation: cfg.continuation.unwrap_or(true),
        refine_steps: cfg.refine_steps.unwrap_or(1),
    };
    let result = canard_explosion_sweep(&p, &grid, &opts)?;
    let mut diagnostics = Vec::new();
    let center = 0.5 * (grid[0] + grid[grid.len() - 1]);
    let nearest: Option<FoldAnalysis> = match classify_folds(&geom, &p) {
        Ok(fa) => fa
            .into_iter()
            .min_by(|a, b| (a.v0 - center).abs().total_cmp(&(b.v0 - center).abs())),
        Err(e) => {
            diagnostics.push(format!("fold analysis: {e}"));
            None
        }
    };
    let failed = result.rows.iter().filter(|r| r.status == RowStatus::Failed).count();
    if failed > 0 {
        diagnostics.push(format!("{failed} sweep rows failed"));
    }
    let report = SweepReport {
        rows: result.rows,
        explosion_v: result.explosion_v,
        explosion_bracket: result.explosion_bracket,
        fold: nearest.map(|f| f.which),
        v_hopf: nearest.map(|f| hopf_curve(&f, p.delta)),
        v_canard: nearest.map(|f| canard_curve(&f, p.delta)),
    };
    let table = sweep_table(&report);

    let amp: Vec<[f64; 2]> = report.rows.iter().map(|r| [r.v, r.amplitude()]).collect();
    let per: Vec<[f64; 2]> = report
        .rows
        .iter()
        .map(|r| [r.v, r.period.unwrap_or(f64::NAN)])
        .collect();
    let amp_top = amp.iter().map(|q| q[1]).fold(0.0, f64::max).max(1e-9) * 1.1;
    let per_top = per
        .iter()
        .map(|q| q[1])
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max)
        .max(1e-9)
        * 1.1;
    let vline = |label: &str, v: Option<f64>, top: f64, color: &str| {
        v.map(|v| Series::line(label, vec![[v, 0.0], [v, top]], color).dashed().width(1.0))
    };
    let mut a_panel = Panel::new("Cycle amplitude", "v", "x_max - x_min");
    a_panel.y_range = Some([0.0, amp_top]);
    a_panel.series.push(Series::line("amplitude", amp.clone(), "#d62728"));
    a_panel.series.push(Series::line("", amp, "#d62728").markers());
    let mut p_panel = Panel::new("Cycle period", "v", "period");
    p_panel.y_range = Some([0.0, per_top]);
    p_panel.series.push(Series::line("period", per.clone(), "#1f77b4"));
    p_panel.series.push(Series::line("", per, "#1f77b4").markers());
    for (panel, top) in [(&mut a_panel, amp_top), (&mut p_panel, per_top)] {
        panel.series.extend(vline("v_H", report.v_hopf, top, "#2ca02c"));
        panel.series.extend(vline("v_c", report.v_canard, top, "#9467bd"));
        panel
            .series
            .extend(vline("explosion", report.explosion_v, top, "black"));
    }
    Ok(CommandOutput {
        record: record("sweep", cfg, Some(p), Payload::Sweep(report), diagnostics),
        table,
        panels: vec![a_panel, p_panel],
        partial: failed > 0,
    })
}

/// Seeds for forward searches: just above the forward-repelling equilibrium
/// on the section, the upper corner of the trapping box, and random points.
fn forward_seeds(
    p: &DimensionlessParams,
    geom: &ManifoldGeometry,
    eqs: &[Equilibrium],
    n_random: usize,
    seed: u64,
) -> Vec<[f64; 2]> {
    let xs = section_abscissa(eqs, geom);
    let ys = psi1_jet(xs, p)[0];
    let b = p.box_size();
    let mut seeds = vec![[xs, ys * (1.0 + 1e-3)], [0.9 * b, 0.9 * b]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    seeds.extend((0..n_random).map(|_| [rng.gen::<f64>() * b, rng.gen::<f64>() * b]));
    seeds
}

fn same_cycle(a: &LimitCycle, b: &LimitCycle) -> bool {
    a.stability == b.stability
        && (a.section_x - b.section_x).abs() <= 1e-12 * a.section_x.abs().max(1.0)
        && (a.section_value - b.section_value).abs() <= 1e-5 * a.section_value.abs().max(1.0)
}

fn outcome_text(o: &CycleSearch) -> String {
    match o {
        CycleSearch::Found(c) => format!("cycle with section value {}", c.section_value),
        CycleSearch::Equilibrium { x, y } => format!("equilibrium ({x}, {y})"),
        CycleSearch::NotFound { reason } => format!("none: {reason}"),
    }
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<CommandOutput> {
    let tol = cfg.tolerances()?;
    let compare = cfg.compare_3d.unwrap_or(false);
    if compare {
        return simulate_3d(cfg, tol);
    }
    let p = cfg.dimensionless()?;
    let t_end = cfg.t_end.unwrap_or(2000.0);
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::param("t_end", "must be positive"));
    }
    if let Some(init) = cfg.initial {
        if !(init[0] >= 0.0 && init[1] >= 0.0 && init.iter().all(|v| v.is_finite())) {
            return Err(Error::param("initial", "must be a finite nonnegative state"));
        }
    }
    let geom = analyze_psi1_shape(&p)?;
    let eqs = find_equilibria_with(&p, &geom)?;
    let mut diagnostics = Vec::new();
    let initial = cfg.initial.unwrap_or_else(|| {
        let e = eqs.first().map(|e| [e.x, e.y]).unwrap_or([0.0, 0.0]);
        [e[0], e[1] * (1.0 + 1e-3) + 1e-3]
    });

    let traj = integrate(Planar(p), 0.0, &initial, t_end, tol)?;
    let mut partial = !traj.is_complete();
    if partial {
        diagnostics.push(format!("trajectory stopped early: {:?}", traj.status));
    }
    let last = traj.last_state();
    let summary = TrajectorySummary {
        initial,
        t_end,
        status: traj.status,
        stats: traj.stats,
        final_state: [last[0], last[1]],
        samples: traj.times.len(),
    };

    let opts = CycleOptions {
        tol,
        ..CycleOptions::default()
    };
    let mut cycles: Vec<LimitCycle> = Vec::new();
    let mut searches = Vec::new();
    let mut run = |seed: [f64; 2], dir: TimeDirection, cycles: &mut Vec<LimitCycle>| {
        let out = find_limit_cycle_with(&p, &geom, &eqs, seed, dir, &opts)
            .unwrap_or_else(|e| CycleSearch::NotFound { reason: e.to_string() });
        searches.push(SearchRecord {
            seed,
            direction: dir,
            outcome: outcome_text(&out),
        });
        if let CycleSearch::Found(c) = out {
            if !cycles.iter().any(|k| same_cycle(k, &c)) {
                cycles.push(c);
            }
        }
    };
    if geom.trichotomy == Trichotomy::SShaped || !eqs.is_empty() {
        for s in forward_seeds(&p, &geom, &eqs, cfg.random_seeds.unwrap_or(2), cfg.seed()) {
            run(s, TimeDirection::Forward, &mut cycles);
        }
        // repelling cycles: backward from just inside each attracting cycle
        // and from next to each stable equilibrium
        let mut back: Vec<[f64; 2]> = cycles
            .iter()
            .map(|c| {
                let floor = psi1_jet(c.section_x, &p)[0];
                [c.section_x, c.section_value - 1e-3 * (c.section_value - floor)]
            })
            .collect();
        back.extend(
            eqs.iter()
                .filter(|e| e.linear_type.is_stable())
                .map(|e| [e.x, e.y * (1.0 + 1e-3) + 1e-6]),
        );
        let xs = section_abscissa(&eqs, &geom);
        back.push([xs, psi1_jet(xs, &p)[0] * (1.0 + 1e-3)]);
        for s in back {
            run(s, TimeDirection::Backward, &mut cycles);
        }
    }
    cycles.sort_by(|a, b| b.x_amplitude().total_cmp(&a.x_amplitude()));
    let records: Vec<CycleRecord> = cycles
        .into_iter()
        .map(|c| {
            let (class, note) = match geom.folds.map(|_| classify_cycle(&c, &geom, &p)) {
                Some(Ok(k)) => (Some(k), None),
                Some(Err(e)) => (None, Some(e.to_string())),
                None => (None, Some("psi1 is not S-shaped; classes undefined".into())),
            };
            CycleRecord { cycle: c, class, note }
        })
        .collect();
    if records.iter().any(|r| r.note.is_some() && geom.folds.is_some()) {
        partial = true;
    }

    let mut table = Table::new(&["t", "x", "y"]);
    for (t, s) in traj.times.iter().zip(&traj.states) {
        table.rows.push(vec![fmt_f64(*t), fmt_f64(s[0]), fmt_f64(s[1])]);
    }

    let extra: Vec<f64> = records
        .iter()
        .map(|r| r.cycle.x_range[1])
        .chain(traj.states.iter().map(|s| s[0]))
        .collect();
    let x_max = phase_extent(&p, &geom, &extra);
    let y_hint = records.iter().map(|r| r.cycle.y_range[1]).fold(initial[1], f64::max);
    let mut panel = nullcline_panel("Phase plane", &p, x_max, y_hint);
    let tr: Vec<[f64; 2]> = traj.states.iter().map(|s| [s[0], s[1]]).collect();
    panel.series.push(Series::line("trajectory", tr, "#bbbbbb").width(0.8));
    for r in &records {
        let (color, label) = match r.cycle.stability {
            Stability::Stable => ("#b22222", "stable cycle"),
            Stability::Unstable => ("#00008b", "unstable cycle"),
        };
        let label = match r.class {
            Some(k) => format!("{label} ({})", snake(&k)),
            None => label.to_string(),
        };
        panel
            .series
            .push(Series::line(label, r.cycle.points.clone(), color).width(2.0));
    }
    panel.series.extend(equilibrium_markers(&eqs));
    let report = SimulateReport {
        equilibria: eqs,
        trajectory: Some(summary),
        cycles: records,
        searches,
        comparison: None,
    };
    Ok(CommandOutput {
        record: record("simulate", cfg, Some(p), Payload::Simulate(report), diagnostics),
        table,
        panels: vec![panel],
        partial,
    })
}

fn simulate_3d(cfg: &RunConfig, tol: Tolerances) -> Result<CommandOutput> {
    let bp = cfg
        .bio_params
        .ok_or_else(|| Error::param("bio_params", "required for the three-species comparison"))?;
    bp.validate()?;
    let p = reduce_to_dimensionless(&bp)?;
    let t_end = cfg.t_end.unwrap_or(500.0);
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::param("t_end", "must be positive"));
    }
    let init = cfg.initial_3d.unwrap_or([0.0, 0.0, 0.0]);
    let s3 = State3::new(init[0], init[1], init[2])?;
    let comparison = simulate_compare_3d_2d(&bp, s3, t_end, tol)?;
    let mut diagnostics = Vec::new();
    if let Some(n) = &comparison.note {
        diagnostics.push(n.clone());
    }
    let tr3 = integrate(ThreeSpecies(bp), 0.0, &init, t_end, tol)?;
    let mut table = Table::new(&["t", "x", "y", "M", "P1", "P2"]);
    let mut pts3 = Vec::with_capacity(tr3.times.len());
    for (t, s) in tr3.times.iter().zip(&tr3.states) {
        let st = state3_to_state2(
            &State3 {
                m: s[0],
                p1: s[1],
                p2: s[2],
            },
            &bp,
        );
        pts3.push([st.x, st.y]);
        table.rows.push(vec![
            fmt_f64(*t),
            fmt_f64(st.x),
            fmt_f64(st.y),
            fmt_f64(s[0]),
            fmt_f64(s[1]),
            fmt_f64(s[2]),
        ]);
    }
    let s2 = state3_to_state2(&s3, &bp);
    let tr2 = integrate(Planar(p), 0.0, &[s2.x, s2.y], bp.k3 * t_end, tol)?;
    let pts2: Vec<[f64; 2]> = tr2.states.iter().map(|s| [s[0], s[1]]).collect();
    let geom = analyze_psi1_shape(&p)?;
    let eqs = find_equilibria_with(&p, &geom)?;
    let extra: Vec<f64> = pts3.iter().chain(&pts2).map(|q| q[0]).collect();
    let y_hint = pts3.iter().chain(&pts2).map(|q| q[1]).fold(0.0, f64::max);
    let mut panel = nullcline_panel(
        "Three-species model vs planar reduction",
        &p,
        phase_extent(&p, &geom, &extra),
        y_hint,
    );
    panel
        .series
        .push(Series::line("three-species", pts3, "#b22222").width(1.2));
    panel.series.push(Series::line("planar", pts2, "#00008b").width(1.0));
    panel.series.extend(equilibrium_markers(&eqs));
    let partial = !(tr2.is_complete() && tr3.is_complete());
    let report = SimulateReport {
        equilibria: eqs,
        trajectory: None,
        cycles: Vec::new(),
        searches: Vec::new(),
        comparison: Some(comparison),
    };
    Ok(CommandOutput {
        record: record("simulate", cfg, Some(p), Payload::Simulate(report), diagnostics),
        table,
        panels: vec![panel],
        partial,
    })
}

pub fn cmd_taxonomy(cfg: &RunConfig) -> Result<CommandOutput> {
    let p = cfg.dimensionless()?;
    let tags: Vec<SequenceTag> = match &cfg.tags {
        Some(list) => {
            if list.is_empty() {
                return Err(Error::param("tags", "must be nonempty"));
            }
            list.iter()
                .map(|t| {
                    t.parse::<SequenceTag>()
                        .map_err(|e| Error::param("tags", e.to_string()))
                })
                .collect::<Result<_>>()?
        }
        None => SequenceTag::all_admissible(),
    };
    let geom = analyze_psi1_shape(&p)?;
    geom.fold_pair()
        .map_err(|_| Error::param("params", "taxonomy needs an S-shaped psi1"))?;
    let entries = build_witnesses(&p, &tags, cfg.seed())?;
    let mut diagnostics = Vec::new();
    for e in &entries {
        if let Some(w) = &e.witness {
            // closed loop: the emitted witness must re-classify to its tag
            match classify_sequence(&w.params) {
                Ok(t) if t == e.tag => {}
                other => diagnostics.push(format!("{} witness re-classified as {other:?}", e.tag)),
            }
        }
    }
    let unreachable = entries.iter().filter(|e| !e.verified()).count();
    let mut table = Table::new(&["tag", "verified", "method", "a", "b1", "b2", "c", "v", "reason"]);
    for e in &entries {
        let (method, params) = match &e.witness {
            Some(w) => (
                match &w.construction {
                    Construction::PointFit { .. } => "point_fit",
                    Construction::TwoPointFit { .. } => "two_point_fit",
                    Construction::TangentFit { .. } => "tangent_fit",
                    Construction::SlopeFit { .. } => "slope_fit",
                    Construction::RandomDraw { .. } => "random_draw",
                },
                Some(w.params),
            ),
            None => ("", None),
        };
        table.rows.push(vec![
            e.tag.to_string(),
            e.verified().to_string(),
            method.to_string(),
            fmt_opt(params.map(|q| q.a)),
            fmt_opt(params.map(|q| q.b1)),
            fmt_opt(params.map(|q| q.b2)),
            fmt_opt(params.map(|q| q.c)),
            fmt_opt(params.map(|q| q.v)),
            e.reason.clone().unwrap_or_default(),
        ]);
    }
    // witnesses sharing the base shape, drawn against its psi1
    let x_max = phase_extent(&p, &geom, &[]);
    let mut panel = nullcline_panel("Witnesses on the base shape", &p, x_max, 0.0);
    panel.series.truncate(1);
    let palette = [
        "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22",
    ];
    let n = 300;
    for (k, e) in entries
        .iter()
        .filter(|e| e.witness.as_ref().is_some_and(|w| w.params.b1 == p.b1))
        .enumerate()
    {
        let w = e.witness.as_ref().expect("filtered");
        let pts = (0..=n).map(|i| {
            let x = x_max * i as f64 / n as f64;
            [x, psi2_jet(x, &w.params)[0]]
        });
        panel
            .series
            .push(Series::line(e.tag.to_string(), pts.collect(), palette[k % palette.len()]).width(1.0));
    }
    if unreachable > 0 {
        diagnostics.push(format!("{unreachable} tags have no witness"));
    }
    let partial = unreachable > 0 || !diagnostics.is_empty();
    Ok(CommandOutput {
        record: record(
            "taxonomy",
            cfg,
            Some(p),
            Payload::Taxonomy(TaxonomyReport { entries }),
            diagnostics,
        ),
        table,
        panels: vec![panel],
        partial,
    })
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter { .. } | Error::Domain(_) => EXIT_VALIDATION,
        _ => EXIT_NUMERIC,
    }
}

/// Size the worker pool from `CANARD_LAB_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .map_err(|_| Error::param(THREADS_ENV, format!("`{raw}` is not a positive integer")))?;
        if n == 0 {
            return Err(Error::param(THREADS_ENV, "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    Ok(())
}

fn timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix {secs}")
}

/// Run a command to completion; returns the process exit code. Nothing is
/// written when validation fails.
pub fn run(cli: &Cli) -> i32 {
    let args = cli.command.args();
    let outcome = RunConfig::from_args(args).and_then(|cfg| match &cli.command {
        Command::Analyze(_) => cmd_analyze(&cfg),
        Command::Sweep(_) => cmd_sweep(&cfg),
        Command::Simulate(_) => cmd_simulate(&cfg),
        Command::Taxonomy(_) => cmd_taxonomy(&cfg),
    });
    let out = match outcome {
        Ok(o) => o,
        Err(e) => {
            eprintln!("canard-lab {}: {e}", cli.command.name());
            return exit_code_for(&e);
        }
    };
    let ts = (!args.no_timestamp).then(timestamp);
    if let Err(e) = out.write(&args.out, ts.as_deref()) {
        eprintln!("canard-lab {}: writing outputs: {e}", cli.command.name());
        return EXIT_NUMERIC;
    }
    for d in &out.record.diagnostics {
        eprintln!("warning: {d}");
    }
    if out.partial {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    }
}
