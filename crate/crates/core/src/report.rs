//! Benchmark ingestion, validity/specificity tables, frontier export and run
//! manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scoring::ScoreAggregate;
use crate::stats::{
    self, composite_z, frontier_ceiling, nested_f_test, pearson_p, pearson_r, semi_partial, CapabilityStack,
    CorrelationCell, FrontierCurve, NestedFTest, StatsError,
};

/// The two general-capability proxies regressed out for specificity.
pub const PROXIES: [&str; 2] = ["arena_overall", "mmlu_pro"];

/// Creative benchmarks reported in the validity table.
pub const CREATIVE_BENCHMARKS: [&str; 6] = [
    "arena_cw",
    "eq_bench_cw",
    "mazur_cw",
    "hivemind_diversity",
    "noveltybench_utility",
    "liveideabench",
];

const HIVEMIND_BIN_PREFIX: &str = "hivemind_bin_";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed table: {0}")]
    Format(String),
    #[error("duplicate model id {0:?}")]
    DuplicateModel(String),
    #[error("row {model:?}, column {column:?}: {value:?} is not a number")]
    NonNumeric {
        model: String,
        column: String,
        value: String,
    },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("frontier bound violated for {test} x {benchmark}: |r|g| = {specificity}, ceiling = {ceiling}")]
    FrontierViolation {
        test: String,
        benchmark: String,
        specificity: f64,
        ceiling: f64,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for ReportError {
    fn from(e: csv::Error) -> Self {
        Self::Format(e.to_string())
    }
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "---"
}

/// Per-model benchmark scores with explicit missingness.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub columns: Vec<String>,
    pub rows: BTreeMap<String, BTreeMap<String, f64>>,
}

impl BenchmarkTable {
    /// The shipped per-model benchmark table.
    pub fn shipped() -> Self {
        parse_benchmarks(crate::data::BENCHMARKS_CSV.as_bytes()).expect("shipped benchmark table parses")
    }

    pub fn get(&self, model: &str, column: &str) -> Option<f64> {
        self.rows.get(model)?.get(column).copied()
    }

    /// Present values of one column, keyed by model.
    pub fn column(&self, name: &str) -> Result<BTreeMap<String, f64>> {
        if !self.columns.iter().any(|c| c == name) {
            return Err(ReportError::UnknownColumn(name.to_string()));
        }
        Ok(self
            .rows
            .iter()
            .filter_map(|(m, r)| r.get(name).map(|&v| (m.clone(), v)))
            .collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Reads a header-first delimited table whose first column is the model id.
/// `---` and empty cells are absent. Rows carrying `hivemind_bin_1` …
/// `hivemind_bin_10` percentages and no `hivemind_diversity` get the
/// diversity derived from the bins.
pub fn parse_benchmarks<R: Read>(input: R) -> Result<BenchmarkTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.len() < 2 {
        return Err(ReportError::Format(
            "need a model column and at least one score".into(),
        ));
    }
    let bins: Vec<usize> = (1..=10)
        .filter_map(|b| {
            headers
                .iter()
                .position(|h| h == &format!("{HIVEMIND_BIN_PREFIX}{b}"))
        })
        .collect();
    let mut columns: Vec<String> = headers[1..]
        .iter()
        .filter(|h| !h.starts_with(HIVEMIND_BIN_PREFIX))
        .cloned()
        .collect();
    if bins.len() == 10 && !columns.iter().any(|c| c == "hivemind_diversity") {
        columns.push("hivemind_diversity".into());
    }
    let mut rows = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let model = record.get(0).unwrap_or("").to_string();
        if model.is_empty() {
            return Err(ReportError::Format("empty model id".into()));
        }
        let mut row = BTreeMap::new();
        let mut bin_values = Vec::new();
        for (i, cell) in record.iter().enumerate().skip(1) {
            let column = &headers[i];
            if is_missing(cell) {
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| ReportError::NonNumeric {
                model: model.clone(),
                column: column.clone(),
                value: cell.to_string(),
            })?;
            if column.starts_with(HIVEMIND_BIN_PREFIX) {
                bin_values.push(value);
            } else {
                row.insert(column.clone(), value);
            }
        }
        if bin_values.len() == 10 && !row.contains_key("hivemind_diversity") {
            row.insert(
                "hivemind_diversity".into(),
                stats::hivemind_bin_mean(&bin_values)?,
            );
        }
        if rows.insert(model.clone(), row).is_some() {
            return Err(ReportError::DuplicateModel(model));
        }
    }
    Ok(BenchmarkTable { columns, rows })
}

pub fn ingest_benchmarks(path: impl AsRef<Path>) -> Result<BenchmarkTable> {
    parse_benchmarks(std::fs::File::open(path)?)
}

/// Per-model test aggregates, one row per (model, test, embedding).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TestScoreTable {
    pub rows: Vec<ScoreAggregate>,
}

#[derive(Deserialize)]
struct ScoreRow {
    model: String,
    test: String,
    embedding: String,
    mean: String,
    #[serde(default)]
    sem: String,
    #[serde(default)]
    trials: String,
}

impl TestScoreTable {
    pub fn shipped() -> Self {
        parse_test_scores(crate::data::TEST_SCORES_CSV.as_bytes()).expect("shipped score table parses")
    }

    pub fn from_aggregates(rows: Vec<ScoreAggregate>) -> Self {
        Self { rows }
    }

    /// Distinct (test, embedding) pairs in first-appearance order.
    pub fn series_keys(&self) -> Vec<(String, String)> {
        let mut seen = BTreeSet::new();
        self.rows
            .iter()
            .map(|r| (r.test.clone(), r.embedding.clone()))
            .filter(|k| seen.insert(k.clone()))
            .collect()
    }

    pub fn series(&self, test: &str, embedding: &str) -> BTreeMap<String, f64> {
        self.rows
            .iter()
            .filter(|r| r.test == test && r.embedding == embedding)
            .map(|r| (r.model.clone(), r.mean))
            .collect()
    }
}

/// Reads `model,test,embedding,mean,sem,trials`; sem and trials may be blank.
pub fn parse_test_scores<R: Read>(input: R) -> Result<TestScoreTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for row in reader.deserialize::<ScoreRow>() {
        let row = row?;
        let num = |column: &str, v: &str| -> Result<Option<f64>> {
            if is_missing(v) {
                return Ok(None);
            }
            v.parse().map(Some).map_err(|_| ReportError::NonNumeric {
                model: row.model.clone(),
                column: column.into(),
                value: v.into(),
            })
        };
        let Some(mean) = num("mean", &row.mean)? else {
            continue;
        };
        let key = (row.model.clone(), row.test.clone(), row.embedding.clone());
        if !seen.insert(key) {
            return Err(ReportError::DuplicateModel(format!(
                "{} ({}/{})",
                row.model, row.test, row.embedding
            )));
        }
        rows.push(ScoreAggregate {
            model: row.model.clone(),
            test: row.test.clone(),
            embedding: row.embedding.clone(),
            mean,
            sem: num("sem", &row.sem)?,
            trials: num("trials", &row.trials)?.map_or(0, |t| t as usize),
        });
    }
    Ok(TestScoreTable { rows })
}

pub fn ingest_test_scores(path: impl AsRef<Path>) -> Result<TestScoreTable> {
    parse_test_scores(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableOptions {
    pub benchmarks: Vec<String>,
    pub proxies: Vec<String>,
    /// Smallest pool a cell is computed on.
    pub min_n: usize,
    /// Slack allowed when asserting the frontier bound on each cell.
    pub frontier_eps: f64,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            benchmarks: CREATIVE_BENCHMARKS.iter().map(|s| s.to_string()).collect(),
            proxies: PROXIES.iter().map(|s| s.to_string()).collect(),
            min_n: PROXIES.len() + 4,
            frontier_eps: 1e-9,
        }
    }
}

/// A cell that could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsentCell {
    pub test: String,
    pub benchmark: String,
    pub embedding: String,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidityTable {
    pub cells: Vec<CorrelationCell>,
    pub absent: Vec<AbsentCell>,
}

impl ValidityTable {
    pub fn cell(&self, test: &str, embedding: &str, benchmark: &str) -> Option<&CorrelationCell> {
        self.cells
            .iter()
            .find(|c| c.test == test && c.embedding == embedding && c.benchmark == benchmark)
    }
}

/// Validity and specificity of one test series against one benchmark, on
/// the pool of models with the test, the benchmark and every proxy.
pub fn correlation_cell(
    test: &str,
    embedding: &str,
    scores: &BTreeMap<String, f64>,
    benchmark: &str,
    table: &BenchmarkTable,
    options: &TableOptions,
) -> Result<Result<CorrelationCell, AbsentCell>> {
    let target = table.column(benchmark)?;
    let proxies = options
        .proxies
        .iter()
        .map(|p| table.column(p))
        .collect::<Result<Vec<_>>>()?;
    let pool: Vec<String> = scores
        .keys()
        .filter(|m| target.contains_key(*m) && proxies.iter().all(|p| p.contains_key(*m)))
        .cloned()
        .collect();
    let absent = |reason: String| AbsentCell {
        test: test.into(),
        benchmark: benchmark.into(),
        embedding: embedding.into(),
        n: pool.len(),
        reason,
    };
    let min_n = options.min_n.max(options.proxies.len() + 4);
    if pool.len() < min_n {
        return Ok(Err(absent(format!("pool of {} is below {min_n}", pool.len()))));
    }
    let x: Vec<f64> = pool.iter().map(|m| scores[m]).collect();
    let y: Vec<f64> = pool.iter().map(|m| target[m]).collect();
    let g = CapabilityStack::new(
        options.proxies.clone(),
        proxies
            .iter()
            .map(|p| pool.iter().map(|m| p[m]).collect())
            .collect(),
    )?;
    let computed = pearson_r(&x, &y).and_then(|r| {
        let p = pearson_p(r, pool.len(), 0)?;
        let sp = semi_partial(&x, &y, &g)?;
        Ok((r, p, sp))
    });
    let (r, p, sp) = match computed {
        Ok(v) => v,
        Err(e @ (StatsError::Degenerate(_) | StatsError::Singular)) => return Ok(Err(absent(e.to_string()))),
        Err(e) => return Err(e.into()),
    };
    let cell = CorrelationCell {
        test: test.into(),
        benchmark: benchmark.into(),
        embedding: embedding.into(),
        validity_r: r,
        validity_p: p,
        specificity_r: sp.r,
        specificity_p: sp.p,
        n: pool.len(),
        k: g.k(),
        coupling: sp.coupling,
        pool,
    };
    if !cell.within_frontier(options.frontier_eps) {
        return Err(ReportError::FrontierViolation {
            test: cell.test,
            benchmark: cell.benchmark,
            specificity: cell.specificity_r,
            ceiling: frontier_ceiling(r.abs().min(1.0), cell.coupling)?,
        });
    }
    Ok(Ok(cell))
}

/// Every (test series, benchmark) cell, plus a `composite` row for each test
/// scored under more than one embedding.
pub fn build_validity_table(
    scores: &TestScoreTable,
    benchmarks: &BenchmarkTable,
    options: &TableOptions,
) -> Result<ValidityTable> {
    let mut series: Vec<(String, String, BTreeMap<String, f64>)> = scores
        .series_keys()
        .into_iter()
        .map(|(t, e)| {
            let s = scores.series(&t, &e);
            (t, e, s)
        })
        .collect();

    let mut per_test: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>> = BTreeMap::new();
    for (t, e, s) in &series {
        per_test
            .entry(t.clone())
            .or_default()
            .insert(e.clone(), s.clone());
    }
    for (test, embeddings) in per_test {
        if embeddings.len() > 1 {
            match composite_z(&embeddings) {
                Ok(z) => series.push((test, "composite".into(), z)),
                Err(e) => log::warn!("no composite for {test}: {e}"),
            }
        }
    }

    let mut table = ValidityTable::default();
    for (test, embedding, s) in &series {
        for bench in &options.benchmarks {
            match correlation_cell(test, embedding, s, bench, benchmarks, options)? {
                Ok(c) => table.cells.push(c),
                Err(a) => table.absent.push(a),
            }
        }
    }
    Ok(table)
}

/// Writes the validity table as CSV, computed cells first.
pub fn write_validity_csv<W: Write>(table: &ValidityTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "test",
        "embedding",
        "benchmark",
        "n",
        "k",
        "r",
        "p",
        "r_stars",
        "r_g",
        "p_g",
        "r_g_stars",
        "coupling",
        "ceiling",
        "absent_reason",
    ])?;
    for c in &table.cells {
        let ceiling = frontier_ceiling(c.validity_r.abs().min(1.0), c.coupling)?;
        w.write_record([
            c.test.clone(),
            c.embedding.clone(),
            c.benchmark.clone(),
            c.n.to_string(),
            c.k.to_string(),
            c.validity_r.to_string(),
            c.validity_p.to_string(),
            stats::stars(c.validity_p).to_string(),
            c.specificity_r.to_string(),
            c.specificity_p.to_string(),
            stats::stars(c.specificity_p).to_string(),
            c.coupling.to_string(),
            ceiling.to_string(),
            String::new(),
        ])?;
    }
    for a in &table.absent {
        let mut row = vec![
            a.test.clone(),
            a.embedding.clone(),
            a.benchmark.clone(),
            a.n.to_string(),
        ];
        row.extend(std::iter::repeat_n(String::new(), 9));
        row.push(a.reason.clone());
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn signed(v: f64) -> String {
    let s = format!("{v:+.2}");
    s.replacen("0.", ".", 1)
}

/// Human-readable rendering: one row per test series, `r / r|g` per
/// benchmark with stars, `n` in the header where pools agree.
pub fn render_table(table: &ValidityTable, benchmarks: &[String]) -> String {
    let mut keys: Vec<(String, String)> = Vec::new();
    for c in &table.cells {
        let k = (c.test.clone(), c.embedding.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = String::from("| test | embedding |");
    for b in benchmarks {
        out.push_str(&format!(" {b} |"));
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(benchmarks.len()));
    out.push('\n');
    for (t, e) in keys {
        out.push_str(&format!("| {t} | {e} |"));
        for b in benchmarks {
            match table.cell(&t, &e, b) {
                Some(c) => out.push_str(&format!(
                    " {}{} / {}{} (n={}) |",
                    signed(c.validity_r),
                    stats::stars(c.validity_p),
                    signed(c.specificity_r),
                    stats::stars(c.specificity_p),
                    c.n
                )),
                None => out.push_str(" --- |"),
            }
        }
        out.push('\n');
    }
    out
}

/// Benchmark–capability coupling R on the models with the benchmark and
/// every proxy.
pub fn benchmark_coupling(
    table: &BenchmarkTable,
    benchmark: &str,
    proxies: &[String],
) -> Result<(f64, usize)> {
    let target = table.column(benchmark)?;
    let cols = proxies
        .iter()
        .map(|p| table.column(p))
        .collect::<Result<Vec<_>>>()?;
    let pool: Vec<&String> = target
        .keys()
        .filter(|m| cols.iter().all(|c| c.contains_key(*m)))
        .collect();
    let y: Vec<f64> = pool.iter().map(|m| target[*m]).collect();
    let g: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| pool.iter().map(|m| c[*m]).collect())
        .collect();
    let fit = stats::ols_fit(&y, &g)?;
    Ok((fit.r_squared.clamp(0.0, 1.0).sqrt(), pool.len()))
}

/// One frontier panel to export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPanel {
    pub name: String,
    pub coupling: f64,
}

/// Writes `panel,coupling,kind,v,ceiling` rows: `samples` curve points per
/// panel followed by its optimum.
pub fn export_frontier<W: Write>(
    panels: &[FrontierPanel],
    samples: usize,
    out: W,
) -> Result<Vec<FrontierCurve>> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["panel", "coupling", "kind", "v", "ceiling"])?;
    let mut curves = Vec::with_capacity(panels.len());
    for panel in panels {
        let curve = FrontierCurve::new(panel.coupling, samples)?;
        for &(v, c) in &curve.points {
            w.write_record([
                panel.name.clone(),
                panel.coupling.to_string(),
                "curve".into(),
                v.to_string(),
                c.to_string(),
            ])?;
        }
        w.write_record([
            panel.name.clone(),
            panel.coupling.to_string(),
            "optimum".into(),
            curve.optimum.0.to_string(),
            curve.optimum.1.to_string(),
        ])?;
        curves.push(curve);
    }
    w.flush()?;
    Ok(curves)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedRegression {
    pub target: String,
    pub base: Vec<String>,
    pub added: Vec<String>,
    pub pool: Vec<String>,
    pub test: NestedFTest,
}

/// Compares `target ~ base` with `target ~ base + added` on the models that
/// have every series. Series are named `test/embedding`.
pub fn nested_regression(
    scores: &TestScoreTable,
    benchmarks: &BenchmarkTable,
    target: &str,
    base: &[(&str, &str)],
    added: &[(&str, &str)],
) -> Result<NestedRegression> {
    let y_all = benchmarks.column(target)?;
    let fetch = |list: &[(&str, &str)]| -> Vec<BTreeMap<String, f64>> {
        list.iter().map(|(t, e)| scores.series(t, e)).collect()
    };
    let base_s = fetch(base);
    let added_s = fetch(added);
    let pool: Vec<String> = y_all
        .keys()
        .filter(|m| base_s.iter().chain(&added_s).all(|s| s.contains_key(*m)))
        .cloned()
        .collect();
    let cols = |list: &[BTreeMap<String, f64>]| -> Vec<Vec<f64>> {
        list.iter().map(|s| pool.iter().map(|m| s[m]).collect()).collect()
    };
    let y: Vec<f64> = pool.iter().map(|m| y_all[m]).collect();
    let test = nested_f_test(&y, &cols(&base_s), &cols(&added_s))?;
    let name = |list: &[(&str, &str)]| list.iter().map(|(t, e)| format!("{t}/{e}")).collect();
    Ok(NestedRegression {
        target: target.into(),
        base: name(base),
        added: name(added),
        pool,
        test,
    })
}

/// A named file and its SHA-256.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub path: String,
    pub sha256: String,
}

pub fn file_digest(name: &str, path: impl AsRef<Path>) -> Result<FileDigest> {
    let mut file = std::fs::File::open(path.as_ref())?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(FileDigest {
        name: name.into(),
        path: path.as_ref().display().to_string(),
        sha256: hex::encode(hasher.finalize()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolDefinition {
    pub description: String,
    pub size: usize,
    pub seed: Option<u64>,
    /// SHA-256 over the newline-joined members.
    pub digest: String,
}

impl PoolDefinition {
    pub fn new<S: AsRef<str>>(description: &str, members: &[S], seed: Option<u64>) -> Self {
        let mut h = Sha256::new();
        for m in members {
            h.update(m.as_ref().as_bytes());
            h.update(b"\n");
        }
        Self {
            description: description.into(),
            size: members.len(),
            seed,
            digest: hex::encode(h.finalize()),
        }
    }
}

/// Everything needed to regenerate a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub providers: Vec<FileDigest>,
    pub inputs: Vec<FileDigest>,
    pub seeds: BTreeMap<String, u64>,
    pub templates: BTreeMap<String, String>,
    pub pools: BTreeMap<String, PoolDefinition>,
}

impl RunManifest {
    pub fn new() -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").into(),
            providers: Vec::new(),
            inputs: Vec::new(),
            seeds: BTreeMap::new(),
            templates: crate::admin::template::template_digests(),
            pools: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl Default for RunManifest {
    fn default() -> Self {
        Self::new()
    }
}
