use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lexiscope::admin::client::HttpChatClient;
use lexiscope::admin::replay::{aggregate, cdat_cells, random_noun_baseline, write_scores};
use lexiscope::admin::store::read_records;
use lexiscope::admin::{replay, run_session, ReplayOptions, SessionPlan, TestKind, TrialScore, TrialStore};
use lexiscope::anchors::{build_noun_pool, load_anchor_bank, sample_relation_distant_anchors, AnchorBank};
use lexiscope::gating::cdat_gate;
use lexiscope::greedy::{greedy_campaign, random_campaign, GreedyVocab};
use lexiscope::report::{
    benchmark_coupling, build_validity_table, export_frontier, file_digest, ingest_benchmarks,
    ingest_test_scores, nested_regression, render_table, write_validity_csv, BenchmarkTable, FrontierPanel,
    PoolDefinition, RunManifest, TableOptions, TestScoreTable, ValidityTable,
};
use lexiscope::scoring::{drat_threshold, load_rat_items, parse_rat_items, RatItem};
use lexiscope::{data, Embedder, ScoreAggregate};
use serde_json::json;

use crate::config::Config;
use crate::{
    AdministerArgs, AnchorsCommand, Cli, Command, FrontierArgs, GateArgs, GreedyArgs, ReportArgs, ScoreArgs,
    TableFormat, TableInputs, Usage,
};

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref(), cli.providers.as_deref())?;
    match &cli.command {
        Command::Administer(a) => administer(cli, &cfg, a),
        Command::Score(a) => score(cli, &cfg, a),
        Command::Gate(a) => gate(cli, &cfg, a),
        Command::Anchors(a) => anchors(cli, &cfg, a),
        Command::Greedy(a) => greedy(cli, &cfg, a),
        Command::Analyze(a) => {
            let (scores, benchmarks, options) = tables(&cfg, &a.inputs)?;
            let table = build_validity_table(&scores, &benchmarks, &options)?;
            let mut out = output(a.out.as_deref())?;
            match a.format {
                TableFormat::Csv => write_validity_csv(&table, &mut out)?,
                TableFormat::Markdown => {
                    out.write_all(render_table(&table, &options.benchmarks).as_bytes())?
                }
                TableFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&table)?)?,
            }
            out.flush()?;
            Ok(())
        }
        Command::Frontier(a) => frontier(&cfg, a),
        Command::Report(a) => report(cli, &cfg, a),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_words(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

fn store_path(cli: &Cli) -> Result<&Path> {
    cli.store
        .as_deref()
        .ok_or_else(|| usage("this command needs --store"))
}

fn bank(spec: &str) -> Result<AnchorBank> {
    Ok(match spec {
        "scientific" => AnchorBank::scientific(),
        "relation-distant" => AnchorBank::relation_distant(),
        path => load_anchor_bank(path).with_context(|| format!("loading anchor bank {path}"))?,
    })
}

fn rat_items(path: Option<&Path>) -> Result<Vec<RatItem>> {
    Ok(match path {
        Some(p) => load_rat_items(p).with_context(|| format!("loading RAT items from {}", p.display()))?,
        None => parse_rat_items(data::RAT_ITEMS)?,
    })
}

fn lexicon() -> HashSet<String> {
    data::nouns().into_iter().map(String::from).collect()
}

fn administer(cli: &Cli, cfg: &Config, a: &AdministerArgs) -> Result<()> {
    let cues = || -> Result<Vec<String>> {
        match &a.cues {
            Some(p) => read_words(p),
            None => Ok(data::cues().into_iter().map(String::from).collect()),
        }
    };
    let mut plan = match a.test {
        TestKind::Dat => SessionPlan::dat(&a.model),
        TestKind::Cdat => SessionPlan::cdat(&a.model, cues()?),
        TestKind::Pace => SessionPlan::pace(&a.model, cues()?),
        TestKind::Rat => SessionPlan::rat(&a.model, rat_items(a.rat_items.as_deref())?),
        TestKind::Drat => SessionPlan::drat(&a.model, bank(&a.bank)?.view(a.k)?),
    };
    if let Some(t) = a.trials {
        plan.trials = t;
    }
    if let Some(t) = &a.temperatures {
        plan.temperatures = t.clone();
    }
    plan.base_seed = cli.seed;
    plan.validate()?;

    if a.dry_run {
        let cells = plan.cells()?;
        let summary = json!({
            "plan": plan,
            "cells": cells.len(),
            "first_cell": cells.first().map(|c| &c.key),
        });
        println!("{}", serde_json::to_string_pretty(&summary)?);
        return Ok(());
    }

    let client = HttpChatClient::new(cfg.endpoint(&a.endpoint)?.clone())?;
    let mut store = TrialStore::open(store_path(cli)?)?;
    let report = run_session(&plan, &client, &mut store, &cfg.session.options(a.retry_failed))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn score(cli: &Cli, cfg: &Config, a: &ScoreArgs) -> Result<()> {
    let path = store_path(cli)?;
    let records = read_records(path).with_context(|| format!("reading store {}", path.display()))?;
    let refs: Vec<_> = records.iter().collect();
    let pool_path = a.calibration_pool.as_ref().or(cfg.pools.calibration.as_ref());
    let drat_pool = pool_path.map(|p| read_words(p)).transpose()?;
    if drat_pool.is_none() && records.iter().any(|r| r.test == TestKind::Drat) {
        log::warn!("no calibration pool given; DRAT trials will be left unscored");
    }
    let options = ReplayOptions {
        drat_n_min: a.n_min,
        drat_quantile: a.quantile,
        drat_gate: a.gate,
        drat_pool,
        rat_items: rat_items(a.rat_items.as_deref())?,
        ..Default::default()
    };

    let mut rows: Vec<TrialScore> = Vec::new();
    let mut seen = HashSet::new();
    for name in &a.providers {
        let provider = cfg.provider(name, None)?;
        for row in replay(&refs, provider.as_ref(), &options)? {
            // RAT rows do not depend on the provider
            if seen.insert((row.trial_id.clone(), row.embedding.clone())) {
                rows.push(row);
            }
        }
    }
    write_scores(&rows, output(a.out.as_deref())?)?;
    if let Some(path) = &a.aggregate {
        write_aggregates(&aggregate(&rows), path)?;
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    log::info!("{} rows, {failed} with errors", rows.len());
    Ok(())
}

fn write_aggregates(rows: &[ScoreAggregate], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows(path: &Path) -> Result<Vec<TrialScore>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn gate(cli: &Cli, cfg: &Config, a: &GateArgs) -> Result<()> {
    let provider = cfg.provider(&a.provider, None)?;
    let rows: Vec<TrialScore> = read_rows(&a.scores)?
        .into_iter()
        .filter(|r| r.test == TestKind::Cdat && r.embedding == provider.name())
        .collect();
    if rows.is_empty() {
        bail!(usage(format!("no CDAT rows scored under {}", a.provider)));
    }
    let cells = cdat_cells(&rows);
    let cues: Vec<String> = rows
        .iter()
        .filter_map(|r| r.cue.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let seed = cli.seed.unwrap_or(0);
    let size = a.baseline_size.unwrap_or(cfg.pools.baseline_size);
    let pool = build_noun_pool(&data::nouns(), provider.as_ref(), size, seed)?;
    let baseline = random_noun_baseline(&cues, &pool.nouns, provider.as_ref())?;
    let outcome = cdat_gate(&cells, &baseline, a.alpha)?;
    let doc = json!({
        "provider": a.provider,
        "alpha": a.alpha,
        "baseline_pool": PoolDefinition::new("random nouns", &pool.nouns, Some(seed)),
        "baseline_mean": lexiscope::stats::mean(&baseline),
        "decisions": outcome.decisions,
        "scores": outcome.scores,
    });
    let mut out = output(a.out.as_deref())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
    out.flush()?;
    Ok(())
}

fn anchors(cli: &Cli, cfg: &Config, cmd: &AnchorsCommand) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match cmd {
        AnchorsCommand::Show { bank: spec, k } => {
            for set in bank(spec)?.view(*k)? {
                println!("{}\t{}", set.set_index, set.anchors.join(" | "));
            }
        }
        AnchorsCommand::Sample {
            provider,
            k,
            tau,
            count,
            pool_size,
            restarts,
        } => {
            let p = cfg.provider(provider, Some(&lexicon()))?;
            let pool = build_noun_pool(&data::nouns(), p.as_ref(), *pool_size, seed)?;
            for i in 0..*count as u64 {
                let set = sample_relation_distant_anchors(&pool, *k, *tau, p.as_ref(), seed + i, *restarts)?;
                let terms = set.anchors.join(" | ");
                if *k == 4 {
                    // loadable as a bank with --bank
                    println!("sampled-{provider}, relation-distant, {terms}");
                } else {
                    println!("{terms}");
                }
            }
        }
        AnchorsCommand::Calibrate {
            bank: spec,
            k,
            provider,
            pool,
            quantile,
            gate,
            set,
        } => {
            let path = pool
                .as_ref()
                .or(cfg.pools.calibration.as_ref())
                .ok_or_else(|| usage("calibration needs --pool or pools.calibration"))?;
            let words = read_words(path)?;
            let p = cfg.provider(provider, None)?;
            let bank = bank(spec)?;
            let sets = match set {
                Some(n) => vec![bank.anchor_set(*n, *k)?],
                None => bank.view(*k)?,
            };
            for mut s in sets {
                let tau = drat_threshold(&mut s, &words, *quantile, p.as_ref(), *gate)?;
                let line =
                    json!({"set": s.set_index, "anchors": s.anchors, "threshold": tau, "quantile": quantile});
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn greedy(cli: &Cli, cfg: &Config, a: &GreedyArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let keep = lexicon();
    let selector = cfg.provider(&a.provider, Some(&keep))?;
    let scorers = a
        .scorers
        .iter()
        .map(|s| cfg.provider(s, Some(&keep)))
        .collect::<Result<Vec<_>>>()?;
    let scorer_refs: Vec<&dyn Embedder> = scorers.iter().map(|b| b.as_ref()).collect();

    let pool = build_noun_pool(&data::nouns(), selector.as_ref(), 0, seed)?;
    let vocab = GreedyVocab::new(&pool, selector.as_ref())?;
    log::info!("greedy vocabulary: {} words", vocab.len());
    let greedy = greedy_campaign(&vocab, &scorer_refs, a.runs, a.n)?;
    let random = (a.random > 0)
        .then(|| random_campaign(&vocab, &scorer_refs, a.random, a.n, seed))
        .transpose()?;
    let doc = json!({
        "vocabulary": PoolDefinition::new("lexicon nouns embeddable by the selection provider", vocab.words(), None),
        "n": a.n,
        "greedy": greedy,
        "random": random,
    });
    let mut out = output(a.out.as_deref())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
    out.flush()?;
    Ok(())
}

fn first_path<'a>(arg: Option<&'a PathBuf>, cfg: Option<&'a PathBuf>) -> Option<&'a PathBuf> {
    arg.or(cfg)
}

fn benchmark_table(path: Option<&PathBuf>) -> Result<BenchmarkTable> {
    Ok(match path {
        Some(p) => ingest_benchmarks(p).with_context(|| format!("reading {}", p.display()))?,
        None => BenchmarkTable::shipped(),
    })
}

fn tables(cfg: &Config, inputs: &TableInputs) -> Result<(TestScoreTable, BenchmarkTable, TableOptions)> {
    let scores = match first_path(inputs.scores.as_ref(), cfg.analysis.scores.as_ref()) {
        Some(p) => ingest_test_scores(p).with_context(|| format!("reading {}", p.display()))?,
        None => TestScoreTable::shipped(),
    };
    let benchmarks = benchmark_table(first_path(
        inputs.benchmarks.as_ref(),
        cfg.analysis.benchmarks.as_ref(),
    ))?;
    let mut options = TableOptions::default();
    if !inputs.targets.is_empty() {
        options.benchmarks = inputs.targets.clone();
    } else if !cfg.analysis.targets.is_empty() {
        options.benchmarks = cfg.analysis.targets.clone();
    }
    if !cfg.analysis.proxies.is_empty() {
        options.proxies = cfg.analysis.proxies.clone();
        options.min_n = options.proxies.len() + 4;
    }
    if let Some(n) = cfg.analysis.min_n {
        options.min_n = n;
    }
    Ok((scores, benchmarks, options))
}

fn parse_coupling(spec: &str) -> Result<FrontierPanel> {
    let (name, r) = spec
        .split_once('=')
        .ok_or_else(|| usage(format!("expected name=R, got {spec:?}")))?;
    let coupling: f64 = r
        .trim()
        .parse()
        .map_err(|_| usage(format!("coupling {r:?} is not a number")))?;
    Ok(FrontierPanel {
        name: name.trim().into(),
        coupling,
    })
}

/// Panels from explicit couplings and benchmarks, then the configuration,
/// then every default benchmark whose coupling can be measured.
fn panels(
    cfg: &Config,
    couplings: &[String],
    benchmarks: &[String],
    table: &BenchmarkTable,
) -> Result<Vec<FrontierPanel>> {
    let proxies = if cfg.analysis.proxies.is_empty() {
        TableOptions::default().proxies
    } else {
        cfg.analysis.proxies.clone()
    };
    let measured = |name: &str, bench: &str| -> Result<FrontierPanel> {
        let (coupling, n) = benchmark_coupling(table, bench, &proxies)?;
        log::info!("{bench}: coupling {coupling:.3} on {n} models");
        Ok(FrontierPanel {
            name: name.into(),
            coupling,
        })
    };
    let mut out: Vec<FrontierPanel> = couplings
        .iter()
        .map(|c| parse_coupling(c))
        .collect::<Result<_>>()?;
    for b in benchmarks {
        out.push(measured(b, b)?);
    }
    if !out.is_empty() {
        return Ok(out);
    }
    for p in &cfg.analysis.panels {
        out.push(match (p.coupling, &p.benchmark) {
            (Some(c), _) => FrontierPanel {
                name: p.name.clone(),
                coupling: c,
            },
            (None, Some(b)) => measured(&p.name, b)?,
            (None, None) => bail!(usage(format!(
                "panel {:?} needs a benchmark or a coupling",
                p.name
            ))),
        });
    }
    if !out.is_empty() {
        return Ok(out);
    }
    for b in TableOptions::default().benchmarks {
        match measured(&b, &b) {
            Ok(p) => out.push(p),
            Err(e) => log::warn!("skipping {b}: {e:#}"),
        }
    }
    Ok(out)
}

fn frontier(cfg: &Config, a: &FrontierArgs) -> Result<()> {
    let table = benchmark_table(first_path(
        a.benchmark_table.as_ref(),
        cfg.analysis.benchmarks.as_ref(),
    ))?;
    let panels = panels(cfg, &a.couplings, &a.benchmarks, &table)?;
    let mut out = output(a.out.as_deref())?;
    export_frontier(&panels, a.samples, &mut out)?;
    out.flush()?;
    Ok(())
}

fn split_series(s: &str) -> Result<(&str, &str)> {
    s.split_once('/')
        .ok_or_else(|| usage(format!("series {s:?} should be written test/embedding")))
}

fn report(cli: &Cli, cfg: &Config, a: &ReportArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let (scores, benchmarks, options) = tables(cfg, &a.inputs)?;
    let table: ValidityTable = build_validity_table(&scores, &benchmarks, &options)?;
    let file = |name: &str| -> Result<BufWriter<File>> {
        let p = a.out_dir.join(name);
        Ok(BufWriter::new(
            File::create(&p).with_context(|| format!("creating {}", p.display()))?,
        ))
    };

    write_validity_csv(&table, file("validity.csv")?)?;
    file("validity.md")?.write_all(render_table(&table, &options.benchmarks).as_bytes())?;
    serde_json::to_writer_pretty(file("validity.json")?, &table)?;

    let panels = panels(cfg, &[], &[], &benchmarks)?;
    export_frontier(&panels, a.samples, file("frontier.csv")?)?;

    if !cfg.analysis.nested.is_empty() {
        let mut results = Vec::new();
        for spec in &cfg.analysis.nested {
            let base = spec
                .base
                .iter()
                .map(|s| split_series(s))
                .collect::<Result<Vec<_>>>()?;
            let added = spec
                .added
                .iter()
                .map(|s| split_series(s))
                .collect::<Result<Vec<_>>>()?;
            results.push(nested_regression(
                &scores,
                &benchmarks,
                &spec.target,
                &base,
                &added,
            )?);
        }
        serde_json::to_writer_pretty(file("nested.json")?, &results)?;
    }

    let mut manifest = RunManifest::new();
    let inputs = [
        (
            "scores",
            first_path(a.inputs.scores.as_ref(), cfg.analysis.scores.as_ref()),
        ),
        (
            "benchmarks",
            first_path(a.inputs.benchmarks.as_ref(), cfg.analysis.benchmarks.as_ref()),
        ),
        ("config", cli.config.as_ref()),
        ("providers", cli.providers.as_ref()),
    ];
    for (name, path) in inputs {
        if let Some(p) = path {
            manifest.inputs.push(file_digest(name, p)?);
        }
    }
    if let Some(seed) = cli.seed {
        manifest.seeds.insert("global".into(), seed);
    }
    if let Some(p) = &cfg.pools.calibration {
        let words = read_words(p)?;
        manifest.pools.insert(
            "calibration".into(),
            PoolDefinition::new(&p.display().to_string(), &words, None),
        );
    }
    file("manifest.json")?.write_all(manifest.to_json()?.as_bytes())?;

    println!(
        "{} cells, {} absent, {} frontier panels written to {}",
        table.cells.len(),
        table.absent.len(),
        panels.len(),
        a.out_dir.display()
    );
    Ok(())
}
