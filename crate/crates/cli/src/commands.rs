use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use edgejury_core::accounting::{aggregate_query, format_usd, median_ttft, method_summary, stage_breakdown, UsageSummary};
use edgejury_core::evalharness::{
    compute_stat_report, load_benchmark, parse_sample, read_results, run_method, write_benchmark, write_results,
    EvalContext, SampleManifest, StatOptions, PARSE_SAMPLE_SIZE,
};
use edgejury_core::gateway::write_fixture;
use edgejury_core::synthetic::{mc_suite, seasons_fixtures, seasons_question, SuiteOptions};
use edgejury_core::verifier::selective_policy;
use edgejury_core::{
    run_council, BenchmarkSet, CallTrace, MethodResult, MethodSpec, PricingModel, QueryUsage, Question, Stage,
    StatReport, SystemOutput,
};

use crate::config::{example_mock_config, RunConfig};
use crate::manifest::{method_config_hash, now, BenchmarkRecord, RunManifest, EM_NORMALIZATION, UNVERSIONED};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const STAT_REPORT_FILE: &str = "stat_report.json";
pub const TRACES_FILE: &str = "traces.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARSE_SAMPLE_FILE: &str = "parse_sample.jsonl";
pub const PARSE_SAMPLE_KEY_FILE: &str = "parse_sample_key.jsonl";

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn write_traces(path: &Path, traces: &[CallTrace]) -> Result<()> {
    write_jsonl(path, traces)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for t in rows {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_stat_report(path: &Path, report: &StatReport) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(report)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn usage_line(u: &QueryUsage) -> String {
    let mut s = format!(
        "calls {} | tokens {} in / {} out / {} total",
        u.calls, u.input_tokens, u.output_tokens, u.total_tokens
    );
    if let Some(n) = u.neurons {
        s.push_str(&format!(" | neurons {n}"));
    }
    if let Some(usd) = u.usd {
        s.push_str(&format!(" | {}", format_usd(usd)));
    }
    if u.estimated_calls > 0 {
        s.push_str(&format!(" | {} estimated", u.estimated_calls));
    }
    s
}

/// Runs the council on one question and prints the answer, claim tags and
/// usage.
pub async fn ask(config: &RunConfig, question: &Question, out_dir: &Path, w: &mut dyn Write) -> Result<()> {
    let council = config.council(config.prompt_catalog()?);
    let gateway = config.gateway()?;
    let result = run_council(&gateway, question, &council, "EJ-Full").await?;

    match &result.system_output {
        SystemOutput::Choice(_) => {
            writeln!(w, "System output: {}", result.system_output.display())?;
        }
        SystemOutput::Text(answer) => {
            let shown = match &result.verification {
                Some(report) => selective_policy(report, answer).text().to_string(),
                None => answer.clone(),
            };
            writeln!(w, "{shown}")?;
        }
    }
    if let Some(report) = &result.verification {
        writeln!(w)?;
        if report.unverified {
            writeln!(w, "Claims: unverified")?;
        } else {
            writeln!(w, "Claims:")?;
            for c in &report.claims {
                writeln!(w, "  [{}] {} (support {}, contradict {})", c.tag.as_str(), c.claim, c.s, c.c)?;
            }
        }
    }
    let usage = aggregate_query(&result.traces, &config.pricing);
    writeln!(w)?;
    writeln!(w, "Usage: {}", usage_line(&usage))?;
    if !result.flags.is_empty() {
        writeln!(w, "Flags: {}", result.flags.join(", "))?;
    }

    std::fs::create_dir_all(out_dir)?;
    write_traces(&out_dir.join(TRACES_FILE), &result.traces)?;
    Ok(())
}

pub struct EvalOutcome {
    pub results: Vec<MethodResult>,
    pub report: StatReport,
    pub manifest: RunManifest,
}

/// Runs `specs` over the benchmark and writes results, traces, the
/// statistics report and the manifest into `out_dir`.
pub async fn eval(
    command: &str,
    config: &RunConfig,
    benchmark_path: &Path,
    specs: &[MethodSpec],
    out_dir: &Path,
) -> Result<EvalOutcome> {
    let started_at = now();
    let set = load_benchmark(benchmark_path, None)
        .with_context(|| format!("loading benchmark {}", benchmark_path.display()))?;
    let prompts = config.prompt_catalog()?;
    let prompt_hashes = prompts.hashes();
    let council = config.council(prompts);
    let baselines = config.baselines();
    let gateway = config.gateway()?;
    let ctx = EvalContext {
        gateway: &gateway,
        council: &council,
        baselines: &baselines,
        pricing: config.pricing,
        question_parallelism: config.question_parallelism,
    };

    let mut results = Vec::with_capacity(specs.len());
    let mut traces = Vec::new();
    for spec in specs {
        let run = run_method(&ctx, spec, &set).await?;
        results.push(run.result);
        traces.extend(run.traces);
    }
    let stat_options = config.stat_options();
    let report = compute_stat_report(&results, &stat_options)?;

    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let results_path = out_dir.join(RESULTS_FILE);
    let mut w = create(&results_path)?;
    write_results(&mut w, &results)?;
    w.flush()?;
    let trace_path = out_dir.join(TRACES_FILE);
    write_traces(&trace_path, &traces)?;
    let report_path = out_dir.join(STAT_REPORT_FILE);
    write_stat_report(&report_path, &report)?;
    let (blind, key) = parse_sample(&results, PARSE_SAMPLE_SIZE, config.run_seed);
    let parse_sample_path = (!blind.is_empty()).then(|| out_dir.join(PARSE_SAMPLE_FILE));
    if let Some(path) = &parse_sample_path {
        write_jsonl(path, &blind)?;
        write_jsonl(&out_dir.join(PARSE_SAMPLE_KEY_FILE), &key)?;
    }

    let manifest = RunManifest {
        command: command.to_string(),
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        commit: UNVERSIONED.to_string(),
        config_hash: config.hash(),
        method_config_hashes: specs.iter().map(|s| (s.id(), method_config_hash(config, s))).collect(),
        prompt_hashes,
        benchmark: Some(benchmark_record(&set, benchmark_path)),
        methods: specs.iter().map(MethodSpec::id).collect(),
        stat_options,
        em_normalization: EM_NORMALIZATION.to_string(),
        started_at,
        finished_at: now(),
        trace_path: trace_path.display().to_string(),
        results_path: Some(results_path.display().to_string()),
        stat_report_path: Some(report_path.display().to_string()),
        parse_sample_path: parse_sample_path.map(|p| p.display().to_string()),
        reviewer_sees_question: true,
    };
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(EvalOutcome { results, report, manifest })
}

fn benchmark_record(set: &BenchmarkSet, path: &Path) -> BenchmarkRecord {
    BenchmarkRecord {
        name: set.name.clone(),
        path: path.display().to_string(),
        kind: set.kind,
        manifest: set.sample_manifest.clone(),
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

pub fn print_eval(outcome: &EvalOutcome, w: &mut dyn Write) -> Result<()> {
    let r = &outcome.report;
    writeln!(w, "{:<16} {:>5} {:>8}  {:<17} {:>6} {:>7} {:>8} {:>8}", "method", "n", "accuracy", "95% CI", "calls", "tokens", "neurons", "usd")?;
    for m in &r.methods {
        writeln!(
            w,
            "{:<16} {:>5} {:>8.3}  [{:.3}, {:.3}]    {:>6} {:>7} {:>8} {:>8}",
            m.method,
            m.n,
            m.accuracy,
            m.ci.0,
            m.ci.1,
            m.usage.calls,
            m.usage.total_tokens,
            fmt_opt(m.usage.neurons, 0),
            m.usage.usd.map(format_usd).unwrap_or_else(|| "-".into()),
        )?;
    }
    if let Some(first) = r.comparisons.first() {
        writeln!(w)?;
        writeln!(w, "Paired comparisons against {} (McNemar, Holm-adjusted):", first.pair.0)?;
        for c in &r.comparisons {
            writeln!(
                w,
                "  vs {:<14} delta {:+.3}  b {:>4}  c {:>4}  chi2 {:>7.3}  p {:.4}  p_holm {:.4}{}",
                c.pair.1,
                c.delta,
                c.b,
                c.c,
                c.chi2,
                c.p_raw,
                c.p_adjusted,
                if c.reject { "  *" } else { "" }
            )?;
        }
    }
    for m in r.methods.iter().filter(|m| m.selective.is_some()) {
        let s = m.selective.unwrap();
        writeln!(
            w,
            "Selective answering ({}): coverage {:.3} ({}/{}), accuracy when covered {}",
            m.method,
            s.coverage,
            s.covered,
            s.total,
            fmt_opt(s.accuracy, 4)
        )?;
    }
    let flagged: usize = outcome.results.iter().flat_map(|m| &m.records).filter(|r| !r.flags.is_empty()).count();
    if flagged > 0 {
        writeln!(w, "{flagged} question records carry failure or parse flags; see {RESULTS_FILE}")?;
    }
    Ok(())
}

pub fn print_ablation(outcome: &EvalOutcome, w: &mut dyn Write) -> Result<()> {
    let r = &outcome.report;
    let full = r.methods.first().map(|m| m.accuracy).unwrap_or(0.0);
    writeln!(w, "{:<14} {:>6} {:>8} {:>9} {:>5} {:>5} {:>8} {:>8}", "variant", "calls", "accuracy", "delta", "b", "c", "chi2", "p_holm")?;
    for (i, m) in r.methods.iter().enumerate() {
        let cmp = r.comparisons.iter().find(|c| c.pair.1 == m.method);
        let (b, c, chi2, p) = match cmp {
            Some(c) => (c.b.to_string(), c.c.to_string(), format!("{:.3}", c.chi2), format!("{:.4}", c.p_adjusted)),
            None => ("-".into(), "-".into(), "-".into(), "-".into()),
        };
        let calls = outcome.results[i].records.first().map(|r| r.usage.calls).unwrap_or(0);
        writeln!(
            w,
            "{:<14} {:>6} {:>8.3} {:>+9.3} {:>5} {:>5} {:>8} {:>8}",
            m.method,
            calls,
            m.accuracy,
            m.accuracy - full,
            b,
            c,
            chi2,
            p
        )?;
    }
    Ok(())
}

pub struct TraceFile {
    pub traces: Vec<CallTrace>,
    pub skipped: usize,
}

/// Reads a trace file, skipping lines that do not parse.
pub fn read_traces(path: &Path) -> Result<TraceFile> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut traces = Vec::new();
    let mut skipped = 0;
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CallTrace>(&line) {
            Ok(t) => traces.push(t),
            Err(_) => skipped += 1,
        }
    }
    Ok(TraceFile { traces, skipped })
}

/// Per-method usage medians over the queries in `traces`.
pub fn usage_by_method(traces: &[CallTrace], pricing: &PricingModel) -> BTreeMap<String, UsageSummary> {
    let mut grouped: BTreeMap<&str, BTreeMap<&str, Vec<CallTrace>>> = BTreeMap::new();
    for t in traces {
        grouped.entry(&t.method).or_default().entry(&t.query_id).or_default().push(t.clone());
    }
    grouped
        .into_iter()
        .map(|(method, queries)| {
            let usages: Vec<QueryUsage> = queries.values().map(|ts| aggregate_query(ts, pricing)).collect();
            (method.to_string(), method_summary(&usages))
        })
        .collect()
}

pub fn report(path: &Path, pricing: &PricingModel, w: &mut dyn Write) -> Result<()> {
    let file = read_traces(path)?;
    let council: Vec<CallTrace> = file.traces.iter().filter(|t| t.stage != Stage::Baseline).cloned().collect();
    writeln!(w, "Stage latency (per-query stage wall time, ms)")?;
    writeln!(w, "{:<24} {:>8} {:>8} {:>8} {:>7}", "stage", "p50", "p95", "% p50", "calls")?;
    for row in stage_breakdown(&council) {
        writeln!(
            w,
            "{:<24} {:>8} {:>8} {:>7.0}% {:>7}",
            row.stage.label(),
            row.p50_ms,
            row.p95_ms,
            row.percent_of_total,
            row.calls
        )?;
    }
    if let Some((ttft, n)) = median_ttft(&council) {
        writeln!(w, "Median TTFT of first Stage-1 response: {ttft:.0} ms ({n} queries)")?;
    }

    let by_method = usage_by_method(&file.traces, pricing);
    let with_neurons = by_method.values().any(|u| u.neurons.is_some());
    writeln!(w)?;
    writeln!(w, "Usage per query (medians)")?;
    let mut header = format!("{:<16} {:>7} {:>6} {:>8} {:>8} {:>8}", "method", "queries", "calls", "in", "out", "total");
    if with_neurons {
        header.push_str(&format!(" {:>8} {:>8}", "neurons", "usd"));
    }
    writeln!(w, "{header}")?;
    for (method, u) in &by_method {
        let mut line = format!(
            "{:<16} {:>7} {:>6} {:>8} {:>8} {:>8}",
            method, u.queries, u.calls, u.input_tokens, u.output_tokens, u.total_tokens
        );
        if with_neurons {
            line.push_str(&format!(
                " {:>8} {:>8}",
                fmt_opt(u.neurons, 0),
                u.usd.map(format_usd).unwrap_or_else(|| "-".into())
            ));
        }
        writeln!(w, "{line}")?;
    }
    if file.skipped > 0 {
        writeln!(w)?;
        writeln!(w, "Skipped {} corrupt trace lines", file.skipped)?;
    }
    Ok(())
}

/// Recomputes the statistics report from a results file alone.
pub fn replay(results_path: &Path, options: &StatOptions) -> Result<StatReport> {
    let file = File::open(results_path).with_context(|| format!("opening {}", results_path.display()))?;
    let results = read_results(file).with_context(|| format!("reading {}", results_path.display()))?;
    Ok(compute_stat_report(&results, options)?)
}

/// Stat options for replay: the sibling manifest's if present.
pub fn replay_options(results_path: &Path) -> Result<StatOptions> {
    let manifest = results_path.parent().unwrap_or(Path::new(".")).join(MANIFEST_FILE);
    if manifest.exists() {
        Ok(RunManifest::read(&manifest)?.stat_options)
    } else {
        Ok(StatOptions::default())
    }
}

pub struct SynthPaths {
    pub benchmark: PathBuf,
    pub seasons: PathBuf,
    pub fixtures: PathBuf,
    pub config: PathBuf,
}

/// Writes a synthetic benchmark, matching fixtures and a mock config.
pub fn synth(out_dir: &Path, opts: &SuiteOptions) -> Result<SynthPaths> {
    std::fs::create_dir_all(out_dir)?;
    let suite = mc_suite(opts);
    let paths = SynthPaths {
        benchmark: out_dir.join("benchmark.jsonl"),
        seasons: out_dir.join("seasons.jsonl"),
        fixtures: out_dir.join("fixtures.jsonl"),
        config: out_dir.join("config.toml"),
    };
    let mut w = create(&paths.benchmark)?;
    write_benchmark(&mut w, &suite.benchmark)?;
    w.flush()?;

    let seasons = BenchmarkSet {
        name: "seasons".into(),
        kind: edgejury_core::evalharness::BenchmarkKind::Rubric,
        items: vec![seasons_question()],
        sample_manifest: SampleManifest { seed: None, source_split: None, item_ids: vec![seasons_question().id] },
    };
    let mut w = create(&paths.seasons)?;
    write_benchmark(&mut w, &seasons)?;
    w.flush()?;

    let mut fixtures = suite.fixtures;
    fixtures.extend(seasons_fixtures(opts.run_seed));
    let mut w = create(&paths.fixtures)?;
    write_fixture(&mut w, &fixtures)?;
    w.flush()?;

    std::fs::write(&paths.config, example_mock_config("fixtures.jsonl", opts.run_seed))?;
    Ok(paths)
}
