//! Subcommand implementations.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use futures::stream::StreamExt;

use ebmrag_core::config::PipelineConfig;
use ebmrag_core::corpus::{ingest as ingest_docs, load_index, read_corpus_jsonl, save_index, CorpusIndex};
use ebmrag_core::gateway::Gateway;
use ebmrag_core::pipeline::{answer, DemoShot, Engine, RunOptions};

use crate::dataset::{read_dataset, DatasetQuestion};
use crate::report::{read_records, EvalRecord, RunReport};

fn load_engine(index_dir: &Path, config_path: &Path) -> anyhow::Result<Engine> {
    let cfg = PipelineConfig::load(config_path)
        .with_context(|| format!("load config {}", config_path.display()))?;
    let index =
        load_index(index_dir).with_context(|| format!("load index {}", index_dir.display()))?;
    Ok(Engine::new(index, cfg)?)
}

fn load_shots(path: Option<&Path>, budget: usize) -> anyhow::Result<Vec<DemoShot>> {
    let Some(path) = path else { return Ok(Vec::new()) };
    if budget == 0 {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    let mut shots = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        shots.push(serde_json::from_str::<DemoShot>(line)?);
        if shots.len() == budget {
            break;
        }
    }
    Ok(shots)
}

pub async fn cmd_ingest(input: &Path, out: &Path, config_path: &Path) -> anyhow::Result<()> {
    let cfg = PipelineConfig::load(config_path)?;
    let gateway = Gateway::from_config(&cfg.backends)?;
    let prompts = cfg.prompt_set()?;
    let resources = read_corpus_jsonl(input)?;
    if resources.is_empty() {
        bail!("{}: no resources to ingest", input.display());
    }
    let docs = ingest_docs(
        &resources,
        cfg.corpus.segment_threshold_tokens,
        cfg.corpus.token_ratio,
        &gateway,
        &prompts,
    )
    .await?;
    let index = CorpusIndex::build(docs, &gateway).await?;
    save_index(&index, out)?;
    println!("ingested {} resources into {} documents at {}", resources.len(), index.doc_count(), out.display());
    Ok(())
}

pub async fn cmd_ask(
    index_dir: &Path,
    config_path: &Path,
    question: &str,
    trace_out: Option<&Path>,
    shots_path: Option<&Path>,
) -> anyhow::Result<()> {
    let engine = load_engine(index_dir, config_path)?;
    let shots = load_shots(shots_path, engine.cfg.answer.shots)?;
    let result = engine.run(question, &RunOptions::default()).await?;
    let options: Vec<(String, String)> = Vec::new();
    let outcome = answer(
        question,
        &options,
        &result,
        &engine.index,
        &engine.gateway,
        &engine.prompts,
        engine.cfg.answer.cot_mode,
        &shots,
    )
    .await?;

    if let Some(path) = trace_out {
        write_traces(path, &result.traces)?;
    }
    println!("{}", outcome.text);
    println!(
        "-- terminated: {} after {} iteration(s), {} evidence doc(s) packed",
        match result.termination_reason {
            ebmrag_core::pipeline::TerminationReason::DriftConverged => "drift_converged",
            ebmrag_core::pipeline::TerminationReason::MaxIterations => "max_iterations",
        },
        result.traces.len(),
        result.final_packed.len()
    );
    Ok(())
}

fn write_traces(path: &Path, traces: &[ebmrag_core::pipeline::IterationTrace]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for trace in traces {
        serde_json::to_writer(&mut out, trace)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub struct EvalArgs<'a> {
    pub index_dir: &'a Path,
    pub config_path: &'a Path,
    pub dataset_path: &'a Path,
    pub report_path: &'a Path,
    pub records_path: Option<&'a Path>,
    pub workers: usize,
    pub fail_fast: bool,
    pub shots_path: Option<&'a Path>,
}

/// Batch evaluation: runs every question not already present in the records
/// file, appends records as questions finish (dataset order), and recounts
/// the report from all records at the end.
pub async fn cmd_eval(args: EvalArgs<'_>) -> anyhow::Result<()> {
    let started = Instant::now();
    let engine = Arc::new(load_engine(args.index_dir, args.config_path)?);
    let shots = Arc::new(load_shots(args.shots_path, engine.cfg.answer.shots)?);
    let questions = read_dataset(args.dataset_path)?;
    if questions.is_empty() {
        bail!("{}: empty dataset", args.dataset_path.display());
    }

    let records_path = match args.records_path {
        Some(path) => path.to_path_buf(),
        None => args.report_path.with_extension("records.jsonl"),
    };
    let traces_dir = args.report_path.with_extension("traces");
    std::fs::create_dir_all(&traces_dir)?;
    if let Some(parent) = args.report_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }

    let mut records = read_records(&records_path)?;
    let done: std::collections::BTreeSet<String> =
        records.iter().map(|r| r.question_id.clone()).collect();
    let pending: Vec<DatasetQuestion> =
        questions.into_iter().filter(|q| !done.contains(&q.id)).collect();
    let skipped = done.len();
    if skipped > 0 {
        eprintln!("resuming: {skipped} question(s) already recorded");
    }

    let mut records_out = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&records_path)?;

    let workers = args.workers.max(1);
    let mut stream = futures::stream::iter(pending.into_iter().map(|question| {
        let engine = engine.clone();
        let shots = shots.clone();
        let traces_dir = traces_dir.clone();
        async move { run_one(&engine, &shots, question, &traces_dir).await }
    }))
    .buffered(workers);

    while let Some(outcome) = stream.next().await {
        // run_one only errors on I/O; pipeline failures come back as records.
        let record = outcome?;
        if args.fail_fast {
            if let Some(error) = &record.error {
                bail!("question `{}` failed: {error}", record.question_id);
            }
        }
        serde_json::to_writer(&mut records_out, &record)?;
        records_out.write_all(b"\n")?;
        records_out.flush()?;
        records.push(record);
    }

    let wall_time_ms = started.elapsed().as_millis() as u64;
    let dataset_name = args
        .dataset_path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "dataset".to_string());
    let report = RunReport::from_records(&dataset_name, &records, wall_time_ms);
    std::fs::write(args.report_path, serde_json::to_string_pretty(&report)? + "\n")?;

    match report.accuracy {
        Some(accuracy) => eprintln!(
            "evaluated {} question(s): accuracy {:.4}, unparsed rate {:.4}, wall time {} ms",
            report.n, accuracy, report.unparsed_rate, report.wall_time_ms
        ),
        None => eprintln!(
            "evaluated {} question(s): no complete gold labels, unparsed rate {:.4}, wall time {} ms",
            report.n, report.unparsed_rate, report.wall_time_ms
        ),
    }
    Ok(())
}

async fn run_one(
    engine: &Engine,
    shots: &[DemoShot],
    question: DatasetQuestion,
    traces_dir: &Path,
) -> anyhow::Result<EvalRecord> {
    let trace_path = traces_dir.join(format!("{}.jsonl", question.id));
    let options = question.option_pairs();
    match engine.run(&question.question, &RunOptions::default()).await {
        Ok(result) => {
            write_traces(&trace_path, &result.traces)?;
            let category =
                result.traces[0].classified_query.ebm_category.as_snake().to_string();
            let outcome = answer(
                &question.question,
                &options,
                &result,
                &engine.index,
                &engine.gateway,
                &engine.prompts,
                engine.cfg.answer.cot_mode,
                shots,
            )
            .await;
            match outcome {
                Ok(outcome) => {
                    let predicted =
                        outcome.extracted.unwrap_or_else(|| "unparsed".to_string());
                    let correct = question.gold.as_ref().map(|g| g == &predicted);
                    Ok(EvalRecord {
                        question_id: question.id,
                        question: question.question,
                        options: question.options,
                        gold_label: question.gold,
                        predicted_label: predicted,
                        correct,
                        trace_path: trace_path.display().to_string(),
                        ebm_category: category,
                        error: None,
                    })
                }
                Err(e) => Ok(failed_record(question, &trace_path, &category, &e.to_string())),
            }
        }
        Err(e) => Ok(failed_record(question, &trace_path, "unclassified", &e.to_string())),
    }
}

fn failed_record(
    question: DatasetQuestion,
    trace_path: &Path,
    category: &str,
    error: &str,
) -> EvalRecord {
    let correct = question.gold.as_ref().map(|_| false);
    EvalRecord {
        question_id: question.id,
        question: question.question,
        options: question.options,
        gold_label: question.gold,
        predicted_label: "unparsed".to_string(),
        correct,
        trace_path: trace_path.display().to_string(),
        ebm_category: category.to_string(),
        error: Some(error.to_string()),
    }
}

/// Run the loop with termination disabled over a sample, collect each
/// query's minimum drift across iterations t >= 2, and print the mean.
pub async fn cmd_calibrate_delta(
    index_dir: &Path,
    config_path: &Path,
    sample_path: &Path,
) -> anyhow::Result<()> {
    let engine = load_engine(index_dir, config_path)?;
    let sample = read_dataset(sample_path)?;
    if sample.is_empty() {
        bail!("{}: empty sample", sample_path.display());
    }
    let mut minimums = Vec::new();
    for question in &sample {
        let result = engine.run(&question.question, &RunOptions { ignore_delta: true }).await?;
        let min_drift = result
            .traces
            .iter()
            .filter_map(|t| t.drift)
            .filter(|d| d.is_finite())
            .fold(f64::INFINITY, f64::min);
        if min_drift.is_finite() {
            minimums.push(min_drift);
        } else {
            eprintln!("query `{}` produced no finite drift; skipped", question.id);
        }
    }
    if minimums.is_empty() {
        bail!("no query produced a finite drift; cannot suggest a threshold");
    }
    let suggested = minimums.iter().sum::<f64>() / minimums.len() as f64;
    println!("suggested_delta = {suggested}");
    eprintln!("(mean of {} per-query minimum drifts; current config delta = {})",
        minimums.len(), engine.cfg.loop_.delta);
    Ok(())
}

pub async fn cmd_serve(index_dir: &Path, config_path: &Path, listen: &str) -> anyhow::Result<()> {
    let engine = Arc::new(load_engine(index_dir, config_path)?);
    let router = crate::service::router(engine);
    let listener = tokio::net::TcpListener::bind(listen)
        .await
        .with_context(|| format!("bind {listen}"))?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router).await?;
    Ok(())
}
