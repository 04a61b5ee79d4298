use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use anyhow::{bail, Context};
use serde_json::{json, Value};

use super::decode::TaskRecord;
use super::{emit, load_config, read_text, round_floats, thread_pool, EvalArgs, RankArgs};
use crate::constraint::Payload;
use crate::eval::{
    aggregate_toxicity_scores, coverage, distinct_n, lambda_sweep, parse_pairs, ranking_accuracy,
    substring_recall, LexiconToxicity, MatchMode, MetricReport, SweepMetric, SweepTask,
    ToxicityScorer,
};

/// Scores a pairs file. Prints the accuracy with 4 decimals and writes the
/// report to `--out` when given.
pub fn run_rank(args: &RankArgs) -> anyhow::Result<u8> {
    let cfg = load_config(&args.shared)?;
    cfg.validate()?;
    let text = read_text(&args.pairs, "pairs")?;
    let mut pairs = parse_pairs(&text)?;
    if let Some(kind) = args.kind {
        pairs.retain(|p| p.pair_kind == kind);
    }
    if pairs.is_empty() {
        bail!("no ranking pairs in {}", args.pairs.display());
    }
    let backend = cfg.build_backend()?;
    let scorer = cfg.build_scorer(&backend)?;
    let epsilon = args.epsilon.unwrap_or(cfg.scorer.epsilon);
    let report = ranking_accuracy(&pairs, scorer.as_ref(), backend.as_ref(), epsilon)?;
    if let Some(out) = &args.shared.out {
        emit(Some(out), &report_json(&[report.clone()])?)?;
    }
    println!("{:.4}", report.value);
    Ok(0)
}

fn report_json(reports: &[MetricReport]) -> anyhow::Result<String> {
    let v = round_floats(serde_json::to_value(reports)?);
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn load_tasks(text: &str) -> anyhow::Result<Vec<TaskRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("references line {}", i + 1)))
        .collect()
}

fn concepts(task: &TaskRecord) -> anyhow::Result<Vec<String>> {
    if !task.references.is_empty() {
        return Ok(task.references.clone());
    }
    match task.payload()? {
        Payload::Keywords(k) => Ok(k),
        _ => Ok(Vec::new()),
    }
}

fn parse_grid(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad lambda {x:?}")))
        .collect()
}

fn sweep_metrics(args: &EvalArgs) -> Vec<SweepMetric> {
    let mode = if args.stem { MatchMode::Stem } else { MatchMode::Exact };
    let mut m = Vec::new();
    if args.coverage {
        m.push(SweepMetric::Coverage(mode));
    }
    m.extend(args.distinct.iter().map(|&n| SweepMetric::DistinctN(n)));
    if args.recall {
        m.push(SweepMetric::SubstringRecall);
    }
    m
}

/// Computes metric reports over a decode output file, or runs a lambda
/// sweep over the reference tasks when `--sweep` is given.
pub fn run_eval(args: &EvalArgs) -> anyhow::Result<u8> {
    let tasks = load_tasks(&read_text(&args.references, "references")?)?;
    if let Some(grid) = &args.sweep {
        return run_sweep(args, &tasks, &parse_grid(grid)?);
    }
    let Some(outputs_path) = &args.outputs else {
        bail!("eval needs an outputs file or --sweep");
    };
    let outputs = read_text(outputs_path, "outputs")?;
    let mut by_id: HashMap<String, Value> = HashMap::new();
    for (i, l) in outputs.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(l).with_context(|| format!("outputs line {}", i + 1))?;
        if let Some(id) = v.get("id").and_then(Value::as_str) {
            by_id.insert(id.to_string(), v);
        }
    }
    let task_ids: BTreeSet<&str> = tasks.iter().map(|t| t.id.as_str()).collect();
    let missing: Vec<&str> = task_ids.iter().copied().filter(|id| !by_id.contains_key(*id)).collect();
    let mut unknown: Vec<&str> = by_id.keys().map(String::as_str).filter(|id| !task_ids.contains(id)).collect();
    unknown.sort_unstable();
    if !missing.is_empty() || !unknown.is_empty() {
        bail!(
            "outputs and references disagree on ids; missing from outputs: [{}]; not in references: [{}]",
            missing.join(", "),
            unknown.join(", ")
        );
    }

    let mode = if args.stem { MatchMode::Stem } else { MatchMode::Exact };
    let mut reports = Vec::new();
    let text_of = |t: &TaskRecord| -> Result<String, String> {
        let v = &by_id[&t.id];
        if let Some(e) = v.get("error") {
            return Err(format!("decode failed: {e}"));
        }
        v.get("output")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| "no output".to_string())
    };
    let mut per_item = |name: String, f: &dyn Fn(&TaskRecord, &str) -> anyhow::Result<f64>| {
        let mut values = Vec::new();
        let mut details = Vec::new();
        for t in &tasks {
            let r = text_of(t).map_err(anyhow::Error::msg).and_then(|o| f(t, &o));
            match r {
                Ok(v) => {
                    values.push(v);
                    details.push(json!({"id": t.id, "value": v}));
                }
                Err(e) => details.push(json!({"id": t.id, "skipped": e.to_string()})),
            }
        }
        reports.push(MetricReport::mean(name, &values, details));
    };
    if args.coverage {
        per_item("coverage".into(), &|t, o| Ok(coverage(o, &concepts(t)?, mode)?));
    }
    for &n in &args.distinct {
        per_item(format!("distinct_{n}"), &|_, o| Ok(distinct_n(o, n)?));
    }
    if args.recall {
        per_item("substring_recall".into(), &|t, o| Ok(substring_recall(o, &t.references)?));
    }
    if let Some(lex) = &args.toxicity_lexicon {
        let scorer = LexiconToxicity::parse(&read_text(lex, "lexicon")?)?;
        let mut groups = Vec::new();
        for t in &tasks {
            let v = &by_id[&t.id];
            if v.get("error").is_some() {
                continue;
            }
            let texts: Vec<&str> = match v.get("samples").and_then(Value::as_array) {
                Some(s) => s.iter().filter_map(Value::as_str).collect(),
                None => v.get("output").and_then(Value::as_str).into_iter().collect(),
            };
            let scores = texts.iter().map(|x| scorer.score(x)).collect::<crate::Result<Vec<_>>>()?;
            if !scores.is_empty() {
                groups.push(scores);
            }
        }
        let (max, prob) = aggregate_toxicity_scores(&groups, args.threshold)?;
        reports.push(max);
        reports.push(prob);
    }
    if reports.is_empty() {
        bail!("no metric requested; use --coverage, --distinct, --recall or --toxicity-lexicon");
    }
    let json = report_json(&reports)?;
    match &args.shared.out {
        Some(out) => {
            emit(Some(out), &json)?;
            for r in &reports {
                println!("{}\t{:.4}", r.name, r.value);
            }
        }
        None => emit(None, &json)?,
    }
    Ok(0)
}

fn run_sweep(args: &EvalArgs, tasks: &[TaskRecord], grid: &[f64]) -> anyhow::Result<u8> {
    if args.toxicity_lexicon.is_some() {
        bail!("--toxicity-lexicon is not supported with --sweep");
    }
    let cfg = load_config(&args.shared)?;
    cfg.validate()?;
    let backend = cfg.build_backend()?;
    let scorer = cfg.build_scorer(&backend)?;
    let dataset = tasks
        .iter()
        .map(|t| {
            Ok(SweepTask {
                id: t.id.clone(),
                prompt: t.prompt.clone(),
                payload: t.payload()?,
                references: t.references.clone(),
            })
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let metrics = sweep_metrics(args);
    let pool = thread_pool(args.shared.jobs)?;
    let rows = pool.install(|| {
        lambda_sweep(
            &dataset,
            grid,
            &cfg.decoder_config(),
            backend.as_ref(),
            scorer.as_ref(),
            &metrics,
        )
    })?;

    let mut table = String::from("lambda");
    for m in &metrics {
        write!(table, "\t{}", m.name()).unwrap();
    }
    table.push('\n');
    for row in &rows {
        write!(table, "{}", row.lambda).unwrap();
        for r in &row.reports {
            write!(table, "\t{:.4}", r.value).unwrap();
        }
        table.push('\n');
    }
    print!("{table}");
    if let Some(out) = &args.shared.out {
        let ids: Vec<&str> = tasks.iter().map(|t| t.id.as_str()).collect();
        let v = round_floats(json!({"ids": ids, "rows": serde_json::to_value(&rows)?}));
        emit(Some(out), &(serde_json::to_string_pretty(&v)? + "\n"))?;
    }
    let failed = rows.iter().any(|r| !r.failures.is_empty());
    Ok(if failed { 2 } else { 0 })
}
