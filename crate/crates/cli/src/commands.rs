use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use omkit::audio::{encode_mel, mel_spectrogram, read_wav, resample, standardize_clip, WaveformClip, MAX_SECONDS, TARGET_SAMPLE_RATE};
use omkit::bench::{
    build_annotated_records, build_tool_use_dataset, split_dataset, AnnotationClient, BenchRecord, ClipMetadata,
    MockAnnotator, PromptTemplate, RemoteAnnotator, RemoteConfig, SplitSpec, Task,
};
use omkit::jsonl::{read_jsonl, to_jsonl, JsonlError};
use omkit::metrics::{evaluate_corpus, mcq_score, pair_by_id, reference_rows, McqItem, PredictionRow, ReferenceInput};
use omkit::mllm::{
    encode_checkpoint, manifest_path as checkpoint_manifest_path, music_tokens, pretrain_base, toy_dataset,
    toy_pretrain_corpus, train_stage, ModelConfig, PretrainConfig, Stage, TinyModel, TrainConfig, TOY_POOL_FACTOR,
};
use omkit::toolcall::{execute_and_render, score_corpus, ToolCallExpr, ToolRegistry};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{
    AnnotatorKind, BuildBenchArgs, Cli, Command, CommonArgs, EvalMcqArgs, PairArgs, PreprocessArgs, ReportArgs,
    ReportFormat, RunToolArgs, TrainToyArgs,
};
use crate::config::RunConfig;
use crate::output::{to_pretty_json, write_atomic, write_manifest, Provenance};
use crate::CliError;

const DEFAULT_POOL: usize = 8;

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.common.workers {
        // a second call in the same process fails harmlessly
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let common = &cli.common;
    let cfg = match cli.command {
        Command::BuildBench(a) => build_bench(common, a)?,
        Command::Preprocess(a) => preprocess(common, a)?,
        Command::TrainToy(a) => train_toy(common, a)?,
        Command::EvalText(a) => eval_text(common, a)?,
        Command::EvalMcq(a) => eval_mcq(common, a)?,
        Command::EvalTools(a) => eval_tools(common, a)?,
        Command::RunTool(a) => run_tool(common, a)?,
        Command::Report(a) => report(common, a)?,
    };
    write_manifest(&cfg, common.manifest.as_deref())
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    read_jsonl(path).map_err(|e| match e {
        JsonlError::Schema { line, message } => CliError::Data(format!("{}: line {line}: {message}", path.display())),
        JsonlError::Io(e) => CliError::Data(format!("{}: {e}", path.display())),
    })
}

/// Writes to `out` when given, otherwise prints.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_clip(path: &Path) -> Result<WaveformClip, CliError> {
    let clip = read_wav(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if clip.sample_rate() == TARGET_SAMPLE_RATE {
        return Ok(clip);
    }
    let samples = resample(clip.samples(), clip.sample_rate(), TARGET_SAMPLE_RATE);
    WaveformClip::new(samples, TARGET_SAMPLE_RATE).map_err(data_err)
}

fn build_bench(common: &CommonArgs, a: BuildBenchArgs) -> Result<RunConfig, CliError> {
    let inputs: Vec<PathBuf> = [&a.metadata, &a.template, &a.pinned].into_iter().flatten().cloned().collect();
    let outputs: Vec<PathBuf> = std::iter::once(a.out.clone()).chain(a.test_out.clone()).collect();
    let cfg = RunConfig::resolve("build-bench", common, DEFAULT_POOL, inputs, outputs)?;
    let task: Task = a.task.parse().map_err(|e: omkit::bench::BenchError| CliError::Usage(e.to_string()))?;

    let records: Vec<BenchRecord> = if let Some(n) = a.tool_use {
        let registry = ToolRegistry::with_defaults();
        let names: Vec<&str> = registry.names().collect();
        build_tool_use_dataset(n, cfg.seed, &names).map_err(data_err)?
    } else {
        let path = a.metadata.as_deref().expect("clap requires metadata or tool-use");
        let metas: Vec<ClipMetadata> = read_rows(path)?;
        let template = match &a.template {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(data_err)?;
                PromptTemplate::parse(task, &text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?
            }
            None => PromptTemplate::builtin(task)
                .ok_or_else(|| CliError::Usage(format!("no shipped template for task `{task}`; pass --template")))?,
        };
        let client: Box<dyn AnnotationClient> = match a.annotator {
            AnnotatorKind::Mock => Box::new(MockAnnotator::default()),
            AnnotatorKind::Remote => {
                let endpoint = cfg
                    .endpoint
                    .clone()
                    .ok_or_else(|| CliError::Usage("--annotator remote needs --endpoint".into()))?;
                Box::new(RemoteAnnotator::new(RemoteConfig::from_env(endpoint)))
            }
        };
        let in_flight = cfg.workers.unwrap_or(4);
        build_annotated_records(&metas, &template, client.as_ref(), &a.dataset, in_flight).map_err(data_err)?
    };

    match &a.test_out {
        Some(test_out) => {
            let spec = match (&a.pinned, a.test_size) {
                (Some(p), Some(target_test_size)) => {
                    let text = std::fs::read_to_string(p).map_err(data_err)?;
                    let pinned_ids = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
                    SplitSpec::SeededTopup { pinned_ids, target_test_size, seed: cfg.seed }
                }
                _ => SplitSpec::Ratio { train_fraction: a.train_fraction, seed: cfg.seed },
            };
            let (train, test) = split_dataset(&records, &spec).map_err(data_err)?;
            write_atomic(&a.out, to_jsonl(&train).as_bytes())?;
            write_atomic(test_out, to_jsonl(&test).as_bytes())?;
            eprintln!("wrote {} train and {} test records", train.len(), test.len());
        }
        None => {
            write_atomic(&a.out, to_jsonl(&records).as_bytes())?;
            eprintln!("wrote {} records", records.len());
        }
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct TokenFile<'a> {
    pool_factor: usize,
    n_tokens: usize,
    dim: usize,
    data: &'a [f64],
}

fn preprocess(common: &CommonArgs, a: PreprocessArgs) -> Result<RunConfig, CliError> {
    let outputs = std::iter::once(a.out.clone()).chain(a.tokens_out.clone()).collect();
    let cfg = RunConfig::resolve("preprocess", common, DEFAULT_POOL, vec![a.audio.clone()], outputs)?;
    let clip = standardize_clip(&read_clip(&a.audio)?, MAX_SECONDS).map_err(data_err)?;
    let mel = mel_spectrogram(&clip).map_err(data_err)?;
    let mut summary = format!("mel {}x{}", mel.n_frames(), mel.n_bins());
    if let Some(path) = &a.tokens_out {
        let grid = music_tokens(&clip, cfg.pool()).map_err(data_err)?;
        let file = TokenFile { pool_factor: cfg.pool_factor, n_tokens: grid.n_tokens(), dim: grid.dim(), data: grid.data() };
        write_atomic(path, serde_json::to_string(&file).expect("serializable").as_bytes())?;
        summary.push_str(&format!(", tokens {}x{}", grid.n_tokens(), grid.dim()));
    }
    write_atomic(&a.out, &encode_mel(&mel))?;
    println!("{summary}");
    Ok(cfg)
}

#[derive(Serialize)]
struct StageSummary {
    stage: Stage,
    steps: usize,
    initial_loss: f64,
    final_loss: f64,
    loss_drop: f64,
    frozen_groups_unchanged: bool,
}

fn train_toy(common: &CommonArgs, a: TrainToyArgs) -> Result<RunConfig, CliError> {
    let outputs = [Some(a.out.clone()), Some(checkpoint_manifest_path(&a.out)), a.log.clone()].into_iter().flatten().collect();
    let cfg = RunConfig::resolve("train-toy", common, TOY_POOL_FACTOR, Vec::new(), outputs)?;
    if a.examples == 0 {
        return Err(CliError::Usage("--examples must be positive".into()));
    }
    let model_cfg = ModelConfig { seed: cfg.seed, ..ModelConfig::toy() };
    let mut model = TinyModel::new(model_cfg).map_err(data_err)?;
    let prefix_len = omkit::audio::RAW_TOKENS / cfg.pool_factor;

    let corpus = toy_pretrain_corpus(prefix_len, 8, cfg.seed);
    let pre_cfg = PretrainConfig { epochs: a.pretrain_epochs.max(1), seed: cfg.seed, ..PretrainConfig::default() };
    let pre = pretrain_base(&mut model, &corpus, &pre_cfg).map_err(data_err)?;

    let data = toy_dataset(a.examples, cfg.pool()).map_err(data_err)?;
    let mut plan = vec![TrainConfig { epochs: a.stage1_epochs.max(1), seed: cfg.seed, ..TrainConfig::toy(Stage::Stage1) }];
    if cfg.stage != Stage::Stage1 {
        plan.push(TrainConfig { epochs: a.adapter_epochs.max(1), seed: cfg.seed, ..TrainConfig::toy(cfg.stage) });
    }
    let mut summaries = Vec::new();
    let mut log_rows = Vec::new();
    for tc in &plan {
        if tc.stage.trains_lora() {
            model.attach_lora(cfg.lora, cfg.seed).map_err(data_err)?;
        }
        let log = train_stage(&mut model, &data, tc).map_err(data_err)?;
        let unchanged = log.frozen_hashes.values().all(|(b, a)| b == a);
        if !unchanged {
            return Err(CliError::Data(format!("{} modified a frozen parameter group", tc.stage)));
        }
        let offset = log_rows.len();
        log_rows.extend(log.steps.iter().map(|s| json!({"step": offset + s.step, "lr": s.lr, "loss": s.loss})));
        summaries.push(StageSummary {
            stage: log.stage,
            steps: log.steps.len(),
            initial_loss: log.initial_loss,
            final_loss: log.final_loss,
            loss_drop: log.loss_drop(),
            frozen_groups_unchanged: unchanged,
        });
    }

    let (bytes, manifest) = encode_checkpoint(&model);
    write_atomic(&a.out, &bytes)?;
    write_atomic(&checkpoint_manifest_path(&a.out), to_pretty_json(&manifest).as_bytes())?;
    if let Some(log) = &a.log {
        write_atomic(log, to_jsonl(&log_rows).as_bytes())?;
    }
    let report = json!({
        "kind": "train",
        "provenance": Provenance::of(&cfg),
        "pretrain": {"steps": pre.steps.len(), "initial_loss": pre.initial_loss, "final_loss": pre.final_loss},
        "stages": summaries,
    });
    print!("{}", to_pretty_json(&report));
    Ok(cfg)
}

fn paired(a: &PairArgs) -> Result<Vec<(String, String)>, CliError> {
    let preds: Vec<PredictionRow> = read_rows(&a.pred)?;
    let refs = reference_rows(read_rows::<ReferenceInput>(&a.reference)?);
    pair_by_id(&preds, &refs).map_err(data_err)
}

fn eval_text(common: &CommonArgs, a: PairArgs) -> Result<RunConfig, CliError> {
    let cfg = RunConfig::resolve("eval-text", common, DEFAULT_POOL, vec![a.pred.clone(), a.reference.clone()], a.out.iter().cloned().collect())?;
    let pairs = paired(&a)?;
    let (preds, refs): (Vec<String>, Vec<String>) = pairs.into_iter().unzip();
    let metrics = evaluate_corpus(&preds, &refs, None).map_err(data_err)?;
    let report = json!({"kind": "text", "provenance": Provenance::of(&cfg), "metrics": metrics});
    emit(a.out.as_deref(), &to_pretty_json(&report))?;
    Ok(cfg)
}

fn eval_mcq(common: &CommonArgs, a: EvalMcqArgs) -> Result<RunConfig, CliError> {
    let cfg = RunConfig::resolve("eval-mcq", common, DEFAULT_POOL, vec![a.items.clone()], a.out.iter().cloned().collect())?;
    let items: Vec<McqItem> = read_rows(&a.items)?;
    let outcome = mcq_score(&items).map_err(data_err)?;
    let report = json!({
        "kind": "mcq",
        "provenance": Provenance::of(&cfg),
        "accuracy": outcome.accuracy * 100.0,
        "ifr": outcome.ifr * 100.0,
        "n_items": outcome.n_items,
        "per_item": outcome.per_item,
    });
    emit(a.out.as_deref(), &to_pretty_json(&report))?;
    Ok(cfg)
}

fn eval_tools(common: &CommonArgs, a: PairArgs) -> Result<RunConfig, CliError> {
    let cfg = RunConfig::resolve("eval-tools", common, DEFAULT_POOL, vec![a.pred.clone(), a.reference.clone()], a.out.iter().cloned().collect())?;
    let pairs = paired(&a)?;
    let score = score_corpus(pairs.iter().map(|(p, g)| (p.as_str(), g.as_str()))).map_err(data_err)?;
    let report = json!({
        "kind": "tools",
        "provenance": Provenance::of(&cfg),
        "accuracy": score.accuracy * 100.0,
        "n_items": score.n_items,
        "per_reason_counts": score.per_reason_counts,
    });
    emit(a.out.as_deref(), &to_pretty_json(&report))?;
    Ok(cfg)
}

fn run_tool(common: &CommonArgs, a: RunToolArgs) -> Result<RunConfig, CliError> {
    let cfg = RunConfig::resolve("run-tool", common, DEFAULT_POOL, vec![a.audio.clone()], Vec::new())?;
    let args = a
        .args
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| CliError::Usage(format!("argument `{s}` is not a number"))))
        .collect::<Result<Vec<_>, _>>()?;
    let registry = ToolRegistry::with_defaults();
    if !registry.contains(&a.tool) {
        let known: Vec<&str> = registry.names().collect();
        return Err(CliError::Data(format!("unknown tool `{}` (known: {})", a.tool, known.join(", "))));
    }
    let call = ToolCallExpr::new(a.tool.as_str(), args).map_err(data_err)?;
    let clip = read_clip(&a.audio)?;
    let out = execute_and_render(&call.render(), &registry, &clip).map_err(data_err)?;
    println!("{out}");
    Ok(cfg)
}

/// Numeric leaves of a report, keyed by dotted path; provenance and
/// per-item detail are skipped.
fn numeric_leaves(prefix: &str, v: &Value, out: &mut BTreeMap<String, f64>) {
    match v {
        Value::Number(n) => {
            if let Some(x) = n.as_f64() {
                out.insert(prefix.to_string(), x);
            }
        }
        Value::Object(map) => {
            for (k, child) in map {
                if k == "provenance" || k == "per_item" {
                    continue;
                }
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                numeric_leaves(&key, child, out);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                numeric_leaves(&format!("{prefix}.{i}"), child, out);
            }
        }
        _ => {}
    }
}

fn report(common: &CommonArgs, a: ReportArgs) -> Result<RunConfig, CliError> {
    let cfg = RunConfig::resolve("report", common, DEFAULT_POOL, a.inputs.clone(), a.out.iter().cloned().collect())?;
    let mut rows = Vec::new();
    for path in &a.inputs {
        let text = std::fs::read_to_string(path).map_err(data_err)?;
        let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let kind = value.get("kind").and_then(Value::as_str).unwrap_or("unknown").to_string();
        let mut values = BTreeMap::new();
        numeric_leaves("", &value, &mut values);
        rows.push((path.display().to_string(), kind, values, value.get("provenance").cloned()));
    }
    let text = match a.format {
        ReportFormat::Json => {
            let rows: Vec<Value> = rows
                .iter()
                .map(|(source, kind, values, prov)| json!({"source": source, "kind": kind, "values": values, "provenance": prov}))
                .collect();
            to_pretty_json(&json!({"reports": rows}))
        }
        ReportFormat::Markdown => {
            let columns: BTreeSet<&String> = rows.iter().flat_map(|r| r.2.keys()).collect();
            let mut s = String::from("| source | kind |");
            for c in &columns {
                s.push_str(&format!(" {c} |"));
            }
            s.push_str("\n|---|---|");
            s.push_str(&"---|".repeat(columns.len()));
            s.push('\n');
            for (source, kind, values, _) in &rows {
                s.push_str(&format!("| {source} | {kind} |"));
                for c in &columns {
                    match values.get(*c) {
                        Some(v) => s.push_str(&format!(" {v:.2} |")),
                        None => s.push_str(" |"),
                    }
                }
                s.push('\n');
            }
            s
        }
    };
    emit(a.out.as_deref(), &text)?;
    Ok(cfg)
}
