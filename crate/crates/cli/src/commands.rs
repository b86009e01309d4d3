use std::path::Path;

use ccl_core::corpus::{parse_dailydialog, parse_jsonl_dialogues, preprocess, split_tail_per_domain, Corpus, PreprocessOptions};
use ccl_core::curvedspace::CurvingWeights;
use ccl_core::embedstore::{parse_requests, render_requests, write_store, EmbeddingStore, MockEncoder, StoreEncoder};
use ccl_core::evalharness::ltp::LtpSample;
use ccl_core::evalharness::next::NextReport;
use ccl_core::evalharness::{
    build_ltp_samples, build_next_samples, build_stp_samples, emit_embed_requests, encoding_cost_report, eval_ltp,
    eval_next, eval_next_bm25, eval_stp, parse_candidates, Bm25Params, EvalPlan, NextVariant,
};
use ccl_core::pairgen::{corpus_pairs, export_pairs, export_pairs_with_meta, PairGenConfig};

use crate::error::CliError;
use crate::meta::{write, Run};
use crate::render::render_report;
use crate::{
    BenchEncodingArgs, Command, EmbedArgs, EmbedRequestsArgs, EncoderKind, EvalLtpArgs, EvalNextArgs, EvalStpArgs,
    InputFormat, PairgenArgs, PreprocessArgs, ReportArgs,
};

pub(crate) fn run(cmd: Command) -> Result<(), CliError> {
    let name = cmd.name();
    match cmd {
        Command::Preprocess(a) => preprocess_cmd(&mut Run::new(name, &a), &a),
        Command::Pairgen(a) => pairgen_cmd(Run::new(name, &a), &a),
        Command::EmbedRequests(a) => embed_requests_cmd(&mut Run::new(name, &a), &a),
        Command::Embed(a) => embed_cmd(&mut Run::new(name, &a), &a),
        Command::EvalStp(a) => eval_stp_cmd(&mut Run::new(name, &a), &a),
        Command::EvalLtp(a) => eval_ltp_cmd(&mut Run::new(name, &a), &a),
        Command::EvalNext(a) => eval_next_cmd(&mut Run::new(name, &a), &a),
        Command::BenchEncoding(a) => bench_cmd(&mut Run::new(name, &a), &a),
        Command::Report(a) => report_cmd(&mut Run::new(name, &a), &a),
    }
}

fn load_corpus(run: &mut Run, path: &Path) -> Result<Corpus, CliError> {
    let raw = run.read("corpus", path)?;
    parse_jsonl_dialogues(&raw).map_err(|e| CliError::from(e).context(format!("corpus {}", path.display())))
}

fn corpus_text(run: &Run, c: &Corpus) -> String {
    run.header_line() + &c.to_jsonl()
}

fn preprocess_cmd(run: &mut Run, a: &PreprocessArgs) -> Result<(), CliError> {
    let raw = run.read("input", &a.input)?;
    let dailydialog = match a.format {
        InputFormat::Dailydialog => true,
        InputFormat::Jsonl => false,
        InputFormat::Auto => a.input.extension().is_some_and(|e| e == "txt"),
    };
    let parsed = if dailydialog {
        parse_dailydialog(&raw)
    } else {
        parse_jsonl_dialogues(&raw)
    }
    .map_err(|e| CliError::from(e).context(format!("input {}", a.input.display())))?;
    let opts = PreprocessOptions {
        max_tokens: a.max_tokens,
        filter_before_merge: a.filter_before_merge,
    };
    let (kept, dropped) = preprocess(&parsed, opts);
    let (train, held) = match a.split_tail {
        Some(n) => {
            let (train, test) = split_tail_per_domain(&kept, n)?;
            (train, Some(test))
        }
        None => (kept, None),
    };
    write(&a.out, corpus_text(run, &train).as_bytes())?;
    if let (Some(test), Some(path)) = (&held, &a.heldout_out) {
        write(path, corpus_text(run, test).as_bytes())?;
    }
    println!(
        "preprocess: {} dialogues read, {} dropped over {} tokens, {} written{}",
        parsed.len(),
        dropped,
        a.max_tokens,
        train.len(),
        held.map(|t| format!(", {} held out", t.len())).unwrap_or_default()
    );
    Ok(())
}

fn pairgen_cmd(run: Run, a: &PairgenArgs) -> Result<(), CliError> {
    let mut run = run.seed(a.seed);
    let c = load_corpus(&mut run, &a.input)?;
    let cfg = PairGenConfig {
        window: a.window,
        mode: a.mode,
        seed: a.seed,
        random_negatives: a.negatives,
        dedup: a.dedup,
    };
    let pairs = corpus_pairs(&c, &cfg)?;
    let n = if a.no_meta {
        export_pairs(&pairs, &a.out)?
    } else {
        export_pairs_with_meta(&pairs, &a.out, &run.header())?
    };
    println!("pairgen: {n} pairs from {} dialogues ({} mode)", c.len(), a.mode);
    Ok(())
}

fn embed_requests_cmd(run: &mut Run, a: &EmbedRequestsArgs) -> Result<(), CliError> {
    let c = load_corpus(run, &a.corpus)?;
    let mut plan = EvalPlan {
        speaker_mode: a.speaker_mode,
        ltp_methods: a.ltp_methods.clone(),
        next_variants: a.next_variants.clone(),
        ..EvalPlan::default()
    };
    if !a.stp.is_empty() {
        let path = a.candidates.as_deref().ok_or_else(|| CliError::usage("--stp needs --candidates"))?;
        let index = parse_candidates(&run.read("candidates", path)?)?;
        for cell in &a.stp {
            let built = build_stp_samples(&c, cell.h_l, cell.g_d, &index)?;
            if built.skipped_no_candidates > 0 {
                eprintln!(
                    "warning: stp {cell}: {} dialogues have no candidate set",
                    built.skipped_no_candidates
                );
            }
            plan.stp.extend(built.samples);
        }
    }
    for cell in &a.ltp {
        plan.ltp.extend(build_ltp_samples(&c, cell.h_l, cell.g_d, cell.fgid, a.eligibility)?);
    }
    for &h in &a.next {
        plan.next.push(build_next_samples(&c, h)?);
    }
    if plan.is_empty() {
        eprintln!("warning: no evaluation selected (--stp, --ltp, --next); writing an empty request list");
    }
    let keys = emit_embed_requests(&plan);
    write(&a.out, (run.header_line() + &render_requests(&keys)).as_bytes())?;
    if let Some(path) = &a.ltp_samples_out {
        let mut text = run.header_line();
        for s in &plan.ltp {
            text.push_str(&serde_json::to_string(s).expect("sample serializes"));
            text.push('\n');
        }
        write(path, text.as_bytes())?;
    }
    println!(
        "embed-requests: {} keys for {} stp, {} ltp, {} next samples",
        keys.len(),
        plan.stp.len(),
        plan.ltp.len(),
        plan.next.iter().map(|s| s.samples.len()).sum::<usize>()
    );
    Ok(())
}

fn embed_cmd(run: &mut Run, a: &EmbedArgs) -> Result<(), CliError> {
    let keys = parse_requests(&run.read("requests", &a.requests)?)?;
    let store = match a.encoder {
        EncoderKind::Mock => EmbeddingStore::encode_all(&MockEncoder::new(a.dim, a.seed)?, &keys)?,
        EncoderKind::File => {
            let source = a.source.as_deref().ok_or_else(|| CliError::usage("--encoder file needs --source"))?;
            EmbeddingStore::encode_all(&StoreEncoder::new(run.store(source)?), &keys)?
        }
    };
    write_store(&store, &a.out)?;
    println!("embed: {} vectors of dim {} ({})", store.len(), store.dim(), store.encoder_id());
    Ok(())
}

fn eval_stp_cmd(run: &mut Run, a: &EvalStpArgs) -> Result<(), CliError> {
    let c = load_corpus(run, &a.corpus)?;
    let index = parse_candidates(&run.read("candidates", &a.candidates)?)?;
    let store = run.store(&a.store)?;
    let mut samples = Vec::new();
    for cell in &a.cells {
        samples.extend(build_stp_samples(&c, cell.h_l, cell.g_d, &index)?.samples);
    }
    let report = eval_stp(&samples, &store, a.speaker_mode)?;
    run.write_report(&a.out, "stp", &report)?;
    println!(
        "eval-stp: {} samples, average rank {:.3}",
        report.overall.n, report.overall.average_rank
    );
    Ok(())
}

fn eval_ltp_cmd(run: &mut Run, a: &EvalLtpArgs) -> Result<(), CliError> {
    let weights: [f64; 3] = a
        .weights
        .as_slice()
        .try_into()
        .map_err(|_| CliError::usage(format!("--weights takes 3 values, got {}", a.weights.len())))?;
    let samples: Vec<LtpSample> = match (&a.samples, &a.corpus) {
        (Some(path), _) => {
            let raw = run.read("samples", path)?;
            let mut out = Vec::new();
            for (i, line) in raw.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let v: serde_json::Value = serde_json::from_str(line)
                    .map_err(|e| CliError::malformed(format!("{} line {}: {e}", path.display(), i + 1)))?;
                if v.get("_meta").is_some() {
                    continue;
                }
                out.push(
                    serde_json::from_value(v)
                        .map_err(|e| CliError::malformed(format!("{} line {}: {e}", path.display(), i + 1)))?,
                );
            }
            out
        }
        (None, Some(corpus)) => {
            let c = load_corpus(run, corpus)?;
            let mut out = Vec::new();
            for cell in &a.cells {
                out.extend(build_ltp_samples(&c, cell.h_l, cell.g_d, cell.fgid, a.eligibility)?);
            }
            out
        }
        (None, None) => return Err(CliError::usage("eval-ltp needs --samples or --corpus with --cells")),
    };
    let store = run.store(&a.store)?;
    let report = eval_ltp(&samples, &store, a.method, a.speaker_mode, CurvingWeights(weights))?;
    run.write_report(&a.out, "ltp", &report)?;
    println!(
        "eval-ltp: {} samples ({}), average rank {:.3}",
        report.overall.n, a.method, report.overall.average_rank
    );
    Ok(())
}

fn eval_next_cmd(run: &mut Run, a: &EvalNextArgs) -> Result<(), CliError> {
    let c = load_corpus(run, &a.corpus)?;
    let store = match (&a.store, a.variant) {
        (_, NextVariant::Bm25) => None,
        (Some(base), _) => Some(run.store(base)?),
        (None, v) => return Err(CliError::usage(format!("--variant {v} needs --store"))),
    };
    let params = Bm25Params { k1: a.k1, b: a.b };
    let mut cells = Vec::with_capacity(a.h_l.len());
    for &h in &a.h_l {
        let set = build_next_samples(&c, h)?;
        cells.push(match &store {
            Some(s) => eval_next(&set, s, a.variant, a.speaker_mode)?,
            None => eval_next_bm25(&set, params),
        });
    }
    let report = NextReport::new(a.speaker_mode, cells);
    run.write_report(&a.out, "next", &report)?;
    for cell in &report.cells {
        println!(
            "eval-next: h_l={} n={} pool={} mean normalized rank {:.4}",
            cell.h_l, cell.n, cell.pool_size, cell.mean_normalized_rank
        );
    }
    Ok(())
}

fn bench_cmd(run: &mut Run, a: &BenchEncodingArgs) -> Result<(), CliError> {
    if a.max_h_l == 0 {
        return Err(CliError::usage("--max-h-l must be at least 1"));
    }
    let c = load_corpus(run, &a.corpus)?;
    let report = encoding_cost_report(&c, a.max_h_l);
    run.write_report(&a.out, "cost", &report)?;
    println!(
        "bench-encoding: {} utterances encoded with context, {} relativistic, factor {:.3}",
        report.utterances_encoded_context_mode, report.utterances_encoded_relativistic, report.factor
    );
    Ok(())
}

fn report_cmd(run: &mut Run, a: &ReportArgs) -> Result<(), CliError> {
    let raw = run.read("report", &a.input)?;
    let doc: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| CliError::malformed(format!("report {}: {e}", a.input.display())))?;
    let text = render_report(&doc, a.format)?;
    match &a.out {
        Some(path) => write(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
