use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sieve_core::config::PipelineConfig;
use sieve_core::corpus_io::{
    read_manifest, read_scores, read_selection, read_uid_set, write_selection, ScoreColumn, SELECTION_VERSION,
    SHARD_VERSION,
};
use sieve_core::pipeline::{
    build_backend, embed_manifest, fuse_file, prune_scores, run_pipeline, score_from_shards, SieveScorer,
};
use sieve_core::pruning::{coverage_filter, intersect_selections, selection_iou};
use sieve_core::synth::{
    detection_metrics, generate_synthetic_corpus, k_sweep, read_corpus_dir, similarity_matrix, write_corpus_dir,
    SynthSpec, DEFAULT_PRECISION_KS,
};
use sieve_core::textnorm::mask_medium_phrases;
use sieve_core::{Result, SieveError};

#[derive(Parser)]
#[command(name = "sieve", about = "Caption-based alignment scoring and pruning for image-text corpora")]
#[command(disable_version_flag = true)]
struct Cli {
    /// Print engine and file format versions.
    #[arg(long)]
    version: bool,

    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Worker threads for captioning and embedding.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

/// Flags that map one-to-one onto config keys.
#[derive(Args, Default)]
struct ConfigFlags {
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    phrases: Option<String>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    backend_url: Option<String>,
    #[arg(long)]
    memory: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

impl ConfigFlags {
    fn apply(&self, config: &mut PipelineConfig) -> Result<()> {
        for (key, value) in [
            ("alpha", &self.alpha),
            ("k", &self.k),
            ("r", &self.r),
            ("phrases_path", &self.phrases),
            ("backend", &self.backend),
            ("backend_url", &self.backend_url),
            ("memory_budget", &self.memory),
            ("global_seed", &self.seed),
        ] {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Mask medium phrases in each line of a text file (stdin by default).
    Mask {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Caption, mask, and embed a uid-sorted manifest into two shards.
    Embed {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        captions_emb: PathBuf,
        #[arg(long)]
        alt_emb: PathBuf,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Sieve scores from a manifest and its embedding shards.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        captions_emb: PathBuf,
        #[arg(long)]
        alt_emb: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Min-max normalize and fuse the Sieve and CLIP columns.
    Fuse {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Append normalization statistics to this JSONL file.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Select the top fraction of one or more score tables.
    Prune {
        #[arg(long, required = true, num_args = 1..)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Score column to rank by; defaults to fused, then sieve_raw.
        #[arg(long)]
        column: Option<String>,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Restrict a selection to a uid list or to low text coverage.
    Intersect {
        #[arg(long)]
        a: PathBuf,
        /// uid membership list, one per line.
        #[arg(long, conflicts_with = "coverage", required_unless_present = "coverage")]
        b: Option<PathBuf>,
        /// Manifest whose text_coverage values define the kept set.
        #[arg(long)]
        coverage: Option<PathBuf>,
        #[arg(long)]
        keep: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a labeled synthetic corpus.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        medium_rate: f64,
        #[arg(long)]
        fp_rate: Option<f64>,
        #[arg(long)]
        vocab: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detection AUC and precision@k of a score table on a labeled corpus.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<f64>>,
        #[arg(long)]
        column: Option<String>,
        /// JSONL output; stdout by default.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Selection overlap and text similarity diagnostics.
    #[command(subcommand)]
    Stats(Stats),
    /// caption → mask → embed → score → fuse → prune.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: ConfigFlags,
    },
}

#[derive(Subcommand)]
enum Stats {
    /// Intersection over union of two selections.
    Iou {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Pairwise cosine matrix of masked sentences, as CSV.
    Simmatrix {
        #[arg(long)]
        texts: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: ConfigFlags,
    },
}

fn load_config(cli: &Cli, flags: Option<&ConfigFlags>) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    for o in &cli.overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| SieveError::config(o.as_str(), "expected KEY=VALUE"))?;
        config.set(key.trim(), value.trim())?;
    }
    if let Some(f) = flags {
        f.apply(&mut config)?;
    }
    config.validate()?;
    Ok(config)
}

fn parse_column(s: Option<&str>) -> Result<Option<ScoreColumn>> {
    s.map(|c| ScoreColumn::parse(c).ok_or_else(|| SieveError::config("column", format!("unknown column {c:?}"))))
        .transpose()
}

fn read_lines(input: Option<&Path>) -> Result<Vec<String>> {
    match input {
        Some(p) => {
            let file = File::open(p).map_err(|e| SieveError::io(p, e))?;
            BufReader::new(file)
                .lines()
                .map(|l| l.map_err(|e| SieveError::io(p, e)))
                .collect()
        }
        None => std::io::stdin()
            .lock()
            .lines()
            .map(|l| l.map_err(|e| SieveError::io("<stdin>", e)))
            .collect(),
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| SieveError::io(p, e))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_lines(out: &mut dyn Write, path: Option<&Path>, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let label = path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    for line in lines {
        writeln!(out, "{line}").map_err(|e| SieveError::io(&label, e))?;
    }
    out.flush().map_err(|e| SieveError::io(&label, e))
}

fn execute(cli: &Cli, command: &Command) -> Result<()> {
    match command {
        Command::Mask { input, flags } => {
            let phrases = load_config(cli, Some(flags))?.phrase_list()?;
            let masked = read_lines(input.as_deref())?
                .iter()
                .map(|l| mask_medium_phrases(l, &phrases))
                .collect::<Vec<_>>();
            write_lines(&mut *open_out(None)?, None, masked)
        }
        Command::Embed {
            manifest,
            captions_emb,
            alt_emb,
            flags,
        } => {
            let config = load_config(cli, Some(flags))?;
            let phrases = config.phrase_list()?;
            let backend = build_backend(&config)?;
            let scorer = SieveScorer::from_config(&config, backend.as_ref(), &phrases);
            let summary = embed_manifest(manifest, &scorer, captions_emb, alt_emb)?;
            log::info!("embedded {} records ({} captions)", summary.records, summary.caption_rows);
            Ok(())
        }
        Command::Score {
            manifest,
            captions_emb,
            alt_emb,
            out,
        } => {
            let summary = score_from_shards(manifest, captions_emb, alt_emb, out)?;
            log::info!("scored {} records", summary.rows);
            Ok(())
        }
        Command::Fuse {
            input,
            out,
            report,
            flags,
        } => {
            let config = load_config(cli, Some(flags))?;
            let summary = fuse_file(input, out, config.fusion_weights())?;
            let line = json!({"event": "normalization", "alpha": config.alpha, "summary": summary}).to_string();
            match report {
                Some(p) => {
                    let mut f = std::fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(p)
                        .map_err(|e| SieveError::io(p, e))?;
                    writeln!(f, "{line}").map_err(|e| SieveError::io(p, e))
                }
                None => {
                    eprintln!("{line}");
                    Ok(())
                }
            }
        }
        Command::Prune {
            scores,
            out,
            column,
            flags,
        } => {
            let config = load_config(cli, Some(flags))?;
            let selection = prune_scores(scores, config.k, config.memory_budget, parse_column(column.as_deref())?)?;
            write_selection(&selection, out)?;
            log::info!("selected {} of {}", selection.len(), selection.source_count());
            Ok(())
        }
        Command::Intersect {
            a,
            b,
            coverage,
            keep,
            out,
        } => {
            let a = read_selection(a)?;
            let members = match (b, coverage) {
                (Some(b), _) => read_uid_set(b)?,
                (None, Some(manifest)) => {
                    let mut config = load_config(cli, None)?;
                    if let Some(k) = keep {
                        config.set("coverage_keep", k)?;
                    }
                    let mut pairs = Vec::new();
                    for rec in read_manifest(manifest)? {
                        let rec = rec?;
                        let c = rec.text_coverage.ok_or(SieveError::MissingScore {
                            uid: rec.uid.clone(),
                            column: "text_coverage",
                        })?;
                        pairs.push((rec.uid, c));
                    }
                    coverage_filter(pairs, config.coverage_keep)?
                }
                (None, None) => unreachable!("clap requires --b or --coverage"),
            };
            write_selection(&intersect_selections(&a, &members), out)
        }
        Command::Synth {
            n,
            rate,
            seed,
            medium_rate,
            fp_rate,
            vocab,
            out,
        } => {
            let mut spec = SynthSpec::new(*n, *rate, *seed);
            spec.medium_phrase_rate = *medium_rate;
            if let Some(f) = fp_rate {
                spec.clip_false_positive_rate = *f;
            }
            if let Some(v) = vocab {
                spec.vocab_size = *v;
            }
            let corpus = generate_synthetic_corpus(&spec)?;
            write_corpus_dir(&corpus, &spec, out)
        }
        Command::Eval {
            corpus,
            scores,
            ks,
            column,
            report,
        } => {
            let corpus = read_corpus_dir(corpus)?;
            let column = parse_column(column.as_deref())?;
            let mut map = HashMap::new();
            let mut used = None;
            for row in read_scores(scores)? {
                let row = row?;
                let col = *used.get_or_insert_with(|| {
                    column.unwrap_or_else(|| ScoreColumn::preferred(&row).unwrap_or(ScoreColumn::Fused))
                });
                map.insert(row.uid.clone(), row.require(col)?);
            }
            let column_name = used.map_or("none", ScoreColumn::name);
            let ks = ks.clone().unwrap_or_else(|| DEFAULT_PRECISION_KS.to_vec());
            let metrics = detection_metrics(&map, &corpus.labels, &ks)?;
            let mut lines = vec![json!({"metric": "auc", "column": column_name, "value": metrics.auc}).to_string()];
            for row in k_sweep(&map, &corpus.labels, &ks)? {
                lines.push(
                    json!({
                        "metric": "precision_at_k",
                        "column": column_name,
                        "k": row.k,
                        "precision": row.precision,
                        "selected_count": row.selected_count,
                    })
                    .to_string(),
                );
            }
            write_lines(&mut *open_out(report.as_deref())?, report.as_deref(), lines)
        }
        Command::Stats(Stats::Iou { a, b }) => {
            let a: std::collections::HashSet<String> = read_selection(a)?.into_uids().into_iter().collect();
            let b: std::collections::HashSet<String> = read_selection(b)?.into_uids().into_iter().collect();
            println!("{}", selection_iou(&a, &b));
            Ok(())
        }
        Command::Stats(Stats::Simmatrix { texts, out, flags }) => {
            let config = load_config(cli, Some(flags))?;
            let phrases = config.phrase_list()?;
            let backend = build_backend(&config)?;
            let texts: Vec<String> = read_lines(Some(texts))?
                .into_iter()
                .filter(|l| !l.trim().is_empty())
                .collect();
            let m = similarity_matrix(&texts, backend.as_ref(), &phrases)?;
            let rows = m
                .iter()
                .map(|row| row.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
            write_lines(&mut *open_out(out.as_deref())?, out.as_deref(), rows)
        }
        Command::Run { manifest, out, flags } => {
            let config = load_config(cli, Some(flags))?;
            let outcome = run_pipeline(&config, manifest, out)?;
            log::info!(
                "selected {} of {} by {}",
                outcome.selection.len(),
                outcome.selection.source_count(),
                outcome.selection.scorer_id()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            // Usage errors share the config exit code.
            return ExitCode::from(if usage_error { 1 } else { 0 });
        }
    };
    if cli.version {
        println!(
            "sieve {} (selection format v{SELECTION_VERSION}, embedding shard format v{SHARD_VERSION})",
            env!("CARGO_PKG_VERSION")
        );
        return ExitCode::SUCCESS;
    }
    let Some(command) = &cli.command else {
        eprintln!("error: no subcommand given; see `sieve --help`");
        return ExitCode::from(1);
    };
    #[cfg(feature = "parallel")]
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(&cli, command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Error messages already embed their causes.
            eprintln!("error: {e}");
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}
