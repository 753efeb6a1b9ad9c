//! Experiment commands behind the `clwrx` binary: dataset generation,
//! labeling, strategy training runs, evaluation, and figure-ready reports.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::channelgen::{generate_sample, generate_test_sets, ChannelSample};
use crate::clcore::{batches_from_episodes, run_stream, MetricRow, RunLog, RunOutput, Strategy};
use crate::config::{file_sha256, LoadedConfig, RunManifest};
use crate::dataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::policy::{load_checkpoint, save_checkpoint, FeatureNorm};
use crate::rng::RNG_ALGO_ID;
use crate::wmmse::{label_batch, LabeledSample};

pub fn train_file(ep: usize) -> String {
    format!("ep{ep}_train.bin")
}

pub fn test_file(ep: usize) -> String {
    format!("ep{ep}_test.bin")
}

pub fn train_labeled_file(ep: usize) -> String {
    format!("ep{ep}_train_labeled.bin")
}

pub fn test_labeled_file(ep: usize) -> String {
    format!("ep{ep}_test_labeled.bin")
}

/// Per-episode sample counts produced by `generate`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedEpisode {
    pub episode: usize,
    pub kind: String,
    pub n_train: usize,
    pub n_test: usize,
}

/// Write the per-episode train/test datasets in the binary format.
/// Sample ids match the stream order exactly, so labeling + streaming later
/// reproduces the same working sets as on-the-fly generation.
pub fn cmd_generate(lc: &LoadedConfig) -> Result<Vec<GeneratedEpisode>> {
    let cfg = &lc.config;
    cfg.validate()?;
    let schedule = cfg.episode_schedule();
    let k = cfg.k_pairs();
    let dir = lc.data_dir();
    std::fs::create_dir_all(&dir)?;
    let mut out = Vec::new();
    let mut next_id = 0u64;
    for (i, spec) in schedule.episodes.iter().enumerate() {
        let mut train = Vec::with_capacity(spec.n_train);
        for _ in 0..spec.n_train {
            train.push(generate_sample(&spec.kind, k, schedule.seed, next_id, i as u32)?);
            next_id += 1;
        }
        dataset::write_unlabeled(&dir.join(train_file(i)), &train, RNG_ALGO_ID)?;
        out.push(GeneratedEpisode {
            episode: i,
            kind: spec.kind.name().to_string(),
            n_train: spec.n_train,
            n_test: spec.n_test,
        });
    }
    let test_sets = generate_test_sets(&schedule, k)?;
    for (i, set) in test_sets.iter().enumerate() {
        dataset::write_unlabeled(&dir.join(test_file(i)), set, RNG_ALGO_ID)?;
    }
    for ep in &out {
        println!(
            "episode {} ({}): {} train, {} test",
            ep.episode, ep.kind, ep.n_train, ep.n_test
        );
    }
    Ok(out)
}

/// Labeling summary for one file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFile {
    pub file: String,
    pub n: usize,
    pub mean_oracle_rate: f64,
}

fn label_one(
    src: &Path,
    dst: &Path,
    problem: &crate::channelgen::ProblemConfig,
    wmmse: &crate::wmmse::WmmseConfig,
) -> Result<LabeledFile> {
    let (header, ds) = dataset::read_dataset(src)?;
    let samples: Vec<ChannelSample> = match ds {
        dataset::Dataset::Unlabeled(v) => v,
        dataset::Dataset::Labeled(v) => v.into_iter().map(|s| s.channel).collect(),
    };
    if header.k_pairs as usize != problem.k_pairs() {
        return Err(Error::Format(format!(
            "{}: file has K={}, config has K={}",
            src.display(),
            header.k_pairs,
            problem.k_pairs()
        )));
    }
    let labeled = label_batch(&samples, problem, wmmse)?;
    dataset::write_labeled(dst, &labeled, header.rng_algo)?;
    let mean = if labeled.is_empty() {
        0.0
    } else {
        labeled.iter().map(|s| s.oracle_rate).sum::<f64>() / labeled.len() as f64
    };
    Ok(LabeledFile {
        file: dst.file_name().unwrap().to_string_lossy().into_owned(),
        n: labeled.len(),
        mean_oracle_rate: mean,
    })
}

/// Label every train/test dataset referenced by the config.
pub fn cmd_label(lc: &LoadedConfig) -> Result<Vec<LabeledFile>> {
    let cfg = &lc.config;
    cfg.validate()?;
    let dir = lc.data_dir();
    let mut out = Vec::new();
    for i in 0..cfg.schedule.episodes.len() {
        for (src, dst) in [
            (train_file(i), train_labeled_file(i)),
            (test_file(i), test_labeled_file(i)),
        ] {
            let summary = label_one(&dir.join(&src), &dir.join(&dst), &cfg.problem, &cfg.wmmse)?;
            println!("{}: {} samples, mean oracle rate {:.6}", summary.file, summary.n, summary.mean_oracle_rate);
            out.push(summary);
        }
    }
    Ok(out)
}

fn load_labeled_episodes(lc: &LoadedConfig, which: &dyn Fn(usize) -> String) -> Result<Vec<Vec<LabeledSample>>> {
    let dir = lc.data_dir();
    let mut episodes = Vec::new();
    for i in 0..lc.config.schedule.episodes.len() {
        let path = dir.join(which(i));
        let set = dataset::read_labeled(&path)?;
        if set.iter().any(|s| s.channel.k_pairs() != lc.config.k_pairs()) {
            return Err(Error::Format(format!(
                "{}: K does not match the config",
                path.display()
            )));
        }
        episodes.push(set);
    }
    Ok(episodes)
}

fn dataset_hashes(lc: &LoadedConfig) -> Result<BTreeMap<String, String>> {
    let dir = lc.data_dir();
    let mut hashes = BTreeMap::new();
    for i in 0..lc.config.schedule.episodes.len() {
        for name in [train_labeled_file(i), test_labeled_file(i)] {
            hashes.insert(name.clone(), file_sha256(&dir.join(&name))?);
        }
    }
    Ok(hashes)
}

/// Serialize one metric log as CSV. Float fields use shortest-round-trip
/// formatting, which is a pure function of the value.
pub fn write_metrics_csv(path: &Path, log: &RunLog) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let n = log.n_episodes;
    let mut header = String::from("t,samples_seen,strategy,batch_episode,train_loss");
    for i in 0..n {
        header.push_str(&format!(",rate_ep{i}"));
    }
    for i in 0..n {
        header.push_str(&format!(",ratio_ep{i}"));
    }
    header.push_str(",mixture_rate,mixture_ratio");
    for i in 0..n {
        header.push_str(&format!(",mem_ep{i}"));
    }
    header.push_str(",mem_size");
    writeln!(out, "{header}")?;
    for row in &log.rows {
        write!(
            out,
            "{},{},{},{},{}",
            row.t,
            row.samples_seen,
            row.strategy.name(),
            row.batch_episode,
            row.train_loss
        )?;
        for v in &row.per_episode_rate {
            write!(out, ",{v}")?;
        }
        for v in &row.per_episode_ratio {
            write!(out, ",{v}")?;
        }
        write!(out, ",{},{}", row.mixture_rate, row.mixture_ratio)?;
        for v in &row.memory_per_episode {
            write!(out, ",{v}")?;
        }
        writeln!(out, ",{}", row.memory_size)?;
    }
    out.flush()?;
    Ok(())
}

/// A parsed CSV kept as strings so merges preserve values verbatim.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Format(format!("{}: empty csv", path.display())))?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (ln, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            if row.len() != header.len() {
                return Err(Error::Format(format!(
                    "{}: row {} has {} fields, header has {}",
                    path.display(),
                    ln + 2,
                    row.len(),
                    header.len()
                )));
            }
            rows.push(row);
        }
        Ok(CsvTable { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let idx = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("missing column '{name}'")))?;
        Ok(self.rows.iter().map(|r| r[idx].as_str()).collect())
    }
}

fn write_hist_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "bin_lo,bin_hi,count,cdf")?;
    let h = &report.histogram;
    for i in 0..h.counts.len() {
        writeln!(out, "{},{},{},{}", h.edges[i], h.edges[i + 1], h.counts[i], h.cdf[i])?;
    }
    out.flush()?;
    Ok(())
}

/// Result of one strategy training run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub strategy: Strategy,
    pub run_dir: PathBuf,
    pub final_mixture_rate: f64,
    pub final_mixture_ratio: f64,
    pub log: RunLog,
}

fn run_one_strategy(
    lc: &LoadedConfig,
    strategy: Strategy,
    episodes: &[Vec<LabeledSample>],
    test_sets: &[Vec<LabeledSample>],
    hashes: &BTreeMap<String, String>,
    progress: bool,
) -> Result<TrainOutcome> {
    let cfg = &lc.config;
    let run_dir = lc.out_dir().join(strategy.name());
    std::fs::create_dir_all(&run_dir)?;
    let manifest = RunManifest::new(cfg, strategy, hashes.clone());
    manifest.save(&run_dir.join("manifest.json"))?;

    let batches = batches_from_episodes(episodes, cfg.schedule.batch_size)?;
    let trainer = cfg.trainer_config(strategy);
    let bins = cfg.hist_spec();
    let total = batches.len();
    let outcome = run_stream(
        &batches,
        test_sets,
        &trainer,
        &cfg.problem,
        cfg.eval_every,
        &bins,
        |row: &MetricRow| {
            if progress {
                println!(
                    "[{}] t={}/{total} mixture_rate={:.4} mixture_ratio={:.4}",
                    strategy.name(),
                    row.t,
                    row.mixture_rate,
                    row.mixture_ratio
                );
            }
        },
    );
    let RunOutput { log, state } = match outcome {
        Ok(o) => o,
        Err(e) => {
            // record the abort cause next to the manifest before propagating
            let mut aborted = manifest;
            aborted.abort = Some(e.to_string());
            let _ = aborted.save(&run_dir.join("manifest.json"));
            return Err(e);
        }
    };
    write_metrics_csv(&run_dir.join("metrics.csv"), &log)?;
    let norm = state.norm.unwrap_or_else(FeatureNorm::identity);
    save_checkpoint(&run_dir.join("final.ckpt"), &state.params, &norm)?;
    let report = log
        .final_report
        .as_ref()
        .ok_or_else(|| Error::TrainAbort("run produced no final report".into()))?;
    write_hist_csv(&run_dir.join("final_hist.csv"), report)?;
    Ok(TrainOutcome {
        strategy,
        run_dir,
        final_mixture_rate: report.mixture_rate,
        final_mixture_ratio: report.mixture_ratio,
        log,
    })
}

/// Train the requested strategies (default: the config's list) from one
/// shared initialization over one shared stream order.
pub fn cmd_train(
    lc: &LoadedConfig,
    strategies: Option<&[Strategy]>,
    parallel: bool,
    progress: bool,
) -> Result<Vec<TrainOutcome>> {
    let cfg = &lc.config;
    cfg.validate()?;
    let strategies: Vec<Strategy> =
        strategies.map(|s| s.to_vec()).unwrap_or_else(|| cfg.strategies.clone());
    let episodes = load_labeled_episodes(lc, &train_labeled_file)?;
    let test_sets = load_labeled_episodes(lc, &test_labeled_file)?;
    let hashes = dataset_hashes(lc)?;
    std::fs::create_dir_all(lc.out_dir())?;
    let results: Vec<Result<TrainOutcome>> = if parallel {
        strategies
            .par_iter()
            .map(|&s| run_one_strategy(lc, s, &episodes, &test_sets, &hashes, progress))
            .collect()
    } else {
        strategies
            .iter()
            .map(|&s| run_one_strategy(lc, s, &episodes, &test_sets, &hashes, progress))
            .collect()
    };
    results.into_iter().collect()
}

/// Evaluation artifacts for one strategy checkpoint.
#[derive(Debug)]
pub struct EvalOutcome {
    pub strategy: Strategy,
    pub report: EvalReport,
}

fn write_eval_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,scope,n,mean_rate,mean_ratio,excluded")?;
    for ep in &report.per_episode {
        writeln!(
            out,
            "{},ep{},{},{},{},{}",
            report.t, ep.episode, ep.n, ep.mean_rate, ep.mean_ratio, ep.excluded
        )?;
    }
    writeln!(
        out,
        "{},mixture,{},{},{},{}",
        report.t, report.mixture_n, report.mixture_rate, report.mixture_ratio, report.excluded
    )?;
    out.flush()?;
    Ok(())
}

/// Evaluate saved checkpoints against the labeled test sets.
pub fn cmd_eval(lc: &LoadedConfig, strategies: Option<&[Strategy]>) -> Result<Vec<EvalOutcome>> {
    let cfg = &lc.config;
    cfg.validate()?;
    let strategies: Vec<Strategy> =
        strategies.map(|s| s.to_vec()).unwrap_or_else(|| cfg.strategies.clone());
    let test_sets = load_labeled_episodes(lc, &test_labeled_file)?;
    let bins = cfg.hist_spec();
    let mut out = Vec::new();
    for strategy in strategies {
        let run_dir = lc.out_dir().join(strategy.name());
        let (params, norm) = load_checkpoint(&run_dir.join("final.ckpt"))?;
        let report = evaluate(&params, &norm, &test_sets, &cfg.problem, &bins, 0)?;
        write_eval_csv(&run_dir.join("eval_report.csv"), &report)?;
        std::fs::write(
            run_dir.join("eval_report.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
        write_hist_csv(&run_dir.join("eval_hist.csv"), &report)?;
        println!(
            "[{}] mixture_rate={:.4} mixture_ratio={:.4}",
            strategy.name(),
            report.mixture_rate,
            report.mixture_ratio
        );
        out.push(EvalOutcome { strategy, report });
    }
    Ok(out)
}

/// Paths of the merged report bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutcome {
    pub merged_csv: PathBuf,
    pub pdf_cdf_csv: PathBuf,
}

/// Merge per-strategy metric logs into one figure-ready time series plus the
/// final-timestamp PDF/CDF table.
pub fn cmd_report(lc: &LoadedConfig, strategies: Option<&[Strategy]>) -> Result<ReportOutcome> {
    let cfg = &lc.config;
    cfg.validate()?;
    let strategies: Vec<Strategy> =
        strategies.map(|s| s.to_vec()).unwrap_or_else(|| cfg.strategies.clone());
    let n_eps = cfg.schedule.episodes.len();
    let mut tables = Vec::new();
    for &s in &strategies {
        let path = lc.out_dir().join(s.name()).join("metrics.csv");
        tables.push((s, CsvTable::read(&path)?));
    }
    // all runs must share one schedule: identical time axes
    let reference: Vec<(Vec<&str>, Vec<&str>, Vec<&str>)> = tables
        .iter()
        .map(|(_, t)| {
            Ok((t.column("t")?, t.column("samples_seen")?, t.column("batch_episode")?))
        })
        .collect::<Result<_>>()?;
    for window in reference.windows(2) {
        if window[0] != window[1] {
            return Err(Error::Format(
                "mismatched schedules across runs: time axes differ".into(),
            ));
        }
    }

    let report_dir = lc.out_dir().join("report");
    std::fs::create_dir_all(&report_dir)?;
    let merged_csv = report_dir.join("merged.csv");
    {
        let mut out = std::io::BufWriter::new(std::fs::File::create(&merged_csv)?);
        let mut header = String::from("t,samples_seen,batch_episode");
        for (s, _) in &tables {
            for i in 0..n_eps {
                header.push_str(&format!(",{}_rate_ep{i}", s.name()));
            }
            header.push_str(&format!(",{}_mixture_rate", s.name()));
            for i in 0..n_eps {
                header.push_str(&format!(",{}_ratio_ep{i}", s.name()));
            }
            header.push_str(&format!(",{}_mixture_ratio", s.name()));
        }
        writeln!(out, "{header}")?;
        let n_rows = tables[0].1.rows.len();
        let mut columns: Vec<Vec<&str>> = Vec::new();
        for (_, t) in &tables {
            for i in 0..n_eps {
                columns.push(t.column(&format!("rate_ep{i}"))?);
            }
            columns.push(t.column("mixture_rate")?);
            for i in 0..n_eps {
                columns.push(t.column(&format!("ratio_ep{i}"))?);
            }
            columns.push(t.column("mixture_ratio")?);
        }
        let t_col = tables[0].1.column("t")?;
        let seen_col = tables[0].1.column("samples_seen")?;
        let ep_col = tables[0].1.column("batch_episode")?;
        for r in 0..n_rows {
            write!(out, "{},{},{}", t_col[r], seen_col[r], ep_col[r])?;
            for col in &columns {
                write!(out, ",{}", col[r])?;
            }
            writeln!(out)?;
        }
        out.flush()?;
    }

    let pdf_cdf_csv = report_dir.join("pdf_cdf.csv");
    {
        let mut hists = Vec::new();
        for &s in &strategies {
            let path = lc.out_dir().join(s.name()).join("final_hist.csv");
            hists.push((s, CsvTable::read(&path)?));
        }
        let edges: Vec<(Vec<&str>, Vec<&str>)> = hists
            .iter()
            .map(|(_, t)| Ok((t.column("bin_lo")?, t.column("bin_hi")?)))
            .collect::<Result<_>>()?;
        for window in edges.windows(2) {
            if window[0] != window[1] {
                return Err(Error::Format("mismatched histogram bins across runs".into()));
            }
        }
        let mut out = std::io::BufWriter::new(std::fs::File::create(&pdf_cdf_csv)?);
        let mut header = String::from("bin_lo,bin_hi");
        for (s, _) in &hists {
            header.push_str(&format!(",{}_count,{}_cdf", s.name(), s.name()));
        }
        writeln!(out, "{header}")?;
        let (lo, hi) = &edges[0];
        let mut cols = Vec::new();
        for (_, t) in &hists {
            cols.push(t.column("count")?);
            cols.push(t.column("cdf")?);
        }
        for r in 0..lo.len() {
            write!(out, "{},{}", lo[r], hi[r])?;
            for c in &cols {
                write!(out, ",{}", c[r])?;
            }
            writeln!(out)?;
        }
        out.flush()?;
    }
    println!("report written to {}", report_dir.display());
    Ok(ReportOutcome { merged_csv, pdf_cdf_csv })
}
