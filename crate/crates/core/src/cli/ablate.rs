use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::config::RunConfig;
use crate::datasets::{DatasetIndex, SplitManifest};
use crate::error::{Error, Result};
use crate::eval::{emit_table, evaluate, file_label, EvalOptions, MetricsReport, TableLayout};
use crate::model::{make_ablation, read_checkpoint, ModelConfig, OfpNet};
use crate::train::{train, TrainData};

#[derive(Clone, Debug)]
pub struct AblationOutcome {
    /// One report per requested label, in request order.
    pub reports: Vec<MetricsReport>,
    pub table_csv: PathBuf,
    pub table_txt: PathBuf,
    /// Best checkpoint of every distinct variant config.
    pub checkpoints: Vec<PathBuf>,
}

struct Job {
    labels: Vec<String>,
    model: ModelConfig,
}

/// Trains every requested variant of `cfg.model` with `cfg.train`, scores
/// its best checkpoint on `cfg.eval.split`, and writes `table3.{csv,txt}`
/// to `out`. Variants with identical configs are trained once. Jobs run
/// one at a time unless `parallel > 1`; results do not depend on it.
pub fn run_ablation(
    cfg: &RunConfig,
    index: &DatasetIndex,
    manifest: &SplitManifest,
    labels: &[String],
    parallel: usize,
    out: &Path,
) -> Result<AblationOutcome> {
    if labels.is_empty() {
        return Err(Error::config("no ablation variants requested"));
    }
    let mut jobs: Vec<Job> = Vec::new();
    for label in labels {
        if labels.iter().filter(|l| *l == label).count() > 1 {
            return Err(Error::config(format!("variant {label} requested twice")));
        }
        let model = make_ablation(&cfg.model, label)?;
        match jobs.iter_mut().find(|j| j.model == model) {
            Some(job) => job.labels.push(label.clone()),
            None => jobs.push(Job {
                labels: vec![label.clone()],
                model,
            }),
        }
    }
    let split = cfg.eval.split()?;
    let data = TrainData::load(index, manifest, cfg.train.scale)?;
    let opts = EvalOptions {
        tile: cfg.eval.tile,
        sr_dump: None,
    };
    let run_job = |job: &Job| -> Result<(MetricsReport, PathBuf)> {
        let dir = out.join(file_label(&job.labels[0]));
        log::info!(
            "ablation {}: {} parameters",
            job.labels.join(" = "),
            crate::model::count_params(&job.model)
        );
        let model = OfpNet::<f32>::new(job.model.clone(), cfg.train.seed)?;
        let outcome = train(model, &data, &cfg.train, &dir)?;
        let best = read_checkpoint(&outcome.best)?;
        let report = evaluate(
            &best.model,
            index,
            manifest,
            split,
            cfg.train.scale,
            &job.labels[0],
            &opts,
        )?;
        Ok((report, outcome.best))
    };
    type JobResult = Result<(MetricsReport, PathBuf)>;
    let results: Vec<JobResult> = if parallel <= 1 {
        jobs.iter().map(run_job).collect()
    } else {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<JobResult>>> =
            Mutex::new((0..jobs.len()).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..parallel.min(jobs.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(job) = jobs.get(i) else { break };
                    let r = run_job(job);
                    slots.lock().expect("ablation worker panicked")[i] = Some(r);
                });
            }
        });
        slots
            .into_inner()
            .expect("ablation worker panicked")
            .into_iter()
            .map(|r| r.expect("every job ran"))
            .collect()
    };
    let mut reports = Vec::new();
    let mut checkpoints = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        let (report, ckpt) = result?;
        for label in &job.labels {
            let r = report.clone().relabeled(label.clone());
            r.write(out)?;
            reports.push(r);
        }
        checkpoints.push(ckpt);
    }
    reports.sort_by_key(|r| labels.iter().position(|l| *l == r.variant_label));
    let (table_csv, table_txt) = emit_table(&reports, TableLayout::Table3, out)?;
    Ok(AblationOutcome {
        reports,
        table_csv,
        table_txt,
        checkpoints,
    })
}
