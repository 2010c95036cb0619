use std::fmt::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{train_or_load, Arm, Model, TrainConfig};
use crate::scenegen::{generate_dataset, DatasetSpec, Scene, Split, SplitRatios};

use super::metrics::{aggregate, InteractionTrace, MetricReport};
use super::instances::{eval_instances, InstanceSelection};
use super::protocol::{run_protocol, EvalInstance, ProtocolConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub arm: Arm,
    /// Mean over seeds.
    pub report: MetricReport,
    pub per_seed: Vec<MetricReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, arm: Arm) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.arm == arm)
    }

    /// Plain-text comparison table; deltas are relative to the `full` arm.
    pub fn table(&self) -> String {
        let base = self.row(Arm::Full).map(|r| r.report.clone());
        let mut out = String::new();
        writeln!(out, "{:<10} {:>7} {:>9} {:>7} {:>7} {:>7}", "arm", "seeds", "NoC90", "1-mIoU", "5-mIoU", "NoF95").unwrap();
        for r in &self.rows {
            let m = &r.report;
            let delta = |v: f64, b: Option<f64>| match b {
                Some(b) if r.arm != Arm::Full => format!("{:+.2}", v - b),
                _ => String::new(),
            };
            writeln!(
                out,
                "{:<10} {:>7} {:>5.2}{:>6} {:>7.4} {:>7.4} {:>7.2}  {}",
                r.arm.name(),
                r.per_seed.len(),
                m.noc90,
                delta(m.noc90, base.as_ref().map(|b| b.noc90)),
                m.miou_1,
                m.miou_5,
                r.per_seed.iter().map(|s| s.nof95 as f64).sum::<f64>() / r.per_seed.len() as f64,
                delta(100.0 * m.miou_1, base.as_ref().map(|b| 100.0 * b.miou_1)),
            )
            .unwrap();
        }
        out.push_str(MetricReport::header());
        out.push('\n');
        out
    }
}

/// Mean of per-seed reports; `nof95` is rounded.
pub fn mean_report(reports: &[MetricReport]) -> MetricReport {
    let n = reports.len() as f64;
    let avg = |f: &dyn Fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    MetricReport {
        instances: reports[0].instances,
        click_budget: reports[0].click_budget,
        noc90: avg(&|r| r.noc90),
        noc95: avg(&|r| r.noc95),
        miou_1: avg(&|r| r.miou_1),
        miou_5: avg(&|r| r.miou_5),
        nof95: avg(&|r| r.nof95 as f64).round() as usize,
        spc_ms: avg(&|r| r.spc_ms),
        sat_latency_s: None,
    }
}

/// Runs the same protocol for every arm and seed. Each arm needs at least one
/// trained model.
pub fn run_ablation(
    arms: &[(Arm, Vec<Model<f32>>)],
    instances: &[EvalInstance<'_>],
    cfg: &ProtocolConfig,
) -> Result<(AblationReport, Vec<(Arm, usize, Vec<InteractionTrace>)>)> {
    let mut rows = Vec::new();
    let mut traces_out = Vec::new();
    for (arm, models) in arms {
        if models.is_empty() {
            return Err(Error::Config(format!("no checkpoint for arm {arm}")));
        }
        let mut per_seed = Vec::new();
        for (i, m) in models.iter().enumerate() {
            if m.config.arm != *arm {
                return Err(Error::Config(format!("checkpoint trained as {} listed under {arm}", m.config.arm)));
            }
            let traces: Vec<_> = instances.iter().map(|inst| run_protocol(m, inst, cfg)).collect();
            per_seed.push(aggregate(&traces)?);
            traces_out.push((*arm, i, traces));
        }
        rows.push(AblationRow { arm: *arm, report: mean_report(&per_seed), per_seed });
    }
    Ok((AblationReport { rows }, traces_out))
}

/// Synthetic ablation setup: arms trained on a mixed dataset, compared on
/// the focus instances of a separate overlap-only dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyAblation {
    pub train_scenes: usize,
    pub epochs: u64,
    pub seeds: u64,
    pub eval_scenes: usize,
    pub arms: Vec<Arm>,
}

impl Default for ToyAblation {
    fn default() -> Self {
        Self {
            train_scenes: 2000,
            epochs: 15,
            seeds: 3,
            eval_scenes: 100,
            arms: vec![Arm::Full, Arm::NoOrder, Arm::NoDense, Arm::NoSparse],
        }
    }
}

impl ToyAblation {
    pub const TRAIN_SEED: u64 = 1;
    pub const EVAL_SEED: u64 = 2;
    pub const SIZE: usize = 64;

    pub fn train_spec(&self) -> DatasetSpec {
        DatasetSpec { seed: Self::TRAIN_SEED, count: self.train_scenes, size: Self::SIZE, splits: SplitRatios::default() }
    }

    pub fn eval_spec(&self) -> DatasetSpec {
        DatasetSpec { seed: Self::EVAL_SEED, count: self.eval_scenes, size: Self::SIZE, splits: SplitRatios::only(Split::Overlap) }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { epochs: self.epochs, ..Default::default() }
    }

    /// Where the checkpoint of one arm and seed lives under `cache`.
    pub fn checkpoint_path(&self, cache: &Path, arm: Arm, seed: u64) -> PathBuf {
        cache.join(format!("{}x{}", self.train_scenes, self.epochs)).join(format!("{arm}-seed{seed}.ckpt"))
    }

    /// Trains whatever is missing from `cache` and returns every arm's models.
    pub fn models(&self, cache: &Path) -> Result<Vec<(Arm, Vec<Model<f32>>)>> {
        let mut scenes: Option<Vec<Scene>> = None;
        let tcfg = self.train_config();
        let mut out = Vec::new();
        for &arm in &self.arms {
            let mut models = Vec::new();
            for seed in 0..self.seeds {
                let path = self.checkpoint_path(cache, arm, seed);
                if scenes.is_none() && !path.exists() {
                    scenes = Some(generate_dataset(&self.train_spec())?);
                }
                models.push(train_or_load(&path, arm, seed, scenes.as_deref().unwrap_or(&[]), &tcfg)?);
            }
            out.push((arm, models));
        }
        Ok(out)
    }

    /// Full run: train or load, then evaluate on the overlap focus instances.
    pub fn run(&self, cache: &Path) -> Result<AblationReport> {
        let trained = self.models(cache)?;
        let eval = generate_dataset(&self.eval_spec())?;
        let instances = eval_instances(&eval, Some(Split::Overlap), InstanceSelection::Focus);
        Ok(run_ablation(&trained, &instances, &ProtocolConfig::default())?.0)
    }
}
