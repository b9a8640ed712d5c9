use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bench::BenchmarkSpec;
use crate::diffusion::Checkpoint;
use crate::inpaint::Algorithm;
use crate::synthdata::MapKind;
use crate::{Error, Result};

/// One (seed, algorithm) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub pose: usize,
    pub algorithm: Algorithm,
    pub mask_fraction: f64,
    pub observation_hash: String,
    pub psnr: BTreeMap<String, f64>,
    pub ssim: BTreeMap<String, f64>,
    pub wall_seconds: f64,
    pub forward_calls: usize,
    pub backward_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub map: String,
    /// None aggregates every pose.
    pub pose: Option<usize>,
    pub runs: usize,
    pub mean_psnr: f64,
    pub median_psnr: f64,
    pub mean_ssim: f64,
    pub median_ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub algorithm: Algorithm,
    pub runs: usize,
    pub mean_wall_seconds: f64,
    pub median_wall_seconds: f64,
    pub forward_calls: usize,
    pub backward_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub step: usize,
    pub seed: u64,
    pub final_loss: Option<f64>,
    pub timesteps: usize,
    pub base_width: usize,
    pub depth: usize,
    pub parameters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub spec: BenchmarkSpec,
    pub checkpoint: CheckpointInfo,
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
    pub timing: Vec<TimingRow>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    match s.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => s[n / 2],
        n => 0.5 * (s[n / 2 - 1] + s[n / 2]),
    }
}

impl Report {
    pub fn new(spec: BenchmarkSpec, ck: &Checkpoint, records: Vec<RunRecord>) -> Self {
        let cfg = ck.model.config();
        let checkpoint = CheckpointInfo {
            step: ck.step,
            seed: ck.seed,
            final_loss: ck.final_loss,
            timesteps: ck.schedule.steps(),
            base_width: cfg.base_width,
            depth: cfg.depth,
            parameters: ck.model.param_count(),
        };
        let mut summary = Vec::new();
        let mut timing = Vec::new();
        for &alg in &spec.algorithms {
            let runs: Vec<&RunRecord> = records.iter().filter(|r| r.algorithm == alg).collect();
            if runs.is_empty() {
                continue;
            }
            let walls: Vec<f64> = runs.iter().map(|r| r.wall_seconds).collect();
            timing.push(TimingRow {
                algorithm: alg,
                runs: runs.len(),
                mean_wall_seconds: mean(&walls),
                median_wall_seconds: median(&walls),
                forward_calls: runs[0].forward_calls,
                backward_calls: runs[0].backward_calls,
            });
            for map in MapKind::ALL {
                let pose_sets = std::iter::once(None).chain((0..spec.poses.len()).map(Some));
                for pose in pose_sets {
                    let sel: Vec<&&RunRecord> = runs.iter().filter(|r| pose.map_or(true, |p| r.pose == p)).collect();
                    if sel.is_empty() {
                        continue;
                    }
                    let p: Vec<f64> = sel.iter().map(|r| r.psnr[map.name()]).collect();
                    let s: Vec<f64> = sel.iter().map(|r| r.ssim[map.name()]).collect();
                    summary.push(SummaryRow {
                        algorithm: alg,
                        map: map.name().to_string(),
                        pose,
                        runs: sel.len(),
                        mean_psnr: mean(&p),
                        median_psnr: median(&p),
                        mean_ssim: mean(&s),
                        median_ssim: median(&s),
                    });
                }
            }
        }
        Self {
            spec,
            checkpoint,
            records,
            summary,
            timing,
        }
    }

    /// Pose-aggregated summary row.
    pub fn overall(&self, algorithm: Algorithm, map: MapKind) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.algorithm == algorithm && r.map == map.name() && r.pose.is_none())
    }

    pub fn mean_psnr(&self, algorithm: Algorithm, map: MapKind) -> Option<f64> {
        self.overall(algorithm, map).map(|r| r.mean_psnr)
    }

    pub fn timing(&self, algorithm: Algorithm) -> Option<&TimingRow> {
        self.timing.iter().find(|t| t.algorithm == algorithm)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.checkpoint;
        let _ = writeln!(
            s,
            "checkpoint: step {} seed {} T={} width {} depth {} ({} parameters), final loss {}",
            c.step,
            c.seed,
            c.timesteps,
            c.base_width,
            c.depth,
            c.parameters,
            c.final_loss.map_or("n/a".to_string(), |l| format!("{l:.5}"))
        );
        let _ = writeln!(
            s,
            "benchmark: {} seeds, {} poses, R={}, image {}px, landmark noise {} px\n",
            self.spec.seeds.len(),
            self.spec.poses.len(),
            self.spec.resolution,
            self.spec.image_size,
            self.spec.landmark_noise
        );
        let _ = writeln!(
            s,
            "{:<10} {:<9} {:<5} {:>4} {:>10} {:>10} {:>9} {:>9}",
            "algorithm", "map", "pose", "n", "PSNR mean", "PSNR med", "SSIM mean", "SSIM med"
        );
        for r in &self.summary {
            let pose = r.pose.map_or("all".to_string(), |p| p.to_string());
            let _ = writeln!(
                s,
                "{:<10} {:<9} {:<5} {:>4} {:>10.2} {:>10.2} {:>9.4} {:>9.4}",
                r.algorithm.name(),
                r.map,
                pose,
                r.runs,
                r.mean_psnr,
                r.median_psnr,
                r.mean_ssim,
                r.median_ssim
            );
        }
        let _ = writeln!(
            s,
            "\n{:<10} {:>5} {:>12} {:>12} {:>9} {:>9}",
            "algorithm", "runs", "mean wall s", "median s", "forward", "backward"
        );
        for t in &self.timing {
            let _ = writeln!(
                s,
                "{:<10} {:>5} {:>12.2} {:>12.2} {:>9} {:>9}",
                t.algorithm.name(),
                t.runs,
                t.mean_wall_seconds,
                t.median_wall_seconds,
                t.forward_calls,
                t.backward_calls
            );
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    /// Writes `<stem>.txt` and `<stem>.json`.
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<()> {
        let stem = stem.as_ref();
        std::fs::write(stem.with_extension("txt"), self.to_text())?;
        std::fs::write(stem.with_extension("json"), self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
