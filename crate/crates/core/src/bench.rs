//! Wall-clock scaling of synthetic extraction across worker counts.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::model::{Fps, PipelineConfig};
use crate::pipeline::synthetic::SyntheticScenario;
use crate::pipeline::{run_extraction, BackendDescriptor, PipelineError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub workers: usize,
    pub frames: u64,
    pub wall_ms: f64,
    pub speedup: f64,
}

/// A scenario spanning exactly `frames` frames. Frame rate is raised above
/// 30 fps only when the period would otherwise exceed an hour.
pub fn bench_scenario(frames: u64, seed: u64) -> SyntheticScenario {
    let fps = (frames.div_ceil(3000)).max(30) as u32;
    let mut sc = SyntheticScenario::new(frames as f64 / f64::from(fps), seed);
    sc.fps = Fps::whole(fps).expect("positive");
    sc
}

/// Best-of-`repeats` wall time of a full extraction.
pub fn time_extraction(
    scenario: &SyntheticScenario,
    workers: usize,
    repeats: usize,
) -> Result<Duration, PipelineError> {
    let backend = BackendDescriptor::synthetic(scenario.clone())?;
    let cfg = PipelineConfig { workers, fps: scenario.fps, ..PipelineConfig::default() };
    let mut best = Duration::MAX;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        run_extraction(scenario.video(), &backend, &cfg)?;
        best = best.min(start.elapsed());
    }
    Ok(best)
}

/// One row per worker count; speedups are relative to the first entry.
pub fn run_bench(frames: u64, workers_list: &[usize], seed: u64, repeats: usize) -> Result<Vec<BenchRow>, PipelineError> {
    let scenario = bench_scenario(frames, seed);
    let mut rows = Vec::with_capacity(workers_list.len());
    let mut baseline: Option<f64> = None;
    for &workers in workers_list {
        let wall = time_extraction(&scenario, workers, repeats)?.as_secs_f64() * 1e3;
        let base = *baseline.get_or_insert(wall);
        rows.push(BenchRow { workers, frames: scenario.frame_count(), wall_ms: wall, speedup: base / wall });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_has_requested_length() {
        assert_eq!(bench_scenario(100_000, 0).frame_count(), 100_000);
        assert_eq!(bench_scenario(500_000, 0).frame_count(), 500_000);
        assert_eq!(bench_scenario(31, 0).frame_count(), 31);
    }

    #[test]
    fn single_entry_has_unit_speedup() {
        let rows = run_bench(2000, &[1], 0, 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].speedup, 1.0);
    }
}
