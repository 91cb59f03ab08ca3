//! Acceptance suite. Each test prints one `[PASS]` or `[FAIL]` line with the
//! measured figure, then asserts. Run with `--nocapture` to see the lines.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clock_ground::align::{align_corpus, PlayByPlayEvent, DEFAULT_TOLERANCE_CS};
use clock_ground::bench::{bench_scenario, time_extraction};
use clock_ground::denoise::{ground_series, select_consistent_subset, ClockSample, RawSeries, TimestampSeries};
use clock_ground::gate::{detection_score, gate_frame};
use clock_ground::model::{BBox, ClockTime, Detection, Fps, PipelineConfig, QuarterLabel, RegionKind, VideoMeta};
use clock_ground::parser::{format_clock_time, parse_time_remaining};
use clock_ground::pipeline::synthetic::{synthetic_events, Stoppage, SyntheticScenario, DEFAULT_PERFECT_READ_PROB};
use clock_ground::pipeline::{run_extraction, BackendDescriptor};
use clock_ground::wire;

fn report(name: &str, pass: bool, detail: impl std::fmt::Display) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn grounded_from(sc: &SyntheticScenario, workers: usize) -> (RawSeries, clock_ground::denoise::Grounding) {
    let cfg = PipelineConfig { workers, fps: sc.fps, ..PipelineConfig::default() };
    let backend = BackendDescriptor::synthetic(sc.clone()).unwrap();
    let res = run_extraction(sc.video(), &backend, &cfg).unwrap();
    let g = ground_series(&res.raw, sc.fps, cfg.theta_cs, cfg.max_gap_frames).unwrap();
    (res.raw, g)
}

// ---------------------------------------------------------------------------

#[test]
fn parser_round_trip() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut cases = 0;
    for cs in (0..=360_000u32).step_by(10) {
        cases += 1;
        let ct = ClockTime::from_centiseconds(cs).unwrap();
        let text = format_clock_time(ct);
        if parse_time_remaining(&text) != Ok(ct) {
            failures.push((cs, text));
        }
    }
    let elapsed = start.elapsed();
    report(
        "parser round-trip",
        cases == 36_001 && failures.is_empty() && elapsed < Duration::from_secs(1),
        format!("{cases} cases, {} mismatches (first {:?}), {elapsed:?}", failures.len(), failures.first()),
    );
}

// ---------------------------------------------------------------------------

/// Consistency of an earlier/later pair, written from the clock model:
/// the later reading may not be higher, and may not fall faster than real
/// time by more than `theta` centiseconds.
fn oracle_consistent(a: (u64, u32), b: (u64, u32), fps: Fps, theta: u32) -> bool {
    let (fa, ta) = a;
    let (fb, tb) = b;
    if tb > ta {
        return false;
    }
    // (ta - tb) <= 100 * (fb - fa) / fps + theta, scaled by fps.num()
    let lhs = i128::from(ta - tb) * i128::from(fps.num());
    let rhs = 100 * i128::from(fb - fa) * i128::from(fps.den()) + i128::from(theta) * i128::from(fps.num());
    lhs <= rhs
}

fn brute_force_max(samples: &[(u64, u32)], fps: Fps, theta: u32) -> usize {
    let n = samples.len();
    let mut compat = vec![0u32; n];
    for i in 0..n {
        compat[i] |= 1 << i;
        for j in i + 1..n {
            if oracle_consistent(samples[i], samples[j], fps, theta) {
                compat[i] |= 1 << j;
                compat[j] |= 1 << i;
            }
        }
    }
    let mut best = 0;
    for mask in 0u32..(1 << n) {
        let size = mask.count_ones() as usize;
        if size <= best {
            continue;
        }
        if (0..n).filter(|&i| mask >> i & 1 == 1).all(|i| mask & !compat[i] == 0) {
            best = size;
        }
    }
    best
}

fn random_series(rng: &mut ChaCha8Rng) -> (Vec<(u64, u32)>, Fps, u32) {
    let fps = [Fps::whole(30).unwrap(), Fps::new(30000, 1001).unwrap(), Fps::whole(25).unwrap(), Fps::whole(2).unwrap()]
        [rng.random_range(0..4)];
    let theta = [0, 10, 50, 200][rng.random_range(0..4)];
    let n = rng.random_range(0..=14);
    let mut frame = rng.random_range(0..5u64);
    let mut clock = rng.random_range(2_000..60_000i64);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let step = rng.random_range(1..40u64);
        frame += step;
        let mode = rng.random_range(0..10);
        if mode < 6 {
            clock -= (100 * step as i64 * i64::from(fps.den())) / i64::from(fps.num());
        }
        let shown = match mode {
            0..=5 => clock + rng.random_range(-30..=30),
            6 | 7 => clock,
            _ => rng.random_range(0..60_000),
        };
        out.push((frame, shown.clamp(0, 360_000) as u32));
    }
    (out, fps, theta)
}

#[test]
fn denoiser_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut size_mismatch = 0;
    let mut invalid = 0;
    let mut not_partition = 0;
    for _ in 0..1000 {
        let (samples, fps, theta) = random_series(&mut rng);
        let frame_count = samples.last().map_or(1, |s| s.0 + 1);
        let raw = RawSeries::new(
            VideoMeta::new(frame_count, fps),
            samples.iter().map(|&(f, t)| ClockSample::new(f, ClockTime::from_centiseconds(t).unwrap())).collect(),
            vec![],
        )
        .unwrap();
        let expected = brute_force_max(&samples, fps, theta);
        let got = match select_consistent_subset(&raw, fps, theta) {
            Ok(a) => a,
            Err(_) if samples.is_empty() => {
                // an empty series has nothing to select
                if expected != 0 {
                    size_mismatch += 1;
                }
                continue;
            }
            Err(_) => {
                size_mismatch += 1;
                continue;
            }
        };
        let kept: Vec<(u64, u32)> = got.retained.iter().map(|s| (s.frame_idx, s.time.centiseconds())).collect();
        if kept.len() != expected {
            size_mismatch += 1;
        }
        let valid = kept.windows(2).all(|w| w[0].0 < w[1].0)
            && (0..kept.len()).all(|i| (i + 1..kept.len()).all(|j| oracle_consistent(kept[i], kept[j], fps, theta)));
        if !valid {
            invalid += 1;
        }
        let mut all: Vec<(u64, u32)> = kept.clone();
        all.extend(got.rejected.iter().map(|s| (s.frame_idx, s.time.centiseconds())));
        all.sort();
        if all != samples {
            not_partition += 1;
        }
    }
    let elapsed = start.elapsed();
    report(
        "denoiser oracle equivalence",
        size_mismatch == 0 && invalid == 0 && not_partition == 0 && elapsed < Duration::from_secs(30),
        format!(
            "1000 series, {size_mismatch} cardinality mismatches, {invalid} invalid subsets, \
             {not_partition} bad partitions, {elapsed:?}"
        ),
    );
}

// ---------------------------------------------------------------------------

fn noisy_period(seed: u64) -> SyntheticScenario {
    let mut sc = SyntheticScenario::new(600.0, seed);
    sc.fps = Fps::whole(30).unwrap();
    sc.perfect_read_prob = DEFAULT_PERFECT_READ_PROB;
    sc.stoppages = vec![Stoppage { start_s: 140.0, duration_s: 25.0 }, Stoppage { start_s: 410.0, duration_s: 40.0 }];
    sc
}

#[test]
fn noise_recovery() {
    let start = Instant::now();
    let mut fractions = Vec::new();
    let mut violations = 0usize;
    let mut frame_counts = Vec::new();
    for seed in 0..20 {
        let sc = noisy_period(seed);
        let (_, g) = grounded_from(&sc, 1);
        let series = &g.series;
        frame_counts.push(series.frame_count());
        let mut within = 0usize;
        let mut non_null = 0usize;
        let mut last: Option<u32> = None;
        for (i, v) in series.grounded.iter().enumerate() {
            let Some(v) = v else { continue };
            non_null += 1;
            let truth = sc.clock_at(i as u64).centiseconds();
            if v.centiseconds().abs_diff(truth) <= 20 {
                within += 1;
            }
            if last.is_some_and(|p| v.centiseconds() > p) {
                violations += 1;
            }
            last = Some(v.centiseconds());
        }
        fractions.push(within as f64 / non_null.max(1) as f64);
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    let worst = fractions.iter().cloned().fold(f64::INFINITY, f64::min);
    let elapsed = start.elapsed();
    report(
        "noise recovery",
        mean >= 0.99 && violations == 0 && elapsed < Duration::from_secs(60),
        format!(
            "mean within ±20 cs {:.5} (worst seed {:.5}), {violations} monotonicity violations, \
             {} frames per run at 30 fps, 20 seeds, {elapsed:?}",
            mean, worst, frame_counts[0]
        ),
    );
}

// ---------------------------------------------------------------------------

fn pipeline_bytes(sc: &SyntheticScenario, workers: usize, events: &[PlayByPlayEvent]) -> Vec<u8> {
    let (raw, g) = grounded_from(sc, workers);
    let report = align_corpus(events, &g.series, 4.0, 4.0, DEFAULT_TOLERANCE_CS);
    let mut out = Vec::new();
    wire::write_raw_series(&mut out, &raw).unwrap();
    wire::write_timeline(&mut out, &g.series).unwrap();
    wire::write_aligned(&mut out, &report.aligned).unwrap();
    out
}

#[test]
fn worker_determinism() {
    let sc = noisy_period(77);
    let events = synthetic_events(&sc, 40, 77);
    let baseline = pipeline_bytes(&sc, 1, &events);
    let mut differing = Vec::new();
    for workers in [2, 4, 8] {
        if pipeline_bytes(&sc, workers, &events) != baseline {
            differing.push(workers);
        }
    }
    report(
        "worker determinism",
        differing.is_empty(),
        format!("workers 1/2/4/8, {} output bytes, differing worker counts {differing:?}", baseline.len()),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn parallel_scaling() {
    let frames = 100_000;
    let sc = bench_scenario(frames, 11);
    let one = time_extraction(&sc, 1, 3).unwrap();
    let four = time_extraction(&sc, 4, 3).unwrap();
    let speedup = one.as_secs_f64() / four.as_secs_f64();
    let cores = std::thread::available_parallelism().map_or(0, |n| n.get());
    report(
        "parallel scaling",
        speedup >= 3.0,
        format!(
            "measured {speedup:.2}x at 4 workers vs 1 on {frames} frames ({one:?} vs {four:?}), \
             {cores} hardware threads available"
        ),
    );
}

// ---------------------------------------------------------------------------

/// Smallest residual over every grounded frame, earliest frame on ties.
fn exhaustive_nearest(series: &TimestampSeries, clock: u32) -> Option<(u64, u32)> {
    let mut best: Option<(u64, u32)> = None;
    for (i, v) in series.grounded.iter().enumerate() {
        if let Some(v) = v {
            let r = v.centiseconds().abs_diff(clock);
            if best.is_none_or(|(_, b)| r < b) {
                best = Some((i as u64, r));
            }
        }
    }
    best
}

#[test]
fn alignment_oracle() {
    let start = Instant::now();
    let mut mismatches = 0usize;
    let mut events_total = 0usize;
    let mut coverage_shortfalls = 0usize;
    for corpus in 0..50u64 {
        let mut sc = SyntheticScenario::new(120.0, 1000 + corpus);
        sc.stoppages = vec![Stoppage { start_s: 30.0 + corpus as f64 % 40.0, duration_s: 8.0 }];
        sc.quarter = QuarterLabel::new(1 + (corpus % 5) as u8).unwrap();
        let (_, g) = grounded_from(&sc, 1);
        let series = &g.series;
        let events = synthetic_events(&sc, 20, corpus);
        events_total += events.len();
        let report = align_corpus(&events, series, 4.0, 4.0, DEFAULT_TOLERANCE_CS);

        let last = series.frame_count() - 1;
        let pre = (4.0 * sc.fps.as_f64()).round() as u64;
        let mut all_covered = true;
        for e in &events {
            let oracle = exhaustive_nearest(series, e.clock.centiseconds())
                .filter(|&(_, r)| r <= DEFAULT_TOLERANCE_CS && e.period == series.quarter);
            let got = report.aligned.iter().find(|a| a.event_id == e.event_id);
            let agree = match (oracle, got) {
                (Some((frame, r)), Some(a)) => {
                    a.anchor_frame == frame
                        && a.residual_cs == r
                        && a.clip_start_frame == frame.saturating_sub(pre)
                        && a.clip_end_frame == (frame + pre).min(last)
                }
                (None, None) => true,
                _ => false,
            };
            if !agree {
                mismatches += 1;
            }
            all_covered &= oracle.is_some();
        }
        if !all_covered || report.coverage != 1.0 {
            coverage_shortfalls += 1;
        }
    }
    let elapsed = start.elapsed();
    report(
        "alignment oracle",
        mismatches == 0 && coverage_shortfalls == 0 && elapsed < Duration::from_secs(30),
        format!(
            "50 corpora, {events_total} events, {mismatches} frame mismatches, \
             {coverage_shortfalls} corpora below full coverage, {elapsed:?}"
        ),
    );
}

// ---------------------------------------------------------------------------

fn random_detections(rng: &mut ChaCha8Rng) -> Vec<Detection> {
    let n = rng.random_range(0..7);
    (0..n)
        .map(|_| {
            let kind = RegionKind::ALL[rng.random_range(0..2)];
            // coarse probabilities so equal scores occur
            let p = f64::from(rng.random_range(0..=10u8)) / 10.0;
            let iou = f64::from(rng.random_range(0..=10u8)) / 10.0;
            let bbox = BBox::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..600.0), 50.0, 30.0).unwrap();
            Detection::new(kind, bbox, p, iou).unwrap()
        })
        .collect()
}

/// Index of the best-scoring detection of `kind` at or above `threshold`,
/// first occurrence on ties.
fn oracle_pick(dets: &[Detection], kind: RegionKind, threshold: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, d) in dets.iter().enumerate() {
        let s = d.object_prob * d.iou_est;
        if d.region == kind && s >= threshold && best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

#[test]
fn gating_semantics() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a7e);
    let thresholds: Vec<f64> = (0..=22).map(|i| f64::from(i) / 20.0).collect();
    let sets = 5000;
    let mut monotone_breaks = 0;
    let mut empty_contract_breaks = 0;
    let mut selection_breaks = 0;
    let mut boundary_breaks = 0;
    for _ in 0..sets {
        let dets = random_detections(&mut rng);
        let has_both = RegionKind::ALL.iter().all(|k| dets.iter().any(|d| d.region == *k));
        let mut accepted_prev = true;
        for &t in &thresholds {
            let g = gate_frame(&dets, t);
            if g.accepted() && !accepted_prev {
                monotone_breaks += 1;
            }
            accepted_prev = g.accepted();
            if !g.accepted() {
                if RegionKind::ALL.iter().any(|&k| g.bbox(k).is_some() || g.selected_index(k).is_some()) {
                    empty_contract_breaks += 1;
                }
            } else {
                for k in RegionKind::ALL {
                    let want = oracle_pick(&dets, k, t);
                    if g.selected_index(k) != want || g.bbox(k) != want.map(|i| dets[i].bbox) {
                        selection_breaks += 1;
                    }
                    if want.is_some_and(|i| detection_score(&dets[i]) < t) {
                        selection_breaks += 1;
                    }
                }
            }
            let should_accept = RegionKind::ALL.iter().all(|&k| oracle_pick(&dets, k, t).is_some());
            if g.accepted() != should_accept {
                selection_breaks += 1;
            }
        }
        if gate_frame(&dets, 0.0).accepted() != has_both {
            boundary_breaks += 1;
        }
        if gate_frame(&dets, 1.0 + f64::EPSILON).accepted() {
            boundary_breaks += 1;
        }
    }
    report(
        "gating semantics",
        monotone_breaks + empty_contract_breaks + selection_breaks + boundary_breaks == 0,
        format!(
            "{sets} detection sets x {} thresholds: {monotone_breaks} monotonicity, \
             {empty_contract_breaks} empty-result, {selection_breaks} selection, {boundary_breaks} boundary violations",
            thresholds.len()
        ),
    );
}
