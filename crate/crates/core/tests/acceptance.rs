//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Every tolerance and budget is pinned here.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use onsd_core::detection::{AnnotatedDetections, ClassicalDetector, FrameDetections};
use onsd_core::eval::{evaluate, frame_accuracy, grouped_kfold, width_mae, EvalConfig};
use onsd_core::geometry::{build_construction, extract_oriented_crop, OrientedCrop, CROP_COLS, CROP_ROWS};
use onsd_core::lca::{
    drive, kernel_gradient, lca_encode, lca_encode_traced, normalize, Activations, Dictionary, DictionaryConfig,
    DictionaryTrainer, FrameClassifier, LcaParams, Patch,
};
use onsd_core::manifest::{DatasetManifest, Label, VideoEntry};
use onsd_core::phantom::{build_dataset, generate_video, render_phantom_frame, PhantomSampler, PhantomSpec};
use onsd_core::pipeline::{
    predict_video_sparse, predict_video_width, render_overlay, save_rgb, train_sparse_model, Decision, RegionConfig,
    SparseCorpus, SparseModel, SparseTrainConfig, System, WidthSystemConfig,
};
use onsd_core::segmentation::{ClassicalSegmenter, CropMask, Segmenter};
use onsd_core::{BBox, Frame, ObjectClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration) -> Result<(), String> {
    let elapsed = start.elapsed();
    ensure(elapsed < budget, || format!("took {elapsed:.1?}, budget {budget:?}"))
}

fn bbox(x0: f64, y0: f64, x1: f64, y1: f64, class: ObjectClass) -> BBox {
    BBox::new(x0, y0, x1, y1, class, 1.0).unwrap()
}

// 1 ------------------------------------------------------------------------

fn geometry_suite() -> Outcome {
    let start = Instant::now();
    let ppm = 10.0;

    // Axis-aligned: globe center (150, 100), semi-axes (80, 64), nerve straight down.
    let globe = bbox(70.0, 36.0, 230.0, 164.0, ObjectClass::Globe);
    let nerve = bbox(130.0, 170.0, 170.0, 300.0, ObjectClass::Nerve);
    let c = build_construction(&globe, &nerve, ppm).map_err(|e| e.to_string())?;
    let expect_retinal = (150.0, 164.0);
    let expect_meas = (150.0, 194.0);
    for (got, want, what) in [
        (c.retinal_point, expect_retinal, "retinal"),
        (c.measurement_point, expect_meas, "measurement"),
    ] {
        ensure((got.0 - want.0).abs() < 1e-6 && (got.1 - want.1).abs() < 1e-6, || {
            format!("axis-aligned {what} point {got:?}, expected {want:?}")
        })?;
    }

    // 45 degrees: ray from (200, 200) along (1, 1)/sqrt 2 meets x²/a² + y²/b² = 1
    // at t = sqrt(2)·a·b / sqrt(a² + b²).
    let (a, b) = (90.0, 60.0);
    let globe = bbox(200.0 - a, 200.0 - b, 200.0 + a, 200.0 + b, ObjectClass::Globe);
    let nerve = bbox(290.0, 290.0, 310.0, 310.0, ObjectClass::Nerve);
    let c = build_construction(&globe, &nerve, ppm).map_err(|e| e.to_string())?;
    let t = 2f64.sqrt() * a * b / (a * a + b * b).sqrt();
    let r = 1.0 / 2f64.sqrt();
    let expect_retinal = (200.0 + t * r, 200.0 + t * r);
    let expect_meas = (expect_retinal.0 + 30.0 * r, expect_retinal.1 + 30.0 * r);
    ensure(
        (c.retinal_point.0 - expect_retinal.0).abs() < 1e-6 && (c.retinal_point.1 - expect_retinal.1).abs() < 1e-6,
        || format!("45° retinal point {:?}, expected {expect_retinal:?}", c.retinal_point),
    )?;
    ensure(
        (c.measurement_point.0 - expect_meas.0).abs() < 1e-6 && (c.measurement_point.1 - expect_meas.1).abs() < 1e-6,
        || {
            format!(
                "45° measurement point {:?}, expected {expect_meas:?}",
                c.measurement_point
            )
        },
    )?;
    ensure((c.axis_angle - 45.0).abs() < 1e-9, || {
        format!("45° axis angle {}", c.axis_angle)
    })?;

    // Depth along the axis is 3 mm at any calibration and angle.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let ppm = rng.random_range(2.0..40.0);
        let (gx, gy) = (rng.random_range(100.0..300.0), rng.random_range(100.0..300.0));
        let globe = bbox(gx - 50.0, gy - 40.0, gx + 50.0, gy + 40.0, ObjectClass::Globe);
        let (nx, ny) = (rng.random_range(0.0..400.0), rng.random_range(0.0..400.0));
        let nerve = bbox(nx - 5.0, ny - 5.0, nx + 5.0, ny + 5.0, ObjectClass::Nerve);
        let Ok(c) = build_construction(&globe, &nerve, ppm) else {
            continue;
        };
        let d = (c.measurement_point.0 - c.retinal_point.0).hypot(c.measurement_point.1 - c.retinal_point.1);
        ensure((d - 3.0 * ppm).abs() < 1e-9, || format!("depth {d} px at {ppm} px/mm"))?;
    }

    // Angle 0 with an integral center samples pixel centers exactly.
    let mut pixels = Vec::new();
    for i in 0..300 * 260 {
        pixels.push(f64::from((i * 7919 % 256) as u8) / 255.0);
    }
    let frame = Frame::new(300, 260, pixels, ppm).unwrap();
    let globe = bbox(70.0, 36.0, 230.0, 164.0, ObjectClass::Globe);
    let nerve = bbox(130.0, 170.0, 170.0, 250.0, ObjectClass::Nerve);
    let c = build_construction(&globe, &nerve, ppm).map_err(|e| e.to_string())?;
    let crop = extract_oriented_crop(&frame, &c);
    ensure(!crop.partial, || "angle-0 crop flagged partial".into())?;
    for row in 0..CROP_ROWS {
        for col in 0..CROP_COLS {
            let (x, y) = (150 - 64 + col, 194 - 8 + row);
            ensure(crop.get(row, col).to_bits() == frame.get(x, y).to_bits(), || {
                format!("crop ({row},{col}) differs from pixel ({x},{y})")
            })?;
        }
    }
    within_budget(start, Duration::from_secs(1))?;
    Ok(format!("{:.2?}", start.elapsed()))
}

// 2 and 3 -----------------------------------------------------------------

fn width_benchmark(dir: &Path) -> Outcome {
    let start = Instant::now();
    let videos = PhantomSampler::default().sample(200, 2024).map_err(|e| e.to_string())?;
    build_dataset(&videos, dir).map_err(|e| e.to_string())?;
    let dataset = onsd_core::Dataset::open(&dir.join("manifest.json")).map_err(|e| e.to_string())?;
    let report = evaluate(&dataset, System::Width, 10, &[0], &EvalConfig::default()).map_err(|e| e.to_string())?;
    let mae = report.width_mae_mm.ok_or("no width error reported")?;
    ensure(report.video_accuracy.mean >= 95.0, || {
        format!("video accuracy {:.2}%", report.video_accuracy.mean)
    })?;
    ensure(mae <= 0.5, || format!("width MAE {mae:.3} mm"))?;
    within_budget(start, Duration::from_secs(300))?;
    Ok(format!(
        "video accuracy {:.1}%, MAE {mae:.3} mm, {:.1?}",
        report.video_accuracy.mean,
        start.elapsed()
    ))
}

fn noise_free_benchmark() -> Outcome {
    let start = Instant::now();
    let sampler = PhantomSampler {
        base: PhantomSpec::default(),
        ..PhantomSampler::default()
    };
    let videos = sampler.sample(100, 77).map_err(|e| e.to_string())?;
    let detector = ClassicalDetector::default();
    let segmenter = ClassicalSegmenter::default();
    let mut worst = 0.0f64;
    for (i, v) in videos.iter().enumerate() {
        let (frames, truth) = generate_video(&v.spec, v.n_frames).map_err(|e| e.to_string())?;
        let p = predict_video_width("v", &frames, &detector, &segmenter, &WidthSystemConfig::default())
            .map_err(|e| e.to_string())?;
        let mean = p.verdict.mean_value.ok_or_else(|| format!("video {i} indeterminate"))?;
        let err = (mean - v.spec.sheath_width_mm).abs();
        worst = worst.max(err);
        ensure(err <= 0.2, || {
            format!("video {i}: {mean:.3} mm vs {:.3} mm", v.spec.sheath_width_mm)
        })?;
        ensure(p.verdict.decision.as_bit() == Some(truth.label.as_bit()), || {
            format!("video {i} misclassified")
        })?;
    }
    Ok(format!(
        "100/100 correct, worst error {worst:.3} mm, {:.1?}",
        start.elapsed()
    ))
}

// 4 ------------------------------------------------------------------------

fn phantom_crops(count: usize, seed: u64) -> Vec<Patch> {
    let videos = PhantomSampler::default().sample(count, seed).unwrap();
    videos
        .iter()
        .map(|v| {
            let (frame, truth) = render_phantom_frame(&v.spec, 0).unwrap();
            let c = build_construction(&truth.globe_bbox, &truth.nerve_bbox.unwrap(), frame.pixels_per_mm()).unwrap();
            crop_patch(&extract_oriented_crop(&frame, &c))
        })
        .collect()
}

fn crop_patch(crop: &OrientedCrop) -> Patch {
    Patch::new(CROP_ROWS, CROP_COLS, crop.pixels.clone()).unwrap()
}

/// `½‖x − Σ_k d_k ⋆ a_k‖²` with raw (unnormalized) kernels.
fn half_residual(x: &Patch, kernels: &[f64], k: usize, s: usize, a: &Activations) -> f64 {
    let mut recon = vec![0.0; x.rows * x.cols];
    for kk in 0..k {
        for i in 0..a.rows {
            for j in 0..a.cols {
                let coef = a.code[(kk * a.rows + i) * a.cols + j];
                for p in 0..s {
                    for q in 0..s {
                        recon[(i + p) * x.cols + j + q] += coef * kernels[(kk * s + p) * s + q];
                    }
                }
            }
        }
    }
    0.5 * x.data.iter().zip(&recon).map(|(v, r)| (v - r).powi(2)).sum::<f64>()
}

fn lca_suite() -> Outcome {
    let start = Instant::now();
    let params = LcaParams {
        lambda: 0.5,
        step: 0.1,
        n_steps: 200,
    };

    // Energy traces on phantom crops.
    let d = Dictionary::random(32, 8, 3).unwrap();
    let mut worst_rise = f64::NEG_INFINITY;
    for (i, crop) in phantom_crops(50, 404).iter().enumerate() {
        let trace = lca_encode_traced(crop, &d, &params).map_err(|e| e.to_string())?;
        for w in trace.energies.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
            ensure(w[1] <= w[0] + 1e-9, || {
                format!("crop {i}: energy rose {} -> {}", w[0], w[1])
            })?;
        }
    }

    // λ at the largest drive magnitude silences every unit; the drive is
    // recomputed here by direct correlation.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let img = Patch::new(10, 10, (0..100).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let d = Dictionary::random(3, 3, 9).unwrap();
    let x = normalize(&img);
    let mut max_b = 0.0f64;
    for k in 0..3 {
        let ker = d.kernel(k);
        for i in 0..8 {
            for j in 0..8 {
                let mut acc = 0.0;
                for p in 0..3 {
                    for q in 0..3 {
                        acc += x.get(i + p, j + q) * ker[p * 3 + q];
                    }
                }
                max_b = max_b.max(acc.abs());
            }
        }
    }
    let b = drive(&x, &d).map_err(|e| e.to_string())?;
    let max_drive = b.code.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure((max_b - max_drive).abs() < 1e-12, || {
        format!("drive max {max_drive} vs {max_b}")
    })?;
    for lambda in [max_b, max_b * 1.5] {
        let a = lca_encode(&img, &d, &LcaParams { lambda, ..params }).map_err(|e| e.to_string())?;
        ensure(a.code.iter().all(|&v| v == 0.0), || {
            format!("nonzero code at λ = {lambda}")
        })?;
    }

    // Delta kernel: the fixed point is the soft threshold of the normalized pixel.
    let delta = Dictionary::from_kernels(1, 1, vec![1.0]).unwrap();
    let img = Patch::new(4, 5, (0..20).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let x = normalize(&img);
    let lambda = 0.3;
    let a = lca_encode(
        &img,
        &delta,
        &LcaParams {
            lambda,
            step: 0.1,
            n_steps: 600,
        },
    )
    .map_err(|e| e.to_string())?;
    for (c, got) in x.data.iter().zip(&a.code) {
        let want = c.signum() * (c.abs() - lambda).max(0.0);
        ensure((got - want).abs() < 1e-6, || {
            format!("delta fixed point {got} vs {want} for c = {c}")
        })?;
    }

    // Kernel gradient against central differences: 3 kernels, 12x12 image.
    let (k, s) = (3, 4);
    let d = Dictionary::random(k, s, 21).unwrap();
    let img = Patch::new(12, 12, (0..144).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let mut a = Activations::zeros(k, 9, 9, 0.1);
    for v in a.code.iter_mut() {
        if rng.random_bool(0.3) {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    let grad = kernel_gradient(&img, &d, &a).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut worst_rel = 0.0f64;
    for idx in 0..k * s * s {
        let mut plus = d.kernels().to_vec();
        let mut minus = d.kernels().to_vec();
        plus[idx] += h;
        minus[idx] -= h;
        let fd = (half_residual(&img, &plus, k, s, &a) - half_residual(&img, &minus, k, s, &a)) / (2.0 * h);
        let rel = (grad[idx] - fd).abs() / fd.abs().max(1e-3);
        worst_rel = worst_rel.max(rel);
        ensure(rel <= 1e-4, || format!("gradient entry {idx}: {} vs {fd}", grad[idx]))?;
    }

    // Unit-norm kernels after every learning update.
    let mut trainer = DictionaryTrainer::new(DictionaryConfig {
        kernels: 8,
        kernel_side: 6,
        epochs: 1,
        learning_rate: 0.05,
        seed: 5,
        lca: LcaParams {
            n_steps: 40,
            ..LcaParams::default()
        },
    })
    .map_err(|e| e.to_string())?;
    for crop in phantom_crops(10, 505) {
        trainer.update(&crop).map_err(|e| e.to_string())?;
        let d = trainer.dictionary();
        for kk in 0..d.count() {
            let norm = d.kernel(kk).iter().map(|v| v * v).sum::<f64>().sqrt();
            ensure((norm - 1.0).abs() <= 1e-6, || format!("kernel {kk} norm {norm}"))?;
        }
    }
    within_budget(start, Duration::from_secs(60))?;
    Ok(format!(
        "worst energy step {worst_rise:.2e}, worst gradient rel. error {worst_rel:.1e}, {:.1?}",
        start.elapsed()
    ))
}

// 5 ------------------------------------------------------------------------

fn sparse_benchmark() -> Outcome {
    let start = Instant::now();
    let sampler = PhantomSampler {
        exclude_mm: Some((4.0, 6.0)),
        ..PhantomSampler::default()
    };
    let videos = sampler.sample(150, 31).map_err(|e| e.to_string())?;
    let (train, test) = videos.split_at(100);
    let train_patients: BTreeSet<&str> = train.iter().map(|v| v.patient_id.as_str()).collect();
    ensure(
        test.iter().all(|v| !train_patients.contains(v.patient_id.as_str())),
        || "patient shared between train and test".into(),
    )?;
    ensure(
        videos.iter().all(|v| (v.spec.sheath_width_mm - 5.0).abs() >= 1.0),
        || "width within 1 mm of threshold".into(),
    )?;

    let detector = ClassicalDetector::default();
    let config = SparseTrainConfig::default();
    let mut corpus = SparseCorpus::new();
    for v in train {
        let (frames, truth) = generate_video(&v.spec, v.n_frames).map_err(|e| e.to_string())?;
        corpus
            .add_video(&frames, truth.label, &detector, &config)
            .map_err(|e| e.to_string())?;
    }
    let (model, _) = train_sparse_model(&corpus, &config).map_err(|e| e.to_string())?;
    let mut correct = 0;
    for v in test {
        let (frames, truth) = generate_video(&v.spec, v.n_frames).map_err(|e| e.to_string())?;
        let p = predict_video_sparse("v", &frames, &detector, &model, config.stride).map_err(|e| e.to_string())?;
        if p.verdict.decision.as_bit() == Some(truth.label.as_bit()) {
            correct += 1;
        }
    }
    let accuracy = 100.0 * correct as f64 / test.len() as f64;
    ensure(accuracy >= 80.0, || format!("video accuracy {accuracy:.1}%"))?;
    within_budget(start, Duration::from_secs(600))?;
    Ok(format!(
        "video accuracy {accuracy:.1}% ({correct}/50), {:.1?}",
        start.elapsed()
    ))
}

// 6 ------------------------------------------------------------------------

fn random_manifest(rng: &mut ChaCha8Rng) -> DatasetManifest {
    let patients = rng.random_range(2..40);
    let mut videos = Vec::new();
    for p in 0..patients {
        for _ in 0..rng.random_range(1..5) {
            let i = videos.len();
            videos.push(VideoEntry {
                video_id: format!("v{i:03}"),
                patient_id: format!("p{p:02}"),
                frame_paths: vec![format!("v{i:03}/f.pgm")],
                pixels_per_mm: 10.0,
                label: if rng.random_bool(0.5) {
                    Label::Positive
                } else {
                    Label::Negative
                },
                ground_truth: None,
            });
        }
    }
    // Interleave patients so grouping cannot rely on order.
    for i in (1..videos.len()).rev() {
        let j = rng.random_range(0..=i);
        videos.swap(i, j);
    }
    DatasetManifest { videos }
}

fn kfold_and_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..100 {
        let m = random_manifest(&mut rng);
        let patients = m.patients().len();
        let k = rng.random_range(2..=patients.min(10));
        let folds = grouped_kfold(&m, k, trial).map_err(|e| e.to_string())?;
        let patient_of = |id: &String| m.video(id).unwrap().patient_id.clone();
        let mut seen = BTreeSet::new();
        for f in &folds {
            let test: BTreeSet<String> = f.test_video_ids.iter().map(patient_of).collect();
            let train: BTreeSet<String> = f.train_video_ids.iter().map(patient_of).collect();
            ensure(test.is_disjoint(&train), || {
                format!("trial {trial} fold {}: patient overlap", f.fold_index)
            })?;
            ensure(
                f.test_video_ids.len() + f.train_video_ids.len() == m.videos.len(),
                || format!("trial {trial} fold {}: videos lost", f.fold_index),
            )?;
            for id in &f.test_video_ids {
                ensure(seen.insert(id.clone()), || format!("trial {trial}: {id} tested twice"))?;
            }
        }
        ensure(seen.len() == m.videos.len(), || {
            format!("trial {trial}: test sets do not cover")
        })?;
    }
    let fa = frame_accuracy(&[1, 1, 0], 1).map_err(|e| e.to_string())?;
    ensure(fa == 200.0 / 3.0, || format!("frame accuracy {fa}"))?;
    let fa = frame_accuracy(&[1, 1], 1).map_err(|e| e.to_string())?;
    ensure(fa == 100.0, || format!("all-correct frame accuracy {fa}"))?;
    ensure(frame_accuracy(&[0], 1).map_err(|e| e.to_string())? == 0.0, || {
        "frame accuracy [0] vs 1".into()
    })?;
    ensure(width_mae(&[5.0], &[5.0]).map_err(|e| e.to_string())? == 0.0, || {
        "mae [5] vs [5]".into()
    })?;
    ensure(
        width_mae(&[4.0, 6.0], &[5.0, 5.0]).map_err(|e| e.to_string())? == 1.0,
        || "mae [4,6] vs [5,5]".into(),
    )?;
    Ok("100 manifests partitioned without patient overlap".into())
}

// 7 ------------------------------------------------------------------------

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn one_run(dir: &Path) -> Result<(), String> {
    let sampler = PhantomSampler {
        n_frames: 4,
        ..PhantomSampler::default()
    };
    let videos = sampler.sample(6, 99).map_err(|e| e.to_string())?;
    let data = dir.join("data");
    build_dataset(&videos, &data).map_err(|e| e.to_string())?;
    let dataset = onsd_core::Dataset::open(&data.join("manifest.json")).map_err(|e| e.to_string())?;

    let config = SparseTrainConfig {
        dictionary: DictionaryConfig {
            kernels: 4,
            kernel_side: 4,
            epochs: 2,
            lca: LcaParams {
                n_steps: 30,
                ..LcaParams::default()
            },
            ..DictionaryConfig::default()
        },
        stride: 2,
        ..SparseTrainConfig::default()
    };
    let detector = ClassicalDetector::default();
    let mut corpus = SparseCorpus::new();
    for entry in &dataset.manifest.videos {
        let frames = dataset.load_video(entry).map_err(|e| e.to_string())?;
        corpus
            .add_video(&frames, entry.label, &detector, &config)
            .map_err(|e| e.to_string())?;
    }
    let (model, _) = train_sparse_model(&corpus, &config).map_err(|e| e.to_string())?;
    let out = dir.join("out");
    fs::create_dir_all(&out).unwrap();
    model
        .save(&out.join("dictionary.bin"), &out.join("classifier.bin"))
        .map_err(|e| e.to_string())?;

    let entry = &dataset.manifest.videos[0];
    let frames = dataset.load_video(entry).map_err(|e| e.to_string())?;
    let width = predict_video_width(
        &entry.video_id,
        &frames,
        &detector,
        &ClassicalSegmenter::default(),
        &WidthSystemConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    fs::write(out.join("width.json"), width.verdict.to_json()).unwrap();
    let sparse = predict_video_sparse(&entry.video_id, &frames, &detector, &model, 2).map_err(|e| e.to_string())?;
    fs::write(out.join("sparse.json"), sparse.verdict.to_json()).unwrap();
    let m = &width.measurements[0];
    let overlay = render_overlay(&frames[m.frame_index], m);
    save_rgb(&overlay, &out.join("overlay.png")).map_err(|e| e.to_string())?;
    save_rgb(&overlay, &out.join("overlay.ppm")).map_err(|e| e.to_string())?;
    Ok(())
}

fn determinism(root: &Path) -> Outcome {
    let (a, b) = (root.join("a"), root.join("b"));
    one_run(&a)?;
    one_run(&b)?;
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    ensure(ta.len() == tb.len(), || "different file sets".into())?;
    for ((na, ba), (nb, bb)) in ta.iter().zip(&tb) {
        ensure(na == nb, || format!("{na} vs {nb}"))?;
        ensure(ba == bb, || format!("{na} differs between runs"))?;
    }
    Ok(format!("{} files byte-identical", ta.len()))
}

// 8 ------------------------------------------------------------------------

/// Marks a 50-column run (5 mm at 10 px/mm) in every row.
struct FiveMillimeters;

impl Segmenter for FiveMillimeters {
    fn segment(&self, _frame_index: usize, _crop: &OrientedCrop) -> CropMask {
        let mut m = CropMask::default();
        for r in 0..CROP_ROWS {
            for c in 39..89 {
                m.set(r, c, true);
            }
        }
        m
    }
}

fn tie_rules() -> Outcome {
    let spec = PhantomSpec::default();
    let (frames, truth) = generate_video(&spec, 6).map_err(|e| e.to_string())?;
    let boxes: Vec<FrameDetections> = (0..frames.len())
        .map(|i| {
            let mut d = FrameDetections::empty(i);
            d.offer(truth.globe_bbox);
            d.offer(truth.nerve_bbox.unwrap());
            d
        })
        .collect();
    let detector = AnnotatedDetections::new(boxes);
    let width = predict_video_width(
        "tie",
        &frames,
        &detector,
        &FiveMillimeters,
        &WidthSystemConfig {
            stride: 1,
            exclude_partial: false,
        },
    )
    .map_err(|e| e.to_string())?
    .verdict;
    ensure(width.mean_value == Some(5.0), || {
        format!("mean width {:?}", width.mean_value)
    })?;
    ensure(width.decision == Decision::Negative, || {
        format!("mean 5.0 mm gave {:?}", width.decision)
    })?;

    let model = SparseModel {
        dictionary: Dictionary::random(4, 4, 0).unwrap(),
        classifier: FrameClassifier::zeros(4),
        lca: LcaParams {
            n_steps: 10,
            ..LcaParams::default()
        },
        region: RegionConfig::default(),
    };
    let sparse = predict_video_sparse("tie", &frames, &detector, &model, 1)
        .map_err(|e| e.to_string())?
        .verdict;
    ensure(sparse.mean_value == Some(0.5), || {
        format!("mean probability {:?}", sparse.mean_value)
    })?;
    ensure(sparse.decision == Decision::Positive, || {
        format!("mean 0.5 gave {:?}", sparse.decision)
    })?;
    Ok("5.0 mm -> negative, 0.5 -> positive".into())
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<Criterion> = vec![
        ("1 geometry analytic suite", Box::new(geometry_suite)),
        (
            "2 width-system phantom benchmark",
            Box::new(|| width_benchmark(&tmp.path().join("width"))),
        ),
        ("3 width-system noise-free benchmark", Box::new(noise_free_benchmark)),
        ("4 LCA numerical suite", Box::new(lca_suite)),
        ("5 sparse-system phantom benchmark", Box::new(sparse_benchmark)),
        ("6 grouped k-fold and metrics", Box::new(kfold_and_metrics)),
        (
            "7 determinism across runs",
            Box::new(|| determinism(&tmp.path().join("det"))),
        ),
        ("8 threshold tie rules", Box::new(tie_rules)),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
