use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use onsd_core::detection::format_detections;
use onsd_core::eval::{evaluate, EvalConfig};
use onsd_core::geometry::{CROP_COLS, CROP_ROWS};
use onsd_core::lca::{DictionaryConfig, LcaParams};
use onsd_core::phantom::{build_dataset, PhantomSampler, PhantomSpec, PhantomVideo};
use onsd_core::pipeline::{
    measure_frame, predict_video_sparse, predict_video_width, render_overlay, render_overlay_with_boxes, save_rgb,
    train_sparse_model, SparseCorpus, SparseModel, SparseTrainConfig, System, WidthSystemConfig,
};
use onsd_core::segmentation::load_mask;
use onsd_core::{
    AnnotatedDetections, ClassicalDetector, ClassicalSegmenter, CropMask, Dataset, Detector, Frame, OrientedCrop,
    Segmenter, VideoEntry,
};

use crate::{DetectArgs, EvalArgs, MeasureArgs, PhantomArgs, PredictArgs, RenderArgs, SystemArg, TrainArgs, VideoArgs};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn phantom(args: PhantomArgs) -> Result<()> {
    if args.videos_per_patient == 0 {
        bail!("--videos-per-patient must be at least 1");
    }
    let videos = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let spec = PhantomSpec::from_json(&text).with_context(|| format!("in {}", path.display()))?;
            (0..args.count)
                .map(|i| PhantomVideo {
                    spec: PhantomSpec {
                        seed: spec.seed.wrapping_add(i as u64),
                        ..spec.clone()
                    },
                    patient_id: format!("patient_{:04}", i / args.videos_per_patient),
                    n_frames: args.frames,
                })
                .collect()
        }
        None => {
            let mut sampler = PhantomSampler {
                width_range_mm: (args.width_min, args.width_max),
                exclude_mm: (!args.no_exclude).then_some((args.exclude_min, args.exclude_max)),
                n_frames: args.frames,
                videos_per_patient: args.videos_per_patient,
                ..PhantomSampler::default()
            };
            if let Some(s) = args.speckle {
                sampler.base.speckle_sigma = s;
            }
            if let Some(j) = args.jitter {
                sampler.base.jitter_px = j;
            }
            sampler.sample(args.count, args.seed)?
        }
    };
    build_dataset(&videos, &args.out)?;
    println!("{}", args.out.join("manifest.json").display());
    Ok(())
}

struct VideoInput {
    entry: VideoEntry,
    frames: Vec<Frame>,
    detector: Box<dyn Detector>,
}

fn open_video(args: &VideoArgs) -> Result<VideoInput> {
    let dataset = Dataset::open(&args.manifest)?;
    let Some(entry) = dataset.manifest.video(&args.video).cloned() else {
        bail!("video {:?} is not in {}", args.video, args.manifest.display());
    };
    let frames = dataset.load_video(&entry)?;
    let detector: Box<dyn Detector> = match &args.detections {
        Some(path) => {
            let size = (frames[0].width(), frames[0].height());
            Box::new(AnnotatedDetections::from_file(path, size)?)
        }
        None => Box::new(ClassicalDetector::default()),
    };
    Ok(VideoInput {
        entry,
        frames,
        detector,
    })
}

pub fn detect(args: DetectArgs) -> Result<()> {
    let input = open_video(&args.video)?;
    let detections: Vec<_> = input
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| input.detector.detect(i, f))
        .collect();
    let size = (input.frames[0].width(), input.frames[0].height());
    let text = format_detections(&detections, size);
    let fit = detections.iter().filter(|d| d.is_fit()).count();
    match &args.out {
        Some(path) => {
            write_text(path, &text)?;
            println!("{fit} of {} frames fit", detections.len());
        }
        None => print!("{text}"),
    }
    Ok(())
}

/// Segmenter that returns one fixed mask regardless of the crop.
struct FixedMask(CropMask);

impl Segmenter for FixedMask {
    fn segment(&self, _frame_index: usize, _crop: &OrientedCrop) -> CropMask {
        self.0.clone()
    }
}

fn crop_to_gray(crop: &OrientedCrop) -> Frame {
    let pixels = crop.pixels.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Frame::new(CROP_COLS, CROP_ROWS, pixels, crop.pixels_per_mm).expect("crop values are clamped")
}

pub fn measure(args: MeasureArgs) -> Result<()> {
    let input = open_video(&args.video)?;
    let Some(frame) = input.frames.get(args.frame) else {
        bail!("frame {} out of range ({} frames)", args.frame, input.frames.len());
    };
    let segmenter: Box<dyn Segmenter> = match &args.mask {
        Some(path) => Box::new(FixedMask(load_mask(path)?)),
        None => Box::new(ClassicalSegmenter::default()),
    };
    let det = input.detector.detect(args.frame, frame);
    let m = measure_frame(frame, &det, segmenter.as_ref());
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        if let Some(crop) = &m.crop {
            crop_to_gray(crop).save_pgm(&dir.join("crop.pgm"))?;
        }
        if let Some(mask) = &m.mask {
            mask.save(&dir.join("mask.pgm"))?;
        }
        save_rgb(&render_overlay(frame, &m), &dir.join("overlay.png"))?;
    }
    println!("{}", serde_json::to_string_pretty(&m.record())?);
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let dataset = Dataset::open(&args.manifest)?;
    let mut config = SparseTrainConfig {
        dictionary: DictionaryConfig {
            kernels: args.kernels,
            kernel_side: args.kernel_side,
            lca: LcaParams {
                lambda: args.lambda,
                step: args.step,
                n_steps: args.n_steps,
            },
            epochs: args.epochs,
            learning_rate: args.learning_rate,
            seed: args.seed,
        },
        stride: args.stride,
        full_frames: args.full_frames,
        ..SparseTrainConfig::default()
    };
    config.classifier.seed = args.seed;
    config.validate()?;
    if args.kernels == 0 || args.kernel_side == 0 {
        bail!("--kernels and --kernel-side must be at least 1");
    }

    let detector = ClassicalDetector::default();
    let mut corpus = SparseCorpus::new();
    for entry in &dataset.manifest.videos {
        let frames = dataset.load_video(entry)?;
        corpus.add_video(&frames, entry.label, &detector, &config)?;
    }
    let (model, report) = train_sparse_model(&corpus, &config)?;
    create_dir(&args.out)?;
    model.save(&args.out.join("dictionary.bin"), &args.out.join("classifier.bin"))?;

    let errors = &report.reconstruction_error;
    println!("regions: {}", report.regions);
    println!(
        "reconstruction error: epoch 0 {:.6}, final {:.6}",
        errors[0],
        errors[errors.len() - 1]
    );
    println!("training accuracy: {:.2}%", report.training_accuracy);
    Ok(())
}

pub fn predict(args: PredictArgs) -> Result<()> {
    // Resolve artifacts before touching the video so missing files fail fast.
    let model = match args.system {
        SystemArg::Width => None,
        SystemArg::Sparse => {
            let (Some(d), Some(c)) = (&args.dictionary, &args.classifier) else {
                bail!("the sparse system needs --dictionary and --classifier");
            };
            Some(SparseModel::load(d, c)?)
        }
    };
    let input = open_video(&args.video)?;
    let prediction = match &model {
        None => {
            let config = WidthSystemConfig {
                stride: args.stride,
                exclude_partial: args.exclude_partial,
            };
            predict_video_width(
                &input.entry.video_id,
                &input.frames,
                input.detector.as_ref(),
                &ClassicalSegmenter::default(),
                &config,
            )?
        }
        Some(model) => predict_video_sparse(
            &input.entry.video_id,
            &input.frames,
            input.detector.as_ref(),
            model,
            args.stride,
        )?,
    };
    let verdict = &prediction.verdict;
    if let Some(path) = &args.out {
        write_text(path, &verdict.to_json())?;
    }
    if let Some(dir) = &args.render {
        create_dir(dir)?;
        for m in &prediction.measurements {
            let frame = &input.frames[m.frame_index];
            let image = match verdict.system {
                System::Width => render_overlay(frame, m),
                System::Sparse => render_overlay_with_boxes(frame, m),
            };
            save_rgb(&image, &dir.join(format!("frame_{:04}.png", m.frame_index)))?;
        }
    }
    let mean = verdict
        .mean_value
        .map_or_else(|| "none".to_string(), |v| format!("{v:.4}"));
    println!(
        "{}: {} (mean {mean}, frames used {})",
        verdict.video_id,
        serde_json::to_value(verdict.decision)?.as_str().unwrap_or_default(),
        verdict.frames_used
    );
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let dataset = Dataset::open(&args.manifest)?;
    let mut config = EvalConfig::default();
    config.width.stride = args.stride;
    config.sparse.stride = args.stride;
    config.sparse.dictionary.epochs = args.epochs;
    let system = match args.system {
        SystemArg::Width => System::Width,
        SystemArg::Sparse => System::Sparse,
    };
    let report = evaluate(&dataset, system, args.k, &args.seeds, &config)?;
    create_dir(&args.out)?;
    write_text(&args.out.join("report.json"), &report.to_json())?;
    write_text(&args.out.join("report.csv"), &report.to_csv())?;
    println!(
        "video accuracy {:.2} ± {:.2}%, frame accuracy {:.2} ± {:.2}% over {} run(s)",
        report.video_accuracy.mean,
        report.video_accuracy.sd,
        report.frame_accuracy.mean,
        report.frame_accuracy.sd,
        report.runs.len()
    );
    if let Some(mae) = report.width_mae_mm {
        println!("width MAE {mae:.3} mm");
    }
    Ok(())
}

pub fn render(args: RenderArgs) -> Result<()> {
    let input = open_video(&args.video)?;
    let Some(frame) = input.frames.get(args.frame) else {
        bail!("frame {} out of range ({} frames)", args.frame, input.frames.len());
    };
    let det = input.detector.detect(args.frame, frame);
    let m = measure_frame(frame, &det, &ClassicalSegmenter::default());
    let image = if args.boxes {
        render_overlay_with_boxes(frame, &m)
    } else {
        render_overlay(frame, &m)
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_rgb(&image, &args.out)?;
    println!("{}", args.out.display());
    Ok(())
}
