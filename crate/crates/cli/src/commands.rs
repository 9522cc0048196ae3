use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use orbstream::matcher::{match_descriptors, write_matches_csv, MatchConfig};
use orbstream::oracle::{compare, ref_pipeline, write_degradation_csv, write_histogram_csv, Agreement, DegradationRow, RefConfig, RefKeypoint};
use orbstream::pipeline::{read_features, write_features, write_stats_csv};
use orbstream::pose::{ate as ate_stats, motion_ba, project, BaConfig, Observation, TrajectoryEntry};
use orbstream::synth::{camera_path, encode_depth, textured_scene, PlaneScene, DEPTH_SCALE};
use orbstream::{load_pgm, BriefPattern, Extractor, FrameOutput, GrayImage, Intrinsics, PipelineConfig, PoseSE3, Trajectory};

use crate::io::{depth_pgm_bytes, list_pgms, parse_associations, parse_depth_pgm, write_atomic, write_bytes, Association};
use crate::{AteArgs, ExtractArgs, ExtractorFlags, IntrinsicsFlags, MatchArgs, PatternArgs, PoseArgs, SweepArgs, SweepParam, SynthArgs, SynthKind, UsageError};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(usage(format!("input file not found: {}", path.display())));
    }
    Ok(())
}

fn require_dir(path: &Path) -> Result<()> {
    if !path.is_dir() {
        return Err(usage(format!("directory not found: {}", path.display())));
    }
    Ok(())
}

fn read_image(path: &Path) -> Result<GrayImage> {
    require_file(path)?;
    load_pgm(path).with_context(|| format!("reading {}", path.display()))
}

fn pipeline_config(flags: &ExtractorFlags) -> Result<PipelineConfig> {
    let pattern = match &flags.pattern {
        Some(p) => {
            require_file(p)?;
            BriefPattern::load(p).with_context(|| format!("reading pattern {}", p.display()))?
        }
        None => BriefPattern::default_pattern().clone(),
    };
    Ok(PipelineConfig {
        threshold: flags.threshold,
        sectors: flags.sectors,
        pixel_bits: flags.pixel_bits,
        brief_units: flags.brief_units.0,
        n_max: flags.nmax,
        pattern: Arc::new(pattern),
    })
}

fn extractor(cfg: PipelineConfig) -> Result<Extractor> {
    Extractor::new(cfg).map_err(|e| usage(e.to_string()))
}

fn ref_config(cfg: &PipelineConfig) -> RefConfig {
    RefConfig {
        threshold: cfg.threshold,
        n_max: cfg.n_max,
        ..RefConfig::default()
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "frame".to_string(), |s| s.to_string_lossy().into_owned())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn extract(args: &ExtractArgs) -> Result<()> {
    for p in &args.inputs {
        require_file(p)?;
    }
    let cfg = pipeline_config(&args.flags)?;
    let comment = cfg.describe();
    let ex = extractor(cfg.clone())?;
    ensure_dir(&args.out_dir)?;
    args.inputs.par_iter().try_for_each(|path| -> Result<()> {
        let img = read_image(path)?;
        let out = ex.run_frame(&img).with_context(|| format!("extracting {}", path.display()))?;
        let name = stem(path);
        write_atomic(&args.out_dir.join(format!("{name}.orbx")), |w| Ok(write_features(w, &out.keypoints)?))?;
        write_atomic(&args.out_dir.join(format!("{name}.stats.csv")), |w| {
            Ok(write_stats_csv(w, &out.stats, Some(&comment))?)
        })?;
        if args.float_reference {
            let reference = ref_pipeline(&img, &ref_config(&cfg), &cfg.pattern)?;
            let a = compare(&out, &reference, cfg.sectors);
            let row = DegradationRow {
                frame: name.clone(),
                sectors: cfg.sectors,
                pixel_bits: cfg.pixel_bits,
                agreement: a,
            };
            write_atomic(&args.out_dir.join(format!("{name}.agreement.csv")), |w| {
                Ok(write_degradation_csv(w, &[row], Some(&comment))?)
            })?;
            write_atomic(&args.out_dir.join(format!("{name}.hamming.csv")), |w| {
                Ok(write_histogram_csv(w, &a.hamming_histogram, Some(&comment))?)
            })?;
        }
        eprintln!(
            "{}: {} keypoints, {} dropped",
            path.display(),
            out.keypoints.len(),
            out.stats.totals().dropped
        );
        Ok(())
    })
}

/// Frames of a sequence directory: the rgb column of associations.txt when present,
/// otherwise every PGM in the directory.
fn sequence_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    require_dir(dir)?;
    let assoc = dir.join("associations.txt");
    let frames = if assoc.is_file() {
        let text = fs::read_to_string(&assoc)?;
        parse_associations(&text, dir)?.into_iter().map(|a| a.rgb).collect()
    } else {
        list_pgms(dir)?
    };
    if frames.is_empty() {
        return Err(usage(format!("no frames found in {}", dir.display())));
    }
    Ok(frames)
}

fn mean_agreement(rows: &[&Agreement]) -> Agreement {
    let n = rows.len().max(1) as f64;
    let mut m = Agreement::default();
    for a in rows {
        m.fixed += a.fixed;
        m.reference += a.reference;
        m.common += a.common;
        m.symdiff_rate += a.symdiff_rate / n;
        m.bit_agreement += a.bit_agreement / n;
        m.mean_hamming += a.mean_hamming / n;
        m.mean_angle_error += a.mean_angle_error / n;
        m.max_angle_error = m.max_angle_error.max(a.max_angle_error);
        m.match_inlier_rate += a.match_inlier_rate / n;
        for (h, x) in m.hamming_histogram.iter_mut().zip(a.hamming_histogram) {
            *h += x;
        }
    }
    m
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let frames = sequence_frames(&args.sequence)?;
    let base = pipeline_config(&args.flags)?;
    let values: Vec<u16> = match (&args.values, args.param) {
        (Some(v), _) => v.clone(),
        (None, SweepParam::Sectors) => vec![16, 32, 64, 128],
        (None, SweepParam::Bits) => vec![8, 7, 6, 5, 4],
    };
    let configs: Vec<PipelineConfig> = values
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            match args.param {
                SweepParam::Sectors => c.sectors = v,
                SweepParam::Bits => c.pixel_bits = u8::try_from(v).map_err(|_| usage(format!("pixel bits {v} out of range")))?,
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let extractors: Vec<Extractor> = configs.iter().cloned().map(extractor).collect::<Result<_>>()?;

    // the reference does not depend on the swept parameter
    let per_frame: Vec<Vec<DegradationRow>> = frames
        .par_iter()
        .map(|path| -> Result<Vec<DegradationRow>> {
            let img = read_image(path)?;
            let reference: Vec<RefKeypoint> = ref_pipeline(&img, &ref_config(&base), &base.pattern)?;
            extractors
                .iter()
                .map(|ex| {
                    let c = ex.config();
                    let out: FrameOutput = ex.run_frame_batch(&img)?;
                    Ok(DegradationRow {
                        frame: stem(path),
                        sectors: c.sectors,
                        pixel_bits: c.pixel_bits,
                        agreement: compare(&out, &reference, c.sectors),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<DegradationRow> = per_frame.iter().flatten().cloned().collect();
    for c in &configs {
        let of_config: Vec<&Agreement> = rows
            .iter()
            .filter(|r| r.sectors == c.sectors && r.pixel_bits == c.pixel_bits)
            .map(|r| &r.agreement)
            .collect();
        let mean = mean_agreement(&of_config);
        rows.push(DegradationRow {
            frame: "mean".into(),
            sectors: c.sectors,
            pixel_bits: c.pixel_bits,
            agreement: mean,
        });
    }
    let comment = format!(
        "sweep {:?} over {} frames; {}",
        args.param,
        frames.len(),
        base.describe()
    );
    write_atomic(&args.out, |w| Ok(write_degradation_csv(w, &rows, Some(&comment))?))?;
    for r in rows.iter().filter(|r| r.frame == "mean") {
        eprintln!(
            "sectors={} bits={} bit_agreement={:.4} symdiff={:.4}",
            r.sectors, r.pixel_bits, r.agreement.bit_agreement, r.agreement.symdiff_rate
        );
    }
    Ok(())
}

fn read_dump(path: &Path) -> Result<Vec<orbstream::Keypoint>> {
    require_file(path)?;
    let bytes = fs::read(path)?;
    read_features(&bytes).with_context(|| format!("reading {}", path.display()))
}

pub fn match_dumps(args: &MatchArgs) -> Result<()> {
    let a = read_dump(&args.a)?;
    let b = read_dump(&args.b)?;
    let da: Vec<_> = a.iter().filter_map(|k| k.descriptor).collect();
    let db: Vec<_> = b.iter().filter_map(|k| k.descriptor).collect();
    let cfg = MatchConfig {
        max_distance: args.max_distance,
        mutual: !args.no_mutual,
    };
    let matches = match_descriptors(&da, &db, cfg);
    let comment = format!("max_distance={} mutual={}", cfg.max_distance, cfg.mutual);
    write_atomic(&args.out, |w| Ok(write_matches_csv(w, &matches, Some(&comment))?))?;
    eprintln!("{} matches between {} and {} descriptors", matches.len(), da.len(), db.len());
    Ok(())
}

fn intrinsics(flags: &IntrinsicsFlags, width: usize, height: usize) -> Result<Intrinsics> {
    let cx = flags.cx.unwrap_or((width as f64 - 1.0) / 2.0);
    let cy = flags.cy.unwrap_or((height as f64 - 1.0) / 2.0);
    Intrinsics::new(flags.fx, flags.fy, cx, cy).map_err(|e| usage(e.to_string()))
}

/// Sub-pixel level-0 position of a keypoint detected on pyramid level `level`.
fn level0_pixel(k: &orbstream::Keypoint) -> Vector2<f64> {
    let s = 1.2f64.powi(k.level as i32);
    Vector2::new(k.x as f64 * s, k.y as f64 * s)
}

struct FrameReport {
    timestamp: f64,
    keypoints: usize,
    matches: usize,
    inliers: usize,
    rmse: f64,
    iterations: usize,
    converged: bool,
}

pub fn pose(args: &PoseArgs) -> Result<()> {
    require_dir(&args.sequence)?;
    let assoc_path = args.sequence.join("associations.txt");
    require_file(&assoc_path)?;
    let assoc: Vec<Association> = parse_associations(&fs::read_to_string(&assoc_path)?, &args.sequence)?;
    if assoc.len() < 2 {
        return Err(usage("pose tracking needs at least two frames"));
    }
    for a in &assoc {
        require_file(&a.rgb)?;
        require_file(&a.depth)?;
    }
    let cfg = pipeline_config(&args.flags)?;
    let ex = extractor(cfg.clone())?;
    let outputs: Vec<FrameOutput> = assoc
        .par_iter()
        .map(|a| {
            let img = read_image(&a.rgb)?;
            Ok(ex.run_frame(&img)?)
        })
        .collect::<Result<_>>()?;

    let first = read_image(&assoc[0].rgb)?;
    let k = intrinsics(&args.intrinsics, first.width(), first.height())?;
    let (dw, dh, depth) = parse_depth_pgm(&fs::read(&assoc[0].depth)?)
        .with_context(|| format!("reading {}", assoc[0].depth.display()))?;
    if (dw, dh) != (first.width(), first.height()) {
        anyhow::bail!("depth image is {dw}x{dh}, color image is {}x{}", first.width(), first.height());
    }

    // map in the first camera's frame
    let mut map_points = Vec::new();
    let mut map_desc = Vec::new();
    for kp in &outputs[0].keypoints {
        let Some(d) = kp.descriptor else { continue };
        let px = level0_pixel(kp);
        let (ix, iy) = (px.x.round() as usize, px.y.round() as usize);
        if ix >= dw || iy >= dh {
            continue;
        }
        let z = depth[iy * dw + ix] as f64 / args.depth_scale;
        if z <= 0.0 {
            continue;
        }
        map_points.push(k.unproject(&px, z));
        map_desc.push(d);
    }
    if map_points.len() < 6 {
        anyhow::bail!("only {} map points with valid depth in the first frame", map_points.len());
    }

    let match_cfg = MatchConfig::default();
    let ba_cfg = BaConfig {
        max_iterations: 20,
        huber_delta: Some(args.huber),
    };
    let mut poses = vec![PoseSE3::identity()];
    let mut reports = vec![FrameReport {
        timestamp: assoc[0].ts_rgb,
        keypoints: outputs[0].keypoints.len(),
        matches: map_points.len(),
        inliers: map_points.len(),
        rmse: 0.0,
        iterations: 0,
        converged: true,
    }];
    for (a, out) in assoc.iter().zip(&outputs).skip(1) {
        let kps: Vec<&orbstream::Keypoint> = out.keypoints.iter().filter(|k| k.descriptor.is_some()).collect();
        let desc: Vec<_> = kps.iter().filter_map(|k| k.descriptor).collect();
        let matches = match_descriptors(&map_desc, &desc, match_cfg);
        let obs: Vec<Observation> = matches
            .iter()
            .map(|m| Observation {
                point: map_points[m.index_a],
                pixel: level0_pixel(kps[m.index_b]),
            })
            .collect();
        let prev = *poses.last().expect("first pose");
        let mut report = FrameReport {
            timestamp: a.ts_rgb,
            keypoints: out.keypoints.len(),
            matches: obs.len(),
            inliers: 0,
            rmse: f64::NAN,
            iterations: 0,
            converged: false,
        };
        let pose = if obs.len() >= 6 {
            let coarse = motion_ba(&obs, &k, &prev, ba_cfg)?;
            let inliers: Vec<Observation> = obs
                .iter()
                .copied()
                .filter(|o| project(&k, &coarse.pose, &o.point).is_ok_and(|p| (p - o.pixel).norm() <= args.outlier_px))
                .collect();
            let fine = if inliers.len() >= 6 {
                motion_ba(&inliers, &k, &coarse.pose, BaConfig { huber_delta: None, ..ba_cfg })?
            } else {
                coarse
            };
            report.inliers = inliers.len();
            report.rmse = fine.rmse;
            report.iterations = fine.iterations;
            report.converged = fine.converged;
            fine.pose
        } else {
            eprintln!("frame {:.6}: only {} matches, keeping the previous pose", a.ts_rgb, obs.len());
            prev
        };
        poses.push(pose);
        reports.push(report);
    }

    // camera-from-world in the output frame
    let anchor = match &args.anchor {
        Some(path) => {
            require_file(path)?;
            let gt = Trajectory::load(path).with_context(|| format!("reading {}", path.display()))?;
            let j = gt
                .nearest(assoc[0].ts_rgb, orbstream::pose::DEFAULT_MAX_DT)
                .ok_or_else(|| anyhow::anyhow!("anchor trajectory has no pose near {:.6}", assoc[0].ts_rgb))?;
            gt.entries()[j].world_from_camera()
        }
        None => PoseSE3::identity(),
    };
    let world_to_first = anchor.inverse();
    let entries: Vec<TrajectoryEntry> = assoc
        .iter()
        .zip(&poses)
        .map(|(a, p)| TrajectoryEntry::from_camera_pose(a.ts_rgb, &p.compose(&world_to_first)))
        .collect();
    let traj = Trajectory::new(entries)?;
    write_bytes(&args.out, traj.to_tum().as_bytes())?;

    if let Some(path) = &args.report {
        write_atomic(path, |w| {
            writeln!(w, "# {} huber={} outlier_px={}", cfg.describe(), args.huber, args.outlier_px)?;
            writeln!(w, "timestamp,keypoints,matches,inliers,rmse_px,iterations,converged")?;
            for r in &reports {
                writeln!(
                    w,
                    "{:.6},{},{},{},{:.4},{},{}",
                    r.timestamp, r.keypoints, r.matches, r.inliers, r.rmse, r.iterations, r.converged
                )?;
            }
            Ok(())
        })?;
    }
    eprintln!("tracked {} frames against {} map points", poses.len(), map_points.len());
    Ok(())
}

pub fn ate(args: &AteArgs) -> Result<()> {
    require_file(&args.estimate)?;
    require_file(&args.groundtruth)?;
    let est = Trajectory::load(&args.estimate).with_context(|| format!("reading {}", args.estimate.display()))?;
    let gt = Trajectory::load(&args.groundtruth).with_context(|| format!("reading {}", args.groundtruth.display()))?;
    let align = !args.no_align;
    let s = ate_stats(&est, &gt, args.max_dt, align)?;
    let render = |w: &mut dyn Write| -> Result<()> {
        writeln!(w, "# align={align} max_dt={}", args.max_dt)?;
        writeln!(w, "pairs,rmse,mean,median,stddev")?;
        writeln!(w, "{},{:.9},{:.9},{:.9},{:.9}", s.pairs, s.rmse, s.mean, s.median, s.stddev)?;
        Ok(())
    };
    match &args.out {
        Some(p) => write_atomic(p, render),
        None => render(&mut std::io::stdout().lock()),
    }
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    if args.frames == 0 {
        return Err(usage("--frames must be at least 1"));
    }
    if args.rate <= 0.0 {
        return Err(usage("--rate must be positive"));
    }
    ensure_dir(&args.out_dir)?;
    let ts = |i: usize| 1.0 + i as f64 / args.rate;
    match args.kind {
        SynthKind::Textured => (0..args.frames).into_par_iter().try_for_each(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(i as u64));
            let img = textured_scene(&mut rng, args.width, args.height);
            write_bytes(&args.out_dir.join(format!("frame_{i:04}.pgm")), &img.to_pgm_bytes())
        }),
        SynthKind::Sequence => {
            ensure_dir(&args.out_dir.join("rgb"))?;
            ensure_dir(&args.out_dir.join("depth"))?;
            let k = Intrinsics::new(525.0, 525.0, (args.width as f64 - 1.0) / 2.0, (args.height as f64 - 1.0) / 2.0)?;
            let scene = PlaneScene::wall_and_floor(args.seed);
            let path = camera_path(args.frames);
            path.par_iter().enumerate().try_for_each(|(i, pose)| -> Result<()> {
                let f = scene.render(&k, pose, args.width, args.height);
                let name = format!("{:.6}.pgm", ts(i));
                write_bytes(&args.out_dir.join("rgb").join(&name), &f.image.to_pgm_bytes())?;
                let d = depth_pgm_bytes(args.width, args.height, &encode_depth(&f.depth));
                write_bytes(&args.out_dir.join("depth").join(&name), &d)
            })?;
            let mut assoc = format!("# synthetic two-plane sequence, seed {}, depth scale {DEPTH_SCALE}\n", args.seed);
            for i in 0..args.frames {
                let t = ts(i);
                assoc.push_str(&format!("{t:.6} rgb/{t:.6}.pgm {t:.6} depth/{t:.6}.pgm\n"));
            }
            write_bytes(&args.out_dir.join("associations.txt"), assoc.as_bytes())?;
            let entries: Vec<TrajectoryEntry> = path
                .iter()
                .enumerate()
                .map(|(i, p)| TrajectoryEntry::from_camera_pose(ts(i), p))
                .collect();
            write_bytes(&args.out_dir.join("groundtruth.txt"), Trajectory::new(entries)?.to_tum().as_bytes())
        }
    }
}

pub fn pattern(args: &PatternArgs) -> Result<()> {
    let text = match args.seed {
        Some(s) => BriefPattern::gaussian(s).to_text(),
        None => BriefPattern::default_pattern().to_text(),
    };
    write_bytes(&args.out, text.as_bytes())
}
