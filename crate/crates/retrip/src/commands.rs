//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use retrip_core::evaluation::{
    auc, build_ground_truth, max_f1, pr_curve, score_sequence, write_pr_csv, write_records_csv,
};
use retrip_core::pipeline::{extract_features, query_and_verify};
use retrip_core::scan_io::{format_for_path, load_scan, PointCloud};
use retrip_core::synth::{
    generate_scene, make_benchmark, read_poses_csv, scan_file_name, Preset, SceneConfig,
};
use retrip_core::verification::verify_loop;
use retrip_core::{DescriptorDB, FrameTiming, PipelineConfig};

pub fn run_in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon_pool(workers)?;
    Ok(pool.install(f))
}

fn rayon_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .context("building worker pool")
}

fn load_cloud(path: &Path) -> Result<PointCloud> {
    load_scan(path, format_for_path(path)).with_context(|| format!("loading {}", path.display()))
}

pub struct SynthArgs {
    pub preset: Preset,
    pub seed: u64,
    pub out: PathBuf,
    pub length: Option<f64>,
    pub spacing: Option<f64>,
    pub num_markers: Option<usize>,
    pub dynamic_ratio: Option<f64>,
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut scene_cfg: SceneConfig = args.preset.scene_config(args.seed);
    if let Some(n) = args.num_markers {
        scene_cfg.num_markers = n;
    }
    if let Some(r) = args.dynamic_ratio {
        if !(0.0..1.0).contains(&r) {
            bail!("--dynamic-ratio must be in [0, 1), got {r}");
        }
        scene_cfg.dynamic_ratio = r;
    }
    let scene = generate_scene(&scene_cfg);
    let length = args.length.unwrap_or(match args.preset {
        Preset::Town => 500.0,
        Preset::Corridor => 102.0,
    });
    let spacing = args.spacing.unwrap_or(args.preset.spacing());
    let trajectory = args.preset.trajectory_with(length, spacing);
    let model = args.preset.scan_model();
    let manifest = make_benchmark(&scene, &trajectory, &model, &args.out)
        .with_context(|| format!("writing benchmark to {}", args.out.display()))?;
    println!(
        "wrote {} scans, poses.csv, markers.csv to {}",
        manifest.frames,
        args.out.display()
    );
    Ok(())
}

pub fn keypoints(input: &Path, out: &Path, cfg: &PipelineConfig, workers: usize) -> Result<()> {
    let cloud = load_cloud(input)?;
    let partition = run_in_pool(workers, || {
        retrip_core::keypoints::extract_keypoints(&cloud, &cfg.keypoints)
    })?;
    let mut w = BufWriter::new(File::create(out)?);
    writeln!(w, "index,class")?;
    for i in 0..partition.len() {
        writeln!(w, "{},{}", i, partition.class_of(i).as_str())?;
    }
    w.flush()?;
    println!(
        "{} points: {} ARP, {} RRP, {} remainder -> {}",
        partition.len(),
        partition.arp().len(),
        partition.rrp().len(),
        partition.remainder().len(),
        out.display()
    );
    Ok(())
}

pub fn instances(input: &Path, out: &Path, cfg: &PipelineConfig, workers: usize) -> Result<()> {
    let cloud = load_cloud(input)?;
    let features = run_in_pool(workers, || extract_features(&cloud, cfg))?;
    let mut w = BufWriter::new(File::create(out)?);
    writeln!(w, "label,size,cx,cy,cz")?;
    for inst in features.key_set.instances() {
        writeln!(
            w,
            "{},{},{},{},{}",
            inst.label.indicator(),
            inst.size,
            inst.centroid.x,
            inst.centroid.y,
            inst.centroid.z
        )?;
    }
    w.flush()?;
    println!(
        "{} key instances -> {}",
        features.key_set.len(),
        out.display()
    );
    Ok(())
}

pub fn describe(input: &Path, out: &Path, cfg: &PipelineConfig, workers: usize) -> Result<()> {
    let cloud = load_cloud(input)?;
    let features = run_in_pool(workers, || extract_features(&cloud, cfg))?;
    let mut w = BufWriter::new(File::create(out)?);
    writeln!(w, "t,l12,l23,l13,qx,qy,qz,lab1,lab2,lab3,size1,size2,size3")?;
    for d in &features.descriptors {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            d.frame_id,
            d.sides[0],
            d.sides[1],
            d.sides[2],
            d.centroid.x,
            d.centroid.y,
            d.centroid.z,
            d.vertices[0].label.indicator(),
            d.vertices[1].label.indicator(),
            d.vertices[2].label.indicator(),
            d.vertices[0].size,
            d.vertices[1].size,
            d.vertices[2].size
        )?;
    }
    w.flush()?;
    println!(
        "{} descriptors -> {}",
        features.descriptors.len(),
        out.display()
    );
    Ok(())
}

/// Loads the database and extracts features for an external query scan. The
/// query is assigned a frame id far past the stored range so the temporal
/// exclusion window never hides valid loops.
fn prepare_query(
    db_path: &Path,
    scan: &Path,
    cfg: &mut PipelineConfig,
) -> Result<(DescriptorDB, retrip_core::FrameFeatures)> {
    let db = DescriptorDB::load(db_path)
        .with_context(|| format!("loading database {}", db_path.display()))?;
    cfg.descriptor.resolution = db.resolution();
    let exclusion = cfg.matching.temporal_exclusion.unwrap_or(0);
    let query_frame = db.last_frame_id().unwrap_or(0) + exclusion + 1;
    let cloud = load_cloud(scan)?.with_frame_id(query_frame);
    let features = extract_features(&cloud, cfg);
    Ok((db, features))
}

pub fn query(db_path: &Path, scan: &Path, cfg: &PipelineConfig, workers: usize) -> Result<()> {
    let mut cfg = *cfg;
    let pool = rayon_pool(workers)?;
    pool.install(|| -> Result<()> {
        let (db, features) = prepare_query(db_path, scan, &mut cfg)?;
        let candidates = db.retrieve_candidates(&features.descriptors, &cfg.matching);
        if candidates.is_empty() {
            println!("no candidates");
            return Ok(());
        }
        println!("rank,frame,votes");
        for (rank, c) in candidates.iter().enumerate() {
            println!("{},{},{}", rank + 1, c.frame_id, c.votes);
        }
        Ok(())
    })
}

pub fn verify(db_path: &Path, scan: &Path, cfg: &PipelineConfig, workers: usize) -> Result<()> {
    let mut cfg = *cfg;
    let pool = rayon_pool(workers)?;
    pool.install(|| -> Result<()> {
        let (db, features) = prepare_query(db_path, scan, &mut cfg)?;
        let (outcomes, _, _) = query_and_verify(&db, &features, &cfg);
        let Some(best) = retrip_core::pipeline::best_detection(&outcomes) else {
            println!("no candidates");
            return Ok(());
        };
        if !best.accepted {
            println!(
                "no accepted loop (best candidate frame {} coincidence {:.4})",
                best.frame_id, best.coincidence
            );
            return Ok(());
        }
        // Re-verify the winning candidate to recover its transform.
        let candidates = db.retrieve_candidates(&features.descriptors, &cfg.matching);
        let candidate = candidates
            .iter()
            .find(|c| c.frame_id == best.frame_id)
            .expect("winning candidate present");
        let result = verify_loop(&db, candidate, &features.planes, &cfg.verify);
        println!(
            "accepted frame {} coincidence {:.4} matched_planes {}",
            best.frame_id, result.coincidence, result.matched_plane_pairs
        );
        let r = &result.transform.rotation;
        let t = &result.transform.translation;
        println!(
            "rotation {} {} {} {} {} {} {} {} {}",
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)]
        );
        println!("translation {} {} {}", t.x, t.y, t.z);
        Ok(())
    })
}

pub struct EvaluateArgs {
    pub benchmark: PathBuf,
    pub out: PathBuf,
    pub workers: usize,
}

pub fn evaluate(args: &EvaluateArgs, cfg: &PipelineConfig) -> Result<()> {
    let poses_path = args.benchmark.join("poses.csv");
    let poses =
        read_poses_csv(&poses_path).with_context(|| format!("reading {}", poses_path.display()))?;
    if poses.is_empty() {
        bail!("benchmark {} has no poses", args.benchmark.display());
    }
    let positions: Vec<(u64, nalgebra::Point3<f64>)> =
        poses.iter().map(|p| (p.frame, p.position)).collect();
    let exclusion = cfg.matching.temporal_exclusion.unwrap_or(0);
    let gt = build_ground_truth(&positions, cfg.env, exclusion)?;

    // Validate the scan files up front; a scan that fails to load mid-run is
    // downgraded to an empty cloud and surfaces as a no-detection record.
    for p in &poses {
        let path = args.benchmark.join(scan_file_name(p.frame));
        if !path.is_file() {
            bail!("benchmark scan missing: {}", path.display());
        }
    }
    let bench_dir = args.benchmark.clone();
    let frames = poses.iter().map(move |p| {
        let path = bench_dir.join(scan_file_name(p.frame));
        let cloud = load_scan(&path, format_for_path(&path)).unwrap_or_else(|e| {
            eprintln!("warning: {}: {e}; treating as empty", path.display());
            PointCloud::empty(1, p.frame)
        });
        (p.frame, cloud)
    });
    let run = score_sequence(frames, cfg, args.workers);

    fs::create_dir_all(&args.out)?;
    let mut records_csv = BufWriter::new(File::create(args.out.join("records.csv"))?);
    write_records_csv(&run.records, &mut records_csv)?;
    records_csv.flush()?;

    let curve = pr_curve(&run.records, &gt)?;
    let mut pr_csv = BufWriter::new(File::create(args.out.join("pr_curve.csv"))?);
    write_pr_csv(&curve, &mut pr_csv)?;
    pr_csv.flush()?;

    run.db
        .save(args.out.join("db.bin"))
        .context("saving descriptor database")?;

    let auc_value = auc(&curve);
    let max_f1_value = max_f1(&curve);
    let mean = |sel: fn(&FrameTiming) -> f64| {
        run.timings.iter().map(sel).sum::<f64>() / run.timings.len().max(1) as f64
    };
    let mut totals: Vec<f64> = run.timings.iter().map(|t| t.total_ms()).collect();
    totals.sort_by(f64::total_cmp);
    let percentile = |q: f64| totals[((totals.len() - 1) as f64 * q) as usize];

    let mut summary = BufWriter::new(File::create(args.out.join("summary.csv"))?);
    writeln!(summary, "key,value")?;
    writeln!(summary, "env,{}", cfg.env.name())?;
    writeln!(summary, "frames,{}", run.records.len())?;
    writeln!(summary, "queries_with_revisit,{}", gt.positive_queries())?;
    writeln!(summary, "exclusion,{exclusion}")?;
    writeln!(summary, "candidates,{}", cfg.matching.num_candidates)?;
    writeln!(
        summary,
        "instance_matching,{}",
        cfg.matching.require_label_match
    )?;
    writeln!(summary, "auc,{auc_value}")?;
    writeln!(summary, "max_f1,{max_f1_value}")?;
    writeln!(summary, "mean_descriptor_ms,{}", mean(|t| t.descriptor_ms))?;
    writeln!(summary, "mean_search_ms,{}", mean(|t| t.search_ms))?;
    writeln!(summary, "mean_verify_ms,{}", mean(|t| t.verify_ms))?;
    writeln!(summary, "mean_total_ms,{}", mean(|t| t.total_ms()))?;
    writeln!(summary, "p50_total_ms,{}", percentile(0.5))?;
    writeln!(summary, "p90_total_ms,{}", percentile(0.9))?;
    writeln!(
        summary,
        "pr_integration,trapezoid anchored at recall 0; no extension past achieved recall"
    )?;
    summary.flush()?;

    println!(
        "evaluated {} frames: AUC {:.4}, max F1 {:.4} -> {}",
        run.records.len(),
        auc_value,
        max_f1_value,
        args.out.display()
    );
    Ok(())
}

pub fn bench(scan: &Path, iters: usize, cfg: &PipelineConfig, workers: usize) -> Result<()> {
    let cloud = load_cloud(scan)?;
    let pool = rayon_pool(workers)?;
    pool.install(|| -> Result<()> {
        // Seed a database with this frame so search and verify have work.
        let mut cfg = *cfg;
        cfg.matching.temporal_exclusion = None;
        let base = extract_features(&cloud.clone().with_frame_id(0), &cfg);
        let mut db = DescriptorDB::new(cfg.descriptor.resolution);
        db.insert_frame(base.descriptors, base.key_set, base.planes)?;

        let query_cloud = cloud.clone().with_frame_id(1);
        let mut descriptor_ms = Vec::with_capacity(iters);
        let mut search_ms = Vec::with_capacity(iters);
        let mut total_ms = Vec::with_capacity(iters);
        for _ in 0..iters {
            let start = Instant::now();
            let features = extract_features(&query_cloud, &cfg);
            let d_ms = start.elapsed().as_secs_f64() * 1e3;
            let (_, s_ms, v_ms) = query_and_verify(&db, &features, &cfg);
            descriptor_ms.push(d_ms);
            search_ms.push(s_ms);
            total_ms.push(d_ms + s_ms + v_ms);
        }
        let stats = |v: &mut Vec<f64>| {
            v.sort_by(f64::total_cmp);
            let p = |q: f64| v[((v.len() - 1) as f64 * q) as usize];
            (
                p(0.5),
                p(0.9),
                p(0.99),
                v.iter().sum::<f64>() / v.len() as f64,
            )
        };
        let d = stats(&mut descriptor_ms);
        let s = stats(&mut search_ms);
        let t = stats(&mut total_ms);
        println!("stage,p50_ms,p90_ms,p99_ms,mean_ms");
        println!("descriptor,{:.3},{:.3},{:.3},{:.3}", d.0, d.1, d.2, d.3);
        println!("search,{:.3},{:.3},{:.3},{:.3}", s.0, s.1, s.2, s.3);
        println!("total,{:.3},{:.3},{:.3},{:.3}", t.0, t.1, t.2, t.3);
        Ok(())
    })
}
