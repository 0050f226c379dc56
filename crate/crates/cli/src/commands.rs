use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use bap_core::audio::{gen_corpus, read_wav, SegmentLabel, SynthSpec};
use bap_core::cluster::{ClusterConfig, Master};
use bap_core::detect::{cross_validate, save_rules, train_tree, LabeledDataset};
use bap_core::pipeline::{
    chunk_features, handoff, labeled_features, list_wavs, one_vs_rest, preprocess_front,
    run_sequential, Decision,
};
use bap_core::spectral::FEATURES_HEADER;
use log::info;

use crate::bench::{bench, BenchOptions, BENCH_CSV_HEADER};
use crate::{
    BenchArgs, CliError, Command, FeaturesArgs, GenArgs, MasterArgs, QueueArgs, RunArgs, TrainArgs,
    WorkerArgs,
};

pub(crate) fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Master(a) => master(a),
        Command::Worker(a) => worker(a),
        Command::Train(a) => train(a),
        Command::Features(a) => features(a),
        Command::Bench(a) => bench_cmd(a),
    }
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T, CliError> {
    v.clone()
        .ok_or_else(|| CliError::Usage(format!("{flag} is required")))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes()).map_err(|e| CliError::Io {
                path: PathBuf::from("<stdout>"),
                source: e,
            })
        }
    }
}

fn cluster_text(c: &ClusterConfig) -> String {
    format!(
        "endpoint = {}\nqueue_size = {}\nsend_interval_s = {}\nworker_threads = {}\nmax_attempts = {}\nlocal_threads = {}\nliveness_timeout_s = {}\nmin_workers = {}\n",
        c.endpoint,
        c.queue_size,
        c.send_interval_s,
        c.worker_threads,
        c.max_attempts,
        c.local_threads,
        c.liveness_timeout_s,
        c.min_workers
    )
}

fn queue_cfg(q: &QueueArgs) -> ClusterConfig {
    ClusterConfig {
        queue_size: q.queue,
        send_interval_s: q.send_interval,
        ..ClusterConfig::default()
    }
}

fn gen(a: GenArgs) -> Result<(), CliError> {
    let mix: [f64; 4] = a
        .mix
        .clone()
        .try_into()
        .map_err(|_| CliError::Usage("--mix takes four fractions".into()))?;
    let spec = SynthSpec {
        total_minutes: a.minutes,
        mix,
        seed: a.seed,
        noise_floor_db: a.noise_floor_db,
        file_minutes: a.file_minutes,
        ..SynthSpec::default()
    };
    spec.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if a.print_config {
        print!(
            "minutes = {}\nmix = {},{},{},{}\nseed = {}\nnoise_floor_db = {}\nfile_minutes = {}\nsegment_s = {}\n",
            spec.total_minutes,
            mix[0],
            mix[1],
            mix[2],
            mix[3],
            spec.seed,
            spec.noise_floor_db,
            spec.file_minutes,
            spec.segment_s
        );
        return Ok(());
    }
    let out = required(&a.out, "--out")?;
    let m = gen_corpus(&spec, &out)?;
    println!("wrote {} segments to {}", m.segments.len(), out.display());
    Ok(())
}

fn run(a: RunArgs) -> Result<(), CliError> {
    let cfg = a.pipeline.resolve()?;
    if a.pipeline.print_config {
        print!("{}", cfg.to_config_text());
        return Ok(());
    }
    let (input, out) = (required(&a.input, "--input")?, required(&a.out, "--out")?);
    let m = run_sequential(&input, &out, &cfg)?;
    let count = |d: Decision| m.rows.iter().filter(|r| r.decision == d).count();
    println!(
        "{} chunks: {} kept ({} files), {} deleted",
        m.rows.len(),
        count(Decision::Kept),
        m.output_files().len(),
        count(Decision::Deleted)
    );
    Ok(())
}

fn master(a: MasterArgs) -> Result<(), CliError> {
    let pcfg = a.pipeline.resolve()?;
    let cfg = ClusterConfig {
        endpoint: a
            .listen
            .clone()
            .unwrap_or_else(|| ClusterConfig::default().endpoint),
        local_threads: a.local_threads,
        max_attempts: a.max_attempts,
        liveness_timeout_s: a.liveness_timeout,
        min_workers: a.min_workers,
        worker_threads: a.local_threads.max(1),
        ..queue_cfg(&a.queue)
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if a.pipeline.print_config {
        print!("{}{}", pcfg.to_config_text(), cluster_text(&cfg));
        return Ok(());
    }
    let (input, out) = (required(&a.input, "--input")?, required(&a.out, "--out")?);
    let master = Master::bind(&cfg)?;
    info!("listening on {}", master.local_addr());
    let report = master.run(&pcfg, &input, &out)?;
    print!("{}", report.to_text());
    if let Some(p) = &a.report {
        write_file(p, &report.to_csv())?;
    }
    if !report.failed.is_empty() {
        return Err(CliError::Failed(format!(
            "{} chunks failed",
            report.failed.len()
        )));
    }
    Ok(())
}

fn worker(a: WorkerArgs) -> Result<(), CliError> {
    let pcfg = a.pipeline.resolve()?;
    let cfg = ClusterConfig {
        endpoint: a.connect.clone().unwrap_or_default(),
        worker_threads: a.threads,
        worker_name: a.name.clone(),
        ..queue_cfg(&a.queue)
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if a.pipeline.print_config {
        print!("{}{}", pcfg.to_config_text(), cluster_text(&cfg));
        return Ok(());
    }
    let stats = bap_core::cluster::worker_run(&cfg, &pcfg)?;
    info!(
        "processed {} chunks ({} kept, {} deleted, {} errors)",
        stats.processed, stats.kept, stats.deleted, stats.errors
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    if a.max_depth == 0 || a.min_leaf == 0 {
        return Err(CliError::Usage(
            "--max-depth and --min-leaf must be at least 1".into(),
        ));
    }
    let (data, _) = LabeledDataset::read(&a.features)?;
    let result = train_tree(&data, a.max_depth, a.min_leaf)?;
    if result.degenerate {
        eprintln!("warning: only one label present; the tree is a single leaf");
    } else if a.folds >= 2 {
        let acc = cross_validate(&data, a.folds, a.max_depth, a.min_leaf)?;
        println!("{}-fold cross-validated accuracy {:.4}", a.folds, acc);
    }
    save_rules(&result.tree, &a.out)?;
    println!(
        "wrote {} ({} nodes, depth {}) from {} rows",
        a.out.display(),
        result.tree.nodes().len(),
        result.tree.depth(),
        data.rows.len()
    );
    Ok(())
}

fn features(a: FeaturesArgs) -> Result<(), CliError> {
    let cfg = a.pipeline.resolve()?;
    if a.pipeline.print_config {
        print!("{}", cfg.to_config_text());
        return Ok(());
    }
    if let Some(class) = &a.label {
        let positive: SegmentLabel = class.parse().map_err(CliError::Usage)?;
        let chunks = labeled_features(&a.input, &cfg)?;
        let (data, ids) = one_vs_rest(&chunks, positive);
        return emit(&a.out, &data.to_csv(&ids));
    }
    let files = if a.input.is_dir() {
        list_wavs(&a.input)?
    } else {
        vec![a.input.clone()]
    };
    let mut text = format!("{FEATURES_HEADER}\n");
    for path in files {
        let clip = read_wav(&path)?;
        for chunk in preprocess_front(&clip, &cfg)? {
            let chunk = handoff(&chunk)?;
            text.push_str(&chunk_features(&chunk)?.csv_rows(&chunk.chunk_id().to_string()));
        }
    }
    emit(&a.out, &text)
}

fn bench_cmd(a: BenchArgs) -> Result<(), CliError> {
    let pcfg = a.pipeline.resolve()?;
    let opts = BenchOptions {
        threads: a.threads,
        queue_size: a.queue.queue,
        send_interval_s: a.queue.send_interval,
        worker_exe: std::env::current_exe().map_err(|e| CliError::Io {
            path: PathBuf::from("<current exe>"),
            source: e,
        })?,
    };
    if a.pipeline.print_config {
        print!(
            "{}workers = {:?}\nthreads = {}\nqueue_size = {}\nsend_interval_s = {}\n",
            pcfg.to_config_text(),
            a.workers,
            opts.threads,
            opts.queue_size,
            opts.send_interval_s
        );
        return Ok(());
    }
    let input = required(&a.input, "--input")?;
    if a.workers.is_empty() || a.workers.contains(&0) {
        return Err(CliError::Usage("--workers takes positive counts".into()));
    }
    let rows = bench(&input, &a.workers, &pcfg, &opts)?;
    let mut csv = format!("{BENCH_CSV_HEADER}\n");
    for r in &rows {
        csv.push_str(&format!("{},{:.3},{:.3}\n", r.workers, r.wall_s, r.speedup));
    }
    emit(&a.out, &csv)?;
    if a.out.is_some() {
        print!("{csv}");
    }
    Ok(())
}
