use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hintpc::codec::{build_training_set, decode_frame, encode_frame, train, FrameState, TrainConfig};
use hintpc::coder::read_container;
use hintpc::io::{read_ply, write_ply, PointCloud, QuantTransform};
use hintpc::model::{InitOptions, ModelConfig, ModelParams};
use hintpc::nn::{AdamConfig, Checkpoint};
use log::info;

use crate::args::{InputFlags, ModelFlags};
use crate::error::CliError;
use crate::inputs::{collect, frame_files, load_dataset, load_sequence, Sequence};
use crate::report::{BenchReport, Row};

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub fn load_params(checkpoint: &Path, flags: &ModelFlags) -> Result<ModelParams, CliError> {
    let ck = Checkpoint::load(checkpoint).map_err(|e| match e {
        hintpc::Error::Io(io) => CliError::Other(format!("cannot read checkpoint {}: {io}", checkpoint.display())),
        e => e.into(),
    })?;
    let p = ModelParams::from_checkpoint(&ck)?;
    let cfg = flags.apply(*p.config());
    Ok(p.with_config(cfg)?)
}

fn stem(p: &Path) -> String {
    p.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

pub fn encode(
    input: &InputFlags,
    output: &Path,
    checkpoint: &Path,
    depth: u8,
    csv: Option<&Path>,
    flags: &ModelFlags,
) -> Result<(), CliError> {
    let params = load_params(checkpoint, flags)?;
    let files = frame_files(&input.inputs, input.order_file.as_deref(), "ply")?;
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = files.iter().map(|f| stem(f)).find(|s| !seen.insert(s.clone())) {
        return Err(CliError::Usage(format!("two input frames share the name `{dup}`")));
    }
    let seq = load_sequence("input".into(), files, depth)?;
    fs::create_dir_all(output)?;
    let mut state = FrameState::empty();
    let mut report = BenchReport::default();
    for (t, frame) in seq.frames.iter().enumerate() {
        let t0 = Instant::now();
        let mut e = encode_frame(frame, &state, &params, depth, t as u32).map_err(|e| e.in_file(&seq.files[t]))?;
        let enc_ms = ms(t0);
        e.stats.points = seq.points[t];
        let out = output.join(format!("{}.hint", stem(&seq.files[t])));
        fs::write(&out, &e.bytes)?;
        info!("{} -> {} ({} bytes)", seq.files[t].display(), out.display(), e.bytes.len());
        report.rows.push(Row::from_stats(&seq.name, &e.stats, enc_ms, None));
        state = e.state;
    }
    if let Some(t) = &seq.transform {
        fs::write(output.join("transform.json"), serde_json::to_string_pretty(t)?)?;
    }
    let csv = csv.map(Path::to_path_buf).unwrap_or_else(|| output.join("stats.csv"));
    report.write_csv(&csv)?;
    println!("{}", report.summary());
    Ok(())
}

pub fn decode(input: &InputFlags, output: &Path, checkpoint: &Path, flags: &ModelFlags) -> Result<(), CliError> {
    let params = load_params(checkpoint, flags)?;
    let files = frame_files(&input.inputs, input.order_file.as_deref(), "hint")?;
    let mut streams = Vec::with_capacity(files.len());
    for f in files {
        let bytes = fs::read(&f)?;
        let index = read_container(&bytes)
            .map_err(|e| CliError::Core(e.in_file(&f)))?
            .0
            .frame_index;
        streams.push((index, f, bytes));
    }
    // Temporal order comes from the headers, not from file names.
    streams.sort_by_key(|s| s.0);
    fs::create_dir_all(output)?;
    let mut state = FrameState::empty();
    for (t, (_, f, bytes)) in streams.iter().enumerate() {
        let d = decode_frame(bytes, &state, &params).map_err(|e| CliError::Core(e.in_frame(t).in_file(f)))?;
        let out = output.join(format!("{}.ply", stem(f)));
        write_ply(&out, &PointCloud::from_voxels(&d.leaves))?;
        info!("{} -> {} ({} voxels)", f.display(), out.display(), d.leaves.len());
        state = d.state;
    }
    println!("decoded {} frames into {}", streams.len(), output.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn train_cmd(
    dataset: &str,
    out: &Path,
    epochs: usize,
    steps: Option<usize>,
    lr: f64,
    depth: u8,
    frames: usize,
    sequences: usize,
    width: usize,
    seed: u64,
    checkpoint_dir: Option<&Path>,
    flags: &ModelFlags,
) -> Result<(), CliError> {
    let data = load_dataset(dataset, sequences, frames, depth, seed)?;
    let cfg = flags.apply(ModelConfig {
        width,
        ..ModelConfig::default()
    });
    let seqs: Vec<_> = data.into_iter().map(|s| s.frames).collect();
    let pairs = build_training_set(&seqs, depth, &cfg)?;
    let mut params = ModelParams::init(cfg, seed, InitOptions::default())?;
    let dir = checkpoint_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(format!("{}.epochs", out.display())));
    let tc = TrainConfig {
        epochs,
        max_steps: steps,
        adam: AdamConfig {
            lr,
            ..Default::default()
        },
        seed,
        checkpoint_dir: Some(dir),
    };
    let t0 = Instant::now();
    let report = train(&mut params, &pairs, &tc)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    params.to_checkpoint().save(out)?;
    for (e, m) in report.epoch_means.iter().enumerate() {
        println!("epoch {e}: {m:.4} bits/code");
    }
    println!(
        "{} steps over {} frame pairs in {:.1} s; checkpoint {}",
        report.losses.len(),
        pairs.len(),
        t0.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

struct SeqResult {
    rows: Vec<Row>,
    failures: Vec<String>,
}

fn bench_sequence(seq: &Sequence, params: &ModelParams, depth: u8) -> Result<SeqResult, CliError> {
    let mut enc_state = FrameState::empty();
    let mut dec_state = FrameState::empty();
    let mut res = SeqResult {
        rows: Vec::new(),
        failures: Vec::new(),
    };
    for (t, frame) in seq.frames.iter().enumerate() {
        let t0 = Instant::now();
        let mut e = encode_frame(frame, &enc_state, params, depth, t as u32)?;
        let enc_ms = ms(t0);
        e.stats.points = seq.points[t];
        let t1 = Instant::now();
        let d = decode_frame(&e.bytes, &dec_state, params)?;
        let dec_ms = ms(t1);
        if d.leaves.keys() != frame.keys() || d.state.digest() != e.state.digest() {
            res.failures.push(format!("{} frame {t}", seq.name));
        }
        res.rows.push(Row::from_stats(&seq.name, &e.stats, enc_ms, Some(dec_ms)));
        enc_state = e.state;
        dec_state = d.state;
    }
    Ok(res)
}

#[allow(clippy::too_many_arguments)]
pub fn bench(
    dataset: &str,
    checkpoint: &Path,
    csv: Option<&Path>,
    depth: u8,
    frames: usize,
    sequences: usize,
    seed: u64,
    jobs: usize,
    flags: &ModelFlags,
) -> Result<(), CliError> {
    let params = load_params(checkpoint, flags)?;
    let data = load_dataset(dataset, sequences, frames, depth, seed)?;
    let jobs = jobs.clamp(1, data.len().max(1));
    let mut results: Vec<Option<Result<SeqResult, CliError>>> = (0..data.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                let (data, params) = (&data, &params);
                s.spawn(move || {
                    (w..data.len())
                        .step_by(jobs)
                        .map(|i| (i, bench_sequence(&data[i], params, depth)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("bench worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let mut report = BenchReport::default();
    let mut failures = Vec::new();
    for r in results {
        let r = r.expect("every sequence is assigned to a worker")?;
        report.rows.extend(r.rows);
        failures.extend(r.failures);
    }
    if let Some(csv) = csv {
        report.write_csv(csv)?;
    }
    println!("{}", report.summary());
    if failures.is_empty() {
        println!("round trip: all {} frames match", report.rows.len());
        Ok(())
    } else {
        Err(CliError::Verify(format!("round trip mismatch: {}", failures.join(", "))))
    }
}

pub fn verify(original: &str, decoded: &str, depth: u8) -> Result<(), CliError> {
    let orig_files = collect(&[original.to_string()], "ply")?;
    let dec_files = collect(&[decoded.to_string()], "ply")?;
    if orig_files.is_empty() {
        return Err(CliError::Usage(format!("no PLY files in `{original}`")));
    }
    let orig = load_sequence("original".into(), orig_files, depth)?;
    let mut failed = Vec::new();
    if dec_files.len() != orig.frames.len() {
        failed.push(format!(
            "{} original frames but {} decoded frames",
            orig.frames.len(),
            dec_files.len()
        ));
    }
    for (t, (frame, f)) in orig.frames.iter().zip(&dec_files).enumerate() {
        let cloud = read_ply(f)?;
        let grid = QuantTransform::identity(depth);
        let ok = QuantTransform::fit(std::iter::once(&cloud), depth)?.is_identity()
            && grid.apply(&cloud)?.keys() == frame.keys();
        println!("frame {t}: {} ({})", if ok { "PASS" } else { "FAIL" }, f.display());
        if !ok {
            failed.push(format!("frame {t} ({})", f.display()));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(format!("verification failed: {}", failed.join(", "))))
    }
}
