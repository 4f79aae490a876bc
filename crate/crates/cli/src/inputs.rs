use std::fs;
use std::path::{Path, PathBuf};

use hintpc::codec::{make_synthetic_sequence, SyntheticKind, SyntheticSpec};
use hintpc::geom::SortedVoxelSet;
use hintpc::io::{read_ply, PointCloud, QuantTransform};

use crate::error::CliError;

fn has_ext(p: &Path, ext: &str) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn files_in(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_file() && has_ext(&p, ext) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Expands files, directories and glob patterns into a sorted, deduplicated
/// list of `ext` files.
pub fn collect(inputs: &[String], ext: &str) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for i in inputs {
        let p = Path::new(i);
        if p.is_dir() {
            out.extend(files_in(p, ext)?);
        } else if p.is_file() {
            out.push(p.to_path_buf());
        } else if i.contains(['*', '?', '[']) {
            let paths = glob::glob(i).map_err(|e| CliError::Usage(format!("bad pattern `{i}`: {e}")))?;
            for entry in paths {
                let entry = entry.map_err(|e| CliError::Usage(e.to_string()))?;
                if entry.is_file() {
                    out.push(entry);
                }
            }
        } else {
            return Err(CliError::Usage(format!("input `{i}` does not exist")));
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Paths listed in `order`, relative entries resolved against its directory.
pub fn read_order_file(order: &Path) -> Result<Vec<PathBuf>, CliError> {
    let base = order.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(order)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = Path::new(l);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        })
        .collect())
}

pub fn frame_files(inputs: &[String], order: Option<&Path>, ext: &str) -> Result<Vec<PathBuf>, CliError> {
    let files = match order {
        Some(o) => read_order_file(o)?,
        None => collect(inputs, ext)?,
    };
    if files.is_empty() {
        return Err(CliError::Usage(format!("no .{ext} inputs found")));
    }
    Ok(files)
}

/// A quantized sequence plus per-frame source point counts.
pub struct Sequence {
    pub name: String,
    pub files: Vec<PathBuf>,
    pub frames: Vec<SortedVoxelSet>,
    pub points: Vec<usize>,
    pub transform: Option<QuantTransform>,
}

/// Reads PLY frames and quantizes them with one shared transform.
pub fn load_sequence(name: String, files: Vec<PathBuf>, depth: u8) -> Result<Sequence, CliError> {
    let clouds: Vec<PointCloud> = files.iter().map(|f| read_ply(f)).collect::<Result<_, _>>()?;
    let t = QuantTransform::fit(clouds.iter(), depth)?;
    let frames = clouds.iter().map(|c| t.apply(c)).collect::<Result<_, _>>()?;
    Ok(Sequence {
        name,
        files,
        frames,
        points: clouds.iter().map(|c| c.len()).collect(),
        transform: Some(t),
    })
}

fn synthetic(kind: &str, n_seq: usize, n_frames: usize, depth: u8, seed: u64) -> Result<Vec<Sequence>, CliError> {
    let kinds: Vec<SyntheticKind> = if kind == "mixed" {
        vec![
            SyntheticKind::Translate,
            SyntheticKind::Static,
            SyntheticKind::Jitter,
            SyntheticKind::Random,
        ]
    } else {
        vec![kind.parse()?]
    };
    (0..n_seq)
        .map(|i| {
            let k = kinds[i % kinds.len()];
            let spec = SyntheticSpec::new(k, n_frames, depth, seed.wrapping_add(i as u64));
            let frames = make_synthetic_sequence(&spec)?;
            Ok(Sequence {
                name: format!("{k:?}-{i}").to_lowercase(),
                files: Vec::new(),
                points: frames.iter().map(|f| f.len()).collect(),
                frames,
                transform: None,
            })
        })
        .collect()
}

/// `synthetic:<kind>`, a directory of frames, or a directory whose
/// subdirectories are sequences.
pub fn load_dataset(spec: &str, n_seq: usize, n_frames: usize, depth: u8, seed: u64) -> Result<Vec<Sequence>, CliError> {
    if let Some(kind) = spec.strip_prefix("synthetic:") {
        return synthetic(kind, n_seq.max(1), n_frames.max(1), depth, seed);
    }
    let root = Path::new(spec);
    if root.is_dir() {
        let direct = files_in(root, "ply")?;
        if direct.is_empty() {
            let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            dirs.sort();
            let mut out = Vec::new();
            for d in dirs {
                let mut files = files_in(&d, "ply")?;
                if files.is_empty() {
                    continue;
                }
                files.sort();
                let name = d.file_name().unwrap_or_default().to_string_lossy().into_owned();
                out.push(load_sequence(name, files, depth)?);
            }
            if out.is_empty() {
                return Err(CliError::Usage(format!("no PLY files under `{spec}`")));
            }
            return Ok(out);
        }
    }
    let files = collect(&[spec.to_string()], "ply")?;
    if files.is_empty() {
        return Err(CliError::Usage(format!("no PLY files match `{spec}`")));
    }
    Ok(vec![load_sequence(spec.to_string(), files, depth)?])
}
