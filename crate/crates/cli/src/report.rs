use std::path::Path;

use hintpc::codec::FrameStats;
use serde::Serialize;

use crate::error::CliError;

/// Column order of every statistics CSV written by the tool.
pub const CSV_HEADER: [&str; 10] = [
    "sequence",
    "frame",
    "points",
    "voxels",
    "payload_bits",
    "header_bits",
    "bpp",
    "bpp_with_header",
    "encode_ms",
    "decode_ms",
];

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub sequence: String,
    pub frame: String,
    pub points: f64,
    pub voxels: f64,
    pub payload_bits: f64,
    pub header_bits: f64,
    pub bpp: f64,
    pub bpp_with_header: f64,
    pub encode_ms: Option<f64>,
    pub decode_ms: Option<f64>,
}

impl Row {
    pub fn from_stats(sequence: &str, s: &FrameStats, encode_ms: f64, decode_ms: Option<f64>) -> Self {
        Self {
            sequence: sequence.to_string(),
            frame: s.frame_index.to_string(),
            points: s.points as f64,
            voxels: s.voxels as f64,
            payload_bits: s.payload_bits as f64,
            header_bits: s.header_bits as f64,
            bpp: s.bpp(),
            bpp_with_header: s.bpp_with_header(),
            encode_ms: Some(encode_ms),
            decode_ms,
        }
    }
}

/// Per-frame rows and their arithmetic means.
#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub rows: Vec<Row>,
}

impl BenchReport {
    pub fn mean(&self) -> Row {
        let n = self.rows.len().max(1) as f64;
        let avg = |f: &dyn Fn(&Row) -> f64| self.rows.iter().map(f).sum::<f64>() / n;
        let avg_opt = |f: &dyn Fn(&Row) -> Option<f64>| {
            let v: Vec<f64> = self.rows.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        Row {
            sequence: "mean".into(),
            frame: String::new(),
            points: avg(&|r| r.points),
            voxels: avg(&|r| r.voxels),
            payload_bits: avg(&|r| r.payload_bits),
            header_bits: avg(&|r| r.header_bits),
            bpp: avg(&|r| r.bpp),
            bpp_with_header: avg(&|r| r.bpp_with_header),
            encode_ms: avg_opt(&|r| r.encode_ms),
            decode_ms: avg_opt(&|r| r.decode_ms),
        }
    }

    /// Rows followed by one `mean` row.
    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.serialize(self.mean())?;
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let m = self.mean();
        format!(
            "{} frames: mean {:.4} bpp ({:.4} with header), encode {:.1} ms, decode {}",
            self.rows.len(),
            m.bpp,
            m.bpp_with_header,
            m.encode_ms.unwrap_or(0.0),
            m.decode_ms.map_or("n/a".to_string(), |d| format!("{d:.1} ms")),
        )
    }
}
