//! `.ranc` capture files and axis-labelled CSV tables.
//!
//! A `.ranc` file is a 56-byte little-endian header followed by the frame in
//! row-major order as interleaved float32 I/Q pairs:
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `RANC`                  |
//! | 4      | 2    | version (u16, currently 1)    |
//! | 6      | 2    | sample format (u16, 1 = c64)  |
//! | 8      | 4    | chirps M (u32)                |
//! | 12     | 4    | samples per chirp N (u32)     |
//! | 16     | 8    | sample rate, Hz (f64)         |
//! | 24     | 32   | SHA-256 scene digest          |
//!
//! The payload is exactly `M * N * 8` bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex32;

use crate::error::{Error, Result};
use crate::synth::CpiFrame;

pub const MAGIC: [u8; 4] = *b"RANC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 56;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum SampleFormat {
    /// Interleaved little-endian float32 I, Q.
    C64 = 1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqFileHeader {
    pub version: u16,
    pub sample_format: SampleFormat,
    pub m_chirps: u32,
    pub n_fast: u32,
    pub sample_rate: f64,
    pub scene_digest: [u8; 32],
}

impl IqFileHeader {
    pub fn for_frame(frame: &CpiFrame) -> Result<Self> {
        let dim = |v: usize| u32::try_from(v).map_err(|_| Error::Dimension(format!("{v} does not fit in u32")));
        Ok(Self {
            version: VERSION,
            sample_format: SampleFormat::C64,
            m_chirps: dim(frame.chirps())?,
            n_fast: dim(frame.samples())?,
            sample_rate: frame.sample_rate,
            scene_digest: frame.scene_digest,
        })
    }

    pub fn payload_len(&self) -> usize {
        self.m_chirps as usize * self.n_fast as usize * 8
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..8].copy_from_slice(&(self.sample_format as u16).to_le_bytes());
        b[8..12].copy_from_slice(&self.m_chirps.to_le_bytes());
        b[12..16].copy_from_slice(&self.n_fast.to_le_bytes());
        b[16..24].copy_from_slice(&self.sample_rate.to_le_bytes());
        b[24..56].copy_from_slice(&self.scene_digest);
        b
    }

    pub fn from_bytes(b: &[u8]) -> std::result::Result<Self, String> {
        if b.len() < HEADER_LEN {
            return Err(format!("header needs {HEADER_LEN} bytes, file has {}", b.len()));
        }
        if b[0..4] != MAGIC {
            return Err("bad magic, not a RANC capture".into());
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let format = u16::from_le_bytes([b[6], b[7]]);
        if format != SampleFormat::C64 as u16 {
            return Err(format!("unsupported sample format {format}"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let sample_rate = f64::from_le_bytes(b[16..24].try_into().unwrap());
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(format!("invalid sample rate {sample_rate}"));
        }
        Ok(Self {
            version,
            sample_format: SampleFormat::C64,
            m_chirps: u32_at(8),
            n_fast: u32_at(12),
            sample_rate,
            scene_digest: b[24..56].try_into().unwrap(),
        })
    }
}

pub fn encode_cpi(frame: &CpiFrame) -> Result<Vec<u8>> {
    let header = IqFileHeader::for_frame(frame)?;
    let mut out = Vec::with_capacity(HEADER_LEN + header.payload_len());
    out.extend_from_slice(&header.to_bytes());
    for z in frame.data.iter() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_cpi(bytes: &[u8]) -> std::result::Result<CpiFrame, String> {
    let header = IqFileHeader::from_bytes(bytes)?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != header.payload_len() {
        return Err(format!(
            "payload is {} bytes, header implies {} ({} x {} samples)",
            payload.len(),
            header.payload_len(),
            header.m_chirps,
            header.n_fast
        ));
    }
    let samples: Vec<Complex32> = payload
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes(c[0..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..8].try_into().unwrap()),
            )
        })
        .collect();
    let data = Array2::from_shape_vec((header.m_chirps as usize, header.n_fast as usize), samples)
        .map_err(|e| e.to_string())?;
    CpiFrame::new(data, header.sample_rate, header.scene_digest).map_err(|e| e.to_string())
}

pub fn write_cpi(frame: &CpiFrame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_cpi(frame)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_cpi(path: impl AsRef<Path>) -> Result<CpiFrame> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cpi(&bytes).map_err(|reason| Error::format(path, reason))
}

/// A real matrix with a labelled axis on each dimension. On disk the first
/// row is `corner, columns...` and every other row is `row_label, values...`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub corner: String,
    pub columns: Vec<f64>,
    pub row_labels: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(corner: impl Into<String>, columns: Vec<f64>, row_labels: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if row_labels.len() != rows.len() {
            return Err(Error::Dimension(format!(
                "{} row labels for {} rows",
                row_labels.len(),
                rows.len()
            )));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != columns.len()) {
            return Err(Error::Dimension(format!(
                "row of {} values under {} column labels",
                bad.len(),
                columns.len()
            )));
        }
        Ok(Self {
            corner: corner.into(),
            columns,
            row_labels,
            rows,
        })
    }

    pub fn from_matrix(corner: impl Into<String>, columns: Vec<f64>, row_labels: Vec<f64>, m: &Array2<f64>) -> Result<Self> {
        let rows = m.rows().into_iter().map(|r| r.to_vec()).collect();
        Self::new(corner, columns, row_labels, rows)
    }
}

/// Writes `table` as CSV. Numbers use Rust's shortest round-trip formatting,
/// which is locale independent.
pub fn export_csv(table: &CsvTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(BufWriter::new(file));
    let mut header = vec![table.corner.clone()];
    header.extend(table.columns.iter().map(f64::to_string));
    w.write_record(&header)?;
    for (label, row) in table.row_labels.iter().zip(&table.rows) {
        let mut rec = vec![label.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<CsvTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(file);
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::format(path, format!("'{s}' is not a number")))
    };
    let mut records = r.records();
    let header = records
        .next()
        .ok_or_else(|| Error::format(path, "empty file"))??;
    let corner = header.get(0).unwrap_or_default().to_string();
    let columns = header.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
    let mut row_labels = Vec::new();
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec?;
        let mut fields = rec.iter();
        row_labels.push(parse(fields.next().unwrap_or_default())?);
        rows.push(fields.map(parse).collect::<Result<Vec<_>>>()?);
    }
    CsvTable::new(corner, columns, row_labels, rows).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(m: usize, n: usize) -> CpiFrame {
        let data = Array2::from_shape_fn((m, n), |(i, j)| Complex32::new(i as f32 + 0.25, -(j as f32) * 1e-3));
        CpiFrame::new(data, 40e6, [7; 32]).unwrap()
    }

    #[test]
    fn header_layout() {
        let h = IqFileHeader::for_frame(&frame(2, 3)).unwrap();
        let b = h.to_bytes();
        assert_eq!(&b[0..4], b"RANC");
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(b[16..24].try_into().unwrap()), 40e6);
        assert_eq!(IqFileHeader::from_bytes(&b).unwrap(), h);
    }

    #[test]
    fn zero_frame_file_size() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.ranc");
        let f = CpiFrame::new(Array2::zeros((1, 4)), 1.0, [0; 32]).unwrap();
        write_cpi(&f, &p).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len() as usize, HEADER_LEN + 32);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.ranc");
        let f = frame(3, 8);
        write_cpi(&f, &p).unwrap();
        assert_eq!(read_cpi(&p).unwrap(), f);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode_cpi(&frame(2, 4)).unwrap();
        assert!(decode_cpi(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_cpi(&bytes[..20]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_cpi(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode_cpi(&bad).is_err());

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.ranc");
        std::fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        match read_cpi(&p) {
            Err(Error::Format { path, .. }) => assert_eq!(path, p),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_cpi(dir.path().join("missing.ranc")), Err(Error::Io { .. })));
    }

    #[test]
    fn identity_csv_text() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.csv");
        let t = CsvTable::new("bin", vec![0.0, 1.0], vec![0.0, 1.0], vec![vec![0.0, -300.0], vec![-300.0, 0.0]]).unwrap();
        export_csv(&t, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "bin,0,1\n0,0,-300\n1,-300,0\n");
        assert_eq!(read_csv(&p).unwrap(), t);
    }

    #[test]
    fn empty_matrix_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let t = CsvTable::new("range_m", vec![], vec![], vec![]).unwrap();
        export_csv(&t, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "range_m\n");
        assert_eq!(read_csv(&p).unwrap(), t);
    }

    #[test]
    fn ragged_tables_rejected() {
        assert!(CsvTable::new("x", vec![1.0], vec![0.0], vec![vec![1.0, 2.0]]).is_err());
        assert!(CsvTable::new("x", vec![1.0], vec![], vec![vec![1.0]]).is_err());
    }
}
