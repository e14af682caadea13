use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::render::DepthImage;
use crate::error::{Error, Result};

/// Writes a 16-bit binary portable graymap (max value 65535, big-endian).
pub fn write_pgm16(img: &DepthImage, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "P5\n{} {}\n65535\n", img.width(), img.height())?;
    for &v in img.values() {
        let q = (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16;
        out.write_all(&q.to_be_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_pgm16(path: impl AsRef<Path>) -> Result<DepthImage> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("pgm", "truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(Error::format("pgm", "expected a 16-bit P5 graymap"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::format("pgm", format!("bad dimension `{s}`")));
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let data = &bytes[pos.min(bytes.len())..];
    if data.len() != 2 * w * h {
        return Err(Error::format("pgm", "pixel data length mismatch"));
    }
    let values = data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 / 65535.0)
        .collect();
    DepthImage::new(w, h, values)
}

/// One control step of a trajectory log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: u32,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub omega: f64,
    pub reward: f64,
    pub backward: bool,
    pub collided: bool,
    pub success: bool,
    pub ped_collision: bool,
    pub timeout: bool,
}

#[derive(Clone, Debug, Default)]
pub struct TrajectoryLog {
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryLog {
    pub fn push(&mut self, row: TrajectoryRow) {
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<TrajectoryRow>, _>>()?;
        Ok(TrajectoryLog { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pgm");
        let values: Vec<f32> = (0..12).map(|i| i as f32 / 11.0).collect();
        let img = DepthImage::new(4, 3, values).unwrap();
        write_pgm16(&img, &path).unwrap();
        let back = read_pgm16(&path).unwrap();
        assert_eq!((back.width(), back.height()), (4, 3));
        for (a, b) in img.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-7);
        }
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut log = TrajectoryLog::default();
        log.push(TrajectoryRow {
            step: 1,
            x: 1.5,
            y: -0.25,
            heading: 0.1,
            v: 0.5,
            omega: 0.0,
            reward: 0.048,
            backward: false,
            collided: true,
            success: false,
            ped_collision: false,
            timeout: false,
        });
        log.write_csv(&path).unwrap();
        assert_eq!(TrajectoryLog::read_csv(&path).unwrap().rows, log.rows);
    }
}
