use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Binary spike matrix, `units × ticks`, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeRaster {
    n_units: usize,
    n_ticks: usize,
    spikes: Vec<u8>,
    tick_rate_hz: ordered::Rate,
}

mod ordered {
    use serde::{Deserialize, Serialize};

    /// `f64` with bitwise equality so rasters can derive `Eq`.
    #[derive(Debug, Clone, Copy, Serialize, Deserialize)]
    #[serde(transparent)]
    pub struct Rate(pub f64);

    impl PartialEq for Rate {
        fn eq(&self, other: &Self) -> bool {
            self.0.to_bits() == other.0.to_bits()
        }
    }
    impl Eq for Rate {}
}

impl SpikeRaster {
    pub fn zeros(n_units: usize, n_ticks: usize, tick_rate_hz: f64) -> Self {
        SpikeRaster {
            n_units,
            n_ticks,
            spikes: vec![0; n_units * n_ticks],
            tick_rate_hz: ordered::Rate(tick_rate_hz),
        }
    }

    /// Builds a raster from per-unit rows of 0/1 values.
    pub fn from_rows(rows: &[Vec<u8>], tick_rate_hz: f64) -> Result<Self> {
        let n_ticks = rows.first().map_or(0, Vec::len);
        let mut r = SpikeRaster::zeros(rows.len(), n_ticks, tick_rate_hz);
        for (u, row) in rows.iter().enumerate() {
            if row.len() != n_ticks {
                return Err(Error::ShapeMismatch(format!(
                    "unit {u} has {} ticks, expected {n_ticks}",
                    row.len()
                )));
            }
            if let Some(t) = row.iter().position(|&v| v > 1) {
                return Err(Error::param(
                    "spikes",
                    format!("non-binary value at unit {u}, tick {t}"),
                ));
            }
            r.row_mut(u).copy_from_slice(row);
        }
        Ok(r)
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_ticks(&self) -> usize {
        self.n_ticks
    }

    pub fn tick_rate_hz(&self) -> f64 {
        self.tick_rate_hz.0
    }

    #[inline]
    pub fn get(&self, unit: usize, tick: usize) -> bool {
        self.spikes[unit * self.n_ticks + tick] != 0
    }

    #[inline]
    pub fn set(&mut self, unit: usize, tick: usize, spike: bool) {
        self.spikes[unit * self.n_ticks + tick] = spike as u8;
    }

    pub fn row(&self, unit: usize) -> &[u8] {
        &self.spikes[unit * self.n_ticks..(unit + 1) * self.n_ticks]
    }

    pub fn row_mut(&mut self, unit: usize) -> &mut [u8] {
        &mut self.spikes[unit * self.n_ticks..(unit + 1) * self.n_ticks]
    }

    pub fn total_spikes(&self) -> usize {
        self.spikes.iter().map(|&s| s as usize).sum()
    }

    pub fn density(&self) -> f64 {
        if self.spikes.is_empty() {
            0.0
        } else {
            self.total_spikes() as f64 / self.spikes.len() as f64
        }
    }

    /// Keeps the listed units, in the given order.
    pub fn select_units(&self, units: &[usize]) -> SpikeRaster {
        let mut out = SpikeRaster::zeros(units.len(), self.n_ticks, self.tick_rate_hz());
        for (i, &u) in units.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.row(u));
        }
        out
    }

    /// For each tick, the units that spiked.
    pub fn active_by_tick(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.n_ticks];
        for u in 0..self.n_units {
            for (t, &s) in self.row(u).iter().enumerate() {
                if s != 0 {
                    out[t].push(u as u32);
                }
            }
        }
        out
    }

    pub fn hamming_distance(&self, other: &SpikeRaster) -> Result<usize> {
        if self.n_units != other.n_units || self.n_ticks != other.n_ticks {
            return Err(Error::ShapeMismatch("rasters differ in shape".into()));
        }
        Ok(self
            .spikes
            .iter()
            .zip(&other.spikes)
            .filter(|(a, b)| a != b)
            .count())
    }

    /// Sparse `unit,tick` CSV with one line per spike.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "unit,tick").map_err(io)?;
        for u in 0..self.n_units {
            for (t, &s) in self.row(u).iter().enumerate() {
                if s != 0 {
                    writeln!(w, "{u},{t}").map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)
    }

    /// Reads the sparse CSV back; the shape is not stored in the file.
    pub fn read_csv(
        path: &Path,
        n_units: usize,
        n_ticks: usize,
        tick_rate_hz: f64,
    ) -> Result<Self> {
        let mut reader =
            csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let mut r = SpikeRaster::zeros(n_units, n_ticks, tick_rate_hz);
        for rec in reader.deserialize::<(usize, usize)>() {
            let (u, t) = rec.map_err(|e| Error::format(path, e.to_string()))?;
            if u >= n_units || t >= n_ticks {
                return Err(Error::format(
                    path,
                    format!("spike ({u},{t}) outside {n_units}x{n_ticks}"),
                ));
            }
            r.set(u, t, true);
        }
        Ok(r)
    }
}

const SET_MAGIC: &[u8; 8] = b"SRRAST01";

#[derive(Serialize, Deserialize)]
struct RasterSetHeader {
    n_rasters: usize,
    n_units: usize,
    n_ticks: usize,
    tick_rate_hz: f64,
    labels: Vec<u32>,
}

/// Writes same-shape labelled rasters as magic, `u64` LE header length, JSON
/// header, then every raster's spikes packed eight to a byte (LSB first).
pub fn write_raster_set(path: &Path, rasters: &[SpikeRaster], labels: &[u32]) -> Result<()> {
    if rasters.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rasters but {} labels",
            rasters.len(),
            labels.len()
        )));
    }
    let (n_units, n_ticks, rate) = rasters
        .first()
        .map_or((0, 0, 0.0), |r| (r.n_units, r.n_ticks, r.tick_rate_hz()));
    if rasters
        .iter()
        .any(|r| r.n_units != n_units || r.n_ticks != n_ticks)
    {
        return Err(Error::ShapeMismatch("rasters differ in shape".into()));
    }
    let header = serde_json::to_vec(&RasterSetHeader {
        n_rasters: rasters.len(),
        n_units,
        n_ticks,
        tick_rate_hz: rate,
        labels: labels.to_vec(),
    })?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(SET_MAGIC).map_err(io)?;
    w.write_all(&(header.len() as u64).to_le_bytes())
        .map_err(io)?;
    w.write_all(&header).map_err(io)?;
    for r in rasters {
        let packed: Vec<u8> = r
            .spikes
            .chunks(8)
            .map(|c| {
                c.iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | (b << i))
            })
            .collect();
        w.write_all(&packed).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_raster_set(path: &Path) -> Result<(Vec<SpikeRaster>, Vec<u32>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != SET_MAGIC {
        return Err(Error::format(path, "not a raster set (bad magic)"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..16 + len)
        .ok_or_else(|| Error::format(path, "truncated header"))?;
    let h: RasterSetHeader =
        serde_json::from_slice(body).map_err(|e| Error::format(path, format!("header: {e}")))?;
    let cells = h.n_units * h.n_ticks;
    let per = cells.div_ceil(8);
    let data = &bytes[16 + len..];
    if data.len() != per * h.n_rasters || h.labels.len() != h.n_rasters {
        return Err(Error::format(
            path,
            "spike data length does not match the header",
        ));
    }
    let rasters = data
        .chunks(per.max(1))
        .take(h.n_rasters)
        .map(|packed| {
            let mut r = SpikeRaster::zeros(h.n_units, h.n_ticks, h.tick_rate_hz);
            for (i, s) in r.spikes.iter_mut().enumerate() {
                *s = (packed[i / 8] >> (i % 8)) & 1;
            }
            r
        })
        .collect();
    Ok((rasters, h.labels))
}
