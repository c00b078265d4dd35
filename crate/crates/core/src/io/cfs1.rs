//! The CFS1 firing-stream format.
//!
//! Little endian throughout:
//!
//! ```text
//! "CFS1"  u32 rows  u32 firings_per_rotation
//! rows × f64 elevation   rows × f64 azimuth offset
//! per firing: u64 timestamp_ns, 9 × f64 rotation (row major),
//!             rows × (f32 x, f32 y, f32 z, f32 range, u8 valid)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::range_image::{Firing, FiringPoint, StreamHeader};

const MAGIC: &[u8; 4] = b"CFS1";

pub struct Cfs1Reader<R> {
    inner: R,
    header: StreamHeader,
    done: bool,
}

impl<R: Read> Cfs1Reader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        inner.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let rows = inner.read_u32::<LE>().map_err(truncated)? as usize;
        let n_firings = inner.read_u32::<LE>().map_err(truncated)?;
        if rows == 0 || rows > u16::MAX as usize {
            return Err(Error::Format(format!("unsupported row count {rows}")));
        }
        let mut table = |n| -> Result<Vec<f64>> {
            (0..n).map(|_| inner.read_f64::<LE>().map_err(truncated)).collect()
        };
        let elevations = table(rows)?;
        let azimuth_offsets = table(rows)?;
        let header = StreamHeader { rows, n_firings, elevations, azimuth_offsets };
        header.validate()?;
        Ok(Self { inner, header, done: false })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    fn read_firing(&mut self) -> Result<Option<Firing>> {
        let mut first = [0u8; 8];
        let mut filled = 0;
        while filled < 8 {
            match self.inner.read(&mut first[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => return Err(Error::Format("stream ends inside a firing".into())),
                Ok(n) => filled += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let timestamp_ns = u64::from_le_bytes(first);
        let r = &mut self.inner;
        let mut rotation = [[0.0; 3]; 3];
        for row in &mut rotation {
            for v in row.iter_mut() {
                *v = r.read_f64::<LE>().map_err(truncated)?;
            }
        }
        let mut points = Vec::with_capacity(self.header.rows);
        for _ in 0..self.header.rows {
            let x = r.read_f32::<LE>().map_err(truncated)?;
            let y = r.read_f32::<LE>().map_err(truncated)?;
            let z = r.read_f32::<LE>().map_err(truncated)?;
            let range = r.read_f32::<LE>().map_err(truncated)?;
            let valid = match r.read_u8().map_err(truncated)? {
                0 => false,
                1 => true,
                other => return Err(Error::Format(format!("valid flag {other} is not 0 or 1"))),
            };
            points.push(FiringPoint { sensor_xyz: [x, y, z], range, valid });
        }
        Ok(Some(Firing { timestamp_ns, rotation, points }))
    }
}

impl Cfs1Reader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> Iterator for Cfs1Reader<R> {
    type Item = Result<Firing>;

    fn next(&mut self) -> Option<Result<Firing>> {
        if self.done {
            return None;
        }
        let item = self.read_firing().transpose();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == ErrorKind::UnexpectedEof {
        Error::Format("unexpected end of stream".into())
    } else {
        Error::Io(e)
    }
}

pub struct Cfs1Writer<W: Write> {
    inner: W,
    rows: usize,
}

impl<W: Write> Cfs1Writer<W> {
    pub fn new(mut inner: W, header: &StreamHeader) -> Result<Self> {
        header.validate()?;
        inner.write_all(MAGIC)?;
        inner.write_u32::<LE>(header.rows as u32)?;
        inner.write_u32::<LE>(header.n_firings)?;
        for v in header.elevations.iter().chain(&header.azimuth_offsets) {
            inner.write_f64::<LE>(*v)?;
        }
        Ok(Self { inner, rows: header.rows })
    }

    pub fn write_firing(&mut self, firing: &Firing) -> Result<()> {
        if firing.points.len() != self.rows {
            return Err(Error::Format(format!(
                "firing has {} entries, expected {}",
                firing.points.len(),
                self.rows
            )));
        }
        let w = &mut self.inner;
        w.write_u64::<LE>(firing.timestamp_ns)?;
        for v in firing.rotation.iter().flatten() {
            w.write_f64::<LE>(*v)?;
        }
        for p in &firing.points {
            for v in p.sensor_xyz {
                w.write_f32::<LE>(v)?;
            }
            w.write_f32::<LE>(p.range)?;
            w.write_u8(p.valid as u8)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_stream(path: impl AsRef<Path>, header: &StreamHeader, firings: &[Firing]) -> Result<()> {
    let mut writer = Cfs1Writer::new(BufWriter::new(File::create(path)?), header)?;
    for f in firings {
        writer.write_firing(f)?;
    }
    writer.finish()?;
    Ok(())
}

pub fn read_stream(path: impl AsRef<Path>) -> Result<(StreamHeader, Vec<Firing>)> {
    let reader = Cfs1Reader::open(path)?;
    let header = reader.header().clone();
    let firings = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, firings))
}
