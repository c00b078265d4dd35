//! Per-point label tables: packed little-endian `{u64 point_id, u32 label}` records.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

/// point_id → label. Ground truth uses instance ids (0 = ground or none);
/// predictions use cluster ids (0 = unclustered).
pub type LabelTable = BTreeMap<u64, u32>;

pub fn encode_labels(table: &LabelTable, mut out: impl Write) -> Result<()> {
    for (&id, &label) in table {
        out.write_u64::<LE>(id)?;
        out.write_u32::<LE>(label)?;
    }
    Ok(())
}

pub fn decode_labels(mut input: impl Read) -> Result<LabelTable> {
    let mut table = LabelTable::new();
    loop {
        let id = match input.read_u64::<LE>() {
            Ok(id) => id,
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(table),
            Err(e) => return Err(e.into()),
        };
        let label = input.read_u32::<LE>().map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => Error::Format("label table ends inside a record".into()),
            _ => Error::Io(e),
        })?;
        if table.insert(id, label).is_some() {
            return Err(Error::Format(format!("point {id} labeled twice")));
        }
    }
}

pub fn write_labels(path: impl AsRef<Path>, table: &LabelTable) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    encode_labels(table, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelTable> {
    decode_labels(BufReader::new(File::open(path)?))
}
