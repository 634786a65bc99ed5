use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Header of a serialized layer of angle banks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankHeader {
    #[serde(rename = "N")]
    pub n_angles: usize,
    pub r: usize,
    pub fan_in: usize,
    pub fan_out: usize,
    pub seed: u64,
}

/// Writes a single-line JSON header, a newline, then `fan_out × N`
/// little-endian `f64` angles.
pub fn write_banks<W: Write>(mut out: W, header: &BankHeader, angles: &[f64]) -> Result<()> {
    if angles.len() != header.fan_out * header.n_angles {
        return Err(Error::Dimension(format!(
            "{} angles for {} banks of {}",
            angles.len(),
            header.fan_out,
            header.n_angles
        )));
    }
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for a in angles {
        out.write_all(&a.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_banks<R: BufRead>(mut input: R) -> Result<(BankHeader, Vec<f64>)> {
    let mut line = Vec::new();
    input.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("bank file header is not newline-terminated".into()));
    }
    let header: BankHeader = serde_json::from_slice(&line[..line.len() - 1])
        .map_err(|e| Error::Format(format!("bad bank header: {e}")))?;
    let n = header.fan_out * header.n_angles;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != n * 8 {
        return Err(Error::Format(format!(
            "expected {} bytes of angles, found {}",
            n * 8,
            bytes.len()
        )));
    }
    let angles = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, angles))
}
