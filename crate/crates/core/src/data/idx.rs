use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Split};
use crate::autodiff::Tensor;
use crate::{Error, Result};

const UBYTE: u8 = 0x08;
const DOUBLE: u8 = 0x0E;

struct IdxArray {
    dtype: u8,
    dims: Vec<usize>,
    payload: Vec<u8>,
}

fn parse_idx(bytes: &[u8], what: &str) -> Result<IdxArray> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format(format!("{what}: missing IDX magic")));
    }
    let dtype = bytes[2];
    let rank = bytes[3] as usize;
    if !(dtype == UBYTE || dtype == DOUBLE) || rank == 0 {
        return Err(Error::Format(format!(
            "{what}: unsupported IDX magic 0x0000{dtype:02X}{rank:02X}"
        )));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::Format(format!("{what}: truncated IDX header")));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|d| {
            let o = 4 + 4 * d;
            u32::from_be_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize
        })
        .collect();
    let width = if dtype == DOUBLE { 8 } else { 1 };
    let expected = dims.iter().product::<usize>() * width;
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "{what}: header promises {expected} payload bytes, file has {}",
            payload.len()
        )));
    }
    Ok(IdxArray {
        dtype,
        dims,
        payload: payload.to_vec(),
    })
}

impl IdxArray {
    /// Bytes scale by `1/255`; doubles pass through unchanged.
    fn values(&self) -> Vec<f64> {
        match self.dtype {
            UBYTE => self.payload.iter().map(|&b| f64::from(b) / 255.0).collect(),
            _ => self
                .payload
                .chunks_exact(8)
                .map(|c| f64::from_be_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Reads an IDX image file (`[n,h,w]` or `[n,c,h,w]`, bytes or doubles) and
/// an IDX byte label file.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let images = parse_idx(&read(images_path)?, &images_path.display().to_string())?;
    let labels = parse_idx(&read(labels_path)?, &labels_path.display().to_string())?;
    if labels.dtype != UBYTE || labels.dims.len() != 1 {
        return Err(Error::Format(format!(
            "{}: labels need IDX magic 0x00000801",
            labels_path.display()
        )));
    }
    let shape = match images.dims.as_slice() {
        &[n, h, w] => vec![n, 1, h, w],
        &[n, c, h, w] => vec![n, c, h, w],
        other => {
            return Err(Error::Format(format!(
                "{}: images need 3 or 4 dimensions, got {}",
                images_path.display(),
                other.len()
            )))
        }
    };
    if shape[0] != labels.dims[0] {
        return Err(Error::Data(format!(
            "{} images but {} labels",
            shape[0], labels.dims[0]
        )));
    }
    if shape[0] == 0 {
        return Err(Error::Data("IDX file holds no samples".into()));
    }
    let y: Vec<usize> = labels.payload.iter().map(|&b| b as usize).collect();
    let n_classes = y.iter().max().map_or(2, |m| (m + 1).max(2));
    let provenance = images_path
        .file_name()
        .map_or_else(|| "idx".to_string(), |f| f.to_string_lossy().into_owned());
    Dataset::new(Tensor::new(shape, images.values())?, y, n_classes, split, provenance)
}

/// Reads CIFAR binary batches: records of one label byte followed by 3072
/// channel-major pixel bytes, giving `[n, 3, 32, 32]` in `[0, 1]`.
pub fn load_cifar_bin(paths: &[&Path], split: Split) -> Result<Dataset> {
    const RECORD: usize = 1 + 3 * 32 * 32;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for path in paths {
        let bytes = read(path)?;
        if bytes.is_empty() || bytes.len() % RECORD != 0 {
            return Err(Error::Format(format!(
                "{}: {} bytes is not a whole number of {RECORD}-byte records",
                path.display(),
                bytes.len()
            )));
        }
        for rec in bytes.chunks_exact(RECORD) {
            y.push(rec[0] as usize);
            x.extend(rec[1..].iter().map(|&b| f64::from(b) / 255.0));
        }
    }
    if y.is_empty() {
        return Err(Error::Data("no CIFAR batches given".into()));
    }
    let n = y.len();
    Dataset::new(Tensor::new(vec![n, 3, 32, 32], x)?, y, 10, split, "cifar-binary")
}

#[derive(Serialize, Deserialize)]
struct DatasetMeta {
    n_classes: usize,
    split: Split,
    provenance: String,
}

fn idx_header(dtype: u8, dims: &[usize]) -> Result<Vec<u8>> {
    let mut out = vec![0, 0, dtype, dims.len() as u8];
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Capacity(format!("dimension {d} exceeds IDX range")))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    Ok(out)
}

/// Writes `{stem}-images.idx` (doubles), `{stem}-labels.idx` and
/// `{stem}.json` into `dir`.
pub fn save_dataset(dataset: &Dataset, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut images = idx_header(DOUBLE, dataset.images().shape())?;
    images.reserve(dataset.images().len() * 8);
    for v in dataset.images().data() {
        images.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(dir.join(format!("{stem}-images.idx")), images)?;
    let mut labels = idx_header(UBYTE, &[dataset.len()])?;
    for &l in dataset.labels() {
        let b = u8::try_from(l).map_err(|_| Error::Capacity(format!("label {l} exceeds a byte")))?;
        labels.push(b);
    }
    fs::write(dir.join(format!("{stem}-labels.idx")), labels)?;
    let meta = DatasetMeta {
        n_classes: dataset.n_classes(),
        split: dataset.split(),
        provenance: dataset.provenance().to_string(),
    };
    let mut f = fs::File::create(dir.join(format!("{stem}.json")))?;
    serde_json::to_writer_pretty(&mut f, &meta)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn load_dataset(dir: &Path, stem: &str) -> Result<Dataset> {
    let meta: DatasetMeta = serde_json::from_slice(&read(&dir.join(format!("{stem}.json")))?)?;
    let loaded = load_idx(
        &dir.join(format!("{stem}-images.idx")),
        &dir.join(format!("{stem}-labels.idx")),
        meta.split,
    )?;
    Dataset::new(
        loaded.images().clone(),
        loaded.labels().to_vec(),
        meta.n_classes,
        meta.split,
        meta.provenance,
    )
}
