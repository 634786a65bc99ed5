use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::spec::ModelSpec;
use crate::autodiff::Tensor;
use crate::{Error, Result};

const FORMAT: &str = "wcnn-checkpoint-1";

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    spec: ModelSpec,
    params: Vec<Entry>,
}

/// Writes `manifest.json` plus one little-endian `f64` blob per parameter.
pub fn save_checkpoint(model: &Model, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut params = Vec::new();
    for (i, (p, name)) in model.params().iter().zip(model.param_names()).enumerate() {
        let file = format!("param{i:03}.f64");
        let bytes: Vec<u8> = p.value.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.join(&file), bytes)?;
        params.push(Entry {
            name: name.clone(),
            shape: p.value.shape().to_vec(),
            file,
        });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        spec: model.spec().clone(),
        params,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Model> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    if manifest.format != FORMAT {
        return Err(Error::Format(format!("unknown checkpoint format '{}'", manifest.format)));
    }
    let mut model = Model::build(&manifest.spec, 0)?;
    let mut values = Vec::with_capacity(manifest.params.len());
    for e in &manifest.params {
        let bytes = fs::read(dir.join(&e.file))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Format(format!("{}: length not a multiple of 8", e.file)));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        values.push(
            Tensor::new(e.shape.clone(), data)
                .map_err(|err| Error::Format(format!("{}: {err}", e.file)))?,
        );
    }
    model.replace_params(values)?;
    Ok(model)
}
