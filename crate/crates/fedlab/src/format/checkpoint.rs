use std::path::Path;

use fedlab_core::nn::{
    concat_encoders, ConcatModel, Encoder, FeatureExtractor, Layer, ModelParams,
};
use fedlab_core::Matrix;
use serde::{Deserialize, Serialize};

use super::{read_file, write_atomic, Cursor};
use crate::error::{FormatError, Result, RunError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FCK1";

/// `FCK1`, u32 dim count, u32 layer dims, then per layer the `in × out`
/// weight matrix row-major followed by the bias, all f64.
pub fn write_model(layers: &[Layer]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let mut dims = vec![layers.first().map_or(0, Layer::inputs)];
    dims.extend(layers.iter().map(Layer::outputs));
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for l in layers {
        for v in l.weights.as_slice().iter().chain(&l.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_model(bytes: &[u8]) -> Result<ModelParams, FormatError> {
    let mut c = Cursor::new(bytes);
    c.magic(CHECKPOINT_MAGIC)?;
    let at = c.pos;
    let count = c.u32("dim count")? as usize;
    if count < 2 {
        return Err(FormatError {
            offset: at,
            what: format!("{count} layer dims describe no layer"),
        });
    }
    let mut dims = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let at = c.pos;
        let d = c.u32("layer dims")? as usize;
        if d == 0 {
            return Err(FormatError {
                offset: at,
                what: "layer width 0".into(),
            });
        }
        dims.push(d);
    }
    let mut layers = Vec::with_capacity(count - 1);
    for w in dims.windows(2) {
        let weights = c.f64s(w[0] * w[1], "weights")?;
        let bias = c.f64s(w[1], "bias")?;
        layers.push(
            Layer::new(Matrix::from_vec(w[0], w[1], weights), bias).expect("shapes follow dims"),
        );
    }
    c.finish()?;
    Ok(ModelParams::from_layers(layers).expect("layers chain by construction"))
}

fn format_err(path: &Path, source: FormatError) -> RunError {
    RunError::Format {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_model(model: &ModelParams, path: &Path) -> Result<()> {
    write_atomic(path, &write_model(model.layers()))
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    read_model(&read_file(path)?).map_err(|e| format_err(path, e))
}

/// Index of a saved concatenated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcatManifest {
    pub format: String,
    /// Client ids per cluster, in encoder order.
    pub clusters: Vec<Vec<usize>>,
    pub encoders: Vec<String>,
    /// Column range of each encoder's block in the concatenated features.
    pub feature_blocks: Vec<[usize; 2]>,
    pub classifier: String,
}

/// Writes `encoder_<k>.fck` per cluster, `classifier.fck` and
/// `manifest.json` into `dir`.
pub fn save_concat_model(
    model: &ConcatModel,
    clusters: &[Vec<usize>],
    dir: &Path,
) -> Result<ConcatManifest> {
    let members = model.encoder.members();
    let mut manifest = ConcatManifest {
        format: "FCK1".into(),
        clusters: clusters.to_vec(),
        encoders: Vec::with_capacity(members.len()),
        feature_blocks: Vec::with_capacity(members.len()),
        classifier: "classifier.fck".into(),
    };
    for (k, e) in members.iter().enumerate() {
        let name = format!("encoder_{k}.fck");
        write_atomic(&dir.join(&name), &write_model(e.layers()))?;
        let block = model.encoder.block(k);
        manifest.encoders.push(name);
        manifest.feature_blocks.push([block.start, block.end]);
    }
    write_atomic(
        &dir.join(&manifest.classifier),
        &write_model(std::slice::from_ref(&model.classifier)),
    )?;
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| RunError::Other(e.to_string()))?;
    write_atomic(&dir.join("manifest.json"), &json)?;
    Ok(manifest)
}

pub fn load_concat_model(dir: &Path) -> Result<(ConcatModel, ConcatManifest)> {
    let path = dir.join("manifest.json");
    let manifest: ConcatManifest = serde_json::from_slice(&read_file(&path)?)
        .map_err(|e| RunError::Other(format!("{}: {e}", path.display())))?;
    let mut encoders = Vec::with_capacity(manifest.encoders.len());
    for name in &manifest.encoders {
        let m = load_model(&dir.join(name))?;
        encoders.push(Encoder::from_layers(m.input_dim(), m.layers().to_vec())?);
    }
    let classifier = load_model(&dir.join(&manifest.classifier))?.split().1;
    let encoder = concat_encoders(&encoders)?;
    if encoder.feature_dim() != classifier.inputs() {
        return Err(RunError::Other(format!(
            "{}: classifier expects {} features, encoders give {}",
            dir.display(),
            classifier.inputs(),
            encoder.feature_dim()
        )));
    }
    Ok((ConcatModel::new(encoder, classifier)?, manifest))
}
