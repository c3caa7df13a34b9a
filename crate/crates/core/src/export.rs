//! Portable per-head export: a `manifest.json` plus raw little-endian `f32`
//! blobs in row-major order.
//!
//! Writers put every blob on disk before the manifest, so a directory without
//! a manifest is an incomplete export. Readers validate every referenced file
//! against the shape declared for it.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Component, Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{AttentionKind, AttentionMatrix, CopyKernel, TokenSequence};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Row tolerance for patterns read back from `f32` blobs.
pub const F32_PATTERN_ROW_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadShapes {
    pub scores: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<Vec<usize>>,
    pub kernel: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadEntry {
    pub layer: usize,
    pub head: usize,
    pub scores_file: String,
    /// Absent for heads without a softmax (linear attention).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern_file: Option<String>,
    pub kernel_file: String,
    pub shapes: HeadShapes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub format_version: u32,
    pub model_name: String,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_head: usize,
    pub prompt: Vec<u32>,
    pub extracted_at: String,
    pub heads: Vec<HeadEntry>,
}

/// Tensors of one head, in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadData {
    pub layer: usize,
    pub head: usize,
    pub scores: DMatrix<f64>,
    pub pattern: Option<DMatrix<f64>>,
    pub kernel: DMatrix<f64>,
}

impl HeadData {
    pub fn scores_matrix(&self) -> Result<AttentionMatrix> {
        AttentionMatrix::scores(self.scores.clone(), self.layer, self.head)
    }

    pub fn pattern_matrix(&self) -> Result<Option<AttentionMatrix>> {
        self.pattern
            .as_ref()
            .map(|p| {
                AttentionMatrix::new(
                    p.clone(),
                    AttentionKind::Pattern,
                    self.layer,
                    self.head,
                    F32_PATTERN_ROW_TOL,
                )
            })
            .transpose()
    }

    pub fn copy_kernel(&self) -> Result<CopyKernel> {
        CopyKernel::new(self.kernel.clone(), self.layer, self.head)
    }
}

/// A complete export held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Export {
    pub model_name: String,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_head: usize,
    pub prompt: TokenSequence,
    pub extracted_at: String,
    pub heads: Vec<HeadData>,
}

fn blob_name(layer: usize, head: usize, what: &str) -> String {
    format!("L{layer}H{head}_{what}.f32")
}

pub fn write_blob(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(m.len() * 4);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            bytes.extend_from_slice(&(m[(r, c)] as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_blob(path: &Path, shape: &[usize]) -> Result<DMatrix<f64>> {
    let [rows, cols] = shape else {
        return Err(Error::Data(format!(
            "{}: expected a 2-d shape, got {shape:?}",
            path.display()
        )));
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = 4 * rows * cols;
    if bytes.len() != expected {
        return Err(Error::Data(format!(
            "{}: {} bytes, shape {shape:?} needs {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64);
    Ok(DMatrix::from_row_iterator(*rows, *cols, values))
}

fn shape_of(m: &DMatrix<f64>) -> Vec<usize> {
    vec![m.nrows(), m.ncols()]
}

/// Write blobs, then the manifest. Overwrites an existing export in `dir`.
pub fn write_export(dir: &Path, export: &Export) -> Result<ExportManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    }
    let mut entries = Vec::with_capacity(export.heads.len());
    for h in &export.heads {
        let scores_file = blob_name(h.layer, h.head, "scores");
        let kernel_file = blob_name(h.layer, h.head, "kernel");
        write_blob(&dir.join(&scores_file), &h.scores)?;
        write_blob(&dir.join(&kernel_file), &h.kernel)?;
        let pattern_file = match &h.pattern {
            Some(p) => {
                let name = blob_name(h.layer, h.head, "pattern");
                write_blob(&dir.join(&name), p)?;
                Some(name)
            }
            None => None,
        };
        entries.push(HeadEntry {
            layer: h.layer,
            head: h.head,
            scores_file,
            pattern_file,
            kernel_file,
            shapes: HeadShapes {
                scores: shape_of(&h.scores),
                pattern: h.pattern.as_ref().map(shape_of),
                kernel: shape_of(&h.kernel),
            },
        });
    }
    let manifest = ExportManifest {
        format_version: FORMAT_VERSION,
        model_name: export.model_name.clone(),
        n_layers: export.n_layers,
        n_heads: export.n_heads,
        d_head: export.d_head,
        prompt: export.prompt.tokens().to_vec(),
        extracted_at: export.extracted_at.clone(),
        heads: entries,
    };
    validate_manifest(&manifest)?;
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<ExportManifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::Data(format!(
            "{}: no {MANIFEST_FILE} (missing or incomplete export)",
            dir.display()
        )));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: ExportManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    validate_manifest(&manifest)?;
    Ok(manifest)
}

fn check_relative(name: &str) -> Result<()> {
    let p = Path::new(name);
    if name.is_empty() || !p.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(Error::Data(format!("blob path `{name}` must be relative, without `..`")));
    }
    Ok(())
}

/// Structural checks that need no file access.
pub fn validate_manifest(m: &ExportManifest) -> Result<()> {
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Data(format!(
            "format_version {} unsupported (expected {FORMAT_VERSION})",
            m.format_version
        )));
    }
    let t = m.prompt.len();
    if t < 3 || t.is_multiple_of(2) {
        return Err(Error::Data(format!("prompt length {t} is not 2N+1")));
    }
    if m.heads.is_empty() {
        return Err(Error::Data("manifest lists no heads".into()));
    }
    let mut seen = BTreeSet::new();
    for h in &m.heads {
        let id = format!("L{}H{}", h.layer, h.head);
        if h.layer >= m.n_layers || h.head >= m.n_heads {
            return Err(Error::Data(format!(
                "{id} outside {} layers x {} heads",
                m.n_layers, m.n_heads
            )));
        }
        if !seen.insert((h.layer, h.head)) {
            return Err(Error::Data(format!("{id} listed twice")));
        }
        check_relative(&h.scores_file)?;
        check_relative(&h.kernel_file)?;
        if h.shapes.scores != [t, t] {
            return Err(Error::Data(format!(
                "{id}: scores shape {:?}, prompt needs [{t}, {t}]",
                h.shapes.scores
            )));
        }
        if h.shapes.kernel.len() != 2 || h.shapes.kernel[0] != h.shapes.kernel[1] {
            return Err(Error::Data(format!("{id}: kernel shape {:?} is not square", h.shapes.kernel)));
        }
        match (&h.pattern_file, &h.shapes.pattern) {
            (None, None) => {}
            (Some(f), Some(shape)) => {
                check_relative(f)?;
                if shape != &[t, t] {
                    return Err(Error::Data(format!("{id}: pattern shape {shape:?}, prompt needs [{t}, {t}]")));
                }
            }
            (Some(_), None) => return Err(Error::Data(format!("{id}: missing field `shapes.pattern`"))),
            (None, Some(_)) => return Err(Error::Data(format!("{id}: missing field `pattern_file`"))),
        }
    }
    Ok(())
}

/// Read and validate a complete export directory.
pub fn read_export(dir: &Path) -> Result<Export> {
    let m = read_manifest(dir)?;
    let resolve = |name: &str| -> PathBuf { dir.join(name) };
    let mut heads = Vec::with_capacity(m.heads.len());
    for h in &m.heads {
        let scores = read_blob(&resolve(&h.scores_file), &h.shapes.scores)?;
        let kernel = read_blob(&resolve(&h.kernel_file), &h.shapes.kernel)?;
        let pattern = match (&h.pattern_file, &h.shapes.pattern) {
            (Some(f), Some(shape)) => Some(read_blob(&resolve(f), shape)?),
            _ => None,
        };
        let data = HeadData {
            layer: h.layer,
            head: h.head,
            scores,
            pattern,
            kernel,
        };
        data.scores_matrix()?;
        data.pattern_matrix()?;
        data.copy_kernel()?;
        heads.push(data);
    }
    heads.sort_by_key(|h| (h.layer, h.head));
    Ok(Export {
        model_name: m.model_name,
        n_layers: m.n_layers,
        n_heads: m.n_heads,
        d_head: m.d_head,
        prompt: TokenSequence::new(m.prompt)?,
        extracted_at: m.extracted_at,
        heads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Export {
        let t = 5;
        let scores = DMatrix::from_fn(t, t, |r, c| if c <= r { (r * 7 + c) as f64 * 0.25 - 1.0 } else { 0.0 });
        let pattern = DMatrix::from_fn(t, t, |r, c| if c <= r { 1.0 / (r + 1) as f64 } else { 0.0 });
        Export {
            model_name: "unit".into(),
            n_layers: 1,
            n_heads: 2,
            d_head: 3,
            prompt: TokenSequence::new(vec![9, 1, 2, 1, 2]).unwrap(),
            extracted_at: "1970-01-01T00:00:00Z".into(),
            heads: vec![
                HeadData {
                    layer: 0,
                    head: 0,
                    scores: scores.clone(),
                    pattern: Some(pattern),
                    kernel: DMatrix::identity(3, 3),
                },
                HeadData {
                    layer: 0,
                    head: 1,
                    scores,
                    pattern: None,
                    kernel: DMatrix::from_element(3, 3, 0.5),
                },
            ],
        }
    }

    #[test]
    fn round_trip_is_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let e = sample();
        write_export(dir.path(), &e).unwrap();
        let back = read_export(dir.path()).unwrap();
        assert_eq!(back.heads[0].scores, e.heads[0].scores);
        assert_eq!(back.heads[1].kernel, e.heads[1].kernel);
        assert!(back.heads[1].pattern.is_none());
        let p0 = back.heads[0].pattern.as_ref().unwrap();
        let want = e.heads[0].pattern.as_ref().unwrap();
        assert!((p0 - want).amax() < 1e-7);
    }

    #[test]
    fn blob_length_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_export(dir.path(), &sample()).unwrap();
        fs::write(dir.path().join("L0H1_kernel.f32"), [0u8; 12]).unwrap();
        let err = read_export(dir.path()).unwrap_err().to_string();
        assert!(err.contains("L0H1_kernel"), "{err}");
    }

    #[test]
    fn missing_manifest_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_export(dir.path()).unwrap_err().to_string().contains("manifest"));
    }

    #[test]
    fn missing_field_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write_export(dir.path(), &sample()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("d_head");
        fs::write(&path, v.to_string()).unwrap();
        assert!(read_export(dir.path()).unwrap_err().to_string().contains("d_head"));
    }

    #[test]
    fn escaping_paths_rejected() {
        let mut m = write_export(tempfile::tempdir().unwrap().path(), &sample()).unwrap();
        m.heads[0].kernel_file = "../x.f32".into();
        assert!(validate_manifest(&m).is_err());
    }
}
