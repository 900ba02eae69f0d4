use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::draw::{render_task_image, DrawError};
use super::TaskInstance;
use crate::batch::par_map;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub instances: Vec<TaskInstance>,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("manifest is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported manifest schema version {0} (expected {SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("duplicate instance id {0}")]
    DuplicateId(String),
    #[error("instance {0}: truth payload does not match its kind")]
    Inconsistent(String),
    #[error("referenced image {0} does not exist")]
    MissingFile(String),
    #[error(transparent)]
    Draw(#[from] DrawError),
}

impl ManifestError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        ManifestError::Io { path: path.display().to_string(), source }
    }
}

impl Manifest {
    pub fn new(instances: Vec<TaskInstance>) -> Self {
        Self { schema_version: SCHEMA_VERSION, instances }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Checks schema version, id uniqueness and kind/truth agreement.
    pub fn check(&self) -> Result<(), ManifestError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ManifestError::SchemaVersion(self.schema_version));
        }
        let mut ids = HashSet::new();
        for inst in &self.instances {
            if !ids.insert(inst.id.as_str()) {
                return Err(ManifestError::DuplicateId(inst.id.clone()));
            }
            if !inst.is_consistent() {
                return Err(ManifestError::Inconsistent(inst.id.clone()));
            }
        }
        Ok(())
    }
}

/// Reads and checks a manifest; every referenced image must exist
/// relative to the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|e| ManifestError::io(path, e))?;
    let version: serde_json::Value = serde_json::from_str(&text)?;
    if let Some(v) = version.get("schema_version").and_then(|v| v.as_u64()) {
        if v != SCHEMA_VERSION as u64 {
            return Err(ManifestError::SchemaVersion(v as u32));
        }
    }
    let m: Manifest = serde_json::from_value(version)?;
    m.check()?;
    let dir = path.parent().unwrap_or(Path::new("."));
    for inst in &m.instances {
        if !inst.image.path.is_empty() && !dir.join(&inst.image.path).is_file() {
            return Err(ManifestError::MissingFile(inst.image.path.clone()));
        }
    }
    Ok(m)
}

pub fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

/// Renders every instance to `dir/images/<id>.png` and writes
/// `dir/manifest.json`. Returns the manifest and its SHA-256.
pub fn write_dataset(dir: &Path, instances: Vec<TaskInstance>) -> Result<(Manifest, String), ManifestError> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| ManifestError::io(&images, e))?;
    let rendered = par_map(&instances, |inst| -> Result<TaskInstance, ManifestError> {
        let img = render_task_image(inst, Some(dir))?;
        let rel = format!("images/{}.png", inst.id);
        let png = img.to_png().map_err(DrawError::from)?;
        let out = dir.join(&rel);
        std::fs::write(&out, png).map_err(|e| ManifestError::io(&out, e))?;
        let mut inst = inst.clone();
        inst.image.path = rel;
        inst.image.width = img.width();
        inst.image.height = img.height();
        Ok(inst)
    });
    let m = Manifest::new(rendered.into_iter().collect::<Result<_, _>>()?);
    m.check()?;
    let json = m.to_json();
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, &json).map_err(|e| ManifestError::io(&path, e))?;
    let hash = crate::render::raster::hex(&Sha256::digest(json.as_bytes()));
    Ok((m, hash))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::{GroundTruth, ImageRef, TaskKind};
    use crate::geom::PixelRect;

    fn counting(id: &str, path: &str) -> TaskInstance {
        TaskInstance {
            id: id.into(),
            kind: TaskKind::Counting,
            image: ImageRef { path: path.into(), width: 4, height: 4 },
            question: "How many cats?".into(),
            answer: Some("1".into()),
            truth: GroundTruth::Count { object: "cats".into(), boxes: vec![PixelRect::new(0.0, 0.0, 2.0, 2.0)] },
        }
    }

    fn tmpdir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("strokelab-manifest-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn loads_counting_items() {
        let d = tmpdir("ok");
        let png = crate::render::RasterImage::new(4, 4, crate::color::Rgb::WHITE).to_png().unwrap();
        std::fs::write(d.join("a.png"), &png).unwrap();
        std::fs::write(d.join("b.png"), &png).unwrap();
        let m = Manifest::new(vec![counting("a", "a.png"), counting("b", "b.png")]);
        std::fs::write(d.join(MANIFEST_FILE), m.to_json()).unwrap();
        let loaded = load_manifest(&d.join(MANIFEST_FILE)).unwrap();
        assert_eq!(loaded.instances.len(), 2);
        assert!(matches!(loaded.instances[0].truth, GroundTruth::Count { .. }));
    }

    #[test]
    fn rejects_unknown_version_and_missing_files() {
        let d = tmpdir("bad");
        let mut m = Manifest::new(vec![counting("a", "nope.png")]);
        std::fs::write(d.join(MANIFEST_FILE), m.to_json()).unwrap();
        assert!(matches!(load_manifest(&d.join(MANIFEST_FILE)), Err(ManifestError::MissingFile(_))));
        m.schema_version = 99;
        std::fs::write(d.join(MANIFEST_FILE), m.to_json()).unwrap();
        assert!(matches!(load_manifest(&d.join(MANIFEST_FILE)), Err(ManifestError::SchemaVersion(99))));
    }

    #[test]
    fn rejects_duplicates() {
        let m = Manifest::new(vec![counting("a", ""), counting("a", "")]);
        assert!(matches!(m.check(), Err(ManifestError::DuplicateId(_))));
    }
}
