//! Human-readable scene description (TOML).
//!
//! ```toml
//! background = [1.0, 1.0, 1.0]
//!
//! [[objects]]
//! id = 0
//! rotation = [1, 0, 0,  0, 1, 0,  0, 0, 1]   # row-major
//! translation = [0.0, 0.0, 0.0]              # meters
//! half_extents = [0.12, 0.05, 0.05]          # meters
//! latent_row = 0                             # row of a checkpoint latent table
//! # or: latent_file = "obj0.latent"          # whitespace separated floats
//! # or: latent = [0.1, -0.2, ...]            # inline
//! ```
//!
//! An object without any latent source gets a zero latent.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoundingVolume, LatentCode, Mat3, ObjectInstance, Pose, Scene, Vec3};
use crate::error::{invalid, Error, Result};

fn white() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    #[serde(default = "white")]
    pub background: [f64; 3],
    #[serde(default)]
    pub objects: Vec<ObjectDescription>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectDescription {
    pub id: usize,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub half_extents: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_row: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LatentSource<'a> {
    Row(usize),
    File(&'a str),
    Inline(&'a [f64]),
    Unspecified,
}

impl ObjectDescription {
    pub fn from_object(obj: &ObjectInstance) -> Self {
        let r = obj.pose.rotation();
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rotation[3 * i + j] = r[(i, j)];
            }
        }
        let t = obj.pose.translation();
        let h = obj.volume.half_extents();
        Self {
            id: obj.id,
            rotation,
            translation: [t.x, t.y, t.z],
            half_extents: [h.x, h.y, h.z],
            latent_row: None,
            latent_file: None,
            latent: None,
        }
    }

    pub fn latent_source(&self) -> Result<LatentSource<'_>> {
        match (&self.latent_row, &self.latent_file, &self.latent) {
            (Some(r), None, None) => Ok(LatentSource::Row(*r)),
            (None, Some(f), None) => Ok(LatentSource::File(f)),
            (None, None, Some(v)) => Ok(LatentSource::Inline(v)),
            (None, None, None) => Ok(LatentSource::Unspecified),
            _ => Err(invalid(format!(
                "object {}: give at most one of latent_row, latent_file, latent",
                self.id
            ))),
        }
    }

    pub fn pose(&self) -> Result<Pose> {
        let r = Mat3::from_row_slice(&self.rotation);
        Pose::new(r, Vec3::from(self.translation))
    }

    pub fn volume(&self) -> Result<BoundingVolume> {
        BoundingVolume::new(Vec3::from(self.half_extents))
    }
}

/// Reads a latent-code text file (whitespace separated floats).
pub fn read_latent_file(path: &Path) -> Result<LatentCode> {
    let text = std::fs::read_to_string(path)?;
    let values = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    LatentCode::new(values)
}

pub fn write_latent_file(path: &Path, latent: &LatentCode) -> Result<()> {
    let text: Vec<String> = latent.values().iter().map(|v| format!("{v:e}")).collect();
    std::fs::write(path, text.join("\n") + "\n")?;
    Ok(())
}

impl SceneDescription {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// Layout of a scene (poses, volumes, ids) with latents referenced by
    /// table row equal to the object id.
    pub fn from_scene_with_rows(scene: &Scene) -> Self {
        Self {
            background: scene.background(),
            objects: scene
                .objects()
                .iter()
                .map(|o| ObjectDescription {
                    latent_row: Some(o.id),
                    ..ObjectDescription::from_object(o)
                })
                .collect(),
        }
    }

    /// Builds a [`Scene`]. `base_dir` anchors relative latent files;
    /// `table` serves `latent_row` references; `latent_dim` sizes zero
    /// latents for objects without a source.
    pub fn resolve(
        &self,
        base_dir: &Path,
        table: Option<&[LatentCode]>,
        latent_dim: usize,
    ) -> Result<Scene> {
        let objects = self
            .objects
            .iter()
            .map(|d| {
                let latent = match d.latent_source()? {
                    LatentSource::Row(r) => {
                        table.and_then(|t| t.get(r)).cloned().ok_or_else(|| {
                            invalid(format!("object {}: latent row {r} not available", d.id))
                        })?
                    }
                    LatentSource::File(f) => read_latent_file(&base_dir.join(f))?,
                    LatentSource::Inline(v) => LatentCode::new(v.to_vec())?,
                    LatentSource::Unspecified => LatentCode::zeros(latent_dim),
                };
                Ok(ObjectInstance {
                    id: d.id,
                    pose: d.pose()?,
                    volume: d.volume()?,
                    latent,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Scene::new(objects, self.background)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
background = [0.0, 0.5, 1.0]

[[objects]]
id = 0
rotation = [0, -1, 0,  1, 0, 0,  0, 0, 1]
translation = [0.1, 0.0, 0.0]
half_extents = [0.1, 0.05, 0.05]
latent = [0.5, -0.5]

[[objects]]
id = 1
rotation = [1, 0, 0,  0, 1, 0,  0, 0, 1]
translation = [-0.2, 0.0, 0.0]
half_extents = [0.05, 0.05, 0.05]
latent_row = 1
"#;

    #[test]
    fn parses_and_resolves() {
        let desc = SceneDescription::parse(SAMPLE).unwrap();
        let table = vec![
            LatentCode::new(vec![1.0, 1.0]).unwrap(),
            LatentCode::new(vec![2.0, 3.0]).unwrap(),
        ];
        let scene = desc.resolve(Path::new("."), Some(&table), 2).unwrap();
        assert_eq!(scene.objects().len(), 2);
        assert_eq!(scene.background(), [0.0, 0.5, 1.0]);
        // Row-major: first row is (0, -1, 0).
        let r = scene.objects()[0].pose.rotation();
        assert_eq!(r[(0, 1)], -1.0);
        assert_eq!(scene.objects()[1].latent.values(), &[2.0, 3.0]);
    }

    #[test]
    fn missing_row_is_an_error() {
        let desc = SceneDescription::parse(SAMPLE).unwrap();
        assert!(desc.resolve(Path::new("."), None, 2).is_err());
    }

    #[test]
    fn latent_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let latent = LatentCode::new(vec![0.125, -3.5, 1e-7]).unwrap();
        write_latent_file(&dir.path().join("a.latent"), &latent).unwrap();
        let text = "[[objects]]\nid = 4\nrotation = [1,0,0,0,1,0,0,0,1]\ntranslation = [0,0,0]\nhalf_extents = [1,1,1]\nlatent_file = \"a.latent\"\n";
        let scene = SceneDescription::parse(text)
            .unwrap()
            .resolve(dir.path(), None, 3)
            .unwrap();
        assert_eq!(scene.objects()[0].latent, latent);
        assert_eq!(scene.background(), [1.0; 3]);
    }

    #[test]
    fn rejects_conflicting_sources() {
        let text = "[[objects]]\nid = 0\nrotation = [1,0,0,0,1,0,0,0,1]\ntranslation = [0,0,0]\nhalf_extents = [1,1,1]\nlatent_row = 0\nlatent = [1.0]\n";
        let desc = SceneDescription::parse(text).unwrap();
        assert!(desc.resolve(Path::new("."), None, 1).is_err());
    }
}
