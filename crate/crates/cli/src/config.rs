//! Config files and the command-specific settings that live only in the CLI.
//!
//! A config file is TOML with one table per command (`[gen-data]`,
//! `[pretrain]`, ...). The table for the running command is read into that
//! command's settings, then flags override individual fields.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use objfield::grasp::{DEFAULT_T_CLOSED, DEFAULT_T_OPEN};
use objfield::Camera;

use crate::args::CameraArgs;
use crate::{usage, CliResult};

/// Reads table `name` of the config file, or the defaults without a file
/// or table.
pub fn section<T: DeserializeOwned + Default>(path: Option<&Path>, name: &str) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    match table.remove(name) {
        None => Ok(T::default()),
        Some(value) => value
            .try_into()
            .map_err(|e| usage(format!("config {} [{name}]: {e}", path.display()))),
    }
}

/// Overwrites `$target` with the flag value when the flag was given.
macro_rules! set {
    ($target:expr, $flag:expr) => {
        if let Some(v) = $flag {
            $target = v;
        }
    };
}
pub(crate) use set;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    /// Pixels.
    pub focal: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            eye: [0.6, -0.6, 0.53],
            target: [0.0; 3],
            focal: 256.0,
            width: 128,
            height: 128,
        }
    }
}

impl CameraConfig {
    pub fn apply(&mut self, a: &CameraArgs) {
        set!(self.eye, a.eye);
        set!(self.target, a.target);
        set!(self.focal, a.focal);
        set!(self.width, a.width);
        set!(self.height, a.height);
    }

    pub fn camera(&self) -> CliResult<Camera> {
        Camera::orbit(
            self.eye.into(),
            self.target.into(),
            self.focal,
            self.width,
            self.height,
        )
        .map_err(|e| usage(format!("camera: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub camera: CameraConfig,
    /// Samples per ray, `J + 1`.
    pub samples: usize,
    /// Overrides the layout's background.
    pub background: Option<[f64; 3]>,
    pub jitter: bool,
    pub seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            camera: CameraConfig::default(),
            samples: 32,
            background: None,
            jitter: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraspConfig {
    pub res: usize,
    pub top_k: usize,
    pub t_open: f64,
    pub t_closed: f64,
    pub gripper_width: f64,
    pub ground_plane: bool,
    /// Seeds the gripper point clouds.
    pub seed: u64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            res: 16,
            top_k: 10,
            t_open: DEFAULT_T_OPEN,
            t_closed: DEFAULT_T_CLOSED,
            gripper_width: 0.08,
            ground_plane: false,
            seed: 0,
        }
    }
}

/// Default occupancy threshold in 1/m: a 1 cm slab at this density
/// absorbs about 10% of the light.
pub const DEFAULT_VOXEL_THRESHOLD: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoxelConfig {
    pub res: usize,
    pub threshold: f64,
    pub bounds: Option<[f64; 6]>,
    pub ground_plane: bool,
}

impl Default for VoxelConfig {
    fn default() -> Self {
        Self {
            res: 32,
            threshold: DEFAULT_VOXEL_THRESHOLD,
            bounds: None,
            ground_plane: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub role: String,
    pub samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            role: "heldout".into(),
            samples: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub width: usize,
    pub height: usize,
    pub samples: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            samples: 32,
            iterations: 20,
            warmup: 2,
            seed: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(&mut f, text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn missing_file_or_table_gives_defaults() {
        assert_eq!(
            section::<GraspConfig>(None, "grasp").unwrap(),
            GraspConfig::default()
        );
        let f = write("[voxelize]\nres = 8\n");
        assert_eq!(
            section::<GraspConfig>(Some(f.path()), "grasp").unwrap(),
            GraspConfig::default()
        );
    }

    #[test]
    fn table_fields_override_defaults() {
        let f = write("[grasp]\nres = 4\nt_open = 2.0\n");
        let c: GraspConfig = section(Some(f.path()), "grasp").unwrap();
        assert_eq!((c.res, c.t_open, c.top_k), (4, 2.0, 10));
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let f = write("[grasp]\nresolution = 4\n");
        let err = section::<GraspConfig>(Some(f.path()), "grasp").unwrap_err();
        assert!(matches!(err, crate::CliError::Usage(_)));
    }
}
