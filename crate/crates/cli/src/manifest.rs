//! Scene manifests: cameras, primitives, file paths, and hyperparameters.

use canopy_core::geometry::{CameraModel, RigidPose, Rotation, Vec3};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

/// Pipeline hyperparameters with their documented defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    /// Colour observation noise.
    pub sigma_std: f64,
    /// Density cap.
    pub sigma_max: f64,
    /// Canonical box side length in metres.
    pub box_size: f64,
    /// Minimum point count for a fresh pose estimate.
    pub n_thresh: usize,
    /// Translation offset cap.
    pub t_max: f64,
    /// Voxels per canonical axis.
    pub voxel_dim: usize,
    /// Surface thickness for depth sampling.
    pub delta: f64,
    /// Volume tolerance band for the pose search.
    pub beta: f64,
    /// Slot count.
    pub slots: usize,
    /// Rotation grid subdivision level.
    pub grid_level: u32,
    /// Voxel occupancy threshold.
    pub sigma_t: f64,
    /// Embedding kernel bandwidth.
    pub kernel_sigma: f64,
    /// Near plane for air samples.
    pub near: f64,
    /// Far limit of the ray march.
    pub far: f64,
    /// Ray march step in metres.
    pub march_step: f64,
    /// Gaussian noise amplitude added to oracle embeddings.
    pub noise: f64,
    /// Magnitude of the synthetic pre-scope logits.
    pub prescope_amp: f64,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            sigma_std: 0.1,
            sigma_max: 10.0,
            box_size: 0.4,
            n_thresh: 10,
            t_max: 0.1,
            voxel_dim: 24,
            delta: 0.01,
            beta: 0.01,
            slots: 4,
            grid_level: 2,
            sigma_t: 0.5,
            kernel_sigma: 1.0,
            near: 0.01,
            far: 4.0,
            march_step: 0.002,
            noise: 0.0,
            prescope_amp: 4.0,
            seed: 0,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("sigma_std", self.sigma_std),
            ("sigma_max", self.sigma_max),
            ("box_size", self.box_size),
            ("t_max", self.t_max),
            ("delta", self.delta),
            ("kernel_sigma", self.kernel_sigma),
            ("near", self.near),
            ("far", self.far),
            ("march_step", self.march_step),
            ("prescope_amp", self.prescope_amp),
        ];
        for (name, v) in positives {
            if !(v > 0.0) {
                return Err(CliError::InvalidManifest(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.beta < 0.0 || self.noise < 0.0 {
            return Err(CliError::InvalidManifest(
                "beta and noise must be nonnegative".into(),
            ));
        }
        if self.slots < 1 || self.voxel_dim < 2 {
            return Err(CliError::InvalidManifest(
                "need at least 1 slot and 2 voxels per axis".into(),
            ));
        }
        if self.far <= self.near {
            return Err(CliError::InvalidManifest(
                "far must exceed near".into(),
            ));
        }
        Ok(())
    }
}

/// A pinhole camera placed by eye position and look-at target (world up is
/// +z; the image y axis points down).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub position: [f64; 3],
    pub look_at: [f64; 3],
}

impl CameraConfig {
    pub fn to_camera_model(&self) -> Result<CameraModel> {
        let eye = Vec3::from(self.position);
        let target = Vec3::from(self.look_at);
        let forward = target - eye;
        if forward.norm() < 1e-9 {
            return Err(CliError::InvalidManifest(
                "camera position coincides with look_at".into(),
            ));
        }
        let forward = forward.normalize();
        let up = Vec3::z();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(CliError::InvalidManifest(
                "camera looks straight along the world z axis".into(),
            ));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Rotation::from_matrix(Matrix3::from_columns(&[right, down, forward]))
            .map_err(CliError::Core)?;
        let extrinsic = RigidPose::new(eye, rotation, 1.0).map_err(CliError::Core)?;
        CameraModel::new(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width,
            self.height,
            extrinsic,
        )
        .map_err(CliError::Core)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimKind {
    Sphere,
    Box,
}

/// A synthetic scene primitive. `center` may be omitted in skeletons, in
/// which case scene generation samples a non-overlapping placement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Primitive {
    pub kind: PrimKind,
    #[serde(default)]
    pub center: Option<[f64; 3]>,
    #[serde(default)]
    pub radius: f64,
    #[serde(default)]
    pub half_extents: [f64; 3],
    /// Rotation about the world z axis, radians (boxes only).
    #[serde(default)]
    pub yaw: f64,
    pub colour: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
}

impl Primitive {
    /// Radius of the bounding sphere used for overlap checks.
    pub fn bounding_radius(&self) -> f64 {
        match self.kind {
            PrimKind::Sphere => self.radius,
            PrimKind::Box => Vec3::from(self.half_extents).norm(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            PrimKind::Sphere if !(self.radius > 0.0) => Err(CliError::InvalidManifest(
                format!("sphere radius must be positive, got {}", self.radius),
            )),
            PrimKind::Box if !self.half_extents.iter().all(|&e| e > 0.0) => {
                Err(CliError::InvalidManifest(format!(
                    "box half extents must be positive, got {:?}",
                    self.half_extents
                )))
            }
            _ => Ok(()),
        }
    }

    /// World centre at frame `t` under constant velocity (1 time unit per
    /// frame).
    pub fn center_at(&self, t: usize) -> Option<Vec3> {
        self.center
            .map(|c| Vec3::from(c) + Vec3::from(self.velocity) * t as f64)
    }
}

/// Per-frame tensor file paths, relative to the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FramePaths {
    pub rgb: String,
    pub depth: String,
    pub labels: String,
    pub embedding: String,
    pub prescope: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneManifest {
    pub frames: usize,
    /// One entry shared by all frames, or one entry per frame.
    pub cameras: Vec<CameraConfig>,
    pub z_ground: f64,
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub paths: Vec<FramePaths>,
    #[serde(default)]
    pub hyper: Hyper,
}

impl SceneManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let manifest: SceneManifest =
            serde_json::from_str(&text).map_err(|e| CliError::InvalidManifest(e.to_string()))?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn camera_for(&self, frame: usize) -> Result<&CameraConfig> {
        match self.cameras.as_slice() {
            [single] => Ok(single),
            many => many.get(frame).ok_or_else(|| {
                CliError::InvalidManifest(format!("no camera for frame {frame}"))
            }),
        }
    }

    /// Validates structure; with `require_paths`, also checks that every
    /// referenced tensor file exists under `base_dir`.
    pub fn validate(&self, base_dir: &Path, require_paths: bool) -> Result<()> {
        if self.frames == 0 {
            return Err(CliError::InvalidManifest("frames must be >= 1".into()));
        }
        if self.cameras.len() != 1 && self.cameras.len() != self.frames {
            return Err(CliError::InvalidManifest(format!(
                "need 1 or {} cameras, got {}",
                self.frames,
                self.cameras.len()
            )));
        }
        if self.primitives.is_empty() || self.primitives.len() > 4 {
            return Err(CliError::InvalidManifest(format!(
                "need 1-4 primitives, got {}",
                self.primitives.len()
            )));
        }
        for p in &self.primitives {
            p.validate()?;
        }
        self.hyper.validate()?;
        for cam in &self.cameras {
            cam.to_camera_model()?;
        }
        if require_paths {
            if self.paths.len() != self.frames {
                return Err(CliError::InvalidManifest(format!(
                    "need {} frame path entries, got {}",
                    self.frames,
                    self.paths.len()
                )));
            }
            for fp in &self.paths {
                for rel in [&fp.rgb, &fp.depth, &fp.labels, &fp.embedding, &fp.prescope] {
                    let full = base_dir.join(rel);
                    if !full.is_file() {
                        return Err(CliError::InvalidManifest(format!(
                            "missing tensor file {}",
                            full.display()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn frame_paths(&self, base_dir: &Path, frame: usize) -> Result<ResolvedPaths> {
        let fp = self.paths.get(frame).ok_or_else(|| {
            CliError::InvalidManifest(format!("no paths for frame {frame}"))
        })?;
        Ok(ResolvedPaths {
            rgb: base_dir.join(&fp.rgb),
            depth: base_dir.join(&fp.depth),
            labels: base_dir.join(&fp.labels),
            embedding: base_dir.join(&fp.embedding),
            prescope: base_dir.join(&fp.prescope),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ResolvedPaths {
    pub rgb: PathBuf,
    pub depth: PathBuf,
    pub labels: PathBuf,
    pub embedding: PathBuf,
    pub prescope: PathBuf,
}
