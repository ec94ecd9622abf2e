use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "objfield",
    version,
    about = "Object-centric radiance and grasp fields"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Output directory. It must not exist yet or be empty.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file; the table named after the command supplies defaults that
    /// flags override.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; 1 is the deterministic reference mode.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an analytic dataset with renders and grasp annotations.
    GenData(GenDataArgs),
    /// Jointly train decoders and latents on a dataset.
    Pretrain(PretrainArgs),
    /// Fit latents (and optionally decoders) to images of a scene.
    Invert(InvertArgs),
    /// Render a color image of a scene.
    Render(RenderArgs),
    /// Render a depth raster of a scene.
    RenderDepth(RenderArgs),
    /// Render a scene shaded by grasp score.
    RenderGraspfield(RenderArgs),
    /// Propose and filter grasps for the objects of a scene.
    Grasp(GraspArgs),
    /// Extract occupancy grids from the density field.
    Voxelize(VoxelizeArgs),
    /// Compute PSNR and SSIM for an image pair or dataset views.
    Eval(EvalArgs),
    /// Time rendering throughput.
    Bench(BenchArgs),
}

pub fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let v = parse_floats(s)?;
    v.try_into()
        .map_err(|v: Vec<f64>| format!("expected 3 comma-separated numbers, got {}", v.len()))
}

pub fn parse_six(s: &str) -> Result<[f64; 6], String> {
    let v = parse_floats(s)?;
    v.try_into()
        .map_err(|v: Vec<f64>| format!("expected 6 comma-separated numbers, got {}", v.len()))
}

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad number {t:?}: {e}"))
        })
        .collect()
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub train_objects: Option<usize>,
    #[arg(long)]
    pub test_objects: Option<usize>,
    #[arg(long)]
    pub multi_object_scenes: Option<usize>,
    #[arg(long)]
    pub views: Option<usize>,
    #[arg(long)]
    pub held_out_views: Option<usize>,
    #[arg(long)]
    pub input_views: Option<usize>,
    #[arg(long)]
    pub novel_views: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub focal: Option<f64>,
    #[arg(long)]
    pub camera_distance: Option<f64>,
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    pub background: Option<[f64; 3]>,
    #[arg(long)]
    pub grasps_per_object: Option<usize>,
    #[arg(long)]
    pub perturbations: Option<usize>,
    #[arg(long)]
    pub gripper_width: Option<f64>,
    #[arg(long)]
    pub oracle_samples: Option<usize>,
}

/// Decoder shape flags.
#[derive(Debug, Clone, Args)]
pub struct DecoderArgs {
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub pos_freqs: Option<usize>,
    #[arg(long)]
    pub dir_freqs: Option<usize>,
    #[arg(long)]
    pub include_input: Option<bool>,
    #[arg(long)]
    pub coord_scale: Option<f64>,
    #[arg(long)]
    pub density_scale: Option<f64>,
}

/// RMSprop flags.
#[derive(Debug, Clone, Args)]
pub struct OptimizerArgs {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset directory written by `gen-data`.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub decoder: DecoderArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub rays_per_batch: Option<usize>,
    #[arg(long)]
    pub grasps_per_batch: Option<usize>,
    /// Samples per ray (J + 1).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub latent_std: Option<f64>,
    #[arg(long)]
    pub log_every: Option<usize>,
}

/// Camera placement flags.
#[derive(Debug, Clone, Args)]
pub struct CameraArgs {
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    pub eye: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    pub target: Option<[f64; 3]>,
    /// Focal length in pixels.
    #[arg(long)]
    pub focal: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct InvertArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory; pairs with `--scene-name`.
    #[arg(long, requires = "scene_name", conflicts_with_all = ["layout", "image"])]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub scene_name: Option<String>,
    /// Views of the dataset scene to fit.
    #[arg(long, default_value = "input")]
    pub role: String,
    /// Scene layout file; pairs with `--image` and the camera flags.
    #[arg(long, requires = "image")]
    pub layout: Option<PathBuf>,
    #[arg(long, requires = "layout")]
    pub image: Option<PathBuf>,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// latent, decoder or both.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub rays_per_batch: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long)]
    pub latent_std: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Scene layout; `latent_row` entries index the checkpoint's table.
    #[arg(long)]
    pub layout: PathBuf,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Samples per ray (J + 1).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    pub background: Option<[f64; 3]>,
    /// Jitter sample depths with a per-pixel stream of `--seed`.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub jitter: Option<bool>,
}

#[derive(Debug, Clone, Args)]
pub struct GraspArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub layout: PathBuf,
    /// Only this object id; default all objects.
    #[arg(long)]
    pub object: Option<usize>,
    #[arg(long)]
    pub res: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub t_open: Option<f64>,
    #[arg(long)]
    pub t_closed: Option<f64>,
    #[arg(long)]
    pub gripper_width: Option<f64>,
    /// Treat `z < 0` as solid.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub ground_plane: Option<bool>,
}

#[derive(Debug, Clone, Args)]
pub struct VoxelizeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub layout: PathBuf,
    #[arg(long)]
    pub object: Option<usize>,
    #[arg(long)]
    pub res: Option<usize>,
    /// Density (1/m) at or above which a cell is occupied.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// World box `xmin,ymin,zmin,xmax,ymax,zmax`; switches to one scene grid.
    #[arg(long, value_parser = parse_six, allow_hyphen_values = true)]
    pub bounds: Option<[f64; 6]>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub ground_plane: Option<bool>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// First image of a pair.
    #[arg(long, requires = "b", conflicts_with_all = ["checkpoint", "data"])]
    pub a: Option<PathBuf>,
    #[arg(long, requires = "a")]
    pub b: Option<PathBuf>,
    /// Model to score against dataset views.
    #[arg(long, requires = "data")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, requires = "checkpoint")]
    pub data: Option<PathBuf>,
    /// Restrict to one scene.
    #[arg(long)]
    pub scene_name: Option<String>,
    /// Layout with latents for `--scene-name`, e.g. from `invert`.
    #[arg(long, requires = "scene_name")]
    pub layout: Option<PathBuf>,
    /// train, heldout, input or novel.
    #[arg(long)]
    pub role: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comma_separated_numbers() {
        assert_eq!(parse_triple("1, -2.5,3e-1").unwrap(), [1.0, -2.5, 0.3]);
        assert!(parse_triple("1,2").is_err());
        assert!(parse_triple("1,2,x").is_err());
        assert_eq!(parse_six("-1,-1,0,1,1,2").unwrap()[5], 2.0);
    }

    #[test]
    fn negative_vectors_are_values_not_flags() {
        let cli = Cli::try_parse_from([
            "objfield",
            "voxelize",
            "--out",
            "o",
            "--checkpoint",
            "c",
            "--layout",
            "l",
            "--bounds",
            "-0.2,-0.2,0,0.2,0.2,0.3",
        ])
        .unwrap();
        let Command::Voxelize(a) = cli.command else {
            panic!("wrong command")
        };
        assert_eq!(a.bounds.unwrap()[0], -0.2);
    }
}
