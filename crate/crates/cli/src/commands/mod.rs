mod eval;
mod scene;
mod train;

use std::path::Path;

use objfield::nn::{load_checkpoint, Model};
use objfield::scene::SceneDescription;
use objfield::Scene;

use crate::args::{Cli, Command};
use crate::output;
use crate::{usage, CliResult};

pub fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData(a) => train::gen_data(a),
        Command::Pretrain(a) => train::pretrain(a),
        Command::Invert(a) => train::invert(a),
        Command::Render(a) => scene::render(a, scene::RenderKind::Color),
        Command::RenderDepth(a) => scene::render(a, scene::RenderKind::Depth),
        Command::RenderGraspfield(a) => scene::render(a, scene::RenderKind::GraspField),
        Command::Grasp(a) => scene::grasp(a),
        Command::Voxelize(a) => scene::voxelize(a),
        Command::Eval(a) => eval::eval(a),
        Command::Bench(a) => eval::bench(a),
    }
}

/// Checks the pieces every command shares: the output directory is fresh
/// and the thread count is sane. Installs the thread pool.
fn prepare(out: &Path, threads: Option<usize>) -> CliResult<()> {
    output::check_fresh(out)?;
    if let Some(n) = threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

fn require(path: &Path, what: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

/// Maps an error from reading an input to a validation failure.
fn bad_input<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> crate::CliError + '_ {
    move |e| usage(format!("{}: {e}", path.display()))
}

fn load_model(path: &Path) -> CliResult<Model> {
    require(path, "checkpoint")?;
    Ok(load_checkpoint(path).map_err(bad_input(path))?.model)
}

/// Resolves a layout file against a model's latent table.
fn load_scene(path: &Path, model: &Model) -> CliResult<Scene> {
    require(path, "layout")?;
    let desc = SceneDescription::load(path).map_err(bad_input(path))?;
    let table = model.latents()?;
    let base = path.parent().unwrap_or(Path::new("."));
    let scene = desc
        .resolve(base, Some(&table), model.config().latent_dim)
        .map_err(bad_input(path))?;
    if let Some(o) = scene
        .objects()
        .iter()
        .find(|o| o.latent.dim() != model.config().latent_dim)
    {
        return Err(usage(format!(
            "object {} has a {}-dim latent; the checkpoint expects {}",
            o.id,
            o.latent.dim(),
            model.config().latent_dim
        )));
    }
    Ok(scene)
}
