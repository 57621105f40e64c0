use canopy_cli::manifest::SceneManifest;
use canopy_cli::pipeline::{poses_from_truth, run_pipeline_with};
use canopy_cli::report::{human_table, report_metrics};
use canopy_cli::scene::gen_scene;
use canopy_cli::tensor::{Tensor, TensorData};
use canopy_cli::{CliError, Result};
use canopy_core::so3_grid::generate_grid;
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "canopy", version, about = "Object-centric scene decomposition tools")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a synthetic scene from a skeleton manifest.
    GenScene {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Run the full decomposition pipeline on a generated scene.
    Decompose {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        grid_level: Option<u32>,
    },
    /// Recover per-instance poses from ground-truth labels.
    Pose {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        grid_level: Option<u32>,
    },
    /// Aggregate scores across completed scene output directories.
    Metrics {
        #[arg(long)]
        out: PathBuf,
        scenes: Vec<PathBuf>,
    },
    /// Cache a rotation grid's quaternions to a tensor file.
    GridCache {
        #[arg(long)]
        grid_level: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

fn base_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf()
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenScene {
            manifest,
            out,
            seed,
            frames,
        } => {
            let mut skeleton = SceneManifest::load(&manifest)?;
            if let Some(frames) = frames {
                skeleton.frames = frames;
            }
            let seed = seed.unwrap_or(skeleton.hyper.seed);
            let m = gen_scene(&skeleton, &out, seed)?;
            println!(
                "wrote {} frames to {}",
                m.frames,
                out.join("manifest.json").display()
            );
        }
        Cmd::Decompose {
            manifest,
            out,
            seed,
            frames,
            grid_level,
        } => {
            let base = base_dir(&manifest);
            let mut m = SceneManifest::load(&manifest)?;
            if let Some(seed) = seed {
                m.hyper.seed = seed;
            }
            if let Some(level) = grid_level {
                m.hyper.grid_level = level;
            }
            if let Some(frames) = frames {
                if frames > m.paths.len() {
                    return Err(CliError::InvalidManifest(format!(
                        "requested {frames} frames but the scene has {}",
                        m.paths.len()
                    )));
                }
                m.frames = frames;
            }
            m.validate(&base, true)?;
            let report = run_pipeline_with(&m, &base, &out)?;
            println!(
                "ari_fg {:.2}  msc_fg {:.2}  miou_bg {:.2}  over {} frames",
                report.mean.ari_fg,
                report.mean.msc_fg,
                report.mean.miou_bg,
                report.frames.len()
            );
        }
        Cmd::Pose {
            manifest,
            out,
            grid_level,
        } => {
            let base = base_dir(&manifest);
            let mut m = SceneManifest::load(&manifest)?;
            if let Some(level) = grid_level {
                m.hyper.grid_level = level;
            }
            m.validate(&base, true)?;
            let grid = generate_grid(m.hyper.grid_level)?;
            let csv = poses_from_truth(&m, &base, &grid)?;
            std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
            let path = out.join("poses.csv");
            std::fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;
            println!("wrote {}", path.display());
        }
        Cmd::Metrics { out, scenes } => {
            if scenes.is_empty() {
                return Err(CliError::InvalidManifest(
                    "metrics needs at least one scene directory".into(),
                ));
            }
            let agg = report_metrics(&scenes, &out)?;
            print!("{}", human_table(&agg));
        }
        Cmd::GridCache { grid_level, out } => {
            let grid = generate_grid(grid_level)?;
            let mut data = Vec::with_capacity(grid.len() * 4);
            for q in grid.quaternions() {
                data.extend(q.iter().map(|&x| x as f32));
            }
            Tensor::new(vec![grid.len() as u32, 4], TensorData::F32(data))?.write(&out)?;
            println!("cached {} rotations to {}", grid.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
