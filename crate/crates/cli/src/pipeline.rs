//! The per-frame pipeline: backproject, decompose, recover poses, voxelize,
//! score losses and metrics, and write reports.

use canopy_core::canonical_pose::canonical_pose;
use canopy_core::geometry::{backproject_indexed, PointCloud, RigidPose, Rotation, Vec3};
use canopy_core::icsbp::{decompose_frame, EmbeddingGrid, RandomTape, SbpParams, SlotMemory};
use canopy_core::losses::{
    attention_loss, colour_loss, depth_loss, scope_loss, total_loss, where_loss, AttentionSample,
    LossBreakdown,
};
use canopy_core::metrics::{seg_scores, Labeling, SegScores};
use canopy_core::radiance::{shape_pose_from_voxels, voxel_occupancy, ComposedField};
use canopy_core::so3_grid::{generate_grid, RotationGrid};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};
use crate::manifest::SceneManifest;
use crate::scene::{build_field, primitive_field};
use crate::tensor::{read_tensor, Tensor, TensorData};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlotReport {
    pub slot: usize,
    pub idle: bool,
    pub n_points: usize,
    /// Index of the primitive this slot's pixels mostly cover, if any.
    pub matched_instance: Option<usize>,
    /// "fresh", "carried", or "fallback".
    pub pose_source: String,
    pub centre: Option<[f64; 3]>,
    /// Centroid of the occupied voxels of the matched analytic field.
    pub shape_centre: Option<[f64; 3]>,
    pub volume: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame: usize,
    pub losses: LossBreakdown,
    pub metrics: SegScores,
    pub slots: Vec<SlotReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneReport {
    pub frames: Vec<FrameReport>,
    /// Per-metric mean over frames.
    pub mean: SegScores,
}

struct SlotTrack {
    last_pose: Option<RigidPose>,
    last_volume: f64,
}

/// Runs the full pipeline for the manifest at `manifest_path`, writing all
/// outputs under `out_dir`.
pub fn run_pipeline(manifest_path: &Path, out_dir: &Path) -> Result<SceneReport> {
    let manifest = SceneManifest::load(manifest_path)?;
    let base_dir = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    manifest.validate(&base_dir, true)?;
    run_pipeline_with(&manifest, &base_dir, out_dir)
}

/// Pipeline entry point for an already-loaded manifest whose tensor paths
/// resolve against `base_dir`.
pub fn run_pipeline_with(
    manifest: &SceneManifest,
    base_dir: &Path,
    out_dir: &Path,
) -> Result<SceneReport> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let hyper = &manifest.hyper;
    let grid = generate_grid(hyper.grid_level)?;
    let params = SbpParams {
        slots: hyper.slots,
        kernel_sigma: hyper.kernel_sigma,
    };

    let mut decompose_tape = RandomTape::from_seed(hyper.seed);
    let mut memory: Option<SlotMemory> = None;
    let mut tracks: Vec<SlotTrack> = (0..hyper.slots)
        .map(|_| SlotTrack {
            last_pose: None,
            last_volume: 0.0,
        })
        .collect();

    let mut csv = String::from(
        "frame,slot,tx,ty,tz,r00,r01,r02,r10,r11,r12,r20,r21,r22,volume,idle\n",
    );
    let mut frame_reports = Vec::with_capacity(manifest.frames);

    for t in 0..manifest.frames {
        let paths = manifest.frame_paths(base_dir, t)?;
        let rgb = read_tensor(&paths.rgb)?.to_array3(&paths.rgb)?;
        let depth = read_tensor(&paths.depth)?.to_array2(&paths.depth)?;
        let truth = read_tensor(&paths.labels)?.to_labels(&paths.labels)?;
        let embedding = read_tensor(&paths.embedding)?.to_array3(&paths.embedding)?;
        let prescope = read_tensor(&paths.prescope)?.to_array3(&paths.prescope)?;
        let cam = manifest.camera_for(t)?.to_camera_model()?;
        let (h, w) = depth.dim();

        let (cloud, pixels) = backproject_indexed(&depth, Some(&rgb), &cam)?;

        let emb_grid = EmbeddingGrid::new(embedding);
        let state = decompose_frame(
            &emb_grid,
            &prescope,
            &params,
            &mut decompose_tape,
            memory.as_ref(),
        )?;
        if memory.is_none() {
            memory = Some(state.memory());
        }

        // Argmax labels: the pre-scope background masks and the remaining
        // scope both map to label 0, slot k to k + 1.
        let mut pred = Array2::<u32>::zeros((h, w));
        for i in 0..h {
            for j in 0..w {
                let mut bg = state.remaining_scope()[(i, j)];
                for m in &state.special_masks {
                    bg = bg.max(m[(i, j)]);
                }
                let mut best = (0u32, bg);
                for (k, m) in state.masks.iter().enumerate() {
                    if m[(i, j)] > best.1 {
                        best = (k as u32 + 1, m[(i, j)]);
                    }
                }
                pred[(i, j)] = best.0;
            }
        }

        // Per-slot world points from valid-depth pixels, dropping everything
        // below the ground surface.
        let mut slot_points: Vec<Vec<Vec3>> = vec![Vec::new(); hyper.slots];
        let mut slot_votes: Vec<std::collections::BTreeMap<u32, usize>> =
            vec![Default::default(); hyper.slots];
        for (p, &(i, j)) in cloud.points.iter().zip(&pixels) {
            let label = pred[(i, j)];
            if label == 0 {
                continue;
            }
            let k = label as usize - 1;
            if p.z >= manifest.z_ground {
                slot_points[k].push(*p);
            }
            *slot_votes[k].entry(truth[(i, j)]).or_insert(0) += 1;
        }

        let mut slot_reports = Vec::with_capacity(hyper.slots);
        let mut slot_fields = Vec::new();
        let mut t_hat = Vec::new();
        let mut t_shape = Vec::new();
        let mut where_active = Vec::new();
        let mut voxel_lists: Vec<(usize, Vec<Vec3>)> = Vec::new();

        for k in 0..hyper.slots {
            if state.idle[k] {
                slot_reports.push(SlotReport {
                    slot: k,
                    idle: true,
                    n_points: 0,
                    matched_instance: None,
                    pose_source: "idle".into(),
                    centre: None,
                    shape_centre: None,
                    volume: None,
                });
                continue;
            }
            let points = &slot_points[k];
            let n = points.len();
            let (pose, volume, source) = if n >= hyper.n_thresh {
                let res = canonical_pose(
                    &PointCloud::from_points(points.clone()),
                    &grid,
                    hyper.beta,
                    hyper.box_size,
                )
                .map_err(|e| CliError::SlotContext {
                    frame: t,
                    slot: k,
                    source: e,
                })?;
                (res.pose, res.min_volume, "fresh")
            } else if let Some(last) = tracks[k].last_pose {
                (last, tracks[k].last_volume, "carried")
            } else {
                // No history yet: anchor at the point centroid (or origin)
                // with the world orientation.
                let centroid = if n > 0 {
                    points.iter().sum::<Vec3>() / n as f64
                } else {
                    Vec3::zeros()
                };
                let pose = RigidPose::new(centroid, Rotation::identity(), hyper.box_size)
                    .map_err(CliError::Core)?;
                (pose, 0.0, "fallback")
            };
            tracks[k].last_pose = Some(pose);
            tracks[k].last_volume = volume;

            // Majority ground-truth label among the slot's pixels.
            let matched = slot_votes[k]
                .iter()
                .filter(|(&label, _)| label != 0)
                .max_by_key(|(_, &count)| count)
                .map(|(&label, _)| label as usize - 1);

            let mut shape_centre = None;
            if let Some(instance) = matched {
                let field = primitive_field(&manifest.primitives[instance], t);
                let shape = voxel_occupancy(field.as_ref(), &pose, hyper.voxel_dim, hyper.sigma_t);
                if shape.occupied_count() > 0 {
                    let shape_pose = shape_pose_from_voxels(&shape, &pose, &grid, hyper.beta)
                        .map_err(|e| CliError::SlotContext {
                            frame: t,
                            slot: k,
                            source: e,
                        })?;
                    shape_centre = Some(shape_pose.pose.translation);
                    t_hat.push(pose.translation);
                    t_shape.push(shape_pose.pose.translation);
                    where_active.push(true);
                    voxel_lists.push((k, shape.occupied_world(&pose)));
                }
                slot_fields.push((k, field));
            }

            let m = pose.translation;
            write!(
                csv,
                "{t},{k},{},{},{}",
                m.x, m.y, m.z
            )
            .unwrap();
            let r = pose.rotation;
            for row in 0..3 {
                for col in 0..3 {
                    write!(csv, ",{}", r.matrix()[(row, col)]).unwrap();
                }
            }
            csv.push_str(&format!(",{volume},0\n"));

            slot_reports.push(SlotReport {
                slot: k,
                idle: false,
                n_points: n,
                matched_instance: matched,
                pose_source: source.into(),
                centre: Some([m.x, m.y, m.z]),
                shape_centre: shape_centre.map(|c| [c.x, c.y, c.z]),
                volume: Some(volume),
            });
        }

        // Losses over every valid-depth pixel: the model field is the
        // ground component plus each matched slot field.
        let scene_field = build_field(manifest, t);
        let ground = scene_field.components.into_iter().next().unwrap();
        let mut components = Vec::with_capacity(slot_fields.len() + 1);
        let mut component_slots = Vec::new();
        for (k, field) in slot_fields {
            component_slots.push(k);
            components.push(field);
        }
        components.push(ground);
        let model = ComposedField {
            components,
            sigma_max: hyper.sigma_max,
        };

        let mut loss_tape = RandomTape::from_seed(hyper.seed.wrapping_add(0x10000 + t as u64));
        let mut colour_sum = 0.0;
        let mut depth_sum = 0.0;
        let mut att_samples = Vec::new();
        let dir = cam.extrinsic.rotation.apply(&Vec3::z());
        for (idx, &(i, j)) in pixels.iter().enumerate() {
            let d = depth[(i, j)];
            let sample = canopy_core::radiance::sample_ray_points(
                &cam,
                (j as f64, i as f64),
                d,
                hyper.delta,
                hyper.near,
                &mut loss_tape,
            )
            .map_err(CliError::Core)?;
            let surface = model.eval(&sample.surface, &dir);
            let air = model.eval(&sample.air, &dir);
            let observed = cloud
                .colours
                .as_ref()
                .map(|c| c[idx])
                .unwrap_or_else(Vec3::zeros);
            colour_sum += colour_loss(
                &observed,
                &surface.colours,
                &surface.sigma_hat,
                hyper.sigma_std,
                hyper.sigma_max,
            );
            depth_sum += depth_loss(surface.sigma, air.sigma, sample.rho_air);
            if !component_slots.is_empty() {
                att_samples.push(AttentionSample {
                    masks: component_slots
                        .iter()
                        .map(|&k| state.masks[k][(i, j)])
                        .collect(),
                    colours: component_slots
                        .iter()
                        .enumerate()
                        .map(|(c, _)| surface.colours[c])
                        .collect(),
                    sigma_hat: component_slots
                        .iter()
                        .enumerate()
                        .map(|(c, _)| surface.sigma_hat[c])
                        .collect(),
                    observed,
                });
            }
        }
        let att = attention_loss(&att_samples, hyper.sigma_std, hyper.sigma_max);
        let where_ = where_loss(&t_hat, &t_shape, &where_active);
        let scope = scope_loss(state.remaining_scope());
        // No variational latents exist in this pipeline, so the KL term of
        // the objective is identically zero.
        let losses = total_loss(colour_sum, depth_sum, 0.0, where_, att, scope);

        let metrics = seg_scores(&Labeling::new(pred.clone()), &Labeling::new(truth.clone()))
            .map_err(CliError::Core)?;

        write_frame_outputs(out_dir, t, &state.masks, &pred, &voxel_lists)?;
        frame_reports.push(FrameReport {
            frame: t,
            losses,
            metrics,
            slots: slot_reports,
        });
    }

    let n = frame_reports.len() as f64;
    let mean = SegScores {
        ari_fg: frame_reports.iter().map(|f| f.metrics.ari_fg).sum::<f64>() / n,
        msc_fg: frame_reports.iter().map(|f| f.metrics.msc_fg).sum::<f64>() / n,
        miou_bg: frame_reports.iter().map(|f| f.metrics.miou_bg).sum::<f64>() / n,
    };
    let report = SceneReport {
        frames: frame_reports,
        mean,
    };

    let csv_path = out_dir.join("poses.csv");
    std::fs::write(&csv_path, csv).map_err(|e| CliError::io(&csv_path, e))?;
    let report_path = out_dir.join("report.json");
    let text = serde_json::to_string_pretty(&report)?;
    std::fs::write(&report_path, text + "\n").map_err(|e| CliError::io(&report_path, e))?;
    Ok(report)
}

fn write_frame_outputs(
    out_dir: &Path,
    t: usize,
    masks: &[Array2<f64>],
    pred: &Array2<u32>,
    voxel_lists: &[(usize, Vec<Vec3>)],
) -> Result<()> {
    let (h, w) = pred.dim();
    let mut data = Vec::with_capacity(masks.len() * h * w);
    for m in masks {
        data.extend(m.iter().map(|&x| x as f32));
    }
    Tensor::new(
        vec![masks.len() as u32, h as u32, w as u32],
        TensorData::F32(data),
    )?
    .write(&out_dir.join(format!("masks_{t:03}.obpt")))?;
    Tensor::from_labels(pred).write(&out_dir.join(format!("argmax_{t:03}.obpt")))?;

    for (k, points) in voxel_lists {
        let mut text = String::new();
        for p in points {
            writeln!(text, "{} {} {}", p.x, p.y, p.z).unwrap();
        }
        let path = out_dir.join(format!("voxels_{t:03}_slot{k}.txt"));
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

/// Pose recovery straight from ground-truth labels: backprojects each
/// instance's pixels and runs the minimum-volume search. Returns CSV text
/// in the pose file format (instance id in the slot column).
pub fn poses_from_truth(
    manifest: &SceneManifest,
    base_dir: &Path,
    grid: &RotationGrid,
) -> Result<String> {
    let hyper = &manifest.hyper;
    let mut csv = String::from(
        "frame,slot,tx,ty,tz,r00,r01,r02,r10,r11,r12,r20,r21,r22,volume,idle\n",
    );
    for t in 0..manifest.frames {
        let paths = manifest.frame_paths(base_dir, t)?;
        let depth = read_tensor(&paths.depth)?.to_array2(&paths.depth)?;
        let truth = read_tensor(&paths.labels)?.to_labels(&paths.labels)?;
        let cam = manifest.camera_for(t)?.to_camera_model()?;
        let (cloud, pixels) = backproject_indexed(&depth, None, &cam)?;
        let mut instance_points: std::collections::BTreeMap<u32, Vec<Vec3>> = Default::default();
        for (p, &(i, j)) in cloud.points.iter().zip(&pixels) {
            let label = truth[(i, j)];
            if label != 0 && p.z >= manifest.z_ground {
                instance_points.entry(label).or_default().push(*p);
            }
        }
        for (label, points) in instance_points {
            if points.len() < hyper.n_thresh {
                continue;
            }
            let res = canonical_pose(
                &PointCloud::from_points(points),
                grid,
                hyper.beta,
                hyper.box_size,
            )?;
            let m = res.pose.translation;
            write!(csv, "{t},{label},{},{},{}", m.x, m.y, m.z).unwrap();
            for row in 0..3 {
                for col in 0..3 {
                    write!(csv, ",{}", res.pose.rotation.matrix()[(row, col)]).unwrap();
                }
            }
            csv.push_str(&format!(",{},0\n", res.min_volume));
        }
    }
    Ok(csv)
}
