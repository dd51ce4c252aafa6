use std::fs;
use std::path::{Path, PathBuf};

use fcnls::data_io::{self, Dataset};
use fcnls::fcn::{load_checkpoint, save_checkpoint};
use fcnls::training::{self, ModelScores, ProtocolModels, RunManifest};
use fcnls::{Error, FcnModel, Result, ScalarField2D, ShapeContext};
use log::info;

use crate::config::{io_error, RunConfig};

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.save(out)?;
    let samples = data_io::generate(&cfg.synthetic)?;
    let data = data_io::split(samples, &cfg.split)?;
    data_io::save_dataset(out, &data, Some(&cfg.synthetic), &cfg.split)?;
    info!(
        "wrote {} samples ({} labeled, {} unlabeled, {} val, {} test) to {}",
        data.len(),
        data.train_labeled.len(),
        data.train_unlabeled.len(),
        data.val.len(),
        data.test.len(),
        out.display()
    );
    Ok(())
}

/// Prior from the first labeled training mask, when the config asks for one.
fn prior_for(cfg: &RunConfig, data: &Dataset) -> Result<Option<ShapeContext>> {
    if !cfg.train.shape_prior {
        return Ok(None);
    }
    match data.train_labeled.first() {
        Some(s) => Ok(Some(training::shape_context_from_mask(s.require_label()?)?)),
        None => Ok(None),
    }
}

fn write_run(out: &Path, cfg: &RunConfig, data: &Dataset, model: &FcnModel, history: &training::History) -> Result<()> {
    save_checkpoint(model, &out.join("model.ckpt"))?;
    history.save_csv(&out.join("history.csv"))?;
    let manifest = RunManifest {
        config: cfg.clone(),
        seed: cfg.seed,
        splits: data.ids(),
        best_epoch: history.best_epoch,
    };
    let path = out.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| io_error(&path, e))?;
    info!(
        "best epoch {} ({:?} {:.4}); {} updates",
        history.best_epoch, cfg.train.validation_metric, history.best_metric, history.updates
    );
    Ok(())
}

pub fn pretrain(cfg: &RunConfig, data_dir: &Path, out: &Path) -> Result<()> {
    cfg.save(out)?;
    let (data, _) = data_io::load_dataset(data_dir)?;
    let init = FcnModel::new(cfg.architecture.clone(), cfg.seed)?;
    let (model, history) = training::pretrain(&init, &data.train_labeled, &data.val, &cfg.train)?;
    write_run(out, cfg, &data, &model, &history)
}

pub fn joint(cfg: &RunConfig, data_dir: &Path, model_path: &Path, out: &Path) -> Result<()> {
    cfg.save(out)?;
    let (data, _) = data_io::load_dataset(data_dir)?;
    let init = load_checkpoint(model_path)?;
    let prior = prior_for(cfg, &data)?;
    let (model, history) = training::joint_train(&init, &data.train_labeled, &data.train_unlabeled, &data.val, prior.as_ref(), &cfg.train)?;
    write_run(out, cfg, &data, &model, &history)
}

/// PGM files under `input`, or `input` itself when it is a file.
fn input_images(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(input)
        .map_err(|e| io_error(input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Format {
            offset: 0,
            message: format!("no .pgm images in {}", input.display()),
        });
    }
    Ok(paths)
}

/// Copy of `image` with mask pixels that touch the background (4-neighbour)
/// set to full intensity.
pub fn overlay(image: &ScalarField2D, mask: &ScalarField2D) -> ScalarField2D {
    let (w, h) = image.dims();
    let inside = |x: usize, y: usize| mask.get(x, y) >= 0.5;
    ScalarField2D::from_fn(w, h, |x, y| {
        let edge = inside(x, y)
            && ((x > 0 && !inside(x - 1, y)) || (x + 1 < w && !inside(x + 1, y)) || (y > 0 && !inside(x, y - 1)) || (y + 1 < h && !inside(x, y + 1)));
        if edge {
            1.0
        } else {
            image.get(x, y)
        }
    })
}

pub fn infer(cfg: &RunConfig, model_path: &Path, input: &Path, prior: Option<&Path>, use_levelset: bool, out: &Path) -> Result<()> {
    cfg.save(out)?;
    let model = load_checkpoint(model_path)?;
    let ctx = match prior {
        Some(p) => Some(training::shape_context_from_mask(&data_io::load_pgm(p)?)?),
        None => None,
    };
    let params = cfg.train.refine_params();
    for path in input_images(input)? {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let image = data_io::load_pgm(&path)?;
        let r = training::infer(&model, &image, use_levelset, ctx.as_ref(), &params)?;
        data_io::save_f64(&r.probability, "probability", &out.join(format!("{stem}_prob.f64")))?;
        data_io::save_pgm(&r.mask, &out.join(format!("{stem}_mask.pgm")))?;
        data_io::save_pgm(&overlay(&image, &r.mask), &out.join(format!("{stem}_overlay.pgm")))?;
        info!("{stem}: {} object pixels", r.mask.sum());
    }
    Ok(())
}

/// Checkpoints of the three trained networks in the five-model grid.
pub struct GridModels<'a> {
    pub pretrained: &'a Path,
    pub joint: &'a Path,
    pub baseline: &'a Path,
}

pub enum EvalSource<'a> {
    Grid(GridModels<'a>),
    /// Directory of `<id>.pgm` or `<id>_mask.pgm` masks, scored under `name`.
    Predictions { dir: &'a Path, name: &'a str },
}

fn load_prediction(dir: &Path, id: &str) -> Result<ScalarField2D> {
    let plain = dir.join(format!("{id}.pgm"));
    if plain.is_file() {
        data_io::load_pgm(&plain)
    } else {
        data_io::load_pgm(&dir.join(format!("{id}_mask.pgm")))
    }
}

pub fn eval(cfg: &RunConfig, data_dir: &Path, source: EvalSource, out: &Path) -> Result<Vec<ModelScores>> {
    cfg.save(out)?;
    let (data, _) = data_io::load_dataset(data_dir)?;
    let scores = match source {
        EvalSource::Grid(paths) => {
            let models = ProtocolModels {
                pretrained: load_checkpoint(paths.pretrained)?,
                joint: load_checkpoint(paths.joint)?,
                baseline: load_checkpoint(paths.baseline)?,
                pretrain_history: Default::default(),
                joint_history: Default::default(),
                baseline_history: Default::default(),
            };
            let prior = prior_for(cfg, &data)?;
            training::evaluate_protocol(&models, &data.test, prior.as_ref(), &cfg.train.refine_params())?
        }
        EvalSource::Predictions { dir, name } => {
            let masks = data.test.iter().map(|s| load_prediction(dir, &s.id)).collect::<Result<Vec<_>>>()?;
            vec![training::score_masks(name, &data.test, &masks)?]
        }
    };
    let path = out.join("results.csv");
    let mut buf = Vec::new();
    training::write_results_csv(&scores, &mut buf).map_err(|e| io_error(&path, e))?;
    fs::write(&path, buf).map_err(|e| io_error(&path, e))?;
    for s in &scores {
        info!("{:<24} dice {:.4} iou {:.4}", s.model, s.mean_dice(), s.mean_iou());
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_marks_only_the_mask_rim() {
        let image = ScalarField2D::filled(5, 5, 0.2);
        let mask = ScalarField2D::from_fn(5, 5, |x, y| ((1..4).contains(&x) && (1..4).contains(&y)) as u8 as f64);
        let o = overlay(&image, &mask);
        let marked: usize = o.values().iter().filter(|&&v| v == 1.0).count();
        assert_eq!(marked, 8);
        assert_eq!(o.get(2, 2), 0.2);
        assert_eq!(o.get(0, 0), 0.2);
    }

    #[test]
    fn full_mask_touching_the_border_has_no_rim() {
        let image = ScalarField2D::filled(3, 3, 0.5);
        let o = overlay(&image, &ScalarField2D::filled(3, 3, 1.0));
        assert_eq!(o, image);
    }
}
