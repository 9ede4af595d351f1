//! Overfitting a sine network to one cube, architecture search under a rate
//! budget, and the end-to-end `compress` pipeline.

use std::time::Instant;

use rayon::prelude::*;

use crate::codec::{dequantize, quantize, reconstruct_normalized, render_normalized, EncodedImage, Payload};
use crate::cube::{normalize, HyperCube};
use crate::nn::mlp_loss_and_grad;
use crate::optim::{AdamState, DEFAULT_LR};
use crate::quality::{self, bpppb, psnr_from_mse, Distortion, QualityReport};
use crate::sampler::{build_grid, full_batch, gather_batch, sample_indices, SampleConfig};
use crate::siren::{init_params, param_count, ParamVector, SirenSpec};
use crate::{Error, Result};

pub const DEFAULT_ITERATIONS: usize = 10_000;
pub const DEFAULT_EVAL_EVERY: usize = 100;
pub const DEFAULT_PROBE_ITERATIONS: usize = 2_000;
pub const DEFAULT_LAYER_CHOICES: [usize; 5] = [5, 10, 15, 20, 25];
pub const DEFAULT_WIDTH_CHOICES: [usize; 4] = [20, 40, 60, 100];

/// Storage precision of the emitted parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Full32,
    Half16,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Precision::Full32 => 32,
            Precision::Half16 => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr: f64,
    /// Epochs between full-grid PSNR evaluations. The last epoch is always
    /// evaluated.
    pub eval_every: usize,
    /// Windowed sampling; `None` trains on every pixel.
    pub sample: Option<SampleConfig>,
    /// Seeds the parameter initialization.
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            lr: DEFAULT_LR,
            eval_every: DEFAULT_EVAL_EVERY,
            sample: None,
            seed: 0,
            precision: Precision::Full32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if let Some(s) = &self.sample {
            s.validate()?;
        }
        Ok(())
    }
}

/// Best parameters seen during training, by full-grid PSNR.
#[derive(Debug, Clone, PartialEq)]
pub struct BestSnapshot {
    pub params: ParamVector<f32>,
    pub psnr: f64,
    /// Completed epochs when the snapshot was taken.
    pub epoch: usize,
    /// Every evaluation as `(completed epochs, psnr)`.
    pub history: Vec<(usize, f64)>,
}

impl BestSnapshot {
    /// Running maximum of the evaluation history: the PSNR of the retained
    /// snapshot after each evaluation.
    pub fn retained_series(&self) -> Vec<f64> {
        self.history
            .iter()
            .scan(f64::NEG_INFINITY, |best, &(_, p)| {
                *best = best.max(p);
                Some(*best)
            })
            .collect()
    }

    pub fn final_psnr(&self) -> f64 {
        self.history.last().map(|&(_, p)| p).unwrap_or(f64::NEG_INFINITY)
    }
}

/// Full-grid PSNR (peak 1) of `params` as they would be decoded at
/// `precision`.
pub fn evaluate_psnr(spec: &SirenSpec, params: &[f32], cube: &HyperCube, precision: Precision) -> Result<f64> {
    let rounded;
    let params = match precision {
        Precision::Full32 => params,
        Precision::Half16 => {
            rounded = dequantize(&quantize(params)?);
            &rounded
        }
    };
    let recon = render_normalized(spec, params, cube.width(), cube.height())?;
    Ok(psnr_from_mse(quality::mse_slices(cube.data(), recon.data()), 1.0))
}

pub fn overfit(cube: &HyperCube, spec: &SirenSpec, cfg: &TrainConfig) -> Result<BestSnapshot> {
    overfit_with(cube, spec, cfg, |_, _| {})
}

/// [`overfit`] with a callback invoked after each evaluation with
/// `(completed epochs, psnr)`.
pub fn overfit_with(
    cube: &HyperCube,
    spec: &SirenSpec,
    cfg: &TrainConfig,
    mut on_eval: impl FnMut(usize, f64),
) -> Result<BestSnapshot> {
    cfg.validate()?;
    if cube.bands() != spec.out_dim {
        return Err(Error::Dimension(format!(
            "cube has {} bands, network outputs {}",
            cube.bands(),
            spec.out_dim
        )));
    }
    let (lo, hi) = cube.value_range();
    if lo < 0.0 || hi > 1.0 {
        return Err(Error::Config(format!(
            "cube must be normalized to [0, 1], range is ({lo}, {hi})"
        )));
    }

    let grid = build_grid(cube.width(), cube.height())?;
    let full = match cfg.sample {
        None => Some(full_batch(cube, &grid)?),
        Some(_) => None,
    };
    let mut params = init_params(spec, cfg.seed);
    let mut adam = AdamState::<f32>::new(params.len(), cfg.lr);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ParamVector<f32>)> = None;

    for epoch in 0..cfg.iterations {
        let sampled;
        let batch = match (&full, &cfg.sample) {
            (Some(b), _) => b,
            (None, Some(s)) => {
                let idx = sample_indices(cube.width(), cube.height(), s, epoch as u64)?;
                sampled = gather_batch(cube, &grid, &idx)?;
                &sampled
            }
            (None, None) => unreachable!(),
        };
        let (loss, grads) = mlp_loss_and_grad(spec, &params, batch)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, loss });
        }
        adam.step(&mut params, &grads)?;

        let done = epoch + 1;
        if done % cfg.eval_every == 0 || done == cfg.iterations {
            let psnr = evaluate_psnr(spec, &params, cube, cfg.precision)?;
            history.push((done, psnr));
            on_eval(done, psnr);
            if best.as_ref().is_none_or(|(b, _, _)| psnr > *b) {
                best = Some((psnr, done, params.clone()));
            }
        }
    }

    let (psnr, epoch, params) = best.expect("the final epoch is always evaluated");
    Ok(BestSnapshot {
        params,
        psnr,
        epoch,
        history,
    })
}

/// Outcome of one short training probe.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub spec: SirenSpec,
    pub bpppb: f64,
    pub psnr: f64,
}

/// The default search grid, layer count major.
pub fn default_candidates() -> Vec<(usize, usize)> {
    DEFAULT_LAYER_CHOICES
        .iter()
        .flat_map(|&n| DEFAULT_WIDTH_CHOICES.iter().map(move |&w| (n, w)))
        .collect()
}

/// Candidates whose stored size fits `budget_bpppb` and whose shape fits
/// the file header, paired with their rate.
pub fn feasible_candidates(
    cube: &HyperCube,
    budget_bpppb: f64,
    candidates: &[(usize, usize)],
    precision: Precision,
) -> Vec<(SirenSpec, f64)> {
    candidates
        .iter()
        .filter(|&&(n, w)| n <= u8::MAX as usize && w <= u8::MAX as usize)
        .filter_map(|&(n, w)| SirenSpec::new(n, w, cube.bands()).ok())
        .map(|spec| {
            let rate = bpppb(
                param_count(&spec),
                precision.bits(),
                cube.width(),
                cube.height(),
                cube.bands(),
            );
            (spec, rate)
        })
        .filter(|&(_, rate)| rate <= budget_bpppb)
        .collect()
}

/// Trains every feasible candidate with `probe_cfg`. Probes run in
/// parallel and share nothing.
pub fn probe_candidates(
    cube: &HyperCube,
    budget_bpppb: f64,
    candidates: &[(usize, usize)],
    probe_cfg: &TrainConfig,
) -> Result<Vec<Probe>> {
    let feasible = feasible_candidates(cube, budget_bpppb, candidates, probe_cfg.precision);
    if feasible.is_empty() {
        return Err(Error::EmptyFeasibleSet { budget: budget_bpppb });
    }
    feasible
        .into_par_iter()
        .map(|(spec, rate)| {
            let snap = overfit(cube, &spec, probe_cfg)?;
            Ok(Probe {
                spec,
                bpppb: rate,
                psnr: snap.psnr,
            })
        })
        .collect()
}

/// Highest PSNR wins; ties go to fewer parameters, then fewer layers.
pub fn select_best(probes: &[Probe]) -> Option<&Probe> {
    probes.iter().reduce(|best, p| {
        let better = p.psnr > best.psnr
            || (p.psnr == best.psnr
                && (param_count(&p.spec), p.spec.n_hidden) < (param_count(&best.spec), best.spec.n_hidden));
        if better {
            p
        } else {
            best
        }
    })
}

/// Picks the candidate shape with the best short-run PSNR within the rate
/// budget. `cube` must be normalized.
pub fn architecture_search(
    cube: &HyperCube,
    budget_bpppb: f64,
    candidates: &[(usize, usize)],
    probe_cfg: &TrainConfig,
) -> Result<SirenSpec> {
    let feasible = feasible_candidates(cube, budget_bpppb, candidates, probe_cfg.precision);
    match feasible.as_slice() {
        [] => Err(Error::EmptyFeasibleSet { budget: budget_bpppb }),
        [(only, _)] => Ok(*only),
        _ => {
            let probes = probe_candidates(cube, budget_bpppb, candidates, probe_cfg)?;
            Ok(select_best(&probes).expect("non-empty").spec)
        }
    }
}

/// How `compress` picks the network shape.
#[derive(Debug, Clone, PartialEq)]
pub enum CompressTarget {
    Spec {
        n_hidden: usize,
        hidden_width: usize,
    },
    Budget {
        bpppb: f64,
        candidates: Vec<(usize, usize)>,
        probe_iterations: usize,
    },
}

impl CompressTarget {
    /// Budget search over the default candidate grid.
    pub fn budget(bpppb: f64) -> Self {
        CompressTarget::Budget {
            bpppb,
            candidates: default_candidates(),
            probe_iterations: DEFAULT_PROBE_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Compressed {
    pub encoded: EncodedImage,
    pub report: QualityReport,
    pub snapshot: BestSnapshot,
}

/// Normalizes, optionally searches, overfits, quantizes and packs `cube`,
/// then decodes the result once to measure quality in normalized units.
pub fn compress(cube: &HyperCube, target: &CompressTarget, cfg: &TrainConfig) -> Result<Compressed> {
    compress_with(cube, target, cfg, |_, _| {})
}

pub fn compress_with(
    cube: &HyperCube,
    target: &CompressTarget,
    cfg: &TrainConfig,
    on_eval: impl FnMut(usize, f64),
) -> Result<Compressed> {
    let start = Instant::now();
    cfg.validate()?;
    for (name, v) in [
        ("width", cube.width()),
        ("height", cube.height()),
        ("bands", cube.bands()),
    ] {
        if v > u16::MAX as usize {
            return Err(Error::Config(format!(
                "{name} {v} exceeds the format limit of {}",
                u16::MAX
            )));
        }
    }
    let (normalized, scale) = normalize(cube);
    let spec = match target {
        CompressTarget::Spec { n_hidden, hidden_width } => SirenSpec::new(*n_hidden, *hidden_width, cube.bands())?,
        CompressTarget::Budget {
            bpppb,
            candidates,
            probe_iterations,
        } => {
            let probe_cfg = TrainConfig {
                iterations: *probe_iterations,
                ..cfg.clone()
            };
            architecture_search(&normalized, *bpppb, candidates, &probe_cfg)?
        }
    };
    if spec.n_hidden > u8::MAX as usize || spec.hidden_width > u8::MAX as usize {
        return Err(Error::Config(format!(
            "network {}x{} exceeds the format limit of 255 layers / width 255",
            spec.n_hidden, spec.hidden_width
        )));
    }

    let snapshot = overfit_with(&normalized, &spec, cfg, on_eval)?;
    let payload = match cfg.precision {
        Precision::Full32 => Payload::Full(snapshot.params.0.clone()),
        Precision::Half16 => Payload::Half(quantize(&snapshot.params)?),
    };
    let encoded = EncodedImage::new(&spec, cube.width(), cube.height(), scale, payload)?;
    let compress_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let recon = reconstruct_normalized(&encoded)?;
    let decompress_seconds = start.elapsed().as_secs_f64();
    let d = Distortion::measure(&normalized, &recon, 1.0)?;

    let report = QualityReport {
        mse: d.mse,
        psnr: d.psnr,
        ssim_mean: d.ssim_mean,
        bpppb: encoded.bpppb(),
        compress_seconds,
        decompress_seconds,
    };
    Ok(Compressed {
        encoded,
        report,
        snapshot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{synth_cube, SynthKind};

    fn quick(iterations: usize) -> TrainConfig {
        TrainConfig {
            iterations,
            eval_every: 10,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            iterations: 0,
            ..quick(1)
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            eval_every: 0,
            ..quick(1)
        }
        .validate()
        .is_err());
        assert!(TrainConfig { lr: -1.0, ..quick(1) }.validate().is_err());
    }

    #[test]
    fn rejects_mismatched_or_unnormalized_cubes() {
        let cube = synth_cube(SynthKind::Random, 4, 4, 3, 0).unwrap();
        let spec = SirenSpec::new(1, 4, 2).unwrap();
        assert!(matches!(overfit(&cube, &spec, &quick(5)), Err(Error::Dimension(_))));
        let raw = HyperCube::new(2, 1, 1, vec![0.0, 3.0]).unwrap();
        let spec = SirenSpec::new(1, 4, 1).unwrap();
        assert!(overfit(&raw, &spec, &quick(5)).is_err());
    }

    #[test]
    fn final_epoch_is_always_evaluated() {
        let cube = synth_cube(SynthKind::SmoothGradient, 6, 5, 2, 0).unwrap();
        let spec = SirenSpec::new(1, 8, 2).unwrap();
        let snap = overfit(
            &cube,
            &spec,
            &TrainConfig {
                eval_every: 7,
                ..quick(25)
            },
        )
        .unwrap();
        let epochs: Vec<usize> = snap.history.iter().map(|h| h.0).collect();
        assert_eq!(epochs, vec![7, 14, 21, 25]);
        assert!(snap.psnr >= snap.final_psnr());
    }

    #[test]
    fn snapshot_psnr_matches_its_params() {
        let cube = synth_cube(SynthKind::BandSinusoid, 8, 8, 3, 1).unwrap();
        let spec = SirenSpec::new(2, 8, 3).unwrap();
        for precision in [Precision::Full32, Precision::Half16] {
            let snap = overfit(&cube, &spec, &TrainConfig { precision, ..quick(40) }).unwrap();
            assert_eq!(evaluate_psnr(&spec, &snap.params, &cube, precision).unwrap(), snap.psnr);
            assert!(snap.history.iter().any(|&(e, p)| e == snap.epoch && p == snap.psnr));
        }
    }

    #[test]
    fn default_candidate_grid() {
        let c = default_candidates();
        assert_eq!(c.len(), 20);
        assert!(c.contains(&(15, 40)) && c.contains(&(10, 20)) && c.contains(&(20, 60)) && c.contains(&(25, 100)));
    }

    #[test]
    fn tie_break_prefers_smaller_networks() {
        let p = |n, w, psnr| Probe {
            spec: SirenSpec::new(n, w, 4).unwrap(),
            bpppb: 0.0,
            psnr,
        };
        let probes = [p(3, 10, 30.0), p(2, 10, 30.0), p(1, 40, 29.0)];
        assert_eq!(select_best(&probes).unwrap().spec.n_hidden, 2);
        let probes = [p(1, 40, 31.0), p(2, 10, 30.0)];
        assert_eq!(select_best(&probes).unwrap().spec.hidden_width, 40);
    }

    #[test]
    fn search_filters_by_budget() {
        let cube = synth_cube(SynthKind::SmoothGradient, 8, 8, 2, 0).unwrap();
        // (1,2): 2·2+2 + 2·2+2 = 12 params → 12·32/128 = 3 bpppb
        // (1,4): 24 params → 6 bpppb, (2,4): 44 params → 11 bpppb
        let cands = [(1, 2), (1, 4), (2, 4)];
        let feasible = feasible_candidates(&cube, 6.0, &cands, Precision::Full32);
        assert_eq!(feasible.len(), 2);
        assert!(matches!(
            architecture_search(&cube, 1.0, &cands, &quick(5)),
            Err(Error::EmptyFeasibleSet { .. })
        ));
        // One feasible candidate is returned as is.
        let only = architecture_search(&cube, 3.0, &cands, &quick(5)).unwrap();
        assert_eq!((only.n_hidden, only.hidden_width), (1, 2));
        let chosen = architecture_search(&cube, 6.0, &cands, &quick(20)).unwrap();
        assert!(chosen.hidden_width <= 4 && chosen.n_hidden == 1);
    }

    #[test]
    fn oversized_widths_are_infeasible() {
        let cube = synth_cube(SynthKind::SmoothGradient, 8, 8, 2, 0).unwrap();
        assert!(feasible_candidates(&cube, f64::INFINITY, &[(1, 300)], Precision::Full32).is_empty());
    }
}
