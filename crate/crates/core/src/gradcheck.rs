//! Central finite-difference checks of the tape in f64.
//!
//! Each op is checked through the linear functional `Σ seed ⊙ output` with
//! a random seed, so one reverse pass yields the whole vector-Jacobian
//! product. Inputs are placed away from kinks (ReLU at 0, L1 at the target).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{jitter_for_frame, FrameBundle};
use crate::error::{Error, Result};
use crate::model::{init_carry_graph, step_graph, Model, ModelConfig};
use crate::raster::{ConvKernel, Raster, Tape, Var};
use crate::train::train_clip;
use crate::warp::{JitterOffset, MotionField};

/// Step for the per-op checks.
pub const OP_STEP: f64 = 1e-3;
pub const OP_TOLERANCE: f64 = 1e-4;
/// Initial step for the rollout check.
pub const ROLLOUT_STEP: f64 = 1e-3;
/// The rollout step is not halved below this.
const MIN_STEP: f64 = 1e-9;
pub const ROLLOUT_TOLERANCE: f64 = 1e-3;
/// Denominator floor of the relative error.
const FLOOR: f64 = 1e-8;
/// Coordinates checked per input array.
const COORDS: usize = 24;

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    pub tolerance: f64,
    /// Number of scalar derivatives compared.
    pub checked: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn random(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize, lo: f64, hi: f64) -> Raster<f64> {
    Raster::from_fn(c, h, w, |_, _, _| rng.gen_range(lo..hi))
}

/// Values in ±[0.05, 1], away from zero.
fn away_from_zero(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Raster<f64> {
    Raster::from_fn(c, h, w, |_, _, _| {
        let m = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

type Build = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

fn objective(inputs: &[Raster<f64>], build: &Build, seed: &Raster<f64>) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|r| tape.leaf(r.clone())).collect();
    let out = build(&mut tape, &vars)?;
    Ok(tape
        .value(out)
        .data()
        .iter()
        .zip(seed.data())
        .map(|(a, b)| a * b)
        .sum())
}

fn check_op(
    name: &str,
    inputs: Vec<Raster<f64>>,
    build: &Build,
    rng: &mut ChaCha8Rng,
) -> Result<CheckResult> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|r| tape.leaf(r.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let (c, h, w) = tape.value(out).shape();
    let seed = random(rng, c, h, w, -1.0, 1.0);
    let grads = tape.backward_with_seed(out, seed.clone())?;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        let n = inputs[k].len();
        let picks: Vec<usize> = if n <= COORDS {
            (0..n).collect()
        } else {
            (0..COORDS).map(|_| rng.gen_range(0..n)).collect()
        };
        for j in picks {
            let mut plus = inputs.clone();
            plus[k].data_mut()[j] += OP_STEP;
            let mut minus = inputs.clone();
            minus[k].data_mut()[j] -= OP_STEP;
            let numeric = (objective(&plus, build, &seed)? - objective(&minus, build, &seed)?)
                / (2.0 * OP_STEP);
            worst = worst.max(rel_error(analytic[j], numeric));
            checked += 1;
        }
    }
    Ok(CheckResult {
        name: name.into(),
        max_rel_error: worst,
        tolerance: OP_TOLERANCE,
        checked,
    })
}

/// Per-op checks on random small inputs.
pub fn op_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let (ci, co) = (3, 4);
    let x = random(&mut rng, ci, 6, 5, -1.0, 1.0);
    let k = random(
        &mut rng,
        1,
        1,
        ConvKernel::<f64>::flat_len(co, ci),
        -0.5,
        0.5,
    );
    out.push(check_op(
        "conv3x3",
        vec![x, k],
        &move |t, v| t.conv3x3(v[0], v[1], co),
        &mut rng,
    )?);

    let x = away_from_zero(&mut rng, 2, 4, 4);
    out.push(check_op("relu", vec![x], &|t, v| t.relu(v[0]), &mut rng)?);

    let x = random(&mut rng, 2, 4, 4, -3.0, 3.0);
    out.push(check_op(
        "sigmoid",
        vec![x],
        &|t, v| t.sigmoid(v[0]),
        &mut rng,
    )?);

    let x = random(&mut rng, 8, 3, 2, -1.0, 1.0);
    out.push(check_op(
        "depth_to_space",
        vec![x],
        &|t, v| t.depth_to_space(v[0], 2),
        &mut rng,
    )?);

    let x = random(&mut rng, 2, 6, 9, -1.0, 1.0);
    out.push(check_op(
        "space_to_depth",
        vec![x],
        &|t, v| t.space_to_depth(v[0], 3),
        &mut rng,
    )?);

    let src = random(&mut rng, 3, 5, 6, -1.0, 1.0);
    let pos = Raster::from_fn(2, 4, 7, |c, _, _| {
        // Fractional positions, including some outside the source.
        let hi = if c == 0 { 6.5 } else { 5.5 };
        rng.gen_range(-1.0..hi) + 0.013
    });
    out.push(check_op(
        "sample",
        vec![src],
        &move |t, v| t.sample(v[0], &pos),
        &mut rng,
    )?);

    let a = random(&mut rng, 2, 3, 4, -1.0, 1.0);
    let b = random(&mut rng, 1, 3, 4, -1.0, 1.0);
    out.push(check_op(
        "concat",
        vec![a, b],
        &|t, v| t.concat(&[v[0], v[1]]),
        &mut rng,
    )?);

    let x = random(&mut rng, 5, 3, 3, -1.0, 1.0);
    out.push(check_op(
        "slice_channels",
        vec![x],
        &|t, v| t.slice_channels(v[0], 1, 3),
        &mut rng,
    )?);

    let alpha = random(&mut rng, 1, 4, 4, 0.0, 1.0);
    let cand = random(&mut rng, 3, 4, 4, 0.0, 1.0);
    let hist = random(&mut rng, 3, 4, 4, 0.0, 1.0);
    out.push(check_op(
        "blend",
        vec![alpha, cand, hist],
        &|t, v| t.blend(v[0], v[1], v[2]),
        &mut rng,
    )?);

    let x = random(&mut rng, 1, 3, 5, -1.0, 1.0);
    let w = random(&mut rng, 1, 1, 4 * 5, -1.0, 1.0);
    let b = random(&mut rng, 1, 1, 4, -1.0, 1.0);
    out.push(check_op(
        "dense",
        vec![x, w, b],
        &|t, v| t.dense(v[0], v[1], v[2]),
        &mut rng,
    )?);

    let x = random(&mut rng, 1, 3, 4, -1.0, 1.0);
    out.push(check_op("row", vec![x], &|t, v| t.row(v[0], 1), &mut rng)?);

    let target = random(&mut rng, 2, 3, 3, -1.0, 1.0);
    let offset = away_from_zero(&mut rng, 2, 3, 3);
    let pred = Raster::from_fn(2, 3, 3, |c, y, x| target.get(c, y, x) + offset.get(c, y, x));
    let target = Arc::new(target);
    out.push(check_op(
        "l1",
        vec![pred],
        &move |t, v| t.l1(v[0], target.clone()),
        &mut rng,
    )?);

    let s: Vec<Raster<f64>> = (0..3)
        .map(|_| random(&mut rng, 1, 1, 1, -1.0, 1.0))
        .collect();
    out.push(check_op("mean", s, &|t, v| t.mean(v), &mut rng)?);

    Ok(out)
}

/// Random frames with small smooth motion and Halton jitter.
pub fn random_clip(seed: u64, frames: usize, lr: usize, scale: usize) -> Result<Vec<FrameBundle>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hr = lr * scale;
    (0..frames)
        .map(|t| {
            let (vx, vy) = (rng.gen_range(-1.5..1.5f32), rng.gen_range(-1.5..1.5f32));
            let ripple = rng.gen_range(0.0..0.5f32);
            let mv = Raster::from_fn(2, lr, lr, |c, y, x| {
                let wave = ripple * ((x as f32 * 0.7 + y as f32 * 0.3).sin());
                if c == 0 {
                    vx + wave
                } else {
                    vy - wave
                }
            });
            Ok(FrameBundle {
                lr_color: Raster::from_fn(3, lr, lr, |_, _, _| rng.gen_range(0.0..1.0)),
                lr_depth: Raster::from_fn(1, lr, lr, |_, _, _| rng.gen_range(0.1..0.9)),
                lr_motion: MotionField::new(mv)?,
                jitter: jitter_for_frame(t),
                hr_target: Some(Raster::from_fn(3, hr, hr, |_, _, _| {
                    rng.gen_range(0.0..1.0)
                })),
            })
        })
        .collect()
}

/// The gradcheck model: `f`=4, `m`=1, S=2 with narrow kernel MLPs. The last
/// MLP layer is randomized so every parameter receives gradient, and all
/// biases get small random values: with zero biases, dead inputs put ReLU
/// pre-activations exactly on the kink.
pub fn tiny_model(seed: u64) -> Result<Model<f64>> {
    let mut config = ModelConfig::custom(2, 4, 1);
    config.mlp_hidden = 32;
    let mut model = Model::init(config, seed)?.cast::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for prefix in ["first", "last"] {
        let layers = model.mlp_indices(prefix).expect("conditioned");
        let (wi, _) = *layers.last().unwrap();
        let fan_in = model.config.mlp_hidden as f64;
        let bound = 0.1 * (6.0 / fan_in).sqrt();
        for v in model.params.by_index_mut(wi).data.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        for &(_, bi) in &layers {
            for v in model.params.by_index_mut(bi).data.iter_mut() {
                *v += rng.gen_range(-0.05..0.05);
            }
        }
    }
    let taps = model.config.features * model.config.features * 9;
    for i in model.mid_indices() {
        for v in model.params.by_index_mut(i).data[taps..].iter_mut() {
            *v = rng.gen_range(-0.05..0.05);
        }
    }
    Ok(model)
}

/// Kernel rows for every jitter slot, computed on `tape` as constants.
fn kernel_rows(
    tape: &mut Tape<f64>,
    model: &Model<f64>,
    prefix: &str,
    jitters: &[JitterOffset],
) -> Result<Vec<Var>> {
    let Some(layers) = model.mlp_indices(prefix) else {
        let k = tape.constant(Raster::vector(
            model
                .params
                .by_index(model.kernel_index(prefix))
                .data
                .clone(),
        ));
        return Ok(vec![k; jitters.len()]);
    };
    let input: Vec<f64> = jitters
        .iter()
        .flat_map(|j| [j.x as f64, j.y as f64])
        .collect();
    let mut x = tape.constant(Raster::from_vec_unchecked(1, jitters.len(), 2, input)?);
    for (i, &(wi, bi)) in layers.iter().enumerate() {
        let w = tape.constant(Raster::vector(model.params.by_index(wi).data.clone()));
        let b = tape.constant(Raster::vector(model.params.by_index(bi).data.clone()));
        x = tape.dense(x, w, b)?;
        if i + 1 < layers.len() {
            x = tape.relu(x)?;
        }
    }
    (0..jitters.len()).map(|s| tape.row(x, s)).collect()
}

/// Clip loss evaluated on a constant tape, with the kink signature of the
/// evaluation.
pub fn rollout_loss(model: &Model<f64>, clip: &[FrameBundle]) -> Result<(f64, u64)> {
    let mut jitters: Vec<JitterOffset> = Vec::new();
    for f in clip {
        if !jitters.contains(&f.jitter) {
            jitters.push(f.jitter);
        }
    }
    let mut tape = Tape::new();
    let first = kernel_rows(&mut tape, model, "first", &jitters)?;
    let last = kernel_rows(&mut tape, model, "last", &jitters)?;
    let mids: Vec<Var> = model
        .mid_indices()
        .into_iter()
        .map(|i| tape.constant(Raster::vector(model.params.by_index(i).data.clone())))
        .collect();
    let head = clip.first().ok_or_else(|| Error::config("empty clip"))?;
    let mut carry = init_carry_graph(&mut tape, head, model.config.scale)?;
    let mut losses = Vec::with_capacity(clip.len());
    for f in clip {
        let slot = jitters.iter().position(|j| *j == f.jitter).expect("slot");
        let (y, next) = step_graph(
            &mut tape,
            &model.config,
            first[slot],
            &mids,
            last[slot],
            f,
            &carry,
        )?;
        let target = f
            .hr_target
            .as_ref()
            .ok_or_else(|| Error::config("frame without HR target"))?;
        losses.push(tape.l1(y, Arc::new(target.cast()))?);
        carry = next;
    }
    let loss = tape.mean(&losses)?;
    Ok((tape.value(loss).data()[0], tape.kink_signature()))
}

/// Five-point central difference of the clip loss in parameter `(i, j)`.
/// The step starts at [`ROLLOUT_STEP`] and halves until no ReLU input or
/// L1 residual changes sign at any stencil point, so the stencil stays on
/// one smooth piece of the function.
fn rollout_difference(
    model: &Model<f64>,
    clip: &[FrameBundle],
    base: u64,
    i: usize,
    j: usize,
) -> Result<f64> {
    let mut h = ROLLOUT_STEP;
    loop {
        let mut values = [0.0; 4];
        let mut smooth = true;
        for (k, offset) in [2.0, 1.0, -1.0, -2.0].into_iter().enumerate() {
            let mut m = model.clone();
            m.params.by_index_mut(i).data[j] += offset * h;
            let (f, sig) = rollout_loss(&m, clip)?;
            values[k] = f;
            smooth &= sig == base;
        }
        if smooth || h < MIN_STEP {
            if !smooth {
                log::warn!("parameter {i}[{j}]: no kink-free step down to {h:e}");
            }
            let [f2, f1, m1, m2] = values;
            return Ok((8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * h));
        }
        h *= 0.5;
    }
}

/// Full-clip loss gradient of the tiny model against finite differences.
pub fn rollout_check(seed: u64, frames: usize) -> Result<CheckResult> {
    let model = tiny_model(seed)?;
    let clip = random_clip(seed.wrapping_add(1), frames, 12, 2)?;
    let (_, grads) = train_clip(&model, &clip)?;
    let (_, base) = rollout_loss(&model, &clip)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut worst = 0.0f64;
    let mut checked = 0;
    for i in 0..model.params.len() {
        let n = model.params.by_index(i).data.len();
        let picks: Vec<usize> = if n <= 4 {
            (0..n).collect()
        } else {
            (0..4).map(|_| rng.gen_range(0..n)).collect()
        };
        for j in picks {
            let numeric = rollout_difference(&model, &clip, base, i, j)?;
            let e = rel_error(grads[i][j], numeric);
            log::debug!(
                "{}[{j}]: analytic {:e}, numeric {numeric:e}, rel {e:e}",
                model.params.by_index(i).name,
                grads[i][j]
            );
            worst = worst.max(e);
            checked += 1;
        }
    }
    Ok(CheckResult {
        name: format!("rollout ({frames} frames)"),
        max_rel_error: worst,
        tolerance: ROLLOUT_TOLERANCE,
        checked,
    })
}

/// All per-op checks followed by the 16-frame rollout.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = op_checks(seed)?;
    out.push(rollout_check(seed, 16)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_matches_finite_differences() {
        for seed in 0..3 {
            for r in op_checks(seed).unwrap() {
                assert!(r.passed(), "seed {seed}: {r:?}");
                assert!(r.checked > 0);
            }
        }
    }

    #[test]
    fn tape_rollout_loss_matches_inference() {
        let model = tiny_model(3).unwrap();
        let clip = random_clip(4, 5, 12, 2).unwrap();
        let (tape_loss, _) = rollout_loss(&model, &clip).unwrap();
        let inference = crate::train::clip_loss(&model, &clip).unwrap();
        assert!((tape_loss - inference).abs() <= 1e-12 * inference.abs());
    }

    #[test]
    fn short_rollout_matches_finite_differences() {
        let r = rollout_check(7, 3).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
