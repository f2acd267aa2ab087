//! Loss and gradients of a batch of clips.
//!
//! The kernel MLPs only see the jitter offset, so they are evaluated once
//! for every distinct offset in the batch on a small tape. Each clip is
//! then unrolled on its own tape with the predicted kernels as leaves.
//! The kernel gradients of all clips are summed in clip order and pushed
//! back through the MLP tape.

use std::sync::Arc;

use rayon::prelude::*;

use crate::data::FrameBundle;
use crate::error::{Error, Result};
use crate::model::{init_carry_graph, step_graph, Model};
use crate::raster::{l1_value, Raster, Real, Tape, Var};
use crate::warp::JitterOffset;

/// Mean absolute difference over all elements.
pub fn l1_loss(pred: &Raster, target: &Raster) -> Result<f32> {
    if !pred.same_shape(target) {
        return Err(Error::config(format!(
            "l1_loss: prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(l1_value(pred, target))
}

/// Where a conditioned convolution's kernel comes from.
enum KernelSource<T: Real> {
    /// One predicted row per distinct jitter of the batch.
    Mlp {
        tape: Tape<T>,
        leaves: Vec<(usize, Var)>,
        out: Var,
        width: usize,
    },
    Fixed(usize),
}

impl<T: Real> KernelSource<T> {
    fn build(model: &Model<T>, prefix: &str, jitters: &[JitterOffset]) -> Result<Self> {
        let Some(layers) = model.mlp_indices(prefix) else {
            return Ok(KernelSource::Fixed(model.kernel_index(prefix)));
        };
        let mut tape = Tape::new();
        let input: Vec<T> = jitters
            .iter()
            .flat_map(|j| [T::of(j.x as f64), T::of(j.y as f64)])
            .collect();
        let mut x = tape.constant(Raster::from_vec_unchecked(1, jitters.len(), 2, input)?);
        let mut leaves = Vec::with_capacity(2 * layers.len());
        for (i, &(wi, bi)) in layers.iter().enumerate() {
            let w = tape.leaf(Raster::vector(model.params.by_index(wi).data.clone()));
            let b = tape.leaf(Raster::vector(model.params.by_index(bi).data.clone()));
            leaves.push((wi, w));
            leaves.push((bi, b));
            x = tape.dense(x, w, b)?;
            if i + 1 < layers.len() {
                x = tape.relu(x)?;
            }
        }
        let width = tape.value(x).width();
        Ok(KernelSource::Mlp {
            tape,
            leaves,
            out: x,
            width,
        })
    }

    /// Kernel values for jitter slot `slot`.
    fn row(&self, model: &Model<T>, slot: usize) -> Vec<T> {
        match self {
            KernelSource::Mlp {
                tape, out, width, ..
            } => tape.value(*out).data()[slot * width..(slot + 1) * width].to_vec(),
            KernelSource::Fixed(i) => model.params.by_index(*i).data.clone(),
        }
    }

    /// Adds the gradients of the parameters behind this source, given the
    /// summed gradient of every row (or of the fixed kernel).
    fn backward(&self, rows: Vec<Vec<T>>, grads: &mut [Vec<T>]) -> Result<()> {
        match self {
            KernelSource::Mlp {
                tape,
                leaves,
                out,
                width,
            } => {
                let seed: Vec<T> = rows.into_iter().flatten().collect();
                let seed = Raster::from_vec_unchecked(1, seed.len() / width, *width, seed)?;
                let mut g = tape.backward_with_seed(*out, seed)?;
                for &(pi, var) in leaves {
                    if let Some(r) = g.take(var) {
                        add_into(&mut grads[pi], r.data());
                    }
                }
            }
            KernelSource::Fixed(i) => {
                let sum = rows.into_iter().next().expect("fixed kernel gradient");
                add_into(&mut grads[*i], &sum);
            }
        }
        Ok(())
    }

    fn slots(&self, n_jitters: usize) -> usize {
        match self {
            KernelSource::Mlp { .. } => n_jitters,
            KernelSource::Fixed(_) => 1,
        }
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

struct ClipResult<T> {
    loss: T,
    first: Vec<(usize, Vec<T>)>,
    last: Vec<(usize, Vec<T>)>,
    mids: Vec<Vec<T>>,
}

/// Unrolls one clip from a fresh carry and returns its mean per-frame L1
/// loss and the gradients of every kernel it used.
fn clip_pass<T: Real>(
    model: &Model<T>,
    first: &KernelSource<T>,
    last: &KernelSource<T>,
    jitters: &[JitterOffset],
    clip: &[FrameBundle],
) -> Result<ClipResult<T>> {
    let config = &model.config;
    let mut tape = Tape::new();
    let slot_of = |j: JitterOffset, src: &KernelSource<T>| match src {
        KernelSource::Mlp { .. } => jitters.iter().position(|x| *x == j).expect("jitter slot"),
        KernelSource::Fixed(_) => 0,
    };
    let mut first_vars: Vec<(usize, Var)> = Vec::new();
    let mut last_vars: Vec<(usize, Var)> = Vec::new();
    let kernel_var =
        |tape: &mut Tape<T>, src: &KernelSource<T>, vars: &mut Vec<(usize, Var)>, slot: usize| {
            if let Some(&(_, v)) = vars.iter().find(|(s, _)| *s == slot) {
                return v;
            }
            let v = tape.leaf(Raster::vector(src.row(model, slot)));
            vars.push((slot, v));
            v
        };
    let mids: Vec<Var> = model
        .mid_indices()
        .into_iter()
        .map(|i| tape.leaf(Raster::vector(model.params.by_index(i).data.clone())))
        .collect();
    let first_frame = clip.first().ok_or_else(|| Error::config("empty clip"))?;
    let mut carry = init_carry_graph(&mut tape, first_frame, config.scale)?;
    let mut losses = Vec::with_capacity(clip.len());
    for frame in clip {
        let target = frame
            .hr_target
            .as_ref()
            .ok_or_else(|| Error::config("training frame without HR target"))?;
        let fv = kernel_var(
            &mut tape,
            first,
            &mut first_vars,
            slot_of(frame.jitter, first),
        );
        let lv = kernel_var(&mut tape, last, &mut last_vars, slot_of(frame.jitter, last));
        let (y, next) = step_graph(&mut tape, config, fv, &mids, lv, frame, &carry)?;
        losses.push(tape.l1(y, Arc::new(target.cast()))?);
        carry = next;
    }
    let loss = tape.mean(&losses)?;
    let loss_value = tape.value(loss).data()[0];
    let mut g = tape.backward(loss)?;
    let mut take = |v: Var, len: usize| -> Vec<T> {
        g.take(v)
            .map(|r| r.into_vec())
            .unwrap_or_else(|| vec![T::zero(); len])
    };
    let first_len = config.first_kernel_len();
    let last_len = config.last_kernel_len();
    let mid_len = mids
        .first()
        .map(|_| config.features * config.features * 9 + config.features);
    Ok(ClipResult {
        loss: loss_value,
        first: first_vars
            .iter()
            .map(|&(s, v)| (s, take(v, first_len)))
            .collect(),
        last: last_vars
            .iter()
            .map(|&(s, v)| (s, take(v, last_len)))
            .collect(),
        mids: mids
            .iter()
            .map(|&v| take(v, mid_len.unwrap_or(0)))
            .collect(),
    })
}

/// Mean loss over `clips` and its gradient for every parameter, laid out
/// like `model.params`. Clips run in parallel; results are reduced in clip
/// order so the output does not depend on the thread count.
pub fn batch_gradients<T: Real>(
    model: &Model<T>,
    clips: &[Vec<FrameBundle>],
) -> Result<(T, Vec<Vec<T>>)> {
    if clips.is_empty() {
        return Err(Error::config("batch without clips"));
    }
    let mut jitters: Vec<JitterOffset> = Vec::new();
    for f in clips.iter().flatten() {
        if !jitters.contains(&f.jitter) {
            jitters.push(f.jitter);
        }
    }
    let first = KernelSource::build(model, "first", &jitters)?;
    let last = KernelSource::build(model, "last", &jitters)?;
    let results: Vec<ClipResult<T>> = clips
        .par_iter()
        .map(|clip| clip_pass(model, &first, &last, &jitters, clip))
        .collect::<Result<_>>()?;

    let scale = T::one() / T::of(clips.len() as f64);
    let mut grads = model.params.zeros_like();
    let mut loss = T::zero();
    let mut first_rows =
        vec![vec![T::zero(); model.config.first_kernel_len()]; first.slots(jitters.len())];
    let mut last_rows =
        vec![vec![T::zero(); model.config.last_kernel_len()]; last.slots(jitters.len())];
    let mid_idx = model.mid_indices();
    for r in &results {
        loss += r.loss;
        for (slot, g) in &r.first {
            add_into(&mut first_rows[*slot], g);
        }
        for (slot, g) in &r.last {
            add_into(&mut last_rows[*slot], g);
        }
        for (i, g) in mid_idx.iter().zip(&r.mids) {
            add_into(&mut grads[*i], g);
        }
    }
    let scale_rows = |rows: &mut Vec<Vec<T>>| {
        rows.iter_mut().flatten().for_each(|v| *v = *v * scale);
    };
    scale_rows(&mut first_rows);
    scale_rows(&mut last_rows);
    for i in &mid_idx {
        grads[*i].iter_mut().for_each(|v| *v = *v * scale);
    }
    first.backward(first_rows, &mut grads)?;
    last.backward(last_rows, &mut grads)?;
    Ok((loss * scale, grads))
}

/// Loss and gradients of a single clip.
pub fn train_clip<T: Real>(model: &Model<T>, clip: &[FrameBundle]) -> Result<(T, Vec<Vec<T>>)> {
    batch_gradients(model, &[clip.to_vec()])
}

/// Mean per-frame L1 of a rollout, without gradients.
pub fn clip_loss<T: Real>(model: &Model<T>, clip: &[FrameBundle]) -> Result<T> {
    let cache = model.kernel_cache();
    let first = clip.first().ok_or_else(|| Error::config("empty clip"))?;
    let mut carry = crate::model::init_carry::<T>(first, model.config.scale)?;
    let mut total = T::zero();
    for f in clip {
        let kernels = model.kernels_for(&cache, f.jitter);
        let (y, next) = model.step(&kernels, f, &carry)?;
        let target = f
            .hr_target
            .as_ref()
            .ok_or_else(|| Error::config("frame without HR target"))?;
        total += l1_value(&y, &target.cast());
        carry = next;
    }
    Ok(total / T::of(clip.len() as f64))
}
