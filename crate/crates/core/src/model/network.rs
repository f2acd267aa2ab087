use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::data::{jitter_sequence, FrameBundle, JITTER_PERIOD};
use crate::error::{Error, Result};
use crate::raster::{
    blend_values, dense_rows, ConvKernel, Param, ParamStore, Raster, Real, Tape, Var,
};
use crate::warp::{history_motion, Carry, JitterOffset, WarpedHistory};

/// Flat `taps ++ bias` kernels of the first and last convolution for one
/// jitter offset.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelPair<T = f32> {
    pub first: Vec<T>,
    pub last: Vec<T>,
}

/// Kernels for every phase of the jitter sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelCache<T = f32> {
    jitters: [JitterOffset; JITTER_PERIOD],
    pairs: Vec<KernelPair<T>>,
}

impl<T: Real> KernelCache<T> {
    /// Kernels of frame `index` (phase `index mod 16`).
    pub fn get(&self, index: usize) -> &KernelPair<T> {
        &self.pairs[index % JITTER_PERIOD]
    }

    /// Kernels for an offset that is exactly one of the sequence's.
    pub fn for_jitter(&self, jitter: JitterOffset) -> Option<&KernelPair<T>> {
        self.jitters
            .iter()
            .position(|j| *j == jitter)
            .map(|i| &self.pairs[i])
    }
}

/// Outputs of the reconstruction network for one frame, all at HR.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput<T = f32> {
    pub alpha: Raster<T>,
    pub candidate: Raster<T>,
    pub features: Raster<T>,
}

/// Network parameters plus configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T: Real = f32> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f32> {
    (0..n)
        .map(|_| rng.gen_range(-bound..bound) as f32)
        .collect()
}

/// Conv kernel with taps uniform in ±sqrt(gain / fan_in) and zero bias.
fn conv_init(rng: &mut ChaCha8Rng, out_c: usize, in_c: usize, gain: f64) -> Vec<f32> {
    let fan_in = (in_c * 9) as f64;
    let mut k = uniform(rng, out_c * in_c * 9, (gain / fan_in).sqrt());
    k.extend(std::iter::repeat_n(0.0, out_c));
    k
}

fn conditioned_layout(
    config: &ModelConfig,
    prefix: &str,
    conditioned: bool,
    kernel_len: usize,
) -> Vec<(String, Vec<usize>)> {
    if !conditioned {
        return vec![(format!("{prefix}.kernel"), vec![kernel_len])];
    }
    let mut out = Vec::new();
    let mut fan_in = 2;
    for (i, (w, b)) in mlp_names(prefix, config.mlp_layers).into_iter().enumerate() {
        let o = if i + 1 < config.mlp_layers {
            config.mlp_hidden
        } else {
            kernel_len
        };
        out.push((w, vec![o, fan_in]));
        out.push((b, vec![o]));
        fan_in = o;
    }
    out
}

/// Parameter names of one conditioned convolution.
fn mlp_names(prefix: &str, layers: usize) -> Vec<(String, String)> {
    (0..layers)
        .map(|i| {
            (
                format!("{prefix}.mlp.{i}.weight"),
                format!("{prefix}.mlp.{i}.bias"),
            )
        })
        .collect()
}

impl Model<f32> {
    /// Intermediate convolutions use fan-in scaled uniform initialization.
    /// Hidden MLP weights are uniform in ±1/sqrt(fan_in) with zero biases. Each
    /// MLP's last layer starts with zero weights and a bias equal to a freshly
    /// initialized kernel, so predicted kernels do not depend on the jitter at
    /// step 0.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let f = config.features;
        let first_kernel = |rng: &mut ChaCha8Rng| conv_init(rng, f, config.first_in(), 6.0);
        let last_kernel = |rng: &mut ChaCha8Rng| conv_init(rng, config.last_out(), f, 3.0);

        let push_conditioned = |rng: &mut ChaCha8Rng,
                                params: &mut ParamStore,
                                prefix: &str,
                                conditioned: bool,
                                kernel: &dyn Fn(&mut ChaCha8Rng) -> Vec<f32>|
         -> Result<()> {
            if !conditioned {
                let k = kernel(rng);
                params.push(Param::new(format!("{prefix}.kernel"), vec![k.len()], k)?)?;
                return Ok(());
            }
            let names = mlp_names(prefix, config.mlp_layers);
            let mut fan_in = 2;
            for (i, (wname, bname)) in names.iter().enumerate() {
                if i + 1 < config.mlp_layers {
                    let out = config.mlp_hidden;
                    let w = uniform(rng, out * fan_in, 1.0 / (fan_in as f64).sqrt());
                    params.push(Param::new(wname.clone(), vec![out, fan_in], w)?)?;
                    params.push(Param::new(bname.clone(), vec![out], vec![0.0; out])?)?;
                    fan_in = out;
                } else {
                    let b = kernel(rng);
                    let out = b.len();
                    params.push(Param::new(
                        wname.clone(),
                        vec![out, fan_in],
                        vec![0.0; out * fan_in],
                    )?)?;
                    params.push(Param::new(bname.clone(), vec![out], b)?)?;
                }
            }
            Ok(())
        };
        push_conditioned(
            &mut rng,
            &mut params,
            "first",
            config.condition_first,
            &first_kernel,
        )?;
        for i in 0..config.layers {
            let k = conv_init(&mut rng, f, f, 6.0);
            params.push(Param::new(format!("mid.{i}.kernel"), vec![k.len()], k)?)?;
        }
        push_conditioned(
            &mut rng,
            &mut params,
            "last",
            config.condition_last,
            &last_kernel,
        )?;
        Ok(Model { config, params })
    }
}

impl<T: Real> Model<T> {
    /// Wraps existing parameters after checking names and sizes.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let model = Model { config, params };
        let expected = Model::<f32>::layout(&model.config);
        if expected.len() != model.params.len() {
            return Err(Error::config(format!(
                "model expects {} parameter arrays, got {}",
                expected.len(),
                model.params.len()
            )));
        }
        for ((name, dims), p) in expected.iter().zip(model.params.iter()) {
            if *name != p.name || *dims != p.dims {
                return Err(Error::config(format!(
                    "parameter {} {:?} does not match expected {name} {dims:?}",
                    p.name, p.dims
                )));
            }
        }
        Ok(model)
    }

    /// Names and shapes of all parameters in store order.
    pub fn layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let mut out = conditioned_layout(
            config,
            "first",
            config.condition_first,
            config.first_kernel_len(),
        );
        let mid_len = ConvKernel::<f32>::flat_len(config.features, config.features);
        out.extend((0..config.layers).map(|i| (format!("mid.{i}.kernel"), vec![mid_len])));
        out.extend(conditioned_layout(
            config,
            "last",
            config.condition_last,
            config.last_kernel_len(),
        ));
        out
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    fn index(&self, name: &str) -> usize {
        self.params
            .position(name)
            .unwrap_or_else(|| panic!("model parameter {name} missing"))
    }

    /// Store indices of a conditioned convolution's MLP layers
    /// `(weight, bias)`, or `None` when the kernel is a plain parameter.
    pub fn mlp_indices(&self, prefix: &str) -> Option<Vec<(usize, usize)>> {
        let on = match prefix {
            "first" => self.config.condition_first,
            _ => self.config.condition_last,
        };
        on.then(|| {
            mlp_names(prefix, self.config.mlp_layers)
                .iter()
                .map(|(w, b)| (self.index(w), self.index(b)))
                .collect()
        })
    }

    pub fn kernel_index(&self, prefix: &str) -> usize {
        self.index(&format!("{prefix}.kernel"))
    }

    pub fn mid_indices(&self) -> Vec<usize> {
        (0..self.config.layers)
            .map(|i| self.index(&format!("mid.{i}.kernel")))
            .collect()
    }

    /// MLP evaluated for each jitter, one output row per jitter.
    fn mlp_rows(&self, layers: &[(usize, usize)], jitters: &[JitterOffset]) -> Vec<T> {
        let mut x: Vec<T> = jitters
            .iter()
            .flat_map(|j| [T::of(j.x as f64), T::of(j.y as f64)])
            .collect();
        let rows = jitters.len();
        let mut fan_in = 2;
        for (i, &(wi, bi)) in layers.iter().enumerate() {
            let b = &self.params.by_index(bi).data;
            let w = &self.params.by_index(wi).data;
            x = dense_rows(&x, rows, w, b, b.len(), fan_in);
            if i + 1 < layers.len() {
                x.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            fan_in = b.len();
        }
        x
    }

    fn kernel_for(&self, prefix: &str, jitter: JitterOffset) -> Vec<T> {
        match self.mlp_indices(prefix) {
            Some(layers) => self.mlp_rows(&layers, &[jitter]),
            None => self.params.by_index(self.kernel_index(prefix)).data.clone(),
        }
    }

    /// Kernels of the first and last convolution for `jitter`.
    pub fn predict_kernels(&self, jitter: JitterOffset) -> KernelPair<T> {
        KernelPair {
            first: self.kernel_for("first", jitter),
            last: self.kernel_for("last", jitter),
        }
    }

    pub fn kernel_cache(&self) -> KernelCache<T> {
        let jitters = jitter_sequence();
        KernelCache {
            jitters,
            pairs: jitters.iter().map(|&j| self.predict_kernels(j)).collect(),
        }
    }

    fn mid_kernels(&self) -> Vec<Raster<T>> {
        self.mid_indices()
            .into_iter()
            .map(|i| Raster::vector(self.params.by_index(i).data.clone()))
            .collect()
    }

    /// Runs the reconstruction network on the current LR frame and the
    /// warped history.
    pub fn forward_step(
        &self,
        kernels: &KernelPair<T>,
        color: &Raster<T>,
        depth: &Raster<T>,
        warped: &WarpedHistory<T>,
    ) -> Result<StepOutput<T>> {
        let mut tape = Tape::new();
        let c = tape.constant(color.clone());
        let d = tape.constant(depth.clone());
        let h = tape.constant(warped.packed.clone());
        let input = tape.concat(&[c, d, h])?;
        let first = tape.constant(Raster::vector(kernels.first.clone()));
        let last = tape.constant(Raster::vector(kernels.last.clone()));
        let mids: Vec<Var> = self
            .mid_kernels()
            .into_iter()
            .map(|k| tape.constant(k))
            .collect();
        let out = network_graph(&mut tape, &self.config, first, &mids, last, input)?;
        Ok(StepOutput {
            alpha: tape.value(out.alpha).clone(),
            candidate: tape.value(out.candidate).clone(),
            features: tape.value(out.features).clone(),
        })
    }

    /// One recurrent step: warp the carry, run the network, blend. Returns
    /// the output frame and the next carry.
    pub fn step(
        &self,
        kernels: &KernelPair<T>,
        frame: &FrameBundle,
        carry: &Carry<T>,
    ) -> Result<(Raster<T>, Carry<T>)> {
        let mut tape = Tape::new();
        let first = tape.constant(Raster::vector(kernels.first.clone()));
        let last = tape.constant(Raster::vector(kernels.last.clone()));
        let mids: Vec<Var> = self
            .mid_kernels()
            .into_iter()
            .map(|k| tape.constant(k))
            .collect();
        let c = TapeCarry {
            color: tape.constant(carry.color.clone()),
            features: tape.constant(carry.features.clone()),
            jitter: carry.jitter,
        };
        let (y, next) = step_graph(&mut tape, &self.config, first, &mids, last, frame, &c)?;
        let out = tape.value(y).clone();
        Ok((
            out.clone(),
            Carry {
                color: out,
                features: tape.value(next.features).clone(),
                jitter: next.jitter,
            },
        ))
    }

    /// Kernels for `jitter`, from the cache when it is one of the 16
    /// sequence offsets.
    pub fn kernels_for(&self, cache: &KernelCache<T>, jitter: JitterOffset) -> KernelPair<T> {
        match cache.for_jitter(jitter) {
            Some(k) => k.clone(),
            None => self.predict_kernels(jitter),
        }
    }

    /// Upscales a whole sequence from a fresh carry.
    pub fn rollout(&self, frames: &[FrameBundle]) -> Result<Vec<Raster<T>>> {
        let Some(first) = frames.first() else {
            return Ok(Vec::new());
        };
        let cache = self.kernel_cache();
        let mut carry = init_carry(first, self.config.scale)?;
        let mut out = Vec::with_capacity(frames.len());
        for f in frames {
            let kernels = self.kernels_for(&cache, f.jitter);
            let (y, next) = self.step(&kernels, f, &carry)?;
            out.push(y);
            carry = next;
        }
        Ok(out)
    }
}

/// `alpha·candidate + (1 − alpha)·history`, alpha broadcast over channels.
pub fn blend<T: Real>(
    alpha: &Raster<T>,
    candidate: &Raster<T>,
    history: &Raster<T>,
) -> Result<Raster<T>> {
    blend_values(alpha, candidate, history)
}

/// Zero previous output and features at `scale` times the frame size, and
/// no motion for the first step.
pub fn init_carry<T: Real>(frame: &FrameBundle, scale: usize) -> Result<Carry<T>> {
    let (h, w) = (
        frame.lr_color.height() * scale,
        frame.lr_color.width() * scale,
    );
    if h == 0 || w == 0 {
        return Err(Error::config("init_carry: empty frame or zero scale"));
    }
    Ok(Carry {
        color: Raster::zeros(3, h, w),
        features: Raster::zeros(1, h, w),
        jitter: None,
    })
}

/// Network nodes of one step.
pub(crate) struct NetworkVars {
    pub alpha: Var,
    pub candidate: Var,
    pub features: Var,
}

/// first conv → ReLU → m × (conv → ReLU) → last conv, then the output is
/// split into candidate, alpha and feature channels and shuffled to HR.
pub(crate) fn network_graph<T: Real>(
    tape: &mut Tape<T>,
    config: &ModelConfig,
    first: Var,
    mids: &[Var],
    last: Var,
    input: Var,
) -> Result<NetworkVars> {
    let s = config.scale;
    let s2 = s * s;
    if tape.value(input).channels() != config.first_in() {
        return Err(Error::config(format!(
            "network input has {} channels, expected {}",
            tape.value(input).channels(),
            config.first_in()
        )));
    }
    let mut x = tape.conv3x3(input, first, config.features)?;
    x = tape.relu(x)?;
    for &k in mids {
        x = tape.conv3x3(x, k, config.features)?;
        x = tape.relu(x)?;
    }
    let y = tape.conv3x3(x, last, config.last_out())?;
    let cand = tape.slice_channels(y, 0, 3 * s2)?;
    let logits = tape.slice_channels(y, 3 * s2, s2)?;
    let feat = tape.slice_channels(y, 4 * s2, s2)?;
    let candidate = tape.depth_to_space(cand, s)?;
    let logits = tape.depth_to_space(logits, s)?;
    let alpha = tape.sigmoid(logits)?;
    let features = tape.depth_to_space(feat, s)?;
    Ok(NetworkVars {
        alpha,
        candidate,
        features,
    })
}

/// Recurrent state as tape nodes.
#[derive(Clone, Copy, Debug)]
pub(crate) struct TapeCarry {
    pub color: Var,
    pub features: Var,
    pub jitter: Option<JitterOffset>,
}

pub(crate) fn init_carry_graph<T: Real>(
    tape: &mut Tape<T>,
    frame: &FrameBundle,
    scale: usize,
) -> Result<TapeCarry> {
    let c = init_carry::<T>(frame, scale)?;
    Ok(TapeCarry {
        color: tape.constant(c.color),
        features: tape.constant(c.features),
        jitter: None,
    })
}

/// Warp, network and blend for one frame, recorded on `tape`.
pub(crate) fn step_graph<T: Real>(
    tape: &mut Tape<T>,
    config: &ModelConfig,
    first: Var,
    mids: &[Var],
    last: Var,
    frame: &FrameBundle,
    carry: &TapeCarry,
) -> Result<(Var, TapeCarry)> {
    let s = config.scale;
    let mv = history_motion(frame, carry.jitter, s, config.warp_options())?;
    let history = tape.concat(&[carry.color, carry.features])?;
    let warped = tape.sample(history, &mv.cast::<T>().sample_positions())?;
    let packed = tape.space_to_depth(warped, s)?;
    let c = tape.constant(frame.lr_color.cast());
    let d = tape.constant(frame.lr_depth.cast());
    let input = tape.concat(&[c, d, packed])?;
    let net = network_graph(tape, config, first, mids, last, input)?;
    let y = if config.use_blending {
        let prev = tape.slice_channels(warped, 0, 3)?;
        tape.blend(net.alpha, net.candidate, prev)?
    } else {
        net.candidate
    };
    Ok((
        y,
        TapeCarry {
            color: y,
            features: net.features,
            jitter: Some(frame.jitter),
        },
    ))
}
