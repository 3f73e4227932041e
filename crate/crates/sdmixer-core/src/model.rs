//! The mixer model: a temporal flow over the trend, a frequency flow over
//! the season, sparse cross-attention fusing the two, and a per-channel
//! linear head mapping lookback steps to horizon steps.
//!
//! Components are optional so ablations are real structural variants rather
//! than zeroed weights: [`Variant::NoTime`] feeds the raw trend forward,
//! [`Variant::NoFreq`] the raw season, and [`Variant::NoCross`] replaces the
//! attention fusion with a plain sum. Parameter counts shrink accordingly.
//!
//! Forward passes are expressed once, as tape graphs; the value-level
//! functions run the same graphs on a scratch tape and discard it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::decompose::{decompose, DecomposeConfig};
use crate::fft;
use crate::math;
use crate::ops;
use crate::rng::Rng;
use crate::tape::{GradTape, NodeId};
use crate::tensor::{arg_err, dim_err, ComplexTensor, Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoCross,
    NoTime,
    NoFreq,
}

impl Variant {
    /// Ablation ordering used by reports and the ablation runner.
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoCross,
        Variant::NoTime,
        Variant::NoFreq,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoCross => "no-cross",
            Variant::NoTime => "no-time",
            Variant::NoFreq => "no-freq",
        }
    }

    pub fn uses_temporal(self) -> bool {
        self != Variant::NoTime
    }

    pub fn uses_frequency(self) -> bool {
        self != Variant::NoFreq
    }

    pub fn uses_cross(self) -> bool {
        self != Variant::NoCross
    }
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "no-cross" => Ok(Variant::NoCross),
            "no-time" => Ok(Variant::NoTime),
            "no-freq" => Ok(Variant::NoFreq),
            other => arg_err(format!(
                "unknown variant {other:?} (expected full, no-cross, no-time or no-freq)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub lookback: usize,
    pub horizon: usize,
    pub channels: usize,
    pub d_hidden: usize,
}

/// Structural hyperparameters resolved to concrete values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelHyper {
    /// Spectral bins forming the season.
    pub k_freq: usize,
    /// Fraction of channels the temporal gate keeps, in (0, 1].
    pub alpha: f64,
    /// Attention entries kept per query row, in 1..=lookback.
    pub k_attn: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalParams {
    pub w_t: Tensor,    // [C, C]
    pub mlp_w1: Tensor, // [C, D]
    pub mlp_b1: Tensor, // [D]
    pub mlp_w2: Tensor, // [D, C]
    pub mlp_b2: Tensor, // [C]
    pub alpha: f64,
}

impl TemporalParams {
    /// Channels the gate keeps: ceil(alpha * C), at least 1.
    pub fn gate_width(&self, channels: usize) -> usize {
        (math::ceil(self.alpha * channels as f64) as usize).clamp(1, channels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyParams {
    pub enhance_w: Tensor, // [C, C]
    pub enhance_b: Tensor, // [C]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossParams {
    pub w_q: Tensor,   // [C, C]
    pub w_k: Tensor,   // [C, C]
    pub w_v: Tensor,   // [C, C]
    pub gamma: Tensor, // [1], gate logit
    pub k_attn: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub proj_w: Tensor, // [L, H]
    pub proj_b: Tensor, // [H]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub decompose: DecomposeConfig,
    pub variant: Variant,
    pub temporal: Option<TemporalParams>,
    pub frequency: Option<FrequencyParams>,
    pub cross: Option<CrossParams>,
    pub head: HeadParams,
}

fn validate_dims(dims: &ModelDims, hyper: &ModelHyper) -> Result<()> {
    if dims.lookback == 0 || dims.horizon == 0 || dims.channels == 0 || dims.d_hidden == 0 {
        return arg_err("lookback, horizon, channels and d_hidden must be positive");
    }
    let f = fft::bin_count(dims.lookback);
    if hyper.k_freq == 0 || hyper.k_freq > f {
        return arg_err(format!(
            "k_freq {} outside 1..={f} for lookback {}",
            hyper.k_freq, dims.lookback
        ));
    }
    if !(hyper.alpha > 0.0 && hyper.alpha <= 1.0) {
        return arg_err(format!("alpha {} outside (0, 1]", hyper.alpha));
    }
    if hyper.k_attn == 0 || hyper.k_attn > dims.lookback {
        return arg_err(format!(
            "k_attn {} outside 1..={}",
            hyper.k_attn, dims.lookback
        ));
    }
    Ok(())
}

fn uniform_matrix(rng: &mut Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / math::sqrt(fan_in as f64);
    let mut t = Tensor::zeros(vec![rows, cols]);
    t.map_mut(|_| rng.uniform(-bound, bound));
    t
}

fn uniform_vector(rng: &mut Rng, n: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / math::sqrt(fan_in as f64);
    let mut t = Tensor::zeros(vec![n]);
    t.map_mut(|_| rng.uniform(-bound, bound));
    t
}

impl ModelParams {
    /// Training initialization: mixing matrices and the first MLP layer draw
    /// uniform(+-1/sqrt(fan_in)); the second MLP layer, the head and the
    /// gate logit start at zero; the spectral enhancer starts as identity.
    /// Starting residual branches at zero keeps the first forward passes
    /// close to the raw decomposition.
    pub fn init(
        dims: ModelDims,
        variant: Variant,
        hyper: ModelHyper,
        seed: u64,
    ) -> Result<Self> {
        validate_dims(&dims, &hyper)?;
        let (l, h, c, d) = (dims.lookback, dims.horizon, dims.channels, dims.d_hidden);
        let mut rng = Rng::from_seed(seed);
        let temporal = variant.uses_temporal().then(|| TemporalParams {
            w_t: uniform_matrix(&mut rng, c, c, c),
            mlp_w1: uniform_matrix(&mut rng, c, d, c),
            mlp_b1: uniform_vector(&mut rng, d, c),
            mlp_w2: Tensor::zeros(vec![d, c]),
            mlp_b2: Tensor::zeros(vec![c]),
            alpha: hyper.alpha,
        });
        let frequency = variant.uses_frequency().then(|| FrequencyParams {
            enhance_w: Tensor::eye(c),
            enhance_b: Tensor::zeros(vec![c]),
        });
        let cross = variant.uses_cross().then(|| CrossParams {
            w_q: uniform_matrix(&mut rng, c, c, c),
            w_k: uniform_matrix(&mut rng, c, c, c),
            w_v: uniform_matrix(&mut rng, c, c, c),
            gamma: Tensor::scalar(0.0),
            k_attn: hyper.k_attn,
        });
        Ok(ModelParams {
            dims,
            decompose: DecomposeConfig { k: hyper.k_freq },
            variant,
            temporal,
            frequency,
            cross,
            head: HeadParams {
                proj_w: Tensor::zeros(vec![l, h]),
                proj_b: Tensor::zeros(vec![h]),
            },
        })
    }

    /// Every tensor random. Zero-initialized layers block gradient flow to
    /// everything upstream of them, which would make finite-difference
    /// verification vacuous, so gradient checking uses this instead of
    /// [`ModelParams::init`].
    pub fn init_random_all(
        dims: ModelDims,
        variant: Variant,
        hyper: ModelHyper,
        seed: u64,
    ) -> Result<Self> {
        let mut params = Self::init(dims, variant, hyper, seed)?;
        let mut rng = Rng::substream(seed, 1);
        let (l, c, d) = (dims.lookback, dims.channels, dims.d_hidden);
        if let Some(t) = &mut params.temporal {
            t.mlp_w2 = uniform_matrix(&mut rng, d, c, d);
            t.mlp_b2 = uniform_vector(&mut rng, c, d);
        }
        if let Some(f) = &mut params.frequency {
            f.enhance_w = uniform_matrix(&mut rng, c, c, c);
            f.enhance_b = uniform_vector(&mut rng, c, c);
        }
        if let Some(cr) = &mut params.cross {
            cr.gamma = Tensor::scalar(rng.uniform(-1.0, 1.0));
        }
        params.head.proj_w = uniform_matrix(&mut rng, l, dims.horizon, l);
        params.head.proj_b = uniform_vector(&mut rng, dims.horizon, l);
        Ok(params)
    }

    /// Configuration under which the model is as close to an identity map as
    /// its structure allows: ungated identity temporal flow, identity
    /// enhancer, closed cross gate, identity head. Requires horizon ==
    /// lookback. The additive-fusion variant then reproduces its input up to
    /// FFT round-trip error; gated variants reproduce the trend.
    pub fn identity_init(dims: ModelDims, variant: Variant, k_freq: usize) -> Result<Self> {
        if dims.lookback != dims.horizon {
            return arg_err(format!(
                "identity head needs horizon == lookback, got {} vs {}",
                dims.horizon, dims.lookback
            ));
        }
        let hyper = ModelHyper {
            k_freq,
            alpha: 1.0,
            k_attn: (dims.lookback / 4).max(1),
        };
        validate_dims(&dims, &hyper)?;
        let (l, c, d) = (dims.lookback, dims.channels, dims.d_hidden);
        let temporal = variant.uses_temporal().then(|| TemporalParams {
            w_t: Tensor::eye(c),
            mlp_w1: Tensor::zeros(vec![c, d]),
            mlp_b1: Tensor::zeros(vec![d]),
            mlp_w2: Tensor::zeros(vec![d, c]),
            mlp_b2: Tensor::zeros(vec![c]),
            alpha: 1.0,
        });
        let frequency = variant.uses_frequency().then(|| FrequencyParams {
            enhance_w: Tensor::eye(c),
            enhance_b: Tensor::zeros(vec![c]),
        });
        let cross = variant.uses_cross().then(|| CrossParams {
            w_q: Tensor::zeros(vec![c, c]),
            w_k: Tensor::zeros(vec![c, c]),
            w_v: Tensor::zeros(vec![c, c]),
            gamma: Tensor::scalar(-40.0),
            k_attn: hyper.k_attn,
        });
        Ok(ModelParams {
            dims,
            decompose: DecomposeConfig { k: k_freq },
            variant,
            temporal,
            frequency,
            cross,
            head: HeadParams {
                proj_w: Tensor::eye(l),
                proj_b: Tensor::zeros(vec![l]),
            },
        })
    }

    /// Named tensors in canonical (checkpoint) order. Absent components
    /// contribute nothing, so the census is variant-aware.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = Vec::with_capacity(13);
        if let Some(t) = &self.temporal {
            out.push(("temporal.w_t", &t.w_t));
            out.push(("temporal.mlp_w1", &t.mlp_w1));
            out.push(("temporal.mlp_b1", &t.mlp_b1));
            out.push(("temporal.mlp_w2", &t.mlp_w2));
            out.push(("temporal.mlp_b2", &t.mlp_b2));
        }
        if let Some(f) = &self.frequency {
            out.push(("frequency.enhance_w", &f.enhance_w));
            out.push(("frequency.enhance_b", &f.enhance_b));
        }
        if let Some(c) = &self.cross {
            out.push(("cross.w_q", &c.w_q));
            out.push(("cross.w_k", &c.w_k));
            out.push(("cross.w_v", &c.w_v));
            out.push(("cross.gamma", &c.gamma));
        }
        out.push(("head.proj_w", &self.head.proj_w));
        out.push(("head.proj_b", &self.head.proj_b));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut out = Vec::with_capacity(13);
        if let Some(t) = &mut self.temporal {
            out.push(("temporal.w_t", &mut t.w_t));
            out.push(("temporal.mlp_w1", &mut t.mlp_w1));
            out.push(("temporal.mlp_b1", &mut t.mlp_b1));
            out.push(("temporal.mlp_w2", &mut t.mlp_w2));
            out.push(("temporal.mlp_b2", &mut t.mlp_b2));
        }
        if let Some(f) = &mut self.frequency {
            out.push(("frequency.enhance_w", &mut f.enhance_w));
            out.push(("frequency.enhance_b", &mut f.enhance_b));
        }
        if let Some(c) = &mut self.cross {
            out.push(("cross.w_q", &mut c.w_q));
            out.push(("cross.w_k", &mut c.w_k));
            out.push(("cross.w_v", &mut c.w_v));
            out.push(("cross.gamma", &mut c.gamma));
        }
        out.push(("head.proj_w", &mut self.head.proj_w));
        out.push(("head.proj_b", &mut self.head.proj_b));
        out
    }

    /// Total learnable scalars in this variant.
    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Tape node ids for the parameters of one forward graph, aligned with
/// [`ModelParams::named_tensors`].
pub struct ParamNodes {
    ids: Vec<(&'static str, NodeId)>,
}

impl ParamNodes {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, NodeId)> + '_ {
        self.ids.iter().copied()
    }

    fn id(&self, name: &str) -> NodeId {
        self.ids
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, id)| *id)
            .expect("parameter present for this variant")
    }
}

/// Registers every parameter tensor as a tape leaf.
pub fn insert_params(tape: &mut GradTape, params: &ModelParams) -> ParamNodes {
    let ids = params
        .named_tensors()
        .into_iter()
        .map(|(name, t)| (name, tape.leaf(t.clone())))
        .collect();
    ParamNodes { ids }
}

/// Trend -> channel mix -> top-k channel gate -> gated MLP residual.
fn temporal_graph(
    tape: &mut GradTape,
    trend: NodeId,
    p: &TemporalParams,
    n: &ParamNodes,
) -> Result<NodeId> {
    let &[b, l, c] = tape.value(trend).shape() else {
        return dim_err("temporal flow expects [B, L, C]");
    };
    let flat = tape.reshape(trend, vec![b * l, c])?;
    let h_t = tape.matmul(flat, n.id("temporal.w_t"))?;
    let keep = p.gate_width(c);
    let mask = ops::topk_mask_lastdim(tape.value(h_t), keep, true)?;
    let z = tape.mul_mask(h_t, mask)?;
    let a1 = tape.matmul(z, n.id("temporal.mlp_w1"))?;
    let a1 = tape.add_bias(a1, n.id("temporal.mlp_b1"))?;
    let r = tape.relu(a1);
    let a2 = tape.matmul(r, n.id("temporal.mlp_w2"))?;
    let a2 = tape.add_bias(a2, n.id("temporal.mlp_b2"))?;
    let f = tape.add(z, a2)?;
    tape.reshape(f, vec![b, l, c])
}

/// Season spectrum -> channel-mixed real plane -> inverse transform. The
/// imaginary plane passes through untouched as a constant; only the real
/// plane is learnable, matching the straight-through spectral design.
fn frequency_graph(
    tape: &mut GradTape,
    season_spectrum: &ComplexTensor,
    series_len: usize,
    n: &ParamNodes,
) -> Result<NodeId> {
    let &[b, f, c] = season_spectrum.shape() else {
        return dim_err("frequency flow expects a [B, F, C] spectrum");
    };
    let re = Tensor::new(
        vec![b, f, c],
        season_spectrum.re().to_vec(),
    )?;
    let im = Tensor::new(
        vec![b, f, c],
        season_spectrum.im().to_vec(),
    )?;
    let re_leaf = tape.leaf(re);
    let flat = tape.reshape(re_leaf, vec![b * f, c])?;
    let mixed = tape.matmul(flat, n.id("frequency.enhance_w"))?;
    let mixed = tape.add_bias(mixed, n.id("frequency.enhance_b"))?;
    let shaped = tape.reshape(mixed, vec![b, f, c])?;
    tape.irfft_re(shaped, im, series_len)
}

/// Queries from the temporal flow attend over keys/values from the
/// frequency flow; each query row keeps its k_attn largest softmax weights
/// (no renormalization) and the result enters through a sigmoid gate.
/// Returns (fused, masked attention).
fn cross_graph(
    tape: &mut GradTape,
    f_t: NodeId,
    f_f: NodeId,
    p: &CrossParams,
    n: &ParamNodes,
) -> Result<(NodeId, NodeId)> {
    let &[b, l, c] = tape.value(f_t).shape() else {
        return dim_err("cross mixer expects [B, L, C]");
    };
    if tape.value(f_f).shape() != [b, l, c] {
        return dim_err(format!(
            "cross mixer flows disagree: {:?} vs {:?}",
            tape.value(f_t).shape(),
            tape.value(f_f).shape()
        ));
    }
    let tf = tape.reshape(f_t, vec![b * l, c])?;
    let ff = tape.reshape(f_f, vec![b * l, c])?;
    let q = tape.matmul(tf, n.id("cross.w_q"))?;
    let k = tape.matmul(ff, n.id("cross.w_k"))?;
    let v = tape.matmul(ff, n.id("cross.w_v"))?;
    let q = tape.reshape(q, vec![b, l, c])?;
    let k = tape.reshape(k, vec![b, l, c])?;
    let v = tape.reshape(v, vec![b, l, c])?;
    let kt = tape.swap_axes_12(k)?;
    let scores = tape.bmm(q, kt)?;
    let scores = tape.scale(scores, 1.0 / math::sqrt(c as f64));
    let dense = tape.softmax_lastdim(scores)?;
    let mask = ops::topk_mask_lastdim(tape.value(dense), p.k_attn, false)?;
    let attn = tape.mul_mask(dense, mask)?;
    let mixed = tape.bmm(attn, v)?;
    let gate = tape.sigmoid(n.id("cross.gamma"));
    let gated = tape.scale_by_scalar(mixed, gate)?;
    let fused = tape.add(f_t, gated)?;
    Ok((fused, attn))
}

/// Per-channel shared linear map from lookback steps to horizon steps.
fn head_graph(tape: &mut GradTape, fused: NodeId, n: &ParamNodes) -> Result<NodeId> {
    let &[b, l, c] = tape.value(fused).shape() else {
        return dim_err("head expects [B, L, C]");
    };
    let swapped = tape.swap_axes_12(fused)?; // [B, C, L]
    let flat = tape.reshape(swapped, vec![b * c, l])?;
    let proj = tape.matmul(flat, n.id("head.proj_w"))?;
    let proj = tape.add_bias(proj, n.id("head.proj_b"))?;
    let h = tape.value(proj).shape()[1];
    let shaped = tape.reshape(proj, vec![b, c, h])?;
    tape.swap_axes_12(shaped) // [B, H, C]
}

/// Builds the full forward graph for a batch and returns the forecast node
/// (`[B, horizon, C]`). The season/trend decomposition has no parameters and
/// is computed outside the tape.
pub fn forward_graph(
    tape: &mut GradTape,
    x: &Tensor,
    params: &ModelParams,
    nodes: &ParamNodes,
) -> Result<NodeId> {
    let dims = &params.dims;
    let &[_, l, c] = x.shape() else {
        return dim_err(format!("forward expects [B, L, C], got {:?}", x.shape()));
    };
    if l != dims.lookback || c != dims.channels {
        return dim_err(format!(
            "input [*, {l}, {c}] does not match model lookback {} / channels {}",
            dims.lookback, dims.channels
        ));
    }
    let dec = decompose(x, &params.decompose)?;

    let f_t = match &params.temporal {
        Some(p) => {
            let trend = tape.leaf(dec.trend.clone());
            temporal_graph(tape, trend, p, nodes)?
        }
        None => tape.leaf(dec.trend.clone()),
    };
    let f_f = match &params.frequency {
        Some(_) => frequency_graph(tape, &dec.season_spectrum, l, nodes)?,
        None => tape.leaf(dec.season.clone()),
    };
    let fused = match &params.cross {
        Some(p) => cross_graph(tape, f_t, f_f, p, nodes)?.0,
        None => tape.add(f_t, f_f)?,
    };
    head_graph(tape, fused, nodes)
}

/// Value-only forward pass.
pub fn forward(x: &Tensor, params: &ModelParams) -> Result<Tensor> {
    let mut tape = GradTape::new();
    let nodes = insert_params(&mut tape, params);
    let out = forward_graph(&mut tape, x, params, &nodes)?;
    Ok(tape.value(out).clone())
}

/// Temporal flow on its own: `[B, L, C]` trend to `[B, L, C]`.
pub fn temporal_flow(trend: &Tensor, p: &TemporalParams) -> Result<Tensor> {
    let mut tape = GradTape::new();
    let mut nodes = ParamNodes { ids: Vec::new() };
    nodes.ids.push(("temporal.w_t", tape.leaf(p.w_t.clone())));
    nodes
        .ids
        .push(("temporal.mlp_w1", tape.leaf(p.mlp_w1.clone())));
    nodes
        .ids
        .push(("temporal.mlp_b1", tape.leaf(p.mlp_b1.clone())));
    nodes
        .ids
        .push(("temporal.mlp_w2", tape.leaf(p.mlp_w2.clone())));
    nodes
        .ids
        .push(("temporal.mlp_b2", tape.leaf(p.mlp_b2.clone())));
    let t = tape.leaf(trend.clone());
    let out = temporal_graph(&mut tape, t, p, &nodes)?;
    Ok(tape.value(out).clone())
}

/// Frequency flow on its own, transforming the season it is given.
pub fn frequency_flow(season: &Tensor, p: &FrequencyParams) -> Result<Tensor> {
    let &[_, l, _] = season.shape() else {
        return dim_err("frequency flow expects [B, L, C]");
    };
    let spectrum = fft::rfft_time(season)?;
    let mut tape = GradTape::new();
    let mut nodes = ParamNodes { ids: Vec::new() };
    nodes
        .ids
        .push(("frequency.enhance_w", tape.leaf(p.enhance_w.clone())));
    nodes
        .ids
        .push(("frequency.enhance_b", tape.leaf(p.enhance_b.clone())));
    let out = frequency_graph(&mut tape, &spectrum, l, &nodes)?;
    Ok(tape.value(out).clone())
}

/// Cross mixer on its own.
pub fn cross_mixer(f_t: &Tensor, f_f: &Tensor, p: &CrossParams) -> Result<Tensor> {
    Ok(cross_mixer_with_attention(f_t, f_f, p)?.0)
}

/// Cross mixer plus the masked attention matrix `[B, L, L]`, for
/// sparsity inspection.
pub fn cross_mixer_with_attention(
    f_t: &Tensor,
    f_f: &Tensor,
    p: &CrossParams,
) -> Result<(Tensor, Tensor)> {
    let mut tape = GradTape::new();
    let mut nodes = ParamNodes { ids: Vec::new() };
    nodes.ids.push(("cross.w_q", tape.leaf(p.w_q.clone())));
    nodes.ids.push(("cross.w_k", tape.leaf(p.w_k.clone())));
    nodes.ids.push(("cross.w_v", tape.leaf(p.w_v.clone())));
    nodes.ids.push(("cross.gamma", tape.leaf(p.gamma.clone())));
    let t = tape.leaf(f_t.clone());
    let f = tape.leaf(f_f.clone());
    let (fused, attn) = cross_graph(&mut tape, t, f, p, &nodes)?;
    Ok((tape.value(fused).clone(), tape.value(attn).clone()))
}

/// Head on its own: `[B, L, C]` to `[B, H, C]`.
pub fn head(fused: &Tensor, p: &HeadParams) -> Result<Tensor> {
    let mut tape = GradTape::new();
    let mut nodes = ParamNodes { ids: Vec::new() };
    nodes.ids.push(("head.proj_w", tape.leaf(p.proj_w.clone())));
    nodes.ids.push(("head.proj_b", tape.leaf(p.proj_b.clone())));
    let f = tape.leaf(fused.clone());
    let out = head_graph(&mut tape, f, &nodes)?;
    Ok(tape.value(out).clone())
}
