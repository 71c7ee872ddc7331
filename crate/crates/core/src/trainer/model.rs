use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BackboneConfig, Mode};
use crate::autodiff::{self, Real};
use crate::classifier::{self, LorentzHyperplane, MlrHead};
use crate::error::{Error, Result};
use crate::geometry::{self, kernel as geo, LorentzPoint, MAX_TANGENT_NORM};

/// Named contiguous slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl ParamGroup {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BlockLayout {
    weight: Range<usize>,
    bias: Range<usize>,
    fan_in: usize,
    width: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct ExitLayout {
    block: usize,
    proj_weight: Range<usize>,
    proj_bias: Range<usize>,
    /// log α, hyperbolic mode only.
    log_scale: Option<usize>,
    /// MLR directions (hyperbolic) or linear weights (euclidean), `C × n`.
    head_weight: Range<usize>,
    /// MLR offsets (hyperbolic) or linear biases (euclidean).
    head_bias: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    blocks: Vec<BlockLayout>,
    exits: Vec<ExitLayout>,
    groups: Vec<ParamGroup>,
    total: usize,
}

impl Layout {
    fn new(cfg: &BackboneConfig) -> Self {
        let mut groups = Vec::new();
        let mut next = 0;
        let mut take = |name: String, len: usize, groups: &mut Vec<ParamGroup>| {
            let r = next..next + len;
            groups.push(ParamGroup {
                name,
                offset: next,
                len,
            });
            next += len;
            r
        };
        let mut blocks = Vec::new();
        let mut fan_in = cfg.input_dim;
        for (l, &width) in cfg.hidden_dims.iter().enumerate() {
            let weight = take(format!("block{l}.weight"), width * fan_in, &mut groups);
            let bias = take(format!("block{l}.bias"), width, &mut groups);
            blocks.push(BlockLayout {
                weight,
                bias,
                fan_in,
                width,
            });
            fan_in = width;
        }
        let n = cfg.latent_dim;
        let classes = cfg.num_classes;
        let mut exits = Vec::new();
        for (i, &block) in cfg.exit_after.iter().enumerate() {
            let width = cfg.hidden_dims[block];
            let proj_weight = take(format!("exit{i}.proj.weight"), n * width, &mut groups);
            let proj_bias = take(format!("exit{i}.proj.bias"), n, &mut groups);
            let (log_scale, head_weight, head_bias) = match cfg.mode {
                Mode::Hyperbolic => {
                    let s = take(format!("exit{i}.log_scale"), 1, &mut groups).start;
                    let w = take(format!("exit{i}.mlr.direction"), classes * n, &mut groups);
                    let b = take(format!("exit{i}.mlr.offset"), classes, &mut groups);
                    (Some(s), w, b)
                }
                Mode::Euclidean => {
                    let w = take(format!("exit{i}.linear.weight"), classes * n, &mut groups);
                    let b = take(format!("exit{i}.linear.bias"), classes, &mut groups);
                    (None, w, b)
                }
            };
            exits.push(ExitLayout {
                block,
                proj_weight,
                proj_bias,
                log_scale,
                head_weight,
                head_bias,
            });
        }
        Layout {
            blocks,
            exits,
            groups,
            total: next,
        }
    }
}

/// Per-exit values produced by the generic forward pass.
#[derive(Debug, Clone)]
pub(crate) struct ExitValues<T> {
    pub z: Vec<T>,
    /// Space part of `h_i` (hyperbolic) or the unit vector `e_i` (euclidean).
    pub embedding: Vec<T>,
    pub logits: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExitEmbedding {
    Hyperbolic(LorentzPoint),
    Euclidean(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitOutput {
    /// Euclidean projection `𝔭_i(block output)` before scaling or normalisation.
    pub z: Vec<f64>,
    pub embedding: ExitEmbedding,
    pub logits: Vec<f64>,
}

impl ExitOutput {
    /// Norm used by the uncertainty gate: the spatial norm of `h_i`, or `‖z_i‖`
    /// in euclidean mode where the embedding itself has unit norm.
    pub fn gate_norm(&self) -> f64 {
        match &self.embedding {
            ExitEmbedding::Hyperbolic(p) => geometry::spatial_norm(p),
            ExitEmbedding::Euclidean(_) => self.z.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    pub fn predicted(&self) -> usize {
        classifier::argmax(&self.logits)
    }

    pub fn space(&self) -> &[f64] {
        match &self.embedding {
            ExitEmbedding::Hyperbolic(p) => p.space(),
            ExitEmbedding::Euclidean(e) => e,
        }
    }
}

/// Multi-exit feed-forward backbone with a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiExitModel {
    config: BackboneConfig,
    layout: Layout,
    params: Vec<f64>,
    spacelike_resets: usize,
}

impl MultiExitModel {
    pub fn new(config: BackboneConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.total];
        let mut fill = |r: &Range<usize>, std: f64, params: &mut [f64]| {
            let normal = Normal::new(0.0, std).expect("valid std");
            for p in &mut params[r.clone()] {
                *p = normal.sample(&mut rng);
            }
        };
        for b in &layout.blocks {
            fill(&b.weight, 1.0 / (b.fan_in as f64).sqrt(), &mut params);
        }
        let n = config.latent_dim as f64;
        for e in &layout.exits {
            let width = layout.blocks[e.block].width as f64;
            // ‖z‖ starts near 1 whatever n is, keeping the lift out of the far region.
            fill(&e.proj_weight, 1.0 / (width * n).sqrt(), &mut params);
            fill(&e.head_weight, 1.0 / n.sqrt(), &mut params);
        }
        Ok(MultiExitModel {
            config,
            layout,
            params,
            spacelike_resets: 0,
        })
    }

    /// Rebuilds a model from a saved parameter vector.
    pub fn from_params(config: BackboneConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::DimensionMismatch {
                expected: layout.total,
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(MultiExitModel {
            config,
            layout,
            params,
            spacelike_resets: 0,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn num_exits(&self) -> usize {
        self.config.num_exits()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_groups(&self) -> &[ParamGroup] {
        &self.layout.groups
    }

    /// Number of null hyperplane directions reset after optimiser steps.
    pub fn spacelike_resets(&self) -> usize {
        self.spacelike_resets
    }

    /// Learnable pre-lift scale `α_i` of each exit (hyperbolic mode).
    pub fn scales(&self) -> Vec<f64> {
        self.layout
            .exits
            .iter()
            .filter_map(|e| e.log_scale.map(|i| self.params[i].exp()))
            .collect()
    }

    /// The MLR head of exit `i` (hyperbolic mode).
    pub fn mlr_head(&self, exit: usize) -> Option<MlrHead> {
        let e = self.layout.exits.get(exit)?;
        e.log_scale?;
        let n = self.config.latent_dim;
        let planes = self.params[e.head_weight.clone()]
            .chunks(n)
            .zip(&self.params[e.head_bias.clone()])
            .map(|(d, &a)| LorentzHyperplane {
                direction: d.to_vec(),
                offset: a,
            })
            .collect();
        MlrHead::new(planes, self.config.curvature).ok()
    }

    pub(crate) fn project_spacelike(&mut self) {
        let n = self.config.latent_dim;
        if self.config.mode != Mode::Hyperbolic {
            return;
        }
        for e in &self.layout.exits {
            self.spacelike_resets +=
                classifier::project_spacelike(&mut self.params[e.head_weight.clone()], n);
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input"));
        }
        Ok(())
    }

    pub(crate) fn block_forward<T: Real>(&self, p: &[T], block: usize, input: &[T]) -> Vec<T> {
        let b = &self.layout.blocks[block];
        let w = &p[b.weight.clone()];
        let bias = &p[b.bias.clone()];
        (0..b.width)
            .map(|j| {
                let row = &w[j * b.fan_in..(j + 1) * b.fan_in];
                (autodiff::dot(row, input) + bias[j]).tanh()
            })
            .collect()
    }

    pub(crate) fn exit_forward<T: Real>(&self, p: &[T], exit: usize, act: &[T]) -> ExitValues<T> {
        let e = &self.layout.exits[exit];
        let n = self.config.latent_dim;
        let width = act.len();
        let pw = &p[e.proj_weight.clone()];
        let pb = &p[e.proj_bias.clone()];
        let z: Vec<T> = (0..n)
            .map(|k| autodiff::dot(&pw[k * width..(k + 1) * width], act) + pb[k])
            .collect();
        let hw = &p[e.head_weight.clone()];
        let hb = &p[e.head_bias.clone()];
        match e.log_scale {
            Some(s) => {
                let c = self.config.curvature.get();
                let alpha = p[s].exp();
                let space = geo::scale_then_lift(&z, alpha, c);
                let time = geo::time(&space, c);
                let logits = classifier::kernel::logits(time, &space, hw, hb, c);
                ExitValues {
                    z,
                    embedding: space,
                    logits,
                }
            }
            None => {
                let norm = geo::norm(&z);
                let unit: Vec<T> = z.iter().map(|&v| v / norm).collect();
                let logits = (0..hb.len())
                    .map(|k| autodiff::dot(&hw[k * n..(k + 1) * n], &unit) + hb[k])
                    .collect();
                ExitValues {
                    z,
                    embedding: unit,
                    logits,
                }
            }
        }
    }

    /// Generic forward through the first `upto + 1` exits.
    pub(crate) fn forward_generic<T: Real>(&self, p: &[T], x: &[f64], upto: usize) -> Vec<ExitValues<T>> {
        let mut act: Vec<T> = x.iter().map(|&v| p[0].constant_like(v)).collect();
        let mut out = Vec::with_capacity(upto + 1);
        let mut block = 0;
        for i in 0..=upto {
            while block <= self.layout.exits[i].block {
                act = self.block_forward(p, block, &act);
                block += 1;
            }
            out.push(self.exit_forward(p, i, &act));
        }
        out
    }

    fn to_output(&self, v: ExitValues<f64>, exit: usize) -> Result<ExitOutput> {
        let embedding = match self.config.mode {
            Mode::Hyperbolic => {
                let alpha = self.params[self.layout.exits[exit].log_scale.unwrap()].exp();
                let r = alpha * geo::norm(&v.z) * self.config.curvature.sqrt();
                if r > MAX_TANGENT_NORM {
                    return Err(Error::TangentTooLarge {
                        norm: r,
                        max: MAX_TANGENT_NORM,
                    });
                }
                ExitEmbedding::Hyperbolic(LorentzPoint::lift_unchecked(v.embedding, self.config.curvature))
            }
            Mode::Euclidean => ExitEmbedding::Euclidean(v.embedding),
        };
        if v.logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("logits"));
        }
        Ok(ExitOutput {
            z: v.z,
            embedding,
            logits: v.logits,
        })
    }

    /// All exits, in order.
    pub fn forward_with_exits(&self, x: &[f64]) -> Result<Vec<ExitOutput>> {
        self.check_input(x)?;
        self.forward_generic(&self.params, x, self.num_exits() - 1)
            .into_iter()
            .enumerate()
            .map(|(i, v)| self.to_output(v, i))
            .collect()
    }

    /// Lazily evaluates exits one at a time, computing only the blocks needed.
    pub fn stream<'m>(&'m self, x: &[f64]) -> Result<ExitStream<'m>> {
        self.check_input(x)?;
        Ok(ExitStream {
            model: self,
            act: x.to_vec(),
            next_block: 0,
            next_exit: 0,
            macs: 0,
        })
    }

    /// Multiply-accumulates of block `l`.
    pub fn block_macs(&self, block: usize) -> u64 {
        let b = &self.layout.blocks[block];
        (b.fan_in * b.width) as u64
    }

    /// Multiply-accumulates of exit `i`'s projection and classifier.
    pub fn exit_macs(&self, exit: usize) -> u64 {
        let e = &self.layout.exits[exit];
        let n = self.config.latent_dim;
        let width = self.layout.blocks[e.block].width;
        let lift = if e.log_scale.is_some() { n } else { 0 };
        (width * n + self.config.num_classes * n + lift) as u64
    }
}

/// Exit-by-exit evaluation that tracks the compute actually executed.
pub struct ExitStream<'m> {
    model: &'m MultiExitModel,
    act: Vec<f64>,
    next_block: usize,
    next_exit: usize,
    macs: u64,
}

impl ExitStream<'_> {
    pub fn next_exit_index(&self) -> usize {
        self.next_exit
    }

    /// Multiply-accumulates executed so far.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    pub fn next_exit(&mut self) -> Option<Result<ExitOutput>> {
        let m = self.model;
        if self.next_exit >= m.num_exits() {
            return None;
        }
        let i = self.next_exit;
        while self.next_block <= m.layout.exits[i].block {
            self.act = m.block_forward(&m.params, self.next_block, &self.act);
            self.macs += m.block_macs(self.next_block);
            self.next_block += 1;
        }
        let v = m.exit_forward(&m.params, i, &self.act);
        self.macs += m.exit_macs(i);
        self.next_exit += 1;
        Some(m.to_output(v, i))
    }
}
