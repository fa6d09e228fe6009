//! Parameter layout and the tape-level forward computation.

use super::params::{Init, ParamSpec};
use super::ModelConfig;
use crate::autodiff::{Mat, Tape, Var};
use crate::types::{Modality, ModalityMap, Task};

#[derive(Default)]
pub(crate) struct LayoutBuilder {
    pub specs: Vec<ParamSpec>,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        self.specs.push(ParamSpec { name, rows, cols, init });
        self.specs.len() - 1
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub weight: usize,
    pub bias: usize,
}

impl Linear {
    fn new(lb: &mut LayoutBuilder, prefix: &str, fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: lb.add(format!("{prefix}.weight"), fan_in, fan_out, Init::Uniform { fan_in }),
            bias: lb.add(format!("{prefix}.bias"), 1, fan_out, Init::Zeros),
        }
    }

    fn apply(&self, tape: &mut Tape, p: &[Var], x: Var) -> Var {
        let y = tape.matmul(x, p[self.weight]);
        tape.add_row(y, p[self.bias])
    }
}

#[derive(Debug, Clone)]
struct Norm {
    gain: usize,
    bias: usize,
}

impl Norm {
    fn new(lb: &mut LayoutBuilder, prefix: &str, dim: usize) -> Self {
        Self {
            gain: lb.add(format!("{prefix}.gain"), 1, dim, Init::Ones),
            bias: lb.add(format!("{prefix}.bias"), 1, dim, Init::Zeros),
        }
    }

    fn apply(&self, tape: &mut Tape, p: &[Var], x: Var) -> Var {
        tape.layer_norm(x, p[self.gain], p[self.bias])
    }
}

/// Multi-head scaled dot-product attention.
#[derive(Debug, Clone)]
pub(crate) struct Attention {
    query: Linear,
    key: Linear,
    value: Linear,
    pub out: Linear,
    heads: usize,
    dim: usize,
}

impl Attention {
    fn new(lb: &mut LayoutBuilder, prefix: &str, dim: usize, heads: usize) -> Self {
        Self {
            query: Linear::new(lb, &format!("{prefix}.query"), dim, dim),
            key: Linear::new(lb, &format!("{prefix}.key"), dim, dim),
            value: Linear::new(lb, &format!("{prefix}.value"), dim, dim),
            out: Linear::new(lb, &format!("{prefix}.out"), dim, dim),
            heads,
            dim,
        }
    }

    /// `queries` attend over `context`; `key_mask` hides context rows.
    fn apply(&self, tape: &mut Tape, p: &[Var], queries: Var, context: Var, key_mask: Option<&[bool]>) -> Var {
        let q = self.query.apply(tape, p, queries);
        let k = self.key.apply(tape, p, context);
        let v = self.value.apply(tape, p, context);
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = (
                tape.slice_cols(q, h * dh, dh),
                tape.slice_cols(k, h * dh, dh),
                tape.slice_cols(v, h * dh, dh),
            );
            let scores = tape.matmul_bt(qh, kh);
            let scores = tape.scale(scores, scale);
            let weights = tape.softmax_rows(scores, key_mask);
            heads.push(tape.matmul(weights, vh));
        }
        let joined = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads) };
        self.out.apply(tape, p, joined)
    }
}

/// Position-wise `dim -> 2 dim -> dim` GELU network.
#[derive(Debug, Clone)]
pub(crate) struct FeedForward {
    inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    fn new(lb: &mut LayoutBuilder, prefix: &str, dim: usize) -> Self {
        Self {
            inner: Linear::new(lb, &format!("{prefix}.inner"), dim, 2 * dim),
            outer: Linear::new(lb, &format!("{prefix}.outer"), 2 * dim, dim),
        }
    }

    fn apply(&self, tape: &mut Tape, p: &[Var], x: Var) -> Var {
        let hidden = self.inner.apply(tape, p, x);
        let hidden = tape.gelu(hidden);
        self.outer.apply(tape, p, hidden)
    }
}

/// Projection to `h`, one residual self-attention layer, masked mean pooling.
#[derive(Debug, Clone)]
struct Encoder {
    proj: Linear,
    attn: Attention,
}

#[derive(Debug, Clone)]
struct FusionBlock {
    norm_attn: Norm,
    attn: Attention,
    norm_ff: Norm,
    ff: FeedForward,
}

#[derive(Debug, Clone)]
struct Fusion {
    token: usize,
    blocks: Vec<FusionBlock>,
    norm_out: Norm,
}

/// One direction of the emotion-intent interaction.
#[derive(Debug, Clone)]
pub(crate) struct CrossBlock {
    pub attn: Attention,
    norm_ff: Norm,
    pub ff: FeedForward,
}

#[derive(Debug, Clone)]
pub(crate) struct Architecture {
    encoders: ModalityMap<[Encoder; 2]>,
    fusion: [Fusion; 2],
    /// `[emotion attends to intent, intent attends to emotion]`
    pub interaction: [CrossBlock; 2],
    heads: [Linear; 2],
}

/// Tape handles for one forward pass.
pub(crate) struct ForwardVars {
    pub logits: [Var; 2],
    pub reps: [Var; 2],
}

impl Architecture {
    pub fn build(cfg: &ModelConfig) -> (Self, Vec<ParamSpec>) {
        let mut lb = LayoutBuilder::default();
        let h = cfg.h;
        let encoders = ModalityMap::from_fn(|m| {
            Task::ALL.map(|task| {
                let prefix = format!("encoder.{m}.{task}");
                Encoder {
                    proj: Linear::new(&mut lb, &format!("{prefix}.proj"), cfg.input_dim(m), h),
                    attn: Attention::new(&mut lb, &format!("{prefix}.attn"), h, 1),
                }
            })
        });
        let fusion = Task::ALL.map(|task| {
            let prefix = format!("fusion.{task}");
            let token = lb.add(format!("{prefix}.token"), 1, h, Init::Uniform { fan_in: h });
            let blocks = (0..cfg.fusion_layers)
                .map(|l| {
                    let bp = format!("{prefix}.block{l}");
                    FusionBlock {
                        norm_attn: Norm::new(&mut lb, &format!("{bp}.norm_attn"), h),
                        attn: Attention::new(&mut lb, &format!("{bp}.attn"), h, cfg.fusion_heads),
                        norm_ff: Norm::new(&mut lb, &format!("{bp}.norm_ff"), h),
                        ff: FeedForward::new(&mut lb, &format!("{bp}.ff"), h),
                    }
                })
                .collect();
            Fusion {
                token,
                blocks,
                norm_out: Norm::new(&mut lb, &format!("{prefix}.norm_out"), h),
            }
        });
        let interaction = Task::ALL.map(|task| {
            let prefix = format!("interaction.{task}");
            CrossBlock {
                attn: Attention::new(&mut lb, &format!("{prefix}.attn"), h, cfg.interaction_heads),
                norm_ff: Norm::new(&mut lb, &format!("{prefix}.norm_ff"), h),
                ff: FeedForward::new(&mut lb, &format!("{prefix}.ff"), h),
            }
        });
        let heads = Task::ALL.map(|task| Linear::new(&mut lb, &format!("head.{task}"), h, cfg.num_classes(task)));
        (
            Self {
                encoders,
                fusion,
                interaction,
                heads,
            },
            lb.specs,
        )
    }

    /// `x` is `T x d`; `valid` marks the non-padding rows.
    pub fn encode(&self, tape: &mut Tape, p: &[Var], m: Modality, task: Task, x: Var, valid: &[bool]) -> Var {
        let enc = &self.encoders[m][task.index()];
        let hidden = enc.proj.apply(tape, p, x);
        let ctx = enc.attn.apply(tape, p, hidden, hidden, Some(valid));
        let hidden = tape.add(hidden, ctx);
        tape.masked_mean_rows(hidden, valid)
    }

    /// Fuses three `1 x h` modality embeddings through the task's
    /// transformer; returns the aggregation token's final state.
    pub fn fuse(&self, tape: &mut Tape, p: &[Var], task: Task, embs: [Var; 3]) -> Var {
        let f = &self.fusion[task.index()];
        let mut x = tape.concat_rows(&[p[f.token], embs[0], embs[1], embs[2]]);
        for b in &f.blocks {
            let normed = b.norm_attn.apply(tape, p, x);
            let ctx = b.attn.apply(tape, p, normed, normed, None);
            x = tape.add(x, ctx);
            let normed = b.norm_ff.apply(tape, p, x);
            let ff = b.ff.apply(tape, p, normed);
            x = tape.add(x, ff);
        }
        let out = f.norm_out.apply(tape, p, x);
        tape.slice_rows(out, 0, 1)
    }

    pub fn interact(&self, tape: &mut Tape, p: &[Var], emotion: Var, intent: Var) -> (Var, Var) {
        let mut step = |block: &CrossBlock, own: Var, other: Var| {
            let ctx = block.attn.apply(tape, p, own, other, None);
            let x = tape.add(own, ctx);
            let normed = block.norm_ff.apply(tape, p, x);
            let ff = block.ff.apply(tape, p, normed);
            tape.add(x, ff)
        };
        let e = step(&self.interaction[0], emotion, intent);
        let i = step(&self.interaction[1], intent, emotion);
        (e, i)
    }

    pub fn classify(&self, tape: &mut Tape, p: &[Var], task: Task, rep: Var) -> Var {
        self.heads[task.index()].apply(tape, p, rep)
    }

    /// Full pass from per-modality inputs (already on the tape) to logits.
    /// Dropped modalities have both task embeddings multiplied by zero.
    pub fn forward(&self, tape: &mut Tape, p: &[Var], inputs: &ModalityMap<(Var, Vec<bool>)>, keep: [bool; 3]) -> ForwardVars {
        let mut embs = [[None; 3]; 2];
        for m in Modality::ALL {
            let (x, valid) = &inputs[m];
            for task in Task::ALL {
                let mut e = self.encode(tape, p, m, task, *x, valid);
                if !keep[m.index()] {
                    e = tape.scale(e, 0.0);
                }
                embs[task.index()][m.index()] = Some(e);
            }
        }
        let fused = Task::ALL.map(|task| {
            let [a, v, t] = embs[task.index()].map(|e| e.expect("filled above"));
            self.fuse(tape, p, task, [a, v, t])
        });
        let (e, i) = self.interact(tape, p, fused[0], fused[1]);
        let logits = [self.classify(tape, p, Task::Emotion, e), self.classify(tape, p, Task::Intent, i)];
        ForwardVars { logits, reps: [e, i] }
    }
}

pub(crate) fn row_var(tape: &mut Tape, v: &[f64]) -> Var {
    tape.leaf(Mat::row_vector(v.to_vec()))
}
