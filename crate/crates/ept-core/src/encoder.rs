//! A small deterministic transformer encoder with a frozen classification
//! readout — the frozen backbone that prompt tuning trains against.
//!
//! The encoder is pre-LN multi-head self-attention with a ReLU feed-forward
//! block, learned absolute positions, and mean-pool + linear-head
//! classification. It is pretrained briefly on masked-token recovery over a
//! synthetic corpus, then frozen: afterwards its weights only ever enter
//! training tapes as constants, so gradient can flow *through* the encoder
//! into a prompt but never *into* the encoder.
//!
//! Row-position convention: a classified sequence is `[prompt rows; input
//! rows]` where the input block is always exactly `max_seq` rows (padded
//! upstream). Prompt rows take positional entries `0..s`; input rows always
//! take entries `max_prompt..max_prompt + max_seq`, so an input token keeps
//! the same positional vector no matter how long the prompt in front of it
//! is — including length zero, which makes prompt-free classification and
//! pretraining share the exact code path.

use rand::Rng;

use crate::corpus::{MASK_TOKEN, PAD_TOKEN};
use crate::error::{EptError, Result};
use crate::matrix::{Axis, Matrix};
use crate::optim::{Optimizer, OptimizerKind};
use crate::rng::{derive_seed, rng_from_seed, sample_without_replacement};
use crate::tape::{NamedParams, NodeId, Tape};

/// Concrete matrix type for the encoder; training and IO are double-precision.
pub type Mat = Matrix<f64>;

const LN_EPS: f64 = 1e-5;
const PRETRAIN_BATCH: usize = 8;
const PRETRAIN_LR: f64 = 1e-3;
/// Fraction of content positions masked per sequence (at least one).
const MASK_PERCENT: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_width: usize,
    pub vocab_size: usize,
    /// Input block length; every classified sequence is padded to this.
    pub max_seq: usize,
    /// Longest prompt the positional table can host in front of the input.
    pub max_prompt: usize,
    pub n_classes: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_model: 32,
            n_layers: 2,
            n_heads: 2,
            ffn_width: 64,
            vocab_size: 64,
            max_seq: 16,
            max_prompt: 16,
            n_classes: 2,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(EptError::Contract(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.max_seq < 2 {
            return Err(EptError::Contract("max_seq must be at least 2".to_string()));
        }
        if self.n_layers == 0 || self.ffn_width == 0 || self.n_classes < 2 {
            return Err(EptError::Contract(
                "n_layers and ffn_width must be positive; n_classes at least 2".to_string(),
            ));
        }
        if self.vocab_size < 8 {
            return Err(EptError::Contract(
                "vocab_size must be at least 8".to_string(),
            ));
        }
        Ok(())
    }

    /// Rows of the positional table.
    pub fn positions(&self) -> usize {
        self.max_prompt + self.max_seq
    }
}

/// One transformer block's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub wq: Mat,
    pub bq: Mat,
    pub wk: Mat,
    pub bk: Mat,
    pub wv: Mat,
    pub bv: Mat,
    pub wo: Mat,
    pub bo: Mat,
    pub ffn_w1: Mat,
    pub ffn_b1: Mat,
    pub ffn_w2: Mat,
    pub ffn_b2: Mat,
}

/// Encoder weights plus the frozen classifier head. "Frozen" is a usage
/// contract: after [`pretrain_encoder`] returns, these matrices only enter
/// tapes through [`Tape::leaf`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenEncoder {
    pub cfg: EncoderConfig,
    /// Token embedding table, `V×d`; doubles as the vocabulary that source
    /// prompts are initialized from.
    pub embedding: Mat,
    /// Positional table, `(max_prompt + max_seq)×d`.
    pub positional: Mat,
    pub layers: Vec<LayerWeights>,
    /// Classification readout `d×C`; never trained, not even by pretraining.
    pub head: Mat,
    pub head_bias: Mat,
}

/// Tape node ids for one layer's weights.
#[derive(Debug, Clone, Copy)]
pub struct LayerNodes {
    pub wq: NodeId,
    pub bq: NodeId,
    pub wk: NodeId,
    pub bk: NodeId,
    pub wv: NodeId,
    pub bv: NodeId,
    pub wo: NodeId,
    pub bo: NodeId,
    pub ffn_w1: NodeId,
    pub ffn_b1: NodeId,
    pub ffn_w2: NodeId,
    pub ffn_b2: NodeId,
}

/// Tape node ids for the whole encoder.
#[derive(Debug, Clone)]
pub struct EncoderNodes {
    pub embedding: NodeId,
    pub positional: NodeId,
    pub layers: Vec<LayerNodes>,
    pub head: NodeId,
    pub head_bias: NodeId,
}

impl FrozenEncoder {
    /// Seeded random initialization (the step-0 encoder).
    pub fn init(cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let f = cfg.ffn_width;
        let mut rng = rng_from_seed(derive_seed(cfg.seed, "encoder-init"));
        let ds = 1.0 / (d as f64).sqrt();
        let fs = 1.0 / (f as f64).sqrt();
        let embedding = Mat::random_uniform(cfg.vocab_size, d, -ds, ds, &mut rng);
        let positional = Mat::random_uniform(cfg.positions(), d, -ds, ds, &mut rng);
        let layers = (0..cfg.n_layers)
            .map(|_| LayerWeights {
                wq: Mat::random_uniform(d, d, -ds, ds, &mut rng),
                bq: Mat::zeros(1, d),
                wk: Mat::random_uniform(d, d, -ds, ds, &mut rng),
                bk: Mat::zeros(1, d),
                wv: Mat::random_uniform(d, d, -ds, ds, &mut rng),
                bv: Mat::zeros(1, d),
                wo: Mat::random_uniform(d, d, -ds, ds, &mut rng),
                bo: Mat::zeros(1, d),
                ffn_w1: Mat::random_uniform(d, f, -ds, ds, &mut rng),
                ffn_b1: Mat::zeros(1, f),
                ffn_w2: Mat::random_uniform(f, d, -fs, fs, &mut rng),
                ffn_b2: Mat::zeros(1, d),
            })
            .collect();
        let head = Mat::random_uniform(d, cfg.n_classes, -ds, ds, &mut rng);
        let head_bias = Mat::zeros(1, cfg.n_classes);
        Ok(FrozenEncoder {
            cfg: cfg.clone(),
            embedding,
            positional,
            layers,
            head,
            head_bias,
        })
    }

    /// Pad (with the reserved padding token) or truncate to `max_seq`.
    pub fn pad_tokens(&self, tokens: &[usize]) -> Result<Vec<usize>> {
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.cfg.vocab_size) {
            return Err(EptError::Data(format!(
                "token id {bad} outside vocabulary of {}",
                self.cfg.vocab_size
            )));
        }
        let mut out = tokens.to_vec();
        out.truncate(self.cfg.max_seq);
        out.resize(self.cfg.max_seq, PAD_TOKEN);
        Ok(out)
    }

    /// Register every weight as a frozen leaf.
    pub fn register_frozen(&self, tape: &mut Tape<f64>) -> EncoderNodes {
        let layers = self
            .layers
            .iter()
            .map(|l| LayerNodes {
                wq: tape.leaf(l.wq.clone()),
                bq: tape.leaf(l.bq.clone()),
                wk: tape.leaf(l.wk.clone()),
                bk: tape.leaf(l.bk.clone()),
                wv: tape.leaf(l.wv.clone()),
                bv: tape.leaf(l.bv.clone()),
                wo: tape.leaf(l.wo.clone()),
                bo: tape.leaf(l.bo.clone()),
                ffn_w1: tape.leaf(l.ffn_w1.clone()),
                ffn_b1: tape.leaf(l.ffn_b1.clone()),
                ffn_w2: tape.leaf(l.ffn_w2.clone()),
                ffn_b2: tape.leaf(l.ffn_b2.clone()),
            })
            .collect();
        EncoderNodes {
            embedding: tape.leaf(self.embedding.clone()),
            positional: tape.leaf(self.positional.clone()),
            layers,
            head: tape.leaf(self.head.clone()),
            head_bias: tape.leaf(self.head_bias.clone()),
        }
    }

    /// Register embedding, positions, and layers as trainable parameters
    /// (the head stays a frozen leaf). Used only by pretraining.
    fn register_trainable(
        &self,
        tape: &mut Tape<f64>,
        params: &NamedParams<f64>,
    ) -> Result<EncoderNodes> {
        let p = |tape: &mut Tape<f64>, name: &str| -> Result<NodeId> {
            let value = params
                .get(name)
                .ok_or_else(|| EptError::Contract(format!("missing encoder parameter '{name}'")))?
                .clone();
            tape.param(name, value)
        };
        let mut layers = Vec::with_capacity(self.layers.len());
        for i in 0..self.layers.len() {
            layers.push(LayerNodes {
                wq: p(tape, &format!("layer{i}.wq"))?,
                bq: p(tape, &format!("layer{i}.bq"))?,
                wk: p(tape, &format!("layer{i}.wk"))?,
                bk: p(tape, &format!("layer{i}.bk"))?,
                wv: p(tape, &format!("layer{i}.wv"))?,
                bv: p(tape, &format!("layer{i}.bv"))?,
                wo: p(tape, &format!("layer{i}.wo"))?,
                bo: p(tape, &format!("layer{i}.bo"))?,
                ffn_w1: p(tape, &format!("layer{i}.ffn_w1"))?,
                ffn_b1: p(tape, &format!("layer{i}.ffn_b1"))?,
                ffn_w2: p(tape, &format!("layer{i}.ffn_w2"))?,
                ffn_b2: p(tape, &format!("layer{i}.ffn_b2"))?,
            });
        }
        Ok(EncoderNodes {
            embedding: p(tape, "embed")?,
            positional: p(tape, "pos")?,
            layers,
            head: tape.leaf(self.head.clone()),
            head_bias: tape.leaf(self.head_bias.clone()),
        })
    }

    /// Copy the trainable weights into a named parameter set.
    fn to_named_params(&self) -> NamedParams<f64> {
        let mut params = NamedParams::new();
        params.insert("embed", self.embedding.clone());
        params.insert("pos", self.positional.clone());
        for (i, l) in self.layers.iter().enumerate() {
            params.insert(&format!("layer{i}.wq"), l.wq.clone());
            params.insert(&format!("layer{i}.bq"), l.bq.clone());
            params.insert(&format!("layer{i}.wk"), l.wk.clone());
            params.insert(&format!("layer{i}.bk"), l.bk.clone());
            params.insert(&format!("layer{i}.wv"), l.wv.clone());
            params.insert(&format!("layer{i}.bv"), l.bv.clone());
            params.insert(&format!("layer{i}.wo"), l.wo.clone());
            params.insert(&format!("layer{i}.bo"), l.bo.clone());
            params.insert(&format!("layer{i}.ffn_w1"), l.ffn_w1.clone());
            params.insert(&format!("layer{i}.ffn_b1"), l.ffn_b1.clone());
            params.insert(&format!("layer{i}.ffn_w2"), l.ffn_w2.clone());
            params.insert(&format!("layer{i}.ffn_b2"), l.ffn_b2.clone());
        }
        params
    }

    /// Write trained values back from a named parameter set.
    fn absorb_named_params(&mut self, params: &NamedParams<f64>) -> Result<()> {
        let fetch = |name: &str| -> Result<Mat> {
            params
                .get(name)
                .cloned()
                .ok_or_else(|| EptError::Contract(format!("missing encoder parameter '{name}'")))
        };
        self.embedding = fetch("embed")?;
        self.positional = fetch("pos")?;
        for i in 0..self.layers.len() {
            self.layers[i] = LayerWeights {
                wq: fetch(&format!("layer{i}.wq"))?,
                bq: fetch(&format!("layer{i}.bq"))?,
                wk: fetch(&format!("layer{i}.wk"))?,
                bk: fetch(&format!("layer{i}.bk"))?,
                wv: fetch(&format!("layer{i}.wv"))?,
                bv: fetch(&format!("layer{i}.bv"))?,
                wo: fetch(&format!("layer{i}.wo"))?,
                bo: fetch(&format!("layer{i}.bo"))?,
                ffn_w1: fetch(&format!("layer{i}.ffn_w1"))?,
                ffn_b1: fetch(&format!("layer{i}.ffn_b1"))?,
                ffn_w2: fetch(&format!("layer{i}.ffn_w2"))?,
                ffn_b2: fetch(&format!("layer{i}.ffn_b2"))?,
            };
        }
        Ok(())
    }
}

fn affine(tape: &mut Tape<f64>, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
    let xw = tape.matmul(x, w)?;
    tape.add_row_broadcast(xw, b)
}

fn build_layer(
    tape: &mut Tape<f64>,
    x: NodeId,
    layer: &LayerNodes,
    cfg: &EncoderConfig,
) -> Result<NodeId> {
    let head_dim = cfg.d_model / cfg.n_heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let ln1 = tape.layer_norm_rows(x, LN_EPS)?;
    let q = affine(tape, ln1, layer.wq, layer.bq)?;
    let k = affine(tape, ln1, layer.wk, layer.bk)?;
    let v = affine(tape, ln1, layer.wv, layer.bv)?;

    let mut contexts = Vec::with_capacity(cfg.n_heads);
    for h in 0..cfg.n_heads {
        let qh = tape.slice_cols(q, h * head_dim, head_dim)?;
        let kh = tape.slice_cols(k, h * head_dim, head_dim)?;
        let vh = tape.slice_cols(v, h * head_dim, head_dim)?;
        let kt = tape.transpose(kh);
        let scores = tape.matmul(qh, kt)?;
        let scaled = tape.scale(scores, scale);
        let attn = tape.softmax(scaled, Axis::Cols);
        contexts.push(tape.matmul(attn, vh)?);
    }
    let ctx = tape.concat_cols(&contexts)?;
    let proj = affine(tape, ctx, layer.wo, layer.bo)?;
    let after_attn = tape.add(x, proj)?;

    let ln2 = tape.layer_norm_rows(after_attn, LN_EPS)?;
    let h1 = affine(tape, ln2, layer.ffn_w1, layer.ffn_b1)?;
    let r = tape.relu(h1);
    let h2 = affine(tape, r, layer.ffn_w2, layer.ffn_b2)?;
    tape.add(after_attn, h2)
}

/// Full encoder stack over a `[prompt; input]` embedding matrix: positional
/// add, `n_layers` blocks, final layer norm. Returns the hidden states.
pub fn build_encode(
    tape: &mut Tape<f64>,
    nodes: &EncoderNodes,
    cfg: &EncoderConfig,
    seq: NodeId,
) -> Result<NodeId> {
    let rows = tape.value(seq).rows();
    if rows < cfg.max_seq {
        return Err(EptError::Contract(format!(
            "sequence has {rows} rows; the input block alone is {}",
            cfg.max_seq
        )));
    }
    let prompt_rows = rows - cfg.max_seq;
    if prompt_rows > cfg.max_prompt {
        return Err(EptError::Contract(format!(
            "prompt of {prompt_rows} rows exceeds the positional table's {}",
            cfg.max_prompt
        )));
    }
    if tape.value(seq).cols() != cfg.d_model {
        return Err(EptError::ShapeMismatch {
            op: "build_encode",
            left_rows: rows,
            left_cols: tape.value(seq).cols(),
            right_rows: cfg.positions(),
            right_cols: cfg.d_model,
        });
    }

    let input_pos = tape.slice_rows(nodes.positional, cfg.max_prompt, cfg.max_seq)?;
    let pos = if prompt_rows == 0 {
        input_pos
    } else {
        let prompt_pos = tape.slice_rows(nodes.positional, 0, prompt_rows)?;
        tape.concat_rows(&[prompt_pos, input_pos])?
    };
    let mut x = tape.add(seq, pos)?;
    for layer in &nodes.layers {
        x = build_layer(tape, x, layer, cfg)?;
    }
    tape.layer_norm_rows(x, LN_EPS)
}

/// Classification logits (1×C): encode, mean-pool, frozen affine head.
pub fn build_logits(
    tape: &mut Tape<f64>,
    nodes: &EncoderNodes,
    cfg: &EncoderConfig,
    seq: NodeId,
) -> Result<NodeId> {
    let hidden = build_encode(tape, nodes, cfg, seq)?;
    let pooled = tape.mean_rows(hidden)?;
    affine(tape, pooled, nodes.head, nodes.head_bias)
}

/// Masked-token logits (k×V) for the given positions of a prompt-free
/// sequence, using the tied embedding table as the output projection.
pub fn build_mlm_logits(
    tape: &mut Tape<f64>,
    nodes: &EncoderNodes,
    cfg: &EncoderConfig,
    seq: NodeId,
    masked_positions: &[usize],
) -> Result<NodeId> {
    let hidden = build_encode(tape, nodes, cfg, seq)?;
    let picked = tape.gather_rows(hidden, masked_positions)?;
    let et = tape.transpose(nodes.embedding);
    tape.matmul(picked, et)
}

/// One masked example: padded token ids with masks applied, the masked
/// positions, and the original tokens at those positions.
#[derive(Debug, Clone)]
struct MaskedExample {
    tokens: Vec<usize>,
    positions: Vec<usize>,
    targets: Vec<usize>,
}

fn mask_sequence<R: Rng>(seq: &[usize], max_seq: usize, rng: &mut R) -> MaskedExample {
    let len = seq.len().min(max_seq);
    let n_masked = (len * MASK_PERCENT / 100).max(1);
    let mut positions = sample_without_replacement(len, n_masked, rng);
    positions.sort_unstable();
    let mut tokens: Vec<usize> = seq[..len].to_vec();
    tokens.resize(max_seq, PAD_TOKEN);
    let targets = positions.iter().map(|&p| tokens[p]).collect();
    for &p in &positions {
        tokens[p] = MASK_TOKEN;
    }
    MaskedExample {
        tokens,
        positions,
        targets,
    }
}

/// Train embedding, positions, and layers on masked-token recovery, then
/// freeze. `steps = 0` returns the seeded initialization unchanged.
pub fn pretrain_encoder(
    cfg: &EncoderConfig,
    corpus: &[Vec<usize>],
    steps: usize,
) -> Result<FrozenEncoder> {
    if corpus.is_empty() {
        return Err(EptError::Data("pretraining corpus is empty".to_string()));
    }
    let mut encoder = FrozenEncoder::init(cfg)?;
    if steps == 0 {
        return Ok(encoder);
    }

    let mut params = encoder.to_named_params();
    let mut opt = Optimizer::new(OptimizerKind::Adam);
    let mut rng = rng_from_seed(derive_seed(cfg.seed, "pretrain"));
    for step in 0..steps {
        let mut tape = Tape::new();
        let nodes = encoder.register_trainable(&mut tape, &params)?;
        let mut logit_blocks = Vec::with_capacity(PRETRAIN_BATCH);
        let mut targets = Vec::new();
        for _ in 0..PRETRAIN_BATCH {
            let seq = &corpus[rng.gen_range(0..corpus.len())];
            let masked = mask_sequence(seq, cfg.max_seq, &mut rng);
            let emb = tape.gather_rows(nodes.embedding, &masked.tokens)?;
            logit_blocks.push(build_mlm_logits(
                &mut tape,
                &nodes,
                cfg,
                emb,
                &masked.positions,
            )?);
            targets.extend(masked.targets);
        }
        let logits = tape.concat_rows(&logit_blocks)?;
        let loss = tape.cross_entropy_mean(logits, &targets)?;
        let loss_value = tape.value(loss).get(0, 0);
        if !loss_value.is_finite() {
            return Err(EptError::Divergence {
                step,
                lr_prompt: PRETRAIN_LR,
                lr_lowrank: PRETRAIN_LR,
            });
        }
        let grads = tape.backward(loss)?;
        opt.step(&mut params, &grads, &|_| PRETRAIN_LR)?;
    }
    encoder.absorb_named_params(&params)?;
    Ok(encoder)
}

/// Fraction of masked tokens recovered exactly (argmax) on `seqs`, with
/// masking drawn from `seed`. Pure evaluation; no gradients.
pub fn masked_accuracy(encoder: &FrozenEncoder, seqs: &[Vec<usize>], seed: u64) -> Result<f64> {
    if seqs.is_empty() {
        return Err(EptError::Data("evaluation set is empty".to_string()));
    }
    let cfg = &encoder.cfg;
    let mut rng = rng_from_seed(seed);
    let mut correct = 0usize;
    let mut total = 0usize;
    for seq in seqs {
        let masked = mask_sequence(seq, cfg.max_seq, &mut rng);
        let mut tape = Tape::new();
        let nodes = encoder.register_frozen(&mut tape);
        let emb = tape.gather_rows(nodes.embedding, &masked.tokens)?;
        let logits = build_mlm_logits(&mut tape, &nodes, cfg, emb, &masked.positions)?;
        let values = tape.value(logits);
        for (row, &target) in masked.targets.iter().enumerate() {
            let mut best = 0usize;
            for v in 1..cfg.vocab_size {
                if values.get(row, v) > values.get(row, best) {
                    best = v;
                }
            }
            total += 1;
            if best == target {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::markov_corpus;

    fn tiny_cfg() -> EncoderConfig {
        EncoderConfig {
            seed: 7,
            ..EncoderConfig::default()
        }
    }

    fn bits(m: &Mat) -> Vec<u64> {
        m.data().iter().map(|x| x.to_bits()).collect()
    }

    fn classify_tokens(enc: &FrozenEncoder, tokens: &[usize]) -> Mat {
        let padded = enc.pad_tokens(tokens).unwrap();
        let mut tape = Tape::new();
        let nodes = enc.register_frozen(&mut tape);
        let emb = tape.gather_rows(nodes.embedding, &padded).unwrap();
        let logits = build_logits(&mut tape, &nodes, &enc.cfg, emb).unwrap();
        tape.value(logits).clone()
    }

    #[test]
    fn init_is_deterministic() {
        let a = FrozenEncoder::init(&tiny_cfg()).unwrap();
        let b = FrozenEncoder::init(&tiny_cfg()).unwrap();
        assert_eq!(bits(&a.embedding), bits(&b.embedding));
        assert_eq!(bits(&a.layers[1].ffn_w2), bits(&b.layers[1].ffn_w2));
        assert_eq!(bits(&a.head), bits(&b.head));
    }

    #[test]
    fn config_validation_catches_bad_geometry() {
        let mut cfg = tiny_cfg();
        cfg.n_heads = 3; // 32 % 3 != 0
        assert!(FrozenEncoder::init(&cfg).is_err());
        let mut cfg = tiny_cfg();
        cfg.max_seq = 1;
        assert!(FrozenEncoder::init(&cfg).is_err());
    }

    #[test]
    fn identical_inputs_give_identical_logits() {
        let enc = FrozenEncoder::init(&tiny_cfg()).unwrap();
        let tokens = [5, 9, 12, 3, 40];
        let a = classify_tokens(&enc, &tokens);
        let b = classify_tokens(&enc, &tokens);
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn permuting_tokens_changes_logits() {
        let enc = FrozenEncoder::init(&tiny_cfg()).unwrap();
        let a = classify_tokens(&enc, &[5, 9, 12, 3]);
        let b = classify_tokens(&enc, &[3, 12, 9, 5]);
        assert!(
            a.max_abs_diff(&b) > 1e-9,
            "position encodings appear inactive"
        );
    }

    #[test]
    fn zeroed_head_gives_uniform_loss_ln_c() {
        let mut enc = FrozenEncoder::init(&tiny_cfg()).unwrap();
        enc.head = Mat::zeros(enc.cfg.d_model, enc.cfg.n_classes);
        enc.head_bias = Mat::zeros(1, enc.cfg.n_classes);
        let padded = enc.pad_tokens(&[4, 8, 15]).unwrap();
        let mut tape = Tape::new();
        let nodes = enc.register_frozen(&mut tape);
        let emb = tape.gather_rows(nodes.embedding, &padded).unwrap();
        let logits = build_logits(&mut tape, &nodes, &enc.cfg, emb).unwrap();
        let loss = tape.cross_entropy_mean(logits, &[0]).unwrap();
        let want = (enc.cfg.n_classes as f64).ln();
        assert!((tape.value(loss).get(0, 0) - want).abs() < 1e-9);
    }

    #[test]
    fn pad_tokens_pads_and_truncates() {
        let enc = FrozenEncoder::init(&tiny_cfg()).unwrap();
        let short = enc.pad_tokens(&[5, 6]).unwrap();
        assert_eq!(short.len(), 16);
        assert_eq!(&short[..2], &[5, 6]);
        assert!(short[2..].iter().all(|&t| t == PAD_TOKEN));
        let long: Vec<usize> = (2..22).collect();
        let cut = enc.pad_tokens(&long).unwrap();
        assert_eq!(cut.len(), 16);
        assert_eq!(cut, long[..16].to_vec());
        assert!(enc.pad_tokens(&[64]).is_err());
    }

    #[test]
    fn prompt_rows_shift_positions_but_not_input_positions() {
        // Building [prompt; input] must reuse the same positional rows for
        // the input block as building the input alone.
        let enc = FrozenEncoder::init(&tiny_cfg()).unwrap();
        let padded = enc.pad_tokens(&[4, 9, 31]).unwrap();

        let logits_alone = classify_tokens(&enc, &[4, 9, 31]);

        let mut tape = Tape::new();
        let nodes = enc.register_frozen(&mut tape);
        let emb = tape.gather_rows(nodes.embedding, &padded).unwrap();
        let prompt = tape.leaf(Mat::zeros(3, enc.cfg.d_model));
        let seq = tape.concat_rows(&[prompt, emb]).unwrap();
        let logits = build_logits(&mut tape, &nodes, &enc.cfg, seq).unwrap();
        // Zero prompt rows still change pooling; the check here is only that
        // both paths run and disagree (the prompt is genuinely in the
        // sequence), while the shared input positions keep the shapes legal.
        assert_eq!(tape.value(logits).shape(), (1, 2));
        assert!(tape.value(logits).max_abs_diff(&logits_alone) > 0.0);
    }

    #[test]
    fn oversized_prompt_is_rejected() {
        let enc = FrozenEncoder::init(&tiny_cfg()).unwrap();
        let mut tape = Tape::new();
        let nodes = enc.register_frozen(&mut tape);
        let seq = tape.leaf(Mat::zeros(16 + 17, 32));
        assert!(build_encode(&mut tape, &nodes, &enc.cfg, seq).is_err());
    }

    #[test]
    fn pretraining_improves_heldout_masked_accuracy() {
        let cfg = tiny_cfg();
        // Same chain seed for both splits: the held-out sequences follow the
        // same transition structure but are fresh draws.
        let train = markov_corpus(cfg.vocab_size, 256, 8, 16, 100, 1).unwrap();
        let heldout = markov_corpus(cfg.vocab_size, 64, 8, 16, 100, 2).unwrap();
        let before = pretrain_encoder(&cfg, &train, 0).unwrap();
        let after = pretrain_encoder(&cfg, &train, 200).unwrap();
        let acc_before = masked_accuracy(&before, &heldout, 55).unwrap();
        let acc_after = masked_accuracy(&after, &heldout, 55).unwrap();
        assert!(
            acc_after > acc_before,
            "masked accuracy did not improve: {acc_before} -> {acc_after}"
        );
    }

    #[test]
    fn pretraining_is_bit_deterministic() {
        let cfg = tiny_cfg();
        let corpus = markov_corpus(cfg.vocab_size, 64, 8, 16, 9, 90).unwrap();
        let a = pretrain_encoder(&cfg, &corpus, 30).unwrap();
        let b = pretrain_encoder(&cfg, &corpus, 30).unwrap();
        assert_eq!(bits(&a.embedding), bits(&b.embedding));
        assert_eq!(bits(&a.positional), bits(&b.positional));
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert_eq!(bits(&la.wq), bits(&lb.wq));
            assert_eq!(bits(&la.ffn_w1), bits(&lb.ffn_w1));
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(pretrain_encoder(&tiny_cfg(), &[], 10).is_err());
    }
}
