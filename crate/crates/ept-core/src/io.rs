//! Binary checkpoint files.
//!
//! Every file uses one matrix layout — row count and column count as
//! little-endian `u64`, then the row-major `f64` payload, also little-endian
//! — preceded by a small typed header and followed by a SHA-256 content hash
//! of everything before it. Round-trips are bit-exact, including negative
//! zeros and non-finite values, so checkpoints reproduce runs down to the
//! last ulp.
//!
//! Three file kinds:
//! * pipeline checkpoints ([`write_ept_checkpoint`]) — the full trainable
//!   state plus mode switches; the unit of prompt transfer,
//! * encoder checkpoints ([`write_encoder_checkpoint`]) — frozen backbone
//!   weights plus their config,
//! * baked prompts ([`write_baked_prompt`]) — the deployment artifact:
//!   `P_new`, the factors, the budget tuple, and the fusion variant tag.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::budget::PromptBudget;
use crate::decompose::DecomposedPrompt;
use crate::encoder::{EncoderConfig, FrozenEncoder, LayerWeights};
use crate::error::{EptError, Result};
use crate::fusion::FusionVariant;
use crate::matrix::Matrix;
use crate::pipeline::{BakedPrompt, EptParams};
use crate::projection::{Expert, ExpertStack, GateHead, GateNet};

const EPT_MAGIC: &[u8; 8] = b"EPTCKPT1";
const ENCODER_MAGIC: &[u8; 8] = b"EPTENC1\0";
const BAKED_MAGIC: &[u8; 8] = b"EPTBAKE1";

/// Hex SHA-256 of arbitrary bytes; also used to fingerprint configs in
/// experiment outputs.
pub fn content_hash_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn malformed(path: &Path, reason: impl Into<String>) -> EptError {
    EptError::MalformedFile {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    off: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Reader {
            bytes,
            off: 0,
            path,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.off.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(malformed(
                self.path,
                format!("truncated: wanted {n} bytes at offset {}", self.off),
            ));
        };
        let slice = &self.bytes[self.off..end];
        self.off = end;
        Ok(slice)
    }

    fn u64(&mut self) -> Result<u64> {
        let raw = self.take(8)?;
        Ok(u64::from_le_bytes(raw.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| malformed(self.path, format!("count {v} overflows usize")))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn matrix(&mut self) -> Result<Matrix<f64>> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| malformed(self.path, format!("matrix {rows}x{cols} overflows")))?;
        let raw = self.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Matrix::from_vec(rows, cols, data))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.usize()?;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| malformed(self.path, "name is not valid UTF-8"))
    }

    fn done(&self) -> Result<()> {
        if self.off != self.bytes.len() {
            return Err(malformed(
                self.path,
                format!(
                    "{} trailing bytes after the content hash",
                    self.bytes.len() - self.off
                ),
            ));
        }
        Ok(())
    }
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_matrix(buf: &mut Vec<u8>, m: &Matrix<f64>) {
    put_u64(buf, m.rows() as u64);
    put_u64(buf, m.cols() as u64);
    for &x in m.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_string(buf: &mut Vec<u8>, s: &str) {
    put_u64(buf, s.len() as u64);
    buf.extend_from_slice(s.as_bytes());
}

fn put_budget(buf: &mut Vec<u8>, b: &PromptBudget) {
    for v in [b.l, b.s, b.m, b.d, b.r, b.slack] {
        put_u64(buf, v as u64);
    }
}

fn read_budget(r: &mut Reader) -> Result<PromptBudget> {
    Ok(PromptBudget {
        l: r.usize()?,
        s: r.usize()?,
        m: r.usize()?,
        d: r.usize()?,
        r: r.usize()?,
        slack: r.usize()?,
    })
}

/// Seal `body` with its hash and write it out.
fn write_sealed(path: &Path, mut body: Vec<u8>) -> Result<()> {
    let digest = Sha256::digest(&body);
    body.extend_from_slice(&digest);
    std::fs::write(path, body)?;
    Ok(())
}

/// Read a sealed file back, verify the hash, and return the body.
fn read_sealed<'a>(path: &Path, bytes: &'a [u8], magic: &[u8; 8]) -> Result<&'a [u8]> {
    if bytes.len() < magic.len() + 32 {
        return Err(malformed(path, "file too short for header and hash"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != trailer {
        return Err(malformed(path, "content hash mismatch"));
    }
    if &body[..magic.len()] != magic {
        return Err(malformed(
            path,
            format!(
                "unexpected magic {:?}, wanted {:?}",
                &body[..magic.len()],
                magic
            ),
        ));
    }
    Ok(&body[magic.len()..])
}

fn variant_tag(v: FusionVariant) -> u8 {
    match v {
        FusionVariant::CrossAttention => 0,
        FusionVariant::LiteralEinsum => 1,
    }
}

fn variant_from_tag(tag: u8, path: &Path) -> Result<FusionVariant> {
    match tag {
        0 => Ok(FusionVariant::CrossAttention),
        1 => Ok(FusionVariant::LiteralEinsum),
        other => Err(malformed(
            path,
            format!("unknown fusion variant tag {other}"),
        )),
    }
}

/// One-line structural summary used in compatibility errors.
pub fn describe_params(p: &EptParams<f64>) -> String {
    let b = &p.budget;
    format!(
        "(l={}, s={}, m={}, d={}, r={}, experts={}, variant={}, fusion={}, projection={})",
        b.l,
        b.s,
        b.m,
        b.d,
        b.r,
        p.experts.n_experts(),
        p.variant,
        if p.use_fusion { "on" } else { "off" },
        if p.use_projection { "on" } else { "off" },
    )
}

/// Error unless two pipelines share geometry, expert count, variant, and
/// mode switches — the condition for loading one's checkpoint into the
/// other's trainer.
pub fn ensure_compatible(expected: &EptParams<f64>, found: &EptParams<f64>) -> Result<()> {
    let same = expected.budget == found.budget
        && expected.experts.n_experts() == found.experts.n_experts()
        && expected.variant == found.variant
        && expected.use_fusion == found.use_fusion
        && expected.use_projection == found.use_projection;
    if !same {
        return Err(EptError::IncompatibleCheckpoint {
            found: describe_params(found),
            expected: describe_params(expected),
        });
    }
    Ok(())
}

/// Write the complete trainable state (all structural matrices, whether or
/// not the current mode registers them) plus the mode switches.
pub fn write_ept_checkpoint(path: &Path, params: &EptParams<f64>) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(EPT_MAGIC);
    put_budget(&mut buf, &params.budget);
    put_u64(&mut buf, params.experts.n_experts() as u64);
    buf.push(variant_tag(params.variant));
    buf.push(u8::from(params.use_fusion));
    buf.push(u8::from(params.use_projection));

    let mut entries: BTreeMap<String, &Matrix<f64>> = BTreeMap::new();
    entries.insert("short_prompt".to_string(), &params.decomposed.p_short);
    entries.insert("factor_a".to_string(), &params.decomposed.a);
    entries.insert("factor_b".to_string(), &params.decomposed.b);
    for (i, e) in params.experts.iter().enumerate() {
        entries.insert(format!("expert{i}.down_weight"), &e.w_down);
        entries.insert(format!("expert{i}.down_bias"), &e.b_down);
        entries.insert(format!("expert{i}.up_weight"), &e.w_up);
        entries.insert(format!("expert{i}.up_bias"), &e.b_up);
    }
    for (i, h) in params.gate.iter().enumerate() {
        entries.insert(format!("gate{i}.weight"), &h.weight);
        entries.insert(format!("gate{i}.bias"), &h.bias);
    }
    put_u64(&mut buf, entries.len() as u64);
    for (name, m) in entries {
        put_string(&mut buf, &name);
        put_matrix(&mut buf, m);
    }
    write_sealed(path, buf)
}

/// Read a pipeline checkpoint back into a full [`EptParams`].
pub fn read_ept_checkpoint(path: &Path) -> Result<EptParams<f64>> {
    let bytes = std::fs::read(path)?;
    let body = read_sealed(path, &bytes, EPT_MAGIC)?;
    let mut r = Reader::new(body, path);
    let budget = read_budget(&mut r)?;
    let n_experts = r.usize()?;
    let variant = variant_from_tag(r.u8()?, path)?;
    let use_fusion = r.u8()? != 0;
    let use_projection = r.u8()? != 0;

    let count = r.usize()?;
    let mut entries: BTreeMap<String, Matrix<f64>> = BTreeMap::new();
    for _ in 0..count {
        let name = r.string()?;
        let m = r.matrix()?;
        entries.insert(name, m);
    }
    r.done()?;

    let mut fetch = |name: &str, rows: usize, cols: usize| -> Result<Matrix<f64>> {
        let m = entries
            .remove(name)
            .ok_or_else(|| malformed(path, format!("missing matrix '{name}'")))?;
        if m.shape() != (rows, cols) {
            return Err(malformed(
                path,
                format!(
                    "matrix '{name}' is {}x{}, header implies {rows}x{cols}",
                    m.rows(),
                    m.cols()
                ),
            ));
        }
        Ok(m)
    };

    let decomposed = DecomposedPrompt {
        p_short: fetch("short_prompt", budget.s, budget.d)?,
        a: fetch("factor_a", budget.m, budget.r)?,
        b: fetch("factor_b", budget.r, budget.d)?,
    };
    let mut experts = Vec::with_capacity(n_experts);
    let mut heads = Vec::with_capacity(n_experts);
    for i in 0..n_experts {
        experts.push(Expert {
            w_down: fetch(&format!("expert{i}.down_weight"), budget.d, budget.m)?,
            b_down: fetch(&format!("expert{i}.down_bias"), 1, budget.m)?,
            w_up: fetch(&format!("expert{i}.up_weight"), budget.m, budget.d)?,
            b_up: fetch(&format!("expert{i}.up_bias"), 1, budget.d)?,
        });
        heads.push(GateHead {
            weight: fetch(&format!("gate{i}.weight"), budget.d, 1)?,
            bias: fetch(&format!("gate{i}.bias"), 1, 1)?,
        });
    }
    if !entries.is_empty() {
        let extra: Vec<&String> = entries.keys().collect();
        return Err(malformed(path, format!("unexpected matrices {extra:?}")));
    }
    Ok(EptParams {
        budget,
        decomposed,
        experts: ExpertStack::from_experts(experts)?,
        gate: GateNet::from_heads(heads)?,
        variant,
        use_fusion,
        use_projection,
    })
}

fn encoder_matrix_names(n_layers: usize) -> Vec<String> {
    let mut names = vec!["embedding".to_string(), "positional".to_string()];
    for i in 0..n_layers {
        for field in [
            "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2",
        ] {
            names.push(format!("layer{i}.{field}"));
        }
    }
    names.push("head".to_string());
    names.push("head_bias".to_string());
    names
}

fn encoder_matrices(enc: &FrozenEncoder) -> Vec<&Matrix<f64>> {
    let mut mats: Vec<&Matrix<f64>> = vec![&enc.embedding, &enc.positional];
    for l in &enc.layers {
        mats.extend([
            &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ffn_w1, &l.ffn_b1,
            &l.ffn_w2, &l.ffn_b2,
        ]);
    }
    mats.push(&enc.head);
    mats.push(&enc.head_bias);
    mats
}

/// Write the frozen backbone: config header, then every weight in a fixed
/// order.
pub fn write_encoder_checkpoint(path: &Path, enc: &FrozenEncoder) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(ENCODER_MAGIC);
    let c = &enc.cfg;
    for v in [
        c.d_model,
        c.n_layers,
        c.n_heads,
        c.ffn_width,
        c.vocab_size,
        c.max_seq,
        c.max_prompt,
        c.n_classes,
    ] {
        put_u64(&mut buf, v as u64);
    }
    put_u64(&mut buf, c.seed);
    for m in encoder_matrices(enc) {
        put_matrix(&mut buf, m);
    }
    write_sealed(path, buf)
}

/// Read a frozen backbone checkpoint.
pub fn read_encoder_checkpoint(path: &Path) -> Result<FrozenEncoder> {
    let bytes = std::fs::read(path)?;
    let body = read_sealed(path, &bytes, ENCODER_MAGIC)?;
    let mut r = Reader::new(body, path);
    let cfg = EncoderConfig {
        d_model: r.usize()?,
        n_layers: r.usize()?,
        n_heads: r.usize()?,
        ffn_width: r.usize()?,
        vocab_size: r.usize()?,
        max_seq: r.usize()?,
        max_prompt: r.usize()?,
        n_classes: r.usize()?,
        seed: r.u64()?,
    };
    cfg.validate()
        .map_err(|e| malformed(path, format!("bad encoder config: {e}")))?;
    let embedding = r.matrix()?;
    let positional = r.matrix()?;
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for _ in 0..cfg.n_layers {
        layers.push(LayerWeights {
            wq: r.matrix()?,
            bq: r.matrix()?,
            wk: r.matrix()?,
            bk: r.matrix()?,
            wv: r.matrix()?,
            bv: r.matrix()?,
            wo: r.matrix()?,
            bo: r.matrix()?,
            ffn_w1: r.matrix()?,
            ffn_b1: r.matrix()?,
            ffn_w2: r.matrix()?,
            ffn_b2: r.matrix()?,
        });
    }
    let head = r.matrix()?;
    let head_bias = r.matrix()?;
    r.done()?;
    let enc = FrozenEncoder {
        cfg,
        embedding,
        positional,
        layers,
        head,
        head_bias,
    };
    if enc.embedding.shape() != (enc.cfg.vocab_size, enc.cfg.d_model) {
        return Err(malformed(
            path,
            format!(
                "embedding is {}x{}, config implies {}x{}",
                enc.embedding.rows(),
                enc.embedding.cols(),
                enc.cfg.vocab_size,
                enc.cfg.d_model
            ),
        ));
    }
    Ok(enc)
}

/// JSON manifest describing an encoder checkpoint: config, per-matrix
/// shapes, and the content hash of the checkpoint bytes.
pub fn encoder_manifest(path: &Path, enc: &FrozenEncoder) -> Result<serde_json::Value> {
    let bytes = std::fs::read(path)?;
    let names = encoder_matrix_names(enc.cfg.n_layers);
    let shapes: Vec<serde_json::Value> = names
        .iter()
        .zip(encoder_matrices(enc))
        .map(|(name, m)| serde_json::json!({ "name": name, "rows": m.rows(), "cols": m.cols() }))
        .collect();
    let c = &enc.cfg;
    Ok(serde_json::json!({
        "config": {
            "d_model": c.d_model,
            "n_layers": c.n_layers,
            "n_heads": c.n_heads,
            "ffn_width": c.ffn_width,
            "vocab_size": c.vocab_size,
            "max_seq": c.max_seq,
            "max_prompt": c.max_prompt,
            "n_classes": c.n_classes,
            "seed": c.seed,
        },
        "matrices": shapes,
        "content_hash": content_hash_hex(&bytes),
    }))
}

/// Write a baked prompt: budget tuple, variant tag, then `P_new`, `A`, `B`.
pub fn write_baked_prompt(
    path: &Path,
    baked: &BakedPrompt<f64>,
    budget: &PromptBudget,
    variant: FusionVariant,
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(BAKED_MAGIC);
    put_budget(&mut buf, budget);
    buf.push(variant_tag(variant));
    put_matrix(&mut buf, &baked.p_new);
    put_matrix(&mut buf, &baked.a);
    put_matrix(&mut buf, &baked.b);
    write_sealed(path, buf)
}

/// Read a baked prompt back, with its budget and variant.
pub fn read_baked_prompt(path: &Path) -> Result<(BakedPrompt<f64>, PromptBudget, FusionVariant)> {
    let bytes = std::fs::read(path)?;
    let body = read_sealed(path, &bytes, BAKED_MAGIC)?;
    let mut r = Reader::new(body, path);
    let budget = read_budget(&mut r)?;
    let variant = variant_from_tag(r.u8()?, path)?;
    let p_new = r.matrix()?;
    let a = r.matrix()?;
    let b = r.matrix()?;
    r.done()?;
    if p_new.shape() != (budget.s, budget.d)
        || a.shape() != (budget.m, budget.r)
        || b.shape() != (budget.r, budget.d)
    {
        return Err(malformed(
            path,
            "matrix shapes do not match the budget tuple",
        ));
    }
    Ok((BakedPrompt { p_new, a, b }, budget, variant))
}

/// Parse a fusion variant name, sharing the CLI's spelling.
pub fn parse_variant(s: &str) -> Result<FusionVariant> {
    FusionVariant::from_str(s)
}
