use rand::{Rng, RngCore};

use super::params::{ParamCursor, ParamSet};
use super::{InputColumn, InputLayout, Mode, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, Tensor};

/// Feature-tokenizer transformer.
///
/// Each feature becomes a `d`-dimensional token (`x_j * W_j + b_j` for
/// numeric columns, an embedding row for categorical ones) and a learned
/// classification token is appended last. The token sequence passes
/// through `n_blocks` pre-norm blocks; the head reads the classification
/// token's final representation and produces one logit.
#[derive(Clone, Debug, PartialEq)]
pub struct Transformer {
    pub(crate) config: ModelConfig,
    pub(crate) layout: InputLayout,
    pub(crate) params: ParamSet,
}

impl Transformer {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, layout: &InputLayout, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if layout.is_empty() {
            return Err(Error::Config("transformer needs at least one feature".into()));
        }
        let d = config.embed_dim;
        let token_bound = 1.0 / (d as f64).sqrt();
        let mut p = ParamSet::new();

        let n_num = layout.n_numeric();
        if n_num > 0 {
            p.push_uniform("tokenizer.num_weight", n_num, d, token_bound, rng);
            p.push_const("tokenizer.num_bias", n_num, d, 0.0);
        }
        for col in layout.columns() {
            if let InputColumn::Categorical { name, cardinality } = col {
                p.push_uniform(format!("tokenizer.cat.{name}"), *cardinality, d, token_bound, rng);
            }
        }
        p.push_uniform("tokenizer.cls", 1, d, token_bound, rng);
        p.get_mut("tokenizer.cls").unwrap().decay = false;

        let bound = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        for b in 0..config.n_blocks {
            p.push_const(format!("block{b}.ln1.gain"), 1, d, 1.0);
            p.push_const(format!("block{b}.ln1.bias"), 1, d, 0.0);
            for w in ["w_q", "w_k", "w_v", "w_o"] {
                p.push_uniform(format!("block{b}.attn.{w}"), d, d, bound(d), rng);
            }
            p.push_const(format!("block{b}.ln2.gain"), 1, d, 1.0);
            p.push_const(format!("block{b}.ln2.bias"), 1, d, 0.0);
            p.push_uniform(format!("block{b}.ffn.w1"), d, config.ffn_dim, bound(d), rng);
            p.push_const(format!("block{b}.ffn.b1"), 1, config.ffn_dim, 0.0);
            p.push_uniform(format!("block{b}.ffn.w2"), config.ffn_dim, d, bound(config.ffn_dim), rng);
            p.push_const(format!("block{b}.ffn.b2"), 1, d, 0.0);
        }

        p.push_const("head.ln.gain", 1, d, 1.0);
        p.push_const("head.ln.bias", 1, d, 0.0);
        let mut width = d;
        if let Some(h) = config.head_hidden {
            p.push_uniform("head.hidden.weight", d, h, bound(d), rng);
            p.push_const("head.hidden.bias", 1, h, 0.0);
            width = h;
        }
        p.push_uniform("head.out.weight", width, 1, bound(width), rng);
        p.push_const("head.out.bias", 1, 1, 0.0);

        Ok(Transformer {
            config: config.clone(),
            layout: layout.clone(),
            params: p,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Tokens per row: one per feature plus the classification token.
    pub fn n_tokens(&self) -> usize {
        self.layout.len() + 1
    }

    /// Token matrix `[n_rows * n_tokens, d]` for standardized rows, before
    /// any block.
    pub fn tokens(&self, x: &[f64], n_rows: usize) -> Result<Tensor> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = self.params.iter().map(|p| g.constant(p.value.clone())).collect();
        let mut cur = ParamCursor::new(&ids);
        let out = tokenize(&mut g, &mut cur, &self.layout, x, n_rows)?;
        Ok(g.value(out).clone())
    }

    pub(crate) fn forward_graph(
        &self,
        g: &mut Graph,
        ids: &[NodeId],
        x: &[f64],
        n_rows: usize,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<NodeId> {
        let mut cur = ParamCursor::new(ids);
        let training = mode == Mode::Train;
        let t = self.n_tokens();
        let eps = self.config.layer_norm_eps;

        let mut h = tokenize(g, &mut cur, &self.layout, x, n_rows)?;
        for b in 0..self.config.n_blocks {
            h = self
                .block(g, &mut cur, h, n_rows, training, rng)
                .map_err(|e| e.in_context(format!("block {}", b + 1)))?;
        }

        let mut head = || -> Result<NodeId> {
            let cls_rows: Vec<usize> = (0..n_rows).map(|r| r * t + t - 1).collect();
            let mut z = g.gather_rows(h, &cls_rows)?;
            let (gain, bias) = (cur.next()?, cur.next()?);
            z = g.layer_norm(z, gain, bias, eps)?;
            if self.config.head_hidden.is_some() {
                let (w, bias) = (cur.next()?, cur.next()?);
                z = g.matmul(z, w)?;
                z = g.add_row(z, bias)?;
                z = g.gelu(z)?;
            }
            let (w, bias) = (cur.next()?, cur.next()?);
            let logit = g.matmul(z, w)?;
            let logit = g.add_row(logit, bias)?;
            g.sigmoid(logit)
        };
        let out = head().map_err(|e| e.in_context("classification head"))?;
        cur.finish()?;
        Ok(out)
    }

    fn block(
        &self,
        g: &mut Graph,
        cur: &mut ParamCursor<'_>,
        x: NodeId,
        n_rows: usize,
        training: bool,
        rng: &mut dyn RngCore,
    ) -> Result<NodeId> {
        let eps = self.config.layer_norm_eps;
        let rate = self.config.dropout;
        let (ln1_g, ln1_b) = (cur.next()?, cur.next()?);
        let weights = AttentionWeights {
            w_q: cur.next()?,
            w_k: cur.next()?,
            w_v: cur.next()?,
            w_o: cur.next()?,
        };
        let (ln2_g, ln2_b) = (cur.next()?, cur.next()?);
        let (w1, b1, w2, b2) = (cur.next()?, cur.next()?, cur.next()?, cur.next()?);

        let normed = g.layer_norm(x, ln1_g, ln1_b, eps)?;
        let attn = multi_head(g, normed, &weights, self.config.n_heads, n_rows)?;
        let attn = g.dropout(attn, rate, training, rng)?;
        let x = g.add(x, attn)?;

        let normed = g.layer_norm(x, ln2_g, ln2_b, eps)?;
        let f = g.matmul(normed, w1)?;
        let f = g.add_row(f, b1)?;
        let f = g.gelu(f)?;
        let f = g.matmul(f, w2)?;
        let f = g.add_row(f, b2)?;
        let f = g.dropout(f, rate, training, rng)?;
        g.add(x, f)
    }
}

/// Builds the `[n_rows * t, d]` token matrix, row-major by (row, token).
///
/// Numeric token j is `x_j * W_j + b_j`; categorical tokens are table
/// lookups; the classification token is last in every row.
pub(crate) fn tokenize(
    g: &mut Graph,
    cur: &mut ParamCursor<'_>,
    layout: &InputLayout,
    x: &[f64],
    n_rows: usize,
) -> Result<NodeId> {
    let n_cols = layout.len();
    if x.len() != n_rows * n_cols {
        return Err(Error::shape(
            "tokenize",
            format!("{} values for {n_rows} rows of {n_cols} features", x.len()),
        ));
    }
    let n_num = layout.n_numeric();
    let (num_weight, num_bias) = if n_num > 0 {
        (Some(cur.next()?), Some(cur.next()?))
    } else {
        (None, None)
    };
    let mut tables = Vec::new();
    let mut table_offset = Vec::with_capacity(n_cols);
    let mut offset = n_num;
    for col in layout.columns() {
        table_offset.push(offset);
        if let InputColumn::Categorical { cardinality, .. } = col {
            tables.push(cur.next()?);
            offset += cardinality;
        }
    }
    let cls = cur.next()?;
    let cls_index = offset;

    let mut parts: Vec<NodeId> = num_bias.into_iter().collect();
    parts.extend(&tables);
    parts.push(cls);
    let table = g.concat_rows(&parts)?;

    let t = n_cols + 1;
    let d = g.value(cls).cols();
    let mut bias_idx = Vec::with_capacity(n_rows * t);
    let mut weight_idx = Vec::with_capacity(n_rows * t);
    let mut scales = Vec::with_capacity(n_rows * t);
    for r in 0..n_rows {
        let row = &x[r * n_cols..(r + 1) * n_cols];
        let mut num_rank = 0;
        for (j, col) in layout.columns().iter().enumerate() {
            match col {
                InputColumn::Numeric { .. } => {
                    bias_idx.push(num_rank);
                    weight_idx.push(num_rank);
                    scales.push(row[j]);
                    num_rank += 1;
                }
                InputColumn::Categorical { name, cardinality } => {
                    let v = row[j];
                    if v < 0.0 || v.fract() != 0.0 || v as usize >= *cardinality {
                        return Err(Error::Data(format!("category index {v} out of range for column {name:?}")));
                    }
                    bias_idx.push(table_offset[j] + v as usize);
                    weight_idx.push(n_num);
                    scales.push(0.0);
                }
            }
        }
        bias_idx.push(cls_index);
        weight_idx.push(n_num);
        scales.push(0.0);
    }
    let tokens = g.gather_rows(table, &bias_idx)?;
    let Some(num_weight) = num_weight else {
        return Ok(tokens);
    };
    let zero = g.constant(Tensor::zeros(&[1, d]));
    let weights = g.concat_rows(&[num_weight, zero])?;
    let scaled = g.gather_rows(weights, &weight_idx)?;
    let scaled = g.scale_rows(scaled, &scales)?;
    g.add(tokens, scaled)
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionWeights {
    pub w_q: NodeId,
    pub w_k: NodeId,
    pub w_v: NodeId,
    pub w_o: NodeId,
}

/// Scaled dot-product attention `softmax(Q Kᵀ / sqrt(d_k)) V`, applied
/// independently to each of `groups` contiguous row blocks.
pub fn attention(g: &mut Graph, q: NodeId, k: NodeId, v: NodeId, groups: usize) -> Result<NodeId> {
    let (qs, ks, vs) = (g.value(q).shape().to_vec(), g.value(k).shape().to_vec(), g.value(v).shape().to_vec());
    if qs != ks || qs != vs {
        return Err(Error::shape("attention", format!("Q {qs:?}, K {ks:?}, V {vs:?}")));
    }
    let d_k = g.value(q).cols();
    let scores = g.batch_matmul(q, k, groups, true)?;
    let scores = g.div_scalar(scores, (d_k as f64).sqrt())?;
    let weights = g.softmax_rows(scores)?;
    g.batch_matmul(weights, v, groups, false)
}

/// Multi-head self-attention over `groups` token sequences stacked in `x`.
/// Head i attends on columns `[i*d_k, (i+1)*d_k)` of the projections.
pub fn multi_head(g: &mut Graph, x: NodeId, w: &AttentionWeights, n_heads: usize, groups: usize) -> Result<NodeId> {
    let d = g.value(x).cols();
    if n_heads == 0 || !d.is_multiple_of(n_heads) {
        return Err(Error::shape("multi_head", format!("width {d} not divisible into {n_heads} heads")));
    }
    let d_k = d / n_heads;
    let q = g.matmul(x, w.w_q)?;
    let k = g.matmul(x, w.w_k)?;
    let v = g.matmul(x, w.w_v)?;
    let heads = if n_heads == 1 {
        vec![attention(g, q, k, v, groups)?]
    } else {
        let mut heads = Vec::with_capacity(n_heads);
        for h in 0..n_heads {
            let qh = g.slice_cols(q, h * d_k, d_k)?;
            let kh = g.slice_cols(k, h * d_k, d_k)?;
            let vh = g.slice_cols(v, h * d_k, d_k)?;
            heads.push(attention(g, qh, kh, vh, groups)?);
        }
        heads
    };
    let concat = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
    g.matmul(concat, w.w_o)
}
