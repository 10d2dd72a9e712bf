use super::{Batch, CnnParams, LstmDirection, LstmLayer, MderConfig, MderParams, ModelError};
use crate::crf::{TapeCrf, NUM_TAGS};
use crate::numerics::{concat, Tensor, Var};

/// Additive score for attention keys at padded positions.
const KEY_MASK: f64 = -1e9;

/// Per-position strided 1x1 convolution with global max pooling.
///
/// For each position the `width`-dim feature vector is subsampled with
/// `stride`; every filter scales and shifts each kept value, applies ReLU and
/// keeps the maximum. `[B, T, width]` becomes `[B, T, F]`.
pub fn cnn_branch<'t>(
    params: &CnnParams<Var<'t>>,
    x: Var<'t>,
    stride: usize,
) -> Result<Var<'t>, ModelError> {
    let shape = x.shape();
    let [b, t, width] = shape[..] else {
        return Err(ModelError::Batch(format!("cnn input must be [B, T, W], got {shape:?}")));
    };
    let filters = params.weight.shape()[1];
    let n = b * t;
    let kept = width.div_ceil(stride);
    let sub = x.reshape(&[n, width])?.slice_step(1, 0, width, stride)?;
    let act = sub
        .reshape(&[n * kept, 1])?
        .matmul(params.weight)?
        .add(params.bias)?
        .relu();
    Ok(act
        .reshape(&[n, kept, filters])?
        .max(1)?
        .reshape(&[b, t, filters])?)
}

fn mask_column(mask: &[f64], seq_len: usize, step: usize, width: usize) -> Option<(Tensor, Tensor)> {
    let col: Vec<f64> = mask.chunks(seq_len).map(|row| row[step]).collect();
    if col.iter().all(|&m| m == 1.0) {
        return None;
    }
    let b = col.len();
    let keep = Tensor::from_fn(&[b, width], |i| col[i / width]);
    let carry = keep.map(|m| 1.0 - m);
    Some((keep, carry))
}

fn lstm_direction<'t>(
    p: &LstmDirection<Var<'t>>,
    x: Var<'t>,
    mask: &[f64],
    reverse: bool,
) -> Result<Var<'t>, ModelError> {
    let tape = x.tape();
    let shape = x.shape();
    let (b, t_len) = (shape[0], shape[1]);
    let h_dim = p.w_hh.shape()[0];
    let xproj = x.matmul(p.w_ih)?.add(p.bias)?;
    let mut h = tape.constant(Tensor::zeros(&[b, h_dim]));
    let mut c = tape.constant(Tensor::zeros(&[b, h_dim]));
    let mut outs: Vec<Option<Var<'t>>> = vec![None; t_len];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..t_len).rev())
    } else {
        Box::new(0..t_len)
    };
    for step in order {
        let z = xproj
            .slice(1, step, step + 1)?
            .reshape(&[b, 4 * h_dim])?
            .add(h.matmul(p.w_hh)?)?;
        let i = z.slice(1, 0, h_dim)?.sigmoid();
        let f = z.slice(1, h_dim, 2 * h_dim)?.sigmoid();
        let g = z.slice(1, 2 * h_dim, 3 * h_dim)?.tanh();
        let o = z.slice(1, 3 * h_dim, 4 * h_dim)?.sigmoid();
        let c_new = f.mul(c)?.add(i.mul(g)?)?;
        let h_new = o.mul(c_new.tanh())?;
        let out = match mask_column(mask, t_len, step, h_dim) {
            None => {
                c = c_new;
                h = h_new;
                h_new
            }
            Some((keep, carry)) => {
                let keep = tape.constant(keep);
                let carry = tape.constant(carry);
                c = c_new.mul(keep)?.add(c.mul(carry)?)?;
                h = h_new.mul(keep)?.add(h.mul(carry)?)?;
                h_new.mul(keep)?
            }
        };
        outs[step] = Some(out.reshape(&[b, 1, h_dim])?);
    }
    let outs: Vec<Var<'t>> = outs.into_iter().map(|o| o.expect("every step ran")).collect();
    Ok(concat(&outs, 1)?)
}

/// Stacked bidirectional LSTM. Each layer runs both directions over the
/// sequence and concatenates them per position. Padded positions carry the
/// recurrent state through unchanged and output zeros.
pub fn bilstm<'t>(
    layers: &[LstmLayer<Var<'t>>],
    x: Var<'t>,
    mask: &[f64],
) -> Result<Var<'t>, ModelError> {
    let mut h = x;
    for layer in layers {
        let fwd = lstm_direction(&layer.forward, h, mask, false)?;
        let bwd = lstm_direction(&layer.backward, h, mask, true)?;
        h = concat(&[fwd, bwd], 2)?;
    }
    Ok(h)
}

/// Scaled self-attention sharing one projection:
/// `u = tanh(h W)`, `a = softmax(u u^T / sqrt(d))` over unpadded keys, output `a u`.
pub fn attention<'t>(w: Var<'t>, h: Var<'t>, mask: &[f64]) -> Result<Var<'t>, ModelError> {
    let tape = h.tape();
    let shape = h.shape();
    let (b, t_len) = (shape[0], shape[1]);
    for (row, m) in mask.chunks(t_len).enumerate() {
        if m.iter().all(|&v| v == 0.0) {
            return Err(ModelError::AllMasked(row));
        }
    }
    let d = w.shape()[1];
    let u = h.matmul(w)?.tanh();
    let mut scores = u.matmul(u.transpose()?)?.scale(1.0 / (d as f64).sqrt());
    if mask.contains(&0.0) {
        let key_mask = Tensor::from_fn(&[b, t_len, t_len], |i| {
            let (bi, s) = (i / (t_len * t_len), i % t_len);
            if mask[bi * t_len + s] == 0.0 {
                KEY_MASK
            } else {
                0.0
            }
        });
        scores = scores.add(tape.constant(key_mask))?;
    }
    Ok(scores.softmax().matmul(u)?)
}

/// Tag emissions `[B, T, 5]` for a batch.
pub fn emissions<'t>(
    params: &MderParams<Var<'t>>,
    batch: &Batch,
    config: &MderConfig,
) -> Result<Var<'t>, ModelError> {
    let (b, t) = (batch.batch_size, batch.seq_len);
    let mut embedded = params.char_emb.gather(&batch.char_ids)?;
    if config.use_rule {
        let rule_emb = params
            .rule_emb
            .ok_or_else(|| ModelError::Config("missing rule embedding".into()))?;
        embedded = concat(&[embedded, rule_emb.gather(&batch.rule_ids)?], 1)?;
    }
    let e = embedded.reshape(&[b, t, config.input_width()])?;
    let mut features = bilstm(&params.lstm, e, &batch.mask)?;
    if config.use_cnn {
        let cnn = params
            .cnn
            .as_ref()
            .ok_or_else(|| ModelError::Config("missing CNN parameters".into()))?;
        features = concat(&[features, cnn_branch(cnn, e, config.feature_stride)?], 2)?;
    }
    let attended = attention(params.attn_w, features, &batch.mask)?;
    Ok(attended.matmul(params.proj_w)?.add(params.proj_b)?)
}

/// CRF negative log-likelihood of each sentence's gold tags, over its real
/// positions only.
pub fn sentence_nlls<'t>(
    params: &MderParams<Var<'t>>,
    batch: &Batch,
    config: &MderConfig,
) -> Result<Vec<Var<'t>>, ModelError> {
    if batch.gold.is_none() {
        return Err(ModelError::Batch("gold tags required for the loss".into()));
    }
    let em = emissions(params, batch, config)?;
    let crf = TapeCrf::new(&params.crf)?;
    let lengths = batch.lengths();
    let mut out = Vec::with_capacity(batch.batch_size);
    for (i, &len) in lengths.iter().enumerate() {
        let rows = em
            .slice(0, i, i + 1)?
            .slice(1, 0, len)?
            .reshape(&[len, NUM_TAGS])?;
        let gold = batch.gold_row(i).expect("checked above");
        out.push(crf.nll(rows, gold)?);
    }
    Ok(out)
}

/// Mean of [`sentence_nlls`] over the batch.
pub fn mean_nll<'t>(
    params: &MderParams<Var<'t>>,
    batch: &Batch,
    config: &MderConfig,
) -> Result<Var<'t>, ModelError> {
    let nlls = sentence_nlls(params, batch, config)?;
    let n = nlls.len();
    let mut total = nlls[0];
    for v in &nlls[1..] {
        total = total.add(*v)?;
    }
    Ok(total.scale(1.0 / n as f64))
}
