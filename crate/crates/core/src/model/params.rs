use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MderConfig, ModelError, RULE_VOCAB};
use crate::crf::{CrfParams, NUM_TAGS};
use crate::numerics::{Tape, Tensor, Var};

/// Gate order in the fused weights is input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmDirection<P = Tensor> {
    /// `[in, 4H]`
    pub w_ih: P,
    /// `[H, 4H]`
    pub w_hh: P,
    /// `[4H]`
    pub bias: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer<P = Tensor> {
    pub forward: LstmDirection<P>,
    pub backward: LstmDirection<P>,
}

/// One scalar 1x1 kernel and bias per filter.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnParams<P = Tensor> {
    /// `[1, F]`
    pub weight: P,
    /// `[F]`
    pub bias: P,
}

/// Every learned array of the network. `P` is [`Tensor`] at rest and [`Var`]
/// while recording.
#[derive(Clone, Debug, PartialEq)]
pub struct MderParams<P = Tensor> {
    /// `[vocab, char_emb_dim]`
    pub char_emb: P,
    /// `[6, rule_emb_dim]`
    pub rule_emb: Option<P>,
    pub lstm: Vec<LstmLayer<P>>,
    pub cnn: Option<CnnParams<P>>,
    /// `[attn_in, attn_out]`
    pub attn_w: P,
    /// `[attn_out, 5]`
    pub proj_w: P,
    /// `[5]`
    pub proj_b: P,
    pub crf: CrfParams<P>,
}

impl<P> MderParams<P> {
    /// Parameters with stable names, in a fixed order.
    pub fn named(&self) -> Vec<(String, &P)> {
        let mut out: Vec<(String, &P)> = vec![("char_emb".into(), &self.char_emb)];
        if let Some(r) = &self.rule_emb {
            out.push(("rule_emb".into(), r));
        }
        for (l, layer) in self.lstm.iter().enumerate() {
            for (dir, d) in [("fwd", &layer.forward), ("bwd", &layer.backward)] {
                out.push((format!("lstm.{l}.{dir}.w_ih"), &d.w_ih));
                out.push((format!("lstm.{l}.{dir}.w_hh"), &d.w_hh));
                out.push((format!("lstm.{l}.{dir}.bias"), &d.bias));
            }
        }
        if let Some(c) = &self.cnn {
            out.push(("cnn.weight".into(), &c.weight));
            out.push(("cnn.bias".into(), &c.bias));
        }
        out.push(("attn.w".into(), &self.attn_w));
        out.push(("proj.w".into(), &self.proj_w));
        out.push(("proj.b".into(), &self.proj_b));
        out.push(("crf.transitions".into(), &self.crf.transitions));
        out.push(("crf.start".into(), &self.crf.start));
        out.push(("crf.end".into(), &self.crf.end));
        out
    }

    /// Same order as [`named`](Self::named).
    pub fn values_mut(&mut self) -> Vec<&mut P> {
        let mut out: Vec<&mut P> = vec![&mut self.char_emb];
        if let Some(r) = &mut self.rule_emb {
            out.push(r);
        }
        for layer in &mut self.lstm {
            for d in [&mut layer.forward, &mut layer.backward] {
                out.push(&mut d.w_ih);
                out.push(&mut d.w_hh);
                out.push(&mut d.bias);
            }
        }
        if let Some(c) = &mut self.cnn {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out.push(&mut self.attn_w);
        out.push(&mut self.proj_w);
        out.push(&mut self.proj_b);
        out.push(&mut self.crf.transitions);
        out.push(&mut self.crf.start);
        out.push(&mut self.crf.end);
        out
    }

    pub fn map<Q>(&self, mut f: impl FnMut(&str, &P) -> Q) -> MderParams<Q> {
        let dir = |f: &mut dyn FnMut(&str, &P) -> Q, l: usize, name: &str, d: &LstmDirection<P>| {
            LstmDirection {
                w_ih: f(&format!("lstm.{l}.{name}.w_ih"), &d.w_ih),
                w_hh: f(&format!("lstm.{l}.{name}.w_hh"), &d.w_hh),
                bias: f(&format!("lstm.{l}.{name}.bias"), &d.bias),
            }
        };
        let char_emb = f("char_emb", &self.char_emb);
        let rule_emb = self.rule_emb.as_ref().map(|r| f("rule_emb", r));
        let lstm = self
            .lstm
            .iter()
            .enumerate()
            .map(|(l, layer)| LstmLayer {
                forward: dir(&mut f, l, "fwd", &layer.forward),
                backward: dir(&mut f, l, "bwd", &layer.backward),
            })
            .collect();
        let cnn = self.cnn.as_ref().map(|c| CnnParams {
            weight: f("cnn.weight", &c.weight),
            bias: f("cnn.bias", &c.bias),
        });
        MderParams {
            char_emb,
            rule_emb,
            lstm,
            cnn,
            attn_w: f("attn.w", &self.attn_w),
            proj_w: f("proj.w", &self.proj_w),
            proj_b: f("proj.b", &self.proj_b),
            crf: CrfParams {
                transitions: f("crf.transitions", &self.crf.transitions),
                start: f("crf.start", &self.crf.start),
                end: f("crf.end", &self.crf.end),
                constrained: self.crf.constrained,
            },
        }
    }
}

impl MderParams<Tensor> {
    /// Records every parameter as a differentiable leaf.
    pub fn on_tape<'t>(&self, tape: &'t Tape) -> MderParams<Var<'t>> {
        self.map(|_, t| tape.param(t.clone()))
    }

    pub fn num_scalars(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Expected shape of every named parameter for a configuration.
    pub fn expected_shapes(config: &MderConfig, vocab_size: usize) -> Vec<(String, Vec<usize>)> {
        let p = shape_skeleton(config, vocab_size);
        p.named()
            .into_iter()
            .map(|(n, s)| (n, s.clone()))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.is_finite())
    }
}

fn shape_skeleton(config: &MderConfig, vocab_size: usize) -> MderParams<Vec<usize>> {
    let h = config.lstm_hidden;
    let lstm = (0..config.lstm_layers)
        .map(|l| {
            let input = if l == 0 { config.input_width() } else { 2 * h };
            let dir = || LstmDirection {
                w_ih: vec![input, 4 * h],
                w_hh: vec![h, 4 * h],
                bias: vec![4 * h],
            };
            LstmLayer {
                forward: dir(),
                backward: dir(),
            }
        })
        .collect();
    MderParams {
        char_emb: vec![vocab_size, config.char_emb_dim],
        rule_emb: config.use_rule.then(|| vec![RULE_VOCAB, config.rule_emb_dim]),
        lstm,
        cnn: config.use_cnn.then(|| CnnParams {
            weight: vec![1, config.cnn_filters],
            bias: vec![config.cnn_filters],
        }),
        attn_w: vec![config.attn_in, config.attn_out],
        proj_w: vec![config.attn_out, NUM_TAGS],
        proj_b: vec![NUM_TAGS],
        crf: CrfParams {
            transitions: vec![NUM_TAGS, NUM_TAGS],
            start: vec![NUM_TAGS],
            end: vec![NUM_TAGS],
            constrained: true,
        },
    }
}

/// Seeded initialization: weight matrices uniform in `±sqrt(6 / (fan_in + fan_out))`,
/// embeddings uniform in `±0.05`, biases zero except the LSTM forget gate at
/// 1.0, CRF scores zero with forbidden transitions masked.
pub fn init_params(
    config: &MderConfig,
    vocab_size: usize,
    seed: u64,
) -> Result<MderParams, ModelError> {
    config.validate()?;
    if vocab_size < 2 {
        return Err(ModelError::Config(format!("vocabulary of size {vocab_size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let skeleton = shape_skeleton(config, vocab_size);
    let h = config.lstm_hidden;
    let mut params = skeleton.map(|name, shape| {
        let uniform = |rng: &mut ChaCha8Rng, bound: f64| {
            Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound))
        };
        if name.ends_with("_emb") {
            uniform(&mut rng, 0.05)
        } else if name.starts_with("crf.") {
            Tensor::zeros(shape)
        } else if shape.len() == 2 {
            let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
            uniform(&mut rng, bound)
        } else if name.ends_with(".bias") && name.starts_with("lstm.") {
            Tensor::from_fn(shape, |i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 })
        } else {
            Tensor::zeros(shape)
        }
    });
    params.crf = CrfParams::new_constrained();
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let c = MderConfig::debug_small();
        assert_eq!(init_params(&c, 20, 5).unwrap(), init_params(&c, 20, 5).unwrap());
        assert_ne!(init_params(&c, 20, 5).unwrap(), init_params(&c, 20, 6).unwrap());
    }

    #[test]
    fn full_config_shapes() {
        let p = init_params(&MderConfig::full(), 50, 1).unwrap();
        assert_eq!(p.char_emb.shape(), &[50, 200]);
        assert_eq!(p.rule_emb.as_ref().unwrap().shape(), &[6, 40]);
        assert_eq!(p.attn_w.shape(), &[510, 480]);
        assert_eq!(p.lstm[0].forward.w_ih.shape(), &[240, 960]);
        assert_eq!(p.lstm[1].backward.w_ih.shape(), &[480, 960]);
        assert_eq!(p.proj_w.shape(), &[480, 5]);
        assert!(p.is_finite());
    }

    #[test]
    fn baseline_shapes() {
        let p = init_params(&MderConfig::baseline(), 50, 1).unwrap();
        assert!(p.rule_emb.is_none());
        assert!(p.cnn.is_none());
        assert_eq!(p.attn_w.shape(), &[480, 480]);
    }

    #[test]
    fn init_ranges() {
        let c = MderConfig::debug_small();
        let p = init_params(&c, 30, 3).unwrap();
        assert!(p.char_emb.data().iter().all(|v| v.abs() <= 0.05));
        let h = c.lstm_hidden;
        let b = p.lstm[0].forward.bias.data();
        assert!(b[..h].iter().all(|&v| v == 0.0));
        assert!(b[h..2 * h].iter().all(|&v| v == 1.0));
        assert!(b[2 * h..].iter().all(|&v| v == 0.0));
        let bound = (6.0 / (c.attn_in + c.attn_out) as f64).sqrt();
        assert!(p.attn_w.data().iter().all(|v| v.abs() <= bound));
        assert!(p.proj_b.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn names_and_mut_views_align() {
        let mut p = init_params(&MderConfig::debug_small(), 10, 0).unwrap();
        let shapes: Vec<Vec<usize>> = p.named().iter().map(|(_, t)| t.shape().to_vec()).collect();
        let mut_shapes: Vec<Vec<usize>> = p.values_mut().iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, mut_shapes);
    }
}
