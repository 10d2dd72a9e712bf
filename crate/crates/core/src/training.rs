//! Training loop with early stopping on cross-validation F1, and span-level
//! evaluation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use crate::corpus::{extract_spans, EntitySpan};
use crate::corpus::{CorpusError, EntityType, LabeledSentence, Tag, Vocabulary};
use crate::lexicon::Lexicon;
use crate::model::{mean_nll, MderConfig, ModelError, Tagger};
use crate::numerics::{NumericsError, Tape, Tensor};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("{0} set is empty")]
    Empty(&'static str),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    /// Epochs without a CV F1 improvement before stopping.
    pub patience: usize,
    /// Stop as soon as CV F1 reaches this value.
    pub target_f1: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            max_epochs: 100,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 5.0,
            patience: 3,
            target_f1: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) || !(self.adam_eps > 0.0) {
            return bad("learning rate, clip norm and epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("decay rates must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Gold, predicted and correct counts for one category.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl Counts {
    pub fn new(gold: usize, predicted: usize, correct: usize) -> Self {
        Self {
            gold,
            predicted,
            correct,
        }
    }

    pub fn merge(self, o: Counts) -> Counts {
        Counts::new(self.gold + o.gold, self.predicted + o.predicted, self.correct + o.correct)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.gold)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Span-level scores. `precision`, `recall` and `f1` are micro-averaged over
/// both entity types; `chars` holds character-level counts for reference.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub method: Counts,
    pub dataset: Counts,
    pub chars: Counts,
}

impl Metrics {
    pub fn from_counts(method: Counts, dataset: Counts, chars: Counts) -> Self {
        let all = method.merge(dataset);
        Self {
            precision: all.precision(),
            recall: all.recall(),
            f1: all.f1(),
            method,
            dataset,
            chars,
        }
    }

    pub fn total(&self) -> Counts {
        self.method.merge(self.dataset)
    }

    pub fn merge(&self, o: &Metrics) -> Metrics {
        Metrics::from_counts(
            self.method.merge(o.method),
            self.dataset.merge(o.dataset),
            self.chars.merge(o.chars),
        )
    }
}

/// Counts exact `(type, start, end)` matches for each entity type.
pub fn score_spans(gold: &[EntitySpan], predicted: &[EntitySpan]) -> (Counts, Counts) {
    let count = |kind: EntityType| {
        let g: Vec<&EntitySpan> = gold.iter().filter(|s| s.kind == kind).collect();
        let p: Vec<&EntitySpan> = predicted.iter().filter(|s| s.kind == kind).collect();
        let correct = p.iter().filter(|s| g.contains(s)).count();
        Counts::new(g.len(), p.len(), correct)
    };
    (count(EntityType::Method), count(EntityType::Dataset))
}

fn score_chars(gold: &[Tag], predicted: &[Tag]) -> Counts {
    let mut c = Counts::default();
    for (g, p) in gold.iter().zip(predicted) {
        let (g, p) = (g.entity_type(), p.entity_type());
        c.gold += g.is_some() as usize;
        c.predicted += p.is_some() as usize;
        c.correct += (g.is_some() && g == p) as usize;
    }
    c
}

/// Scores one tag sequence against another of the same length.
pub fn score_tags(gold: &[Tag], predicted: &[Tag]) -> Result<Metrics, TrainError> {
    if gold.len() != predicted.len() {
        return Err(CorpusError::LengthMismatch {
            chars: gold.len(),
            tags: predicted.len(),
        }
        .into());
    }
    let (m, d) = score_spans(&extract_spans(gold)?, &extract_spans(predicted)?);
    Ok(Metrics::from_counts(m, d, score_chars(gold, predicted)))
}

/// Tags `dataset` with `tagger` and scores the result. Sentences longer than
/// the model's `max_len` are scored on their truncated prefix.
pub fn evaluate(tagger: &Tagger, dataset: &[LabeledSentence]) -> Result<Metrics, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::Empty("evaluation"));
    }
    let max_len = tagger.config.max_len;
    let parts: Vec<Metrics> = dataset
        .par_chunks(16)
        .map(|chunk| {
            let chars: Vec<&[char]> = chunk.iter().map(|s| s.chars()).collect();
            let predicted = tagger.predict(&chars)?;
            let mut acc = Metrics::default();
            for (s, p) in chunk.iter().zip(&predicted) {
                let n = s.len().min(max_len);
                acc = acc.merge(&score_tags(&s.tags()[..n], p)?);
            }
            Ok(acc)
        })
        .collect::<Result<_, TrainError>>()?;
    Ok(parts.iter().fold(Metrics::default(), |a, m| a.merge(m)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub cv: Metrics,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,cv_precision,cv_recall,cv_f1";

    pub fn best(&self) -> Option<&EpochRecord> {
        // first epoch reaching the maximum
        self.epochs
            .iter()
            .fold(None, |best: Option<&EpochRecord>, r| match best {
                Some(b) if b.cv.f1 >= r.cv.f1 => Some(b),
                _ => Some(r),
            })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.train_loss, r.cv.precision, r.cv.recall, r.cv.f1
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|source| TrainError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Adaptive-moment optimizer state, one slot per named parameter.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: &TrainConfig, shapes: &[Vec<usize>]) -> Self {
        Self {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.adam_eps,
            step: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn update(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let (b1, b2) = (self.beta1, self.beta2);
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::sq_norm).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// Mean loss and gradients (in [`MderParams::named`](crate::model::MderParams::named)
/// order) for one batch.
pub fn batch_gradients(
    tagger: &Tagger,
    sentences: &[&LabeledSentence],
) -> Result<(f64, Vec<Tensor>), TrainError> {
    let chars: Vec<&[char]> = sentences.iter().map(|s| s.chars()).collect();
    let tags: Vec<&[Tag]> = sentences.iter().map(|s| s.tags()).collect();
    let batch = tagger.batch(&chars, Some(&tags))?;
    let tape = Tape::new();
    let vars = tagger.params.on_tape(&tape);
    let loss = mean_nll(&vars, &batch, &tagger.config)?;
    let value = loss.item();
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    let mut grads = tape.backward(loss)?;
    let out = vars
        .named()
        .into_iter()
        .map(|(_, v)| grads.take(*v).unwrap_or_else(|| Tensor::zeros(&v.shape())))
        .collect();
    Ok((value, out))
}

/// Trains a tagger, returning the parameters of the epoch with the best CV F1.
pub fn train(
    model_config: &MderConfig,
    config: &TrainConfig,
    train_set: &[LabeledSentence],
    cv_set: &[LabeledSentence],
    lexicon: &Lexicon,
) -> Result<(Tagger, History), TrainError> {
    train_with(model_config, config, train_set, cv_set, lexicon, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    model_config: &MderConfig,
    config: &TrainConfig,
    train_set: &[LabeledSentence],
    cv_set: &[LabeledSentence],
    lexicon: &Lexicon,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Tagger, History), TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Empty("training"));
    }
    if cv_set.is_empty() {
        return Err(TrainError::Empty("cross-validation"));
    }
    let vocab = Vocabulary::build(train_set)?;
    let mut tagger = Tagger::new(model_config.clone(), vocab, lexicon.clone(), config.seed)?;
    let shapes: Vec<Vec<usize>> = tagger
        .params
        .named()
        .iter()
        .map(|(_, t)| t.shape().to_vec())
        .collect();
    let mut adam = Adam::new(config, &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = History::default();
    let mut best: Option<(f64, Tagger)> = None;
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let sentences: Vec<&LabeledSentence> = idx.iter().map(|&i| &train_set[i]).collect();
            let (loss, mut grads) = batch_gradients(&tagger, &sentences)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Divergence { epoch, batch: bi + 1 });
            }
            clip_global_norm(&mut grads, config.clip_norm);
            adam.update(tagger.params.values_mut(), &grads);
            loss_sum += loss * idx.len() as f64;
        }
        let cv = evaluate(&tagger, cv_set)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            cv,
        };
        on_epoch(&record);
        history.epochs.push(record);

        if best.as_ref().is_none_or(|(f, _)| cv.f1 > *f) {
            best = Some((cv.f1, tagger.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= config.patience || config.target_f1.is_some_and(|t| cv.f1 >= t) {
            break;
        }
    }
    let (_, tagger) = best.expect("at least one epoch ran");
    Ok((tagger, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityType::{Dataset, Method};

    #[test]
    fn half_recall_example() {
        let gold = [EntitySpan::new(Method, 0, 3), EntitySpan::new(Dataset, 10, 16)];
        let pred = [EntitySpan::new(Method, 0, 3)];
        let (m, d) = score_spans(&gold, &pred);
        let metrics = Metrics::from_counts(m, d, Counts::default());
        assert_eq!(metrics.precision, 1.0);
        assert_eq!(metrics.recall, 0.5);
        assert!((metrics.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn type_must_match() {
        let (m, d) = score_spans(&[EntitySpan::new(Method, 0, 3)], &[EntitySpan::new(Dataset, 0, 3)]);
        assert_eq!(m, Counts::new(1, 0, 0));
        assert_eq!(d, Counts::new(0, 1, 0));
    }

    #[test]
    fn identity_scores_one() {
        use Tag::*;
        let tags = [BeginMethod, InsideMethod, Outside, BeginDataset];
        let m = score_tags(&tags, &tags).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        assert_eq!(m.chars, Counts::new(3, 3, 3));
    }

    #[test]
    fn no_predictions_gives_zero_f1() {
        let c = Counts::new(4, 0, 0);
        assert_eq!(c.f1(), 0.0);
    }

    #[test]
    fn clip_rescales_joint_norm() {
        let mut g = vec![Tensor::full(&[1], 3.0), Tensor::full(&[1], 4.0)];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0].item() - 0.6).abs() < 1e-12);
        assert!((g[1].item() - 0.8).abs() < 1e-12);
        let mut small = vec![Tensor::full(&[2], 0.1)];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0].data(), &[0.1, 0.1]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let cfg = TrainConfig::default();
        let mut p = Tensor::from_vec(vec![1.0, -1.0]);
        let mut adam = Adam::new(&cfg, &[vec![2]]);
        adam.update(vec![&mut p], &[Tensor::from_vec(vec![0.5, -2.0])]);
        assert!((p.data()[0] - (1.0 - cfg.learning_rate)).abs() < 1e-9);
        assert!((p.data()[1] - (-1.0 + cfg.learning_rate)).abs() < 1e-9);
    }

    #[test]
    fn history_best_is_first_maximum() {
        let rec = |epoch, f1| EpochRecord {
            epoch,
            train_loss: 1.0,
            cv: Metrics {
                f1,
                ..Metrics::default()
            },
        };
        let h = History {
            epochs: vec![rec(1, 0.2), rec(2, 0.5), rec(3, 0.5), rec(4, 0.1)],
        };
        assert_eq!(h.best().unwrap().epoch, 2);
        assert!(h.to_csv().starts_with("epoch,train_loss,cv_precision,cv_recall,cv_f1\n1,1,"));
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.patience = 0;
        assert!(c.validate().is_err());
        c = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
