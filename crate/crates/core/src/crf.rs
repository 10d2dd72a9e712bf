//! Linear-chain CRF over the five character tags.
//!
//! A path `y` over emissions `E` (T x 5) scores
//! `start[y1] + sum_i E[i][y_i] + sum_i trans[y_i][y_{i+1}] + end[yT]`.
//! Transitions that break the BIO scheme (into `I-X` from anything but `B-X`
//! or `I-X`, and from the sentence start) are pinned at [`MASKED_SCORE`] and
//! receive no gradient.

use thiserror::Error;

use crate::corpus::Tag;
use crate::numerics::{logsumexp_slice, NumericsError, Tape, Tensor, Var};

pub const NUM_TAGS: usize = Tag::COUNT;

/// Effective score of a forbidden transition.
pub const MASKED_SCORE: f64 = -1e4;

#[derive(Debug, Error, PartialEq)]
pub enum CrfError {
    #[error("tag index {0} out of range")]
    InvalidTag(usize),
    #[error("{tags} tags for {steps} emission rows")]
    LengthMismatch { tags: usize, steps: usize },
    #[error("emissions must be [T, 5] with T >= 1, got {0:?}")]
    BadEmissions(Vec<usize>),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Transition, start and end scores. `P` is [`Tensor`] for stored parameters
/// and [`Var`] while recording on a tape.
#[derive(Clone, Debug, PartialEq)]
pub struct CrfParams<P = Tensor> {
    /// `[5, 5]`, row = from, column = to.
    pub transitions: P,
    pub start: P,
    pub end: P,
    /// Whether BIO-invalid transitions are masked.
    pub constrained: bool,
}

pub fn transition_allowed(from: usize, to: usize) -> bool {
    Tag::ALL[to].can_follow(Some(Tag::ALL[from]))
}

pub fn start_allowed(to: usize) -> bool {
    Tag::ALL[to].can_follow(None)
}

impl CrfParams<Tensor> {
    /// Zero scores with the BIO mask applied to the stored values as well.
    pub fn new_constrained() -> Self {
        let mut p = Self::new_unconstrained();
        p.constrained = true;
        for i in 0..NUM_TAGS {
            for j in 0..NUM_TAGS {
                if !transition_allowed(i, j) {
                    p.transitions.set(&[i, j], MASKED_SCORE);
                }
            }
            if !start_allowed(i) {
                p.start.set(&[i], MASKED_SCORE);
            }
        }
        p
    }

    pub fn new_unconstrained() -> Self {
        Self {
            transitions: Tensor::zeros(&[NUM_TAGS, NUM_TAGS]),
            start: Tensor::zeros(&[NUM_TAGS]),
            end: Tensor::zeros(&[NUM_TAGS]),
            constrained: false,
        }
    }

    /// Transition scores with the mask applied.
    pub fn effective_transitions(&self) -> [[f64; NUM_TAGS]; NUM_TAGS] {
        let mut t = [[0.0; NUM_TAGS]; NUM_TAGS];
        for (i, row) in t.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if self.constrained && !transition_allowed(i, j) {
                    MASKED_SCORE
                } else {
                    self.transitions.get(&[i, j])
                };
            }
        }
        t
    }

    pub fn effective_start(&self) -> [f64; NUM_TAGS] {
        std::array::from_fn(|j| {
            if self.constrained && !start_allowed(j) {
                MASKED_SCORE
            } else {
                self.start.data()[j]
            }
        })
    }

    pub fn effective_end(&self) -> [f64; NUM_TAGS] {
        std::array::from_fn(|j| self.end.data()[j])
    }

    /// Records the parameters as differentiable leaves.
    pub fn on_tape<'t>(&self, tape: &'t Tape) -> CrfParams<Var<'t>> {
        CrfParams {
            transitions: tape.param(self.transitions.clone()),
            start: tape.param(self.start.clone()),
            end: tape.param(self.end.clone()),
            constrained: self.constrained,
        }
    }
}

fn rows(emissions: &Tensor) -> Result<Vec<&[f64]>, CrfError> {
    let s = emissions.shape();
    if s.len() != 2 || s[1] != NUM_TAGS {
        return Err(CrfError::BadEmissions(s.to_vec()));
    }
    Ok(emissions.data().chunks(NUM_TAGS).collect())
}

/// Score of one tag path (indices into [`Tag::ALL`]). Any path is accepted;
/// forbidden transitions contribute [`MASKED_SCORE`].
pub fn path_score(emissions: &Tensor, tags: &[usize], crf: &CrfParams) -> Result<f64, CrfError> {
    let rows = rows(emissions)?;
    if tags.len() != rows.len() {
        return Err(CrfError::LengthMismatch {
            tags: tags.len(),
            steps: rows.len(),
        });
    }
    if let Some(&bad) = tags.iter().find(|&&t| t >= NUM_TAGS) {
        return Err(CrfError::InvalidTag(bad));
    }
    let trans = crf.effective_transitions();
    let mut score = crf.effective_start()[tags[0]] + crf.effective_end()[tags[tags.len() - 1]];
    for (i, &t) in tags.iter().enumerate() {
        score += rows[i][t];
        if i > 0 {
            score += trans[tags[i - 1]][t];
        }
    }
    Ok(score)
}

/// Forward log-space recursion: `alpha[t][j]` for every step.
fn forward_alphas(rows: &[&[f64]], crf: &CrfParams) -> Vec<[f64; NUM_TAGS]> {
    let trans = crf.effective_transitions();
    let start = crf.effective_start();
    let mut alphas = Vec::with_capacity(rows.len());
    let mut alpha: [f64; NUM_TAGS] = std::array::from_fn(|j| start[j] + rows[0][j]);
    alphas.push(alpha);
    let mut buf = [0.0; NUM_TAGS];
    for row in &rows[1..] {
        let next: [f64; NUM_TAGS] = std::array::from_fn(|j| {
            for i in 0..NUM_TAGS {
                buf[i] = alpha[i] + trans[i][j];
            }
            logsumexp_slice(&buf) + row[j]
        });
        alpha = next;
        alphas.push(alpha);
    }
    alphas
}

/// Log of the sum of `exp(path_score)` over all `5^T` paths.
pub fn log_partition(emissions: &Tensor, crf: &CrfParams) -> Result<f64, CrfError> {
    let rows = rows(emissions)?;
    if rows.is_empty() {
        return Err(CrfError::BadEmissions(emissions.shape().to_vec()));
    }
    let alphas = forward_alphas(&rows, crf);
    let end = crf.effective_end();
    let last = alphas.last().expect("T >= 1");
    let fin: Vec<f64> = (0..NUM_TAGS).map(|j| last[j] + end[j]).collect();
    Ok(logsumexp_slice(&fin))
}

/// Negative log-likelihood of the gold path.
pub fn nll(emissions: &Tensor, gold: &[Tag], crf: &CrfParams) -> Result<f64, CrfError> {
    let idx: Vec<usize> = gold.iter().map(|t| t.index()).collect();
    Ok(log_partition(emissions, crf)? - path_score(emissions, &idx, crf)?)
}

/// Per-position tag marginals by forward-backward, `[T, 5]`.
pub fn marginals(emissions: &Tensor, crf: &CrfParams) -> Result<Tensor, CrfError> {
    let rows = rows(emissions)?;
    let t_len = rows.len();
    let alphas = forward_alphas(&rows, crf);
    let trans = crf.effective_transitions();
    let end = crf.effective_end();
    let mut betas = vec![[0.0; NUM_TAGS]; t_len];
    betas[t_len - 1] = end;
    let mut buf = [0.0; NUM_TAGS];
    for t in (0..t_len - 1).rev() {
        for i in 0..NUM_TAGS {
            for j in 0..NUM_TAGS {
                buf[j] = trans[i][j] + rows[t + 1][j] + betas[t + 1][j];
            }
            betas[t][i] = logsumexp_slice(&buf);
        }
    }
    let log_z = log_partition(emissions, crf)?;
    let mut out = Vec::with_capacity(t_len * NUM_TAGS);
    for t in 0..t_len {
        for j in 0..NUM_TAGS {
            out.push((alphas[t][j] + betas[t][j] - log_z).exp());
        }
    }
    Ok(Tensor::new(vec![t_len, NUM_TAGS], out)?)
}

/// Highest-scoring path and its score. Ties go to the lowest tag index, both
/// at each backpointer and for the final tag.
pub fn viterbi(emissions: &Tensor, crf: &CrfParams) -> Result<(Vec<Tag>, f64), CrfError> {
    let rows = rows(emissions)?;
    if rows.is_empty() {
        return Err(CrfError::BadEmissions(emissions.shape().to_vec()));
    }
    let trans = crf.effective_transitions();
    let start = crf.effective_start();
    let end = crf.effective_end();
    let mut score: [f64; NUM_TAGS] = std::array::from_fn(|j| start[j] + rows[0][j]);
    let mut back: Vec<[usize; NUM_TAGS]> = Vec::with_capacity(rows.len());
    for row in &rows[1..] {
        let mut ptr = [0usize; NUM_TAGS];
        let mut next = [0.0; NUM_TAGS];
        for j in 0..NUM_TAGS {
            let mut best = 0;
            let mut best_v = score[0] + trans[0][j];
            for i in 1..NUM_TAGS {
                let v = score[i] + trans[i][j];
                if v > best_v {
                    best_v = v;
                    best = i;
                }
            }
            ptr[j] = best;
            next[j] = best_v + row[j];
        }
        back.push(ptr);
        score = next;
    }
    let mut last = 0;
    let mut best_v = score[0] + end[0];
    for j in 1..NUM_TAGS {
        let v = score[j] + end[j];
        if v > best_v {
            best_v = v;
            last = j;
        }
    }
    let mut path = vec![last; rows.len()];
    for t in (0..back.len()).rev() {
        path[t] = back[t][path[t + 1]];
    }
    Ok((path.into_iter().map(|i| Tag::ALL[i]).collect(), best_v))
}

struct MaskConstants<'t> {
    trans_keep: Var<'t>,
    trans_pen: Var<'t>,
    start_keep: Var<'t>,
    start_pen: Var<'t>,
}

fn mask_constants(tape: &Tape) -> MaskConstants<'_> {
    let keep_t = Tensor::from_fn(&[NUM_TAGS, NUM_TAGS], |k| {
        f64::from(u8::from(transition_allowed(k / NUM_TAGS, k % NUM_TAGS)))
    });
    let pen_t = keep_t.map(|k| if k == 0.0 { MASKED_SCORE } else { 0.0 });
    let keep_s = Tensor::from_fn(&[NUM_TAGS], |j| f64::from(u8::from(start_allowed(j))));
    let pen_s = keep_s.map(|k| if k == 0.0 { MASKED_SCORE } else { 0.0 });
    MaskConstants {
        trans_keep: tape.constant(keep_t),
        trans_pen: tape.constant(pen_t),
        start_keep: tape.constant(keep_s),
        start_pen: tape.constant(pen_s),
    }
}

/// Tape-side CRF with masked transitions resolved once per recording.
pub struct TapeCrf<'t> {
    transitions: Var<'t>,
    transitions_t: Var<'t>,
    start: Var<'t>,
    end: Var<'t>,
}

impl<'t> TapeCrf<'t> {
    pub fn new(params: &CrfParams<Var<'t>>) -> Result<Self, CrfError> {
        let tape = params.transitions.tape();
        let (transitions, start) = if params.constrained {
            let m = mask_constants(tape);
            (
                params.transitions.mul(m.trans_keep)?.add(m.trans_pen)?,
                params.start.mul(m.start_keep)?.add(m.start_pen)?,
            )
        } else {
            (params.transitions, params.start)
        };
        Ok(Self {
            transitions,
            transitions_t: transitions.transpose()?,
            start,
            end: params.end,
        })
    }

    /// `log Z` for emissions `[T, 5]`.
    pub fn log_partition(&self, emissions: Var<'t>) -> Result<Var<'t>, CrfError> {
        let shape = emissions.shape();
        if shape.len() != 2 || shape[1] != NUM_TAGS {
            return Err(CrfError::BadEmissions(shape));
        }
        let row = |t: usize| -> Result<Var<'t>, CrfError> {
            Ok(emissions.slice(0, t, t + 1)?.reshape(&[NUM_TAGS])?)
        };
        let mut alpha = self.start.add(row(0)?)?;
        for t in 1..shape[0] {
            // scores[j][i] = trans[i][j] + alpha[i]
            let scores = self.transitions_t.add(alpha)?;
            alpha = scores.logsumexp().add(row(t)?)?;
        }
        Ok(alpha.add(self.end)?.logsumexp())
    }

    /// Gold path score, written as inner products with constant indicator
    /// tensors so that it stays differentiable.
    pub fn path_score(&self, emissions: Var<'t>, gold: &[Tag]) -> Result<Var<'t>, CrfError> {
        let shape = emissions.shape();
        if shape.len() != 2 || shape[1] != NUM_TAGS {
            return Err(CrfError::BadEmissions(shape));
        }
        if gold.len() != shape[0] {
            return Err(CrfError::LengthMismatch {
                tags: gold.len(),
                steps: shape[0],
            });
        }
        let tape = emissions.tape();
        let mut onehot = Tensor::zeros(&[gold.len(), NUM_TAGS]);
        let mut counts = Tensor::zeros(&[NUM_TAGS, NUM_TAGS]);
        for (i, t) in gold.iter().enumerate() {
            onehot.set(&[i, t.index()], 1.0);
            if i > 0 {
                let prev = gold[i - 1].index();
                counts.set(&[prev, t.index()], counts.get(&[prev, t.index()]) + 1.0);
            }
        }
        let mut first = Tensor::zeros(&[NUM_TAGS]);
        first.set(&[gold[0].index()], 1.0);
        let mut last = Tensor::zeros(&[NUM_TAGS]);
        last.set(&[gold[gold.len() - 1].index()], 1.0);

        let emit = emissions.mul(tape.constant(onehot))?.sum();
        let trans = self.transitions.mul(tape.constant(counts))?.sum();
        let start = self.start.mul(tape.constant(first))?.sum();
        let end = self.end.mul(tape.constant(last))?.sum();
        Ok(emit.add(trans)?.add(start)?.add(end)?)
    }

    pub fn nll(&self, emissions: Var<'t>, gold: &[Tag]) -> Result<Var<'t>, CrfError> {
        let log_z = self.log_partition(emissions)?;
        Ok(log_z.sub(self.path_score(emissions, gold)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(e: [f64; 5]) -> Tensor {
        Tensor::new(vec![1, 5], e.to_vec()).unwrap()
    }

    #[test]
    fn single_step_path_score() {
        let crf = CrfParams::new_unconstrained();
        let e = single([1.0, 2.0, 3.0, 0.0, 0.0]);
        assert_eq!(path_score(&e, &[2], &crf).unwrap(), 3.0);
    }

    #[test]
    fn zero_scores_give_zero_path() {
        let crf = CrfParams::new_unconstrained();
        let e = Tensor::zeros(&[4, 5]);
        assert_eq!(path_score(&e, &[0, 1, 4, 3], &crf).unwrap(), 0.0);
    }

    #[test]
    fn path_score_rejects_bad_tags() {
        let crf = CrfParams::new_unconstrained();
        let e = Tensor::zeros(&[2, 5]);
        assert_eq!(path_score(&e, &[0, 7], &crf), Err(CrfError::InvalidTag(7)));
        assert!(matches!(
            path_score(&e, &[0], &crf),
            Err(CrfError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn single_step_log_partition() {
        let crf = CrfParams::new_unconstrained();
        let e = single([1.0, 2.0, 3.0, 0.0, 0.0]);
        let want = (1f64.exp() + 2f64.exp() + 3f64.exp() + 2.0).ln();
        let got = log_partition(&e, &crf).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert!((got - 3.4717).abs() < 1e-4);
    }

    #[test]
    fn counting_log_partition() {
        let crf = CrfParams::new_unconstrained();
        let got = log_partition(&Tensor::zeros(&[3, 5]), &crf).unwrap();
        assert!((got - 3.0 * 5f64.ln()).abs() < 1e-12);
        assert!((got - 4.8283).abs() < 1e-4);
    }

    #[test]
    fn nll_of_uniform_scores() {
        let crf = CrfParams::new_unconstrained();
        let gold = [Tag::Outside; 4];
        let got = nll(&Tensor::zeros(&[4, 5]), &gold, &crf).unwrap();
        assert!((got - 4.0 * 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_step_viterbi() {
        let crf = CrfParams::new_unconstrained();
        let (tags, score) = viterbi(&single([1.0, 2.0, 3.0, 0.0, 0.0]), &crf).unwrap();
        assert_eq!(tags, vec![Tag::BeginDataset]);
        assert_eq!(score, 3.0);
    }

    #[test]
    fn viterbi_ties_go_to_lowest_index() {
        let crf = CrfParams::new_unconstrained();
        let (tags, _) = viterbi(&Tensor::zeros(&[3, 5]), &crf).unwrap();
        assert_eq!(tags, vec![Tag::BeginMethod; 3]);
    }

    #[test]
    fn constrained_viterbi_avoids_leading_inside() {
        let crf = CrfParams::new_constrained();
        let e = single([0.0, 5.0, 0.0, 0.0, 0.0]);
        let (tags, _) = viterbi(&e, &crf).unwrap();
        assert_eq!(tags, vec![Tag::BeginMethod]);
    }

    #[test]
    fn marginals_sum_to_one() {
        let crf = CrfParams::new_constrained();
        let e = Tensor::from_fn(&[4, 5], |i| ((i * 7) % 5) as f64 * 0.3 - 0.5);
        let m = marginals(&e, &crf).unwrap();
        for t in 0..4 {
            let s: f64 = m.row(t).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tape_matches_direct_evaluation() {
        let mut crf = CrfParams::new_constrained();
        crf.transitions.set(&[4, 0], 0.7);
        crf.end.set(&[3], -0.2);
        let e = Tensor::from_fn(&[5, 5], |i| ((i * 13) % 7) as f64 * 0.25 - 0.6);
        let gold = [
            Tag::Outside,
            Tag::BeginDataset,
            Tag::InsideDataset,
            Tag::BeginMethod,
            Tag::Outside,
        ];
        let tape = Tape::new();
        let p = crf.on_tape(&tape);
        let tc = TapeCrf::new(&p).unwrap();
        let ev = tape.constant(e.clone());
        let got = tc.nll(ev, &gold).unwrap().item();
        let want = nll(&e, &gold, &crf).unwrap();
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}
