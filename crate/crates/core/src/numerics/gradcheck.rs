use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NumericsError, Tape, Tensor, Var};

/// Central-difference gradient check.
///
/// The relative error of a coordinate is
/// `|analytic - numeric| / max(floor, |analytic| + |numeric|)`.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub eps: f64,
    /// Check at most this many randomly chosen coordinates per parameter
    /// tensor; `None` checks every coordinate.
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
    /// Denominator floor; raise it when the loss is large enough that
    /// roundoff in the difference quotient exceeds tiny gradients.
    pub floor: f64,
    /// When set, a coordinate whose one-sided slopes differ by more than
    /// this fraction of the larger one sits on a kink (relu, max) and is
    /// counted in [`GradCheckReport::kinks`] instead of scored.
    pub kink_ratio: Option<f64>,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_coords_per_param: None,
            seed: 0,
            floor: 1e-8,
            kink_ratio: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(param index, flat coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    /// `(analytic, numeric)` at the worst coordinate.
    pub worst_values: Option<(f64, f64)>,
    pub coords_checked: usize,
    /// Coordinates skipped as kinks.
    pub kinks: usize,
}

impl GradCheck {
    pub fn run<F, E>(&self, f: F, params: &[Tensor]) -> Result<GradCheckReport, E>
    where
        F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, E>,
        E: From<NumericsError>,
    {
        let analytic: Vec<Tensor> = {
            let tape = Tape::new();
            let vars: Vec<Var<'_>> = params.iter().map(|p| tape.param(p.clone())).collect();
            let out = f(&tape, &vars)?;
            if !out.item().is_finite() {
                return Err(NumericsError::NonFinite.into());
            }
            let grads = tape.backward(out)?;
            vars.iter()
                .map(|&v| grads.get(v).expect("param gradient").clone())
                .collect()
        };
        let eval = |perturbed: &[Tensor]| -> Result<f64, E> {
            let tape = Tape::new();
            let vars: Vec<Var<'_>> = perturbed.iter().map(|p| tape.param(p.clone())).collect();
            let v = f(&tape, &vars)?.item();
            if v.is_finite() {
                Ok(v)
            } else {
                Err(NumericsError::NonFinite.into())
            }
        };

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut work: Vec<Tensor> = params.to_vec();
        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            worst: None,
            worst_values: None,
            coords_checked: 0,
            kinks: 0,
        };
        let base = match self.kink_ratio {
            Some(_) => eval(params)?,
            None => 0.0,
        };
        for p in 0..params.len() {
            let n = params[p].numel();
            let coords: Vec<usize> = match self.max_coords_per_param {
                Some(k) if k < n => {
                    let mut c = sample(&mut rng, n, k).into_vec();
                    c.sort_unstable();
                    c
                }
                _ => (0..n).collect(),
            };
            for &i in &coords {
                let orig = params[p].data()[i];
                work[p].data_mut()[i] = orig + self.eps;
                let plus = eval(&work)?;
                work[p].data_mut()[i] = orig - self.eps;
                let minus = eval(&work)?;
                work[p].data_mut()[i] = orig;
                if let Some(ratio) = self.kink_ratio {
                    let fwd = (plus - base) / self.eps;
                    let bwd = (base - minus) / self.eps;
                    if (fwd - bwd).abs() > ratio * fwd.abs().max(bwd.abs()).max(self.floor) {
                        report.kinks += 1;
                        continue;
                    }
                }
                let numeric = (plus - minus) / (2.0 * self.eps);
                let a = analytic[p].data()[i];
                let rel = (a - numeric).abs() / f64::max(self.floor, a.abs() + numeric.abs());
                report.coords_checked += 1;
                if rel > report.max_rel_error || report.worst.is_none() {
                    report.max_rel_error = report.max_rel_error.max(rel);
                    if rel >= report.max_rel_error {
                        report.worst = Some((p, i));
                        report.worst_values = Some((a, numeric));
                    }
                }
            }
        }
        Ok(report)
    }
}

/// Maximum relative error over every coordinate of every parameter.
pub fn grad_check<F, E>(f: F, params: &[Tensor], eps: f64) -> Result<f64, E>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, E>,
    E: From<NumericsError>,
{
    GradCheck {
        eps,
        ..GradCheck::default()
    }
    .run(f, params)
    .map(|r| r.max_rel_error)
}
