//! Linear-chain CRF: sequence scores, forward/backward in log space,
//! Viterbi decoding and the negative log-likelihood gradient.

use ndarray::{Array1, Array2, Array3, Axis};

use crate::corpus::Tag;
use crate::error::{Error, Result};
use crate::trainer::ParamSet;

/// Transition scores `transitions[[u, v]]` for tag `u` followed by `v`, plus
/// start and end scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    pub transitions: Array2<f64>,
    pub start: Array1<f64>,
    pub end: Array1<f64>,
}

impl CrfParams {
    pub fn zeros(num_tags: usize) -> Self {
        Self {
            transitions: Array2::zeros((num_tags, num_tags)),
            start: Array1::zeros(num_tags),
            end: Array1::zeros(num_tags),
        }
    }

    pub fn num_tags(&self) -> usize {
        self.start.len()
    }

    fn check(&self, emissions: &Array2<f64>) -> Result<()> {
        let t = self.num_tags();
        if t == 0 || self.transitions.dim() != (t, t) || self.end.len() != t {
            return Err(Error::shape("inconsistent CRF parameter shapes"));
        }
        if emissions.nrows() == 0 {
            return Err(Error::shape("emission matrix has no rows"));
        }
        if emissions.ncols() != t {
            return Err(Error::shape(format!(
                "emissions have {} columns, CRF has {t} tags",
                emissions.ncols()
            )));
        }
        Ok(())
    }

    fn check_tags(&self, emissions: &Array2<f64>, tags: &[usize]) -> Result<()> {
        self.check(emissions)?;
        if tags.len() != emissions.nrows() {
            return Err(Error::shape(format!(
                "{} tags for {} positions",
                tags.len(),
                emissions.nrows()
            )));
        }
        if let Some(&bad) = tags.iter().find(|&&t| t >= self.num_tags()) {
            return Err(Error::shape(format!("tag index {bad} out of range")));
        }
        Ok(())
    }
}

impl ParamSet for CrfParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&format!("{prefix}transitions"), self.transitions.as_slice().unwrap());
        f(&format!("{prefix}start"), self.start.as_slice().unwrap());
        f(&format!("{prefix}end"), self.end.as_slice().unwrap());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&format!("{prefix}transitions"), self.transitions.as_slice_mut().unwrap());
        f(&format!("{prefix}start"), self.start.as_slice_mut().unwrap());
        f(&format!("{prefix}end"), self.end.as_slice_mut().unwrap());
    }
}

/// Structurally allowed starts and transitions, applied at decode time only.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMask {
    pub start: Vec<bool>,
    pub transitions: Array2<bool>,
}

impl TransitionMask {
    /// BIO constraints: `I-X` may only follow `B-X` or `I-X`, and may not start
    /// a sequence.
    pub fn bio(tags: &[Tag]) -> Self {
        let t = tags.len();
        let start = tags.iter().map(|tag| !matches!(tag, Tag::Inside(_))).collect();
        let transitions = Array2::from_shape_fn((t, t), |(u, v)| match (&tags[u], &tags[v]) {
            (_, Tag::Outside | Tag::Begin(_)) => true,
            (Tag::Begin(a) | Tag::Inside(a), Tag::Inside(b)) => a == b,
            (Tag::Outside, Tag::Inside(_)) => false,
        });
        Self { start, transitions }
    }
}

pub(crate) fn log_sum_exp<'a>(values: impl IntoIterator<Item = &'a f64> + Clone) -> f64 {
    let max = values
        .clone()
        .into_iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.into_iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

pub fn score_sequence(params: &CrfParams, emissions: &Array2<f64>, tags: &[usize]) -> Result<f64> {
    params.check_tags(emissions, tags)?;
    let mut score = params.start[tags[0]] + params.end[tags[tags.len() - 1]];
    for (i, &t) in tags.iter().enumerate() {
        score += emissions[[i, t]];
    }
    for w in tags.windows(2) {
        score += params.transitions[[w[0], w[1]]];
    }
    Ok(score)
}

/// Forward log-potentials `alpha[[i, v]]`: log-sum of scores of all prefixes
/// ending in tag `v` at position `i`, start scores included.
fn forward(params: &CrfParams, emissions: &Array2<f64>) -> Array2<f64> {
    let (len, t) = emissions.dim();
    let mut alpha = Array2::zeros((len, t));
    alpha.row_mut(0).assign(&(&params.start + &emissions.row(0)));
    let mut scratch = vec![0.0; t];
    for i in 1..len {
        for v in 0..t {
            for (u, slot) in scratch.iter_mut().enumerate() {
                *slot = alpha[[i - 1, u]] + params.transitions[[u, v]];
            }
            alpha[[i, v]] = log_sum_exp(&scratch) + emissions[[i, v]];
        }
    }
    alpha
}

/// Backward log-potentials `beta[[i, u]]`: log-sum of scores of all suffixes
/// after position `i` given tag `u` there, end scores included.
fn backward(params: &CrfParams, emissions: &Array2<f64>) -> Array2<f64> {
    let (len, t) = emissions.dim();
    let mut beta = Array2::zeros((len, t));
    beta.row_mut(len - 1).assign(&params.end);
    let mut scratch = vec![0.0; t];
    for i in (0..len - 1).rev() {
        for u in 0..t {
            for (v, slot) in scratch.iter_mut().enumerate() {
                *slot = params.transitions[[u, v]] + emissions[[i + 1, v]] + beta[[i + 1, v]];
            }
            beta[[i, u]] = log_sum_exp(&scratch);
        }
    }
    beta
}

fn log_z_from_alpha(params: &CrfParams, alpha: &Array2<f64>) -> f64 {
    let last = alpha.row(alpha.nrows() - 1);
    let finals: Vec<f64> = last.iter().zip(&params.end).map(|(a, e)| a + e).collect();
    log_sum_exp(&finals)
}

pub fn log_partition(params: &CrfParams, emissions: &Array2<f64>) -> Result<f64> {
    params.check(emissions)?;
    Ok(log_z_from_alpha(params, &forward(params, emissions)))
}

/// Unary marginals `p(t_i = v)` (`L x T`) and pairwise marginals
/// `p(t_i = u, t_{i+1} = v)` (`(L-1) x T x T`).
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub unary: Array2<f64>,
    pub pairwise: Array3<f64>,
    pub log_z: f64,
}

pub fn marginals(params: &CrfParams, emissions: &Array2<f64>) -> Result<Marginals> {
    params.check(emissions)?;
    let (len, t) = emissions.dim();
    let alpha = forward(params, emissions);
    let beta = backward(params, emissions);
    let log_z = log_z_from_alpha(params, &alpha);
    let unary = (&alpha + &beta).mapv(|v| (v - log_z).exp());
    let mut pairwise = Array3::zeros((len.saturating_sub(1), t, t));
    for i in 0..len.saturating_sub(1) {
        for u in 0..t {
            for v in 0..t {
                pairwise[[i, u, v]] = (alpha[[i, u]]
                    + params.transitions[[u, v]]
                    + emissions[[i + 1, v]]
                    + beta[[i + 1, v]]
                    - log_z)
                    .exp();
            }
        }
    }
    Ok(Marginals {
        unary,
        pairwise,
        log_z,
    })
}

/// Highest-scoring tag sequence and its score. Ties go to the lowest tag index.
pub fn viterbi(params: &CrfParams, emissions: &Array2<f64>) -> Result<(Vec<usize>, f64)> {
    viterbi_masked(params, emissions, None)
}

/// Viterbi restricted to the sequences allowed by `mask`. The returned score
/// is the unconstrained score of the returned sequence.
pub fn viterbi_masked(
    params: &CrfParams,
    emissions: &Array2<f64>,
    mask: Option<&TransitionMask>,
) -> Result<(Vec<usize>, f64)> {
    params.check(emissions)?;
    let (len, t) = emissions.dim();
    if let Some(m) = mask {
        if m.start.len() != t || m.transitions.dim() != (t, t) {
            return Err(Error::shape("transition mask does not match tag count"));
        }
    }
    let allowed_start = |v: usize| mask.is_none_or(|m| m.start[v]);
    let allowed = |u: usize, v: usize| mask.is_none_or(|m| m.transitions[[u, v]]);

    let mut delta = Array2::from_elem((len, t), f64::NEG_INFINITY);
    let mut back = Array2::<usize>::zeros((len, t));
    for v in 0..t {
        if allowed_start(v) {
            delta[[0, v]] = params.start[v] + emissions[[0, v]];
        }
    }
    for i in 1..len {
        for v in 0..t {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for u in 0..t {
                if !allowed(u, v) {
                    continue;
                }
                let cand = delta[[i - 1, u]] + params.transitions[[u, v]];
                if cand > best {
                    best = cand;
                    arg = u;
                }
            }
            delta[[i, v]] = best + emissions[[i, v]];
            back[[i, v]] = arg;
        }
    }
    let last = argmax_first(
        delta
            .row(len - 1)
            .iter()
            .zip(&params.end)
            .map(|(d, e)| d + e),
    );
    let mut tags = vec![0; len];
    tags[len - 1] = last;
    for i in (1..len).rev() {
        tags[i - 1] = back[[i, tags[i]]];
    }
    let score = score_sequence(params, emissions, &tags)?;
    Ok((tags, score))
}

fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (i, v) in values.enumerate() {
        if v > best {
            best = v;
            arg = i;
        }
    }
    arg
}

/// Negative log-likelihood of `gold` and its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfGradient {
    pub loss: f64,
    pub emissions: Array2<f64>,
    pub params: CrfParams,
}

pub fn nll_and_grad(params: &CrfParams, emissions: &Array2<f64>, gold: &[usize]) -> Result<CrfGradient> {
    params.check_tags(emissions, gold)?;
    let m = marginals(params, emissions)?;
    let loss = m.log_z - score_sequence(params, emissions, gold)?;
    let mut d_emissions = m.unary.clone();
    for (i, &g) in gold.iter().enumerate() {
        d_emissions[[i, g]] -= 1.0;
    }
    let mut d_transitions = m.pairwise.sum_axis(Axis(0));
    for w in gold.windows(2) {
        d_transitions[[w[0], w[1]]] -= 1.0;
    }
    let mut d_start = m.unary.row(0).to_owned();
    d_start[gold[0]] -= 1.0;
    let mut d_end = m.unary.row(gold.len() - 1).to_owned();
    d_end[gold[gold.len() - 1]] -= 1.0;
    Ok(CrfGradient {
        loss,
        emissions: d_emissions,
        params: CrfParams {
            transitions: d_transitions,
            start: d_start,
            end: d_end,
        },
    })
}
