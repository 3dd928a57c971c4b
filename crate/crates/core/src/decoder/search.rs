//! Greedy and beam search over any left-to-right symbol generator.

use std::cmp::Ordering;

/// A generator that scores the next symbol from a state and advances it.
pub trait SearchSpace {
    type State: Clone;
    type Error;

    /// Log-probabilities over every symbol; `-inf` marks a forbidden one.
    /// May record per-step data in `state` that `advance` relies on.
    fn scores(&mut self, state: &mut Self::State) -> Result<Vec<f64>, Self::Error>;

    /// Appends `symbol`; returns `true` when the sequence is complete.
    fn advance(&mut self, state: &mut Self::State, symbol: usize) -> Result<bool, Self::Error>;
}

#[derive(Debug, Clone)]
pub struct Hypothesis<S> {
    pub state: S,
    pub symbols: Vec<usize>,
    pub log_prob: f64,
    pub step_log_probs: Vec<f64>,
    /// Step index at which the hypothesis completed, plus its rank in that step.
    pub completed_at: Option<(usize, usize)>,
}

impl<S> Hypothesis<S> {
    pub fn new(state: S) -> Self {
        Hypothesis {
            state,
            symbols: Vec::new(),
            log_prob: 0.0,
            step_log_probs: Vec::new(),
            completed_at: None,
        }
    }
}

/// Pool ordering: higher score, then earlier completion, then smaller prefix.
fn better<S>(a: &Hypothesis<S>, b: &Hypothesis<S>) -> Ordering {
    b.log_prob
        .partial_cmp(&a.log_prob)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.completed_at.cmp(&b.completed_at))
        .then_with(|| a.symbols.cmp(&b.symbols))
}

fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s == f64::NEG_INFINITY || s.is_nan() {
            continue;
        }
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Picks the most probable symbol at every step (lowest index on ties).
pub fn greedy<M: SearchSpace>(
    model: &mut M,
    init: M::State,
    max_steps: usize,
) -> Result<Option<Hypothesis<M::State>>, M::Error> {
    let mut h = Hypothesis::new(init);
    for step in 0..max_steps {
        let scores = model.scores(&mut h.state)?;
        let Some(k) = argmax(&scores) else {
            return Ok(None);
        };
        h.symbols.push(k);
        h.log_prob += scores[k];
        h.step_log_probs.push(scores[k]);
        if model.advance(&mut h.state, k)? {
            h.completed_at = Some((step, 0));
            return Ok(Some(h));
        }
    }
    Ok(None)
}

/// Keeps the `width` best live hypotheses; finished ones retire to a pool.
///
/// Stops once no live hypothesis can beat the pool (scores only decrease)
/// or after `max_steps`. Returns `None` if nothing completed.
pub fn beam_search<M: SearchSpace>(
    model: &mut M,
    init: M::State,
    width: usize,
    max_steps: usize,
) -> Result<Option<Hypothesis<M::State>>, M::Error> {
    let width = width.max(1);
    let mut live = vec![Hypothesis::new(init)];
    let mut pool: Vec<Hypothesis<M::State>> = Vec::new();
    for step in 0..max_steps {
        if live.is_empty() {
            break;
        }
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        let mut scores_per = Vec::with_capacity(live.len());
        for (hi, h) in live.iter_mut().enumerate() {
            let scores = model.scores(&mut h.state)?;
            for (k, &s) in scores.iter().enumerate() {
                if s != f64::NEG_INFINITY && !s.is_nan() {
                    candidates.push((h.log_prob + s, hi, k));
                }
            }
            scores_per.push(scores);
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        candidates.truncate(width);
        let mut next = Vec::with_capacity(width);
        for (rank, &(score, hi, k)) in candidates.iter().enumerate() {
            let parent = &live[hi];
            let mut h = Hypothesis {
                state: parent.state.clone(),
                symbols: parent.symbols.clone(),
                log_prob: score,
                step_log_probs: parent.step_log_probs.clone(),
                completed_at: None,
            };
            h.symbols.push(k);
            h.step_log_probs.push(scores_per[hi][k]);
            if model.advance(&mut h.state, k)? {
                h.completed_at = Some((step, rank));
                pool.push(h);
            } else {
                next.push(h);
            }
        }
        live = next;
        if let Some(best) = pool.iter().map(|h| h.log_prob).reduce(f64::max) {
            if live.iter().all(|h| h.log_prob <= best) {
                break;
            }
        }
    }
    pool.sort_by(better);
    Ok(pool.into_iter().next())
}
