//! Confirmation sampling: find the minimum of a sampled distribution without
//! knowing the sampling probabilities.
//!
//! The sampler tracks the smallest element seen so far and how many times it
//! was drawn again after the draw that made it the minimum. When that count
//! reaches `t` the element is reported. A strictly smaller draw replaces the
//! tracked element and resets the count.
//!
//! Alongside the procedure this module carries its closed-form companions:
//! [`failure_bound`], [`expected_samples_bound`] and the exact output
//! distribution on a finite support, [`exact_output_distribution`].

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};

/// Anything that can produce one sample per call. `None` means the source
/// cannot produce further samples.
pub trait SampleSource<T> {
    fn draw(&mut self) -> Option<T>;
}

impl<T, F: FnMut() -> Option<T>> SampleSource<T> for F {
    fn draw(&mut self) -> Option<T> {
        self()
    }
}

/// A finished run: the reported element, the number of samples drawn and
/// the confirmations it received.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CsResult<T> {
    pub element: T,
    pub samples: usize,
    pub confirmations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsOutcome<T> {
    Confirmed(CsResult<T>),
    /// The sample cap was hit or the source ran dry before `t` confirmations.
    Exhausted {
        best: Option<T>,
        samples: usize,
        confirmations: usize,
    },
}

impl<T: Copy> CsOutcome<T> {
    pub fn is_confirmed(&self) -> bool {
        matches!(self, CsOutcome::Confirmed(_))
    }

    /// The reported element, or the tracked minimum of an exhausted run.
    pub fn best(&self) -> Option<T> {
        match self {
            CsOutcome::Confirmed(r) => Some(r.element),
            CsOutcome::Exhausted { best, .. } => *best,
        }
    }

    pub fn samples(&self) -> usize {
        match self {
            CsOutcome::Confirmed(r) => r.samples,
            CsOutcome::Exhausted { samples, .. } => *samples,
        }
    }
}

/// Incremental state of one confirmation-sampling run, for callers that
/// interleave several runs or feed samples under their own budget.
#[derive(Clone, Debug)]
pub struct ConfirmationState<T> {
    t: usize,
    best: Option<T>,
    count: usize,
    samples: usize,
}

impl<T: Copy + Eq> ConfirmationState<T> {
    pub fn new(t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::input("confirmation count t must be at least 1"));
        }
        Ok(ConfirmationState {
            t,
            best: None,
            count: 0,
            samples: 0,
        })
    }

    /// Feeds one sample; returns true once the tracked element has `t`
    /// confirmations. Samples after that point are ignored.
    pub fn observe(&mut self, x: T, mut cmp: impl FnMut(&T, &T) -> Ordering) -> bool {
        if self.is_confirmed() {
            return true;
        }
        self.samples += 1;
        match self.best {
            Some(b) if b == x => self.count += 1,
            Some(b) if cmp(&x, &b) != Ordering::Less => {}
            _ => {
                self.best = Some(x);
                self.count = 0;
            }
        }
        self.is_confirmed()
    }

    pub fn is_confirmed(&self) -> bool {
        self.count >= self.t
    }

    pub fn best(&self) -> Option<T> {
        self.best
    }

    pub fn confirmations(&self) -> usize {
        self.count
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn outcome(&self) -> CsOutcome<T> {
        match self.best {
            Some(element) if self.is_confirmed() => CsOutcome::Confirmed(CsResult {
                element,
                samples: self.samples,
                confirmations: self.count,
            }),
            best => CsOutcome::Exhausted {
                best,
                samples: self.samples,
                confirmations: self.count,
            },
        }
    }
}

/// Runs confirmation sampling on `source` until the tracked minimum under
/// `cmp` has `t` confirmations, the source is exhausted, or `cap` samples
/// have been drawn.
pub fn confirmation_sampling<T, S, C>(
    source: &mut S,
    t: usize,
    mut cmp: C,
    cap: Option<usize>,
) -> Result<CsOutcome<T>>
where
    T: Copy + Eq,
    S: SampleSource<T> + ?Sized,
    C: FnMut(&T, &T) -> Ordering,
{
    let mut state = ConfirmationState::new(t)?;
    while !state.is_confirmed() {
        if cap.is_some_and(|c| state.samples() >= c) {
            break;
        }
        let Some(x) = source.draw() else { break };
        state.observe(x, &mut cmp);
    }
    Ok(state.outcome())
}

/// Upper bound on the probability that confirmation sampling reports
/// anything but the minimum: `(1 - p1) (p2 / (p1 + p2))^t`.
pub fn failure_bound(p1: f64, p2: f64, t: u32) -> Result<f64> {
    if !(p1 > 0.0 && p1 <= 1.0) {
        return Err(Error::input(format!("p1 = {p1} must lie in (0, 1]")));
    }
    if !(0.0..=1.0).contains(&p2) {
        return Err(Error::input(format!("p2 = {p2} must lie in [0, 1]")));
    }
    if t == 0 {
        return Err(Error::input("t must be at least 1"));
    }
    Ok((1.0 - p1) * (p2 / (p1 + p2)).powi(t as i32))
}

/// Upper bound `(t + 1) / p1` on the expected number of samples.
pub fn expected_samples_bound(p1: f64, t: u32) -> Result<f64> {
    if !(p1 > 0.0 && p1 <= 1.0) {
        return Err(Error::input(format!("p1 = {p1} must lie in (0, 1]")));
    }
    Ok(f64::from(t + 1) / p1)
}

/// Finite distribution over elements `0..n` listed in ascending order
/// (element 0 is the minimum).
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::input("distribution needs at least one element"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::input("probabilities must be finite and nonnegative"));
        }
        let total = neumaier_sum(probs.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::input(format!("probabilities sum to {total}, not 1")));
        }
        Ok(DiscreteDistribution { probs })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total = neumaier_sum(weights.iter().copied());
        if total.is_nan() || total <= 0.0 || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::input("weights must be nonnegative with a positive sum"));
        }
        let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        // Push the rounding residue onto the largest entry.
        let residue = 1.0 - neumaier_sum(probs.iter().copied());
        let (imax, _) = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        probs[imax] += residue;
        Self::new(probs)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_weights(&vec![1.0; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability of the minimum element.
    pub fn p1(&self) -> f64 {
        self.probs[0]
    }

    /// Largest probability among the other elements (0 for a singleton).
    pub fn p2(&self) -> f64 {
        self.probs[1..].iter().copied().fold(0.0, f64::max)
    }

    pub fn sampler(&self) -> DiscreteSampler {
        DiscreteSampler {
            alias: WeightedAliasIndex::new(self.probs.clone()).expect("validated weights"),
        }
    }
}

/// Alias-method sampler over a [`DiscreteDistribution`].
#[derive(Clone, Debug)]
pub struct DiscreteSampler {
    alias: WeightedAliasIndex<f64>,
}

impl DiscreteSampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }
}

/// Exact probability `ϱ_i` that confirmation sampling reports element `i`.
///
/// Element `i` is reported iff it is drawn `t + 1` times before any smaller
/// element. Working from the largest element down,
/// `ϱ_i = (1 - Σ_{j>i} ϱ_j) · (p_i / Σ_{s≤i} p_s)^(t+1)`. Zero-probability
/// elements are never reported and are skipped.
pub fn exact_output_distribution(dist: &DiscreteDistribution, t: u32) -> Result<Vec<f64>> {
    if t == 0 {
        return Err(Error::input("t must be at least 1"));
    }
    let p = dist.probs();
    let n = p.len();
    // Compensated prefix sums Σ_{s≤i} p_s.
    let mut prefix = Vec::with_capacity(n);
    let mut acc = Neumaier::default();
    for &pi in p {
        acc.add(pi);
        prefix.push(acc.total());
    }
    let mut rho = vec![0.0; n];
    let mut reported_above = Neumaier::default();
    for i in (0..n).rev() {
        if p[i] == 0.0 {
            continue;
        }
        let ratio = (p[i] / prefix[i]).min(1.0);
        rho[i] = (1.0 - reported_above.total()) * ratio.powi(t as i32 + 1);
        reported_above.add(rho[i]);
    }
    Ok(rho)
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

pub(crate) fn neumaier_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Neumaier::default();
    for x in xs {
        acc.add(x);
    }
    acc.total()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::RngSeed;
    use proptest::prelude::*;

    fn natural(a: &usize, b: &usize) -> Ordering {
        a.cmp(b)
    }

    #[test]
    fn single_element_takes_t_plus_one_samples() {
        let mut src = || Some('a');
        let out = confirmation_sampling(&mut src, 3, |a: &char, b: &char| a.cmp(b), None).unwrap();
        assert_eq!(
            out,
            CsOutcome::Confirmed(CsResult {
                element: 'a',
                samples: 4,
                confirmations: 3
            })
        );
    }

    #[test]
    fn hand_traced_stream() {
        // b, a, a, a with t = 2: a replaces b and resets the count.
        let mut stream = "baaa".chars();
        let mut src = || stream.next();
        let out = confirmation_sampling(&mut src, 2, |a: &char, b: &char| a.cmp(b), None).unwrap();
        assert_eq!(
            out,
            CsOutcome::Confirmed(CsResult {
                element: 'a',
                samples: 4,
                confirmations: 2
            })
        );
    }

    #[test]
    fn larger_samples_are_ignored_and_count_resets() {
        let mut state = ConfirmationState::new(2).unwrap();
        for x in [5usize, 5, 7, 3] {
            state.observe(x, natural);
        }
        assert_eq!(state.best(), Some(3));
        assert_eq!(state.confirmations(), 0);
        assert_eq!(state.samples(), 4);
        state.observe(3, natural);
        assert!(state.observe(3, natural));
    }

    #[test]
    fn cap_and_dry_source_report_exhaustion() {
        let mut xs = vec![4usize, 2, 9].into_iter();
        let mut src = || xs.next();
        let out = confirmation_sampling(&mut src, 3, natural, None).unwrap();
        assert_eq!(
            out,
            CsOutcome::Exhausted {
                best: Some(2),
                samples: 3,
                confirmations: 0
            }
        );
        let mut ones = || Some(1usize);
        let out = confirmation_sampling(&mut ones, 3, natural, Some(2)).unwrap();
        assert_eq!(
            out,
            CsOutcome::Exhausted {
                best: Some(1),
                samples: 2,
                confirmations: 1
            }
        );
        assert!(confirmation_sampling(&mut ones, 0, natural, None).is_err());
    }

    #[test]
    fn bounds_examples() {
        assert_eq!(failure_bound(1.0, 0.0, 5).unwrap(), 0.0);
        assert!((failure_bound(0.5, 0.5, 1).unwrap() - 0.25).abs() < 1e-15);
        assert!((failure_bound(0.5, 0.5, 3).unwrap() - 0.0625).abs() < 1e-15);
        assert!(failure_bound(0.0, 0.5, 1).is_err());
        assert_eq!(expected_samples_bound(1.0, 3).unwrap(), 4.0);
        assert_eq!(expected_samples_bound(0.25, 1).unwrap(), 8.0);
        assert!(expected_samples_bound(0.0, 1).is_err());
    }

    #[test]
    fn exact_distribution_examples() {
        let one = DiscreteDistribution::new(vec![1.0]).unwrap();
        assert_eq!(exact_output_distribution(&one, 4).unwrap(), vec![1.0]);
        let two = DiscreteDistribution::new(vec![0.5, 0.5]).unwrap();
        let rho = exact_output_distribution(&two, 1).unwrap();
        assert!((rho[0] - 0.75).abs() < 1e-15 && (rho[1] - 0.25).abs() < 1e-15);
        let zero = DiscreteDistribution::new(vec![0.5, 0.0, 0.5]).unwrap();
        let rho = exact_output_distribution(&zero, 1).unwrap();
        assert_eq!(rho[1], 0.0);
        assert!((rho[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn two_point_failure_rate_monte_carlo() {
        let dist = DiscreteDistribution::new(vec![0.5, 0.5]).unwrap();
        let sampler = dist.sampler();
        let mut rng = RngSeed::new(1).rng();
        let runs = 200_000;
        let mut fails = 0;
        for _ in 0..runs {
            let mut src = || Some(sampler.sample(&mut rng));
            let out = confirmation_sampling(&mut src, 1, natural, None).unwrap();
            fails += usize::from(out.best() != Some(0));
        }
        let rate = fails as f64 / runs as f64;
        let sd = (0.25f64 * 0.75 / runs as f64).sqrt();
        assert!((rate - 0.25).abs() <= 3.0 * sd, "rate = {rate}");
    }

    #[test]
    fn three_point_distribution_monte_carlo() {
        let dist = DiscreteDistribution::new(vec![0.6, 0.3, 0.1]).unwrap();
        let rho = exact_output_distribution(&dist, 2).unwrap();
        let sampler = dist.sampler();
        let mut rng = RngSeed::new(2).rng();
        let runs = 200_000;
        let mut counts = [0usize; 3];
        let mut total_samples = 0usize;
        for _ in 0..runs {
            let mut src = || Some(sampler.sample(&mut rng));
            let out = confirmation_sampling(&mut src, 2, natural, None).unwrap();
            counts[out.best().unwrap()] += 1;
            total_samples += out.samples();
        }
        for i in 0..3 {
            let f = counts[i] as f64 / runs as f64;
            let sd = (rho[i] * (1.0 - rho[i]) / runs as f64).sqrt();
            assert!((f - rho[i]).abs() <= 3.0 * sd, "element {i}: {f} vs {}", rho[i]);
        }
        assert!(total_samples as f64 / runs as f64 <= expected_samples_bound(0.6, 2).unwrap());
    }

    #[test]
    fn two_point_bound_is_tight() {
        for k in 1..20 {
            let p1 = k as f64 / 20.0;
            let dist = DiscreteDistribution::new(vec![p1, 1.0 - p1]).unwrap();
            for t in 1..=6 {
                let rho = exact_output_distribution(&dist, t).unwrap();
                let bound = failure_bound(p1, 1.0 - p1, t).unwrap();
                assert!(((1.0 - rho[0]) - bound).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_bound_looseness() {
        for n in 2..=64 {
            let dist = DiscreteDistribution::uniform(n).unwrap();
            for t in 1..=8 {
                let rho = exact_output_distribution(&dist, t).unwrap();
                let p = 1.0 / n as f64;
                let ratio = failure_bound(p, p, t).unwrap() / (1.0 - rho[0]);
                assert!((1.0 - 1e-12..=2.0 + 1e-9).contains(&ratio), "n={n} t={t} ratio={ratio}");
                if t == 1 {
                    assert!((ratio - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn exact_distribution_normalizes_and_respects_bound(
            weights in prop::collection::vec(0.0f64..1.0, 1..12),
            t in 1u32..8,
        ) {
            prop_assume!(weights[0] > 1e-6);
            let dist = DiscreteDistribution::from_weights(&weights).unwrap();
            let rho = exact_output_distribution(&dist, t).unwrap();
            prop_assert!((rho.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(rho.iter().all(|r| (0.0..=1.0 + 1e-12).contains(r)));
            let bound = failure_bound(dist.p1(), dist.p2(), t).unwrap();
            prop_assert!(1.0 - rho[0] <= bound + 1e-12);
        }

        #[test]
        fn confirmed_runs_have_t_confirmations(seed in any::<u64>(), t in 1usize..6) {
            let dist = DiscreteDistribution::from_weights(&[0.2, 0.5, 0.3]).unwrap();
            let sampler = dist.sampler();
            let mut rng = RngSeed::new(seed).rng();
            let mut src = || Some(sampler.sample(&mut rng));
            match confirmation_sampling(&mut src, t, natural, None).unwrap() {
                CsOutcome::Confirmed(r) => {
                    prop_assert_eq!(r.confirmations, t);
                    prop_assert!(r.samples > t);
                }
                other => prop_assert!(false, "unexpected {:?}", other),
            }
        }
    }
}
