use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GeneratorParams, ModelError};

/// `p_i^(1/T)` renormalized, computed in log space.
pub fn apply_temperature(dist: &[f64], temperature: f64) -> Result<Vec<f64>, ModelError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(ModelError::NonPositiveTemperature(temperature));
    }
    if temperature == 1.0 {
        return Ok(dist.to_vec());
    }
    let logits: Vec<f64> = dist.iter().map(|p| p.ln() / temperature).collect();
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|x| x / z).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopRule {
    pub tokens: Vec<u32>,
    pub max_new: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sampled {
    /// Prefix followed by the generated tokens.
    pub tokens: Vec<u32>,
    pub new_tokens: usize,
    /// The stop-set token that ended generation, if any.
    pub stopped_on: Option<u32>,
}

fn draw(dist: &[f64], rng: &mut impl Rng) -> u32 {
    let u: f64 = rng.random::<f64>() * dist.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u32;
        }
    }
    // Rounding left `u` past the last bucket: take the last positive entry.
    dist.iter().rposition(|p| *p > 0.0).unwrap_or(dist.len() - 1) as u32
}

/// Extends `prefix` until `stop` accepts a token (inclusive) or `max_new`
/// tokens were generated.
pub fn sample_with(
    params: &GeneratorParams,
    prefix: &[u32],
    temperature: f64,
    max_new: usize,
    rng: &mut impl Rng,
    mut stop: impl FnMut(u32) -> bool,
) -> Result<Sampled, ModelError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(ModelError::NonPositiveTemperature(temperature));
    }
    let mut tokens = prefix.to_vec();
    let mut stopped_on = None;
    for _ in 0..max_new {
        let dist = apply_temperature(&params.next_token_dist(&tokens)?, temperature)?;
        let next = draw(&dist, rng);
        tokens.push(next);
        if stop(next) {
            stopped_on = Some(next);
            break;
        }
    }
    Ok(Sampled { new_tokens: tokens.len() - prefix.len(), tokens, stopped_on })
}

pub fn sample_timeline(
    params: &GeneratorParams,
    prefix: &[u32],
    temperature: f64,
    stop: &StopRule,
    seed: u64,
) -> Result<Sampled, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(params, prefix, temperature, stop.max_new, &mut rng, |t| stop.tokens.contains(&t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NgramModel;
    use proptest::prelude::*;

    fn entropy(p: &[f64]) -> f64 {
        -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>()
    }

    #[test]
    fn temperature_examples() {
        let d = [0.2, 0.3, 0.5];
        assert_eq!(apply_temperature(&d, 1.0).unwrap(), d.to_vec());
        let h = apply_temperature(&[0.5, 0.5], 0.3).unwrap();
        assert!((h[0] - 0.5).abs() < 1e-15);
        let cold = apply_temperature(&[0.9, 0.1], 1e-3).unwrap();
        assert!(cold[0] > 1.0 - 1e-12 && cold[1] < 1e-12);
        assert!(matches!(apply_temperature(&d, 0.0), Err(ModelError::NonPositiveTemperature(_))));
        assert!(matches!(apply_temperature(&d, -1.0), Err(ModelError::NonPositiveTemperature(_))));
    }

    fn cyclic_model() -> GeneratorParams {
        let seq: Vec<u32> = (0..300).map(|i| (i % 3) as u32).collect();
        GeneratorParams::Ngram(NgramModel::fit(&[seq], 3, 0.01, 4, 0).unwrap())
    }

    #[test]
    fn stops_on_argmax_at_low_temperature() {
        let m = cyclic_model();
        let dist = m.next_token_dist(&[0, 1]).unwrap();
        let argmax = (0..4).max_by(|&a, &b| dist[a].total_cmp(&dist[b])).unwrap() as u32;
        assert_eq!(argmax, 2);
        let stop = StopRule { tokens: vec![argmax], max_new: 50 };
        let s = sample_timeline(&m, &[0, 1], 1e-3, &stop, 1).unwrap();
        assert_eq!(s.new_tokens, 1);
        assert_eq!(s.stopped_on, Some(2));
    }

    #[test]
    fn max_new_and_determinism() {
        let m = cyclic_model();
        let stop = StopRule { tokens: vec![], max_new: 5 };
        let a = sample_timeline(&m, &[0], 1.0, &stop, 7).unwrap();
        assert_eq!(a.new_tokens, 5);
        assert_eq!(a.tokens.len(), 6);
        assert_eq!(a, sample_timeline(&m, &[0], 1.0, &stop, 7).unwrap());
    }

    #[test]
    fn first_token_frequencies_within_four_sigma() {
        let seq: Vec<u32> = vec![0, 1, 2, 0, 2, 2, 1, 0, 3, 0, 1];
        let m = GeneratorParams::Ngram(NgramModel::fit(&[seq], 2, 0.5, 4, 0).unwrap());
        let dist = m.next_token_dist(&[0]).unwrap();
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let s = sample_with(&m, &[0], 1.0, 1, &mut rng, |_| false).unwrap();
            counts[s.tokens[1] as usize] += 1;
        }
        for (c, p) in counts.iter().zip(&dist) {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() <= 4.0 * sigma, "{c} vs {p}");
        }
    }

    proptest! {
        #[test]
        fn entropy_non_decreasing_in_temperature(
            w in prop::collection::vec(1e-6f64..1.0, 2..12),
            t1 in 0.05f64..5.0,
            t2 in 0.05f64..5.0,
        ) {
            let z: f64 = w.iter().sum();
            let d: Vec<f64> = w.iter().map(|x| x / z).collect();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = apply_temperature(&d, lo).unwrap();
            let b = apply_temperature(&d, hi).unwrap();
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(entropy(&a) <= entropy(&b) + 1e-12);
        }
    }
}
