//! Length-based curriculum sampling.
//!
//! Samples are split into `b` equal-size bins by target-report length. Each
//! epoch focuses on one bin (a linear ramp over training), giving bin `i`
//! the weight `1/(1 + |i - i_e|)`; an epoch's batch pool is a fraction `f`
//! of the dataset drawn without replacement under those weights. Every
//! weight is strictly positive, so any sample can appear in any epoch.

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum CurriculumError {
    /// More bins than samples (or zero bins).
    BinCount { bins: usize, samples: usize },
    /// Focus bin outside `[1, b]`.
    FocusRange { focus: usize, bins: usize },
    /// Epoch outside `[1, E]`.
    EpochRange { epoch: usize, total: usize },
    /// `⌊f·N⌋ = 0`: nothing to draw.
    EmptyDraw,
    /// Weights sum to zero or contain a negative entry.
    BadWeights,
}

impl core::fmt::Display for CurriculumError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CurriculumError::BinCount { bins, samples } => {
                write!(f, "cannot split {samples} samples into {bins} bins")
            }
            CurriculumError::FocusRange { focus, bins } => {
                write!(f, "focus bin {focus} outside [1, {bins}]")
            }
            CurriculumError::EpochRange { epoch, total } => {
                write!(f, "epoch {epoch} outside [1, {total}]")
            }
            CurriculumError::EmptyDraw => write!(f, "epoch sample count is zero"),
            CurriculumError::BadWeights => write!(f, "weights must be nonnegative with positive sum"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CurriculumError {}

/// Assign each sample a bin in `1..=b` by ascending length; ties keep the
/// original index order, and bin sizes differ by at most one (earlier bins
/// take the remainder).
pub fn assign_bins(lengths: &[usize], b: usize) -> Result<Vec<usize>, CurriculumError> {
    let n = lengths.len();
    if b == 0 || b > n {
        return Err(CurriculumError::BinCount { bins: b, samples: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (lengths[i], i));
    let (base, extra) = (n / b, n % b);
    let mut bins = vec![0usize; n];
    let mut cursor = 0;
    for bin in 1..=b {
        let size = base + usize::from(bin <= extra);
        for &sample in &order[cursor..cursor + size] {
            bins[sample] = bin;
        }
        cursor += size;
    }
    Ok(bins)
}

/// Per-bin weight for focus bin `i_e`, normalized to sum to one. With
/// equal-size bins this is exactly each bin's share of the epoch's
/// probability mass.
pub fn epoch_weights(b: usize, i_e: usize) -> Result<Vec<f64>, CurriculumError> {
    if i_e < 1 || i_e > b {
        return Err(CurriculumError::FocusRange { focus: i_e, bins: b });
    }
    let mut w: Vec<f64> = (1..=b)
        .map(|i| 1.0 / (1.0 + (i as f64 - i_e as f64).abs()))
        .collect();
    let total: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= total;
    }
    Ok(w)
}

/// Focus bin for an epoch: a linear ramp `i_e = 1 + ⌊(e−1)·b/E⌋` over the
/// stretched schedule of `E` epochs.
pub fn epoch_to_bin(epoch: usize, total_epochs: usize, b: usize) -> Result<usize, CurriculumError> {
    if epoch < 1 || epoch > total_epochs {
        return Err(CurriculumError::EpochRange { epoch, total: total_epochs });
    }
    Ok(1 + (epoch - 1) * b / total_epochs)
}

/// Draw `⌊f·N⌋` distinct sample indices, each sample weighted by
/// `weights[i]`, without replacement. Uses exponentiated-key order
/// statistics (key `ln(u)/w`, largest first), which reproduces the
/// distribution of sequential weighted draws; the returned order is the
/// draw order. Deterministic for a given generator state.
pub fn sample_epoch(
    weights: &[f64],
    f: f64,
    rng: &mut Rng,
) -> Result<Vec<usize>, CurriculumError> {
    let n = weights.len();
    let k = (f * n as f64) as usize;
    if k == 0 {
        return Err(CurriculumError::EmptyDraw);
    }
    if weights.iter().any(|&w| w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(CurriculumError::BadWeights);
    }
    let mut keys: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u = rng.next_f64().max(f64::MIN_POSITIVE); // avoid ln(0)
            let key = if w > 0.0 {
                crate::fmath::ln(u) / w
            } else {
                f64::NEG_INFINITY
            };
            (key, i)
        })
        .collect();
    keys.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    Ok(keys[..k].iter().map(|&(_, i)| i).collect())
}

/// Per-sample weights for one epoch: the focus-bin profile spread over the
/// bin assignment. Convenience wrapper tying the pieces together.
pub fn epoch_sample_weights(
    bins: &[usize],
    b: usize,
    epoch: usize,
    total_epochs: usize,
) -> Result<Vec<f64>, CurriculumError> {
    let i_e = epoch_to_bin(epoch, total_epochs, b)?;
    let w = epoch_weights(b, i_e)?;
    Ok(bins.iter().map(|&bin| w[bin - 1]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeMap;
    use alloc::collections::BTreeSet;

    #[test]
    fn bins_follow_sorted_length_order() {
        let bins = assign_bins(&[5, 9, 2, 7, 4, 8], 3).unwrap();
        assert_eq!(bins, vec![2, 3, 1, 2, 1, 3]);
    }

    #[test]
    fn one_bin_takes_everything() {
        assert_eq!(assign_bins(&[3, 1, 2], 1).unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn equal_lengths_tie_break_by_index() {
        assert_eq!(assign_bins(&[7, 7, 7, 7], 2).unwrap(), vec![1, 1, 2, 2]);
    }

    #[test]
    fn bin_sizes_differ_by_at_most_one() {
        let lengths: Vec<usize> = (0..17).rev().collect();
        let bins = assign_bins(&lengths, 5).unwrap();
        let mut counts = BTreeMap::new();
        for b in bins {
            *counts.entry(b).or_insert(0usize) += 1;
        }
        let (min, max) = (counts.values().min().unwrap(), counts.values().max().unwrap());
        assert!(max - min <= 1, "{counts:?}");
    }

    #[test]
    fn too_many_bins_rejected() {
        assert!(matches!(
            assign_bins(&[1, 2], 3),
            Err(CurriculumError::BinCount { .. })
        ));
        assert!(matches!(
            assign_bins(&[1, 2], 0),
            Err(CurriculumError::BinCount { .. })
        ));
    }

    #[test]
    fn weights_match_hand_computation() {
        let w = epoch_weights(3, 1).unwrap();
        let expected = [6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0];
        for (a, e) in w.iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
        assert_eq!(epoch_weights(1, 1).unwrap(), vec![1.0]);
        let sym = epoch_weights(3, 2).unwrap();
        assert!((sym[0] - 0.25).abs() < 1e-15);
        assert!((sym[1] - 0.5).abs() < 1e-15);
        assert!((sym[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn weights_are_always_positive() {
        for i_e in 1..=10 {
            let w = epoch_weights(10, i_e).unwrap();
            assert!(w.iter().all(|&x| x > 0.0));
        }
        assert!(matches!(
            epoch_weights(3, 0),
            Err(CurriculumError::FocusRange { .. })
        ));
        assert!(matches!(
            epoch_weights(3, 4),
            Err(CurriculumError::FocusRange { .. })
        ));
    }

    #[test]
    fn epoch_ramp_covers_all_bins() {
        // 120 epochs over 10 bins: 12 epochs per bin.
        for e in 1..=12 {
            assert_eq!(epoch_to_bin(e, 120, 10).unwrap(), 1);
        }
        for e in 109..=120 {
            assert_eq!(epoch_to_bin(e, 120, 10).unwrap(), 10);
        }
        assert_eq!(epoch_to_bin(1, 5, 1).unwrap(), 1);
        assert_eq!(epoch_to_bin(5, 5, 1).unwrap(), 1);
        assert_eq!(epoch_to_bin(7, 7, 3).unwrap(), 3);
        assert!(matches!(
            epoch_to_bin(0, 5, 2),
            Err(CurriculumError::EpochRange { .. })
        ));
        assert!(matches!(
            epoch_to_bin(6, 5, 2),
            Err(CurriculumError::EpochRange { .. })
        ));
    }

    #[test]
    fn full_fraction_uniform_weights_is_a_permutation() {
        let mut rng = Rng::new(9);
        let picked = sample_epoch(&[1.0; 12], 1.0, &mut rng).unwrap();
        let set: BTreeSet<usize> = picked.iter().copied().collect();
        assert_eq!(set.len(), 12);
        assert_eq!(set, (0..12).collect());
    }

    #[test]
    fn draw_count_and_distinctness() {
        let mut rng = Rng::new(3);
        let weights = vec![1.0; 1000];
        let picked = sample_epoch(&weights, 0.25, &mut rng).unwrap();
        assert_eq!(picked.len(), 250);
        let set: BTreeSet<usize> = picked.iter().copied().collect();
        assert_eq!(set.len(), 250);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let weights: Vec<f64> = (0..50).map(|i| 1.0 + (i % 3) as f64).collect();
        let a = sample_epoch(&weights, 0.3, &mut Rng::new(5)).unwrap();
        let b = sample_epoch(&weights, 0.3, &mut Rng::new(5)).unwrap();
        let c = sample_epoch(&weights, 0.3, &mut Rng::new(6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_degenerate_draws() {
        let mut rng = Rng::new(0);
        assert_eq!(
            sample_epoch(&[1.0, 1.0], 0.1, &mut rng),
            Err(CurriculumError::EmptyDraw)
        );
        assert_eq!(
            sample_epoch(&[0.0, 0.0], 1.0, &mut rng),
            Err(CurriculumError::BadWeights)
        );
        assert_eq!(
            sample_epoch(&[1.0, -0.5], 1.0, &mut rng),
            Err(CurriculumError::BadWeights)
        );
    }

    /// Sequential weighted draws without replacement: the distributional
    /// oracle the exponentiated-key sampler must match.
    fn brute_force_draw(weights: &[f64], k: usize, rng: &mut Rng) -> Vec<usize> {
        let mut remaining: Vec<usize> = (0..weights.len()).collect();
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            let total: f64 = remaining.iter().map(|&i| weights[i]).sum();
            let mut u = rng.next_f64() * total;
            let mut chosen = remaining.len() - 1;
            for (slot, &i) in remaining.iter().enumerate() {
                u -= weights[i];
                if u <= 0.0 {
                    chosen = slot;
                    break;
                }
            }
            out.push(remaining.remove(chosen));
        }
        out
    }

    #[test]
    fn two_bin_share_matches_sequential_draw_oracle() {
        // Two equal bins, focus on bin 1: weights [1, 1/2]. At a small
        // fraction the bin-1 share of draws sits near 2/3; compare the
        // exponentiated-key sampler against sequential draws within 3σ.
        let n = 100;
        let f = 0.1;
        let epochs = 10_000usize;
        let weights: Vec<f64> = (0..n).map(|i| if i < n / 2 { 1.0 } else { 0.5 }).collect();

        let share = |counts: &[f64]| {
            let m = counts.len() as f64;
            let mean = counts.iter().sum::<f64>() / m;
            let var = counts.iter().map(|&c| (c - mean) * (c - mean)).sum::<f64>() / (m - 1.0);
            (mean, var / m)
        };

        let mut rng = Rng::new(77);
        let es_counts: Vec<f64> = (0..epochs)
            .map(|_| {
                let picked = sample_epoch(&weights, f, &mut rng).unwrap();
                picked.iter().filter(|&&i| i < n / 2).count() as f64
            })
            .collect();
        let mut rng = Rng::new(123);
        let bf_counts: Vec<f64> = (0..epochs)
            .map(|_| {
                let picked = brute_force_draw(&weights, n / 10, &mut rng);
                picked.iter().filter(|&&i| i < n / 2).count() as f64
            })
            .collect();

        let (es_mean, es_se2) = share(&es_counts);
        let (bf_mean, bf_se2) = share(&bf_counts);
        let sigma = crate::fmath::sqrt(es_se2 + bf_se2);
        assert!(
            (es_mean - bf_mean).abs() < 3.0 * sigma,
            "exp-key {es_mean} vs sequential {bf_mean} (3σ = {})",
            3.0 * sigma
        );
        // And both sit near the first-draw share 2/3 of the 10 draws.
        assert!((es_mean / 10.0 - 2.0 / 3.0).abs() < 0.02, "share {}", es_mean / 10.0);
    }

    #[test]
    fn small_instance_distribution_matches_oracle() {
        // N=6, k=3, skewed weights: compare the distribution over sorted
        // index triples between the two samplers; total-variation < 0.02.
        let weights = [3.0, 1.0, 1.0, 0.5, 2.0, 0.25];
        let trials = 100_000usize;
        let run = |mut rng: Rng, es: bool| {
            let mut hist: BTreeMap<[usize; 3], usize> = BTreeMap::new();
            for _ in 0..trials {
                let mut picked = if es {
                    sample_epoch(&weights, 0.5, &mut rng).unwrap()
                } else {
                    brute_force_draw(&weights, 3, &mut rng)
                };
                picked.sort_unstable();
                *hist.entry([picked[0], picked[1], picked[2]]).or_insert(0) += 1;
            }
            hist
        };
        let a = run(Rng::new(2024), true);
        let b = run(Rng::new(4048), false);
        let keys: BTreeSet<[usize; 3]> = a.keys().chain(b.keys()).copied().collect();
        let tv: f64 = keys
            .iter()
            .map(|k| {
                let pa = *a.get(k).unwrap_or(&0) as f64 / trials as f64;
                let pb = *b.get(k).unwrap_or(&0) as f64 / trials as f64;
                (pa - pb).abs()
            })
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "total-variation distance {tv}");
    }

    #[test]
    fn expected_epoch_length_is_nondecreasing_in_focus() {
        // Analytic expectation of the mean sampled length under the
        // per-sample weights, swept over the focus bin.
        let mut rng = Rng::new(31);
        for _ in 0..20 {
            let n = 40 + rng.next_below(60) as usize;
            let lengths: Vec<usize> = (0..n).map(|_| 5 + rng.next_below(150) as usize).collect();
            let b = 2 + rng.next_below(6) as usize;
            let bins = assign_bins(&lengths, b).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for i_e in 1..=b {
                let w = epoch_weights(b, i_e).unwrap();
                let mut mass = 0.0;
                let mut mean = 0.0;
                for (s, &bin) in bins.iter().enumerate() {
                    mass += w[bin - 1];
                    mean += w[bin - 1] * lengths[s] as f64;
                }
                let expected = mean / mass;
                assert!(
                    expected >= prev - 1e-9,
                    "focus {i_e}: {expected} < {prev} (lengths {lengths:?})"
                );
                prev = expected;
            }
        }
    }
}
