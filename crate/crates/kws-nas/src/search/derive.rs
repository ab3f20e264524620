//! From alphas to a discrete architecture.

use super::alpha::{sigmoid_scalar, AlphaTable};
use super::SearchMethod;
use crate::model::{CandidateSpec, Genotype, SearchSpaceConfig};
use crate::tensor::Real;
use rand::Rng;

/// Derivation outcome plus which layers fell back to argmax because no
/// FairDARTS gate cleared the threshold.
pub struct Derived {
    pub genotype: Genotype,
    pub fallback_layers: Vec<usize>,
}

fn argmax(row: &[Real]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        // Strict comparison keeps the lowest index on ties.
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Discretize an alpha table.
///
/// Softmax methods (DARTS, NoisyDARTS) take the single argmax candidate per
/// layer, ties resolved to the lowest candidate index. FairDARTS keeps every
/// candidate whose sigmoid clears `threshold`, falling back to the argmax
/// when none does.
pub fn derive_genotype_with_report(table: &AlphaTable, method: SearchMethod, threshold: Real) -> Derived {
    let mut layers = Vec::with_capacity(table.num_layers());
    let mut fallback_layers = Vec::new();
    for l in 0..table.num_layers() {
        let raw = table.raw(l);
        let candidates = table.candidates(l);
        let entry: Vec<CandidateSpec> = if method.uses_sigmoid_gates() {
            let chosen: Vec<CandidateSpec> = raw
                .iter()
                .zip(candidates)
                .filter(|(&a, _)| sigmoid_scalar(a) >= threshold)
                .map(|(_, c)| *c)
                .collect();
            if chosen.is_empty() {
                fallback_layers.push(l);
                vec![candidates[argmax(raw)]]
            } else {
                chosen
            }
        } else {
            vec![candidates[argmax(raw)]]
        };
        layers.push(entry);
    }
    Derived {
        genotype: Genotype { layers },
        fallback_layers,
    }
}

pub fn derive_genotype(table: &AlphaTable, method: SearchMethod, threshold: Real) -> Genotype {
    derive_genotype_with_report(table, method, threshold).genotype
}

/// `n` uniform samples from a fresh seeded stream.
pub fn random_genotypes(space: &SearchSpaceConfig, n: usize, seed: u64) -> Vec<Genotype> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_sample_genotype(space, &mut rng)).collect()
}

/// Uniform i.i.d. choice of one candidate per layer (the random-search
/// baseline).
pub fn random_sample_genotype(space: &SearchSpaceConfig, rng: &mut impl Rng) -> Genotype {
    let layers = (0..space.num_layers)
        .map(|l| {
            let candidates = space.layer_candidates(l);
            vec![candidates[rng.gen_range(0..candidates.len())]]
        })
        .collect();
    Genotype { layers }
}

/// Number of single-choice-per-layer architectures: the product of each
/// layer's candidate count.
pub fn search_space_cardinality(space: &SearchSpaceConfig) -> u128 {
    (0..space.num_layers)
        .map(|l| space.layer_candidates(l).len() as u128)
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table(method: SearchMethod, rows: Vec<Vec<Real>>) -> AlphaTable {
        let layers = rows
            .into_iter()
            .map(|row| {
                let candidates: Vec<CandidateSpec> = (0..row.len())
                    .map(|i| CandidateSpec::Tc {
                        kernel: [3usize, 5, 7, 9][i % 4],
                        se: i >= 4,
                    })
                    .collect();
                (candidates, row)
            })
            .collect();
        AlphaTable::new(method, layers)
    }

    #[test]
    fn darts_takes_single_argmax() {
        let t = table(SearchMethod::Darts, vec![vec![0.9, 0.1, 0.2]]);
        let g = derive_genotype(&t, SearchMethod::Darts, 0.8);
        assert_eq!(g.layers[0], vec![CandidateSpec::Tc { kernel: 3, se: false }]);
    }

    #[test]
    fn darts_ties_break_to_lowest_index() {
        let t = table(SearchMethod::Darts, vec![vec![0.5, 0.5, 0.5]]);
        let g = derive_genotype(&t, SearchMethod::Darts, 0.8);
        assert_eq!(g.layers[0], vec![CandidateSpec::Tc { kernel: 3, se: false }]);
    }

    #[test]
    fn fairdarts_keeps_everything_above_threshold() {
        // sigmoid(3.0) ~ 0.953, sigmoid(1.8) ~ 0.858, sigmoid(-1.4) ~ 0.198
        let t = table(SearchMethod::FairDarts, vec![vec![3.0, 1.8, -1.4]]);
        let d = derive_genotype_with_report(&t, SearchMethod::FairDarts, 0.8);
        assert_eq!(d.genotype.layers[0].len(), 2);
        assert!(d.fallback_layers.is_empty());
    }

    #[test]
    fn fairdarts_empty_selection_falls_back_to_argmax() {
        let t = table(SearchMethod::FairDarts, vec![vec![-1.0, 0.4, -2.0]]);
        let d = derive_genotype_with_report(&t, SearchMethod::FairDarts, 0.8);
        assert_eq!(d.fallback_layers, vec![0]);
        assert_eq!(
            d.genotype.layers[0],
            vec![CandidateSpec::Tc { kernel: 5, se: false }]
        );
    }

    #[test]
    fn additive_shift_leaves_darts_choice_unchanged() {
        let rows = vec![vec![0.3, -0.2, 1.1, 0.9], vec![-2.0, -1.0, -3.0, -0.5]];
        let t0 = table(SearchMethod::Darts, rows.clone());
        let shifted: Vec<Vec<Real>> = rows
            .iter()
            .map(|r| r.iter().map(|v| v + 17.25).collect())
            .collect();
        let t1 = table(SearchMethod::Darts, shifted);
        assert_eq!(
            derive_genotype(&t0, SearchMethod::Darts, 0.8),
            derive_genotype(&t1, SearchMethod::Darts, 0.8)
        );
    }

    #[test]
    fn random_sampling_is_uniform_and_seeded() {
        let space = SearchSpaceConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        // Layer 1 keeps all nine candidates.
        let mut counts = [0usize; 9];
        let layer1 = space.layer_candidates(1);
        for _ in 0..n {
            let g = random_sample_genotype(&space, &mut rng);
            assert_eq!(g.num_layers(), 9);
            assert!(g.layers.iter().all(|e| e.len() == 1));
            let pos = layer1.iter().position(|c| *c == g.layers[1][0]).unwrap();
            counts[pos] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n as f64;
            assert!(
                (freq - 1.0 / 9.0).abs() < 0.02,
                "candidate {i} frequency {freq}"
            );
        }

        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(
            random_sample_genotype(&space, &mut a),
            random_sample_genotype(&space, &mut b)
        );
    }

    #[test]
    fn cardinality_reproduces_six_to_the_ninth() {
        // Six candidates everywhere: all strides 1, equal channels, no skip
        // exclusions apply.
        let space = SearchSpaceConfig {
            num_layers: 9,
            channels: vec![24; 9],
            strides: vec![1; 9],
            stem_channels: 24,
            candidates: vec![
                "tc3".into(),
                "tc5".into(),
                "tc7".into(),
                "tc9".into(),
                "tc3se".into(),
                "skip".into(),
            ],
            ..SearchSpaceConfig::default()
        };
        assert_eq!(search_space_cardinality(&space), 10_077_696);
    }

    #[test]
    fn cardinality_default_space_and_degenerate_layers() {
        // Default: skip allowed on layers 1, 3, 5, 7, 8 -> 9 candidates
        // there, 8 on the other four.
        let space = SearchSpaceConfig::default();
        assert_eq!(
            search_space_cardinality(&space),
            9u128.pow(5) * 8u128.pow(4)
        );

        let nine_full = SearchSpaceConfig {
            num_layers: 9,
            channels: vec![24; 9],
            strides: vec![1; 9],
            stem_channels: 24,
            ..SearchSpaceConfig::default()
        };
        assert_eq!(search_space_cardinality(&nine_full), 9u128.pow(9));
        assert_eq!(9u128.pow(9), 387_420_489);

        // A single-candidate layer leaves the product unchanged.
        let mut with_unit = nine_full.clone();
        with_unit.num_layers = 10;
        with_unit.channels.push(48);
        with_unit.strides.push(2); // stride 2 drops skip; restrict further
        with_unit.candidates = vec!["tc3".into(), "skip".into()];
        let c = search_space_cardinality(&with_unit);
        // Layers 0..9 allow {tc3, skip} (2 each); layer 9 allows only tc3.
        assert_eq!(c, 2u128.pow(9));
    }
}
