//! Parameter and multiply-add accounting.
//!
//! Parameters: conv and linear weights, linear biases, and batch-norm affine
//! pairs; running statistics are buffers, not parameters. Multiply-adds
//! count the multiply and the accumulate of each MAC separately (a conv
//! contributes `2 * C_out * T_out * C_in * K`), which is the convention the
//! reference model figures follow; batch norm, activations and pooling are
//! excluded.

use super::{CandidateSpec, Genotype, Network, SearchSpaceConfig};

fn conv_params(c_in: usize, c_out: usize, k: usize) -> u64 {
    (c_out * c_in * k) as u64
}

fn bn_params(c: usize) -> u64 {
    2 * c as u64
}

fn linear_params(f: usize, o: usize) -> u64 {
    (o * f + o) as u64
}

fn conv_madds(c_in: usize, c_out: usize, k: usize, t_out: usize) -> u64 {
    2 * (c_out * t_out * c_in * k) as u64
}

fn linear_madds(f: usize, o: usize) -> u64 {
    2 * (f * o) as u64
}

fn spec_params(spec: &CandidateSpec, c_in: usize, c_out: usize, stride: usize, r: usize) -> u64 {
    match spec {
        CandidateSpec::Skip => 0,
        CandidateSpec::Tc { kernel, se } => {
            let mut p = conv_params(c_in, c_out, *kernel)
                + bn_params(c_out)
                + conv_params(c_out, c_out, *kernel)
                + bn_params(c_out);
            if stride != 1 || c_in != c_out {
                p += conv_params(c_in, c_out, 1) + bn_params(c_out);
            }
            if *se {
                let mid = (c_out / r).max(1);
                p += linear_params(c_out, mid) + linear_params(mid, c_out);
            }
            p
        }
    }
}

fn spec_madds(
    spec: &CandidateSpec,
    c_in: usize,
    c_out: usize,
    stride: usize,
    r: usize,
    t_out: usize,
) -> u64 {
    match spec {
        CandidateSpec::Skip => 0,
        CandidateSpec::Tc { kernel, se } => {
            let mut m = conv_madds(c_in, c_out, *kernel, t_out)
                + conv_madds(c_out, c_out, *kernel, t_out);
            if stride != 1 || c_in != c_out {
                m += conv_madds(c_in, c_out, 1, t_out);
            }
            if *se {
                let mid = (c_out / r).max(1);
                m += linear_madds(c_out, mid) + linear_madds(mid, c_out);
            }
            m
        }
    }
}

/// Trainable parameter count, computed structurally from the genotype and
/// schedule (the store enumeration is the independent oracle in tests).
pub fn count_params(net: &Network) -> u64 {
    params_of(net.genotype(), net.space())
}

pub(crate) fn params_of(genotype: &Genotype, space: &SearchSpaceConfig) -> u64 {
    let mut total = conv_params(space.in_channels, space.stem_channels, 3)
        + bn_params(space.stem_channels);
    for (l, entry) in genotype.layers.iter().enumerate() {
        let c_in = space.layer_in_channels(l);
        let c_out = space.channels[l];
        for spec in entry {
            total += spec_params(spec, c_in, c_out, space.strides[l], space.se_reduction);
        }
    }
    total += linear_params(space.channels[space.num_layers - 1], space.num_classes);
    total
}

/// Multiply-add count of one forward pass on a `[in_channels, t_in]` input.
pub fn count_madds(net: &Network, t_in: usize) -> u64 {
    madds_of(net.genotype(), net.space(), t_in)
}

pub(crate) fn madds_of(genotype: &Genotype, space: &SearchSpaceConfig, t_in: usize) -> u64 {
    let mut total = conv_madds(space.in_channels, space.stem_channels, 3, t_in);
    let mut t = t_in;
    for (l, entry) in genotype.layers.iter().enumerate() {
        let c_in = space.layer_in_channels(l);
        let c_out = space.channels[l];
        let t_out = t.div_ceil(space.strides[l]);
        for spec in entry {
            total += spec_madds(spec, c_in, c_out, space.strides[l], space.se_reduction, t_out);
        }
        t = t_out;
    }
    total += linear_madds(space.channels[space.num_layers - 1], space.num_classes);
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_network, build_tc_resnet14, tc_resnet14_genotype, tc_resnet14_space};

    #[test]
    fn single_conv_accounting_from_definition() {
        // One conv 40 -> 24, K = 3 at T = 98: 2880 weights (bias disabled
        // under batch norm) and 2 * 40 * 3 * 24 * 98 mult+add operations.
        assert_eq!(conv_params(40, 24, 3), 2880);
        assert_eq!(conv_madds(40, 24, 3, 98), 2 * 282_240);
    }

    #[test]
    fn tc_resnet14_matches_reference_figures() {
        let net = build_tc_resnet14(1.5, 0).unwrap();
        let params = count_params(&net);
        let madds = count_madds(&net, 98);
        assert!(
            (296_000..=314_000).contains(&params),
            "params {params} outside 305K +/- 3%"
        );
        assert!(
            (12_700_000..=14_100_000).contains(&madds),
            "madds {madds} outside 13.4M +/- 5%"
        );
    }

    #[test]
    fn param_counter_matches_store_enumeration() {
        for (g, space) in [
            (tc_resnet14_genotype(9, false), tc_resnet14_space(1.5)),
            (tc_resnet14_genotype(3, true), tc_resnet14_space(1.0)),
            (
                crate::model::Genotype {
                    layers: vec![
                        vec![CandidateSpec::Tc { kernel: 7, se: true }],
                        vec![CandidateSpec::Skip, CandidateSpec::Tc { kernel: 3, se: false }],
                        vec![CandidateSpec::Tc { kernel: 5, se: false }],
                    ],
                },
                SearchSpaceConfig {
                    num_layers: 3,
                    channels: vec![16, 16, 32],
                    strides: vec![2, 1, 2],
                    stem_channels: 16,
                    ..SearchSpaceConfig::default()
                },
            ),
        ] {
            let net = build_network(&g, &space, 7).unwrap();
            assert_eq!(
                count_params(&net),
                net.store().num_trainable_values() as u64,
                "structural count disagrees with tensor enumeration"
            );
        }
    }

    #[test]
    fn kernel_nine_outgrows_kernel_three() {
        let space = tc_resnet14_space(1.5);
        let k9 = build_network(&tc_resnet14_genotype(9, false), &space, 0).unwrap();
        let k3 = build_network(&tc_resnet14_genotype(3, false), &space, 0).unwrap();
        assert!(count_params(&k9) > count_params(&k3));
        assert!(count_madds(&k9, 98) > count_madds(&k3, 98));
    }

    #[test]
    fn se_adds_exactly_the_two_gating_linears() {
        let space = tc_resnet14_space(1.0);
        let with = build_network(&tc_resnet14_genotype(9, true), &space, 0).unwrap();
        let without = build_network(&tc_resnet14_genotype(9, false), &space, 0).unwrap();
        let expected_param_delta: u64 = space
            .channels
            .iter()
            .map(|&c| {
                let r = space.se_reduction;
                (2 * c * c / r + c / r + c) as u64
            })
            .sum();
        assert_eq!(
            count_params(&with) - count_params(&without),
            expected_param_delta
        );
        let expected_madds_delta: u64 = space
            .channels
            .iter()
            .map(|&c| 2 * 2 * (c * (c / space.se_reduction)) as u64)
            .sum();
        assert_eq!(
            count_madds(&with, 98) - count_madds(&without, 98),
            expected_madds_delta
        );
    }

    #[test]
    fn skip_contributes_nothing() {
        let space = SearchSpaceConfig {
            num_layers: 2,
            channels: vec![24, 24],
            strides: vec![1, 1],
            stem_channels: 24,
            ..SearchSpaceConfig::default()
        };
        let with_skip = crate::model::Genotype {
            layers: vec![
                vec![CandidateSpec::Tc { kernel: 3, se: false }, CandidateSpec::Skip],
                vec![CandidateSpec::Skip],
            ],
        };
        let without = crate::model::Genotype {
            layers: vec![
                vec![CandidateSpec::Tc { kernel: 3, se: false }],
                vec![CandidateSpec::Skip],
            ],
        };
        let a = build_network(&with_skip, &space, 0).unwrap();
        let b = build_network(&without, &space, 0).unwrap();
        assert_eq!(count_params(&a), count_params(&b));
        assert_eq!(count_madds(&a, 98), count_madds(&b, 98));
    }
}
