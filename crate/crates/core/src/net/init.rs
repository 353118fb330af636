use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::chain::{Chain, ParamVector};
use super::layer::DenseSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Standard-normal weights, zero biases, identity first layer.
    IdentityNormal,
    /// As `IdentityNormal`, with the last dense layer zeroed so that a residual
    /// correction starts at exactly zero.
    NeutralResidual,
}

/// Parameters for a sequence of dense layers, in parameter-vector order.
pub fn init_dense_params(specs: &[DenseSpec], scheme: InitScheme, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = specs.len().saturating_sub(1);
    let mut values = Vec::with_capacity(specs.iter().map(DenseSpec::n_params).sum());
    for (i, spec) in specs.iter().enumerate() {
        let w = if i == 0 {
            DMatrix::identity(spec.n_out, spec.n_in)
        } else {
            DMatrix::from_fn(spec.n_out, spec.n_in, |_, _| StandardNormal.sample(&mut rng))
        };
        if scheme == InitScheme::NeutralResidual && i == last && specs.len() > 1 {
            values.extend(std::iter::repeat_n(0.0, spec.n_weights()));
        } else {
            values.extend(w.iter());
        }
        values.extend(std::iter::repeat_n(0.0, spec.n_out));
    }
    values
}

pub fn init_params(chain: &Chain, scheme: InitScheme, seed: u64) -> ParamVector {
    ParamVector {
        values: init_dense_params(&chain.dense_specs(), scheme, seed),
        slots: chain.slots(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Activation;

    fn table2() -> Vec<DenseSpec> {
        vec![
            DenseSpec::new(2, 2, Activation::Identity),
            DenseSpec::new(2, 8, Activation::Identity),
            DenseSpec::new(8, 8, Activation::Tanh),
            DenseSpec::new(8, 2, Activation::Identity),
        ]
    }

    #[test]
    fn first_layer_identity_biases_zero() {
        let chain = Chain::dense(&table2()).unwrap();
        let p = init_params(&chain, InitScheme::IdentityNormal, 7);
        assert_eq!(p.len(), 6 + 24 + 72 + 18);
        assert_eq!(&p.values[0..4], &[1.0, 0.0, 0.0, 1.0]);
        for slot in &p.slots {
            assert!(p.values[slot.biases()].iter().all(|&b| b == 0.0));
        }
        assert!(p.values[p.slots[3].weights()].iter().any(|&w| w != 0.0));
    }

    #[test]
    fn neutral_residual_output_is_zero() {
        let mut chain = Chain::dense(&table2()[1..]).unwrap();
        let p = init_params(&chain, InitScheme::NeutralResidual, 3);
        for x in [[0.0, 0.0], [1.0, -2.0], [5.0, 7.5]] {
            assert_eq!(chain.eval(&x, &p.values).unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let chain = Chain::dense(&table2()).unwrap();
        assert_eq!(
            init_params(&chain, InitScheme::IdentityNormal, 42),
            init_params(&chain, InitScheme::IdentityNormal, 42)
        );
        assert_ne!(
            init_params(&chain, InitScheme::IdentityNormal, 42).values,
            init_params(&chain, InitScheme::IdentityNormal, 43).values
        );
    }
}
