use super::{AggregationMode, CoordinatorError};
use crate::nn::{ModelWeights, Tensor};

/// One client's contribution to an aggregation.
#[derive(Clone, Copy, Debug)]
pub struct Contribution<'a> {
    pub client_id: &'a str,
    pub weights: &'a ModelWeights,
    pub n_k: u64,
}

/// Federated averaging: `w[j] = sum_k c_k * w_k[j]` with `c_k = n_k / sum n`
/// (weighted) or `1 / K` (uniform).
///
/// Contributions are summed in ascending `client_id` order in `f64` and the
/// result rounded once to `f32`, so the output does not depend on arrival
/// order.
pub fn aggregate(
    results: &[Contribution<'_>],
    mode: AggregationMode,
) -> Result<ModelWeights, CoordinatorError> {
    let mut order: Vec<&Contribution<'_>> = results.iter().collect();
    order.sort_by(|a, b| a.client_id.cmp(b.client_id));
    let first = order
        .first()
        .ok_or_else(|| CoordinatorError::Contract("aggregate needs at least one result".into()))?;
    for c in &order {
        if c.n_k == 0 {
            return Err(CoordinatorError::Aggregation {
                client_id: c.client_id.to_string(),
                reason: "sample count is zero".into(),
            });
        }
        if !c.weights.is_compatible(first.weights) {
            return Err(CoordinatorError::Aggregation {
                client_id: c.client_id.to_string(),
                reason: format!(
                    "manifest {} differs from {} sent by `{}`",
                    c.weights.manifest_hash(),
                    first.weights.manifest_hash(),
                    first.client_id
                ),
            });
        }
    }

    let coefs: Vec<f64> = match mode {
        AggregationMode::Weighted => {
            let total: f64 = order.iter().map(|c| c.n_k as f64).sum();
            order.iter().map(|c| c.n_k as f64 / total).collect()
        }
        AggregationMode::Uniform => vec![1.0 / order.len() as f64; order.len()],
    };

    let mut entries = Vec::with_capacity(first.weights.len());
    for (j, (name, t0)) in first.weights.entries().iter().enumerate() {
        let mut acc = vec![0.0f64; t0.len()];
        for (c, &coef) in order.iter().zip(&coefs) {
            for (a, &w) in acc.iter_mut().zip(c.weights.tensor(j).data()) {
                *a += coef * w as f64;
            }
        }
        let data = acc.into_iter().map(|v| v as f32).collect();
        let t = Tensor::new(t0.shape().to_vec(), data).expect("shape copied from input");
        entries.push((name.clone(), t));
    }
    Ok(ModelWeights::new(entries).expect("names copied from input"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f32) -> ModelWeights {
        ModelWeights::new(vec![("x".into(), Tensor::new(vec![1], vec![v]).unwrap())]).unwrap()
    }

    #[test]
    fn weighted_and_uniform_scalars() {
        let (a, b) = (scalar(1.0), scalar(3.0));
        let rs = [
            Contribution { client_id: "a", weights: &a, n_k: 1 },
            Contribution { client_id: "b", weights: &b, n_k: 3 },
        ];
        let w = aggregate(&rs, AggregationMode::Weighted).unwrap();
        assert_eq!(w.tensor(0).data(), &[2.5]);
        let u = aggregate(&rs, AggregationMode::Uniform).unwrap();
        assert_eq!(u.tensor(0).data(), &[2.0]);
    }

    #[test]
    fn single_client_is_identity() {
        let a = ModelWeights::new(vec![(
            "x".into(),
            Tensor::new(vec![3], vec![0.1, -7.25e-9, 3.3]).unwrap(),
        )])
        .unwrap();
        let w = aggregate(
            &[Contribution { client_id: "only", weights: &a, n_k: 240 }],
            AggregationMode::Weighted,
        )
        .unwrap();
        assert_eq!(w, a);
    }

    #[test]
    fn mismatch_names_the_client() {
        let a = scalar(1.0);
        let b = ModelWeights::new(vec![("y".into(), Tensor::new(vec![1], vec![1.0]).unwrap())]).unwrap();
        let err = aggregate(
            &[
                Contribution { client_id: "a", weights: &a, n_k: 1 },
                Contribution { client_id: "bad", weights: &b, n_k: 1 },
            ],
            AggregationMode::Weighted,
        )
        .unwrap_err();
        assert!(matches!(err, CoordinatorError::Aggregation { ref client_id, .. } if client_id == "bad"));
        assert!(aggregate(&[], AggregationMode::Weighted).is_err());
    }
}
