//! Objective terms and their analytic gradients, in double precision.
//!
//! The trainer's update steps gather f32 model rows into f64 buffers, call
//! these kernels, and apply `row += lr * gradient`. Keeping the math on raw
//! f64 slices makes the gradients directly checkable against central finite
//! differences of the returned objective values.

/// Logistic function `1 / (1 + e^-x)`, evaluated exactly.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Table-backed logistic function for hot loops, word2vec style: `entries`
/// precomputed values over `[-max_exp, max_exp]`, direct lookup without
/// interpolation, inputs outside the range clamped to the boundary entries.
///
/// The default trainer path uses the exact [`sigmoid`] instead, because the
/// table's quantization error (about `max_exp / entries`) is far above the
/// tolerance the gradient contracts promise.
#[derive(Debug, Clone)]
pub struct SigmoidTable {
    values: Vec<f64>,
    max_exp: f64,
}

impl SigmoidTable {
    pub const DEFAULT_ENTRIES: usize = 1000;
    pub const DEFAULT_MAX_EXP: f64 = 6.0;

    pub fn new(entries: usize, max_exp: f64) -> Self {
        assert!(entries >= 2, "sigmoid table needs at least two entries");
        assert!(max_exp > 0.0, "sigmoid table range must be positive");
        let values = (0..entries)
            .map(|i| {
                let x = (2.0 * i as f64 / (entries - 1) as f64 - 1.0) * max_exp;
                sigmoid(x)
            })
            .collect();
        Self { values, max_exp }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let pos = (x / self.max_exp + 1.0) / 2.0 * (n - 1) as f64;
        let idx = (pos.round() as isize).clamp(0, n as isize - 1) as usize;
        self.values[idx]
    }
}

impl Default for SigmoidTable {
    fn default() -> Self {
        Self::new(Self::DEFAULT_ENTRIES, Self::DEFAULT_MAX_EXP)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(acc: &mut [f64], scale: f64, v: &[f64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += scale * x;
    }
}

/// Value and gradients of one skip-gram term with negative sampling:
///
/// `L = log sigmoid(c . x+) + sum_i log sigmoid(-(c . x-_i))`
///
/// where `c` is the center word's input vector, `x+` the context word's
/// output vector and `x-_i` the drawn negatives' output vectors.
#[derive(Debug, Clone)]
pub struct SkipGramGrad {
    pub objective: f64,
    pub d_center: Vec<f64>,
    pub d_context: Vec<f64>,
    pub d_negatives: Vec<Vec<f64>>,
}

pub fn skipgram_gradients(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> SkipGramGrad {
    let dim = center.len();
    let mut d_center = vec![0.0; dim];

    let g_pos = sigmoid(-dot(center, context));
    let mut objective = sigmoid(dot(center, context)).ln();
    let mut d_context = vec![0.0; dim];
    axpy(&mut d_context, g_pos, center);
    axpy(&mut d_center, g_pos, context);

    let d_negatives = negatives
        .iter()
        .map(|neg| {
            let s = dot(center, neg);
            objective += sigmoid(-s).ln();
            let g_neg = sigmoid(s);
            let mut d_neg = vec![0.0; dim];
            axpy(&mut d_neg, -g_neg, center);
            axpy(&mut d_center, -g_neg, neg);
            d_neg
        })
        .collect();

    SkipGramGrad { objective, d_center, d_context, d_negatives }
}

/// Value and gradients of the definition term for a linked word:
///
/// `L = log sigmoid(c . d)` with `d = sum_j alpha_j v_j`,
///
/// where `c` is the center word's input vector and the `v_j` are input
/// vectors of the linked document's (distinct) prefix tokens. The term has
/// no negatives; it only attracts `c` toward the document composition. Both
/// sides use input vectors, so every `v_j` receives a gradient too.
#[derive(Debug, Clone)]
pub struct DefinitionGrad {
    pub objective: f64,
    pub d_center: Vec<f64>,
    pub d_tokens: Vec<Vec<f64>>,
}

pub fn definition_gradients(center: &[f64], tokens: &[&[f64]], alphas: &[f64]) -> DefinitionGrad {
    assert_eq!(tokens.len(), alphas.len(), "one weight per document token");
    let dim = center.len();
    let mut composed = vec![0.0; dim];
    for (v, &alpha) in tokens.iter().zip(alphas) {
        axpy(&mut composed, alpha, v);
    }
    let s = dot(center, &composed);
    let g = sigmoid(-s);

    let mut d_center = vec![0.0; dim];
    axpy(&mut d_center, g, &composed);
    let d_tokens = alphas
        .iter()
        .map(|&alpha| {
            let mut d = vec![0.0; dim];
            axpy(&mut d, g * alpha, center);
            d
        })
        .collect();

    DefinitionGrad { objective: sigmoid(s).ln(), d_center, d_tokens }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigmoid_known_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(2.0) - 0.880797).abs() < 5e-7);
        for &x in &[-8.0, -3.2, -0.5, 0.0, 0.1, 4.7, 9.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15, "symmetry fails at {x}");
        }
    }

    #[test]
    fn sigmoid_table_clamps_and_tracks_exact_values() {
        let table = SigmoidTable::default();
        assert_eq!(table.eval(7.5), table.eval(6.0));
        assert_eq!(table.eval(-100.0), table.eval(-6.0));
        assert!((table.eval(6.0) - sigmoid(6.0)).abs() < 1e-12);
        let mut worst: f64 = 0.0;
        let mut x = -6.0;
        while x <= 6.0 {
            worst = worst.max((table.eval(x) - sigmoid(x)).abs());
            x += 0.001;
        }
        assert!(worst < 3e-3, "table error {worst} too large");
        assert!(worst > 1e-6, "direct lookup should quantize");
    }

    fn rand_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Central finite difference of `f` w.r.t. one coordinate of `v`.
    fn central_diff(f: &dyn Fn(&[f64]) -> f64, v: &[f64], i: usize, h: f64) -> f64 {
        let mut hi = v.to_vec();
        let mut lo = v.to_vec();
        hi[i] += h;
        lo[i] -= h;
        (f(&hi) - f(&lo)) / (2.0 * h)
    }

    fn assert_close_l2(analytic: &[f64], numeric: &[f64], what: &str) {
        let num: f64 = analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n) * (a - n))
            .sum::<f64>()
            .sqrt();
        let den = numeric.iter().map(|n| n * n).sum::<f64>().sqrt().max(1e-12);
        assert!(num / den < 1e-4, "{what}: relative gradient error {}", num / den);
    }

    #[test]
    fn skipgram_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..10 {
            let dim = 8;
            let center = rand_vec(&mut rng, dim);
            let context = rand_vec(&mut rng, dim);
            let negs: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut rng, dim)).collect();
            let neg_refs: Vec<&[f64]> = negs.iter().map(|v| v.as_slice()).collect();
            let grad = skipgram_gradients(&center, &context, &neg_refs);

            let obj_center = |c: &[f64]| {
                let refs: Vec<&[f64]> = negs.iter().map(|v| v.as_slice()).collect();
                skipgram_gradients(c, &context, &refs).objective
            };
            let numeric: Vec<f64> =
                (0..dim).map(|i| central_diff(&obj_center, &center, i, h)).collect();
            assert_close_l2(&grad.d_center, &numeric, "center");

            let obj_context = |x: &[f64]| {
                let refs: Vec<&[f64]> = negs.iter().map(|v| v.as_slice()).collect();
                skipgram_gradients(&center, x, &refs).objective
            };
            let numeric: Vec<f64> =
                (0..dim).map(|i| central_diff(&obj_context, &context, i, h)).collect();
            assert_close_l2(&grad.d_context, &numeric, "context");

            for k in 0..negs.len() {
                let obj_neg = |n: &[f64]| {
                    let mut swapped = negs.clone();
                    swapped[k] = n.to_vec();
                    let refs: Vec<&[f64]> = swapped.iter().map(|v| v.as_slice()).collect();
                    skipgram_gradients(&center, &context, &refs).objective
                };
                let numeric: Vec<f64> =
                    (0..dim).map(|i| central_diff(&obj_neg, &negs[k], i, h)).collect();
                assert_close_l2(&grad.d_negatives[k], &numeric, "negative");
            }
        }
    }

    #[test]
    fn definition_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = 1e-5;
        for _ in 0..10 {
            let dim = 8;
            let center = rand_vec(&mut rng, dim);
            let tokens: Vec<Vec<f64>> = (0..4).map(|_| rand_vec(&mut rng, dim)).collect();
            let alphas: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..3.0)).collect();
            let refs: Vec<&[f64]> = tokens.iter().map(|v| v.as_slice()).collect();
            let grad = definition_gradients(&center, &refs, &alphas);

            let obj_center = |c: &[f64]| {
                let refs: Vec<&[f64]> = tokens.iter().map(|v| v.as_slice()).collect();
                definition_gradients(c, &refs, &alphas).objective
            };
            let numeric: Vec<f64> =
                (0..dim).map(|i| central_diff(&obj_center, &center, i, h)).collect();
            assert_close_l2(&grad.d_center, &numeric, "center");

            for k in 0..tokens.len() {
                let obj_tok = |t: &[f64]| {
                    let mut swapped = tokens.clone();
                    swapped[k] = t.to_vec();
                    let refs: Vec<&[f64]> = swapped.iter().map(|v| v.as_slice()).collect();
                    definition_gradients(&center, &refs, &alphas).objective
                };
                let numeric: Vec<f64> =
                    (0..dim).map(|i| central_diff(&obj_tok, &tokens[k], i, h)).collect();
                assert_close_l2(&grad.d_tokens[k], &numeric, "token");
            }
        }
    }

    #[test]
    fn definition_term_is_purely_attractive() {
        // The gradient on the center points along the composition, never
        // away from it, and grows as the dot product shrinks.
        let center = vec![0.1, -0.2];
        let tokens = vec![vec![0.5, 0.5]];
        let refs: Vec<&[f64]> = tokens.iter().map(|v| v.as_slice()).collect();
        let grad = definition_gradients(&center, &refs, &[1.0]);
        let along = dot(&grad.d_center, &tokens[0]);
        assert!(along > 0.0);
    }
}
