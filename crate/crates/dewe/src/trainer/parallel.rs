//! Lock-free multi-threaded training.
//!
//! Workers share the two parameter matrices as plain atomics and update them
//! with racy read-modify-write sequences, in the usual hogwild style: sparse
//! updates rarely collide, and a lost write costs a little noise rather than
//! correctness. Documents are dealt round-robin across workers, each worker
//! draws negatives from its own seeded generator, and the global word
//! counter that drives the learning-rate decay is a shared atomic. Results
//! are not bit-reproducible; single-threaded mode is the reference.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use super::{
    definition_gradients, draw_negatives, lr_schedule, sampler_rng, skipgram_gradients,
    EmbeddingModel, Progress, TrainConfig, TrainPlan,
};
use crate::corpus::EncodedDocument;

struct AtomicMatrix {
    dim: usize,
    data: Vec<AtomicU32>,
}

impl AtomicMatrix {
    fn from_flat(dim: usize, values: &[f32]) -> Self {
        Self { dim, data: values.iter().map(|v| AtomicU32::new(v.to_bits())).collect() }
    }

    fn into_flat(self) -> Vec<f32> {
        self.data.into_iter().map(|a| f32::from_bits(a.into_inner())).collect()
    }

    fn read_row(&self, row: u32, buf: &mut Vec<f64>) {
        let start = row as usize * self.dim;
        buf.clear();
        buf.extend(
            self.data[start..start + self.dim]
                .iter()
                .map(|a| f32::from_bits(a.load(Ordering::Relaxed)) as f64),
        );
    }

    fn add_row(&self, row: u32, grad: &[f64], lr: f64) {
        let start = row as usize * self.dim;
        for (a, g) in self.data[start..start + self.dim].iter().zip(grad) {
            let old = f32::from_bits(a.load(Ordering::Relaxed));
            a.store(((old as f64 + lr * g) as f32).to_bits(), Ordering::Relaxed);
        }
    }
}

fn skipgram_step_atomic(
    input: &AtomicMatrix,
    output: &AtomicMatrix,
    center: u32,
    context: u32,
    negatives: &[u32],
    lr: f64,
) -> f64 {
    let mut c = Vec::new();
    input.read_row(center, &mut c);
    let mut x = Vec::new();
    output.read_row(context, &mut x);
    let negs: Vec<Vec<f64>> = negatives
        .iter()
        .map(|&n| {
            let mut buf = Vec::new();
            output.read_row(n, &mut buf);
            buf
        })
        .collect();
    let neg_refs: Vec<&[f64]> = negs.iter().map(|v| v.as_slice()).collect();

    let grad = skipgram_gradients(&c, &x, &neg_refs);
    input.add_row(center, &grad.d_center, lr);
    output.add_row(context, &grad.d_context, lr);
    for (&n, d_neg) in negatives.iter().zip(&grad.d_negatives) {
        output.add_row(n, d_neg, lr);
    }
    grad.objective
}

fn definition_step_atomic(
    input: &AtomicMatrix,
    center: u32,
    def_doc: &[(u32, f64)],
    lr: f64,
) -> f64 {
    let mut c = Vec::new();
    input.read_row(center, &mut c);
    let rows: Vec<Vec<f64>> = def_doc
        .iter()
        .map(|&(t, _)| {
            let mut buf = Vec::new();
            input.read_row(t, &mut buf);
            buf
        })
        .collect();
    let row_refs: Vec<&[f64]> = rows.iter().map(|v| v.as_slice()).collect();
    let alphas: Vec<f64> = def_doc.iter().map(|&(_, a)| a).collect();

    let grad = definition_gradients(&c, &row_refs, &alphas);
    input.add_row(center, &grad.d_center, lr);
    for (&(t, _), d_tok) in def_doc.iter().zip(&grad.d_tokens) {
        input.add_row(t, d_tok, lr);
    }
    grad.objective
}

/// Runs all epochs over shared atomic matrices and writes the result back
/// into `model`. Progress is reported at epoch ends only. Returns the mean
/// step loss per epoch.
pub(super) fn run(
    docs: &[EncodedDocument],
    cfg: &TrainConfig,
    plan: &TrainPlan,
    model: &mut EmbeddingModel,
    on_progress: &mut impl FnMut(&Progress),
) -> Vec<f64> {
    let input = AtomicMatrix::from_flat(cfg.dim, model.input());
    let output = AtomicMatrix::from_flat(cfg.dim, model.output());
    let words_done = AtomicU64::new(0);
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let totals: Vec<(f64, u64)> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..cfg.threads)
                .map(|worker| {
                    let input = &input;
                    let output = &output;
                    let words_done = &words_done;
                    scope.spawn(move || {
                        let mut rng = sampler_rng(
                            cfg.seed,
                            (epoch * cfg.threads + worker) as u64,
                        );
                        let mut negatives = Vec::with_capacity(cfg.negatives);
                        let mut loss_sum = 0.0;
                        let mut steps: u64 = 0;
                        for doc in docs.iter().skip(worker).step_by(cfg.threads) {
                            let ids = &doc.token_ids;
                            for t in 0..ids.len() {
                                let lr = lr_schedule(
                                    words_done.load(Ordering::Relaxed),
                                    plan.total_words,
                                    cfg,
                                );
                                let center = ids[t];
                                let lo = t.saturating_sub(cfg.window);
                                let hi = (t + cfg.window).min(ids.len() - 1);
                                for j in lo..=hi {
                                    if j == t {
                                        continue;
                                    }
                                    draw_negatives(
                                        &plan.noise,
                                        ids[j],
                                        cfg.negatives,
                                        &mut rng,
                                        &mut negatives,
                                    );
                                    loss_sum -= skipgram_step_atomic(
                                        input, output, center, ids[j], &negatives, lr,
                                    );
                                    steps += 1;
                                }
                                if let Some(weights) = plan.def_prefixes.get(&center) {
                                    loss_sum -=
                                        definition_step_atomic(input, center, weights, lr);
                                    steps += 1;
                                }
                                words_done.fetch_add(1, Ordering::Relaxed);
                            }
                        }
                        (loss_sum, steps)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
        });

        let loss_sum: f64 = totals.iter().map(|&(l, _)| l).sum();
        let steps: u64 = totals.iter().map(|&(_, s)| s).sum();
        let mean = if steps > 0 { loss_sum / steps as f64 } else { 0.0 };
        epoch_loss.push(mean);
        let done = words_done.load(Ordering::Relaxed);
        on_progress(&Progress {
            epoch,
            words_done: done,
            total_words: plan.total_words,
            lr: lr_schedule(done, plan.total_words, cfg),
            avg_loss: mean,
        });
    }

    model.input = input.into_flat();
    model.output = output.into_flat();
    epoch_loss
}
