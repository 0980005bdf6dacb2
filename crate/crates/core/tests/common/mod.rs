//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use idcep::inference::mh_accept;
use idcep::rng::substream;

/// Empirical transition frequencies of a two-state chain with symmetric
/// "flip" proposals against the analytic Metropolis kernel.
pub fn two_point_kernel_error(steps: usize, seed: u64) -> f64 {
    let log_pi = [0.3f64.ln(), 0.7f64.ln()];
    let analytic = [[0.0, 1.0], [0.3 / 0.7, 1.0 - 0.3 / 0.7]];
    let mut counts = [[0usize; 2]; 2];
    let mut rng = substream(seed, 0, 0, 0);
    let mut state = 0usize;
    for _ in 0..steps {
        let proposal = 1 - state;
        let next = if mh_accept(log_pi[state], log_pi[proposal], &mut rng) {
            proposal
        } else {
            state
        };
        counts[state][next] += 1;
        state = next;
    }
    let mut worst = 0.0f64;
    for i in 0..2 {
        let total = (counts[i][0] + counts[i][1]) as f64;
        for j in 0..2 {
            worst = worst.max((counts[i][j] as f64 / total - analytic[i][j]).abs());
        }
    }
    worst
}

/// Asymptotic Kolmogorov–Smirnov p-value of a one-sample test.
pub fn ks_p_value(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.total_cmp(b));
    let n = sample.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        p += 2.0 * (-1.0f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}
