//! Central finite-difference verification of analytic gradients.
//!
//! A fixed probe functional `L(y) = sum_i c_i * y_i` (seeded coefficients)
//! turns any network output into a scalar; every analytic parameter and input
//! gradient is then compared against `(L(x+h) - L(x-h)) / 2h` at 64-bit.

use super::{Mode, Sequential};
use crate::error::Result;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Base finite-difference step; scaled by `max(1, |x|)` per element.
    pub step: f64,
    /// Cap on elements checked per tensor (seeded sample). `None` = all.
    pub max_per_tensor: Option<usize>,
    /// Seed for the probe coefficients and index sampling.
    pub seed: u64,
    /// Also check gradients w.r.t. the network input.
    pub check_input: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            max_per_tensor: None,
            seed: 0x9e3779b9,
            check_input: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Location of the worst element, e.g. "param 3 index 17".
    pub worst: String,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

fn rel_err(a: f64, f: f64) -> f64 {
    let denom = a.abs().max(f.abs()).max(1e-7);
    (a - f).abs() / denom
}

fn probe_coeffs(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mag = 0.5 + rng.gen::<f64>();
            if rng.gen::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

fn sample_indices(n: usize, cap: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match cap {
        Some(c) if c < n => rand::seq::index::sample(rng, n, c).into_vec(),
        _ => (0..n).collect(),
    }
}

/// Compare analytic gradients of `net` (parameters, and optionally the input)
/// against central finite differences under a seeded linear probe of the
/// output. Returns the worst relative error observed.
pub fn finite_diff_check(net: &mut Sequential<f64>, input: &Tensor<f64>, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    // Analytic pass.
    net.zero_grads();
    let out = net.forward(input, Mode::Train)?;
    let coeffs = probe_coeffs(out.numel(), opts.seed);
    let mut grad_out = Tensor::zeros(out.shape().to_vec());
    grad_out.data_mut().copy_from_slice(&coeffs);
    let grad_in = net.backward(&grad_out)?;
    let analytic: Vec<Vec<f64>> = net
        .params()
        .iter()
        .map(|p| p.grad().map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let probe_loss = |net: &mut Sequential<f64>, input: &Tensor<f64>| -> Result<f64> {
        let y = net.forward(input, Mode::Train)?;
        Ok(y.data().iter().zip(&coeffs).map(|(v, c)| v * c).sum())
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        worst: String::new(),
    };
    let mut idx_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5bd1e995);

    let n_params = net.params().len();
    for ti in 0..n_params {
        let numel = net.params()[ti].numel();
        let indices = sample_indices(numel, opts.max_per_tensor, &mut idx_rng);
        for idx in indices {
            let orig = net.params()[ti].data()[idx];
            let h = opts.step * orig.abs().max(1.0);
            net.params()[ti].data_mut()[idx] = orig + h;
            let lp = probe_loss(net, input)?;
            net.params()[ti].data_mut()[idx] = orig - h;
            let lm = probe_loss(net, input)?;
            net.params()[ti].data_mut()[idx] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let err = rel_err(analytic[ti][idx], fd);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = format!("param {} index {} analytic {:.3e} fd {:.3e}", ti, idx, analytic[ti][idx], fd);
            }
        }
    }

    if opts.check_input {
        let mut x = input.clone();
        let indices = sample_indices(x.numel(), opts.max_per_tensor, &mut idx_rng);
        for idx in indices {
            let orig = x.data()[idx];
            let h = opts.step * orig.abs().max(1.0);
            x.data_mut()[idx] = orig + h;
            let lp = probe_loss(net, &x)?;
            x.data_mut()[idx] = orig - h;
            let lm = probe_loss(net, &x)?;
            x.data_mut()[idx] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let err = rel_err(grad_in.data()[idx], fd);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = format!("input index {} analytic {:.3e} fd {:.3e}", idx, grad_in.data()[idx], fd);
            }
        }
    }

    Ok(report)
}
