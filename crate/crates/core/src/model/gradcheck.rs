//! Central finite-difference check of the analytic gradients.
//!
//! The numerical side only ever calls the forward pass, so it is independent
//! of every backward routine it checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::network::{build, loss, loss_and_grad};
use crate::model::params::{ModelParams, ParamKind};
use crate::model::tensor::Tensor;

/// Denominator floor for the relative error, so that gradients that are zero
/// up to rounding are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub count: usize,
    pub max_rel_err: f64,
    pub max_abs_analytic: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub epsilon: f64,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: String,
    pub tensors: Vec<TensorCheck>,
}

impl GradcheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compare `analytic` against central differences of the training-mode loss
/// for every trainable element.
pub fn compare_gradients(
    params: &ModelParams,
    cfg: &ModelConfig,
    x: &Tensor,
    labels: &[u8],
    analytic: &ModelParams,
    epsilon: f64,
    seed: u64,
) -> Result<GradcheckReport> {
    if cfg.dropout_rate != 0.0 {
        return Err(Error::InvalidConfig(format!(
            "gradient check requires dropout_rate 0, got {}",
            cfg.dropout_rate
        )));
    }
    let mut probe = params.clone();
    let analytic_tensors = analytic.tensors();
    let n_tensors = analytic_tensors.len();
    let mut report = GradcheckReport {
        epsilon,
        checked: 0,
        max_rel_err: 0.0,
        worst: String::new(),
        tensors: Vec::new(),
    };
    for ti in 0..n_tensors {
        let (name, grad, kind) = &analytic_tensors[ti];
        if *kind != ParamKind::Trainable {
            continue;
        }
        let mut check = TensorCheck {
            name: name.clone(),
            count: grad.len(),
            max_rel_err: 0.0,
            max_abs_analytic: 0.0,
        };
        for k in 0..grad.len() {
            let original = probe.tensors()[ti].1.data[k];
            let mut eval = |v: f64| -> Result<f64> {
                probe.tensors_mut()[ti].1.data[k] = v;
                loss(&probe, cfg, x, labels, true, seed)
            };
            let plus = eval(original + epsilon)?;
            let minus = eval(original - epsilon)?;
            eval(original)?;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grad.data[k];
            let err = relative_error(a, numeric);
            check.max_abs_analytic = check.max_abs_analytic.max(a.abs());
            if err > check.max_rel_err {
                check.max_rel_err = err;
            }
            if err > report.max_rel_err || report.worst.is_empty() {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst = format!("{name}[{k}]");
            }
            report.checked += 1;
        }
        report.tensors.push(check);
    }
    Ok(report)
}

/// A random `[n, 1, C, W]` batch with random binary labels.
pub fn random_batch(cfg: &ModelConfig, n: usize, seed: u64) -> (Tensor, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = n * cfg.channels * cfg.window_samples;
    let x: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
    // Keep both classes present so the loss surface is not one-sided.
    if n >= 2 {
        labels[0] = 0;
        labels[1] = 1;
    }
    (
        Tensor::from_vec(&[n, 1, cfg.channels, cfg.window_samples], x),
        labels,
    )
}

/// Options for [`run_gradcheck`].
#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub cfg: ModelConfig,
    pub batch: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Added to one analytic gradient entry before comparison (fault injection).
    pub perturb: Option<f64>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            cfg: ModelConfig::tiny(),
            batch: 3,
            epsilon: 1e-5,
            seed: 0,
            perturb: None,
        }
    }
}

/// Build the network, draw a random batch and compare gradients.
pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    if opts.cfg.dropout_rate != 0.0 {
        return Err(Error::InvalidConfig(format!(
            "gradient check requires dropout_rate 0, got {}",
            opts.cfg.dropout_rate
        )));
    }
    let (mut params, _) = build(&opts.cfg, opts.seed)?;
    // Non-trivial batch-norm affine parameters exercise their gradients.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    for bn in [
        &mut params.temporal_bn,
        &mut params.spatial_bn,
        &mut params.fusion_bn,
    ] {
        for v in &mut bn.scale.data {
            *v = rng.random_range(0.5..1.5);
        }
        for v in &mut bn.shift.data {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    let (x, labels) = random_batch(&opts.cfg, opts.batch, opts.seed.wrapping_add(1));
    let mut analytic = loss_and_grad(&params, &opts.cfg, &x, &labels, opts.seed)?.grads;
    if let Some(delta) = opts.perturb {
        analytic.hidden.weight.data[0] += delta;
    }
    compare_gradients(&params, &opts.cfg, &x, &labels, &analytic, opts.epsilon, opts.seed)
}
