//! Soft-margin SVM trained by sequential minimal optimization.
//!
//! Working pairs are chosen as the maximal violating pair over the full
//! index set with a precomputed kernel matrix; optimization stops when the
//! violation drops below the KKT tolerance.

use serde::{Deserialize, Serialize};

use super::kernel::{KernelSpec, ResolvedKernel};
use crate::error::{Error, Result};

pub const DEFAULT_KKT_TOL: f64 = 1e-3;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: KernelSpec,
    pub c: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_tol() -> f64 {
    DEFAULT_KKT_TOL
}

impl SvmParams {
    pub fn new(kernel: KernelSpec, c: f64) -> Self {
        SvmParams { kernel, c, tol: DEFAULT_KKT_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// α_i·y_i for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub kernel: ResolvedKernel,
    pub c: f64,
}

impl SvmModel {
    /// Σ α_i y_i K(x_i, x) + b. Positive means PD.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        let d = self.support_vectors.first().map_or(x.len(), Vec::len);
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        Ok(self.support_vectors.iter().zip(&self.dual_coef).map(|(sv, a)| a * self.kernel.eval(sv, x)).sum::<f64>()
            + self.bias)
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.decision(x)? > 0.0))
    }
}

/// Full solver output, including every α for KKT inspection.
#[derive(Debug, Clone)]
pub struct SvmFit {
    pub model: SvmModel,
    pub alphas: Vec<f64>,
    /// Signed labels used by the solver (+1 = PD).
    pub signs: Vec<f64>,
    pub dual_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Rounding residue next to a bound would keep a vector in the working set
/// while its step is clamped to zero.
fn snap(a: f64, c: f64) -> f64 {
    if a < c * 1e-12 {
        0.0
    } else if a > c * (1.0 - 1e-12) {
        c
    } else {
        a
    }
}

fn signed(y: &[u8]) -> Vec<f64> {
    y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect()
}

pub fn train_svm(x: &[Vec<f64>], y: &[u8], params: &SvmParams) -> Result<SvmModel> {
    Ok(fit_svm(x, y, params)?.model)
}

pub fn fit_svm(x: &[Vec<f64>], y: &[u8], params: &SvmParams) -> Result<SvmFit> {
    params.kernel.validate()?;
    if !(params.c > 0.0) {
        return Err(Error::Config(format!("C must be > 0, got {}", params.c)));
    }
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::invalid("SVM needs matching, non-empty rows and labels"));
    }
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(Error::invalid("SVM training data must contain both classes"));
    }
    let n = x.len();
    let kernel = params.kernel.resolve(x);
    let s = signed(y);
    let gram: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| kernel.eval(&x[i], &x[j])).collect()).collect();
    let c = params.c;

    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα − eᵀα with Q_ij = s_i s_j K_ij
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, s: f64| (s > 0.0 && a < c) || (s < 0.0 && a > 0.0);
    let in_low = |a: f64, s: f64| (s > 0.0 && a > 0.0) || (s < 0.0 && a < c);

    let max_iter = 10_000_000usize.min(1000 * n + 100_000);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        let (mut up_max, mut low_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for t in 0..n {
            let v = -s[t] * grad[t];
            if in_up(alpha[t], s[t]) && v > up_max {
                up_max = v;
                i = t;
            }
            if in_low(alpha[t], s[t]) && v < low_min {
                low_min = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || up_max - low_min < params.tol {
            converged = true;
            break;
        }
        iterations += 1;

        // two-variable subproblem along s_i Δα_i = −s_j Δα_j
        let eta = (gram[i][i] + gram[j][j] - 2.0 * gram[i][j]).max(TAU);
        let (ai, aj) = (alpha[i], alpha[j]);
        // errors without bias: E_t = s_t · grad_t
        let (ei, ej) = (s[i] * grad[i], s[j] * grad[j]);
        let (lo, hi) = if s[i] != s[j] {
            ((aj - ai).max(0.0), (c + aj - ai).min(c))
        } else {
            ((ai + aj - c).max(0.0), (ai + aj).min(c))
        };
        let aj_new = (aj + s[j] * (ei - ej) / eta).clamp(lo, hi);
        let ai_new = snap((ai + s[i] * s[j] * (aj - aj_new)).clamp(0.0, c), c);
        let aj_new = snap(aj_new, c);
        let (di, dj) = (ai_new - ai, aj_new - aj);
        if di == 0.0 && dj == 0.0 {
            break;
        }
        alpha[i] = ai_new;
        alpha[j] = aj_new;
        for t in 0..n {
            grad[t] += s[t] * (s[i] * di * gram[t][i] + s[j] * dj * gram[t][j]);
        }
    }

    // bias: mean of −s_t·grad_t over free vectors, else midpoint of the bounds
    let free: Vec<f64> = (0..n).filter(|&t| alpha[t] > 0.0 && alpha[t] < c).map(|t| -s[t] * grad[t]).collect();
    let bias = if free.is_empty() {
        let (mut up_max, mut low_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for t in 0..n {
            let v = -s[t] * grad[t];
            if in_up(alpha[t], s[t]) {
                up_max = up_max.max(v);
            }
            if in_low(alpha[t], s[t]) {
                low_min = low_min.min(v);
            }
        }
        match (up_max.is_finite(), low_min.is_finite()) {
            (true, true) => (up_max + low_min) / 2.0,
            (true, false) => up_max,
            (false, true) => low_min,
            _ => 0.0,
        }
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };

    let dual_objective =
        alpha.iter().sum::<f64>() - 0.5 * (0..n).map(|t| alpha[t] * s[t] * (grad[t] + 1.0) * s[t]).sum::<f64>();

    let (support_vectors, dual_coef) =
        (0..n).filter(|&t| alpha[t] > 0.0).map(|t| (x[t].clone(), alpha[t] * s[t])).unzip();
    Ok(SvmFit {
        model: SvmModel { support_vectors, dual_coef, bias, kernel, c },
        alphas: alpha,
        signs: s,
        dual_objective,
        iterations,
        converged,
    })
}

/// Σα − ½ ΣΣ α_i α_j s_i s_j K(x_i, x_j)
pub fn dual_objective(x: &[Vec<f64>], signs: &[f64], alphas: &[f64], kernel: &ResolvedKernel) -> f64 {
    let n = x.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alphas[i] * alphas[j] * signs[i] * signs[j] * kernel.eval(&x[i], &x[j]);
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}
