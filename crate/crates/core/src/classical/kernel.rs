use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Polynomial,
    Rbf,
}

/// Kernel width. `Scale` resolves to `1 / (n_features · var(X))` over the
/// flattened training matrix at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    Scale,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default = "default_gamma")]
    pub gamma: Gamma,
    #[serde(default = "default_coef0")]
    pub coef0: f64,
}

fn default_degree() -> u32 {
    3
}

fn default_gamma() -> Gamma {
    Gamma::Scale
}

fn default_coef0() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn linear() -> Self {
        KernelSpec { kind: KernelKind::Linear, degree: 3, gamma: Gamma::Scale, coef0: 1.0 }
    }

    pub fn rbf(gamma: Gamma) -> Self {
        KernelSpec { kind: KernelKind::Rbf, gamma, ..Self::linear() }
    }

    pub fn polynomial(degree: u32, gamma: Gamma) -> Self {
        KernelSpec { kind: KernelKind::Polynomial, degree, gamma, coef0: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if let Gamma::Value(g) = self.gamma {
            if !(g > 0.0) && self.kind != KernelKind::Linear {
                return Err(Error::Config(format!("kernel gamma must be > 0, got {g}")));
            }
        }
        if self.kind == KernelKind::Polynomial && self.degree < 2 {
            return Err(Error::Config(format!("polynomial degree must be >= 2, got {}", self.degree)));
        }
        Ok(())
    }

    /// Fixes `Gamma::Scale` against the training rows.
    pub fn resolve(&self, x: &[Vec<f64>]) -> ResolvedKernel {
        let gamma = match self.gamma {
            Gamma::Value(g) => g,
            Gamma::Scale => scale_gamma(x),
        };
        ResolvedKernel { kind: self.kind, degree: self.degree, gamma, coef0: self.coef0 }
    }
}

/// `1 / (n_features · variance of every entry of x)`, or 1 for constant data.
pub fn scale_gamma(x: &[Vec<f64>]) -> f64 {
    let d = x.first().map_or(1, Vec::len).max(1);
    let count = (x.len() * d) as f64;
    let mean = x.iter().flatten().sum::<f64>() / count;
    let var = x.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedKernel {
    pub kind: KernelKind,
    pub degree: u32,
    pub gamma: f64,
    pub coef0: f64,
}

impl ResolvedKernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => dot(a, b),
            KernelKind::Polynomial => (self.gamma * dot(a, b) + self.coef0).powi(self.degree as i32),
            KernelKind::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-self.gamma * d2).exp()
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
