//! Soft-margin kernel SVM with a sequential-minimal-optimization trainer.

mod persist;
mod smo;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use persist::{decode_model, encode_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use smo::{dual_objective, train, train_detailed, TrainOutcome};

use crate::error::Error as CrateError;
use crate::model::{FeatureVector, LabeledExample, Prediction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvmError {
    #[error("invalid svm configuration: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    Empty,
    #[error("training set holds a single class")]
    SingleClass,
    #[error("non-finite feature value in example {index}")]
    NonFinite { index: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Linear,
    Rbf,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Linear => "linear",
            KernelKind::Rbf => "rbf",
        })
    }
}

impl FromStr for KernelKind {
    type Err = CrateError;

    fn from_str(s: &str) -> Result<Self, CrateError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(KernelKind::Linear),
            "rbf" | "gaussian" => Ok(KernelKind::Rbf),
            other => Err(CrateError::config(format!("unknown kernel '{other}'"))),
        }
    }
}

/// RBF width; `Auto` resolves to `1 / (dim * variance)` of the training
/// feature values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Auto,
    Value(f64),
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Auto => f.write_str("auto"),
            Gamma::Value(g) => write!(f, "{g}"),
        }
    }
}

impl FromStr for Gamma {
    type Err = CrateError;

    fn from_str(s: &str) -> Result<Self, CrateError> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") || s.eq_ignore_ascii_case("scale") {
            return Ok(Gamma::Auto);
        }
        let g: f64 = s
            .parse()
            .map_err(|e| CrateError::config(format!("bad gamma '{s}': {e}")))?;
        if !(g > 0.0 && g.is_finite()) {
            return Err(CrateError::config(format!("gamma must be positive, got {g}")));
        }
        Ok(Gamma::Value(g))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    pub kernel: KernelKind,
    pub c: f64,
    pub gamma: Gamma,
    /// KKT violation tolerance.
    pub tolerance: f64,
    /// Upper bound on full sweeps over the training set.
    pub max_passes: u32,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            kernel: KernelKind::Linear,
            c: 1.0,
            gamma: Gamma::Auto,
            tolerance: 1e-3,
            max_passes: 10,
        }
    }
}

impl SvmConfig {
    pub fn linear(c: f64) -> Self {
        SvmConfig {
            kernel: KernelKind::Linear,
            c,
            ..SvmConfig::default()
        }
    }

    pub fn rbf(c: f64, gamma: Gamma) -> Self {
        SvmConfig {
            kernel: KernelKind::Rbf,
            c,
            gamma,
            ..SvmConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), SvmError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SvmError::InvalidConfig(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tolerance > 0.0) {
            return Err(SvmError::InvalidConfig("tolerance must be positive".into()));
        }
        if self.max_passes == 0 {
            return Err(SvmError::InvalidConfig("max_passes must be positive".into()));
        }
        if let Gamma::Value(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(SvmError::InvalidConfig(format!("gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }

    /// Resolve the kernel, computing the automatic RBF width from `examples`.
    pub fn resolve_kernel(&self, examples: &[LabeledExample]) -> Kernel {
        match (self.kernel, self.gamma) {
            (KernelKind::Linear, _) => Kernel::Linear,
            (KernelKind::Rbf, Gamma::Value(g)) => Kernel::Rbf { gamma: g },
            (KernelKind::Rbf, Gamma::Auto) => Kernel::Rbf {
                gamma: auto_gamma(examples),
            },
        }
    }
}

/// `1 / (dim * var)` over all feature values, variance floored at 1e-12.
pub fn auto_gamma(examples: &[LabeledExample]) -> f64 {
    let dim = examples.first().map_or(1, |e| e.features.len()).max(1);
    let n = examples.iter().map(|e| e.features.len()).sum::<usize>().max(1) as f64;
    let mean = examples.iter().flat_map(|e| e.features.0.iter()).sum::<f64>() / n;
    let var = examples
        .iter()
        .flat_map(|e| e.features.0.iter())
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    1.0 / (dim as f64 * var.max(1e-12))
}

/// A kernel with its parameters resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn kind(&self) -> KernelKind {
        match self {
            Kernel::Linear => KernelKind::Linear,
            Kernel::Rbf { .. } => KernelKind::Rbf,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            Kernel::Linear => 0.0,
            Kernel::Rbf { gamma } => *gamma,
        }
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            Kernel::Linear => u.iter().zip(v).map(|(a, b)| a * b).sum(),
            Kernel::Rbf { gamma } => {
                let sq: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * sq).exp()
            }
        }
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> Result<f64, SvmError> {
        if u.len() != v.len() {
            return Err(SvmError::DimensionMismatch {
                expected: u.len(),
                actual: v.len(),
            });
        }
        Ok(self.eval_unchecked(u, v))
    }
}

pub fn kernel_eval(kernel: &Kernel, u: &FeatureVector, v: &FeatureVector) -> Result<f64, SvmError> {
    kernel.eval(u.as_slice(), v.as_slice())
}

/// Trained classifier: support vectors with signed dual coefficients
/// (`alpha_i * y_i`) and a bias.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    kernel: Kernel,
    c: f64,
    bias: f64,
    dim: usize,
    /// Row-major, `dual_coefficients.len()` rows of `dim` values.
    support_vectors: Vec<f64>,
    dual_coefficients: Vec<f64>,
    /// Primal weights, only for the linear kernel.
    weights: Option<Vec<f64>>,
}

impl SvmModel {
    pub fn new(
        kernel: Kernel,
        c: f64,
        bias: f64,
        dim: usize,
        support_vectors: Vec<f64>,
        dual_coefficients: Vec<f64>,
    ) -> Result<Self, SvmError> {
        if dim == 0 {
            return Err(SvmError::Format("model dimension is zero".into()));
        }
        if support_vectors.len() != dim * dual_coefficients.len() {
            return Err(SvmError::Format(format!(
                "{} support-vector values for {} rows of dimension {dim}",
                support_vectors.len(),
                dual_coefficients.len()
            )));
        }
        let weights = matches!(kernel, Kernel::Linear).then(|| {
            let mut w = vec![0.0; dim];
            for (sv, &coef) in support_vectors.chunks_exact(dim).zip(&dual_coefficients) {
                for (wi, &x) in w.iter_mut().zip(sv) {
                    *wi += coef * x;
                }
            }
            w
        });
        Ok(SvmModel {
            kernel,
            c,
            bias,
            dim,
            support_vectors,
            dual_coefficients,
            weights,
        })
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_vector_count(&self) -> usize {
        self.dual_coefficients.len()
    }

    pub fn support_vectors(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.support_vectors.chunks_exact(self.dim)
    }

    pub fn dual_coefficients(&self) -> &[f64] {
        &self.dual_coefficients
    }

    pub(crate) fn raw_support_vectors(&self) -> &[f64] {
        &self.support_vectors
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Decision value without the dimension check.
    #[inline]
    pub fn decision_unchecked(&self, x: &[f64]) -> f64 {
        match &self.weights {
            Some(w) => w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.bias,
            None => {
                self.support_vectors
                    .chunks_exact(self.dim)
                    .zip(&self.dual_coefficients)
                    .map(|(sv, &coef)| coef * self.kernel.eval_unchecked(sv, x))
                    .sum::<f64>()
                    + self.bias
            }
        }
    }

    /// `sum_i coef_i K(sv_i, x) + bias`. For the linear kernel the sum is
    /// folded into primal weights.
    pub fn decision_value(&self, x: &FeatureVector) -> Result<f64, SvmError> {
        if x.len() != self.dim {
            return Err(SvmError::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(self.decision_unchecked(x.as_slice()))
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Prediction, SvmError> {
        self.decision_value(x).map(Prediction::from_decision)
    }

    /// Fraction of examples whose predicted class equals their label.
    pub fn accuracy(&self, examples: &[LabeledExample]) -> Result<f64, SvmError> {
        if examples.is_empty() {
            return Ok(1.0);
        }
        let mut correct = 0usize;
        for ex in examples {
            let p = self.predict(&ex.features)?;
            if p.is_match() == (ex.label == crate::model::Label::Match) {
                correct += 1;
            }
        }
        Ok(correct as f64 / examples.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Label;

    #[test]
    fn kernel_values() {
        let u = FeatureVector(vec![1.0, 2.0]);
        assert_eq!(kernel_eval(&Kernel::Linear, &u, &u).unwrap(), 5.0);
        assert_eq!(kernel_eval(&Kernel::Rbf { gamma: 3.0 }, &u, &u).unwrap(), 1.0);
        let k = kernel_eval(
            &Kernel::Rbf { gamma: 0.5 },
            &FeatureVector(vec![0.0, 0.0]),
            &FeatureVector(vec![1.0, 1.0]),
        )
        .unwrap();
        assert!((k - (-1.0f64).exp()).abs() < 1e-15);
        assert!((k - 0.3679).abs() < 1e-4);
        assert!(kernel_eval(&Kernel::Linear, &u, &FeatureVector(vec![1.0])).is_err());
    }

    #[test]
    fn zero_coefficient_model_returns_bias() {
        let m = SvmModel::new(Kernel::Linear, 1.0, 0.25, 2, vec![], vec![]).unwrap();
        assert_eq!(m.decision_value(&FeatureVector(vec![3.0, -4.0])).unwrap(), 0.25);
        let m = SvmModel::new(Kernel::Rbf { gamma: 1.0 }, 1.0, -0.5, 2, vec![], vec![]).unwrap();
        assert_eq!(
            m.predict(&FeatureVector(vec![3.0, -4.0])).unwrap(),
            Prediction::NonMatch
        );
        assert!(m.decision_value(&FeatureVector(vec![1.0])).is_err());
    }

    #[test]
    fn auto_gamma_matches_formula() {
        let ex = vec![
            LabeledExample::new(vec![0.0, 2.0], Label::Match),
            LabeledExample::new(vec![4.0, 2.0], Label::NonMatch),
        ];
        // values 0,2,4,2: mean 2, population variance 2
        assert_eq!(auto_gamma(&ex), 1.0 / (2.0 * 2.0));
        let flat = vec![LabeledExample::new(vec![1.0], Label::Match)];
        assert_eq!(auto_gamma(&flat), 1e12);
    }

    #[test]
    fn config_validation() {
        assert!(SvmConfig::linear(0.0).validate().is_err());
        assert!(SvmConfig::rbf(1.0, Gamma::Value(-1.0)).validate().is_err());
        assert!(SvmConfig {
            tolerance: 0.0,
            ..SvmConfig::default()
        }
        .validate()
        .is_err());
        assert!("poly".parse::<KernelKind>().is_err());
        assert_eq!("auto".parse::<Gamma>().unwrap(), Gamma::Auto);
        assert!("0".parse::<Gamma>().is_err());
    }
}
