//! Platt's sequential minimal optimization.
//!
//! The dual is `max sum(a) - 1/2 sum_ij a_i a_j y_i y_j K_ij` subject to
//! `0 <= a_i <= C` and `sum(a_i y_i) = 0`. Errors `E_i = f(x_i) - y_i` are
//! cached for every example and updated after each successful step.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Kernel, SvmConfig, SvmError, SvmModel};
use crate::model::{Label, LabeledExample};
use crate::seed;

/// Relative precision below which an alpha update counts as no progress.
const ALPHA_EPS: f64 = 1e-9;
/// Hard cap on successful steps, per training example.
const MAX_STEPS_PER_EXAMPLE: usize = 2000;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SvmModel,
    /// One multiplier per training example, in input order.
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub steps: usize,
    pub full_sweeps: u32,
    pub converged: bool,
}

struct Solver<'a> {
    x: &'a [f64],
    dim: usize,
    y: Vec<f64>,
    kernel: Kernel,
    c: f64,
    tol: f64,
    alpha: Vec<f64>,
    errors: Vec<f64>,
    bias: f64,
    rng: ChaCha8Rng,
    steps: usize,
}

impl Solver<'_> {
    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    fn k(&self, i: usize, j: usize) -> f64 {
        self.kernel.eval_unchecked(self.row(i), self.row(j))
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn is_free(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    /// Dual objective contribution along the (i1, i2) line, up to a constant.
    fn line_objective(&self, i1: usize, i2: usize, a1: f64, a2: f64, k11: f64, k12: f64, k22: f64) -> f64 {
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (old1, old2) = (self.alpha[i1], self.alpha[i2]);
        // v_i = f(x_i) - b - contributions of i1 and i2
        let v1 = self.errors[i1] + y1 - self.bias - old1 * y1 * k11 - old2 * y2 * k12;
        let v2 = self.errors[i2] + y2 - self.bias - old1 * y1 * k12 - old2 * y2 * k22;
        a1 + a2 - 0.5 * k11 * a1 * a1 - 0.5 * k22 * a2 * a2 - y1 * y2 * k12 * a1 * a2 - y1 * a1 * v1 - y2 * a2 * v2
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (alph1, alph2) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.errors[i1], self.errors[i2]);
        let s = y1 * y2;
        let c = self.c;
        let (lo, hi) = if y1 != y2 {
            ((alph2 - alph1).max(0.0), (c + alph2 - alph1).min(c))
        } else {
            ((alph1 + alph2 - c).max(0.0), (alph1 + alph2).min(c))
        };
        if hi - lo <= 1e-14 * c {
            return false;
        }
        let k11 = self.k(i1, i1);
        let k12 = self.k(i1, i2);
        let k22 = self.k(i2, i2);
        let eta = k11 + k22 - 2.0 * k12;

        let mut a2 = if eta > 0.0 {
            (alph2 + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            let obj = |a2: f64| {
                let a1 = alph1 + s * (alph2 - a2);
                self.line_objective(i1, i2, a1, a2, k11, k12, k22)
            };
            let (lobj, hobj) = (obj(lo), obj(hi));
            if lobj > hobj + ALPHA_EPS {
                lo
            } else if hobj > lobj + ALPHA_EPS {
                hi
            } else {
                alph2
            }
        };
        if a2 < 1e-12 * c {
            a2 = 0.0;
        } else if a2 > c * (1.0 - 1e-12) {
            a2 = c;
        }
        if (a2 - alph2).abs() < ALPHA_EPS * (a2 + alph2 + ALPHA_EPS) {
            return false;
        }
        let mut a1 = alph1 + s * (alph2 - a2);
        if a1 < 1e-12 * c {
            a1 = 0.0;
        } else if a1 > c * (1.0 - 1e-12) {
            a1 = c;
        }

        let d1 = y1 * (a1 - alph1);
        let d2 = y2 * (a2 - alph2);
        let b1 = self.bias - e1 - d1 * k11 - d2 * k12;
        let b2 = self.bias - e2 - d1 * k12 - d2 * k22;
        let new_bias = if a1 > 0.0 && a1 < c {
            b1
        } else if a2 > 0.0 && a2 < c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = new_bias - self.bias;

        for k in 0..self.n() {
            let kk1 = self.k(i1, k);
            let kk2 = self.k(i2, k);
            self.errors[k] += d1 * kk1 + d2 * kk2 + db;
        }
        self.alpha[i1] = a1;
        self.alpha[i2] = a2;
        self.bias = new_bias;
        self.steps += 1;
        true
    }

    /// Final bias from the KKT conditions: the mean over free examples, or,
    /// when every multiplier sits at a bound, the middle of the feasible
    /// interval. The incremental pair update does not guarantee either.
    fn settle_bias(&mut self) {
        let n = self.n();
        // g_i = f(x_i) - b
        let g: Vec<f64> = (0..n).map(|i| self.errors[i] + self.y[i] - self.bias).collect();
        let free: Vec<usize> = (0..n).filter(|&i| self.is_free(i)).collect();
        if !free.is_empty() {
            self.bias = free.iter().map(|&i| self.y[i] - g[i]).sum::<f64>() / free.len() as f64;
        } else {
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for i in 0..n {
                let edge = self.y[i] - g[i];
                let at_zero = self.alpha[i] == 0.0;
                // y = +1: a = 0 needs b >= edge, a = C needs b <= edge; mirrored for y = -1
                if at_zero == (self.y[i] > 0.0) {
                    lo = lo.max(edge);
                } else {
                    hi = hi.min(edge);
                }
            }
            self.bias = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo,
                (false, true) => hi,
                (false, false) => self.bias,
            };
        }
        for i in 0..n {
            self.errors[i] = g[i] + self.bias - self.y[i];
        }
    }

    fn examine(&mut self, i2: usize) -> bool {
        let y2 = self.y[i2];
        let alph2 = self.alpha[i2];
        let e2 = self.errors[i2];
        let r2 = e2 * y2;
        let violates = (r2 < -self.tol && alph2 < self.c) || (r2 > self.tol && alph2 > 0.0);
        if !violates {
            return false;
        }
        let n = self.n();

        // Second-choice heuristic: largest |E1 - E2| among free examples.
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if self.is_free(i) && i != i2 {
                let gap = (self.errors[i] - e2).abs();
                if best.is_none_or(|(_, g)| gap > g) {
                    best = Some((i, gap));
                }
            }
        }
        if let Some((i1, _)) = best {
            if self.take_step(i1, i2) {
                return true;
            }
        }

        let start = self.rng.gen_range(0..n);
        for off in 0..n {
            let i1 = (start + off) % n;
            if self.is_free(i1) && self.take_step(i1, i2) {
                return true;
            }
        }
        let start = self.rng.gen_range(0..n);
        for off in 0..n {
            let i1 = (start + off) % n;
            if self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }
}

fn validate(examples: &[LabeledExample]) -> Result<usize, SvmError> {
    let first = examples.first().ok_or(SvmError::Empty)?;
    let dim = first.features.len();
    if dim == 0 {
        return Err(SvmError::DimensionMismatch { expected: 1, actual: 0 });
    }
    let mut pos = false;
    let mut neg = false;
    for (index, ex) in examples.iter().enumerate() {
        if ex.features.len() != dim {
            return Err(SvmError::DimensionMismatch {
                expected: dim,
                actual: ex.features.len(),
            });
        }
        if ex.features.0.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::NonFinite { index });
        }
        match ex.label {
            Label::Match => pos = true,
            Label::NonMatch => neg = true,
        }
    }
    if !(pos && neg) {
        return Err(SvmError::SingleClass);
    }
    Ok(dim)
}

/// Train and keep the per-example multipliers.
pub fn train_detailed(examples: &[LabeledExample], cfg: &SvmConfig, seed: u64) -> Result<TrainOutcome, SvmError> {
    cfg.validate()?;
    let dim = validate(examples)?;
    let kernel = cfg.resolve_kernel(examples);
    let x: Vec<f64> = examples.iter().flat_map(|e| e.features.0.iter().copied()).collect();
    let y: Vec<f64> = examples.iter().map(|e| e.label.sign()).collect();
    let n = y.len();
    let mut solver = Solver {
        x: &x,
        dim,
        errors: y.iter().map(|v| -v).collect(),
        y,
        kernel,
        c: cfg.c,
        tol: cfg.tolerance,
        alpha: vec![0.0; n],
        bias: 0.0,
        rng: seed::rng(seed, "smo", 0),
        steps: 0,
    };
    let max_steps = MAX_STEPS_PER_EXAMPLE.saturating_mul(n).max(100_000);

    let mut examine_all = true;
    let mut full_sweeps = 0u32;
    let mut converged = false;
    loop {
        let mut changed = 0usize;
        if examine_all {
            if full_sweeps >= cfg.max_passes {
                break;
            }
            full_sweeps += 1;
            for i in 0..n {
                changed += usize::from(solver.examine(i));
            }
        } else {
            for i in 0..n {
                if solver.is_free(i) {
                    changed += usize::from(solver.examine(i));
                }
            }
        }
        if solver.steps >= max_steps {
            log::warn!("smo stopped after {} steps without converging", solver.steps);
            break;
        }
        if examine_all {
            if changed == 0 {
                converged = true;
                break;
            }
            examine_all = false;
        } else if changed == 0 {
            examine_all = true;
        }
    }

    solver.settle_bias();

    let mut svs = Vec::new();
    let mut coefs = Vec::new();
    for i in 0..n {
        if solver.alpha[i] > 0.0 {
            svs.extend_from_slice(solver.row(i));
            coefs.push(solver.alpha[i] * solver.y[i]);
        }
    }
    let model = SvmModel::new(kernel, cfg.c, solver.bias, dim, svs, coefs)?;
    Ok(TrainOutcome {
        model,
        bias: solver.bias,
        steps: solver.steps,
        full_sweeps,
        converged,
        alphas: solver.alpha,
    })
}

/// Deterministic given `(examples, cfg, seed)`: the seed only drives the
/// random starting points of the second-choice scans.
pub fn train(examples: &[LabeledExample], cfg: &SvmConfig, seed: u64) -> Result<SvmModel, SvmError> {
    train_detailed(examples, cfg, seed).map(|o| o.model)
}

/// Dual objective `sum(a) - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)`.
pub fn dual_objective(examples: &[LabeledExample], alphas: &[f64], kernel: &Kernel) -> f64 {
    let mut quad = 0.0;
    for (i, ei) in examples.iter().enumerate() {
        for (j, ej) in examples.iter().enumerate() {
            quad += alphas[i]
                * alphas[j]
                * ei.label.sign()
                * ej.label.sign()
                * kernel.eval_unchecked(ei.features.as_slice(), ej.features.as_slice());
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}
