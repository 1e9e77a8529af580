//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use splitlink::distance::edit_distance_chars;
use splitlink::model::{AttributeMapping, Label, LabeledExample, Record, ReferenceSet};
use splitlink::svm::{dual_objective, Kernel, SvmModel};

/// Levenshtein straight from its recursive definition.
pub fn naive(a: &[char], b: &[char]) -> usize {
    match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((ca, ra)), Some((cb, rb))) => {
            let sub = naive(ra, rb) + usize::from(ca != cb);
            sub.min(naive(ra, b) + 1).min(naive(a, rb) + 1)
        }
    }
}

pub fn random_string(rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(0..=8);
    (0..len).map(|_| b"ABCDE"[rng.gen_range(0..5)] as char).collect()
}

/// Project `v` onto `{0 <= a <= c, y.a = 0}` by bisection on the multiplier
/// of the equality constraint.
pub fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |tau: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - tau * yi).clamp(0.0, c)).collect() };
    let g = |tau: f64| -> f64 { at(tau).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // g is non-increasing in tau
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient ascent on the dual.
pub fn oracle(examples: &[LabeledExample], kernel: &Kernel, c: f64) -> f64 {
    let n = examples.len();
    let y: Vec<f64> = examples.iter().map(|e| e.label.sign()).collect();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    y[i] * y[j]
                        * kernel
                            .eval(examples[i].features.as_slice(), examples[j].features.as_slice())
                            .unwrap()
                })
                .collect()
        })
        .collect();
    let lipschitz = (0..n).map(|i| q[i][i]).sum::<f64>().max(1e-9);
    let step = 1.0 / lipschitz;
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..100_000 {
        let grad: Vec<f64> = (0..n)
            .map(|i| 1.0 - (0..n).map(|j| q[i][j] * z[j]).sum::<f64>())
            .collect();
        let next = project(
            &z.iter().zip(&grad).map(|(zi, gi)| zi + step * gi).collect::<Vec<_>>(),
            &y,
            c,
        );
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&a)
            .map(|(nx, ax)| nx + (t - 1.0) / t_next * (nx - ax))
            .collect();
        a = next;
        t = t_next;
    }
    dual_objective(examples, &a, kernel)
}

pub fn instance(rng: &mut ChaCha8Rng) -> Vec<LabeledExample> {
    let n = rng.gen_range(2..=6);
    let dim = rng.gen_range(1..=3);
    let mut out: Vec<LabeledExample> = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let label = if rng.gen_bool(0.5) {
                Label::Match
            } else {
                Label::NonMatch
            };
            LabeledExample::new(x, label)
        })
        .collect();
    out[0].label = Label::Match;
    out[1].label = Label::NonMatch;
    out
}

/// First KKT violation beyond `tol`, if any.
pub fn kkt_violation(
    examples: &[LabeledExample],
    alphas: &[f64],
    model: &SvmModel,
    c: f64,
    tol: f64,
) -> Option<String> {
    let sum: f64 = alphas.iter().zip(examples).map(|(a, e)| a * e.label.sign()).sum();
    if sum.abs() > 1e-6 * c {
        return Some(format!("sum y.alpha = {sum}"));
    }
    for (a, e) in alphas.iter().zip(examples) {
        if !(0.0..=c).contains(a) {
            return Some(format!("alpha {a} outside [0, {c}]"));
        }
        let m = e.label.sign() * model.decision_value(&e.features).unwrap();
        let bad = if *a == 0.0 {
            m < 1.0 - tol
        } else if *a == c {
            m > 1.0 + tol
        } else {
            (m - 1.0).abs() > tol
        };
        if bad {
            return Some(format!("alpha {a}, margin {m}"));
        }
    }
    None
}

/// Smashed groups recomputed from scratch with the row DP and f64 cosine.
pub fn resmash(r: &Record, rs: &ReferenceSet, mapping: &AttributeMapping) -> Vec<Vec<f64>> {
    mapping
        .pairs
        .iter()
        .map(|(attr, ref_attr)| {
            let v: Vec<char> = r.value(attr).unwrap().chars().collect();
            let col = rs.column_index(ref_attr).unwrap();
            rs.column(col)
                .map(|t| edit_distance_chars(&v, &t.chars().collect::<Vec<_>>()) as f64)
                .collect()
        })
        .collect()
}
