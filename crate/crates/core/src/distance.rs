//! String and vector distances: unit-cost Levenshtein and cosine distance,
//! and the grouped distance between two smashed vectors.

use crate::error::{Error, Result};
use crate::model::{FeatureVector, SmashedVector};

/// Levenshtein distance with unit insert, delete and substitute costs,
/// computed over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    edit_distance_chars(&a, &b)
}

pub fn edit_distance_chars(a: &[char], b: &[char]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (i, &lc) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, &sc) in short.iter().enumerate() {
            let sub = diag + usize::from(lc != sc);
            diag = row[j + 1];
            row[j + 1] = sub.min(diag + 1).min(row[j] + 1);
        }
    }
    row[short.len()]
}

/// A string pre-processed for repeated distance queries against many texts.
///
/// Patterns up to 64 characters use the bit-parallel recurrence of Myers
/// (in Hyyrö's formulation for global distance); longer ones fall back to
/// the row DP.
#[derive(Debug, Clone)]
pub struct EditPattern {
    chars: Vec<char>,
    ascii: Option<Box<[u64; 128]>>,
    other: Vec<(char, u64)>,
}

impl EditPattern {
    pub fn new(pattern: &str) -> Self {
        let chars: Vec<char> = pattern.chars().collect();
        if chars.len() > 64 {
            return EditPattern {
                chars,
                ascii: None,
                other: Vec::new(),
            };
        }
        let mut ascii = Box::new([0u64; 128]);
        let mut other: Vec<(char, u64)> = Vec::new();
        for (i, &c) in chars.iter().enumerate() {
            let bit = 1u64 << i;
            if c.is_ascii() {
                ascii[c as usize] |= bit;
            } else if let Some(slot) = other.iter_mut().find(|(oc, _)| *oc == c) {
                slot.1 |= bit;
            } else {
                other.push((c, bit));
            }
        }
        EditPattern {
            chars,
            ascii: Some(ascii),
            other,
        }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    #[inline]
    fn peq(ascii: &[u64; 128], other: &[(char, u64)], c: char) -> u64 {
        if c.is_ascii() {
            ascii[c as usize]
        } else {
            other.iter().find(|(oc, _)| *oc == c).map_or(0, |(_, m)| *m)
        }
    }

    pub fn distance(&self, text: &[char]) -> usize {
        let Some(ascii) = self.ascii.as_deref() else {
            return edit_distance_chars(&self.chars, text);
        };
        let m = self.chars.len();
        if m == 0 {
            return text.len();
        }
        let last = 1u64 << (m - 1);
        let mut pv: u64 = if m == 64 { !0 } else { (1u64 << m) - 1 };
        let mut mv: u64 = 0;
        let mut score = m;
        for &c in text {
            let eq = Self::peq(ascii, &self.other, c);
            let xv = eq | mv;
            let xh = ((eq & pv).wrapping_add(pv) ^ pv) | eq;
            let mut ph = mv | !(xh | pv);
            let mut mh = pv & xh;
            if ph & last != 0 {
                score += 1;
            } else if mh & last != 0 {
                score -= 1;
            }
            ph = (ph << 1) | 1;
            mh <<= 1;
            pv = mh | !(xv | ph);
            mv = ph & xv;
        }
        score
    }
}

/// Cosine distance from a dot product and the two squared norms.
///
/// Both norms zero gives 0, exactly one zero gives 1. Parallel inputs
/// (Cauchy-Schwarz equality) give exactly 0.
#[inline]
pub fn cosine_from_parts(dot: f64, norm_sq_u: f64, norm_sq_v: f64) -> f64 {
    match (norm_sq_u == 0.0, norm_sq_v == 0.0) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return 1.0,
        _ => {}
    }
    let denom_sq = norm_sq_u * norm_sq_v;
    if dot > 0.0 && dot * dot == denom_sq {
        return 0.0;
    }
    (1.0 - dot / denom_sq.sqrt()).clamp(0.0, 2.0)
}

/// `1 - u.v / (|u||v|)`, in `[0, 2]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::LengthMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (&x, &y) in u.iter().zip(v) {
        dot += x * y;
        nu += x * x;
        nv += y * y;
    }
    Ok(cosine_from_parts(dot, nu, nv))
}

/// Exact integer dot product and squared norms of two distance groups.
#[inline]
pub fn integer_parts(u: &[u32], v: &[u32]) -> (u64, u64, u64) {
    u.iter().zip(v).fold((0u64, 0u64, 0u64), |(d, a, b), (&x, &y)| {
        let (x, y) = (u64::from(x), u64::from(y));
        (d + x * y, a + x * x, b + y * y)
    })
}

pub fn cosine_distance_u32(u: &[u32], v: &[u32]) -> f64 {
    let (dot, nu, nv) = integer_parts(u, v);
    cosine_from_parts(dot as f64, nu as f64, nv as f64)
}

/// Feature vector of per-group cosine distances between two smashed vectors.
pub fn group_distance(d1: &SmashedVector, d2: &SmashedVector) -> Result<FeatureVector> {
    if d1.group_count() != d2.group_count() {
        return Err(Error::GroupMismatch {
            index: d1.group_count().min(d2.group_count()),
            detail: format!("{} groups vs {} groups", d1.group_count(), d2.group_count()),
        });
    }
    if d1.group_len() != d2.group_len() {
        return Err(Error::GroupMismatch {
            index: 0,
            detail: format!("group length {} vs {}", d1.group_len(), d2.group_len()),
        });
    }
    Ok(FeatureVector(
        d1.groups()
            .zip(d2.groups())
            .map(|(u, v)| cosine_distance_u32(u, v))
            .collect(),
    ))
}
