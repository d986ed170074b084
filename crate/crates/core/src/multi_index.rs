//! Total-order multi-index sets in graded lexicographic order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// All exponent vectors of a given dimension with total degree at most `order`.
///
/// Ordered by degree, then lexicographically with the first coordinate
/// varying slowest and largest first: `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "RawSet", into = "RawSet")]
pub struct MultiIndexSet {
    dim: usize,
    order: usize,
    indices: Vec<Vec<u32>>,
    lookup: HashMap<Vec<u32>, usize>,
}

#[derive(Serialize, Deserialize)]
struct RawSet {
    dim: usize,
    order: usize,
}

impl From<RawSet> for MultiIndexSet {
    fn from(r: RawSet) -> Self {
        MultiIndexSet::total_order(r.dim, r.order)
    }
}

impl From<MultiIndexSet> for RawSet {
    fn from(m: MultiIndexSet) -> Self {
        RawSet { dim: m.dim, order: m.order }
    }
}

impl MultiIndexSet {
    pub fn total_order(dim: usize, order: usize) -> Self {
        let mut indices = Vec::with_capacity(count(dim, order));
        for deg in 0..=order {
            let mut cur = vec![0u32; dim];
            compositions(deg as u32, 0, &mut cur, &mut indices);
        }
        let lookup = indices
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        MultiIndexSet {
            dim,
            order,
            indices,
            lookup,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, i: usize) -> &[u32] {
        &self.indices[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.indices.iter().map(|v| v.as_slice())
    }

    pub fn position(&self, alpha: &[u32]) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.indices[i].iter().map(|&a| a as usize).sum()
    }

    /// Number of indices with degree at most `order` (a prefix of this set).
    pub fn prefix_len(&self, order: usize) -> usize {
        count(self.dim, order.min(self.order))
    }
}

fn compositions(rem: u32, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let dim = cur.len();
    if dim == 0 {
        if rem == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos == dim - 1 {
        cur[pos] = rem;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=rem).rev() {
        cur[pos] = k;
        compositions(rem - k, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// Binomial coefficient `C(dim + order, dim)`.
pub fn count(dim: usize, order: usize) -> usize {
    binomial(dim + order, dim)
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r as usize
}

/// Powers `x_j^k` for `k = 0..=order`, laid out as `[j * (order + 1) + k]`.
pub fn power_table(point: &[f64], order: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(point.len() * (order + 1), 1.0);
    for (j, &x) in point.iter().enumerate() {
        let row = &mut out[j * (order + 1)..(j + 1) * (order + 1)];
        for k in 1..=order {
            row[k] = row[k - 1] * x;
        }
    }
}

/// Evaluate every monomial of `set` at `point`.
pub fn monomials(set: &MultiIndexSet, point: &[f64]) -> Vec<f64> {
    let mut pw = Vec::new();
    let mut out = vec![0.0; set.len()];
    monomials_into(set, point, &mut pw, &mut out);
    out
}

pub fn monomials_into(set: &MultiIndexSet, point: &[f64], pw: &mut Vec<f64>, out: &mut [f64]) {
    let o = set.order();
    power_table(point, o, pw);
    for (i, a) in set.iter().enumerate() {
        let mut v = 1.0;
        for (j, &e) in a.iter().enumerate() {
            if e > 0 {
                v *= pw[j * (o + 1) + e as usize];
            }
        }
        out[i] = v;
    }
}

/// Monomials and their gradients; `grad` is laid out as `[i * dim + j]`.
pub fn monomials_with_grad(
    set: &MultiIndexSet,
    point: &[f64],
    pw: &mut Vec<f64>,
    val: &mut [f64],
    grad: &mut [f64],
) {
    let o = set.order();
    let d = set.dim();
    power_table(point, o, pw);
    for (i, a) in set.iter().enumerate() {
        let mut v = 1.0;
        for (j, &e) in a.iter().enumerate() {
            if e > 0 {
                v *= pw[j * (o + 1) + e as usize];
            }
        }
        val[i] = v;
        for j in 0..d {
            let ej = a[j] as usize;
            if ej == 0 {
                grad[i * d + j] = 0.0;
                continue;
            }
            let mut g = ej as f64 * pw[j * (o + 1) + ej - 1];
            for (l, &e) in a.iter().enumerate() {
                if l != j && e > 0 {
                    g *= pw[l * (o + 1) + e as usize];
                }
            }
            grad[i * d + j] = g;
        }
    }
}
