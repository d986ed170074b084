//! Truncated Gaussian mixtures: density, rejection sampling and raw moments.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::gauss_legendre_on;
use crate::multi_index::MultiIndexSet;

const MAX_REJECTIONS: u64 = 1_000_000;
// integration range is clipped to this many marginal standard deviations
const SIGMA_CLIP: f64 = 14.0;

/// Serializable description of one mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<ComponentSpec>,
}

#[derive(Debug, Clone)]
struct Component {
    spec: ComponentSpec,
    chol: DMatrix<f64>,
    precision: DMatrix<f64>,
    // log of the normal density's normalizing constant
    log_norm: f64,
    mass: f64,
}

/// Weighted sum of box-truncated correlated normals.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MixtureSpec", into = "MixtureSpec")]
pub struct TruncatedGaussianMixture {
    dim: usize,
    components: Vec<Component>,
}

impl TryFrom<MixtureSpec> for TruncatedGaussianMixture {
    type Error = Error;
    fn try_from(s: MixtureSpec) -> Result<Self> {
        TruncatedGaussianMixture::new(s.components)
    }
}

impl From<TruncatedGaussianMixture> for MixtureSpec {
    fn from(m: TruncatedGaussianMixture) -> Self {
        m.spec()
    }
}

/// Raw moments `E[ξ^γ]` for every `|γ| ≤ order`.
#[derive(Debug, Clone)]
pub struct Moments {
    pub set: MultiIndexSet,
    pub values: Vec<f64>,
}

impl Moments {
    pub fn get(&self, gamma: &[u32]) -> Option<f64> {
        self.set.position(gamma).map(|i| self.values[i])
    }
}

impl TruncatedGaussianMixture {
    pub fn new(components: Vec<ComponentSpec>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidModel("mixture has no components".into()));
        }
        let dim = components[0].mean.len();
        if dim == 0 {
            return Err(Error::InvalidModel("zero-dimensional mixture".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if components.iter().any(|c| !(c.weight >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "weights must be nonnegative and sum to 1 (sum {total})"
            )));
        }
        let mut built = Vec::with_capacity(components.len());
        for (k, spec) in components.into_iter().enumerate() {
            built.push(Component::new(k, dim, spec)?);
        }
        Ok(TruncatedGaussianMixture {
            dim,
            components: built,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> MixtureSpec {
        MixtureSpec {
            components: self.components.iter().map(|c| c.spec.clone()).collect(),
        }
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Truncation box of component `k` as per-coordinate intervals.
    pub fn component_box(&self, k: usize) -> Vec<(f64, f64)> {
        let s = &self.components[k].spec;
        s.lower.iter().copied().zip(s.upper.iter().copied()).collect()
    }

    /// Boxes of all components with nonzero weight.
    pub fn support_boxes(&self) -> Vec<Vec<(f64, f64)>> {
        (0..self.components.len())
            .filter(|&k| self.components[k].spec.weight > 0.0)
            .map(|k| self.component_box(k))
            .collect()
    }

    /// Smallest box containing every component box.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|j| {
                let lo = self
                    .components
                    .iter()
                    .map(|c| c.spec.lower[j])
                    .fold(f64::INFINITY, f64::min);
                let hi = self
                    .components
                    .iter()
                    .map(|c| c.spec.upper[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            })
            .collect()
    }

    /// Center and half-width of the bounding box.
    pub fn standard_frame(&self) -> (Vec<f64>, Vec<f64>) {
        let bb = self.bounding_box();
        (
            bb.iter().map(|(a, b)| 0.5 * (a + b)).collect(),
            bb.iter().map(|(a, b)| 0.5 * (b - a)).collect(),
        )
    }

    /// The law of `(ξ - center) / scale`, coordinatewise.
    pub fn standardized(&self, center: &[f64], scale: &[f64]) -> Result<Self> {
        let comps = self
            .components
            .iter()
            .map(|c| {
                let s = &c.spec;
                let d = self.dim;
                ComponentSpec {
                    weight: s.weight,
                    mean: (0..d).map(|j| (s.mean[j] - center[j]) / scale[j]).collect(),
                    cov: (0..d)
                        .map(|i| (0..d).map(|j| s.cov[i][j] / (scale[i] * scale[j])).collect())
                        .collect(),
                    lower: (0..d).map(|j| (s.lower[j] - center[j]) / scale[j]).collect(),
                    upper: (0..d).map(|j| (s.upper[j] - center[j]) / scale[j]).collect(),
                }
            })
            .collect();
        TruncatedGaussianMixture::new(comps)
    }

    pub fn in_support(&self, point: &[f64]) -> bool {
        self.components
            .iter()
            .any(|c| c.spec.weight > 0.0 && c.contains(point))
    }

    /// Component box masses under the untruncated normals.
    pub fn masses(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.mass).collect()
    }

    pub fn pdf(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: point.len(),
            });
        }
        Ok(self
            .components
            .iter()
            .filter(|c| c.spec.weight > 0.0 && c.contains(point))
            .map(|c| c.spec.weight * c.log_density(point).exp() / c.mass)
            .sum())
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        let mut z = vec![0.0; self.dim];
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut k = self.components.len() - 1;
            let mut acc = 0.0;
            for (i, c) in self.components.iter().enumerate() {
                acc += c.spec.weight;
                if u < acc && c.spec.weight > 0.0 {
                    k = i;
                    break;
                }
            }
            let c = &self.components[k];
            let mut rejections = 0u64;
            loop {
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let p: Vec<f64> = (0..self.dim)
                    .map(|i| c.spec.mean[i] + (0..=i).map(|j| c.chol[(i, j)] * z[j]).sum::<f64>())
                    .collect();
                if c.contains(&p) {
                    out.push(p);
                    break;
                }
                rejections += 1;
                if rejections >= MAX_REJECTIONS {
                    return Err(Error::DegenerateBox {
                        component: k,
                        rejections,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Raw moments up to `total_order`, refined until successive node counts agree.
    pub fn raw_moments(&self, total_order: usize) -> Moments {
        let set = MultiIndexSet::total_order(self.dim, total_order);
        let mut values = vec![0.0; set.len()];
        for c in &self.components {
            if c.spec.weight == 0.0 {
                continue;
            }
            let integrals = c.refined_integrals(total_order, 1e-12);
            let z = integrals[0];
            for (v, i) in values.iter_mut().zip(&integrals) {
                *v += c.spec.weight * i / z;
            }
        }
        values[0] = 1.0;
        Moments { set, values }
    }
}

impl Component {
    fn new(k: usize, dim: usize, spec: ComponentSpec) -> Result<Self> {
        let bad = |msg: String| Error::InvalidModel(format!("component {k}: {msg}"));
        if spec.mean.len() != dim || spec.lower.len() != dim || spec.upper.len() != dim {
            return Err(bad("vector lengths disagree with dimension".into()));
        }
        if spec.cov.len() != dim || spec.cov.iter().any(|r| r.len() != dim) {
            return Err(bad("covariance has wrong shape".into()));
        }
        if spec
            .mean
            .iter()
            .chain(&spec.lower)
            .chain(&spec.upper)
            .chain(spec.cov.iter().flatten())
            .any(|v| v.is_nan())
        {
            return Err(bad("NaN entry".into()));
        }
        for j in 0..dim {
            if !(spec.lower[j] < spec.upper[j]) {
                return Err(bad(format!("lower >= upper in coordinate {j}")));
            }
        }
        let cov = DMatrix::from_fn(dim, dim, |i, j| spec.cov[i][j]);
        let tol = 1e-12 * cov.amax().max(1e-300);
        for i in 0..dim {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > tol {
                    return Err(bad("covariance not symmetric".into()));
                }
            }
        }
        let eig = cov.clone().symmetric_eigenvalues();
        if eig.iter().any(|&e| !(e > 0.0)) {
            return Err(bad("covariance not positive definite".into()));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| bad("covariance not positive definite".into()))?;
        let l = chol.l();
        let precision = chol.inverse();
        let log_det: f64 = (0..dim).map(|i| 2.0 * l[(i, i)].ln()).sum();
        let log_norm = -0.5 * (dim as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        let mut c = Component {
            spec,
            chol: l,
            precision,
            log_norm,
            mass: 1.0,
        };
        c.mass = c.refined_integrals(0, 1e-12)[0];
        if !(c.mass > 0.0) {
            return Err(bad("truncation box carries no probability mass".into()));
        }
        Ok(c)
    }

    fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.spec.lower.iter().zip(&self.spec.upper))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    fn log_density(&self, p: &[f64]) -> f64 {
        let y = DVector::from_iterator(p.len(), p.iter().zip(&self.spec.mean).map(|(a, m)| a - m));
        self.log_norm - 0.5 * (y.transpose() * &self.precision * &y)[(0, 0)]
    }

    fn integration_box(&self) -> Vec<(f64, f64)> {
        (0..self.spec.mean.len())
            .map(|j| {
                let s = self.spec.cov[j][j].sqrt();
                let m = self.spec.mean[j];
                let a = self.spec.lower[j].max(m - SIGMA_CLIP * s);
                let b = self.spec.upper[j].min(m + SIGMA_CLIP * s);
                if a < b {
                    (a, b)
                } else {
                    (self.spec.lower[j], self.spec.upper[j])
                }
            })
            .collect()
    }

    /// `∫_box ξ^γ N(ξ) dξ` for all `|γ| ≤ order`, doubling node counts from 16.
    fn refined_integrals(&self, order: usize, rtol: f64) -> Vec<f64> {
        let d = self.spec.mean.len();
        let max_nodes = node_cap(d);
        let bx = self.integration_box();
        let radius = bx
            .iter()
            .map(|(a, b)| a.abs().max(b.abs()))
            .fold(0.0, f64::max)
            .max(1e-300);
        let set = MultiIndexSet::total_order(d, order);
        let mut n = 16;
        let mut prev = self.box_integrals(order, n, &bx);
        while n < max_nodes {
            n *= 2;
            let cur = self.box_integrals(order, n, &bx);
            let z = cur[0].abs();
            let done = (0..set.len()).all(|i| {
                let mag = (z * radius.powi(set.degree(i) as i32)).max(cur[i].abs());
                (cur[i] - prev[i]).abs() <= rtol * mag
            });
            prev = cur;
            if done {
                break;
            }
        }
        prev
    }

    fn box_integrals(&self, order: usize, n: usize, bx: &[(f64, f64)]) -> Vec<f64> {
        let d = self.spec.mean.len();
        let rules: Vec<(Vec<f64>, Vec<f64>)> =
            bx.iter().map(|&(a, b)| gauss_legendre_on(n, a, b)).collect();
        let sets: Vec<MultiIndexSet> = (0..d)
            .map(|j| MultiIndexSet::total_order(d - j, order))
            .collect();
        // combine[j]: (index in sets[j], leading exponent, index of the tail in sets[j+1])
        let combine: Vec<Vec<(usize, usize, usize)>> = (0..d.saturating_sub(1))
            .map(|j| {
                sets[j]
                    .iter()
                    .enumerate()
                    .map(|(i, g)| (i, g[0] as usize, sets[j + 1].position(&g[1..]).unwrap()))
                    .collect()
            })
            .collect();
        let ctx = Ctx {
            comp: self,
            rules: &rules,
            sets: &sets,
            combine: &combine,
            order,
        };
        let mut ys = Vec::with_capacity(d);
        let mut out = ctx.level(0, &mut ys, 0.0);
        let norm = self.log_norm.exp();
        for v in &mut out {
            *v *= norm;
        }
        out
    }
}

fn node_cap(d: usize) -> usize {
    let mut n = 16;
    while n < 1024 && ((2 * n) as f64).powi(d as i32) <= (1u64 << 25) as f64 {
        n *= 2;
    }
    n
}

struct Ctx<'a> {
    comp: &'a Component,
    rules: &'a [(Vec<f64>, Vec<f64>)],
    sets: &'a [MultiIndexSet],
    combine: &'a [Vec<(usize, usize, usize)>],
    order: usize,
}

impl Ctx<'_> {
    fn level(&self, j: usize, ys: &mut Vec<f64>, q: f64) -> Vec<f64> {
        let d = self.sets.len();
        let (nodes, weights) = &self.rules[j];
        let p = &self.comp.precision;
        let mu = self.comp.spec.mean[j];
        let mut out = vec![0.0; self.sets[j].len()];
        let mut pw = vec![1.0; self.order + 1];
        for (&x, &w) in nodes.iter().zip(weights) {
            let y = x - mu;
            let mut cross = 0.0;
            for (l, &yl) in ys.iter().enumerate() {
                cross += p[(j, l)] * yl;
            }
            let qn = q + p[(j, j)] * y * y + 2.0 * cross * y;
            for k in 1..=self.order {
                pw[k] = pw[k - 1] * x;
            }
            if j == d - 1 {
                let f = w * (-0.5 * qn).exp();
                for k in 0..=self.order {
                    out[k] += f * pw[k];
                }
            } else {
                ys.push(y);
                let sub = self.level(j + 1, ys, qn);
                ys.pop();
                for &(oi, k, ri) in &self.combine[j] {
                    out[oi] += w * pw[k] * sub[ri];
                }
            }
        }
        out
    }
}

/// Mixture used in the two-dimensional synthetic benchmark.
pub fn synthetic_mixture() -> TruncatedGaussianMixture {
    let cov = vec![vec![1e-2, -0.75e-2], vec![-0.75e-2, 1e-2]];
    TruncatedGaussianMixture::new(vec![
        ComponentSpec {
            weight: 0.5,
            mean: vec![0.1, -0.1],
            cov: cov.clone(),
            lower: vec![-0.2, -0.4],
            upper: vec![0.4, 0.2],
        },
        ComponentSpec {
            weight: 0.5,
            mean: vec![-0.1, 0.1],
            cov,
            lower: vec![-0.4, -0.2],
            upper: vec![0.2, 0.4],
        },
    ])
    .expect("valid synthetic mixture")
}

/// Equal-weight pair with means `±mean·1` and covariance `var·corr`; the first
/// component lives on `[lo, hi]^d`, the second on the mirrored box `[-hi, -lo]^d`.
pub(crate) fn mirrored_mixture(mean: f64, corr: &[Vec<f64>], var: f64, lo: f64, hi: f64) -> TruncatedGaussianMixture {
    let d = corr.len();
    let cov: Vec<Vec<f64>> = corr
        .iter()
        .map(|r| r.iter().map(|c| c * var).collect())
        .collect();
    TruncatedGaussianMixture::new(vec![
        ComponentSpec {
            weight: 0.5,
            mean: vec![mean; d],
            cov: cov.clone(),
            lower: vec![lo; d],
            upper: vec![hi; d],
        },
        ComponentSpec {
            weight: 0.5,
            mean: vec![-mean; d],
            cov,
            lower: vec![-hi; d],
            upper: vec![-lo; d],
        },
    ])
    .expect("valid mirrored mixture")
}
