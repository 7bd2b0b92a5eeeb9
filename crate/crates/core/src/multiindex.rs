//! Strictly increasing multi-indices, permutation signs, and the positive
//! coefficient families `c_{I,J}` that weight the (s,t)-form norms.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A strictly increasing tuple of positive integers.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::Precondition(format!(
                "multi-index entries must be >= 1: {indices:?}"
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Precondition(format!(
                "multi-index must be strictly increasing: {indices:?}"
            )));
        }
        Ok(MultiIndex(indices))
    }

    pub fn empty() -> Self {
        MultiIndex(Vec::new())
    }

    pub fn single(i: usize) -> Self {
        assert!(i >= 1, "multi-index entries must be >= 1");
        MultiIndex(vec![i])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn max_entry(&self) -> usize {
        self.0.last().copied().unwrap_or(0)
    }

    /// The index with entry `i` removed (no-op when absent).
    pub fn without(&self, i: usize) -> MultiIndex {
        MultiIndex(self.0.iter().copied().filter(|&j| j != i).collect())
    }

    /// Every strictly increasing index of length `len` with entries in `1..=max`.
    pub fn all(len: usize, max: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(len);
        fn rec(start: usize, len: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
            if cur.len() == len {
                out.push(MultiIndex(cur.clone()));
                return;
            }
            for i in start..=max {
                cur.push(i);
                rec(i + 1, len, max, cur, out);
                cur.pop();
            }
        }
        rec(1, len, max, &mut cur, &mut out);
        out
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, ")")
    }
}

/// Sign of the permutation that sorts `seq`, by inversion counting.
/// Returns 0 when `seq` has a repeated entry.
pub fn sort_sign(seq: &[usize]) -> i32 {
    let mut inversions = 0usize;
    for a in 0..seq.len() {
        for b in a + 1..seq.len() {
            if seq[a] == seq[b] {
                return 0;
            }
            if seq[a] > seq[b] {
                inversions += 1;
            }
        }
    }
    if inversions.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// `epsilon^K_{iL}`: zero unless `K = {i} ∪ L` as sets (so zero when `i ∈ L`),
/// otherwise the sign of the permutation sorting `(i, l_1, ..., l_t)` into `K`.
pub fn epsilon(i: usize, l: &MultiIndex, k: &MultiIndex) -> i32 {
    if k.len() != l.len() + 1 || l.contains(i) || !k.contains(i) {
        return 0;
    }
    if l.indices().iter().any(|&j| !k.contains(j)) {
        return 0;
    }
    let mut seq = Vec::with_capacity(k.len());
    seq.push(i);
    seq.extend_from_slice(l.indices());
    sort_sign(&seq)
}

/// Insert `i` into `j`: `(sign, Some(K))` with `K = sorted({i} ∪ J)`, or
/// `(0, None)` when `i` is already present.
pub fn insert(i: usize, j: &MultiIndex) -> (i32, Option<MultiIndex>) {
    if j.contains(i) {
        return (0, None);
    }
    let pos = j.indices().partition_point(|&x| x < i);
    let mut v = j.indices().to_vec();
    v.insert(pos, i);
    // moving i from the front to slot `pos` passes `pos` smaller entries
    let sign = if pos % 2 == 0 { 1 } else { -1 };
    (sign, Some(MultiIndex(v)))
}

/// Sign and sorted union for the wedge `dz_A ∧ dz_B` of two index sets;
/// `(0, None)` on overlap.
pub fn merge(a: &MultiIndex, b: &MultiIndex) -> (i32, Option<MultiIndex>) {
    let mut seq = a.indices().to_vec();
    seq.extend_from_slice(b.indices());
    let sign = sort_sign(&seq);
    if sign == 0 {
        return (0, None);
    }
    seq.sort_unstable();
    (sign, Some(MultiIndex(seq)))
}

pub type CoeffFn = dyn Fn(&MultiIndex, &MultiIndex) -> f64 + Send + Sync;

/// The positive numbers `c_{I,J}` weighting each component of a form.
#[derive(Clone)]
pub enum WeightFamily {
    Constant(f64),
    /// `c_{I,J} = alpha(I) * prod_{j in J} mu(j)`.
    Multiplicative {
        alpha: Arc<dyn Fn(&MultiIndex) -> f64 + Send + Sync>,
        mu: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
        label: String,
    },
    Custom {
        coeff: Arc<CoeffFn>,
        label: String,
    },
}

impl fmt::Debug for WeightFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightFamily::Constant(c) => write!(f, "constant({c})"),
            WeightFamily::Multiplicative { label, .. } => write!(f, "multiplicative({label})"),
            WeightFamily::Custom { label, .. } => write!(f, "custom({label})"),
        }
    }
}

impl Default for WeightFamily {
    fn default() -> Self {
        WeightFamily::Constant(1.0)
    }
}

impl WeightFamily {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::InvalidFamily(format!("constant {value} is not positive")));
        }
        Ok(WeightFamily::Constant(value))
    }

    pub fn multiplicative(
        label: impl Into<String>,
        alpha: impl Fn(&MultiIndex) -> f64 + Send + Sync + 'static,
        mu: impl Fn(usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        WeightFamily::Multiplicative {
            alpha: Arc::new(alpha),
            mu: Arc::new(mu),
            label: label.into(),
        }
    }

    pub fn custom(
        label: impl Into<String>,
        coeff: impl Fn(&MultiIndex, &MultiIndex) -> f64 + Send + Sync + 'static,
    ) -> Self {
        WeightFamily::Custom {
            coeff: Arc::new(coeff),
            label: label.into(),
        }
    }

    /// The family `2^{|I|+|J|} prod_{i in I} a_i^2 prod_{j in J} a_j^2` built from
    /// the Gaussian scales `a`.
    pub fn gaussian_scaled(a: impl Fn(usize) -> f64 + Send + Sync + 'static) -> Self {
        let a = Arc::new(a);
        let a2 = a.clone();
        WeightFamily::multiplicative(
            "2^{|I|+|J|} prod a_i^2 prod a_j^2",
            move |i: &MultiIndex| {
                i.indices()
                    .iter()
                    .map(|&k| 2.0 * a(k) * a(k))
                    .product::<f64>()
            },
            move |j| 2.0 * a2(j) * a2(j),
        )
    }

    pub fn coeff(&self, i: &MultiIndex, j: &MultiIndex) -> Result<f64> {
        let v = match self {
            WeightFamily::Constant(c) => *c,
            WeightFamily::Multiplicative { alpha, mu, .. } => {
                alpha(i) * j.indices().iter().map(|&k| mu(k)).product::<f64>()
            }
            WeightFamily::Custom { coeff, .. } => coeff(i, j),
        };
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidFamily(format!(
                "{self:?} returned c_{{{i},{j}}} = {v}"
            )));
        }
        Ok(v)
    }

    /// `c_{I,iL}`: zero when `i ∈ L`, else `c_{I, sorted({i} ∪ L)}`.
    pub fn contract_coeff(&self, i: &MultiIndex, idx: usize, l: &MultiIndex) -> Result<f64> {
        match insert(idx, l) {
            (_, None) => Ok(0.0),
            (_, Some(k)) => self.coeff(i, &k),
        }
    }
}

/// One violation of the multiplicative identity `c_{I,J} c_{I,J'} = c_{I,L} c_{I,K}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplicativeViolation {
    pub i: MultiIndex,
    pub j: MultiIndex,
    pub j_prime: MultiIndex,
    pub l: MultiIndex,
    pub k: MultiIndex,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct ConditionsReport {
    pub s: usize,
    pub t: usize,
    pub max_index: usize,
    /// max of `c_{I,iJ}/c_{I,J}` over the enumerated range with `i ∉ J`.
    pub c1_sup: f64,
    /// min of the same ratio; restricted to `i ∉ J` since the ratio is 0 otherwise.
    pub c0_inf: f64,
    pub multiplicative_ok: bool,
    pub violations: Vec<MultiplicativeViolation>,
    pub note: &'static str,
}

/// Enumerate the coefficient ratios and the multiplicative identity over all
/// indices with entries `<= max_index`.
///
/// The multiplicative identity is checked for `|J| = |J'| = t+1`, `L = J ∩ J'`,
/// `K = J ∪ J'` with `|L| = t`, `|K| = t+2`, to relative tolerance 1e-12.
pub fn check_conditions(
    family: &WeightFamily,
    max_index: usize,
    s: usize,
    t: usize,
) -> Result<ConditionsReport> {
    if max_index < s + t + 2 {
        return Err(Error::Precondition(format!(
            "max_index {max_index} < s+t+2 = {}",
            s + t + 2
        )));
    }
    let is = MultiIndex::all(s, max_index);
    let js = MultiIndex::all(t, max_index);
    let mut c1 = f64::NEG_INFINITY;
    let mut c0 = f64::INFINITY;
    for i in &is {
        for j in &js {
            let base = family.coeff(i, j)?;
            for idx in 1..=max_index {
                if j.contains(idx) {
                    continue;
                }
                let r = family.contract_coeff(i, idx, j)? / base;
                c1 = c1.max(r);
                c0 = c0.min(r);
            }
        }
    }

    let mut violations = Vec::new();
    let ks = MultiIndex::all(t + 2, max_index);
    for i in &is {
        for k in &ks {
            // J, J' are K with one entry removed; L is K with both removed.
            let kk = k.indices();
            for a in 0..kk.len() {
                for b in a + 1..kk.len() {
                    let j = k.without(kk[a]);
                    let jp = k.without(kk[b]);
                    let l = j.without(kk[b]);
                    let lhs = family.coeff(i, &j)? * family.coeff(i, &jp)?;
                    let rhs = family.coeff(i, &l)? * family.coeff(i, k)?;
                    if (lhs - rhs).abs() > 1e-12 * lhs.abs().max(rhs.abs()) {
                        violations.push(MultiplicativeViolation {
                            i: i.clone(),
                            j,
                            j_prime: jp,
                            l,
                            k: k.clone(),
                            lhs,
                            rhs,
                        });
                    }
                }
            }
        }
    }
    Ok(ConditionsReport {
        s,
        t,
        max_index,
        c1_sup: c1,
        c0_inf: c0,
        multiplicative_ok: violations.is_empty(),
        violations,
        note: "ratios c_{I,iJ}/c_{I,J} enumerated over i not in J only",
    })
}
