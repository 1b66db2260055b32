use serde::{Deserialize, Serialize};

/// Index `(a, b)` of the monomial integral `I_(a,b) = ∫ W1^a W2^b ∘ dW2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct MonomialIndex {
    pub a: u32,
    pub b: u32,
}

impl MonomialIndex {
    pub const fn new(a: u32, b: u32) -> Self {
        Self { a, b }
    }

    /// Power of `r` by which the integral rescales under Brownian scaling.
    pub const fn scaling_degree(self) -> u32 {
        self.a + self.b + 1
    }

    pub const fn total(self) -> u32 {
        self.a + self.b
    }
}

impl std::fmt::Display for MonomialIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.a, self.b)
    }
}

/// `f(a, b) = 2na + (2n+1)b`, which induces the total order ≺ on Δn.
pub fn order_key(idx: MonomialIndex, n: u32) -> u64 {
    let n = u64::from(n);
    2 * n * u64::from(idx.a) + (2 * n + 1) * u64::from(idx.b)
}

/// All `(a, b)` with `a + b ≤ n`, sorted by ≺.
pub fn simplex(n: u32) -> Vec<MonomialIndex> {
    let mut v: Vec<MonomialIndex> = (0..=n)
        .flat_map(|a| (0..=n - a).map(move |b| MonomialIndex::new(a, b)))
        .collect();
    v.sort_by_key(|i| order_key(*i, n));
    v
}

/// Indices with `a ≥ 1`, sorted by ≺. These are the integrals that need coupling.
pub fn coupled_indices(n: u32) -> Vec<MonomialIndex> {
    simplex(n).into_iter().filter(|i| i.a >= 1).collect()
}

/// The ≺-maximal element of Δn strictly below `idx`.
pub fn predecessor(idx: MonomialIndex, n: u32) -> Option<MonomialIndex> {
    let k = order_key(idx, n);
    simplex(n).into_iter().filter(|i| order_key(*i, n) < k).last()
}

/// Like [`predecessor`] but skipping indices with `a = 0`.
pub fn coupled_predecessor(idx: MonomialIndex, n: u32) -> Option<MonomialIndex> {
    let k = order_key(idx, n);
    coupled_indices(n).into_iter().filter(|i| order_key(*i, n) < k).last()
}

pub fn precedes_eq(x: MonomialIndex, y: MonomialIndex, n: u32) -> bool {
    order_key(x, n) <= order_key(y, n)
}
