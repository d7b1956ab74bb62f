//! Multi-indices α ∈ ℕ₀ᴺ: orders, factorials, monomials, and the
//! componentwise partial order that drives the moment recursion.

use crate::Scalar;
use std::cmp::Ordering;
use std::fmt;

/// Largest per-index derivative order the kernel calculus supports.
///
/// The Hermite recurrence itself is stable far beyond this, but factorials
/// and double factorials are tabulated in `u64` and every shipped experiment
/// stays at |α| ≤ 6, so 8 is a comfortable hard cap.
pub const MAX_ORDER: u32 = 8;

/// A multi-index α = (α₁, …, α_N).
///
/// Ordered by (|α|, lexicographic), which is exactly the order in which the
/// moment recursion may be evaluated: every proper divisor of α sorts
/// strictly before α.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    entries: Vec<u32>,
}

impl MultiIndex {
    pub fn new(entries: &[u32]) -> Self {
        assert!(!entries.is_empty(), "multi-index needs at least one axis");
        MultiIndex {
            entries: entries.to_vec(),
        }
    }

    /// The zero index of the given dimension.
    pub fn zero(dim: usize) -> Self {
        MultiIndex {
            entries: vec![0; dim],
        }
    }

    /// The unit index e_axis.
    pub fn unit(dim: usize, axis: usize) -> Self {
        assert!(axis < dim);
        let mut entries = vec![0; dim];
        entries[axis] = 1;
        MultiIndex { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, axis: usize) -> u32 {
        self.entries[axis]
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    /// |α| = Σ αᵢ.
    pub fn order(&self) -> u32 {
        self.entries.iter().sum()
    }

    /// α! = Π αᵢ!.
    pub fn factorial(&self) -> u64 {
        self.entries.iter().map(|&k| factorial(k)).product()
    }

    /// Componentwise partial order α ≤ β.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.dim() == other.dim()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a <= b)
    }

    /// β − α when α ≤ β.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if !other.le(self) {
            return None;
        }
        Some(MultiIndex {
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// α + e_axis.
    pub fn plus_unit(&self, axis: usize) -> MultiIndex {
        let mut entries = self.entries.clone();
        entries[axis] += 1;
        MultiIndex { entries }
    }

    /// The monomial x^α.
    pub fn monomial<T: Scalar>(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.dim());
        let mut p = T::one();
        for (xi, &k) in x.iter().zip(&self.entries) {
            p = p * xi.powi(k as i32);
        }
        p
    }

    /// The proper lower set J(α) = { ρ : ρ ≤ α, ρ ≠ α }, sorted by
    /// (order, lexicographic).
    pub fn lower_set(&self) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut current = MultiIndex::zero(self.dim());
        loop {
            if current != *self {
                out.push(current.clone());
            }
            if !current.increment_within(self) {
                break;
            }
        }
        out.sort();
        out
    }

    /// All multi-indices of the given dimension with |α| ≤ `max_order`,
    /// sorted by (order, lexicographic).
    pub fn up_to(dim: usize, max_order: u32) -> Vec<MultiIndex> {
        let bound = MultiIndex {
            entries: vec![max_order; dim],
        };
        let mut out = Vec::new();
        let mut current = MultiIndex::zero(dim);
        loop {
            if current.order() <= max_order {
                out.push(current.clone());
            }
            if !current.increment_within(&bound) {
                break;
            }
        }
        out.sort();
        out
    }

    /// Odometer-style increment through the box {ρ : ρ ≤ bound}.
    fn increment_within(&mut self, bound: &MultiIndex) -> bool {
        for axis in 0..self.dim() {
            if self.entries[axis] < bound.entries[axis] {
                self.entries[axis] += 1;
                return true;
            }
            self.entries[axis] = 0;
        }
        false
    }

    /// Dash-joined component string, e.g. `2-0`, used in CSV exports.
    pub fn label(&self) -> String {
        self.entries
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| self.entries.cmp(&other.entries))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "α({})", self.label())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

pub(crate) fn factorial(k: u32) -> u64 {
    assert!(k <= 20, "factorial overflow");
    (1..=k as u64).product()
}

/// (k-1)!! with the convention (-1)!! = 1.
pub(crate) fn double_factorial(k: u32) -> u64 {
    let mut p = 1u64;
    let mut m = k;
    while m > 1 {
        p *= m as u64;
        m -= 2;
    }
    p
}

/// Binomial coefficient C(b, a) for a ≤ b.
pub(crate) fn binomial(b: u32, a: u32) -> u64 {
    debug_assert!(a <= b);
    factorial(b) / (factorial(a) * factorial(b - a))
}
