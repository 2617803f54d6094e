//! One-dimensional hierarchical-basis decomposition.
//!
//! With `L` levels, indices that are multiples of `2^L` (and index 0) are
//! coarse nodes and keep their values. An index with `t < L` trailing zero
//! bits belongs to level `L - t` and stores the residual against the
//! average of its neighbours `i - 2^t` and `i + 2^t`, or against the left
//! neighbour alone at the right boundary. Coefficients are stored in place,
//! so `coef[i]` belongs to point `i`.

/// Arithmetic needed by the transform.
pub trait HbScalar: Copy {
    fn predict(a: Self, b: Option<Self>) -> Self;
    fn sub(self, other: Self) -> Self;
    fn add(self, other: Self) -> Self;
}

impl HbScalar for f64 {
    #[inline]
    fn predict(a: f64, b: Option<f64>) -> f64 {
        match b {
            Some(b) => 0.5 * (a + b),
            None => a,
        }
    }
    #[inline]
    fn sub(self, other: f64) -> f64 {
        self - other
    }
    #[inline]
    fn add(self, other: f64) -> f64 {
        self + other
    }
}

/// Integer variant with a floor average, used by the codec so that the
/// inverse is exact.
impl HbScalar for i64 {
    #[inline]
    fn predict(a: i64, b: Option<i64>) -> i64 {
        match b {
            Some(b) => (a + b) >> 1,
            None => a,
        }
    }
    #[inline]
    fn sub(self, other: i64) -> i64 {
        self - other
    }
    #[inline]
    fn add(self, other: i64) -> i64 {
        self + other
    }
}

/// Largest supported level count.
pub const MAX_LEVELS: u32 = 62;

/// `max(0, floor(log2(n - 1)) - 5)`: at most 64 coarse nodes.
pub fn default_levels(n: usize) -> u32 {
    if n <= 2 {
        return 0;
    }
    let log2 = usize::BITS - 1 - (n - 1).leading_zeros();
    log2.saturating_sub(5)
}

/// Level of index `i` under `levels` levels (0 is the coarsest).
#[inline]
pub fn level_of(i: usize, levels: u32) -> usize {
    let t = i.trailing_zeros();
    if i == 0 || t >= levels {
        0
    } else {
        (levels - t) as usize
    }
}

/// Number of indices on each level, coarsest first.
pub fn level_sizes(n: usize, levels: u32) -> Vec<usize> {
    let mut sizes = vec![0; levels as usize + 1];
    if n == 0 {
        return sizes;
    }
    // Multiples of 2^L in 0..n.
    sizes[0] = (n - 1) / (1usize << levels) + 1;
    for (l, size) in sizes.iter_mut().enumerate().skip(1) {
        let h = 1usize << (levels as usize - l);
        // Odd multiples of h below n.
        *size = if n > h { (n - 1 - h) / (2 * h) + 1 } else { 0 };
    }
    sizes
}

/// Indices of level `l`, ascending.
pub fn level_indices(n: usize, levels: u32, l: usize) -> impl Iterator<Item = usize> {
    let (start, step) = if l == 0 {
        (0, 1usize << levels)
    } else {
        let h = 1usize << (levels as usize - l);
        (h, 2 * h)
    };
    (start..n).step_by(step)
}

#[inline]
fn neighbours(m: usize, n: usize) -> (usize, Option<usize>) {
    let h = 1usize << m.trailing_zeros();
    let b = m + h;
    (m - h, (b < n).then_some(b))
}

pub fn hb_forward<T: HbScalar>(values: &[T], levels: u32) -> Vec<T> {
    assert!(levels <= MAX_LEVELS, "at most {MAX_LEVELS} levels");
    let n = values.len();
    let mut coef = values.to_vec();
    // Coarser nodes keep their values, so residuals can be taken against the
    // original array in any order.
    for l in 1..=levels as usize {
        for m in level_indices(n, levels, l) {
            let (a, b) = neighbours(m, n);
            coef[m] = values[m].sub(T::predict(values[a], b.map(|b| values[b])));
        }
    }
    coef
}

pub fn hb_inverse<T: HbScalar>(coef: &[T], levels: u32) -> Vec<T> {
    assert!(levels <= MAX_LEVELS, "at most {MAX_LEVELS} levels");
    let n = coef.len();
    let mut values = coef.to_vec();
    for l in 1..=levels as usize {
        for m in level_indices(n, levels, l) {
            let (a, b) = neighbours(m, n);
            values[m] = coef[m].add(T::predict(values[a], b.map(|b| values[b])));
        }
    }
    values
}
