//! Symmetric banded storage with an in-place Cholesky factorization.

/// Lower band of a symmetric matrix: entry `(i, i - k)` lives at
/// `data[i * (bw + 1) + k]` for `0 <= k <= bw`.
#[derive(Debug, Clone)]
pub(crate) struct BandedSym {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn new(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// Adds `v` to entry `(i, j)`; only the lower triangle is stored, so
    /// symmetric pairs must be added once.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(r - c <= self.bw);
        self.data[r * (self.bw + 1) + (r - c)] += v;
    }

    #[inline]
    fn at(&self, i: usize, k: usize) -> f64 {
        self.data[i * (self.bw + 1) + k]
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.n).fold(0.0, |m, i| m.max(self.at(i, 0)))
    }

    pub fn shift_diagonal(&mut self, delta: f64) {
        for i in 0..self.n {
            self.data[i * (self.bw + 1)] += delta;
        }
    }

    /// Cholesky factor `L` (same layout), or `None` if a pivot is not positive.
    pub fn cholesky(&self) -> Option<Self> {
        let w = self.bw + 1;
        let mut l = self.clone();
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let mut sum = l.data[i * w + (i - j)];
                let plo = lo.max(j.saturating_sub(self.bw));
                for p in plo..j {
                    sum -= l.data[i * w + (i - p)] * l.data[j * w + (j - p)];
                }
                if j == i {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return None;
                    }
                    l.data[i * w] = sum.sqrt();
                } else {
                    l.data[i * w + (i - j)] = sum / l.data[j * w];
                }
            }
        }
        Some(l)
    }

    /// Solves `L Lᵀ x = rhs` with `self` holding the factor `L`.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_factored(&self, rhs: &[f64]) -> Vec<f64> {
        let w = self.bw + 1;
        let mut y = rhs.to_vec();
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = y[i];
            for p in lo..i {
                s -= self.data[i * w + (i - p)] * y[p];
            }
            y[i] = s / self.data[i * w];
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n.saturating_sub(1));
            let mut s = y[i];
            for p in i + 1..=hi {
                s -= self.data[p * w + (p - i)] * y[p];
            }
            y[i] = s / self.data[i * w];
        }
        y
    }
}
