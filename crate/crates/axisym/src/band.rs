//! Symmetric banded matrices and their Cholesky factors.

/// Symmetric matrix with half-bandwidth `p`, stored by rows of its lower band:
/// `data[i * (p + 1) + d] = A[i][i - d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymBand {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, p: usize) -> Self {
        SymBand { n, p, data: vec![0.0; n * (p + 1)] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.p
    }

    /// Entry `A[i][j]`, zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d > self.p {
            0.0
        } else {
            self.data[hi * (self.p + 1) + d]
        }
    }

    /// Adds `v` to `A[i][j]` (and implicitly `A[j][i]`); requires `i >= j`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i >= j && i - j <= self.p);
        self.data[i * (self.p + 1) + (i - j)] += v;
    }

    /// `A + s B` for matrices of equal shape.
    pub fn plus_scaled(&self, s: f64, other: &SymBand) -> SymBand {
        debug_assert_eq!((self.n, self.p), (other.n, other.p));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect();
        SymBand { n: self.n, p: self.p, data }
    }

    /// `y = A x` for a strided vector view given by accessor closures.
    pub fn mul_into(&self, x: impl Fn(usize) -> f64, mut y: impl FnMut(usize, f64)) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.p);
            let hi = (i + self.p).min(self.n - 1);
            let mut s = 0.0;
            for j in lo..=hi {
                s += self.get(i, j) * x(j);
            }
            y(i, s);
        }
    }

    /// In-place Cholesky factorization `A = L L^T`; fails on a non-positive pivot.
    pub fn cholesky(&self) -> Result<BandCholesky, usize> {
        let (n, p) = (self.n, self.p);
        let w = p + 1;
        let mut l = self.data.clone();
        for i in 0..n {
            let lo = i.saturating_sub(p);
            for j in lo..=i {
                let mut s = l[i * w + (i - j)];
                let klo = lo.max(j.saturating_sub(p));
                for k in klo..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(i);
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Ok(BandCholesky { n, p, l })
    }
}

/// Lower-triangular banded Cholesky factor.
#[derive(Clone, Debug)]
pub struct BandCholesky {
    n: usize,
    p: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, p) = (self.n, self.p);
        let w = p + 1;
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(p)..i {
                s -= self.l[i * w + (i - k)] * b[k];
            }
            b[i] = s / self.l[i * w];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..(i + p + 1).min(n) {
                s -= self.l[k * w + (k - i)] * b[k];
            }
            b[i] = s / self.l[i * w];
        }
    }
}
