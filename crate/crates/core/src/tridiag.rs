//! Thomas algorithm for tridiagonal and cyclic tridiagonal systems.

use crate::error::{Error, Result};

/// Tridiagonal matrix stored by diagonals.
///
/// `lower[i]` couples row `i` to column `i - 1` (`lower[0]` unused),
/// `upper[i]` couples row `i` to column `i + 1` (`upper[n-1]` unused).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// `alpha * I + beta * self`.
    pub fn shifted(&self, alpha: f64, beta: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|v| beta * v).collect(),
            diag: self.diag.iter().map(|v| alpha + beta * v).collect(),
            upper: self.upper.iter().map(|v| beta * v).collect(),
        }
    }

    /// Column sums `Σ_i A_{ik}`.
    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|k| {
                let mut s = self.diag[k];
                if k > 0 {
                    s += self.upper[k - 1];
                }
                if k + 1 < n {
                    s += self.lower[k + 1];
                }
                s
            })
            .collect()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut beta = self.diag[0];
        if beta == 0.0 {
            return Err(Error::SingularSystem { row: 0 });
        }
        c[0] = if n > 1 { self.upper[0] / beta } else { 0.0 };
        d[0] = rhs[0] / beta;
        for i in 1..n {
            beta = self.diag[i] - self.lower[i] * c[i - 1];
            if beta == 0.0 || !beta.is_finite() {
                return Err(Error::SingularSystem { row: i });
            }
            if i + 1 < n {
                c[i] = self.upper[i] / beta;
            }
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / beta;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(d)
    }
}

/// Cyclic tridiagonal matrix: a [`Tridiagonal`] plus the two corner entries
/// `corner_lower = A[0][n-1]` and `corner_upper = A[n-1][0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicTridiagonal {
    pub band: Tridiagonal,
    pub corner_lower: f64,
    pub corner_upper: f64,
}

impl CyclicTridiagonal {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.band.len();
        let mut y = self.band.apply(x);
        y[0] += self.corner_lower * x[n - 1];
        y[n - 1] += self.corner_upper * x[0];
        y
    }

    pub fn shifted(&self, alpha: f64, beta: f64) -> Self {
        Self {
            band: self.band.shifted(alpha, beta),
            corner_lower: beta * self.corner_lower,
            corner_upper: beta * self.corner_upper,
        }
    }

    /// Sherman–Morrison reduction to two tridiagonal solves.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.band.len();
        if n < 3 {
            return Err(Error::InvalidArgument("cyclic system needs n >= 3".into()));
        }
        let gamma = -self.band.diag[0];
        let mut modified = self.band.clone();
        modified.diag[0] -= gamma;
        modified.diag[n - 1] -= self.corner_upper * self.corner_lower / gamma;
        let x = modified.solve(rhs)?;
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = self.corner_upper;
        let z = modified.solve(&u)?;
        let v0 = 1.0;
        let vn = self.corner_lower / gamma;
        let num = v0 * x[0] + vn * x[n - 1];
        let den = 1.0 + v0 * z[0] + vn * z[n - 1];
        if den == 0.0 {
            return Err(Error::SingularSystem { row: 0 });
        }
        let f = num / den;
        Ok(x.iter().zip(z.iter()).map(|(xi, zi)| xi - f * zi).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> Tridiagonal {
        let mut t = Tridiagonal::zeros(n);
        for i in 0..n {
            t.diag[i] = 4.0 + i as f64 * 0.1;
            t.lower[i] = -1.0 - 0.05 * i as f64;
            t.upper[i] = -0.7;
        }
        t
    }

    #[test]
    fn thomas_inverts_apply() {
        let t = sample(9);
        let x: Vec<f64> = (0..9).map(|i| (i as f64).sin() + 2.0).collect();
        let b = t.apply(&x);
        let y = t.solve(&b).unwrap();
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn cyclic_inverts_apply() {
        let c = CyclicTridiagonal {
            band: sample(7),
            corner_lower: -0.3,
            corner_upper: -0.9,
        };
        let x: Vec<f64> = (0..7).map(|i| 1.0 + (i as f64).cos()).collect();
        let b = c.apply(&x);
        let y = c.solve(&b).unwrap();
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_reports_row() {
        let t = Tridiagonal::zeros(3);
        assert_eq!(
            t.solve(&[1.0, 1.0, 1.0]),
            Err(Error::SingularSystem { row: 0 })
        );
    }
}
