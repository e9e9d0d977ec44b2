//! Small dense-band and Krylov kernels used by the elliptic tools and the
//! stepper.

use crate::error::{Error, Result};

/// General band matrix in LAPACK `gbtrf` layout: `kl` sub-diagonals, `ku`
/// super-diagonals, plus `kl` extra rows for pivoting fill-in.
#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row stride of the band storage.
    ld: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct BandLu {
    band: BandMatrix,
    pivots: Vec<usize>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ld,
            data: vec![0.0; ld * n],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        // column-major band: entry (i, j) at row kl + ku + i - j of column j
        j * self.ld + self.kl + self.ku + i - j
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i + self.ku >= j && j + self.kl >= i, "({i},{j}) outside band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + self.ku < j || j + self.kl < i {
            return 0.0;
        }
        self.data[self.slot(i, j)]
    }

    /// `|A| |x|`, entrywise absolute values.
    pub fn abs_matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku + 1).min(self.n);
            *yi = (lo..hi).map(|j| (self.get(i, j) * x[j]).abs()).sum();
        }
    }

    #[cfg(test)]
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku + 1).min(self.n);
            *yi = (lo..hi).map(|j| self.get(i, j) * x[j]).sum();
        }
    }

    /// LU factorisation with partial pivoting.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut pivots = vec![0; n];
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= f64::EPSILON * scale * n as f64 || best == 0.0 {
                return Err(Error::numerical("band LU", format!("singular pivot at column {k}")));
            }
            pivots[k] = p;
            let jmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.slot(k, j);
                    let b = self.slot(p, j);
                    self.data.swap(a, b);
                }
            }
            let piv = self.get(k, k);
            for i in k + 1..=last {
                let s = self.slot(i, k);
                let l = self.data[s] / piv;
                self.data[s] = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        let u = self.data[self.slot(k, j)];
                        if u != 0.0 {
                            let t = self.slot(i, j);
                            self.data[t] -= l * u;
                        }
                    }
                }
            }
        }
        Ok(BandLu { band: self, pivots })
    }
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = &self.band;
        let n = a.n;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + a.kl).min(n - 1) {
                    b[i] -= a.data[a.slot(i, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + a.kl + a.ku).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=jmax {
                s -= a.data[a.slot(k, j)] * b[j];
            }
            b[k] = s / a.data[a.slot(k, k)];
        }
    }
}

/// Preconditioned conjugate gradients for an operator that is self-adjoint
/// in the weighted inner product `<a, b> = Σ w a b`.
///
/// `project` is applied to every search direction and residual, which keeps
/// the iteration inside an invariant subspace (e.g. mean-zero fields).
/// Returns the iteration count.
#[allow(clippy::too_many_arguments)]
pub(crate) fn weighted_cg(
    weights: &[f64],
    apply: impl Fn(&[f64], &mut [f64]),
    precond: &[f64],
    project: impl Fn(&mut [f64]),
    rhs: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = rhs.len();
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (p, q))| w * p * q)
            .sum()
    };
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    for i in 0..n {
        r[i] = rhs[i] - ap[i];
    }
    project(&mut r);
    let bnorm = dot(rhs, rhs).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut z: Vec<f64> = r.iter().zip(precond).map(|(a, m)| a * m).collect();
    project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rnorm = dot(&r, &r).sqrt();
    let mut it = 0;
    while rnorm > rel_tol * bnorm {
        if it >= max_iter {
            return Err(Error::numerical(
                "conjugate gradients",
                format!("relative residual {:e} after {it} iterations", rnorm / bnorm),
            ));
        }
        apply(&p, &mut ap);
        project(&mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::numerical(
                "conjugate gradients",
                format!("non-positive curvature {pap:e} at iteration {it}"),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        project(&mut r);
        for i in 0..n {
            z[i] = r[i] * precond[i];
        }
        project(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rnorm = dot(&r, &r).sqrt();
        it += 1;
    }
    Ok(it)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_lu_matches_dense_solution() {
        // pentadiagonal, non-symmetric, needs pivoting in the first row
        let n = 12;
        let mut a = BandMatrix::zeros(n, 2, 2);
        for i in 0..n {
            a.add(i, i, if i == 0 { 1e-3 } else { 4.0 + i as f64 });
            if i + 1 < n {
                a.add(i, i + 1, -1.0);
                a.add(i + 1, i, 2.5);
            }
            if i + 2 < n {
                a.add(i, i + 2, 0.3);
                a.add(i + 2, i, -0.7);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x_true, &mut b);
        let lu = a.factor().unwrap();
        lu.solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_band_reported() {
        let a = BandMatrix::zeros(4, 1, 1);
        assert!(a.factor().is_err());
    }

    #[test]
    fn cg_solves_spd_system() {
        let n = 20;
        let w = vec![1.0; n];
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 3.0 * x[i] - l - r;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut x = vec![0.0; n];
        weighted_cg(&w, apply, &vec![1.0; n], |_| {}, &b, &mut x, 1e-13, 100).unwrap();
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
    }
}
