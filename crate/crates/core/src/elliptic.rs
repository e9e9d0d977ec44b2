//! Inverse Neumann Laplacian on mean-zero fields, the dual "star" norm built
//! on it, and the elliptic mollifier `y0 ↦ (I - δΔ)⁻¹ y0`.

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::linalg::{weighted_cg, BandLu, BandMatrix};

/// Tolerance for tool-level solves.
pub const TOOL_TOL: f64 = 1e-12;
/// Tolerance used inside time stepping.
pub const STEPPING_TOL: f64 = 1e-10;

/// A field whose weighted mean vanishes, `|mean| ≤ 1e-10 (1 + ‖f‖_∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanZeroField(ScalarField);

impl MeanZeroField {
    pub fn new(grid: &Grid, f: ScalarField) -> Result<Self> {
        grid.check_field(&f)?;
        let m = grid.mean_slice(f.values());
        let linf = f.values().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if m.abs() > 1e-10 * (1.0 + linf) {
            return Err(Error::Precondition(format!("field mean {m:e} is not zero")));
        }
        Ok(Self(f))
    }

    /// Subtract the mean.
    pub fn project(grid: &Grid, f: &ScalarField) -> Result<Self> {
        grid.check_field(f)?;
        let m = grid.mean_slice(f.values());
        Ok(Self(f.map(|v| v - m)))
    }

    pub fn field(&self) -> &ScalarField {
        &self.0
    }

    pub fn into_field(self) -> ScalarField {
        self.0
    }
}

pub(crate) fn remove_mean(grid: &Grid, v: &mut [f64]) {
    let m = grid.mean_slice(v);
    v.iter_mut().for_each(|x| *x -= m);
}

/// Diagonal of `-Δ_h` (zero flux), inverted for Jacobi preconditioning.
fn jacobi(grid: &Grid, shift: f64, scale: f64) -> Vec<f64> {
    let mut d = vec![shift; grid.node_count()];
    grid.for_each_laplacian_entry(|i, j, v| {
        if i == j {
            d[i] -= scale * v;
        }
    });
    d.into_iter().map(|x| 1.0 / x).collect()
}

/// `𝒩v`: the mean-zero `u` with `-Δ_h u = v` and zero flux, by conjugate
/// gradients restricted to the mean-zero subspace.
pub fn neumann_inverse(grid: &Grid, v: &MeanZeroField, tol: f64) -> Result<MeanZeroField> {
    if !(tol > 0.0) {
        return Err(Error::Precondition("tolerance must be positive".into()));
    }
    grid.check_field(&v.0)?;
    let n = grid.node_count();
    let mut rhs = v.0.values().to_vec();
    remove_mean(grid, &mut rhs);
    let mut u = vec![0.0; n];
    let apply = |x: &[f64], y: &mut [f64]| {
        grid.laplacian_into(x, None, y);
        y.iter_mut().for_each(|t| *t = -*t);
    };
    let precond = jacobi(grid, 0.0, 1.0);
    weighted_cg(
        grid.weights(),
        apply,
        &precond,
        |x| remove_mean(grid, x),
        &rhs,
        &mut u,
        tol,
        20 * n + 100,
    )?;
    remove_mean(grid, &mut u);
    Ok(MeanZeroField(ScalarField::from_parts(grid.key(), u)))
}

/// `‖v‖_* = sqrt(‖∇𝒩(v - v_Ω)‖² + v_Ω²)`.
pub fn star_norm(grid: &Grid, v: &ScalarField) -> Result<f64> {
    let m = grid.mean(v)?;
    let centred = MeanZeroField::project(grid, v)?;
    let u = neumann_inverse(grid, &centred, TOOL_TOL)?;
    Ok((grid.grad_sq_slice(u.0.values()) + m * m).sqrt())
}

/// Direct solver for `-Δ_h u = v` on mean-zero data: pin node 0, factor the
/// band once, then remove the mean. Agrees with [`neumann_inverse`] to
/// round-off and is used for per-step monitors.
#[derive(Debug, Clone)]
pub struct PinnedNeumann {
    grid: Grid,
    lu: BandLu,
}

impl PinnedNeumann {
    pub fn new(grid: &Grid) -> Result<Self> {
        let n = grid.node_count();
        let b = grid.stencil_reach();
        let mut a = BandMatrix::zeros(n, b, b);
        grid.for_each_laplacian_entry(|i, j, v| {
            if i != 0 && j != 0 {
                a.add(i, j, -v);
            }
        });
        a.add(0, 0, 1.0);
        Ok(Self {
            grid: grid.clone(),
            lu: a.factor()?,
        })
    }

    pub(crate) fn solve_slice(&self, v: &[f64]) -> Vec<f64> {
        let mut u = v.to_vec();
        remove_mean(&self.grid, &mut u);
        u[0] = 0.0;
        self.lu.solve_in_place(&mut u);
        remove_mean(&self.grid, &mut u);
        u
    }

    pub fn solve(&self, v: &MeanZeroField) -> Result<MeanZeroField> {
        self.grid.check_field(&v.0)?;
        Ok(MeanZeroField(ScalarField::from_parts(
            self.grid.key(),
            self.solve_slice(v.0.values()),
        )))
    }

    pub(crate) fn star_norm_slice(&self, v: &[f64]) -> f64 {
        let m = self.grid.mean_slice(v);
        let u = self.solve_slice(v);
        (self.grid.grad_sq_slice(&u) + m * m).sqrt()
    }

    pub fn star_norm(&self, v: &ScalarField) -> Result<f64> {
        self.grid.check_field(v)?;
        Ok(self.star_norm_slice(v.values()))
    }
}

/// `y0,δ` solving `y - δΔ_h y = y0` with zero flux.
pub fn mollify_initial(grid: &Grid, y0: &ScalarField, delta: f64) -> Result<ScalarField> {
    grid.check_field(y0)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Precondition(format!("mollifier needs delta in (0,1), got {delta}")));
    }
    if !y0.is_finite() {
        return Err(Error::Precondition("initial datum is not finite".into()));
    }
    let n = grid.node_count();
    let values = if grid.dim() == 1 {
        let mut a = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            a.add(i, i, 1.0);
        }
        grid.for_each_laplacian_entry(|i, j, v| a.add(i, j, -delta * v));
        let lu = a.factor()?;
        let mut u = y0.values().to_vec();
        lu.solve_in_place(&mut u);
        u
    } else {
        let mut u = y0.values().to_vec();
        let apply = |x: &[f64], y: &mut [f64]| {
            grid.laplacian_into(x, None, y);
            for (yi, xi) in y.iter_mut().zip(x) {
                *yi = xi - delta * *yi;
            }
        };
        let precond = jacobi(grid, 1.0, delta);
        weighted_cg(grid.weights(), apply, &precond, |_| {}, y0.values(), &mut u, TOOL_TOL, 20 * n + 100)?;
        u
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("mollifier", "non-finite solution"));
    }
    Ok(ScalarField::from_parts(grid.key(), values))
}
