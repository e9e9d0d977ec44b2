//! Maximal monotone graphs `β = ∂β̂` on the real line, with resolvents
//! `J_ε = (I + εβ)⁻¹`, Yosida approximations `β_ε = (I - J_ε)/ε` and minimal
//! sections, plus the Lipschitz perturbation `π`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Absolute tolerance of every scalar resolvent solve.
pub const RESOLVENT_TOL: f64 = 1e-13;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum GraphKind {
    /// `β(r) = r|r|^{p-1}`, `β̂(r) = |r|^{p+1}/(p+1)`, `p` odd.
    Power(u32),
    /// `β = sinh`, `β̂ = cosh - 1`.
    Sinh,
    /// `β̂(r) = ρ|r|`; `β(0) = [-ρ, ρ]`.
    SignJump(f64),
    /// User supplied convex potential and its (single-valued) derivative.
    Custom { potential: ScalarFn, section: ScalarFn },
}

#[derive(Clone)]
pub struct MonotoneGraph {
    kind: GraphKind,
    name: String,
}

impl fmt::Debug for MonotoneGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonotoneGraph").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthReport {
    pub ok: bool,
    pub constant: f64,
}

impl MonotoneGraph {
    pub fn power(p: u32) -> Result<Self> {
        if p == 0 || p % 2 == 0 {
            return Err(Error::validation("graph", "power exponent must be an odd integer >= 1"));
        }
        Ok(Self {
            kind: GraphKind::Power(p),
            name: format!("power {p}"),
        })
    }

    pub fn sinh() -> Self {
        Self {
            kind: GraphKind::Sinh,
            name: "sinh".into(),
        }
    }

    pub fn sign_jump(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::validation("graph", "sign_jump height must be positive"));
        }
        Ok(Self {
            kind: GraphKind::SignJump(rho),
            name: format!("sign_jump {rho}"),
        })
    }

    /// Custom graph from a potential with `β̂(0) = 0` and its derivative.
    ///
    /// The potential is checked for non-negativity and midpoint convexity on
    /// `[-10, 10]`.
    pub fn custom(
        name: impl Into<String>,
        potential: impl Fn(f64) -> f64 + Send + Sync + 'static,
        section: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let g = Self {
            kind: GraphKind::Custom {
                potential: Arc::new(potential),
                section: Arc::new(section),
            },
            name: name.into(),
        };
        g.validate(-10.0, 10.0, 401)?;
        Ok(g)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &GraphKind {
        &self.kind
    }

    /// Sampled check of `β̂ ≥ 0`, `β̂(0) = 0`, convexity and `0 ∈ β(0)`.
    pub fn validate(&self, lo: f64, hi: f64, samples: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::validation("graph", format!("{}: {msg}", self.name)));
        if self.potential(0.0).abs() > 1e-12 {
            return bad("potential must vanish at 0".into());
        }
        if self.minimal_section(0.0).abs() > 1e-12 {
            return bad("0 must belong to beta(0)".into());
        }
        let samples = samples.max(3);
        let step = (hi - lo) / (samples - 1) as f64;
        for k in 0..samples - 1 {
            let a = lo + k as f64 * step;
            let b = a + step;
            let (fa, fb, fm) = (self.potential(a), self.potential(b), self.potential(0.5 * (a + b)));
            if !(fa.is_finite() && fb.is_finite()) {
                return bad(format!("potential not finite near {a}"));
            }
            if fa < -1e-12 {
                return bad(format!("potential negative at {a}"));
            }
            if fm > 0.5 * (fa + fb) + 1e-10 * (1.0 + fa.abs() + fb.abs()) {
                return bad(format!("potential not convex on [{a}, {b}]"));
            }
        }
        Ok(())
    }

    pub fn potential(&self, r: f64) -> f64 {
        match &self.kind {
            GraphKind::Power(p) => r.abs().powi(*p as i32 + 1) / (*p as f64 + 1.0),
            GraphKind::Sinh => {
                // cosh(r) - 1 without cancellation near 0
                let s = (0.5 * r).sinh();
                2.0 * s * s
            }
            GraphKind::SignJump(rho) => rho * r.abs(),
            GraphKind::Custom { potential, .. } => potential(r),
        }
    }

    /// Element of `β(r)` of least absolute value.
    pub fn minimal_section(&self, r: f64) -> f64 {
        match &self.kind {
            GraphKind::Power(p) => power_odd(r, *p),
            GraphKind::Sinh => r.sinh(),
            GraphKind::SignJump(rho) => {
                if r > 0.0 {
                    *rho
                } else if r < 0.0 {
                    -*rho
                } else {
                    0.0
                }
            }
            GraphKind::Custom { section, .. } => section(r),
        }
    }

    /// The interval `β(r)`.
    pub fn section_interval(&self, r: f64) -> (f64, f64) {
        match &self.kind {
            GraphKind::SignJump(rho) if r == 0.0 => (-*rho, *rho),
            _ => {
                let s = self.minimal_section(r);
                (s, s)
            }
        }
    }

    /// Derivative of the section where it is single valued and smooth;
    /// zero on the flat parts of a jump graph.
    pub fn section_derivative(&self, r: f64) -> f64 {
        match &self.kind {
            GraphKind::Power(1) => 1.0,
            GraphKind::Power(p) => *p as f64 * r.abs().powi(*p as i32 - 1),
            GraphKind::Sinh => r.cosh(),
            GraphKind::SignJump(_) => 0.0,
            GraphKind::Custom { section, .. } => {
                let h = 1e-6 * (1.0 + r.abs());
                (section(r + h) - section(r - h)) / (2.0 * h)
            }
        }
    }

    /// `J_ε(r)`: the unique `J` with `J + εβ(J) ∋ r`.
    pub fn resolvent(&self, eps: f64, r: f64) -> Result<f64> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Precondition(format!("resolvent needs eps > 0, got {eps}")));
        }
        if !r.is_finite() {
            return Err(Error::Precondition(format!("resolvent argument {r} is not finite")));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        match &self.kind {
            GraphKind::Power(1) => Ok(r / (1.0 + eps)),
            GraphKind::Power(3) => {
                // real root of ε J³ + J = r in hyperbolic form, free of cancellation
                let a = 1.5 * r * (3.0 * eps).sqrt();
                let j0 = 2.0 / (3.0 * eps).sqrt() * (a.asinh() / 3.0).sinh();
                let phi = |j: f64| j + eps * j * j * j - r;
                let dphi = |j: f64| 1.0 + 3.0 * eps * j * j;
                let j1 = j0 - phi(j0) / dphi(j0);
                Ok(if j1.is_finite() { j1 } else { j0 })
            }
            GraphKind::SignJump(rho) => {
                let t = eps * rho;
                Ok(if r > t {
                    r - t
                } else if r < -t {
                    r + t
                } else {
                    0.0
                })
            }
            _ => self.resolvent_newton(eps, r),
        }
    }

    /// Safeguarded Newton-bisection on `J + εβ(J) - r`, bracketed by `[0, r]`.
    fn resolvent_newton(&self, eps: f64, r: f64) -> Result<f64> {
        let phi = |j: f64| j + eps * self.minimal_section(j) - r;
        let (mut lo, mut hi) = if r > 0.0 { (0.0, r) } else { (r, 0.0) };
        let mut j = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = phi(j);
            if f == 0.0 {
                return Ok(j);
            }
            if f > 0.0 {
                hi = j;
            } else {
                lo = j;
            }
            let d = 1.0 + eps * self.section_derivative(j);
            let mut next = j - f / d;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let tol = RESOLVENT_TOL * (1.0 + r.abs()).min(1.0 + j.abs());
            if (next - j).abs() <= tol || hi - lo <= tol {
                return Ok(next);
            }
            j = next;
        }
        Err(Error::numerical(
            "resolvent",
            format!("{}: no convergence for eps = {eps:e}, r = {r:e}, bracket [{lo:e}, {hi:e}]", self.name),
        ))
    }

    /// `β_ε(r) = (r - J_ε(r))/ε`.
    ///
    /// For single-valued graphs this is evaluated as `β(J_ε(r))`, which is
    /// the same number but does not lose `log10(1/ε)` digits to cancellation.
    pub fn yosida(&self, eps: f64, r: f64) -> Result<f64> {
        if let GraphKind::SignJump(rho) = self.kind {
            if !(eps > 0.0) {
                return Err(Error::Precondition(format!("yosida needs eps > 0, got {eps}")));
            }
            return Ok((r / eps).clamp(-rho, rho));
        }
        Ok(self.minimal_section(self.resolvent(eps, r)?))
    }

    /// `β_ε'(r) = β'(J)/(1 + εβ'(J))` at `J = J_ε(r)`.
    pub fn yosida_derivative(&self, eps: f64, r: f64) -> Result<f64> {
        if let GraphKind::SignJump(rho) = self.kind {
            return Ok(if r.abs() < eps * rho { 1.0 / eps } else { 0.0 });
        }
        let j = self.resolvent(eps, r)?;
        let d = self.section_derivative(j);
        Ok(d / (1.0 + eps * d))
    }

    /// Value, Yosida approximation and its derivative in one resolvent solve.
    pub(crate) fn yosida_with_derivative(&self, eps: f64, r: f64) -> Result<(f64, f64)> {
        if let GraphKind::SignJump(rho) = self.kind {
            let v = (r / eps).clamp(-rho, rho);
            let d = if r.abs() < eps * rho { 1.0 / eps } else { 0.0 };
            return Ok((v, d));
        }
        let j = self.resolvent(eps, r)?;
        let d = self.section_derivative(j);
        Ok((self.minimal_section(j), d / (1.0 + eps * d)))
    }

    /// Moreau envelope `β̂_ε(r) = β̂(J) + (r - J)²/(2ε)`, the potential of `β_ε`.
    pub fn moreau_envelope(&self, eps: f64, r: f64) -> Result<f64> {
        let j = self.resolvent(eps, r)?;
        Ok(self.potential(j) + (r - j) * (r - j) / (2.0 * eps))
    }

    /// Smallest `C` with `|β⁰(r)| ≤ C(1 + β̂(r))` on an even sample of `[lo, hi]`.
    ///
    /// Every element of `β(r)` is measured, not only `β⁰(r)`, so the constant
    /// also covers the vertical segments of jump graphs (for which the two
    /// growth conditions share the same constant).
    pub fn verify_growth(&self, lo: f64, hi: f64, samples: usize) -> Result<GrowthReport> {
        if !(lo < hi) || samples < 3 {
            return Err(Error::Precondition("verify_growth needs lo < hi and samples >= 3".into()));
        }
        let step = (hi - lo) / (samples - 1) as f64;
        let constant = (0..samples)
            .map(|k| {
                let r = lo + k as f64 * step;
                let (a, b) = self.section_interval(r);
                a.abs().max(b.abs()) / (1.0 + self.potential(r).abs())
            })
            .fold(0.0_f64, f64::max);
        Ok(GrowthReport {
            ok: constant.is_finite(),
            constant,
        })
    }
}

fn power_odd(r: f64, p: u32) -> f64 {
    match p {
        1 => r,
        3 => r * r * r,
        _ => r.powi(p as i32),
    }
}

#[derive(Clone)]
pub enum PerturbationKind {
    /// `π(r) = k r`; `k = -1` gives the double-well perturbation.
    Linear(f64),
    /// Arbitrary Lipschitz `π` with `π(0) = 0`.
    Custom(ScalarFn),
}

/// Lipschitz nonlinearity `π` with `π(0) = 0` and a Lipschitz constant `C_π`.
#[derive(Clone)]
pub struct LipschitzPerturbation {
    kind: PerturbationKind,
    lipschitz: f64,
    name: String,
}

impl fmt::Debug for LipschitzPerturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzPerturbation")
            .field("name", &self.name)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl LipschitzPerturbation {
    pub fn zero() -> Self {
        Self {
            kind: PerturbationKind::Linear(0.0),
            lipschitz: 0.0,
            name: "zero".into(),
        }
    }

    pub fn linear(k: f64) -> Self {
        Self {
            kind: PerturbationKind::Linear(k),
            lipschitz: k.abs(),
            name: format!("linear {k}"),
        }
    }

    pub fn neg_identity() -> Self {
        Self {
            name: "neg_identity".into(),
            ..Self::linear(-1.0)
        }
    }

    /// Custom `π`; `π(0) = 0` and the Lipschitz bound are checked on
    /// `[-10, 10]`.
    pub fn custom(
        name: impl Into<String>,
        pi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
    ) -> Result<Self> {
        let p = Self {
            kind: PerturbationKind::Custom(Arc::new(pi)),
            lipschitz,
            name: name.into(),
        };
        if p.eval(0.0).abs() > 1e-12 {
            return Err(Error::validation("pi", "perturbation must vanish at 0"));
        }
        let n = 2001;
        let xs: Vec<f64> = (0..n).map(|k| -10.0 + 20.0 * k as f64 / (n - 1) as f64).collect();
        for w in xs.windows(2) {
            let slope = (p.eval(w[1]) - p.eval(w[0])).abs() / (w[1] - w[0]);
            if slope > lipschitz * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::validation(
                    "pi",
                    format!("slope {slope} exceeds Lipschitz constant {lipschitz}"),
                ));
            }
        }
        Ok(p)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lipschitz_constant(&self) -> f64 {
        self.lipschitz
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, PerturbationKind::Linear(k) if k == 0.0)
    }

    pub fn eval(&self, r: f64) -> f64 {
        match &self.kind {
            PerturbationKind::Linear(k) => k * r,
            PerturbationKind::Custom(f) => f(r),
        }
    }

    /// `π'(r)`, by central differences when no closed form exists.
    pub fn derivative(&self, r: f64) -> f64 {
        match &self.kind {
            PerturbationKind::Linear(k) => *k,
            PerturbationKind::Custom(f) => {
                let h = 1e-6 * (1.0 + r.abs());
                (f(r + h) - f(r - h)) / (2.0 * h)
            }
        }
    }

    /// `π̂(r) = ∫_0^r π`.
    pub fn antiderivative(&self, r: f64) -> f64 {
        match &self.kind {
            PerturbationKind::Linear(k) => 0.5 * k * r * r,
            PerturbationKind::Custom(f) => {
                // composite Simpson, 64 panels
                let n = 64;
                let h = r / n as f64;
                let mut s = f(0.0) + f(r);
                for i in 1..n {
                    let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                    s += w * f(i as f64 * h);
                }
                s * h / 3.0
            }
        }
    }
}
