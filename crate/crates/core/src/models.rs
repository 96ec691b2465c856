//! Concrete energy models behind one interface: element energy, residual,
//! linearization, load, Gram norm and optional manufactured solution.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{ElementGeometry, QuadratureRule};
use crate::mesh::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    #[error("gradient undefined at the singular point ({0}, {1})")]
    SingularPoint(f64, f64),
}

/// Norm used for dual norms of residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormSpec {
    /// `‖∇v‖`
    H1Seminorm,
    /// `(‖∇v‖² + η‖v‖²)^{1/2}`
    EtaNorm(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SemilinearLog,
    SineGordon,
    Kacanov,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::SemilinearLog => "semilinear_log",
            ModelKind::SineGordon => "sine_gordon",
            ModelKind::Kacanov => "kacanov",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "semilinear_log" => Ok(ModelKind::SemilinearLog),
            "sine_gordon" => Ok(ModelKind::SineGordon),
            "kacanov" => Ok(ModelKind::Kacanov),
            other => Err(format!("unknown model '{other}' (expected semilinear_log, sine_gordon or kacanov)")),
        }
    }
}

/// Manufactured solution with analytic gradient.
pub trait ExactSolution: Send + Sync {
    fn value(&self, p: Point) -> f64;
    fn gradient(&self, p: Point) -> Result<[f64; 2], ModelError>;
}

/// Energy `E(v) = Σ_T element_energy(v|_T) − Σ_T load_T · v|_T` on P1
/// functions, with the matching residual and linearization.
pub trait EnergyModel: Send + Sync {
    fn kind(&self) -> ModelKind;
    fn alpha(&self) -> f64;
    fn norm(&self) -> NormSpec;
    /// Element energy without the linear load part.
    fn element_energy(&self, geo: &ElementGeometry, vals: [f64; 3]) -> f64;
    /// Derivative of [`EnergyModel::element_energy`] against the three hats.
    fn element_residual(&self, geo: &ElementGeometry, vals: [f64; 3]) -> [f64; 3];
    /// Element matrix of the preconditioner `A[v]`.
    fn element_linearization(&self, geo: &ElementGeometry, vals: [f64; 3]) -> [[f64; 3]; 3];
    /// Linear load against the three hats.
    fn element_load(&self, _geo: &ElementGeometry) -> [f64; 3] {
        [0.0; 3]
    }
    fn exact_solution(&self) -> Option<&dyn ExactSolution> {
        None
    }
}

fn invalid(name: &'static str, value: f64, reason: &'static str) -> ModelError {
    ModelError::InvalidParameter { name, value, reason }
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `∫_T g(v) dx` and `∫_T g'(v) φ_i dx` for a pointwise potential.
fn reaction_terms(
    rule: &QuadratureRule,
    geo: &ElementGeometry,
    vals: [f64; 3],
    potential: impl Fn(f64) -> f64,
    derivative: impl Fn(f64) -> f64,
) -> (f64, [f64; 3]) {
    let mut e = 0.0;
    let mut r = [0.0; 3];
    for (b, w) in rule.iter() {
        let v = ElementGeometry::eval(vals, b);
        e += w * potential(v);
        let d = w * derivative(v);
        for i in 0..3 {
            r[i] += d * b[i];
        }
    }
    (geo.area * e, r.map(|x| geo.area * x))
}

/// `∫_T g φ_i dx` for a source term `g`.
fn source_load(rule: &QuadratureRule, geo: &ElementGeometry, g: impl Fn(Point) -> f64) -> [f64; 3] {
    let mut r = [0.0; 3];
    for (b, w) in rule.iter() {
        let v = w * g(geo.point(b));
        for i in 0..3 {
            r[i] += v * b[i];
        }
    }
    r.map(|x| geo.area * x)
}

fn scaled(k: [[f64; 3]; 3], c: f64) -> [[f64; 3]; 3] {
    k.map(|row| row.map(|x| c * x))
}

/// `−Δu = f(u)` with `f(u) = ν ln(1+|u|) − u + 1`, preconditioned by
/// `−Δ + η`.
#[derive(Debug, Clone)]
pub struct SemilinearLogModel {
    nu: f64,
    eta: f64,
    rule: QuadratureRule,
}

impl SemilinearLogModel {
    pub fn new(nu: f64, eta: f64) -> Result<SemilinearLogModel, ModelError> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(invalid("nu", nu, "must be positive and finite"));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(invalid("eta", eta, "must be positive and finite"));
        }
        Ok(SemilinearLogModel { nu, eta, rule: QuadratureRule::degree4() })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn f(&self, u: f64) -> f64 {
        self.nu * u.abs().ln_1p() - u + 1.0
    }

    /// Antiderivative of `f` with value 0 at 0.
    pub fn big_f(&self, u: f64) -> f64 {
        let a = u.abs();
        self.nu * u.signum() * ((1.0 + a) * a.ln_1p() - a) - 0.5 * u * u + u
    }
}

impl EnergyModel for SemilinearLogModel {
    fn kind(&self) -> ModelKind {
        ModelKind::SemilinearLog
    }

    fn alpha(&self) -> f64 {
        1.0
    }

    fn norm(&self) -> NormSpec {
        NormSpec::EtaNorm(self.eta)
    }

    fn element_energy(&self, geo: &ElementGeometry, vals: [f64; 3]) -> f64 {
        let g = geo.gradient(vals);
        let (react, _) = reaction_terms(&self.rule, geo, vals, |v| self.big_f(v), |_| 0.0);
        0.5 * geo.area * dot2(g, g) - react
    }

    fn element_residual(&self, geo: &ElementGeometry, vals: [f64; 3]) -> [f64; 3] {
        let g = geo.gradient(vals);
        let (_, react) = reaction_terms(&self.rule, geo, vals, |_| 0.0, |v| self.f(v));
        std::array::from_fn(|i| geo.area * dot2(g, geo.grads[i]) - react[i])
    }

    fn element_linearization(&self, geo: &ElementGeometry, _vals: [f64; 3]) -> [[f64; 3]; 3] {
        let k = geo.stiffness();
        let m = geo.mass();
        std::array::from_fn(|i| std::array::from_fn(|j| k[i][j] + self.eta * m[i][j]))
    }
}

/// `sin(πx) sin(πy)` on the unit square.
#[derive(Debug, Clone, Copy, Default)]
pub struct SineProduct;

impl ExactSolution for SineProduct {
    fn value(&self, p: Point) -> f64 {
        (PI * p[0]).sin() * (PI * p[1]).sin()
    }

    fn gradient(&self, p: Point) -> Result<[f64; 2], ModelError> {
        let (sx, cx) = (PI * p[0]).sin_cos();
        let (sy, cy) = (PI * p[1]).sin_cos();
        Ok([PI * cx * sy, PI * sx * cy])
    }
}

/// `−Δu + u³ + sin u = h` with a damped energy `α·E`, preconditioned by
/// the Laplacian.
#[derive(Debug, Clone)]
pub struct SineGordonModel {
    alpha: f64,
    reaction_rule: QuadratureRule,
    load_rule: QuadratureRule,
}

impl SineGordonModel {
    pub fn new(alpha: f64) -> Result<SineGordonModel, ModelError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid("alpha", alpha, "must lie in (0, 1)"));
        }
        Ok(SineGordonModel { alpha, reaction_rule: QuadratureRule::degree4(), load_rule: QuadratureRule::degree6() })
    }

    /// `Φ(u) = u⁴/4 − cos u + 1`
    pub fn big_phi(u: f64) -> f64 {
        let s = (0.5 * u).sin();
        0.25 * u.powi(4) + 2.0 * s * s
    }

    /// `φ(u) = u³ + sin u`
    pub fn phi(u: f64) -> f64 {
        u.powi(3) + u.sin()
    }

    /// Source making `sin(πx) sin(πy)` the solution.
    pub fn source(p: Point) -> f64 {
        let u = SineProduct.value(p);
        2.0 * PI * PI * u + u.powi(3) + u.sin()
    }
}

impl EnergyModel for SineGordonModel {
    fn kind(&self) -> ModelKind {
        ModelKind::SineGordon
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn norm(&self) -> NormSpec {
        NormSpec::H1Seminorm
    }

    fn element_energy(&self, geo: &ElementGeometry, vals: [f64; 3]) -> f64 {
        let g = geo.gradient(vals);
        let (react, _) = reaction_terms(&self.reaction_rule, geo, vals, Self::big_phi, |_| 0.0);
        self.alpha * (0.5 * geo.area * dot2(g, g) + react)
    }

    fn element_residual(&self, geo: &ElementGeometry, vals: [f64; 3]) -> [f64; 3] {
        let g = geo.gradient(vals);
        let (_, react) = reaction_terms(&self.reaction_rule, geo, vals, |_| 0.0, Self::phi);
        std::array::from_fn(|i| self.alpha * (geo.area * dot2(g, geo.grads[i]) + react[i]))
    }

    fn element_linearization(&self, geo: &ElementGeometry, _vals: [f64; 3]) -> [[f64; 3]; 3] {
        geo.stiffness()
    }

    fn element_load(&self, geo: &ElementGeometry) -> [f64; 3] {
        source_load(&self.load_rule, geo, Self::source).map(|x| self.alpha * x)
    }

    fn exact_solution(&self) -> Option<&dyn ExactSolution> {
        Some(&SineProduct)
    }
}

/// `r^{2/3} sin(2φ/3) cos φ (1−x²)(1−y²)` on the L-shape `(−1,1)² ∖ [0,1)×(−1,0]`,
/// angle taken in `[0, 2π)` so both re-entrant edges carry zero values.
#[derive(Debug, Clone, Copy, Default)]
pub struct CornerSingularity;

impl CornerSingularity {
    fn angle(p: Point) -> f64 {
        let a = p[1].atan2(p[0]);
        if a < 0.0 {
            a + 2.0 * PI
        } else {
            a
        }
    }
}

impl ExactSolution for CornerSingularity {
    fn value(&self, p: Point) -> f64 {
        let r = p[0].hypot(p[1]);
        if r == 0.0 {
            return 0.0;
        }
        let phi = Self::angle(p);
        r.powf(2.0 / 3.0) * (2.0 * phi / 3.0).sin() * phi.cos() * (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1])
    }

    fn gradient(&self, p: Point) -> Result<[f64; 2], ModelError> {
        let [x, y] = p;
        let r = x.hypot(y);
        if r == 0.0 {
            return Err(ModelError::SingularPoint(x, y));
        }
        let phi = Self::angle(p);
        let (sp, cp) = phi.sin_cos();
        let (s23, c23) = (2.0 * phi / 3.0).sin_cos();
        let r23 = r.powf(2.0 / 3.0);
        // angular-radial factor g and polynomial cutoff q
        let g = r23 * s23 * cp;
        let g_r = 2.0 / 3.0 * r23 / r * s23 * cp;
        let g_phi_over_r = r23 / r * (2.0 / 3.0 * c23 * cp - s23 * sp);
        let grad_g = [g_r * cp - g_phi_over_r * sp, g_r * sp + g_phi_over_r * cp];
        let q = (1.0 - x * x) * (1.0 - y * y);
        let grad_q = [-2.0 * x * (1.0 - y * y), -2.0 * y * (1.0 - x * x)];
        Ok([q * grad_g[0] + g * grad_q[0], q * grad_g[1] + g * grad_q[1]])
    }
}

/// Quasilinear diffusion `−∇·(ψ(|∇u|²)∇u) = h` with `ψ(t) = 1 + e^{−t}`,
/// linearized by freezing the coefficient.
#[derive(Debug, Clone)]
pub struct KacanovModel {
    alpha: f64,
    load_rule: QuadratureRule,
}

impl KacanovModel {
    pub fn new(alpha: f64) -> Result<KacanovModel, ModelError> {
        KacanovModel::with_load_degree(alpha, 6)
    }

    /// Load integrated with a rule of the given polynomial degree.
    pub fn with_load_degree(alpha: f64, degree: usize) -> Result<KacanovModel, ModelError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid("alpha", alpha, "must be positive and finite"));
        }
        Ok(KacanovModel { alpha, load_rule: QuadratureRule::for_degree(degree) })
    }

    pub fn psi(t: f64) -> f64 {
        1.0 + (-t).exp()
    }

    /// `Ψ(s) = s + 1 − e^{−s}`, the antiderivative of `ψ` vanishing at 0.
    pub fn big_psi(s: f64) -> f64 {
        s - (-s).exp_m1()
    }

    /// Lower bound of `(ψ(t²)t − ψ(s²)s)/(t − s)`, attained at `t² = 3/2`.
    pub fn m_psi() -> f64 {
        1.0 - 2.0 * (-1.5f64).exp()
    }

    /// Upper bound of the same difference quotient and of `ψ`.
    pub fn big_m_psi() -> f64 {
        2.0
    }
}

impl EnergyModel for KacanovModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Kacanov
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn norm(&self) -> NormSpec {
        NormSpec::H1Seminorm
    }

    fn element_energy(&self, geo: &ElementGeometry, vals: [f64; 3]) -> f64 {
        let g = geo.gradient(vals);
        0.5 * self.alpha * geo.area * Self::big_psi(dot2(g, g))
    }

    fn element_residual(&self, geo: &ElementGeometry, vals: [f64; 3]) -> [f64; 3] {
        let g = geo.gradient(vals);
        let c = self.alpha * geo.area * Self::psi(dot2(g, g));
        std::array::from_fn(|i| c * dot2(g, geo.grads[i]))
    }

    fn element_linearization(&self, geo: &ElementGeometry, vals: [f64; 3]) -> [[f64; 3]; 3] {
        let g = geo.gradient(vals);
        scaled(geo.stiffness(), Self::psi(dot2(g, g)))
    }

    /// `α ∫_T ψ(|∇u*|²)∇u* dx · ∇φ_i`
    fn element_load(&self, geo: &ElementGeometry) -> [f64; 3] {
        let mut flux = [0.0; 2];
        for (b, w) in self.load_rule.iter() {
            let p = geo.point(b);
            // interior quadrature nodes never coincide with the corner
            let g = CornerSingularity.gradient(p).unwrap_or([0.0; 2]);
            let c = w * Self::psi(dot2(g, g));
            flux[0] += c * g[0];
            flux[1] += c * g[1];
        }
        std::array::from_fn(|i| self.alpha * geo.area * dot2(flux, geo.grads[i]))
    }

    fn exact_solution(&self) -> Option<&dyn ExactSolution> {
        Some(&CornerSingularity)
    }
}

/// Model parameters; unused fields are ignored by each model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub nu: f64,
    pub eta: f64,
    pub alpha: f64,
}

impl ModelParams {
    /// Defaults used by the reference experiments.
    pub fn defaults(kind: ModelKind) -> ModelParams {
        match kind {
            ModelKind::SemilinearLog => ModelParams { nu: 1.0, eta: 2.0, alpha: 1.0 },
            ModelKind::SineGordon => ModelParams { nu: 1.0, eta: 2.0, alpha: 0.25 },
            ModelKind::Kacanov => ModelParams { nu: 1.0, eta: 2.0, alpha: 1.0 },
        }
    }
}

pub fn make_model(kind: ModelKind, params: ModelParams) -> Result<Box<dyn EnergyModel>, ModelError> {
    Ok(match kind {
        ModelKind::SemilinearLog => Box::new(SemilinearLogModel::new(params.nu, params.eta)?),
        ModelKind::SineGordon => Box::new(SineGordonModel::new(params.alpha)?),
        ModelKind::Kacanov => Box::new(KacanovModel::new(params.alpha)?),
    })
}
