//! Benchmark PDEs: viscous Burgers on `[−1,1]×[0,1]` and TMz scattering by a
//! dielectric disk on `[−1,1]²`, with their reference solutions.
//!
//! Residuals are evaluated from the per-point jets of the solution (see
//! [`crate::autodiff::PointJets`]): for each output component the value, the
//! two first derivatives and the two pure second derivatives. Every residual
//! also reports its Jacobian with respect to those jet entries, which is all
//! the loss needs for exact parameter gradients.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::borrow::Cow;
use std::sync::OnceLock;

use crate::error::{check_dim, Error, Result};
use crate::specfun::{j_with_derivs, y_with_derivs};
use crate::spectral::Domain2;

/// Jet entries per output component for two input coordinates.
pub const JET: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Interior,
    Boundary,
    Initial,
}

impl PointKind {
    pub const ALL: [PointKind; 3] = [PointKind::Interior, PointKind::Boundary, PointKind::Initial];
}

/// A collocation point with its outward normal (zero for interior points).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollocationPoint {
    pub kind: PointKind,
    pub x: [f64; 2],
    pub normal: [f64; 2],
}

impl CollocationPoint {
    pub fn interior(x: [f64; 2]) -> Self {
        Self {
            kind: PointKind::Interior,
            x,
            normal: [0.0, 0.0],
        }
    }
}

/// A PDE with boundary and (optionally) initial conditions.
pub trait Problem: Sync + Send {
    fn name(&self) -> &'static str;
    fn domain(&self) -> Domain2;

    /// Names of the two input coordinates.
    fn coordinates(&self) -> [&'static str; 2] {
        ["x", "y"]
    }

    /// Names of the solution components, one per network output.
    fn components(&self) -> &'static [&'static str];

    fn n_components(&self) -> usize {
        self.components().len()
    }

    /// Residual components produced at a point of this kind (0 if the term is absent).
    fn n_residuals(&self, kind: PointKind) -> usize;

    /// Writes the residual vector at `p` into `r` and its Jacobian with respect
    /// to the jets into `jac` (row-major, `n_residuals × n_components·JET`).
    fn residual(&self, p: &CollocationPoint, jets: &[f64], r: &mut [f64], jac: &mut [f64])
        -> Result<()>;

    /// `n` points of the given kind drawn from `rng`.
    fn sample(&self, kind: PointKind, n: usize, rng: &mut ChaCha8Rng) -> Vec<CollocationPoint>;

    /// Reference solution per component.
    fn reference(&self, x: [f64; 2]) -> Result<Vec<f64>>;
}

fn on_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn check_residual_dims(problem: &dyn Problem, p: &CollocationPoint, jets: &[f64], r: &[f64], jac: &[f64]) -> Result<()> {
    let width = problem.n_components() * JET;
    let nr = problem.n_residuals(p.kind);
    if nr == 0 {
        return Err(Error::InvalidArgument(format!(
            "{} has no {:?} condition",
            problem.name(),
            p.kind
        )));
    }
    check_dim("jets", width, jets.len())?;
    check_dim("residual", nr, r.len())?;
    check_dim("residual Jacobian", nr * width, jac.len())
}

/// `u_t + u u_x − ν u_xx`.
pub fn burgers_residual(u: f64, u_t: f64, u_x: f64, u_xx: f64, nu: f64) -> f64 {
    u_t + u * u_x - nu * u_xx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurgersProblem {
    pub viscosity: f64,
}

impl Default for BurgersProblem {
    fn default() -> Self {
        Self { viscosity: 1.0 }
    }
}

impl BurgersProblem {
    pub fn new(viscosity: f64) -> Result<Self> {
        let p = Self { viscosity };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.viscosity > 0.0) || !self.viscosity.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "viscosity must be positive, got {}",
                self.viscosity
            )));
        }
        Ok(())
    }

    /// Target value of the condition active at `p`: `0` on `x = ±1`, `−sin(πx)` at `t = 0`.
    pub fn condition_target(&self, p: &CollocationPoint) -> Result<f64> {
        let [x, t] = p.x;
        match p.kind {
            PointKind::Boundary if on_value(x.abs(), 1.0) && (0.0..=1.0).contains(&t) => Ok(0.0),
            PointKind::Initial if on_value(t, 0.0) && (-1.0..=1.0).contains(&x) => {
                Ok(-(PI * x).sin())
            }
            _ => Err(Error::InvalidArgument(format!(
                "point {:?} is not on the {:?} set",
                p.x, p.kind
            ))),
        }
    }
}

impl Problem for BurgersProblem {
    fn name(&self) -> &'static str {
        "burgers"
    }

    fn domain(&self) -> Domain2 {
        [[-1.0, 1.0], [0.0, 1.0]]
    }

    fn coordinates(&self) -> [&'static str; 2] {
        ["x", "t"]
    }

    fn components(&self) -> &'static [&'static str] {
        &["u"]
    }

    fn n_residuals(&self, _kind: PointKind) -> usize {
        1
    }

    fn residual(&self, p: &CollocationPoint, jets: &[f64], r: &mut [f64], jac: &mut [f64]) -> Result<()> {
        check_residual_dims(self, p, jets, r, jac)?;
        jac.fill(0.0);
        // Jet layout: [u, u_x, u_t, u_xx, u_tt].
        let (u, u_x, u_t, u_xx) = (jets[0], jets[1], jets[2], jets[3]);
        match p.kind {
            PointKind::Interior => {
                r[0] = burgers_residual(u, u_t, u_x, u_xx, self.viscosity);
                jac[0] = u_x;
                jac[1] = u;
                jac[2] = 1.0;
                jac[3] = -self.viscosity;
            }
            PointKind::Boundary | PointKind::Initial => {
                r[0] = u - self.condition_target(p)?;
                jac[0] = 1.0;
            }
        }
        Ok(())
    }

    fn sample(&self, kind: PointKind, n: usize, rng: &mut ChaCha8Rng) -> Vec<CollocationPoint> {
        match kind {
            PointKind::Interior => (0..n)
                .map(|_| CollocationPoint::interior([rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0)]))
                .collect(),
            PointKind::Boundary => (0..n)
                .map(|i| {
                    let side = if i < n.div_ceil(2) { -1.0 } else { 1.0 };
                    CollocationPoint {
                        kind,
                        x: [side, rng.gen_range(0.0..=1.0)],
                        normal: [side, 0.0],
                    }
                })
                .collect(),
            PointKind::Initial => (0..n)
                .map(|_| CollocationPoint {
                    kind,
                    x: [rng.gen_range(-1.0..=1.0), 0.0],
                    normal: [0.0, -1.0],
                })
                .collect(),
        }
    }

    fn reference(&self, x: [f64; 2]) -> Result<Vec<f64>> {
        Ok(vec![burgers_reference(x[0], x[1], self.viscosity)?])
    }
}

/// Gauss–Hermite rule for `∫ f(z) e^{−z²} dz`, nodes in descending order.
///
/// Nodes are the eigenvalues of the Hermite Jacobi matrix, bracketed by
/// Sturm-sequence bisection and polished by Newton steps on the orthonormal
/// recurrence. The recurrence is rescaled on the fly so large rules do not
/// overflow; weights of the outermost nodes may underflow to zero.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let bound = (2.0 * n as f64).sqrt() + 1.0;
    for i in 0..n.div_ceil(2) {
        // i-th largest eigenvalue: exactly n − 1 − i eigenvalues lie below it.
        let target = n - 1 - i;
        let (mut lo, mut hi) = (0.0, bound);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if sturm_count(n, mid) > target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mut z = 0.5 * (lo + hi);
        let mut deriv = 1.0;
        let mut log_scale = 0.0;
        for _ in 0..3 {
            let (p, dp, s) = hermite_orthonormal(n, z);
            if dp != 0.0 {
                z -= p / dp;
            }
            deriv = dp;
            log_scale = s;
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        // Weight 2 / (p'_n(z) e^{scale})², computed in log space.
        let weight = (2.0f64.ln() - 2.0 * (deriv.abs().ln() + log_scale)).exp();
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Number of eigenvalues of the `n × n` Hermite Jacobi matrix below `lambda`.
fn sturm_count(n: usize, lambda: f64) -> usize {
    let mut count = 0;
    let mut q = -lambda;
    for k in 0..n {
        if k > 0 {
            let e2 = k as f64 / 2.0;
            let prev = if q == 0.0 { f64::EPSILON } else { q };
            q = -lambda - e2 / prev;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Scaled orthonormal Hermite value `p_n(z)`, derivative `√(2n) p_{n−1}(z)`
/// and the natural-log scale factor they share.
fn hermite_orthonormal(n: usize, z: f64) -> (f64, f64, f64) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let (mut p1, mut p2) = (PIM4, 0.0);
    let mut log_scale = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
        if p1.abs() > 1e150 {
            p1 *= 1e-150;
            p2 *= 1e-150;
            log_scale += 150.0 * std::f64::consts::LN_10;
        }
    }
    (p1, (2.0 * n as f64).sqrt() * p2, log_scale)
}

const HERMITE_LEVELS: usize = 6;

fn hermite_rule(level: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static RULES: [OnceLock<(Vec<f64>, Vec<f64>)>; HERMITE_LEVELS] =
        [const { OnceLock::new() }; HERMITE_LEVELS];
    RULES[level].get_or_init(|| gauss_hermite(64 << level))
}

fn cole_hopf_quadrature(x: f64, t: f64, nu: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let spread = 2.0 * (nu * t).sqrt();
    let (mut num, mut den) = (0.0, 0.0);
    for (z, w) in rule.0.iter().zip(&rule.1) {
        let y = x - spread * z;
        // exp(−cos(πy)/(2πν)) normalized by its maximum to stay in range.
        let g = w * ((-(PI * y).cos() - 1.0) / (TAU * nu)).exp();
        num += (PI * y).sin() * g;
        den += g;
    }
    -num / den
}

/// Cole–Hopf solution of Burgers with `u(x,0) = −sin(πx)` and `u(±1,t) = 0`.
///
/// Gauss–Hermite rules of 64, 128, … nodes are tried until two consecutive
/// estimates agree to 1e-10; the finer one is returned.
pub fn burgers_reference(x: f64, t: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0) || !(t >= 0.0) || !x.is_finite() || !t.is_finite() {
        return Err(Error::Oracle(format!(
            "Cole–Hopf reference needs ν > 0 and t ≥ 0, got ν = {nu}, t = {t}"
        )));
    }
    if t == 0.0 {
        return Ok(-(PI * x).sin());
    }
    let mut prev = cole_hopf_quadrature(x, t, nu, hermite_rule(0));
    for level in 1..HERMITE_LEVELS {
        let next = cole_hopf_quadrature(x, t, nu, hermite_rule(level));
        if (next - prev).abs() < 1e-10 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Oracle(format!(
        "Gauss–Hermite quadrature did not converge at (x, t) = ({x}, {t}) for ν = {nu}"
    )))
}

/// Real and imaginary parts of the complex field `E_z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldPair {
    pub e_rz: f64,
    pub e_iz: f64,
}

impl From<Complex64> for FieldPair {
    fn from(c: Complex64) -> Self {
        Self {
            e_rz: c.re,
            e_iz: c.im,
        }
    }
}

/// TMz plane-wave scattering by a dielectric disk centred at the origin.
///
/// Lengths are in units where the free-space wavenumber is `wavenumber`
/// (2π for 300 MHz on a 1 m scale); permittivities are relative to vacuum.
/// The incident field is `e^{ikx}` and the scattered field radiates as
/// `H^{(1)}_n`, i.e. harmonic time dependence `e^{−iωt}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HelmholtzProblem {
    pub eps_r: f64,
    pub radius: f64,
    pub wavenumber: f64,
    pub n_trunc: usize,
    #[serde(skip)]
    mie: OnceLock<MieSeries>,
}

impl Default for HelmholtzProblem {
    fn default() -> Self {
        Self {
            eps_r: 1.0,
            radius: 0.25,
            wavenumber: TAU,
            n_trunc: 30,
            mie: OnceLock::new(),
        }
    }
}

impl HelmholtzProblem {
    pub fn new(eps_r: f64) -> Result<Self> {
        let p = Self {
            eps_r,
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_r >= 1.0) || !self.eps_r.is_finite() {
            return Err(Error::InvalidArgument(format!("eps_r must be ≥ 1, got {}", self.eps_r)));
        }
        if !(self.radius > 0.0 && self.radius < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "disk radius must lie in (0, 1), got {}",
                self.radius
            )));
        }
        if !(self.wavenumber > 0.0) || !self.wavenumber.is_finite() {
            return Err(Error::InvalidArgument("wavenumber must be positive".into()));
        }
        if self.n_trunc == 0 || self.n_trunc + 2 > crate::specfun::MAX_ORDER {
            return Err(Error::InvalidArgument(format!(
                "n_trunc must lie in [1, {}], got {}",
                crate::specfun::MAX_ORDER - 2,
                self.n_trunc
            )));
        }
        Ok(())
    }

    /// Relative permittivity; the circle itself belongs to the disk.
    pub fn permittivity(&self, x: f64, y: f64) -> f64 {
        if x * x + y * y <= self.radius * self.radius {
            self.eps_r
        } else {
            1.0
        }
    }

    /// Incident field `e^{ikx}`.
    pub fn incident(&self, x: f64) -> Complex64 {
        Complex64::from_polar(1.0, self.wavenumber * x)
    }

    /// `(∇²E_rz + k²ε E_rz, ∇²E_iz + k²ε E_iz)`.
    pub fn helmholtz_residual(&self, field: FieldPair, laplacian: FieldPair, x: f64, y: f64) -> (f64, f64) {
        let k2 = self.wavenumber * self.wavenumber * self.permittivity(x, y);
        (laplacian.e_rz + k2 * field.e_rz, laplacian.e_iz + k2 * field.e_iz)
    }

    /// First-order absorbing condition `(∂_n − ik)(E − E^inc) = 0` split into
    /// real and imaginary parts.
    pub fn abc_residual(&self, field: FieldPair, dn: FieldPair, p: &CollocationPoint) -> Result<(f64, f64)> {
        self.check_boundary(p)?;
        let k = self.wavenumber;
        let x = p.x[0];
        let inc = self.incident(x);
        let dn_inc = Complex64::new(0.0, k) * inc * p.normal[0];
        let r_re = (dn.e_rz + k * field.e_iz) - (dn_inc.re + k * inc.im);
        let r_im = (dn.e_iz - k * field.e_rz) - (dn_inc.im - k * inc.re);
        Ok((r_re, r_im))
    }

    fn check_boundary(&self, p: &CollocationPoint) -> Result<()> {
        let [x, y] = p.x;
        let [nx, ny] = p.normal;
        let ok = (on_value(x.abs(), 1.0) && on_value(nx, x.signum()) && ny == 0.0 && y.abs() <= 1.0)
            || (on_value(y.abs(), 1.0) && on_value(ny, y.signum()) && nx == 0.0 && x.abs() <= 1.0);
        if p.kind != PointKind::Boundary || !ok {
            return Err(Error::InvalidArgument(format!(
                "point {:?} with normal {:?} is not on the outer boundary",
                p.x, p.normal
            )));
        }
        Ok(())
    }

    /// The Mie series for this configuration; cached after the first call
    /// unless the fields have since been changed.
    pub fn mie(&self) -> Result<Cow<'_, MieSeries>> {
        let matches = |m: &MieSeries| {
            m.k == self.wavenumber
                && m.eps_r == self.eps_r
                && m.radius == self.radius
                && m.n_trunc == self.n_trunc
        };
        if let Some(m) = self.mie.get() {
            if matches(m) {
                return Ok(Cow::Borrowed(m));
            }
        }
        self.validate()?;
        let series = MieSeries::new(self.wavenumber, self.eps_r, self.radius, self.n_trunc)?;
        let cached = self.mie.get_or_init(|| series.clone());
        Ok(if matches(cached) {
            Cow::Borrowed(cached)
        } else {
            Cow::Owned(series)
        })
    }

    /// Reference field at polar coordinates `(r, θ)`.
    pub fn mie_solution(&self, r: f64, theta: f64) -> Result<FieldPair> {
        Ok(self.mie()?.field_polar(r, theta)?.value.into())
    }
}

impl Problem for HelmholtzProblem {
    fn name(&self) -> &'static str {
        "helmholtz"
    }

    fn domain(&self) -> Domain2 {
        [[-1.0, 1.0], [-1.0, 1.0]]
    }

    fn components(&self) -> &'static [&'static str] {
        &["e_rz", "e_iz"]
    }

    fn n_residuals(&self, kind: PointKind) -> usize {
        match kind {
            PointKind::Interior | PointKind::Boundary => 2,
            PointKind::Initial => 0,
        }
    }

    fn residual(&self, p: &CollocationPoint, jets: &[f64], r: &mut [f64], jac: &mut [f64]) -> Result<()> {
        check_residual_dims(self, p, jets, r, jac)?;
        jac.fill(0.0);
        let w = 2 * JET;
        let field = FieldPair {
            e_rz: jets[0],
            e_iz: jets[JET],
        };
        match p.kind {
            PointKind::Interior => {
                let [x, y] = p.x;
                let k2 = self.wavenumber * self.wavenumber * self.permittivity(x, y);
                let lap = FieldPair {
                    e_rz: jets[3] + jets[4],
                    e_iz: jets[JET + 3] + jets[JET + 4],
                };
                let (a, b) = self.helmholtz_residual(field, lap, x, y);
                r[0] = a;
                r[1] = b;
                for (row, off) in [(0, 0), (1, JET)] {
                    jac[row * w + off] = k2;
                    jac[row * w + off + 3] = 1.0;
                    jac[row * w + off + 4] = 1.0;
                }
            }
            PointKind::Boundary => {
                let [nx, ny] = p.normal;
                let dn = FieldPair {
                    e_rz: nx * jets[1] + ny * jets[2],
                    e_iz: nx * jets[JET + 1] + ny * jets[JET + 2],
                };
                let (a, b) = self.abc_residual(field, dn, p)?;
                r[0] = a;
                r[1] = b;
                let k = self.wavenumber;
                // r_re = ∂_n E_rz + k E_iz, r_im = ∂_n E_iz − k E_rz (plus constants).
                jac[1] = nx;
                jac[2] = ny;
                jac[JET] = k;
                jac[w] = -k;
                jac[w + JET + 1] = nx;
                jac[w + JET + 2] = ny;
            }
            PointKind::Initial => unreachable!("rejected by dimension check"),
        }
        Ok(())
    }

    fn sample(&self, kind: PointKind, n: usize, rng: &mut ChaCha8Rng) -> Vec<CollocationPoint> {
        match kind {
            PointKind::Interior => (0..n)
                .map(|_| CollocationPoint::interior([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]))
                .collect(),
            PointKind::Boundary => {
                // Edges x = −1, x = 1, y = −1, y = 1; remainders go to the first edges.
                let base = n / 4;
                let extra = n % 4;
                let mut out = Vec::with_capacity(n);
                for edge in 0..4 {
                    let count = base + usize::from(edge < extra);
                    let side = if edge % 2 == 0 { -1.0 } else { 1.0 };
                    for _ in 0..count {
                        let s = rng.gen_range(-1.0..=1.0);
                        let (x, normal) = if edge < 2 {
                            ([side, s], [side, 0.0])
                        } else {
                            ([s, side], [0.0, side])
                        };
                        out.push(CollocationPoint { kind, x, normal });
                    }
                }
                out
            }
            PointKind::Initial => Vec::new(),
        }
    }

    fn reference(&self, x: [f64; 2]) -> Result<Vec<f64>> {
        let v = self.mie()?.field(x[0], x[1])?.value;
        Ok(vec![v.re, v.im])
    }
}

/// Which side of the disk boundary a Mie evaluation uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MieBranch {
    Interior,
    Exterior,
}

/// Complex field with its Cartesian derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MieField {
    pub value: Complex64,
    pub gradient: [Complex64; 2],
    pub hessian_diag: [Complex64; 2],
}

impl MieField {
    pub fn laplacian(&self) -> Complex64 {
        self.hessian_diag[0] + self.hessian_diag[1]
    }
}

/// Truncated cylindrical-harmonic expansion of the total field:
/// `Σ_{|n|≤N} iⁿ [J_n(kr) + α_n H_n(kr)] e^{inθ}` outside the disk and
/// `Σ iⁿ β_n J_n(k_i r) e^{inθ}` inside, `k_i = k√ε_r`.
#[derive(Clone, Debug, PartialEq)]
pub struct MieSeries {
    k: f64,
    eps_r: f64,
    k_inner: f64,
    radius: f64,
    n_trunc: usize,
    alpha: Vec<Complex64>,
    beta: Vec<Complex64>,
}

impl MieSeries {
    pub fn new(k: f64, eps_r: f64, radius: f64, n_trunc: usize) -> Result<Self> {
        let k_inner = k * eps_r.sqrt();
        let (a, b) = (k * radius, k_inner * radius);
        let jo = j_with_derivs(n_trunc, a)?;
        let yo = y_with_derivs(n_trunc, a)?;
        let ji = j_with_derivs(n_trunc, b)?;
        let mut alpha = Vec::with_capacity(n_trunc + 1);
        let mut beta = Vec::with_capacity(n_trunc + 1);
        for n in 0..=n_trunc {
            let (j, dj) = (jo[n][0], jo[n][1]);
            let h = Complex64::new(j, yo[n][0]);
            let dh = Complex64::new(dj, yo[n][1]);
            let (jin, djin) = (ji[n][0], ji[n][1]);
            // Continuity of E_z and ∂_r E_z at r = R.
            let det = k * dh * jin - k_inner * h * djin;
            alpha.push((k_inner * j * djin - k * dj * jin) / det);
            beta.push(k * (j * dh - h * dj) / det);
        }
        Ok(Self {
            k,
            eps_r,
            k_inner,
            radius,
            n_trunc,
            alpha,
            beta,
        })
    }

    pub fn alpha(&self) -> &[Complex64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[Complex64] {
        &self.beta
    }

    pub fn n_trunc(&self) -> usize {
        self.n_trunc
    }

    /// Field at Cartesian `(x, y)`.
    pub fn field(&self, x: f64, y: f64) -> Result<MieField> {
        let r = x.hypot(y);
        let branch = if r <= self.radius {
            MieBranch::Interior
        } else {
            MieBranch::Exterior
        };
        self.eval(r, y.atan2(x), branch)
    }

    pub fn field_polar(&self, r: f64, theta: f64) -> Result<MieField> {
        let branch = if r <= self.radius {
            MieBranch::Interior
        } else {
            MieBranch::Exterior
        };
        self.eval(r, theta, branch)
    }

    /// Field from an explicit branch, regardless of which side `r` lies on.
    pub fn eval(&self, r: f64, theta: f64, branch: MieBranch) -> Result<MieField> {
        let nmax = self.n_trunc;
        let (wave, coeff_j, coeff_h): (f64, Vec<Complex64>, Option<&[Complex64]>) = match branch {
            MieBranch::Interior => (self.k_inner, self.beta.clone(), None),
            MieBranch::Exterior => (self.k, vec![Complex64::new(1.0, 0.0); nmax + 1], Some(&self.alpha)),
        };
        let rho = wave * r;
        let j = j_with_derivs(nmax, rho)?;
        let y = match coeff_h {
            Some(_) => Some(y_with_derivs(nmax, rho)?),
            None => None,
        };
        // Radial functions F_n(r) and their r-derivatives.
        let radial = |n: usize| -> [Complex64; 3] {
            let mut f = [Complex64::new(0.0, 0.0); 3];
            for d in 0..3 {
                let mut v = coeff_j[n] * j[n][d];
                if let (Some(a), Some(y)) = (coeff_h, &y) {
                    v += a[n] * Complex64::new(j[n][d], y[n][d]);
                }
                f[d] = v * wave.powi(d as i32);
            }
            f
        };

        if r == 0.0 {
            // Near the origin F_n(r) ~ r^n: n = 0 gives the value, n = 1 the
            // gradient, n = 0 and n = 2 the second derivatives.
            let f0 = radial(0);
            let f1 = radial(1);
            let grad_x = 2.0 * Complex64::i() * f1[1];
            let f2 = if nmax >= 2 { radial(2)[2] } else { Complex64::new(0.0, 0.0) };
            return Ok(MieField {
                value: f0[0],
                gradient: [grad_x, Complex64::new(0.0, 0.0)],
                hessian_diag: [f0[2] - 2.0 * f2, f0[2] + 2.0 * f2],
            });
        }

        let mut u = Complex64::new(0.0, 0.0);
        let mut u_r = u;
        let mut u_rr = u;
        let mut u_t = u;
        let mut u_tt = u;
        let mut u_rt = u;
        let mut i_pow = Complex64::new(1.0, 0.0);
        for n in 0..=nmax {
            let weight = if n == 0 { i_pow } else { 2.0 * i_pow };
            let [f, df, d2f] = radial(n);
            let nf = n as f64;
            let (s, c) = (nf * theta).sin_cos();
            u += weight * f * c;
            u_r += weight * df * c;
            u_rr += weight * d2f * c;
            u_t -= weight * nf * f * s;
            u_tt -= weight * nf * nf * f * c;
            u_rt -= weight * nf * df * s;
            i_pow *= Complex64::i();
        }
        let (s, c) = theta.sin_cos();
        let grad_x = c * u_r - s / r * u_t;
        let grad_y = s * u_r + c / r * u_t;
        let (r2, sc) = (r * r, s * c);
        let u_xx = c * c * u_rr + s * s / r * u_r + s * s / r2 * u_tt - 2.0 * sc / r * u_rt
            + 2.0 * sc / r2 * u_t;
        let u_yy = s * s * u_rr + c * c / r * u_r + c * c / r2 * u_tt + 2.0 * sc / r * u_rt
            - 2.0 * sc / r2 * u_t;
        Ok(MieField {
            value: u,
            gradient: [grad_x, grad_y],
            hessian_diag: [u_xx, u_yy],
        })
    }
}

/// Problems selectable from configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    Burgers(BurgersProblem),
    Helmholtz(HelmholtzProblem),
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig::Burgers(BurgersProblem::default())
    }
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            ProblemConfig::Burgers(p) => p.validate(),
            ProblemConfig::Helmholtz(p) => p.validate(),
        }
    }

    pub fn as_problem(&self) -> &dyn Problem {
        match self {
            ProblemConfig::Burgers(p) => p,
            ProblemConfig::Helmholtz(p) => p,
        }
    }
}
