//! Riemann theta functions with characteristics.
//!
//! The level-`k` section with characteristic `c in Z^g mod kD` is
//!
//! ```text
//! theta_c(z) = sum_{n in Z^g} exp(pi i k m^T tau m + 2 pi i k m^T z),   m = n + (kD)^{-1} c
//! ```
//!
//! All of them share the automorphy factor `exp(-pi i k p^T tau p - 2 pi i k p^T z)`
//! under `z -> z + tau p` and are invariant under `z -> z + D q`.
//!
//! Values are produced in scaled form `mantissa * exp(log_scale)` with
//! `log_scale = pi k y^T Y^{-1} y`, `y = Im(z)`, `Y = Im(tau)`. The mantissa
//! is the invariant pointwise norm of the section and stays `O(1)` anywhere
//! on the torus, so the sum is centred and truncated in that frame.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::torus::{im_inv_apply, PolarizationType, RiemannMatrix, TorusPoint};

pub const DEFAULT_THETA_EPS: f64 = 1e-12;

/// A complex number stored as `mantissa * exp(log_scale)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaled {
    pub mantissa: Complex64,
    pub log_scale: f64,
}

impl Scaled {
    pub fn one() -> Self {
        Self {
            mantissa: Complex64::new(1.0, 0.0),
            log_scale: 0.0,
        }
    }

    pub fn mul(self, other: Self) -> Self {
        Self {
            mantissa: self.mantissa * other.mantissa,
            log_scale: self.log_scale + other.log_scale,
        }
    }

    /// `ln |value|`, `-inf` for an exact zero.
    pub fn ln_abs(&self) -> f64 {
        self.mantissa.norm().ln() + self.log_scale
    }

    pub fn to_complex(&self) -> Complex64 {
        self.mantissa * self.log_scale.exp()
    }
}

/// Radius `R` for a centred ball of lattice points whose Gaussian tail is
/// certified below `epsilon`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncationPlan {
    pub radius: f64,
    pub epsilon: f64,
    pub level: u64,
    pub lambda_min: f64,
    pub z_bound: f64,
    /// Certified upper bound on the discarded tail at `radius`.
    pub tail_bound: f64,
    /// Number of points of `Z^g` in the origin-centred ball of `radius`.
    pub lattice_point_count: usize,
}

const RADIUS_STEP: f64 = 1.0 / 64.0;

/// Upper bound on `sum_{|m| > r} exp(-pi k lambda |m|^2 + 2 pi k |m| z_bound)`
/// over any shifted copy of `Z^g`, valid for `r >= z_bound / lambda`.
///
/// Shells `|m| in (r + j, r + j + 1]` hold at most `(2(r + j + 1) + 1)^g`
/// points, each bounded by the value at the inner radius.
pub fn tail_bound(g: usize, level: u64, lambda_min: f64, z_bound: f64, r: f64) -> f64 {
    let k = level as f64;
    let f = |rho: f64| (-PI * k * lambda_min * rho * rho + 2.0 * PI * k * rho * z_bound).exp();
    let mut total = 0.0;
    for j in 0.. {
        let rho = r + j as f64;
        let count = (2.0 * (rho + 1.0) + 1.0).powi(g as i32);
        let term = count * f(rho);
        total += term;
        if term <= total * 1e-18 || j > 10_000 {
            break;
        }
    }
    total
}

/// Smallest absolute error reachable in double precision for the centred
/// normalized sum: a multiple of machine epsilon times a bound on the sum of
/// term magnitudes.
pub fn precision_floor(g: usize, level: u64, lambda_min: f64) -> f64 {
    let k = level as f64;
    let mut total = 0.0;
    for j in 0..10_000 {
        let rho = j as f64;
        let count = (2.0 * (rho + 1.0) + 1.0).powi(g as i32);
        let term = count * (-PI * k * lambda_min * rho * rho).exp();
        total += term;
        if term <= total * 1e-18 {
            break;
        }
    }
    8.0 * f64::EPSILON * total
}

pub fn truncation_plan(
    tau: &RiemannMatrix,
    level: u64,
    z_bound: f64,
    epsilon: f64,
) -> Result<TruncationPlan> {
    plan_for(tau.g(), tau.lambda_min(), level, z_bound, epsilon)
}

pub(crate) fn plan_for(
    g: usize,
    lambda_min: f64,
    level: u64,
    z_bound: f64,
    epsilon: f64,
) -> Result<TruncationPlan> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
    }
    if level == 0 {
        return Err(Error::InvalidParameter("level must be >= 1".into()));
    }
    if !(z_bound >= 0.0) || !z_bound.is_finite() {
        return Err(Error::InvalidParameter(format!("z_bound must be >= 0, got {z_bound}")));
    }
    // Scan a fixed grid upward from the peak of the radial profile. The first
    // admissible grid radius is monotone in epsilon and in lambda_min.
    let start = ((z_bound / lambda_min) / RADIUS_STEP).ceil() * RADIUS_STEP;
    let mut r = start;
    loop {
        let tail = tail_bound(g, level, lambda_min, z_bound, r);
        if tail < epsilon {
            return Ok(TruncationPlan {
                radius: r,
                epsilon,
                level,
                lambda_min,
                z_bound,
                tail_bound: tail,
                lattice_point_count: count_ball_points(g, r),
            });
        }
        r += RADIUS_STEP;
        if r > start + 1e4 {
            return Err(Error::InvalidParameter(format!(
                "no truncation radius reaches epsilon {epsilon:e}"
            )));
        }
    }
}

fn count_ball_points(g: usize, r: f64) -> usize {
    let mut count = 0;
    for_each_in_ball(&vec![0.0; g], r, &mut |_| count += 1);
    count
}

/// Calls `f` for every `n in Z^g` with `|n - center| <= r`.
pub(crate) fn for_each_in_ball(center: &[f64], r: f64, f: &mut impl FnMut(&[i64])) {
    fn rec(center: &[f64], r2: f64, n: &mut Vec<i64>, f: &mut impl FnMut(&[i64])) {
        let i = n.len();
        if i == center.len() {
            f(n);
            return;
        }
        let c = center[i];
        let r = r2.max(0.0).sqrt();
        let lo = (c - r).ceil() as i64;
        let hi = (c + r).floor() as i64;
        for ni in lo..=hi {
            let d = ni as f64 - c;
            n.push(ni);
            rec(center, r2 - d * d, n, f);
            n.pop();
        }
    }
    let mut n = Vec::with_capacity(center.len());
    rec(center, r * r, &mut n, f);
}

/// Precomputed truncation plans for one `tau` at a fixed target precision.
#[derive(Clone, Debug)]
pub struct ThetaContext {
    epsilon: f64,
    plans: Vec<TruncationPlan>,
}

impl ThetaContext {
    /// Plans for levels `1..=max_level`.
    pub fn new(tau: &RiemannMatrix, epsilon: f64, max_level: u64) -> Result<Self> {
        let floor = precision_floor(tau.g(), 1, tau.lambda_min());
        if epsilon < floor {
            return Err(Error::PrecisionUnachievable {
                requested: epsilon,
                floor,
            });
        }
        let plans = (1..=max_level.max(1))
            .map(|k| truncation_plan(tau, k, 0.0, epsilon))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { epsilon, plans })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn plan(&self, level: u64) -> Result<&TruncationPlan> {
        self.plans
            .get(level.saturating_sub(1) as usize)
            .ok_or_else(|| Error::InvalidParameter(format!("no truncation plan for level {level}")))
    }
}

/// Something that can be evaluated pointwise as a section of a line bundle on
/// the torus `C^g / (tau Z^g + D Z^g)`.
pub trait Section: Send + Sync {
    /// Total level `k`: the section lives in (a translate of) `L^k`.
    fn level(&self) -> u64;
    fn ptype(&self) -> &PolarizationType;
    fn tau(&self) -> &RiemannMatrix;
    fn eval_scaled(&self, z: &[Complex64], ctx: &ThetaContext) -> Result<Scaled>;
    fn label(&self) -> String;

    fn g(&self) -> usize {
        self.ptype().g()
    }

    /// `h^0` of the bundle the section lives in: `k^g prod d_i`.
    fn h0(&self) -> u64 {
        self.level().pow(self.g() as u32) * self.ptype().h0()
    }

    fn eval_at_point(&self, x: &TorusPoint, ctx: &ThetaContext) -> Result<Scaled> {
        self.eval_scaled(&x.complex_value(self.tau(), self.ptype()), ctx)
    }
}

/// `theta_c^{[k]}(z + translation)` on the torus of type `D`.
#[derive(Clone, Debug)]
pub struct ThetaSection {
    level: u64,
    characteristic: Vec<i64>,
    translation: TorusPoint,
    ptype: PolarizationType,
    tau: Arc<RiemannMatrix>,
}

impl ThetaSection {
    /// Characteristics are reduced mod `kD`.
    pub fn new(
        ptype: &PolarizationType,
        tau: Arc<RiemannMatrix>,
        level: u64,
        characteristic: &[i64],
    ) -> Result<Self> {
        let g = ptype.g();
        if level == 0 {
            return Err(Error::InvalidParameter("level must be >= 1".into()));
        }
        if tau.g() != g || characteristic.len() != g {
            return Err(Error::InvalidParameter(format!(
                "dimension mismatch: type {ptype}, tau {}x{}, characteristic of length {}",
                tau.g(),
                tau.g(),
                characteristic.len()
            )));
        }
        let characteristic = characteristic
            .iter()
            .zip(ptype.divisors())
            .map(|(&c, &d)| c.rem_euclid((level * d) as i64))
            .collect();
        Ok(Self {
            level,
            characteristic,
            translation: TorusPoint::zero(g),
            ptype: ptype.clone(),
            tau,
        })
    }

    pub fn characteristic(&self) -> &[i64] {
        &self.characteristic
    }

    pub fn translation(&self) -> &TorusPoint {
        &self.translation
    }

    pub fn tau_arc(&self) -> &Arc<RiemannMatrix> {
        &self.tau
    }

    /// The section `z -> self(z + x)`. Offsets add without reduction: the
    /// representative fixes the automorphy normalization.
    pub fn translated(&self, x: &TorusPoint) -> Self {
        let mut out = self.clone();
        out.translation = self.translation.add(x);
        out
    }

    /// Evaluates at `z in C^g` with an explicit truncation plan.
    pub fn eval_with_plan(&self, z: &[Complex64], plan: &TruncationPlan) -> Result<Scaled> {
        let g = self.ptype.g();
        if z.len() != g {
            return Err(Error::InvalidInput(format!(
                "point has {} coordinates, expected {g}",
                z.len()
            )));
        }
        if z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite evaluation point".into()));
        }
        let tau = &*self.tau;
        let k = self.level as f64;
        let shift = self.translation.complex_value(tau, &self.ptype);
        let w: Vec<Complex64> = z.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let w_re: Vec<f64> = w.iter().map(|c| c.re).collect();
        let y: Vec<f64> = w.iter().map(|c| c.im).collect();
        // p' = Y^{-1} Im(w); the dominant terms sit at m = -p'.
        let p_im = im_inv_apply(tau, &y);
        let log_scale = PI * k * y.iter().zip(&p_im).map(|(a, b)| a * b).sum::<f64>();

        let char_shift: Vec<f64> = self
            .characteristic
            .iter()
            .zip(self.ptype.divisors())
            .map(|(&c, &d)| c as f64 / (k * d as f64))
            .collect();
        let center: Vec<f64> = char_shift.iter().zip(&p_im).map(|(s, p)| -(s + p)).collect();

        let re = tau.re();
        let im = tau.im();
        let mut m = vec![0.0; g];
        let mut u = vec![0.0; g];
        let mut sum = Complex64::new(0.0, 0.0);
        for_each_in_ball(&center, plan.radius, &mut |n| {
            for i in 0..g {
                m[i] = n[i] as f64 + char_shift[i];
                u[i] = n[i] as f64 - center[i];
            }
            let (mut quad_y, mut quad_x, mut lin) = (0.0, 0.0, 0.0);
            for i in 0..g {
                let (mut ay, mut ax) = (0.0, 0.0);
                for j in 0..g {
                    ay += im[(i, j)] * u[j];
                    ax += re[(i, j)] * m[j];
                }
                quad_y += u[i] * ay;
                quad_x += m[i] * ax;
                lin += m[i] * w_re[i];
            }
            let modulus = (-PI * k * quad_y).exp();
            let phase = PI * k * (quad_x + 2.0 * lin);
            sum += Complex64::from_polar(modulus, phase);
        });
        Ok(Scaled {
            mantissa: sum,
            log_scale,
        })
    }

    fn describe(&self) -> String {
        let c: Vec<String> = self.characteristic.iter().map(i64::to_string).collect();
        let mut s = format!("k={};c=({})", self.level, c.join(","));
        if !self.translation.is_zero() {
            let f = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(",");
            s.push_str(&format!(
                ";x=p({})q({})",
                f(&self.translation.p),
                f(&self.translation.q)
            ));
        }
        s
    }
}

impl fmt::Display for ThetaSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

impl Section for ThetaSection {
    fn level(&self) -> u64 {
        self.level
    }

    fn ptype(&self) -> &PolarizationType {
        &self.ptype
    }

    fn tau(&self) -> &RiemannMatrix {
        &self.tau
    }

    fn eval_scaled(&self, z: &[Complex64], ctx: &ThetaContext) -> Result<Scaled> {
        self.eval_with_plan(z, ctx.plan(self.level)?)
    }

    fn label(&self) -> String {
        self.describe()
    }
}

/// Pointwise product of sections on a common torus.
#[derive(Clone, Debug)]
pub struct ProductSection {
    factors: Vec<ThetaSection>,
}

impl ProductSection {
    pub fn new(factors: Vec<ThetaSection>) -> Result<Self> {
        let Some(first) = factors.first() else {
            return Err(Error::InvalidInput("empty product".into()));
        };
        let same_torus = |s: &ThetaSection| {
            s.ptype == first.ptype
                && (Arc::ptr_eq(&s.tau, &first.tau)
                    || (s.tau.re() == first.tau.re() && s.tau.im() == first.tau.im()))
        };
        if !factors.iter().all(same_torus) {
            return Err(Error::InvalidInput("product factors live on different tori".into()));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[ThetaSection] {
        &self.factors
    }
}

impl Section for ProductSection {
    fn level(&self) -> u64 {
        self.factors.iter().map(|s| s.level).sum()
    }

    fn ptype(&self) -> &PolarizationType {
        &self.factors[0].ptype
    }

    fn tau(&self) -> &RiemannMatrix {
        &self.factors[0].tau
    }

    fn eval_scaled(&self, z: &[Complex64], ctx: &ThetaContext) -> Result<Scaled> {
        self.factors.iter().try_fold(Scaled::one(), |acc, s| {
            Ok(acc.mul(s.eval_scaled(z, ctx)?))
        })
    }

    fn label(&self) -> String {
        self.factors
            .iter()
            .map(|s| s.describe())
            .collect::<Vec<_>>()
            .join(" * ")
    }
}

/// Evaluation argument: a torus point in lattice coordinates or a raw vector.
#[derive(Clone, Debug)]
pub enum ThetaArg {
    Point(TorusPoint),
    Complex(Vec<Complex64>),
}

impl From<TorusPoint> for ThetaArg {
    fn from(p: TorusPoint) -> Self {
        ThetaArg::Point(p)
    }
}

impl From<Vec<Complex64>> for ThetaArg {
    fn from(z: Vec<Complex64>) -> Self {
        ThetaArg::Complex(z)
    }
}

/// Scaled evaluation with a truncation plan built for `epsilon`. The
/// absolute error on the mantissa is below `epsilon`.
pub fn theta_eval_scaled(s: &ThetaSection, z: impl Into<ThetaArg>, epsilon: f64) -> Result<Scaled> {
    let floor = precision_floor(s.g(), s.level, s.tau.lambda_min());
    if epsilon < floor {
        return Err(Error::PrecisionUnachievable {
            requested: epsilon,
            floor,
        });
    }
    let plan = truncation_plan(&s.tau, s.level, 0.0, epsilon)?;
    let z = match z.into() {
        ThetaArg::Point(p) => {
            if !p.is_finite() {
                return Err(Error::InvalidInput("non-finite evaluation point".into()));
            }
            p.complex_value(&s.tau, &s.ptype)
        }
        ThetaArg::Complex(z) => z,
    };
    s.eval_with_plan(&z, &plan)
}

/// Plain complex value of a section. Fails if the value overflows `f64`;
/// use [`theta_eval_scaled`] far from the fundamental domain.
pub fn theta_eval(s: &ThetaSection, z: impl Into<ThetaArg>, epsilon: f64) -> Result<Complex64> {
    let v = theta_eval_scaled(s, z, epsilon)?;
    let c = v.to_complex();
    if !c.re.is_finite() || !c.im.is_finite() {
        return Err(Error::InvalidInput(format!(
            "theta value overflows f64 (log scale {:.1})",
            v.log_scale
        )));
    }
    Ok(c)
}

/// The `k^g prod d_i` sections `theta_c^{[k]}`, `c in Z^g mod kD`, in the
/// order of [`crate::torus::residues`] for `kD`.
pub fn basis_l_power(
    ptype: &PolarizationType,
    tau: &Arc<RiemannMatrix>,
    level: u64,
) -> Result<Vec<ThetaSection>> {
    if level == 0 {
        return Err(Error::InvalidParameter("level must be >= 1".into()));
    }
    crate::torus::residues(&ptype.scaled(level))
        .iter()
        .map(|c| ThetaSection::new(ptype, tau.clone(), level, c))
        .collect()
}

pub fn translate_section(s: &ThetaSection, x: &TorusPoint) -> ThetaSection {
    s.translated(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::sample_tau;

    fn tau_i() -> Arc<RiemannMatrix> {
        Arc::new(crate::torus::diagonal_tau(&[Complex64::new(0.0, 1.0)]).unwrap())
    }

    #[test]
    fn basis_counts() {
        let tau1 = Arc::new(sample_tau(1, 1, 1.0).unwrap());
        let tau2 = Arc::new(sample_tau(2, 1, 1.0).unwrap());
        let t = |d: &[u64]| PolarizationType::new(d.to_vec()).unwrap();
        assert_eq!(basis_l_power(&t(&[3]), &tau1, 1).unwrap().len(), 3);
        assert_eq!(basis_l_power(&t(&[1, 9]), &tau2, 2).unwrap().len(), 36);
        assert_eq!(basis_l_power(&t(&[2, 4]), &tau2, 2).unwrap().len(), 32);
    }

    #[test]
    fn characteristic_is_reduced() {
        let tau = tau_i();
        let t = PolarizationType::new(vec![3]).unwrap();
        let s = ThetaSection::new(&t, tau, 2, &[-1]).unwrap();
        assert_eq!(s.characteristic(), &[5]);
    }

    #[test]
    fn plan_tail_is_below_epsilon_and_monotone() {
        let tau = tau_i();
        let p = truncation_plan(&tau, 1, 0.0, 1e-12).unwrap();
        assert!(p.tail_bound < 1e-12);
        assert!(p.radius > 2.0 && p.radius < 8.0, "radius {}", p.radius);
        let mut last = 0.0;
        for e in [1e-4, 5e-5, 1e-8, 5e-9, 1e-12, 5e-13] {
            let r = truncation_plan(&tau, 1, 0.5, e).unwrap().radius;
            assert!(r >= last);
            last = r;
        }
        let t = sample_tau(2, 4, 1.0).unwrap();
        let doubled = t.with_im_scaled(2.0).unwrap();
        for e in [1e-6, 1e-12] {
            let a = truncation_plan(&t, 1, 0.3, e).unwrap().radius;
            let b = truncation_plan(&doubled, 1, 0.3, e).unwrap().radius;
            assert!(b <= a);
        }
        assert!(truncation_plan(&tau, 1, 0.0, 0.0).is_err());
        assert!(truncation_plan(&tau, 1, 0.0, -1.0).is_err());
    }

    #[test]
    fn precision_and_input_errors() {
        let tau = tau_i();
        let t = PolarizationType::principal(1);
        let s = ThetaSection::new(&t, tau, 1, &[0]).unwrap();
        assert!(matches!(
            theta_eval(&s, vec![Complex64::new(0.0, 0.0)], 1e-20),
            Err(Error::PrecisionUnachievable { .. })
        ));
        assert!(matches!(
            theta_eval(&s, vec![Complex64::new(f64::NAN, 0.0)], 1e-12),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            theta_eval(&s, TorusPoint::new(vec![f64::INFINITY], vec![0.0]), 1e-12),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn translation_composes_and_inverts() {
        let tau = Arc::new(sample_tau(2, 9, 1.0).unwrap());
        let t = PolarizationType::new(vec![1, 3]).unwrap();
        let s = ThetaSection::new(&t, tau, 1, &[0, 1]).unwrap();
        let x = TorusPoint::new(vec![0.3, -0.2], vec![0.7, 0.1]);
        let back = translate_section(&translate_section(&s, &x), &x.neg());
        let z = vec![Complex64::new(0.2, 0.3), Complex64::new(-0.4, 0.1)];
        let a = theta_eval(&s, z.clone(), 1e-12).unwrap();
        let b = theta_eval(&back, z, 1e-12).unwrap();
        assert!((a - b).norm() < 1e-12 * (1.0 + a.norm()));
    }
}
