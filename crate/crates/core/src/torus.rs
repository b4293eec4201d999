//! Polarized complex tori in the standard analytic model.
//!
//! A polarization of type `D = (d_1, ..., d_g)` on the torus
//! `A = C^g / (tau Z^g + D Z^g)` is fixed together with a Riemann matrix
//! `tau`. Points are carried in lattice coordinates `(p, q)`, meaning
//! `z = tau p + D q`, so that torsion and subgroup questions reduce to exact
//! integer arithmetic.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entrywise symmetry tolerance for `tau`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Elementary divisors `(d_1, ..., d_g)` with `d_i | d_{i+1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PolarizationType {
    divisors: Vec<u64>,
}

impl PolarizationType {
    pub fn new(divisors: Vec<u64>) -> Result<Self> {
        if divisors.is_empty() {
            return Err(Error::InvalidParameter("polarization type needs g >= 1 divisors".into()));
        }
        if divisors.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "divisors must be positive, got {divisors:?}"
            )));
        }
        if let Some(w) = divisors.windows(2).find(|w| w[1] % w[0] != 0) {
            return Err(Error::InvalidParameter(format!(
                "divisor {} does not divide {}",
                w[0], w[1]
            )));
        }
        Ok(Self { divisors })
    }

    /// Type `(1, ..., 1)`.
    pub fn principal(g: usize) -> Self {
        Self {
            divisors: vec![1; g.max(1)],
        }
    }

    pub fn g(&self) -> usize {
        self.divisors.len()
    }

    pub fn divisors(&self) -> &[u64] {
        &self.divisors
    }

    pub fn h0(&self) -> u64 {
        self.divisors.iter().product()
    }

    /// Largest divisor; every point of `K(L)` is killed by it.
    pub fn exponent(&self) -> u64 {
        *self.divisors.last().expect("non-empty")
    }

    /// `k D`, the type of `L^k`.
    pub fn scaled(&self, k: u64) -> Self {
        Self {
            divisors: self.divisors.iter().map(|d| d * k).collect(),
        }
    }

    pub fn is_principal(&self) -> bool {
        self.divisors.iter().all(|&d| d == 1)
    }
}

impl fmt::Display for PolarizationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.divisors.iter().map(u64::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl FromStr for PolarizationType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let divisors = s
            .trim()
            .trim_start_matches('(')
            .trim_end_matches(')')
            .split(',')
            .map(|part| {
                part.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad divisor {part:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(divisors)
    }
}

/// `h^0(L) = d_1 ... d_g`.
pub fn h0_of_type(ptype: &PolarizationType) -> u64 {
    ptype.h0()
}

pub fn factorial(n: u64) -> u64 {
    (1..=n).product()
}

/// The two sides of `h^0(L) > 2^g g!`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BoundCheck {
    pub lhs: u64,
    pub rhs: u64,
    pub holds: bool,
}

pub fn theorem_bound(ptype: &PolarizationType) -> BoundCheck {
    let g = ptype.g() as u64;
    let lhs = ptype.h0();
    let rhs = (1u64 << g) * factorial(g);
    BoundCheck {
        lhs,
        rhs,
        holds: lhs > rhs,
    }
}

/// Strict inequality `prod d_i > 2^g g!`.
pub fn theorem_bound_holds(g: usize, ptype: &PolarizationType) -> bool {
    assert_eq!(g, ptype.g(), "g must equal the length of the type");
    theorem_bound(ptype).holds
}

/// All residues `c in Z^g mod D`, first coordinate varying slowest.
pub fn residues(ptype: &PolarizationType) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::with_capacity(ptype.g())];
    for &d in ptype.divisors() {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..d as i64).map(move |c| {
                    let mut v = prefix.clone();
                    v.push(c);
                    v
                })
            })
            .collect();
    }
    out
}

/// Symmetric `g x g` complex matrix with positive definite imaginary part.
#[derive(Clone, Debug)]
pub struct RiemannMatrix {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
    im_inv: DMatrix<f64>,
    lambda_min: f64,
}

impl RiemannMatrix {
    pub fn new(re: DMatrix<f64>, im: DMatrix<f64>) -> Result<Self> {
        let g = re.nrows();
        if g == 0 || !re.is_square() || im.shape() != (g, g) {
            return Err(Error::InvalidInput(format!(
                "tau parts must be square and of equal size, got {:?} and {:?}",
                re.shape(),
                im.shape()
            )));
        }
        if re.iter().chain(im.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("tau has non-finite entries".into()));
        }
        for i in 0..g {
            for j in 0..i {
                let dr = (re[(i, j)] - re[(j, i)]).abs();
                let di = (im[(i, j)] - im[(j, i)]).abs();
                if dr > SYMMETRY_TOL || di > SYMMETRY_TOL {
                    return Err(Error::InvalidInput(format!(
                        "tau is not symmetric at ({i},{j}): residual {:e}",
                        dr.max(di)
                    )));
                }
            }
        }
        let eig = SymmetricEigen::new(im.clone());
        let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(lambda_min > 0.0) {
            return Err(Error::InvalidInput(format!(
                "Im(tau) is not positive definite (smallest eigenvalue {lambda_min:e})"
            )));
        }
        let im_inv = im
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("Im(tau) is not positive definite".into()))?
            .inverse();
        Ok(Self {
            re,
            im,
            im_inv,
            lambda_min,
        })
    }

    pub fn g(&self) -> usize {
        self.re.nrows()
    }

    pub fn re(&self) -> &DMatrix<f64> {
        &self.re
    }

    pub fn im(&self) -> &DMatrix<f64> {
        &self.im
    }

    pub fn im_inv(&self) -> &DMatrix<f64> {
        &self.im_inv
    }

    /// Smallest eigenvalue of `Im(tau)`.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.re[(i, j)], self.im[(i, j)])
    }

    pub fn symmetry_residual(&self) -> f64 {
        let g = self.g();
        let mut worst = 0.0f64;
        for i in 0..g {
            for j in 0..g {
                worst = worst
                    .max((self.re[(i, j)] - self.re[(j, i)]).abs())
                    .max((self.im[(i, j)] - self.im[(j, i)]).abs());
            }
        }
        worst
    }

    /// `tau v` for a real vector `v`.
    pub fn apply_real(&self, v: &[f64]) -> Vec<Complex64> {
        let g = self.g();
        (0..g)
            .map(|i| {
                let (mut r, mut m) = (0.0, 0.0);
                for (j, &vj) in v.iter().enumerate() {
                    r += self.re[(i, j)] * vj;
                    m += self.im[(i, j)] * vj;
                }
                Complex64::new(r, m)
            })
            .collect()
    }

    /// Same matrix scaled entrywise, used for monotonicity checks.
    pub fn with_im_scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.re.clone(), &self.im * factor)
    }

    pub fn to_file(&self) -> TauFile {
        let g = self.g();
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..g).map(|i| (0..g).map(|j| m[(i, j)]).collect()).collect()
        };
        TauFile {
            g,
            re: rows(&self.re),
            im: rows(&self.im),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    /// Parses the `{"g", "re", "im"}` schema and revalidates symmetry and
    /// positivity.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: TauFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("malformed tau file: {e}")))?;
        file.into_matrix()
    }
}

/// On-disk form of a Riemann matrix: row-major full matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TauFile {
    pub g: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl TauFile {
    pub fn into_matrix(self) -> Result<RiemannMatrix> {
        let g = self.g;
        let build = |name: &str, rows: &[Vec<f64>]| -> Result<DMatrix<f64>> {
            if rows.len() != g || rows.iter().any(|r| r.len() != g) {
                return Err(Error::InvalidInput(format!(
                    "tau file: \"{name}\" must be a {g}x{g} matrix"
                )));
            }
            Ok(DMatrix::from_fn(g, g, |i, j| rows[i][j]))
        };
        if g == 0 {
            return Err(Error::InvalidInput("tau file: g must be >= 1".into()));
        }
        RiemannMatrix::new(build("re", &self.re)?, build("im", &self.im)?)
    }
}

/// Draws `tau = S + i (Q^T Q + scale I)` with `S` symmetric uniform on
/// `[-1/2, 1/2]` and `Q` standard normal. Deterministic in `seed`.
pub fn sample_tau(g: usize, seed: u64, scale: f64) -> Result<RiemannMatrix> {
    if g == 0 {
        return Err(Error::InvalidParameter("g must be >= 1".into()));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!("scale must be > 0, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut re = DMatrix::zeros(g, g);
    for i in 0..g {
        for j in i..g {
            let s: f64 = rng.random_range(-0.5..=0.5);
            re[(i, j)] = s;
            re[(j, i)] = s;
        }
    }
    let q = DMatrix::<f64>::from_fn(g, g, |_, _| rng.sample(StandardNormal));
    let mut im = DMatrix::zeros(g, g);
    for i in 0..g {
        for j in i..g {
            let mut v: f64 = (0..g).map(|k| q[(k, i)] * q[(k, j)]).sum();
            if i == j {
                v += scale;
            }
            im[(i, j)] = v;
            im[(j, i)] = v;
        }
    }
    RiemannMatrix::new(re, im)
}

/// Diagonal `tau = diag(t_1, ..., t_g)`; the torus splits as a product, so
/// it is never simple for `g >= 2`. Used only as a labeled negative control.
pub fn diagonal_tau(entries: &[Complex64]) -> Result<RiemannMatrix> {
    let g = entries.len();
    let re = DMatrix::from_fn(g, g, |i, j| if i == j { entries[i].re } else { 0.0 });
    let im = DMatrix::from_fn(g, g, |i, j| if i == j { entries[i].im } else { 0.0 });
    RiemannMatrix::new(re, im)
}

/// A point `tau p + D q` in real lattice coordinates.
///
/// The stored representative is kept as given; [`TorusPoint::reduce`]
/// produces the canonical one with coordinates in `[0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusPoint {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl TorusPoint {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Self {
        assert_eq!(p.len(), q.len(), "p and q must have the same length");
        Self { p, q }
    }

    pub fn zero(g: usize) -> Self {
        Self {
            p: vec![0.0; g],
            q: vec![0.0; g],
        }
    }

    pub fn g(&self) -> usize {
        self.p.len()
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(&self.q).all(|x| x.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.p.iter().chain(&self.q).all(|&x| x == 0.0)
    }

    pub fn reduce(&self) -> Self {
        let frac = |x: &f64| {
            let f = x - x.floor();
            if f >= 1.0 {
                0.0
            } else {
                f
            }
        };
        Self {
            p: self.p.iter().map(frac).collect(),
            q: self.q.iter().map(frac).collect(),
        }
    }

    /// Equal as points of the torus: coordinates differ by integers, up to `tol`.
    pub fn coincides(&self, other: &Self, tol: f64) -> bool {
        let close = |a: f64, b: f64| {
            let d = a - b;
            (d - d.round()).abs() <= tol
        };
        self.p.iter().zip(&other.p).all(|(&a, &b)| close(a, b))
            && self.q.iter().zip(&other.q).all(|(&a, &b)| close(a, b))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            p: self.p.iter().zip(&other.p).map(|(a, b)| a + b).collect(),
            q: self.q.iter().zip(&other.q).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        Self {
            p: self.p.iter().map(|a| -a).collect(),
            q: self.q.iter().map(|a| -a).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// `tau p + D q`.
    pub fn complex_value(&self, tau: &RiemannMatrix, ptype: &PolarizationType) -> Vec<Complex64> {
        let mut z = tau.apply_real(&self.p);
        for (zi, (qi, &d)) in z.iter_mut().zip(self.q.iter().zip(ptype.divisors())) {
            *zi += Complex64::new(qi * d as f64, 0.0);
        }
        z
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// A torsion point with rational lattice coordinates `(p, q) = (num_p, num_q) / den`,
/// stored canonically: numerators in `[0, den)` and `den` minimal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TorsionPoint {
    den: i64,
    p: Vec<i64>,
    q: Vec<i64>,
}

impl TorsionPoint {
    pub fn new(den: i64, p: Vec<i64>, q: Vec<i64>) -> Result<Self> {
        if den <= 0 {
            return Err(Error::InvalidInput(format!("denominator must be positive, got {den}")));
        }
        if p.len() != q.len() || p.is_empty() {
            return Err(Error::InvalidInput("p and q must be non-empty and equal length".into()));
        }
        let mut pt = Self { den, p, q };
        pt.normalize();
        Ok(pt)
    }

    pub fn zero(g: usize) -> Self {
        Self {
            den: 1,
            p: vec![0; g],
            q: vec![0; g],
        }
    }

    fn normalize(&mut self) {
        let den = self.den;
        for x in self.p.iter_mut().chain(self.q.iter_mut()) {
            *x = x.rem_euclid(den);
        }
        let common = self
            .p
            .iter()
            .chain(&self.q)
            .fold(self.den, |acc, &x| gcd(acc, x));
        if common > 1 {
            self.den /= common;
            for x in self.p.iter_mut().chain(self.q.iter_mut()) {
                *x /= common;
            }
        }
    }

    pub fn g(&self) -> usize {
        self.p.len()
    }

    pub fn den(&self) -> i64 {
        self.den
    }

    pub fn p_num(&self) -> &[i64] {
        &self.p
    }

    pub fn q_num(&self) -> &[i64] {
        &self.q
    }

    pub fn is_zero(&self) -> bool {
        self.den == 1
    }

    /// Exact order in the torus; equals the canonical denominator.
    pub fn order(&self) -> i64 {
        self.den
    }

    pub fn add(&self, other: &Self) -> Self {
        let den = self.den / gcd(self.den, other.den) * other.den;
        let (a, b) = (den / self.den, den / other.den);
        let mut out = Self {
            den,
            p: self.p.iter().zip(&other.p).map(|(x, y)| a * x + b * y).collect(),
            q: self.q.iter().zip(&other.q).map(|(x, y)| a * x + b * y).collect(),
        };
        out.normalize();
        out
    }

    pub fn neg(&self) -> Self {
        let mut out = Self {
            den: self.den,
            p: self.p.iter().map(|x| -x).collect(),
            q: self.q.iter().map(|x| -x).collect(),
        };
        out.normalize();
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn to_torus_point(&self) -> TorusPoint {
        let d = self.den as f64;
        TorusPoint {
            p: self.p.iter().map(|&x| x as f64 / d).collect(),
            q: self.q.iter().map(|&x| x as f64 / d).collect(),
        }
    }

    /// Parses `n/d` tokens. `g` tokens give the real-direction coordinates `q`
    /// with `p = 0`; `2g` tokens give `p_1..p_g, q_1..q_g`.
    pub fn parse(s: &str, g: usize) -> Result<Self> {
        let tokens: Vec<&str> = s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
        let mut fracs = Vec::with_capacity(tokens.len());
        for t in &tokens {
            let (num, den) = match t.split_once('/') {
                Some((n, d)) => (n.trim(), d.trim()),
                None => (*t, "1"),
            };
            let bad = || Error::InvalidInput(format!("{t:?} is not a rational number n/d"));
            let num: i64 = num.parse().map_err(|_| bad())?;
            let den: i64 = den.parse().map_err(|_| bad())?;
            if den <= 0 {
                return Err(bad());
            }
            fracs.push((num, den));
        }
        let (p, q) = if fracs.len() == g {
            (vec![(0, 1); g], fracs)
        } else if fracs.len() == 2 * g {
            let q = fracs.split_off(g);
            (fracs, q)
        } else {
            return Err(Error::InvalidInput(format!(
                "point {s:?} needs {g} or {} coordinates, got {}",
                2 * g,
                fracs.len()
            )));
        };
        let den = p
            .iter()
            .chain(&q)
            .fold(1i64, |acc, &(_, d)| acc / gcd(acc, d) * d);
        let scale = |v: &[(i64, i64)]| v.iter().map(|&(n, d)| n * (den / d)).collect();
        Self::new(den, scale(&p), scale(&q))
    }
}

impl fmt::Display for TorsionPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fmt_vec = |v: &[i64]| {
            v.iter()
                .map(|&x| {
                    let c = gcd(x, self.den).max(1);
                    if x == 0 {
                        "0".to_string()
                    } else if self.den / c == 1 {
                        format!("{}", x / c)
                    } else {
                        format!("{}/{}", x / c, self.den / c)
                    }
                })
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(f, "p=({}) q=({})", fmt_vec(&self.p), fmt_vec(&self.q))
    }
}

/// Closure of `generators` under addition, sorted canonically.
pub fn generate_subgroup(generators: &[TorsionPoint], g: usize) -> Result<Vec<TorsionPoint>> {
    if generators.iter().any(|x| x.g() != g) {
        return Err(Error::InvalidInput("generator dimension does not match g".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    seen.insert(TorsionPoint::zero(g));
    let mut frontier = vec![TorsionPoint::zero(g)];
    while let Some(x) = frontier.pop() {
        for gen in generators {
            let y = x.add(gen);
            if seen.insert(y.clone()) {
                frontier.push(y);
            }
        }
    }
    Ok(seen.into_iter().collect())
}

/// Cyclic subgroup generated by one point.
pub fn cyclic_subgroup(generator: &TorsionPoint) -> Vec<TorsionPoint> {
    let mut out = vec![TorsionPoint::zero(generator.g())];
    let mut x = generator.clone();
    while !x.is_zero() {
        out.push(x.clone());
        x = x.add(generator);
    }
    out
}

/// Checks that `points` is a finite subgroup: contains zero, no repeats,
/// closed under addition.
pub fn verify_subgroup(points: &[TorsionPoint]) -> Result<()> {
    let Some(first) = points.first() else {
        return Err(Error::InvalidInput("empty subgroup".into()));
    };
    let g = first.g();
    let set: std::collections::HashSet<&TorsionPoint> = points.iter().collect();
    if set.len() != points.len() {
        return Err(Error::InvalidInput("subgroup lists a point twice".into()));
    }
    if !set.contains(&TorsionPoint::zero(g)) {
        return Err(Error::InvalidInput("subgroup does not contain 0".into()));
    }
    for x in points {
        for y in points {
            if !set.contains(&x.add(y)) {
                return Err(Error::InvalidInput(format!(
                    "not closed under addition: {x} + {y} is missing"
                )));
            }
        }
    }
    Ok(())
}

/// Element of `K(L) = (Z^g / D Z^g)^2`: the point `tau D^{-1} a + q`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KGroupElement {
    pub a: Vec<i64>,
    pub q: Vec<i64>,
}

impl KGroupElement {
    pub fn new(a: Vec<i64>, q: Vec<i64>, ptype: &PolarizationType) -> Self {
        let red = |v: Vec<i64>| -> Vec<i64> {
            v.into_iter()
                .zip(ptype.divisors())
                .map(|(x, &d)| x.rem_euclid(d as i64))
                .collect()
        };
        Self {
            a: red(a),
            q: red(q),
        }
    }

    pub fn add(&self, other: &Self, ptype: &PolarizationType) -> Self {
        Self::new(
            self.a.iter().zip(&other.a).map(|(x, y)| x + y).collect(),
            self.q.iter().zip(&other.q).map(|(x, y)| x + y).collect(),
            ptype,
        )
    }

    /// As a point of `A = C^g / (tau Z^g + D Z^g)`: `p = D^{-1} a`, `q / D`.
    pub fn to_torsion_point(&self, ptype: &PolarizationType) -> TorsionPoint {
        let e = ptype.exponent() as i64;
        let lift = |v: &[i64]| -> Vec<i64> {
            v.iter()
                .zip(ptype.divisors())
                .map(|(&x, &d)| x * (e / d as i64))
                .collect()
        };
        TorsionPoint::new(e, lift(&self.a), lift(&self.q)).expect("valid torsion point")
    }
}

/// Every element of `K(L)`.
pub fn k_group(ptype: &PolarizationType) -> Vec<KGroupElement> {
    let res = residues(ptype);
    res.iter()
        .flat_map(|a| {
            res.iter()
                .map(move |q| KGroupElement::new(a.clone(), q.clone(), ptype))
        })
        .collect()
}

/// The exponent `n` with `e(x, y) = exp(2 pi i n / d_g)`, `0 <= n < d_g`.
pub fn weil_exponent(x: &KGroupElement, y: &KGroupElement, ptype: &PolarizationType) -> i64 {
    let e = ptype.exponent() as i64;
    let mut n = 0i64;
    for (i, &d) in ptype.divisors().iter().enumerate() {
        let w = e / d as i64;
        n += (x.a[i] * y.q[i] - y.a[i] * x.q[i]) * w;
    }
    n.rem_euclid(e)
}

/// `e(x, y) = exp(2 pi i (x.a^T D^{-1} y.q - y.a^T D^{-1} x.q))`.
pub fn weil_pairing(x: &KGroupElement, y: &KGroupElement, ptype: &PolarizationType) -> Complex64 {
    let n = weil_exponent(x, y, ptype);
    let e = ptype.exponent() as f64;
    Complex64::from_polar(1.0, 2.0 * PI * n as f64 / e)
}

/// Isogeny data for `A -> B = A / H` with `H` the real-direction maximal
/// isotropic subgroup.
#[derive(Clone, Debug)]
pub struct DescentData {
    pub base_type: PolarizationType,
    pub tau: RiemannMatrix,
    /// `{(0, q)}`: the points `q in Z^g mod D` of `A`.
    pub h: Vec<KGroupElement>,
    /// `{tau D^{-1} c}` on `B = C^g / (tau Z^g + Z^g)`, in the same order as
    /// [`residues`].
    pub h_prime: Vec<TorsionPoint>,
}

impl DescentData {
    /// Index of a point of `H'` in `h_prime`.
    pub fn sigma_index(&self, sigma: &TorsionPoint) -> Option<usize> {
        self.h_prime.iter().position(|x| x == sigma)
    }

    /// Principal type of the quotient `B`.
    pub fn quotient_type(&self) -> PolarizationType {
        PolarizationType::principal(self.base_type.g())
    }
}

pub fn descent_data(ptype: &PolarizationType, tau: &RiemannMatrix) -> Result<DescentData> {
    if ptype.g() != tau.g() {
        return Err(Error::InvalidParameter(format!(
            "type {ptype} has length {} but tau is {}x{}",
            ptype.g(),
            tau.g(),
            tau.g()
        )));
    }
    let g = ptype.g();
    let e = ptype.exponent() as i64;
    let res = residues(ptype);
    let h = res
        .iter()
        .map(|c| KGroupElement::new(vec![0; g], c.clone(), ptype))
        .collect();
    let h_prime = res
        .iter()
        .map(|c| {
            let p = c
                .iter()
                .zip(ptype.divisors())
                .map(|(&ci, &d)| ci * (e / d as i64))
                .collect();
            TorsionPoint::new(e, p, vec![0; g]).expect("valid torsion point")
        })
        .collect();
    Ok(DescentData {
        base_type: ptype.clone(),
        tau: tau.clone(),
        h,
        h_prime,
    })
}

/// Smallest eigenvalue of a real symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// `Y^{-1} v` for `Y = Im(tau)`.
pub(crate) fn im_inv_apply(tau: &RiemannMatrix, v: &[f64]) -> Vec<f64> {
    let x = tau.im_inv() * DVector::from_column_slice(v);
    x.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ty(d: &[u64]) -> PolarizationType {
        PolarizationType::new(d.to_vec()).unwrap()
    }

    #[test]
    fn type_validation() {
        assert!(PolarizationType::new(vec![]).is_err());
        assert!(PolarizationType::new(vec![0, 2]).is_err());
        assert!(PolarizationType::new(vec![2, 3]).is_err());
        assert_eq!("1,9".parse::<PolarizationType>().unwrap(), ty(&[1, 9]));
        assert_eq!(ty(&[2, 4]).to_string(), "(2,4)");
    }

    #[test]
    fn h0_examples() {
        assert_eq!(h0_of_type(&ty(&[3])), 3);
        assert_eq!(h0_of_type(&ty(&[1, 9])), 9);
        assert_eq!(h0_of_type(&ty(&[2, 4])), 8);
    }

    #[test]
    fn bound_examples() {
        assert!(theorem_bound_holds(2, &ty(&[1, 9])));
        assert!(theorem_bound_holds(1, &ty(&[3])));
        assert!(!theorem_bound_holds(2, &ty(&[1, 8])));
        assert!(!theorem_bound_holds(1, &ty(&[2])));
        let b = theorem_bound(&ty(&[1, 1, 49]));
        assert_eq!((b.lhs, b.rhs, b.holds), (49, 48, true));
    }

    #[test]
    fn sample_tau_is_deterministic() {
        let a = sample_tau(1, 7, 1.0).unwrap();
        let b = sample_tau(1, 7, 1.0).unwrap();
        assert_eq!(a.re(), b.re());
        assert_eq!(a.im(), b.im());
        assert!(a.im()[(0, 0)] >= 1.0);
        let c = sample_tau(1, 8, 1.0).unwrap();
        assert_ne!(a.re(), c.re());
    }

    #[test]
    fn sample_tau_lambda_min_respects_scale() {
        let t = sample_tau(2, 1, 1.0).unwrap();
        assert_eq!(t.symmetry_residual(), 0.0);
        assert!(t.lambda_min() >= 1.0 - 1e-12);

        let t = sample_tau(3, 3, 0.5).unwrap();
        assert!(t.symmetry_residual() < 1e-15);
        // Independent eigenvalue computation of Im(tau).
        assert!(min_eigenvalue(t.im()) >= 0.5 - 1e-12);
        assert!((min_eigenvalue(t.im()) - t.lambda_min()).abs() < 1e-12);
    }

    #[test]
    fn sample_tau_rejects_bad_parameters() {
        assert!(matches!(sample_tau(0, 1, 1.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(sample_tau(2, 1, 0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(sample_tau(2, 1, -1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn riemann_matrix_rejects_asymmetric_or_indefinite() {
        let re = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.2, 0.0]);
        let im = DMatrix::identity(2, 2);
        assert!(RiemannMatrix::new(re, im).is_err());
        let re = DMatrix::zeros(2, 2);
        let im = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(RiemannMatrix::new(re, im).is_err());
    }

    #[test]
    fn tau_json_round_trip_and_errors() {
        let t = sample_tau(2, 42, 1.0).unwrap();
        let back = RiemannMatrix::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back.re(), t.re());
        assert_eq!(back.im(), t.im());

        let err = RiemannMatrix::from_json("{\"g\": 1,\n \"re\": [[0.0]],\n \"im\": [[1.0]").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
        let asym = r#"{"g":2,"re":[[0,0.5],[0.1,0]],"im":[[1,0],[0,1]]}"#;
        assert!(RiemannMatrix::from_json(asym).is_err());
    }

    #[test]
    fn weil_pairing_examples() {
        let d4 = ty(&[4]);
        let x = KGroupElement::new(vec![1], vec![0], &d4);
        let y = KGroupElement::new(vec![0], vec![1], &d4);
        let e = weil_pairing(&x, &y, &d4);
        assert!((e - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!((weil_pairing(&x, &x, &d4) - 1.0).norm() < 1e-15);

        let d19 = ty(&[1, 9]);
        let x = KGroupElement::new(vec![0, 1], vec![0, 0], &d19);
        let y = KGroupElement::new(vec![0, 0], vec![0, 1], &d19);
        let want = Complex64::from_polar(1.0, 2.0 * PI / 9.0);
        assert!((weil_pairing(&x, &y, &d19) - want).norm() < 1e-15);
    }

    #[test]
    fn k_group_order_is_square_of_h0() {
        for d in [&[3u64][..], &[1, 9], &[2, 4]] {
            let t = ty(d);
            assert_eq!(k_group(&t).len() as u64, t.h0() * t.h0());
        }
    }

    #[test]
    fn descent_for_elliptic_degree_three() {
        let t = ty(&[3]);
        let tau = sample_tau(1, 5, 1.0).unwrap();
        let dd = descent_data(&t, &tau).unwrap();
        assert_eq!(dd.h.len(), 3);
        let qs: Vec<i64> = dd.h.iter().map(|x| x.q[0]).collect();
        assert_eq!(qs, vec![0, 1, 2]);
        assert!(dd.h.iter().all(|x| x.a == vec![0]));
        let ps: Vec<TorusPoint> = dd.h_prime.iter().map(|x| x.to_torus_point()).collect();
        for (c, pt) in ps.iter().enumerate() {
            assert!((pt.p[0] - c as f64 / 3.0).abs() < 1e-15);
            assert_eq!(pt.q[0], 0.0);
        }
    }

    #[test]
    fn descent_invariants() {
        for d in [&[3u64][..], &[1, 9], &[2, 4], &[2, 2]] {
            let t = ty(d);
            let tau = sample_tau(t.g(), 1, 1.0).unwrap();
            let dd = descent_data(&t, &tau).unwrap();
            assert_eq!(dd.h.len() as u64, t.h0());
            assert_eq!(dd.h_prime.len() as u64, t.h0());
            for x in &dd.h {
                for y in &dd.h {
                    assert!((weil_pairing(x, y, &t) - 1.0).norm() < 1e-12);
                }
            }
            verify_subgroup(&dd.h_prime).unwrap();
        }
    }

    #[test]
    fn torsion_points_are_exact() {
        let x = TorsionPoint::parse("1/3", 1).unwrap();
        assert_eq!(x.order(), 3);
        assert_eq!(cyclic_subgroup(&x).len(), 3);
        let y = TorsionPoint::parse("2/4,1/2", 1).unwrap();
        assert_eq!(y.order(), 2);
        assert!(x.add(&x).add(&x).is_zero());
        let g = generate_subgroup(&[x, y], 1).unwrap();
        assert_eq!(g.len(), 6);
        verify_subgroup(&g).unwrap();
        assert!(verify_subgroup(&g[..5]).is_err());
        assert!(TorsionPoint::parse("1/0", 1).is_err());
        assert!(TorsionPoint::parse("1/3,1/3,1/3", 1).is_err());
    }

    #[test]
    fn complex_value_uses_polarization() {
        let tau = sample_tau(2, 3, 1.0).unwrap();
        let t = ty(&[1, 9]);
        let pt = TorusPoint::new(vec![0.25, 0.5], vec![0.5, 1.0 / 3.0]);
        let z = pt.complex_value(&tau, &t);
        for i in 0..2 {
            let mut want = Complex64::new(t.divisors()[i] as f64 * pt.q[i], 0.0);
            for j in 0..2 {
                want += tau.entry(i, j) * pt.p[j];
            }
            assert!((z[i] - want).norm() < 1e-14);
        }
    }
}
