//! Evaluation matrices and numeric rank certification.
//!
//! A collection of sections is sampled at points of the torus; the numeric
//! rank of the resulting matrix equals the dimension of their span once
//! enough generic points are used. Every rank carries its singular-value
//! margin and a resampling check, and downstream verdicts refuse to consume
//! a rank that fails either.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::ser::{Serialize, SerializeStruct, Serializer};

use crate::error::{Error, Result};
use crate::theta::{Scaled, Section, ThetaContext};
use crate::torus::TorusPoint;

/// Tolerance knobs shared by all rank-based checks.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    /// Absolute error target for normalized theta values.
    pub theta_eps: f64,
    /// `sigma_i > rank_rel_tol * sigma_1` counts towards the rank.
    pub rank_rel_tol: f64,
    /// Relative magnitude below which a section value counts as zero.
    pub zero_tol: f64,
    /// Upper edge of the ambiguous band for zero detection.
    pub zero_guard: f64,
    /// Smallest margin `sigma_r / sigma_{r+1}` accepted as conclusive.
    pub min_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            theta_eps: 1e-12,
            rank_rel_tol: 1e-8,
            zero_tol: 1e-6,
            zero_guard: 1e-4,
            min_margin: 10.0,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("theta_eps", self.theta_eps)?;
        positive("rank_rel_tol", self.rank_rel_tol)?;
        positive("zero_tol", self.zero_tol)?;
        positive("zero_guard", self.zero_guard)?;
        positive("min_margin", self.min_margin)?;
        if self.rank_rel_tol >= 1.0 {
            return Err(Error::InvalidParameter("rank_rel_tol must be < 1".into()));
        }
        if self.zero_guard < self.zero_tol {
            return Err(Error::InvalidParameter("zero_guard must be >= zero_tol".into()));
        }
        Ok(())
    }
}

/// `ambient + max(8, ambient / 4)`.
pub fn default_sample_count(ambient_dim: usize) -> usize {
    ambient_dim + (ambient_dim / 4).max(8)
}

/// Column count used for the resampling check: 1.5x the requested count.
pub fn stability_count(requested: usize) -> usize {
    (3 * requested).div_ceil(2)
}

/// Uniform points with `p, q in [0, 1)^g`, seeded.
pub fn sample_points(g: usize, count: usize, seed: u64) -> Vec<TorusPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let p = (0..g).map(|_| rng.random::<f64>()).collect();
            let q = (0..g).map(|_| rng.random::<f64>()).collect();
            TorusPoint::new(p, q)
        })
        .collect()
}

/// Mixes a tag into a seed so that independent sub-computations draw
/// independent point sets.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut x = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn check_distinct(points: &[TorusPoint]) -> Result<()> {
    for (i, a) in points.iter().enumerate() {
        for b in &points[..i] {
            if a.coincides(b, 1e-12) {
                return Err(Error::InvalidInput(format!(
                    "evaluation points coincide on the torus: {a:?} and {b:?}"
                )));
            }
        }
    }
    Ok(())
}

/// Section values at sample points, rescaled by exact nonzero diagonal
/// factors on both sides (which leave the rank unchanged).
#[derive(Clone, Debug)]
pub struct EvaluationMatrix {
    entries: DMatrix<Complex64>,
    row_ids: Vec<String>,
    points: Vec<TorusPoint>,
    /// `ln` of the factor each row was divided by.
    row_log_scales: Vec<f64>,
    /// `ln` of the factor each column was divided by.
    col_log_scales: Vec<f64>,
    requested: usize,
}

impl EvaluationMatrix {
    /// Builds from scaled values. Columns are divided by their largest entry
    /// magnitude, then rows by their sup-norm.
    pub fn from_scaled_rows(
        row_ids: Vec<String>,
        points: Vec<TorusPoint>,
        rows: &[Vec<Scaled>],
        requested: usize,
    ) -> Result<Self> {
        let nr = rows.len();
        let nc = points.len();
        if nr == 0 {
            return Err(Error::InvalidInput("no sections to evaluate".into()));
        }
        if nc == 0 || requested == 0 || requested > nc {
            return Err(Error::InvalidInput(format!(
                "need 1 <= requested ({requested}) <= points ({nc})"
            )));
        }
        if rows.iter().any(|r| r.len() != nc) || row_ids.len() != nr {
            return Err(Error::InvalidInput("ragged evaluation rows".into()));
        }
        let mut col_log_scales = vec![0.0; nc];
        for (j, c) in col_log_scales.iter_mut().enumerate() {
            let best = rows
                .iter()
                .map(|r| r[j].ln_abs())
                .filter(|v| v.is_finite())
                .fold(f64::NEG_INFINITY, f64::max);
            if best.is_finite() {
                *c = best;
            }
        }
        let mut entries = DMatrix::from_fn(nr, nc, |i, j| {
            let v = rows[i][j];
            v.mantissa * (v.log_scale - col_log_scales[j]).exp()
        });
        if entries.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite section value".into()));
        }
        let mut row_log_scales = vec![0.0; nr];
        for (i, r) in row_log_scales.iter_mut().enumerate() {
            let sup = entries.row(i).iter().map(|c| c.norm()).fold(0.0, f64::max);
            if sup > 0.0 {
                *r = sup.ln();
                entries.row_mut(i).iter_mut().for_each(|c| *c /= sup);
            }
        }
        Ok(Self {
            entries,
            row_ids,
            points,
            row_log_scales,
            col_log_scales,
            requested,
        })
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn points(&self) -> &[TorusPoint] {
        &self.points
    }

    pub fn row_log_scales(&self) -> &[f64] {
        &self.row_log_scales
    }

    pub fn col_log_scales(&self) -> &[f64] {
        &self.col_log_scales
    }

    /// Number of columns the caller asked for; the rest exist for the
    /// resampling check.
    pub fn requested(&self) -> usize {
        self.requested
    }
}

/// Evaluates every section at every point. `requested` defaults to all
/// points, in which case no resampling check is possible.
pub fn eval_matrix<S: Section>(
    sections: &[S],
    points: &[TorusPoint],
    epsilon: f64,
) -> Result<EvaluationMatrix> {
    eval_matrix_with_requested(sections, points, points.len(), epsilon)
}

pub fn eval_matrix_with_requested<S: Section>(
    sections: &[S],
    points: &[TorusPoint],
    requested: usize,
    epsilon: f64,
) -> Result<EvaluationMatrix> {
    let Some(first) = sections.first() else {
        return Err(Error::InvalidInput("no sections to evaluate".into()));
    };
    check_distinct(points)?;
    let max_level = sections.iter().map(|s| s.level()).max().unwrap_or(1);
    let ctx = ThetaContext::new(first.tau(), epsilon, max_level)?;
    let zs: Vec<_> = points
        .iter()
        .map(|p| p.complex_value(first.tau(), first.ptype()))
        .collect();
    let rows = sections
        .par_iter()
        .map(|s| zs.iter().map(|z| s.eval_scaled(z, &ctx)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    EvaluationMatrix::from_scaled_rows(
        sections.iter().map(|s| s.label()).collect(),
        points.to_vec(),
        &rows,
        requested,
    )
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<Complex64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = m.clone().svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

fn rank_at(sv: &[f64], rel_tol: f64) -> usize {
    match sv.first() {
        Some(&s1) if s1 > 0.0 => sv.iter().take_while(|&&s| s > rel_tol * s1).count(),
        _ => 0,
    }
}

/// Numeric rank with margin and resampling evidence.
#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    /// Dimension the rank is compared against, when there is one.
    pub expected: Option<usize>,
    pub singular_values: Vec<f64>,
    /// `sigma_rank / sigma_{rank+1}`; infinite when nothing follows the cut.
    pub margin: f64,
    pub rel_tol: f64,
    pub rows: usize,
    pub sample_count: usize,
    pub requested_samples: usize,
    /// Rank unchanged between the requested columns and the full 1.5x set.
    pub verdict_stable: bool,
    /// All singular values vanish.
    pub degenerate: bool,
}

impl RankReport {
    pub fn with_expected(mut self, expected: usize) -> Self {
        self.expected = Some(expected);
        self
    }

    pub fn is_full(&self) -> bool {
        self.expected == Some(self.rank)
    }

    pub fn is_conclusive(&self, min_margin: f64) -> bool {
        self.verdict_stable && self.margin >= min_margin
    }

    pub fn require_conclusive(&self, component: &str, min_margin: f64) -> Result<()> {
        if !self.verdict_stable {
            return Err(Error::inconclusive(
                component,
                format!(
                    "rank changed under resampling ({} requested, {} total columns)",
                    self.requested_samples, self.sample_count
                ),
            ));
        }
        if self.margin < min_margin {
            return Err(Error::inconclusive(
                component,
                format!(
                    "singular value margin {:.3e} below {min_margin} at rank {}; rerun with a fresh seed",
                    self.margin, self.rank
                ),
            ));
        }
        Ok(())
    }

    /// Leading singular values.
    pub fn sv_head(&self) -> &[f64] {
        &self.singular_values[..self.singular_values.len().min(3)]
    }

    /// Singular values straddling the rank cut.
    pub fn sv_tail(&self) -> &[f64] {
        let n = self.singular_values.len();
        let lo = self.rank.saturating_sub(2).min(n);
        let hi = (self.rank + 2).min(n);
        &self.singular_values[lo..hi]
    }
}

/// Float that serializes `inf` as the string `"inf"`.
pub(crate) struct JsonFloat(pub f64);

impl Serialize for JsonFloat {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl Serialize for RankReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("RankReport", 6)?;
        st.serialize_field("rank", &self.rank)?;
        st.serialize_field("expected", &self.expected)?;
        st.serialize_field("margin", &JsonFloat(self.margin))?;
        st.serialize_field("stable", &self.verdict_stable)?;
        st.serialize_field("sv_head", self.sv_head())?;
        st.serialize_field("sv_tail", self.sv_tail())?;
        st.end()
    }
}

/// Rank by `sigma_i > rel_tol * sigma_1`; the leading `requested` columns are
/// ranked separately to decide `verdict_stable`.
pub fn numeric_rank(m: &EvaluationMatrix, rel_tol: f64) -> Result<RankReport> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidParameter(format!("rel_tol must lie in (0, 1), got {rel_tol}")));
    }
    let sv = singular_values(m.entries());
    let rank = rank_at(&sv, rel_tol);
    let degenerate = rank == 0;
    let margin = if rank == 0 || rank >= sv.len() || sv[rank] == 0.0 {
        f64::INFINITY
    } else {
        sv[rank - 1] / sv[rank]
    };
    let verdict_stable = if m.requested() < m.ncols() {
        let sub = m.entries().columns(0, m.requested()).into_owned();
        rank_at(&singular_values(&sub), rel_tol) == rank
    } else {
        true
    };
    Ok(RankReport {
        rank,
        expected: None,
        singular_values: sv,
        margin,
        rel_tol,
        rows: m.nrows(),
        sample_count: m.ncols(),
        requested_samples: m.requested(),
        verdict_stable,
        degenerate,
    })
}

/// Whether `sections` span a space of dimension `ambient_dim`. The leading
/// two thirds of `points` form the base sample for the resampling check.
pub fn span_rank<S: Section>(
    sections: &[S],
    ambient_dim: usize,
    points: &[TorusPoint],
    tol: &Tolerances,
) -> Result<(RankReport, bool)> {
    if points.len() < ambient_dim + 8 {
        return Err(Error::InvalidParameter(format!(
            "span check needs at least {} points, got {}",
            ambient_dim + 8,
            points.len()
        )));
    }
    let requested = (2 * points.len()).div_ceil(3).max(ambient_dim + 8).min(points.len());
    let m = eval_matrix_with_requested(sections, points, requested, tol.theta_eps)?;
    let report = numeric_rank(&m, tol.rank_rel_tol)?.with_expected(ambient_dim);
    report.require_conclusive("span_rank", tol.min_margin)?;
    let spanning = report.rank == ambient_dim;
    Ok((report, spanning))
}

/// Sampled points for an ambient dimension: the default count times 1.5.
pub fn sample_points_for(g: usize, ambient_dim: usize, seed: u64) -> (Vec<TorusPoint>, usize) {
    let requested = default_sample_count(ambient_dim);
    (sample_points(g, stability_count(requested), seed), requested)
}
