//! Multiplication maps, their block decomposition over the dual subgroup,
//! and the subgroup spanning and containment checks behind the normality
//! verdict.

use std::collections::BTreeMap;
use std::sync::Arc;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ranklab::{
    check_distinct, derive_seed, eval_matrix_with_requested, numeric_rank, sample_points,
    sample_points_for, EvaluationMatrix, RankReport, Tolerances,
};
use crate::theta::{basis_l_power, ProductSection, Scaled, Section, ThetaContext, ThetaSection};
use crate::torus::{
    descent_data, factorial, theorem_bound, verify_subgroup, BoundCheck, PolarizationType,
    RiemannMatrix, TorsionPoint, TorusPoint,
};

/// `H^0(t_{x_1}^* L) x ... x H^0(t_{x_r}^* L) -> H^0(L^r twisted)`.
#[derive(Clone, Debug)]
pub struct MultiplicationMapSpec {
    pub ptype: PolarizationType,
    pub tau: Arc<RiemannMatrix>,
    pub r: usize,
    /// One offset per factor; `None` means all zero.
    pub translations: Option<Vec<TorusPoint>>,
}

impl MultiplicationMapSpec {
    pub fn new(ptype: PolarizationType, tau: Arc<RiemannMatrix>, r: usize) -> Result<Self> {
        let spec = Self {
            ptype,
            tau,
            r,
            translations: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_translations(mut self, translations: Vec<TorusPoint>) -> Result<Self> {
        self.translations = Some(translations);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.r < 2 {
            return Err(Error::InvalidParameter(format!("r must be >= 2, got {}", self.r)));
        }
        if self.ptype.g() != self.tau.g() {
            return Err(Error::InvalidParameter(format!(
                "type {} does not match tau of size {}",
                self.ptype,
                self.tau.g()
            )));
        }
        if let Some(t) = &self.translations {
            if t.len() != self.r {
                return Err(Error::InvalidParameter(format!(
                    "{} translations given for r = {}",
                    t.len(),
                    self.r
                )));
            }
            if t.iter().any(|x| x.g() != self.ptype.g() || !x.is_finite()) {
                return Err(Error::InvalidParameter("bad translation offset".into()));
            }
        }
        Ok(())
    }

    /// `h^0(L^r) = r^g prod d_i`.
    pub fn target_dim(&self) -> usize {
        (self.r as u64).pow(self.ptype.g() as u32) as usize * self.ptype.h0() as usize
    }

    /// Distinct offsets with multiplicities, in order of first appearance.
    fn translation_groups(&self) -> Vec<(TorusPoint, usize)> {
        let g = self.ptype.g();
        let offsets = self
            .translations
            .clone()
            .unwrap_or_else(|| vec![TorusPoint::zero(g); self.r]);
        let mut groups: Vec<(TorusPoint, usize)> = Vec::new();
        for x in offsets {
            match groups.iter_mut().find(|(y, _)| *y == x) {
                Some((_, m)) => *m += 1,
                None => groups.push((x, 1)),
            }
        }
        groups
    }
}

/// Monomials as lists of `(group, basis index)`: multisets within a group of
/// equal offsets, ordered tuples across groups.
fn monomials(h0: usize, groups: &[(TorusPoint, usize)]) -> Vec<Vec<(usize, usize)>> {
    groups
        .iter()
        .enumerate()
        .map(|(gi, (_, mult))| {
            (0..h0)
                .combinations_with_replacement(*mult)
                .map(|c| c.into_iter().map(|i| (gi, i)).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        })
        .multi_cartesian_product()
        .map(|parts| parts.concat())
        .collect()
}

/// Evaluation matrix of all degree-`r` monomials in the (translated) level-1
/// basis, sampled at `1.5 * (h^0(L^r) + max(8, h^0(L^r)/4))` points.
pub fn rho_matrix(spec: &MultiplicationMapSpec, tol: &Tolerances, seed: u64) -> Result<EvaluationMatrix> {
    spec.validate()?;
    let g = spec.ptype.g();
    let basis = basis_l_power(&spec.ptype, &spec.tau, 1)?;
    let h0 = basis.len();
    let groups = spec.translation_groups();
    let (points, requested) = sample_points_for(g, spec.target_dim(), seed);
    check_distinct(&points)?;
    let ctx = ThetaContext::new(&spec.tau, tol.theta_eps, 1)?;
    let zs: Vec<_> = points
        .iter()
        .map(|p| p.complex_value(&spec.tau, &spec.ptype))
        .collect();

    // values[group][basis index][point]
    let values: Vec<Vec<Vec<Scaled>>> = groups
        .iter()
        .map(|(x, _)| {
            basis
                .par_iter()
                .map(|s| {
                    let s = s.translated(x);
                    zs.iter().map(|z| s.eval_scaled(z, &ctx)).collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let monos = monomials(h0, &groups);
    let rows: Vec<Vec<Scaled>> = monos
        .par_iter()
        .map(|mono| {
            (0..points.len())
                .map(|j| {
                    mono.iter()
                        .fold(Scaled::one(), |acc, &(gi, i)| acc.mul(values[gi][i][j]))
                })
                .collect()
        })
        .collect();
    let labels = monos
        .iter()
        .map(|mono| {
            mono.iter()
                .map(|&(gi, i)| {
                    let c: Vec<String> = basis[i].characteristic().iter().map(i64::to_string).collect();
                    format!("g{gi}c({})", c.join(","))
                })
                .join("*")
        })
        .collect();
    EvaluationMatrix::from_scaled_rows(labels, points, &rows, requested)
}

/// Rank of `rho_r` (or its translated variant) against `h^0(L^r)`, gated on
/// margin and resampling stability.
pub fn rho_rank(spec: &MultiplicationMapSpec, tol: &Tolerances, seed: u64) -> Result<RankReport> {
    let m = rho_matrix(spec, tol, seed)?;
    let report = numeric_rank(&m, tol.rank_rel_tol)?.with_expected(spec.target_dim());
    report.require_conclusive(&format!("rho_{}", spec.r), tol.min_margin)?;
    Ok(report)
}

/// `dim Sym^2 H^0(L) = h0 (h0 + 1) / 2`.
pub fn sym2_dim(h0: usize) -> usize {
    h0 * (h0 + 1) / 2
}

/// `dim I_2 = dim Sym^2 H^0(L) - rank rho_2`.
pub fn quadric_dim(h0: usize, rho2: &RankReport) -> Result<usize> {
    if !rho2.verdict_stable {
        return Err(Error::inconclusive("quadric_dim", "rho_2 rank is not stable"));
    }
    sym2_dim(h0).checked_sub(rho2.rank).ok_or_else(|| {
        Error::Consistency(format!(
            "rank {} exceeds dim Sym^2 = {}",
            rho2.rank,
            sym2_dim(h0)
        ))
    })
}

/// Rank of one block `rho_sigma` on the principally polarized quotient.
#[derive(Clone, Debug, serde::Serialize)]
pub struct BlockRank {
    pub sigma_index: usize,
    #[serde(serialize_with = "serialize_point")]
    pub sigma: TorsionPoint,
    pub report: RankReport,
}

fn serialize_point<S: serde::Serializer>(p: &TorsionPoint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&p.to_string())
}

impl BlockRank {
    pub fn is_full(&self) -> bool {
        self.report.is_full()
    }
}

/// Rank of `{ theta(z - b) theta(z + b - sigma) : b in subgroup }` on
/// `B = C^g / (tau Z^g + Z^g)`, compared against `h^0(M^2) = 2^g`.
///
/// `b` and `sigma - b` give the same product, so one of each pair is kept.
pub fn kummer_block_report(
    tau: &Arc<RiemannMatrix>,
    subgroup: &[TorsionPoint],
    sigma: &TorsionPoint,
    tol: &Tolerances,
    seed: u64,
) -> Result<RankReport> {
    let g = tau.g();
    let principal = PolarizationType::principal(g);
    let theta = ThetaSection::new(&principal, tau.clone(), 1, &vec![0; g])?;
    let s = sigma.to_torus_point();
    let sections = subgroup
        .iter()
        .filter(|b| **b <= sigma.sub(b))
        .map(|b| {
            let bt = b.to_torus_point();
            ProductSection::new(vec![theta.translated(&bt.neg()), theta.translated(&bt.sub(&s))])
        })
        .collect::<Result<Vec<_>>>()?;
    let expected = 1usize << g;
    let (points, requested) = sample_points_for(g, expected, seed);
    let m = eval_matrix_with_requested(&sections, &points, requested, tol.theta_eps)?;
    Ok(numeric_rank(&m, tol.rank_rel_tol)?.with_expected(expected))
}

/// One block per `sigma in H'`, in the order of the descent data.
pub fn block_rho_ranks(
    ptype: &PolarizationType,
    tau: &Arc<RiemannMatrix>,
    tol: &Tolerances,
    seed: u64,
) -> Result<Vec<BlockRank>> {
    let dd = descent_data(ptype, tau)?;
    dd.h_prime
        .par_iter()
        .enumerate()
        .map(|(idx, sigma)| {
            let report =
                kummer_block_report(tau, &dd.h_prime, sigma, tol, derive_seed(seed, 1000 + idx as u64))?;
            report.require_conclusive(&format!("block sigma[{idx}] = {sigma}"), tol.min_margin)?;
            Ok(BlockRank {
                sigma_index: idx,
                sigma: sigma.clone(),
                report,
            })
        })
        .collect()
}

/// Whether the image of `H'` under `b -> t_b^* theta + t_{sigma - b}^* theta`
/// spans `|t_sigma^* M^2|`.
pub fn kummer_span_check(
    ptype: &PolarizationType,
    tau: &Arc<RiemannMatrix>,
    sigma: &TorsionPoint,
    tol: &Tolerances,
    seed: u64,
) -> Result<bool> {
    let dd = descent_data(ptype, tau)?;
    if dd.sigma_index(sigma).is_none() {
        return Err(Error::InvalidInput(format!("{sigma} is not a point of H'")));
    }
    kummer_span_for_subgroup(tau, &dd.h_prime, sigma, tol, seed)
}

/// Same criterion for an arbitrary finite subgroup of `B` containing `sigma`.
pub fn kummer_span_for_subgroup(
    tau: &Arc<RiemannMatrix>,
    subgroup: &[TorsionPoint],
    sigma: &TorsionPoint,
    tol: &Tolerances,
    seed: u64,
) -> Result<bool> {
    verify_subgroup(subgroup)?;
    let report = kummer_block_report(tau, subgroup, sigma, tol, seed)?;
    report.require_conclusive("kummer_span", tol.min_margin)?;
    Ok(report.is_full())
}

/// Outcome of evaluating a full linear system at the points of a subgroup.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SubgroupSpan {
    pub report: RankReport,
    pub spanning: bool,
    pub order: usize,
    pub h0: u64,
    /// `order > h0 * g!`.
    pub hypothesis_holds: bool,
    pub base_points_excluded: usize,
}

/// Evaluates the basis of `H^0(L^k)` (type `D`) at the points of `G` outside
/// the base locus; the images span `P H^0` iff the rank is `h^0`.
pub fn subgroup_span_check(
    ptype: &PolarizationType,
    tau: &Arc<RiemannMatrix>,
    level: u64,
    subgroup: &[TorsionPoint],
    tol: &Tolerances,
    seed: u64,
) -> Result<SubgroupSpan> {
    verify_subgroup(subgroup)?;
    let g = ptype.g();
    if subgroup[0].g() != g {
        return Err(Error::InvalidInput("subgroup dimension does not match type".into()));
    }
    let basis = basis_l_power(ptype, tau, level)?;
    let h0 = basis.len() as u64;
    let ctx = ThetaContext::new(tau, tol.theta_eps, level)?;
    let group_pts: Vec<TorusPoint> = subgroup.iter().map(|x| x.to_torus_point()).collect();
    let reference = sample_points(g, 16, seed);
    let values = basis
        .par_iter()
        .map(|s| {
            group_pts
                .iter()
                .chain(&reference)
                .map(|x| s.eval_at_point(x, &ctx))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    // Invariant norms: the mantissa is |s(z)| exp(-pi k y^T Y^{-1} y).
    let sup = values
        .iter()
        .flatten()
        .map(|v| v.mantissa.norm())
        .fold(0.0, f64::max);
    let n = group_pts.len();
    let keep: Vec<usize> = (0..n)
        .filter(|&j| values.iter().any(|row| row[j].mantissa.norm() >= tol.zero_tol * sup))
        .collect();
    if keep.is_empty() {
        return Err(Error::Degenerate("every subgroup point lies in the base locus".into()));
    }
    let rows: Vec<Vec<Scaled>> = values
        .iter()
        .map(|row| keep.iter().map(|&j| row[j]).collect())
        .collect();
    let m = EvaluationMatrix::from_scaled_rows(
        basis.iter().map(|s| s.label()).collect(),
        keep.iter().map(|&j| group_pts[j].clone()).collect(),
        &rows,
        keep.len(),
    )?;
    let report = numeric_rank(&m, tol.rank_rel_tol)?.with_expected(h0 as usize);
    report.require_conclusive("subgroup_span", tol.min_margin)?;
    let spanning = report.rank as u64 == h0;
    Ok(SubgroupSpan {
        report,
        spanning,
        order: n,
        h0,
        hypothesis_holds: n as u64 > h0 * factorial(g as u64),
        base_points_excluded: n - keep.len(),
    })
}

/// How many points of a subgroup a section's divisor contains.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ProbeOutcome {
    pub count_on_divisor: usize,
    /// Points whose relative value falls in `[zero_tol, zero_guard)`.
    pub ambiguous: usize,
    pub order: usize,
    pub h0: u64,
    /// `h0 * g!`, the self-intersection number of the divisor.
    pub degree_bound: u64,
    pub bound_ok: bool,
    /// Full containment of a subgroup larger than the bound. On a generic
    /// (simple) torus this points at the zero tolerance, not at a finding.
    pub calibration_alarm: bool,
}

pub fn divisor_subgroup_probe<S: Section>(
    section: &S,
    subgroup: &[TorsionPoint],
    tol: &Tolerances,
    seed: u64,
) -> Result<ProbeOutcome> {
    verify_subgroup(subgroup)?;
    let g = section.g();
    let ctx = ThetaContext::new(section.tau(), tol.theta_eps, section.level())?;
    let at_group = subgroup
        .iter()
        .map(|x| Ok(section.eval_at_point(&x.to_torus_point(), &ctx)?.mantissa.norm()))
        .collect::<Result<Vec<f64>>>()?;
    let sample_sup = sample_points(g, 64, seed)
        .iter()
        .map(|x| Ok(section.eval_at_point(x, &ctx)?.mantissa.norm()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .chain(at_group.iter().copied())
        .fold(0.0, f64::max);
    if !(sample_sup > 0.0) {
        return Err(Error::Degenerate("section vanishes at every sample point".into()));
    }
    let rel: Vec<f64> = at_group.iter().map(|v| v / sample_sup).collect();
    let count_on_divisor = rel.iter().filter(|&&r| r < tol.zero_tol).count();
    let ambiguous = rel
        .iter()
        .filter(|&&r| r >= tol.zero_tol && r < tol.zero_guard)
        .count();
    let order = subgroup.len();
    let h0 = section.h0();
    let degree_bound = h0 * factorial(g as u64);
    let bound_ok = count_on_divisor < order || order as u64 <= degree_bound;
    Ok(ProbeOutcome {
        count_on_divisor,
        ambiguous,
        order,
        h0,
        degree_bound,
        bound_ok,
        calibration_alarm: !bound_ok,
    })
}

/// Everything the normality pipeline concluded for one `(D, tau)`.
#[derive(Clone, Debug)]
pub struct NormalityVerdict {
    pub ptype: PolarizationType,
    pub bound: BoundCheck,
    pub two_normal: bool,
    pub r_normal: BTreeMap<usize, bool>,
    pub rank_reports: BTreeMap<usize, RankReport>,
    pub dim_i2: usize,
    pub blocks: Vec<BlockRank>,
    pub kummer_span: Vec<bool>,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl NormalityVerdict {
    pub fn rho2(&self) -> &RankReport {
        &self.rank_reports[&2]
    }

    pub fn block_rank_sum(&self) -> usize {
        self.blocks.iter().map(|b| b.report.rank).sum()
    }
}

/// Runs the bound, `rho_r` for `r in {2} + r_list`, every block `rho_sigma`
/// and the Kummer criterion, then cross-checks them.
pub fn full_check(
    ptype: &PolarizationType,
    tau: &Arc<RiemannMatrix>,
    r_list: &[usize],
    tol: &Tolerances,
    seed: u64,
) -> Result<NormalityVerdict> {
    tol.validate()?;
    if ptype.g() != tau.g() {
        return Err(Error::InvalidParameter(format!(
            "type {ptype} has length {} but tau is {}x{}",
            ptype.g(),
            tau.g(),
            tau.g()
        )));
    }
    if let Some(bad) = r_list.iter().find(|r| !(2..=4).contains(*r)) {
        return Err(Error::InvalidParameter(format!("r = {bad} is outside {{2, 3, 4}}")));
    }
    let mut rs: Vec<usize> = r_list.to_vec();
    rs.push(2);
    rs.sort_unstable();
    rs.dedup();

    let bound = theorem_bound(ptype);
    let (rank_results, blocks) = rayon::join(
        || {
            rs.par_iter()
                .map(|&r| {
                    let spec = MultiplicationMapSpec::new(ptype.clone(), tau.clone(), r)?;
                    Ok((r, rho_rank(&spec, tol, derive_seed(seed, r as u64))?))
                })
                .collect::<Result<Vec<_>>>()
        },
        || block_rho_ranks(ptype, tau, tol, seed),
    );
    let rank_reports: BTreeMap<usize, RankReport> = rank_results?.into_iter().collect();
    let blocks = blocks?;

    let h0 = ptype.h0() as usize;
    let rho2 = &rank_reports[&2];
    let two_normal = rho2.is_full();
    let dim_i2 = quadric_dim(h0, rho2)?;
    let r_normal: BTreeMap<usize, bool> = rank_reports
        .iter()
        .map(|(&r, rep)| (r, rep.is_full()))
        .collect();
    let kummer_span: Vec<bool> = blocks.iter().map(BlockRank::is_full).collect();

    let verdict = NormalityVerdict {
        ptype: ptype.clone(),
        bound,
        two_normal,
        r_normal,
        rank_reports,
        dim_i2,
        blocks,
        kummer_span,
        seed,
        tolerances: *tol,
    };
    check_consistency(&verdict)?;
    Ok(verdict)
}

/// The cross-route identities every verdict must satisfy.
pub fn check_consistency(v: &NormalityVerdict) -> Result<()> {
    let rho2 = v.rho2();
    let block_sum = v.block_rank_sum();
    if block_sum != rho2.rank {
        return Err(Error::Consistency(format!(
            "rank rho_2 = {} on A but the blocks on B sum to {block_sum}",
            rho2.rank
        )));
    }
    let all_blocks = v.kummer_span.iter().all(|&b| b);
    if all_blocks != v.two_normal {
        return Err(Error::Consistency(format!(
            "two_normal = {} but all Kummer spans = {all_blocks}",
            v.two_normal
        )));
    }
    if v.two_normal {
        if let Some((r, _)) = v.r_normal.iter().find(|(_, &ok)| !ok) {
            let rep = &v.rank_reports[r];
            return Err(Error::Consistency(format!(
                "2-normal but rho_{r} has rank {} < {}",
                rep.rank,
                rep.expected.unwrap_or(0)
            )));
        }
    }
    if v.bound.holds && !v.two_normal {
        return Err(Error::Consistency(format!(
            "h0 = {} > {} but rho_2 has rank {} < {}; tau may not be generic",
            v.bound.lhs,
            v.bound.rhs,
            rho2.rank,
            rho2.expected.unwrap_or(0)
        )));
    }
    Ok(())
}

/// A cyclic subgroup of order exactly `order` with a random generator
/// `(a, b) / order`, `gcd(a, b, order) = 1`.
pub fn random_cyclic_subgroup(g: usize, order: i64, seed: u64) -> Vec<TorsionPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let p: Vec<i64> = (0..g).map(|_| rng.random_range(0..order)).collect();
        let q: Vec<i64> = (0..g).map(|_| rng.random_range(0..order)).collect();
        let gen = TorsionPoint::new(order, p, q).expect("positive order");
        if gen.order() == order {
            return crate::torus::cyclic_subgroup(&gen);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts() {
        let z = TorusPoint::zero(1);
        let x = TorusPoint::new(vec![0.1], vec![0.2]);
        assert_eq!(monomials(9, &[(z.clone(), 2)]).len(), 45);
        assert_eq!(monomials(6, &[(z.clone(), 3)]).len(), 56);
        assert_eq!(monomials(9, &[(z.clone(), 4)]).len(), 495);
        assert_eq!(monomials(3, &[(z, 1), (x, 1)]).len(), 9);
    }

    #[test]
    fn spec_validation() {
        let tau = Arc::new(crate::torus::sample_tau(1, 1, 1.0).unwrap());
        let t = PolarizationType::new(vec![3]).unwrap();
        assert!(MultiplicationMapSpec::new(t.clone(), tau.clone(), 1).is_err());
        let spec = MultiplicationMapSpec::new(t.clone(), tau.clone(), 2).unwrap();
        assert_eq!(spec.target_dim(), 6);
        assert!(spec.clone().with_translations(vec![TorusPoint::zero(1)]).is_err());
        let t2 = PolarizationType::new(vec![1, 3]).unwrap();
        assert!(MultiplicationMapSpec::new(t2, tau, 2).is_err());
    }

    #[test]
    fn quadric_dim_arithmetic() {
        let rep = RankReport {
            rank: 8,
            expected: Some(8),
            singular_values: vec![],
            margin: f64::INFINITY,
            rel_tol: 1e-8,
            rows: 10,
            sample_count: 30,
            requested_samples: 20,
            verdict_stable: true,
            degenerate: false,
        };
        assert_eq!(quadric_dim(4, &rep).unwrap(), 2);
        let mut unstable = rep.clone();
        unstable.verdict_stable = false;
        assert!(matches!(quadric_dim(4, &unstable), Err(Error::Inconclusive { .. })));
        let mut too_big = rep;
        too_big.rank = 11;
        assert!(matches!(quadric_dim(4, &too_big), Err(Error::Consistency(_))));
    }

    #[test]
    fn cyclic_subgroups_have_requested_order() {
        for n in [1, 2, 5, 7, 11] {
            let g = random_cyclic_subgroup(1, n, 3);
            assert_eq!(g.len() as i64, n);
            verify_subgroup(&g).unwrap();
        }
    }

    #[test]
    fn full_check_rejects_bad_r() {
        let tau = Arc::new(crate::torus::sample_tau(1, 1, 1.0).unwrap());
        let t = PolarizationType::new(vec![3]).unwrap();
        assert!(full_check(&t, &tau, &[5], &Tolerances::default(), 0).is_err());
    }
}
