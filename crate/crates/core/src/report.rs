//! JSON report schemas written by the command line front end.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::normality::{NormalityVerdict, SubgroupSpan};
use crate::ranklab::{JsonFloat, RankReport, Tolerances};
use crate::torus::{BoundCheck, PolarizationType};

#[derive(Serialize)]
pub struct RankSummary {
    pub value: usize,
    pub expected: Option<usize>,
    pub margin: JsonFloatOwned,
    pub stable: bool,
}

/// Owned wrapper so summaries can be built by value.
pub struct JsonFloatOwned(pub f64);

impl Serialize for JsonFloatOwned {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        JsonFloat(self.0).serialize(s)
    }
}

impl From<&RankReport> for RankSummary {
    fn from(r: &RankReport) -> Self {
        Self {
            value: r.rank,
            expected: r.expected,
            margin: JsonFloatOwned(r.margin),
            stable: r.verdict_stable,
        }
    }
}

#[derive(Serialize)]
pub struct BlockSummary {
    pub sigma_index: usize,
    pub sigma: String,
    pub rank: usize,
    pub expected: Option<usize>,
    pub margin: JsonFloatOwned,
}

#[derive(Serialize)]
pub struct TolerancesOut {
    pub theta_eps: f64,
    pub rank_rel_tol: f64,
    pub zero_tol: f64,
}

impl From<&Tolerances> for TolerancesOut {
    fn from(t: &Tolerances) -> Self {
        Self {
            theta_eps: t.theta_eps,
            rank_rel_tol: t.rank_rel_tol,
            zero_tol: t.zero_tol,
        }
    }
}

/// Report of the `check` command.
#[derive(Serialize)]
pub struct CheckReport {
    pub status: &'static str,
    pub g: usize,
    #[serde(rename = "type")]
    pub ptype: Vec<u64>,
    pub h0: u64,
    pub bound: BoundCheck,
    pub two_normal: bool,
    pub r_normal: BTreeMap<String, bool>,
    #[serde(rename = "dim_I2")]
    pub dim_i2: usize,
    pub rank: RankSummary,
    pub r_ranks: BTreeMap<String, RankReport>,
    pub blocks: Vec<BlockSummary>,
    pub kummer_span: Vec<bool>,
    pub tolerances: TolerancesOut,
    pub seed: u64,
    pub tau_source: String,
    pub model: &'static str,
    pub genericity_assumed: bool,
}

impl CheckReport {
    pub fn new(v: &NormalityVerdict, tau_source: String) -> Self {
        Self {
            status: "verdict",
            g: v.ptype.g(),
            ptype: v.ptype.divisors().to_vec(),
            h0: v.ptype.h0(),
            bound: v.bound,
            two_normal: v.two_normal,
            r_normal: v.r_normal.iter().map(|(r, b)| (r.to_string(), *b)).collect(),
            dim_i2: v.dim_i2,
            rank: RankSummary::from(v.rho2()),
            r_ranks: v
                .rank_reports
                .iter()
                .map(|(r, rep)| (r.to_string(), rep.clone()))
                .collect(),
            blocks: v
                .blocks
                .iter()
                .map(|b| BlockSummary {
                    sigma_index: b.sigma_index,
                    sigma: b.sigma.to_string(),
                    rank: b.report.rank,
                    expected: b.report.expected,
                    margin: JsonFloatOwned(b.report.margin),
                })
                .collect(),
            kummer_span: v.kummer_span.clone(),
            tolerances: TolerancesOut::from(&v.tolerances),
            seed: v.seed,
            tau_source,
            model: "standard",
            genericity_assumed: true,
        }
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "type ({}) g={} h0={}: bound {} > {} {}\n",
            self.ptype.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            self.g,
            self.h0,
            self.bound.lhs,
            self.bound.rhs,
            if self.bound.holds { "holds" } else { "fails" }
        );
        s.push_str(&format!(
            "rho_2 rank {} of {} -> {}; dim I_2 = {}\n",
            self.rank.value,
            self.rank.expected.unwrap_or(0),
            if self.two_normal { "2-normal" } else { "not 2-normal" },
            self.dim_i2
        ));
        for (r, ok) in &self.r_normal {
            s.push_str(&format!("  r={r}: {}\n", if *ok { "surjective" } else { "not surjective" }));
        }
        let full = self.kummer_span.iter().filter(|&&b| b).count();
        s.push_str(&format!(
            "blocks: {full}/{} of rank {}\n",
            self.kummer_span.len(),
            1u64 << self.g
        ));
        s
    }
}

/// Written instead of a verdict when a rank gate fails.
#[derive(Serialize)]
pub struct InconclusiveReport {
    pub status: &'static str,
    pub g: usize,
    #[serde(rename = "type")]
    pub ptype: Vec<u64>,
    pub error: String,
    pub seed: u64,
}

impl InconclusiveReport {
    pub fn new(ptype: &PolarizationType, error: String, seed: u64) -> Self {
        Self {
            status: "inconclusive",
            g: ptype.g(),
            ptype: ptype.divisors().to_vec(),
            error,
            seed,
        }
    }
}

#[derive(Serialize)]
pub struct Hypothesis {
    pub lhs: u64,
    pub rhs: u64,
    pub holds: bool,
}

#[derive(Serialize)]
pub struct SpanReport {
    pub g: usize,
    #[serde(rename = "type")]
    pub ptype: Vec<u64>,
    pub level: u64,
    pub h0: u64,
    pub subgroup_order: usize,
    pub hypothesis: Hypothesis,
    pub out_of_hypothesis: bool,
    pub rank: RankSummary,
    pub spanning: bool,
    pub base_points_excluded: usize,
    pub tolerances: TolerancesOut,
    pub seed: u64,
}

impl SpanReport {
    pub fn new(ptype: &PolarizationType, level: u64, span: &SubgroupSpan, tol: &Tolerances, seed: u64) -> Self {
        let rhs = span.h0 * crate::torus::factorial(ptype.g() as u64);
        Self {
            g: ptype.g(),
            ptype: ptype.divisors().to_vec(),
            level,
            h0: span.h0,
            subgroup_order: span.order,
            hypothesis: Hypothesis {
                lhs: span.order as u64,
                rhs,
                holds: span.hypothesis_holds,
            },
            out_of_hypothesis: !span.hypothesis_holds,
            rank: RankSummary::from(&span.report),
            spanning: span.spanning,
            base_points_excluded: span.base_points_excluded,
            tolerances: TolerancesOut::from(tol),
            seed,
        }
    }
}

#[derive(Serialize)]
pub struct DualSigma {
    pub sigma_index: usize,
    pub sigma: String,
    pub rank: usize,
    pub expected: Option<usize>,
    pub margin: JsonFloatOwned,
    pub spanning: bool,
}

/// `span --subgroup-dual`: the Kummer criterion for every `sigma in H'`,
/// plus the direct evaluation of `|M^2|` at `H'` for `sigma = 0`.
#[derive(Serialize)]
pub struct DualSpanReport {
    pub g: usize,
    #[serde(rename = "type")]
    pub ptype: Vec<u64>,
    pub subgroup_order: usize,
    pub hypothesis: Hypothesis,
    pub out_of_hypothesis: bool,
    pub sigma: Vec<DualSigma>,
    pub direct_sigma0: SpanReport,
    pub spanning_all: bool,
    pub tolerances: TolerancesOut,
    pub seed: u64,
}
