use serde::Serialize;

use super::audit::{validate_spec, AssumptionAudit, ComplierGroup, GroupTable};
use super::moments::{analytic_bounds, analytic_moments, true_parameters};
use super::PopulationSpec;
use crate::error::SpecError;
use crate::estimands::TreatmentDef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The population contradicts a maintained assumption; not an
    /// algebraic failure.
    Flagged,
    NotApplicable,
}

/// One identity or containment claim evaluated on a population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub id: String,
    pub claim: String,
    pub status: CheckStatus,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub tolerance: f64,
    pub audit: AssumptionAudit,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Flagged)
    }

    /// No failed and no flagged check.
    pub fn all_passed(&self) -> bool {
        self.failures().next().is_none() && self.flagged().next().is_none()
    }

    pub fn get(&self, id: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.id == id)
    }

    /// Checks whose id starts with `family`, e.g. `"g"`.
    pub fn family<'a>(&'a self, family: &'a str) -> impl Iterator<Item = &'a Check> + 'a {
        self.checks.iter().filter(move |c| c.id.starts_with(family))
    }
}

struct Checker {
    tol: f64,
    checks: Vec<Check>,
}

impl Checker {
    fn scale(&self, a: f64, b: f64) -> f64 {
        self.tol * a.abs().max(b.abs()).max(1.0)
    }

    fn push(&mut self, id: &str, claim: &str, status: CheckStatus, lhs: Option<f64>, rhs: Option<f64>, detail: Option<String>) {
        self.checks.push(Check {
            id: id.to_string(),
            claim: claim.to_string(),
            status,
            lhs,
            rhs,
            detail,
        });
    }

    fn equal(&mut self, id: &str, claim: &str, lhs: f64, rhs: f64) {
        let ok = (lhs - rhs).abs() <= self.scale(lhs, rhs);
        let status = if ok { CheckStatus::Pass } else { CheckStatus::Fail };
        let detail = (!ok).then(|| format!("{claim}: left side {lhs} differs from right side {rhs}"));
        self.push(id, claim, status, Some(lhs), Some(rhs), detail);
    }

    /// `lhs <= rhs` up to tolerance.
    fn at_most(&mut self, id: &str, claim: &str, lhs: f64, rhs: f64) {
        let ok = lhs <= rhs + self.scale(lhs, rhs);
        let status = if ok { CheckStatus::Pass } else { CheckStatus::Fail };
        let detail = (!ok).then(|| format!("{claim}: {lhs} exceeds {rhs}"));
        self.push(id, claim, status, Some(lhs), Some(rhs), detail);
    }

    fn skip(&mut self, id: &str, claim: &str, why: &str) {
        self.push(id, claim, CheckStatus::NotApplicable, None, None, Some(why.to_string()));
    }
}

fn mean_times_prob(groups: &GroupTable, g: ComplierGroup, cell: (usize, usize)) -> f64 {
    let p = groups.prob(g);
    if p == 0.0 {
        0.0
    } else {
        groups.mean(g, cell.0, cell.1).unwrap_or(f64::NAN) * p
    }
}

/// Evaluates every identity and containment claim on the exact population
/// moments. Always-true identities fail only through arithmetic error;
/// containments are checked when their assumptions hold.
///
/// Comparisons use `tolerance * max(1, |lhs|, |rhs|)`.
pub fn verify_identities(spec: &PopulationSpec, tolerance: f64) -> Result<VerificationReport, SpecError> {
    use ComplierGroup::*;
    let audit = validate_spec(spec)?;
    let groups = GroupTable::new(spec);
    let m = analytic_moments(spec);
    let d = m.delta;
    let p = |g| groups.prob(g);
    let late = |g| {
        let pg = groups.prob(g);
        if pg == 0.0 {
            0.0
        } else {
            groups.late(g).unwrap_or(f64::NAN) * pg
        }
    };
    let mut c = Checker {
        tol: tolerance,
        checks: Vec::new(),
    };

    // (a) first stages and reduced form
    c.equal("a1", "first stage of D1 = P[C1,C2]+P[C1,N2]+P[C1,A2]", d.d1, p(C1C2) + p(C1N2) + p(C1A2));
    c.equal("a2", "first stage of D2 = P[C1,C2]+P[N1,C2]+P[A1,C2]", d.d2, p(C1C2) + p(N1C2) + p(A1C2));
    c.equal("a3", "first stage of D1*D2 = P[C1,C2]+P[C1,A2]+P[A1,C2]", d.d_and, p(C1C2) + p(C1A2) + p(A1C2));
    c.equal("a4", "first stage of max(D1,D2) = P[C1,C2]+P[C1,N2]+P[N1,C2]", d.d_or, p(C1C2) + p(C1N2) + p(N1C2));
    let rf_sum: f64 = ComplierGroup::ALL.iter().map(|&g| late(g)).sum();
    c.equal("a5", "reduced form = sum of group effects times shares", d.y, rf_sum);

    // (b) the same under double exclusion
    let b_claims = [
        "first stage of D1 = P[C1,C2]+P[C1,N2]+P[C1,A2] (double exclusion)",
        "first stage of D2 = P[C1,C2] (double exclusion)",
        "first stage of D1*D2 = P[C1,C2]+P[C1,A2] (double exclusion)",
        "first stage of max(D1,D2) = P[C1,C2]+P[C1,N2] (double exclusion)",
        "reduced form = effects of {C1,C2},{C1,N2},{C1,A2} (double exclusion)",
    ];
    if audit.double_exclusion {
        c.equal("b1", b_claims[0], d.d1, p(C1C2) + p(C1N2) + p(C1A2));
        c.equal("b2", b_claims[1], d.d2, p(C1C2));
        c.equal("b3", b_claims[2], d.d_and, p(C1C2) + p(C1A2));
        c.equal("b4", b_claims[3], d.d_or, p(C1C2) + p(C1N2));
        c.equal("b5", b_claims[4], d.y, late(C1C2) + late(C1N2) + late(C1A2));
    } else {
        for (i, claim) in b_claims.iter().enumerate() {
            c.skip(&format!("b{}", i + 1), claim, "double exclusion does not hold");
        }
    }

    // (c) necessary conditions for no movers
    c.equal("c1", "contrast of max(D1,D2)-D2 = P[C1,N2]-P[A1,C2]", d.g_or, p(C1N2) - p(A1C2));
    c.equal("c2", "contrast of D1*D2-D2 = P[C1,A2]-P[N1,C2]", d.g_and, p(C1A2) - p(N1C2));
    c.equal(
        "c3",
        "contrast of (max(D1,D2)-D2)Y = E[Y(1,0)|C1,N2]P[C1,N2]-E[Y(1,0)|A1,C2]P[A1,C2]",
        d.gy_or,
        mean_times_prob(&groups, C1N2, (1, 0)) - mean_times_prob(&groups, A1C2, (1, 0)),
    );
    c.equal(
        "c4",
        "contrast of (D1*D2-D2)Y = E[Y(0,1)|C1,A2]P[C1,A2]-E[Y(0,1)|N1,C2]P[N1,C2]",
        d.gy_and,
        mean_times_prob(&groups, C1A2, (0, 1)) - mean_times_prob(&groups, N1C2, (0, 1)),
    );

    // (d) sign implications of double exclusion
    for (id, claim, v) in [
        ("d1", "contrast of max(D1,D2)-D2 >= 0 under double exclusion", d.g_or),
        ("d2", "contrast of D1*D2-D2 >= 0 under double exclusion", d.g_and),
    ] {
        let negative = v < -c.scale(v, 0.0);
        if !negative {
            c.push(id, claim, CheckStatus::Pass, Some(v), Some(0.0), None);
        } else if audit.double_exclusion {
            c.push(id, claim, CheckStatus::Fail, Some(v), Some(0.0), Some(format!("{claim}: contrast {v} is negative")));
        } else {
            c.push(
                id,
                claim,
                CheckStatus::Flagged,
                Some(v),
                Some(0.0),
                Some(format!("contrast {v} is negative: double exclusion not invocable")),
            );
        }
    }

    let truth = true_parameters(spec).ok();
    let lafte = truth.as_ref().map(|t| t.lafte_over_c);

    // (e) no movers: every binary IV estimand equals the LAFTE
    for (i, def) in TreatmentDef::BINARY.iter().enumerate() {
        let id = format!("e{}", i + 1);
        let claim = format!("IV estimand of {def} = LAFTE without movers");
        match (audit.no_movers, m.beta(*def), lafte) {
            (true, Some(beta), Some(l)) => c.equal(&id, &claim, beta, l),
            (false, _, _) => c.skip(&id, &claim, "movers present"),
            _ => c.skip(&id, &claim, "first stage is zero"),
        }
    }

    // (f) homogeneous movers: IV estimand equals the LAFTE of its groups
    for (i, def) in TreatmentDef::BINARY.iter().enumerate() {
        let id = format!("f{}", i + 1);
        let claim = format!("IV estimand of {def} = LAFTE over its complying groups under homogeneity");
        let target = truth.as_ref().and_then(|t| t.lafte_over(*def));
        match (audit.homogeneity.get(*def), m.beta(*def), target) {
            (true, Some(beta), Some(t)) => c.equal(&id, &claim, beta, t),
            (false, _, _) => c.skip(&id, &claim, "homogeneity conditions do not hold"),
            _ => c.skip(&id, &claim, "first stage is zero"),
        }
    }

    let bounds = analytic_bounds(spec);

    // (g) monotone response and selection bounds
    let g_claims = [
        "MTR/MTS lower bound <= LAFTE",
        "LAFTE <= MTR/MTS upper bound",
        "MTR/MTS lower bound = LAFTE without dropouts and late adopters",
        "MTR/MTS upper bound = LAFTE without dropouts and late adopters",
    ];
    match (audit.mtr_mts(), bounds.mtr_mts, lafte) {
        (true, Some((lo, hi)), Some(l)) => {
            c.at_most("g1", g_claims[0], lo, l);
            c.at_most("g2", g_claims[1], l, hi);
            if p(C1N2) == 0.0 && p(C1A2) == 0.0 {
                c.equal("g3", g_claims[2], lo, l);
                c.equal("g4", g_claims[3], hi, l);
            } else {
                c.skip("g3", g_claims[2], "dropouts or late adopters present");
                c.skip("g4", g_claims[3], "dropouts or late adopters present");
            }
        }
        (false, _, _) => {
            for (i, claim) in g_claims.iter().enumerate() {
                c.skip(&format!("g{}", i + 1), claim, "MTR/MTS assumptions do not hold");
            }
        }
        _ => {
            for (i, claim) in g_claims.iter().enumerate() {
                c.skip(&format!("g{}", i + 1), claim, "a denominator is zero");
            }
        }
    }

    // (h) bounded response
    let h_claims = [
        "bounded-response lower bound <= LAFTE",
        "LAFTE <= bounded-response upper bound",
        "bounded-response width = (ymax-ymin)(P[C1,N2]+P[C1,A2])/first stage of D1",
    ];
    match (audit.double_exclusion, bounds.bounded_response, lafte) {
        (true, Some((lo, hi)), Some(l)) => {
            c.at_most("h1", h_claims[0], lo, l);
            c.at_most("h2", h_claims[1], l, hi);
            let width = (bounds.ymax - bounds.ymin) * (p(C1N2) + p(C1A2)) / d.d1;
            c.equal("h3", h_claims[2], hi - lo, width);
        }
        (false, _, _) => {
            for (i, claim) in h_claims.iter().enumerate() {
                c.skip(&format!("h{}", i + 1), claim, "double exclusion does not hold");
            }
        }
        _ => {
            for (i, claim) in h_claims.iter().enumerate() {
                c.skip(&format!("h{}", i + 1), claim, "first stage of D1 is zero");
            }
        }
    }

    // (i) weighted average of LATEs
    let i_claims = ["tau lower bound <= tau", "tau <= tau upper bound"];
    match (bounds.tau, truth.as_ref()) {
        (Some((lo, hi)), Some(t)) => {
            c.at_most("i1", i_claims[0], lo, t.tau);
            c.at_most("i2", i_claims[1], t.tau, hi);
        }
        _ => {
            for (i, claim) in i_claims.iter().enumerate() {
                c.skip(&format!("i{}", i + 1), claim, "a first stage is zero");
            }
        }
    }

    // (j) weighted-LATE-plus-bias decomposition of every IV estimand
    for (i, def) in TreatmentDef::ALL.iter().enumerate() {
        let id = format!("j{}", i + 1);
        let claim = format!("decomposition of the IV estimand of {def} reproduces it");
        match (truth.as_ref().and_then(|t| t.decomposition(*def)), m.beta(*def)) {
            (Some(dec), Some(beta)) => {
                c.equal(&id, &claim, dec.total(), beta);
                c.equal(&format!("{id}w"), &format!("weights of {def} sum to one"), dec.weighted_weight_sum(), 1.0);
            }
            _ => c.skip(&id, &claim, "first stage is zero"),
        }
    }

    Ok(VerificationReport {
        tolerance,
        audit,
        checks: c.checks,
    })
}
