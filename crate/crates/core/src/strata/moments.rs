use serde::Serialize;

use super::audit::{ComplierGroup, GroupTable};
use super::PopulationSpec;
use crate::error::SpecError;
use crate::estimands::TreatmentDef;

/// Population means of every regressand within one instrument arm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ArmMoments {
    pub d1: f64,
    pub d2: f64,
    pub d_and: f64,
    pub d_or: f64,
    pub d_sum: f64,
    pub y: f64,
    pub d1_y: f64,
    pub d2_y: f64,
    pub dand_y: f64,
    pub untreated_y: f64,
    pub g_or: f64,
    pub g_and: f64,
    pub gy_or: f64,
    pub gy_and: f64,
    pub kernel_y: f64,
}

impl ArmMoments {
    fn add(&mut self, w: f64, d1: usize, d2: usize, y: f64) {
        let (a, b) = (d1 as f64, d2 as f64);
        let and = a * b;
        let or = a + b - and;
        let g_or = or - b;
        let g_and = and - b;
        self.d1 += w * a;
        self.d2 += w * b;
        self.d_and += w * and;
        self.d_or += w * or;
        self.d_sum += w * (a + b);
        self.y += w * y;
        self.d1_y += w * a * y;
        self.d2_y += w * b * y;
        self.dand_y += w * and * y;
        self.untreated_y += w * (1.0 - a) * (1.0 - b) * y;
        self.g_or += w * g_or;
        self.g_and += w * g_and;
        self.gy_or += w * g_or * y;
        self.gy_and += w * g_and * y;
        self.kernel_y += w * (1.0 - a - b + 2.0 * and) * y;
    }

    fn minus(&self, o: &Self) -> Self {
        Self {
            d1: self.d1 - o.d1,
            d2: self.d2 - o.d2,
            d_and: self.d_and - o.d_and,
            d_or: self.d_or - o.d_or,
            d_sum: self.d_sum - o.d_sum,
            y: self.y - o.y,
            d1_y: self.d1_y - o.d1_y,
            d2_y: self.d2_y - o.d2_y,
            dand_y: self.dand_y - o.dand_y,
            untreated_y: self.untreated_y - o.untreated_y,
            g_or: self.g_or - o.g_or,
            g_and: self.g_and - o.g_and,
            gy_or: self.gy_or - o.gy_or,
            gy_and: self.gy_and - o.gy_and,
            kernel_y: self.kernel_y - o.kernel_y,
        }
    }

    pub fn treatment(&self, def: TreatmentDef) -> f64 {
        match def {
            TreatmentDef::Sum => self.d_sum,
            TreatmentDef::First => self.d1,
            TreatmentDef::Second => self.d2,
            TreatmentDef::Both => self.d_and,
            TreatmentDef::Either => self.d_or,
        }
    }
}

/// Exact arm means and their instrument contrasts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PopulationMoments {
    pub arm0: ArmMoments,
    pub arm1: ArmMoments,
    /// `E[. | Z=1] - E[. | Z=0]`
    pub delta: ArmMoments,
}

impl PopulationMoments {
    pub fn first_stage(&self, def: TreatmentDef) -> f64 {
        self.delta.treatment(def)
    }

    pub fn reduced_form(&self) -> f64 {
        self.delta.y
    }

    /// IV estimand of `def`, undefined without a first stage.
    pub fn beta(&self, def: TreatmentDef) -> Option<f64> {
        ratio(self.delta.y, self.first_stage(def))
    }
}

pub(super) const ZERO_SHARE: f64 = 1e-12;

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den.abs() > ZERO_SHARE).then(|| num / den)
}

/// Population moments as probability-weighted sums over strata.
pub fn analytic_moments(spec: &PopulationSpec) -> PopulationMoments {
    let mut arms = [ArmMoments::default(); 2];
    for (z, arm) in arms.iter_mut().enumerate() {
        for s in &spec.strata {
            let (d1, d2) = s.treatment(z);
            arm.add(s.prob, d1, d2, s.mean_y[d1][d2]);
        }
    }
    PopulationMoments {
        arm0: arms[0],
        arm1: arms[1],
        delta: arms[1].minus(&arms[0]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Weighted,
    Bias,
}

/// One group effect times its weight in an IV estimand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionTerm {
    pub group: ComplierGroup,
    pub effect: String,
    /// Undefined for an empty group; its product with a zero weight is 0.
    pub late: Option<f64>,
    pub weight: f64,
    pub kind: TermKind,
}

impl DecompositionTerm {
    pub fn contribution(&self) -> f64 {
        if self.weight == 0.0 {
            0.0
        } else {
            self.late.unwrap_or(f64::NAN) * self.weight
        }
    }
}

/// An IV estimand written as weighted group effects plus bias terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaDecomposition {
    pub definition: TreatmentDef,
    pub denominator: f64,
    pub terms: Vec<DecompositionTerm>,
}

impl BetaDecomposition {
    pub fn total(&self) -> f64 {
        self.terms.iter().map(DecompositionTerm::contribution).sum()
    }

    pub fn weighted_weight_sum(&self) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.kind == TermKind::Weighted)
            .map(|t| t.weight)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTruth {
    pub group: ComplierGroup,
    pub prob: f64,
    /// Effect entering the reduced form, e.g. `Y(1,0)-Y(0,0)` for dropouts.
    pub effect: String,
    pub late: Option<f64>,
    /// `E[Y(1,1) - Y(0,0) | group]`
    pub full_effect: Option<f64>,
    pub tau_weight: f64,
}

/// Causal parameters of a population, computed from its strata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrueParams {
    pub groups: Vec<GroupTruth>,
    /// `E[Y(1,1) - Y(0,0) | C]` over all five complier groups.
    pub lafte_over_c: f64,
    pub lafte_full_compliers: Option<f64>,
    pub tau: f64,
    pub beta_decomposition: Vec<BetaDecomposition>,
}

impl TrueParams {
    pub fn group(&self, g: ComplierGroup) -> &GroupTruth {
        self.groups.iter().find(|t| t.group == g).expect("all groups present")
    }

    pub fn prob(&self, g: ComplierGroup) -> f64 {
        self.group(g).prob
    }

    pub fn decomposition(&self, def: TreatmentDef) -> Option<&BetaDecomposition> {
        self.beta_decomposition.iter().find(|d| d.definition == def)
    }

    /// `E[Y(1,1) - Y(0,0)]` over the groups complying with `def`.
    pub fn lafte_over(&self, def: TreatmentDef) -> Option<f64> {
        let groups = ComplierGroup::complying_with(def);
        let p: f64 = groups.iter().map(|&g| self.prob(g)).sum();
        (p > ZERO_SHARE).then(|| {
            groups
                .iter()
                .map(|&g| {
                    let t = self.group(g);
                    if t.prob == 0.0 {
                        0.0
                    } else {
                        t.prob * t.full_effect.unwrap_or(f64::NAN)
                    }
                })
                .sum::<f64>()
                / p
        })
    }
}

fn effect_label(((a1, a2), (b1, b2)): ((usize, usize), (usize, usize))) -> String {
    format!("Y({a1},{a2})-Y({b1},{b2})")
}

fn weighted(late: Option<f64>, p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        late.unwrap_or(f64::NAN) * p
    }
}

fn decompose(groups: &GroupTable, moments: &PopulationMoments, def: TreatmentDef) -> Option<BetaDecomposition> {
    let denominator = moments.first_stage(def);
    if denominator.abs() <= ZERO_SHARE {
        return None;
    }
    let mut terms = Vec::new();
    if def == TreatmentDef::Sum {
        let p = groups.prob(ComplierGroup::C1C2);
        let parts = [((1, 1), (1, 0)), ((1, 0), (0, 0))];
        for (a, b) in parts {
            let late = groups
                .mean(ComplierGroup::C1C2, a.0, a.1)
                .zip(groups.mean(ComplierGroup::C1C2, b.0, b.1))
                .map(|(x, y)| x - y);
            terms.push(DecompositionTerm {
                group: ComplierGroup::C1C2,
                effect: effect_label((a, b)),
                late,
                weight: p / denominator,
                kind: TermKind::Weighted,
            });
        }
    }
    let complying = ComplierGroup::complying_with(def);
    for g in ComplierGroup::ALL {
        if def == TreatmentDef::Sum && g == ComplierGroup::C1C2 {
            continue;
        }
        terms.push(DecompositionTerm {
            group: g,
            effect: effect_label(g.reduced_form_effect()),
            late: groups.late(g),
            weight: groups.prob(g) / denominator,
            kind: if complying.contains(&g) {
                TermKind::Weighted
            } else {
                TermKind::Bias
            },
        });
    }
    Some(BetaDecomposition {
        definition: def,
        denominator,
        terms,
    })
}

/// Group shares and effects, LAFTE, tau and IV decompositions.
pub fn true_parameters(spec: &PopulationSpec) -> Result<TrueParams, SpecError> {
    let groups = GroupTable::new(spec);
    let pc = groups.complier_prob();
    if pc <= 0.0 {
        return Err(SpecError::EmptyComplierSet);
    }
    let moments = analytic_moments(spec);
    let lafte_num: f64 = ComplierGroup::ALL
        .iter()
        .map(|&g| weighted(groups.full_effect(g), groups.prob(g)))
        .sum();
    let tau_num: f64 = ComplierGroup::ALL
        .iter()
        .map(|&g| weighted(groups.late(g), groups.prob(g)))
        .sum();
    Ok(TrueParams {
        groups: ComplierGroup::ALL
            .iter()
            .map(|&g| GroupTruth {
                group: g,
                prob: groups.prob(g),
                effect: effect_label(g.reduced_form_effect()),
                late: groups.late(g),
                full_effect: groups.full_effect(g),
                tau_weight: groups.prob(g) / pc,
            })
            .collect(),
        lafte_over_c: lafte_num / pc,
        lafte_full_compliers: groups.full_effect(ComplierGroup::C1C2),
        tau: tau_num / pc,
        beta_decomposition: TreatmentDef::ALL
            .iter()
            .filter_map(|&d| decompose(&groups, &moments, d))
            .collect(),
    })
}

/// Population values of the three bound pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticBounds {
    pub mtr_mts: Option<(f64, f64)>,
    /// Bounds with the smallest and largest mean cell as response limits.
    pub bounded_response: Option<(f64, f64)>,
    pub ymin: f64,
    pub ymax: f64,
    pub tau: Option<(f64, f64)>,
}

/// Applies the bound formulas to the exact population moments.
pub fn analytic_bounds(spec: &PopulationSpec) -> AnalyticBounds {
    let m = analytic_moments(spec).delta;
    let (ymin, ymax) = spec
        .strata
        .iter()
        .filter(|s| s.prob > 0.0)
        .flat_map(|s| s.mean_y.iter().flatten().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let mtr_mts = ratio(m.y, m.d1).zip(ratio(m.dand_y, m.d_and)).map(|(lower, a)| (lower, a + m.untreated_y / m.d1));
    let bounded_response = ratio(1.0, m.d1).map(|inv| {
        (
            (m.kernel_y + ymin * m.g_or - ymax * m.g_and) * inv,
            (m.kernel_y + ymax * m.g_or - ymin * m.g_and) * inv,
        )
    });
    let max_fs = TreatmentDef::BINARY
        .iter()
        .map(|&d| m.treatment(d))
        .fold(f64::NEG_INFINITY, f64::max);
    let tau = ratio(m.y, m.d_sum).zip(ratio(m.y, max_fs)).map(|(a, b)| (a.min(b), a.max(b)));
    AnalyticBounds {
        mtr_mts,
        bounded_response,
        ymin,
        ymax,
        tau,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn s2_moments() {
        let m = analytic_moments(&fixtures::s2()).delta;
        assert_eq!((m.d1, m.d2, m.y, m.dand_y, m.untreated_y), (1.0, 0.5, 1.5, 1.0, 0.0));
    }

    #[test]
    fn single_full_complier_moments() {
        let m = analytic_moments(&fixtures::single_full_complier());
        for d in TreatmentDef::BINARY {
            assert_eq!(m.first_stage(d), 1.0);
        }
        assert_eq!(m.reduced_form(), 2.0);
    }

    #[test]
    fn moments_do_not_depend_on_p_z() {
        let mut spec = fixtures::s2();
        let a = analytic_moments(&spec);
        spec.p_z = 0.13;
        assert_eq!(a, analytic_moments(&spec));
    }

    #[test]
    fn s2_truth_and_bounds() {
        let t = true_parameters(&fixtures::s2()).unwrap();
        assert_eq!(t.lafte_over_c, 1.75);
        let b = analytic_bounds(&fixtures::s2());
        assert_eq!(b.mtr_mts, Some((1.5, 2.0)));
    }

    #[test]
    fn single_group_tau_is_lafte() {
        let t = true_parameters(&fixtures::single_full_complier()).unwrap();
        assert_eq!((t.tau, t.lafte_over_c), (2.0, 2.0));
        let b = analytic_bounds(&fixtures::single_full_complier());
        assert_eq!(b.tau, Some((1.0, 2.0)));
    }

    #[test]
    fn empty_complier_set_is_an_error() {
        assert_eq!(
            true_parameters(&fixtures::no_compliers()).unwrap_err(),
            SpecError::EmptyComplierSet
        );
    }

    #[test]
    fn decomposition_reproduces_beta() {
        let spec = fixtures::s2();
        let m = analytic_moments(&spec);
        let t = true_parameters(&spec).unwrap();
        for d in &t.beta_decomposition {
            let beta = m.beta(d.definition).unwrap();
            assert!((d.total() - beta).abs() < 1e-12, "{}", d.definition);
            assert!((d.weighted_weight_sum() - 1.0).abs() < 1e-12, "{}", d.definition);
        }
    }
}
