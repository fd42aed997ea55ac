use std::fmt;

use serde::Serialize;

use super::{PopulationSpec, Stratum};
use crate::error::SpecError;
use crate::estimands::TreatmentDef;

/// Response type in one treatment part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Part {
    Never,
    Complier,
    Always,
}

impl Part {
    fn from_pair(at0: u8, at1: u8) -> Option<Self> {
        match (at0, at1) {
            (0, 0) => Some(Part::Never),
            (0, 1) => Some(Part::Complier),
            (1, 1) => Some(Part::Always),
            _ => None,
        }
    }

    fn letter(self) -> char {
        match self {
            Part::Never => 'N',
            Part::Complier => 'C',
            Part::Always => 'A',
        }
    }
}

/// Principal stratum group `{G1, G2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Group {
    pub first: Part,
    pub second: Part,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}1,{}2}}", self.first.letter(), self.second.letter())
    }
}

impl Group {
    /// Classifies a stratum, or explains its monotonicity violation.
    pub fn of(s: &Stratum) -> Result<Self, String> {
        let first = Part::from_pair(s.d1[0], s.d1[1])
            .ok_or_else(|| format!("D1(0)={} exceeds D1(1)={}", s.d1[0], s.d1[1]))?;
        let (_, r0) = s.treatment(0);
        let (_, r1) = s.treatment(1);
        let second = Part::from_pair(r0 as u8, r1 as u8)
            .ok_or_else(|| format!("D2(0,D1(0))={r0} exceeds D2(1,D1(1))={r1}"))?;
        Ok(Self { first, second })
    }

    pub fn complier(self) -> Option<ComplierGroup> {
        use Part::*;
        match (self.first, self.second) {
            (Complier, Complier) => Some(ComplierGroup::C1C2),
            (Complier, Never) => Some(ComplierGroup::C1N2),
            (Complier, Always) => Some(ComplierGroup::C1A2),
            (Never, Complier) => Some(ComplierGroup::N1C2),
            (Always, Complier) => Some(ComplierGroup::A1C2),
            _ => None,
        }
    }
}

/// The five groups moved by the instrument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ComplierGroup {
    C1C2,
    C1N2,
    C1A2,
    N1C2,
    A1C2,
}

impl ComplierGroup {
    pub const ALL: [ComplierGroup; 5] = [Self::C1C2, Self::C1N2, Self::C1A2, Self::N1C2, Self::A1C2];
    pub const MOVERS: [ComplierGroup; 4] = [Self::C1N2, Self::C1A2, Self::N1C2, Self::A1C2];

    pub fn label(self) -> &'static str {
        match self {
            Self::C1C2 => "{C1,C2}",
            Self::C1N2 => "{C1,N2}",
            Self::C1A2 => "{C1,A2}",
            Self::N1C2 => "{N1,C2}",
            Self::A1C2 => "{A1,C2}",
        }
    }

    /// Treatment cells `(treated, baseline)` of the effect this group
    /// contributes to the reduced form.
    pub fn reduced_form_effect(self) -> ((usize, usize), (usize, usize)) {
        match self {
            Self::C1C2 => ((1, 1), (0, 0)),
            Self::C1N2 => ((1, 0), (0, 0)),
            Self::C1A2 => ((1, 1), (0, 1)),
            Self::N1C2 => ((0, 1), (0, 0)),
            Self::A1C2 => ((1, 1), (1, 0)),
        }
    }

    /// Groups complying with a binary treatment definition.
    pub fn complying_with(def: TreatmentDef) -> &'static [ComplierGroup] {
        match def {
            TreatmentDef::First => &[Self::C1C2, Self::C1N2, Self::C1A2],
            TreatmentDef::Second => &[Self::C1C2, Self::N1C2, Self::A1C2],
            TreatmentDef::Both => &[Self::C1C2, Self::C1A2, Self::A1C2],
            TreatmentDef::Either => &[Self::C1C2, Self::C1N2, Self::N1C2],
            TreatmentDef::Sum => &Self::ALL,
        }
    }
}

impl fmt::Display for ComplierGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Probability and prob-weighted mean outcomes of every group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTable {
    entries: Vec<(Group, f64, [[f64; 2]; 2])>,
}

impl GroupTable {
    /// Aggregates strata. Assumes every stratum is monotone.
    pub fn new(spec: &PopulationSpec) -> Self {
        let mut entries: Vec<(Group, f64, [[f64; 2]; 2])> = Vec::new();
        for s in &spec.strata {
            let g = Group::of(s).expect("validated spec");
            let pos = match entries.iter().position(|e| e.0 == g) {
                Some(p) => p,
                None => {
                    entries.push((g, 0.0, [[0.0; 2]; 2]));
                    entries.len() - 1
                }
            };
            let e = &mut entries[pos];
            e.1 += s.prob;
            for d1 in 0..2 {
                for d2 in 0..2 {
                    e.2[d1][d2] += s.prob * s.mean_y[d1][d2];
                }
            }
        }
        for e in &mut entries {
            if e.1 > 0.0 {
                for row in &mut e.2 {
                    for v in row {
                        *v /= e.1;
                    }
                }
            }
        }
        entries.sort_by_key(|e| e.0);
        Self { entries }
    }

    fn find(&self, g: ComplierGroup) -> Option<&(Group, f64, [[f64; 2]; 2])> {
        self.entries.iter().find(|e| e.0.complier() == Some(g))
    }

    pub fn prob(&self, g: ComplierGroup) -> f64 {
        self.find(g).map_or(0.0, |e| e.1)
    }

    /// `E[Y(d1, d2) | g]`, undefined for an empty group.
    pub fn mean(&self, g: ComplierGroup, d1: usize, d2: usize) -> Option<f64> {
        self.find(g).filter(|e| e.1 > 0.0).map(|e| e.2[d1][d2])
    }

    /// The group's reduced-form effect, undefined for an empty group.
    pub fn late(&self, g: ComplierGroup) -> Option<f64> {
        let ((a1, a2), (b1, b2)) = g.reduced_form_effect();
        Some(self.mean(g, a1, a2)? - self.mean(g, b1, b2)?)
    }

    /// `E[Y(1,1) - Y(0,0) | g]`.
    pub fn full_effect(&self, g: ComplierGroup) -> Option<f64> {
        Some(self.mean(g, 1, 1)? - self.mean(g, 0, 0)?)
    }

    /// Probability of the whole complier set.
    pub fn complier_prob(&self) -> f64 {
        ComplierGroup::ALL.iter().map(|&g| self.prob(g)).sum()
    }

    /// Every nonempty group with its probability.
    pub fn groups(&self) -> impl Iterator<Item = (Group, f64)> + '_ {
        self.entries.iter().map(|e| (e.0, e.1))
    }
}

/// Per-definition homogeneity conditions of the movers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Homogeneity {
    pub first: bool,
    pub second: bool,
    pub both: bool,
    pub either: bool,
}

impl Homogeneity {
    pub fn get(&self, def: TreatmentDef) -> bool {
        match def {
            TreatmentDef::First => self.first,
            TreatmentDef::Second => self.second,
            TreatmentDef::Both => self.both,
            TreatmentDef::Either => self.either,
            TreatmentDef::Sum => false,
        }
    }
}

/// Which maintained assumptions a population satisfies. Conditions on
/// empty groups hold vacuously.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AssumptionAudit {
    /// The complier set has positive probability.
    pub relevance: bool,
    pub no_movers: bool,
    /// No stratum with positive probability lets z move D2 directly.
    pub double_exclusion: bool,
    /// `E[Y(1,1) - Y(1,0) | C1,N2] >= 0`
    pub mtr_dropout: bool,
    /// `E[Y(0,1) - Y(0,0) | C1,A2] >= 0`
    pub mtr_late_adopter: bool,
    /// `E[Y(1,1) | C1,A2] >= E[Y(1,1) | C1,N2]`
    pub mts_late_adopter: bool,
    /// `E[Y(1,1) | C1,C2] >= E[Y(1,1) | C1,N2]`
    pub mts_full: bool,
    /// `E[Y(0,0) | C1,A2] >= 0`
    pub positive_response: bool,
    pub homogeneity: Homogeneity,
}

impl AssumptionAudit {
    /// All conditions of the monotone response and selection bounds.
    pub fn mtr_mts(&self) -> bool {
        self.double_exclusion
            && self.mtr_dropout
            && self.mtr_late_adopter
            && self.mts_late_adopter
            && self.mts_full
            && self.positive_response
    }
}

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn holds(v: Option<bool>) -> bool {
    v.unwrap_or(true)
}

/// Cells `(target, source)` whose equality is the homogeneity condition
/// for `group` under `def`, or `None` where no condition applies.
pub(super) fn homogeneity_condition(def: TreatmentDef, group: ComplierGroup) -> Option<((usize, usize), (usize, usize))> {
    use ComplierGroup::*;
    use TreatmentDef::*;
    let (y00, y01, y10, y11) = ((0, 0), (0, 1), (1, 0), (1, 1));
    Some(match (def, group) {
        (_, C1C2) | (Sum, _) => return None,
        (First, C1N2) | (First, A1C2) | (Either, C1N2) | (Either, A1C2) => (y11, y10),
        (First, C1A2) | (First, N1C2) | (Both, C1A2) | (Both, N1C2) => (y00, y01),
        (Second, C1N2) | (Second, A1C2) | (Both, C1N2) | (Both, A1C2) => (y00, y10),
        (Second, C1A2) | (Second, N1C2) | (Either, C1A2) | (Either, N1C2) => (y11, y01),
    })
}

fn homogeneous(groups: &GroupTable, def: TreatmentDef) -> bool {
    ComplierGroup::MOVERS.iter().all(|&g| {
        let ((a1, a2), (b1, b2)) = homogeneity_condition(def, g).expect("movers have a condition");
        holds(groups.mean(g, a1, a2).zip(groups.mean(g, b1, b2)).map(|(a, b)| nearly_equal(a, b)))
    })
}

/// Checks the structural invariants of a spec and audits its assumptions.
pub fn validate_spec(spec: &PopulationSpec) -> Result<AssumptionAudit, SpecError> {
    if spec.strata.is_empty() {
        return Err(SpecError::Empty);
    }
    if !(spec.p_z > 0.0 && spec.p_z < 1.0) {
        return Err(SpecError::InstrumentShare(spec.p_z));
    }
    for (index, s) in spec.strata.iter().enumerate() {
        if !(0.0..=1.0).contains(&s.prob) {
            return Err(SpecError::Probability { index, prob: s.prob });
        }
        let binary = s.d1.iter().chain(s.d2.iter().flatten()).all(|&v| v <= 1);
        if !binary {
            return Err(SpecError::Field {
                index,
                detail: "treatment responses must be 0 or 1".into(),
            });
        }
        if !s.mean_y.iter().flatten().all(|v| v.is_finite()) {
            return Err(SpecError::Field {
                index,
                detail: "mean outcomes must be finite".into(),
            });
        }
        if !(s.y_sd.is_finite() && s.y_sd >= 0.0) {
            return Err(SpecError::Field {
                index,
                detail: format!("y_sd {} must be finite and nonnegative", s.y_sd),
            });
        }
        Group::of(s).map_err(|detail| SpecError::Monotonicity { index, detail })?;
        if spec.double_exclusion && !s.excludes_z_from_d2() {
            return Err(SpecError::DoubleExclusion { index });
        }
    }
    let total: f64 = spec.strata.iter().map(|s| s.prob).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(SpecError::ProbabilitySum(total));
    }
    let groups = GroupTable::new(spec);
    if spec.relevance && groups.prob(ComplierGroup::C1C2) <= 0.0 {
        return Err(SpecError::NoFullCompliers);
    }
    use ComplierGroup::*;
    let cmp = |a: Option<f64>, b: Option<f64>| holds(a.zip(b).map(|(a, b)| a >= b));
    Ok(AssumptionAudit {
        relevance: groups.complier_prob() > 0.0,
        no_movers: ComplierGroup::MOVERS.iter().all(|&g| groups.prob(g) == 0.0),
        double_exclusion: spec
            .strata
            .iter()
            .all(|s| s.prob == 0.0 || s.excludes_z_from_d2()),
        mtr_dropout: cmp(groups.mean(C1N2, 1, 1), groups.mean(C1N2, 1, 0)),
        mtr_late_adopter: cmp(groups.mean(C1A2, 0, 1), groups.mean(C1A2, 0, 0)),
        mts_late_adopter: cmp(groups.mean(C1A2, 1, 1), groups.mean(C1N2, 1, 1)),
        mts_full: cmp(groups.mean(C1C2, 1, 1), groups.mean(C1N2, 1, 1)),
        positive_response: holds(groups.mean(C1A2, 0, 0).map(|v| v >= 0.0)),
        homogeneity: Homogeneity {
            first: homogeneous(&groups, TreatmentDef::First),
            second: homogeneous(&groups, TreatmentDef::Second),
            both: homogeneous(&groups, TreatmentDef::Both),
            either: homogeneous(&groups, TreatmentDef::Either),
        },
    })
}
