//! First stages, reduced forms, IV estimands per treatment definition and
//! complier-group shares.

use std::fmt;

use serde::Serialize;

use crate::data::ObservationTable;
use crate::derived::DerivedColumns;
use crate::error::{EstimationError, RegressionError};
use crate::estimate::EstimateWithSE;
use crate::regression::{fit_stacked, ols, stack, tsls, Clusters, Equation, FitResult};

/// Which summary of the two treatment parts enters as the treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TreatmentDef {
    Sum,
    First,
    Second,
    Both,
    Either,
}

impl TreatmentDef {
    /// Display order of report columns.
    pub const ALL: [TreatmentDef; 5] = [Self::Sum, Self::First, Self::Second, Self::Both, Self::Either];
    /// The binary definitions in tie-breaking order.
    pub const BINARY: [TreatmentDef; 4] = [Self::First, Self::Second, Self::Both, Self::Either];

    pub fn label(self) -> &'static str {
        match self {
            Self::Sum => "D1+D2",
            Self::First => "D1",
            Self::Second => "D2",
            Self::Both => "D1*D2",
            Self::Either => "max(D1,D2)",
        }
    }

    pub fn is_binary(self) -> bool {
        self != Self::Sum
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Some(Self::Sum),
            "first" | "d1" => Some(Self::First),
            "second" | "d2" => Some(Self::Second),
            "both" | "and" => Some(Self::Both),
            "either" | "or" => Some(Self::Either),
            _ => None,
        }
    }

    /// The treatment column of this definition.
    pub fn column(self, table: &ObservationTable, derived: &DerivedColumns) -> Vec<f64> {
        match self {
            Self::Sum => derived.d_sum.clone(),
            Self::First => table.d1().iter().map(|&v| f64::from(v)).collect(),
            Self::Second => table.d2().iter().map(|&v| f64::from(v)).collect(),
            Self::Both => derived.d_and.clone(),
            Self::Either => derived.d_or.clone(),
        }
    }
}

impl fmt::Display for TreatmentDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Whether the table's controls and cluster labels enter the fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModelSpec {
    pub controls: bool,
    pub cluster: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            controls: true,
            cluster: true,
        }
    }
}

impl ModelSpec {
    pub const BARE: ModelSpec = ModelSpec {
        controls: false,
        cluster: false,
    };
}

/// The regressors shared by every fit on one table.
pub(crate) struct Design<'a> {
    pub z: Vec<f64>,
    pub controls: &'a [Vec<f64>],
    pub control_names: &'a [String],
    pub clusters: Option<Clusters>,
    pub derived: DerivedColumns,
    pub table: &'a ObservationTable,
}

impl<'a> Design<'a> {
    pub fn new(table: &'a ObservationTable, spec: &ModelSpec) -> Self {
        let (controls, control_names): (&[Vec<f64>], &[String]) = if spec.controls {
            (table.controls(), table.control_names())
        } else {
            (&[], &[])
        };
        Self {
            z: table.z_f64(),
            controls,
            control_names,
            clusters: if spec.cluster { table.clusters() } else { None },
            derived: table.derive(),
            table,
        }
    }

    /// OLS equation of `response` on `[1, z, controls]`.
    pub fn on_z(&self, response: Vec<f64>) -> Equation {
        Equation::on_intercept_and(response, &self.z, "z", self.controls, self.control_names)
    }

    /// IV equation of `response` on `[1, d, controls]` instrumented by z.
    pub fn iv(&self, response: Vec<f64>, d: &[f64], name: &str) -> Equation {
        Equation::iv(response, d, name, &self.z, self.controls, self.control_names)
    }

    /// Coefficient on z of a single OLS fit.
    pub fn z_coefficient(&self, response: Vec<f64>, definition: String) -> Result<EstimateWithSE, RegressionError> {
        let eq = self.on_z(response);
        let fit = ols(&eq.response, &eq.regressors, &eq.names, self.clusters.as_ref())?;
        Ok(EstimateWithSE::from_fit(&fit, 0, 1, definition))
    }

    /// Joint fit of several equations.
    pub fn stacked(&self, equations: Vec<Equation>) -> Result<FitResult, RegressionError> {
        fit_stacked(&stack(equations, self.clusters.clone())?)
    }

    pub fn column(&self, def: TreatmentDef) -> Vec<f64> {
        def.column(self.table, &self.derived)
    }

    pub fn y(&self) -> Vec<f64> {
        self.table.y().to_vec()
    }

    /// 2SLS of `response` on the treatment of `def`, mapping a zero first
    /// stage to a relevance error naming the definition.
    pub fn tsls(&self, response: &[f64], def: TreatmentDef) -> Result<FitResult, EstimationError> {
        tsls(response, &self.column(def), &self.z, self.controls, self.control_names, self.clusters.as_ref())
            .map_err(|e| relevance_for(e, def))
    }
}

pub(crate) fn relevance_for(e: RegressionError, def: TreatmentDef) -> EstimationError {
    match e {
        RegressionError::Relevance { first_stage } => EstimationError::Relevance {
            definition: def.label().to_string(),
            first_stage,
        },
        other => other.into(),
    }
}

/// Coefficient on Z in an OLS of the treatment column of `def`.
pub fn first_stage(table: &ObservationTable, def: TreatmentDef, spec: &ModelSpec) -> Result<EstimateWithSE, EstimationError> {
    let design = Design::new(table, spec);
    Ok(design.z_coefficient(design.column(def), format!("first stage: {def} on Z"))?)
}

/// Coefficient on Z in an OLS of Y.
pub fn reduced_form(table: &ObservationTable, spec: &ModelSpec) -> Result<EstimateWithSE, EstimationError> {
    let design = Design::new(table, spec);
    Ok(design.z_coefficient(design.y(), "reduced form: Y on Z".to_string())?)
}

/// 2SLS coefficient of Y on the treatment of `def` instrumented by Z.
pub fn iv_estimand(table: &ObservationTable, def: TreatmentDef, spec: &ModelSpec) -> Result<EstimateWithSE, EstimationError> {
    let design = Design::new(table, spec);
    let fit = design.tsls(table.y(), def)?;
    Ok(EstimateWithSE::from_fit(&fit, 0, 1, iv_label(def)))
}

fn iv_label(def: TreatmentDef) -> String {
    match def {
        TreatmentDef::First => "IV: LATE of the first part (Y on D1, instrument Z)".to_string(),
        TreatmentDef::Sum => "IV: average causal response type (Y on D1+D2, instrument Z)".to_string(),
        d => format!("IV: Y on {d}, instrument Z"),
    }
}

/// Full-complier, dropout and late-adopter shares identified under the
/// double exclusion restriction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplierShares {
    pub p_full: EstimateWithSE,
    pub p_dropout: EstimateWithSE,
    pub p_late_adopter: EstimateWithSE,
    pub warnings: Vec<String>,
}

impl ComplierShares {
    pub fn total(&self) -> f64 {
        self.p_full.value + self.p_dropout.value + self.p_late_adopter.value
    }
}

/// Shares from the first stage of D2 and the contrasts of `D_or - D2` and
/// `D_and - D2`. Negative estimates are kept and warned about.
pub fn complier_shares(table: &ObservationTable, spec: &ModelSpec) -> Result<ComplierShares, EstimationError> {
    let design = Design::new(table, spec);
    let p_full = design.z_coefficient(design.column(TreatmentDef::Second), "share {C1,C2}: first stage of D2".into())?;
    let p_dropout = design.z_coefficient(design.derived.g_or.clone(), "share {C1,N2}: Z contrast of max(D1,D2)-D2".into())?;
    let p_late_adopter =
        design.z_coefficient(design.derived.g_and.clone(), "share {C1,A2}: Z contrast of D1*D2-D2".into())?;
    let mut warnings = Vec::new();
    for (name, e) in [("full-complier", &p_full), ("dropout", &p_dropout), ("late-adopter", &p_late_adopter)] {
        if e.value < 0.0 {
            warnings.push(format!(
                "negative {name} share {:.4}: the double exclusion restriction or monotonicity is contradicted",
                e.value
            ));
        }
    }
    Ok(ComplierShares {
        p_full,
        p_dropout,
        p_late_adopter,
        warnings,
    })
}

/// Every first stage and IV estimand plus the reduced form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatesTable {
    pub reduced_form: EstimateWithSE,
    pub rows: Vec<DefinitionEstimates>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefinitionEstimates {
    pub definition: TreatmentDef,
    pub first_stage: EstimateWithSE,
    pub iv: EstimateWithSE,
}

impl EstimatesTable {
    pub fn get(&self, def: TreatmentDef) -> &DefinitionEstimates {
        self.rows.iter().find(|r| r.definition == def).expect("all definitions present")
    }
}

/// First stages and IV estimands for all five definitions, in display order.
pub fn estimate_all(table: &ObservationTable, spec: &ModelSpec) -> Result<EstimatesTable, EstimationError> {
    let design = Design::new(table, spec);
    let reduced_form = design.z_coefficient(design.y(), "reduced form: Y on Z".to_string())?;
    let mut rows = Vec::with_capacity(5);
    for def in TreatmentDef::ALL {
        let first_stage = design.z_coefficient(design.column(def), format!("first stage: {def} on Z"))?;
        let fit = design.tsls(table.y(), def)?;
        rows.push(DefinitionEstimates {
            definition: def,
            first_stage,
            iv: EstimateWithSE::from_fit(&fit, 0, 1, iv_label(def)),
        });
    }
    Ok(EstimatesTable { reduced_form, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fix8() -> ObservationTable {
        ObservationTable::from_columns(
            vec![1, 1, 1, 1, 0, 0, 0, 0],
            vec![1, 1, 1, 0, 0, 0, 0, 0],
            vec![1, 0, 1, 0, 0, 0, 1, 0],
            vec![3.0, 1.0, 3.0, 0.0, 0.0, 1.0, 2.0, 0.0],
        )
        .unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-10 * b.abs().max(1.0)
    }

    #[test]
    fn fix8_first_stages_and_iv() {
        let t = fix8();
        let s = ModelSpec::default();
        let expected = [
            (TreatmentDef::Sum, 1.0, 1.0),
            (TreatmentDef::First, 0.75, 4.0 / 3.0),
            (TreatmentDef::Second, 0.25, 4.0),
            (TreatmentDef::Both, 0.5, 2.0),
            (TreatmentDef::Either, 0.5, 2.0),
        ];
        for (def, fs, iv) in expected {
            assert!(close(first_stage(&t, def, &s).unwrap().value, fs), "{def}");
            assert!(close(iv_estimand(&t, def, &s).unwrap().value, iv), "{def}");
        }
        assert!(close(reduced_form(&t, &s).unwrap().value, 1.0));
    }

    #[test]
    fn fix8_shares() {
        let sh = complier_shares(&fix8(), &ModelSpec::default()).unwrap();
        for e in [&sh.p_full, &sh.p_dropout, &sh.p_late_adopter] {
            assert!(close(e.value, 0.25));
        }
        assert!(close(sh.total(), 0.75));
        assert!(sh.warnings.is_empty());
    }

    #[test]
    fn constant_outcome_gives_zero_reduced_form() {
        let t = ObservationTable::from_columns(vec![0, 1, 0, 1], vec![0, 1, 0, 1], vec![0, 1, 1, 1], vec![2.0; 4]).unwrap();
        let rf = reduced_form(&t, &ModelSpec::default()).unwrap();
        assert_eq!(rf.value, 0.0);
        assert_eq!(rf.se, None);
    }

    #[test]
    fn zero_first_stage_names_definition() {
        let t = ObservationTable::from_columns(vec![0, 1, 0, 1], vec![0, 0, 1, 1], vec![0, 0, 0, 0], vec![1.0, 2.0, 3.0, 5.0])
            .unwrap();
        match iv_estimand(&t, TreatmentDef::First, &ModelSpec::default()) {
            Err(EstimationError::Relevance { definition, .. }) => assert_eq!(definition, "D1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn estimate_all_orders_columns() {
        let table = estimate_all(&fix8(), &ModelSpec::default()).unwrap();
        let defs: Vec<_> = table.rows.iter().map(|r| r.definition).collect();
        assert_eq!(defs, TreatmentDef::ALL.to_vec());
        assert!(close(table.get(TreatmentDef::Second).iv.value, 4.0));
    }

    #[test]
    fn parse_keys() {
        let keys = [("sum", TreatmentDef::Sum), ("D1", TreatmentDef::First), ("second", TreatmentDef::Second), ("and", TreatmentDef::Both), ("either", TreatmentDef::Either)];
        for (k, d) in keys {
            assert_eq!(TreatmentDef::parse(k), Some(d));
        }
        assert_eq!(TreatmentDef::parse("d3"), None);
    }
}
