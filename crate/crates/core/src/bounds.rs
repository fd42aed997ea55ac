//! Bounds on the local average full treatment effect and on the
//! weighted average of group LATEs.

use serde::{Deserialize, Serialize};

use crate::data::ObservationTable;
use crate::error::{EstimationError, RegressionError};
use crate::estimands::{relevance_for, Design, ModelSpec, TreatmentDef};
use crate::estimate::EstimateWithSE;
use crate::regression::{linear_combination, ols_coefficients, FitResult, RELEVANCE_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsKind {
    MtrMts,
    BoundedResponse,
    Tau,
}

impl BoundsKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::MtrMts => "mtr-mts",
            Self::BoundedResponse => "bounded-response",
            Self::Tau => "tau",
        }
    }
}

/// How the standard error of the two-ratio upper bound is obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpperSeMethod {
    /// Two 2SLS equations on duplicated data, summed.
    #[default]
    Stacked,
    /// Delta method over four stacked reduced-form coefficients.
    Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsResult {
    pub kind: BoundsKind,
    pub lower: EstimateWithSE,
    pub upper: EstimateWithSE,
    /// `upper - lower`, stored so reports carry the printed number.
    pub width: f64,
    pub ymin: Option<f64>,
    pub ymax: Option<f64>,
    pub assumptions: Vec<String>,
    /// Binary definition with the largest first stage (tau only).
    pub maximizer: Option<TreatmentDef>,
    /// The two tau expressions swapped roles because the reduced form is
    /// negative.
    pub flipped: bool,
    pub se_method: Option<UpperSeMethod>,
    pub warnings: Vec<String>,
}

const IV_ASSUMPTIONS: &str = "instrument independence, relevance, monotonicity and exclusion";

fn require_relevance(design: &Design, def: TreatmentDef) -> Result<f64, EstimationError> {
    let eq = design.on_z(design.column(def));
    let pi = ols_coefficients(&eq.response, &eq.regressors, &eq.names).map_err(|e| relevance_for(e, def))?[1];
    if pi.abs() <= RELEVANCE_TOLERANCE || !pi.is_finite() {
        return Err(relevance_for(RegressionError::Relevance { first_stage: pi }, def));
    }
    Ok(pi)
}

/// Linear combination of the slope coefficients (index 1 of every
/// equation) of a stacked fit.
fn slope_combination(fit: &FitResult, weights: &[f64], definition: &str) -> EstimateWithSE {
    let mut w = vec![0.0; fit.coefficients.len()];
    for (eq, &c) in weights.iter().enumerate() {
        w[fit.index(eq, 1)] = c;
    }
    let (value, se) = linear_combination(fit, &w);
    let all_constant = weights
        .iter()
        .enumerate()
        .all(|(eq, &c)| c == 0.0 || fit.constant_response[eq]);
    EstimateWithSE::new(value, (!all_constant).then_some(se), fit.n, fit.cluster_count, definition)
}

fn ordering_warning(lower: f64, upper: f64, falsified: &str) -> Option<String> {
    (lower > upper).then(|| {
        format!("lower bound {lower:.4} exceeds upper bound {upper:.4}: reported under falsified assumptions ({falsified})")
    })
}

/// Monotone response and selection bounds with the stacked upper-bound SE.
pub fn lafte_bounds(table: &ObservationTable, spec: &ModelSpec) -> Result<BoundsResult, EstimationError> {
    lafte_bounds_with(table, spec, UpperSeMethod::Stacked)
}

/// Lower bound `dY / dD1`; upper bound
/// `d(D_and Y) / d(D_and) + d((1-D1)(1-D2)Y) / d(D1)`, where `d` is the
/// instrument contrast.
pub fn lafte_bounds_with(
    table: &ObservationTable,
    spec: &ModelSpec,
    method: UpperSeMethod,
) -> Result<BoundsResult, EstimationError> {
    let design = Design::new(table, spec);
    require_relevance(&design, TreatmentDef::First)?;
    require_relevance(&design, TreatmentDef::Both)?;
    let lower_fit = design.tsls(table.y(), TreatmentDef::First)?;
    let lower = EstimateWithSE::from_fit(&lower_fit, 0, 1, "mtr-mts lower: IV of Y on D1");
    let label = "mtr-mts upper: IV of D1*D2*Y on D1*D2 plus IV of (1-D1)(1-D2)Y on D1";
    let d = &design.derived;
    let upper = match method {
        UpperSeMethod::Stacked => {
            let fit = design.stacked(vec![
                design.iv(d.dand_y.clone(), &d.d_and, "d_and"),
                design.iv(d.untreated_y.clone(), &design.column(TreatmentDef::First), "d1"),
            ])?;
            slope_combination(&fit, &[1.0, 1.0], label)
        }
        UpperSeMethod::Delta => {
            let fit = design.stacked(vec![
                design.on_z(d.dand_y.clone()),
                design.on_z(d.d_and.clone()),
                design.on_z(d.untreated_y.clone()),
                design.on_z(design.column(TreatmentDef::First)),
            ])?;
            let c: Vec<f64> = (0..4).map(|e| fit.coefficients[fit.index(e, 1)]).collect();
            let value = c[0] / c[1] + c[2] / c[3];
            let mut g = vec![0.0; fit.coefficients.len()];
            g[fit.index(0, 1)] = 1.0 / c[1];
            g[fit.index(1, 1)] = -c[0] / (c[1] * c[1]);
            g[fit.index(2, 1)] = 1.0 / c[3];
            g[fit.index(3, 1)] = -c[2] / (c[3] * c[3]);
            let (_, se) = linear_combination(&fit, &g);
            let degenerate = fit.constant_response[0] && fit.constant_response[2];
            EstimateWithSE::new(value, (!degenerate).then_some(se), fit.n, fit.cluster_count, label)
        }
    };
    let warnings = ordering_warning(lower.value, upper.value, "double exclusion, MTR, MTS or positive response")
        .into_iter()
        .collect();
    Ok(BoundsResult {
        width: upper.value - lower.value,
        kind: BoundsKind::MtrMts,
        lower,
        upper,
        ymin: None,
        ymax: None,
        assumptions: vec![
            IV_ASSUMPTIONS.into(),
            "double exclusion".into(),
            "MTR: E[Y(1,1)-Y(1,0)|C1,N2] >= 0 and E[Y(0,1)-Y(0,0)|C1,A2] >= 0".into(),
            "MTS: E[Y(1,1)|C1,A2] >= E[Y(1,1)|C1,N2] and E[Y(1,1)|C1,C2] >= E[Y(1,1)|C1,N2]".into(),
            "positive response: E[Y(0,0)|C1,A2] >= 0".into(),
        ],
        maximizer: None,
        flipped: false,
        se_method: Some(method),
        warnings,
    })
}

/// Bounds assuming only `Y` in `[ymin, ymax]`, which default to the
/// observed range.
pub fn lafte_bounds_bounded_response(
    table: &ObservationTable,
    ymin: Option<f64>,
    ymax: Option<f64>,
    spec: &ModelSpec,
) -> Result<BoundsResult, EstimationError> {
    let (lo_obs, hi_obs) = table.y_range();
    let ymin = ymin.unwrap_or(lo_obs);
    let ymax = ymax.unwrap_or(hi_obs);
    if !(ymin.is_finite() && ymax.is_finite()) {
        return Err(EstimationError::ResponseBound("limits must be finite".into()));
    }
    if ymin > lo_obs {
        return Err(EstimationError::ResponseBound(format!("ymin {ymin} exceeds the observed minimum {lo_obs}")));
    }
    if ymax < hi_obs {
        return Err(EstimationError::ResponseBound(format!("ymax {ymax} is below the observed maximum {hi_obs}")));
    }
    let design = Design::new(table, spec);
    require_relevance(&design, TreatmentDef::First)?;
    let d = &design.derived;
    let d1 = design.column(TreatmentDef::First);
    let fit = design.stacked(vec![
        design.iv(d.kernel_y.clone(), &d1, "d1"),
        design.iv(d.g_or.clone(), &d1, "d1"),
        design.iv(d.g_and.clone(), &d1, "d1"),
    ])?;
    let lower = slope_combination(&fit, &[1.0, ymin, -ymax], "bounded-response lower");
    let upper = slope_combination(&fit, &[1.0, ymax, -ymin], "bounded-response upper");
    let warnings = ordering_warning(lower.value, upper.value, "double exclusion").into_iter().collect();
    Ok(BoundsResult {
        width: upper.value - lower.value,
        kind: BoundsKind::BoundedResponse,
        lower,
        upper,
        ymin: Some(ymin),
        ymax: Some(ymax),
        assumptions: vec![
            IV_ASSUMPTIONS.into(),
            "double exclusion".into(),
            format!("bounded response: Y in [{ymin}, {ymax}]"),
        ],
        maximizer: None,
        flipped: false,
        se_method: Some(UpperSeMethod::Stacked),
        warnings,
    })
}

/// `dY / d(D1+D2)` and `dY / max` over the four binary first stages.
pub fn tau_bounds(table: &ObservationTable, spec: &ModelSpec) -> Result<BoundsResult, EstimationError> {
    let design = Design::new(table, spec);
    require_relevance(&design, TreatmentDef::Sum)?;
    let mut maximizer = TreatmentDef::First;
    let mut best = f64::NEG_INFINITY;
    for def in TreatmentDef::BINARY {
        let eq = design.on_z(design.column(def));
        let pi = ols_coefficients(&eq.response, &eq.regressors, &eq.names)?[1];
        if pi > best {
            best = pi;
            maximizer = def;
        }
    }
    require_relevance(&design, maximizer)?;
    let sum_fit = design.tsls(table.y(), TreatmentDef::Sum)?;
    let max_fit = design.tsls(table.y(), maximizer)?;
    let by_sum = EstimateWithSE::from_fit(&sum_fit, 0, 1, "tau: IV of Y on D1+D2");
    let by_max = EstimateWithSE::from_fit(&max_fit, 0, 1, format!("tau: IV of Y on {maximizer} (largest first stage)"));
    let rf = {
        let eq = design.on_z(design.y());
        ols_coefficients(&eq.response, &eq.regressors, &eq.names)?[1]
    };
    let flipped = rf < 0.0;
    let (lower, upper) = if flipped { (by_max, by_sum) } else { (by_sum, by_max) };
    let mut warnings: Vec<String> = Vec::new();
    if flipped {
        warnings.push("negative reduced form: the two tau expressions swap roles".into());
    }
    warnings.extend(ordering_warning(lower.value, upper.value, "first-stage monotonicity"));
    Ok(BoundsResult {
        width: upper.value - lower.value,
        kind: BoundsKind::Tau,
        lower,
        upper,
        ymin: None,
        ymax: None,
        assumptions: vec![IV_ASSUMPTIONS.into()],
        maximizer: Some(maximizer),
        flipped,
        se_method: None,
        warnings,
    })
}
