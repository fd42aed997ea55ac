//! Two-step mover detection and the sign conditions implied by the double
//! exclusion restriction.

use serde::Serialize;

use crate::data::ObservationTable;
use crate::error::EstimationError;
use crate::estimands::{Design, ModelSpec};
use crate::estimate::EstimateWithSE;
use crate::regression::{min_eigen_ratio, one_sided_negativity, wald_joint, FitResult, TestResult};

/// Equations whose joint covariance falls below this eigenvalue ratio are
/// left out of the joint test.
const JOINT_RATIO_FLOOR: f64 = 1e-12;

pub const STEP2_CAVEAT: &str = "failing to reject the outcome-weighted contrasts is also consistent with \
mover groups of equal size whose potential outcomes coincide";

const STATISTIC_FAMILY: &str = "Wald chi-square on the stacked cluster-robust covariance";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MoverConclusion {
    MoversDetectedStep1,
    MoversDetectedStep2,
    NoMoversDetected,
}

impl MoverConclusion {
    pub fn label(self) -> &'static str {
        match self {
            Self::MoversDetectedStep1 => "movers-detected-step1",
            Self::MoversDetectedStep2 => "movers-detected-step2",
            Self::NoMoversDetected => "no-movers-detected",
        }
    }
}

/// One step: two contrasts and their joint test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub contrasts: Vec<EstimateWithSE>,
    pub test: TestResult,
    /// Contrasts left out of the joint test, with the reason.
    pub degenerate: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoverTestReport {
    pub level: f64,
    pub step1: StepReport,
    pub step2: Option<StepReport>,
    pub conclusion: MoverConclusion,
    pub recommendation: String,
    pub caveat: String,
    pub statistic_family: String,
}

/// The two-step decision rule as a function of the step p-values.
pub fn decide(p_step1: f64, p_step2: Option<f64>, level: f64) -> MoverConclusion {
    if p_step1 < level {
        MoverConclusion::MoversDetectedStep1
    } else if p_step2.is_some_and(|p| p < level) {
        MoverConclusion::MoversDetectedStep2
    } else {
        MoverConclusion::NoMoversDetected
    }
}

fn check_level(level: f64) -> Result<(), EstimationError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(EstimationError::Level(level))
    }
}

/// Joint test over the slope coefficients of a stacked fit, skipping
/// constant regressands and any equation that would make the covariance
/// singular.
fn joint_slope_test(fit: &FitResult, names: &[&str]) -> (TestResult, Vec<String>) {
    let mut kept: Vec<usize> = Vec::new();
    let mut degenerate = Vec::new();
    for (eq, name) in names.iter().enumerate() {
        let i = fit.index(eq, 1);
        if fit.constant_response[eq] {
            degenerate.push(format!("{name}: regressand is constant, contrast is exactly 0 with undefined SE"));
            continue;
        }
        let mut trial = kept.clone();
        trial.push(i);
        let sub = nalgebra::DMatrix::from_fn(trial.len(), trial.len(), |a, b| fit.vcov[(trial[a], trial[b])]);
        if min_eigen_ratio(&sub) > JOINT_RATIO_FLOOR {
            kept = trial;
        } else {
            degenerate.push(format!("{name}: collinear with the other contrasts, left out of the joint test"));
        }
    }
    let null = vec![0.0; kept.len()];
    let test = wald_joint(fit, &kept, &null).unwrap_or_else(|_| TestResult::empty());
    (test, degenerate)
}

fn step(design: &Design, parts: [(&str, Vec<f64>); 2]) -> Result<(StepReport, FitResult), EstimationError> {
    let names = [parts[0].0, parts[1].0];
    let fit = design.stacked(parts.into_iter().map(|(_, r)| design.on_z(r)).collect())?;
    let contrasts = names
        .iter()
        .enumerate()
        .map(|(eq, name)| EstimateWithSE::from_fit(&fit, eq, 1, format!("Z contrast of {name}")))
        .collect();
    let (test, degenerate) = joint_slope_test(&fit, &names);
    Ok((
        StepReport {
            contrasts,
            test,
            degenerate,
        },
        fit,
    ))
}

fn step1(design: &Design) -> Result<StepReport, EstimationError> {
    let d = &design.derived;
    Ok(step(design, [("max(D1,D2)-D2", d.g_or.clone()), ("D1*D2-D2", d.g_and.clone())])?.0)
}

/// Step 1 tests that both first-stage contrasts are zero; if that is not
/// rejected, step 2 tests the outcome-weighted contrasts.
pub fn mover_test(table: &ObservationTable, spec: &ModelSpec, level: f64) -> Result<MoverTestReport, EstimationError> {
    mover_test_forced(table, spec, level, false)
}

/// As [`mover_test`], optionally running step 2 even after a step-1
/// rejection. The conclusion still follows the step-1 result first.
pub fn mover_test_forced(
    table: &ObservationTable,
    spec: &ModelSpec,
    level: f64,
    force_step2: bool,
) -> Result<MoverTestReport, EstimationError> {
    check_level(level)?;
    let design = Design::new(table, spec);
    let s1 = step1(&design)?;
    let run2 = force_step2 || !s1.test.rejects(level);
    let s2 = if run2 {
        let d = &design.derived;
        Some(step(&design, [("(max(D1,D2)-D2)Y", d.gy_or.clone()), ("(D1*D2-D2)Y", d.gy_and.clone())])?.0)
    } else {
        None
    };
    let conclusion = decide(s1.test.p_value, s2.as_ref().map(|s| s.test.p_value), level);
    let recommendation = match conclusion {
        MoverConclusion::NoMoversDetected => {
            "no evidence of movers: standard IV identifies the full treatment effect of the full compliers"
        }
        _ => "movers may be present: standard IV estimands mix part effects; use the bounds",
    };
    Ok(MoverTestReport {
        level,
        step1: s1,
        step2: s2,
        conclusion,
        recommendation: recommendation.into(),
        caveat: STEP2_CAVEAT.into(),
        statistic_family: STATISTIC_FAMILY.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Rejected,
}

/// One-sided tests that both first-stage contrasts are nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignCheckReport {
    pub level: f64,
    pub contrasts: Vec<EstimateWithSE>,
    /// `Phi(t)`, undefined when the contrast's SE is.
    pub one_sided_p: Vec<Option<f64>>,
    pub verdict: Verdict,
}

/// Rejects when either contrast is significantly negative at `level`.
pub fn double_exclusion_check(
    table: &ObservationTable,
    spec: &ModelSpec,
    level: f64,
) -> Result<SignCheckReport, EstimationError> {
    check_level(level)?;
    let design = Design::new(table, spec);
    let contrasts = step1(&design)?.contrasts;
    let one_sided_p: Vec<Option<f64>> = contrasts
        .iter()
        .map(|c| c.se.filter(|&s| s > 0.0).map(|s| one_sided_negativity(c.value, s).p_value))
        .collect();
    let verdict = if one_sided_p.iter().flatten().any(|&p| p < level) {
        Verdict::Rejected
    } else {
        Verdict::Consistent
    };
    Ok(SignCheckReport {
        level,
        contrasts,
        one_sided_p,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fix8;

    #[test]
    fn fix8_contrasts() {
        let r = mover_test_forced(&fix8(), &ModelSpec::default(), 0.05, true).unwrap();
        let v: Vec<f64> = r.step1.contrasts.iter().map(|c| c.value).collect();
        assert!((v[0] - 0.25).abs() < 1e-12 && (v[1] - 0.25).abs() < 1e-12);
        let w: Vec<f64> = r.step2.unwrap().contrasts.iter().map(|c| c.value).collect();
        assert!((w[0] - 0.25).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
        assert_eq!(r.step1.test.dof, 2);
    }

    #[test]
    fn fix8_sign_check_is_consistent() {
        let r = double_exclusion_check(&fix8(), &ModelSpec::default(), 0.05).unwrap();
        assert_eq!(r.verdict, Verdict::Consistent);
        assert!(r.one_sided_p.iter().all(|p| p.unwrap() > 0.5));
    }

    #[test]
    fn decision_rule() {
        assert_eq!(decide(0.01, None, 0.05), MoverConclusion::MoversDetectedStep1);
        assert_eq!(decide(0.01, Some(0.9), 0.05), MoverConclusion::MoversDetectedStep1);
        assert_eq!(decide(0.2, Some(0.01), 0.05), MoverConclusion::MoversDetectedStep2);
        assert_eq!(decide(0.2, Some(0.2), 0.05), MoverConclusion::NoMoversDetected);
        assert_eq!(decide(0.05, Some(0.05), 0.05), MoverConclusion::NoMoversDetected);
    }

    #[test]
    fn constant_contrast_reduces_dof() {
        // nobody takes only the first part
        let t = ObservationTable::from_columns(
            vec![1, 1, 1, 1, 0, 0, 0, 0],
            vec![1, 1, 0, 0, 1, 0, 0, 0],
            vec![1, 1, 1, 0, 1, 1, 0, 0],
            vec![2.0, 3.0, 1.0, 0.0, 2.5, 1.0, 0.5, 0.0],
        )
        .unwrap();
        let r = mover_test(&t, &ModelSpec::default(), 0.05).unwrap();
        assert_eq!(r.step1.contrasts[0].value, 0.0);
        assert_eq!(r.step1.contrasts[0].se, None);
        assert_eq!(r.step1.test.dof, 1);
        assert_eq!(r.step1.degenerate.len(), 1);
    }

    #[test]
    fn level_must_be_a_probability() {
        assert!(matches!(
            mover_test(&fix8(), &ModelSpec::default(), 1.0),
            Err(EstimationError::Level(_))
        ));
    }
}
