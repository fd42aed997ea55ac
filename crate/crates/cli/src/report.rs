use std::fmt::Write as _;

use lafte::bounds::BoundsResult;
use lafte::diagnostics::{MoverConclusion, MoverTestReport, SignCheckReport, StepReport, Verdict};
use lafte::estimands::{ComplierShares, EstimatesTable, TreatmentDef};
use lafte::estimate::EstimateWithSE;
use lafte::strata::{CheckStatus, VerificationReport};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub config_hash: String,
    /// SHA-256 of the data or spec file read by the run.
    pub input_hash: Option<String>,
    pub n: Option<usize>,
    pub clusters: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub mover_test: MoverTestReport,
    pub sign_check: SignCheckReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Simulation {
    pub dataset: String,
    pub sidecar: String,
    pub rows: usize,
    pub balanced: bool,
}

/// Everything a run computed, in one document.
#[derive(Debug, Clone, Serialize)]
pub struct ReportBundle {
    pub metadata: Metadata,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimates: Option<EstimatesTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shares: Option<ComplierShares>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<BoundsResult>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<Simulation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationReport>,
    pub warnings: Vec<String>,
}

impl ReportBundle {
    pub fn new(metadata: Metadata) -> Self {
        Self {
            metadata,
            estimates: None,
            shares: None,
            diagnostics: None,
            bounds: None,
            simulation: None,
            verification: None,
            warnings: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Three decimals, without a sign on zero.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        return ".".into();
    }
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

/// `(se)` or `(.)` when the SE is undefined.
pub fn se(e: &EstimateWithSE) -> String {
    match e.se {
        Some(s) => format!("({})", num(s)),
        None => "(.)".into(),
    }
}

fn pval(p: f64) -> String {
    format!("{p:.3}")
}

/// ANSI emphasis for verdict lines, off unless writing to a terminal
/// without `NO_COLOR`.
#[derive(Debug, Clone, Copy)]
pub struct Style {
    pub color: bool,
}

impl Style {
    fn banner(self, text: &str, ok: bool) -> String {
        if self.color {
            let code = if ok { "32" } else { "33" };
            format!("\x1b[1;{code}m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }
}

const LABEL_W: usize = 16;
const COL_W: usize = 14;

fn row(out: &mut String, label: &str, cells: impl IntoIterator<Item = String>) {
    let _ = write!(out, "{label:<LABEL_W$}");
    for c in cells {
        let _ = write!(out, "{c:>COL_W$}");
    }
    out.push('\n');
}

pub fn render_estimates(out: &mut String, est: &EstimatesTable) {
    out.push_str("First and second stage estimates\n");
    row(out, "", TreatmentDef::ALL.iter().map(|d| d.label().to_string()));
    row(out, "First stage", est.rows.iter().map(|r| num(r.first_stage.value)));
    row(out, "", est.rows.iter().map(|r| se(&r.first_stage)));
    row(out, "IV estimate", est.rows.iter().map(|r| num(r.iv.value)));
    row(out, "", est.rows.iter().map(|r| se(&r.iv)));
    let rf = &est.reduced_form;
    let _ = writeln!(out, "Reduced form    {} {}", num(rf.value), se(rf));
}

pub fn render_shares(out: &mut String, s: &ComplierShares) {
    out.push_str("\nComplier shares (double exclusion)\n");
    for (name, e) in [
        ("{C1,C2}", &s.p_full),
        ("{C1,N2}", &s.p_dropout),
        ("{C1,A2}", &s.p_late_adopter),
    ] {
        row(out, name, [num(e.value), se(e)]);
    }
}

fn render_step(out: &mut String, title: &str, headers: [&str; 2], step: &StepReport) {
    let _ = writeln!(out, "{title}");
    row(out, "", headers.map(String::from));
    row(out, "Z contrast", step.contrasts.iter().map(|c| num(c.value)));
    row(out, "", step.contrasts.iter().map(se));
    let t = &step.test;
    let _ = writeln!(out, "Joint test      chi2({}) = {}  p = {}", t.dof, num(t.statistic), pval(t.p_value));
    for note in &step.degenerate {
        let _ = writeln!(out, "  note: {note}");
    }
}

pub fn verdict_line(r: &MoverTestReport) -> String {
    match r.conclusion {
        MoverConclusion::MoversDetectedStep1 => "VERDICT: movers detected (step 1)".into(),
        MoverConclusion::MoversDetectedStep2 => "VERDICT: movers detected (step 2)".into(),
        MoverConclusion::NoMoversDetected => "VERDICT: no movers detected".into(),
    }
}

pub fn render_diagnostics(out: &mut String, d: &Diagnostics, style: Style) {
    let r = &d.mover_test;
    let _ = writeln!(out, "Mover diagnostics (level {})", r.level);
    render_step(out, "Step 1: treatment contrasts", ["max(D1,D2)-D2", "D1*D2-D2"], &r.step1);
    match &r.step2 {
        Some(s) => render_step(out, "Step 2: outcome-weighted contrasts", ["(max-D2)*Y", "(D1*D2-D2)*Y"], s),
        None => out.push_str("Step 2: not run after a step-1 rejection\n"),
    }
    let ok = r.conclusion == MoverConclusion::NoMoversDetected;
    let _ = writeln!(out, "{}", style.banner(&verdict_line(r), ok));
    let _ = writeln!(out, "  {}", r.recommendation);
    if r.step2.is_some() && ok {
        let _ = writeln!(out, "  caveat: {}", r.caveat);
    }
    let s = &d.sign_check;
    let p: Vec<String> = s.one_sided_p.iter().map(|p| p.map_or_else(|| ".".into(), pval)).collect();
    let verdict = match s.verdict {
        Verdict::Consistent => "consistent with double exclusion",
        Verdict::Rejected => "double exclusion rejected",
    };
    let _ = writeln!(out, "Sign check: one-sided p = ({}) -> {verdict}", p.join(", "));
}

pub fn render_bounds(out: &mut String, bounds: &[BoundsResult]) {
    out.push_str("Bounds\n");
    row(out, "", ["lower".into(), "upper".into(), "width".into()]);
    for b in bounds {
        let label = match b.kind {
            lafte::bounds::BoundsKind::MtrMts => "LAFTE (MTR/MTS)".to_string(),
            lafte::bounds::BoundsKind::BoundedResponse => "LAFTE (bounded)".to_string(),
            lafte::bounds::BoundsKind::Tau => "tau".to_string(),
        };
        row(out, &label, [num(b.lower.value), num(b.upper.value), num(b.width)]);
        row(out, "", [se(&b.lower), se(&b.upper), String::new()]);
        if let (Some(lo), Some(hi)) = (b.ymin, b.ymax) {
            let _ = writeln!(out, "  Y in [{}, {}]", num(lo), num(hi));
        }
        if let Some(m) = b.maximizer {
            let _ = writeln!(out, "  largest first stage: {m}");
        }
        for w in &b.warnings {
            let _ = writeln!(out, "  warning: {w}");
        }
    }
}

pub fn render_verification(out: &mut String, v: &VerificationReport, style: Style) {
    let _ = writeln!(out, "Identity checks (tolerance {:e})", v.tolerance);
    for c in &v.checks {
        let status = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Flagged => "FLAG",
            CheckStatus::NotApplicable => "n/a",
        };
        let sides = match (c.lhs, c.rhs) {
            (Some(l), Some(r)) => format!("  [{} | {}]", num(l), num(r)),
            _ => String::new(),
        };
        let _ = writeln!(out, "{:<5} {:<5} {}{sides}", c.id, status, c.claim);
        if let Some(d) = &c.detail {
            if c.status != CheckStatus::Pass {
                let _ = writeln!(out, "            {d}");
            }
        }
    }
    let fails = v.failures().count();
    let flags = v.flagged().count();
    let summary = format!("{fails} failed, {flags} flagged");
    let _ = writeln!(out, "{}", style.banner(&summary, fails + flags == 0));
}

pub fn render(bundle: &ReportBundle, style: Style) -> String {
    let mut out = String::new();
    let m = &bundle.metadata;
    let _ = write!(out, "lafte {} {}", m.version, m.command);
    if let Some(n) = m.n {
        let _ = write!(out, "  n = {n}");
    }
    if let Some(g) = m.clusters {
        let _ = write!(out, "  clusters = {g}");
    }
    out.push_str("\n\n");
    if let Some(e) = &bundle.estimates {
        render_estimates(&mut out, e);
    }
    if let Some(s) = &bundle.shares {
        render_shares(&mut out, s);
    }
    if let Some(d) = &bundle.diagnostics {
        render_diagnostics(&mut out, d, style);
    }
    if let Some(b) = &bundle.bounds {
        out.push('\n');
        render_bounds(&mut out, b);
    }
    if let Some(s) = &bundle.simulation {
        let _ = writeln!(out, "Wrote {} rows to {}\nTrue parameters in {}", s.rows, s.dataset, s.sidecar);
    }
    if let Some(v) = &bundle.verification {
        render_verification(&mut out, v, style);
    }
    if !bundle.warnings.is_empty() {
        let _ = writeln!(out, "\nWarnings ({})", bundle.warnings.len());
        for w in &bundle.warnings {
            let _ = writeln!(out, "  - {w}");
        }
    }
    out
}
