//! Principal-strata populations: specification, exact population moments,
//! true causal parameters, finite-sample draws and identity verification.

mod audit;
mod moments;
mod montecarlo;
mod random;
mod sample;
mod verify;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::SpecError;

pub use audit::{validate_spec, AssumptionAudit, ComplierGroup, Group, GroupTable, Homogeneity, Part};
pub use moments::{
    analytic_bounds, analytic_moments, true_parameters, AnalyticBounds, ArmMoments, BetaDecomposition,
    DecompositionTerm, GroupTruth, PopulationMoments, TermKind, TrueParams,
};
pub use montecarlo::replicate;
pub use random::{homogeneity_cells, impose_homogeneity, random_spec, RandomSpecOptions};
pub use sample::{sample, sample_balanced};
pub use verify::{verify_identities, Check, CheckStatus, VerificationReport};

/// One response type: its treatment responses to the instrument and the
/// mean potential outcomes at each treatment combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stratum {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub prob: f64,
    /// `[D1(0), D1(1)]`
    pub d1: [u8; 2],
    /// `D2(z, d1)` indexed `[z][d1]`.
    pub d2: [[u8; 2]; 2],
    /// `E[Y(d1, d2)]` indexed `[d1][d2]`.
    pub mean_y: [[f64; 2]; 2],
    #[serde(default)]
    pub y_sd: f64,
}

impl Stratum {
    /// Realised `(D1, D2)` under instrument value `z`.
    pub fn treatment(&self, z: usize) -> (usize, usize) {
        let d1 = usize::from(self.d1[z]);
        (d1, usize::from(self.d2[z][d1]))
    }

    /// Mean outcome under instrument value `z`.
    pub fn mean_at(&self, z: usize) -> f64 {
        let (d1, d2) = self.treatment(z);
        self.mean_y[d1][d2]
    }

    /// Whether the second-part response ignores the instrument.
    pub fn excludes_z_from_d2(&self) -> bool {
        self.d2[0] == self.d2[1]
    }
}

/// A population of strata with the instrument's assignment probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub p_z: f64,
    #[serde(default)]
    pub double_exclusion: bool,
    /// Declares that at least one full-complier stratum is present.
    #[serde(default)]
    pub relevance: bool,
    pub strata: Vec<Stratum>,
}

impl PopulationSpec {
    pub fn from_toml_str(s: &str) -> Result<Self, SpecError> {
        toml::from_str(s).map_err(|e| SpecError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("population spec is always representable")
    }

    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SpecError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_toml_string())
    }

    /// The same population with every mean outcome multiplied by `c`.
    pub fn scaled_outcomes(&self, c: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.strata {
            for row in &mut s.mean_y {
                for v in row {
                    *v *= c;
                }
            }
            s.y_sd *= c.abs();
        }
        out
    }
}

/// Stratum with `D2(z, d1) = d2_of_d1[d1]`, the double exclusion form.
pub fn stratum(prob: f64, d1: [u8; 2], d2_of_d1: [u8; 2], mean_y: [[f64; 2]; 2], y_sd: f64) -> Stratum {
    Stratum {
        label: None,
        prob,
        d1,
        d2: [d2_of_d1, d2_of_d1],
        mean_y,
        y_sd,
    }
}
