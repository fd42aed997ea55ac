//! Small reference datasets and populations with hand-checkable answers.

use crate::data::ObservationTable;
use crate::strata::{stratum, PopulationSpec};

/// Eight rows, four per instrument arm, with first stages
/// (0.75, 0.25, 0.5, 0.5, 1.0) for D1, D2, D1*D2, max(D1,D2), D1+D2 and
/// reduced form 1.
pub fn fix8() -> ObservationTable {
    ObservationTable::from_columns(
        vec![1, 1, 1, 1, 0, 0, 0, 0],
        vec![1, 1, 1, 0, 0, 0, 0, 0],
        vec![1, 0, 1, 0, 0, 0, 1, 0],
        vec![3.0, 1.0, 3.0, 0.0, 0.0, 1.0, 2.0, 0.0],
    )
    .expect("fixture is valid")
}

/// Full compliers and dropouts in equal shares, double exclusion, every
/// bound assumption satisfied; LAFTE 1.75.
pub fn s2() -> PopulationSpec {
    PopulationSpec {
        p_z: 0.5,
        double_exclusion: true,
        relevance: true,
        strata: vec![
            stratum(0.5, [0, 1], [0, 1], [[0.0, 1.0], [1.0, 2.0]], 1.0),
            stratum(0.5, [0, 1], [0, 0], [[0.0, 0.5], [1.0, 1.5]], 1.0),
        ],
    }
}

/// One full-complier stratum with effect 2.
pub fn single_full_complier() -> PopulationSpec {
    PopulationSpec {
        p_z: 0.5,
        double_exclusion: true,
        relevance: true,
        strata: vec![stratum(1.0, [0, 1], [0, 1], [[0.0, 0.0], [0.0, 2.0]], 1.0)],
    }
}

/// Never-takers and always-takers in both parts only.
pub fn no_compliers() -> PopulationSpec {
    PopulationSpec {
        p_z: 0.5,
        double_exclusion: true,
        relevance: false,
        strata: vec![
            stratum(0.5, [0, 0], [0, 0], [[1.0, 2.0], [3.0, 4.0]], 1.0),
            stratum(0.5, [1, 1], [1, 1], [[1.0, 2.0], [3.0, 4.0]], 1.0),
        ],
    }
}

/// Dropouts and second-part compliers among first-part always-takers in
/// equal shares with different `E[Y(1,0)]`: first-stage contrasts vanish
/// while the outcome-weighted contrast of `max(D1,D2)-D2` does not.
pub fn offsetting_movers() -> PopulationSpec {
    let mut a1c2 = stratum(0.1, [1, 1], [0, 0], [[0.0, 0.0], [3.0, 4.0]], 1.0);
    a1c2.d2 = [[0, 0], [1, 1]];
    PopulationSpec {
        p_z: 0.5,
        double_exclusion: false,
        relevance: true,
        strata: vec![
            stratum(0.1, [0, 1], [0, 0], [[0.0, 0.5], [1.0, 1.5]], 1.0),
            a1c2,
            stratum(0.3, [0, 1], [0, 1], [[0.0, 1.0], [1.0, 2.0]], 1.0),
            stratum(0.3, [0, 0], [0, 0], [[0.0, 1.0], [1.0, 2.0]], 1.0),
            stratum(0.2, [1, 1], [1, 1], [[0.0, 1.0], [1.0, 2.0]], 1.0),
        ],
    }
}
