use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::audit::{homogeneity_condition, ComplierGroup, Group, GroupTable};
use super::{PopulationSpec, Stratum};
use crate::estimands::TreatmentDef;

/// Knobs of [`random_spec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpecOptions {
    pub max_strata: usize,
    /// Draw second-part responses that ignore the instrument.
    pub double_exclusion: bool,
    /// Afterwards impose the mover homogeneity conditions of this definition.
    pub homogeneity: Option<TreatmentDef>,
    pub mean_low: f64,
    pub mean_high: f64,
    pub y_sd: f64,
}

impl Default for RandomSpecOptions {
    fn default() -> Self {
        Self {
            max_strata: 6,
            double_exclusion: false,
            homogeneity: None,
            mean_low: 0.0,
            mean_high: 10.0,
            y_sd: 1.0,
        }
    }
}

fn bit<R: Rng>(rng: &mut R) -> u8 {
    u8::from(rng.random_bool(0.5))
}

fn draw_stratum<R: Rng>(rng: &mut R, opts: &RandomSpecOptions) -> Stratum {
    let d1 = [bit(rng), bit(rng)];
    let row0 = [bit(rng), bit(rng)];
    let row1 = if opts.double_exclusion { row0 } else { [bit(rng), bit(rng)] };
    let mut mean_y = [[0.0; 2]; 2];
    for v in mean_y.iter_mut().flatten() {
        *v = rng.random_range(opts.mean_low..opts.mean_high);
    }
    Stratum {
        label: None,
        prob: Exp1.sample(rng),
        d1,
        d2: [row0, row1],
        mean_y,
        y_sd: opts.y_sd,
    }
}

/// Draws a valid population: 1 to `max_strata` strata with uniform binary
/// response maps, simplex probabilities from normalised exponentials, mean
/// outcomes uniform on `[mean_low, mean_high)` and `p_z` uniform on
/// `(0.2, 0.8)`. Draws violating monotonicity or lacking compliers are
/// rejected whole and redrawn.
pub fn random_spec<R: Rng>(rng: &mut R, opts: &RandomSpecOptions) -> PopulationSpec {
    loop {
        let k = rng.random_range(1..=opts.max_strata.max(1));
        let mut strata: Vec<Stratum> = (0..k).map(|_| draw_stratum(rng, opts)).collect();
        let p_z = rng.random_range(0.2..0.8);
        let groups: Result<Vec<Group>, String> = strata.iter().map(Group::of).collect();
        let Ok(groups) = groups else { continue };
        if groups.iter().all(|g| g.complier().is_none()) {
            continue;
        }
        let mass: f64 = strata.iter().map(|s| s.prob).sum();
        for s in &mut strata {
            s.prob /= mass;
        }
        let mut spec = PopulationSpec {
            p_z,
            double_exclusion: opts.double_exclusion,
            relevance: groups.iter().any(|g| g.complier() == Some(ComplierGroup::C1C2)),
            strata,
        };
        if let Some(def) = opts.homogeneity {
            impose_homogeneity(&mut spec, def);
        }
        return spec;
    }
}

/// Cells `(target, source)` set equal by the homogeneity condition of
/// `def` for `group`.
pub fn homogeneity_cells(def: TreatmentDef, group: ComplierGroup) -> Option<((usize, usize), (usize, usize))> {
    homogeneity_condition(def, group)
}

/// Copies mean outcomes within each mover stratum so that the homogeneity
/// conditions of `def` hold exactly.
pub fn impose_homogeneity(spec: &mut PopulationSpec, def: TreatmentDef) {
    for s in &mut spec.strata {
        let Some(g) = Group::of(s).ok().and_then(Group::complier) else {
            continue;
        };
        if let Some(((t1, t2), (s1, s2))) = homogeneity_condition(def, g) {
            s.mean_y[t1][t2] = s.mean_y[s1][s2];
        }
    }
    debug_assert!(GroupTable::new(spec).complier_prob() > 0.0);
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::strata::validate_spec;

    #[test]
    fn draws_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for de in [false, true] {
            let opts = RandomSpecOptions {
                double_exclusion: de,
                ..Default::default()
            };
            for _ in 0..100 {
                let spec = random_spec(&mut rng, &opts);
                let audit = validate_spec(&spec).unwrap();
                assert!(audit.relevance);
                if de {
                    assert!(audit.double_exclusion);
                }
            }
        }
    }

    #[test]
    fn imposed_homogeneity_is_audited() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for def in TreatmentDef::BINARY {
            let opts = RandomSpecOptions {
                homogeneity: Some(def),
                ..Default::default()
            };
            for _ in 0..20 {
                let spec = random_spec(&mut rng, &opts);
                assert!(validate_spec(&spec).unwrap().homogeneity.get(def), "{def}");
            }
        }
    }
}
