use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{PopulationSpec, Stratum};
use crate::data::ObservationTable;

struct Rows {
    z: Vec<u8>,
    d1: Vec<u8>,
    d2: Vec<u8>,
    y: Vec<f64>,
}

impl Rows {
    fn with_capacity(n: usize) -> Self {
        Self {
            z: Vec::with_capacity(n),
            d1: Vec::with_capacity(n),
            d2: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, s: &Stratum, z: usize, noise: f64) {
        let (d1, d2) = s.treatment(z);
        self.z.push(z as u8);
        self.d1.push(d1 as u8);
        self.d2.push(d2 as u8);
        self.y.push(s.mean_y[d1][d2] + s.y_sd * noise);
    }

    fn into_table(self) -> ObservationTable {
        ObservationTable::from_parts_unchecked(self.z, self.d1, self.d2, self.y)
    }
}

/// `n` i.i.d. units: stratum by probability, `Z ~ Bernoulli(p_z)`, observed
/// treatments through the response maps, `Y = mean + y_sd * N(0,1)`.
///
/// Deterministic given `seed`. Very small samples may leave an instrument
/// arm empty, which estimation then rejects.
pub fn sample(spec: &PopulationSpec, n: usize, seed: u64) -> ObservationTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = WeightedIndex::new(spec.strata.iter().map(|s| s.prob)).expect("validated spec has positive mass");
    let mut rows = Rows::with_capacity(n);
    for _ in 0..n {
        let s = &spec.strata[weights.sample(&mut rng)];
        let z = usize::from(rng.random_bool(spec.p_z));
        let noise: f64 = rng.sample(StandardNormal);
        rows.push(s, z, noise);
    }
    rows.into_table()
}

/// Splits `total` into integer counts proportional to `probs` by largest
/// remainders, ties going to the earlier index.
fn apportion(total: usize, probs: &[f64]) -> Vec<usize> {
    let mass: f64 = probs.iter().sum();
    let exact: Vec<f64> = probs.iter().map(|p| p / mass * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// A sample whose instrument arms and stratum counts match the population
/// shares as closely as integer counts allow: `round(n * p_z)` treated
/// units, and within each arm strata apportioned by largest remainders.
/// Only the outcome noise and the row order are random.
///
/// Sample first stages and shares then equal their analytic values up to
/// rounding of the counts.
pub fn sample_balanced(spec: &PopulationSpec, n: usize, seed: u64) -> ObservationTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n1 = ((n as f64) * spec.p_z).round() as usize;
    let n1 = if n >= 2 { n1.clamp(1, n - 1) } else { n1.min(n) };
    let probs: Vec<f64> = spec.strata.iter().map(|s| s.prob).collect();
    let mut units: Vec<(usize, usize)> = Vec::with_capacity(n);
    for (z, arm_n) in [(0, n - n1), (1, n1)] {
        for (i, c) in apportion(arm_n, &probs).into_iter().enumerate() {
            units.extend(std::iter::repeat_n((i, z), c));
        }
    }
    units.shuffle(&mut rng);
    let mut rows = Rows::with_capacity(n);
    for (i, z) in units {
        let noise: f64 = rng.sample(StandardNormal);
        rows.push(&spec.strata[i], z, noise);
    }
    rows.into_table()
}
