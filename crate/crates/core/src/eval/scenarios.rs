use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::domain::NutrientVector;
use crate::error::{Error, Result};

/// Per-nutrient perturbation half-width around a scenario's base deviation.
pub const NUTRIENT_JITTER: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioClass {
    Insufficient,
    NearTarget,
    Excessive,
}

impl ScenarioClass {
    pub const ALL: [ScenarioClass; 3] = [Self::Insufficient, Self::NearTarget, Self::Excessive];

    /// Range of the base deviation of achieved intake from target.
    pub fn band(self) -> (f64, f64) {
        match self {
            Self::Insufficient => (-0.80, -0.50),
            Self::NearTarget => (-0.05, 0.05),
            Self::Excessive => (0.50, 0.80),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMix {
    pub insufficient: f64,
    pub near_target: f64,
    pub excessive: f64,
}

impl Default for ClassMix {
    fn default() -> Self {
        Self {
            insufficient: 1.0 / 3.0,
            near_target: 1.0 / 3.0,
            excessive: 1.0 / 3.0,
        }
    }
}

impl ClassMix {
    fn weights(&self) -> [f64; 3] {
        [self.insufficient, self.near_target, self.excessive]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weights();
        if w.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::config("class mix proportions must be >= 0"));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("class mix proportions must sum to 1"));
        }
        Ok(())
    }

    /// Scenario count per class by largest remainder; ties go to the
    /// earlier class.
    pub fn counts(&self, count: usize) -> [usize; 3] {
        let exact = self.weights().map(|p| p * count as f64);
        let mut n = exact.map(|x| x.floor() as usize);
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let short = count - n.iter().sum::<usize>();
        for &i in order.iter().take(short) {
            n[i] += 1;
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub index: usize,
    pub class: ScenarioClass,
    pub deviation: f64,
    pub targets: NutrientVector,
    pub achieved: NutrientVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub seed: u64,
    pub scenarios: Vec<Scenario>,
}

/// One-day completion scenarios around `targets`.
///
/// Achieved intake is `T * (1 + d + u)` floored at zero, with `d` drawn from
/// the class band and `u` uniform in `±NUTRIENT_JITTER` per nutrient.
pub fn gen_scenarios(count: usize, mix: &ClassMix, seed: u64, targets: &NutrientVector) -> Result<ScenarioSet> {
    if count == 0 {
        return Err(Error::config("scenario count must be at least 1"));
    }
    mix.validate()?;
    let counts = mix.counts(count);
    let classes = ScenarioClass::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&c, n)| std::iter::repeat_n(c, n));
    let mut scenarios = Vec::with_capacity(count);
    for (index, class) in classes.enumerate() {
        let mut rng = ChaCha8Rng::from_seed(derive_seed(seed, "scenario", index as u64));
        let (lo, hi) = class.band();
        let deviation = rng.random_range(lo..=hi);
        let mut achieved = NutrientVector::empty(targets.schema());
        for (i, t) in targets.iter_present() {
            let u = rng.random_range(-NUTRIENT_JITTER..=NUTRIENT_JITTER);
            achieved.set(i, (t * (1.0 + deviation + u)).max(0.0))?;
        }
        scenarios.push(Scenario {
            index,
            class,
            deviation,
            targets: targets.clone(),
            achieved,
        });
    }
    Ok(ScenarioSet { seed, scenarios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Sex};
    use crate::dri::DriReference;

    fn rda() -> NutrientVector {
        DriReference::standard().lookup(Sex::Female, "19-30 y").unwrap().clone()
    }

    #[test]
    fn default_mix_gives_twenty() {
        let set = gen_scenarios(20, &ClassMix::default(), 1, &rda()).unwrap();
        assert_eq!(set.scenarios.len(), 20);
        assert_eq!(ClassMix::default().counts(20), [7, 7, 6]);
    }

    #[test]
    fn near_target_residuals_stay_within_fifteen_percent() {
        let mix = ClassMix { insufficient: 0.0, near_target: 1.0, excessive: 0.0 };
        for s in gen_scenarios(30, &mix, 9, &rda()).unwrap().scenarios {
            for (i, t) in s.targets.iter_present() {
                let e = t - s.achieved.get(i).unwrap();
                assert!(e.abs() <= 0.15 * t + 1e-9, "{e} vs {t}");
            }
        }
    }

    #[test]
    fn deviations_respect_bands_and_seed() {
        let a = gen_scenarios(20, &ClassMix::default(), 5, &rda()).unwrap();
        for s in &a.scenarios {
            let (lo, hi) = s.class.band();
            assert!((lo..=hi).contains(&s.deviation));
        }
        assert_eq!(a, gen_scenarios(20, &ClassMix::default(), 5, &rda()).unwrap());
        assert_ne!(a, gen_scenarios(20, &ClassMix::default(), 6, &rda()).unwrap());
    }

    #[test]
    fn bad_mix_is_a_config_error() {
        let mix = ClassMix { insufficient: 0.5, near_target: 0.5, excessive: 0.5 };
        assert!(matches!(gen_scenarios(20, &mix, 1, &rda()), Err(Error::Config(_))));
        assert!(gen_scenarios(0, &ClassMix::default(), 1, &rda()).is_err());
    }
}
