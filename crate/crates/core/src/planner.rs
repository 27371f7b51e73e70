//! Campaign schedules and per-trial generator configurations.
//!
//! A schedule says which centroid drives each trial. A configuration turns
//! that centroid into concrete include/exclude decisions: feature `i` is
//! included when a uniform draw `u` from (0, 1] satisfies `u <= c_i`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::features::FeatureCatalog;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Centroids in turn, ignoring cluster sizes.
    #[serde(rename = "kconfig-round-robin")]
    RoundRobin,
    /// Trials per centroid proportional to cluster size.
    #[serde(rename = "kconfig-weighted")]
    Weighted,
    /// Every feature a fair coin.
    #[serde(rename = "swarm")]
    Swarm,
    /// No feature flags; the generator's defaults apply.
    #[serde(rename = "default")]
    Default,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::RoundRobin,
        Strategy::Weighted,
        Strategy::Swarm,
        Strategy::Default,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::RoundRobin => "kconfig-round-robin",
            Strategy::Weighted => "kconfig-weighted",
            Strategy::Swarm => "swarm",
            Strategy::Default => "default",
        }
    }

    /// Whether the strategy draws from cluster centroids.
    pub fn uses_model(self) -> bool {
        matches!(self, Strategy::RoundRobin | Strategy::Weighted)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown strategy `{s}` (expected kconfig-round-robin, kconfig-weighted, swarm or default)"
                ))
            })
    }
}

/// Include/exclude decision per catalog feature for one trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub trial_index: u64,
    pub strategy: Strategy,
    pub centroid_index: Option<usize>,
    pub generator_seed: u64,
    pub decisions: Vec<bool>,
}

/// Which centroid (if any) drives each of `budget` trials.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignPlan {
    pub format: String,
    pub strategy: Strategy,
    pub budget: u64,
    pub master_seed: u64,
    /// Cluster sizes of the model the schedule was built from.
    pub model_sizes: Option<Vec<usize>>,
    /// Path of the model file, for auditing.
    pub model_ref: Option<String>,
    pub schedule: Vec<Option<usize>>,
}

pub const PLAN_FORMAT: &str = "cfgsmith-plan/1";

impl CampaignPlan {
    /// Trials assigned to each centroid.
    pub fn counts(&self) -> Vec<u64> {
        let k = self.model_sizes.as_ref().map_or(0, Vec::len);
        let mut counts = vec![0u64; k];
        for c in self.schedule.iter().flatten() {
            counts[*c] += 1;
        }
        counts
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: CampaignPlan =
            serde_json::from_str(text).map_err(|e| Error::format("plan file", e))?;
        if plan.format != PLAN_FORMAT {
            return Err(Error::format(
                "plan file",
                format!("unsupported format `{}`", plan.format),
            ));
        }
        if plan.schedule.len() as u64 != plan.budget {
            return Err(Error::Validation(format!(
                "plan schedule has {} entries for a budget of {}",
                plan.schedule.len(),
                plan.budget
            )));
        }
        let k = plan.model_sizes.as_ref().map_or(0, Vec::len);
        if plan.schedule.iter().flatten().any(|&c| c >= k) {
            return Err(Error::Validation("plan schedules a missing centroid".into()));
        }
        Ok(plan)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Builds the schedule. Never consults a random stream: the result depends
/// only on the model's cluster sizes, the strategy and the budget.
pub fn plan_schedule(
    model: Option<&ClusterModel>,
    strategy: Strategy,
    budget: u64,
    master_seed: u64,
) -> Result<CampaignPlan> {
    if budget == 0 {
        return Err(Error::Validation("budget must be at least 1".into()));
    }
    let sizes = match (strategy.uses_model(), model) {
        (true, None) => {
            return Err(Error::Validation(format!(
                "strategy {strategy} needs a cluster model"
            )))
        }
        (true, Some(m)) if m.k() == 0 => {
            return Err(Error::Validation("cluster model has no centroids".into()))
        }
        (true, Some(m)) => Some(m.sizes.clone()),
        (false, _) => None,
    };
    let schedule = match (strategy, &sizes) {
        (Strategy::RoundRobin, Some(sizes)) => {
            let k = sizes.len() as u64;
            (0..budget).map(|t| Some((t % k) as usize)).collect()
        }
        (Strategy::Weighted, Some(sizes)) => {
            let counts = apportion(sizes, budget);
            interleave(&counts).into_iter().map(Some).collect()
        }
        _ => vec![None; budget as usize],
    };
    Ok(CampaignPlan {
        format: PLAN_FORMAT.into(),
        strategy,
        budget,
        master_seed,
        model_sizes: sizes,
        model_ref: None,
        schedule,
    })
}

/// Largest-remainder (Hamilton) apportionment of `budget` seats by `sizes`.
/// Equal remainders favour the lower index. Uses exact integer arithmetic.
pub fn apportion(sizes: &[usize], budget: u64) -> Vec<u64> {
    let total: u128 = sizes.iter().map(|&s| s as u128).sum();
    if total == 0 {
        // Degenerate weights: fall back to an even split.
        let k = sizes.len() as u64;
        return (0..k).map(|i| budget / k + u64::from(i < budget % k)).collect();
    }
    let budget128 = u128::from(budget);
    let mut counts: Vec<u64> = Vec::with_capacity(sizes.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(sizes.len());
    for (i, &s) in sizes.iter().enumerate() {
        let scaled = budget128 * s as u128;
        counts.push((scaled / total) as u64);
        remainders.push((scaled % total, i));
    }
    let assigned: u64 = counts.iter().sum();
    let left = (budget - assigned) as usize;
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(left) {
        counts[i] += 1;
    }
    counts
}

/// Smooth weighted round-robin: spreads each centroid's trials evenly across
/// the schedule. Lowest index wins ties.
fn interleave(counts: &[u64]) -> Vec<usize> {
    let total: u64 = counts.iter().sum();
    let mut current = vec![0i128; counts.len()];
    let mut out = Vec::with_capacity(total as usize);
    for _ in 0..total {
        let mut best = 0;
        for (i, c) in current.iter_mut().enumerate() {
            *c += counts[i] as i128;
        }
        for i in 1..counts.len() {
            if current[i] > current[best] {
                best = i;
            }
        }
        current[best] -= total as i128;
        out.push(best);
    }
    out
}

/// Draws the include/exclude decisions for one trial.
///
/// * centroid strategies: include feature `i` iff `u_i <= c_i`,
///   `u_i` uniform on (0, 1] from the trial seed;
/// * swarm: the same draw against 0.5;
/// * default: everything included (no flags are emitted for it anyway).
pub fn draw_decisions(
    strategy: Strategy,
    centroid: Option<&[f64]>,
    feature_count: usize,
    trial_seed: u64,
) -> Result<Vec<bool>> {
    match strategy {
        Strategy::Default => Ok(vec![true; feature_count]),
        Strategy::Swarm => {
            let mut r = rng::stream(trial_seed);
            Ok((0..feature_count)
                .map(|_| rng::unit_open_closed(&mut r) <= 0.5)
                .collect())
        }
        Strategy::RoundRobin | Strategy::Weighted => {
            let centroid = centroid.ok_or_else(|| {
                Error::Validation(format!("strategy {strategy} needs a centroid"))
            })?;
            if centroid.len() != feature_count {
                return Err(Error::Validation(format!(
                    "centroid has {} coordinates, catalog has {} features",
                    centroid.len(),
                    feature_count
                )));
            }
            if let Some(bad) = centroid.iter().find(|c| !(0.0..=1.0).contains(*c)) {
                return Err(Error::Validation(format!(
                    "centroid coordinate {bad} is not a probability"
                )));
            }
            let mut r = rng::stream(trial_seed);
            Ok(centroid
                .iter()
                .map(|&c| rng::unit_open_closed(&mut r) <= c)
                .collect())
        }
    }
}

/// Configuration for trial `trial_index` of `plan`.
pub fn config_gen(
    plan: &CampaignPlan,
    model: Option<&ClusterModel>,
    feature_count: usize,
    trial_index: u64,
) -> Result<GeneratorConfig> {
    let slot = *plan
        .schedule
        .get(trial_index as usize)
        .ok_or_else(|| Error::Validation(format!("trial {trial_index} is beyond the budget")))?;
    let centroid = match slot {
        Some(c) => {
            let model = model.ok_or_else(|| {
                Error::Validation("schedule names a centroid but no model was given".into())
            })?;
            Some(
                model
                    .centroids
                    .get(c)
                    .ok_or_else(|| Error::Validation(format!("no centroid {c} in model")))?
                    .as_slice(),
            )
        }
        None => None,
    };
    let seed = rng::trial_seed(plan.master_seed, trial_index);
    Ok(GeneratorConfig {
        trial_index,
        strategy: plan.strategy,
        centroid_index: slot,
        generator_seed: rng::generator_seed(seed),
        decisions: draw_decisions(plan.strategy, centroid, feature_count, seed)?,
    })
}

/// Command-line arguments for the generator: one flag per feature in catalog
/// order, then `--seed <n>`. The default strategy emits only the seed.
pub fn render_flags(config: &GeneratorConfig, catalog: &FeatureCatalog) -> Result<Vec<String>> {
    let mut args = Vec::new();
    if config.strategy != Strategy::Default {
        if config.decisions.len() != catalog.len() {
            return Err(Error::Validation(format!(
                "configuration has {} decisions, catalog has {} features",
                config.decisions.len(),
                catalog.len()
            )));
        }
        for (spec, &on) in catalog.features().iter().zip(&config.decisions) {
            args.push(if on {
                spec.enable_flag.clone()
            } else {
                spec.disable_flag.clone()
            });
        }
    }
    args.push("--seed".into());
    args.push(config.generator_seed.to_string());
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{DetectionRule, FeatureSpec};
    use super::Strategy;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};

    fn model_with_sizes(sizes: &[usize]) -> ClusterModel {
        let assignment = sizes
            .iter()
            .enumerate()
            .flat_map(|(i, &s)| std::iter::repeat_n(i, s))
            .collect();
        ClusterModel {
            centroids: vec![vec![0.5]; sizes.len()],
            sizes: sizes.to_vec(),
            assignment,
            sse: 0.0,
        }
    }

    /// Among all non-negative allocations summing to `budget`, the one
    /// closest to the exact quotas in squared error; ties go to the
    /// lexicographically largest vector (extra seats to lower indices).
    fn apportion_oracle(sizes: &[usize], budget: u64) -> Vec<u64> {
        let n: usize = sizes.iter().sum();
        let quotas: Vec<f64> = sizes.iter().map(|&s| budget as f64 * s as f64 / n as f64).collect();
        fn rec(i: usize, left: u64, cur: &mut Vec<u64>, quotas: &[f64], best: &mut Option<(f64, Vec<u64>)>) {
            if i + 1 == quotas.len() {
                cur.push(left);
                let err: f64 = cur.iter().zip(quotas).map(|(&c, q)| (c as f64 - q).powi(2)).sum();
                let better = match best {
                    None => true,
                    Some((e, v)) => err < *e - 1e-9 || ((err - *e).abs() <= 1e-9 && cur > v),
                };
                if better {
                    *best = Some((err, cur.clone()));
                }
                cur.pop();
                return;
            }
            for c in 0..=left {
                cur.push(c);
                rec(i + 1, left - c, cur, quotas, best);
                cur.pop();
            }
        }
        let mut best = None;
        rec(0, budget, &mut Vec::new(), &quotas, &mut best);
        best.unwrap().1
    }

    #[test]
    fn round_robin_cycles() {
        let model = model_with_sizes(&[1, 1, 1]);
        let plan = plan_schedule(Some(&model), Strategy::RoundRobin, 7, 0).unwrap();
        let schedule: Vec<usize> = plan.schedule.iter().map(|c| c.unwrap()).collect();
        assert_eq!(schedule, [0, 1, 2, 0, 1, 2, 0]);
        assert_eq!(plan.counts(), [3, 2, 2]);
    }

    #[test]
    fn weighted_exact_proportion() {
        let model = model_with_sizes(&[30, 10]);
        let plan = plan_schedule(Some(&model), Strategy::Weighted, 4, 0).unwrap();
        assert_eq!(plan.counts(), [3, 1]);
    }

    #[test]
    fn weighted_largest_remainder() {
        // Quotas 4.545, 2.727, 2.727: floors (4, 2, 2) leave two seats,
        // which go to the two largest remainders (indices 1 and 2).
        assert_eq!(apportion(&[5, 3, 3], 10), [4, 3, 3]);
        assert_eq!(apportion_oracle(&[5, 3, 3], 10), [4, 3, 3]);
        // Equal remainders: lower index first.
        assert_eq!(apportion(&[1, 1, 1], 4), [2, 1, 1]);
        assert_eq!(apportion_oracle(&[1, 1, 1], 4), [2, 1, 1]);
    }

    #[test]
    fn weighted_matches_oracle_on_small_cases() {
        for sizes in [&[2usize, 7][..], &[1, 2, 3], &[5, 5, 1, 9], &[4, 4, 4], &[13, 1, 1]] {
            for budget in 1..=12 {
                assert_eq!(apportion(sizes, budget), apportion_oracle(sizes, budget), "{sizes:?} {budget}");
            }
        }
    }

    #[test]
    fn weighted_interleaves_evenly() {
        let model = model_with_sizes(&[30, 10]);
        let plan = plan_schedule(Some(&model), Strategy::Weighted, 8, 0).unwrap();
        let s: Vec<usize> = plan.schedule.iter().map(|c| c.unwrap()).collect();
        assert_eq!(s, [0, 0, 1, 0, 0, 0, 1, 0]);
    }

    #[test]
    fn baselines_have_no_centroids() {
        for strategy in [Strategy::Swarm, Strategy::Default] {
            let plan = plan_schedule(None, strategy, 5, 1).unwrap();
            assert_eq!(plan.schedule, vec![None; 5]);
        }
        assert!(plan_schedule(None, Strategy::RoundRobin, 5, 1).is_err());
        assert!(plan_schedule(None, Strategy::Swarm, 0, 1).is_err());
    }

    #[test]
    fn extreme_centroids_are_exact() {
        for seed in 0..2000u64 {
            assert!(draw_decisions(Strategy::RoundRobin, Some(&[1.0; 8]), 8, seed)
                .unwrap()
                .iter()
                .all(|&d| d));
            assert!(draw_decisions(Strategy::RoundRobin, Some(&[0.0; 8]), 8, seed)
                .unwrap()
                .iter()
                .all(|&d| !d));
        }
    }

    #[test]
    fn centroid_errors() {
        assert!(draw_decisions(Strategy::Weighted, Some(&[0.5]), 2, 0).is_err());
        assert!(draw_decisions(Strategy::Weighted, Some(&[1.5, 0.2]), 2, 0).is_err());
        assert!(draw_decisions(Strategy::Weighted, None, 2, 0).is_err());
    }

    fn tiny_catalog() -> FeatureCatalog {
        let spec = |n: &str| FeatureSpec {
            name: n.into(),
            enable_flag: format!("--{n}"),
            disable_flag: format!("--no-{n}"),
            detector: DetectionRule::Undetectable,
        };
        FeatureCatalog::new("t", vec![spec("volatiles"), spec("jumps")]).unwrap()
    }

    #[test]
    fn flags_follow_decisions() {
        let cat = tiny_catalog();
        let config = GeneratorConfig {
            trial_index: 0,
            strategy: Strategy::Swarm,
            centroid_index: None,
            generator_seed: 42,
            decisions: vec![true, false],
        };
        assert_eq!(render_flags(&config, &cat).unwrap(), ["--volatiles", "--no-jumps", "--seed", "42"]);

        let default = GeneratorConfig {
            strategy: Strategy::Default,
            decisions: vec![true, true],
            ..config.clone()
        };
        assert_eq!(render_flags(&default, &cat).unwrap(), ["--seed", "42"]);

        let none = GeneratorConfig {
            decisions: vec![false, false],
            ..config
        };
        let flags = render_flags(&none, &cat).unwrap();
        for spec in cat.features() {
            assert_eq!(flags.iter().filter(|f| **f == spec.disable_flag).count(), 1);
        }
    }

    #[test]
    fn replanning_reproduces_configs() {
        let model = ClusterModel {
            centroids: vec![vec![0.2, 0.9], vec![0.6, 0.1]],
            sizes: vec![1, 1],
            assignment: vec![0, 1],
            sse: 0.0,
        };
        let a = plan_schedule(Some(&model), Strategy::RoundRobin, 20, 77).unwrap();
        let b = plan_schedule(Some(&model), Strategy::RoundRobin, 20, 77).unwrap();
        for t in 0..20 {
            assert_eq!(
                config_gen(&a, Some(&model), 2, t).unwrap(),
                config_gen(&b, Some(&model), 2, t).unwrap()
            );
        }
        let back = CampaignPlan::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }

    proptest! {
        #[test]
        fn round_robin_fairness(k in 1usize..20, budget in 1u64..500) {
            let model = model_with_sizes(&vec![1; k]);
            let counts = plan_schedule(Some(&model), Strategy::RoundRobin, budget, 0).unwrap().counts();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }

        #[test]
        fn weighted_within_one_of_quota(sizes in prop::collection::vec(1usize..50, 1..10), budget in 1u64..1000) {
            let model = model_with_sizes(&sizes);
            let plan = plan_schedule(Some(&model), Strategy::Weighted, budget, 0).unwrap();
            let counts = plan.counts();
            let n: usize = sizes.iter().sum();
            prop_assert_eq!(counts.iter().sum::<u64>(), budget);
            for (c, s) in counts.iter().zip(&sizes) {
                let quota = budget as f64 * *s as f64 / n as f64;
                prop_assert!((*c as f64 - quota).abs() < 1.0);
            }
        }
    }
}
