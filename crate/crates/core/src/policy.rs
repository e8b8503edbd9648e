//! From output distributions to build decisions.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::catalog::{BuildCatalog, BuildId, OWN_BUILDS};
use crate::encoder::{EncoderContext, StateVector, ENEMY};
use crate::error::PolicyError;
use crate::forward_model::MacroState;
use crate::nn::Model;

/// Builds left out of the default production policy.
pub const DEFAULT_EXCLUSIONS: [&str; 6] = ["archon", "carrier", "dark_archon", "high_templar", "reaver", "shuttle"];

/// Probability over the 58 output classes.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Requires non-negative finite entries summing to 1 within 1e-9.
    pub fn new(values: Vec<f64>) -> Option<Self> {
        let valid = values.iter().all(|p| p.is_finite() && *p >= 0.0)
            && (values.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        valid.then_some(Distribution(values))
    }

    pub fn uniform(n: usize) -> Self {
        Distribution(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SelectionMode {
    #[default]
    Greedy,
    Probabilistic,
    Random,
}

impl core::str::FromStr for SelectionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(SelectionMode::Greedy),
            "probabilistic" => Ok(SelectionMode::Probabilistic),
            "random" => Ok(SelectionMode::Random),
            other => Err(format!("unknown selection mode `{other}`")),
        }
    }
}

impl core::fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            SelectionMode::Greedy => "greedy",
            SelectionMode::Probabilistic => "probabilistic",
            SelectionMode::Random => "random",
        })
    }
}

/// Set of excluded builds; never all of them.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ExclusionSet {
    excluded: Vec<bool>,
}

impl ExclusionSet {
    pub fn empty() -> Self {
        ExclusionSet { excluded: vec![false; OWN_BUILDS] }
    }

    pub fn from_ids(ids: impl IntoIterator<Item = BuildId>) -> Result<Self, PolicyError> {
        let mut set = Self::empty();
        for id in ids {
            if let Some(slot) = set.excluded.get_mut(id.index()) {
                *slot = true;
            }
        }
        if set.excluded.iter().all(|e| *e) {
            return Err(PolicyError::ExcludesAll);
        }
        Ok(set)
    }

    pub fn from_names<'a>(catalog: &BuildCatalog, names: impl IntoIterator<Item = &'a str>) -> Result<Self, String> {
        let ids = names
            .into_iter()
            .map(|n| catalog.build_id(n).ok_or_else(|| format!("unknown build `{n}` in exclusions")))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_ids(ids).map_err(|e| format!("{e}"))
    }

    /// The six builds the reference bot cannot handle.
    pub fn default_for(catalog: &BuildCatalog) -> Self {
        Self::from_names(catalog, DEFAULT_EXCLUSIONS).expect("default exclusions exist in the catalog")
    }

    pub fn contains(&self, class: usize) -> bool {
        self.excluded.get(class).copied().unwrap_or(false)
    }

    pub fn ids(&self) -> impl Iterator<Item = BuildId> + '_ {
        self.excluded.iter().enumerate().filter(|(_, e)| **e).map(|(i, _)| BuildId(i as u16))
    }

    pub fn is_empty(&self) -> bool {
        !self.excluded.iter().any(|e| *e)
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DecisionPolicy {
    pub mode: SelectionMode,
    /// Zero every opponent feature before inference.
    pub blind: bool,
    pub exclusions: ExclusionSet,
    pub seed: u64,
}

/// Zeroes excluded classes and rescales the rest to sum to one.
pub fn apply_exclusions(dist: &[f64], excluded: &ExclusionSet) -> Result<Distribution, PolicyError> {
    let kept: f64 = dist.iter().enumerate().filter(|(i, _)| !excluded.contains(*i)).map(|(_, p)| p).sum();
    if !(kept > 1e-12) {
        return Err(PolicyError::Degenerate);
    }
    let scale = 1.0 / kept;
    Ok(Distribution(
        dist.iter().enumerate().map(|(i, p)| if excluded.contains(i) { 0.0 } else { p * scale }).collect(),
    ))
}

/// Argmax, lowest index on ties.
pub fn select_greedy(dist: &[f64]) -> BuildId {
    let mut best = 0;
    for (i, p) in dist.iter().enumerate() {
        if *p > dist[best] {
            best = i;
        }
    }
    BuildId(best as u16)
}

/// Inverse-CDF sampling with `u` in `[0, 1)`; the last class with positive
/// mass absorbs any rounding remainder.
pub fn select_probabilistic(dist: &[f64], rng: &mut impl RngCore) -> BuildId {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            cumulative += p;
            last_positive = i;
            if u < cumulative {
                return BuildId(i as u16);
            }
        }
    }
    BuildId(last_positive as u16)
}

/// Uniform choice over the builds not excluded.
pub fn select_random(excluded: &ExclusionSet, rng: &mut impl RngCore) -> BuildId {
    let allowed: Vec<usize> = (0..OWN_BUILDS).filter(|i| !excluded.contains(*i)).collect();
    BuildId(allowed[rng.gen_range(0..allowed.len())] as u16)
}

/// A decision together with the post-exclusion distribution it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub build: BuildId,
    pub distribution: Distribution,
}

/// Full pipeline on an already encoded vector: model mask, optional
/// blinding, forward pass, exclusions, selection.
pub fn decide_vector(
    model: &Model,
    input: &StateVector,
    policy: &DecisionPolicy,
    rng: &mut impl RngCore,
) -> Result<Decision, PolicyError> {
    let distribution = if policy.mode == SelectionMode::Random {
        let allowed = (0..OWN_BUILDS).filter(|i| !policy.exclusions.contains(*i)).count();
        if allowed == 0 {
            return Err(PolicyError::ExcludesAll);
        }
        Distribution(
            (0..OWN_BUILDS)
                .map(|i| if policy.exclusions.contains(i) { 0.0 } else { 1.0 / allowed as f64 })
                .collect(),
        )
    } else {
        let mut x = input.clone();
        model.meta.mask.apply_in_place(&mut x.0);
        if policy.blind {
            x.0[ENEMY].iter_mut().for_each(|v| *v = 0.0);
        }
        let out = model.network.forward(&x.0).expect("state vectors match the input layer");
        apply_exclusions(&out, &policy.exclusions)?
    };
    let build = match policy.mode {
        SelectionMode::Greedy => select_greedy(distribution.as_slice()),
        SelectionMode::Probabilistic => select_probabilistic(distribution.as_slice(), rng),
        SelectionMode::Random => select_random(&policy.exclusions, rng),
    };
    Ok(Decision { build, distribution })
}

/// Encodes `state` and runs [`decide_vector`], after checking the model
/// was trained for this catalog and normalization table.
pub fn decide(
    model: &Model,
    state: &MacroState,
    policy: &DecisionPolicy,
    ctx: &EncoderContext,
    rng: &mut impl RngCore,
) -> Result<Decision, PolicyError> {
    model.check_compatible(ctx)?;
    decide_vector(model, &ctx.encode(state), policy, rng)
}
