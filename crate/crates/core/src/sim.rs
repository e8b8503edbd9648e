//! Desk-scale two-player match simulator.
//!
//! Each side runs its own forward model with resource income, prerequisite
//! and supply gating. Completed enemy material becomes visible immediately.
//! Fights are resolved abstractly by comparing army value (mineral + gas
//! cost of completed army units) at fixed intervals and at the frame cap.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::{BuildCatalog, BuildId, BuildKind, EnemyTypeId, OWN_BUILDS};
use crate::encoder::EncoderContext;
use crate::event_log::GameEvent;
use crate::forward_model::MacroState;
use crate::nn::Model;
use crate::policy::{decide, select_random, DecisionPolicy, ExclusionSet};

/// Chooses the next build for one side. Returning `None` passes the turn.
pub trait MatchPolicy {
    fn choose(&mut self, view: &MacroState, catalog: &BuildCatalog, rng: &mut ChaCha8Rng) -> Option<BuildId>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchRules {
    pub frame_cap: u64,
    /// Frames between decision/income ticks.
    pub tick_frames: u64,
    pub starting_minerals: f64,
    /// Minerals per frame per harvesting worker.
    pub mineral_rate: f64,
    /// Harvesting workers per completed main building.
    pub workers_per_base: u32,
    /// Gas per frame per completed gas building.
    pub gas_rate: f64,
    /// A side wins once its army value is at least this multiple of the other's.
    pub decisive_ratio: f64,
    pub first_engagement: u64,
    pub engagement_interval: u64,
    /// Enemy type each own build is seen as by the opponent.
    pub observation_map: Vec<Option<EnemyTypeId>>,
}

const OBSERVED_AS: [(&str, &str); 30] = [
    ("probe", "scv"),
    ("zealot", "marine"),
    ("dragoon", "goliath"),
    ("high_templar", "ghost"),
    ("dark_templar", "ghost"),
    ("archon", "firebat"),
    ("dark_archon", "science_vessel"),
    ("reaver", "siege_tank_tank_mode"),
    ("shuttle", "dropship"),
    ("observer", "science_vessel"),
    ("scout", "wraith"),
    ("carrier", "battlecruiser"),
    ("arbiter", "science_vessel"),
    ("corsair", "valkyrie"),
    ("nexus", "command_center"),
    ("pylon", "supply_depot"),
    ("assimilator", "refinery"),
    ("gateway", "barracks"),
    ("forge", "engineering_bay"),
    ("photon_cannon", "missile_turret"),
    ("cybernetics_core", "academy"),
    ("shield_battery", "bunker"),
    ("robotics_facility", "factory"),
    ("stargate", "starport"),
    ("citadel_of_adun", "armory"),
    ("robotics_support_bay", "machine_shop"),
    ("fleet_beacon", "control_tower"),
    ("templar_archives", "covert_ops"),
    ("observatory", "comsat_station"),
    ("arbiter_tribunal", "science_facility"),
];

impl MatchRules {
    /// Default economy; builds are observed as their closest analogue when
    /// the catalog uses the shipped names.
    pub fn default_for(catalog: &BuildCatalog) -> Self {
        let mut observation_map = vec![None; OWN_BUILDS];
        for (own, enemy) in OBSERVED_AS {
            if let (Some(o), Some(e)) = (catalog.build_id(own), catalog.enemy_id(enemy)) {
                observation_map[o.index()] = Some(e);
            }
        }
        MatchRules {
            frame_cap: 28_800,
            tick_frames: 24,
            starting_minerals: 50.0,
            mineral_rate: 0.045,
            workers_per_base: 16,
            gas_rate: 0.16,
            decisive_ratio: 1.5,
            first_engagement: 7_200,
            engagement_interval: 720,
            observation_map,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Winner {
    A,
    B,
    Draw,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub winner: Winner,
    pub end_frame: u64,
    /// `(frame, army value)` samples per player at each engagement check.
    pub army_value_curve: [Vec<(u64, u64)>; 2],
    /// Decisions dropped because the requested build was illegal.
    pub skipped_decisions: [u32; 2],
    pub builds_started: [u32; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Illegal {
    MissingPrerequisite,
    AlreadyResearched,
    SupplyBlocked,
    NoGasSource,
}

/// Whether `id` may be started in `state` (ignoring current funds).
pub fn check_legal(state: &MacroState, id: BuildId, catalog: &BuildCatalog) -> Result<(), Illegal> {
    let spec = catalog.spec(id);
    if spec.prerequisites.iter().any(|p| state.own_count[p.index()] == 0) {
        return Err(Illegal::MissingPrerequisite);
    }
    if spec.kind != BuildKind::UnitOrBuilding && state.total(id) > 0 {
        return Err(Illegal::AlreadyResearched);
    }
    if spec.supply_cost > 0 && state.supply_used + spec.supply_cost > state.supply_max {
        return Err(Illegal::SupplyBlocked);
    }
    if spec.gas_cost > 0 {
        let has_gas = catalog.roles().gas_building.is_some_and(|g| state.total(g) > 0);
        if !has_gas {
            return Err(Illegal::NoGasSource);
        }
    }
    Ok(())
}

pub fn army_value(state: &MacroState, catalog: &BuildCatalog) -> u64 {
    catalog
        .units_buildings()
        .iter()
        .filter(|b| catalog.is_army_unit(b.id))
        .map(|b| u64::from(state.own_count[b.id.index()]) * u64::from(b.mineral_cost + b.gas_cost))
        .sum()
}

struct Side {
    state: MacroState,
    minerals: f64,
    gas: f64,
    queued: Option<BuildId>,
    skipped: u32,
    started: u32,
    rng: ChaCha8Rng,
}

fn verdict(a: u64, b: u64, ratio: f64) -> Option<Winner> {
    if a > 0 && a as f64 >= ratio * b as f64 {
        Some(Winner::A)
    } else if b > 0 && b as f64 >= ratio * a as f64 {
        Some(Winner::B)
    } else {
        None
    }
}

/// Plays one match. Deterministic given `seed`; side A draws from stream 0
/// of the seeded generator and side B from stream 1.
pub fn simulate_match(
    policy_a: &mut dyn MatchPolicy,
    policy_b: &mut dyn MatchPolicy,
    rules: &MatchRules,
    catalog: &BuildCatalog,
    seed: u64,
) -> MatchResult {
    assert!(rules.decisive_ratio > 1.0, "decisive ratio must exceed 1");
    assert!(rules.tick_frames > 0 && rules.engagement_interval > 0);
    let mut sides: Vec<Side> = (0..2u64)
        .map(|stream| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            Side {
                state: MacroState::initial(catalog),
                minerals: rules.starting_minerals,
                gas: 0.0,
                queued: None,
                skipped: 0,
                started: 0,
                rng,
            }
        })
        .collect();
    let mut curve: [Vec<(u64, u64)>; 2] = [Vec::new(), Vec::new()];
    let worker = catalog.worker();
    let main = catalog.main_building();
    let gas_building = catalog.roles().gas_building;

    let mut frame = 0;
    let winner = loop {
        frame += rules.tick_frames;
        let frame_now = frame.min(rules.frame_cap);

        // completions, then mutual observation
        let mut seen: [Vec<(EnemyTypeId, u32)>; 2] = [Vec::new(), Vec::new()];
        for (p, side) in sides.iter_mut().enumerate() {
            let before = side.state.own_count.clone();
            side.state.advance_to(frame_now, catalog);
            for (i, (&now, &was)) in side.state.own_count.iter().zip(&before).enumerate() {
                if let (true, Some(e)) = (now > was, rules.observation_map[i]) {
                    seen[1 - p].push((e, now - was));
                }
            }
        }
        for (side, seen) in sides.iter_mut().zip(&seen) {
            for &(e, n) in seen {
                for _ in 0..n {
                    side.state.apply(&GameEvent::observed(frame_now, e), catalog).expect("observations are total");
                }
            }
        }

        for (p, side) in sides.iter_mut().enumerate() {
            let s = &side.state;
            let harvesters = s.own_count[worker.index()].min(rules.workers_per_base * s.own_count[main.index()]);
            side.minerals += rules.mineral_rate * rules.tick_frames as f64 * f64::from(harvesters);
            if let Some(g) = gas_building {
                side.gas += rules.gas_rate * rules.tick_frames as f64 * f64::from(s.own_count[g.index()]);
            }

            if side.queued.is_none() {
                let policy: &mut dyn MatchPolicy = if p == 0 { &mut *policy_a } else { &mut *policy_b };
                if let Some(choice) = policy.choose(&side.state, catalog, &mut side.rng) {
                    match check_legal(&side.state, choice, catalog) {
                        Ok(()) => side.queued = Some(choice),
                        Err(reason) => {
                            side.skipped += 1;
                            log::debug!("side {p} frame {frame_now}: skipped `{}` ({reason:?})", catalog.spec(choice).name);
                        }
                    }
                }
            }
            if let Some(q) = side.queued {
                let spec = catalog.spec(q);
                let (m, g) = (f64::from(spec.mineral_cost), f64::from(spec.gas_cost));
                if side.minerals >= m && side.gas >= g {
                    side.minerals -= m;
                    side.gas -= g;
                    side.state.apply(&GameEvent::produced(frame_now, q), catalog).expect("production is total");
                    side.queued = None;
                    side.started += 1;
                }
            }
        }

        let at_cap = frame_now >= rules.frame_cap;
        let engagement = frame_now >= rules.first_engagement
            && (frame_now - rules.first_engagement) % rules.engagement_interval == 0;
        if engagement || at_cap {
            let a = army_value(&sides[0].state, catalog);
            let b = army_value(&sides[1].state, catalog);
            curve[0].push((frame_now, a));
            curve[1].push((frame_now, b));
            if let Some(w) = verdict(a, b, rules.decisive_ratio) {
                frame = frame_now;
                break w;
            }
        }
        if at_cap {
            frame = frame_now;
            break Winner::Draw;
        }
    };
    MatchResult {
        winner,
        end_frame: frame,
        army_value_curve: curve,
        skipped_decisions: [sides[0].skipped, sides[1].skipped],
        builds_started: [sides[0].started, sides[1].started],
    }
}

/// Hand-written build orders.
#[derive(Clone, Debug, PartialEq)]
pub enum ScriptedPolicy {
    /// Workers (and the supply they need) only.
    WorkersOnly,
    /// Workers up to a target, then gateways, then a single army unit type.
    WorkersThenArmy { workers: u32, gateways: u32, army_unit: BuildId },
}

impl ScriptedPolicy {
    pub fn workers_then_army(catalog: &BuildCatalog) -> Self {
        ScriptedPolicy::WorkersThenArmy {
            workers: 16,
            gateways: 3,
            army_unit: catalog.build_id("zealot").unwrap_or(BuildId(1)),
        }
    }
}

fn supply_building(catalog: &BuildCatalog) -> Option<BuildId> {
    catalog
        .units_buildings()
        .iter()
        .filter(|b| b.id != catalog.main_building() && b.supply_provided > 0)
        .min_by_key(|b| b.mineral_cost)
        .map(|b| b.id)
}

impl MatchPolicy for ScriptedPolicy {
    fn choose(&mut self, view: &MacroState, catalog: &BuildCatalog, _rng: &mut ChaCha8Rng) -> Option<BuildId> {
        let worker = catalog.worker();
        if let Some(pylon) = supply_building(catalog) {
            let provided = catalog.spec(pylon).supply_provided;
            let headroom = i64::from(view.supply_max) + i64::from(provided * view.in_production_count[pylon.index()])
                - i64::from(view.supply_used);
            if headroom < 6 && view.supply_max < crate::forward_model::SUPPLY_LIMIT {
                return Some(pylon);
            }
        }
        match *self {
            ScriptedPolicy::WorkersOnly => Some(worker),
            ScriptedPolicy::WorkersThenArmy { workers, gateways, army_unit } => {
                if view.total(worker) < workers {
                    return Some(worker);
                }
                let producer = catalog.spec(army_unit).prerequisites.first().copied();
                if let Some(prod) = producer {
                    if view.total(prod) < gateways {
                        let ready = catalog.spec(prod).prerequisites.iter().all(|p| view.own_count[p.index()] > 0);
                        return ready.then_some(prod);
                    }
                    if view.own_count[prod.index()] == 0 {
                        return None;
                    }
                }
                Some(army_unit)
            }
        }
    }
}

/// Uniform choice over every non-excluded build, legal or not.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomBuildPolicy {
    pub exclusions: ExclusionSet,
}

impl MatchPolicy for RandomBuildPolicy {
    fn choose(&mut self, _view: &MacroState, _catalog: &BuildCatalog, rng: &mut ChaCha8Rng) -> Option<BuildId> {
        Some(select_random(&self.exclusions, rng))
    }
}

/// A trained network driving production.
pub struct ModelPolicy<'a> {
    pub model: &'a Model,
    pub policy: DecisionPolicy,
    pub ctx: &'a EncoderContext,
}

impl MatchPolicy for ModelPolicy<'_> {
    fn choose(&mut self, view: &MacroState, _catalog: &BuildCatalog, rng: &mut ChaCha8Rng) -> Option<BuildId> {
        match decide(self.model, view, &self.policy, self.ctx, rng) {
            Ok(d) => Some(d.build),
            Err(e) => {
                log::debug!("{}", format!("model decision failed: {e}"));
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legality_rules() {
        let c = BuildCatalog::default_pvt();
        let id = |n| c.build_id(n).unwrap();
        let s = MacroState::initial(&c);
        assert_eq!(check_legal(&s, id("probe"), &c), Ok(()));
        assert_eq!(check_legal(&s, id("zealot"), &c), Err(Illegal::MissingPrerequisite));
        assert_eq!(check_legal(&s, id("pylon"), &c), Ok(()));
        let mut full = s.clone();
        full.supply_used = 18;
        assert_eq!(check_legal(&full, id("probe"), &c), Err(Illegal::SupplyBlocked));
    }

    #[test]
    fn observation_map_covers_shipped_structures() {
        let c = BuildCatalog::default_pvt();
        let r = MatchRules::default_for(&c);
        assert_eq!(r.observation_map.iter().filter(|o| o.is_some()).count(), 30);
        assert_eq!(r.observation_map[c.worker().index()], c.enemy_id("scv"));
    }
}
