//! Synthetic event logs from scripted stochastic players.
//!
//! Every generator exposes the exact conditional distribution over the next
//! build given the state the log will produce, so the Bayes-optimal error of
//! any corpus it emits can be computed directly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{BuildCatalog, BuildId, EnemyTypeId, OWN_BUILDS};
use crate::event_log::{EventKind, EventLog, GameEvent};
use crate::forward_model::MacroState;
use crate::policy::select_probabilistic;

/// A fixed production sequence: `(frame, build)` pairs in frame order.
pub type Script = Vec<(u64, BuildId)>;

#[derive(Clone, Debug, PartialEq)]
pub struct TwoBranch {
    /// Probability of playing `first`.
    pub p_first: f64,
    pub first: Script,
    pub second: Script,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReactiveConfig {
    pub decisions: usize,
    pub min_gap: u64,
    pub max_gap: u64,
    /// Chance of one enemy sighting per gap once scouting has started.
    pub sighting_prob: f64,
    /// Chance of losing one army unit per gap when any exists.
    pub loss_prob: f64,
    /// Workers needed before a second main building becomes likely.
    pub expand_at: u32,
    /// Workers the script builds before turning to army.
    pub worker_target: u32,
    /// Probability mass placed on the rule-preferred build; the rest
    /// follows looser background weights.
    pub favourite_mass: f64,
}

impl Default for ReactiveConfig {
    fn default() -> Self {
        ReactiveConfig {
            decisions: 30,
            min_gap: 150,
            max_gap: 350,
            sighting_prob: 0.6,
            loss_prob: 0.08,
            expand_at: 24,
            worker_target: 16,
            favourite_mass: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StochasticScriptPolicy {
    /// Replays the script verbatim.
    Fixed(Script),
    TwoBranch(TwoBranch),
    /// Chooses by weighted rules over the visible state, including what has
    /// been seen of the opponent. Needs the shipped catalog names.
    Reactive(ReactiveConfig),
}

#[derive(Clone, Copy)]
struct Ids {
    probe: BuildId,
    pylon: BuildId,
    nexus: BuildId,
    gateway: BuildId,
    assimilator: BuildId,
    cyber: BuildId,
    zealot: BuildId,
    dragoon: BuildId,
    forge: BuildId,
    cannon: BuildId,
    singularity: BuildId,
    weapons: BuildId,
    bio: [EnemyTypeId; 3],
    mech: [EnemyTypeId; 3],
    barracks: EnemyTypeId,
    factory: EnemyTypeId,
    command_center: EnemyTypeId,
}

impl Ids {
    fn resolve(c: &BuildCatalog) -> Ids {
        let b = |n: &str| c.build_id(n).unwrap_or_else(|| panic!("reactive script needs build `{n}`"));
        let e = |n: &str| c.enemy_id(n).unwrap_or_else(|| panic!("reactive script needs enemy type `{n}`"));
        Ids {
            probe: b("probe"),
            pylon: b("pylon"),
            nexus: b("nexus"),
            gateway: b("gateway"),
            assimilator: b("assimilator"),
            cyber: b("cybernetics_core"),
            zealot: b("zealot"),
            dragoon: b("dragoon"),
            forge: b("forge"),
            cannon: b("photon_cannon"),
            singularity: b("singularity_charge"),
            weapons: b("ground_weapons"),
            bio: [e("marine"), e("firebat"), e("medic")],
            mech: [e("vulture"), e("siege_tank_tank_mode"), e("goliath")],
            barracks: e("barracks"),
            factory: e("factory"),
            command_center: e("command_center"),
        }
    }
}

fn background_weights(s: &MacroState, c: &BuildCatalog, ids: &Ids, cfg: &ReactiveConfig) -> Vec<f64> {
    let mut w = vec![0.0; OWN_BUILDS];
    let own = |id: BuildId| s.own_count[id.index()];
    let total = |id: BuildId| s.total(id);
    let seen = |ts: &[EnemyTypeId]| ts.iter().map(|t| s.enemy_count[t.index()]).sum::<u32>();
    let bio = seen(&ids.bio);
    let mech = seen(&ids.mech) + s.enemy_count[ids.factory.index()];
    let pylon_supply = c.spec(ids.pylon).supply_provided;
    let headroom = i64::from(s.supply_max) + i64::from(pylon_supply * s.in_production_count[ids.pylon.index()])
        - i64::from(s.supply_used);
    let fits = |id: BuildId| s.supply_used + c.spec(id).supply_cost <= s.supply_max;
    let workers = total(ids.probe);
    let bases = total(ids.nexus);

    w[ids.pylon.index()] = match headroom {
        h if h < 8 => 6.0,
        h if h < 16 => 1.0,
        _ => 0.1,
    };
    if fits(ids.probe) {
        w[ids.probe.index()] = if workers < 12 {
            5.0
        } else if workers < 20 * bases {
            2.0
        } else {
            0.3
        };
    }
    w[ids.nexus.index()] = if bases == 1 && workers >= cfg.expand_at { 6.0 } else { 0.02 };
    if own(ids.pylon) > 0 {
        w[ids.gateway.index()] = match total(ids.gateway) {
            0 => 3.0,
            1 | 2 => 1.0,
            _ => 0.2,
        };
        if workers >= 16 && total(ids.forge) == 0 {
            w[ids.forge.index()] = 0.6;
        }
    }
    w[ids.assimilator.index()] = if workers >= 14 && total(ids.assimilator) == 0 { 2.0 } else { 0.05 };
    if own(ids.gateway) > 0 {
        w[ids.cyber.index()] = if total(ids.cyber) == 0 { 2.0 } else { 0.02 };
        if fits(ids.zealot) {
            w[ids.zealot.index()] = match bio.cmp(&mech) {
                core::cmp::Ordering::Greater => 3.0,
                core::cmp::Ordering::Less => 0.5,
                core::cmp::Ordering::Equal => 1.5,
            };
        }
        if own(ids.cyber) > 0 && fits(ids.dragoon) {
            w[ids.dragoon.index()] = match mech.cmp(&bio) {
                core::cmp::Ordering::Greater => 3.0,
                core::cmp::Ordering::Less => 0.7,
                core::cmp::Ordering::Equal => 1.5,
            };
        }
    }
    if own(ids.forge) > 0 {
        w[ids.cannon.index()] = if mech > bio {
            0.3
        } else if bio >= 4 {
            1.0
        } else {
            0.2
        };
        if total(ids.weapons) == 0 {
            w[ids.weapons.index()] = 0.5;
        }
    }
    if own(ids.cyber) > 0 && mech > 0 && total(ids.singularity) == 0 {
        w[ids.singularity.index()] = 1.0;
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    w
}

/// The build the script prefers in `s`; `None` leaves only background play.
fn favourite(s: &MacroState, c: &BuildCatalog, ids: &Ids, cfg: &ReactiveConfig) -> Option<BuildId> {
    let own = |id: BuildId| s.own_count[id.index()];
    let total = |id: BuildId| s.total(id);
    let seen = |ts: &[EnemyTypeId]| ts.iter().map(|t| s.enemy_count[t.index()]).sum::<u32>();
    let bio = seen(&ids.bio);
    let mech = seen(&ids.mech) + s.enemy_count[ids.factory.index()];
    let pylon_supply = c.spec(ids.pylon).supply_provided;
    let headroom = i64::from(s.supply_max) + i64::from(pylon_supply * s.in_production_count[ids.pylon.index()])
        - i64::from(s.supply_used);
    let fits = |id: BuildId| s.supply_used + c.spec(id).supply_cost <= s.supply_max;
    let workers = total(ids.probe);

    if headroom < 8 {
        return Some(ids.pylon);
    }
    if workers < 10 && fits(ids.probe) {
        return Some(ids.probe);
    }
    if own(ids.pylon) > 0 && total(ids.gateway) == 0 {
        return Some(ids.gateway);
    }
    if total(ids.nexus) == 1 && workers >= cfg.expand_at {
        return Some(ids.nexus);
    }
    if workers >= 14 && total(ids.assimilator) == 0 {
        return Some(ids.assimilator);
    }
    if own(ids.gateway) > 0 && total(ids.cyber) == 0 {
        return Some(ids.cyber);
    }
    if workers < cfg.worker_target && fits(ids.probe) {
        return Some(ids.probe);
    }
    if own(ids.gateway) > 0 {
        if mech > bio && own(ids.cyber) > 0 && fits(ids.dragoon) {
            return Some(ids.dragoon);
        }
        if fits(ids.zealot) {
            return Some(ids.zealot);
        }
    }
    if fits(ids.probe) {
        return Some(ids.probe);
    }
    None
}

fn reactive_distribution(s: &MacroState, c: &BuildCatalog, ids: &Ids, cfg: &ReactiveConfig) -> Vec<f64> {
    let mut d = background_weights(s, c, ids, cfg);
    if let Some(f) = favourite(s, c, ids, cfg) {
        d.iter_mut().for_each(|p| *p *= 1.0 - cfg.favourite_mass);
        d[f.index()] += cfg.favourite_mass;
    }
    d
}

/// Counts after replaying the first `k` builds of a script from the initial
/// state, with time frozen at the `k`-th build's frame.
fn script_state(script: &Script, k: usize, catalog: &BuildCatalog) -> MacroState {
    let mut s = MacroState::initial(catalog);
    for &(frame, id) in &script[..k] {
        s.apply(&GameEvent::produced(frame, id), catalog).expect("scripts only produce");
    }
    if let Some(&(frame, _)) = script.get(k) {
        s.advance_to(frame, catalog);
    }
    s
}

fn same_material(a: &MacroState, b: &MacroState) -> bool {
    a.own_count == b.own_count && a.in_production_count == b.in_production_count && a.frame == b.frame
}

fn one_hot(id: BuildId) -> Vec<f64> {
    let mut v = vec![0.0; OWN_BUILDS];
    v[id.index()] = 1.0;
    v
}

impl StochasticScriptPolicy {
    /// Exact probability of each build being the `decision_index`-th
    /// production, given the state extracted at that point of a log this
    /// generator emitted. `None` when the state is unreachable.
    pub fn action_distribution(
        &self,
        state: &MacroState,
        decision_index: usize,
        catalog: &BuildCatalog,
    ) -> Option<Vec<f64>> {
        match self {
            StochasticScriptPolicy::Fixed(script) => script.get(decision_index).map(|&(_, id)| one_hot(id)),
            StochasticScriptPolicy::TwoBranch(tb) => {
                let mut mix = vec![0.0; OWN_BUILDS];
                let mut mass = 0.0;
                for (prior, script) in [(tb.p_first, &tb.first), (1.0 - tb.p_first, &tb.second)] {
                    if prior <= 0.0 || decision_index >= script.len() {
                        continue;
                    }
                    if same_material(&script_state(script, decision_index, catalog), state) {
                        mix[script[decision_index].1.index()] += prior;
                        mass += prior;
                    }
                }
                (mass > 0.0).then(|| mix.into_iter().map(|p| p / mass).collect())
            }
            StochasticScriptPolicy::Reactive(cfg) => {
                (decision_index < cfg.decisions).then(|| reactive_distribution(state, catalog, &Ids::resolve(catalog), cfg))
            }
        }
    }

    fn generate_one(&self, game_id: &str, rng: &mut ChaCha8Rng, catalog: &BuildCatalog) -> EventLog {
        let mut log = EventLog::new(game_id);
        match self {
            StochasticScriptPolicy::Fixed(script) => {
                log.events = script.iter().map(|&(f, id)| GameEvent::produced(f, id)).collect();
            }
            StochasticScriptPolicy::TwoBranch(tb) => {
                let script = if rng.gen_bool(tb.p_first) { &tb.first } else { &tb.second };
                log.events = script.iter().map(|&(f, id)| GameEvent::produced(f, id)).collect();
            }
            StochasticScriptPolicy::Reactive(cfg) => reactive_game(cfg, &mut log, rng, catalog),
        }
        log
    }
}

fn reactive_game(cfg: &ReactiveConfig, log: &mut EventLog, rng: &mut ChaCha8Rng, catalog: &BuildCatalog) {
    let ids = Ids::resolve(catalog);
    let mech_game = rng.gen_bool(0.5);
    let mut state = MacroState::initial(catalog);
    let mut frame = 0u64;
    let mut push = |state: &mut MacroState, event: GameEvent| {
        state.apply(&event, catalog).expect("generated events are consistent");
        log.events.push(event);
    };
    for k in 0..cfg.decisions {
        let gap = rng.gen_range(cfg.min_gap..=cfg.max_gap);
        let mid = frame + gap / 2;
        frame += gap;

        if k == 2 {
            push(&mut state, GameEvent::observed(mid, ids.command_center));
            push(&mut state, GameEvent::observed(mid, ids.barracks));
        }
        if k == 6 && mech_game {
            push(&mut state, GameEvent::observed(mid, ids.factory));
        }
        if k >= 4 && rng.gen_bool(cfg.sighting_prob) {
            let on_theme = rng.gen_bool(0.8) != mech_game;
            let pool = if on_theme { &ids.bio } else { &ids.mech };
            let t = pool[rng.gen_range(0..pool.len())];
            push(&mut state, GameEvent::observed(mid, t));
        }
        if rng.gen_bool(cfg.loss_prob) {
            state.advance_to(mid, catalog);
            let army: Vec<BuildId> =
                [ids.zealot, ids.dragoon].into_iter().filter(|id| state.own_count[id.index()] > 0).collect();
            if !army.is_empty() {
                let lost = army[rng.gen_range(0..army.len())];
                push(&mut state, GameEvent::destroyed(mid, lost));
            }
        }

        state.advance_to(frame, catalog);
        let dist = reactive_distribution(&state, catalog, &ids, cfg);
        let choice = select_probabilistic(&dist, rng);
        push(&mut state, GameEvent::produced(frame, choice));
    }
}

/// `n_games` logs with ids `synth-000000`, `synth-000001`, ... Game `i`
/// draws from stream `i` of a generator seeded with `seed`, so any game can
/// be regenerated on its own.
pub fn generate_synthetic_corpus(
    generator: &StochasticScriptPolicy,
    n_games: usize,
    seed: u64,
    catalog: &BuildCatalog,
) -> Vec<EventLog> {
    assert!(n_games >= 1, "n_games must be positive");
    (0..n_games)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            generator.generate_one(&format!("synth-{i:06}"), &mut rng, catalog)
        })
        .collect()
}

/// Index of each `Produced` event among the productions of its log, aligned
/// with the pairs `extract_pairs` emits.
pub fn decision_indices(log: &EventLog) -> impl Iterator<Item = usize> + '_ {
    log.events.iter().filter(|e| matches!(e.kind, EventKind::Produced(_))).enumerate().map(|(i, _)| i)
}
