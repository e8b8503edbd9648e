//! Build-order forward model.
//!
//! Replays an [`EventLog`] through time and snapshots the player's partially
//! observable macro state each time a build is started.

use alloc::vec;
use alloc::vec::Vec;

use crate::catalog::{BuildCatalog, BuildId, BuildKind, ENEMY_TYPES, OWN_BUILDS};
use crate::error::ConsistencyError;
use crate::event_log::{EventKind, EventLog, GameEvent};

/// Supply ceiling in half-units (200 as displayed in game).
pub const SUPPLY_LIMIT: u32 = 400;
pub const INITIAL_WORKERS: u32 = 4;

/// One in-flight production instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pending {
    pub build: BuildId,
    pub started: u64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MacroState {
    /// Completed material per own build (58).
    pub own_count: Vec<u32>,
    /// Instances currently in production per own build (58).
    pub in_production_count: Vec<u32>,
    /// Progress in `[0, 1]` of the soonest-finishing instance per build (58).
    pub production_progress: Vec<f64>,
    /// Observed enemy material per enemy type (33).
    pub enemy_count: Vec<u32>,
    pub supply_used: u32,
    pub supply_max: u32,
    pub frame: u64,
    /// All tracked production instances, oldest first. Empty for states
    /// that did not come from the forward model.
    #[cfg_attr(feature = "serde", serde(skip))]
    pending: Vec<Pending>,
}

/// A decision point: the state just before `action` started production.
#[derive(Clone, Debug, PartialEq)]
pub struct StateActionPair {
    pub state: MacroState,
    pub action: BuildId,
}

impl MacroState {
    /// All counts zero, frame 0.
    pub fn zeroed() -> Self {
        MacroState {
            own_count: vec![0; OWN_BUILDS],
            in_production_count: vec![0; OWN_BUILDS],
            production_progress: vec![0.0; OWN_BUILDS],
            enemy_count: vec![0; ENEMY_TYPES],
            supply_used: 0,
            supply_max: 0,
            frame: 0,
            pending: Vec::new(),
        }
    }

    /// Game opening: four workers and one main building, frame 0.
    pub fn initial(catalog: &BuildCatalog) -> Self {
        let mut s = Self::zeroed();
        s.own_count[catalog.worker().index()] = INITIAL_WORKERS;
        s.own_count[catalog.main_building().index()] = 1;
        s.supply_used = INITIAL_WORKERS * catalog.spec(catalog.worker()).supply_cost;
        s.recompute_supply_max(catalog);
        s
    }

    pub fn pending(&self) -> &[Pending] {
        &self.pending
    }

    /// Checks vector lengths and the basic range constraints.
    pub fn is_well_formed(&self) -> bool {
        self.own_count.len() == OWN_BUILDS
            && self.in_production_count.len() == OWN_BUILDS
            && self.production_progress.len() == OWN_BUILDS
            && self.enemy_count.len() == ENEMY_TYPES
            && self
                .production_progress
                .iter()
                .zip(&self.in_production_count)
                .all(|(p, n)| (0.0..=1.0).contains(p) && (*p == 0.0 || *n >= 1))
    }

    pub fn supply_left(&self) -> i64 {
        i64::from(self.supply_max) - i64::from(self.supply_used)
    }

    /// Completed plus in-production count.
    pub fn total(&self, id: BuildId) -> u32 {
        self.own_count[id.index()] + self.in_production_count[id.index()]
    }

    fn recompute_supply_max(&mut self, catalog: &BuildCatalog) {
        let provided: u64 = catalog
            .units_buildings()
            .iter()
            .map(|b| u64::from(b.supply_provided) * u64::from(self.own_count[b.id.index()]))
            .sum();
        self.supply_max = provided.min(u64::from(SUPPLY_LIMIT)) as u32;
    }

    fn refresh_progress(&mut self, catalog: &BuildCatalog) {
        self.in_production_count.iter_mut().for_each(|c| *c = 0);
        self.production_progress.iter_mut().for_each(|p| *p = 0.0);
        for p in &self.pending {
            let i = p.build.index();
            self.in_production_count[i] += 1;
            let frames = f64::from(catalog.spec(p.build).build_frames);
            let progress = ((self.frame - p.started) as f64 / frames).min(1.0);
            if progress > self.production_progress[i] {
                self.production_progress[i] = progress;
            }
        }
    }

    /// Moves time forward, completing every instance whose build time has
    /// elapsed. `to_frame` earlier than the current frame is a no-op.
    pub fn advance_to(&mut self, to_frame: u64, catalog: &BuildCatalog) {
        if to_frame <= self.frame {
            return;
        }
        self.frame = to_frame;
        if self.pending.is_empty() {
            return;
        }
        let mut completed_supply = false;
        let mut i = 0;
        while i < self.pending.len() {
            let p = self.pending[i];
            let spec = catalog.spec(p.build);
            if p.started + u64::from(spec.build_frames) <= to_frame {
                self.pending.remove(i);
                let slot = &mut self.own_count[p.build.index()];
                *slot = match spec.kind {
                    BuildKind::UnitOrBuilding => *slot + 1,
                    // Techs and upgrades are one-time builds.
                    BuildKind::Technology | BuildKind::Upgrade => 1,
                };
                completed_supply |= spec.supply_provided > 0;
            } else {
                i += 1;
            }
        }
        if completed_supply {
            self.recompute_supply_max(catalog);
        }
        self.refresh_progress(catalog);
    }

    /// Functional form of [`MacroState::advance_to`].
    pub fn advance(&self, to_frame: u64, catalog: &BuildCatalog) -> MacroState {
        let mut next = self.clone();
        next.advance_to(to_frame, catalog);
        next
    }

    /// Advances to the event's frame and applies it in place.
    pub fn apply(&mut self, event: &GameEvent, catalog: &BuildCatalog) -> Result<(), ConsistencyError> {
        if event.frame < self.frame {
            return Err(ConsistencyError::TimeReversal { frame: event.frame, state_frame: self.frame });
        }
        self.advance_to(event.frame, catalog);
        match event.kind {
            EventKind::Produced(id) => {
                let spec = catalog.spec(id);
                self.pending.push(Pending { build: id, started: event.frame });
                self.in_production_count[id.index()] += 1;
                self.supply_used += spec.supply_cost;
            }
            EventKind::Destroyed(id) => {
                let spec = catalog.spec(id);
                if spec.kind != BuildKind::UnitOrBuilding {
                    return Err(ConsistencyError::DestroyedNotMaterial {
                        frame: event.frame,
                        build: spec.name.clone(),
                    });
                }
                let slot = &mut self.own_count[id.index()];
                if *slot == 0 {
                    return Err(ConsistencyError::DestroyedMissing { frame: event.frame, build: spec.name.clone() });
                }
                *slot -= 1;
                self.supply_used = self.supply_used.saturating_sub(spec.supply_cost);
                if spec.supply_provided > 0 {
                    self.recompute_supply_max(catalog);
                }
            }
            EventKind::EnemyObserved(id) => self.enemy_count[id.index()] += 1,
        }
        Ok(())
    }

    /// Functional form of [`MacroState::apply`].
    pub fn apply_event(&self, event: &GameEvent, catalog: &BuildCatalog) -> Result<MacroState, ConsistencyError> {
        let mut next = self.clone();
        next.apply(event, catalog)?;
        Ok(next)
    }
}

/// One pair per `Produced` event, in log order. Each snapshot reflects every
/// earlier event plus production progress up to the event's frame.
pub fn extract_pairs(log: &EventLog, catalog: &BuildCatalog) -> Result<Vec<StateActionPair>, ConsistencyError> {
    let mut state = MacroState::initial(catalog);
    let mut pairs = Vec::with_capacity(log.produced_count());
    for event in &log.events {
        if let EventKind::Produced(action) = event.kind {
            state.advance_to(event.frame, catalog);
            pairs.push(StateActionPair { state: state.clone(), action });
        }
        state.apply(event, catalog)?;
    }
    Ok(pairs)
}
