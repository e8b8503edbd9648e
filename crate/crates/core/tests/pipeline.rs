use buildnet_core::catalog::{BuildCatalog, BuildId, EnemyTypeId, ENEMY_TYPES, OWN_BUILDS};
use buildnet_core::encoder::{Dataset, EncoderContext, FeatureGroupMask, STATE_DIM};
use buildnet_core::event_log::{EventKind, EventLog, GameEvent};
use buildnet_core::forward_model::{extract_pairs, MacroState};
use buildnet_core::nn::{Model, ModelMeta, Network, NetworkTopology};
use buildnet_core::norms::NormalizationTable;
use buildnet_core::synth::{generate_synthetic_corpus, ReactiveConfig, StochasticScriptPolicy};
use buildnet_core::BuildKind;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A consistent random log: every destroy targets completed material.
fn random_log(seed: u64, len: usize, catalog: &BuildCatalog) -> EventLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = MacroState::initial(catalog);
    let mut log = EventLog::new(format!("r{seed}"));
    let mut frame = 0;
    for _ in 0..len {
        frame += rng.gen_range(0..400);
        state.advance_to(frame, catalog);
        let event = match rng.gen_range(0..10) {
            0..=5 => GameEvent::produced(frame, BuildId(rng.gen_range(0..OWN_BUILDS as u16))),
            6 | 7 => GameEvent::observed(frame, EnemyTypeId(rng.gen_range(0..ENEMY_TYPES as u16))),
            _ => {
                let alive: Vec<_> = catalog
                    .units_buildings()
                    .iter()
                    .filter(|b| state.own_count[b.id.index()] > 0)
                    .map(|b| b.id)
                    .collect();
                if alive.is_empty() {
                    continue;
                }
                GameEvent::destroyed(frame, alive[rng.gen_range(0..alive.len())])
            }
        };
        state.apply(&event, catalog).unwrap();
        log.events.push(event);
    }
    log
}

fn supply_oracle(s: &MacroState, c: &BuildCatalog) -> (u32, u32) {
    let mut used = 0;
    let mut provided = 0;
    for b in c.builds() {
        let i = b.id.index();
        used += b.supply_cost * (s.own_count[i] + s.in_production_count[i]);
        if b.kind == BuildKind::UnitOrBuilding {
            provided += b.supply_provided * s.own_count[i];
        }
    }
    (used, provided.min(400))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snapshots_are_reconstructible_from_log_prefixes(seed in any::<u64>(), len in 0usize..120) {
        let c = BuildCatalog::default_pvt();
        let log = random_log(seed, len, &c);
        let pairs = extract_pairs(&log, &c).unwrap();
        prop_assert_eq!(pairs.len(), log.produced_count());
        let mut k = 0;
        for (i, e) in log.events.iter().enumerate() {
            if let EventKind::Produced(action) = e.kind {
                let mut replay = MacroState::initial(&c);
                for prior in &log.events[..i] {
                    replay = replay.apply_event(prior, &c).unwrap();
                }
                let replay = replay.advance(e.frame, &c);
                prop_assert_eq!(&pairs[k].state, &replay);
                prop_assert_eq!(pairs[k].action, action);
                k += 1;
            }
        }
    }

    #[test]
    fn supply_and_progress_invariants_hold(seed in any::<u64>(), len in 0usize..150) {
        let c = BuildCatalog::default_pvt();
        let log = random_log(seed, len, &c);
        let mut s = MacroState::initial(&c);
        for e in &log.events {
            s.apply(e, &c).unwrap();
            prop_assert!(s.is_well_formed());
            prop_assert_eq!((s.supply_used, s.supply_max), supply_oracle(&s, &c));
            for b in c.builds() {
                let i = b.id.index();
                prop_assert!(s.in_production_count[i] > 0 || s.production_progress[i] == 0.0);
                prop_assert!((0.0..=1.0).contains(&s.production_progress[i]));
                if b.kind != BuildKind::UnitOrBuilding {
                    prop_assert!(s.own_count[i] <= 1);
                }
            }
        }
    }

    #[test]
    fn encoded_values_are_in_unit_range(seed in any::<u64>(), len in 0usize..300) {
        let ctx = EncoderContext::default_pvt();
        let log = random_log(seed, len, &ctx.catalog);
        for pair in extract_pairs(&log, &ctx.catalog).unwrap() {
            let v = ctx.encode(&pair.state);
            prop_assert!(v.in_unit_range());
        }
    }

    #[test]
    fn event_log_text_round_trips(seed in any::<u64>(), len in 0usize..80) {
        let c = BuildCatalog::default_pvt();
        let log = random_log(seed, len, &c);
        let back = EventLog::parse(&log.to_text(&c), &c).unwrap();
        prop_assert_eq!(back, log);
    }

    #[test]
    fn masks_round_trip_through_text_and_bits(bits in 0u8..16) {
        let m = FeatureGroupMask::from_bits(bits).unwrap();
        prop_assert_eq!(m.to_string().parse::<FeatureGroupMask>().unwrap(), m);
        prop_assert_eq!(m.to_bits(), bits);
    }
}

#[test]
fn catalog_names_and_ids_are_a_bijection() {
    let c = BuildCatalog::default_pvt();
    for b in c.builds() {
        assert_eq!(c.build_id(&b.name), Some(b.id));
        assert_eq!(c.build(b.id).unwrap().name, b.name);
    }
    for e in c.enemy_types() {
        assert_eq!(c.enemy_id(&e.name), Some(e.id));
    }
    let again = BuildCatalog::parse(&c.to_text()).unwrap();
    assert_eq!(again, c);
    assert_eq!(again.content_hash(), c.content_hash());
}

#[test]
fn norms_round_trip() {
    let ctx = EncoderContext::default_pvt();
    let text = ctx.norms.to_text(&ctx.catalog);
    let back = NormalizationTable::parse(&text, &ctx.catalog).unwrap();
    assert_eq!(back, ctx.norms);
}

fn corpus(ctx: &EncoderContext) -> Vec<EventLog> {
    let g = StochasticScriptPolicy::Reactive(ReactiveConfig::default());
    generate_synthetic_corpus(&g, 25, 4, &ctx.catalog)
}

#[test]
fn extraction_is_deterministic_and_counts_match() {
    let ctx = EncoderContext::default_pvt();
    let logs = corpus(&ctx);
    let a = Dataset::from_logs(&logs, &ctx).unwrap();
    let b = Dataset::from_logs(&corpus(&ctx), &ctx).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(a.pair_count(), logs.iter().map(EventLog::produced_count).sum::<usize>());
    assert!(a.samples().all(|s| s.state.in_unit_range()));
}

#[test]
fn dataset_bytes_round_trip_and_reject_truncation() {
    let ctx = EncoderContext::default_pvt();
    let d = Dataset::from_logs(&corpus(&ctx), &ctx).unwrap();
    let bytes = d.to_bytes();
    assert_eq!(Dataset::from_bytes(&bytes).unwrap(), d);
    assert!(Dataset::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(Dataset::from_bytes(&extra).is_err());
    assert_eq!(d.samples().next().unwrap().state.0.len(), STATE_DIM);
}

#[test]
fn model_bytes_round_trip() {
    let ctx = EncoderContext::default_pvt();
    let mask: FeatureGroupMask = "a+b+e".parse().unwrap();
    let model = Model { network: Network::init(NetworkTopology::default(), 3), meta: ModelMeta::for_context(&ctx, mask) };
    let back = Model::from_bytes(&model.to_bytes()).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.fingerprint(), model.fingerprint());
    back.check_compatible(&ctx).unwrap();
}
