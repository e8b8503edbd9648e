use buildnet_core::analysis::expansion_curve;
use buildnet_core::encoder::{Dataset, EncoderContext, FeatureGroupMask};
use buildnet_core::nn::{Model, ModelMeta};
use buildnet_core::synth::{generate_synthetic_corpus, ReactiveConfig, StochasticScriptPolicy};
use buildnet_core::training::{train, TrainConfig};

#[test]
fn curve_peaks_where_the_generator_expands() {
    let ctx = EncoderContext::default_pvt();
    let generator = StochasticScriptPolicy::Reactive(ReactiveConfig {
        decisions: 45,
        worker_target: 30,
        expand_at: 24,
        ..ReactiveConfig::default()
    });
    let logs = generate_synthetic_corpus(&generator, 300, 21, &ctx.catalog);
    let data = Dataset::from_logs(&logs, &ctx).unwrap();
    let config = TrainConfig { epochs: 12, learning_rate: 1e-3, ..TrainConfig::default() };
    let network = train(&data, &config).unwrap().network;
    let model = Model { network, meta: ModelMeta::for_context(&ctx, FeatureGroupMask::FULL) };
    let curve = expansion_curve(&model, &data, &ctx).unwrap();
    let peak = curve
        .iter()
        .filter(|r| r.n_states >= 5)
        .max_by(|a, b| a.mean_probability.total_cmp(&b.mean_probability))
        .unwrap();
    assert!((20..=28).contains(&peak.probe_count), "{curve:#?}");
    let early: Vec<_> = curve.iter().filter(|r| r.probe_count < 15).collect();
    assert!(early.iter().all(|r| r.mean_probability < 0.1), "{early:#?}");
}
