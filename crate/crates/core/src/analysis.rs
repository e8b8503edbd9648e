//! How the predicted chance of expanding varies with worker count.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::encoder::{Dataset, EncoderContext, IN_PRODUCTION, OWN};
use crate::error::PolicyError;
use crate::nn::Model;

#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionRow {
    pub probe_count: u32,
    pub n_states: usize,
    pub mean_probability: f64,
}

fn decode_count(value: f64, norm: f64) -> u32 {
    libm::round(value * norm) as u32
}

/// Mean predicted probability of the main building being built next, per
/// worker count, over states with exactly one completed main building and
/// none under construction. Rows are sorted by worker count.
pub fn expansion_curve(model: &Model, dataset: &Dataset, ctx: &EncoderContext) -> Result<Vec<ExpansionRow>, PolicyError> {
    model.check_compatible(ctx)?;
    let worker = ctx.catalog.worker().index();
    let main = ctx.catalog.main_building().index();
    let norms = &ctx.norms;
    let mut buckets: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
    let mut ws = model.network.workspace();
    let mut x = [0.0; crate::encoder::STATE_DIM];
    for sample in dataset.samples() {
        let v = &sample.state.0;
        let bases = decode_count(v[OWN.start + main], norms.own[main]);
        let building = decode_count(v[IN_PRODUCTION.start + main], norms.in_production[main]);
        if bases != 1 || building != 0 {
            continue;
        }
        let probes = decode_count(v[OWN.start + worker], norms.own[worker]);
        x.copy_from_slice(v);
        model.meta.mask.apply_in_place(&mut x);
        model.network.forward_into(&x, &mut ws).expect("state vectors match the input layer");
        let p = ws.output()[main];
        let slot = buckets.entry(probes).or_insert((0, 0.0));
        slot.0 += 1;
        slot.1 += p;
    }
    Ok(buckets
        .into_iter()
        .map(|(probe_count, (n, sum))| ExpansionRow { probe_count, n_states: n, mean_probability: sum / n as f64 })
        .collect())
}
