#![allow(dead_code)]

use std::net::SocketAddr;
use std::thread::JoinHandle;

use buildnet::server::{Server, ServiceConfig, ShutdownHandle};
use buildnet_core::encoder::{EncoderContext, FeatureGroupMask};
use buildnet_core::nn::{Model, ModelMeta, Network, NetworkTopology};
use buildnet_core::policy::{DecisionPolicy, ExclusionSet, SelectionMode};

pub fn model(ctx: &EncoderContext, seed: u64) -> Model {
    Model { network: Network::init(NetworkTopology::default(), seed), meta: ModelMeta::for_context(ctx, FeatureGroupMask::FULL) }
}

pub struct Running {
    pub addr: SocketAddr,
    pub version: String,
    handle: ShutdownHandle,
    thread: Option<JoinHandle<()>>,
}

impl Running {
    pub fn stop(mut self) {
        self.handle.shutdown();
        self.thread.take().unwrap().join().unwrap();
    }
}

pub fn start(mode: SelectionMode, seed: u64) -> Running {
    let ctx = EncoderContext::default_pvt();
    let policy = DecisionPolicy { mode, blind: false, exclusions: ExclusionSet::default_for(&ctx.catalog), seed };
    let server = Server::bind("127.0.0.1:0", ServiceConfig { model: model(&ctx, 1), ctx, policy, seed }).unwrap();
    let addr = server.local_addr().unwrap();
    let version = server.model_version().to_string();
    let handle = server.shutdown_handle();
    let thread = std::thread::spawn(move || server.run().unwrap());
    Running { addr, version, handle, thread: Some(thread) }
}
