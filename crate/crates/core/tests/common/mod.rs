#![allow(dead_code)]

pub mod oracle;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rolegate::catalog::fixture::{self, FixtureReport};
use rolegate::catalog::Catalog;
use rolegate::gateway::client::{InProcess, QueryClient};
use rolegate::gateway::{Gateway, GatewayOptions};

pub const TEST_BITS: u64 = 256;

pub fn s4_catalog(seed: u64) -> (Catalog, FixtureReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Catalog::in_memory();
    let r = fixture::load(&mut c, &fixture::s4_fixture(TEST_BITS), &mut rng).expect("s4 fixture loads");
    (c, r)
}

pub fn s4_gateway(seed: u64) -> (Arc<Gateway>, FixtureReport) {
    let (c, r) = s4_catalog(seed);
    (Arc::new(Gateway::new(c, GatewayOptions { key_seed: Some(seed), ..Default::default() })), r)
}

pub fn client(gw: &Arc<Gateway>, tenant: &str, user: &str) -> QueryClient<InProcess> {
    QueryClient::login(InProcess::new(gw.clone()), tenant, user, &format!("{user}-pw")).expect("login")
}
