//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

pub mod ipm;
pub mod lpgen;

use neural_rld::grid::{Line, NetworkCase};

pub fn one_bus() -> NetworkCase {
    NetworkCase {
        name: "one-bus".into(),
        base_mva: 1.0,
        n_bus: 1,
        reference_bus: 0,
        lines: vec![],
        alpha: vec![1.0],
        beta: vec![10.0],
        allow_cost_violation: false,
    }
}

pub fn two_bus(alpha: [f64; 2]) -> NetworkCase {
    NetworkCase {
        name: "two-bus".into(),
        base_mva: 1.0,
        n_bus: 2,
        reference_bus: 0,
        lines: vec![Line { from: 0, to: 1, susceptance: 1.0, capacity_mw: 0.5 }],
        alpha: alpha.to_vec(),
        beta: vec![10.0, 10.0],
        allow_cost_violation: false,
    }
}

pub fn five_bus() -> NetworkCase {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../cases/five_bus.json");
    neural_rld::grid::load_case(path).expect("bundled five-bus case")
}

pub fn case_file(name: &str) -> String {
    format!("{}/../../cases/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// 1-bus toy where demand equals the single feature, `x ~ U[0.5, 1.5]`.
pub fn one_bus_toy(m: usize, seed: u64) -> neural_rld::datagen::Dataset {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let features: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.random_range(0.5..1.5)]).collect();
    neural_rld::datagen::Dataset {
        demands: features.clone(),
        features,
        omega: nalgebra::DMatrix::from_element(1, 1, 1.0),
        noise_scale: 0.0,
        seed,
        case_name: "one-bus".into(),
    }
}
