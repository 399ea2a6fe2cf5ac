use std::sync::Arc;

use wedgefield::dynamics::{
    dressed_propagator, evolve, odd_hs_norm, pair_creation_probability, EvolutionConfig, Method,
};
use wedgefield::{EnvelopeKind, Grid, GridSpec, PhysicsParams, PotentialSpec, Space, TimeEnvelope};

fn space(n: usize, l: f64) -> Arc<Space> {
    Space::new(
        Grid::build(&GridSpec::new(1, n, l)).unwrap(),
        PhysicsParams::new(1.0, 1.0),
    )
    .unwrap()
}

fn pulse() -> PotentialSpec {
    PotentialSpec::electric(
        0.4,
        1.5,
        [0.0; 3],
        TimeEnvelope::new(EnvelopeKind::SinSquared, 0.0, 2.0),
    )
}

fn diff(a: &wedgefield::GridOperator, b: &wedgefield::GridOperator) -> f64 {
    (a.to_matrix().unwrap() - b.to_matrix().unwrap()).norm_l2()
}

#[test]
fn propagation_composes_over_adjacent_intervals() {
    let s = space(32, 16.0);
    let pot = pulse();
    let whole = evolve(&pot, &EvolutionConfig::strang(0.0, 2.0, 64), &s).unwrap();
    let first = evolve(&pot, &EvolutionConfig::strang(0.0, 1.0, 32), &s).unwrap();
    let second = evolve(&pot, &EvolutionConfig::strang(1.0, 2.0, 32), &s).unwrap();
    assert!(diff(&whole, &second.compose(&first)) < 1e-12);
}

#[test]
fn backward_evolution_inverts_forward() {
    let s = space(32, 16.0);
    let pot = pulse();
    let fwd = evolve(&pot, &EvolutionConfig::strang(0.0, 2.0, 40), &s).unwrap();
    let back = evolve(&pot, &EvolutionConfig::strang(2.0, 0.0, 40), &s).unwrap();
    assert!(diff(&back.compose(&fwd), &wedgefield::GridOperator::identity(&s)) < 1e-10);
}

#[test]
fn no_pairs_without_a_field() {
    let s = space(16, 8.0);
    let u = evolve(
        &PotentialSpec::zero(),
        &EvolutionConfig::strang(0.0, 3.0, 8),
        &s,
    )
    .unwrap();
    assert!(pair_creation_probability(&u).unwrap() < 1e-28);
    assert!(odd_hs_norm(&u).unwrap() < 1e-14);
}

#[test]
fn dressing_removes_most_of_the_odd_part_after_a_pulse() {
    let s = space(64, 24.0);
    let pot = PotentialSpec::magnetic(
        1,
        0.4,
        1.5,
        [0.0; 3],
        TimeEnvelope::new(EnvelopeKind::SinSquared, 0.0, 4.0),
    );
    let cfg = EvolutionConfig::strang(0.0, 2.0, 64);
    let u = evolve(&pot, &cfg, &s).unwrap();
    let d = dressed_propagator(&pot, &cfg, &s).unwrap();
    assert!(d.unitarity_defect().unwrap() < 1e-9);
    assert!(odd_hs_norm(&d).unwrap() < odd_hs_norm(&u).unwrap());
}

#[test]
fn all_methods_agree_on_a_weak_field() {
    let s = space(16, 8.0);
    let pot = pulse().scaled(0.1);
    let strang = evolve(&pot, &EvolutionConfig::strang(0.0, 2.0, 256), &s).unwrap();
    let mid = evolve(
        &pot,
        &EvolutionConfig::new(0.0, 2.0, 256, Method::DenseMidpointExp),
        &s,
    )
    .unwrap();
    let born = evolve(
        &pot,
        &EvolutionConfig::new(
            0.0,
            2.0,
            1,
            Method::BornSeries {
                order: 4,
                nodes: 256,
            },
        ),
        &s,
    )
    .unwrap();
    assert!(diff(&strang, &mid) < 1e-5);
    assert!(diff(&strang, &born) < 1e-4);
}

#[test]
fn zero_step_configs_are_rejected() {
    let s = space(16, 8.0);
    assert!(evolve(&pulse(), &EvolutionConfig::strang(0.0, 1.0, 0), &s).is_err());
}
