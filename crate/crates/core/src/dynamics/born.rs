//! Born series from the fixed-point form U = U⁰ + ∫U⁰ZU.

use std::sync::Arc;

use serde::Serialize;

use super::{free_blocks, EvolutionConfig, Method};
use crate::error::{Error, Result};
use crate::field::{z_operator_source, Assembly};
use crate::operator::{block_left_mul, block_right_mul, GridOperator, Space};
use crate::potential::FieldSource;
use crate::{c64, Matrix};

/// Relative change allowed when the node count is halved.
pub const DEFAULT_RESOLUTION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BornReport {
    pub order: usize,
    pub nodes: usize,
    /// ‖V⁽ᵏ⁾(t₁)‖_F for k = 1..=order.
    pub increments: Vec<f64>,
    /// ‖U_nodes − U_{nodes/2}‖_F / ‖U_nodes‖_F.
    pub resolution_change: f64,
    pub tolerance: f64,
    pub underresolved: bool,
    pub diverging: bool,
}

/// Interaction-picture terms V⁽ᵏ⁾(t₁) with V(t) = U⁰(t₀ − t)U(t, t₀),
/// marched with a cumulative trapezoid rule for all orders at once.
fn born_terms(
    src: &dyn FieldSource,
    space: &Arc<Space>,
    t0: f64,
    t1: f64,
    order: usize,
    nodes: usize,
) -> Result<Vec<Matrix>> {
    let n = space.dim();
    let h = (t1 - t0) / nodes as f64;
    let z_int = |s: f64| -> Result<Matrix> {
        let z = z_operator_source(src, s, space, Assembly::Dense)?;
        let zm = z.matrix().expect("dense Z");
        let left = free_blocks(space, t0 - s);
        let right = free_blocks(space, s - t0);
        Ok(block_right_mul(&block_left_mul(&left, zm), &right))
    };
    let half = c64::new(0.5 * h, 0.0);
    // v[k] = V⁽ᵏ⁺¹⁾ at the current node, w[k] = Z_I V⁽ᵏ⁾ at the previous node
    let mut v: Vec<Matrix> = (0..order).map(|_| Matrix::zeros(n, n)).collect();
    let mut zi = z_int(t0)?;
    let mut w: Vec<Matrix> = Vec::with_capacity(order);
    w.push(zi.clone());
    for k in 1..order {
        w.push(&zi * &v[k - 1]);
    }
    for j in 1..=nodes {
        zi = z_int(t0 + j as f64 * h)?;
        let mut prev_v: Option<Matrix> = None;
        for k in 0..order {
            let wk_new = match &prev_v {
                None => zi.clone(),
                Some(pv) => &zi * pv,
            };
            let vk = Matrix::from_fn(n, n, |r, c| {
                v[k].read(r, c) + half * (w[k].read(r, c) + wk_new.read(r, c))
            });
            w[k] = wk_new;
            v[k] = vk;
            prev_v = Some(v[k].clone());
        }
    }
    Ok(v)
}

fn assemble(space: &Arc<Space>, t0: f64, t1: f64, terms: &[Matrix]) -> Matrix {
    let n = space.dim();
    let mut sum = Matrix::identity(n, n);
    for t in terms {
        sum = Matrix::from_fn(n, n, |r, c| sum.read(r, c) + t.read(r, c));
    }
    block_left_mul(&free_blocks(space, t1 - t0), &sum)
}

/// Born approximation of U^A(t₁, t₀) with its diagnostic report.
pub fn born_series(
    src: &dyn FieldSource,
    cfg: &EvolutionConfig,
    space: &Arc<Space>,
) -> Result<(GridOperator, BornReport)> {
    born_series_with(src, cfg, space, DEFAULT_RESOLUTION_TOLERANCE)
}

pub fn born_series_with(
    src: &dyn FieldSource,
    cfg: &EvolutionConfig,
    space: &Arc<Space>,
    tolerance: f64,
) -> Result<(GridOperator, BornReport)> {
    cfg.validate()?;
    let Method::BornSeries { order, nodes } = cfg.method else {
        return Err(Error::spec("evolution.method", "expected BornSeries"));
    };
    space.check_dense()?;
    let (t0, t1) = (cfg.t0, cfg.t1);
    if order == 0 {
        let u = assemble(space, t0, t1, &[]);
        let report = BornReport {
            order,
            nodes,
            increments: Vec::new(),
            resolution_change: 0.0,
            tolerance,
            underresolved: false,
            diverging: false,
        };
        return Ok((GridOperator::dense(space, u), report));
    }
    let terms = born_terms(src, space, t0, t1, order, nodes)?;
    let u = assemble(space, t0, t1, &terms);
    let coarse_nodes = (nodes / 2).max(1);
    let coarse = assemble(
        space,
        t0,
        t1,
        &born_terms(src, space, t0, t1, order, coarse_nodes)?,
    );
    let du = Matrix::from_fn(u.nrows(), u.ncols(), |r, c| {
        u.read(r, c) - coarse.read(r, c)
    });
    let resolution_change = du.norm_l2() / u.norm_l2().max(f64::MIN_POSITIVE);
    let increments: Vec<f64> = terms.iter().map(|t| t.norm_l2()).collect();
    let diverging = increments
        .windows(2)
        .skip(1)
        .any(|w| w[1] > w[0] && w[1] > 1.0)
        || increments.iter().any(|v| !v.is_finite());
    let report = BornReport {
        order,
        nodes,
        increments,
        resolution_change,
        tolerance,
        underresolved: resolution_change > tolerance,
        diverging,
    };
    Ok((GridOperator::dense(space, u), report))
}

#[cfg(test)]
mod tests {
    use super::super::tests::{diff, space, test_pot};
    use super::super::{evolve, free_propagator};
    use super::*;
    use crate::PhysicsParams;

    #[test]
    fn order_zero_is_free_propagator() {
        let s = space(1, 16, 8.0);
        let cfg = EvolutionConfig::new(0.0, 2.0, 1, Method::BornSeries { order: 0, nodes: 8 });
        let (u, r) = born_series(&test_pot(), &cfg, &s).unwrap();
        assert!(diff(&u, &free_propagator(&s, 2.0)) < 1e-13);
        assert!(r.increments.is_empty());
    }

    #[test]
    fn first_order_defect_scales_quadratically_in_charge() {
        let defect = |e: f64| {
            let g = s_with_charge(e);
            let pot = test_pot().scaled(0.5);
            let cfg = EvolutionConfig::new(
                0.0,
                2.0,
                1,
                Method::BornSeries {
                    order: 1,
                    nodes: 256,
                },
            );
            let (b, _) = born_series(&pot, &cfg, &g).unwrap();
            let u = evolve(&pot, &EvolutionConfig::strang(0.0, 2.0, 512), &g).unwrap();
            diff(&b, &u)
        };
        let (d1, d2) = (defect(0.2), defect(0.1));
        assert!((d1 / d2 - 4.0).abs() < 0.4, "{d1} {d2}");
    }

    fn s_with_charge(e: f64) -> Arc<Space> {
        let g = crate::grid::Grid::build(&crate::grid::GridSpec::new(1, 16, 8.0)).unwrap();
        Space::new(g, PhysicsParams::new(1.0, e)).unwrap()
    }

    #[test]
    fn higher_orders_approach_the_propagator() {
        let s = s_with_charge(0.5);
        let pot = test_pot();
        let u = evolve(
            &pot,
            &EvolutionConfig::new(0.0, 2.0, 256, Method::DenseMidpointExp),
            &s,
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for order in 1..=4 {
            let cfg = EvolutionConfig::new(0.0, 2.0, 1, Method::BornSeries { order, nodes: 256 });
            let (b, r) = born_series(&pot, &cfg, &s).unwrap();
            let d = diff(&b, &u);
            assert!(d < last, "order {order}: {d} vs {last}");
            assert!(!r.diverging);
            last = d;
        }
    }

    #[test]
    fn coarse_nodes_are_flagged() {
        let s = space(1, 16, 8.0);
        let cfg = EvolutionConfig::new(0.0, 2.0, 1, Method::BornSeries { order: 2, nodes: 4 });
        let (_, r) = born_series(&test_pot(), &cfg, &s).unwrap();
        assert!(r.underresolved);
    }
}
