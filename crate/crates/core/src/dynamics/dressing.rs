//! Dressed propagator, pair creation, partial integration and the
//! Grönwall-type fixed-point recursion.

use std::sync::Arc;

use serde::Serialize;

use super::{evolve, free_blocks, odd_hs_norm, strang_dense, EvolutionConfig};
use crate::error::{Error, Result};
use crate::field::{
    q_operator, q_operator_source, q_prime, z_operator, Assembly, FieldOptions, KernelMode,
};
use crate::operator::{
    block_left_mul, block_right_mul, exp_skew_matrix, parity_split, project, GridOperator, Space,
};
use crate::potential::{FieldSource, PotentialSpec};
use crate::quadrature::trapezoid;
use crate::wedge::DiracSea;
use crate::{c64, Matrix, Sign, C64};

/// e^{−Q(t₁)} U^A(t₁, t₀) e^{Q(t₀)} with the periodic Q matching the propagator.
pub fn dressed_propagator(
    src: &dyn FieldSource,
    cfg: &EvolutionConfig,
    space: &Arc<Space>,
) -> Result<GridOperator> {
    let u = evolve(src, cfg, space)?.densified()?;
    dress(src, cfg.t0, cfg.t1, space, &u)
}

pub(crate) fn dress(
    src: &dyn FieldSource,
    t0: f64,
    t1: f64,
    space: &Arc<Space>,
    u: &GridOperator,
) -> Result<GridOperator> {
    let q0 = q_operator_source(src, t0, space, Assembly::Dense)?;
    let q1 = q_operator_source(src, t1, space, Assembly::Dense)?;
    let e0 = exp_skew_matrix(q0.matrix().expect("dense"))?;
    let m1 = q1.matrix().expect("dense");
    let neg = Matrix::from_fn(m1.nrows(), m1.ncols(), |i, j| -m1.read(i, j));
    let e1 = exp_skew_matrix(&neg)?;
    let um = u.to_matrix()?;
    Ok(GridOperator::dense(space, &(&e1 * &um) * &e0))
}

/// The free negative-energy sea: two eigenvectors of H⁰(p) per mode, in mode order.
pub fn free_sea(space: &Arc<Space>) -> Result<DiracSea> {
    space.check_dense()?;
    let n = space.dim();
    let mut cols = Matrix::zeros(n, n / 2);
    for mode in 0..space.n_modes() {
        let basis = space.eigenbasis(mode);
        for (k, v) in basis.iter().take(2).enumerate() {
            for (i, z) in v.iter().enumerate() {
                cols.write(4 * mode + i, 2 * mode + k, c64::new(z.re, z.im));
            }
        }
    }
    DiracSea::new(cols)
}

/// e^{Q(t)} applied to the free negative-energy sea.
pub fn dressed_sea(src: &dyn FieldSource, t: f64, space: &Arc<Space>) -> Result<DiracSea> {
    let q = q_operator_source(src, t, space, Assembly::Dense)?;
    let e = exp_skew_matrix(q.matrix().expect("dense"))?;
    DiracSea::new(&e * free_sea(space)?.columns())
}

/// ‖P₊UP₋‖²_{I₂}, the leading-order probability of creating one pair.
pub fn pair_creation_probability(u: &GridOperator) -> Result<f64> {
    let d = u.densified()?;
    Ok(project(&d, Sign::Plus, Sign::Minus).frobenius()?.powi(2))
}

/// The same quantity as Σₙ ‖P₊Uφₙ‖² over the negative-energy eigenvectors φₙ.
pub fn pair_creation_probability_columns(u: &GridOperator) -> f64 {
    let space = u.space.clone();
    let n = space.dim();
    let mut total = 0.0;
    for mode in 0..space.n_modes() {
        let basis = space.eigenbasis(mode);
        for v in basis.iter().take(2) {
            let mut x = vec![C64::new(0.0, 0.0); n];
            x[4 * mode..4 * mode + 4].copy_from_slice(v);
            let mut y = u.apply(&x);
            space.project_vec(Sign::Plus, &mut y);
            total += y.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PartialIntegrationReport {
    pub residual: f64,
    pub lhs_norm: f64,
    pub intervals: usize,
}

fn conj_free(space: &Space, m: &Matrix, t1: f64, t: f64, t0: f64) -> Matrix {
    block_right_mul(
        &block_left_mul(&free_blocks(space, t1 - t), m),
        &free_blocks(space, t - t0),
    )
}

fn axpy(acc: &mut Matrix, w: f64, x: &Matrix) {
    let wf = c64::new(w, 0.0);
    for j in 0..acc.ncols() {
        let dst = acc.col_as_slice_mut(j);
        for (d, v) in dst.iter_mut().zip(x.col_as_slice(j)) {
            *d += wf * *v;
        }
    }
}

/// Residual of
/// ∫U⁰(t₁−t)Z(t)U⁰(t−t₀)dt = Q(t₁)U⁰ − U⁰Q(t₀) − ∫U⁰Q′U⁰ + ∫U⁰Z_evU⁰
/// with both time integrals on the same composite trapezoid rule.
pub fn partial_integration_residual(
    pot: &PotentialSpec,
    t0: f64,
    t1: f64,
    space: &Arc<Space>,
    intervals: usize,
) -> Result<PartialIntegrationReport> {
    if intervals == 0 {
        return Err(Error::spec("intervals", "must be at least 1"));
    }
    space.check_dense()?;
    let opts = FieldOptions::dense(KernelMode::Padded);
    let n = space.dim();
    let (nodes, weights) = trapezoid(t0, t1, intervals);
    let mut lhs = Matrix::zeros(n, n);
    let mut rhs_int = Matrix::zeros(n, n);
    for (&t, &w) in nodes.iter().zip(&weights) {
        let z = z_operator(pot, t, space, opts)?;
        let (z_ev, _) = parity_split(&z);
        let qp = q_prime(pot, t, space, opts)?;
        let inner = z_ev.sub(&qp);
        axpy(
            &mut lhs,
            w,
            &conj_free(space, z.matrix().expect("dense"), t1, t, t0),
        );
        axpy(
            &mut rhs_int,
            w,
            &conj_free(space, inner.matrix().expect("dense"), t1, t, t0),
        );
    }
    let u0 = free_blocks(space, t1 - t0);
    let q1 = q_operator(pot, t1, space, opts)?;
    let q0 = q_operator(pot, t0, space, opts)?;
    let mut rhs = block_right_mul(q1.matrix().expect("dense"), &u0);
    axpy(
        &mut rhs,
        -1.0,
        &block_left_mul(&u0, q0.matrix().expect("dense")),
    );
    axpy(&mut rhs, 1.0, &rhs_int);
    axpy(&mut rhs, -1.0, &lhs);
    Ok(PartialIntegrationReport {
        residual: rhs.norm_l2(),
        lhs_norm: lhs.norm_l2(),
        intervals,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GronwallIterate {
    pub n: usize,
    /// ‖R⁽ⁿ⁾(t₁) − (1 − Q(t₁))U(1 + Q(t₀))‖_F.
    pub defect: f64,
    /// ‖F‖₁ⁿ/n! · sup_t ‖R(t)‖_F.
    pub bound: f64,
    pub odd_hs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GronwallReport {
    pub iterates: Vec<GronwallIterate>,
    pub f_norm_l1: f64,
    pub reference_odd_hs: f64,
    pub dressed_odd_hs: f64,
    pub diverged: bool,
    #[serde(skip)]
    pub final_iterates: Vec<GridOperator>,
}

const SUBSTEPS: usize = 4;

/// Largest singular value by power iteration on A*A.
fn operator_norm(m: &Matrix) -> f64 {
    let n = m.ncols();
    let mut v = Matrix::from_fn(n, 1, |i, _| c64::new(1.0 + (i % 7) as f64 * 0.1, 0.0));
    let mut est = 0.0;
    for _ in 0..60 {
        let w = m.adjoint() * (m * &v);
        let nw = w.norm_l2();
        if nw == 0.0 {
            return 0.0;
        }
        est = nw.sqrt();
        v = Matrix::from_fn(n, 1, |i, _| w.read(i, 0) * c64::new(1.0 / nw, 0.0));
    }
    est
}

/// Fixed-point recursion R⁽ⁿ⁺¹⁾ = U⁰FR⁽ⁿ⁾ + U⁰ + G starting from R⁽⁰⁾ = 0, with
/// F = Y(1 + Q), Y = −Q′ + Z_ev − QZ,
/// G = −U⁰Q(t₀)² + [∫U⁰(t₁,t)YQ²U(t,t₀)dt](1 + Q(t₀)).
/// Time integrals use `cfg.steps` trapezoid intervals; U(t, t₀) at the nodes
/// comes from the split-step propagator.
pub fn gronwall_fixed_point(
    pot: &PotentialSpec,
    cfg: &EvolutionConfig,
    space: &Arc<Space>,
    n_iters: usize,
) -> Result<GronwallReport> {
    cfg.validate()?;
    space.check_dense()?;
    let (t0, t1) = (cfg.t0, cfg.t1);
    let nodes_n = cfg.steps;
    let h = (t1 - t0) / nodes_n as f64;
    let n = space.dim();
    let opts = FieldOptions::dense(KernelMode::Periodic);
    let ident = Matrix::identity(n, n);
    let add = |a: &Matrix, b: &Matrix, s: f64| {
        Matrix::from_fn(n, n, |i, j| a.read(i, j) + b.read(i, j) * c64::new(s, 0.0))
    };

    let mut f_int = Vec::with_capacity(nodes_n + 1);
    let mut xv_int = Vec::with_capacity(nodes_n + 1);
    let mut f_l1 = 0.0;
    let mut u_t = ident.clone();
    let mut r_sup: f64 = 0.0;
    let q0 = q_operator(pot, t0, space, opts)?
        .matrix()
        .expect("dense")
        .clone();
    let mut r_ref = ident.clone();
    for j in 0..=nodes_n {
        let t = t0 + j as f64 * h;
        if j > 0 {
            let step = strang_dense(pot, space, t - h, t, SUBSTEPS)?;
            u_t = step.matrix().expect("dense") * &u_t;
        }
        let q = q_operator(pot, t, space, opts)?;
        let qm = q.matrix().expect("dense").clone();
        let qp = q_prime(pot, t, space, opts)?
            .matrix()
            .expect("dense")
            .clone();
        let z = z_operator(pot, t, space, opts)?;
        let (z_ev, _) = parity_split(&z);
        let zm = z.matrix().expect("dense");
        let y = add(
            &add(z_ev.matrix().expect("dense"), &qp, -1.0),
            &(&qm * zm),
            -1.0,
        );
        let f = &y * &add(&ident, &qm, 1.0);
        let x = &y * &(&qm * &qm);
        let w = if j == 0 || j == nodes_n { 0.5 * h } else { h };
        f_l1 += w * operator_norm(&f);
        let left = free_blocks(space, t0 - t);
        let right = free_blocks(space, t - t0);
        f_int.push(block_right_mul(&block_left_mul(&left, &f), &right));
        xv_int.push(block_left_mul(&left, &(&x * &u_t)));
        let r_t = &(&add(&ident, &qm, -1.0) * &u_t) * &add(&ident, &q0, 1.0);
        r_sup = r_sup.max(r_t.norm_l2());
        if j == nodes_n {
            r_ref = r_t;
        }
    }
    let u1 = u_t;
    let half = c64::new(0.5 * h, 0.0);
    let cumtrapz = |vals: &[Matrix]| -> Vec<Matrix> {
        let mut out = Vec::with_capacity(vals.len());
        out.push(Matrix::zeros(n, n));
        for j in 1..vals.len() {
            let prev = &out[j - 1];
            let next = Matrix::from_fn(n, n, |a, b| {
                prev.read(a, b) + half * (vals[j - 1].read(a, b) + vals[j].read(a, b))
            });
            out.push(next);
        }
        out
    };
    let q0sq = &q0 * &q0;
    let one_plus_q0 = add(&ident, &q0, 1.0);
    let g_tilde: Vec<Matrix> = cumtrapz(&xv_int)
        .iter()
        .map(|c| add(&(c * &one_plus_q0), &q0sq, -1.0))
        .collect();

    let u0_total = free_blocks(space, t1 - t0);
    let mut r_tilde: Vec<Matrix> = (0..=nodes_n).map(|_| Matrix::zeros(n, n)).collect();
    let mut iterates = Vec::new();
    let mut finals = Vec::new();
    let mut fact = 1.0;
    let mut diverged = false;
    for it in 1..=n_iters {
        let prod: Vec<Matrix> = f_int.iter().zip(&r_tilde).map(|(f, r)| f * r).collect();
        let acc = cumtrapz(&prod);
        r_tilde = acc
            .iter()
            .zip(&g_tilde)
            .map(|(a, g)| add(&add(a, g, 1.0), &ident, 1.0))
            .collect();
        let r1 = block_left_mul(&u0_total, &r_tilde[nodes_n]);
        let defect = add(&r1, &r_ref, -1.0).norm_l2();
        fact *= it as f64;
        let op = GridOperator::dense(space, r1);
        let odd_hs = odd_hs_norm(&op)?;
        if !defect.is_finite() {
            return Err(Error::Divergence(format!("iterate {it} is not finite")));
        }
        if let Some(first) = iterates.first().map(|i: &GronwallIterate| i.defect) {
            if defect > 1e6 * first.max(1e-300) {
                diverged = true;
            }
        }
        iterates.push(GronwallIterate {
            n: it,
            defect,
            bound: f_l1.powi(it as i32) / fact * r_sup,
            odd_hs,
        });
        finals.push(op);
    }
    let reference_odd_hs = odd_hs_norm(&GridOperator::dense(space, r_ref))?;
    let dressed = dress(pot, t0, t1, space, &GridOperator::dense(space, u1))?;
    Ok(GronwallReport {
        iterates,
        f_norm_l1: f_l1,
        reference_odd_hs,
        dressed_odd_hs: odd_hs_norm(&dressed)?,
        diverged,
        final_iterates: finals,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::{diff, space, test_pot};
    use super::super::{free_propagator, Method};
    use super::*;
    use crate::potential::{EnvelopeKind, TimeEnvelope};

    #[test]
    fn zero_potential_dressing_is_free() {
        let s = space(1, 16, 8.0);
        let cfg = EvolutionConfig::strang(0.0, 1.0, 4);
        let d = dressed_propagator(&PotentialSpec::zero(), &cfg, &s).unwrap();
        assert!(diff(&d, &free_propagator(&s, 1.0)) < 1e-13);
    }

    #[test]
    fn dressed_propagator_is_unitary() {
        let s = space(1, 32, 12.0);
        let cfg = EvolutionConfig::strang(0.3, 1.4, 30);
        let d = dressed_propagator(&test_pot(), &cfg, &s).unwrap();
        assert!(d.unitarity_defect().unwrap() < 1e-9);
    }

    #[test]
    fn free_sea_spans_the_negative_subspace() {
        let sp = space(1, 8, 6.0);
        let phi = free_sea(&sp).unwrap();
        assert!(phi.isometry_defect() < 1e-12);
        let p = GridOperator::dense(&sp, phi.projector());
        assert!(project(&p, Sign::Plus, Sign::Plus).frobenius().unwrap() < 1e-12);
        assert!(
            (project(&p, Sign::Minus, Sign::Minus)
                .frobenius()
                .unwrap()
                .powi(2)
                - 16.0)
                .abs()
                < 1e-10
        );
        let d = dressed_sea(&PotentialSpec::zero(), 0.5, &sp).unwrap();
        assert!((d.columns() - phi.columns()).norm_l2() < 1e-14);
    }

    #[test]
    fn pair_probability_two_ways() {
        let s = space(1, 32, 12.0);
        let id = GridOperator::identity(&s);
        assert!(pair_creation_probability(&id).unwrap() < 1e-28);
        assert!(pair_creation_probability(&free_propagator(&s, 0.8)).unwrap() < 1e-26);
        let u = evolve(&test_pot(), &EvolutionConfig::strang(0.0, 2.0, 40), &s).unwrap();
        let a = pair_creation_probability(&u).unwrap();
        let b = pair_creation_probability_columns(&u);
        assert!(a > 1e-6);
        assert!((a - b).abs() < 1e-10 * a.max(1.0), "{a} {b}");
    }

    #[test]
    fn partial_integration_converges_at_second_order() {
        let s = space(1, 32, 24.0);
        let pot = test_pot();
        let r: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&k| {
                partial_integration_residual(&pot, 0.2, 1.7, &s, k)
                    .unwrap()
                    .residual
            })
            .collect();
        for w in r.windows(2) {
            assert!((w[0] / w[1] - 4.0).abs() < 0.5, "{r:?}");
        }
        let zero = partial_integration_residual(&PotentialSpec::zero(), 0.0, 1.0, &s, 8).unwrap();
        assert_eq!(zero.residual, 0.0);
    }

    #[test]
    fn constant_envelope_identity_holds() {
        let s = space(1, 32, 24.0);
        let mut pot = test_pot();
        pot.envelope = TimeEnvelope::new(EnvelopeKind::Constant, -1.0, 3.0);
        let coarse = partial_integration_residual(&pot, 0.0, 1.0, &s, 16).unwrap();
        let fine = partial_integration_residual(&pot, 0.0, 1.0, &s, 32).unwrap();
        assert!(fine.residual < coarse.residual / 3.0);
        assert!(fine.residual < 1e-2 * fine.lhs_norm);
    }

    #[test]
    fn gronwall_with_zero_potential_converges_immediately() {
        let s = space(1, 8, 6.0);
        let cfg = EvolutionConfig::strang(0.0, 1.0, 8);
        let r = gronwall_fixed_point(&PotentialSpec::zero(), &cfg, &s, 2).unwrap();
        assert!(diff(&r.final_iterates[0], &free_propagator(&s, 1.0)) < 1e-12);
        assert!(r.iterates[0].defect < 1e-12);
    }

    #[test]
    fn gronwall_iterates_decay_factorially() {
        let s = space(1, 16, 10.0);
        let cfg = EvolutionConfig::new(0.0, 2.0, 64, Method::StrangSplit);
        let pot = test_pot().scaled(0.5);
        let r = gronwall_fixed_point(&pot, &cfg, &s, 6).unwrap();
        let d: Vec<f64> = r.iterates.iter().map(|i| i.defect).collect();
        assert!(!r.diverged);
        for k in 0..3 {
            assert!(d[k + 1] < 0.5 * d[k], "{d:?}");
        }
        let last = r.iterates.last().unwrap();
        assert!((last.odd_hs - r.reference_odd_hs).abs() < 0.05 * r.reference_odd_hs.max(1e-12));
    }
}
