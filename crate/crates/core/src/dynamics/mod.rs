//! One-particle propagators and the diagnostics built on them.
//!
//! The Hamiltonian is H(t) = H⁰ + iZ(t), where iZ(t) acts in position space
//! as multiplication by M(t, x) = e(A₀ + Σᵢ αⁱAᵢ). Every propagator here
//! uses the periodic discretization of Z, so split-step, midpoint and Born
//! methods approximate the same finite-dimensional evolution.

mod born;
mod dressing;
mod gauge;
mod scan;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{alpha_contract, position_components, z_operator_source, Assembly};
use crate::operator::{hermitian_function, GridOperator, LinearApplier, Space};
use crate::parallel::ordered_map;
use crate::potential::FieldSource;
use crate::spinor::{self, SpinorMatrix};
use crate::{to_f, to_n, Matrix, C64};

pub use born::{born_series, born_series_with, BornReport, DEFAULT_RESOLUTION_TOLERANCE};
pub use dressing::{
    dressed_propagator, dressed_sea, free_sea, gronwall_fixed_point, pair_creation_probability,
    pair_creation_probability_columns, partial_integration_residual, GronwallIterate,
    GronwallReport, PartialIntegrationReport,
};
pub use gauge::{
    gauge_covariance_check, gauge_phase, GaugeConfig, GaugeReport, GaugeTransformed, ScalarProfile,
    Switching,
};
pub use scan::{
    classify, cutoff_scan, Classification, ScanAxis, ScanConfig, ScanResult, ScanRow,
    SCAN_CSV_HEADER,
};

/// Propagator discretization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Method {
    StrangSplit,
    DenseMidpointExp,
    /// Born series truncated at `order`, time integrals by the composite
    /// trapezoid rule on `nodes` intervals.
    BornSeries {
        order: usize,
        nodes: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
    pub method: Method,
}

impl EvolutionConfig {
    pub fn new(t0: f64, t1: f64, steps: usize, method: Method) -> Self {
        EvolutionConfig {
            t0,
            t1,
            steps,
            method,
        }
    }

    pub fn strang(t0: f64, t1: f64, steps: usize) -> Self {
        Self::new(t0, t1, steps, Method::StrangSplit)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t1.is_finite()) {
            return Err(Error::spec("evolution.t0/t1", "must be finite"));
        }
        if self.steps == 0 {
            return Err(Error::spec("evolution.steps", "must be at least 1"));
        }
        if let Method::BornSeries { nodes, .. } = self.method {
            if nodes < 2 {
                return Err(Error::spec("evolution.method.nodes", "must be at least 2"));
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }
}

/// e^{−iτH⁰} per momentum mode.
pub(crate) fn free_blocks(space: &Space, tau: f64) -> Vec<SpinorMatrix> {
    let m = space.params().m;
    space
        .grid()
        .momenta()
        .iter()
        .map(|p| spinor::free_phase(*p, m, tau))
        .collect()
}

/// U⁰(Δt) = exp(−iΔt H⁰), block diagonal and exactly unitary per block.
pub fn free_propagator(space: &Arc<Space>, dt: f64) -> GridOperator {
    crate::operator::block_diagonal(space, &free_blocks(space, dt))
}

pub(crate) fn apply_blocks(blocks: &[SpinorMatrix], x: &mut [C64]) {
    for (chunk, b) in x.chunks_exact_mut(4).zip(blocks) {
        let v = [chunk[0], chunk[1], chunk[2], chunk[3]];
        chunk.copy_from_slice(&b.apply(&v));
    }
}

/// exp(−iτM) for M = e(A₀ + Σᵢ αⁱAᵢ) with real lower-index A.
pub(crate) fn pointwise_exp(a: [f64; 4], e: f64, tau: f64) -> SpinorMatrix {
    let phase = C64::from_polar(1.0, -tau * e * a[0]);
    let norm = (a[1] * a[1] + a[2] * a[2] + a[3] * a[3]).sqrt();
    let theta = tau * e * norm;
    let mut out = SpinorMatrix::identity().scale_re(theta.cos());
    if norm > 0.0 {
        let dir = alpha_contract(&[
            C64::new(0.0, 0.0),
            C64::new(a[1] / norm, 0.0),
            C64::new(a[2] / norm, 0.0),
            C64::new(a[3] / norm, 0.0),
        ]);
        out = out + dir.scale(C64::new(0.0, -theta.sin()));
    }
    out.scale(phase)
}

/// Strang splitting: U⁰(h/2) · exp(−ihM(t_mid)) · U⁰(h/2) per step, with
/// adjacent free half steps merged.
pub(crate) struct Strang {
    space: Arc<Space>,
    half: Vec<SpinorMatrix>,
    full: Vec<SpinorMatrix>,
    kicks: Vec<Option<Vec<SpinorMatrix>>>,
}

impl Strang {
    pub(crate) fn new(
        src: &dyn FieldSource,
        space: &Arc<Space>,
        t0: f64,
        t1: f64,
        steps: usize,
    ) -> Self {
        let h = (t1 - t0) / steps as f64;
        let e = space.params().e;
        let dim = space.grid().dim();
        let positions = space.grid().positions();
        let kicks = (0..steps)
            .map(|s| {
                let tm = t0 + (s as f64 + 0.5) * h;
                let samples: Vec<[f64; 4]> = positions
                    .iter()
                    .map(|x| src.lower_components(dim, tm, *x))
                    .collect();
                if samples.iter().all(|a| a.iter().all(|v| *v == 0.0)) {
                    None
                } else {
                    Some(samples.iter().map(|a| pointwise_exp(*a, e, h)).collect())
                }
            })
            .collect();
        Strang {
            space: space.clone(),
            half: free_blocks(space, 0.5 * h),
            full: free_blocks(space, h),
            kicks,
        }
    }

    fn kick(&self, blocks: &[SpinorMatrix], x: &mut [C64], adjoint: bool) {
        let modes = self.space.n_modes();
        let mut pos = position_components(&self.space, x);
        for m in 0..modes {
            let v = [pos[0][m], pos[1][m], pos[2][m], pos[3][m]];
            let b = if adjoint {
                blocks[m].adjoint()
            } else {
                blocks[m]
            };
            let w = b.apply(&v);
            for s in 0..4 {
                pos[s][m] = w[s];
            }
        }
        for (s, c) in pos.iter_mut().enumerate() {
            self.space.grid().to_momentum(c);
            for m in 0..modes {
                x[4 * m + s] = c[m];
            }
        }
    }

    pub(crate) fn evolve(&self, x: &[C64]) -> Vec<C64> {
        let mut y = x.to_vec();
        let steps = self.kicks.len();
        apply_blocks(&self.half, &mut y);
        for (s, k) in self.kicks.iter().enumerate() {
            if let Some(k) = k {
                self.kick(k, &mut y, false);
            }
            apply_blocks(
                if s + 1 == steps {
                    &self.half
                } else {
                    &self.full
                },
                &mut y,
            );
        }
        y
    }

    pub(crate) fn evolve_adjoint(&self, x: &[C64]) -> Vec<C64> {
        let adj = |b: &[SpinorMatrix]| b.iter().map(|m| m.adjoint()).collect::<Vec<_>>();
        let (half, full) = (adj(&self.half), adj(&self.full));
        let mut y = x.to_vec();
        apply_blocks(&half, &mut y);
        for (s, k) in self.kicks.iter().enumerate().rev() {
            if let Some(k) = k {
                self.kick(k, &mut y, true);
            }
            apply_blocks(if s == 0 { &half } else { &full }, &mut y);
        }
        y
    }

    pub(crate) fn dense(&self) -> Matrix {
        let n = self.space.dim();
        let cols = ordered_map(n, |j| {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[j] = C64::new(1.0, 0.0);
            self.evolve(&e)
        });
        Matrix::from_fn(n, n, |i, j| to_f(cols[j][i]))
    }
}

impl LinearApplier for Strang {
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.evolve(x)
    }
    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        self.evolve_adjoint(x)
    }
}

/// Dense H(t) = H⁰ + iZ(t) with the periodic interaction.
pub(crate) fn dense_hamiltonian(
    src: &dyn FieldSource,
    t: f64,
    space: &Arc<Space>,
) -> Result<Matrix> {
    let z = z_operator_source(src, t, space, Assembly::Dense)?;
    let zm = z.matrix().expect("dense Z");
    let n = space.dim();
    let m = space.params().m;
    let mut h = Matrix::from_fn(n, n, |i, j| to_f(to_n(zm.read(i, j)) * C64::i()));
    for (mode, p) in space.grid().momenta().iter().enumerate() {
        let h0 = spinor::free_hamiltonian(*p, m);
        for r in 0..4 {
            for c in 0..4 {
                let v = h.read(4 * mode + r, 4 * mode + c);
                h.write(4 * mode + r, 4 * mode + c, v + to_f(h0.get(r, c)));
            }
        }
    }
    Ok(h)
}

fn midpoint_exp(
    src: &dyn FieldSource,
    space: &Arc<Space>,
    cfg: &EvolutionConfig,
) -> Result<Matrix> {
    space.check_dense()?;
    let h = cfg.dt();
    let n = space.dim();
    let mut u = Matrix::identity(n, n);
    for s in 0..cfg.steps {
        let tm = cfg.t0 + (s as f64 + 0.5) * h;
        let ham = dense_hamiltonian(src, tm, space)?;
        let step = hermitian_function(&ham, |lam| C64::from_polar(1.0, -h * lam));
        u = &step * &u;
    }
    Ok(u)
}

/// U^A(t₁, t₀) by the configured method.
///
/// Split-step results are dense when the budget allows and matrix-free
/// otherwise; the other methods need dense storage.
pub fn evolve(
    src: &dyn FieldSource,
    cfg: &EvolutionConfig,
    space: &Arc<Space>,
) -> Result<GridOperator> {
    cfg.validate()?;
    match cfg.method {
        Method::StrangSplit => {
            let st = Strang::new(src, space, cfg.t0, cfg.t1, cfg.steps);
            if space.check_dense().is_ok() {
                Ok(GridOperator::dense(space, st.dense()))
            } else {
                Ok(GridOperator::matrix_free(space, Arc::new(st)))
            }
        }
        Method::DenseMidpointExp => Ok(GridOperator::dense(space, midpoint_exp(src, space, cfg)?)),
        Method::BornSeries { .. } => Ok(born_series(src, cfg, space)?.0),
    }
}

/// Dense split-step propagator.
pub(crate) fn strang_dense(
    src: &dyn FieldSource,
    space: &Arc<Space>,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<GridOperator> {
    space.check_dense()?;
    Ok(GridOperator::dense(
        space,
        Strang::new(src, space, t0, t1, steps).dense(),
    ))
}

/// Odd-part Hilbert–Schmidt norm sqrt(‖P₊AP₋‖² + ‖P₋AP₊‖²) of a dense operator.
pub fn odd_hs_norm(op: &GridOperator) -> Result<f64> {
    let (_, odd) = crate::operator::parity_split(&op.densified()?);
    Ok(odd.frobenius()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, GridSpec};
    use crate::operator::{parity_split, unitarity_defect};
    use crate::potential::{EnvelopeKind, GaussianComponent, PotentialSpec, TimeEnvelope};
    use crate::PhysicsParams;

    pub(crate) fn space(dim: usize, n: usize, l: f64) -> Arc<Space> {
        Space::new(
            Grid::build(&GridSpec::new(dim, n, l)).unwrap(),
            PhysicsParams::new(1.0, 1.0),
        )
        .unwrap()
    }

    pub(crate) fn test_pot() -> PotentialSpec {
        PotentialSpec {
            components: [
                GaussianComponent::new(0.8, 1.5, [0.5, 0.0, 0.0]),
                GaussianComponent::new(0.6, 1.2, [-0.5, 0.0, 0.0]),
                GaussianComponent::zero(),
                GaussianComponent::new(-0.4, 1.8, [0.0; 3]),
            ],
            envelope: TimeEnvelope::new(EnvelopeKind::SinSquared, 0.0, 2.0),
        }
    }

    pub(crate) fn diff(a: &GridOperator, b: &GridOperator) -> f64 {
        a.sub(b).frobenius().unwrap()
    }

    #[test]
    fn free_propagator_examples() {
        let s = space(1, 16, 8.0);
        let id = GridOperator::identity(&s);
        assert!(diff(&free_propagator(&s, 0.0), &id) < 1e-14);
        let u = free_propagator(&s, 0.7);
        assert!(parity_split(&u).1.frobenius().unwrap() < 1e-14);
        assert!(diff(&u.compose(&free_propagator(&s, -0.7)), &id) < 1e-12);
        assert!(u.unitarity_defect().unwrap() < 1e-13);
    }

    #[test]
    fn pointwise_exponential_matches_eigen_oracle() {
        let a = [0.3, -0.7, 0.2, 1.1];
        let e = 0.9;
        let tau = 0.37;
        let mm = alpha_contract(&a.map(|v| C64::new(v * e, 0.0)));
        let m = Matrix::from_fn(4, 4, |i, j| to_f(mm.get(i, j)));
        let want = hermitian_function(&m, |lam| C64::from_polar(1.0, -tau * lam));
        let got = pointwise_exp(a, e, tau);
        for i in 0..4 {
            for j in 0..4 {
                assert!((got.get(i, j) - to_n(want.read(i, j))).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_potential_evolves_freely() {
        let s = space(1, 16, 8.0);
        let u0 = free_propagator(&s, 1.5);
        for method in [
            Method::StrangSplit,
            Method::DenseMidpointExp,
            Method::BornSeries { order: 2, nodes: 8 },
        ] {
            let u = evolve(
                &PotentialSpec::zero(),
                &EvolutionConfig::new(0.0, 1.5, 5, method),
                &s,
            )
            .unwrap();
            assert!(diff(&u, &u0) < 1e-12, "{method:?}");
        }
    }

    #[test]
    fn strang_is_unitary_and_composes() {
        let s = space(1, 32, 12.0);
        let pot = test_pot();
        let u = evolve(&pot, &EvolutionConfig::strang(0.0, 2.0, 40), &s).unwrap();
        assert!(u.unitarity_defect().unwrap() < 1e-9);
        let a = evolve(&pot, &EvolutionConfig::strang(0.0, 1.0, 20), &s).unwrap();
        let b = evolve(&pot, &EvolutionConfig::strang(1.0, 2.0, 20), &s).unwrap();
        assert!(diff(&b.compose(&a), &u) < 1e-10);
        let mid = evolve(
            &pot,
            &EvolutionConfig::new(0.0, 2.0, 40, Method::DenseMidpointExp),
            &s,
        )
        .unwrap();
        assert!(unitarity_defect(mid.matrix().unwrap()) < 1e-9);
    }

    #[test]
    fn matrix_free_strang_matches_dense() {
        let s = space(1, 16, 8.0);
        let pot = test_pot();
        let st = Strang::new(&pot, &s, 0.0, 2.0, 10);
        let dense = GridOperator::dense(&s, st.dense());
        let mf = GridOperator::matrix_free(&s, Arc::new(Strang::new(&pot, &s, 0.0, 2.0, 10)));
        assert!(diff(&mf.densified().unwrap(), &dense) < 1e-12);
        assert!(diff(&mf.adjoint().densified().unwrap(), &dense.adjoint()) < 1e-12);
    }

    #[test]
    fn strang_and_midpoint_converge_at_second_order() {
        let s = space(1, 32, 12.0);
        let pot = test_pot();
        let d = |steps| {
            let a = evolve(&pot, &EvolutionConfig::strang(0.0, 2.0, steps), &s).unwrap();
            let b = evolve(
                &pot,
                &EvolutionConfig::new(0.0, 2.0, steps, Method::DenseMidpointExp),
                &s,
            )
            .unwrap();
            diff(&a, &b)
        };
        let (d1, d2) = (d(20), d(40));
        assert!((d1 / d2 - 4.0).abs() < 0.5, "{d1} {d2}");
    }
}
