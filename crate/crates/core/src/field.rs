//! Interaction kernel Z, dressing operator Q, and Hilbert–Schmidt quantities.
//!
//! Kernels act on the orthonormal momentum basis, so a continuum kernel
//! K(p, q) appears in matrix entries as Δp^dim · K(p, q).
//!
//! Two discretizations of the momentum difference p − q are offered:
//!
//! * [`KernelMode::Padded`] evaluates the closed-form transform at the exact
//!   difference, which lives on a (2n−1)^dim lattice. No wrap-around occurs.
//! * [`KernelMode::Periodic`] uses the discrete transform of the sampled
//!   potential at (p − q) mod 2Λ. This is the momentum-space matrix of
//!   pointwise multiplication on the position grid, the same operator the
//!   split-step propagator exponentiates.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{exp_skew_matrix, GridOperator, LinearApplier, Parity, Space};
use crate::parallel::ordered_map;
use crate::potential::{FieldSource, PotentialSpec};
use crate::quadrature::halton;
use crate::spinor::{self, SpinorMatrix};
use crate::{c64, to_f, to_n, Matrix, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelMode {
    #[default]
    Padded,
    Periodic,
}

/// How an operator is stored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assembly {
    Dense,
    MatrixFree,
    /// Dense when the budget allows, matrix-free otherwise.
    #[default]
    Auto,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldOptions {
    #[serde(default)]
    pub mode: KernelMode,
    #[serde(default)]
    pub assembly: Assembly,
}

impl FieldOptions {
    pub fn dense(mode: KernelMode) -> Self {
        FieldOptions {
            mode,
            assembly: Assembly::Dense,
        }
    }

    fn wants_dense(&self, space: &Space) -> Result<bool> {
        match self.assembly {
            Assembly::Dense => space.check_dense().map(|_| true),
            Assembly::MatrixFree => Ok(false),
            Assembly::Auto => Ok(space.check_dense().is_ok()),
        }
    }
}

/// Δp^dim · Â_μ(p − q) tabulated over every reachable momentum difference.
#[derive(Clone, Debug)]
pub struct KernelTable {
    mode: KernelMode,
    values: Vec<[C64; 4]>,
}

impl KernelTable {
    /// Closed-form transform at exact differences, scaled by `factor`.
    pub fn padded(space: &Space, pot: &PotentialSpec, factor: f64) -> Self {
        let g = space.grid();
        let w = g.measure() * factor;
        let values = (0..g.diff_len())
            .map(|idx| {
                pot.spatial_fourier(g.dim(), g.diff_momentum(idx))
                    .map(|v| v * w)
            })
            .collect();
        KernelTable {
            mode: KernelMode::Padded,
            values,
        }
    }

    /// Discrete transform of position samples of `f`.
    pub fn periodic_from_fn<F: Fn([f64; 3]) -> [f64; 4]>(space: &Space, f: F) -> Self {
        let g = space.grid();
        let samples: Vec<[f64; 4]> = g.positions().into_iter().map(f).collect();
        let per_mu: Vec<Vec<C64>> = (0..4)
            .map(|mu| {
                let col: Vec<C64> = samples.iter().map(|s| C64::new(s[mu], 0.0)).collect();
                if col.iter().all(|v| *v == ZERO) {
                    vec![ZERO; col.len()]
                } else {
                    g.periodic_coefficients(&col)
                }
            })
            .collect();
        let values = (0..g.n_modes())
            .map(|i| std::array::from_fn(|mu| per_mu[mu][i]))
            .collect();
        KernelTable {
            mode: KernelMode::Periodic,
            values,
        }
    }

    pub fn periodic(space: &Space, src: &dyn FieldSource, t: f64) -> Self {
        let dim = space.grid().dim();
        Self::periodic_from_fn(space, |x| src.lower_components(dim, t, x))
    }

    /// Periodic table of the spatial profile of `pot`, scaled by `factor`.
    pub fn periodic_spatial(space: &Space, pot: &PotentialSpec, factor: f64) -> Self {
        let dim = space.grid().dim();
        Self::periodic_from_fn(space, |x| {
            std::array::from_fn(|mu| factor * pot.components[mu].value(dim, x))
        })
    }

    pub fn build(space: &Space, pot: &PotentialSpec, factor: f64, mode: KernelMode) -> Self {
        match mode {
            KernelMode::Padded => Self::padded(space, pot, factor),
            KernelMode::Periodic => Self::periodic_spatial(space, pot, factor),
        }
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|z| *z == ZERO))
    }

    #[inline]
    pub fn at(&self, space: &Space, a: usize, b: usize) -> [C64; 4] {
        let g = space.grid();
        match self.mode {
            KernelMode::Padded => self.values[g.diff_index(a, b)],
            KernelMode::Periodic => self.values[g.periodic_diff_index(a, b)],
        }
    }
}

/// Σ_μ α^μ a_μ in the standard representation.
#[inline]
pub fn alpha_contract(a: &[C64; 4]) -> SpinorMatrix {
    let [a0, a1, a2, a3] = *a;
    let i = C64::i();
    let s = [[a3, a1 - i * a2], [a1 + i * a2, -a3]];
    let mut m = SpinorMatrix::zero();
    for r in 0..2 {
        m.0[r][r] = a0;
        m.0[r + 2][r + 2] = a0;
        for c in 0..2 {
            m.0[r][c + 2] = s[r][c];
            m.0[r + 2][c] = s[r][c];
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum KernelKind {
    Z,
    Q,
}

/// Block evaluator for Z or Q on a fixed table.
struct KernelBlocks {
    space: Arc<Space>,
    table: KernelTable,
    e: f64,
    kind: KernelKind,
    h: Vec<SpinorMatrix>,
}

impl KernelBlocks {
    fn new(space: &Arc<Space>, table: KernelTable, kind: KernelKind) -> Self {
        let h = if kind == KernelKind::Q {
            (0..space.n_modes())
                .map(|m| {
                    *space.projector(m, crate::Sign::Plus) - *space.projector(m, crate::Sign::Minus)
                })
                .collect()
        } else {
            Vec::new()
        };
        KernelBlocks {
            space: space.clone(),
            table,
            e: space.params().e,
            kind,
            h,
        }
    }

    #[inline]
    fn z_block(&self, a: usize, b: usize) -> SpinorMatrix {
        let t = self.table.at(&self.space, a, b);
        alpha_contract(&t).scale(C64::new(0.0, -self.e))
    }

    /// Q(p,q) = (Z₊₋ − Z₋₊)/(i(E(p)+E(q))) = (h_p Z − Z h_q)/(2i(E(p)+E(q))), h = H⁰/E.
    #[inline]
    fn block(&self, a: usize, b: usize) -> SpinorMatrix {
        let z = self.z_block(a, b);
        match self.kind {
            KernelKind::Z => z,
            KernelKind::Q => {
                let s = self.space.energy(a) + self.space.energy(b);
                (self.h[a] * z - z * self.h[b]).scale(C64::new(0.0, -0.5 / s))
            }
        }
    }

    fn dense(&self) -> Matrix {
        let n = self.space.dim();
        let modes = self.space.n_modes();
        let cols = ordered_map(modes, |b| {
            let mut out = vec![c64::new(0.0, 0.0); 4 * n];
            for a in 0..modes {
                let blk = self.block(a, b);
                for s in 0..4 {
                    for r in 0..4 {
                        out[s * n + 4 * a + r] = to_f(blk.get(r, s));
                    }
                }
            }
            out
        });
        let mut m = Matrix::zeros(n, n);
        for (b, col) in cols.iter().enumerate() {
            for s in 0..4 {
                m.col_as_slice_mut(4 * b + s)
                    .copy_from_slice(&col[s * n..(s + 1) * n]);
            }
        }
        m
    }

    fn hs_norm_sq(&self) -> f64 {
        let modes = self.space.n_modes();
        ordered_map(modes, |a| {
            (0..modes)
                .map(|b| self.block(a, b).frobenius().powi(2))
                .sum::<f64>()
        })
        .iter()
        .sum()
    }
}

/// Row-by-row matrix-free action of a kernel operator.
struct KernelRows(KernelBlocks);

impl LinearApplier for KernelRows {
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let modes = self.0.space.n_modes();
        let rows = ordered_map(modes, |a| {
            let mut acc = [ZERO; 4];
            for b in 0..modes {
                let v = [x[4 * b], x[4 * b + 1], x[4 * b + 2], x[4 * b + 3]];
                let w = self.0.block(a, b).apply(&v);
                for r in 0..4 {
                    acc[r] += w[r];
                }
            }
            acc
        });
        rows.into_iter().flatten().collect()
    }

    // Z and Q are skew-Hermitian.
    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        self.apply(x).into_iter().map(|v| -v).collect()
    }
}

/// Multi-axis in-place DFT over a `side`^dim array.
fn fftn(buf: &mut [C64], dim: usize, side: usize, plan: &Arc<dyn Fft<f64>>) {
    if dim == 1 {
        plan.process(buf);
        return;
    }
    let mut line = vec![ZERO; side];
    for stride in [1usize, side, side * side] {
        let outer = buf.len() / side;
        for o in 0..outer {
            let base = (o / stride) * stride * side + (o % stride);
            for (i, v) in line.iter_mut().enumerate() {
                *v = buf[base + i * stride];
            }
            plan.process(&mut line);
            for (i, v) in line.iter().enumerate() {
                buf[base + i * stride] = *v;
            }
        }
    }
}

/// Z with the padded kernel applied by zero-padded FFT convolution.
struct PaddedConvolution {
    space: Arc<Space>,
    side: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    kernel_hat: [Vec<C64>; 4],
    e: f64,
}

impl PaddedConvolution {
    fn new(space: &Arc<Space>, table: &KernelTable) -> Self {
        let g = space.grid();
        let n = g.n();
        let dim = g.dim();
        let side = 2 * n;
        let len = side.pow(dim as u32);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(side);
        let inv = planner.plan_fft_inverse(side);
        let dside = g.diff_side();
        let kernel_hat = std::array::from_fn(|mu| {
            let mut buf = vec![ZERO; len];
            for (idx, v) in table.values.iter().enumerate() {
                let mut rest = idx;
                let mut flat = 0;
                let mut mul = 1;
                for _ in 0..dim {
                    let c = rest % dside;
                    rest /= dside;
                    // c − (n−1) wrapped into [0, 2n)
                    let w = (c + side - (n - 1)) % side;
                    flat += w * mul;
                    mul *= side;
                }
                buf[flat] = v[mu];
            }
            fftn(&mut buf, dim, side, &fwd);
            buf
        });
        PaddedConvolution {
            space: space.clone(),
            side,
            fwd,
            inv,
            kernel_hat,
            e: space.params().e,
        }
    }

    fn padded_index(&self, mode: usize) -> usize {
        let g = self.space.grid();
        let idx = g.axis_indices(mode);
        let mut flat = 0;
        for k in 0..g.dim() {
            flat = flat * self.side + idx[k];
        }
        flat
    }

    fn run(&self, x: &[C64], sign: f64) -> Vec<C64> {
        let g = self.space.grid();
        let dim = g.dim();
        let len = self.side.pow(dim as u32);
        let modes = g.n_modes();
        let slots: Vec<usize> = (0..modes).map(|m| self.padded_index(m)).collect();
        let spin_hat: Vec<Vec<C64>> = (0..4)
            .map(|s| {
                let mut buf = vec![ZERO; len];
                for (m, &slot) in slots.iter().enumerate() {
                    buf[slot] = x[4 * m + s];
                }
                fftn(&mut buf, dim, self.side, &self.fwd);
                buf
            })
            .collect();
        let d = spinor::standard();
        let alphas: [SpinorMatrix; 4] = std::array::from_fn(|mu| d.alpha_mu(mu));
        let scale = C64::new(0.0, -self.e * sign) / len as f64;
        let mut y = vec![ZERO; x.len()];
        for r in 0..4 {
            let mut acc = vec![ZERO; len];
            for (mu, alpha) in alphas.iter().enumerate() {
                for s in 0..4 {
                    let coef = alpha.get(r, s);
                    if coef == ZERO {
                        continue;
                    }
                    for ((a, k), v) in acc.iter_mut().zip(&self.kernel_hat[mu]).zip(&spin_hat[s]) {
                        *a += coef * k * v;
                    }
                }
            }
            fftn(&mut acc, dim, self.side, &self.inv);
            for (m, &slot) in slots.iter().enumerate() {
                y[4 * m + r] = acc[slot] * scale;
            }
        }
        y
    }
}

impl LinearApplier for PaddedConvolution {
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.run(x, 1.0)
    }
    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        self.run(x, -1.0)
    }
}

/// Z with the periodic kernel applied as pointwise multiplication in position space.
struct PositionMultiply {
    space: Arc<Space>,
    /// −i·M(x) per grid point, M = e(A₀ + Σ α^i A_i).
    blocks: Vec<SpinorMatrix>,
}

impl PositionMultiply {
    fn new(space: &Arc<Space>, samples: &[[f64; 4]]) -> Self {
        let e = space.params().e;
        let blocks = samples
            .iter()
            .map(|a| alpha_contract(&a.map(|v| C64::new(v, 0.0))).scale(C64::new(0.0, -e)))
            .collect();
        PositionMultiply {
            space: space.clone(),
            blocks,
        }
    }

    fn run(&self, x: &[C64], adjoint: bool) -> Vec<C64> {
        let pos = position_components(&self.space, x);
        let mut out = vec![ZERO; x.len()];
        let modes = self.space.n_modes();
        let mut comps: Vec<Vec<C64>> = vec![vec![ZERO; modes]; 4];
        for m in 0..modes {
            let v = [pos[0][m], pos[1][m], pos[2][m], pos[3][m]];
            let blk = if adjoint {
                self.blocks[m].adjoint()
            } else {
                self.blocks[m]
            };
            let w = blk.apply(&v);
            for s in 0..4 {
                comps[s][m] = w[s];
            }
        }
        for (s, mut c) in comps.into_iter().enumerate() {
            self.space.grid().to_momentum(&mut c);
            for m in 0..modes {
                out[4 * m + s] = c[m];
            }
        }
        out
    }
}

/// Splits an interleaved momentum vector into four position-space components.
pub(crate) fn position_components(space: &Space, x: &[C64]) -> [Vec<C64>; 4] {
    let modes = space.n_modes();
    std::array::from_fn(|s| {
        let mut c: Vec<C64> = (0..modes).map(|m| x[4 * m + s]).collect();
        space.grid().to_position(&mut c);
        c
    })
}

impl LinearApplier for PositionMultiply {
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.run(x, false)
    }
    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        self.run(x, true)
    }
}

fn envelope_factor(pot: &PotentialSpec, t: f64, derivative: u32) -> f64 {
    if derivative == 0 {
        pot.envelope.value(t)
    } else {
        pot.envelope.derivative(t, derivative)
    }
}

fn z_from_table(
    space: &Arc<Space>,
    table: KernelTable,
    dense: bool,
    samples: Option<Vec<[f64; 4]>>,
) -> GridOperator {
    if dense {
        let blocks = KernelBlocks::new(space, table, KernelKind::Z);
        return GridOperator::dense(space, blocks.dense());
    }
    match table.mode() {
        KernelMode::Padded => {
            GridOperator::matrix_free(space, Arc::new(PaddedConvolution::new(space, &table)))
        }
        KernelMode::Periodic => {
            let samples = samples.expect("periodic samples");
            GridOperator::matrix_free(space, Arc::new(PositionMultiply::new(space, &samples)))
        }
    }
}

/// Z^A(t): kernel −ie Σ_μ α^μ Â_μ(t, p − q).
pub fn z_operator(
    pot: &PotentialSpec,
    t: f64,
    space: &Arc<Space>,
    opts: FieldOptions,
) -> Result<GridOperator> {
    z_operator_scaled(pot, envelope_factor(pot, t, 0), space, opts)
}

/// Z built from the spatial profile times an explicit envelope factor.
pub(crate) fn z_operator_scaled(
    pot: &PotentialSpec,
    factor: f64,
    space: &Arc<Space>,
    opts: FieldOptions,
) -> Result<GridOperator> {
    pot.validate()?;
    let dense = opts.wants_dense(space)?;
    let table = KernelTable::build(space, pot, factor, opts.mode);
    let dim = space.grid().dim();
    let samples = (opts.mode == KernelMode::Periodic && !dense).then(|| {
        space
            .grid()
            .positions()
            .into_iter()
            .map(|x| std::array::from_fn(|mu| factor * pot.components[mu].value(dim, x)))
            .collect()
    });
    Ok(z_from_table(space, table, dense, samples))
}

/// Periodic Z for an arbitrary field source.
pub fn z_operator_source(
    src: &dyn FieldSource,
    t: f64,
    space: &Arc<Space>,
    assembly: Assembly,
) -> Result<GridOperator> {
    let opts = FieldOptions {
        mode: KernelMode::Periodic,
        assembly,
    };
    let dense = opts.wants_dense(space)?;
    let dim = space.grid().dim();
    let samples: Vec<[f64; 4]> = space
        .grid()
        .positions()
        .into_iter()
        .map(|x| src.lower_components(dim, t, x))
        .collect();
    let table = KernelTable::periodic_from_fn(space, |x| src.lower_components(dim, t, x));
    Ok(z_from_table(space, table, dense, Some(samples)))
}

fn q_from_table(space: &Arc<Space>, table: KernelTable, dense: bool) -> GridOperator {
    let blocks = KernelBlocks::new(space, table, KernelKind::Q);
    let op = if dense {
        GridOperator::dense(space, blocks.dense())
    } else {
        GridOperator::matrix_free(space, Arc::new(KernelRows(blocks)))
    };
    op.with_parity(Parity::Odd)
}

/// Q^A(t)(p,q) = (Z₊₋ − Z₋₊)(p,q) / (i(E(p) + E(q))).
pub fn q_operator(
    pot: &PotentialSpec,
    t: f64,
    space: &Arc<Space>,
    opts: FieldOptions,
) -> Result<GridOperator> {
    pot.validate()?;
    let dense = opts.wants_dense(space)?;
    let table = KernelTable::build(space, pot, envelope_factor(pot, t, 0), opts.mode);
    Ok(q_from_table(space, table, dense))
}

/// ∂_t Q^A(t): the Q kernel with the envelope replaced by its derivative.
pub fn q_prime(
    pot: &PotentialSpec,
    t: f64,
    space: &Arc<Space>,
    opts: FieldOptions,
) -> Result<GridOperator> {
    pot.validate()?;
    let dense = opts.wants_dense(space)?;
    let table = KernelTable::build(space, pot, envelope_factor(pot, t, 1), opts.mode);
    Ok(q_from_table(space, table, dense))
}

/// Periodic Q for an arbitrary field source.
pub fn q_operator_source(
    src: &dyn FieldSource,
    t: f64,
    space: &Arc<Space>,
    assembly: Assembly,
) -> Result<GridOperator> {
    let opts = FieldOptions {
        mode: KernelMode::Periodic,
        assembly,
    };
    let dense = opts.wants_dense(space)?;
    Ok(q_from_table(
        space,
        KernelTable::periodic(space, src, t),
        dense,
    ))
}

/// ‖Q‖²_F on the grid by a direct double sum over kernel blocks; needs no
/// dense storage.
pub fn q_hs_kernel_sum(
    pot: &PotentialSpec,
    t: f64,
    space: &Arc<Space>,
    mode: KernelMode,
) -> Result<f64> {
    pot.validate()?;
    let table = KernelTable::build(space, pot, envelope_factor(pot, t, 0), mode);
    Ok(KernelBlocks::new(space, table, KernelKind::Q).hs_norm_sq())
}

/// ‖e^Q − (1 + Q)‖_F, the size of the neglected higher-order terms.
pub fn first_order_remainder(q: &GridOperator) -> Result<f64> {
    let m = q.to_matrix()?;
    let e = exp_skew_matrix(&m)?;
    let n = m.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            let mut v = to_n(e.read(i, j)) - to_n(m.read(i, j));
            if i == j {
                v -= 1.0;
            }
            s += v.norm_sqr();
        }
    }
    Ok(s.sqrt())
}

// ---------------------------------------------------------------------------
// Closed-form trace formula and its quadrature

/// a·b = a₀b₀ − Σ aᵢbᵢ.
#[inline]
fn mdot(a: [C64; 4], b: [C64; 4]) -> C64 {
    a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
}

/// tr[Q₊₋(p,q) Q₊₋(p,q)*] from four-vector contractions, with A = Â(p − q).
pub fn trace_plus_minus(p: [f64; 3], q: [f64; 3], a: [C64; 4], m: f64, e: f64) -> f64 {
    let ep = spinor::energy(p, m);
    let eq = spinor::energy(q, m);
    let r = |x: f64| C64::new(x, 0.0);
    let pp = [r(ep), r(-p[0]), r(-p[1]), r(-p[2])];
    let qm = [r(-eq), r(-q[0]), r(-q[1]), r(-q[2])];
    let abar = a.map(|v| v.conj());
    let bracket = (r(m * m) - mdot(pp, qm)) * mdot(a, abar)
        + mdot(pp, a) * mdot(qm, abar)
        + mdot(pp, abar) * mdot(qm, a);
    let pre = e * e / (pp[0].re * qm[0].re * (pp[0].re - qm[0].re).powi(2));
    pre * bracket.re
}

/// tr[Q(p,q)Q(p,q)*] summed over both odd blocks.
pub fn trace_integrand(
    pot: &PotentialSpec,
    dim: usize,
    t: f64,
    p: [f64; 3],
    q: [f64; 3],
    m: f64,
    e: f64,
) -> f64 {
    let d: [f64; 3] = std::array::from_fn(|i| p[i] - q[i]);
    let a = pot.fourier(dim, t, d);
    let abar = a.map(|v| v.conj());
    trace_plus_minus(p, q, a, m, e) + trace_plus_minus(q, p, abar, m, e)
}

/// Integration domain for the (p, q) double integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum QDomain {
    /// Both momenta in [−Λ, Λ)^dim, the region covered by a grid with cutoff Λ.
    Cube { cutoff: f64 },
    /// Both momenta with |·| ≤ radius.
    Ball { radius: f64 },
    /// All of ℝ^dim × ℝ^dim; finite for electric potentials only.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QNormQuadrature {
    pub points: usize,
    pub replicates: usize,
    pub seed: u64,
    pub domain: QDomain,
}

impl Default for QNormQuadrature {
    fn default() -> Self {
        QNormQuadrature {
            points: 1 << 14,
            replicates: 8,
            seed: 0,
            domain: QDomain::Full,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QNormEstimate {
    pub value: f64,
    pub std_err: f64,
    pub points: usize,
    pub replicates: usize,
}

/// Tabulated radial sampler with density ∝ r^{dim−1}/E(r)^{2κ} on [0, R].
struct RadialSampler {
    u: Vec<f64>,
    cdf: Vec<f64>,
    scale: f64,
    total: f64,
}

impl RadialSampler {
    const NODES: usize = 8192;

    fn new(dim: usize, m: f64, kappa: i32, radius: Option<f64>) -> Self {
        let scale = m;
        let umax = radius.map_or(0.5 * PI, |r| (r / scale).atan());
        let w = |u: f64| {
            if u >= 0.5 * PI {
                return 0.0;
            }
            let r = scale * u.tan();
            let e2 = r * r + m * m;
            let jac = scale / u.cos().powi(2);
            r.powi(dim as i32 - 1) / e2.powi(kappa) * jac
        };
        let h = umax / Self::NODES as f64;
        let u: Vec<f64> = (0..=Self::NODES).map(|i| i as f64 * h).collect();
        let mut cdf = vec![0.0; u.len()];
        for i in 1..u.len() {
            cdf[i] = cdf[i - 1] + 0.5 * h * (w(u[i - 1]) + w(u[i]));
        }
        let total = cdf[Self::NODES];
        RadialSampler {
            u,
            cdf,
            scale,
            total,
        }
    }

    /// Radius for uniform `v` and the exact density of the sampler at that radius.
    fn sample(&self, v: f64) -> (f64, f64) {
        let target = v * self.total;
        let i = match self.cdf.binary_search_by(|c| c.total_cmp(&target)) {
            Ok(i) => i.min(Self::NODES - 1),
            Err(i) => i.clamp(1, Self::NODES) - 1,
        };
        let (c0, c1) = (self.cdf[i], self.cdf[i + 1]);
        let (u0, u1) = (self.u[i], self.u[i + 1]);
        let frac = if c1 > c0 {
            (target - c0) / (c1 - c0)
        } else {
            0.5
        };
        let u = u0 + frac * (u1 - u0);
        let density_u = (c1 - c0) / (u1 - u0) / self.total;
        let r = self.scale * u.tan();
        let drdu = self.scale / u.cos().powi(2);
        (r, density_u / drdu)
    }
}

fn in_domain(domain: QDomain, dim: usize, p: &[f64; 3]) -> bool {
    match domain {
        QDomain::Cube { cutoff } => (0..dim).all(|k| p[k] >= -cutoff && p[k] < cutoff),
        QDomain::Ball { radius } => (0..dim).map(|k| p[k] * p[k]).sum::<f64>() <= radius * radius,
        QDomain::Full => true,
    }
}

/// ‖Q^A(t)‖²_{I₂} from the closed-form trace formula by randomized
/// quasi-Monte Carlo over (p, k = p − q).
///
/// p is drawn radially with density ∝ E(p)^{−2} on bounded domains and
/// ∝ E(p)^{−4} on the full space; k is Gaussian with standard deviation
/// 1/σ_min. Replicates use independent Cranley–Patterson shifts of one
/// Halton sequence, and the reported error is the replicate standard error.
pub fn q_norm_analytic(
    pot: &PotentialSpec,
    dim: usize,
    t: f64,
    params: crate::PhysicsParams,
    quad: QNormQuadrature,
) -> Result<QNormEstimate> {
    pot.validate()?;
    params.validate()?;
    if !(dim == 1 || dim == 3) {
        return Err(Error::spec("dim", "must be 1 or 3"));
    }
    if quad.replicates < 2 || quad.points == 0 {
        return Err(Error::spec(
            "quadrature",
            "needs at least 2 replicates and 1 point",
        ));
    }
    if quad.domain == QDomain::Full {
        if let Some(mu) = pot.magnetic_component() {
            return Err(Error::MagneticComponent(mu));
        }
    }
    if pot.is_zero() || pot.envelope.value(t) == 0.0 {
        return Ok(QNormEstimate {
            value: 0.0,
            std_err: 0.0,
            points: quad.points,
            replicates: quad.replicates,
        });
    }
    let (m, e) = (params.m, params.e);
    let (radius, kappa) = match quad.domain {
        QDomain::Cube { cutoff } => (Some(cutoff * (dim as f64).sqrt()), 1),
        QDomain::Ball { radius } => (Some(radius), 1),
        QDomain::Full => (None, 2),
    };
    let radial = RadialSampler::new(dim, m, kappa, radius);
    let sphere = if dim == 1 { 2.0 } else { 4.0 * PI };
    let sigma_min = pot
        .components
        .iter()
        .filter(|c| c.amplitude != 0.0)
        .map(|c| c.width)
        .fold(f64::INFINITY, f64::min);
    let ks = 1.0 / sigma_min;
    let p_dims = if dim == 1 { 2 } else { 3 };
    let dims = p_dims + if dim == 1 { 2 } else { 4 };
    let mut master = ChaCha8Rng::seed_from_u64(quad.seed);
    let shifts: Vec<Vec<f64>> = (0..quad.replicates)
        .map(|_| (0..dims).map(|_| master.gen::<f64>()).collect())
        .collect();
    let means = ordered_map(quad.replicates, |rep| {
        let mut h = vec![0.0; dims];
        let mut sum = 0.0;
        for i in 0..quad.points {
            halton(i as u64 + 1, dims, &mut h);
            for (v, s) in h.iter_mut().zip(&shifts[rep]) {
                *v = (*v + s).fract();
            }
            let (r, f_r) = radial.sample(h[0]);
            let mut p = [0.0; 3];
            if dim == 1 {
                p[0] = if h[1] < 0.5 { r } else { -r };
            } else {
                let ct = 2.0 * h[1] - 1.0;
                let st = (1.0 - ct * ct).max(0.0).sqrt();
                let ph = 2.0 * PI * h[2];
                p = [r * st * ph.cos(), r * st * ph.sin(), r * ct];
            }
            let f_p = f_r / (sphere * r.powi(dim as i32 - 1)).max(f64::MIN_POSITIVE);
            let mut normals = [0.0; 4];
            for pair in 0..(dims - p_dims) / 2 {
                let u1 = (1.0 - h[p_dims + 2 * pair]).max(1e-300);
                let u2 = h[p_dims + 2 * pair + 1];
                let rad = (-2.0 * u1.ln()).sqrt();
                normals[2 * pair] = rad * (2.0 * PI * u2).cos();
                normals[2 * pair + 1] = rad * (2.0 * PI * u2).sin();
            }
            let mut k = [0.0; 3];
            let mut k2 = 0.0;
            for a in 0..dim {
                k[a] = ks * normals[a];
                k2 += normals[a] * normals[a];
            }
            let f_k = (-0.5 * k2).exp() / (ks * (2.0 * PI).sqrt()).powi(dim as i32);
            let q: [f64; 3] = std::array::from_fn(|a| p[a] - k[a]);
            if !in_domain(quad.domain, dim, &p) || !in_domain(quad.domain, dim, &q) {
                continue;
            }
            let val = trace_integrand(pot, dim, t, p, q, m, e);
            sum += val / (f_p * f_k);
        }
        sum / quad.points as f64
    });
    let rcount = means.len() as f64;
    let value = means.iter().sum::<f64>() / rcount;
    let var = means.iter().map(|v| (v - value).powi(2)).sum::<f64>() / (rcount - 1.0);
    let std_err = (var / rcount).sqrt();
    if value < -3.0 * std_err {
        return Err(Error::NegativeEstimate { value, sigmas: 3.0 });
    }
    Ok(QNormEstimate {
        value,
        std_err,
        points: quad.points,
        replicates: quad.replicates,
    })
}

// ---------------------------------------------------------------------------
// Electric bound

/// Continuum and grid forms of (2e²/m²) ∫dp E(p)⁻⁴ · ∫|k|²E(k)²|Â₀(k)|² dk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ElectricBound {
    pub continuum: f64,
    /// p summed over the grid, k over its difference lattice.
    pub grid: Option<f64>,
}

fn require_electric(pot: &PotentialSpec) -> Result<()> {
    match pot.magnetic_component() {
        Some(mu) => Err(Error::MagneticComponent(mu)),
        None => Ok(()),
    }
}

/// Closed-form continuum bound for a Gaussian A₀.
pub fn electric_qnorm_bound(
    pot: &PotentialSpec,
    dim: usize,
    t: f64,
    params: crate::PhysicsParams,
) -> Result<f64> {
    pot.validate()?;
    require_electric(pot)?;
    let (m, e) = (params.m, params.e);
    let c0 = &pot.components[0];
    let g = pot.envelope.value(t);
    if c0.amplitude == 0.0 || g == 0.0 {
        return Ok(0.0);
    }
    let d = dim as f64;
    let p_int = if dim == 1 {
        PI / (2.0 * m.powi(3))
    } else {
        PI * PI / m
    };
    let a = c0.width * c0.width;
    let c = c0.fourier_peak(dim) * g.abs();
    let k_int =
        c * c * (PI / a).powf(d / 2.0) * (d * (d + 2.0) / (4.0 * a * a) + m * m * d / (2.0 * a));
    Ok(2.0 * e * e / (m * m) * p_int * k_int)
}

/// Both forms of the electric bound on a given grid.
pub fn electric_qnorm_bounds(pot: &PotentialSpec, t: f64, space: &Space) -> Result<ElectricBound> {
    let g = space.grid();
    let params = space.params();
    let continuum = electric_qnorm_bound(pot, g.dim(), t, params)?;
    let (m, e) = (params.m, params.e);
    let w = g.measure();
    let p_sum: f64 = space.energies().iter().map(|en| en.powi(-4)).sum::<f64>() * w;
    let amp = pot.envelope.value(t);
    let k_sum: f64 = (0..g.diff_len())
        .map(|idx| {
            let k = g.diff_momentum(idx);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            k2 * (k2 + m * m) * (pot.components[0].fourier(g.dim(), k) * amp).norm_sqr()
        })
        .sum::<f64>()
        * w;
    Ok(ElectricBound {
        continuum,
        grid: Some(2.0 * e * e / (m * m) * p_sum * k_sum),
    })
}

// ---------------------------------------------------------------------------
// Convolution-integral inequalities

/// Complex Gaussian profile a·exp(−|k − k₀|²/(2w²)) in momentum space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumProfile {
    pub amplitude: C64,
    pub width: f64,
    pub center: [f64; 3],
}

impl MomentumProfile {
    pub fn zero() -> Self {
        MomentumProfile {
            amplitude: ZERO,
            width: 1.0,
            center: [0.0; 3],
        }
    }

    pub fn value(&self, dim: usize, k: [f64; 3]) -> C64 {
        let r2: f64 = (0..dim).map(|a| (k[a] - self.center[a]).powi(2)).sum();
        self.amplitude * (-r2 / (2.0 * self.width * self.width)).exp()
    }

    /// Random profile for property tests.
    pub fn random<R: Rng>(rng: &mut R, dim: usize) -> Self {
        let mut center = [0.0; 3];
        for c in center.iter_mut().take(dim) {
            *c = rng.gen_range(-1.5..1.5);
        }
        MomentumProfile {
            amplitude: C64::from_polar(rng.gen_range(0.2..2.0), rng.gen_range(0.0..2.0 * PI)),
            width: rng.gen_range(0.3..1.5),
            center,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntegralEstimate {
    I,
    II,
    III,
    IV,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Lattice value of ‖E⁻²‖₂ over a box wide enough for every momentum sum
/// that appears in the four inequalities.
pub fn c9_lattice(space: &Space) -> f64 {
    let g = space.grid();
    let n = g.n() as i64;
    let half = 3 * n / 2;
    let side = (2 * half + 1) as usize;
    let m = space.params().m;
    let dp = g.dp();
    let axis: Vec<f64> = (-half..=half).map(|j| (j as f64 * dp).powi(2)).collect();
    let mut s = 0.0;
    if g.dim() == 1 {
        for a in &axis {
            s += (a + m * m).powi(-2);
        }
    } else {
        for a in &axis {
            for b in &axis {
                for c in &axis {
                    s += (a + b + c + m * m).powi(-2);
                }
            }
        }
    }
    debug_assert_eq!(axis.len(), side);
    (s * g.measure()).sqrt()
}

fn profile_table(space: &Space, prof: &MomentumProfile) -> Vec<C64> {
    let g = space.grid();
    (0..g.diff_len())
        .map(|i| prof.value(g.dim(), g.diff_momentum(i)))
        .collect()
}

fn lattice_norms(space: &Space, table: &[C64]) -> (f64, f64) {
    let w = space.grid().measure();
    let l1 = table.iter().map(|v| v.norm()).sum::<f64>() * w;
    let l2 = (table.iter().map(|v| v.norm_sqr()).sum::<f64>() * w).sqrt();
    (l1, l2)
}

/// Evaluates one of the four convolution inequalities on the grid: momenta
/// p, q, k, j range over the grid modes, profiles are sampled on the
/// difference lattice, and all norms are lattice norms.
pub fn integral_estimate_check(
    which: IntegralEstimate,
    profiles: &[MomentumProfile; 3],
    space: &Space,
) -> EstimateReport {
    let g = space.grid();
    let modes = g.n_modes();
    let w = g.measure();
    let en = space.energies();
    let tables: Vec<Vec<C64>> = profiles.iter().map(|p| profile_table(space, p)).collect();
    let kernel = |t: usize, weight: &dyn Fn(usize, usize) -> f64| {
        Matrix::from_fn(modes, modes, |a, b| {
            to_f(tables[t][g.diff_index(a, b)] * weight(a, b))
        })
    };
    let frob = |m: &Matrix, extra: f64| m.norm_l2() * extra;
    let c9 = c9_lattice(space);
    let (l1_1, _) = lattice_norms(space, &tables[0]);
    let (_, l2_2) = lattice_norms(space, &tables[1]);
    let (l1_3, _) = lattice_norms(space, &tables[2]);
    let (lhs, rhs) = match which {
        IntegralEstimate::I => {
            let k = kernel(1, &|a, b| (en[a] + en[b]).powi(-2));
            (frob(&k, w), c9 * l2_2)
        }
        IntegralEstimate::II => {
            let b1 = kernel(0, &|_, _| 1.0);
            let b2 = kernel(1, &|k, q| 1.0 / (en[k] + en[q]));
            let prod = &b1 * &b2;
            let m = Matrix::from_fn(modes, modes, |p, q| {
                prod.read(p, q) * c64::new(1.0 / (en[p] + en[q]), 0.0)
            });
            (frob(&m, w * w), c9 * l1_1 * l2_2)
        }
        IntegralEstimate::III => {
            let b1 = kernel(0, &|p, k| 1.0 / (en[p] + en[k]));
            let b2 = kernel(1, &|k, q| 1.0 / (en[k] + en[q]));
            (frob(&(&b1 * &b2), w * w), c9 * l1_1 * l2_2)
        }
        IntegralEstimate::IV => {
            let b1 = kernel(0, &|p, j| 1.0 / (en[p] + en[j]));
            let b2 = kernel(1, &|_, _| 1.0);
            let b3 = kernel(2, &|k, q| 1.0 / (en[k] + en[q]));
            (
                frob(&(&(&b1 * &b2) * &b3), w * w * w),
                c9 * l1_1 * l2_2 * l1_3,
            )
        }
    };
    EstimateReport {
        lhs,
        rhs,
        pass: lhs <= rhs * (1.0 + 1e-6),
    }
}
