//! One-particle operators on the truncated space.

use std::fmt;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DenseBudget, Grid};
use crate::parallel::ordered_map;
use crate::spinor::{self, PhysicsParams, SpinorMatrix};
use crate::{c64, to_f, to_n, Matrix, C64};

/// Grid plus physical constants, with cached per-mode energies and projectors.
pub struct Space {
    grid: Grid,
    params: PhysicsParams,
    budget: DenseBudget,
    energies: Vec<f64>,
    proj: Vec<[SpinorMatrix; 2]>,
}

impl fmt::Debug for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Space")
            .field("grid", self.grid.spec())
            .field("params", &self.params)
            .finish()
    }
}

impl Space {
    pub fn new(grid: Grid, params: PhysicsParams) -> Result<Arc<Self>> {
        Self::with_budget(grid, params, DenseBudget::default())
    }

    pub fn with_budget(
        grid: Grid,
        params: PhysicsParams,
        budget: DenseBudget,
    ) -> Result<Arc<Self>> {
        params.validate()?;
        let energies = grid
            .momenta()
            .iter()
            .map(|p| spinor::energy(*p, params.m))
            .collect();
        let proj = grid
            .momenta()
            .iter()
            .map(|p| {
                let (pp, pm) = spinor::projectors(*p, params.m);
                [pp, pm]
            })
            .collect();
        Ok(Arc::new(Space {
            grid,
            params,
            budget,
            energies,
            proj,
        }))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> PhysicsParams {
        self.params
    }

    pub fn budget(&self) -> DenseBudget {
        self.budget
    }

    /// N_H = 4·n^dim.
    pub fn dim(&self) -> usize {
        self.grid.hilbert_dim()
    }

    pub fn n_modes(&self) -> usize {
        self.grid.n_modes()
    }

    pub fn energy(&self, mode: usize) -> f64 {
        self.energies[mode]
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn projector(&self, mode: usize, sign: Sign) -> &SpinorMatrix {
        &self.proj[mode][sign.index()]
    }

    pub fn check_dense(&self) -> Result<()> {
        self.budget.check(self.grid.spec())
    }

    /// Applies P_σ mode by mode to a vector.
    pub fn project_vec(&self, sign: Sign, x: &mut [C64]) {
        for (mode, chunk) in x.chunks_exact_mut(4).enumerate() {
            let v = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let w = self.projector(mode, sign).apply(&v);
            chunk.copy_from_slice(&w);
        }
    }

    /// Orthonormal eigenvectors of H⁰(p) for one mode: two negative-energy
    /// vectors followed by two positive-energy ones.
    pub fn eigenbasis(&self, mode: usize) -> [[C64; 4]; 4] {
        let h = spinor::free_hamiltonian(self.grid.momentum(mode), self.params.m);
        let m = Matrix::from_fn(4, 4, |i, j| to_f(h.get(i, j)));
        let evd = m.selfadjoint_eigendecomposition(faer::Side::Lower);
        let u = evd.u();
        let s = evd.s().column_vector();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| s.read(a).re.total_cmp(&s.read(b).re));
        let mut out = [[C64::new(0.0, 0.0); 4]; 4];
        for (slot, &k) in order.iter().enumerate() {
            for i in 0..4 {
                out[slot][i] = to_n(u.read(i, k));
            }
        }
        out
    }
}

/// Sign label of the free spectral projectors P±.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn index(self) -> usize {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// Matrix-free action of an operator and its adjoint.
pub trait LinearApplier: Send + Sync {
    fn apply(&self, x: &[C64]) -> Vec<C64>;
    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64>;
}

#[derive(Clone)]
pub enum OperatorRepr {
    Dense(Matrix),
    MatrixFree(Arc<dyn LinearApplier>),
}

/// Known parity of an operator with respect to the P± split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Unknown,
    Even,
    Odd,
}

/// An operator on the truncated one-particle space.
#[derive(Clone)]
pub struct GridOperator {
    pub repr: OperatorRepr,
    pub space: Arc<Space>,
    pub parity: Parity,
}

impl fmt::Debug for GridOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.repr {
            OperatorRepr::Dense(_) => "dense",
            OperatorRepr::MatrixFree(_) => "matrix-free",
        };
        f.debug_struct("GridOperator")
            .field("repr", &kind)
            .field("dim", &self.space.dim())
            .field("parity", &self.parity)
            .finish()
    }
}

impl GridOperator {
    pub fn dense(space: &Arc<Space>, m: Matrix) -> Self {
        assert_eq!(m.nrows(), space.dim());
        assert_eq!(m.ncols(), space.dim());
        GridOperator {
            repr: OperatorRepr::Dense(m),
            space: space.clone(),
            parity: Parity::Unknown,
        }
    }

    pub fn matrix_free(space: &Arc<Space>, applier: Arc<dyn LinearApplier>) -> Self {
        GridOperator {
            repr: OperatorRepr::MatrixFree(applier),
            space: space.clone(),
            parity: Parity::Unknown,
        }
    }

    pub fn with_parity(mut self, parity: Parity) -> Self {
        self.parity = parity;
        self
    }

    pub fn identity(space: &Arc<Space>) -> Self {
        Self::dense(space, Matrix::identity(space.dim(), space.dim())).with_parity(Parity::Even)
    }

    pub fn zero(space: &Arc<Space>) -> Self {
        Self::dense(space, Matrix::zeros(space.dim(), space.dim()))
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn matrix(&self) -> Option<&Matrix> {
        match &self.repr {
            OperatorRepr::Dense(m) => Some(m),
            OperatorRepr::MatrixFree(_) => None,
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.repr, OperatorRepr::Dense(_))
    }

    /// Dense matrix; a matrix-free operator is materialized column by column
    /// after a budget check.
    pub fn to_matrix(&self) -> Result<Matrix> {
        match &self.repr {
            OperatorRepr::Dense(m) => Ok(m.clone()),
            OperatorRepr::MatrixFree(a) => {
                self.space.check_dense()?;
                let n = self.dim();
                let cols = ordered_map(n, |j| {
                    let mut e = vec![C64::new(0.0, 0.0); n];
                    e[j] = C64::new(1.0, 0.0);
                    a.apply(&e)
                });
                Ok(Matrix::from_fn(n, n, |i, j| to_f(cols[j][i])))
            }
        }
    }

    pub fn densified(&self) -> Result<Self> {
        Ok(GridOperator {
            repr: OperatorRepr::Dense(self.to_matrix()?),
            space: self.space.clone(),
            parity: self.parity,
        })
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        match &self.repr {
            OperatorRepr::Dense(m) => dense_apply(m, x, false),
            OperatorRepr::MatrixFree(a) => a.apply(x),
        }
    }

    pub fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        match &self.repr {
            OperatorRepr::Dense(m) => dense_apply(m, x, true),
            OperatorRepr::MatrixFree(a) => a.apply_adjoint(x),
        }
    }

    pub fn adjoint(&self) -> Self {
        let repr = match &self.repr {
            OperatorRepr::Dense(m) => OperatorRepr::Dense(m.adjoint().to_owned()),
            OperatorRepr::MatrixFree(a) => OperatorRepr::MatrixFree(Arc::new(Adjoint(a.clone()))),
        };
        GridOperator {
            repr,
            space: self.space.clone(),
            parity: self.parity,
        }
    }

    /// self · other.
    pub fn compose(&self, other: &GridOperator) -> Self {
        let parity = match (self.parity, other.parity) {
            (Parity::Even, p) | (p, Parity::Even) => p,
            (Parity::Odd, Parity::Odd) => Parity::Even,
            _ => Parity::Unknown,
        };
        let repr = match (&self.repr, &other.repr) {
            (OperatorRepr::Dense(a), OperatorRepr::Dense(b)) => OperatorRepr::Dense(a * b),
            _ => OperatorRepr::MatrixFree(Arc::new(Product(self.clone(), other.clone()))),
        };
        GridOperator {
            repr,
            space: self.space.clone(),
            parity,
        }
    }

    /// a·self + b·other.
    pub fn combine(&self, a: C64, other: &GridOperator, b: C64) -> Self {
        let parity = if self.parity == other.parity {
            self.parity
        } else {
            Parity::Unknown
        };
        let repr = match (&self.repr, &other.repr) {
            (OperatorRepr::Dense(x), OperatorRepr::Dense(y)) => {
                let (fa, fb) = (to_f(a), to_f(b));
                OperatorRepr::Dense(Matrix::from_fn(x.nrows(), x.ncols(), |i, j| {
                    fa * x.read(i, j) + fb * y.read(i, j)
                }))
            }
            _ => OperatorRepr::MatrixFree(Arc::new(Combination(self.clone(), a, other.clone(), b))),
        };
        GridOperator {
            repr,
            space: self.space.clone(),
            parity,
        }
    }

    pub fn add(&self, other: &GridOperator) -> Self {
        self.combine(C64::new(1.0, 0.0), other, C64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &GridOperator) -> Self {
        self.combine(C64::new(1.0, 0.0), other, C64::new(-1.0, 0.0))
    }

    pub fn scale(&self, s: C64) -> Self {
        let repr = match &self.repr {
            OperatorRepr::Dense(x) => {
                let fs = to_f(s);
                OperatorRepr::Dense(Matrix::from_fn(x.nrows(), x.ncols(), |i, j| {
                    fs * x.read(i, j)
                }))
            }
            OperatorRepr::MatrixFree(_) => {
                let z = GridOperator::zero(&self.space);
                return self.combine(s, &z, C64::new(0.0, 0.0));
            }
        };
        GridOperator {
            repr,
            space: self.space.clone(),
            parity: self.parity,
        }
    }

    /// Frobenius norm (dense only).
    pub fn frobenius(&self) -> Result<f64> {
        Ok(self.to_matrix()?.norm_l2())
    }

    /// ‖U*U − 1‖_F (dense).
    pub fn unitarity_defect(&self) -> Result<f64> {
        let m = self.to_matrix()?;
        Ok(unitarity_defect(&m))
    }
}

pub(crate) fn unitarity_defect(m: &Matrix) -> f64 {
    let g = m.adjoint() * m;
    let n = g.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            let mut v = to_n(g.read(i, j));
            if i == j {
                v -= 1.0;
            }
            s += v.norm_sqr();
        }
    }
    s.sqrt()
}

pub(crate) fn dense_apply(m: &Matrix, x: &[C64], adjoint: bool) -> Vec<C64> {
    let n = m.nrows();
    let v = Matrix::from_fn(x.len(), 1, |i, _| to_f(x[i]));
    let y = if adjoint { m.adjoint() * &v } else { m * &v };
    let len = if adjoint { m.ncols() } else { n };
    (0..len).map(|i| to_n(y.read(i, 0))).collect()
}

struct Adjoint(Arc<dyn LinearApplier>);

impl LinearApplier for Adjoint {
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.0.apply_adjoint(x)
    }
    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        self.0.apply(x)
    }
}

struct Product(GridOperator, GridOperator);

impl LinearApplier for Product {
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.0.apply(&self.1.apply(x))
    }
    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        self.1.apply_adjoint(&self.0.apply_adjoint(x))
    }
}

struct Combination(GridOperator, C64, GridOperator, C64);

impl LinearApplier for Combination {
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let a = self.0.apply(x);
        let b = self.2.apply(x);
        a.iter()
            .zip(&b)
            .map(|(u, v)| self.1 * u + self.3 * v)
            .collect()
    }
    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        let a = self.0.apply_adjoint(x);
        let b = self.2.apply_adjoint(x);
        a.iter()
            .zip(&b)
            .map(|(u, v)| self.1.conj() * u + self.3.conj() * v)
            .collect()
    }
}

struct Projected {
    inner: GridOperator,
    left: Sign,
    right: Sign,
}

impl LinearApplier for Projected {
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut v = x.to_vec();
        self.inner.space.project_vec(self.right, &mut v);
        let mut y = self.inner.apply(&v);
        self.inner.space.project_vec(self.left, &mut y);
        y
    }
    fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        let mut v = x.to_vec();
        self.inner.space.project_vec(self.left, &mut v);
        let mut y = self.inner.apply_adjoint(&v);
        self.inner.space.project_vec(self.right, &mut y);
        y
    }
}

/// P_σ(p) applied to every 4-row block of every column.
pub(crate) fn left_project(space: &Space, m: &mut Matrix, sign: Sign) {
    let ncols = m.ncols();
    for j in 0..ncols {
        let col = m.col_as_slice_mut(j);
        for (mode, chunk) in col.chunks_exact_mut(4).enumerate() {
            let v = [
                to_n(chunk[0]),
                to_n(chunk[1]),
                to_n(chunk[2]),
                to_n(chunk[3]),
            ];
            let w = space.projector(mode, sign).apply(&v);
            for s in 0..4 {
                chunk[s] = to_f(w[s]);
            }
        }
    }
}

/// Multiplies every 4-column block on the right by P_τ(q).
pub(crate) fn right_project(space: &Space, m: &mut Matrix, sign: Sign) {
    let nrows = m.nrows();
    for mode in 0..space.n_modes() {
        let p = space.projector(mode, sign);
        for i in 0..nrows {
            let row: [C64; 4] = std::array::from_fn(|r| to_n(m.read(i, 4 * mode + r)));
            for s in 0..4 {
                let v = row[0] * p.get(0, s)
                    + row[1] * p.get(1, s)
                    + row[2] * p.get(2, s)
                    + row[3] * p.get(3, s);
                m.write(i, 4 * mode + s, to_f(v));
            }
        }
    }
}

/// P_σ · op · P_τ.
pub fn project(op: &GridOperator, left: Sign, right: Sign) -> GridOperator {
    let parity = if left == right {
        Parity::Even
    } else {
        Parity::Odd
    };
    match &op.repr {
        OperatorRepr::Dense(m) => {
            let mut out = m.clone();
            right_project(&op.space, &mut out, right);
            left_project(&op.space, &mut out, left);
            GridOperator::dense(&op.space, out).with_parity(parity)
        }
        OperatorRepr::MatrixFree(_) => GridOperator::matrix_free(
            &op.space,
            Arc::new(Projected {
                inner: op.clone(),
                left,
                right,
            }),
        )
        .with_parity(parity),
    }
}

/// (even, odd) parts: ev = P₊AP₊ + P₋AP₋, odd = P₊AP₋ + P₋AP₊.
pub fn parity_split(op: &GridOperator) -> (GridOperator, GridOperator) {
    let pp = project(op, Sign::Plus, Sign::Plus);
    let mm = project(op, Sign::Minus, Sign::Minus);
    let pm = project(op, Sign::Plus, Sign::Minus);
    let mp = project(op, Sign::Minus, Sign::Plus);
    (
        pp.add(&mm).with_parity(Parity::Even),
        pm.add(&mp).with_parity(Parity::Odd),
    )
}

/// e^Q for skew-Hermitian dense Q; see [`exp_skew_matrix`].
pub fn exp_skew(q: &GridOperator) -> Result<GridOperator> {
    let m = q.to_matrix()?;
    let out = exp_skew_matrix(&m)?;
    Ok(GridOperator::dense(&q.space, out))
}

pub(crate) fn skew_defect(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut num = 0.0;
    for j in 0..n {
        for i in 0..n {
            num += (to_n(m.read(i, j)) + to_n(m.read(j, i)).conj()).norm_sqr();
        }
    }
    num.sqrt() / m.norm_l2().max(1.0)
}

pub fn exp_skew_matrix(m: &Matrix) -> Result<Matrix> {
    let defect = skew_defect(m);
    if defect > 1e-8 {
        return Err(Error::NotSkew(defect));
    }
    Ok(expm_taylor(m))
}

/// e^A by scaling and squaring with a degree-18 Taylor polynomial evaluated
/// in Paterson–Stockmeyer form; the scaled 1-norm is at most 1/2.
pub(crate) fn expm_taylor(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| to_n(a.read(i, j)).norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scale = 0.5f64.powi(squarings);
    let a = Matrix::from_fn(n, n, |i, j| a.read(i, j) * c64::new(scale, 0.0));
    let ident = Matrix::identity(n, n);
    let a2 = &a * &a;
    let a3 = &a2 * &a;
    let powers = [&ident, &a, &a2, &a3];
    let a4 = &a3 * &a;
    let coef = |k: usize| 1.0 / (1..=k).map(|j| j as f64).product::<f64>();
    // Σ_{b=4..0} (A⁴)^b Σ_{j<4} c_{4b+j} A^j, degree 18 with c_k = 0 for k > 18
    let block = |b: usize| {
        Matrix::from_fn(n, n, |i, j| {
            let mut v = c64::new(0.0, 0.0);
            for (p, m) in powers.iter().enumerate() {
                let k = 4 * b + p;
                if k <= 18 {
                    v += m.read(i, j) * c64::new(coef(k), 0.0);
                }
            }
            v
        })
    };
    let mut acc = block(4);
    for b in (0..4).rev() {
        let next = block(b);
        acc = &a4 * &acc;
        acc = Matrix::from_fn(n, n, |i, j| acc.read(i, j) + next.read(i, j));
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    acc
}

/// V f(Λ) V* for Hermitian H = VΛV*.
pub(crate) fn hermitian_function<F: Fn(f64) -> C64>(h: &Matrix, f: F) -> Matrix {
    let n = h.nrows();
    let evd = h.selfadjoint_eigendecomposition(faer::Side::Lower);
    let u = evd.u();
    let s = evd.s().column_vector();
    let mut scaled = u.to_owned();
    for k in 0..n {
        let fk = to_f(f(s.read(k).re));
        for i in 0..n {
            let v = scaled.read(i, k);
            scaled.write(i, k, v * fk);
        }
    }
    &scaled * u.adjoint()
}

/// Options for the stochastic Hilbert–Schmidt estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticOptions {
    pub probes: usize,
    pub seed: u64,
}

impl Default for StochasticOptions {
    fn default() -> Self {
        StochasticOptions {
            probes: 64,
            seed: 0,
        }
    }
}

/// Hilbert–Schmidt norm with its uncertainty; `std_err_sq` is zero for exact evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HsEstimate {
    pub norm: f64,
    pub norm_sq: f64,
    pub std_err_sq: f64,
    pub probes: usize,
    pub seed: Option<u64>,
}

impl HsEstimate {
    fn exact(norm_sq: f64) -> Self {
        HsEstimate {
            norm: norm_sq.sqrt(),
            norm_sq,
            std_err_sq: 0.0,
            probes: 0,
            seed: None,
        }
    }
}

/// ‖P_σ op P_τ‖_F (or ‖op‖_F without a block). Dense operators are evaluated
/// exactly; matrix-free ones with the stochastic estimator.
pub fn hs_norm(
    op: &GridOperator,
    block: Option<(Sign, Sign)>,
    opts: StochasticOptions,
) -> Result<HsEstimate> {
    match &op.repr {
        OperatorRepr::Dense(m) => {
            let nsq = match block {
                None => m.norm_l2().powi(2),
                Some((l, r)) => {
                    let p = project(op, l, r);
                    p.matrix().expect("dense projection").norm_l2().powi(2)
                }
            };
            Ok(HsEstimate::exact(nsq))
        }
        OperatorRepr::MatrixFree(_) => hs_norm_stochastic(op, block, opts),
    }
}

/// Hutchinson-type estimator: E‖A z‖² = ‖A‖²_F for complex standard Gaussian z.
/// Probe k draws from its own ChaCha stream seeded by the k-th output of a
/// master ChaCha stream, so results do not depend on the thread count.
pub fn hs_norm_stochastic(
    op: &GridOperator,
    block: Option<(Sign, Sign)>,
    opts: StochasticOptions,
) -> Result<HsEstimate> {
    if opts.probes < 2 {
        return Err(Error::TooFewProbes(opts.probes));
    }
    let target = match block {
        None => op.clone(),
        Some((l, r)) => project(op, l, r),
    };
    let mut master = ChaCha8Rng::seed_from_u64(opts.seed);
    let seeds: Vec<u64> = (0..opts.probes).map(|_| master.next_u64()).collect();
    let n = op.dim();
    let samples = ordered_map(opts.probes, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds[k]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z: Vec<C64> = (0..n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                C64::new(re * h, im * h)
            })
            .collect();
        target.apply(&z).iter().map(|v| v.norm_sqr()).sum::<f64>()
    });
    let k = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / k;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(HsEstimate {
        norm: mean.max(0.0).sqrt(),
        norm_sq: mean,
        std_err_sq: (var / k).sqrt(),
        probes: opts.probes,
        seed: Some(opts.seed),
    })
}

/// Block-diagonal operator from one 4×4 matrix per mode.
pub fn block_diagonal(space: &Arc<Space>, blocks: &[SpinorMatrix]) -> GridOperator {
    let n = space.dim();
    let mut m = Matrix::zeros(n, n);
    for (mode, b) in blocks.iter().enumerate() {
        for i in 0..4 {
            for j in 0..4 {
                m.write(4 * mode + i, 4 * mode + j, to_f(b.get(i, j)));
            }
        }
    }
    GridOperator::dense(space, m).with_parity(Parity::Even)
}

/// Left-multiplies a dense matrix by a block-diagonal operator in O(N²).
pub(crate) fn block_left_mul(blocks: &[SpinorMatrix], m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for j in 0..m.ncols() {
        let col = out.col_as_slice_mut(j);
        for (mode, chunk) in col.chunks_exact_mut(4).enumerate() {
            let v = [
                to_n(chunk[0]),
                to_n(chunk[1]),
                to_n(chunk[2]),
                to_n(chunk[3]),
            ];
            let w = blocks[mode].apply(&v);
            for s in 0..4 {
                chunk[s] = to_f(w[s]);
            }
        }
    }
    out
}

/// Right-multiplies a dense matrix by a block-diagonal operator in O(N²).
pub(crate) fn block_right_mul(m: &Matrix, blocks: &[SpinorMatrix]) -> Matrix {
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for (mode, b) in blocks.iter().enumerate() {
        for s in 0..4 {
            for r in 0..4 {
                let w = to_f(b.get(r, s));
                if w == c64::new(0.0, 0.0) {
                    continue;
                }
                let src = m.col_as_slice(4 * mode + r).to_vec();
                let dst = out.col_as_slice_mut(4 * mode + s);
                for (d, v) in dst.iter_mut().zip(src.iter()) {
                    *d += *v * w;
                }
            }
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use rand::Rng;

    pub(crate) fn small_space(n: usize) -> Arc<Space> {
        let g = Grid::build(&GridSpec::new(1, n, 6.0)).unwrap();
        Space::new(g, PhysicsParams::new(1.0, 1.0)).unwrap()
    }

    pub(crate) fn random_matrix(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, n, |_, _| {
            c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn max_diff(a: &Matrix, b: &Matrix) -> f64 {
        let mut d = 0.0_f64;
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                d = d.max((to_n(a.read(i, j)) - to_n(b.read(i, j))).norm());
            }
        }
        d
    }

    #[test]
    fn identity_splits_into_even_only() {
        let s = small_space(8);
        let (ev, odd) = parity_split(&GridOperator::identity(&s));
        assert!(max_diff(ev.matrix().unwrap(), &Matrix::identity(32, 32)) < 1e-14);
        assert!(odd.matrix().unwrap().norm_l2() < 1e-14);
    }

    #[test]
    fn random_split_recombines() {
        let s = small_space(8);
        let a = GridOperator::dense(&s, random_matrix(32, 1));
        let (ev, odd) = parity_split(&a);
        let sum = ev.add(&odd);
        assert!(max_diff(sum.matrix().unwrap(), a.matrix().unwrap()) < 1e-14);
        for (l, r) in [(Sign::Plus, Sign::Minus), (Sign::Minus, Sign::Plus)] {
            assert!(project(&ev, l, r).matrix().unwrap().norm_l2() < 1e-12);
            assert!(project(&odd, l, l).matrix().unwrap().norm_l2() < 1e-12);
            assert!(project(&odd, r, r).matrix().unwrap().norm_l2() < 1e-12);
        }
        // block norms decompose the odd part
        let o = hs_norm(
            &a,
            Some((Sign::Plus, Sign::Minus)),
            StochasticOptions::default(),
        )
        .unwrap();
        let p = hs_norm(
            &a,
            Some((Sign::Minus, Sign::Plus)),
            StochasticOptions::default(),
        )
        .unwrap();
        let total = hs_norm(&odd, None, StochasticOptions::default()).unwrap();
        assert!((o.norm_sq + p.norm_sq - total.norm_sq).abs() < 1e-10 * total.norm_sq);
    }

    #[test]
    fn hs_norm_examples() {
        let s = small_space(8);
        let id = GridOperator::identity(&s);
        let h = hs_norm(&id, None, StochasticOptions::default()).unwrap();
        assert!((h.norm - (32f64).sqrt()).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u: Vec<C64> = (0..32).map(|_| C64::new(rng.gen(), rng.gen())).collect();
        let v: Vec<C64> = (0..32).map(|_| C64::new(rng.gen(), rng.gen())).collect();
        let m = Matrix::from_fn(32, 32, |i, j| to_f(u[i] * v[j].conj()));
        let h = hs_norm(
            &GridOperator::dense(&s, m),
            None,
            StochasticOptions::default(),
        )
        .unwrap();
        let nu = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((h.norm - nu * nv).abs() < 1e-12 * nu * nv);
    }

    #[test]
    fn stochastic_estimator_requires_two_probes() {
        let s = small_space(8);
        let op = GridOperator::identity(&s);
        let err =
            hs_norm_stochastic(&op, None, StochasticOptions { probes: 1, seed: 0 }).unwrap_err();
        assert!(matches!(err, Error::TooFewProbes(1)));
    }

    #[test]
    fn stochastic_matches_dense_within_three_sigma() {
        let s = small_space(128);
        assert_eq!(s.dim(), 512);
        let dense = GridOperator::dense(&s, random_matrix(512, 11));
        let mf =
            GridOperator::matrix_free(&s, Arc::new(DenseApplier(dense.matrix().unwrap().clone())));
        for block in [None, Some((Sign::Plus, Sign::Minus))] {
            let exact = hs_norm(&dense, block, StochasticOptions::default()).unwrap();
            let est = hs_norm(
                &mf,
                block,
                StochasticOptions {
                    probes: 64,
                    seed: 42,
                },
            )
            .unwrap();
            assert!(est.std_err_sq > 0.0);
            assert!(
                (est.norm_sq - exact.norm_sq).abs() <= 3.0 * est.std_err_sq,
                "{est:?} vs {exact:?}"
            );
            let again = hs_norm(
                &mf,
                block,
                StochasticOptions {
                    probes: 64,
                    seed: 42,
                },
            )
            .unwrap();
            assert_eq!(est, again);
        }
    }

    struct DenseApplier(Matrix);
    impl LinearApplier for DenseApplier {
        fn apply(&self, x: &[C64]) -> Vec<C64> {
            dense_apply(&self.0, x, false)
        }
        fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
            dense_apply(&self.0, x, true)
        }
    }

    #[test]
    fn matrix_free_wrappers_agree_with_dense() {
        let s = small_space(8);
        let a = GridOperator::dense(&s, random_matrix(32, 2));
        let b = GridOperator::dense(&s, random_matrix(32, 3));
        let amf =
            GridOperator::matrix_free(&s, Arc::new(DenseApplier(a.matrix().unwrap().clone())));
        let bmf =
            GridOperator::matrix_free(&s, Arc::new(DenseApplier(b.matrix().unwrap().clone())));
        let pairs = [
            (a.compose(&b), amf.compose(&bmf)),
            (
                a.combine(C64::new(0.5, 1.0), &b, C64::new(-2.0, 0.0)),
                amf.combine(C64::new(0.5, 1.0), &bmf, C64::new(-2.0, 0.0)),
            ),
            (
                project(&a, Sign::Plus, Sign::Minus),
                project(&amf, Sign::Plus, Sign::Minus),
            ),
            (a.adjoint(), amf.adjoint()),
            (a.adjoint().adjoint(), amf.adjoint().adjoint()),
        ];
        for (d, m) in pairs {
            let md = m.to_matrix().unwrap();
            assert!(max_diff(d.matrix().unwrap(), &md) < 1e-12);
        }
    }

    #[test]
    fn exp_of_zero_is_identity_and_exp_is_unitary() {
        let s = small_space(8);
        let z = GridOperator::zero(&s);
        let e = exp_skew(&z).unwrap();
        assert!(max_diff(e.matrix().unwrap(), &Matrix::identity(32, 32)) < 1e-14);
        let r = random_matrix(32, 4);
        let q = Matrix::from_fn(32, 32, |i, j| {
            (r.read(i, j) - r.read(j, i).conj()) * c64::new(0.3, 0.0)
        });
        let qo = GridOperator::dense(&s, q.clone());
        let e = exp_skew(&qo).unwrap();
        assert!(e.unitarity_defect().unwrap() < 1e-9);
        let minus = exp_skew(&qo.scale(C64::new(-1.0, 0.0))).unwrap();
        let prod = e.compose(&minus);
        assert!(max_diff(prod.matrix().unwrap(), &Matrix::identity(32, 32)) < 1e-9);
        // Taylor series oracle
        let mut term = Matrix::identity(32, 32);
        let mut sum = Matrix::identity(32, 32);
        for k in 1..60 {
            term = &term * &q;
            let inv = c64::new(1.0 / k as f64, 0.0);
            term = Matrix::from_fn(32, 32, |i, j| term.read(i, j) * inv);
            sum = Matrix::from_fn(32, 32, |i, j| sum.read(i, j) + term.read(i, j));
        }
        assert!(max_diff(e.matrix().unwrap(), &sum) < 1e-10);
    }

    #[test]
    fn exp_rejects_non_skew_input() {
        let s = small_space(8);
        let a = GridOperator::dense(&s, random_matrix(32, 9));
        assert!(matches!(exp_skew(&a), Err(Error::NotSkew(_))));
    }

    #[test]
    fn block_multiplication_matches_dense_product() {
        let s = small_space(8);
        let blocks: Vec<SpinorMatrix> = (0..8)
            .map(|m| spinor::free_phase(s.grid().momentum(m), 1.0, 0.3))
            .collect();
        let bd = block_diagonal(&s, &blocks);
        let a = random_matrix(32, 8);
        let want_l = bd.matrix().unwrap() * &a;
        let want_r = &a * bd.matrix().unwrap();
        assert!(max_diff(&block_left_mul(&blocks, &a), &want_l) < 1e-13);
        assert!(max_diff(&block_right_mul(&a, &blocks), &want_r) < 1e-13);
    }

    #[test]
    fn eigenbasis_is_orthonormal_and_sorted() {
        let s = small_space(8);
        for mode in 0..8 {
            let b = s.eigenbasis(mode);
            let e = s.energy(mode);
            let h = spinor::free_hamiltonian(s.grid().momentum(mode), 1.0);
            for (k, v) in b.iter().enumerate() {
                let hv = h.apply(v);
                let lam = if k < 2 { -e } else { e };
                for i in 0..4 {
                    assert!((hv[i] - v[i] * lam).norm() < 1e-12);
                }
            }
        }
    }
}
