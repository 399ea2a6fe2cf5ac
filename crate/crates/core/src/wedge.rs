//! Dirac seas and the determinant inner product on formal wedge combinations.
//!
//! A sea is an `N × M` matrix Φ whose columns span the occupied one-particle
//! states; ⟨Φ, Ψ⟩ = det(Φ*Ψ). All seas compared with each other share `M`.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container::MatrixContainer;
use crate::error::{Error, Result};
use crate::operator::unitarity_defect;
use crate::{c64, to_f, to_n, Matrix, C64};

/// Relative unitarity defect accepted by [`left_op`].
pub const UNITARITY_TOLERANCE: f64 = 1e-8;

/// Determinant of a square matrix; 1 for the empty matrix.
pub fn det(m: &Matrix) -> C64 {
    if m.nrows() == 0 {
        return C64::new(1.0, 0.0);
    }
    let d = to_n(m.determinant());
    if d.is_finite() {
        d
    } else {
        det_gauss(m)
    }
}

/// Gaussian elimination with partial pivoting; exact zero pivots give 0.
fn det_gauss(m: &Matrix) -> C64 {
    let n = m.nrows();
    let mut a: Vec<Vec<C64>> = (0..n)
        .map(|i| (0..n).map(|j| to_n(m.read(i, j))).collect())
        .collect();
    let mut d = C64::new(1.0, 0.0);
    for k in 0..n {
        let p = (k..n)
            .max_by(|&x, &y| a[x][k].norm().total_cmp(&a[y][k].norm()))
            .expect("nonempty");
        if a[p][k].norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if p != k {
            a.swap(p, k);
            d = -d;
        }
        let piv = a[k][k];
        d *= piv;
        for i in k + 1..n {
            let f = a[i][k] / piv;
            for j in k..n {
                let v = a[k][j];
                a[i][j] -= f * v;
            }
        }
    }
    d
}

/// Singular values in descending order.
pub(crate) fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s = m.singular_values();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Thin SVD `m = W diag(s) V*` with `k = min(rows, cols)` columns.
fn svd(m: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let d = m.thin_svd();
    let s = d.s_diagonal();
    let s: Vec<f64> = (0..s.nrows()).map(|i| s.read(i).re).collect();
    (d.u().to_owned(), s, d.v().to_owned())
}

fn scale_cols(m: &Matrix, s: &[f64]) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        m.read(i, j) * c64::new(s[j], 0.0)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiracSea {
    columns: Matrix,
}

impl DiracSea {
    /// Requires `M ≤ N − 1`, so the range has a nontrivial complement.
    pub fn new(columns: Matrix) -> Result<Self> {
        if columns.ncols() + 1 > columns.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "sea has {} columns in a {}-dimensional space",
                columns.ncols(),
                columns.nrows()
            )));
        }
        Ok(DiracSea { columns })
    }

    /// Columns are the unit vectors of `modes`, in the given order.
    pub fn basis(n: usize, modes: &[usize]) -> Result<Self> {
        if let Some(&bad) = modes.iter().find(|&&k| k >= n) {
            return Err(Error::DimensionMismatch(format!(
                "mode {bad} outside 0..{n}"
            )));
        }
        Self::new(Matrix::from_fn(n, modes.len(), |i, j| {
            c64::new(if modes[j] == i { 1.0 } else { 0.0 }, 0.0)
        }))
    }

    /// A Haar-like random isometry from the polar factor of a Gaussian matrix.
    pub fn random<R: rand::Rng>(rng: &mut R, n: usize, m: usize) -> Result<Self> {
        let g = random_gaussian(rng, n, m);
        Ok(polar_sea(&Self::new(g)?)?.0)
    }

    pub fn columns(&self) -> &Matrix {
        &self.columns
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn index_dim(&self) -> usize {
        self.columns.ncols()
    }

    /// ‖Φ*Φ − 1‖_F.
    pub fn isometry_defect(&self) -> f64 {
        unitarity_defect(&self.columns)
    }

    /// Orthogonal projector ΦΦ* (for an isometric sea).
    pub fn projector(&self) -> Matrix {
        &self.columns * self.columns.adjoint()
    }

    pub fn to_container(&self) -> MatrixContainer {
        MatrixContainer::from_matrix(&self.columns, json!({"type": "dirac_sea"}))
    }

    pub fn from_container(c: &MatrixContainer) -> Result<Self> {
        Self::new(c.to_matrix())
    }
}

pub(crate) fn random_gaussian<R: rand::Rng>(rng: &mut R, n: usize, m: usize) -> Matrix {
    use rand_distr::{Distribution, StandardNormal};
    Matrix::from_fn(n, m, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c64::new(re, im)
    })
}

/// Haar-like random unitary from the polar factor of a Gaussian matrix.
pub fn random_unitary<R: rand::Rng>(rng: &mut R, m: usize) -> Matrix {
    let g = random_gaussian(rng, m, m);
    let (w, _, v) = svd(&g);
    &w * v.adjoint()
}

/// Random unitary with determinant one.
pub fn random_special_unitary<R: rand::Rng>(rng: &mut R, m: usize) -> Matrix {
    let u = random_unitary(rng, m);
    if m == 0 {
        return u;
    }
    let phase = C64::from_polar(1.0, -det(&u).arg() / m as f64);
    faer::scale(to_f(phase)) * &u
}

fn check_same_shape(a: &DiracSea, b: &DiracSea) -> Result<()> {
    if a.ambient_dim() != b.ambient_dim() || a.index_dim() != b.index_dim() {
        return Err(Error::DimensionMismatch(format!(
            "seas {}×{} and {}×{}",
            a.ambient_dim(),
            a.index_dim(),
            b.ambient_dim(),
            b.index_dim()
        )));
    }
    Ok(())
}

/// ⟨Φ, Ψ⟩ = det(Φ*Ψ).
pub fn sea_inner(phi: &DiracSea, psi: &DiracSea) -> Result<C64> {
    check_same_shape(phi, psi)?;
    Ok(det(&(phi.columns.adjoint() * &psi.columns)))
}

/// Ψ = ΥR with Υ isometric and R = sqrt(Ψ*Ψ).
pub fn polar_sea(psi: &DiracSea) -> Result<(DiracSea, Matrix)> {
    let m = psi.index_dim();
    if m == 0 {
        return Ok((psi.clone(), Matrix::zeros(0, 0)));
    }
    let (w, s, v) = svd(&psi.columns);
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    let smax = s.iter().copied().fold(0.0, f64::max);
    if !(smin > 1e-12 * smax.max(f64::MIN_POSITIVE)) {
        return Err(Error::RankDeficient(smin));
    }
    let upsilon = &w * v.adjoint();
    let r = &scale_cols(&v, &s) * v.adjoint();
    Ok((DiracSea { columns: upsilon }, r))
}

/// Formal finite linear combination of seas with a shared index dimension.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct WedgeVector {
    pub terms: Vec<(C64, DiracSea)>,
}

impl WedgeVector {
    pub fn single(sea: DiracSea) -> Self {
        WedgeVector {
            terms: vec![(C64::new(1.0, 0.0), sea)],
        }
    }

    pub fn push(&mut self, coefficient: C64, sea: DiracSea) -> Result<()> {
        if let Some((_, first)) = self.terms.first() {
            check_same_shape(first, &sea)?;
        }
        self.terms.push((coefficient, sea));
        Ok(())
    }

    /// Σᵢⱼ conj(aᵢ)bⱼ⟨Φᵢ, Ψⱼ⟩.
    pub fn inner(&self, other: &WedgeVector) -> Result<C64> {
        let mut s = C64::new(0.0, 0.0);
        for (a, phi) in &self.terms {
            for (b, psi) in &other.terms {
                s += a.conj() * b * sea_inner(phi, psi)?;
            }
        }
        Ok(s)
    }

    pub fn norm_sq(&self) -> Result<f64> {
        Ok(self.inner(self)?.re)
    }

    /// Gram matrix ⟨Φᵢ, Φⱼ⟩ of the terms, ignoring coefficients.
    pub fn gram(&self) -> Result<Matrix> {
        let k = self.terms.len();
        let mut g = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                g.write(i, j, to_f(sea_inner(&self.terms[i].1, &self.terms[j].1)?));
            }
        }
        Ok(g)
    }

    fn map_seas(&self, f: impl Fn(&Matrix) -> Matrix) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|(c, s)| Ok((*c, DiracSea::new(f(&s.columns))?)))
            .collect::<Result<_>>()?;
        Ok(WedgeVector { terms })
    }
}

/// L_U: Φ ↦ UΦ on every term. Rejects non-unitary U.
pub fn left_op(u: &Matrix, v: &WedgeVector) -> Result<WedgeVector> {
    let n = u.nrows();
    if u.ncols() != n || v.terms.first().is_some_and(|(_, s)| s.ambient_dim() != n) {
        return Err(Error::DimensionMismatch(
            "operator and sea sizes differ".into(),
        ));
    }
    let d = unitarity_defect(u);
    if d > UNITARITY_TOLERANCE * (n as f64).sqrt().max(1.0) {
        return Err(Error::NotUnitary(d));
    }
    v.map_seas(|c| u * c)
}

/// R_R: Φ ↦ ΦR on every term. Rejects singular R.
pub fn right_op(r: &Matrix, v: &WedgeVector) -> Result<WedgeVector> {
    if r.nrows() != r.ncols()
        || v.terms
            .first()
            .is_some_and(|(_, s)| s.index_dim() != r.nrows())
    {
        return Err(Error::DimensionMismatch("right factor must be M×M".into()));
    }
    let s = singular_values(r);
    if s.last().is_some_and(|&m| !(m > 1e-14 * s[0])) {
        return Err(Error::Singular);
    }
    v.map_seas(|c| c * r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrayZone {
    pub low: f64,
    pub high: f64,
}

impl Default for GrayZone {
    fn default() -> Self {
        GrayZone {
            low: 1e-8,
            high: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ChargeDetail {
    pub charge: i64,
    pub rank: usize,
    pub kernel: usize,
    pub cokernel: usize,
}

/// Index of the overlap map P_W: V → W, kernel minus cokernel dimension,
/// with rank fixed by singular values outside the gray zone.
pub fn relative_charge_detail(v: &DiracSea, w: &DiracSea, gray: GrayZone) -> Result<ChargeDetail> {
    if v.ambient_dim() != w.ambient_dim() {
        return Err(Error::DimensionMismatch(
            "seas live in different spaces".into(),
        ));
    }
    let overlap = w.columns.adjoint() * &v.columns;
    let s = singular_values(&overlap);
    if let Some(&bad) = s.iter().find(|&&x| x >= gray.low && x <= gray.high) {
        return Err(Error::GrayZone {
            value: bad,
            low: gray.low,
            high: gray.high,
        });
    }
    let rank = s.iter().filter(|&&x| x > gray.high).count();
    let kernel = v.index_dim() - rank;
    let cokernel = w.index_dim() - rank;
    Ok(ChargeDetail {
        charge: kernel as i64 - cokernel as i64,
        rank,
        kernel,
        cokernel,
    })
}

pub fn relative_charge(v: &DiracSea, w: &DiracSea, gray: GrayZone) -> Result<i64> {
    Ok(relative_charge_detail(v, w, gray)?.charge)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassDiagnostics {
    /// ‖P_{W⊥}P_V‖_{I₂}.
    pub hs_wperp_v: f64,
    /// ‖P_W P_{V⊥}‖_{I₂}.
    pub hs_w_vperp: f64,
    /// det(P_V P_W P_V|_V).
    pub det_vwv: C64,
    /// det(P_W P_V P_W|_W).
    pub det_wvw: C64,
}

/// Finite-section diagnostics for V ≈ W; both seas are orthonormalized first.
pub fn approx_class_diagnostics(v: &DiracSea, w: &DiracSea) -> Result<ClassDiagnostics> {
    if v.ambient_dim() != w.ambient_dim() {
        return Err(Error::DimensionMismatch(
            "seas live in different spaces".into(),
        ));
    }
    let (v, _) = polar_sea(v)?;
    let (w, _) = polar_sea(w)?;
    let wv = w.columns.adjoint() * &v.columns;
    let overlap_sq = wv.norm_l2().powi(2);
    let vwv = wv.adjoint() * &wv;
    let wvw = &wv * wv.adjoint();
    Ok(ClassDiagnostics {
        hs_wperp_v: (v.index_dim() as f64 - overlap_sq).max(0.0).sqrt(),
        hs_w_vperp: (w.index_dim() as f64 - overlap_sq).max(0.0).sqrt(),
        det_vwv: det(&vwv),
        det_wvw: det(&wvw),
    })
}

/// Lift data: R unitary with B = Φ′*UΦR Hermitian positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftRotation {
    pub r: Matrix,
    pub b: Matrix,
    pub sigma_min: f64,
}

impl LiftRotation {
    /// v ↦ R_R L_U v.
    pub fn apply(&self, u: &Matrix, v: &WedgeVector) -> Result<WedgeVector> {
        right_op(&self.r, &left_op(u, v)?)
    }

    /// Smallest eigenvalue of B.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.b.nrows() == 0 {
            return f64::INFINITY;
        }
        self.b
            .selfadjoint_eigenvalues(faer::Side::Lower)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Another valid lift R·S for unitary S commuting with B, e.g. a phase.
    pub fn rephased(&self, s: &Matrix) -> LiftRotation {
        LiftRotation {
            r: &self.r * s,
            b: &self.b * s,
            sigma_min: self.sigma_min,
        }
    }
}

/// Polar decomposition Φ′*UΦ = BQ and R = Q⁻¹.
///
/// Unequal index dimensions are the charge obstruction; an overlap with
/// smallest singular value below `threshold` is refused.
pub fn lift_rotation(
    u: &Matrix,
    phi: &DiracSea,
    phi_out: &DiracSea,
    threshold: f64,
) -> Result<LiftRotation> {
    if phi.index_dim() != phi_out.index_dim() {
        return Err(Error::RelativeChargeNonzero(
            phi.index_dim() as i64 - phi_out.index_dim() as i64,
        ));
    }
    if u.nrows() != phi_out.ambient_dim() || u.ncols() != phi.ambient_dim() {
        return Err(Error::DimensionMismatch(
            "operator and sea sizes differ".into(),
        ));
    }
    let m = phi.index_dim();
    if m == 0 {
        return Ok(LiftRotation {
            r: Matrix::zeros(0, 0),
            b: Matrix::zeros(0, 0),
            sigma_min: f64::INFINITY,
        });
    }
    let x = &(phi_out.columns.adjoint() * u) * &phi.columns;
    let (w, s, v) = svd(&x);
    let sigma_min = s.iter().copied().fold(f64::INFINITY, f64::min);
    if !(sigma_min > threshold) {
        return Err(Error::Conditioning {
            sigma_min,
            threshold,
        });
    }
    Ok(LiftRotation {
        r: &v * w.adjoint(),
        b: &scale_cols(&w, &s) * w.adjoint(),
        sigma_min,
    })
}

/// |⟨Ψ_out, R_R L_U Ψ_in⟩|² = |det(Ψ_out* U Ψ_in R)|².
pub fn transition_probability(
    out: &DiracSea,
    u: &Matrix,
    lift: &LiftRotation,
    inp: &DiracSea,
) -> Result<f64> {
    if out.index_dim() != inp.index_dim() || lift.r.nrows() != inp.index_dim() {
        return Err(Error::DimensionMismatch(
            "in, out and lift index dimensions differ".into(),
        ));
    }
    if u.nrows() != out.ambient_dim() || u.ncols() != inp.ambient_dim() {
        return Err(Error::DimensionMismatch(
            "operator and sea sizes differ".into(),
        ));
    }
    let a = &(&(out.columns.adjoint() * u) * &inp.columns) * &lift.r;
    Ok(det(&a).norm_sqr())
}

/// det(1 − |P_{W⊥}UP_V|²) restricted to V, for isometric V and W.
pub fn hartree_fock_probability(u: &Matrix, v: &DiracSea, w: &DiracSea) -> Result<f64> {
    if u.nrows() != w.ambient_dim() || u.ncols() != v.ambient_dim() {
        return Err(Error::DimensionMismatch(
            "operator and sea sizes differ".into(),
        ));
    }
    let uv = u * &v.columns;
    let a = &uv - &(&w.columns * &(w.columns.adjoint() * &uv));
    let m = v.index_dim();
    let g = Matrix::identity(m, m) - a.adjoint() * &a;
    Ok(det(&g).re)
}
