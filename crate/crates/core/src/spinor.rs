//! 4×4 Dirac algebra in the standard representation.
//!
//! Index conventions: `alpha[0..3]` holds α¹, α², α³; α⁰ is the identity.
//! The metric is g = diag(1, −1, −1, −1) and γ^μ = βα^μ.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// A 4×4 complex matrix, row-major.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct SpinorMatrix(pub [[C64; 4]; 4]);

impl SpinorMatrix {
    pub const fn zero() -> Self {
        SpinorMatrix([[ZERO; 4]; 4])
    }

    pub const fn identity() -> Self {
        let mut m = [[ZERO; 4]; 4];
        m[0][0] = ONE;
        m[1][1] = ONE;
        m[2][2] = ONE;
        m[3][3] = ONE;
        SpinorMatrix(m)
    }

    pub fn from_diag(d: [C64; 4]) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            m.0[i][i] = d[i];
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[i][j]
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2] + self.0[3][3]
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        m
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0_f64, |acc, v| acc.max(v.norm()))
    }

    pub fn frobenius(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .map(|v| v.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    #[inline]
    pub fn apply(&self, v: &[C64; 4]) -> [C64; 4] {
        let mut out = [ZERO; 4];
        for (i, o) in out.iter_mut().enumerate() {
            let r = &self.0[i];
            *o = r[0] * v[0] + r[1] * v[1] + r[2] * v[2] + r[3] * v[3];
        }
        out
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (*self - self.adjoint()).max_abs() <= tol
    }

    /// Eigenvalues of a Hermitian 4×4 matrix, ascending, via faer.
    pub fn hermitian_eigenvalues(&self) -> [f64; 4] {
        let m = faer::Mat::<faer::complex_native::c64>::from_fn(4, 4, |i, j| self.0[i][j].into());
        let evd = m.selfadjoint_eigendecomposition(faer::Side::Lower);
        let s = evd.s().column_vector();
        let mut out = [0.0; 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = s.read(i).re;
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out
    }
}

impl fmt::Debug for SpinorMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SpinorMatrix[")?;
        for r in &self.0 {
            writeln!(f, "  {:?}", r)?;
        }
        write!(f, "]")
    }
}

impl Add for SpinorMatrix {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut m = self;
        m += rhs;
        m
    }
}

impl AddAssign for SpinorMatrix {
    fn add_assign(&mut self, rhs: Self) {
        for i in 0..4 {
            for j in 0..4 {
                self.0[i][j] += rhs.0[i][j];
            }
        }
    }
}

impl Sub for SpinorMatrix {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut m = self;
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] -= rhs.0[i][j];
            }
        }
        m
    }
}

impl Neg for SpinorMatrix {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale_re(-1.0)
    }
}

impl Mul for SpinorMatrix {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = ZERO;
                for k in 0..4 {
                    acc += self.0[i][k] * rhs.0[k][j];
                }
                m.0[i][j] = acc;
            }
        }
        m
    }
}

/// Mass and coupling, ħ = c = 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsParams {
    pub m: f64,
    pub e: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        PhysicsParams { m: 1.0, e: 1.0 }
    }
}

impl PhysicsParams {
    pub fn new(m: f64, e: f64) -> Self {
        PhysicsParams { m, e }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m.is_finite() && self.m > 0.0) {
            return Err(Error::spec("params.m", "mass must be positive and finite"));
        }
        if !self.e.is_finite() {
            return Err(Error::spec("params.e", "coupling must be finite"));
        }
        Ok(())
    }
}

/// Representation tag for the Dirac matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Representation {
    #[default]
    DiracStandard,
}

impl FromStr for Representation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirac" | "standard" | "DiracStandard" => Ok(Representation::DiracStandard),
            other => Err(Error::UnsupportedRepresentation(other.to_string())),
        }
    }
}

/// α¹, α², α³ and β.
#[derive(Clone, Copy, Debug)]
pub struct DiracMatrices {
    pub alpha: [SpinorMatrix; 3],
    pub beta: SpinorMatrix,
}

impl DiracMatrices {
    /// α^μ with α⁰ = 1.
    pub fn alpha_mu(&self, mu: usize) -> SpinorMatrix {
        if mu == 0 {
            SpinorMatrix::identity()
        } else {
            self.alpha[mu - 1]
        }
    }

    /// γ^μ = βα^μ.
    pub fn gamma(&self, mu: usize) -> SpinorMatrix {
        self.beta * self.alpha_mu(mu)
    }
}

fn pauli(k: usize) -> [[C64; 2]; 2] {
    match k {
        0 => [[ZERO, ONE], [ONE, ZERO]],
        1 => [[ZERO, -I], [I, ZERO]],
        _ => [[ONE, ZERO], [ZERO, -ONE]],
    }
}

pub fn dirac_matrices(rep: Representation) -> DiracMatrices {
    match rep {
        Representation::DiracStandard => standard(),
    }
}

/// Standard-representation matrices; cached after the first call.
pub fn standard() -> DiracMatrices {
    static CACHE: std::sync::OnceLock<DiracMatrices> = std::sync::OnceLock::new();
    *CACHE.get_or_init(|| {
        let beta = SpinorMatrix::from_diag([ONE, ONE, -ONE, -ONE]);
        let alpha = [0, 1, 2].map(|k| {
            let s = pauli(k);
            let mut m = SpinorMatrix::zero();
            for i in 0..2 {
                for j in 0..2 {
                    m.0[i][j + 2] = s[i][j];
                    m.0[i + 2][j] = s[i][j];
                }
            }
            m
        });
        DiracMatrices { alpha, beta }
    })
}

/// Minkowski metric diag(1, −1, −1, −1).
pub fn metric(mu: usize, nu: usize) -> f64 {
    match (mu, nu) {
        (0, 0) => 1.0,
        (a, b) if a == b => -1.0,
        _ => 0.0,
    }
}

pub fn energy(p: [f64; 3], m: f64) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + m * m).sqrt()
}

/// H⁰(p) = α·p + βm.
pub fn free_hamiltonian(p: [f64; 3], m: f64) -> SpinorMatrix {
    let d = standard();
    let mut h = d.beta.scale_re(m);
    for (k, a) in d.alpha.iter().enumerate() {
        if p[k] != 0.0 {
            h += a.scale_re(p[k]);
        }
    }
    h
}

/// (P₊, P₋) with P± = ½(1 ± H⁰/E).
pub fn projectors(p: [f64; 3], m: f64) -> (SpinorMatrix, SpinorMatrix) {
    let e = energy(p, m);
    let h = free_hamiltonian(p, m).scale_re(0.5 / e);
    let half = SpinorMatrix::identity().scale_re(0.5);
    (half + h, half - h)
}

/// e^{−iτH⁰(p)} = e^{−iEτ}P₊ + e^{iEτ}P₋.
pub fn free_phase(p: [f64; 3], m: f64, tau: f64) -> SpinorMatrix {
    let e = energy(p, m);
    let (pp, pm) = projectors(p, m);
    let ph = C64::from_polar(1.0, -e * tau);
    pp.scale(ph) + pm.scale(ph.conj())
}

/// Result of [`gamma_trace_check`].
#[derive(Clone, Debug, Serialize)]
pub struct GammaTraceReport {
    pub max_deviation: f64,
    pub tuples_checked: usize,
}

/// Checks the two-, three- and four-γ trace identities over every index tuple.
pub fn gamma_trace_check() -> GammaTraceReport {
    let d = standard();
    let g: Vec<SpinorMatrix> = (0..4).map(|mu| d.gamma(mu)).collect();
    let mut dev = 0.0_f64;
    let mut count = 0;
    for a in 0..4 {
        for b in 0..4 {
            let t2 = (g[a] * g[b]).trace();
            dev = dev.max((t2 - C64::new(4.0 * metric(a, b), 0.0)).norm());
            count += 1;
            for c in 0..4 {
                let gab_c = g[a] * g[b] * g[c];
                dev = dev.max(gab_c.trace().norm());
                count += 1;
                for l in 0..4 {
                    let t4 = (gab_c * g[l]).trace();
                    let want = 4.0
                        * (metric(a, b) * metric(c, l) + metric(a, l) * metric(c, b)
                            - metric(a, c) * metric(b, l));
                    dev = dev.max((t4 - C64::new(want, 0.0)).norm());
                    count += 1;
                }
            }
        }
    }
    GammaTraceReport {
        max_deviation: dev,
        tuples_checked: count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn anti(a: SpinorMatrix, b: SpinorMatrix) -> SpinorMatrix {
        a * b + b * a
    }

    #[test]
    fn beta_squares_to_identity() {
        let d = standard();
        assert!((d.beta * d.beta - SpinorMatrix::identity()).max_abs() < 1e-14);
    }

    #[test]
    fn clifford_relations() {
        let d = standard();
        let one = SpinorMatrix::identity();
        for i in 0..3 {
            assert!(anti(d.alpha[i], d.beta).max_abs() < 1e-14);
            assert!(d.alpha[i].is_hermitian(0.0));
            assert!(d.alpha[i].trace().norm() < 1e-15);
            for j in 0..3 {
                let want = if i == j {
                    one.scale_re(2.0)
                } else {
                    SpinorMatrix::zero()
                };
                assert!((anti(d.alpha[i], d.alpha[j]) - want).max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn representation_tag_parsing() {
        assert_eq!(
            "dirac".parse::<Representation>().unwrap(),
            Representation::DiracStandard
        );
        assert!("weyl".parse::<Representation>().is_err());
    }

    #[test]
    fn energy_examples() {
        assert_eq!(energy([0.0; 3], 1.0), 1.0);
        assert!((energy([1.0, 1.0, 1.0], 1.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn hamiltonian_at_rest_is_mass_times_beta() {
        let h = free_hamiltonian([0.0; 3], 2.5);
        assert!((h - standard().beta.scale_re(2.5)).max_abs() == 0.0);
    }

    #[test]
    fn projectors_at_rest() {
        let (pp, pm) = projectors([0.0; 3], 1.0);
        let one = SpinorMatrix::identity();
        let b = standard().beta;
        assert!((pp - (one + b).scale_re(0.5)).max_abs() < 1e-15);
        assert!((pm - (one - b).scale_re(0.5)).max_abs() < 1e-15);
    }

    #[test]
    fn gamma_traces() {
        let d = standard();
        assert!(((d.gamma(0) * d.gamma(0)).trace() - 4.0).norm() < 1e-15);
        assert!((d.gamma(0) * d.gamma(1) * d.gamma(2)).trace().norm() < 1e-15);
        let t = (d.gamma(1) * d.gamma(1) * d.gamma(2) * d.gamma(2)).trace();
        assert!((t - 4.0).norm() < 1e-14);
        let r = gamma_trace_check();
        assert_eq!(r.tuples_checked, 16 + 64 + 256);
        assert!(r.max_deviation < 1e-13);
    }

    fn momentum() -> impl Strategy<Value = [f64; 3]> {
        prop::array::uniform3(-20.0..20.0f64)
    }

    proptest! {
        #[test]
        fn energy_is_even_and_bounded_below(p in momentum(), m in 0.1..5.0f64) {
            let e = energy(p, m);
            prop_assert!(e >= m);
            prop_assert_eq!(e, energy([-p[0], -p[1], -p[2]], m));
        }

        #[test]
        fn hamiltonian_squares_to_energy(p in momentum(), m in 0.1..5.0f64) {
            let h = free_hamiltonian(p, m);
            let e = energy(p, m);
            prop_assert!(h.is_hermitian(0.0));
            let d = h * h - SpinorMatrix::identity().scale_re(e * e);
            prop_assert!(d.max_abs() <= 1e-12 * e * e);
            let ev = h.hermitian_eigenvalues();
            for (k, want) in [-e, -e, e, e].iter().enumerate() {
                prop_assert!((ev[k] - want).abs() <= 1e-12 * e);
            }
        }

        #[test]
        fn projector_properties(p in momentum(), m in 0.1..5.0f64) {
            let (pp, pm) = projectors(p, m);
            let one = SpinorMatrix::identity();
            let e = energy(p, m);
            let h = free_hamiltonian(p, m);
            prop_assert!((pp * pp - pp).max_abs() <= 1e-12);
            prop_assert!((pm * pm - pm).max_abs() <= 1e-12);
            prop_assert!((pp + pm - one).max_abs() <= 1e-14);
            prop_assert!((pp * pm).max_abs() <= 1e-12);
            prop_assert!((h * pp - pp.scale_re(e)).max_abs() <= 1e-12 * e);
            prop_assert!((h * pm + pm.scale_re(e)).max_abs() <= 1e-12 * e);
            prop_assert!((pp.trace() - 2.0).norm() <= 1e-12);
        }

        #[test]
        fn free_phase_is_unitary(p in momentum(), m in 0.1..5.0f64, tau in -3.0..3.0f64) {
            let u = free_phase(p, m, tau);
            prop_assert!((u.adjoint() * u - SpinorMatrix::identity()).max_abs() <= 1e-13);
            let back = free_phase(p, m, -tau);
            prop_assert!((back * u - SpinorMatrix::identity()).max_abs() <= 1e-13);
        }
    }
}
