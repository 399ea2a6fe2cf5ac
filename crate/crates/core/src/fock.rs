//! Fermionic Fock space over a finite window of one-particle modes.
//!
//! Modes carry integer labels −K, …, L. Labels below zero are the negative
//! energy states filled in the vacuum. Basis forms are occupation sets
//! stored as bit masks, wedge factors in ascending label order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container::MatrixContainer;
use crate::error::{Error, Result};
use crate::{c64, to_n, Matrix, C64};

/// Largest window handled with 64-bit occupation masks.
pub const MAX_MODES: usize = 63;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationWindow {
    /// Number of negative modes, labels −K..=−1.
    pub negative: usize,
    /// Largest nonnegative label L; labels 0..=L.
    pub positive_max: usize,
}

impl TruncationWindow {
    pub fn new(negative: usize, positive_max: usize) -> Result<Self> {
        let w = TruncationWindow {
            negative,
            positive_max,
        };
        if w.size() > MAX_MODES {
            return Err(Error::spec("window", format!("at most {MAX_MODES} modes")));
        }
        Ok(w)
    }

    pub fn size(&self) -> usize {
        self.negative + self.positive_max + 1
    }

    pub fn label(&self, bit: usize) -> i64 {
        bit as i64 - self.negative as i64
    }

    pub fn bit(&self, label: i64) -> Option<usize> {
        let b = label + self.negative as i64;
        (b >= 0 && (b as usize) < self.size()).then_some(b as usize)
    }

    pub fn vacuum(&self) -> FockBasisElement {
        FockBasisElement {
            mask: (1u64 << self.negative) - 1,
        }
    }

    /// Window coefficients c = B*χ of an ambient vector; `basis` holds the
    /// window modes as orthonormal columns in label order.
    pub fn coefficients(&self, basis: &Matrix, chi: &[C64], tol: f64) -> Result<Vec<C64>> {
        if basis.ncols() != self.size() || basis.nrows() != chi.len() {
            return Err(Error::DimensionMismatch(
                "basis does not match window or vector".into(),
            ));
        }
        let c: Vec<C64> = (0..basis.ncols())
            .map(|j| {
                (0..basis.nrows())
                    .map(|i| to_n(basis.read(i, j)).conj() * chi[i])
                    .sum()
            })
            .collect();
        let residual: f64 = (0..basis.nrows())
            .map(|i| {
                let back: C64 = (0..basis.ncols())
                    .map(|j| to_n(basis.read(i, j)) * c[j])
                    .sum();
                (chi[i] - back).norm_sqr()
            })
            .sum::<f64>()
            .sqrt();
        if residual > tol {
            return Err(Error::OutsideWindow(residual));
        }
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FockBasisElement {
    pub mask: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HoleParticle {
    pub particles: Vec<i64>,
    pub holes: Vec<i64>,
    pub charge: i64,
}

impl FockBasisElement {
    pub fn from_labels(window: &TruncationWindow, labels: &[i64]) -> Result<Self> {
        let mut mask = 0u64;
        for &l in labels {
            let b = window
                .bit(l)
                .ok_or_else(|| Error::spec("labels", format!("{l} outside window")))?;
            mask |= 1 << b;
        }
        Ok(FockBasisElement { mask })
    }

    pub fn labels(&self, window: &TruncationWindow) -> Vec<i64> {
        (0..window.size())
            .filter(|b| self.mask >> b & 1 == 1)
            .map(|b| window.label(b))
            .collect()
    }

    pub fn is_occupied(&self, bit: usize) -> bool {
        self.mask >> bit & 1 == 1
    }

    pub fn charge(&self, window: &TruncationWindow) -> i64 {
        self.mask.count_ones() as i64 - window.negative as i64
    }
}

/// Occupied nonnegative labels are particles, empty negative labels holes.
pub fn hole_particle(form: &FockBasisElement, window: &TruncationWindow) -> HoleParticle {
    let particles: Vec<i64> = (window.negative..window.size())
        .filter(|&b| form.is_occupied(b))
        .map(|b| window.label(b))
        .collect();
    let holes: Vec<i64> = (0..window.negative)
        .filter(|&b| !form.is_occupied(b))
        .map(|b| window.label(b))
        .collect();
    HoleParticle {
        charge: particles.len() as i64 - holes.len() as i64,
        particles,
        holes,
    }
}

/// Inverse of [`hole_particle`].
pub fn from_hole_particle(
    hp: &HoleParticle,
    window: &TruncationWindow,
) -> Result<FockBasisElement> {
    let mut form = window.vacuum();
    for &h in &hp.holes {
        match window.bit(h) {
            Some(b) if h < 0 => form.mask &= !(1 << b),
            _ => {
                return Err(Error::spec(
                    "holes",
                    format!("{h} is not a negative window label"),
                ))
            }
        }
    }
    for &p in &hp.particles {
        match window.bit(p) {
            Some(b) if p >= 0 => form.mask |= 1 << b,
            _ => {
                return Err(Error::spec(
                    "particles",
                    format!("{p} is not a nonnegative window label"),
                ))
            }
        }
    }
    Ok(form)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    pub window: TruncationWindow,
    pub amplitudes: BTreeMap<FockBasisElement, C64>,
}

impl FockVector {
    pub fn zero(window: TruncationWindow) -> Self {
        FockVector {
            window,
            amplitudes: BTreeMap::new(),
        }
    }

    pub fn basis(window: TruncationWindow, form: FockBasisElement) -> Self {
        let mut v = Self::zero(window);
        v.amplitudes.insert(form, C64::new(1.0, 0.0));
        v
    }

    pub fn vacuum(window: TruncationWindow) -> Self {
        Self::basis(window, window.vacuum())
    }

    fn add(&mut self, form: FockBasisElement, a: C64) {
        *self.amplitudes.entry(form).or_insert(C64::new(0.0, 0.0)) += a;
    }

    pub fn inner(&self, other: &FockVector) -> C64 {
        self.amplitudes
            .iter()
            .filter_map(|(k, a)| other.amplitudes.get(k).map(|b| a.conj() * b))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .values()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Charge shared by all nonzero components, if any.
    pub fn charge(&self) -> Option<i64> {
        let mut it = self
            .amplitudes
            .iter()
            .filter(|(_, a)| a.norm() > 0.0)
            .map(|(k, _)| k.charge(&self.window));
        let first = it.next()?;
        it.all(|c| c == first).then_some(first)
    }

    /// Dense amplitude column over all 2^size masks.
    pub fn to_dense(&self) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); 1 << self.window.size()];
        for (k, a) in &self.amplitudes {
            v[k.mask as usize] = *a;
        }
        v
    }

    pub fn to_container(&self) -> MatrixContainer {
        let d = self.to_dense();
        let m = Matrix::from_fn(d.len(), 1, |i, _| c64::new(d[i].re, d[i].im));
        MatrixContainer::from_matrix(&m, json!({"type": "fock_vector", "window": self.window}))
    }
}

fn check_chi(window: &TruncationWindow, chi: &[C64]) -> Result<()> {
    if chi.len() != window.size() {
        return Err(Error::DimensionMismatch(format!(
            "χ has {} coefficients, window has {} modes",
            chi.len(),
            window.size()
        )));
    }
    Ok(())
}

/// Sign of inserting or removing mode `bit`: one factor −1 per occupied lower mode.
fn sign(form: FockBasisElement, bit: usize) -> f64 {
    if (form.mask & ((1u64 << bit) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// a*_χ = Σⱼ χⱼ a*_{φⱼ} with window coefficients χ.
pub fn car_create(chi: &[C64], state: &FockVector) -> Result<FockVector> {
    check_chi(&state.window, chi)?;
    let mut out = FockVector::zero(state.window);
    for (form, a) in &state.amplitudes {
        for (bit, c) in chi.iter().enumerate() {
            if *c == C64::new(0.0, 0.0) || form.is_occupied(bit) {
                continue;
            }
            let next = FockBasisElement {
                mask: form.mask | 1 << bit,
            };
            out.add(next, c * a * sign(*form, bit));
        }
    }
    Ok(out)
}

/// a_χ = Σⱼ conj(χⱼ) a_{φⱼ}, the adjoint of [`car_create`].
pub fn car_annihilate(chi: &[C64], state: &FockVector) -> Result<FockVector> {
    check_chi(&state.window, chi)?;
    let mut out = FockVector::zero(state.window);
    for (form, a) in &state.amplitudes {
        for (bit, c) in chi.iter().enumerate() {
            if *c == C64::new(0.0, 0.0) || !form.is_occupied(bit) {
                continue;
            }
            let next = FockBasisElement {
                mask: form.mask & !(1 << bit),
            };
            out.add(next, c.conj() * a * sign(*form, bit));
        }
    }
    Ok(out)
}

/// Dense matrix of a*_χ (or a_χ) on the full 2^size space, masks as indices.
pub fn car_matrix(window: &TruncationWindow, chi: &[C64], create: bool) -> Result<Matrix> {
    check_chi(window, chi)?;
    let dim = 1usize << window.size();
    let mut m = Matrix::zeros(dim, dim);
    for mask in 0..dim as u64 {
        let v = FockVector::basis(*window, FockBasisElement { mask });
        let w = if create {
            car_create(chi, &v)?
        } else {
            car_annihilate(chi, &v)?
        };
        for (k, a) in &w.amplitudes {
            m.write(k.mask as usize, mask as usize, c64::new(a.re, a.im));
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wedge::random_gaussian;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn w8() -> TruncationWindow {
        TruncationWindow::new(4, 3).unwrap()
    }

    fn unit(w: &TruncationWindow, bit: usize) -> Vec<C64> {
        (0..w.size())
            .map(|b| C64::new(if b == bit { 1.0 } else { 0.0 }, 0.0))
            .collect()
    }

    #[test]
    fn hole_particle_examples() {
        let w = w8();
        assert_eq!(
            hole_particle(&w.vacuum(), &w),
            HoleParticle {
                particles: vec![],
                holes: vec![],
                charge: 0
            }
        );
        let one = FockBasisElement {
            mask: w.vacuum().mask | 1 << w.bit(2).unwrap(),
        };
        assert_eq!(
            hole_particle(&one, &w),
            HoleParticle {
                particles: vec![2],
                holes: vec![],
                charge: 1
            }
        );
        let hole = FockBasisElement {
            mask: w.vacuum().mask & !(1 << w.bit(-3).unwrap()),
        };
        assert_eq!(
            hole_particle(&hole, &w),
            HoleParticle {
                particles: vec![],
                holes: vec![-3],
                charge: -1
            }
        );
        for mask in 0..1u64 << w.size() {
            let f = FockBasisElement { mask };
            let hp = hole_particle(&f, &w);
            assert_eq!(hp.charge, f.charge(&w));
            assert_eq!(from_hole_particle(&hp, &w).unwrap(), f);
        }
    }

    #[test]
    fn pauli_exclusion() {
        let w = w8();
        let v = FockVector::vacuum(w);
        let out = car_create(&unit(&w, 1), &v).unwrap();
        assert_eq!(out.norm(), 0.0);
        let once = car_create(&unit(&w, 6), &v).unwrap();
        assert_eq!(car_create(&unit(&w, 6), &once).unwrap().norm(), 0.0);
    }

    #[test]
    fn basis_anticommutators_are_exact() {
        let w = TruncationWindow::new(3, 2).unwrap();
        let dim = 1 << w.size();
        let ops: Vec<(Matrix, Matrix)> = (0..w.size())
            .map(|b| {
                (
                    car_matrix(&w, &unit(&w, b), false).unwrap(),
                    car_matrix(&w, &unit(&w, b), true).unwrap(),
                )
            })
            .collect();
        for i in 0..w.size() {
            for j in 0..w.size() {
                let ac = &ops[i].0 * &ops[j].1 + &ops[j].1 * &ops[i].0;
                let want = if i == j {
                    Matrix::identity(dim, dim)
                } else {
                    Matrix::zeros(dim, dim)
                };
                assert_eq!(ac, want);
                let cc = &ops[i].1 * &ops[j].1 + &ops[j].1 * &ops[i].1;
                assert_eq!(cc, Matrix::zeros(dim, dim));
            }
        }
    }

    #[test]
    fn creation_shifts_charge_and_has_norm_of_chi() {
        let w = w8();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let g = random_gaussian(&mut r, w.size(), 1);
        let chi: Vec<C64> = (0..w.size()).map(|i| to_n(g.read(i, 0))).collect();
        let out = car_create(&chi, &FockVector::vacuum(w)).unwrap();
        assert_eq!(out.charge(), Some(1));
        let back = car_annihilate(&chi, &FockVector::vacuum(w)).unwrap();
        assert_eq!(back.charge(), Some(-1));
        let a = car_matrix(&w, &chi, true).unwrap();
        let chi_norm = chi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let top = a.singular_values().into_iter().fold(0.0, f64::max);
        assert!((top - chi_norm).abs() < 1e-12);
    }

    #[test]
    fn window_coefficients() {
        let w = TruncationWindow::new(1, 1).unwrap();
        let basis = Matrix::from_fn(4, 3, |i, j| c64::new(if i == j { 1.0 } else { 0.0 }, 0.0));
        let inside = [
            C64::new(1.0, 0.0),
            C64::new(0.0, 2.0),
            C64::new(0.5, 0.0),
            C64::new(0.0, 0.0),
        ];
        assert_eq!(
            w.coefficients(&basis, &inside, 1e-12).unwrap(),
            inside[..3].to_vec()
        );
        let outside = [
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.1, 0.0),
        ];
        assert!(matches!(
            w.coefficients(&basis, &outside, 1e-6),
            Err(Error::OutsideWindow(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn random_anticommutators(seed in any::<u64>()) {
            let w = w8();
            let dim = 1 << w.size();
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = random_gaussian(&mut r, w.size(), 2);
            let chi: Vec<C64> = (0..w.size()).map(|i| to_n(g.read(i, 0))).collect();
            let chi2: Vec<C64> = (0..w.size()).map(|i| to_n(g.read(i, 1))).collect();
            let a = car_matrix(&w, &chi, false).unwrap();
            let b = car_matrix(&w, &chi2, true).unwrap();
            let ip: C64 = chi.iter().zip(&chi2).map(|(x, y)| x.conj() * y).sum();
            let ac = &a * &b + &b * &a;
            let want = faer::scale(c64::new(ip.re, ip.im)) * Matrix::identity(dim, dim);
            prop_assert!((ac - want).norm_l2() < 1e-12 * (dim as f64).sqrt() * ip.norm().max(1.0));
        }
    }
}
