//! Gaussian four-potentials with separable time envelopes.
//!
//! Components are stored with a lower index, A = (A₀, A₁, A₂, A₃) = (A₀, −Ā):
//!
//! ```text
//! A_μ(t, x) = g(t) · c_μ · exp(−|x − x_μ|² / (2σ_μ²))
//! Â_μ(t, k) = g(t) · c_μ · (σ_μ²/2π)^{d/2} · exp(−σ_μ²|k|²/2) · e^{−ik·x_μ}
//! ```
//!
//! with `Â(k) = (2π)^{−d} ∫ e^{−ikx} A(x) dx` in `d` spatial dimensions. In one
//! dimension only the first coordinate of each center is used.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, TimeQuadrature};
use crate::C64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianComponent {
    pub amplitude: f64,
    pub width: f64,
    #[serde(default)]
    pub center: [f64; 3],
}

impl GaussianComponent {
    pub fn zero() -> Self {
        GaussianComponent {
            amplitude: 0.0,
            width: 1.0,
            center: [0.0; 3],
        }
    }

    pub fn new(amplitude: f64, width: f64, center: [f64; 3]) -> Self {
        GaussianComponent {
            amplitude,
            width,
            center,
        }
    }

    /// Spatial profile at `x`.
    pub fn value(&self, dim: usize, x: [f64; 3]) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let r2: f64 = (0..dim).map(|k| (x[k] - self.center[k]).powi(2)).sum();
        self.amplitude * (-r2 / (2.0 * self.width * self.width)).exp()
    }

    /// Gradient of the spatial profile.
    pub fn gradient(&self, dim: usize, x: [f64; 3]) -> [f64; 3] {
        let v = self.value(dim, x);
        let s2 = self.width * self.width;
        let mut g = [0.0; 3];
        for k in 0..dim {
            g[k] = -(x[k] - self.center[k]) / s2 * v;
        }
        g
    }

    /// Closed-form transform of the spatial profile.
    pub fn fourier(&self, dim: usize, k: [f64; 3]) -> C64 {
        if self.amplitude == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let s2 = self.width * self.width;
        let k2: f64 = (0..dim).map(|a| k[a] * k[a]).sum();
        let kx: f64 = (0..dim).map(|a| k[a] * self.center[a]).sum();
        let mag =
            self.amplitude * (s2 / (2.0 * PI)).powf(dim as f64 / 2.0) * (-s2 * k2 / 2.0).exp();
        C64::from_polar(mag, -kx)
    }

    /// Prefactor C with |Ŝ(k)| = C·exp(−σ²|k|²/2).
    pub fn fourier_peak(&self, dim: usize) -> f64 {
        self.amplitude.abs() * (self.width * self.width / (2.0 * PI)).powf(dim as f64 / 2.0)
    }

    /// ‖Ŝ‖₁ over ℝ^d.
    pub fn fourier_l1(&self, _dim: usize) -> f64 {
        // C (2π/σ²)^{d/2} collapses to |c|
        self.amplitude.abs()
    }

    /// ‖Ŝ‖₂ over ℝ^d.
    pub fn fourier_l2(&self, dim: usize) -> f64 {
        self.fourier_peak(dim) * (PI / (self.width * self.width)).powf(dim as f64 / 4.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvelopeKind {
    SmoothBump,
    SinSquared,
    Constant,
}

/// Time envelope g(t), supported on [t_a, t_b] and zero outside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeEnvelope {
    pub kind: EnvelopeKind,
    pub t_a: f64,
    pub t_b: f64,
}

impl Default for TimeEnvelope {
    fn default() -> Self {
        TimeEnvelope {
            kind: EnvelopeKind::SinSquared,
            t_a: 0.0,
            t_b: 1.0,
        }
    }
}

impl TimeEnvelope {
    pub fn new(kind: EnvelopeKind, t_a: f64, t_b: f64) -> Self {
        TimeEnvelope { kind, t_a, t_b }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.derivative(t, 0)
    }

    /// d^order g / dt^order for order ≤ 2. The constant envelope has zero
    /// derivatives everywhere; its jumps at the support ends are not included.
    pub fn derivative(&self, t: f64, order: u32) -> f64 {
        let (a, b) = (self.t_a, self.t_b);
        if !(t >= a && t <= b) {
            return 0.0;
        }
        let len = b - a;
        match self.kind {
            EnvelopeKind::Constant => {
                if order == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            EnvelopeKind::SinSquared => {
                let w = PI / len;
                let s = w * (t - a);
                match order {
                    0 => s.sin().powi(2),
                    1 => w * (2.0 * s).sin(),
                    2 => 2.0 * w * w * (2.0 * s).cos(),
                    _ => unimplemented!("envelope derivatives above second order"),
                }
            }
            EnvelopeKind::SmoothBump => {
                let du = 2.0 / len;
                let u = du * (t - a) - 1.0;
                let one_m = 1.0 - u * u;
                if one_m <= 0.0 {
                    return 0.0;
                }
                let g = (1.0 - 1.0 / one_m).exp();
                let h1 = -2.0 * u / (one_m * one_m);
                let h2 = -2.0 / (one_m * one_m) - 8.0 * u * u / (one_m * one_m * one_m);
                match order {
                    0 => g,
                    1 => g * h1 * du,
                    2 => g * (h1 * h1 + h2) * du * du,
                    _ => unimplemented!("envelope derivatives above second order"),
                }
            }
        }
    }
}

/// Four Gaussian components (lower index) with a shared envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub components: [GaussianComponent; 4],
    #[serde(default)]
    pub envelope: TimeEnvelope,
}

impl PotentialSpec {
    pub fn zero() -> Self {
        PotentialSpec {
            components: std::array::from_fn(|_| GaussianComponent::zero()),
            envelope: TimeEnvelope::default(),
        }
    }

    /// Only A₀ nonzero.
    pub fn electric(amplitude: f64, width: f64, center: [f64; 3], envelope: TimeEnvelope) -> Self {
        let mut p = Self::zero();
        p.components[0] = GaussianComponent::new(amplitude, width, center);
        p.envelope = envelope;
        p
    }

    /// Only the lower-index component `mu ∈ 1..=3` nonzero.
    pub fn magnetic(
        mu: usize,
        amplitude: f64,
        width: f64,
        center: [f64; 3],
        envelope: TimeEnvelope,
    ) -> Self {
        assert!((1..=3).contains(&mu));
        let mut p = Self::zero();
        p.components[mu] = GaussianComponent::new(amplitude, width, center);
        p.envelope = envelope;
        p
    }

    pub fn validate(&self) -> Result<()> {
        for (mu, c) in self.components.iter().enumerate() {
            if !c.amplitude.is_finite() {
                return Err(Error::spec(
                    format!("potential.components[{mu}].amplitude"),
                    "must be finite",
                ));
            }
            if !(c.width.is_finite() && c.width > 0.0) {
                return Err(Error::spec(
                    format!("potential.components[{mu}].width"),
                    "must be positive",
                ));
            }
            if c.center.iter().any(|v| !v.is_finite()) {
                return Err(Error::spec(
                    format!("potential.components[{mu}].center"),
                    "must be finite",
                ));
            }
        }
        let e = &self.envelope;
        if !(e.t_a.is_finite() && e.t_b.is_finite() && e.t_b > e.t_a) {
            return Err(Error::spec(
                "potential.envelope",
                "support must satisfy t_a < t_b",
            ));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.amplitude == 0.0)
    }

    /// Index of the first nonzero magnetic component, if any.
    pub fn magnetic_component(&self) -> Option<usize> {
        (1..4).find(|&mu| self.components[mu].amplitude != 0.0)
    }

    /// Scales every amplitude.
    pub fn scaled(&self, s: f64) -> Self {
        let mut p = self.clone();
        p.components.iter_mut().for_each(|c| c.amplitude *= s);
        p
    }

    /// Â_μ(t, k) for all four components.
    pub fn fourier(&self, dim: usize, t: f64, k: [f64; 3]) -> [C64; 4] {
        let g = self.envelope.value(t);
        self.spatial_fourier(dim, k).map(|v| v * g)
    }

    /// Â_μ(k) with the envelope set to one.
    pub fn spatial_fourier(&self, dim: usize, k: [f64; 3]) -> [C64; 4] {
        std::array::from_fn(|mu| self.components[mu].fourier(dim, k))
    }

    /// A_μ(t, x), lower index.
    pub fn value(&self, dim: usize, t: f64, x: [f64; 3]) -> [f64; 4] {
        let g = self.envelope.value(t);
        std::array::from_fn(|mu| g * self.components[mu].value(dim, x))
    }
}

/// Â_μ(t, k) with the closed-form Gaussian transform.
pub fn potential_fourier(pot: &PotentialSpec, dim: usize, t: f64, k: [f64; 3]) -> [C64; 4] {
    pot.fourier(dim, t, k)
}

/// A real lower-index four-potential sampled in position space.
pub trait FieldSource: Sync {
    fn lower_components(&self, dim: usize, t: f64, x: [f64; 3]) -> [f64; 4];
}

impl FieldSource for PotentialSpec {
    fn lower_components(&self, dim: usize, t: f64, x: [f64; 3]) -> [f64; 4] {
        self.value(dim, t, x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassAEntry {
    pub mu: usize,
    /// Order of the time derivative.
    pub order: u32,
    /// Lebesgue exponent of the momentum norm.
    pub p: u32,
    pub value: f64,
    pub converged: bool,
}

/// Membership diagnostics for the admissible potential class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassAReport {
    pub entries: Vec<ClassAEntry>,
    pub all_finite: bool,
    /// Human-readable notes on quadrature failures.
    pub diagnostics: Vec<String>,
}

impl ClassAReport {
    pub fn get(&self, mu: usize, order: u32, p: u32) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.mu == mu && e.order == order && e.p == p)
            .map(|e| e.value)
    }
}

/// ∫ ‖∂_t^m Â_μ(t)‖_p dt for μ ∈ 0..4, m ∈ {0,1,2}, p ∈ {1,2}.
///
/// The momentum norms are closed form, so each entry is
/// `‖Ŝ_μ‖_p · ∫ |g^{(m)}(t)| dt` with the time integral taken over the envelope
/// support by adaptive Simpson.
pub fn class_a_norms(pot: &PotentialSpec, dim: usize, quad: TimeQuadrature) -> ClassAReport {
    let env = pot.envelope;
    let mut time = [(0.0, true); 3];
    for (order, slot) in time.iter_mut().enumerate() {
        let r = adaptive_simpson(
            |t| env.derivative(t, order as u32).abs(),
            env.t_a,
            env.t_b,
            quad,
        );
        *slot = (r.value, r.converged);
    }
    let mut entries = Vec::new();
    let mut diagnostics = Vec::new();
    for mu in 0..4 {
        let c = &pot.components[mu];
        for (order, &(tv, ok)) in time.iter().enumerate() {
            for p in [1u32, 2] {
                let spatial = if p == 1 {
                    c.fourier_l1(dim)
                } else {
                    c.fourier_l2(dim)
                };
                let value = spatial * tv;
                let converged = ok || spatial == 0.0;
                if !converged {
                    diagnostics.push(format!(
                        "mu={mu} order={order} p={p}: time quadrature did not reach tolerance {:e}",
                        quad.tolerance
                    ));
                }
                entries.push(ClassAEntry {
                    mu,
                    order: order as u32,
                    p,
                    value,
                    converged,
                });
            }
        }
    }
    let all_finite = entries.iter().all(|e| e.value.is_finite() && e.converged);
    ClassAReport {
        entries,
        all_finite,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, GridSpec};
    use proptest::prelude::*;

    fn sample_pot() -> PotentialSpec {
        PotentialSpec {
            components: [
                GaussianComponent::new(0.8, 0.9, [0.3, -0.2, 0.1]),
                GaussianComponent::new(-0.5, 1.3, [0.0, 0.4, 0.0]),
                GaussianComponent::new(0.0, 1.0, [0.0; 3]),
                GaussianComponent::new(0.2, 0.7, [-0.6, 0.0, 0.5]),
            ],
            envelope: TimeEnvelope::new(EnvelopeKind::SinSquared, 0.0, 2.0),
        }
    }

    #[test]
    fn zero_amplitude_gives_zero_transform() {
        let p = PotentialSpec::zero();
        assert!(p
            .fourier(3, 0.5, [0.3, 0.1, -2.0])
            .iter()
            .all(|v| *v == C64::new(0.0, 0.0)));
    }

    #[test]
    fn closed_form_matches_grid_fft() {
        for dim in [1usize, 3] {
            let n = if dim == 1 { 128 } else { 64 };
            let g = Grid::build(&GridSpec::new(dim, n, 24.0)).unwrap();
            let pot = sample_pot();
            for mu in [0, 1, 3] {
                let samples: Vec<C64> = g
                    .positions()
                    .iter()
                    .map(|x| C64::new(pot.components[mu].value(dim, *x), 0.0))
                    .collect();
                let fhat = g.fourier_samples(&samples);
                for (m, v) in fhat.iter().enumerate() {
                    let want = pot.components[mu].fourier(dim, g.momentum(m));
                    assert!(
                        (v - want).norm() < 1e-8,
                        "dim {dim} mu {mu} mode {m}: {v} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn parseval_on_grid() {
        let g = Grid::build(&GridSpec::new(1, 128, 24.0)).unwrap();
        let c = GaussianComponent::new(1.3, 0.8, [0.5, 0.0, 0.0]);
        let x2: f64 = g
            .positions()
            .iter()
            .map(|x| c.value(1, *x).powi(2))
            .sum::<f64>()
            * g.dx();
        let k2: f64 = g
            .momenta()
            .iter()
            .map(|k| c.fourier(1, *k).norm_sqr())
            .sum::<f64>()
            * g.dp();
        // ∫|A|² dx = (2π)^d ∫|Â|² dk
        assert!((x2 - 2.0 * PI * k2).abs() < 1e-8 * x2);
    }

    #[test]
    fn envelope_derivatives_match_finite_differences() {
        for kind in [EnvelopeKind::SinSquared, EnvelopeKind::SmoothBump] {
            let env = TimeEnvelope::new(kind, -0.5, 1.5);
            let h = 1e-5;
            for &t in &[-0.2, 0.1, 0.5, 0.77, 1.3] {
                let d1 = (env.value(t + h) - env.value(t - h)) / (2.0 * h);
                let d2 = (env.derivative(t + h, 1) - env.derivative(t - h, 1)) / (2.0 * h);
                assert!((d1 - env.derivative(t, 1)).abs() < 1e-7, "{kind:?} t={t}");
                assert!((d2 - env.derivative(t, 2)).abs() < 1e-6, "{kind:?} t={t}");
            }
            assert_eq!(env.value(-0.6), 0.0);
            assert_eq!(env.value(1.6), 0.0);
        }
    }

    #[test]
    fn constant_envelope_has_vanishing_derivative_norms() {
        let mut pot = sample_pot();
        pot.envelope = TimeEnvelope::new(EnvelopeKind::Constant, 0.0, 1.0);
        let r = class_a_norms(&pot, 3, TimeQuadrature::default());
        assert!(r.all_finite);
        for e in &r.entries {
            if e.order > 0 {
                assert!(e.value.abs() < 1e-14);
            }
        }
        assert!((r.get(0, 0, 1).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn sin_squared_class_a_entries() {
        let pot = PotentialSpec::electric(
            0.7,
            1.1,
            [0.0; 3],
            TimeEnvelope::new(EnvelopeKind::SinSquared, 0.0, 1.0),
        );
        let r = class_a_norms(&pot, 3, TimeQuadrature::default());
        assert!(r.all_finite);
        assert!(r.diagnostics.is_empty());
        // ∫ sin² = 1/2, ∫ |π sin 2πt| = 2, ∫ |2π² cos 2πt| = 4π
        assert!((r.get(0, 0, 1).unwrap() - 0.35).abs() < 1e-9);
        assert!((r.get(0, 1, 1).unwrap() - 1.4).abs() < 1e-9);
        assert!((r.get(0, 2, 1).unwrap() - 0.7 * 4.0 * PI).abs() < 1e-8);
        // ‖Ŝ‖₂² by direct radial quadrature
        let c = &pot.components[0];
        let l2sq = adaptive_simpson(
            |k| 4.0 * PI * k * k * c.fourier(3, [k, 0.0, 0.0]).norm_sqr(),
            0.0,
            40.0,
            TimeQuadrature::default(),
        );
        assert!((r.get(0, 0, 2).unwrap() - 0.5 * l2sq.value.sqrt()).abs() < 1e-9);
        assert_eq!(r.get(1, 2, 2), Some(0.0));
    }

    #[test]
    fn zero_potential_report_is_zero() {
        let r = class_a_norms(&PotentialSpec::zero(), 1, TimeQuadrature::default());
        assert!(r.entries.iter().all(|e| e.value == 0.0));
        assert_eq!(r.entries.len(), 24);
    }

    #[test]
    fn json_round_trip() {
        let p = sample_pot();
        let s = serde_json::to_string(&p).unwrap();
        let back: PotentialSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
    }

    proptest! {
        #[test]
        fn transform_is_conjugate_symmetric(k in prop::array::uniform3(-5.0..5.0f64), t in 0.0..2.0f64) {
            let pot = sample_pot();
            let a = pot.fourier(3, t, k);
            let b = pot.fourier(3, t, [-k[0], -k[1], -k[2]]);
            for mu in 0..4 {
                prop_assert!((a[mu] - b[mu].conj()).norm() <= 1e-15);
            }
        }
    }
}
