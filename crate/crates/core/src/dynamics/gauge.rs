//! Gauge covariance e^{ie𝖸(t₁)}U^A(t₁,t₀) = U^{A~}(t₁,t₀)e^{ie𝖸(t₀)} with
//! 𝖸(t,x) = f(t)Y(x) and A~ = A − ∂𝖸.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{evolve, EvolutionConfig};
use crate::error::{Error, Result};
use crate::operator::{GridOperator, Space};
use crate::potential::{FieldSource, GaussianComponent};
use crate::{c64, Matrix, C64};

/// Scalar gauge profile Y(x).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScalarProfile {
    Gaussian(GaussianComponent),
    Constant(f64),
}

impl ScalarProfile {
    pub fn value(&self, dim: usize, x: [f64; 3]) -> f64 {
        match self {
            ScalarProfile::Gaussian(g) => g.value(dim, x),
            ScalarProfile::Constant(c) => *c,
        }
    }

    pub fn gradient(&self, dim: usize, x: [f64; 3]) -> [f64; 3] {
        match self {
            ScalarProfile::Gaussian(g) => g.gradient(dim, x),
            ScalarProfile::Constant(_) => [0.0; 3],
        }
    }
}

/// Time switching f(t).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Switching {
    /// 0 before `t_start`, sin²(π(t − t_start)/(2(t_end − t_start))) between, 1 after.
    SinSquared {
        t_start: f64,
        t_end: f64,
    },
    Constant(f64),
}

impl Switching {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Switching::Constant(c) => c,
            Switching::SinSquared { t_start, t_end } => {
                if t <= t_start {
                    0.0
                } else if t >= t_end {
                    1.0
                } else {
                    (0.5 * PI * (t - t_start) / (t_end - t_start)).sin().powi(2)
                }
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Switching::Constant(_) => 0.0,
            Switching::SinSquared { t_start, t_end } => {
                if t <= t_start || t >= t_end {
                    0.0
                } else {
                    let w = 0.5 * PI / (t_end - t_start);
                    w * (2.0 * w * (t - t_start)).sin()
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Switching::SinSquared { t_start, t_end } if !(t_end > t_start) => {
                Err(Error::spec("gauge.switching", "t_end must exceed t_start"))
            }
            Switching::Constant(c) if !c.is_finite() => {
                Err(Error::spec("gauge.switching", "must be finite"))
            }
            _ => Ok(()),
        }
    }
}

/// The transformed potential A~ = A − ∂𝖸 (lower indices).
pub struct GaugeTransformed<'a> {
    pub base: &'a dyn FieldSource,
    pub profile: &'a ScalarProfile,
    pub switching: Switching,
}

impl FieldSource for GaugeTransformed<'_> {
    fn lower_components(&self, dim: usize, t: f64, x: [f64; 3]) -> [f64; 4] {
        let mut a = self.base.lower_components(dim, t, x);
        let f = self.switching.value(t);
        let y = self.profile.value(dim, x);
        let g = self.profile.gradient(dim, x);
        a[0] -= self.switching.derivative(t) * y;
        for i in 0..3 {
            a[i + 1] -= f * g[i];
        }
        a
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeConfig {
    pub profile: ScalarProfile,
    pub switching: Switching,
    /// Step counts for the refinement study; the last one is tested.
    pub steps: Vec<usize>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaugeReport {
    pub steps: Vec<usize>,
    pub defects: Vec<f64>,
    /// defect(steps[k]) / defect(steps[k+1]).
    pub ratios: Vec<f64>,
    pub defect: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Same defect restricted to input modes with |p|∞ ≤ Λ/2, away from the
    /// momentum edge where the lattice symbol α·p wraps.
    pub interior_defects: Vec<f64>,
}

/// Position-space multiplication by e^{ie f Y(x)} as a dense operator.
pub fn gauge_phase(
    space: &Arc<Space>,
    profile: &ScalarProfile,
    f: f64,
    e: f64,
) -> Result<GridOperator> {
    space.check_dense()?;
    let grid = space.grid();
    let dim = grid.dim();
    let phases: Vec<C64> = grid
        .positions()
        .iter()
        .map(|x| C64::from_polar(1.0, e * f * profile.value(dim, *x)))
        .collect();
    let modes = space.n_modes();
    let n = space.dim();
    let mut m = Matrix::zeros(n, n);
    // one momentum mode at a time: to position, multiply, back
    for q in 0..modes {
        let mut buf = vec![C64::new(0.0, 0.0); modes];
        buf[q] = C64::new(1.0, 0.0);
        grid.to_position(&mut buf);
        for (b, ph) in buf.iter_mut().zip(&phases) {
            *b *= ph;
        }
        grid.to_momentum(&mut buf);
        for (p, v) in buf.iter().enumerate() {
            for s in 0..4 {
                m.write(4 * p + s, 4 * q + s, c64::new(v.re, v.im));
            }
        }
    }
    Ok(GridOperator::dense(space, m))
}

/// ‖e^{ie𝖸(t₁)}U^A − U^{A~}e^{ie𝖸(t₀)}‖_F for each configured step count,
/// with the method and interval taken from `cfg`.
pub fn gauge_covariance_check(
    src: &dyn FieldSource,
    gauge: &GaugeConfig,
    cfg: &EvolutionConfig,
    space: &Arc<Space>,
) -> Result<GaugeReport> {
    gauge.switching.validate()?;
    if gauge.steps.is_empty() {
        return Err(Error::spec("gauge.steps", "must not be empty"));
    }
    let e = space.params().e;
    let g0 = gauge_phase(space, &gauge.profile, gauge.switching.value(cfg.t0), e)?;
    let g1 = gauge_phase(space, &gauge.profile, gauge.switching.value(cfg.t1), e)?;
    let transformed = GaugeTransformed {
        base: src,
        profile: &gauge.profile,
        switching: gauge.switching,
    };
    let half = 0.5 * space.grid().cutoff();
    let interior: Vec<usize> = (0..space.n_modes())
        .filter(|&m| space.grid().momentum(m).iter().all(|p| p.abs() <= half))
        .flat_map(|m| 4 * m..4 * m + 4)
        .collect();
    let mut defects = Vec::with_capacity(gauge.steps.len());
    let mut interior_defects = Vec::with_capacity(gauge.steps.len());
    for &steps in &gauge.steps {
        let c = EvolutionConfig { steps, ..*cfg };
        let u = evolve(src, &c, space)?;
        let ut = evolve(&transformed, &c, space)?;
        let d = g1.compose(&u).sub(&ut.compose(&g0)).to_matrix()?;
        defects.push(d.norm_l2());
        let inner: f64 = interior
            .iter()
            .flat_map(|&j| d.col_as_slice(j).iter())
            .map(|z| z.re * z.re + z.im * z.im)
            .sum();
        interior_defects.push(inner.sqrt());
    }
    let ratios = defects.windows(2).map(|w| w[0] / w[1]).collect();
    let defect = *defects.last().expect("nonempty");
    Ok(GaugeReport {
        steps: gauge.steps.clone(),
        defects,
        ratios,
        defect,
        tolerance: gauge.tolerance,
        pass: defect <= gauge.tolerance,
        interior_defects,
    })
}
