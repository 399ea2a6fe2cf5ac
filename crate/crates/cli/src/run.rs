//! One function per experiment kind.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use faer::complex_native::c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wedgefield::container::MatrixContainer;
use wedgefield::dynamics::{
    classify, cutoff_scan, dressed_propagator, dressed_sea, evolve, gauge_covariance_check,
    odd_hs_norm, pair_creation_probability, EvolutionConfig, Method, ScanConfig,
};
use wedgefield::field::{
    electric_qnorm_bounds, q_hs_kernel_sum, q_norm_analytic, KernelMode, QDomain, QNormQuadrature,
};
use wedgefield::fock::{car_create, car_matrix, FockVector, TruncationWindow};
use wedgefield::spinor::free_hamiltonian;
use wedgefield::wedge::{
    det, hartree_fock_probability, lift_rotation, polar_sea, random_special_unitary,
    random_unitary, relative_charge_detail, sea_inner, transition_probability, DiracSea, GrayZone,
    WedgeVector,
};
use wedgefield::{Grid, GridSpec, Matrix, Space, C64};

use crate::config::{config_hash, Experiment, LiftSection, ScenarioConfig};
use crate::error::CliResult;
use crate::output::{tolerance_table, Artifacts, FORMAT};

/// Flag-level settings that are not part of the scenario document.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
}

/// Runs `exp` on a parsed scenario. `doc` is the resolved JSON document used for hashing.
pub fn run(
    exp: Experiment,
    cfg: &ScenarioConfig,
    doc: &Value,
    opts: &RunOptions,
) -> CliResult<Artifacts> {
    cfg.validate(exp)?;
    if let Some(t) = opts.threads {
        wedgefield::set_threads(t);
    }
    let start = Instant::now();
    let (mut art, thresholds) = match exp {
        Experiment::Spectrum => spectrum(cfg)?,
        Experiment::Evolve => evolve_run(cfg)?,
        Experiment::Scan => scan(cfg)?,
        Experiment::Qnorm => qnorm(cfg)?,
        Experiment::Lift => lift(cfg)?,
        Experiment::Gauge => gauge(cfg)?,
        Experiment::WedgeSuite => wedge_suite(cfg)?,
    };
    let results = std::mem::take(&mut art.metadata);
    art.metadata = json!({
        "format": FORMAT,
        "tool": "wedgefield",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": exp.as_str(),
        "config_hash": config_hash(doc),
        "seed": cfg.seed,
        "threads": wedgefield::threads(),
        "dense_budget": cfg.budget().0,
        "csv_header": art.header(),
        "thresholds": thresholds,
        "tolerances": tolerance_table(),
        "wall_time": start.elapsed().as_secs_f64(),
        "results": results,
        "config": doc,
    });
    Ok(art)
}

type Outcome = (Artifacts, Value);

fn space(cfg: &ScenarioConfig, spec: &GridSpec) -> CliResult<Arc<Space>> {
    Ok(Space::with_budget(
        Grid::build(spec)?,
        cfg.physics,
        cfg.budget(),
    )?)
}

fn evolution(cfg: &ScenarioConfig) -> EvolutionConfig {
    cfg.evolution.expect("validated")
}

fn method_label(m: &Method) -> String {
    match m {
        Method::StrangSplit => "strang_split".into(),
        Method::DenseMidpointExp => "dense_midpoint_exp".into(),
        Method::BornSeries { order, nodes } => format!("born_series_o{order}_n{nodes}"),
    }
}

fn spectrum(cfg: &ScenarioConfig) -> CliResult<Outcome> {
    let grid = Grid::build(&cfg.grid)?;
    let m = cfg.physics.m;
    let mut csv = String::from("mode,px,py,pz,energy,eig_1,eig_2,eig_3,eig_4\n");
    let mut min_abs = f64::INFINITY;
    let mut pair_defect: f64 = 0.0;
    for (mode, p) in grid.momenta().iter().enumerate() {
        let ev = free_hamiltonian(*p, m).hermitian_eigenvalues();
        let e = wedgefield::spinor::energy(*p, m);
        min_abs = ev.iter().fold(min_abs, |a, v| a.min(v.abs()));
        pair_defect = pair_defect
            .max((ev[0] + e).abs())
            .max((ev[1] + e).abs())
            .max((ev[2] - e).abs())
            .max((ev[3] - e).abs());
        let _ = writeln!(
            csv,
            "{mode},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            p[0], p[1], p[2], e, ev[0], ev[1], ev[2], ev[3]
        );
    }
    let meta = json!({
        "modes": grid.n_modes(),
        "mass": m,
        "min_abs_eigenvalue": min_abs,
        "max_pair_defect": pair_defect,
        "cutoff": grid.cutoff(),
    });
    Ok((Artifacts::new(csv, meta), json!({})))
}

fn evolve_run(cfg: &ScenarioConfig) -> CliResult<Outcome> {
    let ev = evolution(cfg);
    let sp = space(cfg, &cfg.grid)?;
    sp.check_dense()?;
    let u = evolve(&cfg.potential, &ev, &sp)?.densified()?;
    let d = dressed_propagator(&cfg.potential, &ev, &sp)?;
    let row = json!({
        "unitarity_defect": u.unitarity_defect()?,
        "raw_offdiag_hs": odd_hs_norm(&u)?,
        "dressed_offdiag_hs": odd_hs_norm(&d)?,
        "pair_probability": pair_creation_probability(&u)?,
    });
    let mut csv = String::from(
        "method,t0,t1,steps,unitarity_defect,raw_offdiag_hs,dressed_offdiag_hs,pair_probability\n",
    );
    let _ = writeln!(
        csv,
        "{},{:.12e},{:.12e},{},{:.6e},{:.12e},{:.12e},{:.12e}",
        method_label(&ev.method),
        ev.t0,
        ev.t1,
        ev.steps,
        row["unitarity_defect"].as_f64().unwrap_or(f64::NAN),
        row["raw_offdiag_hs"].as_f64().unwrap_or(f64::NAN),
        row["dressed_offdiag_hs"].as_f64().unwrap_or(f64::NAN),
        row["pair_probability"].as_f64().unwrap_or(f64::NAN),
    );
    let mut art = Artifacts::new(csv, row);
    let label = json!({"name": "propagator", "t0": ev.t0, "t1": ev.t1, "steps": ev.steps, "method": method_label(&ev.method)});
    art.containers.push((
        "propagator.wfmx".into(),
        MatrixContainer::from_matrix(&u.to_matrix()?, label),
    ));
    Ok((art, json!({})))
}

fn scan(cfg: &ScenarioConfig) -> CliResult<Outcome> {
    let sc = cfg.scan.as_ref().expect("validated");
    let r = cutoff_scan(
        &cfg.potential,
        &cfg.grid,
        cfg.physics,
        cfg.budget(),
        sc,
        &evolution(cfg),
    )?;
    let thresholds = json!({ "classification": sc.threshold });
    Ok((Artifacts::new(r.to_csv(), r.metadata()), thresholds))
}

const QNORM_HEADER: &str =
    "cutoff,n,grid_qnorm_sq,analytic_qnorm_sq,analytic_std_err,electric_bound";

fn qnorm(cfg: &ScenarioConfig) -> CliResult<Outcome> {
    let q = cfg.qnorm.as_ref().expect("validated");
    let seed = cfg.seed.expect("validated");
    let ns = ScanConfig {
        axis: q.axis.clone(),
        threshold: q.threshold,
    }
    .grid_sizes(cfg.grid.box_length)?;
    let electric = cfg.potential.magnetic_component().is_none();
    let mut csv = format!("{QNORM_HEADER}\n");
    let mut grid_values = Vec::new();
    for n in ns {
        let sp = space(
            cfg,
            &GridSpec {
                n,
                ..cfg.grid.clone()
            },
        )?;
        let cutoff = sp.grid().cutoff();
        let g = q_hs_kernel_sum(&cfg.potential, q.time, &sp, KernelMode::Padded)?;
        let quad = QNormQuadrature {
            points: q.points,
            replicates: q.replicates,
            seed,
            domain: QDomain::Cube { cutoff },
        };
        let a = q_norm_analytic(&cfg.potential, cfg.grid.dim, q.time, cfg.physics, quad)?;
        let bound = if electric {
            format!(
                "{:.12e}",
                electric_qnorm_bounds(&cfg.potential, q.time, &sp)?.continuum
            )
        } else {
            String::new()
        };
        let _ = writeln!(
            csv,
            "{cutoff:.12e},{n},{g:.12e},{:.12e},{:.6e},{bound}",
            a.value, a.std_err
        );
        grid_values.push(g);
    }
    let meta = json!({
        "classification": { "grid_qnorm_sq": classify(&grid_values, q.threshold).as_str() },
        "electric": electric,
        "time": q.time,
    });
    Ok((
        Artifacts::new(csv, meta),
        json!({ "classification": q.threshold }),
    ))
}

fn gauge(cfg: &ScenarioConfig) -> CliResult<Outcome> {
    let g = cfg.gauge.as_ref().expect("validated");
    let ev = evolution(cfg);
    let sp = space(cfg, &cfg.grid)?;
    let r = gauge_covariance_check(&cfg.potential, g, &ev, &sp)?;
    let mut csv = String::from("steps,dt,defect,ratio,interior_defect\n");
    for (k, ((&s, d), di)) in r
        .steps
        .iter()
        .zip(&r.defects)
        .zip(&r.interior_defects)
        .enumerate()
    {
        let ratio = if k == 0 {
            String::new()
        } else {
            format!("{:.6e}", r.ratios[k - 1])
        };
        let _ = writeln!(
            csv,
            "{s},{:.12e},{d:.12e},{ratio},{di:.12e}",
            (ev.t1 - ev.t0) / s as f64
        );
    }
    let meta = json!({
        "defect": r.defect,
        "pass": r.pass,
        "observed_order": r.ratios.iter().map(|x| x.log2()).collect::<Vec<_>>(),
        "interior_defect": r.interior_defects.last(),
        "interior_observed_order": r.interior_defects.windows(2).map(|w| (w[0] / w[1]).log2()).collect::<Vec<_>>(),
    });
    Ok((
        Artifacts::new(csv, meta),
        json!({ "gauge_tolerance": g.tolerance }),
    ))
}

const LIFT_HEADER: &str = "rephasing,det_s_re,det_s_im,transition_probability,abs_difference";

fn lift(cfg: &ScenarioConfig) -> CliResult<Outcome> {
    let section: LiftSection = cfg.lift.clone().unwrap_or_default();
    let ev = evolution(cfg);
    let sp = space(cfg, &cfg.grid)?;
    sp.check_dense()?;
    let u = evolve(&cfg.potential, &ev, &sp)?.to_matrix()?;
    let phi = dressed_sea(&cfg.potential, ev.t0, &sp)?;
    let phi_out = dressed_sea(&cfg.potential, ev.t1, &sp)?;
    let l = lift_rotation(&u, &phi, &phi_out, section.threshold)?;
    let base = transition_probability(&phi_out, &u, &l, &phi)?;
    let hf = hartree_fock_probability(&u, &phi, &phi_out)?;
    let m = phi.index_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.expect("validated"));
    let mut csv = format!("{LIFT_HEADER}\n");
    let mut max_diff: f64 = 0.0;
    for k in 0..section.rephasings {
        let s = random_special_unitary(&mut rng, m);
        let d = det(&s);
        let p = transition_probability(&phi_out, &u, &l.rephased(&s), &phi)?;
        max_diff = max_diff.max((p - base).abs());
        let _ = writeln!(
            csv,
            "{k},{:.12e},{:.12e},{p:.15e},{:.6e}",
            d.re,
            d.im,
            (p - base).abs()
        );
    }
    let b_herm = (&l.b - l.b.adjoint()).norm_l2();
    let r_unit = (l.r.adjoint() * &l.r - Matrix::identity(m, m)).norm_l2();
    let meta = json!({
        "index_dim": m,
        "sigma_min": l.sigma_min,
        "b_min_eigenvalue": l.min_eigenvalue(),
        "b_hermitian_defect": b_herm,
        "r_unitarity_defect": r_unit,
        "transition_probability": base,
        "hartree_fock_probability": hf,
        "hartree_fock_difference": (hf - base).abs(),
        "max_rephasing_difference": max_diff,
    });
    let mut art = Artifacts::new(csv, meta);
    if section.write_seas {
        art.containers
            .push(("sea_in.wfmx".into(), phi.to_container()));
        art.containers
            .push(("sea_out.wfmx".into(), phi_out.to_container()));
        art.containers.push((
            "lift_r.wfmx".into(),
            MatrixContainer::from_matrix(&l.r, json!({"name": "R"})),
        ));
    }
    Ok((art, json!({ "lift_sigma_min": section.threshold })))
}

const WEDGE_HEADER: &str = "trial,n,m,inner_re,inner_im,conj_symmetry_defect,gram_scaling_defect,amplitude_law_defect,left_isometry_defect,polar_defect,transition_probability,hartree_fock_defect";

fn wedge_suite(cfg: &ScenarioConfig) -> CliResult<Outcome> {
    let w = cfg.wedge.clone().unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.expect("validated"));
    let mut csv = format!("{WEDGE_HEADER}\n");
    let mut worst = [0.0f64; 6];
    for trial in 0..w.trials {
        let m = rng.gen_range(1..=w.max_m);
        let n = rng.gen_range(m + 1..=w.max_n);
        let phi = DiracSea::random(&mut rng, n, m)?;
        let psi = DiracSea::random(&mut rng, n, m)?;
        let inner = sea_inner(&phi, &psi)?;
        let conj = (inner - sea_inner(&psi, &phi)?.conj()).norm();

        let r = invertible(&mut rng, m);
        let dr = det(&r);
        let pr = WedgeVector::single(phi.clone());
        let qr = WedgeVector::single(psi.clone());
        let rp = wedgefield::wedge::right_op(&r, &pr)?;
        let rq = wedgefield::wedge::right_op(&r, &qr)?;
        let gram = (rp.inner(&rq)? - dr.norm_sqr() * inner).norm() / dr.norm_sqr().max(1e-300);
        let amp = (qr.inner(&rp)? - dr * inner).norm() / dr.norm().max(1e-300);

        let u = random_unitary(&mut rng, n);
        let lp = wedgefield::wedge::left_op(&u, &pr)?;
        let lq = wedgefield::wedge::left_op(&u, &qr)?;
        let left = (lp.inner(&lq)? - inner).norm();

        let skewed = DiracSea::new(phi.columns() * &r)?;
        let (ups, rr) = polar_sea(&skewed)?;
        let polar = (ups.columns() * &rr - skewed.columns()).norm_l2();

        let target = DiracSea::new(
            &(&u * phi.columns())
                + &Matrix::from_fn(n, m, |i, j| psi.columns().read(i, j) * c64::new(0.3, 0.0)),
        )?;
        let (out, _) = polar_sea(&target)?;
        let l = lift_rotation(&u, &phi, &out, 1e-12)?;
        let tp = transition_probability(&out, &u, &l, &phi)?;
        let hf = (hartree_fock_probability(&u, &phi, &out)? - tp).abs();

        for (slot, v) in worst.iter_mut().zip([conj, gram, amp, left, polar, hf]) {
            *slot = slot.max(v);
        }
        let _ = writeln!(
            csv,
            "{trial},{n},{m},{:.15e},{:.15e},{conj:.6e},{gram:.6e},{amp:.6e},{left:.6e},{polar:.6e},{tp:.15e},{hf:.6e}",
            inner.re, inner.im
        );
    }
    let meta = json!({
        "max_defects": {
            "conj_symmetry": worst[0],
            "gram_scaling": worst[1],
            "amplitude_law": worst[2],
            "left_isometry": worst[3],
            "polar": worst[4],
            "hartree_fock": worst[5],
        },
        "charges": shifted_charges()?,
        "car": car_summary(w.window, &mut rng)?,
    });
    Ok((
        Artifacts::new(csv, meta),
        json!({ "gray_zone": GrayZone::default() }),
    ))
}

/// U₁·diag(d)·U₂ with d in [0.5, 2].
fn invertible(rng: &mut ChaCha8Rng, m: usize) -> Matrix {
    let u1 = random_unitary(rng, m);
    let u2 = random_unitary(rng, m);
    let d: Vec<f64> = (0..m).map(|_| rng.gen_range(0.5..2.0)).collect();
    let scaled = Matrix::from_fn(m, m, |i, j| u1.read(i, j) * c64::new(d[j], 0.0));
    &scaled * &u2
}

/// charge(Φ_c, Φ_0) for basis seas shifted by c in a 12-dimensional space.
fn shifted_charges() -> CliResult<Value> {
    let (n, k) = (12usize, 6i64);
    let sea = |c: i64| DiracSea::basis(n, &(0..(k - c) as usize).collect::<Vec<_>>());
    let v0 = sea(0)?;
    let mut out = Vec::new();
    for c in -3..=3 {
        let d = relative_charge_detail(&sea(c)?, &v0, GrayZone::default())?;
        out.push(
            json!({"shift": c, "charge": d.charge, "kernel": d.kernel, "cokernel": d.cokernel}),
        );
    }
    Ok(Value::Array(out))
}

/// Largest deviation of {a_χ, a*_χ′} from ⟨χ, χ′⟩·1 over basis and random pairs.
fn car_summary(window: (usize, usize), rng: &mut ChaCha8Rng) -> CliResult<Value> {
    let win = TruncationWindow::new(window.0, window.1)?;
    let size = win.size();
    let unit = |b: usize| -> Vec<C64> {
        (0..size)
            .map(|i| C64::new(if i == b { 1.0 } else { 0.0 }, 0.0))
            .collect()
    };
    let mut chis: Vec<Vec<C64>> = (0..size).map(unit).collect();
    for _ in 0..2 {
        chis.push(
            (0..size)
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
        );
    }
    let dim = 1usize << size;
    let mats: Vec<(Matrix, Matrix)> = chis
        .iter()
        .map(|c| Ok((car_matrix(&win, c, false)?, car_matrix(&win, c, true)?)))
        .collect::<wedgefield::Result<_>>()?;
    let mut worst: f64 = 0.0;
    for (i, ci) in chis.iter().enumerate() {
        for (j, cj) in chis.iter().enumerate() {
            let ip: C64 = ci.iter().zip(cj).map(|(a, b)| a.conj() * b).sum();
            let anti = &mats[i].0 * &mats[j].1 + &mats[j].1 * &mats[i].0;
            let target = Matrix::from_fn(dim, dim, |r, c| {
                if r == c {
                    c64::new(ip.re, ip.im)
                } else {
                    c64::new(0.0, 0.0)
                }
            });
            worst = worst.max((&anti - &target).norm_max());
        }
    }
    let vac = FockVector::vacuum(win);
    let raised = car_create(&chis[size], &vac)?;
    Ok(json!({
        "window": [window.0, window.1],
        "modes": size,
        "max_anticommutator_defect": worst,
        "vacuum_charge": vac.charge(),
        "created_charge": raised.charge(),
    }))
}
