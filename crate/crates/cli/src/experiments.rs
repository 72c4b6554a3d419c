//! Experiment registry and pipelines.

use ilab_core::derivations::{amalgam_coeff, lorentz_exponents, DerivationSpec};
use ilab_core::diagnostics::{
    a_param, bounded_equivalence, fit_exponent, gap_report, singularity_probe, triviality_gap,
};
use ilab_core::interpolate::reiteration_check;
use ilab_core::spaces::DUAL_BUDGET;
use ilab_core::{
    calderon_norm, dual_norm, norm, restrict, CoupleSpec, Error, IndexSet, Measured, Partition,
    Provenance, Report, SpaceSpec, Table, Vector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, PartitionPreset, SpaceName};

pub struct Experiment {
    pub name: &'static str,
    pub citation: &'static str,
    pub summary: &'static str,
    pub default_samples: usize,
    run: fn(&ExperimentConfig, usize) -> ilab_core::Result<Outcome>,
}

pub const REGISTRY: &[Experiment] = &[
    Experiment {
        name: "weighted-trivial",
        citation: "weighted scale: the induced derivation is trivial",
        summary:
            "numerical derivation of (l_p(1/w), l_p(w)) against the diagonal map -(1/p) log(w1/w0)",
        default_samples: 200,
        run: weighted_trivial,
    },
    Experiment {
        name: "lorentz-decomposition",
        citation: "Lorentz scale: derivation as a combination of K and the Kalton map",
        summary:
            "numerical derivation of (l_{p0,q0}, l_{p1,q1}) against the K plus kappa closed form",
        default_samples: 20,
        run: lorentz_decomposition,
    },
    Experiment {
        name: "fragmented-kp",
        citation: "fragmented Kalton-Peck scale: not trivial, strictly non-singular",
        summary: "K triviality gaps on dyadic blocks and the diagonal-subspace singularity probe",
        default_samples: 2000,
        run: fragmented_kp,
    },
    Experiment {
        name: "weak-hilbert",
        citation: "weak Hilbert scale: (T2, T2*)_1/2 = l_2 with trivial fragmented derivation",
        summary:
            "T2 dual sandwich, Calderon norm on dyadic blocks, fragmented and unfragmented gaps",
        default_samples: 16,
        run: weak_hilbert,
    },
    Experiment {
        name: "amalgam-equality",
        citation: "convexified amalgams: interpolation with equality of norms",
        summary: "(l_p(l_p*), l_p*(l_p)) norm against the amalgam closed form and its derivation",
        default_samples: 60,
        run: amalgam_equality,
    },
    Experiment {
        name: "reiteration",
        citation: "reiteration: the derivation is (theta1 - theta0) Omega_theta",
        summary: "derivation of (X_theta0, X_theta1)_eta against (theta1 - theta0) Omega_theta",
        default_samples: 24,
        run: reiteration,
    },
    Experiment {
        name: "aparam-table",
        citation: "A-parameter A_X(n) of sequence spaces",
        summary: "searched A_X(n) over successive normalized blocks with closed forms where known",
        default_samples: 1,
        run: aparam_table,
    },
];

pub fn find(name: &str) -> Option<&'static Experiment> {
    REGISTRY.iter().find(|e| e.name == name)
}

/// A registered threshold and whether the run met it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: String,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            limit: format!("<= {limit:e}"),
            pass: value <= limit,
        }
    }

    fn holds(name: &str, value: f64, limit: &str, pass: bool) -> Self {
        Self {
            name: name.to_string(),
            value,
            limit: limit.to_string(),
            pass,
        }
    }
}

pub struct Outcome {
    pub report: Report,
    pub checks: Vec<Check>,
}

impl Experiment {
    pub fn run(&self, cfg: &ExperimentConfig) -> ilab_core::Result<Outcome> {
        let samples = cfg.samples.unwrap_or(self.default_samples);
        (self.run)(cfg, samples)
    }
}

fn rng(cfg: &ExperimentConfig, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
    r.set_stream(stream);
    r
}

/// Configured weights, or log-uniform weights in `[0.1, 10]` drawn from the seed.
fn weights(cfg: &ExperimentConfig, dim: usize) -> ilab_core::Result<Vector> {
    match &cfg.weights {
        Some(w) => Vector::new(w[..dim].to_vec()),
        None => {
            let mut r = rng(cfg, 1);
            Vector::new(
                (0..dim)
                    .map(|_| 10f64.powf(r.random_range(-1.0..=1.0)))
                    .collect(),
            )
        }
    }
}

fn random_vectors(cfg: &ExperimentConfig, count: usize, support: &IndexSet) -> Vec<Vector> {
    let mut r = rng(cfg, 2);
    let dim = support.max().unwrap_or(0);
    (0..count)
        .map(|_| {
            let mut v = vec![0.0; dim];
            for i in support.iter() {
                let u: f64 = r.random_range(-1.0..1.0);
                v[i - 1] = u / (1.0 - u.abs()).max(0.05);
            }
            Vector::from_slice(&v)
        })
        .filter(|v| !v.is_zero())
        .collect()
}

fn scalar(report: &mut Report, key: &str, value: f64, tolerance: f64, provenance: Provenance) {
    report.scalar(key, Measured::new(value, tolerance, provenance));
}

fn max_rel_error<F>(xs: &[Vector], mut f: F) -> ilab_core::Result<f64>
where
    F: FnMut(&Vector) -> ilab_core::Result<(f64, f64)>,
{
    let mut worst = 0.0f64;
    for x in xs {
        let (a, b) = f(x)?;
        worst = worst.max((a - b).abs() / b);
    }
    Ok(worst)
}

fn weighted_trivial(cfg: &ExperimentConfig, samples: usize) -> ilab_core::Result<Outcome> {
    let w = weights(cfg, cfg.dim)?;
    let inv = w.map(|v| 1.0 / v);
    let p = cfg.p.unwrap_or(2.0);
    let couple = CoupleSpec::new(
        SpaceSpec::weighted(p, inv.clone())?,
        SpaceSpec::weighted(p, w.clone())?,
        cfg.theta,
    )?;
    let x_theta = couple.space_at(cfg.theta)?;
    let block = IndexSet::interval(1, cfg.dim);
    let omega = DerivationSpec::numerical(couple.clone(), cfg.eps);
    let diagonal = Vector::new(
        w.as_slice()
            .iter()
            .zip(inv.as_slice())
            .map(|(w1, w0)| -(w1 / w0).ln() / p)
            .collect(),
    )?;
    let gap = triviality_gap(&omega, &x_theta, &block, samples, cfg.seed)?;
    let equiv = bounded_equivalence(
        &omega,
        &DerivationSpec::LinearDiagonal(diagonal),
        &x_theta,
        &block,
        samples,
        cfg.seed,
    )?;
    let xs = random_vectors(cfg, samples.min(50), &block);
    let err = max_rel_error(&xs, |x| {
        Ok((calderon_norm(&couple, x, cfg.eps)?, norm(&x_theta, x)?))
    })?;

    let mut report = Report::new("weighted-trivial");
    scalar(
        &mut report,
        "triviality_gap",
        gap.value,
        cfg.eps,
        Provenance::Sampled,
    );
    scalar(
        &mut report,
        "distance_to_diagonal",
        equiv,
        cfg.eps,
        Provenance::Sampled,
    );
    scalar(
        &mut report,
        "norm_relative_error",
        err,
        cfg.eps,
        Provenance::Solver,
    );
    report.note(format!("X_theta = {x_theta}"));
    Ok(Outcome {
        report,
        checks: vec![
            Check::at_most("triviality_gap", gap.value, 1e-3),
            Check::at_most("distance_to_diagonal", equiv, 1e-3),
            Check::at_most("norm_relative_error", err, 1e-4),
        ],
    })
}

fn lorentz_decomposition(cfg: &ExperimentConfig, samples: usize) -> ilab_core::Result<Outcome> {
    let (p0, q0, p1, q1, t) = (cfg.p0, cfg.q0, cfg.p1, cfg.q1, cfg.theta);
    let couple = CoupleSpec::new(SpaceSpec::lorentz(p0, q0)?, SpaceSpec::lorentz(p1, q1)?, t)?;
    let (p, q) = lorentz_exponents(p0, q0, p1, q1, t);
    let space = SpaceSpec::lorentz(p, q)?;
    let block = IndexSet::interval(1, cfg.dim);
    let omega = DerivationSpec::numerical(couple, cfg.eps);
    // kappa is taken from the couple (l_{p0,q}, l_{p1,q}) with the interpolated q.
    let kappa = DerivationSpec::scaled(
        -1.0,
        DerivationSpec::KaltonMap {
            p0,
            p1,
            q,
            theta: t,
            eps: cfg.eps,
        },
    );
    let composite = DerivationSpec::scaled(
        -1.0,
        DerivationSpec::LorentzComposite {
            p0,
            q0,
            p1,
            q1,
            theta: t,
            kappa: Box::new(kappa),
        },
    );
    // kappa itself is fixed only up to a bounded map, so the distance is
    // judged by its growth with the dimension, against the zero map.
    let small = IndexSet::interval(1, (cfg.dim / 8).max(1));
    let zero = DerivationSpec::LinearDiagonal(Vector::zeros(cfg.dim));
    let dist = |other: &DerivationSpec, b: &IndexSet| {
        bounded_equivalence(&omega, other, &space, b, samples, cfg.seed)
    };
    let d = dist(&composite, &block)?;
    let growth = d - dist(&composite, &small)?;
    let zero_growth = dist(&zero, &block)? - dist(&zero, &small)?;
    let mut report = Report::new("lorentz-decomposition");
    scalar(&mut report, "distance", d, cfg.eps, Provenance::Sampled);
    scalar(
        &mut report,
        "distance_growth",
        growth,
        cfg.eps,
        Provenance::Sampled,
    );
    scalar(
        &mut report,
        "zero_map_growth",
        zero_growth,
        cfg.eps,
        Provenance::Sampled,
    );
    scalar(&mut report, "p", p, 0.0, Provenance::ClosedForm);
    scalar(&mut report, "q", q, 0.0, Provenance::ClosedForm);
    scalar(
        &mut report,
        "k_coefficient",
        q * (1.0 / q1 - 1.0 / q0),
        0.0,
        Provenance::ClosedForm,
    );
    scalar(
        &mut report,
        "kappa_coefficient",
        q / p * (1.0 / q0 - 1.0 / q1) - (1.0 / p0 - 1.0 / p1),
        0.0,
        Provenance::ClosedForm,
    );
    report.heuristic = true;
    report.note(
        "kappa is the numerical derivation of (l_{p0,q}, l_{p1,q}) divided by -(1/p0 - 1/p1)",
    );
    report.note(format!(
        "growth is measured from dimension {} to {}",
        small.len(),
        cfg.dim
    ));
    Ok(Outcome {
        report,
        checks: vec![
            Check::at_most("distance_growth", growth, 0.1),
            Check::holds("zero_map_growth", zero_growth, "> 0.1", zero_growth > 0.1),
        ],
    })
}

fn kp_l2() -> DerivationSpec {
    DerivationSpec::kalton_peck(1.0, SpaceSpec::Lp(2.0))
}

fn fragmented_kp(cfg: &ExperimentConfig, samples: usize) -> ilab_core::Result<Outcome> {
    let partition = cfg
        .partition
        .clone()
        .unwrap_or(PartitionPreset::Dyadic(7))
        .build();
    let l2 = SpaceSpec::Lp(2.0);
    let items: Vec<(IndexSet, DerivationSpec)> = partition
        .blocks()
        .iter()
        .filter(|b| b.len() >= 2)
        .map(|b| (b.clone(), kp_l2()))
        .collect();
    let gaps = gap_report(&items, &l2, samples, cfg.seed)?;
    let increasing = gaps.gaps.windows(2).all(|w| w[1] > w[0]);
    let frag = DerivationSpec::fragmented(kp_l2(), partition.clone());
    let mut report = singularity_probe(&frag, &l2, &partition, samples, cfg.seed)?;
    report.name = "fragmented-kp".into();
    let mut table = Table::new(["block_size", "gap"]);
    for (d, g) in gaps.dims.iter().zip(&gaps.gaps) {
        table.push(vec![*d as f64, *g]);
    }
    report.table("kalton_peck_gaps", table);
    let diag = report.value("max_diagonal_gap").unwrap_or(f64::NAN);
    let spread =
        gaps.gaps.last().copied().unwrap_or(0.0) - gaps.gaps.first().copied().unwrap_or(0.0);
    Ok(Outcome {
        report,
        checks: vec![
            Check::holds(
                "gaps_strictly_increasing",
                spread,
                "strictly increasing in block size",
                increasing,
            ),
            Check::at_most("max_diagonal_gap", diag, 0.1),
        ],
    })
}

fn t2_couple(block: &IndexSet) -> ilab_core::Result<CoupleSpec> {
    let t = SpaceSpec::restricted(SpaceSpec::Tsirelson2, block.clone())?;
    let d = SpaceSpec::dual(t.clone())?;
    CoupleSpec::new(t, d, 0.5)
}

fn weak_hilbert(cfg: &ExperimentConfig, samples: usize) -> ilab_core::Result<Outcome> {
    let l2 = SpaceSpec::Lp(2.0);
    let mut table = Table::new(["block", "size", "norm_error", "gap"]);
    let (mut sandwich, mut err, mut frag_gap) = (true, 0.0f64, 0.0f64);
    for n in 1..=cfg.blocks {
        let block = Partition::dyadic_block(n);
        let couple = t2_couple(&block)?;
        let mut block_err = 0.0f64;
        for x in random_vectors(cfg, samples, &block) {
            let x = restrict(&x, &block);
            let dual = dual_norm(&couple.x0, &x, DUAL_BUDGET, cfg.seed)?.value;
            let primal = norm(&couple.x0, &x)?;
            sandwich &=
                primal <= dual * (1.0 + 1e-9) && dual <= 2f64.sqrt() * x.l2() * (1.0 + 1e-3);
            let c = calderon_norm(&couple, &x, cfg.eps)?;
            block_err = block_err.max((c - x.l2()).abs() / x.l2());
        }
        let omega = DerivationSpec::numerical(couple, cfg.eps);
        let gap = triviality_gap(&omega, &l2, &block, samples, cfg.seed)?.value;
        table.push(vec![n as f64, block.len() as f64, block_err, gap]);
        err = err.max(block_err);
        frag_gap = frag_gap.max(gap);
    }
    let total = IndexSet::interval(1, (1 << cfg.blocks) - 1);
    let whole = DerivationSpec::numerical(t2_couple(&total)?, cfg.eps);
    let unfrag = triviality_gap(&whole, &l2, &total, samples, cfg.seed)?.value;

    let mut report = Report::new("weak-hilbert");
    report.heuristic = true;
    scalar(
        &mut report,
        "norm_relative_error",
        err,
        cfg.eps,
        Provenance::Solver,
    );
    scalar(
        &mut report,
        "fragmented_gap",
        frag_gap,
        cfg.eps,
        Provenance::Sampled,
    );
    scalar(
        &mut report,
        "unfragmented_gap",
        unfrag,
        cfg.eps,
        Provenance::Sampled,
    );
    report.table("blocks", table);
    Ok(Outcome {
        report,
        checks: vec![
            Check::holds(
                "dual_sandwich",
                f64::from(u8::from(sandwich)),
                "||x||_T2 <= ||x||_T2* <= sqrt(2)(1 + 1e-3)||x||_2",
                sandwich,
            ),
            Check::at_most("norm_relative_error", err, 1e-3),
            Check::at_most("fragmented_gap", frag_gap, 0.05),
            Check::holds("unfragmented_gap", unfrag, "> 0.05", unfrag > 0.05),
        ],
    })
}

fn amalgam_equality(cfg: &ExperimentConfig, samples: usize) -> ilab_core::Result<Outcome> {
    let partition = cfg
        .partition
        .clone()
        .unwrap_or(PartitionPreset::Uniform { size: 4, count: 4 })
        .build();
    let k = partition.len();
    let (p, t) = (cfg.p.unwrap_or(4.0), cfg.theta);
    if p <= 1.0 || p.is_infinite() {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: format!("{p} must lie in (1, inf) so that p* is finite"),
        });
    }
    let ps = p / (p - 1.0);
    let x0 = SpaceSpec::amalgam(
        SpaceSpec::Lp(p),
        vec![SpaceSpec::Lp(ps); k],
        partition.clone(),
    )?;
    let x1 = if cfg.identical {
        x0.clone()
    } else {
        SpaceSpec::amalgam(
            SpaceSpec::Lp(ps),
            vec![SpaceSpec::Lp(p); k],
            partition.clone(),
        )?
    };
    let couple = CoupleSpec::new(x0.clone(), x1, t)?;
    let support = partition.union();
    let xs = random_vectors(cfg, samples, &support);
    let mut report = Report::new("amalgam-equality");
    if cfg.identical {
        let dev = max_rel_error(&xs, |x| {
            Ok((calderon_norm(&couple, x, cfg.eps)?, norm(&x0, x)?))
        })?;
        scalar(
            &mut report,
            "norm_ratio_deviation",
            dev,
            0.0,
            Provenance::ClosedForm,
        );
        return Ok(Outcome {
            report,
            checks: vec![Check::at_most("norm_ratio_deviation", dev, 1e-12)],
        });
    }
    let r = 1.0 / ((1.0 - t) / p + t / ps);
    let s = 1.0 / ((1.0 - t) / ps + t / p);
    let target = SpaceSpec::amalgam(
        SpaceSpec::Lp(r),
        vec![SpaceSpec::Lp(s); k],
        partition.clone(),
    )?;
    let err = max_rel_error(&xs, |x| {
        Ok((calderon_norm(&couple, x, cfg.eps)?, norm(&target, x)?))
    })?;
    let phi = DerivationSpec::AmalgamPhi {
        coeff: amalgam_coeff(p, ps, t)?,
        partition,
        inner: vec![DerivationSpec::kalton_peck(s / ps - s / p, SpaceSpec::Lp(s)); k],
        inner_spaces: vec![SpaceSpec::Lp(s); k],
        outer: SpaceSpec::Lp(r),
    };
    let omega = DerivationSpec::numerical(couple, cfg.eps);
    let d = bounded_equivalence(&omega, &phi, &target, &support, samples, cfg.seed)?;
    scalar(
        &mut report,
        "norm_relative_error",
        err,
        cfg.eps,
        Provenance::Solver,
    );
    scalar(
        &mut report,
        "distance_to_phi",
        d,
        cfg.eps,
        Provenance::Sampled,
    );
    report.note(format!("X_theta = {target}"));
    Ok(Outcome {
        report,
        checks: vec![
            Check::at_most("norm_relative_error", err, 1e-3),
            Check::at_most("distance_to_phi", d, 0.1),
        ],
    })
}

fn reiteration(cfg: &ExperimentConfig, samples: usize) -> ilab_core::Result<Outcome> {
    let base = CoupleSpec::new(SpaceSpec::lp(cfg.p0)?, SpaceSpec::lp(cfg.p1)?, 0.5)?;
    let xs = random_vectors(cfg, samples, &IndexSet::interval(1, cfg.dim));
    let report = reiteration_check(&base, cfg.theta0, cfg.theta1, cfg.eta, &xs, cfg.eps)?;
    let d = report.value("distance").unwrap_or(f64::NAN);
    Ok(Outcome {
        report,
        checks: vec![Check::at_most("distance", d, 0.1)],
    })
}

fn aparam_table(cfg: &ExperimentConfig, _samples: usize) -> ilab_core::Result<Outcome> {
    let w = match cfg.space {
        SpaceName::Weighted(_) => weights(cfg, cfg.dim)?,
        _ => Vector::zeros(0),
    };
    let space = cfg.space.build(&w)?;
    let mut table = Table::new(["n", "lower_bound", "analytic"]);
    let mut checks = Vec::new();
    let mut worst = 0.0f64;
    let mut has_closed_form = true;
    let (mut ns, mut values) = (Vec::new(), Vec::new());
    for n in cfg.n_min..=cfg.n_max {
        let r = a_param(&space, n, cfg.dim, cfg.budget, cfg.seed)?;
        let a = r.analytic.as_ref().map(|a| a.value);
        if let Some(a) = a {
            worst = worst.max((r.lower_bound - a).abs());
        } else {
            has_closed_form = false;
        }
        table.push(vec![n as f64, r.lower_bound, a.unwrap_or(f64::NAN)]);
        ns.push(n);
        values.push(r.lower_bound);
    }
    let alpha = fit_exponent(&ns, &values);
    let mut report = Report::new("aparam-table");
    report.heuristic = !has_closed_form;
    report.table("aparam", table);
    scalar(
        &mut report,
        "fitted_exponent",
        alpha,
        0.0,
        Provenance::Fitted,
    );
    if has_closed_form {
        scalar(
            &mut report,
            "max_deviation",
            worst,
            1e-6,
            Provenance::Sampled,
        );
        checks.push(Check::at_most("max_deviation", worst, 1e-6));
    } else if matches!(cfg.space, SpaceName::Tsirelson2) && ns.len() >= 2 {
        checks.push(Check::holds(
            "fitted_exponent",
            alpha,
            "in [0.4, 0.6]",
            (0.4..=0.6).contains(&alpha),
        ));
    } else {
        report.note("no closed form and no registered threshold for this space");
    }
    report.note(format!(
        "space = {space}, searched in dimension {}",
        cfg.dim
    ));
    Ok(Outcome { report, checks })
}
