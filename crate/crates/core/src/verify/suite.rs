//! The verification suite: identity residuals and bound checks over a fixed
//! corpus, collected into one JSON report.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use super::bounds::*;
use super::identities::*;
use super::oracle::riemannian_oracle;
use crate::error::{Error, Result};
use crate::flow::{
    closed_form_predictor, homothety_model, model_ricci, run_flow, FlowConfig, FlowMode,
};
use crate::format::to_json;
use crate::geometry::{
    contract_hh, coordinate_completion, covariant_derivatives, curvature_report, flag_from_parts,
    PointJets, Tensor,
};
use crate::indicatrix::{gauss_formula_residual, indicatrix_basis, sm_hessian_ric};
use crate::metric::{build_metric, sample_points, FamilyId, FinslerMetric, MetricSpec};

/// Section names accepted by [`VerifyOptions::only`].
pub const SECTIONS: &[&str] = &[
    "bernoulli",
    "oracle",
    "cross_path",
    "symmetry",
    "indicatrix",
    "conversion",
    "evolution",
    "bounds",
];

/// Tolerances of the hard-asserted checks.
pub const BERNOULLI_TOL: f64 = 1e-10;
pub const ORACLE_RTOL: f64 = 1e-6;
pub const CROSS_PATH_RTOL: f64 = 1e-7;
pub const SYMMETRY_TOL: f64 = 1e-8;
pub const INDICATRIX_TOL: f64 = 1e-7;
pub const CONVERSION_RTOL: f64 = 1e-6;
pub const HOMOTHETY_RTOL: f64 = 1e-6;
pub const LOWER_BOUND_TOL: f64 = 1e-9;

/// Summary of one residual over a sample set.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub id: String,
    pub samples: String,
    pub count: usize,
    pub max_abs: f64,
    pub rms: f64,
    /// Largest magnitude of the compared quantities; relative tolerances
    /// are measured against it.
    pub scale: f64,
    pub tol: Option<f64>,
    pub relative: bool,
    pub status: Status,
}

impl ResidualReport {
    fn build(
        id: &str,
        samples: &str,
        residuals: &[f64],
        scale: f64,
        tol: Option<f64>,
        relative: bool,
    ) -> Self {
        let count = residuals.len();
        let max_abs =
            residuals.iter().fold(
                0.0f64,
                |m, r| if r.is_nan() { f64::NAN } else { m.max(r.abs()) },
            );
        let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / count.max(1) as f64).sqrt();
        let status = match tol {
            None => Status::ReportOnly,
            Some(t) => {
                let limit = if relative { t * scale.max(1e-12) } else { t };
                if max_abs <= limit {
                    Status::Pass
                } else {
                    Status::Fail
                }
            }
        };
        ResidualReport {
            id: id.into(),
            samples: samples.into(),
            count,
            max_abs,
            rms,
            scale,
            tol,
            relative,
            status,
        }
    }

    /// `max_abs / scale`.
    pub fn relative_error(&self) -> f64 {
        self.max_abs / self.scale.max(1e-300)
    }
}

/// Accumulates `(residual, magnitude)` pairs.
#[derive(Default)]
struct Acc {
    res: Vec<f64>,
    scale: f64,
}

impl Acc {
    fn push(&mut self, residual: f64, magnitude: f64) {
        self.res.push(residual);
        self.scale = self.scale.max(magnitude.abs());
    }

    fn diff(&mut self, a: &[f64], b: &[f64]) {
        for (p, q) in a.iter().zip(b) {
            self.push((p - q).abs(), q.abs().max(p.abs()));
        }
    }

    fn report(&self, id: &str, samples: &str, tol: Option<f64>, relative: bool) -> ResidualReport {
        ResidualReport::build(id, samples, &self.res, self.scale, tol, relative)
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VerifyReport {
    pub identities: Vec<ResidualReport>,
    pub bounds: Vec<BoundCheck>,
    /// Checks skipped because their hypotheses fail, with the reason.
    pub not_applicable: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.identities.iter().all(|r| r.status != Status::Fail)
            && self.bounds.iter().all(|b| b.status != Status::Fail)
    }

    pub fn failures(&self) -> Vec<String> {
        self.identities
            .iter()
            .filter(|r| r.status == Status::Fail)
            .map(|r| format!("{} [{}]", r.id, r.samples))
            .chain(
                self.bounds
                    .iter()
                    .filter(|b| b.status == Status::Fail)
                    .map(|b| format!("{} [{}]", b.id, b.run)),
            )
            .collect()
    }

    pub fn identity(&self, id: &str) -> Vec<&ResidualReport> {
        self.identities.iter().filter(|r| r.id == id).collect()
    }

    pub fn bound(&self, id: &str) -> Vec<&BoundCheck> {
        self.bounds.iter().filter(|b| b.id == id).collect()
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    fn merge(&mut self, other: VerifyReport) {
        self.identities.extend(other.identities);
        self.bounds.extend(other.bounds);
        self.not_applicable.extend(other.not_applicable);
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Sections to run; all when `None`.
    pub only: Option<Vec<String>>,
    /// Points per metric for the oracle and cross-path checks.
    pub samples: usize,
    pub seed: u64,
    /// Replaces the built-in corpora of the pointwise sections.
    pub metrics: Option<Vec<MetricSpec>>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            only: None,
            samples: 200,
            seed: 0,
            metrics: None,
        }
    }
}

/// The built-in non-Riemannian corpus.
pub fn randers_corpus() -> Vec<MetricSpec> {
    vec![
        MetricSpec::new(FamilyId::Randers, 2)
            .with("b1", 0.3)
            .with("b2", 0.1)
            .with("wave", 0.2)
            .with("amp", 0.1),
        MetricSpec::new(FamilyId::Randers, 3)
            .with("b1", 0.2)
            .with("b2", -0.1)
            .with("b3", 0.05)
            .with("wave", 0.1)
            .with("amp", 0.05),
    ]
}

/// Randers metrics plus a quartic perturbation, a conformal torus and the
/// round sphere.
pub fn corpus() -> Vec<MetricSpec> {
    let mut c = randers_corpus();
    c.push(
        MetricSpec::new(FamilyId::ConformalPerturbation, 2)
            .with("amp", 0.1)
            .with("amp2", 0.05)
            .with("eps", 0.1),
    );
    c.push(MetricSpec::new(FamilyId::RiemannianTorus, 2).with("amp", 0.1));
    c.push(MetricSpec::new(FamilyId::RoundSphere, 2));
    c
}

fn label(spec: &MetricSpec) -> String {
    let mut s = format!("{} n={}", spec.family, spec.dim);
    for (k, v) in &spec.params {
        s.push_str(&format!(" {k}={v}"));
    }
    s
}

fn corpus_label(specs: &[MetricSpec]) -> String {
    specs.iter().map(label).collect::<Vec<_>>().join("; ")
}

/// 64 angles: evenly spaced for `n = 2`, an `8 × 8` polar grid off the
/// poles for `n = 3`.
pub fn angle_samples(n: usize) -> Vec<Vec<f64>> {
    if n == 2 {
        (0..64).map(|k| vec![TAU * k as f64 / 64.0]).collect()
    } else {
        let mut out = Vec::with_capacity(64);
        for i in 0..8 {
            for j in 0..8 {
                out.push(vec![PI * (i as f64 + 0.5) / 8.0, TAU * j as f64 / 8.0]);
            }
        }
        out
    }
}

pub fn run_verification(opts: &VerifyOptions) -> Result<VerifyReport> {
    if let Some(only) = &opts.only {
        for s in only {
            if !SECTIONS.contains(&s.as_str()) {
                return Err(Error::Config(format!(
                    "unknown verification section `{s}` (expected one of {})",
                    SECTIONS.join(", ")
                )));
            }
        }
    }
    let wanted = |s: &str| opts.only.as_ref().is_none_or(|o| o.iter().any(|w| w == s));
    let custom = opts.metrics.clone();
    let general = custom.clone().unwrap_or_else(corpus);
    let mut rep = VerifyReport::default();
    if wanted("bernoulli") {
        rep.merge(bernoulli_section());
    }
    if wanted("oracle") {
        let specs = match &custom {
            None => oracle_corpus(),
            Some(c) => {
                let mut keep = Vec::new();
                for spec in c {
                    if build_metric(spec)?.is_riemannian() {
                        keep.push(spec.clone());
                    } else {
                        rep.not_applicable
                            .push(format!("oracle on {}: not Riemannian", label(spec)));
                    }
                }
                keep
            }
        };
        if !specs.is_empty() {
            rep.merge(oracle_section(&specs, opts.samples, opts.seed)?);
        }
    }
    if wanted("cross_path") {
        let specs = custom.clone().unwrap_or_else(|| {
            let mut c = randers_corpus();
            c.push(MetricSpec::new(FamilyId::RiemannianTorus, 2).with("amp", 0.1));
            c
        });
        rep.merge(cross_path_section(&specs, opts.samples, opts.seed)?);
    }
    if wanted("symmetry") {
        rep.merge(symmetry_section(&general, opts.seed)?);
    }
    if wanted("indicatrix") {
        rep.merge(indicatrix_section(&general)?);
    }
    if wanted("conversion") {
        rep.merge(conversion_section(
            &custom.clone().unwrap_or_else(randers_corpus),
        )?);
    }
    if wanted("evolution") {
        rep.merge(evolution_section(&general, opts.seed)?);
    }
    if wanted("bounds") {
        rep.merge(bounds_section(opts.seed)?);
    }
    Ok(rep)
}

/// Closed-form comparison solution against RK4.
pub fn bernoulli_section() -> VerifyReport {
    let mut acc = Acc::default();
    for alpha in [0.1, 1.0, 2.0] {
        for k in 0..=20 {
            let t = 0.25 * k as f64;
            let exact = bernoulli_solution(alpha, t);
            let steps = ((t / 1e-4).ceil() as usize).max(1);
            acc.push((exact - bernoulli_rk4(alpha, t, steps)).abs(), exact);
        }
    }
    VerifyReport {
        identities: vec![acc.report(
            "bernoulli_closed_form",
            "alpha in {0.1, 1, 2}, t in [0, 5]",
            Some(BERNOULLI_TOL),
            false,
        )],
        ..Default::default()
    }
}

/// Metrics for the Riemannian oracle.
pub fn oracle_corpus() -> Vec<MetricSpec> {
    vec![
        MetricSpec::new(FamilyId::RoundSphere, 2),
        MetricSpec::new(FamilyId::RoundSphere, 2).with("r", 2.0),
        MetricSpec::new(FamilyId::RoundSphere, 3),
        MetricSpec::new(FamilyId::RiemannianTorus, 2).with("amp", 0.1),
    ]
}

/// Jet pipeline against finite differences on Riemannian metrics.
pub fn oracle_section(specs: &[MetricSpec], samples: usize, seed: u64) -> Result<VerifyReport> {
    let mut gam = Acc::default();
    let mut hh = Acc::default();
    let mut flag = Acc::default();
    let mut ric = Acc::default();
    let mut ric_ij = Acc::default();
    for spec in specs {
        let m = build_metric(spec)?;
        for (x, y) in sample_points(spec, samples, seed) {
            let a = riemannian_oracle(&m, &x, &y)?;
            let b = curvature_report(&m, &x, &y, true)?;
            gam.diff(&b.christoffel, &a.christoffel);
            hh.diff(
                b.hh_curvature.as_deref().unwrap_or(&[]),
                a.hh_curvature.as_deref().unwrap_or(&[]),
            );
            ric.diff(&[b.ric], &[a.ric]);
            ric_ij.diff(&b.ric_tensor, &a.ric_tensor);
            let (ga, gb) = (a.g_matrix(), b.g_matrix());
            for v in coordinate_completion(&ga, &y) {
                let v: Vec<f64> = v.iter().copied().collect();
                let ka = flag_from_parts(&ga, &a.reduced(), &y, &v, 1e-6)?;
                let kb = flag_from_parts(&gb, &b.reduced(), &y, &v, 1e-6)?;
                flag.diff(&[kb], &[ka]);
            }
        }
    }
    let s = format!("{samples} points each on {}", corpus_label(specs));
    Ok(VerifyReport {
        identities: vec![
            gam.report("oracle_christoffel", &s, Some(ORACLE_RTOL), true),
            hh.report("oracle_hh_curvature", &s, Some(ORACLE_RTOL), true),
            flag.report("oracle_flag_curvature", &s, Some(ORACLE_RTOL), true),
            ric.report("oracle_ricci_scalar", &s, Some(ORACLE_RTOL), true),
            ric_ij.report("oracle_ricci_tensor", &s, Some(ORACLE_RTOL), true),
        ],
        ..Default::default()
    })
}

fn jets_tensor(n: usize, rank: usize, jets: &[crate::jet::Jet]) -> Tensor {
    Tensor {
        n,
        rank,
        data: jets.iter().map(|j| j.value()).collect(),
    }
}

/// Reduced curvature from the spray against the `y`-contraction of the
/// hh-curvature.
pub fn cross_path_section(specs: &[MetricSpec], samples: usize, seed: u64) -> Result<VerifyReport> {
    let mut acc = Acc::default();
    for spec in specs {
        let m = build_metric(spec)?;
        for (x, y) in sample_points(spec, samples, seed) {
            let pj = PointJets::new(&m, &x, &y, 4)?;
            let n = pj.n;
            let direct = jets_tensor(n, 2, &pj.reduced_curvature_jets());
            let hh = jets_tensor(n, 4, &pj.hh_curvature_jets());
            let via = contract_hh(&hh, &y, pj.f2().value());
            acc.diff(&via.data, &direct.data);
        }
    }
    Ok(VerifyReport {
        identities: vec![acc.report(
            "cross_path_reduced_curvature",
            &format!("{samples} points each on {}", corpus_label(specs)),
            Some(CROSS_PATH_RTOL),
            true,
        )],
        ..Default::default()
    })
}

/// Algebraic symmetries, annihilation by `y` and metric compatibility.
pub fn symmetry_section(specs: &[MetricSpec], seed: u64) -> Result<VerifyReport> {
    let mut cartan_sym = Acc::default();
    let mut cartan_y = Acc::default();
    let mut reduced_y = Acc::default();
    let mut hh_last = Acc::default();
    let mut hh_first = Acc::default();
    let mut compat = Acc::default();
    for spec in specs {
        let m = build_metric(spec)?;
        for (x, y) in sample_points(spec, 20, seed) {
            let pj = PointJets::new(&m, &x, &y, 4)?;
            let n = pj.n;
            let g = pj.g();
            let c = jets_tensor(n, 3, &pj.cartan_lower_jets());
            let scale_c = c.max_abs();
            for i in 0..n {
                for j in 0..n {
                    let mut cy = 0.0;
                    for k in 0..n {
                        let v = c.get(&[i, j, k]);
                        cartan_sym.push((v - c.get(&[j, i, k])).abs(), scale_c);
                        cartan_sym.push((v - c.get(&[i, k, j])).abs(), scale_c);
                        cy += v * y[k];
                    }
                    cartan_y.push(cy.abs(), scale_c);
                }
            }
            let r = jets_tensor(n, 2, &pj.reduced_curvature_jets());
            let rl = &g * r.to_matrix();
            let yv = DVector::from_column_slice(&y);
            let scale_r = r.max_abs();
            for v in (r.to_matrix() * &yv)
                .iter()
                .chain((rl.transpose() * &yv).iter())
            {
                reduced_y.push(v.abs(), scale_r);
            }
            let hh = jets_tensor(n, 4, &pj.hh_curvature_jets());
            let scale_h = hh.max_abs();
            for h in 0..n {
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            hh_last.push(
                                (hh.get(&[h, k, i, j]) + hh.get(&[h, k, j, i])).abs(),
                                scale_h,
                            );
                            let low = |a: usize, b: usize| {
                                (0..n)
                                    .map(|l| g[(a, l)] * hh.get(&[l, b, i, j]))
                                    .sum::<f64>()
                            };
                            hh_first.push((low(h, k) + low(k, h)).abs(), scale_h);
                        }
                    }
                }
            }
            let (hor, ver) = covariant_derivatives(&pj, &pj.metric_field())?;
            let scale_g = g.amax();
            for v in hor.data.iter().chain(&ver.data) {
                compat.push(v.abs(), scale_g);
            }
        }
    }
    let s = format!("20 points each on {}", corpus_label(specs));
    let t = Some(SYMMETRY_TOL);
    Ok(VerifyReport {
        identities: vec![
            cartan_sym.report("cartan_total_symmetry", &s, t, true),
            cartan_y.report("cartan_annihilates_y", &s, t, true),
            reduced_y.report("reduced_curvature_annihilates_y", &s, t, true),
            hh_last.report("hh_curvature_skew_last_pair", &s, t, true),
            hh_first.report("hh_curvature_skew_first_pair", &s, t, true),
            compat.report("metric_compatibility", &s, t, true),
        ],
        ..Default::default()
    })
}

/// Base points for the per-angle checks.
fn base_points(spec: &MetricSpec) -> Vec<Vec<f64>> {
    sample_points(spec, 3, 11)
        .into_iter()
        .map(|(x, _)| x)
        .collect()
}

/// Orthogonality of the indicatrix frame and the Gauss formula, 64 angles
/// at three base points per metric.
pub fn indicatrix_section(specs: &[MetricSpec]) -> Result<VerifyReport> {
    let mut orth = Acc::default();
    let mut gauss = Acc::default();
    for spec in specs {
        let m = build_metric(spec)?;
        for x in base_points(spec) {
            for th in angle_samples(spec.dim) {
                let o = match indicatrix_basis(&m, &x, &th) {
                    Ok(f) => f.orthogonality,
                    Err(Error::NotOrthogonal(v)) => v,
                    Err(e) => return Err(e),
                };
                orth.push(o, 1.0);
                gauss.push(gauss_formula_residual(&m, &x, &th)?, 1.0);
            }
        }
    }
    let s = format!("64 angles at 3 points each on {}", corpus_label(specs));
    Ok(VerifyReport {
        identities: vec![
            orth.report("indicatrix_orthogonality", &s, Some(INDICATRIX_TOL), false),
            gauss.report("gauss_formula", &s, Some(INDICATRIX_TOL), false),
        ],
        ..Default::default()
    })
}

/// Ambient and sphere-bundle forms of the Ricci evolution operator.
pub fn conversion_section(specs: &[MetricSpec]) -> Result<VerifyReport> {
    let mut conv = Acc::default();
    let mut product = Acc::default();
    let mut gap = Acc::default();
    for spec in specs {
        let m = build_metric(spec)?;
        for x in base_points(spec) {
            for th in angle_samples(spec.dim) {
                let h = sm_hessian_ric(&m, &x, &th)?;
                let (a, s) = (h.ambient_operator(), h.sphere_operator());
                conv.push((a - s).abs(), a.abs().max(s.abs()));
                product.push(h.residual(), h.rhs.amax());
                gap.push(h.levi_civita_gap(), h.lhs.amax());
            }
        }
    }
    let s = format!("64 angles at 3 points each on {}", corpus_label(specs));
    Ok(VerifyReport {
        identities: vec![
            conv.report("sphere_bundle_conversion", &s, Some(CONVERSION_RTOL), true),
            product.report("hessian_product_rule", &s, Some(CONVERSION_RTOL), true),
            gap.report("levi_civita_hessian_gap", &s, None, true),
        ],
        ..Default::default()
    })
}

struct EvolutionAcc {
    hh: Acc,
    transverse: Acc,
    traced: Acc,
    ambient: Acc,
    sphere: Acc,
    margin: Acc,
}

impl EvolutionAcc {
    fn new() -> Self {
        EvolutionAcc {
            hh: Acc::default(),
            transverse: Acc::default(),
            traced: Acc::default(),
            ambient: Acc::default(),
            sphere: Acc::default(),
            margin: Acc::default(),
        }
    }

    fn sample(
        &mut self,
        s: &TimeSlices,
        x: &[f64],
        y: &[f64],
        z: &[f64],
        w: &[f64],
        theta: &[f64],
    ) -> Result<()> {
        let r = hh_evolution_residual(s, z, w, x, y)?;
        self.hh.push(r.abs(), r.scale());
        let r = transverse_evolution_residual(s, x, y)?;
        self.transverse.push(r.abs(), r.scale());
        let r = traced_evolution_residual(s, x, y)?;
        self.traced.push(r.abs(), r.scale());
        let e = ricci_evolution(s, x, theta)?;
        self.ambient
            .push(e.ambient_residual(), e.dt_ric.abs().max(e.ambient.abs()));
        self.sphere.push(
            e.sphere_bundle_residual(),
            e.dt_ric.abs().max(e.sphere_bundle.abs()),
        );
        // signed: negative values violate the inequality
        self.margin.res.push(e.inequality_margin());
        self.margin.scale = self.margin.scale.max(e.dt_ric.abs());
        Ok(())
    }

    fn reports(&self, samples: &str, hh_tol: Option<f64>) -> Vec<ResidualReport> {
        let mut margin = self
            .margin
            .report("ricci_inequality_margin", samples, None, false);
        // keep the sign of the worst margin
        margin.max_abs = self
            .margin
            .res
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        vec![
            self.hh
                .report("hh_curvature_evolution", samples, hh_tol, true),
            self.transverse
                .report("transverse_curvature_evolution", samples, hh_tol, true),
            self.traced
                .report("traced_curvature_evolution", samples, None, true),
            self.ambient
                .report("ricci_scalar_evolution", samples, None, true),
            self.sphere
                .report("ricci_scalar_evolution_sphere_bundle", samples, None, true),
            margin,
        ]
    }
}

fn test_vectors(n: usize, k: usize) -> (Vec<f64>, Vec<f64>) {
    let z: Vec<f64> = (0..n).map(|i| ((i + k) as f64 * 0.7).cos()).collect();
    let w: Vec<f64> = (0..n)
        .map(|i| ((i * 2 + k) as f64 * 1.3).sin() + 0.2)
        .collect();
    (z, w)
}

/// Curvature evolution identities: hard-asserted on homothety solutions,
/// reported on general metrics along the exact flow direction.
pub fn evolution_section(specs: &[MetricSpec], seed: u64) -> Result<VerifyReport> {
    let mut rep = VerifyReport::default();
    for n in [2, 3] {
        let spec = MetricSpec::new(FamilyId::RoundSphere, n);
        let (model, r0) = homothety_model(&spec)?;
        let kappa = model_ricci(&model, 8, seed)?;
        let model: Arc<dyn FinslerMetric> = Arc::new(model);
        let mut acc = EvolutionAcc::new();
        for t in [0.0, 0.1, 0.2] {
            let s = TimeSlices::homothety(model.clone(), r0, kappa, t, 1e-3)?;
            for (k, (x, y)) in sample_points(&spec, 8, seed).into_iter().enumerate() {
                let (z, w) = test_vectors(n, k);
                let th = angle_samples(n)[(9 * k) % 64].clone();
                acc.sample(&s, &x, &y, &z, &w, &th)?;
            }
        }
        rep.identities.extend(acc.reports(
            &format!(
                "homothety solution of {}, t in {{0, 0.1, 0.2}}, dt = 1e-3",
                label(&spec)
            ),
            Some(HOMOTHETY_RTOL),
        ));
    }
    for spec in specs.iter().filter(|s| s.family != FamilyId::RoundSphere) {
        let m: Arc<dyn FinslerMetric> = Arc::new(build_metric(spec)?);
        let s = TimeSlices::infinitesimal(m, 1e-3);
        let mut acc = EvolutionAcc::new();
        for (k, (x, y)) in sample_points(spec, 12, seed).into_iter().enumerate() {
            let (z, w) = test_vectors(spec.dim, k);
            let th = angle_samples(spec.dim)[(9 * k) % 64].clone();
            acc.sample(&s, &x, &y, &z, &w, &th)?;
        }
        rep.identities.extend(acc.reports(
            &format!("flow direction through {}, eps = 1e-3", label(spec)),
            None,
        ));
    }
    Ok(rep)
}

/// Positivity, lower-bound and ratio checks on homothety runs, and the
/// ratio fit plus predictor deviation on a short grid run.
pub fn bounds_section(seed: u64) -> Result<VerifyReport> {
    let mut rep = VerifyReport::default();
    for (n, t_end) in [(2, 0.4), (3, 0.2)] {
        let spec = MetricSpec::new(FamilyId::RoundSphere, n);
        let mut cfg = FlowConfig::new(spec.clone(), FlowMode::Parametric);
        cfg.dt = 1e-3;
        cfg.t_end = t_end;
        cfg.cadence = 0.02;
        cfg.seed = seed;
        cfg.sample_count = 8;
        let run = run_flow(&cfg)?;
        let what = format!("parametric {}", label(&spec));
        push_check(&mut rep, &what, check_positivity(&run.samples))?;
        push_check(
            &mut rep,
            &what,
            check_lower_bound(&run.samples, LOWER_BOUND_TOL),
        )?;
        let points = sample_points(&homothety_model(&spec)?.0.spec, 8, seed);
        let series = ratio_series(&run.metrics()?, &run.samples, &points)?;
        push_check(&mut rep, &what, check_ratio_bounds(&series))?;
    }

    let spec = MetricSpec::new(FamilyId::ConformalPerturbation, 2)
        .with("amp", 0.1)
        .with("amp2", 0.05)
        .with("eps", 0.1);
    let mut cfg = FlowConfig::new(spec.clone(), FlowMode::Grid);
    cfg.nx = 16;
    cfg.ntheta = 16;
    cfg.dt = 0.01;
    cfg.t_end = 0.05;
    cfg.cadence = 0.01;
    cfg.seed = seed;
    cfg.sample_count = 8;
    cfg.snapshots = true;
    let run = run_flow(&cfg)?;
    let what = format!("grid {} at 16x16x16", label(&spec));
    push_check(&mut rep, &what, check_positivity(&run.samples))?;
    push_check(
        &mut rep,
        &what,
        check_lower_bound(&run.samples, LOWER_BOUND_TOL),
    )?;
    let metrics = run.metrics()?;
    let initial = build_metric(&spec)?;
    // the ratio bound needs F²R(V, V) > 0, so keep the points where it holds
    let points: Vec<(Vec<f64>, Vec<f64>)> = sample_points(&spec, 32, seed)
        .into_iter()
        .filter(|(x, y)| {
            transverse_vector(metrics[0].1.as_ref(), x, y)
                .and_then(|v| transverse_curvature(metrics[0].1.as_ref(), x, y, &v))
                .is_ok_and(|r| r > 0.0)
        })
        .collect();
    if points.is_empty() {
        rep.not_applicable.push(format!(
            "curvature_ratio_bound on {what}: no sample with positive curvature"
        ));
    } else {
        let series = ratio_series(&metrics, &run.samples, &points)?;
        push_check(
            &mut rep,
            &format!("{what}, {} positively curved samples", points.len()),
            check_ratio_bounds(&series),
        )?;
    }
    let (t_last, last) = metrics
        .last()
        .ok_or(Error::NotApplicable("empty run".into()))?;
    let mut dev = Acc::default();
    for (x, y) in sample_points(&spec, 16, seed) {
        let f = last.eval(&x, &y);
        let p = closed_form_predictor(&initial, &x, &y, *t_last)?;
        dev.push((f * f - p).abs(), p);
    }
    rep.identities.push(dev.report(
        "homothety_predictor_deviation",
        &format!("{what}, t = {t_last}, F² against the homothety predictor"),
        None,
        true,
    ));
    Ok(rep)
}

fn push_check(rep: &mut VerifyReport, what: &str, check: Result<BoundCheck>) -> Result<()> {
    match check {
        Ok(mut c) => {
            c.run = what.into();
            rep.bounds.push(c);
            Ok(())
        }
        Err(Error::NotApplicable(why)) => {
            rep.not_applicable.push(format!("{what}: {why}"));
            Ok(())
        }
        Err(e) => Err(e),
    }
}
