//! Time integration of the flow `∂t log F = −Ric`.
//!
//! Grid mode stores `φ = log F(x, e(θ))` on a periodic `(x¹, x², θ)` grid and
//! advances it with classical RK4; `Ric` is evaluated at each node from the
//! Fourier interpolant of `φ`. Parametric mode evolves the homothety factor
//! of `F = r·F_model` for models with constant Ricci scalar, where the flow
//! reduces to `r(t)² = r₀² − 2κt`.

use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::io;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{fmt_f64, to_json};
use crate::geometry::{
    coordinate_completion, flag_from_parts, tensor_norm, PointJets, Tensor, ORTHOGONALITY_TOL,
};
use crate::jet::{factorial, jet_space, Jet, JetSpace};
use crate::metric::{
    build_metric, sample_points, Chart, FamilyId, FinslerMetric, MetricFamily, MetricSpec,
};
use crate::spectral::{project_fiber, Spectrum};
use crate::verify::bernoulli_solution;

/// `φ` must stay inside this range for `exp φ` to be a usable positive float.
const PHI_LIMIT: f64 = 700.0;

/// Sampled `log F` on the uniform periodic grid over `(x¹, x², θ) ∈ [0, 2π)³`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridState {
    pub t: f64,
    #[serde(rename = "Nx")]
    pub nx: usize,
    #[serde(rename = "Ntheta")]
    pub ntheta: usize,
    pub family: FamilyId,
    pub phi: Vec<f64>,
}

fn grid_size_ok(n: usize) -> bool {
    n >= 16 && n.is_power_of_two()
}

impl GridState {
    pub fn new(t: f64, nx: usize, ntheta: usize, family: FamilyId, phi: Vec<f64>) -> Result<Self> {
        let s = GridState {
            t,
            nx,
            ntheta,
            family,
            phi,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !grid_size_ok(self.nx) || !grid_size_ok(self.ntheta) {
            return Err(Error::Config(format!(
                "grid sizes must be powers of two ≥ 16 (Nx = {}, Ntheta = {})",
                self.nx, self.ntheta
            )));
        }
        if self.phi.len() != self.len() {
            return Err(Error::Config(format!(
                "φ has {} entries, expected {}",
                self.phi.len(),
                self.len()
            )));
        }
        if let Some(v) = self
            .phi
            .iter()
            .find(|v| !v.is_finite() || v.abs() > PHI_LIMIT)
        {
            return Err(Error::NonPositive(format!("exp φ out of range (φ = {v})")));
        }
        Ok(())
    }

    /// Samples `log F(x, e(θ))` from a two-dimensional periodic family.
    pub fn from_metric(metric: &MetricFamily, nx: usize, ntheta: usize) -> Result<Self> {
        if metric.spec.dim != 2 || metric.spec.chart != Chart::PeriodicBox {
            return Err(Error::NotApplicable(
                "grid flows need a two-dimensional periodic-box metric".into(),
            ));
        }
        let mut phi = Vec::with_capacity(nx * nx * ntheta);
        for i1 in 0..nx {
            for i2 in 0..nx {
                for k in 0..ntheta {
                    let (x, th) = node_coords(nx, ntheta, i1, i2, k);
                    let f = metric.eval(&x, &[th.cos(), th.sin()]);
                    if !(f > 0.0) {
                        return Err(Error::DegenerateMetric(format!(
                            "F = {f:e} at x = {x:?}, θ = {th}"
                        )));
                    }
                    phi.push(f.ln());
                }
            }
        }
        GridState::new(0.0, nx, ntheta, metric.spec.family, phi)
    }

    pub fn len(&self) -> usize {
        self.nx * self.nx * self.ntheta
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// `(x, θ)` of flat node index `idx`.
    pub fn node(&self, idx: usize) -> ([f64; 2], f64) {
        let k = idx % self.ntheta;
        let i2 = (idx / self.ntheta) % self.nx;
        let i1 = idx / (self.ntheta * self.nx);
        node_coords(self.nx, self.ntheta, i1, i2, k)
    }

    pub fn to_snapshot_json(&self) -> String {
        to_json(self)
    }

    pub fn from_snapshot_json(text: &str) -> Result<Self> {
        let s: GridState =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("snapshot: {e}")))?;
        s.validate()?;
        Ok(s)
    }
}

fn node_coords(nx: usize, nt: usize, i1: usize, i2: usize, k: usize) -> ([f64; 2], f64) {
    (
        [TAU * i1 as f64 / nx as f64, TAU * i2 as f64 / nx as f64],
        TAU * k as f64 / nt as f64,
    )
}

/// `F(x, y) = |y| exp φ(x, atan2(y², y¹))` with `φ` the trigonometric
/// interpolant of a grid state.
#[derive(Clone)]
pub struct SpectralMetric {
    spectrum: Arc<Spectrum>,
    pub family: FamilyId,
    pub t: f64,
}

pub fn reconstruct_metric(state: &GridState) -> Result<SpectralMetric> {
    state.validate()?;
    Ok(SpectralMetric {
        spectrum: Arc::new(Spectrum::from_values(&state.phi, state.nx, state.ntheta)),
        family: state.family,
        t: state.t,
    })
}

impl SpectralMetric {
    pub fn phi(&self, x: &[f64], theta: f64) -> f64 {
        self.spectrum.value_at([x[0], x[1], theta])
    }
}

impl FinslerMetric for SpectralMetric {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let r = y[0].hypot(y[1]);
        r * self.phi(x, y[1].atan2(y[0])).exp()
    }

    fn eval_jet(&self, x: &[Jet], y: &[Jet]) -> Jet {
        let ord = y[0].order();
        let th = Jet::atan2(&y[1], &y[0]);
        let z = [x[0].value(), x[1].value(), th.value()];
        let p = jet_space(3, ord).from_coeffs(ord, self.spectrum.taylor_at(z, ord));
        let subs = [Some(&x[0] - z[0]), Some(&x[1] - z[1]), Some(&th - z[2])];
        let phi = p.substitute(&subs);
        (&y[0] * &y[0] + &y[1] * &y[1]).sqrt() * phi.exp()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != 2 || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::ChartBoundary(x.to_vec()));
        }
        Ok(())
    }

    fn label(&self) -> String {
        format!(
            "spectral[{}×{}×{}, t={}] from {}",
            self.spectrum.nx, self.spectrum.nx, self.spectrum.nt, self.t, self.family
        )
    }
}

/// Per-node data of one grid evaluation.
#[derive(Debug, Clone)]
pub struct NodeFields {
    pub ric: Vec<f64>,
    /// Smallest eigenvalue of `g_ij(x, e(θ))`.
    pub min_eig: Vec<f64>,
}

impl NodeFields {
    pub fn max_abs_ric(&self) -> f64 {
        self.ric.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Order of the jets used for `Ric` at grid nodes.
const NODE_ORDER: usize = 4;

/// Assembles the `F²` jet at a node directly from nodal derivative fields:
/// the `x` displacements are jet variables themselves, so composing the
/// Taylor polynomial of `φ` with `θ(y)` only needs powers of `θ(y) − θ₀`.
struct NodeKernel {
    sp: &'static JetSpace,
    /// Derivative-field multi-indices `(a, b, c)` and `1/(a! b! c!)`.
    taylor: Vec<([usize; 3], f64)>,
    /// For each `(a, b)` (key `a·5 + b`): pairs `(src, dst)` mapping the
    /// y-monomial `src` to `x¹ᵃ x²ᵇ · src`.
    place: Vec<Vec<(usize, usize)>>,
    /// Per fiber angle: powers of `θ(y) − θ_k` and `|y|²`.
    fibers: Vec<(Vec<Vec<f64>>, Jet, [f64; 2])>,
}

impl NodeKernel {
    fn new(nt: usize) -> Self {
        let sp = jet_space(4, NODE_ORDER);
        let taylor = jet_space(3, NODE_ORDER)
            .monomials()
            .iter()
            .map(|e| {
                let a = [e[0] as usize, e[1] as usize, e[2] as usize];
                let f = 1.0 / (factorial(a[0]) * factorial(a[1]) * factorial(a[2]));
                (a, f)
            })
            .collect();
        let mut place = vec![Vec::new(); 25];
        for (src, e) in sp.monomials().iter().enumerate() {
            if e[0] != 0 || e[1] != 0 {
                continue;
            }
            let d = (e[2] + e[3]) as usize;
            for a in 0..=NODE_ORDER {
                for b in 0..=NODE_ORDER - a {
                    if a + b + d <= NODE_ORDER {
                        let dst = sp
                            .index_of(&[a as u8, b as u8, e[2], e[3]])
                            .expect("in range");
                        place[a * 5 + b].push((src, dst));
                    }
                }
            }
        }
        let fibers = (0..nt)
            .map(|k| {
                let th0 = TAU * k as f64 / nt as f64;
                let y = [th0.cos(), th0.sin()];
                let y1 = sp.variable(2, y[0]);
                let y2 = sp.variable(3, y[1]);
                let th = Jet::atan2(&y2, &y1);
                let dth = &th - th.value();
                let mut pows = vec![sp.constant(1.0)];
                for c in 1..=NODE_ORDER {
                    let next = &pows[c - 1] * &dth;
                    pows.push(next);
                }
                let pows = pows.into_iter().map(|p| full_coeffs(sp, &p)).collect();
                (pows, &y1 * &y1 + &y2 * &y2, y)
            })
            .collect();
        NodeKernel {
            sp,
            taylor,
            place,
            fibers,
        }
    }

    fn eval(&self, fields: &[Vec<f64>], node: usize, x: [f64; 2], k: usize) -> Result<(f64, f64)> {
        let (pows, norm2, y) = &self.fibers[k];
        let mut q = vec![0.0; self.sp.len(NODE_ORDER)];
        for (field, &(abc, inv)) in fields.iter().zip(&self.taylor) {
            let p = field[node] * inv;
            if p == 0.0 {
                continue;
            }
            let pw = &pows[abc[2]];
            for &(src, dst) in &self.place[abc[0] * 5 + abc[1]] {
                q[dst] += p * pw[src];
            }
        }
        let q = self.sp.from_coeffs(NODE_ORDER, q);
        let f2 = norm2 * &(q * 2.0).exp();
        let pj = PointJets::from_f2_jet(&x, y, f2)?;
        let ric = pj.ric_jet().value();
        let min_eig = pj.g().symmetric_eigenvalues().min();
        Ok((ric, min_eig))
    }
}

fn full_coeffs(sp: &'static JetSpace, j: &Jet) -> Vec<f64> {
    let mut c = j.coeffs().to_vec();
    c.resize(sp.len(NODE_ORDER), 0.0);
    c
}

/// `Ric` and `min eig g` at every node, evaluated in parallel.
pub fn grid_fields(state: &GridState) -> Result<NodeFields> {
    state.validate()?;
    let spec = Spectrum::from_values(&state.phi, state.nx, state.ntheta);
    let kernel = NodeKernel::new(state.ntheta);
    let fields: Vec<Vec<f64>> = kernel
        .taylor
        .par_iter()
        .map(|&(abc, _)| spec.derivative_field([abc[0] as u8, abc[1] as u8, abc[2] as u8]))
        .collect();
    let vals: Vec<(f64, f64)> = (0..state.len())
        .into_par_iter()
        .map(|idx| {
            let (x, _) = state.node(idx);
            kernel.eval(&fields, idx, x, idx % state.ntheta)
        })
        .collect::<Result<_>>()?;
    let (ric, min_eig) = vals.into_iter().unzip();
    Ok(NodeFields { ric, min_eig })
}

/// Guards the reaction time scale `dt ≤ 0.5/max|Ric|` only. Explicit RK4 is
/// also limited by the diffusion of fiber-constant modes, which decay at rate
/// `|k|² e^{−2φ}`: stability needs roughly `dt ≤ 2.8/(2(nx/2)² max e^{−2φ})`,
/// about `5e−3` at `nx = 32`. Larger steps amplify rounding noise in the
/// highest `x` modes.
fn cfl_check(fields: &NodeFields, dt: f64) -> Result<()> {
    let m = fields.max_abs_ric();
    let limit = if m > 0.0 { 0.5 / m } else { f64::INFINITY };
    if dt > limit {
        return Err(Error::CflViolation { dt, limit });
    }
    Ok(())
}

/// One classical RK4 step of `dφ/dt = −Ric[φ]` on the full grid.
pub fn step_flow_grid(state: &GridState, dt: f64) -> Result<GridState> {
    let k1 = grid_fields(state)?;
    step_from_fields(state, dt, &k1, state.t + dt, None)
}

/// RK4 step reusing the first-stage evaluation `k1`; the new state is
/// stamped with time `t_next`.
///
/// With `fiber_modes = Some(M)` every stage right-hand side is projected onto
/// fiber modes `|m| ≤ M` (a Galerkin truncation in `θ`). Around the flat
/// metric the mode `φ = cos(k x¹) cos(mθ)`, `m ≠ 1`, has
/// `⟨−Ric, φ⟩/⟨φ, φ⟩ = k²(m² − 4)/4`, so without truncation rounding noise in
/// high fiber modes is amplified without bound.
pub fn step_from_fields(
    state: &GridState,
    dt: f64,
    k1: &NodeFields,
    t_next: f64,
    fiber_modes: Option<usize>,
) -> Result<GridState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("dt must be positive (got {dt})")));
    }
    cfl_check(k1, dt)?;
    let project = |mut k: Vec<f64>| {
        if let Some(m) = fiber_modes {
            project_fiber(&mut k, state.ntheta, m);
        }
        k
    };
    let stage = |weight: f64, k: &[f64]| -> Result<Vec<f64>> {
        let phi: Vec<f64> = state
            .phi
            .iter()
            .zip(k)
            .map(|(p, r)| p - weight * dt * r)
            .collect();
        let s = GridState {
            phi,
            ..state.clone()
        };
        Ok(project(grid_fields(&s)?.ric))
    };
    let k1 = project(k1.ric.clone());
    let k2 = stage(0.5, &k1)?;
    let k3 = stage(0.5, &k2)?;
    let k4 = stage(1.0, &k3)?;
    let phi: Vec<f64> = state
        .phi
        .iter()
        .enumerate()
        .map(|(i, p)| p - dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    let next = GridState {
        t: t_next,
        phi,
        ..state.clone()
    };
    next.validate()?;
    Ok(next)
}

/// Homothety factor of `F = r·F_model`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParametricState {
    pub t: f64,
    pub r: f64,
}

/// Exact update `r(t + dt)² = r(t)² − 2κ dt`.
pub fn step_flow_parametric(
    state: ParametricState,
    model_ric: f64,
    dt: f64,
) -> Result<ParametricState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("dt must be positive (got {dt})")));
    }
    if !(state.r > 0.0) {
        return Err(Error::NonPositive(format!(
            "homothety factor r = {}",
            state.r
        )));
    }
    let r2 = state.r * state.r - 2.0 * model_ric * dt;
    if r2 <= 0.0 {
        return Err(Error::Extinction {
            t: state.t + state.r * state.r / (2.0 * model_ric),
        });
    }
    Ok(ParametricState {
        t: state.t + dt,
        r: r2.sqrt(),
    })
}

/// `F = r·F_model`.
#[derive(Clone)]
pub struct Homothetic {
    pub model: Arc<dyn FinslerMetric>,
    pub r: f64,
}

impl FinslerMetric for Homothetic {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.r * self.model.eval(x, y)
    }

    fn eval_jet(&self, x: &[Jet], y: &[Jet]) -> Jet {
        self.model.eval_jet(x, y) * self.r
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        self.model.check_point(x)
    }

    fn is_riemannian(&self) -> bool {
        self.model.is_riemannian()
    }

    fn label(&self) -> String {
        format!("{} · {}", self.r, self.model.label())
    }
}

/// Splits a spec into a unit model and its initial homothety factor: the
/// round sphere of radius `r` becomes `r ×` the unit sphere, every other
/// family is its own model with factor 1.
pub fn homothety_model(spec: &MetricSpec) -> Result<(MetricFamily, f64)> {
    if spec.family == FamilyId::RoundSphere {
        let r = spec.param("r", 1.0);
        Ok((build_metric(&spec.clone().with("r", 1.0))?, r))
    } else {
        Ok((build_metric(spec)?, 1.0))
    }
}

/// Ricci scalar of a homothety-closed model; fails with `NotApplicable` if
/// `Ric` varies over the sample set.
pub fn model_ricci(model: &MetricFamily, sample_count: usize, seed: u64) -> Result<f64> {
    let mut vals = Vec::with_capacity(sample_count);
    for (x, y) in sample_points(&model.spec, sample_count, seed) {
        vals.push(PointJets::new(model, &x, &y, 4)?.ric_jet().value());
    }
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo > 1e-8 * hi.abs().max(1.0) {
        return Err(Error::NotApplicable(format!(
            "{} has non-constant Ric (range [{lo}, {hi}]); parametric mode needs a homothety-closed model",
            model.label()
        )));
    }
    Ok(0.5 * (lo + hi))
}

/// `F²(t) = F₀²(1 − 2 Ric₀ t)` at `(x, y)`.
pub fn closed_form_predictor(
    initial: &dyn FinslerMetric,
    x: &[f64],
    y: &[f64],
    t: f64,
) -> Result<f64> {
    let pj = PointJets::new(initial, x, y, 4)?;
    let ric0 = pj.ric_jet().value();
    let factor = 1.0 - 2.0 * ric0 * t;
    if factor <= 0.0 {
        return Err(Error::Extinction { t: 0.5 / ric0 });
    }
    Ok(pj.f2().value() * factor)
}

/// One row of the monitor series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitorSample {
    pub t: f64,
    pub min_ric: f64,
    pub max_ric: f64,
    pub min_flag: f64,
    /// `sup ‖Ric_ij‖_g` over the monitor points.
    #[serde(rename = "K_bound")]
    pub k_bound: f64,
    /// `α/(1 + αt)` with `α` the minimum of `Ric` at `t = 0`.
    pub bernoulli_bound: f64,
    pub min_eig_g: f64,
    /// `max |∂t g_jk + 2Ric_jk|` over the monitor points, by finite
    /// differences in time; `NaN` where neighbouring states are missing.
    pub residual_flow_eqv: f64,
}

pub const MONITOR_HEADER: &str =
    "t,min_ric,max_ric,min_flag,K_bound,bernoulli_bound,min_eig_g,residual_flow_eqv";

impl MonitorSample {
    pub fn csv_row(&self) -> String {
        [
            self.t,
            self.min_ric,
            self.max_ric,
            self.min_flag,
            self.k_bound,
            self.bernoulli_bound,
            self.min_eig_g,
            self.residual_flow_eqv,
        ]
        .iter()
        .map(|&v| fmt_f64(v))
        .collect::<Vec<_>>()
        .join(",")
    }
}

pub fn write_monitor_csv<W: io::Write>(mut w: W, samples: &[MonitorSample]) -> io::Result<()> {
    writeln!(w, "{MONITOR_HEADER}")?;
    for s in samples {
        writeln!(w, "{}", s.csv_row())?;
    }
    Ok(())
}

/// Curvature monitors at one point.
#[derive(Debug, Clone)]
pub struct PointMonitor {
    pub ric: f64,
    /// Minimum flag curvature over the coordinate-seeded orthonormal completion.
    pub min_flag: f64,
    pub ric_ij: DMatrix<f64>,
    pub ric_norm: f64,
    pub min_eig: f64,
}

pub fn point_monitor(metric: &dyn FinslerMetric, x: &[f64], y: &[f64]) -> Result<PointMonitor> {
    let pj = PointJets::new(metric, x, y, 6)?;
    let n = pj.n;
    let g = pj.g();
    let ric_jet = pj.ric_jet();
    let r = Tensor {
        n,
        rank: 2,
        data: pj
            .reduced_curvature_jets()
            .iter()
            .map(|j| j.value())
            .collect(),
    };
    let mut min_flag = f64::INFINITY;
    for e in coordinate_completion(&g, y) {
        let k = flag_from_parts(&g, &r, y, e.as_slice(), ORTHOGONALITY_TOL)?;
        min_flag = min_flag.min(k);
    }
    let half = &(pj.f2().clone() * 0.5) * &ric_jet;
    let mut ric_ij = DMatrix::zeros(n, n);
    for i in 0..n {
        let di = half.d(pj.yvar(i));
        for j in 0..n {
            ric_ij[(i, j)] = di.d(pj.yvar(j)).value();
        }
    }
    let ric_ij = (&ric_ij + ric_ij.transpose()) * 0.5;
    Ok(PointMonitor {
        ric: ric_jet.value(),
        min_flag,
        ric_norm: tensor_norm(&pj.ginv(), &ric_ij),
        min_eig: g.symmetric_eigenvalues().min(),
        ric_ij,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    Grid,
    Parametric,
}

impl FlowMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(FlowMode::Grid),
            "parametric" => Ok(FlowMode::Parametric),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (grid | parametric)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub metric: MetricSpec,
    pub mode: FlowMode,
    pub nx: usize,
    pub ntheta: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Time between monitor rows; must be a multiple of `dt`.
    pub cadence: f64,
    pub seed: u64,
    /// Number of monitor points for `K_bound` and the flow-equivalence residual.
    pub sample_count: usize,
    /// Keep a copy of the grid state at every monitor time.
    pub snapshots: bool,
    /// Fiber modes `|m|` kept by grid runs; `None` evolves every resolved
    /// mode (see [`step_from_fields`]).
    pub fiber_modes: Option<usize>,
}

impl FlowConfig {
    pub fn new(metric: MetricSpec, mode: FlowMode) -> Self {
        FlowConfig {
            metric,
            mode,
            nx: 32,
            ntheta: 32,
            dt: 1e-3,
            t_end: 0.1,
            cadence: 0.01,
            seed: 0,
            sample_count: 16,
            snapshots: false,
            fiber_modes: Some(2),
        }
    }

    /// Number of steps and monitor stride in steps.
    pub fn schedule(&self) -> Result<(usize, usize)> {
        let whole = |v: f64, what: &str| -> Result<usize> {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{what} must be positive (got {v})")));
            }
            let k = (v / self.dt).round();
            if k < 1.0 || (k * self.dt - v).abs() > 1e-9 * v.max(self.dt) {
                return Err(Error::Config(format!(
                    "{what} = {v} is not a multiple of dt = {}",
                    self.dt
                )));
            }
            Ok(k as usize)
        };
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!(
                "dt must be positive (got {})",
                self.dt
            )));
        }
        let steps = whole(self.t_end, "t_end")?;
        let stride = whole(self.cadence, "cadence")?;
        if self.sample_count == 0 {
            return Err(Error::Config("sample_count must be at least 1".into()));
        }
        Ok((steps, stride))
    }
}

/// Monitor series of one run and the reason it stopped early, if it did.
#[derive(Debug, Clone)]
pub struct FlowRun {
    pub config: FlowConfig,
    pub samples: Vec<MonitorSample>,
    pub snapshots: Vec<GridState>,
    /// Extinction or loss of strong convexity before `t_end`.
    pub stop: Option<Error>,
    /// Time of the last state reached.
    pub final_t: f64,
    /// Final grid state (grid mode) or homothety factor (parametric mode).
    pub final_grid: Option<GridState>,
    pub final_parametric: Option<ParametricState>,
    /// Homothety factor at each sample (parametric mode).
    pub radii: Vec<f64>,
}

impl FlowRun {
    pub fn csv(&self) -> String {
        let mut out = Vec::new();
        write_monitor_csv(&mut out, &self.samples).expect("writing to memory");
        String::from_utf8(out).expect("ASCII")
    }

    /// `(t, F_t)` at every sample; grid runs need `snapshots` enabled.
    pub fn metrics(&self) -> Result<Vec<(f64, Arc<dyn FinslerMetric>)>> {
        match self.config.mode {
            FlowMode::Parametric => {
                let (model, _) = homothety_model(&self.config.metric)?;
                let model: Arc<dyn FinslerMetric> = Arc::new(model);
                Ok(self
                    .samples
                    .iter()
                    .zip(&self.radii)
                    .map(|(s, &r)| {
                        let m: Arc<dyn FinslerMetric> = Arc::new(Homothetic {
                            model: model.clone(),
                            r,
                        });
                        (s.t, m)
                    })
                    .collect())
            }
            FlowMode::Grid => {
                if self.snapshots.len() != self.samples.len() {
                    return Err(Error::Config("grid run was made without snapshots".into()));
                }
                self.snapshots
                    .iter()
                    .map(|s| {
                        let m: Arc<dyn FinslerMetric> = Arc::new(reconstruct_metric(s)?);
                        Ok((s.t, m))
                    })
                    .collect()
            }
        }
    }
}

/// Monitor values at one state, before the Bernoulli comparator and the
/// time-difference residual are known.
struct Observation {
    sample: MonitorSample,
    ric_ij: Vec<DMatrix<f64>>,
}

enum Engine {
    Grid {
        state: GridState,
        fields: Option<NodeFields>,
        points: Vec<usize>,
        fiber_modes: Option<usize>,
    },
    Parametric {
        state: ParametricState,
        model: Arc<MetricFamily>,
        kappa: f64,
        points: Vec<(Vec<f64>, Vec<f64>)>,
    },
}

impl Engine {
    fn metric(&self) -> Result<Arc<dyn FinslerMetric>> {
        Ok(match self {
            Engine::Grid { state, .. } => Arc::new(reconstruct_metric(state)?),
            Engine::Parametric { state, model, .. } => Arc::new(Homothetic {
                model: model.clone(),
                r: state.r,
            }),
        })
    }

    fn points(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        match self {
            Engine::Grid { state, points, .. } => points
                .iter()
                .map(|&idx| {
                    let (x, th) = state.node(idx);
                    (x.to_vec(), vec![th.cos(), th.sin()])
                })
                .collect(),
            Engine::Parametric { points, .. } => points.clone(),
        }
    }

    fn observe(&mut self, t: f64) -> Result<Observation> {
        let metric = self.metric()?;
        let points = self.points();
        let mut sample = MonitorSample {
            t,
            min_ric: f64::INFINITY,
            max_ric: f64::NEG_INFINITY,
            min_flag: f64::INFINITY,
            k_bound: 0.0,
            bernoulli_bound: f64::NAN,
            min_eig_g: f64::INFINITY,
            residual_flow_eqv: f64::NAN,
        };
        let mons: Vec<PointMonitor> = points
            .par_iter()
            .map(|(x, y)| point_monitor(metric.as_ref(), x, y))
            .collect::<Result<_>>()?;
        for m in &mons {
            sample.k_bound = sample.k_bound.max(m.ric_norm);
        }
        match self {
            Engine::Grid { state, fields, .. } => {
                let f = match fields.take() {
                    Some(f) => f,
                    None => grid_fields(state)?,
                };
                for (r, e) in f.ric.iter().zip(&f.min_eig) {
                    sample.min_ric = sample.min_ric.min(*r);
                    sample.max_ric = sample.max_ric.max(*r);
                    sample.min_eig_g = sample.min_eig_g.min(*e);
                }
                // one flag per node in two dimensions, and it equals Ric
                sample.min_flag = sample.min_ric;
                *fields = Some(f);
            }
            Engine::Parametric { .. } => {
                for m in &mons {
                    sample.min_ric = sample.min_ric.min(m.ric);
                    sample.max_ric = sample.max_ric.max(m.ric);
                    sample.min_flag = sample.min_flag.min(m.min_flag);
                    sample.min_eig_g = sample.min_eig_g.min(m.min_eig);
                }
            }
        }
        Ok(Observation {
            sample,
            ric_ij: mons.into_iter().map(|m| m.ric_ij).collect(),
        })
    }

    fn advance(&mut self, dt: f64, t_next: f64) -> Result<()> {
        match self {
            Engine::Grid {
                state,
                fields,
                fiber_modes,
                ..
            } => {
                let k1 = match fields.take() {
                    Some(f) => f,
                    None => grid_fields(state)?,
                };
                *state = step_from_fields(state, dt, &k1, t_next, *fiber_modes)?;
            }
            Engine::Parametric { state, kappa, .. } => {
                let mut next = step_flow_parametric(*state, *kappa, dt)?;
                next.t = t_next;
                *state = next;
            }
        }
        Ok(())
    }
}

fn g_at(metric: &dyn FinslerMetric, points: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<DMatrix<f64>>> {
    points
        .iter()
        .map(|(x, y)| Ok(PointJets::new(metric, x, y, 2)?.g()))
        .collect()
}

/// `max |Σ_s w_s g_s / dt + 2 Ric_ij|` with finite-difference weights `w`.
fn flow_eqv_residual(
    weights: &[(f64, &Arc<dyn FinslerMetric>)],
    ric_ij: &[DMatrix<f64>],
    points: &[(Vec<f64>, Vec<f64>)],
    dt: f64,
) -> Result<f64> {
    let mut gdot: Vec<DMatrix<f64>> = ric_ij.iter().map(|r| r * 2.0).collect();
    for (w, m) in weights {
        for (acc, g) in gdot.iter_mut().zip(g_at(m.as_ref(), points)?) {
            *acc += g * (*w / dt);
        }
    }
    Ok(gdot.iter().map(|m| m.amax()).fold(0.0, f64::max))
}

/// Integrates until `t_end`, extinction or loss of strong convexity.
///
/// Configuration problems and a degenerate initial metric are errors; a run
/// that stops early returns its partial series with `stop` set.
pub fn run_flow(config: &FlowConfig) -> Result<FlowRun> {
    let (steps, stride) = config.schedule()?;
    let dt = config.dt;
    let mut engine = match config.mode {
        FlowMode::Grid => {
            let metric = build_metric(&config.metric)?;
            let mut state = GridState::from_metric(&metric, config.nx, config.ntheta)?;
            if let Some(m) = config.fiber_modes {
                project_fiber(&mut state.phi, state.ntheta, m);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let points = (0..config.sample_count)
                .map(|_| rng.gen_range(0..state.len()))
                .collect();
            Engine::Grid {
                state,
                fields: None,
                points,
                fiber_modes: config.fiber_modes,
            }
        }
        FlowMode::Parametric => {
            let (model, r0) = homothety_model(&config.metric)?;
            let kappa = model_ricci(&model, config.sample_count, config.seed)?;
            let points = sample_points(&model.spec, config.sample_count, config.seed);
            Engine::Parametric {
                state: ParametricState { t: 0.0, r: r0 },
                model: Arc::new(model),
                kappa,
                points,
            }
        }
    };
    let points = engine.points();
    let mut run = FlowRun {
        config: config.clone(),
        samples: Vec::new(),
        snapshots: Vec::new(),
        stop: None,
        final_t: 0.0,
        final_grid: None,
        final_parametric: None,
        radii: Vec::new(),
    };
    // (step index, metric) of the last three states
    let mut history: VecDeque<(usize, Arc<dyn FinslerMetric>)> = VecDeque::new();
    let mut pending: Vec<(usize, Observation)> = Vec::new();
    let mut alpha = f64::NAN;
    for k in 0..=steps {
        let t = k as f64 * dt;
        if k % stride == 0 || k == steps {
            let obs = match engine.observe(t) {
                Ok(o) => o,
                Err(e) if k == 0 => return Err(e),
                Err(e) => {
                    run.stop = Some(e);
                    break;
                }
            };
            if k == 0 {
                alpha = obs.sample.min_ric;
            }
            if config.snapshots {
                if let Engine::Grid { state, .. } = &engine {
                    run.snapshots.push(state.clone());
                }
            }
            if let Engine::Parametric { state, .. } = &engine {
                run.radii.push(state.r);
            }
            pending.push((k, obs));
        }
        history.push_back((k, engine.metric()?));
        if history.len() > 3 {
            history.pop_front();
        }
        resolve_pending(
            &mut pending,
            &mut run.samples,
            &history,
            &points,
            dt,
            k == steps,
        )?;
        run.final_t = t;
        if k == steps {
            break;
        }
        if let Err(e) = engine.advance(dt, (k + 1) as f64 * dt) {
            run.stop = Some(e);
            break;
        }
    }
    // whatever could not be differenced keeps a NaN residual
    for (_, obs) in pending.drain(..) {
        run.samples.push(obs.sample);
    }
    for s in &mut run.samples {
        s.bernoulli_bound = bernoulli_solution(alpha, s.t);
    }
    match engine {
        Engine::Grid { state, .. } => run.final_grid = Some(state),
        Engine::Parametric { state, .. } => run.final_parametric = Some(state),
    }
    Ok(run)
}

fn resolve_pending(
    pending: &mut Vec<(usize, Observation)>,
    out: &mut Vec<MonitorSample>,
    history: &VecDeque<(usize, Arc<dyn FinslerMetric>)>,
    points: &[(Vec<f64>, Vec<f64>)],
    dt: f64,
    last: bool,
) -> Result<()> {
    let find = |i: usize| history.iter().find(|(j, _)| *j == i).map(|(_, m)| m);
    let mut keep = Vec::new();
    for (j, mut obs) in pending.drain(..) {
        let weights: Option<Vec<(f64, &Arc<dyn FinslerMetric>)>> = if j >= 1 {
            match (find(j - 1), find(j + 1)) {
                (Some(a), Some(b)) => Some(vec![(-0.5, a), (0.5, b)]),
                _ if last && j >= 2 => match (find(j - 2), find(j - 1), find(j)) {
                    (Some(a), Some(b), Some(c)) => Some(vec![(0.5, a), (-2.0, b), (1.5, c)]),
                    _ => None,
                },
                _ => None,
            }
        } else {
            match (find(0), find(1), find(2)) {
                (Some(a), Some(b), Some(c)) => Some(vec![(-1.5, a), (2.0, b), (-0.5, c)]),
                _ => None,
            }
        };
        match weights {
            Some(w) => {
                obs.sample.residual_flow_eqv = flow_eqv_residual(&w, &obs.ric_ij, points, dt)?;
                out.push(obs.sample);
            }
            None => keep.push((j, obs)),
        }
    }
    *pending = keep;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump() -> MetricFamily {
        build_metric(&MetricSpec::new(FamilyId::RiemannianTorus, 2).with("amp", 0.1)).unwrap()
    }

    #[test]
    fn grid_ric_matches_analytic_at_nodes() {
        let m = bump();
        let s = GridState::from_metric(&m, 16, 16).unwrap();
        let f = grid_fields(&s).unwrap();
        for idx in [0, 37, 1000, 4095] {
            let (x, th) = s.node(idx);
            let want = PointJets::new(&m, &x, &[th.cos(), th.sin()], 4)
                .unwrap()
                .ric_jet()
                .value();
            assert!(
                (f.ric[idx] - want).abs() < 1e-9,
                "{} vs {}",
                f.ric[idx],
                want
            );
        }
    }

    #[test]
    fn parametric_sphere_closed_form() {
        let s = ParametricState { t: 0.0, r: 1.0 };
        let s = step_flow_parametric(s, 1.0, 0.25).unwrap();
        assert!((s.r * s.r - 0.5).abs() < 1e-15);
        let err = step_flow_parametric(s, 1.0, 0.3).unwrap_err();
        assert_eq!(err, Error::Extinction { t: 0.5 });
    }
}
