//! Multistage training: a plain PINN stage followed by correction stages
//! that are initialized from the spectrum of the current equation residual.
//!
//! Stage `n ≥ 1` sees the composite `u_{n−1} = Σ_{j<n} ε_j u_j` frozen and
//! trains `u_n` to minimize `PINN_loss(u_{n−1} + ε_n u_n) / ε_n²`, where
//! `ε_n` is the RMS of the interior residual of `u_{n−1}` on the spectrum
//! grid. The division keeps the stage objective O(1), so `u_n` itself stays
//! of unit scale, matching the normalized-residual target of the linear case.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::autodiff::{eval_jets, loss_parameter_gradient, PointJets, PointwiseLoss};
use crate::error::{check_dim, Error, Result};
use crate::network::{
    apply_scale_factor, scale_factor_for_frequency, scale_output_layer, xavier_init, InitConfig, NetworkParams,
};
use crate::optim::{minimize, LbfgsStatus, LossEntry, OptimConfig};
use crate::problems::{CollocationPoint, PointKind, Problem, ProblemConfig, JET};
use crate::spectral::{
    build_rff_layer, dft2, extract_top_modes_multi, grid_nodes, normalize_psd, psd_multi,
    sample_frequencies, Domain2, FrequencyDistribution, GridField, SpectralModes, Spectrum,
};

/// Residual RMS below which further stages are skipped.
pub const DEGENERATE_EPSILON: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pinn,
    Msnn,
    SiMspinn,
    RffMspinn,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pinn, Method::Msnn, Method::SiMspinn, Method::RffMspinn];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pinn => "pinn",
            Method::Msnn => "msnn",
            Method::SiMspinn => "si_mspinn",
            Method::RffMspinn => "rff_mspinn",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollocationConfig {
    pub interior: usize,
    pub boundary: usize,
    pub initial: usize,
    /// Correction stages also train on every spectrum-grid node.
    pub grid_interior: bool,
}

impl Default for CollocationConfig {
    fn default() -> Self {
        Self {
            interior: 2540,
            boundary: 80,
            initial: 80,
            grid_interior: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub interior: f64,
    pub boundary: f64,
    pub initial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            interior: 1.0,
            boundary: 1.0,
            initial: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for kind in PointKind::ALL {
            let w = self.get(kind);
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "loss weight for {kind:?} must be positive, got {w}"
                )));
            }
        }
        Ok(())
    }

    fn get(&self, kind: PointKind) -> f64 {
        match kind {
            PointKind::Interior => self.interior,
            PointKind::Boundary => self.boundary,
            PointKind::Initial => self.initial,
        }
    }
}

/// Replacement settings for one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageOverride {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optim: Option<OptimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<LossWeights>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    /// Correction stages after the base PINN; ignored for `pinn`.
    pub stages: usize,
    /// Master seed from which every stage seed is derived.
    pub seed: u64,
    pub problem: ProblemConfig,
    pub init: InitConfig,
    pub optim: OptimConfig,
    #[serde(rename = "stage", skip_serializing_if = "Vec::is_empty")]
    pub stage_overrides: Vec<StageOverride>,
    pub collocation: CollocationConfig,
    pub weights: LossWeights,
    /// Grid on which residual spectra and ε are computed.
    pub spectrum_grid: [usize; 2],
    /// Inclusive grid on which errors against the reference are measured.
    pub eval_grid: [usize; 2],
    /// Draw fresh collocation points for each stage.
    pub resample_per_stage: bool,
    /// Root directory for run artifacts; has no effect on the numerics.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<std::path::PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::RffMspinn,
            stages: 2,
            seed: 0,
            problem: ProblemConfig::default(),
            init: InitConfig::default(),
            optim: OptimConfig::default(),
            stage_overrides: Vec::new(),
            collocation: CollocationConfig::default(),
            weights: LossWeights::default(),
            spectrum_grid: [64, 64],
            eval_grid: [101, 101],
            resample_per_stage: true,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.init.validate()?;
        let seeds = std::iter::once(self.seed)
            .chain(std::iter::once(self.init.seed))
            .chain(self.stage_overrides.iter().filter_map(|o| o.init.as_ref().map(|i| i.seed)));
        for seed in seeds {
            if seed > i64::MAX as u64 {
                return Err(Error::InvalidArgument(format!("seed {seed} exceeds 2^63 - 1")));
            }
        }
        self.optim.validate()?;
        for o in &self.stage_overrides {
            if o.index > self.stages {
                return Err(Error::InvalidArgument(format!(
                    "stage override {} exceeds the {} configured stages",
                    o.index, self.stages
                )));
            }
            if let Some(i) = &o.init {
                i.validate()?;
            }
            if let Some(c) = &o.optim {
                c.validate()?;
            }
            if let Some(w) = &o.weights {
                w.validate()?;
            }
        }
        self.weights.validate()?;
        let problem = self.problem.as_problem();
        for kind in PointKind::ALL {
            if problem.n_residuals(kind) > 0 && self.count(kind) == 0 {
                return Err(Error::InvalidArgument(format!(
                    "{} needs at least one {kind:?} point",
                    problem.name()
                )));
            }
        }
        if self.spectrum_grid.iter().chain(&self.eval_grid).any(|&n| n < 2) {
            return Err(Error::InvalidArgument("grids need at least 2 nodes per axis".into()));
        }
        Ok(())
    }

    fn count(&self, kind: PointKind) -> usize {
        match kind {
            PointKind::Interior => self.collocation.interior,
            PointKind::Boundary => self.collocation.boundary,
            PointKind::Initial => self.collocation.initial,
        }
    }

    /// Correction stages actually run for this method.
    pub fn correction_stages(&self) -> usize {
        if self.method == Method::Pinn {
            0
        } else {
            self.stages
        }
    }

    pub fn init_for(&self, stage: usize) -> &InitConfig {
        self.stage_overrides
            .iter()
            .find(|o| o.index == stage)
            .and_then(|o| o.init.as_ref())
            .unwrap_or(&self.init)
    }

    pub fn weights_for(&self, stage: usize) -> &LossWeights {
        self.stage_overrides
            .iter()
            .find(|o| o.index == stage)
            .and_then(|o| o.weights.as_ref())
            .unwrap_or(&self.weights)
    }

    pub fn optim_for(&self, stage: usize) -> &OptimConfig {
        self.stage_overrides
            .iter()
            .find(|o| o.index == stage)
            .and_then(|o| o.optim.as_ref())
            .unwrap_or(&self.optim)
    }
}

#[derive(Clone, Copy)]
enum SeedPurpose {
    Weights = 1,
    Collocation = 2,
    Frequencies = 3,
    Phases = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_seed(master: u64, offset: u64, stage: usize, purpose: SeedPurpose) -> u64 {
    let a = splitmix64(master ^ splitmix64(offset));
    let b = splitmix64(a ^ (stage as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    // Kept below 2⁶³ so every seed survives a round trip through TOML.
    splitmix64(b ^ purpose as u64) >> 1
}

/// Collocation points grouped by kind: interior, boundary, then initial.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    points: Vec<CollocationPoint>,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(points: Vec<CollocationPoint>) -> Self {
        let mut points = points;
        points.sort_by_key(|p| p.kind as u8);
        let coords = points.iter().flat_map(|p| p.x).collect();
        Self { points, coords }
    }

    pub fn sample(problem: &dyn Problem, counts: &CollocationConfig, seed: u64) -> Self {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let mut points = Vec::new();
        for (kind, n) in [
            (PointKind::Interior, counts.interior),
            (PointKind::Boundary, counts.boundary),
            (PointKind::Initial, counts.initial),
        ] {
            if problem.n_residuals(kind) > 0 {
                points.extend(problem.sample(kind, n, &mut rng));
            }
        }
        Self::new(points)
    }

    pub fn points(&self) -> &[CollocationPoint] {
        &self.points
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, kind: PointKind) -> usize {
        self.points.iter().filter(|p| p.kind == kind).count()
    }
}

/// How a stage network was initialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StageInit {
    Xavier,
    Scaled {
        kappa: f64,
        dominant_frequency: f64,
    },
    Modes(SpectralModes),
    Frequencies {
        frequencies: Vec<[f64; 2]>,
        uniform_fallback: bool,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub index: usize,
    pub network: NetworkParams,
    /// Residual RMS entering this stage; 1 for the base stage.
    pub epsilon: f64,
    pub seed: u64,
    pub init: StageInit,
    pub history: Vec<LossEntry>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub lbfgs_status: Option<LbfgsStatus>,
}

/// `u_s(x) = Σ_j ε_j u_j(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeSolution {
    stages: Vec<StageRecord>,
}

impl CompositeSolution {
    pub fn new(base: StageRecord) -> Self {
        Self { stages: vec![base] }
    }

    pub fn from_stages(stages: Vec<StageRecord>) -> Result<Self> {
        let first = stages
            .first()
            .ok_or_else(|| Error::InvalidArgument("a composite needs at least one stage".into()))?;
        let (inputs, outputs) = (first.network.input_dim(), first.network.output_dim());
        for s in &stages {
            check_dim("stage input dimension", inputs, s.network.input_dim())?;
            check_dim("stage output dimension", outputs, s.network.output_dim())?;
            if !s.epsilon.is_finite() {
                return Err(Error::NonFinite {
                    location: format!("epsilon of stage {}", s.index),
                    value: s.epsilon,
                });
            }
        }
        Ok(Self { stages })
    }

    pub fn stages(&self) -> &[StageRecord] {
        &self.stages
    }

    pub fn push(&mut self, stage: StageRecord) -> Result<()> {
        check_dim("stage output dimension", self.output_dim(), stage.network.output_dim())?;
        self.stages.push(stage);
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.stages[0].network.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.stages[0].network.input_dim()
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.epsilon).collect()
    }

    /// Composite jets at `points` (layout of [`eval_jets`]).
    pub fn jets(&self, points: &[f64]) -> Result<Vec<f64>> {
        let mut total = eval_jets(&self.stages[0].network, points)?;
        let e0 = self.stages[0].epsilon;
        if e0 != 1.0 {
            total.iter_mut().for_each(|v| *v *= e0);
        }
        for s in &self.stages[1..] {
            let jets = eval_jets(&s.network, points)?;
            for (t, v) in total.iter_mut().zip(jets) {
                *t += s.epsilon * v;
            }
        }
        Ok(total)
    }

    /// Composite outputs at `points`, point-major.
    pub fn values(&self, points: &[f64]) -> Result<Vec<f64>> {
        let jets = self.jets(points)?;
        Ok(jets.iter().step_by(JET).copied().collect())
    }
}

/// Per-point loss of `frozen + scale · u` divided by `scale²`.
struct StageLoss<'a> {
    problem: &'a dyn Problem,
    points: &'a PointSet,
    /// `λ_kind / N_kind`.
    weights: [f64; 3],
    frozen: Option<&'a [f64]>,
    scale: f64,
}

impl<'a> StageLoss<'a> {
    fn new(
        problem: &'a dyn Problem,
        points: &'a PointSet,
        weights: &LossWeights,
        frozen: Option<&'a [f64]>,
        scale: f64,
    ) -> Result<Self> {
        let mut w = [0.0; 3];
        for kind in PointKind::ALL {
            let n = points.count(kind);
            if problem.n_residuals(kind) > 0 {
                if n == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "no {kind:?} points for {}",
                        problem.name()
                    )));
                }
                w[kind as usize] = weights.get(kind) / n as f64;
            }
        }
        if let Some(f) = frozen {
            check_dim("frozen jets", points.len() * problem.n_components() * JET, f.len())?;
        }
        Ok(Self {
            problem,
            points,
            weights: w,
            frozen,
            scale,
        })
    }
}

/// Residuals of one point with their Jacobian; at most two components.
fn point_residual(
    problem: &dyn Problem,
    p: &CollocationPoint,
    jets: &[f64],
) -> Result<([f64; 2], [f64; 4 * JET], usize)> {
    let nr = problem.n_residuals(p.kind);
    let width = jets.len();
    let mut r = [0.0; 2];
    let mut jac = [0.0; 4 * JET];
    problem.residual(p, jets, &mut r[..nr], &mut jac[..nr * width])?;
    if let Some(v) = r[..nr].iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            location: format!("{:?} residual at {:?}", p.kind, p.x),
            value: *v,
        });
    }
    Ok((r, jac, nr))
}

impl PointwiseLoss for StageLoss<'_> {
    fn point_loss(&self, index: usize, jets: PointJets<'_>, adjoint: &mut [f64]) -> Result<f64> {
        let p = &self.points.points[index];
        let w = self.weights[p.kind as usize];
        let raw = jets.raw();
        let width = raw.len();
        let mut composite = [0.0; 2 * JET];
        let composite = &mut composite[..width];
        match self.frozen {
            Some(f) => {
                let base = &f[index * width..(index + 1) * width];
                for e in 0..width {
                    composite[e] = base[e] + self.scale * raw[e];
                }
            }
            None => composite.copy_from_slice(raw),
        }
        let (r, jac, nr) = point_residual(self.problem, p, composite)?;
        let inv = 1.0 / (self.scale * self.scale);
        let mut loss = 0.0;
        for c in 0..nr {
            loss += r[c] * r[c];
            let g = 2.0 * w * inv * self.scale * r[c];
            for e in 0..width {
                adjoint[e] += g * jac[c * width + e];
            }
        }
        Ok(w * inv * loss)
    }
}

/// Weighted PINN loss of `net` and its gradient over the trainable parameters.
pub fn pinn_loss(
    net: &NetworkParams,
    problem: &dyn Problem,
    points: &PointSet,
    weights: &LossWeights,
) -> Result<(f64, Vec<f64>)> {
    let loss = StageLoss::new(problem, points, weights, None, 1.0)?;
    let (l, g) = loss_parameter_gradient(net, points.coords(), &loss)?;
    Ok((l, g.into_inner()))
}

/// Unweighted mean squared residual per term of a composite.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub interior: f64,
    pub boundary: f64,
    pub initial: f64,
    /// Weighted sum.
    pub total: f64,
}

pub fn loss_terms(
    solution: &CompositeSolution,
    problem: &dyn Problem,
    points: &PointSet,
    weights: &LossWeights,
) -> Result<LossTerms> {
    let jets = solution.jets(points.coords())?;
    let width = problem.n_components() * JET;
    check_dim("composite jets", points.len() * width, jets.len())?;
    let mut sums = [0.0; 3];
    for (p, j) in points.points().iter().zip(jets.chunks_exact(width)) {
        let (r, _, nr) = point_residual(problem, p, j)?;
        sums[p.kind as usize] += r[..nr].iter().map(|v| v * v).sum::<f64>();
    }
    let mean = |kind: PointKind| {
        let n = points.count(kind);
        if n == 0 {
            0.0
        } else {
            sums[kind as usize] / n as f64
        }
    };
    let (i, b, c) = (mean(PointKind::Interior), mean(PointKind::Boundary), mean(PointKind::Initial));
    Ok(LossTerms {
        interior: i,
        boundary: b,
        initial: c,
        total: weights.interior * i + weights.boundary * b + weights.initial * c,
    })
}

/// The spectrum grid: periodic-style nodes at cell centres, so every node is
/// strictly interior (boundary lines belong to the boundary terms).
pub fn spectrum_domain(problem: &dyn Problem, resolution: [usize; 2]) -> Domain2 {
    let d = problem.domain();
    let half = |a: [f64; 2], n: usize| 0.5 * (a[1] - a[0]) / n as f64;
    let (hx, hy) = (half(d[0], resolution[0]), half(d[1], resolution[1]));
    [[d[0][0] + hx, d[0][1] + hx], [d[1][0] + hy, d[1][1] + hy]]
}

/// Interior equation residual of the composite on the spectrum grid, one
/// field per residual component.
pub fn residual_field(
    solution: &CompositeSolution,
    problem: &dyn Problem,
    resolution: [usize; 2],
) -> Result<Vec<GridField>> {
    let domain = spectrum_domain(problem, resolution);
    let [nx, ny] = resolution;
    let nodes = grid_nodes(domain, nx, ny);
    let jets = solution.jets(&nodes)?;
    let width = problem.n_components() * JET;
    let nr = problem.n_residuals(PointKind::Interior);
    let mut values = vec![Vec::with_capacity(nx * ny); nr];
    for (x, j) in nodes.chunks_exact(2).zip(jets.chunks_exact(width)) {
        let p = CollocationPoint::interior([x[0], x[1]]);
        let (r, _, _) = point_residual(problem, &p, j)?;
        for c in 0..nr {
            values[c].push(r[c]);
        }
    }
    values
        .into_iter()
        .map(|v| GridField::new(nx, ny, domain, v))
        .collect()
}

/// `√(mean of squares)`.
pub fn rms(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("rms of an empty set".into()));
    }
    Ok((values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt())
}

/// RMS pooled over every component of a multi-component field.
pub fn rms_fields(fields: &[GridField]) -> Result<f64> {
    let all: Vec<f64> = fields.iter().flat_map(|f| f.values().iter().copied()).collect();
    rms(&all)
}

/// Nodes of an inclusive `n_x × n_y` grid over the domain, row-major in x.
pub fn eval_nodes(problem: &dyn Problem, resolution: [usize; 2]) -> Vec<f64> {
    let d = problem.domain();
    let [nx, ny] = resolution;
    let lin = |a: [f64; 2], n: usize, i: usize| a[0] + (a[1] - a[0]) * i as f64 / (n - 1) as f64;
    let mut out = Vec::with_capacity(2 * nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            out.push(lin(d[0], nx, i));
            out.push(lin(d[1], ny, j));
        }
    }
    out
}

/// `‖u_s − u_ref‖₂ / ‖u_ref‖₂` per component on the inclusive evaluation grid.
pub fn evaluate_error(
    solution: &CompositeSolution,
    problem: &dyn Problem,
    resolution: [usize; 2],
) -> Result<Vec<f64>> {
    let nodes = eval_nodes(problem, resolution);
    let values = solution.values(&nodes)?;
    let outs = problem.n_components();
    check_dim("solution outputs", outs, solution.output_dim())?;
    let mut err = vec![0.0; outs];
    let mut norm = vec![0.0; outs];
    for (x, u) in nodes.chunks_exact(2).zip(values.chunks_exact(outs)) {
        let reference = problem.reference([x[0], x[1]])?;
        for c in 0..outs {
            err[c] += (u[c] - reference[c]).powi(2);
            norm[c] += reference[c] * reference[c];
        }
    }
    err.iter()
        .zip(&norm)
        .map(|(e, n)| {
            if *n == 0.0 {
                Err(Error::Oracle("reference field is identically zero".into()))
            } else {
                Ok((e / n).sqrt())
            }
        })
        .collect()
}

fn train_stage(
    cfg: &RunConfig,
    stage: usize,
    net: NetworkParams,
    init: StageInit,
    frozen: Option<&CompositeSolution>,
    epsilon: f64,
) -> Result<StageRecord> {
    let problem = cfg.problem.as_problem();
    let point_seed_stage = if cfg.resample_per_stage { stage } else { 0 };
    let seed = derive_seed(cfg.seed, cfg.init_for(stage).seed, point_seed_stage, SeedPurpose::Collocation);
    let mut points = PointSet::sample(problem, &cfg.collocation, seed);
    if stage > 0 && cfg.collocation.grid_interior {
        let grid = grid_nodes(spectrum_domain(problem, cfg.spectrum_grid), cfg.spectrum_grid[0], cfg.spectrum_grid[1]);
        let mut all = points.points().to_vec();
        all.extend(grid.chunks_exact(2).map(|x| CollocationPoint::interior([x[0], x[1]])));
        points = PointSet::new(all);
    }
    let frozen_jets = match frozen {
        Some(sol) => Some(sol.jets(points.coords())?),
        None => None,
    };
    let loss = StageLoss::new(problem, &points, cfg.weights_for(stage), frozen_jets.as_deref(), epsilon)?;
    let mut work = net.clone();
    let objective = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
        work.set_trainable_params(theta)?;
        let (l, g) = loss_parameter_gradient(&work, points.coords(), &loss)?;
        Ok((l, g.into_inner()))
    };
    let optim = cfg.optim_for(stage);
    log::info!(
        "{} stage {stage}: training {} parameters (ε = {epsilon:.3e})",
        cfg.method.as_str(),
        net.n_trainable()
    );
    let report = minimize(objective, &net.trainable_params(), optim)
        .map_err(|e| Error::Training { stage, source: Box::new(e) })?;
    let mut network = net;
    network.set_trainable_params(&report.params)?;
    let initial_loss = report.history.first().map_or(report.final_loss, |e| e.loss);
    log::info!(
        "{} stage {stage}: loss {initial_loss:.3e} → {:.3e}",
        cfg.method.as_str(),
        report.final_loss
    );
    Ok(StageRecord {
        index: stage,
        seed: network.seed(),
        network,
        epsilon,
        init,
        history: report.history,
        initial_loss,
        final_loss: report.final_loss,
        lbfgs_status: report.lbfgs_status,
    })
}

/// A trained base stage tagged with the configuration it depends on.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseStage {
    pub record: StageRecord,
    fingerprint: String,
}

impl BaseStage {
    /// Adopt a previously trained base stage (e.g. from a checkpoint) for `cfg`.
    pub fn from_record(cfg: &RunConfig, record: StageRecord) -> Result<Self> {
        cfg.validate()?;
        if record.index != 0 {
            return Err(Error::InvalidArgument(format!("stage {} is not a base stage", record.index)));
        }
        Ok(Self {
            record,
            fingerprint: base_fingerprint(cfg)?,
        })
    }
}

#[derive(Serialize)]
struct BaseFingerprint<'a> {
    seed: u64,
    problem: &'a ProblemConfig,
    init: &'a InitConfig,
    optim: &'a OptimConfig,
    collocation: &'a CollocationConfig,
    weights: &'a LossWeights,
}

fn base_fingerprint(cfg: &RunConfig) -> Result<String> {
    toml::to_string(&BaseFingerprint {
        seed: cfg.seed,
        problem: &cfg.problem,
        init: cfg.init_for(0),
        optim: cfg.optim_for(0),
        collocation: &CollocationConfig {
            grid_interior: false,
            ..cfg.collocation.clone()
        },
        weights: cfg.weights_for(0),
    })
    .map_err(|e| Error::Format(e.to_string()))
}

/// Train the plain-PINN base stage shared by every method.
pub fn train_base(cfg: &RunConfig) -> Result<BaseStage> {
    cfg.validate()?;
    let problem = cfg.problem.as_problem();
    let init = cfg.init_for(0);
    let dims = init.plain_dims(problem.domain().len(), problem.n_components());
    let net = xavier_init(&dims, derive_seed(cfg.seed, init.seed, 0, SeedPurpose::Weights))?;
    let net = scale_output_layer(&net, init.output_gain.unwrap_or(1.0));
    let record = train_stage(cfg, 0, net, StageInit::Xavier, None, 1.0)?;
    Ok(BaseStage {
        record,
        fingerprint: base_fingerprint(cfg)?,
    })
}

/// Network for correction stage `stage ≥ 1` of `cfg.method`, initialized
/// from the spectra of the current residual components.
pub fn init_stage_network(
    cfg: &RunConfig,
    stage: usize,
    spectra: &[Spectrum],
) -> Result<(NetworkParams, StageInit)> {
    if spectra.is_empty() {
        return Err(Error::InvalidArgument("no residual spectra".into()));
    }
    let problem = cfg.problem.as_problem();
    let init = cfg.init_for(stage);
    let outs = problem.n_components();
    let weight_seed = derive_seed(cfg.seed, init.seed, stage, SeedPurpose::Weights);
    let (net, how) = match cfg.method {
        Method::Pinn => {
            return Err(Error::InvalidArgument("plain PINN has no correction stages".into()))
        }
        Method::Msnn => {
            let power = psd_multi(spectra)?;
            let f_d = power.dominant_frequency();
            let kappa = init.scale_factor.unwrap_or_else(|| scale_factor_for_frequency(f_d));
            let dims = init.plain_dims(2, outs);
            let net = apply_scale_factor(&xavier_init(&dims, weight_seed)?, kappa)?;
            (
                net,
                StageInit::Scaled {
                    kappa,
                    dominant_frequency: f_d,
                },
            )
        }
        Method::SiMspinn => {
            let available = {
                let (nx, ny) = (spectra[0].nx(), spectra[0].ny());
                let own = |n: usize| if n % 2 == 0 { 2 } else { 1 };
                let s = own(nx) * own(ny);
                s + (nx * ny - s) / 2
            };
            let modes = extract_top_modes_multi(spectra, init.features.min(available))?;
            let tail = InitConfig {
                features: modes.len(),
                ..init.clone()
            }
            .tail_dims(outs);
            let net = NetworkParams::spectral_embedding(
                &modes.frequencies(),
                &modes.phases(),
                &modes.amplitudes(),
                &tail,
                weight_seed,
            )?;
            (net, StageInit::Modes(modes))
        }
        Method::RffMspinn => {
            let power = psd_multi(spectra)?;
            let (dist, fallback) = match normalize_psd(&power) {
                Ok(d) => (d, false),
                Err(Error::DegenerateResidual(_)) => {
                    log::warn!("stage {stage}: residual PSD is zero, sampling frequencies uniformly");
                    (FrequencyDistribution::uniform(power.support())?, true)
                }
                Err(e) => return Err(e),
            };
            let freqs = sample_frequencies(
                &dist,
                init.features,
                derive_seed(cfg.seed, init.seed, stage, SeedPurpose::Frequencies),
            )?;
            let (b, phases) = build_rff_layer(
                &freqs,
                derive_seed(cfg.seed, init.seed, stage, SeedPurpose::Phases),
            )?;
            let net = NetworkParams::rff(&b, &phases, &init.tail_dims(outs), weight_seed)?;
            (
                net,
                StageInit::Frequencies {
                    frequencies: freqs,
                    uniform_fallback: fallback,
                },
            )
        }
    };
    let gain = init.output_gain.unwrap_or(0.0);
    Ok((scale_output_layer(&net, gain).with_frozen_first_layer(init.freeze_first_layer), how))
}

/// Summary of one stage in a run report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub index: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub n_trainable: usize,
    pub init: String,
    pub initial_loss: f64,
    pub final_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lbfgs_status: Option<LbfgsStatus>,
    /// Loss terms of the composite after this stage.
    pub composite_loss: LossTerms,
    /// Interior residual RMS of the composite after this stage.
    pub residual_rms: f64,
}

/// Outcome of a run, serializable as a key-value document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub problem: String,
    pub seed: u64,
    pub stages_requested: usize,
    pub stages_trained: usize,
    /// Stopped early because the residual vanished.
    pub early_stop: bool,
    /// ε entering each stage (1 for the base stage).
    pub epsilons: Vec<f64>,
    /// Interior residual RMS after each stage.
    pub residual_rms: Vec<f64>,
    pub final_residual_rms: f64,
    /// Relative L2 error per solution component.
    pub l2_errors: BTreeMap<String, f64>,
    /// `residual_rms` is strictly decreasing across stages.
    pub monotone_epsilon: bool,
    /// Stages whose training loss fell while the residual RMS rose.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub guard_violations: Vec<usize>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<String>,
    pub stage: Vec<StageSummary>,
    pub config: RunConfig,
}

fn describe(init: &StageInit) -> String {
    match init {
        StageInit::Xavier => "xavier".into(),
        StageInit::Scaled { kappa, .. } => format!("scaled xavier, kappa = {kappa}"),
        StageInit::Modes(m) => format!("spectral embedding, {} modes", m.len()),
        StageInit::Frequencies {
            frequencies,
            uniform_fallback,
        } => format!(
            "random Fourier features, {} frequencies{}",
            frequencies.len(),
            if *uniform_fallback { " (uniform fallback)" } else { "" }
        ),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub solution: CompositeSolution,
    pub report: RunReport,
}

/// Full run: base stage, then the method's correction stages.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let base = train_base(cfg)?;
    run_from_base(cfg, &base)
}

/// Continue a run from an already trained base stage, which must come from a
/// configuration with the same base-stage settings.
pub fn run_from_base(cfg: &RunConfig, base: &BaseStage) -> Result<RunOutcome> {
    cfg.validate()?;
    if base.fingerprint != base_fingerprint(cfg)? {
        return Err(Error::InvalidArgument(
            "base stage was trained with different settings".into(),
        ));
    }
    let problem = cfg.problem.as_problem();
    let mut solution = CompositeSolution::new(base.record.clone());
    let mut residual_rms = Vec::new();
    let mut early_stop = false;
    let mut fields = residual_field(&solution, problem, cfg.spectrum_grid)?;
    residual_rms.push(rms_fields(&fields)?);
    for stage in 1..=cfg.correction_stages() {
        let epsilon = *residual_rms.last().expect("base residual");
        if epsilon < DEGENERATE_EPSILON {
            log::info!("stage {stage}: residual RMS {epsilon:.3e} is negligible, stopping");
            early_stop = true;
            break;
        }
        let spectra: Vec<Spectrum> = fields.iter().map(dft2).collect();
        let (net, init) = init_stage_network(cfg, stage, &spectra)
            .map_err(|e| Error::Training { stage, source: Box::new(e) })?;
        let record = train_stage(cfg, stage, net, init, Some(&solution), epsilon)?;
        solution.push(record)?;
        fields = residual_field(&solution, problem, cfg.spectrum_grid)?;
        residual_rms.push(rms_fields(&fields)?);
    }
    let report = build_report(cfg, &solution, residual_rms, early_stop)?;
    Ok(RunOutcome { solution, report })
}

fn build_report(
    cfg: &RunConfig,
    solution: &CompositeSolution,
    residual_rms: Vec<f64>,
    early_stop: bool,
) -> Result<RunReport> {
    let problem = cfg.problem.as_problem();
    let mut stage = Vec::new();
    for (j, rec) in solution.stages().iter().enumerate() {
        let partial = CompositeSolution::from_stages(solution.stages()[..=j].to_vec())?;
        let seed = derive_seed(
            cfg.seed,
            cfg.init_for(j).seed,
            if cfg.resample_per_stage { j } else { 0 },
            SeedPurpose::Collocation,
        );
        let points = PointSet::sample(problem, &cfg.collocation, seed);
        stage.push(StageSummary {
            index: rec.index,
            epsilon: rec.epsilon,
            seed: rec.seed,
            n_trainable: rec.network.n_trainable(),
            init: describe(&rec.init),
            initial_loss: rec.initial_loss,
            final_loss: rec.final_loss,
            lbfgs_status: rec.lbfgs_status,
            composite_loss: loss_terms(&partial, problem, &points, &cfg.weights)?,
            residual_rms: residual_rms[j],
        });
    }
    let errors = evaluate_error(solution, problem, cfg.eval_grid)?;
    let l2_errors = problem
        .components()
        .iter()
        .zip(errors)
        .map(|(c, e)| (c.to_string(), e))
        .collect();
    let monotone = residual_rms.windows(2).all(|w| w[1] < w[0]);
    if !monotone {
        log::warn!("residual RMS is not strictly decreasing across stages: {residual_rms:?}");
    }
    // A stage that lowered its own loss must not raise the grid residual.
    let guard_violations: Vec<usize> = stage
        .iter()
        .skip(1)
        .filter(|s| s.final_loss < s.initial_loss && s.residual_rms > residual_rms[s.index - 1])
        .map(|s| s.index)
        .collect();
    if !guard_violations.is_empty() {
        log::warn!("stages {guard_violations:?} lowered their loss but raised the residual RMS");
    }
    Ok(RunReport {
        method: cfg.method,
        problem: problem.name().to_string(),
        seed: cfg.seed,
        stages_requested: cfg.correction_stages(),
        stages_trained: solution.stages().len() - 1,
        early_stop,
        epsilons: solution.epsilons(),
        final_residual_rms: *residual_rms.last().expect("base residual"),
        residual_rms,
        l2_errors,
        monotone_epsilon: monotone,
        passed: monotone && guard_violations.is_empty(),
        guard_violations,
        checkpoints: Vec::new(),
        stage,
        config: cfg.clone(),
    })
}

impl RunReport {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }
}
