//! Least-squares calibration of IR detuning spectra against the eight-level
//! model.
//!
//! Parameters live in laboratory units: field in mG, Rabi frequencies and
//! detunings as ordinary frequencies in MHz.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::atom::{
    linear_perp_polarization, EightLevelParams, LandeFactors, MagneticField, Polarization,
    CALCIUM_BRANCHING_TO_S, CALCIUM_GAMMA_TOTAL_MHZ,
};
use crate::error::{Error, Result};
use crate::scans::EightLevelSweep;
use crate::units::mhz_to_rad;

/// A measured or synthetic spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumData {
    detunings_mhz: Vec<f64>,
    counts: Vec<f64>,
    count_errors: Option<Vec<f64>>,
}

impl SpectrumData {
    pub fn new(
        detunings_mhz: Vec<f64>,
        counts: Vec<f64>,
        count_errors: Option<Vec<f64>>,
    ) -> Result<Self> {
        if detunings_mhz.len() != counts.len() {
            return Err(Error::InvalidData(format!(
                "{} detunings but {} counts",
                detunings_mhz.len(),
                counts.len()
            )));
        }
        if let Some(errs) = &count_errors {
            if errs.len() != counts.len() {
                return Err(Error::InvalidData(format!(
                    "{} count errors for {} counts",
                    errs.len(),
                    counts.len()
                )));
            }
            if let Some((k, e)) = errs.iter().enumerate().find(|(_, e)| !(**e > 0.0) || !e.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "count error {e} at point {k} must be positive"
                )));
            }
        }
        if let Some((k, d)) = detunings_mhz.iter().enumerate().find(|(_, d)| !d.is_finite()) {
            return Err(Error::InvalidData(format!("detuning {d} at point {k} is not finite")));
        }
        if let Some(k) = (1..detunings_mhz.len()).find(|&k| detunings_mhz[k] <= detunings_mhz[k - 1]) {
            return Err(Error::InvalidData(format!(
                "detunings must be strictly increasing (point {k}: {} after {})",
                detunings_mhz[k],
                detunings_mhz[k - 1]
            )));
        }
        if let Some((k, c)) = counts.iter().enumerate().find(|(_, c)| !(**c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidData(format!(
                "count {c} at point {k} must be finite and non-negative"
            )));
        }
        Ok(Self {
            detunings_mhz,
            counts,
            count_errors,
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn detunings_mhz(&self) -> &[f64] {
        &self.detunings_mhz
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn count_errors(&self) -> Option<&[f64]> {
        self.count_errors.as_deref()
    }

    /// Multiplies counts and their errors by `c > 0`.
    pub fn rescaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.detunings_mhz.clone(),
            self.counts.iter().map(|v| v * c).collect(),
            self.count_errors
                .as_ref()
                .map(|e| e.iter().map(|v| v * c).collect()),
        )
    }

    fn weights(&self) -> Vec<f64> {
        match &self.count_errors {
            Some(e) => e.iter().map(|s| 1.0 / (s * s)).collect(),
            None => vec![1.0; self.len()],
        }
    }
}

/// Parameters adjusted by the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumParams {
    pub b_mg: f64,
    /// `Ω_SP/2π`, MHz.
    pub rabi_uv_mhz: f64,
    /// `Ω_DP/2π`, MHz.
    pub rabi_ir_mhz: f64,
    /// `Δ_UV/2π`, MHz.
    pub detuning_uv_mhz: f64,
    pub scale: f64,
    pub background: f64,
}

impl SpectrumParams {
    /// Operating point of the calibration spectra at field `b_mg`, unit scale
    /// and no background.
    pub fn calibration(b_mg: f64, model: &SpectrumModel) -> Self {
        Self {
            b_mg,
            rabi_uv_mhz: 1.19f64.sqrt() * model.gamma_sp_mhz,
            rabi_ir_mhz: 2.27f64.sqrt() * model.gamma_dp_mhz,
            detuning_uv_mhz: -14.7,
            scale: 1.0,
            background: 0.0,
        }
    }

    pub fn get(&self, p: FitParam) -> f64 {
        match p {
            FitParam::BField => self.b_mg,
            FitParam::RabiUv => self.rabi_uv_mhz,
            FitParam::RabiIr => self.rabi_ir_mhz,
            FitParam::DetuningUv => self.detuning_uv_mhz,
            FitParam::Scale => self.scale,
            FitParam::Background => self.background,
        }
    }

    pub fn set(&mut self, p: FitParam, value: f64) {
        match p {
            FitParam::BField => self.b_mg = value,
            FitParam::RabiUv => self.rabi_uv_mhz = value,
            FitParam::RabiIr => self.rabi_ir_mhz = value,
            FitParam::DetuningUv => self.detuning_uv_mhz = value,
            FitParam::Scale => self.scale = value,
            FitParam::Background => self.background = value,
        }
    }

    fn validate(&self) -> Result<()> {
        for p in FitParam::ALL {
            let v = self.get(p);
            if !v.is_finite() || (p.non_negative() && v < 0.0) {
                return Err(Error::InvalidParameter {
                    name: p.name(),
                    value: v,
                    reason: "must be finite, and non-negative for fields, Rabi frequencies and scale",
                });
            }
        }
        Ok(())
    }
}

/// Quantities held fixed during a fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumModel {
    pub gamma_sp_mhz: f64,
    pub gamma_dp_mhz: f64,
    pub polarization_uv: Polarization,
    pub polarization_ir: Polarization,
    pub g_factors: LandeFactors,
}

impl Default for SpectrumModel {
    fn default() -> Self {
        Self {
            gamma_sp_mhz: CALCIUM_GAMMA_TOTAL_MHZ * CALCIUM_BRANCHING_TO_S,
            gamma_dp_mhz: CALCIUM_GAMMA_TOTAL_MHZ * (1.0 - CALCIUM_BRANCHING_TO_S),
            polarization_uv: linear_perp_polarization(),
            polarization_ir: linear_perp_polarization(),
            g_factors: LandeFactors::default(),
        }
    }
}

impl SpectrumModel {
    pub fn eight_level(&self, p: &SpectrumParams, detuning_ir_mhz: f64) -> Result<EightLevelParams> {
        Ok(EightLevelParams {
            rabi_uv: mhz_to_rad(p.rabi_uv_mhz),
            rabi_ir: mhz_to_rad(p.rabi_ir_mhz),
            detuning_uv: mhz_to_rad(p.detuning_uv_mhz),
            detuning_ir: mhz_to_rad(detuning_ir_mhz),
            b_field: MagneticField::from_milligauss(p.b_mg)?,
            gamma_sp: mhz_to_rad(self.gamma_sp_mhz),
            gamma_dp: mhz_to_rad(self.gamma_dp_mhz),
            polarization_uv: self.polarization_uv,
            polarization_ir: self.polarization_ir,
            g_factors: self.g_factors,
        })
    }

    /// Total P population at every detuning.
    pub fn populations(&self, p: &SpectrumParams, detunings_mhz: &[f64]) -> Result<Vec<f64>> {
        p.validate()?;
        let Some(&first) = detunings_mhz.first() else {
            return Ok(Vec::new());
        };
        let failed = |detuning_mhz: f64| {
            move |e| Error::PointFailed {
                detuning_mhz,
                source: Box::new(e),
            }
        };
        let sweep = self
            .eight_level(p, first)
            .and_then(|e| EightLevelSweep::new(&e))
            .map_err(failed(first))?;
        detunings_mhz
            .par_iter()
            .map(|&d| {
                let point = self.eight_level(p, d).and_then(|e| sweep.point(&e));
                point.map(|pt| pt.value).map_err(failed(d))
            })
            .collect()
    }
}

/// `scale · p_P(Δ_IR) + background` at every detuning (MHz).
pub fn model_spectrum(
    model: &SpectrumModel,
    params: &SpectrumParams,
    detunings_mhz: &[f64],
) -> Result<Vec<f64>> {
    Ok(model
        .populations(params, detunings_mhz)?
        .into_iter()
        .map(|pp| params.scale * pp + params.background)
        .collect())
}

/// Model spectrum with multiplicative Gaussian noise of relative size
/// `relative_noise`, clipped at zero.
///
/// The standard deviation of each point, `relative_noise` times the clean
/// value, is attached as the count error when it is positive everywhere.
pub fn synthesize_spectrum(
    model: &SpectrumModel,
    params: &SpectrumParams,
    detunings_mhz: &[f64],
    relative_noise: f64,
    seed: u64,
) -> Result<SpectrumData> {
    if !(relative_noise >= 0.0) || !relative_noise.is_finite() {
        return Err(Error::InvalidParameter {
            name: "relative_noise",
            value: relative_noise,
            reason: "must be finite and non-negative",
        });
    }
    let clean = model_spectrum(model, params, detunings_mhz)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let counts = clean
        .iter()
        .map(|v| (v * (1.0 + relative_noise * normal.sample(&mut rng))).max(0.0))
        .collect();
    let errors: Vec<f64> = clean.iter().map(|v| relative_noise * v).collect();
    let errors = errors.iter().all(|e| *e > 0.0).then_some(errors);
    SpectrumData::new(detunings_mhz.to_vec(), counts, errors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FitParam {
    BField,
    RabiUv,
    RabiIr,
    DetuningUv,
    Scale,
    Background,
}

impl FitParam {
    pub const ALL: [FitParam; 6] = [
        FitParam::BField,
        FitParam::RabiUv,
        FitParam::RabiIr,
        FitParam::DetuningUv,
        FitParam::Scale,
        FitParam::Background,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FitParam::BField => "b_field_mg",
            FitParam::RabiUv => "rabi_uv_mhz",
            FitParam::RabiIr => "rabi_ir_mhz",
            FitParam::DetuningUv => "detuning_uv_mhz",
            FitParam::Scale => "scale",
            FitParam::Background => "background",
        }
    }

    pub fn from_name(name: &str) -> Option<FitParam> {
        FitParam::ALL.into_iter().find(|p| p.name() == name)
    }

    fn index(self) -> usize {
        self as usize
    }

    /// Parameters projected back to zero when a step makes them negative.
    pub fn non_negative(self) -> bool {
        matches!(
            self,
            FitParam::BField | FitParam::RabiUv | FitParam::RabiIr | FitParam::Scale
        )
    }
}

/// Which parameters the fit may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FreeMask([bool; 6]);

impl FreeMask {
    pub fn none() -> Self {
        Self([false; 6])
    }

    pub fn all() -> Self {
        Self([true; 6])
    }

    pub fn of(params: &[FitParam]) -> Self {
        params.iter().fold(Self::none(), |m, &p| m.with(p))
    }

    pub fn with(mut self, p: FitParam) -> Self {
        self.0[p.index()] = true;
        self
    }

    pub fn without(mut self, p: FitParam) -> Self {
        self.0[p.index()] = false;
        self
    }

    pub fn is_free(&self, p: FitParam) -> bool {
        self.0[p.index()]
    }

    pub fn free(&self) -> Vec<FitParam> {
        FitParam::ALL.into_iter().filter(|&p| self.is_free(p)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Differences {
    Forward,
    #[default]
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Largest accepted `|Jⱼᵀ W r| / (‖Jⱼ‖_W ‖y‖_W)` at convergence.
    pub gradient_tol: f64,
    /// Largest accepted relative parameter step at convergence.
    pub step_tol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
    pub differences: Differences,
    /// Initial damping relative to the largest diagonal of the normal matrix.
    pub initial_damping: f64,
    /// Adds the second-order correction along each proposed step.
    pub geodesic_acceleration: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tol: 1e-6,
            step_tol: 1e-6,
            fd_step: 1e-4,
            differences: Differences::Central,
            initial_damping: 1e-3,
            geodesic_acceleration: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: SpectrumParams,
    /// One-sigma uncertainties of the free parameters.
    pub uncertainties: [Option<f64>; 6],
    /// `√(Σ wᵢ rᵢ²)`.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the normal matrix was singular at some iteration.
    pub jacobian_degenerate: bool,
    /// Objective `Σ wᵢ rᵢ²` after every accepted step, starting value first.
    pub objective_history: Vec<f64>,
}

impl FitResult {
    pub fn uncertainty(&self, p: FitParam) -> Option<f64> {
        self.uncertainties[p.index()]
    }
}

struct Problem<'a> {
    model: &'a SpectrumModel,
    data: &'a SpectrumData,
    sqrt_w: Vec<f64>,
    free: Vec<FitParam>,
    options: FitOptions,
}

/// Relative length of the probe step used for the second derivative.
const ACCELERATION_PROBE: f64 = 0.1;
/// Largest accepted `‖a‖/‖v‖` in normalized coordinates.
const ACCELERATION_LIMIT: f64 = 0.75;

/// Model evaluation: P populations and the spectrum built from them.
struct Eval {
    populations: Vec<f64>,
    residuals: DVector<f64>,
    objective: f64,
}

impl Problem<'_> {
    fn eval(&self, p: &SpectrumParams) -> Result<Eval> {
        let populations = self.model.populations(p, self.data.detunings_mhz())?;
        let residuals = DVector::from_iterator(
            populations.len(),
            populations
                .iter()
                .zip(self.data.counts())
                .zip(&self.sqrt_w)
                .map(|((pp, y), sw)| sw * (y - (p.scale * pp + p.background))),
        );
        let objective = residuals.norm_squared();
        Ok(Eval {
            populations,
            residuals,
            objective,
        })
    }

    /// Weighted Jacobian of the model spectrum with respect to the free
    /// parameters.
    fn jacobian(&self, p: &SpectrumParams, at: &Eval) -> Result<DMatrix<f64>> {
        let m = at.populations.len();
        let mut jac = DMatrix::zeros(m, self.free.len());
        for (col, &param) in self.free.iter().enumerate() {
            let column: Vec<f64> = match param {
                FitParam::Scale => at.populations.clone(),
                FitParam::Background => vec![1.0; m],
                _ => {
                    let x = p.get(param);
                    let h = self.options.fd_step * x.abs().max(1.0);
                    let populations = |value: f64| {
                        let mut q = *p;
                        q.set(param, value);
                        self.model.populations(&q, self.data.detunings_mhz())
                    };
                    match self.options.differences {
                        Differences::Forward => {
                            let shifted = populations(x + h)?;
                            shifted
                                .iter()
                                .zip(&at.populations)
                                .map(|(a, b)| p.scale * (a - b) / h)
                                .collect()
                        }
                        Differences::Central => {
                            let lo = if param.non_negative() { (x - h).max(0.0) } else { x - h };
                            let hi = lo + 2.0 * h;
                            let (a, b) = (populations(hi)?, populations(lo)?);
                            a.iter().zip(&b).map(|(u, v)| p.scale * (u - v) / (hi - lo)).collect()
                        }
                    }
                }
            };
            for (i, v) in column.into_iter().enumerate() {
                jac[(i, col)] = self.sqrt_w[i] * v;
            }
        }
        Ok(jac)
    }

    /// `Jᵀ r''` for the second directional derivative of the residuals along
    /// `velocity`, from one extra model evaluation.
    fn acceleration(
        &self,
        p: &SpectrumParams,
        at: &Eval,
        jac: &DMatrix<f64>,
        velocity: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let h = ACCELERATION_PROBE;
        let probe = self.eval(&self.step(p, &(velocity * h)))?;
        // r = W^½ (y − f), so the residual Jacobian is −jac.
        let second = ((&probe.residuals - &at.residuals) / h + jac * velocity) * (2.0 / h);
        Ok(jac.transpose() * second)
    }

    fn step(&self, p: &SpectrumParams, delta: &DVector<f64>) -> SpectrumParams {
        let mut q = *p;
        for (k, &param) in self.free.iter().enumerate() {
            let mut v = p.get(param) + delta[k];
            if param.non_negative() && v < 0.0 {
                v = 0.0;
            }
            q.set(param, v);
        }
        q
    }

    fn relative_step(&self, p: &SpectrumParams, q: &SpectrumParams) -> f64 {
        self.free
            .iter()
            .map(|&param| {
                let (a, b) = (p.get(param), q.get(param));
                (b - a).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }
}

/// Damped Gauss–Newton fit of `data` over the parameters in `free`.
///
/// Each iteration solves `(Ñ + λ I) δ̃ = g̃` for the column-normalized normal
/// matrix `Ñ`, so the damping acts uniformly on all parameters. With
/// `geodesic_acceleration` the step `v` is corrected to `v + a/2`, where `a`
/// solves the same damped system for the second directional derivative of the
/// residuals along `v`; proposals with `‖a‖ > 0.75 ‖v‖` count as rejected.
/// Accepted steps reduce `λ` threefold and rejected steps double it. The fit converges when
/// the proposed relative step is below `step_tol` and every gradient
/// component, normalized by its column norm and the weighted data norm, is
/// below `gradient_tol`.
pub fn fit_spectrum(
    data: &SpectrumData,
    model: &SpectrumModel,
    initial: &SpectrumParams,
    free: FreeMask,
    options: &FitOptions,
) -> Result<FitResult> {
    initial.validate()?;
    if free.is_free(FitParam::Scale) && !(initial.scale > 0.0) {
        return Err(Error::InvalidParameter {
            name: "scale",
            value: initial.scale,
            reason: "initial scale must be positive",
        });
    }
    let problem = Problem {
        model,
        data,
        sqrt_w: data.weights().iter().map(|w| w.sqrt()).collect(),
        free: free.free(),
        options: *options,
    };
    let n_free = problem.free.len();
    if data.len() <= n_free {
        return Err(Error::InvalidData(format!(
            "{} points cannot constrain {} free parameters",
            data.len(),
            n_free
        )));
    }

    let mut params = *initial;
    let mut current = problem.eval(&params)?;
    let mut history = vec![current.objective];
    let mut jacobian_degenerate = false;
    if n_free == 0 {
        return Ok(FitResult {
            params,
            uncertainties: [None; 6],
            residual_norm: current.objective.sqrt(),
            iterations: 0,
            converged: true,
            jacobian_degenerate,
            objective_history: history,
        });
    }

    let data_norm = data
        .counts()
        .iter()
        .zip(&problem.sqrt_w)
        .map(|(y, sw)| (sw * y).powi(2))
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let mut lambda = options.initial_damping;
    let mut iterations = 0;
    let mut converged = false;
    let mut jac = problem.jacobian(&params, &current)?;
    'outer: while iterations < options.max_iterations {
        iterations += 1;
        let normal = jac.transpose() * &jac;
        let grad = jac.transpose() * &current.residuals;
        let scale: Vec<f64> = (0..n_free).map(|k| normal[(k, k)].sqrt()).collect();
        if scale.iter().any(|s| !(*s > 0.0)) {
            jacobian_degenerate = true;
            break;
        }
        let gradient = (0..n_free)
            .map(|k| grad[k].abs() / (scale[k] * data_norm))
            .fold(0.0, f64::max);
        let scaled = DMatrix::from_fn(n_free, n_free, |i, j| normal[(i, j)] / (scale[i] * scale[j]));
        let scaled_grad = DVector::from_fn(n_free, |i, _| grad[i] / scale[i]);

        // Raise the damping until a step lowers the objective or the step
        // becomes negligible.
        loop {
            let damped = &scaled + DMatrix::identity(n_free, n_free) * lambda;
            let Some(chol) = damped.cholesky() else {
                jacobian_degenerate = true;
                lambda *= 2.0;
                continue;
            };
            let mut scaled_delta = chol.solve(&scaled_grad);
            if options.geodesic_acceleration {
                let velocity = DVector::from_fn(n_free, |i, _| scaled_delta[i] / scale[i]);
                let accel = problem.acceleration(&params, &current, &jac, &velocity)?;
                let scaled_accel = chol.solve(&DVector::from_fn(n_free, |i, _| accel[i] / scale[i]));
                if scaled_accel.norm() > ACCELERATION_LIMIT * scaled_delta.norm() {
                    lambda *= 2.0;
                    continue;
                }
                scaled_delta += scaled_accel * 0.5;
            }
            let delta = DVector::from_fn(n_free, |i, _| scaled_delta[i] / scale[i]);
            let trial_params = problem.step(&params, &delta);
            if problem.relative_step(&params, &trial_params) < options.step_tol {
                converged = gradient < options.gradient_tol;
                break 'outer;
            }
            let trial = problem.eval(&trial_params)?;
            if trial.objective < current.objective {
                params = trial_params;
                current = trial;
                history.push(current.objective);
                lambda = (lambda / 3.0).max(1e-12);
                jac = problem.jacobian(&params, &current)?;
                break;
            }
            lambda *= 2.0;
        }
    }

    let uncertainties = covariance_sigmas(&problem, &jac, current.objective, &mut jacobian_degenerate);
    Ok(FitResult {
        params,
        uncertainties,
        residual_norm: current.objective.sqrt(),
        iterations,
        converged,
        jacobian_degenerate,
        objective_history: history,
    })
}

/// One-sigma errors from `(JᵀWJ)⁻¹`. Without supplied count errors the
/// covariance is scaled by the reduced chi-square.
fn covariance_sigmas(
    problem: &Problem,
    jac: &DMatrix<f64>,
    objective: f64,
    degenerate: &mut bool,
) -> [Option<f64>; 6] {
    let mut out = [None; 6];
    let n_free = problem.free.len();
    let normal = jac.transpose() * jac;
    let Some(cov) = normal.try_inverse() else {
        *degenerate = true;
        return out;
    };
    let dof = (problem.data.len() - n_free) as f64;
    let factor = if problem.data.count_errors().is_some() {
        1.0
    } else {
        objective / dof
    };
    for (k, &param) in problem.free.iter().enumerate() {
        let var = cov[(k, k)] * factor;
        out[param.index()] = (var >= 0.0).then(|| var.sqrt());
    }
    out
}

/// Unweighted Jacobian of [`model_spectrum`] with respect to the parameters
/// in `free`, columns in [`FitParam::ALL`] order.
pub fn model_jacobian(
    model: &SpectrumModel,
    params: &SpectrumParams,
    detunings_mhz: &[f64],
    free: FreeMask,
    options: &FitOptions,
) -> Result<DMatrix<f64>> {
    let data = SpectrumData::new(detunings_mhz.to_vec(), vec![0.0; detunings_mhz.len()], None)?;
    let problem = Problem {
        model,
        data: &data,
        sqrt_w: vec![1.0; data.len()],
        free: free.free(),
        options: *options,
    };
    let at = problem.eval(params)?;
    problem.jacobian(params, &at)
}
