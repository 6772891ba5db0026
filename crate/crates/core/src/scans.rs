//! Parameter scans: fluorescence against drive power, position of the
//! fluorescence maximum against field, and IR detuning spectra.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::atom::{EightLevelParams, FourLevelParams, LevelScheme, MagneticField};
use crate::error::{Error, Result};
use crate::atom::build_h8;
use crate::master::{
    assemble_with_dissipator, dissipator_8level, eight_level_liouvillian, four_level_liouvillian,
};
use crate::quantum::{ket_bra, projector, CMatrix, Liouvillian};
use crate::steady::{pe_analytic, steady_state};

/// Largest `|δ|/Γ_T` accepted by [`threshold_slope`].
pub const LOW_FIELD_LIMIT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    FourLevel,
    EightLevel,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::FourLevel => "four-level",
            ModelKind::EightLevel => "eight-level",
        }
    }
}

/// How four-level points are evaluated. The eight-level model is always
/// solved numerically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    /// Closed form for four-level points, numerical otherwise.
    #[default]
    Auto,
    Numerical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    FourLevel(FourLevelParams),
    EightLevel(EightLevelParams),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::FourLevel(_) => ModelKind::FourLevel,
            Model::EightLevel(_) => ModelKind::EightLevel,
        }
    }

    pub fn gamma_total(&self) -> f64 {
        match self {
            Model::FourLevel(p) => p.gamma_total(),
            Model::EightLevel(p) => p.gamma_total(),
        }
    }

    /// Squared Rabi frequency of the scanned drive: `Ω` for the four-level
    /// model, the IR (D–P) drive for the eight-level model.
    pub fn omega2(&self) -> f64 {
        match self {
            Model::FourLevel(p) => p.omega * p.omega,
            Model::EightLevel(p) => p.rabi_ir * p.rabi_ir,
        }
    }

    pub fn with_omega2(&self, omega2: f64) -> Model {
        let omega = omega2.max(0.0).sqrt();
        match *self {
            Model::FourLevel(p) => Model::FourLevel(FourLevelParams { omega, ..p }),
            Model::EightLevel(p) => Model::EightLevel(EightLevelParams { rabi_ir: omega, ..p }),
        }
    }

    /// Zeeman splitting of the dark-state manifold over 2π, Hz.
    pub fn larmor_hz(&self) -> f64 {
        match self {
            Model::FourLevel(p) => p.delta_zeeman / TAU,
            Model::EightLevel(p) => {
                crate::atom::larmor_splitting(p.b_field, p.g_factors.d) / TAU
            }
        }
    }

    /// Sets the field so that [`Model::larmor_hz`] returns `larmor_hz`.
    pub fn with_larmor(&self, larmor_hz: f64) -> Result<Model> {
        match *self {
            Model::FourLevel(p) => Ok(Model::FourLevel(FourLevelParams {
                delta_zeeman: TAU * larmor_hz,
                ..p
            })),
            Model::EightLevel(p) => Ok(Model::EightLevel(EightLevelParams {
                b_field: MagneticField::for_larmor(larmor_hz.abs(), p.g_factors.d)?,
                ..p
            })),
        }
    }

    /// Excited-state population of the four-level model or total P
    /// population of the eight-level model.
    pub fn fluorescence(&self, solver: Solver) -> Result<Point> {
        match self {
            Model::FourLevel(p) if solver == Solver::Auto => {
                let a = pe_analytic(p)?;
                Ok(Point {
                    value: a.value,
                    status: if a.limit {
                        PointStatus::Limit
                    } else {
                        PointStatus::Ok
                    },
                })
            }
            Model::FourLevel(p) => {
                let ss = steady_state(
                    &four_level_liouvillian(p)?,
                    &ket_bra(4, FourLevelParams::EXCITED, FourLevelParams::EXCITED),
                )?;
                Ok(Point::from_solve(ss.p_e, ss.degenerate))
            }
            Model::EightLevel(p) => {
                let scheme = p.scheme();
                let excited: Vec<usize> = scheme.indices(LevelScheme::P).collect();
                let ss = steady_state(
                    &eight_level_liouvillian(p)?,
                    &projector(scheme.dim(), &excited),
                )?;
                Ok(Point::from_solve(ss.p_e, ss.degenerate))
            }
        }
    }
}

/// Eight-level solves that share decay rates and level scheme.
pub(crate) struct EightLevelSweep {
    dissipator: Liouvillian,
    excited: CMatrix,
}

impl EightLevelSweep {
    pub(crate) fn new(p: &EightLevelParams) -> Result<Self> {
        let scheme = p.scheme();
        let excited: Vec<usize> = scheme.indices(LevelScheme::P).collect();
        Ok(Self {
            dissipator: dissipator_8level(p)?,
            excited: projector(scheme.dim(), &excited),
        })
    }

    /// `p` must have the decay rates and g-factors the sweep was built with.
    pub(crate) fn point(&self, p: &EightLevelParams) -> Result<Point> {
        let l = assemble_with_dissipator(&build_h8(p)?, &self.dissipator)?;
        let ss = steady_state(&l, &self.excited)?;
        Ok(Point::from_solve(ss.p_e, ss.degenerate))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointStatus {
    Ok,
    /// The stationary state is not unique; the minimum-norm state was used.
    Degenerate,
    /// Closed-form limit at `Ω = 0` or `δ = 0`.
    Limit,
    /// The solver failed; the value is NaN.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub value: f64,
    pub status: PointStatus,
}

impl Point {
    pub(crate) fn from_solve(value: f64, degenerate: bool) -> Self {
        Point {
            value,
            status: if degenerate {
                PointStatus::Degenerate
            } else {
                PointStatus::Ok
            },
        }
    }

    pub(crate) fn failed(err: Error) -> Self {
        Point {
            value: f64::NAN,
            status: PointStatus::Failed(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub axis: Vec<f64>,
    pub values: Vec<f64>,
    pub status: Vec<PointStatus>,
    /// Interpolated position of the maximum.
    pub argmax_axis: f64,
    /// Interpolated maximum value.
    pub max_value: f64,
    /// Grid index of the largest finite value.
    pub argmax_index: usize,
    /// True when the largest value sits on the first or last grid point.
    pub peak_at_edge: bool,
    pub model: ModelKind,
}

impl ScanResult {
    fn assemble(
        axis: &[f64],
        points: Vec<Point>,
        model: ModelKind,
        log_axis: bool,
    ) -> Result<ScanResult> {
        let (values, status): (Vec<f64>, Vec<PointStatus>) =
            points.into_iter().map(|p| (p.value, p.status)).unzip();
        let argmax_index = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .ok_or_else(|| Error::InvalidGrid("every scan point failed".into()))?;
        let k = argmax_index;
        let peak_at_edge = k == 0 || k + 1 == values.len();
        let (argmax_axis, max_value) = if peak_at_edge
            || !values[k - 1].is_finite()
            || !values[k + 1].is_finite()
        {
            (axis[k], values[k])
        } else {
            let xs = [axis[k - 1], axis[k], axis[k + 1]];
            let ys = [values[k - 1], values[k], values[k + 1]];
            if log_axis && xs[0] > 0.0 {
                let (x, y) = quadratic_peak(xs.map(f64::ln), ys);
                (x.exp(), y)
            } else {
                quadratic_peak(xs, ys)
            }
        };
        Ok(ScanResult {
            axis: axis.to_vec(),
            values,
            status,
            argmax_axis,
            max_value,
            argmax_index,
            peak_at_edge,
            model,
        })
    }

    /// Indices of strict interior local minima.
    pub fn local_minima(&self) -> Vec<usize> {
        local_minima(&self.values)
    }

    pub fn failures(&self) -> usize {
        self.status
            .iter()
            .filter(|s| matches!(s, PointStatus::Failed(_)))
            .count()
    }
}

/// Vertex of the parabola through three points with distinct abscissae.
/// Falls back to the middle point when the points are not concave.
pub fn quadratic_peak(x: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    let (d0, d1) = (x[1] - x[0], x[2] - x[1]);
    let s0 = (y[1] - y[0]) / d0;
    let s1 = (y[2] - y[1]) / d1;
    let a = (s1 - s0) / (x[2] - x[0]);
    if !(a < 0.0) {
        return (x[1], y[1]);
    }
    // y = y1 + b (t − x1) + a (t − x1)² with b the slope at x1.
    let b = s0 + a * d0;
    let t = x[1] - b / (2.0 * a);
    let t = t.clamp(x[0], x[2]);
    let dt = t - x[1];
    (t, y[1] + b * dt + a * dt * dt)
}

/// Indices `k` with `v[k−1] > v[k] < v[k+1]`.
pub fn local_minima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&k| values[k] < values[k - 1] && values[k] < values[k + 1])
        .collect()
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("grid is empty".into()));
    }
    if let Some(v) = grid.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidGrid(format!("non-finite grid value {v}")));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!(
            "grid must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// `points` values from `start` to `stop` inclusive, evenly spaced.
pub fn linear_grid(start: f64, stop: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(stop > start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::InvalidGrid(format!(
            "need start < stop and at least two points (got {start}, {stop}, {points})"
        )));
    }
    let step = (stop - start) / (points - 1) as f64;
    Ok((0..points)
        .map(|k| if k + 1 == points { stop } else { start + step * k as f64 })
        .collect())
}

/// `points` values from `start` to `stop` inclusive, evenly spaced in log.
pub fn log_grid(start: f64, stop: f64, points: usize) -> Result<Vec<f64>> {
    if !(start > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "logarithmic grid needs a positive start (got {start})"
        )));
    }
    let exps = linear_grid(start.ln(), stop.ln(), points)?;
    let mut grid: Vec<f64> = exps.into_iter().map(f64::exp).collect();
    grid[0] = start;
    *grid.last_mut().unwrap() = stop;
    Ok(grid)
}

/// Log grid with a fixed density between two values.
pub fn log_grid_per_decade(start: f64, stop: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(start > 0.0) || !(stop > start) {
        return Err(Error::InvalidGrid(format!(
            "need 0 < start < stop (got {start}, {stop})"
        )));
    }
    let points = ((stop / start).log10() * per_decade as f64).round() as usize + 1;
    log_grid(start, stop, points.max(2))
}

/// Fluorescence at every squared Rabi frequency of `omega2_grid` (rad²/s²).
/// The maximum is refined by a parabola in `ln Ω²`.
pub fn power_scan(model: &Model, omega2_grid: &[f64], solver: Solver) -> Result<ScanResult> {
    validate_grid(omega2_grid)?;
    if omega2_grid[0] < 0.0 {
        return Err(Error::InvalidGrid("squared Rabi frequencies must be non-negative".into()));
    }
    let points: Vec<Point> = omega2_grid
        .par_iter()
        .map(|&o2| {
            model
                .with_omega2(o2)
                .fluorescence(solver)
                .unwrap_or_else(Point::failed)
        })
        .collect();
    ScanResult::assemble(omega2_grid, points, model.kind(), true)
}

/// Total P population against IR detuning (rad/s), UV drive fixed.
pub fn detuning_scan(p: &EightLevelParams, delta_ir_grid: &[f64]) -> Result<ScanResult> {
    validate_grid(delta_ir_grid)?;
    p.validate()?;
    let sweep = EightLevelSweep::new(p)?;
    let points: Vec<Point> = delta_ir_grid
        .par_iter()
        .map(|&d| {
            sweep
                .point(&EightLevelParams {
                    detuning_ir: d,
                    ..*p
                })
                .unwrap_or_else(Point::failed)
        })
        .collect();
    ScanResult::assemble(delta_ir_grid, points, ModelKind::EightLevel, false)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
}

/// Ordinary least-squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidData(format!(
            "linear fit needs two or more paired points (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidData("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        rms_residual: (ss_res / n).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeResult {
    /// `δ/2π`, Hz.
    pub larmor_points: Vec<f64>,
    /// `Ω²_max`, rad²/s².
    pub omega2_max_points: Vec<f64>,
    /// Slope of `Ω²_max/(2π)²` against `δ/2π`, MHz.
    pub slope_mhz: f64,
    /// Hz².
    pub intercept: f64,
    /// RMS residual of the line, Hz².
    pub fit_residual: f64,
    pub r_squared: f64,
    /// False when `Ω²_max` does not increase strictly with `|δ|`.
    pub monotone: bool,
    /// True when any maximum fell on the edge of the power grid.
    pub peak_at_edge: bool,
}

/// Runs a power scan per Larmor frequency (Hz) and fits a line through the
/// maxima. Every field must satisfy `|δ| ≤ 0.2 Γ_T`.
pub fn threshold_slope(
    model: &Model,
    larmor_hz: &[f64],
    omega2_grid: &[f64],
    solver: Solver,
) -> Result<SlopeResult> {
    if larmor_hz.len() < 3 {
        return Err(Error::InvalidGrid(format!(
            "slope extraction needs at least 3 Larmor frequencies (got {})",
            larmor_hz.len()
        )));
    }
    validate_grid(omega2_grid)?;
    let gamma_t = model.gamma_total();
    for &f in larmor_hz {
        let delta = TAU * f;
        if !(delta.abs() <= LOW_FIELD_LIMIT * gamma_t) {
            return Err(Error::InvalidParameter {
                name: "larmor_hz",
                value: f,
                reason: "slope extraction requires |δ| ≤ 0.2 Γ_T",
            });
        }
    }
    let scans = larmor_hz
        .iter()
        .map(|&f| power_scan(&model.with_larmor(f)?, omega2_grid, solver))
        .collect::<Result<Vec<_>>>()?;
    let omega2_max_points: Vec<f64> = scans.iter().map(|s| s.argmax_axis).collect();
    let peak_at_edge = scans.iter().any(|s| s.peak_at_edge);

    let mut order: Vec<usize> = (0..larmor_hz.len()).collect();
    order.sort_by(|&a, &b| larmor_hz[a].abs().total_cmp(&larmor_hz[b].abs()));
    let monotone = order
        .windows(2)
        .all(|w| omega2_max_points[w[1]] > omega2_max_points[w[0]]);

    let y: Vec<f64> = omega2_max_points.iter().map(|o2| o2 / (TAU * TAU)).collect();
    let x: Vec<f64> = larmor_hz.iter().map(|f| f.abs()).collect();
    let line = linear_fit(&x, &y)?;
    Ok(SlopeResult {
        larmor_points: larmor_hz.to_vec(),
        omega2_max_points,
        slope_mhz: line.slope * 1e-6,
        intercept: line.intercept,
        fit_residual: line.rms_residual,
        r_squared: line.r_squared,
        monotone,
        peak_at_edge,
    })
}
