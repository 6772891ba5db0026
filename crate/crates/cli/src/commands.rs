//! Subcommand implementations. Each returns the rendered output instead of
//! writing it, so the binary decides where text goes.

use std::path::{Path, PathBuf};

use darkstate_core::quantum::{ket_bra, projector};
use darkstate_core::scans::{PointStatus, local_minima};
use darkstate_core::units::{mhz2_to_rad2, mhz_to_rad, rad_to_mhz, rad2_to_mhz2};
use darkstate_core::{
    Error, FitOptions, FitParam, FourLevelParams, LevelScheme, Model, ModelKind, ScanResult,
    SpectrumData, detuning_scan, eight_level_liouvillian, fit_spectrum, four_level_liouvillian,
    model_spectrum, power_scan, steady_state, synthesize_spectrum, threshold_slope,
};

use crate::config::RunConfig;
use crate::table::{Table, fmt_e, read_spectrum, spectrum_table};

/// Minimum number of spectrum points accepted by `fit`.
pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanKind {
    Power,
    Detuning,
    Slope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Output was produced but some points failed to solve.
    SolverFailure,
    /// Fit report was produced but the fit did not converge.
    NotConverged,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::SolverFailure => 3,
            Status::NotConverged => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    /// Primary CSV, written to `--out` or stdout.
    pub main: String,
    /// Additional files requested on the command line.
    pub files: Vec<(PathBuf, String)>,
    /// Human-readable lines for stderr.
    pub notes: Vec<String>,
    pub status: Status,
}

impl Output {
    fn ok(main: String) -> Self {
        Self {
            main,
            files: Vec::new(),
            notes: Vec::new(),
            status: Status::Ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Input(String),
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Solver(m) => write!(f, "solver error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Parameter problems are input errors; everything else is the solver's.
fn core_error(e: Error) -> CliError {
    match e {
        Error::InvalidParameter { .. }
        | Error::InvalidGrid(_)
        | Error::InvalidData(_)
        | Error::InvalidPolarization { .. }
        | Error::InvalidAngularMomentum(_) => CliError::Input(e.to_string()),
        Error::PointFailed { ref source, .. } if matches!(**source, Error::InvalidParameter { .. }) => {
            CliError::Input(e.to_string())
        }
        _ => CliError::Solver(e.to_string()),
    }
}

fn model(cfg: &RunConfig) -> Result<Model, CliError> {
    Ok(match cfg.model {
        ModelKind::FourLevel => Model::FourLevel(cfg.four.params()),
        ModelKind::EightLevel => Model::EightLevel(cfg.eight.params().map_err(core_error)?),
    })
}

fn bool_str(b: bool) -> &'static str {
    if b { "true" } else { "false" }
}

fn status_str(s: &PointStatus) -> &'static str {
    match s {
        PointStatus::Ok => "ok",
        PointStatus::Degenerate => "degenerate",
        PointStatus::Limit => "limit",
        PointStatus::Failed(_) => "failed",
    }
}

fn describe(cfg: &RunConfig, t: &mut Table) {
    t.meta("model", cfg.model.name());
    match cfg.model {
        ModelKind::FourLevel => {
            let f = &cfg.four;
            t.meta("rabi_mhz", fmt_e(f.rabi_mhz))
                .meta("detuning_mhz", fmt_e(f.detuning_mhz))
                .meta("larmor_khz", fmt_e(f.larmor_khz))
                .meta("gamma_total_mhz", fmt_e(f.gamma_total_mhz))
                .meta("gamma_s_mhz", fmt_e(f.gamma_s_mhz));
        }
        ModelKind::EightLevel => describe_eight(cfg, t, true),
    }
}

fn describe_eight(cfg: &RunConfig, t: &mut Table, with_ir_detuning: bool) {
    let e = &cfg.eight;
    t.meta("b_field_mg", fmt_e(e.params.b_mg))
        .meta("rabi_uv_mhz", fmt_e(e.params.rabi_uv_mhz))
        .meta("rabi_ir_mhz", fmt_e(e.params.rabi_ir_mhz))
        .meta("detuning_uv_mhz", fmt_e(e.params.detuning_uv_mhz));
    if with_ir_detuning {
        t.meta("detuning_ir_mhz", fmt_e(e.detuning_ir_mhz));
    }
    t.meta("gamma_sp_mhz", fmt_e(e.model.gamma_sp_mhz))
        .meta("gamma_dp_mhz", fmt_e(e.model.gamma_dp_mhz));
}

fn scheme_labels(scheme: &LevelScheme) -> Vec<String> {
    scheme
        .manifolds()
        .iter()
        .flat_map(|m| m.sublevels().into_iter().map(move |s| format!("{}({s})", m.label)))
        .collect()
}

pub fn steady(cfg: &RunConfig) -> Result<Output, CliError> {
    let (result, basis) = match model(cfg)? {
        Model::FourLevel(p) => {
            let l = four_level_liouvillian(&p).map_err(core_error)?;
            let e = FourLevelParams::EXCITED;
            let ss = steady_state(&l, &ket_bra(4, e, e)).map_err(core_error)?;
            let basis = ["g(-1)", "g(0)", "g(+1)", "e"].map(String::from).to_vec();
            (ss, basis)
        }
        Model::EightLevel(p) => {
            let scheme = p.scheme();
            let excited: Vec<usize> = scheme.indices(LevelScheme::P).collect();
            let l = eight_level_liouvillian(&p).map_err(core_error)?;
            let ss = steady_state(&l, &projector(scheme.dim(), &excited)).map_err(core_error)?;
            (ss, scheme_labels(&scheme))
        }
    };
    let mut header = vec![
        "model".to_string(),
        "p_e".into(),
        "residual_rad_per_s".into(),
        "nullspace_dim".into(),
        "degenerate".into(),
    ];
    let mut row = vec![
        cfg.model.name().to_string(),
        fmt_e(result.p_e),
        fmt_e(result.residual),
        result.nullspace_dim.to_string(),
        bool_str(result.degenerate).to_string(),
    ];
    let mut t = Table::default();
    describe(cfg, &mut t);
    if cfg.populations {
        t.meta("basis", basis.join(" "));
        for (k, p) in result.rho.populations().into_iter().enumerate() {
            header.push(format!("pop_{k}"));
            row.push(fmt_e(p));
        }
    }
    t.header = header;
    t.row(row);
    let mut out = Output::ok(t.render());
    if result.degenerate {
        out.notes.push(format!(
            "stationary state is not unique ({} dimensions); reporting the minimum-norm state",
            result.nullspace_dim
        ));
    }
    Ok(out)
}

pub fn scan(cfg: &RunConfig, kind: ScanKind) -> Result<Output, CliError> {
    match kind {
        ScanKind::Power => scan_power(cfg),
        ScanKind::Detuning => scan_detuning(cfg),
        ScanKind::Slope => scan_slope(cfg),
    }
}

fn value_column(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::FourLevel => "p_e",
        ModelKind::EightLevel => "p_p",
    }
}

fn failures_to_status(res: &ScanResult, axis: &[f64], out: &mut Output, unit: &str) {
    for (x, s) in axis.iter().zip(&res.status) {
        if let PointStatus::Failed(msg) = s {
            out.notes.push(format!("point {} {unit} failed: {msg}", fmt_e(*x)));
        }
    }
    if res.failures() > 0 {
        out.status = Status::SolverFailure;
    }
}

fn scan_power(cfg: &RunConfig) -> Result<Output, CliError> {
    let m = model(cfg)?;
    let grid_mhz2 = cfg.omega2_grid.values().map_err(core_error)?;
    let grid: Vec<f64> = grid_mhz2.iter().map(|&x| mhz2_to_rad2(x)).collect();
    let res = power_scan(&m, &grid, cfg.solver).map_err(core_error)?;

    let axis = match cfg.model {
        ModelKind::FourLevel => "omega2_mhz2",
        ModelKind::EightLevel => "omega2_ir_mhz2",
    };
    let value = value_column(cfg.model);
    let mut t = Table::new(&[axis, value, "status"]);
    describe(cfg, &mut t);
    t.meta(
        "maximum",
        format!(
            "{axis} = {}, {value} = {}, at_edge = {}",
            fmt_e(rad2_to_mhz2(res.argmax_axis)),
            fmt_e(res.max_value),
            bool_str(res.peak_at_edge)
        ),
    );
    for k in 0..grid.len() {
        t.row(vec![
            fmt_e(grid_mhz2[k]),
            fmt_e(res.values[k]),
            status_str(&res.status[k]).into(),
        ]);
    }
    let mut out = Output::ok(t.render());
    if res.peak_at_edge {
        out.notes
            .push("maximum lies on the edge of the grid; widen the omega2 range".into());
    }
    failures_to_status(&res, &grid_mhz2, &mut out, "MHz^2");
    Ok(out)
}

/// Depth of each interior local minimum below the lower of its two
/// flanking maxima, relative to the global maximum.
pub fn dip_depths(values: &[f64]) -> Vec<(usize, f64)> {
    let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    local_minima(values)
        .into_iter()
        .map(|k| {
            let left = values[..k].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let right = values[k + 1..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (k, (left.min(right) - values[k]) / peak)
        })
        .collect()
}

fn scan_detuning(cfg: &RunConfig) -> Result<Output, CliError> {
    if cfg.model != ModelKind::EightLevel {
        return Err(CliError::Input(
            "detuning scans sweep the IR laser and need the eight-level model".into(),
        ));
    }
    let p = cfg.eight.params().map_err(core_error)?;
    let grid_mhz = cfg.detuning_ir_grid.values().map_err(core_error)?;
    let grid: Vec<f64> = grid_mhz.iter().map(|&x| mhz_to_rad(x)).collect();
    let res = detuning_scan(&p, &grid).map_err(core_error)?;

    let mut t = Table::new(&["detuning_ir_mhz", "p_p", "status"]);
    t.meta("model", cfg.model.name());
    describe_eight(cfg, &mut t, false);
    t.meta(
        "maximum",
        format!(
            "detuning_ir_mhz = {}, p_p = {}",
            fmt_e(rad_to_mhz(res.argmax_axis)),
            fmt_e(res.max_value)
        ),
    );
    for (k, depth) in dip_depths(&res.values) {
        t.meta(
            "dip",
            format!(
                "detuning_ir_mhz = {}, p_p = {}, depth = {}",
                fmt_e(grid_mhz[k]),
                fmt_e(res.values[k]),
                fmt_e(depth)
            ),
        );
    }
    for k in 0..grid.len() {
        t.row(vec![
            fmt_e(grid_mhz[k]),
            fmt_e(res.values[k]),
            status_str(&res.status[k]).into(),
        ]);
    }
    let mut out = Output::ok(t.render());
    failures_to_status(&res, &grid_mhz, &mut out, "MHz");
    Ok(out)
}

fn scan_slope(cfg: &RunConfig) -> Result<Output, CliError> {
    let m = model(cfg)?;
    let larmor_khz = cfg.larmor_grid.values().map_err(core_error)?;
    let larmor_hz: Vec<f64> = larmor_khz.iter().map(|k| k * 1e3).collect();
    let grid: Vec<f64> = cfg
        .omega2_grid
        .values()
        .map_err(core_error)?
        .into_iter()
        .map(mhz2_to_rad2)
        .collect();
    let res = threshold_slope(&m, &larmor_hz, &grid, cfg.solver).map_err(core_error)?;

    let mut t = Table::new(&["larmor_khz", "omega2_max_mhz2"]);
    describe(cfg, &mut t);
    t.meta("slope_mhz", fmt_e(res.slope_mhz))
        .meta("intercept_mhz2", fmt_e(res.intercept * 1e-12))
        .meta("r_squared", fmt_e(res.r_squared))
        .meta("monotone", bool_str(res.monotone))
        .meta("peak_at_edge", bool_str(res.peak_at_edge));
    for (k, o2) in larmor_khz.iter().zip(&res.omega2_max_points) {
        t.row(vec![fmt_e(*k), fmt_e(rad2_to_mhz2(*o2))]);
    }
    let mut out = Output::ok(t.render());
    out.notes.push(format!(
        "slope_mhz = {} (r_squared = {})",
        fmt_e(res.slope_mhz),
        fmt_e(res.r_squared)
    ));
    if !res.monotone {
        out.notes
            .push("omega2_max is not strictly increasing with the Larmor frequency".into());
    }
    if res.peak_at_edge {
        out.notes
            .push("a maximum lies on the edge of the omega2 grid; widen the range".into());
    }
    Ok(out)
}

pub fn load_spectrum(path: &Path) -> Result<SpectrumData, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    read_spectrum(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn fit(cfg: &RunConfig, data: &SpectrumData, curve: Option<&Path>) -> Result<Output, CliError> {
    if data.len() < MIN_FIT_POINTS {
        return Err(CliError::Input(format!(
            "fit needs at least {MIN_FIT_POINTS} spectrum points, found {}",
            data.len()
        )));
    }
    let options = FitOptions {
        max_iterations: cfg.max_iterations,
        ..FitOptions::default()
    };
    let initial = cfg.eight.params;
    let res = fit_spectrum(data, &cfg.eight.model, &initial, cfg.free, &options).map_err(core_error)?;

    let mut t = Table::new(&["parameter", "value", "uncertainty", "free"]);
    t.meta("model", ModelKind::EightLevel.name())
        .meta("points", data.len().to_string())
        .meta("weighted", bool_str(data.count_errors().is_some()))
        .meta("converged", bool_str(res.converged))
        .meta("iterations", res.iterations.to_string())
        .meta("residual_norm", fmt_e(res.residual_norm))
        .meta("jacobian_degenerate", bool_str(res.jacobian_degenerate))
        .meta("gamma_sp_mhz", fmt_e(cfg.eight.model.gamma_sp_mhz))
        .meta("gamma_dp_mhz", fmt_e(cfg.eight.model.gamma_dp_mhz));
    for p in FitParam::ALL {
        t.row(vec![
            p.name().to_string(),
            fmt_e(res.params.get(p)),
            res.uncertainty(p).map(fmt_e).unwrap_or_default(),
            bool_str(cfg.free.is_free(p)).to_string(),
        ]);
    }
    let mut out = Output::ok(t.render());
    if let Some(path) = curve {
        let model = model_spectrum(&cfg.eight.model, &res.params, data.detunings_mhz())
            .map_err(core_error)?;
        let mut c = Table::new(&["detuning_mhz", "counts", "model_counts"]);
        c.meta("model", ModelKind::EightLevel.name());
        for k in 0..data.len() {
            c.row(vec![
                fmt_e(data.detunings_mhz()[k]),
                fmt_e(data.counts()[k]),
                fmt_e(model[k]),
            ]);
        }
        out.files.push((path.to_path_buf(), c.render()));
    }
    if res.jacobian_degenerate {
        out.notes
            .push("Jacobian is rank deficient; some parameters are not identifiable".into());
    }
    if !res.converged {
        out.notes.push(format!(
            "fit did not converge in {} iterations; best parameters reported",
            res.iterations
        ));
        out.status = Status::NotConverged;
    }
    Ok(out)
}

pub fn synth(cfg: &RunConfig) -> Result<Output, CliError> {
    let grid = cfg.detuning_ir_grid.values().map_err(core_error)?;
    let data = synthesize_spectrum(
        &cfg.eight.model,
        &cfg.eight.params,
        &grid,
        cfg.noise_relative,
        cfg.seed,
    )
    .map_err(core_error)?;
    let mut t = spectrum_table(&data);
    t.meta("model", ModelKind::EightLevel.name());
    describe_eight(cfg, &mut t, false);
    t.meta("scale", fmt_e(cfg.eight.params.scale))
        .meta("background", fmt_e(cfg.eight.params.background))
        .meta("noise_relative", fmt_e(cfg.noise_relative))
        .meta("seed", cfg.seed.to_string());
    Ok(Output::ok(t.render()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dip_depth_uses_lower_shoulder() {
        let v = [0.0, 1.0, 0.2, 0.5, 0.1, 0.0];
        let d = dip_depths(&v);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].0, 2);
        assert!((d[0].1 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn four_level_steady_matches_closed_form() {
        let cfg = RunConfig::parse(
            "rabi_mhz = 23.1\nlarmor_khz = 23100\ndetuning_mhz = 0\ngamma_s_mhz = 0\n",
        )
        .unwrap();
        let out = steady(&cfg).unwrap();
        let row = out.main.lines().last().unwrap();
        let p_e: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((p_e - 6.0 / 31.0).abs() < 1e-6, "{p_e}");
    }

    #[test]
    fn invalid_parameters_are_input_errors() {
        let e = core_error(Error::InvalidParameter {
            name: "x",
            value: -1.0,
            reason: "r",
        });
        assert_eq!(e.exit_code(), 2);
        assert_eq!(core_error(Error::SingularSystem).exit_code(), 3);
    }

    #[test]
    fn detuning_scan_needs_eight_levels() {
        let cfg = RunConfig::default();
        assert_eq!(scan(&cfg, ScanKind::Detuning).unwrap_err().exit_code(), 2);
    }
}
