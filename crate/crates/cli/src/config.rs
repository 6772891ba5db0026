//! Flat `key = value` run configuration.
//!
//! Units are part of the key names. Every key is optional; absent values fall
//! back to the calcium calibration operating point.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use darkstate_core::atom::{
    CALCIUM_BRANCHING_TO_S, CALCIUM_GAMMA_TOTAL_MHZ, larmor_splitting, linear_perp_polarization,
};
use darkstate_core::scans::{linear_grid, log_grid};
use darkstate_core::units::{khz_to_rad, mhz_to_rad};
use darkstate_core::{
    EightLevelParams, FitParam, FourLevelParams, FreeMask, LandeFactors, MagneticField,
    ModelKind, Polarization, Solver, SpectrumModel, SpectrumParams,
};

pub const KNOWN_KEYS: &[&str] = &[
    "model",
    "output",
    "solver",
    "populations",
    "seed",
    // four-level
    "rabi_mhz",
    "detuning_mhz",
    "larmor_khz",
    "gamma_total_mhz",
    "gamma_s_mhz",
    // eight-level and fit
    "b_field_mg",
    "rabi_uv_mhz",
    "rabi_ir_mhz",
    "detuning_uv_mhz",
    "detuning_ir_mhz",
    "gamma_sp_mhz",
    "gamma_dp_mhz",
    "g_s",
    "g_p",
    "g_d",
    "polarization_uv",
    "polarization_ir",
    "scale",
    "background",
    "noise_relative",
    "free",
    "max_iterations",
    // grids
    "omega2_start_mhz2",
    "omega2_stop_mhz2",
    "omega2_points",
    "omega2_spacing",
    "detuning_ir_start_mhz",
    "detuning_ir_stop_mhz",
    "detuning_ir_points",
    "detuning_ir_spacing",
    "larmor_start_khz",
    "larmor_stop_khz",
    "larmor_points",
    "larmor_spacing",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn general(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self { line: Some(l), message } => write!(f, "config line {l}: {message}"),
            Self { line: None, message } => write!(f, "config: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed but untyped key-value pairs.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::at(line, format!("expected `key = value`, found `{content}`")));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(ConfigError::at(line, "empty key"));
            }
            if !KNOWN_KEYS.contains(&key) {
                let hint = suggestion(key)
                    .map(|k| format!(" (did you mean `{k}`?)"))
                    .unwrap_or_default();
                return Err(ConfigError::at(line, format!("unknown key `{key}`{hint}")));
            }
            if value.is_empty() {
                return Err(ConfigError::at(line, format!("missing value for `{key}`")));
            }
            let entry = Entry {
                value: value.to_string(),
                line,
            };
            if let Some(prev) = entries.insert(key.to_string(), entry) {
                return Err(ConfigError::at(
                    line,
                    format!("duplicate key `{key}` (first set on line {})", prev.line),
                ));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::general(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn get(&self, key: &str) -> Option<&Entry> {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        self.entries.get(key)
    }

    fn number(&self, key: &str, bound: Bound) -> Result<Option<f64>, ConfigError> {
        let Some(e) = self.get(key) else {
            return Ok(None);
        };
        let v: f64 = e
            .value
            .parse()
            .map_err(|_| ConfigError::at(e.line, format!("`{key}`: `{}` is not a number", e.value)))?;
        if !v.is_finite() {
            return Err(ConfigError::at(e.line, format!("`{key}` must be finite")));
        }
        let ok = match bound {
            Bound::Any => true,
            Bound::NonNegative => v >= 0.0,
            Bound::Positive => v > 0.0,
        };
        if !ok {
            return Err(ConfigError::at(e.line, format!("`{key}` = {v} must be {bound}")));
        }
        Ok(Some(v))
    }

    fn integer(&self, key: &str, min: u64) -> Result<Option<u64>, ConfigError> {
        let Some(e) = self.get(key) else {
            return Ok(None);
        };
        let v: u64 = e.value.parse().map_err(|_| {
            ConfigError::at(e.line, format!("`{key}`: `{}` is not a non-negative integer", e.value))
        })?;
        if v < min {
            return Err(ConfigError::at(e.line, format!("`{key}` must be at least {min}")));
        }
        Ok(Some(v))
    }

    fn word<T>(
        &self,
        key: &str,
        parse: impl Fn(&str) -> Option<T>,
        expected: &str,
    ) -> Result<Option<T>, ConfigError> {
        let Some(e) = self.get(key) else {
            return Ok(None);
        };
        parse(&e.value).map(Some).ok_or_else(|| {
            ConfigError::at(e.line, format!("`{key}`: expected {expected}, found `{}`", e.value))
        })
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.get(key).map(|e| e.line)
    }
}

#[derive(Debug, Clone, Copy)]
enum Bound {
    Any,
    NonNegative,
    Positive,
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bound::Any => "finite",
            Bound::NonNegative => "non-negative",
            Bound::Positive => "positive",
        })
    }
}

/// Known key with the same stem as `key` once the unit suffix is dropped.
fn suggestion(key: &str) -> Option<&'static str> {
    let stem = |k: &str| {
        k.rsplit_once('_')
            .map(|(s, _)| s.to_string())
            .unwrap_or_else(|| k.to_string())
    };
    let s = stem(key);
    KNOWN_KEYS
        .iter()
        .copied()
        .find(|k| stem(k) == s || *k == s)
}

pub fn parse_model(s: &str) -> Option<ModelKind> {
    match s {
        "four" | "four-level" => Some(ModelKind::FourLevel),
        "eight" | "eight-level" => Some(ModelKind::EightLevel),
        _ => None,
    }
}

fn parse_solver(s: &str) -> Option<Solver> {
    match s {
        "auto" => Some(Solver::Auto),
        "numerical" => Some(Solver::Numerical),
        _ => None,
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

fn parse_polarization(s: &str) -> Option<Polarization> {
    match s {
        "linear-perp" => Some(linear_perp_polarization()),
        "pi" => Some(Polarization::pi()),
        "sigma-plus" => Some(Polarization::sigma_plus()),
        "sigma-minus" => Some(Polarization::sigma_minus()),
        _ => None,
    }
}

fn parse_free(s: &str) -> Option<FreeMask> {
    if s == "none" {
        return Some(FreeMask::none());
    }
    if s == "all" {
        return Some(FreeMask::all());
    }
    s.split(',')
        .map(|n| match n.trim() {
            "b_mg" => Some(FitParam::BField),
            other => FitParam::from_name(other),
        })
        .try_fold(FreeMask::none(), |m, p| p.map(|p| m.with(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

fn parse_spacing(s: &str) -> Option<Spacing> {
    match s {
        "linear" => Some(Spacing::Linear),
        "log" => Some(Spacing::Log),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl GridSpec {
    pub fn values(&self) -> darkstate_core::Result<Vec<f64>> {
        match self.spacing {
            Spacing::Linear => linear_grid(self.start, self.stop, self.points),
            Spacing::Log => log_grid(self.start, self.stop, self.points),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourLevelConfig {
    pub rabi_mhz: f64,
    pub detuning_mhz: f64,
    pub larmor_khz: f64,
    pub gamma_total_mhz: f64,
    pub gamma_s_mhz: f64,
}

impl FourLevelConfig {
    pub fn params(&self) -> FourLevelParams {
        let gamma_t = mhz_to_rad(self.gamma_total_mhz);
        let gamma_s = mhz_to_rad(self.gamma_s_mhz);
        FourLevelParams::equal_branching(
            mhz_to_rad(self.rabi_mhz),
            mhz_to_rad(self.detuning_mhz),
            khz_to_rad(self.larmor_khz),
            gamma_t - gamma_s,
            gamma_s,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EightLevelConfig {
    pub model: SpectrumModel,
    pub params: SpectrumParams,
    pub detuning_ir_mhz: f64,
}

impl EightLevelConfig {
    pub fn params(&self) -> darkstate_core::Result<EightLevelParams> {
        self.model.eight_level(&self.params, self.detuning_ir_mhz)
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub output: Option<PathBuf>,
    pub solver: Solver,
    pub populations: bool,
    pub seed: u64,
    pub four: FourLevelConfig,
    pub eight: EightLevelConfig,
    pub noise_relative: f64,
    pub free: FreeMask,
    pub max_iterations: usize,
    pub omega2_grid: GridSpec,
    pub detuning_ir_grid: GridSpec,
    pub larmor_grid: GridSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_raw(&RawConfig::default()).expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::load(path)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        use Bound::*;
        let model = raw
            .word("model", parse_model, "four-level or eight-level")?
            .unwrap_or(ModelKind::FourLevel);
        let output = raw.get("output").map(|e| PathBuf::from(&e.value));
        let solver = raw
            .word("solver", parse_solver, "auto or numerical")?
            .unwrap_or_default();
        let populations = raw
            .word("populations", parse_bool, "true or false")?
            .unwrap_or(false);
        let seed = raw.integer("seed", 0)?.unwrap_or(0);

        let g_factors = {
            let d = LandeFactors::default();
            LandeFactors {
                s: raw.number("g_s", Any)?.unwrap_or(d.s),
                p: raw.number("g_p", Any)?.unwrap_or(d.p),
                d: raw.number("g_d", Any)?.unwrap_or(d.d),
            }
        };

        let gamma_total_mhz = raw
            .number("gamma_total_mhz", Positive)?
            .unwrap_or(CALCIUM_GAMMA_TOTAL_MHZ);
        let gamma_s_mhz = raw
            .number("gamma_s_mhz", NonNegative)?
            .unwrap_or(CALCIUM_BRANCHING_TO_S * gamma_total_mhz);
        if gamma_s_mhz > gamma_total_mhz {
            return Err(ConfigError {
                line: raw.line_of("gamma_s_mhz"),
                message: format!(
                    "`gamma_s_mhz` = {gamma_s_mhz} exceeds `gamma_total_mhz` = {gamma_total_mhz}"
                ),
            });
        }
        let b_field_mg = raw.number("b_field_mg", NonNegative)?;
        let larmor_khz = match (raw.number("larmor_khz", Any)?, b_field_mg) {
            (Some(_), Some(_)) if model == ModelKind::FourLevel => {
                return Err(ConfigError {
                    line: raw.line_of("larmor_khz"),
                    message: "four-level model takes either `larmor_khz` or `b_field_mg`, not both"
                        .into(),
                });
            }
            (Some(l), _) => l,
            (None, Some(b)) => {
                let field = MagneticField::from_milligauss(b).map_err(|e| ConfigError {
                    line: raw.line_of("b_field_mg"),
                    message: e.to_string(),
                })?;
                larmor_splitting(field, g_factors.d) / std::f64::consts::TAU / 1e3
            }
            (None, None) => 20.0,
        };
        let four = FourLevelConfig {
            rabi_mhz: raw.number("rabi_mhz", NonNegative)?.unwrap_or(10.0),
            detuning_mhz: raw.number("detuning_mhz", Any)?.unwrap_or(0.0),
            larmor_khz,
            gamma_total_mhz,
            gamma_s_mhz,
        };

        let spectrum_model = {
            let d = SpectrumModel::default();
            SpectrumModel {
                gamma_sp_mhz: raw.number("gamma_sp_mhz", Positive)?.unwrap_or(d.gamma_sp_mhz),
                gamma_dp_mhz: raw.number("gamma_dp_mhz", Positive)?.unwrap_or(d.gamma_dp_mhz),
                polarization_uv: raw
                    .word("polarization_uv", parse_polarization, POLARIZATIONS)?
                    .unwrap_or(d.polarization_uv),
                polarization_ir: raw
                    .word("polarization_ir", parse_polarization, POLARIZATIONS)?
                    .unwrap_or(d.polarization_ir),
                g_factors,
            }
        };
        let mut params = SpectrumParams::calibration(b_field_mg.unwrap_or(39.0), &spectrum_model);
        for (key, p, bound) in [
            ("rabi_uv_mhz", FitParam::RabiUv, NonNegative),
            ("rabi_ir_mhz", FitParam::RabiIr, NonNegative),
            ("detuning_uv_mhz", FitParam::DetuningUv, Any),
            ("scale", FitParam::Scale, NonNegative),
            ("background", FitParam::Background, Any),
        ] {
            if let Some(v) = raw.number(key, bound)? {
                params.set(p, v);
            }
        }
        let eight = EightLevelConfig {
            model: spectrum_model,
            params,
            detuning_ir_mhz: raw.number("detuning_ir_mhz", Any)?.unwrap_or(0.0),
        };

        let grid = |prefix: &str, unit: &str, default: GridSpec| -> Result<GridSpec, ConfigError> {
            let start_key = format!("{prefix}_start_{unit}");
            let stop_key = format!("{prefix}_stop_{unit}");
            let points_key = format!("{prefix}_points");
            let spacing_key = format!("{prefix}_spacing");
            let g = GridSpec {
                start: raw.number(&start_key, Any)?.unwrap_or(default.start),
                stop: raw.number(&stop_key, Any)?.unwrap_or(default.stop),
                points: raw
                    .integer(&points_key, 2)?
                    .map_or(default.points, |n| n as usize),
                spacing: raw
                    .word(&spacing_key, parse_spacing, "linear or log")?
                    .unwrap_or(default.spacing),
            };
            g.values().map_err(|e| ConfigError {
                line: raw.line_of(&start_key).or(raw.line_of(&stop_key)),
                message: format!("{prefix} grid: {e}"),
            })?;
            Ok(g)
        };
        let omega2_grid = grid(
            "omega2",
            "mhz2",
            GridSpec {
                start: 1e-3,
                stop: 1e2,
                points: 1001,
                spacing: Spacing::Log,
            },
        )?;
        let detuning_ir_grid = grid(
            "detuning_ir",
            "mhz",
            GridSpec {
                start: -60.0,
                stop: 40.0,
                points: 401,
                spacing: Spacing::Linear,
            },
        )?;
        let larmor_grid = grid(
            "larmor",
            "khz",
            GridSpec {
                start: 5.0,
                stop: 50.0,
                points: 10,
                spacing: Spacing::Linear,
            },
        )?;

        Ok(RunConfig {
            model,
            output,
            solver,
            populations,
            seed,
            four,
            eight,
            noise_relative: raw.number("noise_relative", NonNegative)?.unwrap_or(0.01),
            free: raw
                .word("free", parse_free, "`all`, `none` or a comma-separated list of fit parameters")?
                .unwrap_or_else(|| {
                    FreeMask::of(&[
                        FitParam::BField,
                        FitParam::RabiIr,
                        FitParam::Scale,
                        FitParam::Background,
                    ])
                }),
            max_iterations: raw.integer("max_iterations", 0)?.map_or(200, |n| n as usize),
            omega2_grid,
            detuning_ir_grid,
            larmor_grid,
        })
    }
}

const POLARIZATIONS: &str = "linear-perp, pi, sigma-plus or sigma-minus";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_calibration_point() {
        let c = RunConfig::default();
        assert_eq!(c.model, ModelKind::FourLevel);
        assert_eq!(c.eight.params.b_mg, 39.0);
        assert_eq!(c.eight.params.detuning_uv_mhz, -14.7);
        assert_eq!(c.omega2_grid.points, 1001);
        assert!(c.free.is_free(FitParam::BField));
        assert!(!c.free.is_free(FitParam::DetuningUv));
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = RunConfig::parse("# header\n\nmodel = eight-level  # trailing\nb_field_mg = 20\n").unwrap();
        assert_eq!(c.model, ModelKind::EightLevel);
        assert_eq!(c.eight.params.b_mg, 20.0);
    }

    #[test]
    fn unknown_key_reports_line_and_hint() {
        let err = RunConfig::parse("model = four\nrabi_ir_khz = 3\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        assert!(err.message.contains("rabi_ir_khz"), "{err}");
        assert!(err.message.contains("rabi_ir_mhz"), "{err}");
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "rabi_mhz = -1",
            "gamma_total_mhz = 0",
            "omega2_points = 1",
            "omega2_start_mhz2 = 0",
            "model = nine",
            "free = b_mg,bogus",
            "seed = -3",
            "rabi_mhz = nan",
            "rabi_mhz",
            "rabi_mhz = 1\nrabi_mhz = 2",
            "gamma_s_mhz = 30",
            "larmor_khz = 1\nb_field_mg = 1",
        ] {
            assert!(RunConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn four_level_field_from_b() {
        let c = RunConfig::parse("b_field_mg = 10").unwrap();
        let expected = 0.8 * darkstate_core::units::BOHR_MHZ_PER_GAUSS * 1e3 * 0.01;
        assert!((c.four.larmor_khz - expected).abs() < 1e-9, "{}", c.four.larmor_khz);
    }

    #[test]
    fn free_list() {
        let c = RunConfig::parse("free = b_field_mg, scale").unwrap();
        assert_eq!(c.free.free(), vec![FitParam::BField, FitParam::Scale]);
        assert!(RunConfig::parse("free = none").unwrap().free.free().is_empty());
    }
}
