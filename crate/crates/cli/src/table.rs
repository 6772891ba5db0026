//! CSV tables with `#` metadata lines and fixed `%.10e` number formatting.

use std::fmt::Write as _;
use std::path::Path;

use darkstate_core::SpectrumData;

/// Formats like C's `%.10e`: ten mantissa digits, signed two-digit exponent.
pub fn fmt_e(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    let s = format!("{x:.10e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn meta(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.meta.push((key.to_string(), value.into()));
        self
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let bytes = w.into_inner().expect("in-memory flush");
        out.push_str(std::str::from_utf8(&bytes).expect("utf-8 cells"));
        out
    }
}

/// Failure to read a CSV file, tagged with the offending line when known.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvError {
    pub line: Option<u64>,
    pub message: String,
}

impl std::fmt::Display for CsvError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for CsvError {}

fn csv_error(e: csv::Error) -> CsvError {
    CsvError {
        line: e.position().map(|p| p.line()),
        message: match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                format!("expected {expected_len} fields, found {len}")
            }
            _ => e.to_string(),
        },
    }
}

pub const DETUNING_COLUMN: &str = "detuning_mhz";
pub const COUNTS_COLUMN: &str = "counts";
pub const ERROR_COLUMN: &str = "count_error";

/// Reads a spectrum with columns `detuning_mhz`, `counts` and optionally
/// `count_error`, in any order.
pub fn read_spectrum(text: &str) -> Result<SpectrumData, CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_error)?.clone();
    let header_line = text
        .lines()
        .position(|l| !l.starts_with('#'))
        .map_or(1, |k| k as u64 + 1);
    let col = |name: &str| header.iter().position(|h| h == name);
    for h in header.iter() {
        if ![DETUNING_COLUMN, COUNTS_COLUMN, ERROR_COLUMN].contains(&h) {
            return Err(CsvError {
                line: Some(header_line),
                message: format!(
                    "unknown column `{h}` (expected {DETUNING_COLUMN}, {COUNTS_COLUMN}[, {ERROR_COLUMN}])"
                ),
            });
        }
    }
    let missing = |name: &str| CsvError {
        line: Some(header_line),
        message: format!("missing column `{name}`"),
    };
    let det_col = col(DETUNING_COLUMN).ok_or_else(|| missing(DETUNING_COLUMN))?;
    let count_col = col(COUNTS_COLUMN).ok_or_else(|| missing(COUNTS_COLUMN))?;
    let err_col = col(ERROR_COLUMN);

    let mut det = Vec::new();
    let mut counts = Vec::new();
    let mut errors = Vec::new();
    let mut prev: Option<f64> = None;
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |c: usize, name: &str| -> Result<f64, CsvError> {
            let raw = record.get(c).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CsvError {
                    line: Some(line),
                    message: format!("`{name}`: `{raw}` is not a finite number"),
                }),
            }
        };
        let d = field(det_col, DETUNING_COLUMN)?;
        let c = field(count_col, COUNTS_COLUMN)?;
        if prev.is_some_and(|p| d <= p) {
            return Err(CsvError {
                line: Some(line),
                message: format!("detunings must be strictly increasing ({d} follows {})", prev.unwrap()),
            });
        }
        if c < 0.0 {
            return Err(CsvError {
                line: Some(line),
                message: format!("negative counts {c}"),
            });
        }
        if let Some(ec) = err_col {
            let e = field(ec, ERROR_COLUMN)?;
            if e <= 0.0 {
                return Err(CsvError {
                    line: Some(line),
                    message: format!("count error {e} must be positive"),
                });
            }
            errors.push(e);
        }
        prev = Some(d);
        det.push(d);
        counts.push(c);
    }
    SpectrumData::new(det, counts, err_col.map(|_| errors)).map_err(|e| CsvError {
        line: None,
        message: e.to_string(),
    })
}

pub fn spectrum_table(data: &SpectrumData) -> Table {
    let with_errors = data.count_errors().is_some();
    let mut t = if with_errors {
        Table::new(&[DETUNING_COLUMN, COUNTS_COLUMN, ERROR_COLUMN])
    } else {
        Table::new(&[DETUNING_COLUMN, COUNTS_COLUMN])
    };
    for k in 0..data.len() {
        let mut row = vec![fmt_e(data.detunings_mhz()[k]), fmt_e(data.counts()[k])];
        if let Some(errs) = data.count_errors() {
            row.push(fmt_e(errs[k]));
        }
        t.row(row);
    }
    t
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn c_style_exponent() {
        assert_eq!(fmt_e(0.0), "0.0000000000e+00");
        assert_eq!(fmt_e(123456.0), "1.2345600000e+05");
        assert_eq!(fmt_e(-6.0 / 31.0), "-1.9354838710e-01");
        assert_eq!(fmt_e(1e-120), "1.0000000000e-120");
        assert_eq!(fmt_e(f64::NAN), "nan");
    }

    #[test]
    fn metadata_then_header() {
        let mut t = Table::new(&["a_mhz", "b"]);
        t.meta("model", "four-level");
        t.row(vec![fmt_e(1.0), fmt_e(2.0)]);
        assert_eq!(
            t.render(),
            "# model = four-level\na_mhz,b\n1.0000000000e+00,2.0000000000e+00\n"
        );
    }

    #[test]
    fn spectrum_round_trip() {
        let data = SpectrumData::new(vec![-1.0, 0.5, 2.0], vec![10.0, 3.25, 0.0], Some(vec![1.0, 0.5, 0.1]))
            .unwrap();
        let text = spectrum_table(&data).render();
        assert_eq!(read_spectrum(&text).unwrap(), data);
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let text = "# comment\ndetuning_mhz,counts\n1,2\n2,x\n";
        let err = read_spectrum(text).unwrap_err();
        assert_eq!(err.line, Some(4), "{err}");

        let text = "detuning_mhz,counts\n1,2\n2,3,4\n";
        assert_eq!(read_spectrum(text).unwrap_err().line, Some(3));

        let text = "detuning_mhz,counts\n1,2\n0,3\n";
        assert_eq!(read_spectrum(text).unwrap_err().line, Some(3));

        let text = "detuning_khz,counts\n1,2\n";
        assert_eq!(read_spectrum(text).unwrap_err().line, Some(1));
    }

    proptest! {
        #[test]
        fn formatted_values_parse_back(x in -1e12f64..1e12) {
            let back: f64 = fmt_e(x).parse().unwrap();
            prop_assert!((back - x).abs() <= 1e-10 * x.abs());
        }
    }
}
