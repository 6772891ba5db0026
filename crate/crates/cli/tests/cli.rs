use std::process::{Command, Output};

use tempfile::TempDir;

fn darkstate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_darkstate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Data rows (no `#` lines, no header) split into cells.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn meta<'a>(text: &'a str, key: &str) -> Vec<&'a str> {
    let prefix = format!("# {key} = ");
    text.lines().filter_map(|l| l.strip_prefix(prefix.as_str())).collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn no_drive_means_no_fluorescence() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.cfg", "rabi_mhz = 0\n");
    let o = darkstate(&["steady", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    assert_eq!(num(&r[0][1]), 0.0);
}

#[test]
fn four_level_closed_form_point() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "c.cfg",
        "# Ω = Γ_T, δ = Γ_T\nrabi_mhz = 23.1\nlarmor_khz = 23100\ndetuning_mhz = 0\ngamma_s_mhz = 0\n",
    );
    let o = darkstate(&["steady", "--config", &cfg, "--populations"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let r = rows(&text);
    assert!((num(&r[0][1]) - 6.0 / 31.0).abs() < 1e-6);
    assert_eq!(meta(&text, "basis"), ["g(-1) g(0) g(+1) e"]);
    let total: f64 = r[0][5..].iter().map(|c| num(c)).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn eight_level_population_is_physical() {
    let o = darkstate(&["steady", "--model", "eight"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let p = num(&rows(&stdout(&o))[0][1]);
    assert!(p > 0.0 && p < 0.5, "{p}");
}

#[test]
fn power_scan_reports_a_single_maximum() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.cfg", "omega2_points = 121\n");
    let o = darkstate(&["scan", "--kind", "power", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let r = rows(&text);
    assert_eq!(r.len(), 121);
    let axis: Vec<f64> = r.iter().map(|c| num(&c[0])).collect();
    assert!(axis.windows(2).all(|w| w[1] > w[0]));
    assert!(r.iter().all(|c| c[2] == "ok"));
    let maxima = meta(&text, "maximum");
    assert_eq!(maxima.len(), 1);
    assert!(maxima[0].contains("at_edge = false"), "{}", maxima[0]);
}

#[test]
fn four_level_threshold_slope() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "c.cfg",
        "larmor_start_khz = 10\nlarmor_stop_khz = 40\nlarmor_points = 4\n\
         omega2_start_mhz2 = 0.05\nomega2_stop_mhz2 = 5\nomega2_points = 801\n\
         detuning_mhz = 0\n",
    );
    let o = darkstate(&["scan", "--kind", "slope", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let slope = num(meta(&text, "slope_mhz")[0]);
    let expect = (2.0f64 / 3.0).sqrt() * 23.1;
    assert!((slope / expect - 1.0).abs() < 0.02, "{slope} vs {expect}");
    assert_eq!(meta(&text, "monotone"), ["true"]);
    assert!(stderr(&o).contains("slope_mhz"));
}

#[test]
fn detuning_scan_shows_a_deep_dark_resonance() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "c.cfg",
        "model = eight-level\ndetuning_ir_start_mhz = -40\ndetuning_ir_stop_mhz = 20\ndetuning_ir_points = 121\n",
    );
    let o = darkstate(&["scan", "--kind", "detuning", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let deepest = meta(&text, "dip")
        .iter()
        .map(|d| num(d.rsplit("depth = ").next().unwrap()))
        .fold(0.0, f64::max);
    assert!(deepest > 0.2, "{text}");
}

#[test]
fn detuning_scan_needs_eight_levels() {
    let o = darkstate(&["scan", "--kind", "detuning", "--model", "four"]);
    assert_eq!(o.status.code(), Some(2));
}

fn synth_spectrum(dir: &TempDir) -> String {
    let cfg = write(
        dir,
        "synth.cfg",
        "detuning_ir_start_mhz = -50\ndetuning_ir_stop_mhz = 30\ndetuning_ir_points = 81\n\
         b_field_mg = 33\nscale = 50000\nseed = 11\n",
    );
    let out = dir.path().join("spectrum.csv");
    let o = darkstate(&["synth", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.to_str().unwrap().to_string()
}

fn report_value(text: &str, name: &str) -> f64 {
    let r = rows(text);
    num(&r.iter().find(|c| c[0] == name).expect("parameter row")[1])
}

#[test]
fn synthetic_spectrum_fits_back() {
    let dir = TempDir::new().unwrap();
    let spectrum = synth_spectrum(&dir);
    let cfg = write(&dir, "fit.cfg", "b_field_mg = 38\nscale = 45000\n");
    let curve = dir.path().join("curve.csv");
    let o = darkstate(&["fit", &spectrum, "--config", &cfg, "--curve", curve.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(meta(&text, "converged"), ["true"]);
    let b = report_value(&text, "b_field_mg");
    assert!((b / 33.0 - 1.0).abs() < 0.05, "{b}");
    let curve = std::fs::read_to_string(curve).unwrap();
    assert_eq!(rows(&curve).len(), 81);
}

#[test]
fn frozen_fit_takes_no_steps() {
    let dir = TempDir::new().unwrap();
    let spectrum = synth_spectrum(&dir);
    let cfg = write(&dir, "fit.cfg", "free = none\n");
    let o = darkstate(&["fit", &spectrum, "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(meta(&stdout(&o), "iterations"), ["0"]);
}

#[test]
fn malformed_spectrum_names_the_line() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.csv", "detuning_mhz,counts\n-1,10\n0,11\n1,oops\n");
    let o = darkstate(&["fit", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.cfg", "rabi_mhz = 3\nlarmor_hz = 10\n");
    let o = darkstate(&["steady", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("larmor_hz") && err.contains("line 2"), "{err}");
}

#[test]
fn missing_config_file_is_an_input_error() {
    let o = darkstate(&["steady", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.cfg", "omega2_points = 41\n");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = darkstate(&["scan", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));

    let synth = |seed: &str| stdout(&darkstate(&["synth", "--seed", seed]));
    assert_eq!(synth("5"), synth("5"));
    assert_ne!(synth("5"), synth("6"));
}
