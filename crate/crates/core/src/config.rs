//! Metric configuration files.
//!
//! A config is plain `key = value` text; `#` starts a comment.
//!
//! ```text
//! kind = warp          # or `conformal`
//! preset = sphere      # either a preset ...
//! table = profile.csv  # ... or a two-column CSV, header `r,h` or `s,rho`
//! ```
//!
//! Table paths are relative to the config file. With `kind = warp` the
//! table must have header `r,h`; with `kind = conformal`, `s,rho`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::warp::{conformal_factor_from_table, from_conformal_factor, from_table, make_preset, Preset, WarpProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Warp,
    Conformal,
}

/// A preset name, or the path of a metric config file.
pub fn load_metric(name: &str) -> Result<WarpProfile> {
    if let Ok(p) = name.parse::<Preset>() {
        return Ok(make_preset(p));
    }
    let path = Path::new(name);
    if !path.is_file() {
        return Err(Error::InvalidParameter(format!(
            "unknown metric `{name}` (presets: euclidean, sphere, gaussian-shrinker; or a config file path)"
        )));
    }
    load_metric_config(path)
}

pub fn load_metric_config(path: &Path) -> Result<WarpProfile> {
    let text = fs::read_to_string(path)?;
    let entries = parse_entries(&text)?;
    let kind = match entries.get("kind").map(String::as_str) {
        Some("warp") | None => MetricKind::Warp,
        Some("conformal") => MetricKind::Conformal,
        Some(other) => return Err(Error::Parse(format!("unknown metric kind `{other}`"))),
    };
    match (entries.get("preset"), entries.get("table")) {
        (Some(p), None) => Ok(make_preset(p.parse()?)),
        (None, Some(t)) => {
            let table = path.parent().unwrap_or(Path::new(".")).join(t);
            load_table(&table, kind)
        }
        _ => Err(Error::Parse("metric config needs exactly one of `preset` or `table`".into())),
    }
}

fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", i + 1)))?;
        let key = k.trim().to_string();
        if !matches!(key.as_str(), "kind" | "preset" | "table") {
            return Err(Error::Parse(format!("line {}: unknown key `{key}`", i + 1)));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Parse(format!("line {}: duplicate key `{key}`", i + 1)));
        }
    }
    Ok(out)
}

/// Load a two-column table; the header decides between `r,h` and `s,rho`.
pub fn load_table(path: &Path, kind: MetricKind) -> Result<WarpProfile> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let expected = match kind {
        MetricKind::Warp => ["r", "h"],
        MetricKind::Conformal => ["s", "rho"],
    };
    if header != expected {
        return Err(Error::Parse(format!(
            "table header must be `{}` for this metric kind (got `{}`)",
            expected.join(","),
            header.join(",")
        )));
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad number in table row {:?}", rec.position().map(|p| p.line()))))
        };
        a.push(parse(0)?);
        b.push(parse(1)?);
    }
    match kind {
        MetricKind::Warp => from_table(a, b),
        MetricKind::Conformal => from_conformal_factor(conformal_factor_from_table(a, b)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn presets_by_name_and_config() {
        assert!(load_metric("sphere").unwrap().is_preset(Preset::Sphere));
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("m.cfg");
        fs::write(&cfg, "kind = warp\npreset = gaussian-shrinker # comment\n").unwrap();
        assert!(load_metric(cfg.to_str().unwrap()).unwrap().is_preset(Preset::GaussianShrinker));
        assert!(load_metric("no-such-metric").is_err());
    }

    #[test]
    fn warp_table_reproduces_sine() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = fs::File::create(dir.path().join("h.csv")).unwrap();
        writeln!(f, "r,h").unwrap();
        for i in 0..=400 {
            let r = 3.0 * i as f64 / 400.0;
            writeln!(f, "{r},{}", r.sin()).unwrap();
        }
        drop(f);
        let cfg = dir.path().join("m.cfg");
        fs::write(&cfg, "kind = warp\ntable = h.csv\n").unwrap();
        let prof = load_metric_config(&cfg).unwrap();
        assert!((prof.h(1.0) - 1f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn conformal_table_and_bad_headers() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("s,rho\n");
        for i in 0..=400 {
            let s = 4.0 * i as f64 / 400.0;
            text.push_str(&format!("{s},{}\n", (-s * s / 8.0).exp()));
        }
        fs::write(dir.path().join("rho.csv"), &text).unwrap();
        fs::write(dir.path().join("c.cfg"), "kind = conformal\ntable = rho.csv\n").unwrap();
        let prof = load_metric_config(&dir.path().join("c.cfg")).unwrap();
        assert!(prof.h(0.5) > 0.0);
        fs::write(dir.path().join("w.cfg"), "kind = warp\ntable = rho.csv\n").unwrap();
        assert!(matches!(load_metric_config(&dir.path().join("w.cfg")), Err(Error::Parse(_))));
        fs::write(dir.path().join("x.cfg"), "kind = warp\npreset = sphere\ntable = rho.csv\n").unwrap();
        assert!(load_metric_config(&dir.path().join("x.cfg")).is_err());
    }
}
