//! TOML experiment configuration.
//!
//! ```toml
//! [scenario]
//! victims = 5
//! rescuers = 10
//! area_m = 100.0
//! seed = 1
//! # comm_range_m = 60.0
//!
//! [channel]
//! ple = 3.0
//! sigma_shadow_db = 3.0
//! sigma_range_m = 0.3
//! sigma_angle_deg = 2.0
//! ref_loss_db = 40.0
//! ref_dist_m = 1.0
//!
//! [run]
//! trials = 3000
//! techniques = ["toa-coop", "tdoa-noncoop", "aoa-coop", "rssd-noncoop", "rss-coop-gd", "rss-coop-mm"]
//! parallelism = 0
//! redraw_powers = false
//!
//! [sweep]
//! axis = "rescuers"
//! values = [6, 8, 10, 12, 14]
//! ```
//!
//! Every key is optional. Unknown keys are rejected.

use std::fmt::Write as _;
use std::path::Path;

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, SweepAxis, SweepSpec, Technique};

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        let message = e.message().trim().to_string();
        Error::Parse(match line {
            Some(line) => format!("line {line}: {message}"),
            None => message,
        })
    })?;

    let mut cfg = ExperimentConfig::default();
    for (section, value) in &doc {
        let table = value.as_table().ok_or_else(|| match section.as_str() {
            "scenario" | "channel" | "run" | "sweep" => {
                Error::config(section.as_str(), "expected a table")
            }
            _ => Error::UnknownKey(section.clone()),
        })?;
        match section.as_str() {
            "scenario" => scenario_section(table, &mut cfg)?,
            "channel" => channel_section(table, &mut cfg)?,
            "run" => run_section(table, &mut cfg)?,
            "sweep" => cfg.sweep = Some(sweep_section(table)?),
            _ => return Err(Error::UnknownKey(section.clone())),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn scenario_section(t: &Table, cfg: &mut ExperimentConfig) -> Result<()> {
    for (key, v) in t {
        let field = format!("scenario.{key}");
        match key.as_str() {
            "victims" => cfg.scenario.victims = count(v, &field)?,
            "rescuers" => cfg.scenario.rescuers = count(v, &field)?,
            "area_m" => cfg.scenario.area_m = float(v, &field)?,
            "seed" => cfg.scenario.seed = seed(v, &field)?,
            "comm_range_m" => cfg.scenario.comm_range_m = Some(float(v, &field)?),
            _ => return Err(Error::UnknownKey(field)),
        }
    }
    Ok(())
}

fn channel_section(t: &Table, cfg: &mut ExperimentConfig) -> Result<()> {
    let c = &mut cfg.channel;
    for (key, v) in t {
        let field = format!("channel.{key}");
        match key.as_str() {
            "ple" => c.ple = float(v, &field)?,
            "sigma_shadow_db" => c.sigma_shadow_db = float(v, &field)?,
            "sigma_range_m" => c.sigma_range_m = float(v, &field)?,
            "sigma_angle_deg" => c.sigma_angle_rad = float(v, &field)?.to_radians(),
            "ref_loss_db" => c.ref_loss_db = float(v, &field)?,
            "ref_dist_m" => c.ref_dist_m = float(v, &field)?,
            _ => return Err(Error::UnknownKey(field)),
        }
    }
    Ok(())
}

fn run_section(t: &Table, cfg: &mut ExperimentConfig) -> Result<()> {
    for (key, v) in t {
        let field = format!("run.{key}");
        match key.as_str() {
            "trials" => cfg.trials = count(v, &field)?,
            "parallelism" => cfg.parallelism = count(v, &field)?,
            "redraw_powers" => {
                cfg.redraw_powers = v
                    .as_bool()
                    .ok_or_else(|| Error::config(&field, "expected true or false"))?
            }
            "techniques" => {
                cfg.techniques = strings(v, &field)?
                    .iter()
                    .map(|s| {
                        s.parse::<Technique>()
                            .map_err(|e| Error::config(&field, e.to_string()))
                    })
                    .collect::<Result<_>>()?
            }
            _ => return Err(Error::UnknownKey(field)),
        }
    }
    Ok(())
}

fn sweep_section(t: &Table) -> Result<SweepSpec> {
    let mut axis = None;
    let mut values = None;
    for (key, v) in t {
        let field = format!("sweep.{key}");
        match key.as_str() {
            "axis" => {
                let s = v
                    .as_str()
                    .ok_or_else(|| Error::config(&field, "expected \"rescuers\" or \"victims\""))?;
                axis = Some(
                    s.parse::<SweepAxis>()
                        .map_err(|_| Error::config(&field, format!("unknown axis `{s}`")))?,
                );
            }
            "values" => {
                let array = v
                    .as_array()
                    .ok_or_else(|| Error::config(&field, "expected an array of integers"))?;
                values = Some(
                    array
                        .iter()
                        .map(|x| count(x, &field))
                        .collect::<Result<Vec<_>>>()?,
                );
            }
            _ => return Err(Error::UnknownKey(field)),
        }
    }
    let axis = axis.ok_or_else(|| Error::config("sweep.axis", "missing"))?;
    Ok(SweepSpec {
        axis,
        values: values.unwrap_or_else(|| axis.default_values()),
    })
}

fn count(v: &Value, field: &str) -> Result<usize> {
    match v.as_integer() {
        Some(i) if i >= 0 => Ok(i as usize),
        Some(_) => Err(Error::config(field, "must be ≥ 0")),
        None => Err(Error::config(field, "expected an integer")),
    }
}

fn float(v: &Value, field: &str) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::config(field, "expected a number")),
    }
}

/// Seeds above `i64::MAX` do not fit a TOML integer and are written as
/// decimal strings.
fn seed(v: &Value, field: &str) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::String(s) => s
            .parse()
            .map_err(|_| Error::config(field, "expected an unsigned 64-bit integer")),
        _ => Err(Error::config(field, "expected a non-negative integer")),
    }
}

fn strings<'a>(v: &'a Value, field: &str) -> Result<Vec<&'a str>> {
    v.as_array()
        .and_then(|a| a.iter().map(Value::as_str).collect::<Option<Vec<_>>>())
        .ok_or_else(|| Error::config(field, "expected an array of strings"))
}

/// Shortest decimal that TOML reads back as exactly `x`.
fn toml_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:?}");
    if s.contains('.') || s.contains('e') {
        s
    } else {
        format!("{s}.0")
    }
}

/// Degree value whose conversion back to radians is bit-exact, when one
/// exists within a few ulps of the direct conversion.
fn degrees_round_trip(rad: f64) -> f64 {
    let deg = rad.to_degrees();
    if !deg.is_finite() || deg.to_radians() == rad {
        return deg;
    }
    let bits = deg.to_bits() as i64;
    for k in 1..=16i64 {
        for cand in [bits + k, bits - k] {
            let d = f64::from_bits(cand as u64);
            if d.to_radians() == rad {
                return d;
            }
        }
    }
    deg
}

/// TOML form of `cfg`; [`parse_config_str`] reads it back unchanged.
pub fn config_to_toml(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let s = &cfg.scenario;
    let c = &cfg.channel;
    out.push_str("[scenario]\n");
    let _ = writeln!(out, "victims = {}", s.victims);
    let _ = writeln!(out, "rescuers = {}", s.rescuers);
    let _ = writeln!(out, "area_m = {}", toml_float(s.area_m));
    if s.seed > i64::MAX as u64 {
        let _ = writeln!(out, "seed = \"{}\"", s.seed);
    } else {
        let _ = writeln!(out, "seed = {}", s.seed);
    }
    if let Some(r) = s.comm_range_m {
        let _ = writeln!(out, "comm_range_m = {}", toml_float(r));
    }
    out.push_str("\n[channel]\n");
    let _ = writeln!(out, "ple = {}", toml_float(c.ple));
    let _ = writeln!(out, "sigma_shadow_db = {}", toml_float(c.sigma_shadow_db));
    let _ = writeln!(out, "sigma_range_m = {}", toml_float(c.sigma_range_m));
    let _ = writeln!(
        out,
        "sigma_angle_deg = {}",
        toml_float(degrees_round_trip(c.sigma_angle_rad))
    );
    let _ = writeln!(out, "ref_loss_db = {}", toml_float(c.ref_loss_db));
    let _ = writeln!(out, "ref_dist_m = {}", toml_float(c.ref_dist_m));
    out.push_str("\n[run]\n");
    let _ = writeln!(out, "trials = {}", cfg.trials);
    let names: Vec<String> = cfg.techniques.iter().map(|t| format!("\"{t}\"")).collect();
    let _ = writeln!(out, "techniques = [{}]", names.join(", "));
    let _ = writeln!(out, "parallelism = {}", cfg.parallelism);
    let _ = writeln!(out, "redraw_powers = {}", cfg.redraw_powers);
    if let Some(sweep) = &cfg.sweep {
        out.push_str("\n[sweep]\n");
        let _ = writeln!(out, "axis = \"{}\"", sweep.axis);
        let values: Vec<String> = sweep.values.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "values = [{}]", values.join(", "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.scenario.victims, 5);
        assert_eq!(cfg.scenario.rescuers, 10);
        assert_eq!(cfg.scenario.area_m, 100.0);
        assert_eq!(cfg.channel.ple, 3.0);
        assert_eq!(cfg.trials, 3000);
        assert_eq!(cfg.techniques.len(), 6);
    }

    #[test]
    fn zero_trials_rejected() {
        let err = parse_config_str("[run]\ntrials = 0\n").unwrap_err();
        assert!(err.to_string().contains("trials must be ≥ 1"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_key_named() {
        let err = parse_config_str("[channel]\nplee = 3\n").unwrap_err();
        assert!(matches!(&err, Error::UnknownKey(k) if k == "channel.plee"));
        assert!(err.to_string().contains("channel.plee"));
        assert!(matches!(
            parse_config_str("[chanel]\nple = 3\n"),
            Err(Error::UnknownKey(_))
        ));
        assert!(matches!(
            parse_config_str("trials = 3\n"),
            Err(Error::UnknownKey(_))
        ));
    }

    #[test]
    fn syntax_error_has_line() {
        let err = parse_config_str("[run]\ntrials = 10\ntechniques = [\"toa-coop\"\n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("line "), "{err}");
    }

    #[test]
    fn invalid_values_name_their_field() {
        let err = parse_config_str("[channel]\nple = \"three\"\n").unwrap_err();
        assert!(err.to_string().starts_with("channel.ple"), "{err}");
        let err = parse_config_str("[run]\ntechniques = [\"toa\"]\n").unwrap_err();
        assert!(err.to_string().starts_with("run.techniques"), "{err}");
        let err = parse_config_str("[sweep]\naxis = \"rescuers\"\nvalues = [8, 6]\n").unwrap_err();
        assert!(err.to_string().starts_with("sweep.values"), "{err}");
    }

    #[test]
    fn sweep_defaults_per_axis() {
        let cfg = parse_config_str("[sweep]\naxis = \"victims\"\n").unwrap();
        assert_eq!(cfg.sweep.unwrap().values, vec![5, 10, 15, 20, 25]);
    }

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.scenario.seed = u64::MAX;
        cfg.scenario.comm_range_m = Some(55.5);
        cfg.channel.sigma_angle_rad = 0.1;
        cfg.sweep = Some(SweepSpec {
            axis: SweepAxis::Rescuers,
            values: vec![6, 8],
        });
        cfg.techniques = vec![Technique::RssCoopMm, Technique::ToaNoncoop];
        cfg.redraw_powers = true;
        cfg.parallelism = 3;
        assert_eq!(parse_config_str(&config_to_toml(&cfg)).unwrap(), cfg);
        let d = ExperimentConfig::default();
        assert_eq!(parse_config_str(&config_to_toml(&d)).unwrap(), d);
    }
}
