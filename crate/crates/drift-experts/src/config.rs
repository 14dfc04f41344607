//! Experiment configuration.
//!
//! A deliberately minimal flat text format: one `key = value` pair per
//! line with dotted section names, e.g. `model.alpha = 3`. Blank lines and
//! lines starting with `#` are ignored; unknown and duplicate keys are
//! errors. `model.m0` and `model.nu0` accept the word `stationary` to start
//! the filter at the long-run law of the drift, and view variances accept
//! `inf` for an uninformative expert.

use std::collections::HashMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::filtering::ExpertSchedule;
use crate::market::ModelParams;
use crate::montecarlo::SimConfig;

/// Output destination and format switches.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub csv: bool,
    pub svg: bool,
}

/// Everything a command needs: model, schedule, simulation and output
/// settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub schedule: ExpertSchedule,
    pub sim: SimConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelParams::stationary(3.0, 1.0, 0.05, 0.25, 1.0)
                .expect("default parameters are valid"),
            schedule: ExpertSchedule::equidistant(10, 0.25),
            sim: SimConfig { n_paths: 10_000, dt: 1e-3, seed: 17 },
            output: OutputConfig { dir: PathBuf::from("out"), csv: true, svg: false },
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "model.alpha",
    "model.beta",
    "model.delta",
    "model.sigma",
    "model.m0",
    "model.nu0",
    "model.horizon",
    "schedule.equidistant",
    "schedule.n",
    "schedule.gamma",
    "schedule.dates",
    "schedule.variances",
    "sim.n_paths",
    "sim.dt",
    "sim.seed",
    "output.dir",
    "output.csv",
    "output.svg",
];

impl ExperimentConfig {
    /// Parses a config text. Keys that are absent keep their default
    /// values.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw: HashMap<&str, (usize, String)> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(Error::Config {
                    line: line_no,
                    message: format!("expected `key = value`, got `{trimmed}`"),
                });
            };
            let key = key.trim();
            let value = value.trim().to_string();
            let Some(&canonical) = KNOWN_KEYS.iter().find(|&&k| k == key) else {
                return Err(Error::Config { line: line_no, message: format!("unknown key `{key}`") });
            };
            if raw.insert(canonical, (line_no, value)).is_some() {
                return Err(Error::Config {
                    line: line_no,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }

        let defaults = ExperimentConfig::default();
        let mut model = defaults.model;

        if let Some(v) = raw.remove("model.alpha") {
            model.alpha = parse_f64(&v)?;
        }
        if let Some(v) = raw.remove("model.beta") {
            model.beta = parse_f64(&v)?;
        }
        if let Some(v) = raw.remove("model.delta") {
            model.delta = parse_f64(&v)?;
        }
        if let Some(v) = raw.remove("model.sigma") {
            model.sigma = parse_f64(&v)?;
        }
        if let Some(v) = raw.remove("model.horizon") {
            model.horizon = parse_f64(&v)?;
        }
        // absent m0/nu0 default to the stationary initialization
        match raw.remove("model.m0") {
            Some((_, v)) if v == "stationary" => model.m0 = model.delta,
            Some(pair) => model.m0 = parse_f64(&pair)?,
            None => model.m0 = model.delta,
        }
        match raw.remove("model.nu0") {
            Some((_, v)) if v == "stationary" => model.nu0 = model.stationary_variance(),
            Some(pair) => model.nu0 = parse_f64(&pair)?,
            None => model.nu0 = model.stationary_variance(),
        }

        let explicit_dates =
            raw.contains_key("schedule.dates") || raw.contains_key("schedule.variances");
        let equidistant_flag = match raw.remove("schedule.equidistant") {
            Some(pair) => Some(parse_bool(&pair)?),
            None => None,
        };
        let schedule = if explicit_dates {
            if equidistant_flag == Some(true) {
                return Err(Error::Config {
                    line: 0,
                    message: "schedule.dates conflicts with schedule.equidistant = true".into(),
                });
            }
            for k in ["schedule.n", "schedule.gamma"] {
                if let Some((line, _)) = raw.remove(k) {
                    return Err(Error::Config {
                        line,
                        message: format!("`{k}` conflicts with an explicit date list"),
                    });
                }
            }
            let dates = match raw.remove("schedule.dates") {
                Some(pair) => parse_list(&pair)?,
                None => {
                    return Err(Error::Config {
                        line: 0,
                        message: "schedule.variances given without schedule.dates".into(),
                    })
                }
            };
            let variances = match raw.remove("schedule.variances") {
                Some(pair) => parse_list(&pair)?,
                None => {
                    return Err(Error::Config {
                        line: 0,
                        message: "schedule.dates given without schedule.variances".into(),
                    })
                }
            };
            ExpertSchedule::from_lists(dates, variances)?
        } else {
            if equidistant_flag == Some(false) {
                return Err(Error::Config {
                    line: 0,
                    message: "schedule.equidistant = false requires schedule.dates/variances".into(),
                });
            }
            let (mut count, mut view_variance) = match defaults.schedule {
                ExpertSchedule::Equidistant { count, view_variance } => (count, view_variance),
                _ => unreachable!(),
            };
            if let Some(pair) = raw.remove("schedule.n") {
                count = parse_usize(&pair)?;
            }
            if let Some(pair) = raw.remove("schedule.gamma") {
                view_variance = parse_f64(&pair)?;
            }
            ExpertSchedule::equidistant(count, view_variance)
        };

        let mut sim = defaults.sim;
        if let Some(pair) = raw.remove("sim.n_paths") {
            sim.n_paths = parse_usize(&pair)?;
        }
        if let Some(pair) = raw.remove("sim.dt") {
            sim.dt = parse_f64(&pair)?;
        }
        if let Some(pair) = raw.remove("sim.seed") {
            sim.seed = parse_u64(&pair)?;
        }

        let mut output = defaults.output;
        if let Some((_, v)) = raw.remove("output.dir") {
            output.dir = PathBuf::from(v);
        }
        if let Some(pair) = raw.remove("output.csv") {
            output.csv = parse_bool(&pair)?;
        }
        if let Some(pair) = raw.remove("output.svg") {
            output.svg = parse_bool(&pair)?;
        }

        let config = ExperimentConfig { model, schedule, sim, output };
        config.validate()?;
        Ok(config)
    }

    /// Serializes in the fixed key order; `parse` of the result rebuilds an
    /// identical config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let m = &self.model;
        s.push_str(&format!("model.alpha = {}\n", fmt_value(m.alpha)));
        s.push_str(&format!("model.beta = {}\n", fmt_value(m.beta)));
        s.push_str(&format!("model.delta = {}\n", fmt_value(m.delta)));
        s.push_str(&format!("model.sigma = {}\n", fmt_value(m.sigma)));
        s.push_str(&format!("model.m0 = {}\n", fmt_value(m.m0)));
        s.push_str(&format!("model.nu0 = {}\n", fmt_value(m.nu0)));
        s.push_str(&format!("model.horizon = {}\n", fmt_value(m.horizon)));
        match &self.schedule {
            ExpertSchedule::Equidistant { count, view_variance } => {
                s.push_str("schedule.equidistant = true\n");
                s.push_str(&format!("schedule.n = {count}\n"));
                s.push_str(&format!("schedule.gamma = {}\n", fmt_value(*view_variance)));
            }
            ExpertSchedule::Dates { dates, variances } => {
                s.push_str("schedule.equidistant = false\n");
                s.push_str(&format!("schedule.dates = {}\n", fmt_list(dates)));
                s.push_str(&format!("schedule.variances = {}\n", fmt_list(variances)));
            }
        }
        s.push_str(&format!("sim.n_paths = {}\n", self.sim.n_paths));
        s.push_str(&format!("sim.dt = {}\n", fmt_value(self.sim.dt)));
        s.push_str(&format!("sim.seed = {}\n", self.sim.seed));
        s.push_str(&format!("output.dir = {}\n", self.output.dir.display()));
        s.push_str(&format!("output.csv = {}\n", self.output.csv));
        s.push_str(&format!("output.svg = {}\n", self.output.svg));
        s
    }

    /// Validates all referenced blocks.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.schedule.validate(self.model.horizon)?;
        self.sim.validate()?;
        Ok(())
    }
}

fn parse_f64((line, value): &(usize, String)) -> Result<f64> {
    let v = match value.as_str() {
        "inf" | "infinite" => f64::INFINITY,
        other => other.parse::<f64>().map_err(|_| Error::Config {
            line: *line,
            message: format!("expected a number, got `{other}`"),
        })?,
    };
    if v.is_nan() {
        return Err(Error::Config { line: *line, message: "NaN is not a valid value".into() });
    }
    Ok(v)
}

fn parse_usize((line, value): &(usize, String)) -> Result<usize> {
    value.parse::<usize>().map_err(|_| Error::Config {
        line: *line,
        message: format!("expected a nonnegative integer, got `{value}`"),
    })
}

fn parse_u64((line, value): &(usize, String)) -> Result<u64> {
    value.parse::<u64>().map_err(|_| Error::Config {
        line: *line,
        message: format!("expected a 64-bit unsigned integer, got `{value}`"),
    })
}

fn parse_bool((line, value): &(usize, String)) -> Result<bool> {
    match value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Config {
            line: *line,
            message: format!("expected true or false, got `{other}`"),
        }),
    }
}

fn parse_list((line, value): &(usize, String)) -> Result<Vec<f64>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|item| parse_f64(&(*line, item.trim().to_string())))
        .collect()
}

fn fmt_value(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x}")
    }
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_value(x)).collect::<Vec<_>>().join(", ")
}
