//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! phantom_seed = 1
//! methods = tv:slice, bm3d:temporal
//! ratios = 2, 4
//! output_dir = results
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::{ExperimentPlan, Method, MethodParams, ParamSource};
use crate::denoise::DenoiserKind;
use crate::error::{Error, Result};

/// Every key accepted in a configuration file.
pub const KEYS: &[&str] = &[
    "phantom",
    "phantom_seed",
    "mask_seed",
    "noise_seed",
    "frames",
    "mask_density",
    "methods",
    "ratio",
    "ratios",
    "noise",
    "params",
    "tune_budget",
    "tune_seed",
    "lambda_tikhonov",
    "rho_tikhonov",
    "gamma_tikhonov",
    "lambda_tv",
    "rho_tv",
    "gamma_tv",
    "lambda_bm3d",
    "rho_bm3d",
    "gamma_bm3d",
    "output_dir",
    "export_slice",
];

struct Entry {
    line: usize,
    value: String,
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn number<T: std::str::FromStr>(key: &str, e: &Entry, what: &str) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| parse_error(e.line, format!("`{key}` expects {what}, got {:?}", e.value)))
}

fn list<T: std::str::FromStr>(key: &str, e: &Entry, what: &str) -> Result<Vec<T>> {
    let items: Vec<&str> = e.value.split(',').map(str::trim).collect();
    if items.iter().any(|s| s.is_empty()) {
        return Err(parse_error(
            e.line,
            format!("`{key}` expects a comma-separated list of {what}"),
        ));
    }
    items
        .iter()
        .map(|s| {
            s.parse()
                .map_err(|_| parse_error(e.line, format!("`{key}` expects {what}, got {s:?}")))
        })
        .collect()
}

fn method(e: &Entry, item: &str) -> Result<Method> {
    let (kind, mode) = item.split_once(':').unwrap_or((item, "slice"));
    let kind: DenoiserKind = kind
        .trim()
        .parse()
        .map_err(|_| parse_error(e.line, format!("unknown denoiser in {item:?}")))?;
    let temporal = match mode.trim() {
        "slice" => false,
        "temporal" => true,
        other => {
            return Err(parse_error(
                e.line,
                format!("unknown mode {other:?} (slice or temporal)"),
            ))
        }
    };
    Ok(Method { kind, temporal })
}

/// Parses configuration text; relative paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ExperimentPlan> {
    let mut entries: HashMap<String, Entry> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_error(line, format!("expected `key = value`, got {content:?}")))?;
        let key = key.trim();
        let value = value.trim();
        if !KEYS.contains(&key) {
            return Err(parse_error(
                line,
                format!("unknown key `{key}`; valid keys are: {}", KEYS.join(", ")),
            ));
        }
        if value.is_empty() {
            return Err(parse_error(line, format!("`{key}` has no value")));
        }
        // `ratio` and `ratios` set the same field.
        let slot = if key == "ratio" { "ratios" } else { key };
        if let Some(prev) = entries.get(slot) {
            return Err(parse_error(
                line,
                format!("duplicate key `{key}` (already set on line {})", prev.line),
            ));
        }
        entries.insert(
            slot.to_string(),
            Entry {
                line,
                value: value.to_string(),
            },
        );
    }

    let mut plan = ExperimentPlan::default();
    plan.output_dir = base_dir.join(&plan.output_dir);
    if let Some(e) = entries.get("phantom") {
        plan.phantom_scale = match e.value.as_str() {
            "desk" => super::PhantomScale::Desk,
            "full" => super::PhantomScale::Full,
            other => {
                return Err(parse_error(
                    e.line,
                    format!("`phantom` expects desk or full, got {other:?}"),
                ))
            }
        };
    }
    for (key, slot) in [
        ("phantom_seed", &mut plan.phantom_seed),
        ("mask_seed", &mut plan.mask_seed),
        ("noise_seed", &mut plan.noise_seed),
    ] {
        if let Some(e) = entries.get(key) {
            *slot = number(key, e, "an unsigned integer")?;
        }
    }
    if let Some(e) = entries.get("frames") {
        plan.frames = number("frames", e, "a positive integer")?;
    }
    if let Some(e) = entries.get("mask_density") {
        plan.mask_density = number("mask_density", e, "a number")?;
    }
    if let Some(e) = entries.get("methods") {
        plan.methods = e
            .value
            .split(',')
            .map(|s| method(e, s.trim()))
            .collect::<Result<_>>()?;
    }
    if let Some(e) = entries.get("ratios") {
        plan.ratios = list("ratios", e, "positive integers")?;
    }
    if let Some(e) = entries.get("noise") {
        plan.noise = list("noise", e, "noise variances")?;
    }
    let budget = match entries.get("tune_budget") {
        Some(e) => number("tune_budget", e, "an integer")?,
        None => crate::tuner::DEFAULT_BUDGET,
    };
    let seed = match entries.get("tune_seed") {
        Some(e) => number("tune_seed", e, "an unsigned integer")?,
        None => 1,
    };
    if let Some(e) = entries.get("params") {
        plan.params = match e.value.as_str() {
            "explicit" => ParamSource::Explicit,
            "tuned" => ParamSource::Tuned { budget, seed },
            other => {
                return Err(parse_error(
                    e.line,
                    format!("`params` expects explicit or tuned, got {other:?}"),
                ))
            }
        };
    }
    for kind in DenoiserKind::ALL {
        let p: &mut MethodParams = plan.explicit.get_mut(kind);
        for (field, slot) in [
            ("lambda", &mut p.lambda),
            ("rho", &mut p.rho),
            ("gamma", &mut p.gamma),
        ] {
            let key = format!("{field}_{}", kind.name());
            if let Some(e) = entries.get(&key) {
                *slot = number(&key, e, "a number")?;
            }
        }
    }
    if let Some(e) = entries.get("output_dir") {
        plan.output_dir = base_dir.join(PathBuf::from(&e.value));
    }
    if let Some(e) = entries.get("export_slice") {
        plan.export_slice = number("export_slice", e, "a 1-based slice index")?;
    }

    let line_of = |key: &str| entries.get(key).map_or(0, |e| e.line);
    plan.validate().map_err(|err| match err {
        Error::Config(msg) => {
            let key = [
                "ratios",
                "methods",
                "noise",
                "frames",
                "export_slice",
                "mask_density",
            ]
            .into_iter()
            .find(|k| msg.starts_with(k))
            .unwrap_or("");
            parse_error(line_of(key), msg)
        }
        other => other,
    })?;
    Ok(plan)
}

/// Reads and parses a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentPlan> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base)
}
