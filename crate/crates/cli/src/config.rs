//! Flat `key = value` configuration files for [`MatchConfig`].

use std::fmt;

use fpalign::model::{threshold_schedule, MatchConfig, OctantFrame};

#[derive(Debug, PartialEq)]
pub struct ConfigFileError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigFileError {}

/// Applies every `key = value` line of `text` on top of `base`.
///
/// Keys are the [`MatchConfig`] field names. Blank lines and lines starting
/// with `#` are skipped. Unknown or repeated keys are errors.
pub fn apply_config_text(text: &str, base: MatchConfig) -> Result<MatchConfig, ConfigFileError> {
    let mut cfg = base;
    let mut seen: Vec<String> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |message: String| ConfigFileError { line, message };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| err("expected `key = value`".into()))?;
        let (key, value) = (key.trim(), value.trim());
        if seen.iter().any(|k| k == key) {
            return Err(err(format!("duplicate key `{key}`")));
        }
        let number = || {
            value
                .parse::<f64>()
                .map_err(|_| err(format!("`{key}` needs a number, got `{value}`")))
        };
        match key {
            "t_d" => cfg.t_d = number()?,
            "t_psi" => cfg.t_psi = number()?,
            "c1" => cfg.c1 = number()?,
            "c2" => cfg.c2 = number()?,
            "ill_posed_epsilon" => cfg.ill_posed_epsilon = number()?,
            "octant_count" => {
                cfg.octant_count = value
                    .parse()
                    .map_err(|_| err(format!("`octant_count` needs an integer, got `{value}`")))?
            }
            "octant_frame" => cfg.octant_frame = parse_frame(value).map_err(err)?,
            "thresholds" => {
                cfg.thresholds = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| {
                        err(format!(
                            "`thresholds` needs comma-separated numbers, got `{value}`"
                        ))
                    })?
            }
            _ => return Err(err(format!("unknown key `{key}`"))),
        }
        seen.push(key.to_string());
    }
    Ok(cfg)
}

pub fn parse_frame(value: &str) -> Result<OctantFrame, String> {
    match value {
        "image" => Ok(OctantFrame::Image),
        "minutia" => Ok(OctantFrame::Minutia),
        _ => Err(format!(
            "octant frame must be `image` or `minutia`, got `{value}`"
        )),
    }
}

/// Rebuilds the schedule when any of its three defining values is given;
/// missing ones are read off the current schedule.
pub fn override_schedule(
    cfg: &mut MatchConfig,
    t1: Option<f64>,
    step: Option<f64>,
    t_min: Option<f64>,
) {
    if t1.is_none() && step.is_none() && t_min.is_none() {
        return;
    }
    let current = &cfg.thresholds;
    let first = current.first().copied().unwrap_or(24.0);
    let last = current.last().copied().unwrap_or(4.0);
    let gap = match current.as_slice() {
        [a, b, ..] => a - b,
        _ => 4.0,
    };
    cfg.thresholds = threshold_schedule(
        t1.unwrap_or(first),
        step.unwrap_or(gap),
        t_min.unwrap_or(last),
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_keeps_defaults() {
        let cfg = apply_config_text("# nothing\n\n", MatchConfig::default()).unwrap();
        assert_eq!(cfg, MatchConfig::default());
    }

    #[test]
    fn every_field_parses() {
        let text = "t_d = 8\nt_psi=15\nc1 = 0.5\nc2 = 0.25\nthresholds = 10, 5, 1\n\
                    octant_count = 8\noctant_frame = image\nill_posed_epsilon = 1e-12\n";
        let cfg = apply_config_text(text, MatchConfig::default()).unwrap();
        assert_eq!(cfg.t_d, 8.0);
        assert_eq!(cfg.t_psi, 15.0);
        assert_eq!(cfg.c1, 0.5);
        assert_eq!(cfg.c2, 0.25);
        assert_eq!(cfg.thresholds, vec![10.0, 5.0, 1.0]);
        assert_eq!(cfg.octant_frame, OctantFrame::Image);
        assert_eq!(cfg.ill_posed_epsilon, 1e-12);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let d = MatchConfig::default;
        assert_eq!(apply_config_text("c3 = 1", d()).unwrap_err().line, 1);
        assert!(apply_config_text("c1 = 1\nc1 = 2", d())
            .unwrap_err()
            .message
            .contains("duplicate"));
        assert!(apply_config_text("\nc1 1", d()).unwrap_err().line == 2);
        assert!(apply_config_text("c1 = abc", d()).is_err());
        assert!(apply_config_text("thresholds = 3,,1", d()).is_err());
        assert!(apply_config_text("octant_frame = polar", d()).is_err());
    }

    #[test]
    fn schedule_overrides() {
        let mut cfg = MatchConfig::default();
        override_schedule(&mut cfg, None, None, None);
        assert_eq!(cfg.thresholds, MatchConfig::default().thresholds);
        override_schedule(&mut cfg, Some(12.0), None, None);
        assert_eq!(cfg.thresholds, vec![12.0, 8.0, 4.0]);
        override_schedule(&mut cfg, None, Some(2.0), Some(6.0));
        assert_eq!(cfg.thresholds, vec![12.0, 10.0, 8.0, 6.0]);
    }
}
