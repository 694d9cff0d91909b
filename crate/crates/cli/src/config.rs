//! Settings for `complete`: defaults, then a key=value file, then flags.

use hybrid_cp::completion::{AlphaSolver, CompletionConfig};

/// Parses `hybrid` or `fixed:<lambda>`.
pub fn parse_mode(s: &str) -> Result<AlphaSolver, String> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("hybrid") {
        return Ok(AlphaSolver::Hybrid);
    }
    if let Some(v) = s.strip_prefix("fixed:") {
        let lambda: f64 = v
            .trim()
            .parse()
            .map_err(|_| format!("bad lambda in mode {s:?}"))?;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(format!("lambda must be finite and non-negative, got {lambda}"));
        }
        return Ok(AlphaSolver::FixedLambda(lambda));
    }
    Err(format!("mode must be `hybrid` or `fixed:<lambda>`, got {s:?}"))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CompleteSettings {
    cfg: CompletionConfig,
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
}

impl CompleteSettings {
    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let c = &mut self.cfg;
        match key.replace('_', "-").as_str() {
            "rank" => c.rank = parse_value(key, value)?,
            "mode" => c.alpha_solver = parse_mode(value)?,
            "max-iter" => c.max_iter = parse_value(key, value)?,
            "tol" => c.tol = parse_value(key, value)?,
            "seed" => c.seed = parse_value(key, value)?,
            "truncate-eps" => c.truncate_eps = parse_value(key, value)?,
            _ => return Err(format!("unknown config key {key:?}")),
        }
        Ok(())
    }

    /// Lines are `key = value`; blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, text: &str) -> Result<(), String> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("config line {}: expected key=value", n + 1))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| format!("config line {}: {e}", n + 1))?;
        }
        Ok(())
    }

    pub fn apply_flags(
        &mut self,
        rank: Option<usize>,
        mode: Option<&str>,
        max_iter: Option<usize>,
        tol: Option<f64>,
        seed: Option<u64>,
        truncate_eps: Option<f64>,
    ) -> Result<(), String> {
        let c = &mut self.cfg;
        if let Some(v) = rank {
            c.rank = v;
        }
        if let Some(m) = mode {
            c.alpha_solver = parse_mode(m)?;
        }
        if let Some(v) = max_iter {
            c.max_iter = v;
        }
        if let Some(v) = tol {
            c.tol = v;
        }
        if let Some(v) = seed {
            c.seed = v;
        }
        if let Some(v) = truncate_eps {
            c.truncate_eps = v;
        }
        Ok(())
    }

    pub fn into_config(self) -> CompletionConfig {
        self.cfg
    }
}
