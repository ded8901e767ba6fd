//! Line-oriented config format:
//!
//! ```text
//! # comment
//! [profile]
//! gamma = sin
//! alpha = "power_decay(2)"
//! beta  = const(0)
//! p     = 2
//!
//! [problem]
//! g0      = 0.001
//! horizon = 100
//! tail    = none | alpha_integrable | beta_integrable | gamma_sup_attained
//!
//! [numerics]
//! quad_tol    = 1e-9
//! grid_points = 2001
//!
//! [certificates]        # optional
//! eps          = 0.1
//! small_data_c = 0.5
//! omega        = 1
//! q            = 2
//! ```
//!
//! Values may be quoted. `tail` accepts a comma-separated list.

use std::collections::BTreeMap;

use super::{CoefficientProfile, Expr, Numerics, ProblemSpec, TailFlags, DEFAULT_HORIZON};
use crate::error::{Error, Result};

/// Optional fixed parameters for the certificate checks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CertificateParams {
    pub eps: Option<f64>,
    pub small_data_c: Option<f64>,
    pub omega: Option<f64>,
    pub q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub spec: ProblemSpec,
    pub params: CertificateParams,
}

struct Entry {
    value: String,
    line: usize,
    column: usize,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("profile", &["gamma", "alpha", "beta", "p"]),
    ("problem", &["g0", "horizon", "tail"]),
    ("numerics", &["quad_tol", "grid_points"]),
    ("certificates", &["eps", "small_data_c", "omega", "q"]),
];

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn unquote(s: &str) -> (&str, usize) {
    let t = s.trim();
    for q in ['"', '\''] {
        if t.len() >= 2 && t.starts_with(q) && t.ends_with(q) {
            return (&t[1..t.len() - 1], 1);
        }
    }
    (t, 0)
}

fn tokenize(text: &str) -> Result<BTreeMap<(String, String), Entry>> {
    let mut section: Option<String> = None;
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = line.len() - line.trim_start().len();
        if trimmed.starts_with('[') {
            if !trimmed.ends_with(']') {
                return Err(parse_err(line_no, indent + 1, "unterminated section header"));
            }
            let name = trimmed[1..trimmed.len() - 1].trim().to_string();
            if !KNOWN.iter().any(|(s, _)| *s == name) {
                return Err(parse_err(line_no, indent + 2, format!("unknown section [{name}]")));
            }
            section = Some(name);
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(parse_err(line_no, indent + 1, "expected 'key = value'"));
        };
        let Some(sec) = section.clone() else {
            return Err(parse_err(line_no, indent + 1, "key outside of any section"));
        };
        let key = line[..eq].trim().to_string();
        let allowed = KNOWN.iter().find(|(s, _)| *s == sec).unwrap().1;
        if !allowed.contains(&key.as_str()) {
            return Err(parse_err(line_no, indent + 1, format!("unknown key '{key}' in [{sec}]")));
        }
        let rest = &line[eq + 1..];
        let lead = rest.len() - rest.trim_start().len();
        let (value, quote) = unquote(rest);
        let entry = Entry {
            value: value.to_string(),
            line: line_no,
            column: eq + 2 + lead + quote,
        };
        if out.insert((sec.clone(), key.clone()), entry).is_some() {
            return Err(parse_err(line_no, indent + 1, format!("duplicate key '{key}'")));
        }
    }
    Ok(out)
}

struct Entries(BTreeMap<(String, String), Entry>);

impl Entries {
    fn get(&self, sec: &str, key: &str) -> Option<&Entry> {
        self.0.get(&(sec.to_string(), key.to_string()))
    }

    fn required(&self, sec: &str, key: &str) -> Result<&Entry> {
        self.get(sec, key)
            .ok_or_else(|| parse_err(0, 0, format!("missing required key '{key}' in [{sec}]")))
    }

    fn float(&self, sec: &str, key: &str) -> Result<Option<f64>> {
        match self.get(sec, key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<f64>()
                .map(Some)
                .map_err(|_| parse_err(e.line, e.column, format!("'{key}' must be a number"))),
        }
    }

    fn expr(&self, sec: &str, key: &str) -> Result<Expr> {
        let e = self.required(sec, key)?;
        Expr::parse(&e.value).map_err(|err| match err {
            Error::Parse { column, message, .. } => Error::Parse {
                line: e.line,
                column: e.column + column - 1,
                message: format!("{key}: {message}"),
            },
            other => other,
        })
    }
}

/// Parses and validates a config, including the optional `[certificates]` section.
pub fn load_config(text: &str) -> Result<Config> {
    let entries = Entries(tokenize(text)?);

    let p = entries
        .float("profile", "p")?
        .ok_or_else(|| parse_err(0, 0, "missing required key 'p' in [profile]"))?;
    let profile = CoefficientProfile::new(
        entries.expr("profile", "gamma")?,
        entries.expr("profile", "alpha")?,
        entries.expr("profile", "beta")?,
        p,
    )?;
    let g0 = entries
        .float("problem", "g0")?
        .ok_or_else(|| parse_err(0, 0, "missing required key 'g0' in [problem]"))?;
    let horizon = entries.float("problem", "horizon")?.unwrap_or(DEFAULT_HORIZON);
    let tail = match entries.get("problem", "tail") {
        None => TailFlags::NONE,
        Some(e) => TailFlags::parse(&e.value).map_err(|m| parse_err(e.line, e.column, m))?,
    };
    let mut numerics = Numerics::default();
    if let Some(q) = entries.float("numerics", "quad_tol")? {
        numerics.quad_tol = q;
    }
    if let Some(e) = entries.get("numerics", "grid_points") {
        numerics.grid_points = e
            .value
            .parse::<usize>()
            .map_err(|_| parse_err(e.line, e.column, "'grid_points' must be a positive integer"))?;
    }
    let spec = ProblemSpec::new(profile, g0, horizon, tail, numerics)?;

    let params = CertificateParams {
        eps: entries.float("certificates", "eps")?,
        small_data_c: entries.float("certificates", "small_data_c")?,
        omega: entries.float("certificates", "omega")?,
        q: entries.float("certificates", "q")?,
    };
    for (name, v) in [
        ("eps", params.eps),
        ("small_data_c", params.small_data_c),
        ("omega", params.omega),
    ] {
        if let Some(v) = v {
            if !(v > 0.0) {
                return Err(Error::Validation(format!("{name} must be > 0 (got {v})")));
            }
        }
    }
    if let Some(q) = params.q {
        if !(q > 1.0) {
            return Err(Error::Validation(format!("q must be > 1 (got {q})")));
        }
    }
    Ok(Config { spec, params })
}

/// Parses and validates a config into a [`ProblemSpec`].
pub fn load_profile(text: &str) -> Result<ProblemSpec> {
    load_config(text).map(|c| c.spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MOTIVATING: &str = r#"
# sin t spectral bound with integrable nonlinearity
[profile]
gamma = "sin"
alpha = "power_decay(2)"
beta = "const(0)"
p = 2

[problem]
g0 = 0.001
"#;

    #[test]
    fn motivating_case_loads() {
        let spec = load_profile(MOTIVATING).unwrap();
        assert_eq!(spec.g0, 0.001);
        assert_eq!(spec.horizon, DEFAULT_HORIZON);
        assert_eq!(spec.tail, TailFlags::NONE);
        assert_eq!(spec.profile.p, 2.0);
        assert_eq!(spec.profile.alpha(1.0), 0.25);
        assert!(spec.profile.beta_is_zero());
    }

    #[test]
    fn p_equal_one_is_rejected() {
        let text = MOTIVATING.replace("p = 2", "p = 1");
        assert!(matches!(load_profile(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn negative_alpha_is_rejected() {
        let text = MOTIVATING.replace("\"power_decay(2)\"", "\"const(-1)\"");
        assert!(matches!(load_profile(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn negative_g0_is_rejected() {
        let text = MOTIVATING.replace("g0 = 0.001", "g0 = -1");
        assert!(matches!(load_profile(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn full_config_with_all_sections() {
        let text = "[profile]\ngamma = const(-1)\nalpha = exp_decay(2)\nbeta = 0\np = 2\n\
                    [problem]\ng0 = 1\nhorizon = 30\ntail = alpha_integrable, gamma_sup_attained\n\
                    [numerics]\nquad_tol = 1e-10\ngrid_points = 501\n\
                    [certificates]\neps = 0.2\nomega = 1\n";
        let cfg = load_config(text).unwrap();
        assert_eq!(cfg.spec.horizon, 30.0);
        assert!(cfg.spec.tail.alpha_integrable && cfg.spec.tail.gamma_sup_attained);
        assert!(!cfg.spec.tail.beta_integrable);
        assert_eq!(cfg.spec.numerics.grid_points, 501);
        assert_eq!(cfg.params.eps, Some(0.2));
        assert_eq!(cfg.params.omega, Some(1.0));
        assert_eq!(cfg.params.q, None);
    }

    #[test]
    fn parse_errors_report_position() {
        let text = "[profile]\ngamma = sin\nalpha = 1 + * 2\nbeta = 0\np = 2\n[problem]\ng0 = 1\n";
        match load_profile(text) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, 13);
            }
            other => panic!("{other:?}"),
        }
        match load_profile("[profile]\nthis line is junk\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(load_profile("[bogus]\n"), Err(Error::Parse { .. })));
        assert!(matches!(load_profile("g0 = 1\n"), Err(Error::Parse { .. })));
        let missing = "[profile]\ngamma = sin\nalpha = 0\nbeta = 0\np = 2\n";
        assert!(matches!(load_profile(missing), Err(Error::Parse { .. })));
        let bad_tail = MOTIVATING.to_string() + "tail = forever\n";
        assert!(matches!(load_profile(&bad_tail), Err(Error::Parse { .. })));
    }
}
