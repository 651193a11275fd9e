//! Line-oriented run configuration:
//!
//! ```text
//! # comment
//! [model]
//! a = "1 + 0.1*sin(x)"
//! jump = none
//! [grid]
//! x_min = -10
//! ```
//!
//! Values are numbers, quoted expressions, bare tags, or comma-separated
//! lists of numbers (`spots = -1, 0, 1`) and pairs (`pairs = -1:0.5, 2:1`).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::expr::{parse, Expr};
use crate::fractional::Side;
use crate::grid::Grid;
use crate::model::{GeneratorSpec, JumpSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: String,
    /// 1-based; 0 when the error is not tied to a line.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "{}:{}: {}", self.file, self.line, self.message)
        } else {
            write!(f, "{}: {}", self.file, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Str(String),
    Tag(String),
    List(Vec<f64>),
    Pairs(Vec<(f64, f64)>),
}

impl Value {
    fn kind(&self) -> &'static str {
        match self {
            Value::Num(_) => "number",
            Value::Str(_) => "quoted string",
            Value::Tag(_) => "tag",
            Value::List(_) => "list",
            Value::Pairs(_) => "pair list",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    line: usize,
    value: Value,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    file: String,
    sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)>,
}

fn parse_value(raw: &str) -> Result<Value, String> {
    if let Some(rest) = raw.strip_prefix('"') {
        let end = rest.find('"').ok_or("unterminated string")?;
        if !rest[end + 1..].trim().is_empty() {
            return Err(format!(
                "unexpected text after string: '{}'",
                rest[end + 1..].trim()
            ));
        }
        return Ok(Value::Str(rest[..end].to_string()));
    }
    if let Ok(v) = raw.parse::<f64>() {
        return Ok(Value::Num(v));
    }
    if raw.contains(',') || raw.contains(':') {
        let items: Vec<&str> = raw.split(',').map(str::trim).collect();
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format!("'{}' is not a number", s.trim()))
        };
        if items.iter().all(|s| s.contains(':')) {
            let pairs = items
                .iter()
                .map(|s| {
                    let (a, b) = s.split_once(':').expect("checked");
                    Ok((num(a)?, num(b)?))
                })
                .collect::<Result<_, String>>()?;
            return Ok(Value::Pairs(pairs));
        }
        return Ok(Value::List(
            items.into_iter().map(num).collect::<Result<_, _>>()?,
        ));
    }
    let tag_ok = raw
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && raw
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if tag_ok {
        Ok(Value::Tag(raw.to_string()))
    } else {
        Err(format!(
            "cannot read value '{raw}' (expressions must be quoted)"
        ))
    }
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

impl Config {
    pub fn parse(text: &str, file: &str) -> Result<Config, ConfigError> {
        let err = |line: usize, message: String| ConfigError {
            file: file.to_string(),
            line,
            message,
        };
        let mut cfg = Config {
            file: file.to_string(),
            sections: BTreeMap::new(),
        };
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = strip_comment(raw).trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, "expected ']'".into()))?
                    .trim();
                if name.is_empty() {
                    return Err(err(line, "empty section name".into()));
                }
                if cfg.sections.contains_key(name) {
                    return Err(err(line, format!("duplicate section [{name}]")));
                }
                cfg.sections
                    .insert(name.to_string(), (line, BTreeMap::new()));
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| err(line, "expected 'key = value'".into()))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(err(line, "missing key".into()));
            }
            let section = current
                .as_ref()
                .ok_or_else(|| err(line, "key outside of any [section]".into()))?;
            let value = parse_value(value.trim()).map_err(|m| err(line, m))?;
            let entries = &mut cfg.sections.get_mut(section).expect("section exists").1;
            if entries
                .insert(key.to_string(), Entry { line, value })
                .is_some()
            {
                return Err(err(line, format!("duplicate key '{key}' in [{section}]")));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            file: file.clone(),
            line: 0,
            message: format!("cannot read: {e}"),
        })?;
        Config::parse(&text, &file)
    }

    fn error(&self, line: usize, message: impl Into<String>) -> ConfigError {
        ConfigError {
            file: self.file.clone(),
            line,
            message: message.into(),
        }
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn require_section(&self, section: &str) -> Result<(), ConfigError> {
        if self.has_section(section) {
            Ok(())
        } else {
            Err(self.error(0, format!("missing section [{section}]")))
        }
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section)?.1.get(key)
    }

    fn missing(&self, section: &str, key: &str) -> ConfigError {
        match self.sections.get(section) {
            Some((line, _)) => self.error(*line, format!("[{section}] needs '{key}'")),
            None => self.error(0, format!("missing section [{section}]")),
        }
    }

    fn wrong(&self, e: &Entry, key: &str, want: &str) -> ConfigError {
        self.error(
            e.line,
            format!("'{key}' should be a {want}, found a {}", e.value.kind()),
        )
    }

    pub fn num(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(Entry {
                value: Value::Num(v),
                ..
            }) => Ok(Some(*v)),
            Some(e) => Err(self.wrong(e, key, "number")),
        }
    }

    pub fn req_num(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        self.num(section, key)?
            .ok_or_else(|| self.missing(section, key))
    }

    pub fn count(&self, section: &str, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.num(section, key)? {
            None => Ok(None),
            Some(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e15 => Ok(Some(v as usize)),
            Some(v) => {
                let line = self.entry(section, key).map_or(0, |e| e.line);
                Err(self.error(
                    line,
                    format!("'{key}' should be a nonnegative integer, found {v}"),
                ))
            }
        }
    }

    /// Parsed expression; parse errors carry the line and the position
    /// inside the quoted string.
    pub fn expr(&self, section: &str, key: &str) -> Result<Option<Expr>, ConfigError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(Entry {
                value: Value::Str(s),
                line,
            }) => parse(s)
                .map(Some)
                .map_err(|e| self.error(*line, format!("in '{key}': {e}"))),
            Some(Entry {
                value: Value::Num(v),
                ..
            }) => Ok(Some(Expr::Num(*v))),
            Some(e) => Err(self.wrong(e, key, "quoted expression")),
        }
    }

    pub fn tag(&self, section: &str, key: &str) -> Result<Option<&str>, ConfigError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(Entry {
                value: Value::Tag(t),
                ..
            }) => Ok(Some(t)),
            Some(e) => Err(self.wrong(e, key, "bare tag")),
        }
    }

    /// Tag restricted to `allowed`.
    pub fn choice(
        &self,
        section: &str,
        key: &str,
        allowed: &[&str],
    ) -> Result<Option<String>, ConfigError> {
        match self.tag(section, key)? {
            None => Ok(None),
            Some(t) if allowed.contains(&t) => Ok(Some(t.to_string())),
            Some(t) => {
                let line = self.entry(section, key).map_or(0, |e| e.line);
                Err(self.error(
                    line,
                    format!("'{key}' must be one of {}, found '{t}'", allowed.join(", ")),
                ))
            }
        }
    }

    pub fn flag(&self, section: &str, key: &str) -> Result<Option<bool>, ConfigError> {
        Ok(self
            .choice(section, key, &["true", "false"])?
            .map(|t| t == "true"))
    }

    pub fn list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(Entry {
                value: Value::List(v),
                ..
            }) => Ok(Some(v.clone())),
            Some(Entry {
                value: Value::Num(v),
                ..
            }) => Ok(Some(vec![*v])),
            Some(e) => Err(self.wrong(e, key, "list of numbers")),
        }
    }

    pub fn pairs(&self, section: &str, key: &str) -> Result<Option<Vec<(f64, f64)>>, ConfigError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(Entry {
                value: Value::Pairs(v),
                ..
            }) => Ok(Some(v.clone())),
            Some(e) => Err(self.wrong(e, key, "list of x:y pairs")),
        }
    }

    /// `[model]`: `a`, `b` (default 0), `jump = none | density | stable |
    /// symmetric` with `nu`, `compensated`, `beta`, `side`, `scale`.
    pub fn model(&self) -> Result<GeneratorSpec, ConfigError> {
        self.require_section("model")?;
        let s = "model";
        let a = self.expr(s, "a")?.unwrap_or(Expr::Num(0.0));
        let b = self.expr(s, "b")?.unwrap_or(Expr::Num(0.0));
        let jump = match self
            .choice(s, "jump", &["none", "density", "stable", "symmetric"])?
            .as_deref()
        {
            None | Some("none") => JumpSpec::None,
            Some("density") => JumpSpec::Density {
                nu: self.expr(s, "nu")?.ok_or_else(|| self.missing(s, "nu"))?,
                compensated: self.flag(s, "compensated")?.unwrap_or(false),
            },
            Some("stable") => JumpSpec::StableLike {
                beta: self.req_num(s, "beta")?,
                side: match self.choice(s, "side", &["plus", "minus"])?.as_deref() {
                    Some("minus") => Side::Minus,
                    _ => Side::Plus,
                },
                scale: self.expr(s, "scale")?.unwrap_or(Expr::Num(1.0)),
            },
            Some(_) => JumpSpec::SymmetricStable {
                beta: self.req_num(s, "beta")?,
                scale: self.expr(s, "scale")?.unwrap_or(Expr::Num(1.0)),
            },
        };
        Ok(GeneratorSpec {
            a,
            b,
            jump: JumpSpec::None,
            time_dependent: false,
        }
        .with_jump(jump))
    }

    /// `[grid]`: `x_min`, `x_max`, `n`; `n_override` wins over the file.
    pub fn grid(&self, n_override: Option<usize>) -> Result<Grid, ConfigError> {
        self.require_section("grid")?;
        let x_min = self.req_num("grid", "x_min")?;
        let x_max = self.req_num("grid", "x_max")?;
        let n = match n_override {
            Some(n) => n,
            None => self
                .count("grid", "n")?
                .ok_or_else(|| self.missing("grid", "n"))?,
        };
        Grid::new(x_min, x_max, n).map_err(|e| {
            let line = self.sections.get("grid").map_or(0, |s| s.0);
            self.error(line, e.to_string())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# a comment
[model]
a = \"1 + 0.1*sin(x)\"   # trailing comment
b = 0.5
jump = none

[grid]
x_min = -10
x_max = 10
n = 200

[task]
spots = -1, 0, 1.5
pairs = -1:0.5, 2:1
";

    #[test]
    fn reads_sections_and_values() {
        let c = Config::parse(SAMPLE, "run.cfg").unwrap();
        let spec = c.model().unwrap();
        assert_eq!(spec.a, parse("1 + 0.1*sin(x)").unwrap());
        assert_eq!(spec.b, Expr::Num(0.5));
        assert_eq!(c.grid(None).unwrap().n(), 200);
        assert_eq!(c.grid(Some(50)).unwrap().n(), 50);
        assert_eq!(
            c.list("task", "spots").unwrap().unwrap(),
            vec![-1.0, 0.0, 1.5]
        );
        assert_eq!(
            c.pairs("task", "pairs").unwrap().unwrap(),
            vec![(-1.0, 0.5), (2.0, 1.0)]
        );
        assert_eq!(c.num("task", "absent").unwrap(), None);
    }

    #[test]
    fn errors_carry_lines() {
        let e = Config::parse("[model]\na = \"1 +\"\n", "m.cfg")
            .unwrap()
            .model()
            .unwrap_err();
        assert_eq!(e.line, 2);
        assert!(
            e.to_string().starts_with("m.cfg:2:") && e.to_string().contains("position"),
            "{e}"
        );
        let e = Config::parse("[model]\na = 1 + x\n", "m.cfg").unwrap_err();
        assert_eq!(e.line, 2);
        let e = Config::parse("a = 1\n", "m.cfg").unwrap_err();
        assert_eq!(e.line, 1);
        let e = Config::parse("[grid]\nx_min = 0\nx_min = 1\n", "m.cfg").unwrap_err();
        assert_eq!(e.line, 3);
        let e = Config::parse("[grid]\nx_min = 0\n", "m.cfg")
            .unwrap()
            .grid(None)
            .unwrap_err();
        assert!(e.message.contains("x_max"));
        let e = Config::parse("[model]\njump = levy\n", "m.cfg")
            .unwrap()
            .model()
            .unwrap_err();
        assert_eq!(e.line, 2);
        assert!(Config::parse("[x]\nk = \"open\n", "m.cfg").is_err());
    }

    #[test]
    fn stable_model() {
        let c = Config::parse(
            "[model]\njump = stable\nbeta = 1.5\nside = minus\nscale = \"2 + sin(x)\"\n",
            "s",
        )
        .unwrap();
        match c.model().unwrap().jump {
            JumpSpec::StableLike { beta, side, .. } => assert_eq!((beta, side), (1.5, Side::Minus)),
            j => panic!("{j:?}"),
        }
    }
}
