//! Job configuration: one JSON schema shared by every subcommand.

use std::path::Path;

use serde::Deserialize;

use crate::exprlang::{parse, parse_with_var, Expression, SyntaxError};
use crate::gds::{GeneratorMap, GuidingSet, StateSpace, Tolerances};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{pointer}: {source}")]
    Syntax { pointer: String, source: SyntaxError },
}

/// A number, or a constant expression such as `"pi/2"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Num(f64),
    Expr(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum MapSpec {
    Expr(String),
    Table(Vec<usize>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum GuidingEntry {
    Point(Scalar),
    Interval([Scalar; 2]),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum SpaceSpec {
    Interval { a: Scalar, b: Scalar },
    Circle { period: Option<Scalar> },
    Graph { nodes: usize },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TolSpec {
    lambda: Option<f64>,
    step: Option<f64>,
    range: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct Budgets {
    /// Visited-cell cap for orbit clouds.
    pub max_cells: usize,
    /// Neumann iterations.
    pub max_iter: usize,
    /// Largest m tried by the contraction certificate.
    pub m_max: usize,
    pub cycle_len: usize,
    pub samples: usize,
    /// Cells of the orbit graph for non-graph spaces.
    pub cells: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            max_cells: 1 << 22,
            max_iter: 10_000,
            m_max: 64,
            cycle_len: 6,
            samples: 100,
            cells: 256,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum EquationSpec {
    Named(NamedEquation),
    Affine { affine: AffineH },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum NamedEquation {
    Jensen,
    Cauchy,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineH {
    p: String,
    q: String,
    r: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "kebab-case",
    rename_all_fields = "camelCase",
    deny_unknown_fields
)]
enum ProblemSpec {
    Orbit {
        x0: Scalar,
    },
    Funceq {
        h: Option<String>,
    },
    Pconf {
        anchors: Vec<Scalar>,
        h: Option<String>,
        c: Option<f64>,
        mu: Option<f64>,
    },
    Overdet {
        a: Scalar,
        b: Scalar,
        alpha: String,
        beta: String,
        equation: EquationSpec,
        value_a: f64,
        value_b: f64,
    },
    GammaStar {
        value_b: f64,
    },
    Affine {
        a1: Vec<Vec<f64>>,
        a2: Vec<Vec<f64>>,
        b1: Vec<f64>,
        b2: Vec<f64>,
        c: Option<Vec<f64>>,
    },
    L1Ball {
        c: [f64; 2],
    },
    Bvp {
        alpha1: String,
        alpha2: String,
        m: f64,
        n: f64,
        g1: String,
        g2: String,
        g_gamma: String,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    space: Option<SpaceSpec>,
    #[serde(default)]
    maps: Vec<MapSpec>,
    #[serde(default)]
    guiding: Vec<Vec<GuidingEntry>>,
    #[serde(default)]
    coeffs: Vec<String>,
    problem: Option<ProblemSpec>,
    #[serde(default)]
    tolerances: TolSpec,
    #[serde(default)]
    budgets: Budgets,
}

#[derive(Debug, Clone)]
pub enum OverdetEquation {
    Jensen,
    Cauchy,
    Affine { p: Expression, q: Expression, r: Expression },
}

/// Problem section with every expression parsed.
#[derive(Debug, Clone)]
pub enum Problem {
    Orbit {
        x0: f64,
    },
    Funceq {
        h: Option<Expression>,
    },
    Pconf {
        anchors: Vec<f64>,
        h: Option<Expression>,
        c: Option<f64>,
        mu: Option<f64>,
    },
    Overdet {
        a: f64,
        b: f64,
        alpha: Expression,
        beta: Expression,
        equation: OverdetEquation,
        value_a: f64,
        value_b: f64,
    },
    GammaStar {
        value_b: f64,
    },
    Affine {
        a1: Vec<Vec<f64>>,
        a2: Vec<Vec<f64>>,
        b1: Vec<f64>,
        b2: Vec<f64>,
        c: Option<Vec<f64>>,
    },
    L1Ball {
        c: [f64; 2],
    },
    /// Sources are kept; each has already been parsed in its own variable.
    Bvp {
        alpha1: String,
        alpha2: String,
        m: f64,
        n: f64,
        g1: String,
        g2: String,
        g_gamma: String,
    },
}

impl Problem {
    pub fn kind(&self) -> &'static str {
        match self {
            Problem::Orbit { .. } => "orbit",
            Problem::Funceq { .. } => "funceq",
            Problem::Pconf { .. } => "pconf",
            Problem::Overdet { .. } => "overdet",
            Problem::GammaStar { .. } => "gamma-star",
            Problem::Affine { .. } => "affine",
            Problem::L1Ball { .. } => "l1-ball",
            Problem::Bvp { .. } => "bvp",
        }
    }
}

#[derive(Debug, Clone)]
pub struct JobConfig {
    pub space: Option<StateSpace>,
    pub maps: Vec<GeneratorMap>,
    pub guiding: Vec<GuidingSet>,
    pub coeffs: Vec<Expression>,
    pub problem: Option<Problem>,
    pub tolerances: Tolerances,
    pub budgets: Budgets,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<JobConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<JobConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))?;
    raw.resolve()
}

fn expr(src: &str, var: &str, pointer: String) -> Result<Expression, ConfigError> {
    parse_with_var(src, var).map_err(|source| ConfigError::Syntax { pointer, source })
}

fn scalar(s: &Scalar, pointer: String) -> Result<f64, ConfigError> {
    match s {
        Scalar::Num(x) => Ok(*x),
        Scalar::Expr(src) => {
            let e = parse(src).map_err(|source| ConfigError::Syntax {
                pointer: pointer.clone(),
                source,
            })?;
            e.as_constant()
                .filter(|x| x.is_finite())
                .ok_or_else(|| ConfigError::Schema(format!("{pointer}: `{src}` is not a finite constant")))
        }
    }
}

impl RawConfig {
    fn resolve(self) -> Result<JobConfig, ConfigError> {
        let space = self
            .space
            .as_ref()
            .map(|s| -> Result<StateSpace, ConfigError> {
                Ok(match s {
                    SpaceSpec::Interval { a, b } => StateSpace::Interval {
                        a: scalar(a, "/space/a".into())?,
                        b: scalar(b, "/space/b".into())?,
                    },
                    SpaceSpec::Circle { period: None } => StateSpace::circle(),
                    SpaceSpec::Circle { period: Some(p) } => StateSpace::Circle {
                        period: scalar(p, "/space/period".into())?,
                    },
                    SpaceSpec::Graph { nodes } => StateSpace::Graph { nodes: *nodes },
                })
            })
            .transpose()?;

        let maps = self
            .maps
            .iter()
            .enumerate()
            .map(|(i, m)| match m {
                MapSpec::Expr(src) => expr(src, "t", format!("/maps/{i}")).map(GeneratorMap::expr),
                MapSpec::Table(t) => Ok(GeneratorMap::Table(t.clone())),
            })
            .collect::<Result<Vec<_>, _>>()?;

        let guiding = if self.guiding.is_empty() {
            vec![GuidingSet::empty(); maps.len()]
        } else {
            if self.guiding.len() != maps.len() {
                return Err(ConfigError::Schema(format!(
                    "/guiding: {} guiding sets for {} maps",
                    self.guiding.len(),
                    maps.len()
                )));
            }
            self.guiding
                .iter()
                .enumerate()
                .map(|(i, set)| {
                    let intervals = set
                        .iter()
                        .enumerate()
                        .map(|(j, entry)| {
                            let at = |k: Option<usize>| match k {
                                Some(k) => format!("/guiding/{i}/{j}/{k}"),
                                None => format!("/guiding/{i}/{j}"),
                            };
                            match entry {
                                GuidingEntry::Point(p) => {
                                    let x = scalar(p, at(None))?;
                                    Ok((x, x))
                                }
                                GuidingEntry::Interval([lo, hi]) => Ok((scalar(lo, at(Some(0)))?, scalar(hi, at(Some(1)))?)),
                            }
                        })
                        .collect::<Result<Vec<_>, ConfigError>>()?;
                    Ok(GuidingSet::from_intervals(intervals))
                })
                .collect::<Result<Vec<_>, ConfigError>>()?
        };

        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, src)| expr(src, "t", format!("/coeffs/{i}")))
            .collect::<Result<Vec<_>, _>>()?;

        let defaults = Tolerances::default();
        let tolerances = Tolerances {
            lambda: self.tolerances.lambda.unwrap_or(defaults.lambda),
            step: self.tolerances.step.unwrap_or(defaults.step),
            range: self.tolerances.range.unwrap_or(defaults.range),
        };

        let problem = self.problem.map(resolve_problem).transpose()?;
        Ok(JobConfig {
            space,
            maps,
            guiding,
            coeffs,
            problem,
            tolerances,
            budgets: self.budgets,
        })
    }
}

fn resolve_problem(p: ProblemSpec) -> Result<Problem, ConfigError> {
    let opt = |src: Option<String>, field: &str| {
        src.map(|s| expr(&s, "t", format!("/problem/{field}")))
            .transpose()
    };
    Ok(match p {
        ProblemSpec::Orbit { x0 } => Problem::Orbit {
            x0: scalar(&x0, "/problem/x0".into())?,
        },
        ProblemSpec::Funceq { h } => Problem::Funceq { h: opt(h, "h")? },
        ProblemSpec::Pconf { anchors, h, c, mu } => Problem::Pconf {
            anchors: anchors
                .iter()
                .enumerate()
                .map(|(i, a)| scalar(a, format!("/problem/anchors/{i}")))
                .collect::<Result<_, _>>()?,
            h: opt(h, "h")?,
            c,
            mu,
        },
        ProblemSpec::Overdet {
            a,
            b,
            alpha,
            beta,
            equation,
            value_a,
            value_b,
        } => Problem::Overdet {
            a: scalar(&a, "/problem/a".into())?,
            b: scalar(&b, "/problem/b".into())?,
            alpha: expr(&alpha, "t", "/problem/alpha".into())?,
            beta: expr(&beta, "t", "/problem/beta".into())?,
            equation: match equation {
                EquationSpec::Named(NamedEquation::Jensen) => OverdetEquation::Jensen,
                EquationSpec::Named(NamedEquation::Cauchy) => OverdetEquation::Cauchy,
                EquationSpec::Affine { affine } => OverdetEquation::Affine {
                    p: expr(&affine.p, "z", "/problem/equation/affine/p".into())?,
                    q: expr(&affine.q, "z", "/problem/equation/affine/q".into())?,
                    r: expr(&affine.r, "z", "/problem/equation/affine/r".into())?,
                },
            },
            value_a,
            value_b,
        },
        ProblemSpec::GammaStar { value_b } => Problem::GammaStar { value_b },
        ProblemSpec::Affine { a1, a2, b1, b2, c } => Problem::Affine { a1, a2, b1, b2, c },
        ProblemSpec::L1Ball { c } => Problem::L1Ball { c },
        ProblemSpec::Bvp {
            alpha1,
            alpha2,
            m,
            n,
            g1,
            g2,
            g_gamma,
        } => {
            for (src, var, field) in [
                (&alpha1, "z", "alpha1"),
                (&alpha2, "z", "alpha2"),
                (&g1, "x", "g1"),
                (&g2, "y", "g2"),
                (&g_gamma, "z", "gGamma"),
            ] {
                expr(src, var, format!("/problem/{field}"))?;
            }
            Problem::Bvp {
                alpha1,
                alpha2,
                m,
                n,
                g1,
                g2,
                g_gamma,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PCONF: &str = r#"{
        "space": {"type": "interval", "a": -1, "b": 1},
        "maps": ["(t-1)/2", "(t+1)/2"],
        "problem": {"kind": "pconf", "anchors": [-1, 0, 1]}
    }"#;

    #[test]
    fn valid_pconf() {
        let cfg = parse_config(PCONF).unwrap();
        assert_eq!(cfg.maps.len(), 2);
        assert_eq!(cfg.guiding.len(), 2);
        assert!(matches!(cfg.problem, Some(Problem::Pconf { ref anchors, .. }) if anchors == &[-1.0, 0.0, 1.0]));
    }

    #[test]
    fn syntax_error_has_pointer_and_offset() {
        let err = parse_config(r#"{"maps": ["2*+3"]}"#).unwrap_err();
        match err {
            ConfigError::Syntax { pointer, source } => {
                assert_eq!(pointer, "/maps/0");
                assert_eq!(source.offset, 2);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in [
            r#"{"maps": ["t"], "mapz": ["t"], "mapz": ["t"]}"#,
            r#"{"space": {"type": "interval", "a": 0, "b": 1, "c": 2}}"#,
            r#"{"problem": {"kind": "funceq", "g": "t"}}"#,
            r#"{"budgets": {"maxcells": 3}}"#,
        ] {
            assert!(matches!(parse_config(text), Err(ConfigError::Schema(_))), "{text}");
        }
    }

    #[test]
    fn constant_expressions_in_guiding() {
        let cfg = parse_config(
            r#"{"space": {"type": "circle"}, "maps": ["t + pi", "t"],
                "guiding": [[0, "pi"], [["pi/2", "pi/2"]]]}"#,
        )
        .unwrap();
        assert_eq!(cfg.guiding[0].intervals, vec![(0.0, 0.0), (std::f64::consts::PI, std::f64::consts::PI)]);
        assert!((cfg.guiding[1].intervals[0].0 - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn bvp_fields_use_their_own_variables() {
        let ok = r#"{"problem": {"kind": "bvp", "alpha1": "(1+z)/2", "alpha2": "(1-z)/2",
            "m": 1, "n": 1, "g1": "x^2", "g2": "y^2", "gGamma": "z^2"}}"#;
        assert!(parse_config(ok).is_ok());
        let bad = ok.replace("\"y^2\"", "\"x^2\"");
        assert!(matches!(parse_config(&bad), Err(ConfigError::Syntax { pointer, .. }) if pointer == "/problem/g2"));
    }
}
