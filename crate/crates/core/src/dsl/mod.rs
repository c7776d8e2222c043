//! Line-oriented scenario language.
//!
//! ```text
//! # a vehicle merges in front of ego on a rainy day
//! scenario rainy_cut_in
//! seed 7
//! env rain
//! ego: forward speed=10
//! agent a1: vehicle cut_in target=ego safe_dis=10
//! save bundle out/rainy
//! ```
//!
//! Parameters are `key=value`; values are numbers (SI units, angles in
//! radians or with a `deg` suffix), identifiers, or points `(x, y)`.

mod parser;
pub mod registry;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

pub use parser::parse;
pub use registry::{lookup, registry, FunctionCategory, FunctionSpec, ParamDefault, ParamKind, ParamSpec};

pub const EGO_ID: &str = "ego";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Number(f64),
    Ident(String),
    Point([f64; 2]),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(v) => write!(f, "{v}"),
            Value::Ident(s) | Value::Text(s) => f.write_str(s),
            Value::Point([x, y]) => write!(f, "({x}, {y})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Vehicle,
    Pedestrian,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Vehicle => "vehicle",
            Category::Pedestrian => "pedestrian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverCall {
    pub function: String,
    /// Only the parameters written in the source; defaults are resolved by
    /// the trajectory kernel.
    pub params: BTreeMap<String, Value>,
}

impl ManeuverCall {
    pub fn new(function: &str) -> Self {
        Self { function: function.to_string(), params: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: Value) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn spec(&self) -> Option<&'static FunctionSpec> {
        lookup(&self.function)
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        match self.params.get(key) {
            Some(Value::Number(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn ident(&self, key: &str) -> Option<&str> {
        match self.params.get(key) {
            Some(Value::Ident(s)) => Some(s),
            _ => None,
        }
    }

    pub fn point(&self, key: &str) -> Option<[f64; 2]> {
        match self.params.get(key) {
            Some(Value::Point(p)) => Some(*p),
            _ => None,
        }
    }

    /// The agent this call is defined relative to, with registry defaults
    /// applied.
    pub fn target(&self) -> Option<&str> {
        let spec = self.spec()?;
        let param = spec.params.iter().find(|p| p.kind == ParamKind::Target)?;
        self.ident(param.name).or(match param.default {
            ParamDefault::Ident(d) => Some(d),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDecl {
    pub id: String,
    pub category: Category,
    pub call: ManeuverCall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaveKind {
    Trajectories,
    Bev,
    Bundle,
}

impl SaveKind {
    pub fn keyword(self) -> &'static str {
        match self {
            SaveKind::Trajectories => "trajectories",
            SaveKind::Bev => "bev",
            SaveKind::Bundle => "bundle",
        }
    }

    pub fn function(self) -> &'static str {
        match self {
            SaveKind::Trajectories => "save_trajectories",
            SaveKind::Bev => "save_bev",
            SaveKind::Bundle => "save_bundle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaveDirective {
    pub kind: SaveKind,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub seed: u64,
    pub environment: BTreeSet<String>,
    pub ego: ManeuverCall,
    pub agents: Vec<AgentDecl>,
    pub outputs: Vec<SaveDirective>,
}

impl ScenarioSpec {
    pub fn agent(&self, id: &str) -> Option<&AgentDecl> {
        self.agents.iter().find(|a| a.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownFunction(String),
    NotAManeuver(String),
    CategoryMismatch { function: String, category: &'static str },
    UnknownParam { function: String, param: String },
    DuplicateParam(String),
    TypeMismatch { param: String, expected: &'static str },
    OutOfRange { param: String, value: String, min: String, max: String },
    DuplicateAgent(String),
    DuplicateStatement(&'static str),
    UnresolvedTarget(String),
    SelfTarget(String),
    CyclicTarget(String),
    MissingEgo,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Syntax(msg) => write!(f, "syntax error: {msg}"),
            Self::UnknownFunction(name) => write!(f, "unknown function `{name}`"),
            Self::NotAManeuver(name) => write!(f, "`{name}` is a utility, not a maneuver"),
            Self::CategoryMismatch { function, category } => {
                write!(f, "function `{function}` cannot drive a {category}")
            }
            Self::UnknownParam { function, param } => write!(f, "unknown parameter `{param}` for `{function}`"),
            Self::DuplicateParam(p) => write!(f, "parameter `{p}` given twice"),
            Self::TypeMismatch { param, expected } => write!(f, "parameter `{param}` expects {expected}"),
            Self::OutOfRange { param, value, min, max } => {
                write!(f, "parameter `{param}` out of declared range: {value} not in [{min}, {max}]")
            }
            Self::DuplicateAgent(id) => write!(f, "duplicate agent id `{id}`"),
            Self::DuplicateStatement(s) => write!(f, "duplicate `{s}` statement"),
            Self::UnresolvedTarget(t) => write!(f, "unresolved target reference `{t}`"),
            Self::SelfTarget(id) => write!(f, "`{id}` cannot target itself"),
            Self::CyclicTarget(id) => write!(f, "cyclic target reference through `{id}`"),
            Self::MissingEgo => write!(f, "missing `ego:` declaration"),
        }
    }
}

/// Positioned diagnostic; line and column are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

fn write_call(out: &mut String, call: &ManeuverCall) {
    out.push_str(&call.function);
    for (k, v) in &call.params {
        let _ = write!(out, " {k}={v}");
    }
}

/// Deterministic source form: fixed statement order, sorted parameters, and
/// numbers in shortest round-trip notation.
pub fn print_canonical(spec: &ScenarioSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {}", spec.name);
    let _ = writeln!(out, "seed {}", spec.seed);
    if !spec.environment.is_empty() {
        let tags: Vec<&str> = spec.environment.iter().map(String::as_str).collect();
        let _ = writeln!(out, "env {}", tags.join(" "));
    }
    out.push_str("ego: ");
    write_call(&mut out, &spec.ego);
    out.push('\n');
    for agent in &spec.agents {
        let _ = write!(out, "agent {}: {} ", agent.id, agent.category.as_str());
        write_call(&mut out, &agent.call);
        out.push('\n');
    }
    for save in &spec.outputs {
        let _ = writeln!(out, "save {} {}", save.kind.keyword(), save.path);
    }
    out
}
