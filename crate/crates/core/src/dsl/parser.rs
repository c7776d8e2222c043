use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::registry::{lookup, FunctionCategory, ParamKind, ParamSpec};
use super::{
    AgentDecl, Category, ManeuverCall, ParseError, ParseErrorKind, SaveDirective, SaveKind, ScenarioSpec, Value,
    EGO_ID,
};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Colon,
    Equals,
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    col: usize,
}

fn err(line: usize, column: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { line, column, kind }
}

fn syntax(line: usize, column: usize, msg: impl Into<String>) -> ParseError {
    err(line, column, ParseErrorKind::Syntax(msg.into()))
}

fn lex(line_no: usize, text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            '#' => break,
            c if c.is_whitespace() => i += 1,
            ':' | '=' | '(' | ')' | ',' => {
                let tok = match c {
                    ':' => Tok::Colon,
                    '=' => Tok::Equals,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    _ => Tok::Comma,
                };
                out.push(Token { tok, col });
                i += 1;
            }
            c if c.is_control() => return Err(syntax(line_no, col, format!("unexpected character {c:?}"))),
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !":=(),#".contains(chars[i]) {
                    i += 1;
                }
                out.push(Token { tok: Tok::Word(chars[start..i].iter().collect()), col });
            }
        }
    }
    Ok(out)
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

struct Cursor<'a> {
    line: usize,
    toks: &'a [Token],
    pos: usize,
    end_col: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn col(&self) -> usize {
        self.peek().map_or(self.end_col, |t| t.col)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn word(&mut self, what: &str) -> Result<(String, usize), ParseError> {
        let col = self.col();
        match self.next() {
            Some(Token { tok: Tok::Word(w), col }) => Ok((w.clone(), *col)),
            _ => Err(syntax(self.line, col, format!("expected {what}"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize), ParseError> {
        let (w, col) = self.word(what)?;
        if !is_ident(&w) {
            return Err(syntax(self.line, col, format!("expected {what}, found `{w}`")));
        }
        Ok((w, col))
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        let col = self.col();
        match self.next() {
            Some(t) if t.tok == tok => Ok(()),
            _ => Err(syntax(self.line, col, format!("expected {what}"))),
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(syntax(self.line, t.col, "unexpected trailing input")),
        }
    }
}

fn parse_number(line: usize, col: usize, text: &str, spec: &ParamSpec) -> Result<f64, ParseError> {
    let (digits, scale) = match spec.kind {
        ParamKind::Angle => {
            if let Some(d) = text.strip_suffix("deg") {
                (d, std::f64::consts::PI / 180.0)
            } else if let Some(r) = text.strip_suffix("rad") {
                (r, 1.0)
            } else {
                (text, 1.0)
            }
        }
        _ => (text, 1.0),
    };
    // reject forms f64::from_str accepts but the language does not
    let plain = !digits.is_empty()
        && digits.chars().all(|c| c.is_ascii_digit() || "+-.eE".contains(c))
        && digits.chars().any(|c| c.is_ascii_digit());
    let value = plain.then(|| digits.parse::<f64>().ok()).flatten().ok_or_else(|| {
        err(
            line,
            col,
            ParseErrorKind::TypeMismatch {
                param: spec.name.to_string(),
                expected: if spec.kind == ParamKind::Angle { "a number (optionally with `deg`)" } else { "a number" },
            },
        )
    })?;
    Ok(value * scale)
}

fn check_range(line: usize, col: usize, spec: &ParamSpec, v: f64) -> Result<(), ParseError> {
    if v.is_finite() && v >= spec.min && v <= spec.max {
        return Ok(());
    }
    Err(err(
        line,
        col,
        ParseErrorKind::OutOfRange {
            param: spec.name.to_string(),
            value: format!("{v}"),
            min: format!("{}", spec.min),
            max: format!("{}", spec.max),
        },
    ))
}

fn parse_value(cur: &mut Cursor<'_>, spec: &ParamSpec) -> Result<(Value, usize), ParseError> {
    let line = cur.line;
    let col = cur.col();
    let mismatch = |expected: &'static str| {
        err(line, col, ParseErrorKind::TypeMismatch { param: spec.name.to_string(), expected })
    };
    match spec.kind {
        ParamKind::Point => {
            if cur.peek().map(|t| &t.tok) != Some(&Tok::LParen) {
                return Err(mismatch("a point `(x, y)`"));
            }
            cur.next();
            let (xs, xc) = cur.word("x coordinate")?;
            cur.expect(Tok::Comma, "`,` between point coordinates")?;
            let (ys, yc) = cur.word("y coordinate")?;
            cur.expect(Tok::RParen, "`)` closing the point")?;
            let x = parse_number(line, xc, &xs, spec)?;
            check_range(line, xc, spec, x)?;
            let y = parse_number(line, yc, &ys, spec)?;
            check_range(line, yc, spec, y)?;
            Ok((Value::Point([x, y]), col))
        }
        ParamKind::Target => {
            let (w, c) = cur.word("target")?;
            if !is_ident(&w) {
                return Err(mismatch("an agent id or `ego`"));
            }
            Ok((Value::Ident(w), c))
        }
        ParamKind::Choice(options) => {
            let (w, c) = cur.word("choice")?;
            if !options.contains(&w.as_str()) {
                return Err(mismatch("one of the listed choices"));
            }
            Ok((Value::Ident(w), c))
        }
        ParamKind::Path => {
            let (w, c) = cur.word("path")?;
            Ok((Value::Text(w), c))
        }
        ParamKind::Seed => {
            let (w, c) = cur.word("seed")?;
            let v: u64 = w.parse().map_err(|_| mismatch("an unsigned 64-bit integer"))?;
            Ok((Value::Number(v as f64), c))
        }
        _ => {
            let (w, c) = cur.word("number")?;
            let v = parse_number(line, c, &w, spec)?;
            check_range(line, c, spec, v)?;
            Ok((Value::Number(v), c))
        }
    }
}

/// Target references recorded for document-level resolution.
struct TargetRef {
    owner: String,
    target: String,
    line: usize,
    col: usize,
}

fn parse_call(
    cur: &mut Cursor<'_>,
    owner: &str,
    category: Category,
    targets: &mut Vec<TargetRef>,
) -> Result<ManeuverCall, ParseError> {
    let line = cur.line;
    let (name, fcol) = cur.ident("function name")?;
    let spec = lookup(&name).ok_or_else(|| err(line, fcol, ParseErrorKind::UnknownFunction(name.clone())))?;
    let required = match category {
        Category::Vehicle => FunctionCategory::Vehicle,
        Category::Pedestrian => FunctionCategory::Pedestrian,
    };
    if spec.category == FunctionCategory::Utility {
        return Err(err(line, fcol, ParseErrorKind::NotAManeuver(name)));
    }
    if spec.category != required {
        return Err(err(line, fcol, ParseErrorKind::CategoryMismatch { function: name, category: category.as_str() }));
    }
    let mut params = BTreeMap::new();
    let mut target_given = false;
    while cur.peek().is_some() {
        let (key, kcol) = cur.ident("parameter name")?;
        cur.expect(Tok::Equals, "`=` after parameter name")?;
        let pspec = spec.param(&key).ok_or_else(|| {
            err(line, kcol, ParseErrorKind::UnknownParam { function: name.clone(), param: key.clone() })
        })?;
        let (value, vcol) = parse_value(cur, pspec)?;
        if pspec.kind == ParamKind::Target {
            if let Value::Ident(t) = &value {
                targets.push(TargetRef { owner: owner.to_string(), target: t.clone(), line, col: vcol });
                target_given = true;
            }
        }
        if params.insert(key.clone(), value).is_some() {
            return Err(err(line, kcol, ParseErrorKind::DuplicateParam(key)));
        }
    }
    if !target_given {
        let bare = ManeuverCall::new(&name);
        if let Some(default) = bare.target() {
            targets.push(TargetRef { owner: owner.to_string(), target: default.to_string(), line, col: fcol });
        }
    }
    Ok(ManeuverCall { function: name, params })
}

/// Parses and validates a scenario document.
pub fn parse(text: &str) -> Result<ScenarioSpec, ParseError> {
    let mut name: Option<String> = None;
    let mut seed: Option<u64> = None;
    let mut environment = BTreeSet::new();
    let mut ego: Option<ManeuverCall> = None;
    let mut agents: Vec<AgentDecl> = Vec::new();
    let mut outputs = Vec::new();
    let mut targets = Vec::new();
    let mut line_count = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        line_count = line;
        let toks = lex(line, raw)?;
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor { line, toks: &toks, pos: 0, end_col: raw.chars().count() + 1 };
        let (kw, kwcol) = cur.word("statement")?;
        match kw.as_str() {
            "scenario" => {
                let (n, _) = cur.ident("scenario name")?;
                cur.finish()?;
                if name.replace(n).is_some() {
                    return Err(err(line, kwcol, ParseErrorKind::DuplicateStatement("scenario")));
                }
            }
            "seed" => {
                let (w, c) = cur.word("seed value")?;
                let v: u64 = w.parse().map_err(|_| syntax(line, c, "seed must be an unsigned 64-bit integer"))?;
                cur.finish()?;
                if seed.replace(v).is_some() {
                    return Err(err(line, kwcol, ParseErrorKind::DuplicateStatement("seed")));
                }
            }
            "env" => {
                if cur.peek().is_none() {
                    return Err(syntax(line, cur.col(), "expected at least one environment tag"));
                }
                while cur.peek().is_some() {
                    let (tag, _) = cur.ident("environment tag")?;
                    environment.insert(tag);
                }
            }
            "ego" => {
                cur.expect(Tok::Colon, "`:` after `ego`")?;
                let call = parse_call(&mut cur, EGO_ID, Category::Vehicle, &mut targets)?;
                if ego.replace(call).is_some() {
                    return Err(err(line, kwcol, ParseErrorKind::DuplicateStatement("ego")));
                }
            }
            "agent" => {
                let (id, idcol) = cur.ident("agent id")?;
                cur.expect(Tok::Colon, "`:` after agent id")?;
                let (cat, ccol) = cur.word("agent category")?;
                let category = match cat.as_str() {
                    "vehicle" => Category::Vehicle,
                    "pedestrian" => Category::Pedestrian,
                    _ => return Err(syntax(line, ccol, format!("unknown category `{cat}`, expected vehicle or pedestrian"))),
                };
                if id == EGO_ID || agents.iter().any(|a| a.id == id) {
                    return Err(err(line, idcol, ParseErrorKind::DuplicateAgent(id)));
                }
                let call = parse_call(&mut cur, &id, category, &mut targets)?;
                agents.push(AgentDecl { id, category, call });
            }
            "save" => {
                let (first, _) = cur.word("output path")?;
                let directive = match cur.peek() {
                    None => SaveDirective { kind: SaveKind::Trajectories, path: first },
                    Some(_) => {
                        let kind = match first.as_str() {
                            "trajectories" => SaveKind::Trajectories,
                            "bev" => SaveKind::Bev,
                            "bundle" => SaveKind::Bundle,
                            _ => return Err(syntax(line, toks[1].col, format!("unknown output kind `{first}`"))),
                        };
                        let (path, _) = cur.word("output path")?;
                        cur.finish()?;
                        SaveDirective { kind, path }
                    }
                };
                outputs.push(directive);
            }
            other => return Err(syntax(line, kwcol, format!("unknown statement `{other}`"))),
        }
    }

    let declared = |id: &str| id == EGO_ID && ego.is_some() || agents.iter().any(|a| a.id == id);
    for r in &targets {
        if !declared(&r.target) {
            return Err(err(r.line, r.col, ParseErrorKind::UnresolvedTarget(r.target.clone())));
        }
        if r.target == r.owner {
            return Err(err(r.line, r.col, ParseErrorKind::SelfTarget(r.owner.clone())));
        }
    }
    let Some(ego) = ego else {
        return Err(err(line_count + 1, 1, ParseErrorKind::MissingEgo));
    };

    // each owner has at most one target, so following edges either ends or loops
    let edges: HashMap<&str, &str> = targets.iter().map(|r| (r.owner.as_str(), r.target.as_str())).collect();
    for r in &targets {
        let mut at = r.target.as_str();
        for _ in 0..=edges.len() {
            if at == r.owner {
                return Err(err(r.line, r.col, ParseErrorKind::CyclicTarget(r.owner.clone())));
            }
            match edges.get(at) {
                Some(next) => at = next,
                None => break,
            }
        }
    }

    Ok(ScenarioSpec {
        name: name.unwrap_or_else(|| "unnamed".to_string()),
        seed: seed.unwrap_or(0),
        environment,
        ego,
        agents,
        outputs,
    })
}
