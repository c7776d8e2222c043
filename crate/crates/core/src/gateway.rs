//! Free text to scenario documents.
//!
//! Two paths: a chat-completion endpoint prompted with the function library,
//! or the offline intent matcher. Remote completions are returned verbatim;
//! the caller parses them, so a bad completion surfaces as a parse error.

use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dsl::{self, registry, FunctionCategory, ScenarioSpec};
use crate::seed::fnv1a;

pub const PLACEHOLDER: &str = "{USER QUERY}";

pub const ENV_URL: &str = "SCENFORGE_LLM_URL";
pub const ENV_KEY: &str = "SCENFORGE_LLM_KEY";
pub const ENV_MODEL: &str = "SCENFORGE_LLM_MODEL";

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("prompt template has no `{PLACEHOLDER}` placeholder")]
    PlaceholderMissing,
    #[error("prompt template has {0} `{PLACEHOLDER}` placeholders, expected one")]
    PlaceholderDuplicated(usize),
    #[error("invalid gateway config: {0}")]
    InvalidConfig(String),
    #[error("auth token variable `{0}` is not set")]
    MissingToken(String),
    #[error("endpoint rejected credentials (HTTP {0})")]
    Auth(u16),
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("network failure after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("endpoint returned HTTP {0}")]
    Status(u16),
    #[error("malformed completion response: {0}")]
    Malformed(String),
    #[error("endpoint returned an empty completion")]
    EmptyCompletion,
}

/// Preamble describing the function library followed by an instruction that
/// carries the placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub preamble: String,
    pub instruction: String,
}

impl PromptTemplate {
    pub fn new(preamble: impl Into<String>, instruction: impl Into<String>) -> Result<Self, GatewayError> {
        let t = Self { preamble: preamble.into(), instruction: instruction.into() };
        t.validate()?;
        Ok(t)
    }

    pub fn text(&self) -> String {
        format!("{}{}", self.preamble, self.instruction)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let in_instruction = self.instruction.matches(PLACEHOLDER).count();
        let total = self.text().matches(PLACEHOLDER).count();
        match (in_instruction, total) {
            (1, 1) => Ok(()),
            (_, 0) => Err(GatewayError::PlaceholderMissing),
            (0, _) => Err(GatewayError::PlaceholderMissing),
            (_, n) => Err(GatewayError::PlaceholderDuplicated(n)),
        }
    }
}

impl Default for PromptTemplate {
    /// Paraphrased library description; not a reproduction of any published
    /// prompt.
    fn default() -> Self {
        let mut preamble = String::from(
            "You write driving scenarios in a small line-oriented language.\n\
             Statements: `scenario <name>`, `seed <n>`, `env <tags>`, `ego: <function> k=v ...`,\n\
             `agent <id>: vehicle|pedestrian <function> k=v ...`, `save trajectories|bev|bundle <path>`.\n\
             Units are SI; angles take a `deg` suffix or radians; points are written (x, y).\n\
             Available functions:\n",
        );
        for f in registry() {
            if f.category != FunctionCategory::Utility {
                let _ = writeln!(preamble, "- {}: {}", f.signature(), f.summary);
            }
        }
        preamble.push_str(
            "Example:\nscenario rainy_cut_in\nenv rain\nego: forward speed=10\nagent a1: vehicle cut_in target=ego\n\n",
        );
        let instruction = format!("Request: {PLACEHOLDER}\nAnswer with the scenario document only.\n");
        Self { preamble, instruction }
    }
}

/// Single-pass substitution; the query is inserted verbatim.
pub fn build_prompt(template: &PromptTemplate, query: &str) -> Result<String, GatewayError> {
    template.validate()?;
    let text = template.text();
    let at = text.find(PLACEHOLDER).expect("validated");
    let mut out = String::with_capacity(text.len() - PLACEHOLDER.len() + query.len());
    out.push_str(&text[..at]);
    out.push_str(query);
    out.push_str(&text[at + PLACEHOLDER.len()..]);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    /// Endpoint root; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: String,
    pub timeout_secs: f64,
    /// Extra attempts after the first on transport errors and 5xx replies.
    pub retries: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "gpt-3.5-turbo".into(),
            auth_env: ENV_KEY.into(),
            timeout_secs: 30.0,
            retries: 2,
        }
    }
}

impl GatewayConfig {
    /// Defaults overridden by `SCENFORGE_LLM_URL` and `SCENFORGE_LLM_MODEL`.
    pub fn from_env() -> Self {
        let mut c = Self::default();
        if let Ok(url) = std::env::var(ENV_URL) {
            c.base_url = url;
        }
        if let Ok(model) = std::env::var(ENV_MODEL) {
            c.model = model;
        }
        c
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.timeout_secs > 0.0) || !self.timeout_secs.is_finite() {
            return Err(GatewayError::InvalidConfig("timeout must be positive".into()));
        }
        if self.base_url.is_empty() {
            return Err(GatewayError::InvalidConfig("base URL is empty".into()));
        }
        Ok(())
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: Option<String>,
}

/// Sends `prompt` as a single user message and returns the first choice's
/// content unchanged.
pub fn query_remote(config: &GatewayConfig, prompt: &str) -> Result<String, GatewayError> {
    config.validate()?;
    let token = std::env::var(&config.auth_env)
        .ok()
        .filter(|t| !t.is_empty())
        .ok_or_else(|| GatewayError::MissingToken(config.auth_env.clone()))?;

    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
        .http_status_as_error(false)
        .build()
        .into();
    let body = ChatRequest { model: &config.model, messages: [ChatMessage { role: "user", content: prompt }], temperature: 0.0 };
    let attempts = config.retries + 1;
    let url = config.endpoint();
    let mut last = GatewayError::Network { attempts, message: "no attempt made".into() };
    for _ in 0..attempts {
        let result = agent.post(&url).header("Authorization", &format!("Bearer {token}")).send_json(&body);
        let mut response = match result {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => {
                last = GatewayError::Timeout { attempts };
                continue;
            }
            Err(e) => {
                last = GatewayError::Network { attempts, message: e.to_string() };
                continue;
            }
        };
        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(GatewayError::Auth(status)),
            500..=599 => {
                last = GatewayError::Status(status);
                continue;
            }
            _ => return Err(GatewayError::Status(status)),
        }
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| GatewayError::Malformed(e.to_string()))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::Malformed("no choices".into()))?
            .message
            .content
            .unwrap_or_default();
        if content.trim().is_empty() {
            return Err(GatewayError::EmptyCompletion);
        }
        return Ok(content);
    }
    Err(last)
}

/// Offline matcher result. `fallback` is set when no rule fired and the
/// default ego-forward scenario was returned.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentMatch {
    pub spec: ScenarioSpec,
    pub source: String,
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Template {
    Ego(&'static str),
    Vehicle(&'static str),
    Pedestrian(&'static str),
}

/// Phrase table; matched longest phrase first on word boundaries.
const RULES: &[(&str, Template)] = &[
    ("cut in", Template::Vehicle("cut_in target=ego")),
    ("cuts in", Template::Vehicle("cut_in target=ego")),
    ("cutting in", Template::Vehicle("cut_in target=ego")),
    ("cut into", Template::Vehicle("cut_in target=ego")),
    ("cuts into", Template::Vehicle("cut_in target=ego")),
    ("cut-in", Template::Vehicle("cut_in target=ego")),
    ("crosses the road", Template::Pedestrian("pedestrian_cross")),
    ("crossing the road", Template::Pedestrian("pedestrian_cross")),
    ("cross the road", Template::Pedestrian("pedestrian_cross")),
    ("crosses the street", Template::Pedestrian("pedestrian_cross")),
    ("crossing the street", Template::Pedestrian("pedestrian_cross")),
    ("jaywalks", Template::Pedestrian("pedestrian_cross")),
    ("pedestrian walks", Template::Pedestrian("pedestrian_walk")),
    ("person walks", Template::Pedestrian("pedestrian_walk")),
    ("walking along", Template::Pedestrian("pedestrian_walk")),
    ("changes lane", Template::Ego("lane_change_left")),
    ("changes lanes", Template::Ego("lane_change_left")),
    ("change lane", Template::Ego("lane_change_left")),
    ("changing lanes", Template::Ego("lane_change_left")),
    ("lane change", Template::Ego("lane_change_left")),
    ("changes lane to the right", Template::Ego("lane_change_right")),
    ("changes lane to the left", Template::Ego("lane_change_left")),
    ("u-turn", Template::Ego("u_turn")),
    ("u turn", Template::Ego("u_turn")),
    ("turns around", Template::Ego("u_turn")),
    ("turns left", Template::Ego("steer_left")),
    ("turn left", Template::Ego("steer_left")),
    ("turns right", Template::Ego("steer_right")),
    ("turn right", Template::Ego("steer_right")),
    ("accelerates", Template::Ego("accelerate")),
    ("speeds up", Template::Ego("accelerate")),
    ("brakes", Template::Ego("brake")),
    ("slows down", Template::Ego("brake")),
    ("stops", Template::Ego("stop")),
    ("comes to a stop", Template::Ego("stop")),
    ("overtakes", Template::Vehicle("overtake target=ego")),
    ("overtaking", Template::Vehicle("overtake target=ego")),
    ("follows", Template::Vehicle("follow target=ego")),
    ("following", Template::Vehicle("follow target=ego")),
];

/// Environment words and the tag each becomes.
const ENV_WORDS: &[(&str, &str)] =
    &[("rain", "rain"), ("rainy", "rain"), ("night", "night"), ("daytime", "daytime"), ("sunny", "sunny")];

fn normalize(query: &str) -> String {
    let cleaned: String = query
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' { c } else { ' ' })
        .collect();
    format!(" {} ", cleaned.split_whitespace().collect::<Vec<_>>().join(" "))
}

/// Deterministic keyword matcher. Always yields a valid scenario; several
/// non-overlapping phrases compose (one ego maneuver, any number of agents).
pub fn match_intent(query: &str) -> IntentMatch {
    let text = normalize(query);
    let mut rules: Vec<&(&str, Template)> = RULES.iter().collect();
    rules.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(b.0)));

    let mut taken = vec![false; text.len()];
    let mut hits: Vec<(usize, Template)> = Vec::new();
    for (phrase, template) in rules {
        let needle = format!(" {phrase} ");
        let mut from = 0;
        while let Some(found) = text[from..].find(&needle) {
            let start = from + found + 1;
            let end = start + phrase.len();
            if !taken[start..end].iter().any(|&t| t) {
                taken[start..end].iter_mut().for_each(|t| *t = true);
                hits.push((start, *template));
            }
            from = start;
        }
    }
    hits.sort_by_key(|h| h.0);

    let mut tags: Vec<&str> =
        text.split_whitespace().filter_map(|w| ENV_WORDS.iter().find(|(k, _)| *k == w).map(|(_, t)| *t)).collect();
    tags.sort_unstable();
    tags.dedup();

    let mut ego = None;
    let mut agents = Vec::new();
    let (mut vehicles, mut pedestrians) = (0, 0);
    for (_, template) in &hits {
        match *template {
            Template::Ego(call) => {
                ego.get_or_insert(call);
            }
            Template::Vehicle(call) => {
                vehicles += 1;
                agents.push(format!("agent a{vehicles}: vehicle {call}"));
            }
            Template::Pedestrian(call) => {
                pedestrians += 1;
                agents.push(format!("agent p{pedestrians}: pedestrian {call}"));
            }
        }
    }

    let mut source = String::new();
    let _ = writeln!(source, "scenario intent");
    let _ = writeln!(source, "seed {}", fnv1a(text.trim().as_bytes()));
    if !tags.is_empty() {
        let _ = writeln!(source, "env {}", tags.join(" "));
    }
    let _ = writeln!(source, "ego: {}", ego.unwrap_or("forward"));
    for a in &agents {
        let _ = writeln!(source, "{a}");
    }
    let spec = dsl::parse(&source).expect("intent templates are valid scenarios");
    IntentMatch { spec, source, fallback: hits.is_empty() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholder_substitution() {
        let t = PromptTemplate::new("lib\n", "do: {USER QUERY}.").unwrap();
        let p = build_prompt(&t, "a car cuts in").unwrap();
        assert_eq!(p, "lib\ndo: a car cuts in.");
        assert_eq!(p.matches("a car cuts in").count(), 1);
    }

    #[test]
    fn braces_inserted_verbatim() {
        let t = PromptTemplate::default();
        let q = "weird {USER QUERY} {x}";
        let p = build_prompt(&t, q).unwrap();
        assert!(p.contains(q));
        assert_eq!(p.len(), t.text().len() - PLACEHOLDER.len() + q.len());
    }

    #[test]
    fn template_validation() {
        assert!(matches!(PromptTemplate::new("a", "b"), Err(GatewayError::PlaceholderMissing)));
        assert!(matches!(
            PromptTemplate::new("a", "{USER QUERY} {USER QUERY}"),
            Err(GatewayError::PlaceholderDuplicated(2))
        ));
        assert!(matches!(
            PromptTemplate::new("{USER QUERY}", "{USER QUERY}"),
            Err(GatewayError::PlaceholderDuplicated(2))
        ));
        assert!(PromptTemplate::default().validate().is_ok());
    }

    #[test]
    fn default_preamble_lists_maneuvers() {
        let t = PromptTemplate::default();
        assert!(t.preamble.contains("cut_in(target: target = ego"));
        assert!(!t.preamble.contains("save_bev("));
    }

    #[test]
    fn showcased_prompts() {
        let m = match_intent("on a rainy day, there is a car cut in");
        assert!(!m.fallback);
        assert_eq!(m.spec.agents.len(), 1);
        assert_eq!(m.spec.agents[0].call.function, "cut_in");
        assert_eq!(m.spec.environment.iter().collect::<Vec<_>>(), ["rain"]);

        let m = match_intent("a person crosses the road on a rainy day");
        assert_eq!(m.spec.agents[0].call.function, "pedestrian_cross");
        assert!(m.spec.environment.contains("rain"));

        let m = match_intent("the ego car changes lane during the daytime");
        assert!(m.spec.agents.is_empty());
        assert_eq!(m.spec.ego.function, "lane_change_left");
        assert!(m.spec.environment.contains("daytime"));
    }

    #[test]
    fn longest_phrase_wins() {
        let m = match_intent("the ego car changes lane to the right at night");
        assert_eq!(m.spec.ego.function, "lane_change_right");
        assert!(m.spec.environment.contains("night"));
    }

    #[test]
    fn phrases_compose() {
        let m = match_intent("a car cuts in while a pedestrian crosses the road, and the ego car brakes");
        assert_eq!(m.spec.ego.function, "brake");
        let f: Vec<&str> = m.spec.agents.iter().map(|a| a.call.function.as_str()).collect();
        assert_eq!(f, ["cut_in", "pedestrian_cross"]);
    }

    #[test]
    fn unknown_query_falls_back() {
        let m = match_intent("tell me a joke");
        assert!(m.fallback);
        assert_eq!(m.spec.ego.function, "forward");
        assert!(m.spec.agents.is_empty());
    }

    #[test]
    fn matcher_is_deterministic() {
        let q = "At night a car overtakes";
        assert_eq!(match_intent(q), match_intent(q));
        assert_eq!(match_intent(q).spec.seed, match_intent("at night, a car overtakes!").spec.seed);
    }

    #[test]
    fn missing_token_fails_before_request() {
        let c = GatewayConfig {
            base_url: "http://127.0.0.1:9".into(),
            auth_env: "SCENFORGE_TEST_TOKEN_THAT_IS_NEVER_SET".into(),
            ..Default::default()
        };
        assert!(matches!(query_remote(&c, "x"), Err(GatewayError::MissingToken(_))));
    }

    #[test]
    fn invalid_timeout_rejected() {
        let c = GatewayConfig { timeout_secs: 0.0, ..Default::default() };
        assert!(matches!(query_remote(&c, "x"), Err(GatewayError::InvalidConfig(_))));
    }
}
