use serde::{Deserialize, Serialize};

/// Rendered environment observation. `facets` are short `key=value` strings
/// the policy's feature map consumes; `text` is the human-readable rendering.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    pub facets: Vec<String>,
}

/// One entry of the full interaction log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub observation: Observation,
    /// Free-form reasoning. Never copied into the window.
    pub thought: String,
    pub reason: String,
    pub action: String,
}

/// What the agent remembers of one past turn.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowEntry {
    pub observation: Observation,
    pub reason: String,
    pub action: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub window_size: usize,
    /// Oldest first.
    pub entries: Vec<WindowEntry>,
    pub goal_text: String,
}

/// Everything the policy conditions on for one turn.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub window: ObservationWindow,
    pub current: Observation,
}

/// Keep only the `k` most recent turns, in order, dropping free-form thoughts.
pub fn build_window(history: &[Turn], goal_text: &str, k: usize) -> ObservationWindow {
    assert!(k >= 1, "window size must be positive");
    let start = history.len().saturating_sub(k);
    ObservationWindow {
        window_size: k,
        entries: history[start..]
            .iter()
            .map(|t| WindowEntry {
                observation: t.observation.clone(),
                reason: t.reason.clone(),
                action: t.action.clone(),
            })
            .collect(),
        goal_text: goal_text.to_string(),
    }
}

impl Context {
    /// Feature facets: the current observation as-is, window entries prefixed
    /// by their lag (`t-1|` is the most recent turn).
    pub fn facets(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.current.facets.len() * (self.window.entries.len() + 1));
        out.extend(self.current.facets.iter().cloned());
        let n = self.window.entries.len();
        for (i, e) in self.window.entries.iter().enumerate() {
            let lag = n - i;
            out.extend(e.observation.facets.iter().map(|f| format!("t-{lag}|{f}")));
            out.push(format!("t-{lag}|act={}", e.action));
        }
        out
    }

    /// Text rendering of the prompt the agent sees.
    pub fn render(&self) -> String {
        let mut s = format!("GOAL: {}\n", self.window.goal_text);
        for e in &self.window.entries {
            s.push_str(&format!(
                "OBS: {}\nREASON:{}, ACTION:{}\n",
                e.observation.text, e.reason, e.action
            ));
        }
        s.push_str(&format!("OBS: {}\n", self.current.text));
        s
    }
}
