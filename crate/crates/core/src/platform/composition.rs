use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::PlatformError;

pub const DEFAULT_MEMORY_MB: u32 = 128;
pub const DEFAULT_TIMEOUT_MS: u64 = 300_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    pub base_exec_ms: u64,
    pub memory_mb: u32,
    pub timeout_ms: u64,
    pub external_calls: Vec<String>,
    /// Whether the body carries developer-driven instrumentation.
    pub instrumented: bool,
}

impl FunctionSpec {
    pub fn new(name: impl Into<String>, base_exec_ms: u64) -> Self {
        FunctionSpec {
            name: name.into(),
            base_exec_ms,
            memory_mb: DEFAULT_MEMORY_MB,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            external_calls: Vec::new(),
            instrumented: true,
        }
    }

    pub fn with_external(mut self, endpoint: impl Into<String>) -> Self {
        self.external_calls.push(endpoint.into());
        self
    }

    pub fn with_timeout(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    pub fn uninstrumented(mut self) -> Self {
        self.instrumented = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    Sync,
    Async,
}

/// How many times an edge fires per caller invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FanOut {
    #[default]
    Once,
    /// Once per record in the request payload.
    PerRecord,
    /// Once per image reference (records x images per record).
    PerImage,
}

impl FanOut {
    pub fn count(self, records: u32, images_per_record: u32) -> u32 {
        match self {
            FanOut::Once => 1,
            FanOut::PerRecord => records,
            FanOut::PerImage => records * images_per_record.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub caller: String,
    pub callee: String,
    pub mode: EdgeMode,
    #[serde(default)]
    pub fan_out: FanOut,
}

impl EdgeSpec {
    pub fn sync(caller: &str, callee: &str) -> Self {
        EdgeSpec {
            caller: caller.into(),
            callee: callee.into(),
            mode: EdgeMode::Sync,
            fan_out: FanOut::Once,
        }
    }

    pub fn async_(caller: &str, callee: &str, fan_out: FanOut) -> Self {
        EdgeSpec {
            caller: caller.into(),
            callee: callee.into(),
            mode: EdgeMode::Async,
            fan_out,
        }
    }
}

/// A function DAG with one entry point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionSpec {
    pub functions: BTreeMap<String, FunctionSpec>,
    pub edges: Vec<EdgeSpec>,
    pub entry: String,
}

impl CompositionSpec {
    pub fn new(entry: &str, functions: impl IntoIterator<Item = FunctionSpec>, edges: Vec<EdgeSpec>) -> Self {
        CompositionSpec {
            functions: functions.into_iter().map(|f| (f.name.clone(), f)).collect(),
            edges,
            entry: entry.into(),
        }
    }

    pub fn outgoing<'a>(&'a self, caller: &'a str) -> impl Iterator<Item = &'a EdgeSpec> + 'a {
        self.edges.iter().filter(move |e| e.caller == caller)
    }

    /// Number of invocations one request triggers for the given payload.
    pub fn invocations_per_request(&self, records: u32, images_per_record: u32) -> u64 {
        fn count(spec: &CompositionSpec, f: &str, r: u32, i: u32) -> u64 {
            1 + spec
                .outgoing(f)
                .map(|e| e.fan_out.count(r, i) as u64 * count(spec, &e.callee, r, i))
                .sum::<u64>()
        }
        count(self, &self.entry, records, images_per_record)
    }

    pub fn validate(&self) -> Result<(), PlatformError> {
        if !self.functions.contains_key(&self.entry) {
            return Err(PlatformError::UnknownEntry(self.entry.clone()));
        }
        for (name, f) in &self.functions {
            if &f.name != name {
                return Err(PlatformError::InvalidFunction(format!("function keyed `{name}` is named `{}`", f.name)));
            }
            if f.memory_mb == 0 {
                return Err(PlatformError::InvalidFunction(format!("`{name}` has memory_mb = 0")));
            }
            if f.timeout_ms == 0 {
                return Err(PlatformError::InvalidFunction(format!("`{name}` has timeout_ms = 0")));
            }
        }
        for e in &self.edges {
            for end in [&e.caller, &e.callee] {
                if !self.functions.contains_key(end) {
                    return Err(PlatformError::UnknownEdgeEndpoint {
                        edge: format!("{} -> {}", e.caller, e.callee),
                        missing: end.clone(),
                    });
                }
            }
        }
        if let Some(cycle) = self.find_cycle() {
            return Err(PlatformError::Cycle(cycle.join(" -> ")));
        }
        Ok(())
    }

    fn find_cycle(&self) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        fn visit<'a>(
            spec: &'a CompositionSpec,
            node: &'a str,
            marks: &mut BTreeMap<&'a str, Mark>,
            path: &mut Vec<&'a str>,
        ) -> Option<Vec<String>> {
            match marks.get(node) {
                Some(Mark::Done) => return None,
                Some(Mark::Open) => {
                    let start = path.iter().position(|n| *n == node).unwrap_or(0);
                    let mut cycle: Vec<String> = path[start..].iter().map(|s| s.to_string()).collect();
                    cycle.push(node.to_string());
                    return Some(cycle);
                }
                None => {}
            }
            marks.insert(node, Mark::Open);
            path.push(node);
            for e in spec.outgoing(node) {
                if let Some(c) = visit(spec, &e.callee, marks, path) {
                    return Some(c);
                }
            }
            path.pop();
            marks.insert(node, Mark::Done);
            None
        }
        let mut marks = BTreeMap::new();
        for name in self.functions.keys() {
            let mut path = Vec::new();
            if let Some(c) = visit(self, name, &mut marks, &mut path) {
                return Some(c);
            }
        }
        None
    }

    /// Functions reachable from the entry.
    pub fn reachable(&self) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.entry.clone()];
        while let Some(f) = stack.pop() {
            if seen.insert(f.clone()) {
                stack.extend(self.outgoing(&f).map(|e| e.callee.clone()));
            }
        }
        seen
    }
}

/// Function-level defaults in a composition file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FunctionDefaults {
    pub base_exec_ms: u64,
    pub memory_mb: u32,
    pub timeout_ms: u64,
    pub instrumented: bool,
}

impl Default for FunctionDefaults {
    fn default() -> Self {
        FunctionDefaults {
            base_exec_ms: 100,
            memory_mb: DEFAULT_MEMORY_MB,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            instrumented: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionEntry {
    pub name: String,
    #[serde(default)]
    pub base_exec_ms: Option<u64>,
    #[serde(default)]
    pub memory_mb: Option<u32>,
    #[serde(default)]
    pub timeout_ms: Option<u64>,
    #[serde(default)]
    pub external_calls: Vec<String>,
    #[serde(default)]
    pub instrumented: Option<bool>,
}

/// Declarative composition as written in a config file.
///
/// Keys: `functions`, `edges`, `entry`, `profile`, `defaults`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionFile {
    pub functions: Vec<FunctionEntry>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    pub entry: String,
    #[serde(default)]
    pub profile: Option<super::ProfileName>,
    #[serde(default)]
    pub defaults: FunctionDefaults,
}

impl CompositionFile {
    pub fn into_spec(self) -> Result<CompositionSpec, PlatformError> {
        let d = &self.defaults;
        let mut functions = BTreeMap::new();
        for f in self.functions {
            let spec = FunctionSpec {
                name: f.name.clone(),
                base_exec_ms: f.base_exec_ms.unwrap_or(d.base_exec_ms),
                memory_mb: f.memory_mb.unwrap_or(d.memory_mb),
                timeout_ms: f.timeout_ms.unwrap_or(d.timeout_ms),
                external_calls: f.external_calls,
                instrumented: f.instrumented.unwrap_or(d.instrumented),
            };
            if functions.insert(f.name.clone(), spec).is_some() {
                return Err(PlatformError::InvalidFunction(format!("duplicate function `{}`", f.name)));
            }
        }
        let spec = CompositionSpec {
            functions,
            edges: self.edges,
            entry: self.entry,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> CompositionSpec {
        CompositionSpec::new(
            "a",
            [FunctionSpec::new("a", 10), FunctionSpec::new("b", 10), FunctionSpec::new("c", 10)],
            vec![EdgeSpec::sync("a", "b"), EdgeSpec::async_("b", "c", FanOut::PerRecord)],
        )
    }

    #[test]
    fn valid_chain() {
        let spec = chain();
        spec.validate().unwrap();
        assert_eq!(spec.invocations_per_request(4, 1), 6);
    }

    #[test]
    fn missing_edge_target_named() {
        let mut spec = chain();
        spec.edges.push(EdgeSpec::sync("c", "ghost"));
        let err = spec.validate().unwrap_err();
        assert!(err.to_string().contains("c -> ghost"), "{err}");
    }

    #[test]
    fn cycle_reported_with_path() {
        let mut spec = chain();
        spec.edges.push(EdgeSpec::sync("c", "a"));
        match spec.validate() {
            Err(PlatformError::Cycle(path)) => assert_eq!(path, "a -> b -> c -> a"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_entry() {
        let mut spec = chain();
        spec.entry = "zzz".into();
        assert!(matches!(spec.validate(), Err(PlatformError::UnknownEntry(_))));
    }

    #[test]
    fn file_defaults_apply() {
        let text = r#"
            entry = "a"
            [defaults]
            timeout_ms = 1000
            [[functions]]
            name = "a"
            [[functions]]
            name = "b"
            base_exec_ms = 7
            external_calls = ["cdn"]
            [[edges]]
            caller = "a"
            callee = "b"
            mode = "async"
            fan_out = "per_record"
        "#;
        let file: CompositionFile = toml::from_str(text).unwrap();
        let spec = file.into_spec().unwrap();
        assert_eq!(spec.functions["a"].timeout_ms, 1000);
        assert_eq!(spec.functions["a"].memory_mb, 128);
        assert_eq!(spec.functions["b"].base_exec_ms, 7);
        assert_eq!(spec.edges[0].fan_out, FanOut::PerRecord);
    }
}
