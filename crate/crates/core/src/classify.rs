//! Visibility, ambiguity and consistency verdicts, and the observability
//! tables built from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::evidence::{EvidenceSet, RESPONSE_BODY_SOURCE, RESPONSE_CODE_SOURCE};
use crate::faults::GroundTruth;
use crate::model::{
    signature_of, Channel, Content, EvidenceFlag, EvidenceRecord, EvidenceSignature, ObservabilityVerdict, Position, Property, Scenario, Tri,
};
use crate::platform::ProfileName;
use crate::trace::TracingMode;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClassifyError {
    #[error("request {0} has no injected fault; visibility is undefined on a clean run")]
    CleanRun(String),
    #[error("no catalog entries for profile {profile}, mode {mode}, channel {channel}")]
    MissingCatalog { profile: &'static str, mode: &'static str, channel: &'static str },
    #[error("incomplete verdict matrix, missing cells: {}", .0.join(", "))]
    IncompleteMatrix(Vec<String>),
}

fn is_observation(r: &EvidenceRecord) -> bool {
    !r.has_flag(EvidenceFlag::Structure) && !r.has_flag(EvidenceFlag::Masking)
}

fn fault_records(set: &EvidenceSet, channel: Channel) -> impl Iterator<Item = &EvidenceRecord> {
    set.channel(channel).iter().filter(|r| r.content.is_fault() && is_observation(r))
}

/// Does the channel show the injected fault at all?
pub fn classify_visibility(set: &EvidenceSet, channel: Channel, truth: &GroundTruth) -> Result<bool, ClassifyError> {
    if truth.injected.is_none() {
        return Err(ClassifyError::CleanRun(set.request_id.clone()));
    }
    Ok(fault_records(set, channel).next().is_some())
}

/// Fault signatures of each scenario run in isolation, per configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioEvidenceCatalog {
    entries: BTreeMap<(ProfileName, TracingMode, Channel), BTreeMap<Scenario, EvidenceSignature>>,
}

impl ScenarioEvidenceCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, scenario: Scenario, profile: ProfileName, mode: TracingMode, signature: EvidenceSignature) {
        self.entries
            .entry((profile, mode, signature.channel))
            .or_default()
            .insert(scenario, signature);
    }

    /// Adds the signature of every channel of `set`.
    pub fn insert_set(&mut self, scenario: Scenario, profile: ProfileName, mode: TracingMode, set: &EvidenceSet) {
        for channel in Channel::ALL {
            self.insert(scenario, profile, mode, signature_of(set.channel(channel), channel));
        }
    }

    pub fn get(&self, scenario: Scenario, profile: ProfileName, mode: TracingMode, channel: Channel) -> Option<&EvidenceSignature> {
        self.entries.get(&(profile, mode, channel))?.get(&scenario)
    }

    pub fn scenarios(&self, profile: ProfileName, mode: TracingMode, channel: Channel) -> Option<&BTreeMap<Scenario, EvidenceSignature>> {
        self.entries.get(&(profile, mode, channel))
    }

    /// Flat listing for reports.
    pub fn membership(&self) -> Vec<CatalogEntry> {
        self.entries
            .iter()
            .flat_map(|(&(profile, mode, channel), by_scenario)| {
                by_scenario.iter().map(move |(&scenario, signature)| CatalogEntry {
                    scenario,
                    profile,
                    tracing_mode: mode,
                    channel,
                    signature: signature.clone(),
                })
            })
            .collect()
    }

    pub fn configurations(&self) -> impl Iterator<Item = (ProfileName, TracingMode, Channel)> + '_ {
        self.entries.keys().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CatalogEntry {
    pub scenario: Scenario,
    pub profile: ProfileName,
    pub tracing_mode: TracingMode,
    pub channel: Channel,
    pub signature: EvidenceSignature,
}

/// Scenarios of the catalog whose isolated evidence contains everything in
/// `signature`.
pub fn explaining_scenarios(
    signature: &EvidenceSignature,
    catalog: &ScenarioEvidenceCatalog,
    profile: ProfileName,
    mode: TracingMode,
) -> Result<Vec<Scenario>, ClassifyError> {
    let known = catalog
        .scenarios(profile, mode, signature.channel)
        .ok_or(ClassifyError::MissingCatalog {
            profile: profile.as_str(),
            mode: mode.as_str(),
            channel: signature.channel.as_str(),
        })?;
    Ok(known
        .iter()
        .filter(|(_, s)| signature.is_explained_by(s))
        .map(|(scenario, _)| *scenario)
        .collect())
}

fn unambiguous_signature(
    signature: &EvidenceSignature,
    catalog: &ScenarioEvidenceCatalog,
    profile: ProfileName,
    mode: TracingMode,
) -> Result<Tri, ClassifyError> {
    if signature.no_evidence {
        return Ok(Tri::NotApplicable);
    }
    Ok(Tri::from_bool(explaining_scenarios(signature, catalog, profile, mode)?.len() < 2))
}

/// False when at least two catalogued scenarios could have produced the
/// evidence; not applicable when nothing is visible.
pub fn classify_ambiguity(
    set: &EvidenceSet,
    channel: Channel,
    catalog: &ScenarioEvidenceCatalog,
    profile: ProfileName,
    mode: TracingMode,
) -> Result<Tri, ClassifyError> {
    unambiguous_signature(&signature_of(set.channel(channel), channel), catalog, profile, mode)
}

/// Channel-specific consistency and whether it depends on the in-function
/// reporter's deadline flush.
pub fn classify_consistency(set: &EvidenceSet, channel: Channel, truth: &GroundTruth) -> (bool, bool) {
    let records = set.channel(channel);
    match channel {
        Channel::Response => {
            let find = |source| records.iter().find(|r| r.source == source).map(|r| r.content);
            let (Some(code), Some(body)) = (find(RESPONSE_CODE_SOURCE), find(RESPONSE_BODY_SOURCE)) else {
                return (false, false);
            };
            let agree = code.is_fault() == body.is_fault();
            let reflects = truth.injected.is_none() || body.is_fault();
            (agree && reflects, false)
        }
        Channel::Log => {
            let fault = records.iter().any(|r| r.content.is_fault());
            let masked = records.iter().any(|r| r.content == Content::Success);
            (fault && !masked, false)
        }
        Channel::Trace => {
            let Some(target) = truth.injected.as_ref().map(|i| i.target_function.as_str()) else {
                return (!records.iter().any(|r| r.content.is_fault()), false);
            };
            let at_target: Vec<&EvidenceRecord> = fault_records(set, channel).filter(|r| r.source_name() == target).collect();
            let masked = records.iter().any(|r| r.has_flag(EvidenceFlag::Masking));
            let consistent = !at_target.is_empty() && !masked;
            let partial = consistent && at_target.iter().all(|r| r.has_flag(EvidenceFlag::DeadlineFlush));
            (consistent, partial)
        }
    }
}

/// Full verdict for one channel of one request.
pub fn classify(
    set: &EvidenceSet,
    channel: Channel,
    truth: &GroundTruth,
    catalog: &ScenarioEvidenceCatalog,
    profile: ProfileName,
    mode: TracingMode,
) -> Result<ObservabilityVerdict, ClassifyError> {
    let visible = classify_visibility(set, channel, truth)?;
    let unambiguous = classify_ambiguity(set, channel, catalog, profile, mode)?;
    let (consistent, consistent_partial) = classify_consistency(set, channel, truth);
    let mut partial = Vec::new();
    if channel == Channel::Trace {
        // Evidence that only reached the trace through context the developer
        // forwarded by hand.
        let faults: Vec<&EvidenceRecord> = fault_records(set, channel).collect();
        if visible && faults.iter().all(|r| r.has_flag(EvidenceFlag::AsyncLinked)) {
            partial.push(Property::Visible);
        }
        if unambiguous == Tri::True {
            let covered: Vec<EvidenceRecord> = set
                .traces
                .iter()
                .filter(|r| !r.has_flag(EvidenceFlag::AsyncLinked))
                .cloned()
                .collect();
            if unambiguous_signature(&signature_of(&covered, channel), catalog, profile, mode)? != Tri::True {
                partial.push(Property::Unambiguous);
            }
        }
        if consistent_partial {
            partial.push(Property::Consistent);
        }
    }
    Ok(ObservabilityVerdict::new(visible, unambiguous, consistent, partial))
}

/// One cell of the verdict matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCell {
    pub scenario: Scenario,
    pub profile: ProfileName,
    pub tracing_mode: TracingMode,
    pub channel: Channel,
    pub visible: bool,
    pub unambiguous: Tri,
    pub consistent: bool,
    pub partial: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub partial_fields: Vec<Property>,
    /// Table columns describing the raw evidence (code/body or
    /// upstream/downstream).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub evidence: BTreeMap<String, String>,
}

impl VerdictCell {
    pub fn new(scenario: Scenario, profile: ProfileName, tracing_mode: TracingMode, channel: Channel, verdict: &ObservabilityVerdict, set: &EvidenceSet) -> Self {
        VerdictCell {
            scenario,
            profile,
            tracing_mode,
            channel,
            visible: verdict.visible,
            unambiguous: verdict.unambiguous,
            consistent: verdict.consistent,
            partial: verdict.partial,
            partial_fields: verdict.partial_fields.clone(),
            evidence: evidence_columns(set, channel),
        }
    }

    pub fn is_partial(&self, property: Property) -> bool {
        self.partial_fields.contains(&property)
    }
}

fn evidence_columns(set: &EvidenceSet, channel: Channel) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    match channel {
        Channel::Response => {
            for (key, source) in [("resp_code", RESPONSE_CODE_SOURCE), ("resp_body", RESPONSE_BODY_SOURCE)] {
                let content = set.response.iter().find(|r| r.source == source).map_or(Content::Absent, |r| r.content);
                out.insert(key.to_string(), content.label().to_string());
            }
        }
        Channel::Log => {
            for (key, position) in [("upstream", Position::Upstream), ("downstream", Position::Downstream)] {
                let group: Vec<Content> = set.logs.iter().filter(|r| r.position == position).map(|r| r.content).collect();
                let content = if group.is_empty() {
                    Content::Absent
                } else if group.contains(&Content::ErrorTimeout) {
                    Content::ErrorTimeout
                } else if group.contains(&Content::Error) {
                    Content::Error
                } else {
                    Content::Success
                };
                out.insert(key.to_string(), content.label().to_string());
            }
        }
        Channel::Trace => {}
    }
    out
}

/// All cells computed for a set of golden runs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictMatrix {
    pub cells: Vec<VerdictCell>,
}

impl VerdictMatrix {
    pub fn get(&self, scenario: Scenario, profile: ProfileName, mode: TracingMode, channel: Channel) -> Option<&VerdictCell> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.profile == profile && c.tracing_mode == mode && c.channel == channel)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.cells).expect("matrix serialises")
    }
}

/// A column of the tracing table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TracingColumn {
    pub title: &'static str,
    pub profile: ProfileName,
    pub mode: TracingMode,
}

pub const TRACING_COLUMNS: [TracingColumn; 3] = [
    TracingColumn {
        title: "X-Ray",
        profile: ProfileName::AwsLike,
        mode: TracingMode::PlatformSupportedAuto,
    },
    TracingColumn {
        title: "Developer-driven",
        profile: ProfileName::OpenwhiskLike,
        mode: TracingMode::DeveloperDriven,
    },
    TracingColumn {
        title: "Platform-supported",
        profile: ProfileName::OpenwhiskLike,
        mode: TracingMode::PlatformSupported,
    },
];

/// Which parts of the tables to render.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSelection {
    pub profiles: Vec<ProfileName>,
    /// Tracing-table columns to include, by mode.
    pub modes: Vec<TracingMode>,
}

impl Default for TableSelection {
    fn default() -> Self {
        TableSelection {
            profiles: ProfileName::ALL.to_vec(),
            modes: TRACING_COLUMNS.iter().map(|c| c.mode).collect(),
        }
    }
}

impl TableSelection {
    fn columns(&self) -> Vec<TracingColumn> {
        TRACING_COLUMNS
            .iter()
            .filter(|c| self.profiles.contains(&c.profile) && self.modes.contains(&c.mode))
            .copied()
            .collect()
    }

    fn required(&self) -> Vec<(Scenario, ProfileName, TracingMode, Channel)> {
        let mut out = Vec::new();
        for scenario in Scenario::ALL {
            for &profile in &self.profiles {
                out.push((scenario, profile, TracingMode::None, Channel::Response));
                out.push((scenario, profile, TracingMode::None, Channel::Log));
            }
            for c in self.columns() {
                out.push((scenario, c.profile, c.mode, Channel::Trace));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TableFormat {
    #[default]
    Markdown,
    Json,
}

/// A rendered table value with its annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableValue {
    pub value: String,
    pub partial: bool,
    pub improved: bool,
}

impl TableValue {
    fn plain(value: &str) -> Self {
        TableValue {
            value: value.to_string(),
            partial: false,
            improved: false,
        }
    }

    fn render(&self) -> String {
        let mut s = if self.partial {
            format!("partial-{}", self.value)
        } else {
            self.value.clone()
        };
        if self.improved {
            s.push_str(" (improved)");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<TableValue>>,
}

impl Table {
    fn markdown(&self, out: &mut String) {
        let _ = writeln!(out, "### {}\n", self.title);
        let _ = writeln!(out, "| {} |", self.header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(self.header.len()));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(TableValue::render).collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
        out.push('\n');
    }
}

fn tri_true(t: Tri) -> bool {
    t == Tri::True
}

/// Builds the response, log and tracing tables.
pub fn build_tables(matrix: &VerdictMatrix, selection: &TableSelection) -> Result<Vec<Table>, ClassifyError> {
    let missing: Vec<String> = selection
        .required()
        .into_iter()
        .filter(|&(s, p, m, c)| matrix.get(s, p, m, c).is_none())
        .map(|(s, p, m, c)| format!("{}/{}/{}/{}", s.as_str(), p.as_str(), m.as_str(), c.as_str()))
        .collect();
    if !missing.is_empty() {
        return Err(ClassifyError::IncompleteMatrix(missing));
    }
    let cell = |s, p, m, c| matrix.get(s, p, m, c).expect("checked above");
    let mut tables = Vec::new();

    if !selection.profiles.is_empty() {
        let mut response = Table {
            title: "Response-observable evidence".into(),
            header: ["platform", "fault", "resp-code", "resp-body", "consistent", "unambiguous"].map(String::from).to_vec(),
            rows: Vec::new(),
        };
        let mut log = Table {
            title: "Log-observable evidence".into(),
            header: ["platform", "fault", "upstream", "downstream", "consistent", "unambiguous"].map(String::from).to_vec(),
            rows: Vec::new(),
        };
        for &profile in &selection.profiles {
            for scenario in Scenario::ALL {
                let r = cell(scenario, profile, TracingMode::None, Channel::Response);
                response.rows.push(vec![
                    TableValue::plain(profile.as_str()),
                    TableValue::plain(scenario.as_str()),
                    TableValue::plain(&r.evidence["resp_code"]),
                    TableValue::plain(&r.evidence["resp_body"]),
                    TableValue::plain(&r.consistent.to_string()),
                    TableValue::plain(r.unambiguous.label()),
                ]);
                let l = cell(scenario, profile, TracingMode::None, Channel::Log);
                let mut consistent = TableValue::plain(&l.consistent.to_string());
                consistent.improved = l.consistent && !r.consistent;
                let mut unambiguous = TableValue::plain(l.unambiguous.label());
                unambiguous.improved = tri_true(l.unambiguous) && !tri_true(r.unambiguous);
                log.rows.push(vec![
                    TableValue::plain(profile.as_str()),
                    TableValue::plain(scenario.as_str()),
                    TableValue::plain(&l.evidence["upstream"]),
                    TableValue::plain(&l.evidence["downstream"]),
                    consistent,
                    unambiguous,
                ]);
            }
        }
        tables.push(response);
        tables.push(log);
    }

    let columns = selection.columns();
    if !columns.is_empty() {
        let mut header = vec!["fault".to_string()];
        for c in &columns {
            for p in ["visible", "unambiguous", "consistent"] {
                header.push(format!("{} {p}", c.title));
            }
        }
        let mut tracing = Table {
            title: "Trace-observable evidence".into(),
            header,
            rows: Vec::new(),
        };
        for scenario in Scenario::ALL {
            let mut row = vec![TableValue::plain(scenario.as_str())];
            for c in &columns {
                let t = cell(scenario, c.profile, c.mode, Channel::Trace);
                let log = cell(scenario, c.profile, TracingMode::None, Channel::Log);
                let values = [
                    (Property::Visible, t.visible.to_string(), t.visible, log.visible),
                    (Property::Unambiguous, t.unambiguous.label().to_string(), tri_true(t.unambiguous), tri_true(log.unambiguous)),
                    (Property::Consistent, t.consistent.to_string(), t.consistent, log.consistent),
                ];
                for (property, value, now_true, before_true) in values {
                    row.push(TableValue {
                        value,
                        partial: t.is_partial(property),
                        improved: now_true && !before_true,
                    });
                }
            }
            tracing.rows.push(row);
        }
        tables.push(tracing);
    }
    Ok(tables)
}

/// Renders the tables as markdown or JSON.
pub fn render_tables(matrix: &VerdictMatrix, selection: &TableSelection, format: TableFormat) -> Result<String, ClassifyError> {
    let tables = build_tables(matrix, selection)?;
    Ok(match format {
        TableFormat::Json => serde_json::to_string_pretty(&tables).expect("tables serialise"),
        TableFormat::Markdown => {
            let mut out = String::new();
            for t in &tables {
                t.markdown(&mut out);
            }
            out
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::InjectedFault;
    use crate::model::{Mechanism, VirtualTime};

    fn rec(channel: Channel, source: &str, position: Position, content: Content, msg: &str) -> EvidenceRecord {
        EvidenceRecord {
            channel,
            source: source.into(),
            position,
            content,
            message: (!msg.is_empty()).then(|| msg.to_string()),
            request_id: "r".into(),
            time: VirtualTime(1),
            flags: vec![],
        }
    }

    fn set(response: Vec<EvidenceRecord>, logs: Vec<EvidenceRecord>) -> EvidenceSet {
        EvidenceSet {
            request_id: "r".into(),
            response,
            logs,
            traces: vec![],
        }
    }

    fn truth(target: &str) -> GroundTruth {
        GroundTruth {
            request_id: "r".into(),
            injected: Some(InjectedFault {
                scenario: Some(Scenario::F1),
                mechanism: Mechanism::UncaughtException,
                target_function: target.into(),
                injection_time: Some(VirtualTime(0)),
            }),
        }
    }

    fn response(code: Content, body: Content, msg: &str) -> Vec<EvidenceRecord> {
        vec![
            rec(Channel::Response, RESPONSE_CODE_SOURCE, Position::Client, code, ""),
            rec(Channel::Response, RESPONSE_BODY_SOURCE, Position::Client, body, msg),
        ]
    }

    #[test]
    fn clean_run_visibility_is_an_error() {
        let s = set(response(Content::Success, Content::Success, ""), vec![]);
        let clean = GroundTruth {
            request_id: "r".into(),
            injected: None,
        };
        assert!(matches!(classify_visibility(&s, Channel::Response, &clean), Err(ClassifyError::CleanRun(_))));
    }

    #[test]
    fn response_consistency_rules() {
        let t = truth("f");
        let mismatch = set(response(Content::Success, Content::Error, "UncaughtException: x"), vec![]);
        assert_eq!(classify_consistency(&mismatch, Channel::Response, &t), (false, false));
        let agree = set(response(Content::Error, Content::Error, "UncaughtException: x"), vec![]);
        assert_eq!(classify_consistency(&agree, Channel::Response, &t), (true, false));
        let hidden = set(response(Content::Success, Content::Success, ""), vec![]);
        assert_eq!(classify_consistency(&hidden, Channel::Response, &t), (false, false));
    }

    #[test]
    fn log_consistency_rules() {
        let t = truth("down");
        let masked = set(
            vec![],
            vec![
                rec(Channel::Log, "up", Position::Upstream, Content::Success, ""),
                rec(Channel::Log, "down", Position::Downstream, Content::Error, "UncaughtException: x"),
            ],
        );
        assert!(!classify_consistency(&masked, Channel::Log, &t).0);
        let alone = set(vec![], vec![rec(Channel::Log, "up", Position::Upstream, Content::Error, "UncaughtException: x")]);
        assert!(classify_consistency(&alone, Channel::Log, &t).0);
    }

    #[test]
    fn shared_evidence_is_ambiguous() {
        let timeout = set(response(Content::Error, Content::ErrorTimeout, "Timeout: 300000"), vec![]);
        let raised = set(response(Content::Error, Content::Error, "UncaughtException: KeyError"), vec![]);
        let clean = set(response(Content::Success, Content::Success, ""), vec![]);
        let mut catalog = ScenarioEvidenceCatalog::new();
        let (p, m) = (ProfileName::OpenwhiskLike, TracingMode::None);
        catalog.insert_set(Scenario::F1, p, m, &raised);
        catalog.insert_set(Scenario::F2, p, m, &timeout);
        catalog.insert_set(Scenario::F3, p, m, &timeout);
        catalog.insert_set(Scenario::F4, p, m, &clean);
        assert_eq!(classify_ambiguity(&timeout, Channel::Response, &catalog, p, m).unwrap(), Tri::False);
        assert_eq!(classify_ambiguity(&raised, Channel::Response, &catalog, p, m).unwrap(), Tri::True);
        assert_eq!(classify_ambiguity(&clean, Channel::Response, &catalog, p, m).unwrap(), Tri::NotApplicable);
        assert!(matches!(
            classify_ambiguity(&raised, Channel::Response, &catalog, ProfileName::AwsLike, m),
            Err(ClassifyError::MissingCatalog { .. })
        ));
    }

    #[test]
    fn empty_matrix_lists_every_scenario() {
        let err = render_tables(&VerdictMatrix::default(), &TableSelection::default(), TableFormat::Markdown).unwrap_err();
        let text = err.to_string();
        for s in Scenario::ALL {
            assert!(text.contains(s.as_str()), "{text}");
        }
    }
}
