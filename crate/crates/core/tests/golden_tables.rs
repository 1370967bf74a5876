//! Observability verdicts of the four fault scenarios, frozen as reference
//! values.

use faas_observe::classify::VerdictMatrix;
use faas_observe::harness::{golden_suite, ALL_MODES};
use faas_observe::model::{Channel, Property, Scenario, Tri};
use faas_observe::platform::ProfileName;
use faas_observe::trace::TracingMode;

const SEED: u64 = 42;

fn matrix() -> VerdictMatrix {
    golden_suite(&ProfileName::ALL, &ALL_MODES, SEED).unwrap().matrix
}

fn tri(s: &str) -> Tri {
    match s {
        "true" => Tri::True,
        "false" => Tri::False,
        "-" => Tri::NotApplicable,
        other => panic!("bad tri {other}"),
    }
}

// (profile, scenario, col1, col2, consistent, unambiguous)
type Row = (ProfileName, Scenario, &'static str, &'static str, bool, &'static str);

const RESPONSE: [Row; 8] = [
    (ProfileName::AwsLike, Scenario::F1, "success", "error", false, "true"),
    (ProfileName::AwsLike, Scenario::F2, "success", "error (TO)", false, "false"),
    (ProfileName::AwsLike, Scenario::F3, "success", "error (TO)", false, "false"),
    (ProfileName::AwsLike, Scenario::F4, "success", "success", false, "-"),
    (ProfileName::OpenwhiskLike, Scenario::F1, "error", "error", true, "true"),
    (ProfileName::OpenwhiskLike, Scenario::F2, "error", "error (TO)", true, "false"),
    (ProfileName::OpenwhiskLike, Scenario::F3, "error", "error (TO)", true, "false"),
    (ProfileName::OpenwhiskLike, Scenario::F4, "success", "success", false, "-"),
];

const LOG: [Row; 8] = [
    (ProfileName::AwsLike, Scenario::F1, "error", "n.a.", true, "true"),
    (ProfileName::AwsLike, Scenario::F2, "error (TO)", "n.a.", true, "false"),
    (ProfileName::AwsLike, Scenario::F3, "error (TO)", "success", false, "false"),
    (ProfileName::AwsLike, Scenario::F4, "success", "error", false, "true"),
    (ProfileName::OpenwhiskLike, Scenario::F1, "error", "n.a.", true, "true"),
    (ProfileName::OpenwhiskLike, Scenario::F2, "error (TO)", "n.a.", true, "false"),
    (ProfileName::OpenwhiskLike, Scenario::F3, "error (TO)", "success", false, "false"),
    (ProfileName::OpenwhiskLike, Scenario::F4, "success", "error", false, "true"),
];

fn check_rows(m: &VerdictMatrix, channel: Channel, keys: [&str; 2], rows: &[Row]) {
    for &(profile, scenario, a, b, consistent, unambiguous) in rows {
        let cell = m.get(scenario, profile, TracingMode::None, channel).unwrap();
        let ctx = format!("{channel:?} {profile:?} {scenario:?}");
        assert_eq!(cell.evidence.get(keys[0]).map(String::as_str), Some(a), "{ctx}");
        assert_eq!(cell.evidence.get(keys[1]).map(String::as_str), Some(b), "{ctx}");
        assert_eq!(cell.consistent, consistent, "{ctx} consistent");
        assert_eq!(cell.unambiguous, tri(unambiguous), "{ctx} unambiguous");
    }
}

#[test]
fn response_table_matches() {
    check_rows(&matrix(), Channel::Response, ["resp_code", "resp_body"], &RESPONSE);
}

#[test]
fn log_table_matches() {
    check_rows(&matrix(), Channel::Log, ["upstream", "downstream"], &LOG);
}

// (visible, unambiguous, consistent) per fault; "(true)" marks a partial value.
const XRAY: [[&str; 3]; 4] = [
    ["true", "true", "true"],
    ["true", "true", "true"],
    ["true", "true", "true"],
    ["true", "true", "true"],
];
const DEVELOPER: [[&str; 3]; 4] = [
    ["true", "true", "true"],
    ["true", "true", "(true)"],
    ["true", "false", "false"],
    ["(true)", "(true)", "true"],
];
const PLATFORM: [[&str; 3]; 4] = XRAY;

fn check_tracing_column(m: &VerdictMatrix, profile: ProfileName, mode: TracingMode, expected: &[[&str; 3]; 4]) {
    for (scenario, row) in Scenario::ALL.into_iter().zip(expected) {
        let cell = m.get(scenario, profile, mode, Channel::Trace).unwrap();
        let label = |v: &str, partial: bool| if partial { format!("({v})") } else { v.to_string() };
        let fields = |p: Property| cell.partial_fields.contains(&p);
        let got = [
            label(if cell.visible { "true" } else { "false" }, fields(Property::Visible)),
            label(cell.unambiguous.label(), fields(Property::Unambiguous)),
            label(if cell.consistent { "true" } else { "false" }, fields(Property::Consistent)),
        ];
        assert_eq!(got, row.map(String::from), "{mode:?} {scenario:?}");
    }
}

#[test]
fn tracing_table_matches() {
    let m = matrix();
    check_tracing_column(&m, ProfileName::AwsLike, TracingMode::PlatformSupportedAuto, &XRAY);
    check_tracing_column(&m, ProfileName::OpenwhiskLike, TracingMode::DeveloperDriven, &DEVELOPER);
    check_tracing_column(&m, ProfileName::OpenwhiskLike, TracingMode::PlatformSupported, &PLATFORM);
}

#[test]
fn untraced_trace_channel_is_invisible() {
    let m = matrix();
    for profile in ProfileName::ALL {
        for scenario in Scenario::ALL {
            let cell = m.get(scenario, profile, TracingMode::None, Channel::Trace).unwrap();
            assert!(!cell.visible);
            assert_eq!(cell.unambiguous, Tri::NotApplicable);
        }
    }
}

#[test]
fn verdicts_do_not_depend_on_seed() {
    let a = golden_suite(&ProfileName::ALL, &ALL_MODES, 1).unwrap().matrix;
    let b = golden_suite(&ProfileName::ALL, &ALL_MODES, 9_999).unwrap().matrix;
    assert_eq!(a.cells.len(), b.cells.len());
    for (x, y) in a.cells.iter().zip(&b.cells) {
        assert_eq!((x.visible, x.unambiguous, x.consistent, &x.partial_fields), (y.visible, y.unambiguous, y.consistent, &y.partial_fields));
    }
}
