//! The bulk-import use case, golden scenario runs, experiment variants, cost
//! accounting and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::{classify, CatalogEntry, ClassifyError, ScenarioEvidenceCatalog, VerdictCell, VerdictMatrix};
use crate::evidence::{collect_logs, collect_response, collect_trace_evidence, to_jsonl, EvidenceSet};
use crate::faults::{FaultError, FaultPlan, GroundTruth};
use crate::model::{Channel, Scenario};
use crate::platform::{
    deploy_with, CompositionSpec, EdgeSpec, FanOut, FunctionSpec, InvocationRecord, PlatformError, PlatformHandle, PlatformParams,
    ProfileName, RequestPayload, RequestSummary, ResponseEnvelope, RunStats,
};
use crate::trace::{export_zipkin_v2, Collector, SamplerConfig, TracingConfig, TracingMode};

pub const IMPORT_CSV: &str = "import_csv";
pub const INSERT_PRODUCTS: &str = "insert_products";
pub const UPDATE_CATALOGUE: &str = "update_catalogue";
pub const FETCH_PRODUCT_IMAGES: &str = "fetch_product_images";
pub const RENDER_LISTING: &str = "render_listing";
pub const IMAGE_CDN: &str = "image_cdn";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("artifacts are not comparable: {0}")]
    Mismatch(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// The marketplace bulk import: a CSV import that inserts products and
/// updates the catalogue synchronously, then fans out image fetching and
/// listing rendering asynchronously per record.
pub fn build_bulk_import() -> CompositionSpec {
    CompositionSpec::new(
        IMPORT_CSV,
        [
            FunctionSpec::new(IMPORT_CSV, 120),
            FunctionSpec::new(INSERT_PRODUCTS, 250),
            FunctionSpec::new(UPDATE_CATALOGUE, 150),
            // The longest-running function of the application.
            FunctionSpec::new(FETCH_PRODUCT_IMAGES, 1_200).with_external(IMAGE_CDN),
            FunctionSpec::new(RENDER_LISTING, 300),
        ],
        vec![
            EdgeSpec::sync(IMPORT_CSV, INSERT_PRODUCTS),
            EdgeSpec::sync(INSERT_PRODUCTS, UPDATE_CATALOGUE),
            EdgeSpec::async_(INSERT_PRODUCTS, FETCH_PRODUCT_IMAGES, FanOut::PerImage),
            EdgeSpec::async_(INSERT_PRODUCTS, RENDER_LISTING, FanOut::PerRecord),
        ],
    )
}

/// Default fault target of each scenario in the bulk import.
pub fn bulk_import_target(scenario: Scenario) -> &'static str {
    match scenario {
        Scenario::F1 | Scenario::F3 => INSERT_PRODUCTS,
        Scenario::F2 => FETCH_PRODUCT_IMAGES,
        Scenario::F4 => RENDER_LISTING,
    }
}

/// Timeout of the upstream function in the isolated cold-start scenario.
pub const F3_CALLER_TIMEOUT_MS: u64 = 3_000;

/// The smallest composition that exhibits a scenario, and its fault target.
///
/// Each has at most two components, one upstream and one downstream.
pub fn scenario_composition(scenario: Scenario) -> (CompositionSpec, &'static str) {
    match scenario {
        Scenario::F1 => (CompositionSpec::new(INSERT_PRODUCTS, [FunctionSpec::new(INSERT_PRODUCTS, 250)], vec![]), INSERT_PRODUCTS),
        Scenario::F2 => (
            CompositionSpec::new(
                FETCH_PRODUCT_IMAGES,
                [FunctionSpec::new(FETCH_PRODUCT_IMAGES, 1_200).with_external(IMAGE_CDN)],
                vec![],
            ),
            FETCH_PRODUCT_IMAGES,
        ),
        Scenario::F3 => (
            CompositionSpec::new(
                IMPORT_CSV,
                [
                    FunctionSpec::new(IMPORT_CSV, 120).with_timeout(F3_CALLER_TIMEOUT_MS),
                    FunctionSpec::new(INSERT_PRODUCTS, 250),
                ],
                vec![EdgeSpec::sync(IMPORT_CSV, INSERT_PRODUCTS)],
            ),
            INSERT_PRODUCTS,
        ),
        Scenario::F4 => (
            CompositionSpec::new(
                INSERT_PRODUCTS,
                [FunctionSpec::new(INSERT_PRODUCTS, 250), FunctionSpec::new(RENDER_LISTING, 300)],
                vec![EdgeSpec::async_(INSERT_PRODUCTS, RENDER_LISTING, FanOut::Once)],
            ),
            RENDER_LISTING,
        ),
    }
}

/// Tracing setup used for golden runs: every request sampled.
pub fn full_sampling(mode: TracingMode) -> TracingConfig {
    TracingConfig {
        mode,
        sampling: SamplerConfig::probability(1.0),
        ..TracingConfig::default()
    }
}

/// Gathers the three evidence channels for one finished request.
pub fn evidence_for(handle: &PlatformHandle, request: &RequestSummary) -> EvidenceSet {
    EvidenceSet {
        request_id: request.request_id.clone(),
        response: collect_response(&request.response),
        logs: collect_logs(handle.logs(), &request.request_id, &request.entry),
        traces: collect_trace_evidence(handle.collector(), request.trace_id, &request.request_id, &request.entry),
    }
}

/// One scenario run in isolation under one configuration.
#[derive(Debug, Clone)]
pub struct GoldenRun {
    pub scenario: Scenario,
    pub profile: ProfileName,
    pub mode: TracingMode,
    pub response: ResponseEnvelope,
    pub evidence: EvidenceSet,
    pub ground_truth: GroundTruth,
    pub ledger: Vec<InvocationRecord>,
    pub collector: Collector,
}

pub fn run_golden(scenario: Scenario, profile: ProfileName, mode: TracingMode, seed: u64) -> Result<GoldenRun, HarnessError> {
    let (spec, target) = scenario_composition(scenario);
    let plan = FaultPlan::always(scenario, target, seed);
    let mut handle = deploy_with(spec, profile.profile(), full_sampling(mode), plan, PlatformParams::default())?;
    let response = handle.submit_request(RequestPayload::new(1, 1), true)?;
    let ledger = handle.run_to_quiescence()?;
    let request = handle.requests().pop().expect("one request submitted");
    Ok(GoldenRun {
        scenario,
        profile,
        mode,
        response,
        evidence: evidence_for(&handle, &request),
        ground_truth: request.ground_truth,
        ledger,
        collector: handle.collector().clone(),
    })
}

/// Golden runs for every scenario under each (profile, mode), the catalog
/// they induce and the resulting verdicts.
#[derive(Debug, Clone)]
pub struct GoldenSuite {
    pub runs: Vec<GoldenRun>,
    pub catalog: ScenarioEvidenceCatalog,
    pub matrix: VerdictMatrix,
}

impl GoldenSuite {
    pub fn run(&self, scenario: Scenario, profile: ProfileName, mode: TracingMode) -> Option<&GoldenRun> {
        self.runs
            .iter()
            .find(|r| r.scenario == scenario && r.profile == profile && r.mode == mode)
    }
}

pub const ALL_MODES: [TracingMode; 4] = [
    TracingMode::None,
    TracingMode::DeveloperDriven,
    TracingMode::PlatformSupported,
    TracingMode::PlatformSupportedAuto,
];

pub fn golden_suite(profiles: &[ProfileName], modes: &[TracingMode], seed: u64) -> Result<GoldenSuite, HarnessError> {
    let mut runs = Vec::new();
    let mut catalog = ScenarioEvidenceCatalog::new();
    for &profile in profiles {
        for &mode in modes {
            for scenario in Scenario::ALL {
                let run = run_golden(scenario, profile, mode, seed)?;
                catalog.insert_set(scenario, profile, mode, &run.evidence);
                runs.push(run);
            }
        }
    }
    let mut matrix = VerdictMatrix::default();
    for run in &runs {
        for channel in Channel::ALL {
            let verdict = classify(&run.evidence, channel, &run.ground_truth, &catalog, run.profile, run.mode)?;
            matrix
                .cells
                .push(VerdictCell::new(run.scenario, run.profile, run.mode, channel, &verdict, &run.evidence));
        }
    }
    Ok(GoldenSuite { runs, catalog, matrix })
}

/// The three application variants compared in the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    None,
    DeveloperDriven,
    PlatformSupported,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::None, Variant::DeveloperDriven, Variant::PlatformSupported];

    pub fn mode(self) -> TracingMode {
        match self {
            Variant::None => TracingMode::None,
            Variant::DeveloperDriven => TracingMode::DeveloperDriven,
            Variant::PlatformSupported => TracingMode::PlatformSupported,
        }
    }

    pub fn as_str(self) -> &'static str {
        self.mode().as_str()
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BulkImportWorkload {
    pub records: u32,
    pub images_per_record: u32,
    pub requests: u32,
}

impl Default for BulkImportWorkload {
    fn default() -> Self {
        BulkImportWorkload {
            records: 150,
            images_per_record: 1,
            requests: 100,
        }
    }
}

impl BulkImportWorkload {
    /// Invocations per request under the bulk-import composition.
    pub fn invocations_per_request(&self) -> u64 {
        3 + self.records as u64 * (1 + self.images_per_record.max(1) as u64)
    }
}

/// Provider-side cost model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    /// Memory the platform-supported tracing components occupy.
    pub platform_memory_overhead_mb: u32,
    /// Memory of one execution unit (one runtime on one CPU unit).
    pub execution_unit_mb: u32,
    pub cluster_cpu_units: u32,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            platform_memory_overhead_mb: 192,
            execution_unit_mb: 128,
            cluster_cpu_units: 96,
        }
    }
}

/// Everything one experiment variant produced.
#[derive(Debug, Clone)]
pub struct ExperimentArtifacts {
    pub variant: Variant,
    pub seed: u64,
    pub workload: BulkImportWorkload,
    pub ledger: Vec<InvocationRecord>,
    pub requests: Vec<RequestSummary>,
    pub evidence: Vec<EvidenceSet>,
    pub collector: Collector,
    pub stats: RunStats,
}

impl ExperimentArtifacts {
    pub fn ground_truth(&self) -> Vec<GroundTruth> {
        self.requests.iter().map(|r| r.ground_truth.clone()).collect()
    }

    pub fn zipkin(&self) -> Vec<u8> {
        export_zipkin_v2(&self.collector)
    }

    pub fn evidence_jsonl(&self) -> String {
        to_jsonl(&self.evidence)
    }
}

/// Everything needed to run the variants of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub seed: u64,
    pub profile: ProfileName,
    pub composition: CompositionSpec,
    pub workload: BulkImportWorkload,
    /// Tracing parameters; the mode is replaced per variant.
    pub tracing: TracingConfig,
    pub faults: FaultPlan,
    pub params: PlatformParams,
    pub costs: CostParams,
}

impl ExperimentSetup {
    pub fn bulk_import(seed: u64, workload: BulkImportWorkload) -> Self {
        ExperimentSetup {
            seed,
            profile: ProfileName::OpenwhiskLike,
            composition: build_bulk_import(),
            workload,
            tracing: full_sampling(TracingMode::None),
            faults: FaultPlan::empty(seed),
            params: PlatformParams::default(),
            costs: CostParams::default(),
        }
    }
}

pub fn run_experiment(variant: Variant, setup: &ExperimentSetup) -> Result<ExperimentArtifacts, HarnessError> {
    let tracing = TracingConfig {
        mode: variant.mode(),
        ..setup.tracing.clone()
    };
    let mut handle = deploy_with(
        setup.composition.clone(),
        setup.profile.profile(),
        tracing,
        setup.faults.clone(),
        setup.params.clone(),
    )?;
    let w = setup.workload;
    for _ in 0..w.requests {
        handle.submit_request(RequestPayload::new(w.records, w.images_per_record), false)?;
    }
    let ledger = handle.run_to_quiescence()?;
    let requests = handle.requests();
    let evidence = requests.iter().map(|r| evidence_for(&handle, r)).collect();
    Ok(ExperimentArtifacts {
        variant,
        seed: setup.seed,
        workload: w,
        ledger,
        evidence,
        collector: handle.collector().clone(),
        stats: handle.stats(),
        requests,
    })
}

/// Runs each variant on its own thread; results come back in input order.
pub fn run_variants(variants: &[Variant], setup: &ExperimentSetup) -> Result<Vec<ExperimentArtifacts>, HarnessError> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|&v| scope.spawn(move || run_experiment(v, setup)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("variant thread panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantCost {
    pub variant: Variant,
    /// Number of fetch_product_images invocations compared.
    pub samples: usize,
    pub mean_delta_ms: f64,
    pub median_delta_ms: f64,
    pub max_delta_ms: i64,
    pub execution_units: u32,
    pub memory_overhead_mb: u32,
    pub network_flushes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub function: String,
    pub variants: Vec<VariantCost>,
}

fn median(sorted: &[i64]) -> f64 {
    match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2] as f64,
        n => (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0,
    }
}

/// Client-side deltas of fetch_product_images against the baseline, paired
/// per invocation, plus the provider-side charge of the variant.
pub fn account_costs(artifacts: &ExperimentArtifacts, baseline: &ExperimentArtifacts, costs: &CostParams) -> Result<VariantCost, HarnessError> {
    if artifacts.seed != baseline.seed {
        return Err(HarnessError::Mismatch(format!("seed {} vs baseline {}", artifacts.seed, baseline.seed)));
    }
    if artifacts.workload != baseline.workload {
        return Err(HarnessError::Mismatch(format!("workload {:?} vs baseline {:?}", artifacts.workload, baseline.workload)));
    }
    let key = |r: &InvocationRecord| (r.request_index, r.fan_out_index);
    let base: BTreeMap<_, u64> = baseline
        .ledger
        .iter()
        .filter(|r| r.function == FETCH_PRODUCT_IMAGES)
        .filter_map(|r| Some((key(r), r.execution_ms()?)))
        .collect();
    let mut deltas: Vec<i64> = artifacts
        .ledger
        .iter()
        .filter(|r| r.function == FETCH_PRODUCT_IMAGES)
        .filter_map(|r| Some(r.execution_ms()? as i64 - *base.get(&key(r))? as i64))
        .collect();
    deltas.sort_unstable();
    let mean = if deltas.is_empty() {
        0.0
    } else {
        deltas.iter().sum::<i64>() as f64 / deltas.len() as f64
    };
    let (units, memory) = match artifacts.variant {
        Variant::PlatformSupported => (
            costs.platform_memory_overhead_mb.div_ceil(costs.execution_unit_mb.max(1)),
            costs.platform_memory_overhead_mb,
        ),
        _ => (0, 0),
    };
    Ok(VariantCost {
        variant: artifacts.variant,
        samples: deltas.len(),
        mean_delta_ms: mean,
        median_delta_ms: median(&deltas),
        max_delta_ms: deltas.last().copied().unwrap_or(0),
        execution_units: units,
        memory_overhead_mb: memory,
        network_flushes: if artifacts.variant == Variant::DeveloperDriven { artifacts.stats.flushes } else { 0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub requests: usize,
    pub invocations: usize,
    pub cold_starts: usize,
    pub failed_invocations: usize,
    pub error_responses: usize,
    pub spans: usize,
    pub traces: usize,
    pub dropped_batches: u64,
    /// Injected faults per scenario or mechanism.
    pub faults: BTreeMap<String, usize>,
}

fn summarize(a: &ExperimentArtifacts) -> VariantSummary {
    let mut faults = BTreeMap::new();
    for r in &a.requests {
        if let Some(f) = &r.ground_truth.injected {
            let label = f.scenario.map_or(f.mechanism.as_str(), |s| s.as_str());
            *faults.entry(label.to_string()).or_insert(0) += 1;
        }
    }
    VariantSummary {
        variant: a.variant,
        requests: a.requests.len(),
        invocations: a.ledger.len(),
        cold_starts: a.ledger.iter().filter(|r| r.cold).count(),
        failed_invocations: a.ledger.iter().filter(|r| r.outcome != crate::platform::Outcome::Success).count(),
        error_responses: a.requests.iter().filter(|r| r.response.body.status.is_fault()).count(),
        spans: a.collector.span_count(),
        traces: a.collector.trace_count(),
        dropped_batches: a.collector.dropped_batches(),
        faults,
    }
}

pub const COST_NOTE: &str = "Deltas come from the simulator's charging model and scale with its cost parameters; only their ordering is meaningful.";

/// The experiment report written as report.json and report.md.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub profile: ProfileName,
    pub workload: BulkImportWorkload,
    pub invocations_per_request: u64,
    pub sampling: SamplerConfig,
    pub cost_params: CostParams,
    pub variants: Vec<VariantSummary>,
    pub costs: Option<CostReport>,
    pub cost_note: &'static str,
    pub catalog: Vec<CatalogEntry>,
}

/// Builds the report; costs need the `none` variant as baseline.
pub fn build_report(setup: &ExperimentSetup, artifacts: &[ExperimentArtifacts], catalog: &ScenarioEvidenceCatalog) -> Result<ExperimentReport, HarnessError> {
    let baseline = artifacts.iter().find(|a| a.variant == Variant::None);
    let costs = match baseline {
        Some(base) => Some(CostReport {
            function: FETCH_PRODUCT_IMAGES.into(),
            variants: artifacts
                .iter()
                .map(|a| account_costs(a, base, &setup.costs))
                .collect::<Result<_, _>>()?,
        }),
        None => None,
    };
    Ok(ExperimentReport {
        seed: setup.seed,
        profile: setup.profile,
        workload: setup.workload,
        invocations_per_request: setup
            .composition
            .invocations_per_request(setup.workload.records, setup.workload.images_per_record),
        sampling: setup.tracing.sampling.clone(),
        cost_params: setup.costs,
        variants: artifacts.iter().map(summarize).collect(),
        costs,
        cost_note: COST_NOTE,
        catalog: catalog.membership(),
    })
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# Experiment report\n");
        let _ = writeln!(
            out,
            "Seed {}, profile {}, {} requests of {} records ({} image(s) each), {} invocations per request.\n",
            self.seed,
            self.profile.as_str(),
            self.workload.requests,
            self.workload.records,
            self.workload.images_per_record,
            self.invocations_per_request
        );
        let _ = writeln!(out, "## Runs\n");
        let _ = writeln!(out, "| variant | requests | invocations | cold starts | failed | error responses | spans | traces | dropped batches |");
        let _ = writeln!(out, "|---|---|---|---|---|---|---|---|---|");
        for v in &self.variants {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                v.variant.as_str(),
                v.requests,
                v.invocations,
                v.cold_starts,
                v.failed_invocations,
                v.error_responses,
                v.spans,
                v.traces,
                v.dropped_batches
            );
        }
        if let Some(costs) = &self.costs {
            let _ = writeln!(out, "\n## Execution time of {} against the baseline\n", costs.function);
            let _ = writeln!(out, "| variant | mean [ms] | median [ms] | max [ms] | execution units | memory [MB] | network flushes |");
            let _ = writeln!(out, "|---|---|---|---|---|---|---|");
            for c in &costs.variants {
                let _ = writeln!(
                    out,
                    "| {} | {:.2} | {:.1} | {} | {} | {} | {} |",
                    c.variant.as_str(),
                    c.mean_delta_ms,
                    c.median_delta_ms,
                    c.max_delta_ms,
                    c.execution_units,
                    c.memory_overhead_mb,
                    c.network_flushes
                );
            }
            let _ = writeln!(out, "\n{}", self.cost_note);
        }
        out
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), HarnessError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes report.json, report.md and per-variant trace and evidence files.
pub fn write_artifacts(dir: &Path, report: &ExperimentReport, artifacts: &[ExperimentArtifacts]) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_file(dir, "report.json", report.to_json().as_bytes())?;
    write_file(dir, "report.md", report.to_markdown().as_bytes())?;
    for a in artifacts {
        write_file(dir, &format!("traces-{}.json", a.variant.as_str()), &a.zipkin())?;
        write_file(dir, &format!("evidence-{}.jsonl", a.variant.as_str()), a.evidence_jsonl().as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bulk_import_shape() {
        let spec = build_bulk_import();
        spec.validate().unwrap();
        assert_eq!(spec.functions.len(), 5);
        assert_eq!(spec.edges.iter().filter(|e| e.mode == crate::platform::EdgeMode::Sync).count(), 2);
        assert_eq!(spec.edges.iter().filter(|e| e.mode == crate::platform::EdgeMode::Async).count(), 2);
        assert_eq!(spec.invocations_per_request(150, 1), 303);
        let longest = spec.functions.values().max_by_key(|f| f.base_exec_ms).unwrap();
        assert_eq!(longest.name, FETCH_PRODUCT_IMAGES);
    }

    #[test]
    fn workload_formula_matches_composition() {
        let spec = build_bulk_import();
        for (records, images) in [(1, 1), (150, 1), (10, 3)] {
            let w = BulkImportWorkload {
                records,
                images_per_record: images,
                requests: 1,
            };
            assert_eq!(w.invocations_per_request(), spec.invocations_per_request(records, images));
        }
    }

    #[test]
    fn scenario_compositions_are_valid() {
        for s in Scenario::ALL {
            let (spec, target) = scenario_composition(s);
            spec.validate().unwrap();
            FaultPlan::always(s, target, 1).validate_for(&spec).unwrap();
            assert!(spec.functions.len() <= 2);
        }
    }

    #[test]
    fn baseline_against_itself_is_zero() {
        let setup = ExperimentSetup::bulk_import(5, BulkImportWorkload { records: 4, images_per_record: 1, requests: 2 });
        let base = run_experiment(Variant::None, &setup).unwrap();
        let c = account_costs(&base, &base, &setup.costs).unwrap();
        assert_eq!((c.mean_delta_ms, c.median_delta_ms, c.max_delta_ms), (0.0, 0.0, 0));
        assert_eq!(c.samples, 8);
    }

    #[test]
    fn mismatched_workloads_rejected() {
        let a = run_experiment(Variant::None, &ExperimentSetup::bulk_import(5, BulkImportWorkload { records: 2, images_per_record: 1, requests: 1 })).unwrap();
        let b = run_experiment(Variant::None, &ExperimentSetup::bulk_import(5, BulkImportWorkload { records: 3, images_per_record: 1, requests: 1 })).unwrap();
        assert!(matches!(account_costs(&a, &b, &CostParams::default()), Err(HarnessError::Mismatch(_))));
        let c = run_experiment(Variant::None, &ExperimentSetup::bulk_import(6, BulkImportWorkload { records: 2, images_per_record: 1, requests: 1 })).unwrap();
        assert!(matches!(account_costs(&a, &c, &CostParams::default()), Err(HarnessError::Mismatch(_))));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[1, 2, 3]), 2.0);
        assert_eq!(median(&[1, 2, 3, 5]), 2.5);
        assert_eq!(median(&[]), 0.0);
    }
}
