//! Config-driven experiment runner: a strict JSON schema for models, boxes
//! and kernels, in-memory artifact generation so reruns are byte-identical,
//! a manifest with a content hash per artifact, and the size-ladder series
//! behind the scaling experiments.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compare::{
    block_vs_eo, factorization_report, isolated_local_gap, isolated_vs_tiled,
    random_block_family, random_nonempty_subset, sts_upper, sts_vs_mixture, sw_vs_isolated,
    tiled_lower_bound, verify_variance_facts, ComparisonReport, VarianceFactsReport,
};
use crate::coupling::{
    coupled_trials, coupling_time_report, exact_independent_contraction, extremal_pair,
    path_coupling_contraction, ContractionReport, TrialRun, COUPLING_CAP_FACTOR,
};
use crate::geometry::{LatticeCube, VertexOrdering};
use crate::kernels::{
    es_factorize, EvenOddHalfInner, HeatBathInner, InnerKernel, IsolatedSwInner, Kernel,
};
use crate::measure::enumeration_guard;
use crate::model::{BoundaryCondition, SpinModel, System};
use crate::spectral::{
    reversiblized_relaxation, spectral_gap, SpectralReport, REVERSIBILITY_PRECHECK,
};
use crate::ssm::{
    all_subset_targets, max_tv_profile, singleton_targets, ssm_fit, ssm_scan, SSMFit, SSMSample,
};
use crate::stream::{domain, Streams};
use crate::{scalar, Error, Real, Result};

/// Environment variable naming a root directory under which all run output
/// is placed, overriding the config's output path.
pub const OUTPUT_ROOT_VARIABLE: &str = "SPINLAB_OUTPUT_ROOT";

/// Schema version stamped into every manifest.
pub const MANIFEST_FORMAT: u32 = 1;

/// Model parameters; every physical constant is explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "family")]
pub enum ModelConfig {
    Ising { beta: f64, field: f64 },
    Potts { q: usize, beta: f64, fields: Vec<f64> },
    HardCore { fugacity: f64 },
    ProperColorings { q: usize },
}

impl ModelConfig {
    pub fn build(&self) -> Result<SpinModel<Real>> {
        match self {
            ModelConfig::Ising { beta, field } => Ok(SpinModel::ising(*beta, *field)),
            ModelConfig::Potts { q, beta, fields } => SpinModel::potts(*q, *beta, fields),
            ModelConfig::HardCore { fugacity } => SpinModel::hard_core(*fugacity),
            ModelConfig::ProperColorings { q } => SpinModel::proper_colorings(*q),
        }
    }
}

/// Box shape plus an optional constant boundary spin (absent means free).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CubeConfig {
    pub sides: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_spin: Option<u8>,
}

impl CubeConfig {
    pub fn build(&self, model: SpinModel<Real>) -> Result<Arc<System<Real>>> {
        let cube = LatticeCube::build(&self.sides)?;
        let system = match self.boundary_spin {
            Some(s) => System::free(model, cube.clone())
                .with_boundary(BoundaryCondition::constant(&cube, s))?,
            None => System::free(model, cube),
        };
        Ok(Arc::new(system))
    }
}

/// Sweep orders for scan kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanOrder {
    Lexicographic,
    EvenOdd,
}

impl ScanOrder {
    fn build(self, cube: &LatticeCube) -> VertexOrdering {
        match self {
            ScanOrder::Lexicographic => VertexOrdering::lexicographic(cube),
            ScanOrder::EvenOdd => VertexOrdering::even_odd(cube),
        }
    }
}

/// Inner kernels available to the generic tiled dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerConfig {
    HeatBath,
    EvenOddHalf,
    IsolatedSw,
}

impl InnerConfig {
    fn build(self) -> Arc<dyn InnerKernel<Real>> {
        match self {
            InnerConfig::HeatBath => Arc::new(HeatBathInner),
            InnerConfig::EvenOddHalf => Arc::new(EvenOddHalfInner),
            InnerConfig::IsolatedSw => Arc::new(IsolatedSwInner),
        }
    }
}

/// One dynamics, possibly wrapped or composed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum KernelConfig {
    Glauber,
    HeatBathBlock { vertices: Vec<usize> },
    BlockDynamics { blocks: Vec<Vec<usize>> },
    TiledHeatBath { l: usize },
    TiledGeneric { l: usize, inner: InnerConfig },
    Sw,
    IsolatedSw,
    TiledIsolatedSw { l: usize },
    Scan { order: ScanOrder },
    Lazy { hold: f64, base: Box<KernelConfig> },
    Reversiblization { base: Box<KernelConfig> },
    Composition { parts: Vec<KernelConfig> },
}

impl KernelConfig {
    pub fn build(&self, system: &Arc<System<Real>>) -> Result<Kernel<Real>> {
        match self {
            KernelConfig::Glauber => Ok(Kernel::glauber(system.clone())),
            KernelConfig::HeatBathBlock { vertices } => {
                Kernel::heat_bath_block(system.clone(), vertices)
            }
            KernelConfig::BlockDynamics { blocks } => {
                Kernel::block_dynamics(system.clone(), blocks)
            }
            KernelConfig::TiledHeatBath { l } => Kernel::tiled_heat_bath(system.clone(), *l),
            KernelConfig::TiledGeneric { l, inner } => {
                Kernel::tiled_generic(system.clone(), *l, inner.build())
            }
            KernelConfig::Sw => Kernel::sw(system.clone()),
            KernelConfig::IsolatedSw => Kernel::isolated_sw(system.clone()),
            KernelConfig::TiledIsolatedSw { l } => {
                Kernel::tiled_isolated_sw(system.clone(), *l)
            }
            KernelConfig::Scan { order } => {
                Kernel::scan(system.clone(), order.build(system.cube()))
            }
            KernelConfig::Lazy { hold, base } => base.build(system)?.lazy(*hold),
            KernelConfig::Reversiblization { base } => {
                Ok(base.build(system)?.reversiblization())
            }
            KernelConfig::Composition { parts } => {
                let parts: Vec<Kernel<Real>> = parts
                    .iter()
                    .map(|p| p.build(system))
                    .collect::<Result<_>>()?;
                Kernel::composition(system.clone(), parts)
            }
        }
    }

    fn label(&self) -> String {
        match self {
            KernelConfig::Glauber => "glauber".into(),
            KernelConfig::HeatBathBlock { .. } => "heat-bath-block".into(),
            KernelConfig::BlockDynamics { .. } => "block-dynamics".into(),
            KernelConfig::TiledHeatBath { l } => format!("tiled-heat-bath(l={l})"),
            KernelConfig::TiledGeneric { l, inner } => {
                format!("tiled-generic(l={l},{inner:?})")
            }
            KernelConfig::Sw => "sw".into(),
            KernelConfig::IsolatedSw => "isolated-sw".into(),
            KernelConfig::TiledIsolatedSw { l } => format!("tiled-isolated-sw(l={l})"),
            KernelConfig::Scan { order } => format!("scan({order:?})"),
            KernelConfig::Lazy { hold, base } => format!("lazy({hold},{})", base.label()),
            KernelConfig::Reversiblization { base } => {
                format!("reversiblization({})", base.label())
            }
            KernelConfig::Composition { parts } => format!("composition[{}]", parts.len()),
        }
    }
}

/// Target choice for spatial-mixing scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetsConfig {
    Singletons,
    Subsets,
}

/// What to run and its experiment-specific knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    rename_all = "kebab-case",
    rename_all_fields = "kebab-case",
    tag = "kind"
)]
pub enum ExperimentKind {
    /// Exact spectral reports for a list of kernels on the instance.
    GapReport { kernels: Vec<KernelConfig> },
    /// Every applicable named gap inequality plus the variance facts.
    InequalitySuite {
        l: usize,
        families: usize,
        sandwich_pairs: usize,
        variance_functions: usize,
    },
    /// Alternating-scan coupling times over an ascending size ladder.
    CouplingScaling {
        sizes: Vec<Vec<usize>>,
        trials: usize,
    },
    /// Exhaustive boundary-flip scan with an exponential-decay fit.
    SsmScan {
        base_spin: u8,
        targets: TargetsConfig,
        envelope_a: f64,
        envelope_b: f64,
    },
    /// Path-coupling contraction of the tiled heat-bath dynamics.
    Contraction { l: usize, trials: usize },
    /// Joint-space factorization identities of the cluster dynamics.
    FactorizationCheck { l: usize },
}

impl ExperimentKind {
    /// The kind's tag, as written in config files and manifests.
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::GapReport { .. } => "gap-report",
            ExperimentKind::InequalitySuite { .. } => "inequality-suite",
            ExperimentKind::CouplingScaling { .. } => "coupling-scaling",
            ExperimentKind::SsmScan { .. } => "ssm-scan",
            ExperimentKind::Contraction { .. } => "contraction",
            ExperimentKind::FactorizationCheck { .. } => "factorization-check",
        }
    }
}

/// A complete experiment description; the whole file is rejected on any
/// unknown key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub cube: CubeConfig,
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Output directory for artifacts and the manifest.
    pub output: String,
}

/// Parses a config from JSON, mapping schema violations (unknown keys
/// included, by name) to config errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

/// Builds everything the config references without running it, so every
/// violated guard is reported up front by its own message.
pub fn validate(config: &ExperimentConfig) -> Result<()> {
    let system = config.cube.build(config.model.build()?)?;
    match &config.experiment {
        ExperimentKind::GapReport { kernels } => {
            if kernels.is_empty() {
                return Err(Error::Config("gap-report needs at least one kernel".into()));
            }
            enumeration_guard(system.cube().len(), system.model().q())?;
            for kernel in kernels {
                kernel.build(&system)?;
            }
        }
        ExperimentKind::InequalitySuite {
            l,
            families,
            sandwich_pairs,
            variance_functions,
        } => {
            if *families == 0 || *sandwich_pairs == 0 || *variance_functions == 0 {
                return Err(Error::Config(
                    "inequality-suite needs positive families, sandwich-pairs and \
                     variance-functions"
                        .into(),
                ));
            }
            enumeration_guard(system.cube().len(), system.model().q())?;
            Kernel::tiled_heat_bath(system.clone(), *l)?;
        }
        ExperimentKind::CouplingScaling { sizes, trials } => {
            validate_ladder(&config.model, sizes, *trials)?;
        }
        ExperimentKind::SsmScan {
            base_spin,
            envelope_a,
            envelope_b,
            targets,
        } => {
            if *envelope_a <= 0.0 || *envelope_b <= 0.0 {
                return Err(Error::Config("the envelope needs a > 0 and b > 0".into()));
            }
            if usize::from(*base_spin) >= system.model().q() {
                return Err(Error::Config(format!(
                    "base spin {base_spin} is outside the model's {} spins",
                    system.model().q()
                )));
            }
            if matches!(targets, TargetsConfig::Subsets) {
                all_subset_targets(system.cube())?;
            }
            enumeration_guard(system.cube().len(), system.model().q())?;
        }
        ExperimentKind::Contraction { l, trials } => {
            if *trials == 0 {
                return Err(Error::Config("contraction needs at least one trial".into()));
            }
            Kernel::tiled_heat_bath(system.clone(), *l)?;
            if system.model().has_hard_constraints() {
                return Err(Error::UnsupportedModel(
                    "contraction sampling draws uniform surroundings, which hard \
                     constraints forbid"
                        .into(),
                ));
            }
        }
        ExperimentKind::FactorizationCheck { l } => {
            es_factorize(system.as_ref(), *l)?;
        }
    }
    Ok(())
}

fn validate_ladder(model: &ModelConfig, sizes: &[Vec<usize>], trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::Config("the ladder needs at least one trial".into()));
    }
    if sizes.is_empty() {
        return Err(Error::Config("the ladder needs at least one size".into()));
    }
    let spin_model = model.build()?;
    if !spin_model.has_monotone_order() {
        return Err(Error::UnsupportedModel(
            "coupling ladders need a monotone model".into(),
        ));
    }
    let mut last = 1usize;
    for sides in sizes {
        let cube = LatticeCube::build(sides)?;
        if cube.len() < 2 {
            return Err(Error::Config("ladder boxes need at least two vertices".into()));
        }
        if cube.len() <= last {
            return Err(Error::Config(
                "ladder sizes must ascend strictly in vertex count".into(),
            ));
        }
        last = cube.len();
    }
    Ok(())
}

/// One finished artifact, still in memory: deterministic bytes plus a name.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Artifact bookkeeping recorded in the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

/// What a run leaves behind besides its artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub package: String,
    pub version: String,
    pub experiment: String,
    pub seed: u64,
    pub wall_seconds: f64,
    pub config: ExperimentConfig,
    pub artifacts: Vec<ArtifactRecord>,
}

/// Runs the experiment and returns its artifacts without touching the
/// filesystem; identical (config, seed) calls return identical bytes.
pub fn execute(config: &ExperimentConfig) -> Result<Vec<Artifact>> {
    validate(config)?;
    let system = config.cube.build(config.model.build()?)?;
    let streams = Streams::new(config.seed);
    match &config.experiment {
        ExperimentKind::GapReport { kernels } => gap_report(&system, kernels),
        ExperimentKind::InequalitySuite {
            l,
            families,
            sandwich_pairs,
            variance_functions,
        } => inequality_suite(
            &system,
            *l,
            *families,
            *sandwich_pairs,
            *variance_functions,
            &streams,
        ),
        ExperimentKind::CouplingScaling { sizes, trials } => {
            let cells = scaling_series(&config.model, sizes, *trials, config.seed)?;
            Ok(scaling_artifacts(&cells))
        }
        ExperimentKind::SsmScan {
            base_spin,
            targets,
            envelope_a,
            envelope_b,
        } => ssm_artifacts(&system, *base_spin, *targets, *envelope_a, *envelope_b),
        ExperimentKind::Contraction { l, trials } => {
            contraction_artifacts(&system, *l, *trials, &streams)
        }
        ExperimentKind::FactorizationCheck { l } => {
            let report = factorization_report(&system, *l)?;
            Ok(vec![json_artifact("factorization.json", &report)?])
        }
    }
}

/// Runs the experiment, writes every artifact plus a `manifest.json` into
/// `out_dir`, and returns the manifest.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<Manifest> {
    let started = Instant::now();
    let artifacts = execute(config)?;
    std::fs::create_dir_all(out_dir)?;
    let mut records = Vec::with_capacity(artifacts.len());
    for artifact in &artifacts {
        std::fs::write(out_dir.join(&artifact.name), &artifact.bytes)?;
        records.push(ArtifactRecord {
            name: artifact.name.clone(),
            bytes: artifact.bytes.len(),
            sha256: hex_digest(&artifact.bytes),
        });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        package: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: config.experiment.name().into(),
        seed: config.seed,
        wall_seconds: started.elapsed().as_secs_f64(),
        config: config.clone(),
        artifacts: records,
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(out_dir.join("manifest.json"), text)?;
    Ok(manifest)
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// 17-significant-digit scientific notation, the CSV number format.
pub fn csv_number<S: std::fmt::LowerExp>(value: S) -> String {
    format!("{value:.16e}")
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.into()
    }
}

fn csv_artifact(name: &str, header: &[&str], rows: &[Vec<String>]) -> Artifact {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let escaped: Vec<String> = row.iter().map(|f| csv_field(f)).collect();
        out.push_str(&escaped.join(","));
        out.push('\n');
    }
    Artifact {
        name: name.into(),
        bytes: out.into_bytes(),
    }
}

fn json_artifact<T: Serialize>(name: &str, value: &T) -> Result<Artifact> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    Ok(Artifact {
        name: name.into(),
        bytes: text.into_bytes(),
    })
}

#[derive(Serialize)]
struct GapEntry {
    kernel: String,
    /// `direct` for reversible kernels; `reversiblized` when the report
    /// describes the multiplicative reversiblization `P P*` instead.
    analysis: &'static str,
    report: SpectralReport<Real>,
    /// Relaxation time attributed to the kernel itself; for the
    /// reversiblized analysis this is `1 / (1 - sqrt(1 - gap(P P*)))`.
    relaxation: Real,
}

fn gap_report(
    system: &Arc<System<Real>>,
    kernels: &[KernelConfig],
) -> Result<Vec<Artifact>> {
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for config in kernels {
        let kernel = config.build(system)?;
        let chain = kernel.exact_matrix()?;
        let reversible = chain.is_reversible(scalar::<Real>(REVERSIBILITY_PRECHECK));
        let entry = if reversible {
            let report = spectral_gap(&chain)?;
            let relaxation = report.relaxation;
            GapEntry {
                kernel: config.label(),
                analysis: "direct",
                report,
                relaxation,
            }
        } else {
            let reversiblized = reversiblized_relaxation(&chain)?;
            GapEntry {
                kernel: config.label(),
                analysis: "reversiblized",
                report: reversiblized.multiplicative,
                relaxation: reversiblized.relaxation,
            }
        };
        rows.push(vec![
            entry.kernel.clone(),
            entry.report.n.to_string(),
            entry.analysis.into(),
            entry.report.method.into(),
            csv_number(entry.report.gap),
            csv_number(entry.report.lambda2),
            csv_number(entry.report.lambda_min),
            reversible.to_string(),
            entry.report.psd.to_string(),
            csv_number(entry.relaxation),
        ]);
        entries.push(entry);
    }
    Ok(vec![
        csv_artifact(
            "gaps.csv",
            &[
                "kernel",
                "states",
                "analysis",
                "method",
                "gap",
                "lambda2",
                "lambda_min",
                "reversible",
                "psd",
                "relaxation",
            ],
            &rows,
        ),
        json_artifact("gaps.json", &entries)?,
    ])
}

fn comparison_row(report: &ComparisonReport<Real>) -> Vec<String> {
    vec![
        report.name.into(),
        report.instance.clone(),
        csv_number(report.lhs),
        csv_number(report.rhs),
        csv_number(report.margin),
        report.holds.to_string(),
    ]
}

#[derive(Serialize)]
struct InequalityArtifact<'a> {
    comparisons: &'a [ComparisonReport<Real>],
    variance: &'a VarianceFactsReport<Real>,
    skipped: &'a [String],
}

fn inequality_suite(
    system: &Arc<System<Real>>,
    l: usize,
    families: usize,
    sandwich_pairs: usize,
    variance_functions: usize,
    streams: &Streams,
) -> Result<Vec<Artifact>> {
    let mut comparisons: Vec<ComparisonReport<Real>> = Vec::new();
    let mut skipped: Vec<String> = Vec::new();
    let sw_applicable =
        system.model().as_zero_field_potts().is_some() && system.boundary().is_free();
    if sw_applicable {
        comparisons.push(sw_vs_isolated(system)?);
        comparisons.push(isolated_vs_tiled(system, l)?);
        comparisons.push(isolated_local_gap(system, l)?);
        let inner: Arc<dyn InnerKernel<Real>> = Arc::new(IsolatedSwInner);
        comparisons.push(tiled_lower_bound(system, l, &inner)?);
    } else {
        skipped.push("cluster-dynamics checks need a zero-field Potts model".into());
    }
    let inner: Arc<dyn InnerKernel<Real>> = Arc::new(HeatBathInner);
    comparisons.push(tiled_lower_bound(system, l, &inner)?);
    let cube = system.cube();
    let mut family_rng = streams.stream(domain::FAMILY, 0);
    for i in 0..families {
        let r = 2 + i % 4;
        let blocks = random_block_family(cube, r, &mut family_rng);
        comparisons.push(block_vs_eo(system, &blocks)?);
    }
    let mut pair_rng = streams.stream(domain::PAIR, 0);
    for _ in 0..sandwich_pairs {
        let s = random_nonempty_subset(cube.len(), &mut pair_rng);
        let t = random_nonempty_subset(cube.len(), &mut pair_rng);
        let a = 0.1 + 0.8 * rand::Rng::random::<f64>(&mut pair_rng);
        comparisons.push(sts_vs_mixture(system, &s, &t, a)?);
        comparisons.push(sts_upper(system, &s, &t, a)?);
    }
    let mut function_rng = streams.stream(domain::FUNCTION, 0);
    let variance = verify_variance_facts(system, variance_functions, &mut function_rng)?;
    let rows: Vec<Vec<String>> = comparisons.iter().map(comparison_row).collect();
    Ok(vec![
        csv_artifact(
            "inequalities.csv",
            &["name", "instance", "lhs", "rhs", "margin", "holds"],
            &rows,
        ),
        json_artifact(
            "inequalities.json",
            &InequalityArtifact {
                comparisons: &comparisons,
                variance: &variance,
                skipped: &skipped,
            },
        )?,
    ])
}

/// One rung of a coupling-time ladder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub sides: Vec<usize>,
    pub n: usize,
    pub quantile: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean: f64,
    pub timed_out: usize,
    /// `quantile / ln(n)`, the boundedness statistic of the ladder.
    pub ratio: f64,
}

/// A rung's summary together with its raw coupled trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingCell {
    pub row: ScalingRow,
    pub runs: Vec<TrialRun>,
}

/// Alternating-scan coupling times from the extremal starts over an
/// ascending ladder of boxes, one bootstrap interval per rung and the
/// quantile-to-log(n) ratio column. Rungs where runs hit the step cap are
/// reported with their censored count, never dropped.
pub fn scaling_series(
    model: &ModelConfig,
    sizes: &[Vec<usize>],
    trials: usize,
    seed: u64,
) -> Result<Vec<ScalingCell>> {
    validate_ladder(model, sizes, trials)?;
    let mut cells = Vec::with_capacity(sizes.len());
    for sides in sizes {
        let cube = LatticeCube::build(sides)?;
        let system = Arc::new(System::free(model.build()?, cube));
        let kernel = Kernel::even_odd_scan(system.clone())?;
        let (top, bottom) = extremal_pair(system.as_ref())?;
        let streams = Streams::new(seed);
        let cap = COUPLING_CAP_FACTOR.saturating_mul(system.cube().len());
        let runs = coupled_trials(&kernel, &top, &bottom, trials, cap, &streams)?;
        let report = coupling_time_report(&runs, cap, &streams)?;
        let n = system.cube().len();
        cells.push(ScalingCell {
            row: ScalingRow {
                sides: sides.clone(),
                n,
                quantile: report.quantile,
                ci_low: report.ci_low,
                ci_high: report.ci_high,
                mean: report.mean,
                timed_out: report.timed_out,
                ratio: report.quantile / (n as f64).ln(),
            },
            runs,
        });
    }
    Ok(cells)
}

fn sides_label(sides: &[usize]) -> String {
    sides
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

fn scaling_artifacts(cells: &[ScalingCell]) -> Vec<Artifact> {
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|cell| {
            vec![
                sides_label(&cell.row.sides),
                cell.row.n.to_string(),
                csv_number(cell.row.quantile),
                csv_number(cell.row.ci_low),
                csv_number(cell.row.ci_high),
                csv_number(cell.row.mean),
                cell.row.timed_out.to_string(),
                csv_number(cell.row.ratio),
            ]
        })
        .collect();
    let mut artifacts = vec![csv_artifact(
        "scaling.csv",
        &[
            "box", "n", "quantile", "ci_low", "ci_high", "mean", "timed_out", "ratio",
        ],
        &rows,
    )];
    for cell in cells {
        let mut rows = Vec::new();
        for run in &cell.runs {
            for (i, &h) in run.run.hamming.iter().enumerate() {
                rows.push(vec![
                    run.trial.to_string(),
                    (i + 1).to_string(),
                    h.to_string(),
                    (h == 0).to_string(),
                ]);
            }
        }
        artifacts.push(csv_artifact(
            &format!("trajectories_{}.csv", sides_label(&cell.row.sides)),
            &["trial", "step", "hamming", "coalesced"],
            &rows,
        ));
    }
    artifacts
}

#[derive(Serialize)]
struct SsmArtifact<'a> {
    fit: &'a SSMFit<Real>,
    profile: Vec<(usize, Real)>,
}

fn ssm_artifacts(
    system: &Arc<System<Real>>,
    base_spin: u8,
    targets: TargetsConfig,
    envelope_a: f64,
    envelope_b: f64,
) -> Result<Vec<Artifact>> {
    let cube = system.cube();
    let base = BoundaryCondition::constant(cube, base_spin);
    let target_sets = match targets {
        TargetsConfig::Singletons => singleton_targets(cube),
        TargetsConfig::Subsets => all_subset_targets(cube)?,
    };
    let samples: Vec<SSMSample<Real>> =
        ssm_scan(system.model(), cube, &base, &target_sets)?;
    let fit = ssm_fit(&samples, envelope_a, envelope_b)?;
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            vec![
                sides_label(&s.sides),
                s.target
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join("+"),
                s.site.to_string(),
                format!("{}->{}", s.spins.0, s.spins.1),
                s.dist.to_string(),
                csv_number(s.tv),
            ]
        })
        .collect();
    Ok(vec![
        csv_artifact(
            "ssm.csv",
            &["box", "target", "site", "spins", "dist", "tv"],
            &rows,
        ),
        json_artifact(
            "ssm_fit.json",
            &SsmArtifact {
                fit: &fit,
                profile: max_tv_profile(&samples),
            },
        )?,
    ])
}

#[derive(Serialize)]
struct ContractionArtifact<'a> {
    report: &'a ContractionReport,
    /// Exact per-site one-step disagreement, present only for models with
    /// no edge interaction.
    exact: Option<Vec<Real>>,
}

fn contraction_artifacts(
    system: &Arc<System<Real>>,
    l: usize,
    trials: usize,
    streams: &Streams,
) -> Result<Vec<Artifact>> {
    let kernel = Kernel::tiled_heat_bath(system.clone(), l)?;
    let report = path_coupling_contraction(&kernel, trials, streams)?;
    let exact = match exact_independent_contraction(&kernel, 0) {
        Ok(_) => Some(
            (0..system.cube().len())
                .map(|v| exact_independent_contraction(&kernel, v))
                .collect::<Result<Vec<Real>>>()?,
        ),
        Err(_) => None,
    };
    Ok(vec![json_artifact(
        "contraction.json",
        &ContractionArtifact {
            report: &report,
            exact,
        },
    )?])
}

/// Maps an error to the CLI exit code contract: 2 for config and input
/// problems, 3 for violated model or capacity guards, 4 for numerical or
/// I/O failures at run time.
pub fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Config(_) | Error::InvalidInput(_) => 2,
        Error::Capacity(_) | Error::UnsupportedModel(_) | Error::DegenerateMeasure(_) => 3,
        Error::Numerical(_) | Error::Io(_) => 4,
    }
}
