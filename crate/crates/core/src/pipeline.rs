//! End-to-end runs: ingest, graph, bias, walk, embed, classify.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::classify::{evaluate, stratified_split, EvalProtocol, LabeledFeatures, MeanMetrics, MetricsReport};
use crate::config::{parse_value, Configurable};
use crate::embed::{train, SkipGramConfig};
use crate::error::{Error, Result, StageExt};
use crate::graph::{build_graph_for, compute_bias, extend_graph, BiasTable, BipartiteGraph};
use crate::ingest::{
    load_dataset, parse_location_fine, Dataset, DatasetPaths, HourBuckets, IngestOptions, IngestSummary, RecordFormat,
};
use crate::task::{TargetPartition, Task};
use crate::walker::{generate_corpus, WalkConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Full model: hourly buckets and bias-extended weights.
    DeepCity,
    /// Hour information collapsed into a single bucket.
    DeepCityL,
    /// Locations replaced by fine categories.
    DeepCityCt,
    /// Both of the above.
    DeepCityC,
    /// Hourly graph without bias extension.
    DeepWalk,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::DeepCity,
        Variant::DeepCityL,
        Variant::DeepCityCt,
        Variant::DeepCityC,
        Variant::DeepWalk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::DeepCity => "deepcity",
            Variant::DeepCityL => "deepcity_l",
            Variant::DeepCityCt => "deepcity_ct",
            Variant::DeepCityC => "deepcity_c",
            Variant::DeepWalk => "deepwalk",
        }
    }

    pub fn collapses_hours(self) -> bool {
        matches!(self, Variant::DeepCityL | Variant::DeepCityC)
    }

    pub fn uses_fine_categories(self) -> bool {
        matches!(self, Variant::DeepCityCt | Variant::DeepCityC)
    }

    pub fn applies_bias(self) -> bool {
        self != Variant::DeepWalk
    }

    /// Variants that make sense for `task`. Category prediction embeds
    /// locations, so the location-replacing variants are excluded.
    pub fn supports(self, task: Task) -> bool {
        task.target_partition() == TargetPartition::User || !self.uses_fine_categories()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "deepcity" => Ok(Variant::DeepCity),
            "deepcity_l" | "deepcity_u" => Ok(Variant::DeepCityL),
            "deepcity_ct" => Ok(Variant::DeepCityCt),
            "deepcity_c" => Ok(Variant::DeepCityC),
            "deepwalk" => Ok(Variant::DeepWalk),
            _ => Err(Error::InvalidConfig(format!("unknown variant `{s}`"))),
        }
    }
}

impl Serialize for Variant {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub task: Task,
    /// Directory holding the record files under their default names.
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
    pub walk: WalkConfig,
    pub skipgram: SkipGramConfig,
    pub eval: EvalProtocol,
    pub min_checkins: u32,
    pub utc_offset_hours: i32,
    /// Share of labeled target entities whose labels feed the bias stage.
    /// Below 1 those entities are left out of evaluation, so no evaluated
    /// label influences the walks. At 1 every label is used for both.
    pub bias_label_fraction: f64,
    /// Forces single-threaded execution in every stage.
    pub deterministic: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            variant: Variant::DeepCity,
            task: Task::Gender,
            data_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
            walk: WalkConfig::default(),
            skipgram: SkipGramConfig::default(),
            eval: EvalProtocol::default(),
            min_checkins: IngestOptions::default().min_checkins,
            utc_offset_hours: 0,
            bias_label_fraction: 0.5,
            deterministic: false,
        }
    }
}

impl PipelineConfig {
    /// Sets the walk, embedding and split seeds together.
    pub fn set_seed(&mut self, seed: u64) {
        self.walk.seed = seed;
        self.skipgram.seed = seed;
        self.eval.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        if !self.variant.supports(self.task) {
            return Err(Error::InvalidConfig(format!(
                "variant {} does not apply to task {}",
                self.variant, self.task
            )));
        }
        if !(self.bias_label_fraction > 0.0 && self.bias_label_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "bias_label_fraction must lie in (0, 1], got {}",
                self.bias_label_fraction
            )));
        }
        if self.min_checkins == 0 {
            return Err(Error::InvalidConfig("min_checkins must be positive".into()));
        }
        self.walk.validate()?;
        self.skipgram.validate()?;
        self.eval.validate()
    }

    fn effective_skipgram(&self) -> SkipGramConfig {
        SkipGramConfig {
            threads: if self.deterministic { 1 } else { self.skipgram.threads },
            ..self.skipgram
        }
    }
}

impl Configurable for PipelineConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "variant" => self.variant = value.parse()?,
            "task" => self.task = value.parse()?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "seed" => self.set_seed(parse_value(key, value)?),
            "walk_length" | "s" => self.walk.walk_length = parse_value(key, value)?,
            "walks_per_node" | "r" => self.walk.walks_per_node = parse_value(key, value)?,
            "dimension" | "d" => self.skipgram.dimension = parse_value(key, value)?,
            "window" => self.skipgram.window = parse_value(key, value)?,
            "negatives" => self.skipgram.negatives = parse_value(key, value)?,
            "epochs" => self.skipgram.epochs = parse_value(key, value)?,
            "initial_lr" => self.skipgram.initial_lr = parse_value(key, value)?,
            "min_lr" => self.skipgram.min_lr = parse_value(key, value)?,
            "threads" => self.skipgram.threads = parse_value(key, value)?,
            "train_fraction" => self.eval.train_fraction = parse_value(key, value)?,
            "repetitions" => self.eval.repetitions = parse_value(key, value)?,
            "l2" => self.eval.logreg.l2 = parse_value(key, value)?,
            "classifier_lr" => self.eval.logreg.lr = parse_value(key, value)?,
            "classifier_iterations" => self.eval.logreg.iterations = parse_value(key, value)?,
            "min_checkins" => self.min_checkins = parse_value(key, value)?,
            "utc_offset_hours" => self.utc_offset_hours = parse_value(key, value)?,
            "bias_label_fraction" => self.bias_label_fraction = parse_value(key, value)?,
            "deterministic" => self.deterministic = parse_value(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown pipeline key `{key}`"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub checkins: usize,
    pub users: usize,
    pub graph_nodes: usize,
    pub graph_edges: usize,
    pub walks: usize,
    pub walk_tokens: usize,
    pub vocabulary: usize,
    pub labeled_entities: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub task: Task,
    pub variant: Variant,
    #[serde(flatten)]
    pub metrics: MetricsReport,
    pub summary: RunSummary,
    pub warnings: Vec<String>,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub walks: PathBuf,
    pub embeddings: PathBuf,
    pub report: PathBuf,
}

impl Artifacts {
    pub const WALKS: &'static str = "walks.txt";
    pub const EMBEDDINGS: &'static str = "embeddings.txt";
    pub const REPORT: &'static str = "report.json";

    pub fn in_dir(dir: &Path) -> Self {
        Artifacts {
            walks: dir.join(Self::WALKS),
            embeddings: dir.join(Self::EMBEDDINGS),
            report: dir.join(Self::REPORT),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub report: PipelineReport,
    pub artifacts: Artifacts,
}

/// Runs `body` on a one-thread pool when `single` is set.
pub fn with_threads<T: Send>(single: bool, body: impl FnOnce() -> T + Send) -> Result<T> {
    if !single {
        return Ok(body());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(body))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    crate::ingest::write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome> {
    config.validate()?;
    with_threads(config.deterministic, || run_stages(config))?
}

/// Loads the dataset a run would use, applying the variant's bucket and
/// location transforms. The `Vec` holds warnings for the report.
pub fn prepare_dataset(config: &PipelineConfig) -> Result<(Dataset, IngestSummary, Vec<String>)> {
    let mut warnings = Vec::new();
    let paths = DatasetPaths::in_dir(&config.data_dir);
    let opts = IngestOptions {
        min_checkins: config.min_checkins,
        buckets: if config.variant.collapses_hours() {
            HourBuckets::Collapsed
        } else {
            HourBuckets::Hourly
        },
        utc_offset_hours: config.utc_offset_hours,
        format: RecordFormat::default(),
    };
    let (mut dataset, summary) = load_dataset(&paths, opts)?;
    if config.variant.uses_fine_categories() {
        let path = paths.location_fine.as_ref().expect("in_dir sets every path");
        let fine = parse_location_fine(path, opts.format)?;
        let mapping: BTreeMap<String, String> = fine.records.into_iter().collect();
        let dropped = dataset.relabel_locations(&mapping);
        if dropped > 0 {
            warnings.push(format!("{dropped} check-ins at locations without a fine category were dropped"));
        }
    }
    if summary.checkins_rejected > 0 {
        warnings.push(format!("{} malformed check-in lines skipped", summary.checkins_rejected));
    }
    if dataset.checkins.is_empty() {
        return Err(Error::Empty("no active users remain after filtering"));
    }
    Ok((dataset, summary, warnings))
}

/// Labeled target entities reserved for the bias stage, or `None` when
/// every label is used.
pub fn bias_entities(config: &PipelineConfig, dataset: &Dataset) -> Option<BTreeSet<String>> {
    if config.bias_label_fraction >= 1.0 {
        return None;
    }
    let task = config.task;
    let labeled: Vec<(&String, usize)> = match task.target_partition() {
        TargetPartition::User => dataset
            .user_labels
            .iter()
            .filter_map(|(id, l)| l.class_index(task).map(|c| (id, c)))
            .collect(),
        TargetPartition::Location => dataset
            .location_labels
            .iter()
            .map(|(id, l)| (id, l.category.index()))
            .collect(),
    };
    let classes: Vec<usize> = labeled.iter().map(|(_, c)| *c).collect();
    let (chosen, _) = stratified_split(
        &classes,
        task.n_classes(),
        config.bias_label_fraction,
        config.eval.seed,
        BIAS_SPLIT_STREAM,
    );
    Some(chosen.into_iter().map(|i| labeled[i].0.clone()).collect())
}

const BIAS_SPLIT_STREAM: usize = 1 << 41;

/// A copy of `dataset` whose target labels are restricted to `keep`.
fn restrict_labels(dataset: &Dataset, task: Task, keep: &BTreeSet<String>) -> Dataset {
    let mut view = dataset.clone();
    match task.target_partition() {
        TargetPartition::User => view.user_labels.retain(|id, _| keep.contains(id)),
        TargetPartition::Location => view.location_labels.retain(|id, _| keep.contains(id)),
    }
    view
}

/// Computes the bias table from the labels [`bias_entities`] selects.
pub fn bias_table(config: &PipelineConfig, dataset: &Dataset) -> Result<BiasTable> {
    match bias_entities(config, dataset) {
        Some(keep) => compute_bias(&restrict_labels(dataset, config.task, &keep), config.task),
        None => compute_bias(dataset, config.task),
    }
}

/// Builds the walk graph for `config`: bias-extended unless the variant is
/// `deepwalk`.
pub fn prepare_graph(config: &PipelineConfig, dataset: &Dataset) -> Result<BipartiteGraph> {
    let graph = build_graph_for(dataset, config.task.target_partition()).stage("graph")?;
    if config.variant.applies_bias() {
        bias_table(config, dataset)
            .and_then(|table| extend_graph(&graph, &table))
            .stage("bias")
    } else {
        Ok(graph)
    }
}

fn run_stages(config: &PipelineConfig) -> Result<PipelineOutcome> {
    let mut summary = RunSummary::default();
    let (mut dataset, _, mut warnings) = prepare_dataset(config).stage("ingest")?;
    summary.checkins = dataset.checkins.len();
    summary.users = dataset.user_count();

    let graph = prepare_graph(config, &dataset)?;
    summary.graph_nodes = graph.node_count();
    summary.graph_edges = graph.edge_count();
    dataset.checkins = Vec::new();

    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| Error::io(&config.output_dir, e))
        .stage("walk")?;
    let artifacts = Artifacts::in_dir(&config.output_dir);
    let corpus = generate_corpus(&graph, &config.walk)
        .and_then(|c| c.save(&artifacts.walks).map(|_| c))
        .stage("walk")?;
    drop(graph);
    summary.walks = corpus.len();
    summary.walk_tokens = corpus.token_count();

    let vectors = train(&corpus, &config.effective_skipgram())
        .map(|m| m.into_vectors())
        .and_then(|v| v.save(&artifacts.embeddings).map(|_| v))
        .stage("embed")?;
    drop(corpus);
    summary.vocabulary = vectors.len();

    let (mut features, missing) = LabeledFeatures::from_vectors(&vectors, &dataset, config.task).stage("classify")?;
    if let Some(reserved) = bias_entities(config, &dataset) {
        features = features.without(&reserved).stage("classify")?;
    }
    if missing > 0 {
        warnings.push(format!("{missing} labeled entities have no embedding and were omitted"));
    }
    summary.labeled_entities = features.len();
    let metrics = evaluate(&features, &config.eval).stage("classify")?;
    if metrics.skipped_auc > 0 {
        warnings.push(format!("AUC skipped in {} repetition(s)", metrics.skipped_auc));
    }
    let report = PipelineReport {
        task: config.task,
        variant: config.variant,
        metrics,
        summary,
        warnings,
        config: config.clone(),
    };
    write_json(&artifacts.report, &report).stage("report")?;
    Ok(PipelineOutcome { report, artifacts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    WalkLength,
    WalksPerNode,
    Dimension,
    MinCheckins,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::WalkLength => "s",
            SweepParameter::WalksPerNode => "r",
            SweepParameter::Dimension => "d",
            SweepParameter::MinCheckins => "min_checkins",
        }
    }

    fn apply(self, config: &mut PipelineConfig, value: usize) -> Result<()> {
        match self {
            SweepParameter::WalkLength => config.walk.walk_length = value,
            SweepParameter::WalksPerNode => config.walk.walks_per_node = value,
            SweepParameter::Dimension => config.skipgram.dimension = value,
            SweepParameter::MinCheckins => {
                config.min_checkins = u32::try_from(value)
                    .map_err(|_| Error::InvalidConfig(format!("min_checkins {value} too large")))?
            }
        }
        Ok(())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "s" | "walk_length" => Ok(SweepParameter::WalkLength),
            "r" | "walks_per_node" => Ok(SweepParameter::WalksPerNode),
            "d" | "dimension" => Ok(SweepParameter::Dimension),
            "min_checkins" => Ok(SweepParameter::MinCheckins),
            _ => Err(Error::InvalidConfig(format!("cannot sweep `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: usize,
    pub mean: MeanMetrics,
}

/// Runs the pipeline once per value, each into `output_dir/<name>=<value>`.
pub fn sweep(config: &PipelineConfig, parameter: SweepParameter, values: &[usize]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|&value| {
            let mut c = config.clone();
            parameter.apply(&mut c, value)?;
            c.output_dir = config.output_dir.join(format!("{}={value}", parameter.name()));
            log::info!("sweep {}={value}", parameter.name());
            let outcome = run_pipeline(&c)?;
            Ok(SweepRow {
                value,
                mean: outcome.report.metrics.mean,
            })
        })
        .collect()
}

/// Tab-separated table with a header row; metrics a task lacks print `NA`.
pub fn write_sweep_table<W: Write>(mut w: W, parameter: SweepParameter, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "{}\tauc\tprecision\trecall\tf1\tmacro_f1\tmicro_f1", parameter.name())?;
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
    for r in rows {
        let m = &r.mean;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
            r.value,
            opt(m.auc),
            opt(m.precision),
            opt(m.recall),
            opt(m.f1),
            m.macro_f1,
            m.micro_f1
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("deepcity_u".parse::<Variant>().unwrap(), Variant::DeepCityL);
        assert!("deep".parse::<Variant>().is_err());
    }

    #[test]
    fn category_task_admits_three_variants() {
        let ok: Vec<Variant> = Variant::ALL.into_iter().filter(|v| v.supports(Task::Category)).collect();
        assert_eq!(ok, vec![Variant::DeepCity, Variant::DeepCityL, Variant::DeepWalk]);
        assert!(Variant::ALL.iter().all(|v| v.supports(Task::Race)));
        let c = PipelineConfig {
            task: Task::Category,
            variant: Variant::DeepCityCt,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn config_keys() {
        let mut c = PipelineConfig::default();
        for (k, v) in [("s", "20"), ("r", "3"), ("d", "16"), ("seed", "9"), ("variant", "deepwalk"), ("deterministic", "true")] {
            c.set(k, v).unwrap();
        }
        assert_eq!((c.walk.walk_length, c.walk.walks_per_node, c.skipgram.dimension), (20, 3, 16));
        assert_eq!((c.walk.seed, c.skipgram.seed, c.eval.seed), (9, 9, 9));
        assert_eq!(c.variant, Variant::DeepWalk);
        assert!(c.deterministic);
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("task", "height").is_err());
    }

    #[test]
    fn sweep_table_format() {
        let rows = vec![SweepRow {
            value: 5,
            mean: MeanMetrics {
                auc: Some(0.75),
                precision: None,
                recall: None,
                f1: None,
                macro_f1: 0.5,
                micro_f1: 0.625,
            },
        }];
        let mut out = Vec::new();
        write_sweep_table(&mut out, SweepParameter::WalkLength, &rows).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "s\tauc\tprecision\trecall\tf1\tmacro_f1\tmicro_f1\n5\t0.750000\tNA\tNA\tNA\t0.500000\t0.625000\n"
        );
    }
}
