//! Command-line front end: run manifests, KG coverage checks, feature
//! explanations and plot-ready reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, ColumnData, Dataset, SchemaConfig};
use crate::engine::{feature_values, max_order_sweep, EngineConfig, FEResult, Origin, Policy};
use crate::kg::{load_mapping, KnowledgeGraph, Verdict};
use crate::learn::{feature_importance, impute_medians, train, FeatureMatrix, LearnerKind, LearnerSpec, Matrix, Target};
use crate::transform::{pearson_abs, FeatureExpr};

/// Failure of a command, split by who has to act on it.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input: missing files, malformed documents, invalid options.
    #[error("{0}")]
    User(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

fn user(e: impl std::fmt::Display) -> CliError {
    CliError::User(e.to_string())
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

fn engine_error(e: crate::engine::EngineError) -> CliError {
    use crate::engine::EngineError::*;
    match e {
        Config(_) | Transform(_) => user(e),
        Learn(_) | Agent(_) => internal(e),
    }
}

#[derive(Debug, Parser)]
#[command(name = "kraft", version, about = "Knowledge-guided automated feature engineering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run feature engineering from a manifest.
    Run(RunArgs),
    /// Report how much of a dataset the knowledge graph covers.
    KgCheck(KgCheckArgs),
    /// Show how a feature of a finished run was judged.
    Explain(ExplainArgs),
    /// Write importance and order-sweep tables for a finished run.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Manifest JSON naming the dataset, schema, KG and mapping.
    pub manifest: PathBuf,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub max_order: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub learner: Option<LearnerArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyArg>,
    /// Output directory; defaults to the manifest's, then `kraft-out`
    /// next to the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also run a max-order sweep over these orders, e.g. `1,2,3`.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<usize>>,
    /// Write the trained Q-network to this file.
    #[arg(long)]
    pub save_policy: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum LearnerArg {
    Tree,
    Forest,
    Linear,
    Logistic,
}

impl From<LearnerArg> for LearnerKind {
    fn from(a: LearnerArg) -> Self {
        match a {
            LearnerArg::Tree => LearnerKind::DecisionTree,
            LearnerArg::Forest => LearnerKind::RandomForest,
            LearnerArg::Linear => LearnerKind::Linear,
            LearnerArg::Logistic => LearnerKind::Logistic,
        }
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum PolicyArg {
    Dqn,
    Random,
}

#[derive(Debug, Args)]
pub struct KgCheckArgs {
    /// Knowledge graph JSON; the bundled graph when absent.
    #[arg(long)]
    pub kg: Option<PathBuf>,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Column mapping JSON; the schema's concept map when absent.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// A `result.json` written by `run`.
    pub result: PathBuf,
    /// Display name of the feature.
    pub feature: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A `result.json` written by `run`.
    pub result: PathBuf,
    /// Output directory; defaults to the result's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Generated features included in the importance forest.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

/// Engine settings a manifest may override; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub episodes: Option<usize>,
    pub steps: Option<usize>,
    pub cap: Option<usize>,
    pub budget: Option<usize>,
    pub max_order: Option<usize>,
    pub k: Option<usize>,
    pub learner: Option<LearnerKind>,
    pub seed: Option<u64>,
    pub patience: Option<usize>,
    pub policy: Option<Policy>,
}

impl ConfigOverrides {
    fn apply(&self, cfg: &mut EngineConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(episodes, steps, cap, budget, max_order, k, seed, patience, policy);
        if self.learner.is_some() {
            cfg.learner = self.learner;
        }
    }
}

/// Input files and settings for one run. Relative paths are resolved
/// against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub dataset: PathBuf,
    pub schema: PathBuf,
    /// Knowledge graph JSON; the bundled graph when absent.
    #[serde(default)]
    pub kg: Option<PathBuf>,
    /// Column mapping JSON; the schema's concept map when absent.
    #[serde(default)]
    pub mapping: Option<PathBuf>,
    #[serde(default)]
    pub config: ConfigOverrides,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| user(format!("cannot read {}: {e}", path.display())))?;
        let mut m: RunManifest =
            serde_json::from_str(&text).map_err(|e| user(format!("malformed manifest {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        resolve(&mut m.dataset);
        resolve(&mut m.schema);
        m.kg.iter_mut().for_each(resolve);
        m.mapping.iter_mut().for_each(resolve);
        m.out.iter_mut().for_each(resolve);
        if m.out.is_none() {
            m.out = Some(dir.join("kraft-out"));
        }
        Ok(m)
    }
}

/// Dataset and mapped KG loaded from input paths.
pub struct Loaded {
    pub dataset: Dataset,
    pub kg: KnowledgeGraph,
    pub mapping: Option<PathBuf>,
}

fn require_file(p: &Path) -> Result<(), CliError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(user(format!("file not found: {}", p.display())))
    }
}

pub fn load_inputs(
    dataset: &Path,
    schema: &Path,
    kg: Option<&Path>,
    mapping: Option<&Path>,
) -> Result<Loaded, CliError> {
    for p in [Some(dataset), Some(schema), kg, mapping].into_iter().flatten() {
        require_file(p)?;
    }
    let schema = SchemaConfig::load(schema).map_err(user)?;
    let d = load_csv(dataset, &schema).map_err(user)?;
    let base = match kg {
        Some(p) => KnowledgeGraph::load(p).map_err(|e| user(format!("{}: {e}", p.display())))?,
        None => KnowledgeGraph::bundled(),
    };
    let mapping = mapping.map(Path::to_path_buf).or(schema.concept_map_path);
    let kg = match &mapping {
        Some(p) => {
            require_file(p)?;
            let m = load_mapping(p).map_err(user)?;
            base.with_mapping(m).map_err(|e| user(format!("{}: {e}", p.display())))?
        }
        None => base,
    };
    Ok(Loaded { dataset: d, kg, mapping })
}

/// Absolute form of an input path, so results can be explained from any
/// working directory.
fn path_string(p: &Path) -> String {
    fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf()).display().to_string()
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| user(format!("cannot write {}: {e}", path.display())))
}

fn result_json(r: &FEResult) -> String {
    let mut s = serde_json::to_string_pretty(r).expect("result serializes");
    s.push('\n');
    s
}

fn csv_text(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn cell_text(c: &ColumnData, row: usize) -> String {
    match c {
        ColumnData::Numeric(v) => fmt_cell(v[row]),
        ColumnData::Categorical(v) => v[row].clone().unwrap_or_default(),
        ColumnData::Boolean(v) => v[row].map(|b| b.to_string()).unwrap_or_default(),
        ColumnData::Date(v) => v[row].as_ref().map(|d| d.date().to_string()).unwrap_or_default(),
    }
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// The best feature set evaluated on `d`, with display-name headers and
/// the target as the last column.
pub fn features_csv(r: &FEResult, d: &Dataset) -> Result<String, CliError> {
    let exprs: Vec<FeatureExpr> = r.best_features.iter().map(|f| f.expression.clone()).collect();
    let cols = feature_values(d, &exprs).map_err(engine_error)?;
    let mut header: Vec<String> = r.best_features.iter().map(|f| f.name.clone()).collect();
    header.push(d.target_name().to_string());
    let target = d.target();
    let rows = (0..d.n_rows()).map(|i| {
        let mut row: Vec<String> = cols.iter().map(|c| fmt_cell(c[i])).collect();
        row.push(cell_text(&target.data, i));
        row
    });
    Ok(csv_text(&header, rows))
}

/// One line per step, followed by one indented line per discarded feature.
pub fn step_log(r: &FEResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "baseline {:.6}", r.baseline_score);
    for e in &r.trajectory {
        for s in &e.steps {
            let eps = s.epsilon.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                out,
                "episode {} step {} action {} epsilon {} generated {} kept {} discarded {} pruned {} score {:.6} -> {:.6} reward {:+.6}",
                e.episode,
                s.step,
                s.action,
                eps,
                s.generated,
                s.kept.len(),
                s.discarded.len(),
                s.pruned.len(),
                s.score_before,
                s.score_after,
                s.reward
            );
            for d in &s.discarded {
                let _ = writeln!(out, "  discarded {} ({})", d.feature, d.reason);
            }
        }
    }
    let _ = writeln!(out, "best {:.6}", r.best_score);
    out
}

pub fn cmd_run(args: &RunArgs) -> Result<String, CliError> {
    require_file(&args.manifest)?;
    let m = RunManifest::load(&args.manifest)?;
    let loaded = load_inputs(&m.dataset, &m.schema, m.kg.as_deref(), m.mapping.as_deref())?;
    let mut cfg = EngineConfig::default();
    m.config.apply(&mut cfg);
    ConfigOverrides {
        episodes: args.episodes,
        steps: args.steps,
        cap: args.cap,
        budget: args.budget,
        max_order: args.max_order,
        k: args.k,
        learner: args.learner.map(Into::into),
        seed: args.seed,
        patience: args.patience,
        policy: args.policy.map(|p| match p {
            PolicyArg::Dqn => Policy::Dqn,
            PolicyArg::Random => Policy::Random,
        }),
    }
    .apply(&mut cfg);
    if args.save_policy.is_some() && cfg.policy != Policy::Dqn {
        return Err(user("--save-policy needs the dqn policy"));
    }

    let mut engine = crate::engine::Engine::new(&loaded.dataset, &loaded.kg, cfg.clone()).map_err(engine_error)?;
    let mut result = engine.run().map_err(engine_error)?;
    if let (Some(path), Some(agent)) = (&args.save_policy, engine.agent()) {
        agent
            .save(path)
            .map_err(|e| user(format!("cannot write {}: {e}", path.display())))?;
    }
    if let Some(orders) = &args.sweep {
        let sweep = max_order_sweep(&cfg, &loaded.dataset, &loaded.kg, orders).map_err(engine_error)?;
        result.order_sweep = Some(sweep);
    }
    result.inputs = Some(crate::engine::RunInputs {
        dataset: path_string(&m.dataset),
        schema: Some(path_string(&m.schema)),
        kg: m.kg.as_deref().map(path_string),
        mapping: loaded.mapping.as_deref().map(path_string),
    });

    let out = args.out.clone().or(m.out).expect("manifest supplies a default");
    fs::create_dir_all(&out).map_err(|e| user(format!("cannot create {}: {e}", out.display())))?;
    write_file(&out.join("result.json"), &result_json(&result))?;
    write_file(&out.join("features.csv"), &features_csv(&result, &loaded.dataset)?)?;
    write_file(&out.join("log.txt"), &step_log(&result))?;
    Ok(format!(
        "baseline {:.4}, best {:.4} with {} features; wrote {}",
        result.baseline_score,
        result.best_score,
        result.best_features.len(),
        out.display()
    ))
}

pub fn cmd_kg_check(args: &KgCheckArgs) -> Result<String, CliError> {
    let l = load_inputs(&args.dataset, &args.schema, args.kg.as_deref(), args.mapping.as_deref())?;
    let unmapped = l.kg.unmapped_columns(&l.dataset);
    let mut out = String::new();
    let _ = writeln!(out, "coverage: {:.2}", l.kg.coverage(&l.dataset));
    if unmapped.is_empty() {
        let _ = writeln!(out, "unmapped: (none)");
    } else {
        let _ = writeln!(out, "unmapped: {}", unmapped.join(", "));
    }
    let _ = writeln!(out, "rules: {}", l.kg.rules().len());
    let _ = write!(out, "classes: {}", l.kg.classes().len());
    Ok(out)
}

pub fn load_result(path: &Path) -> Result<FEResult, CliError> {
    let text = fs::read_to_string(path).map_err(|e| user(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| user(format!("malformed result {}: {e}", path.display())))
}

fn inputs_of(r: &FEResult, path: &Path) -> Result<Loaded, CliError> {
    let i = r
        .inputs
        .as_ref()
        .ok_or_else(|| user(format!("{} does not record its input files", path.display())))?;
    let schema = i
        .schema
        .as_ref()
        .ok_or_else(|| user(format!("{} does not record a schema", path.display())))?;
    load_inputs(
        Path::new(&i.dataset),
        Path::new(schema),
        i.kg.as_deref().map(Path::new),
        i.mapping.as_deref().map(Path::new),
    )
}

/// Up to three known names closest to `name`.
fn nearest<'a>(name: &str, known: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut scored: Vec<(f64, &str)> = known
        .map(|k| (strsim::normalized_levenshtein(&name.to_lowercase(), &k.to_lowercase()), k))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    scored.dedup_by(|a, b| a.1 == b.1);
    scored.into_iter().take(3).map(|(_, k)| k).collect()
}

fn verdict_text(v: &Verdict) -> String {
    match v {
        Verdict::Interpretable => "interpretable".into(),
        Verdict::Uncovered => "uncovered".into(),
        Verdict::NonInterpretable { reason } => format!("non-interpretable ({reason})"),
    }
}

pub fn cmd_explain(args: &ExplainArgs) -> Result<String, CliError> {
    let r = load_result(&args.result)?;
    let kept = r.feature(&args.feature).map(|f| f.expression.clone());
    let discard = r.discards().find(|(_, _, d)| d.feature == args.feature).map(|(e, s, d)| (e, s, d.clone()));
    let expr = match (kept, &discard) {
        (Some(e), _) => e,
        (None, Some((_, _, d))) => d.expression.clone(),
        (None, None) => {
            let known = r.best_features.iter().map(|f| f.name.as_str()).chain(r.discards().map(|(_, _, d)| d.feature.as_str()));
            let near = nearest(&args.feature, known);
            return Err(user(format!(
                "no feature named `{}` in {}; nearest: {}",
                args.feature,
                args.result.display(),
                if near.is_empty() { "(none)".to_string() } else { near.join(", ") }
            )));
        }
    };
    let kg = inputs_of(&r, &args.result)?.kg;
    let mut out = String::new();
    let _ = writeln!(out, "feature: {}", expr.render_name());
    let _ = writeln!(out, "order: {}", expr.order());
    for node in kg.explain(&expr) {
        let unit = node.mapped_unit.unwrap_or_else(|| kg.describe_unit(node.unit.as_ref()));
        let class = node.class.map(|c| format!(" <{c}>")).unwrap_or_default();
        let _ = writeln!(out, "{}{}  [{unit}]{class}", "  ".repeat(node.depth), node.display_name);
    }
    let verdict = kg.judge(&expr);
    let _ = write!(out, "verdict: {}", verdict_text(&verdict));
    if let Some((e, s, d)) = discard {
        let _ = write!(out, "\nrule: {} (discarded in episode {e}, step {s})", d.reason);
    }
    Ok(out)
}

/// Normalized forest importances over raw features and the `top` generated
/// features most correlated with the target.
pub fn importance_rows(r: &FEResult, d: &Dataset, top: usize) -> Result<Vec<(String, f64, Origin)>, CliError> {
    let target = match Target::from_dataset(d) {
        Target::Classes { labels, .. } => labels.into_iter().map(|l| l as f64).collect(),
        Target::Values(v) => v,
    };
    let all: Vec<&crate::engine::FeatureReport> = r.best_features.iter().collect();
    let exprs: Vec<FeatureExpr> = all.iter().map(|f| f.expression.clone()).collect();
    let values = feature_values(d, &exprs).map_err(engine_error)?;
    let mut generated: Vec<usize> = (0..all.len()).filter(|&i| all[i].origin == Origin::Generated).collect();
    let strength: Vec<f64> = values.iter().map(|v| pearson_abs(v, &target)).collect();
    generated.sort_by(|&a, &b| strength[b].total_cmp(&strength[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = (0..all.len()).filter(|&i| all[i].origin == Origin::Raw).collect();
    chosen.extend(generated.into_iter().take(top));
    chosen.sort_unstable();
    if chosen.is_empty() {
        return Ok(Vec::new());
    }

    let cols: Vec<Vec<Option<f64>>> = chosen.iter().map(|&i| values[i].clone()).collect();
    let n = d.n_rows();
    let rows: Vec<usize> = (0..n).collect();
    let fill = impute_medians(&FeatureMatrix::new(cols.clone()), &rows);
    let dense: Vec<Vec<f64>> = cols
        .iter()
        .zip(&fill)
        .map(|(c, &f)| c.iter().map(|v| v.unwrap_or(f)).collect())
        .collect();
    let spec = LearnerSpec::new(LearnerKind::RandomForest).with_seed(r.seed);
    let model = train(&spec, &Matrix::from_columns(n, &dense), &Target::from_dataset(d)).map_err(internal)?;
    let imp = feature_importance(&model).map_err(internal)?;
    let mut out: Vec<(String, f64, Origin)> = chosen
        .iter()
        .zip(imp)
        .map(|(&i, v)| (all[i].name.clone(), v, all[i].origin))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(out)
}

pub fn cmd_report(args: &ReportArgs) -> Result<String, CliError> {
    let r = load_result(&args.result)?;
    let d = inputs_of(&r, &args.result)?.dataset;
    let out = match &args.out {
        Some(o) => o.clone(),
        None => args.result.parent().unwrap_or(Path::new(".")).to_path_buf(),
    };
    fs::create_dir_all(&out).map_err(|e| user(format!("cannot create {}: {e}", out.display())))?;
    let rows = importance_rows(&r, &d, args.top)?;
    let header: Vec<String> = ["feature", "importance", "origin"].map(String::from).into();
    let text = csv_text(
        &header,
        rows.iter().map(|(n, v, o)| {
            let origin = match o {
                Origin::Raw => "raw",
                Origin::Generated => "generated",
            };
            vec![n.clone(), v.to_string(), origin.to_string()]
        }),
    );
    write_file(&out.join("importance.csv"), &text)?;
    let mut written = vec!["importance.csv"];
    if let Some(sweep) = &r.order_sweep {
        let header: Vec<String> = ["max_order", "best_score", "baseline_score"].map(String::from).into();
        let text = csv_text(
            &header,
            sweep.iter().map(|p| vec![p.max_order.to_string(), p.best_score.to_string(), p.baseline_score.to_string()]),
        );
        write_file(&out.join("order_sweep.csv"), &text)?;
        written.push("order_sweep.csv");
    }
    Ok(format!("wrote {} to {}", written.join(", "), out.display()))
}

pub fn execute(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::KgCheck(a) => cmd_kg_check(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_only_present_fields() {
        let mut cfg = EngineConfig::default();
        ConfigOverrides {
            episodes: Some(3),
            learner: Some(LearnerKind::RandomForest),
            ..Default::default()
        }
        .apply(&mut cfg);
        assert_eq!(cfg.episodes, 3);
        assert_eq!(cfg.steps, 5);
        assert_eq!(cfg.learner, Some(LearnerKind::RandomForest));
    }

    #[test]
    fn nearest_names() {
        let known = ["WEIGHT", "HEIGHT", "(WEIGHT / SQUARE(HEIGHT))", "AGE"];
        assert_eq!(nearest("weigth", known.into_iter())[0], "WEIGHT");
        assert_eq!(nearest("x", std::iter::empty()).len(), 0);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(user("x").exit_code(), 1);
        assert_eq!(internal("x").exit_code(), 2);
    }
}
