//! Scripted replay of pre-configured runtimes, the ablation matrix and the
//! effectiveness / equity reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::ManualClock;
use crate::copilot::{ExtractiveAnswerer, IncidentClassifier, QuestionId};
use crate::corpus::{AnnotatedCall, Family, Label, LabelSet, TagTaxonomy};
use crate::engine::{config_dir, read_config, BackendConfig, DataPaths, Engine, EngineError};
use crate::generation::{Ablation, SimulationInstruction};
use crate::knowledge::{lookup_address, AddressGazetteer, ProtocolSet};
use crate::metrics::{
    emotion_matches, emotion_profile, fog_similarity, margin_score, margin_with, mean_std, meteor, perplexity,
    tag_accuracy, train_lm, ttr, CentroidTagPredictor, EmotionLexicon, MetricsError, NGramLm, SimilarityModel, TagCall,
};
use crate::validation::{SessionState, ValidationConfig, ValidationError};

/// First call-taker line of every scripted replay.
pub const OPENER: &str = "9-1-1, what is the address of the emergency?";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("harness config: {0}")]
    Config(String),
    #[error("no protocol tree for incident type {0:?}")]
    NoProtocol(String),
    #[error("unknown ablation row {0:?}")]
    UnknownAblation(String),
    #[error("runtime {0:?}: trial count must be at least 1")]
    InvalidTrials(String),
    #[error("runtime {runtime:?} trial {trial}: {source}")]
    Trial {
        runtime: String,
        trial: u32,
        #[source]
        source: ValidationError,
    },
    #[error("no sessions to evaluate")]
    EmptySessions,
    #[error("no reference transcripts")]
    EmptyReferences,
    #[error("session {0:?} has no caller turn")]
    NoCallerTurn(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// One runtime of the harness config file, before ablation expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeSpec {
    pub name: String,
    pub instruction: SimulationInstruction,
    /// Explicit call-taker lines; derived from the protocol tree when absent.
    #[serde(default)]
    pub script: Option<Vec<String>>,
    /// Id of the paired reference transcript.
    #[serde(default)]
    pub reference: Option<String>,
    #[serde(default)]
    pub trials: Option<u32>,
}

fn default_trials() -> u32 {
    1
}

fn default_rows() -> Vec<String> {
    Ablation::ROW_NAMES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u32,
    /// Ablation rows to run, by name (`full`, `no-kc`, ..., `no-all`).
    #[serde(default = "default_rows")]
    pub ablations: Vec<String>,
    pub data: DataPaths,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default, rename = "runtime")]
    pub runtimes: Vec<RuntimeSpec>,
    /// Directory relative paths were resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = read_config(path)?;
        let mut config = Self::from_toml(&text)?;
        config.base_dir = config_dir(path);
        config.data.resolve(&config.base_dir);
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        for row in &config.ablations {
            Ablation::from_row_name(row).ok_or_else(|| HarnessError::UnknownAblation(row.clone()))?;
        }
        if config.runtimes.is_empty() {
            return Err(HarnessError::Config("no [[runtime]] entries".into()));
        }
        Ok(config)
    }

    pub fn engine(&self) -> Result<Engine, HarnessError> {
        let client = self.backend.build(&self.base_dir)?;
        Ok(Engine::load(&self.data, client, self.validation)?)
    }

    /// Every (ablation row, runtime) pair, row-major.
    pub fn expand(&self, protocols: &ProtocolSet) -> Result<Vec<RuntimeConfig>, HarnessError> {
        let mut out = Vec::new();
        for row in &self.ablations {
            let ablation = Ablation::from_row_name(row).ok_or_else(|| HarnessError::UnknownAblation(row.clone()))?;
            for spec in &self.runtimes {
                let script = match &spec.script {
                    Some(s) => s.clone(),
                    None => script_from_protocol(protocols, &spec.instruction)?,
                };
                let rc = RuntimeConfig {
                    name: spec.name.clone(),
                    instruction: spec.instruction.clone(),
                    script,
                    ablation,
                    trials: spec.trials.unwrap_or(self.trials),
                    seed: self.seed ^ spec.instruction.seed,
                    reference: spec.reference.clone(),
                };
                rc.check()?;
                out.push(rc);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeConfig {
    pub name: String,
    pub instruction: SimulationInstruction,
    pub script: Vec<String>,
    pub ablation: Ablation,
    pub trials: u32,
    pub seed: u64,
    pub reference: Option<String>,
}

impl RuntimeConfig {
    pub fn check(&self) -> Result<(), HarnessError> {
        if self.trials < 1 {
            return Err(HarnessError::InvalidTrials(self.name.clone()));
        }
        Ok(())
    }
}

/// Opener followed by the depth-first question sequence of the protocol tree.
pub fn script_from_protocol(
    protocols: &ProtocolSet,
    instruction: &SimulationInstruction,
) -> Result<Vec<String>, HarnessError> {
    let tree = protocols
        .get(&instruction.is.incident_type)
        .ok_or_else(|| HarnessError::NoProtocol(instruction.is.incident_type.to_string()))?;
    let mut script = vec![OPENER.to_string()];
    script.extend(tree.depth_first().into_iter().map(|n| n.question.clone()));
    Ok(script)
}

/// SplitMix64 finaliser over (seed, trial).
pub fn trial_seed(seed: u64, trial: u32) -> u64 {
    let mut z = seed ^ (u64::from(trial).wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub runtime: String,
    /// Ablation row name.
    pub config: String,
    pub trial: u32,
    #[serde(default)]
    pub reference: Option<String>,
    pub script: Vec<String>,
    pub session: SessionState,
}

impl SessionLog {
    pub fn caller_text(&self) -> String {
        let parts: Vec<&str> = self.session.caller_turns().map(|t| t.text.as_str()).collect();
        parts.join(" ")
    }

    pub fn file_name(&self) -> String {
        format!("{}.{}.{:03}.json", self.config, self.runtime, self.trial)
    }
}

fn replay_trial(rc: &RuntimeConfig, engine: &Engine, trial: u32) -> Result<SessionLog, HarnessError> {
    let wrap = |source| HarnessError::Trial { runtime: rc.name.clone(), trial, source };
    let clock = ManualClock::new(0);
    let deps = engine.deps(&clock);
    let mut instruction = rc.instruction.clone();
    instruction.seed = trial_seed(rc.seed, trial);
    let id = format!("{}-{}-{trial:03}", rc.ablation.name(), rc.name);
    let mut session =
        SessionState::new(id, instruction, rc.ablation, &engine.knowledge, &engine.profiles, &engine.generation)
            .map_err(wrap)?;
    session.open(&deps).map_err(wrap)?;
    for line in &rc.script {
        session.respond(line, &deps).map_err(wrap)?;
    }
    session.end().map_err(wrap)?;
    Ok(SessionLog {
        runtime: rc.name.clone(),
        config: rc.ablation.name(),
        trial,
        reference: rc.reference.clone(),
        script: rc.script.clone(),
        session,
    })
}

/// Runs every trial of a runtime; trials run concurrently and come back in
/// trial order.
pub fn replay(rc: &RuntimeConfig, engine: &Engine) -> Result<Vec<SessionLog>, HarnessError> {
    rc.check()?;
    (0..rc.trials).into_par_iter().map(|t| replay_trial(rc, engine, t)).collect()
}

pub fn replay_all(configs: &[RuntimeConfig], engine: &Engine) -> Result<Vec<SessionLog>, HarnessError> {
    let mut logs = Vec::new();
    for rc in configs {
        logs.extend(replay(rc, engine)?);
    }
    Ok(logs)
}

pub fn write_logs(logs: &[SessionLog], dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for log in logs {
        let path = dir.join(log.file_name());
        let mut text = serde_json::to_string_pretty(log).map_err(|e| io_err(&path, e))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

/// Reads every `*.json` session log in `dir`, in file-name order.
pub fn read_logs(dir: &Path) -> Result<Vec<SessionLog>, HarnessError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            serde_json::from_str(&text).map_err(|e| io_err(p, e))
        })
        .collect()
}

/// Read-only inputs of [`evaluate`].
pub struct EvalDeps<'a> {
    pub taxonomy: &'a TagTaxonomy,
    pub gazetteer: &'a AddressGazetteer,
    pub classifier: &'a dyn IncidentClassifier,
    pub answerer: &'a dyn ExtractiveAnswerer,
}

impl<'a> EvalDeps<'a> {
    pub fn of(engine: &'a Engine) -> Self {
        Self {
            taxonomy: &engine.knowledge.taxonomy,
            gazetteer: &engine.knowledge.gazetteer,
            classifier: &engine.classifier,
            answerer: &engine.answerer,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub lm_order: usize,
    pub lm_alpha: f64,
    pub similarity: SimilarityModel,
    pub emotions: EmotionLexicon,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { lm_order: 2, lm_alpha: 0.1, similarity: SimilarityModel::bundled(), emotions: EmotionLexicon::bundled() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub config: String,
    pub runtime: String,
    pub trial: u32,
    pub ppl: f64,
    pub meteor: f64,
    pub ttr: f64,
    /// Percentage of extracted addresses found in the gazetteer; `None` when
    /// the session gave no address.
    pub gmap: Option<f64>,
    pub sar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mean, std) = mean_std(values);
        Some(Self { mean, std, n: values.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectivenessRow {
    pub config: String,
    pub ppl: Option<Stat>,
    pub meteor: Option<Stat>,
    pub ttr: Option<Stat>,
    pub gmap: Option<Stat>,
    pub sar: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityRow {
    pub config: String,
    pub family: String,
    pub tag_accuracy: Option<f64>,
    pub margin: Option<f64>,
    /// Emotion family only.
    pub emotion_accuracy: Option<f64>,
    /// Non-native speaker family only.
    pub fog_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub sessions: Vec<SessionMetrics>,
    pub effectiveness: Vec<EffectivenessRow>,
    pub equity: Vec<EquityRow>,
}

/// The six caller-image families of the equity table.
pub const EQUITY_FAMILIES: [&str; 6] =
    ["age", "emotion", "unhoused", "mental health", "non-native speaker", "low-income housing area"];

fn family_tags(family: &str, taxonomy: &TagTaxonomy) -> Vec<Label> {
    match family {
        "age" => taxonomy.labels_in(Family::Age).iter().cloned().collect(),
        "emotion" => taxonomy.labels_in(Family::Emotion).iter().cloned().collect(),
        other => vec![Label::new(other)],
    }
}

/// Row order: the standard matrix order first, then any other names in
/// order of appearance.
fn config_order(logs: &[SessionLog]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for row in Ablation::ROW_NAMES {
        if logs.iter().any(|l| l.config == row) {
            names.push(row.to_string());
        }
    }
    for l in logs {
        if !names.contains(&l.config) {
            names.push(l.config.clone());
        }
    }
    names
}

fn pick_reference<'r>(
    log: &SessionLog,
    refs: &'r [AnnotatedCall],
    text: &str,
) -> Result<&'r AnnotatedCall, HarnessError> {
    if let Some(r) = log.reference.as_ref().and_then(|id| refs.iter().find(|r| &r.id == id)) {
        return Ok(r);
    }
    let incident = &log.session.instruction.is.incident_type;
    let same: Vec<&AnnotatedCall> = refs.iter().filter(|r| &r.is.incident_type == incident).collect();
    let pool: Vec<&AnnotatedCall> = if same.is_empty() { refs.iter().collect() } else { same };
    let mut best: Option<(&AnnotatedCall, f64)> = None;
    for r in pool {
        let s = meteor(text, &r.caller_text())?.score;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((r, s));
        }
    }
    best.map(|(r, _)| r).ok_or(HarnessError::EmptyReferences)
}

fn session_metrics(
    log: &SessionLog,
    refs: &[AnnotatedCall],
    lms: &BTreeMap<Label, NGramLm>,
    fallback_lm: &NGramLm,
    deps: &EvalDeps<'_>,
) -> Result<SessionMetrics, HarnessError> {
    let session = &log.session;
    let text = log.caller_text();
    if session.caller_turns().next().is_none() {
        return Err(HarnessError::NoCallerTurn(session.id.clone()));
    }
    let incident = &session.instruction.is.incident_type;
    let lm = lms.get(incident).unwrap_or(fallback_lm);
    let reference = pick_reference(log, refs, &text)?;

    let mut found = 0usize;
    let mut matched = 0usize;
    for turn in session.caller_turns() {
        let answer = deps.answerer.answer(turn, &QuestionId::address()).ok();
        if let Some(span) = answer.and_then(|a| a.span) {
            found += 1;
            if lookup_address(deps.gazetteer, &span).matched {
                matched += 1;
            }
        }
    }
    let aligned = deps.classifier.classify(&session.history).is_ok_and(|c| &c.label == incident);

    Ok(SessionMetrics {
        config: log.config.clone(),
        runtime: log.runtime.clone(),
        trial: log.trial,
        ppl: perplexity(lm, &text)?,
        meteor: meteor(&text, &reference.caller_text())?.score,
        ttr: ttr(&text)?.ttr,
        gmap: (found > 0).then(|| 100.0 * matched as f64 / found as f64),
        sar: if aligned { 100.0 } else { 0.0 },
    })
}

fn equity_rows(
    config: &str,
    logs: &[&SessionLog],
    refs: &[AnnotatedCall],
    predictor: &CentroidTagPredictor,
    deps: &EvalDeps<'_>,
    options: &EvalOptions,
) -> Result<Vec<EquityRow>, HarnessError> {
    let texts: Vec<String> = logs.iter().map(|l| l.caller_text()).collect();
    let truths: Vec<LabelSet> = logs.iter().map(|l| l.session.instruction.ci.labels()).collect();
    let ref_texts: Vec<String> = refs.iter().map(|r| r.caller_text()).collect();
    let calls: Vec<TagCall> =
        texts.iter().zip(&truths).map(|(t, truth)| TagCall { text: t.clone(), truth: truth.clone() }).collect();
    let supported: Vec<&Label> = predictor.supported_tags().collect();

    let mut rows = Vec::new();
    for family in EQUITY_FAMILIES {
        let tags = family_tags(family, deps.taxonomy);
        let usable: Vec<Label> = tags.iter().filter(|t| supported.contains(t)).cloned().collect();
        let tag_acc = if usable.is_empty() { None } else { Some(tag_accuracy(&calls, &usable, predictor)?.overall) };

        let mut margins = Vec::new();
        let mut fog_margins = Vec::new();
        for tag in &tags {
            let outputs: Vec<&str> =
                texts.iter().zip(&truths).filter(|(_, t)| t.contains(tag)).map(|(x, _)| x.as_str()).collect();
            let (with, without): (Vec<usize>, Vec<usize>) =
                (0..refs.len()).partition(|&i| refs[i].ci.labels().contains(tag));
            if outputs.is_empty() || with.is_empty() || without.is_empty() {
                continue;
            }
            let refs_a: Vec<&str> = with.iter().map(|&i| ref_texts[i].as_str()).collect();
            let refs_not: Vec<&str> = without.iter().map(|&i| ref_texts[i].as_str()).collect();
            margins.push(margin_score(&outputs, &refs_a, &refs_not, &options.similarity)?.margin);
            if family == "non-native speaker" {
                fog_margins.push(margin_with(&outputs, &refs_a, &refs_not, fog_similarity)?.margin);
            }
        }
        let avg = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);

        let emotion_accuracy = (family == "emotion").then(|| {
            let hits = logs
                .iter()
                .zip(&texts)
                .filter(|(l, t)| {
                    emotion_matches(&l.session.instruction.ci.emotion, &emotion_profile(t, &options.emotions))
                })
                .count();
            hits as f64 / logs.len() as f64
        });
        rows.push(EquityRow {
            config: config.to_string(),
            family: family.to_string(),
            tag_accuracy: tag_acc,
            margin: avg(&margins),
            emotion_accuracy,
            fog_margin: if family == "non-native speaker" { avg(&fog_margins) } else { None },
        });
    }
    Ok(rows)
}

/// Effectiveness and equity reports over replayed sessions, one row per
/// ablation configuration.
pub fn evaluate(
    logs: &[SessionLog],
    references: &[AnnotatedCall],
    deps: &EvalDeps<'_>,
    options: &EvalOptions,
) -> Result<EvaluationReport, HarnessError> {
    if logs.is_empty() {
        return Err(HarnessError::EmptySessions);
    }
    if references.is_empty() {
        return Err(HarnessError::EmptyReferences);
    }
    let mut by_type: BTreeMap<Label, Vec<String>> = BTreeMap::new();
    for r in references {
        by_type.entry(r.is.incident_type.clone()).or_default().push(r.caller_text());
    }
    let mut lms = BTreeMap::new();
    for (label, texts) in &by_type {
        lms.insert(label.clone(), train_lm(texts, options.lm_order, options.lm_alpha)?);
    }
    let all: Vec<String> = references.iter().map(|r| r.caller_text()).collect();
    let fallback = train_lm(&all, options.lm_order, options.lm_alpha)?;

    let sessions: Vec<SessionMetrics> =
        logs.par_iter().map(|l| session_metrics(l, references, &lms, &fallback, deps)).collect::<Result<_, _>>()?;

    let ref_calls: Vec<TagCall> =
        references.iter().map(|r| TagCall { text: r.caller_text(), truth: r.ci.labels() }).collect();
    let all_tags: Vec<Label> = EQUITY_FAMILIES.iter().flat_map(|f| family_tags(f, deps.taxonomy)).collect();
    let predictor = CentroidTagPredictor::train(&ref_calls, &all_tags);

    let mut effectiveness = Vec::new();
    let mut equity = Vec::new();
    for config in config_order(logs) {
        let rows: Vec<&SessionMetrics> = sessions.iter().filter(|s| s.config == config).collect();
        let col = |f: &dyn Fn(&SessionMetrics) -> Option<f64>| {
            Stat::of(&rows.iter().filter_map(|s| f(s)).collect::<Vec<_>>())
        };
        effectiveness.push(EffectivenessRow {
            config: config.clone(),
            ppl: col(&|s| Some(s.ppl)),
            meteor: col(&|s| Some(s.meteor)),
            ttr: col(&|s| Some(s.ttr)),
            gmap: col(&|s| s.gmap),
            sar: col(&|s| Some(s.sar)),
        });
        let group: Vec<&SessionLog> = logs.iter().filter(|l| l.config == config).collect();
        equity.extend(equity_rows(&config, &group, references, &predictor, deps, options)?);
    }
    Ok(EvaluationReport { sessions, effectiveness, equity })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.4}"))
}

fn fmt_stat(s: &Option<Stat>) -> String {
    s.map_or("-".into(), |s| format!("{:.2} ± {:.2}", s.mean, s.std))
}

impl EvaluationReport {
    pub fn effectiveness_row(&self, config: &str) -> Option<&EffectivenessRow> {
        self.effectiveness.iter().find(|r| r.config == config)
    }

    pub fn equity_row(&self, config: &str, family: &str) -> Option<&EquityRow> {
        self.equity.iter().find(|r| r.config == config && r.family == family)
    }

    /// Tab-separated `table, config, metric, mean, std, n` rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("table\tconfig\tmetric\tmean\tstd\tn\n");
        for r in &self.effectiveness {
            for (name, s) in
                [("ppl", &r.ppl), ("meteor", &r.meteor), ("ttr", &r.ttr), ("gmap", &r.gmap), ("sar", &r.sar)]
            {
                match s {
                    Some(s) => {
                        writeln!(out, "effectiveness\t{}\t{name}\t{:.6}\t{:.6}\t{}", r.config, s.mean, s.std, s.n)
                    }
                    None => writeln!(out, "effectiveness\t{}\t{name}\t-\t-\t0", r.config),
                }
                .unwrap();
            }
        }
        for r in &self.equity {
            let metrics = [
                ("tag_accuracy", r.tag_accuracy),
                ("margin", r.margin),
                ("emotion_accuracy", r.emotion_accuracy),
                ("fog_margin", r.fog_margin),
            ];
            for (name, v) in metrics {
                if name == "emotion_accuracy" && r.family != "emotion"
                    || name == "fog_margin" && r.family != "non-native speaker"
                {
                    continue;
                }
                let v = v.map_or("-".into(), |x| format!("{x:.6}"));
                writeln!(out, "equity\t{}\t{}:{name}\t{v}\t-\t-", r.config, r.family).unwrap();
            }
        }
        out
    }

    /// Two markdown tables: effectiveness per configuration, then equity per
    /// configuration and caller-image family.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "## Effectiveness\n\n| Config | PPL | METEOR | TTR | GMap (%) | SAR (%) |\n|---|---|---|---|---|---|\n",
        );
        for r in &self.effectiveness {
            writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                r.config,
                fmt_stat(&r.ppl),
                fmt_stat(&r.meteor),
                fmt_stat(&r.ttr),
                fmt_stat(&r.gmap),
                fmt_stat(&r.sar)
            )
            .unwrap();
        }
        out.push_str("\n## Equity\n\n| Config | Family | Tag accuracy | Margin | Emotion accuracy | Fog margin |\n|---|---|---|---|---|---|\n");
        for r in &self.equity {
            writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                r.config,
                r.family,
                fmt_opt(r.tag_accuracy),
                fmt_opt(r.margin),
                fmt_opt(r.emotion_accuracy),
                fmt_opt(r.fog_margin)
            )
            .unwrap();
        }
        out
    }
}
