//! FVC-style verification protocol and error-rate statistics.
//!
//! Genuine comparisons pair every two impressions of the same subject;
//! impostor comparisons pair impressions of different subjects. With 100
//! subjects and 8 impressions this gives 2800 genuine and 316800 impostor
//! comparisons. The query of each comparison is the lexicographically
//! smaller `(subject, impression)` key.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{DatasetError, EvalError, TemplateError};
use crate::match_loop::run_matcher_with;
use crate::model::{MatchConfig, MinutiaTemplate};
use crate::pair_weights::{compute_octant_neighbors, OctantNeighborhood};
use crate::template_io::{read_template, DatasetManifest, ManifestEntry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ComparisonKind {
    Genuine,
    Impostor,
}

impl ComparisonKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ComparisonKind::Genuine => "genuine",
            ComparisonKind::Impostor => "impostor",
        }
    }
}

/// Which cross-subject pairs count as impostor attempts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpostorRule {
    /// Every unordered pair of impressions from different subjects.
    #[default]
    AllPairs,
    /// Only the first impression of each subject against the first
    /// impression of every other subject.
    FirstImpressions,
}

/// Dataset key: `(subject, impression)`.
pub type SampleKey = (u32, u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Comparison {
    pub kind: ComparisonKind,
    pub query: SampleKey,
    pub template: SampleKey,
}

/// All protocol comparisons over `keys`, genuine first, each block in key
/// order.
pub fn protocol_pairs(keys: &[SampleKey], rule: ImpostorRule) -> Vec<Comparison> {
    let mut keys = keys.to_vec();
    keys.sort_unstable();
    keys.dedup();

    let mut first_of_subject: HashMap<u32, u32> = HashMap::new();
    for &(s, i) in &keys {
        first_of_subject.entry(s).or_insert(i);
    }
    let is_first = |k: &SampleKey| first_of_subject.get(&k.0) == Some(&k.1);

    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for (n, &a) in keys.iter().enumerate() {
        for &b in &keys[n + 1..] {
            if a.0 == b.0 {
                genuine.push(Comparison {
                    kind: ComparisonKind::Genuine,
                    query: a,
                    template: b,
                });
            } else if rule == ImpostorRule::AllPairs || (is_first(&a) && is_first(&b)) {
                impostor.push(Comparison {
                    kind: ComparisonKind::Impostor,
                    query: a,
                    template: b,
                });
            }
        }
    }
    genuine.extend(impostor);
    genuine
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRecord {
    pub comparison: Comparison,
    pub score: f64,
    /// Wall time of the match itself, when timing is recorded.
    pub millis: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreSet {
    pub records: Vec<ScoreRecord>,
}

impl ScoreSet {
    /// Builds a set from bare scores, for callers without pair identities.
    pub fn from_scores(genuine: &[f64], impostor: &[f64]) -> Self {
        let rec = |kind, n: usize, score: f64| ScoreRecord {
            comparison: Comparison {
                kind,
                query: (0, n as u32),
                template: (0, n as u32),
            },
            score,
            millis: None,
        };
        let mut records: Vec<_> = genuine
            .iter()
            .enumerate()
            .map(|(n, &s)| rec(ComparisonKind::Genuine, n, s))
            .collect();
        records.extend(
            impostor
                .iter()
                .enumerate()
                .map(|(n, &s)| rec(ComparisonKind::Impostor, n, s)),
        );
        ScoreSet { records }
    }

    pub fn scores(&self, kind: ComparisonKind) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.comparison.kind == kind)
            .map(|r| r.score)
            .collect()
    }

    pub fn count(&self, kind: ComparisonKind) -> usize {
        self.records
            .iter()
            .filter(|r| r.comparison.kind == kind)
            .count()
    }

    pub fn mean_millis(&self) -> Option<f64> {
        let times: Vec<f64> = self.records.iter().filter_map(|r| r.millis).collect();
        if times.is_empty() {
            None
        } else {
            Some(times.iter().sum::<f64>() / times.len() as f64)
        }
    }

    /// Writes `kind,subject_a,imp_a,subject_b,imp_b,score,millis`. `millis`
    /// is left empty when timing was not recorded.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "kind",
            "subject_a",
            "imp_a",
            "subject_b",
            "imp_b",
            "score",
            "millis",
        ])?;
        for r in &self.records {
            let c = &r.comparison;
            w.write_record([
                c.kind.as_str().to_string(),
                c.query.0.to_string(),
                c.query.1.to_string(),
                c.template.0.to_string(),
                c.template.1.to_string(),
                r.score.to_string(),
                r.millis.map(|m| format!("{m:.6}")).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolOptions {
    pub impostor_rule: ImpostorRule,
    pub record_timing: bool,
    /// Worker threads; `None` uses the global rayon pool.
    pub jobs: Option<usize>,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions {
            impostor_rule: ImpostorRule::AllPairs,
            record_timing: true,
            jobs: None,
        }
    }
}

/// A template that could not be loaded, and how many comparisons that cost.
#[derive(Debug)]
pub struct LoadFailure {
    pub key: SampleKey,
    pub error: TemplateError,
}

#[derive(Debug, Default)]
pub struct ProtocolOutcome {
    pub scores: ScoreSet,
    pub failures: Vec<LoadFailure>,
    pub skipped: usize,
}

struct Prepared<'a> {
    template: &'a MinutiaTemplate,
    hoods: Vec<OctantNeighborhood>,
}

/// Runs every protocol comparison over in-memory templates.
///
/// Scores come back in protocol order whatever the thread count.
pub fn run_protocol_templates(
    samples: &[(SampleKey, MinutiaTemplate)],
    cfg: &MatchConfig,
    opts: &ProtocolOptions,
) -> ScoreSet {
    let prepared: HashMap<SampleKey, Prepared> = samples
        .iter()
        .map(|(k, t)| {
            (
                *k,
                Prepared {
                    template: t,
                    hoods: compute_octant_neighbors(t, cfg.octant_frame),
                },
            )
        })
        .collect();
    let keys: Vec<SampleKey> = samples.iter().map(|(k, _)| *k).collect();
    let pairs = protocol_pairs(&keys, opts.impostor_rule);

    let compare = |c: &Comparison| {
        let q = &prepared[&c.query];
        let t = &prepared[&c.template];
        let start = Instant::now();
        let result = run_matcher_with(q.template, t.template, &q.hoods, &t.hoods, cfg);
        let elapsed = start.elapsed();
        ScoreRecord {
            comparison: *c,
            score: result.score,
            millis: opts.record_timing.then_some(elapsed.as_secs_f64() * 1e3),
        }
    };
    let run = || pairs.par_iter().map(compare).collect::<Vec<_>>();
    let records = match opts.jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        },
        None => run(),
    };
    ScoreSet { records }
}

/// Loads every manifest entry and runs the protocol. Unreadable templates
/// are reported and every comparison touching them is skipped.
pub fn run_protocol(
    manifest: &DatasetManifest,
    cfg: &MatchConfig,
    opts: &ProtocolOptions,
) -> ProtocolOutcome {
    let loaded: Vec<(SampleKey, Result<MinutiaTemplate, TemplateError>)> = manifest
        .entries
        .par_iter()
        .map(|e: &ManifestEntry| ((e.subject, e.impression), read_template(&e.path)))
        .collect();

    let mut samples = Vec::with_capacity(loaded.len());
    let mut failures = Vec::new();
    for (key, res) in loaded {
        match res {
            Ok(t) => samples.push((key, t)),
            Err(error) => failures.push(LoadFailure { key, error }),
        }
    }

    let skipped = if failures.is_empty() {
        0
    } else {
        let all: Vec<SampleKey> = manifest
            .entries
            .iter()
            .map(|e| (e.subject, e.impression))
            .collect();
        protocol_pairs(&all, opts.impostor_rule).len()
            - protocol_pairs(
                &samples.iter().map(|(k, _)| *k).collect::<Vec<_>>(),
                opts.impostor_rule,
            )
            .len()
    };

    ProtocolOutcome {
        scores: run_protocol_templates(&samples, cfg, opts),
        failures,
        skipped,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    /// Percent of impostor scores at or above `threshold`.
    pub far: f64,
    /// Percent of genuine scores below `threshold`.
    pub frr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl ScoreSummary {
    fn of(scores: &[f64]) -> Self {
        let count = scores.len();
        let mean = scores.iter().sum::<f64>() / count.max(1) as f64;
        let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ScoreSummary {
            count,
            mean,
            min,
            max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    /// Equal error rate, percent.
    pub eer: f64,
    pub roc: Vec<RocPoint>,
    pub mean_time_ms: Option<f64>,
    pub genuine: ScoreSummary,
    pub impostor: ScoreSummary,
}

impl EvalReport {
    pub fn to_json(&self, extra: serde_json::Value) -> serde_json::Value {
        let mut v = serde_json::json!({
            "eer": self.eer,
            "roc": self.roc,
            "mean_time_ms": self.mean_time_ms,
            "counts": {
                "genuine": self.genuine.count,
                "impostor": self.impostor.count,
            },
            "genuine_scores": self.genuine,
            "impostor_scores": self.impostor,
        });
        if let (Some(obj), serde_json::Value::Object(more)) = (v.as_object_mut(), extra) {
            obj.extend(more);
        }
        v
    }
}

/// Sweeps the decision threshold over every observed score and reports the
/// error rate where false accepts and false rejects cross.
pub fn compute_eer(s: &ScoreSet) -> Result<EvalReport, EvalError> {
    let mut genuine = s.scores(ComparisonKind::Genuine);
    let mut impostor = s.scores(ComparisonKind::Impostor);
    if genuine.is_empty() || impostor.is_empty() {
        return Err(EvalError::EmptyScores);
    }
    genuine.sort_by(f64::total_cmp);
    impostor.sort_by(f64::total_cmp);

    let mut thresholds: Vec<f64> = genuine.iter().chain(&impostor).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let (n_gen, n_imp) = (genuine.len() as f64, impostor.len() as f64);
    let mut roc = Vec::with_capacity(thresholds.len());
    // both lists are sorted, so the counts below each threshold only grow
    let (mut gen_below, mut imp_below) = (0usize, 0usize);
    for &t in &thresholds {
        while gen_below < genuine.len() && genuine[gen_below] < t {
            gen_below += 1;
        }
        while imp_below < impostor.len() && impostor[imp_below] < t {
            imp_below += 1;
        }
        roc.push(RocPoint {
            threshold: t,
            far: 100.0 * (impostor.len() - imp_below) as f64 / n_imp,
            frr: 100.0 * gen_below as f64 / n_gen,
        });
    }

    Ok(EvalReport {
        eer: crossing(&roc),
        roc,
        mean_time_ms: s.mean_millis(),
        genuine: ScoreSummary::of(&genuine),
        impostor: ScoreSummary::of(&impostor),
    })
}

fn crossing(roc: &[RocPoint]) -> f64 {
    // a threshold above every score rejects everything
    let beyond = RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 100.0,
    };
    let mut prev: Option<&RocPoint> = None;
    for p in roc.iter().chain(std::iter::once(&beyond)) {
        let d = p.frr - p.far;
        if d >= 0.0 {
            return match prev {
                None => p.far,
                Some(_) if d == 0.0 => p.far,
                Some(q) => {
                    let dq = q.frr - q.far;
                    let w = dq / (dq - d);
                    q.far + w * (p.far - q.far)
                }
            };
        }
        prev = Some(p);
    }
    unreachable!("the sentinel point always satisfies frr >= far")
}
