use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{
    bh_adjust, format_p, format_pct, mcnemar, metrics, paired_outcomes, ConfusionCounts, EvalError,
    McNemarMethod, McNemarResult, MetricReport, PairedOutcomes,
};
use crate::Label;

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub email_id: String,
    pub system: String,
    /// Predicted class.
    pub label: Label,
    /// Fused phishing score.
    pub score: f64,
    /// Ground truth, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Label>,
    /// Corpus or dataset the email came from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

pub fn read_predictions(reader: impl BufRead) -> Result<Vec<PredictionRow>, EvalError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| EvalError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// System compared against every other one; defaults to the first
    /// system in the file.
    pub reference: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Phishing,
    Legitimate,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: String,
    pub kind: GroupKind,
    pub counts: ConfusionCounts,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub system: String,
    pub pooled: GroupReport,
    pub groups: Vec<GroupReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// `None` for the pooled comparison.
    pub group: Option<String>,
    pub system_a: String,
    pub system_b: String,
    pub paired: PairedOutcomes,
    pub result: McNemarResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub systems: Vec<SystemReport>,
    /// One BH family.
    pub comparisons: Vec<Comparison>,
}

const POOLED: &str = "all";

fn group_report(group: &str, items: &[(Label, Label)]) -> GroupReport {
    let mut counts = ConfusionCounts::default();
    for &(p, t) in items {
        counts.record(p, t);
    }
    let kind = match (counts.tp + counts.fn_ > 0, counts.tn + counts.fp > 0) {
        (true, false) => GroupKind::Phishing,
        (false, true) => GroupKind::Legitimate,
        _ => GroupKind::Mixed,
    };
    GroupReport {
        group: group.to_string(),
        kind,
        counts,
        metrics: metrics(&counts),
    }
}

type Keyed = BTreeMap<String, BTreeMap<String, (Label, Label)>>;

/// Per-system pooled and per-group metrics plus McNemar comparisons of the
/// reference system against every other, per group when groups exist.
pub fn evaluate_run(rows: &[PredictionRow], cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_system: HashMap<String, Keyed> = HashMap::new();
    let mut truths: HashMap<(String, String), Label> = HashMap::new();
    for row in rows {
        let truth = row.truth.ok_or_else(|| EvalError::MissingTruth(row.email_id.clone()))?;
        let group = row.group.clone().unwrap_or_else(|| POOLED.to_string());
        let key = (group.clone(), row.email_id.clone());
        if *truths.entry(key).or_insert(truth) != truth {
            return Err(EvalError::TruthConflict(row.email_id.clone()));
        }
        if !by_system.contains_key(&row.system) {
            order.push(row.system.clone());
        }
        let slot = by_system.entry(row.system.clone()).or_default().entry(group).or_default();
        if slot.insert(row.email_id.clone(), (row.label, truth)).is_some() {
            return Err(EvalError::Duplicate {
                system: row.system.clone(),
                email_id: row.email_id.clone(),
            });
        }
    }

    let systems = order
        .iter()
        .map(|name| {
            let keyed = &by_system[name];
            let groups: Vec<GroupReport> = keyed
                .iter()
                .map(|(g, items)| group_report(g, &items.values().copied().collect::<Vec<_>>()))
                .collect();
            let all: Vec<(Label, Label)> = keyed.values().flat_map(|m| m.values().copied()).collect();
            SystemReport {
                system: name.clone(),
                pooled: group_report(POOLED, &all),
                groups,
            }
        })
        .collect();

    let reference = match &cfg.reference {
        Some(r) if by_system.contains_key(r) => r.clone(),
        Some(r) => return Err(EvalError::UnknownSystem(r.clone())),
        None => order[0].clone(),
    };
    let a = &by_system[&reference];
    let mut comparisons = Vec::new();
    for other in order.iter().filter(|s| **s != reference) {
        let b = &by_system[other];
        let grouped = a.len() > 1 || a.keys().any(|g| g != POOLED);
        let mut scopes: Vec<(Option<String>, Vec<(Label, Label, Label)>)> = Vec::new();
        for (g, items) in a {
            let Some(other_items) = b.get(g) else { continue };
            let triples = items
                .iter()
                .filter_map(|(id, &(pa, t))| other_items.get(id).map(|&(pb, _)| (pa, pb, t)))
                .collect();
            scopes.push((grouped.then(|| g.clone()), triples));
        }
        for (group, triples) in scopes {
            if triples.is_empty() {
                continue;
            }
            let pa: Vec<Label> = triples.iter().map(|t| t.0).collect();
            let pb: Vec<Label> = triples.iter().map(|t| t.1).collect();
            let truth: Vec<Label> = triples.iter().map(|t| t.2).collect();
            let paired = paired_outcomes(&pa, &pb, &truth)?;
            comparisons.push(Comparison {
                group,
                system_a: reference.clone(),
                system_b: other.clone(),
                paired,
                result: mcnemar(paired.n10, paired.n01),
            });
        }
    }
    let raw: Vec<f64> = comparisons.iter().map(|c| c.result.raw_p).collect();
    for (c, adj) in comparisons.iter_mut().zip(bh_adjust(&raw)?) {
        c.result.adj_p = Some(adj);
    }
    Ok(EvalReport { systems, comparisons })
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, "  {c:>w$}");
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

/// Text tables: pooled metrics per system, per-group rates, and the
/// McNemar block when there is more than one system.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let pooled: Vec<Vec<String>> = report
        .systems
        .iter()
        .map(|s| {
            let m = &s.pooled.metrics;
            let mut row = vec![s.system.clone()];
            row.extend([m.recall, m.precision, m.accuracy, m.f1, m.tnr, m.fpr, m.fnr].map(format_pct));
            row
        })
        .collect();
    out.push_str(&table(
        &["System", "Recall", "Precision", "Accuracy", "F1", "TNR", "FPR", "FNR"],
        &pooled,
    ));

    let grouped: Vec<Vec<String>> = report
        .systems
        .iter()
        .flat_map(|s| {
            s.groups.iter().filter(|g| g.group != POOLED).map(move |g| {
                let m = &g.metrics;
                let (a, b, c, d) = match g.kind {
                    GroupKind::Phishing => (format_pct(m.recall), format_pct(m.fnr), "-".into(), "-".into()),
                    GroupKind::Legitimate => ("-".into(), "-".into(), format_pct(m.tnr), format_pct(m.fpr)),
                    GroupKind::Mixed => (format_pct(m.recall), format_pct(m.fnr), format_pct(m.tnr), format_pct(m.fpr)),
                };
                vec![s.system.clone(), g.group.clone(), a, b, c, d]
            })
        })
        .collect();
    if !grouped.is_empty() {
        out.push('\n');
        out.push_str(&table(&["System", "Group", "TPR", "FNR", "TNR", "FPR"], &grouped));
    }

    if !report.comparisons.is_empty() {
        let rows: Vec<Vec<String>> = report
            .comparisons
            .iter()
            .map(|c| {
                vec![
                    c.group.clone().unwrap_or_else(|| POOLED.to_string()),
                    format!("{} vs {}", c.system_a, c.system_b),
                    c.paired.n10.to_string(),
                    c.paired.n01.to_string(),
                    match c.result.method {
                        McNemarMethod::ExactBinomial => "exact".into(),
                        McNemarMethod::MidP => "mid-p".into(),
                    },
                    format_p(c.result.raw_p),
                    c.result.adj_p.map_or_else(|| "-".into(), format_p),
                ]
            })
            .collect();
        out.push('\n');
        out.push_str(&table(&["Group", "Comparison", "n10", "n01", "Test", "p", "adj. p"], &rows));
    }
    out
}
