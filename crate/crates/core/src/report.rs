//! Per-method summary metrics and their tabular rendering.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Evaluation;
use crate::mdl::{ChunkStore, MdlCost};
use crate::ml::{stats_cost, MorphStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "rec-mdl")]
    RecMdl,
    #[serde(rename = "seq-ml")]
    SeqMl,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::RecMdl => "rec-mdl",
            Method::SeqMl => "seq-ml",
        }
    }

    fn column_title(self) -> &'static str {
        match self {
            Method::RecMdl => "Rec. MDL",
            Method::SeqMl => "Seq. ML",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rec-mdl" => Ok(Method::RecMdl),
            "seq-ml" => Ok(Method::SeqMl),
            other => Err(Error::Argument(format!("unknown method {other:?}"))),
        }
    }
}

/// A trained model as seen by the report.
#[derive(Debug, Clone, Copy)]
pub enum TrainedModel<'a> {
    Mdl(&'a ChunkStore),
    Ml { stats: &'a MorphStats, char_bits: u32 },
}

impl TrainedModel<'_> {
    pub fn method(&self) -> Method {
        match self {
            TrainedModel::Mdl(_) => Method::RecMdl,
            TrainedModel::Ml { .. } => Method::SeqMl,
        }
    }

    /// Corpus bits plus `char_bits` per codebook character, for either model kind.
    pub fn mdl_cost(&self) -> MdlCost {
        match self {
            TrainedModel::Mdl(store) => store.tracked_cost(),
            TrainedModel::Ml { stats, char_bits } => {
                let chars: u64 = stats.counts().keys().map(|m| m.chars().count() as u64).sum();
                let corpus = stats_cost(stats);
                let codebook = (*char_bits as u64 * chars) as f64;
                MdlCost {
                    corpus_bits: corpus,
                    codebook_bits: codebook,
                    total_bits: corpus + codebook,
                }
            }
        }
    }

    pub fn num_morphs(&self) -> usize {
        match self {
            TrainedModel::Mdl(store) => store.num_morphs(),
            TrainedModel::Ml { stats, .. } => stats.num_morphs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: Method,
    pub total_mdl_cost: f64,
    pub corpus_bits: f64,
    pub codebook_bits: f64,
    pub codebook_morphs: usize,
    pub relative_codebook_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment_distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unseen_pair_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
    /// The codebook term was not part of this method's training objective.
    pub codebook_cost_imputed: bool,
}

pub fn build_report(
    model: TrainedModel<'_>,
    evaluation: Option<&Evaluation>,
    training_time: Option<Duration>,
) -> MetricsReport {
    let cost = model.mdl_cost();
    MetricsReport {
        method: model.method(),
        total_mdl_cost: cost.total_bits,
        corpus_bits: cost.corpus_bits,
        codebook_bits: cost.codebook_bits,
        codebook_morphs: model.num_morphs(),
        relative_codebook_cost: cost.relative_codebook_cost(),
        alignment_distance: evaluation.map(|e| e.alignment_distance),
        unseen_pair_fraction: evaluation.map(|e| e.unseen_pair_fraction),
        wall_time_secs: training_time.map(|t| t.as_secs_f64()),
        codebook_cost_imputed: matches!(model, TrainedModel::Ml { .. }),
    }
}

impl MetricsReport {
    pub fn to_json_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("report serializes");
        line.push('\n');
        line
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Input(format!("invalid report record: {e}")))
    }
}

fn thousands(bits: f64) -> String {
    if bits >= 1e6 {
        format!("{:.2}M", bits / 1e6)
    } else if bits >= 1e4 {
        format!("{:.0}k", bits / 1e3)
    } else {
        format!("{bits:.1}")
    }
}

/// Metrics as rows, one column per method.
pub fn format_table(reports: &[MetricsReport]) -> String {
    let dash = || "-".to_string();
    let pct = |v: f64| format!("{:.2}%", 100.0 * v);
    let rows: Vec<(&str, Vec<String>)> = vec![
        (
            "Total MDL cost [bits]",
            reports.iter().map(|r| thousands(r.total_mdl_cost)).collect(),
        ),
        (
            "#morphs in codebook",
            reports.iter().map(|r| r.codebook_morphs.to_string()).collect(),
        ),
        (
            "Relative codebook cost",
            reports.iter().map(|r| pct(r.relative_codebook_cost)).collect(),
        ),
        (
            "Alignment distance",
            reports
                .iter()
                .map(|r| r.alignment_distance.map_or_else(dash, thousands))
                .collect(),
        ),
        (
            "Unseen aligned pairs",
            reports
                .iter()
                .map(|r| r.unseen_pair_fraction.map_or_else(dash, pct))
                .collect(),
        ),
        (
            "Time [sec]",
            reports
                .iter()
                .map(|r| r.wall_time_secs.map_or_else(dash, |t| format!("{t:.2}")))
                .collect(),
        ),
    ];
    let headers: Vec<String> = reports
        .iter()
        .map(|r| {
            let mut h = r.method.column_title().to_string();
            if r.codebook_cost_imputed {
                h.push('*');
            }
            h
        })
        .collect();

    let label_width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max("Method".len());
    let widths: Vec<usize> = (0..reports.len())
        .map(|c| {
            rows.iter()
                .map(|(_, v)| v[c].len())
                .chain([headers[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();

    let render = |label: &str, cells: &[String]| {
        let mut row = format!("{label:<label_width$}");
        for (cell, w) in cells.iter().zip(&widths) {
            row.push_str(&format!(" | {cell:>w$}"));
        }
        row.push('\n');
        row
    };
    let mut out = render("Method", &headers);
    out.push_str(&"-".repeat(label_width + widths.iter().map(|w| w + 3).sum::<usize>()));
    out.push('\n');
    for (label, cells) in &rows {
        out.push_str(&render(label, cells));
    }
    if reports.iter().any(|r| r.codebook_cost_imputed) {
        out.push_str("* codebook cost computed with the recursive method's formula; it was not part of this method's objective\n");
    }
    out
}
