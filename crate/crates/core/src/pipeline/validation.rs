use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::engine::{Candidate, Engine};
use super::manifest::Corpus;
use super::{PipelineError, RunConfig};
use crate::perturb::{Transform, TransformLabel};
use crate::stats::{cles, ApaResult};

/// One (config, transform) cell of the validation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub config_id: String,
    pub regime: String,
    pub projection: String,
    pub embedder: String,
    pub transform: TransformLabel,
    pub invariant: bool,
    pub result: Option<ApaResult>,
    pub error: Option<String>,
}

impl ValidationRow {
    pub fn invariant_class(&self) -> &'static str {
        if self.invariant {
            "invariant"
        } else {
            "non-invariant"
        }
    }
}

/// Effect size of one config: how often invariant transforms outscore
/// non-invariant ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config_id: String,
    pub config: RunConfig,
    /// `None` when either group has no successful transform.
    pub cles: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub corpus: String,
    pub rows: Vec<ValidationRow>,
    pub summaries: Vec<ConfigSummary>,
    pub warnings: Vec<String>,
    pub wall_clock_s: f64,
}

pub const CSV_HEADER: [&str; 11] = [
    "config_id",
    "regime",
    "projection",
    "embedder",
    "transform",
    "invariant_class",
    "apa",
    "fad_cr",
    "fad_crp",
    "fad_rrp",
    "clipped",
];

impl ValidationReport {
    /// The APA grid as CSV, one row per (config, transform). Failed cells
    /// leave the numeric columns empty.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("writing to memory");
        for row in &self.rows {
            let nums = match &row.result {
                Some(r) => [
                    r.apa.to_string(),
                    r.fad_cr.to_string(),
                    r.fad_crp.to_string(),
                    r.fad_rrp.to_string(),
                    r.clipped.to_string(),
                ],
                None => Default::default(),
            };
            let mut rec = vec![
                row.config_id.clone(),
                row.regime.clone(),
                row.projection.clone(),
                row.embedder.clone(),
                row.transform.to_string(),
                row.invariant_class().to_string(),
            ];
            rec.extend(nums);
            w.write_record(&rec).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("CSV is UTF-8")
    }

    pub fn row(&self, config_id: &str, label: TransformLabel) -> Option<&ValidationRow> {
        self.rows
            .iter()
            .find(|r| r.config_id == config_id && r.transform == label)
    }
}

/// CLES of invariant over non-invariant APA values among `rows`.
pub fn grouped_cles(rows: &[ValidationRow]) -> Option<f64> {
    let pick = |inv: bool| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.invariant == inv)
            .filter_map(|r| r.result.map(|x| x.apa))
            .collect()
    };
    cles(&pick(true), &pick(false)).ok()
}

impl Engine {
    /// Applies every transform to candidate stems sampled from `corpus` and
    /// scores each against the untransformed reference, for every config.
    /// A failing transform is recorded in its row; reference failures abort.
    pub fn run_validation(
        &mut self,
        corpus: &Corpus,
        transforms: &[Transform],
        grid: &[RunConfig],
    ) -> Result<ValidationReport, PipelineError> {
        if transforms.is_empty() || grid.is_empty() {
            return Err(PipelineError::EmptyInput);
        }
        let started = Instant::now();
        let mut rows = Vec::new();
        let mut summaries = Vec::new();
        let mut warnings = Vec::new();
        for (ci, cfg) in grid.iter().enumerate() {
            let config_id = format!("cfg{ci}");
            self.reference_sets(corpus, cfg)?;
            let first = rows.len();
            for t in transforms {
                let label = t.label();
                let (result, error, embedder) = match self.compute_with(corpus, Candidate::Corpus(corpus), t, cfg) {
                    Ok(rep) => {
                        warnings.extend(rep.warnings.iter().map(|w| format!("{config_id} {label}: {w}")));
                        (Some(rep.result), None, rep.embedder.id)
                    }
                    Err(e) => {
                        log::warn!("{config_id} {label} failed: {e}");
                        (None, Some(e.to_string()), cfg.embedder.key())
                    }
                };
                rows.push(ValidationRow {
                    config_id: config_id.clone(),
                    regime: cfg.regime.label().to_string(),
                    projection: cfg.projection.to_string(),
                    embedder,
                    transform: label,
                    invariant: t.invariant(),
                    result,
                    error,
                });
            }
            summaries.push(ConfigSummary {
                config_id,
                config: cfg.clone(),
                cles: grouped_cles(&rows[first..]),
            });
        }
        Ok(ValidationReport {
            corpus: corpus.fingerprint().to_string(),
            rows,
            summaries,
            warnings,
            wall_clock_s: started.elapsed().as_secs_f64(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: TransformLabel, invariant: bool, apa: f64) -> ValidationRow {
        ValidationRow {
            config_id: "cfg0".into(),
            regime: "L0".into(),
            projection: "NP".into(),
            embedder: "e, with comma".into(),
            transform: label,
            invariant,
            result: Some(ApaResult::from_distances(1.0 - apa, 1.0 + apa, 1.0).map(|mut r| {
                r.apa = apa;
                r
            }).unwrap()),
            error: None,
        }
    }

    #[test]
    fn cles_over_groups() {
        let rows = vec![
            row(TransformLabel::True, true, 1.0),
            row(TransformLabel::Noise, true, 0.9),
            row(TransformLabel::PitchShift, false, 0.1),
            row(TransformLabel::Substitute, false, 0.0),
        ];
        assert_eq!(grouped_cles(&rows), Some(1.0));
        assert_eq!(grouped_cles(&rows[..2]), None);
    }

    #[test]
    fn csv_layout() {
        let mut failed = row(TransformLabel::TimeShift, false, 0.0);
        failed.result = None;
        failed.error = Some("boom".into());
        let report = ValidationReport {
            corpus: "x".into(),
            rows: vec![row(TransformLabel::True, true, 0.75), failed],
            summaries: vec![],
            warnings: vec![],
            wall_clock_s: 0.0,
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert!(lines[1].starts_with("cfg0,L0,NP,\"e, with comma\",TRUE,invariant,0.75,"));
        assert!(lines[2].ends_with("TS,non-invariant,,,,,"));
    }
}
