//! Attention audit: one record per instance pairing every attention weight
//! with the oracle relevance, plus the CSV renderings the run directory keeps.

use crate::error::{Error, Result};
use crate::harness::metrics::MetricsReport;
use crate::model::MilModel;
use crate::synth::SyntheticStudy;

// ── Records ──

/// One audited instance. Single-branch models leave `attn_b`/`attn_c` unset.
#[derive(Clone, Debug)]
pub struct AuditRecord {
    pub study_id: String,
    pub instance: usize,
    pub attn_a: f64,
    pub attn_b: Option<f64>,
    pub attn_c: Option<f64>,
    pub oracle_relevance: f64,
}

/// Runs the model over a split and flattens every bag into audit records,
/// study order preserved, instances in bag order.
pub fn audit_split(model: &MilModel, studies: &[SyntheticStudy]) -> Result<Vec<AuditRecord>> {
    if studies.is_empty() {
        return Err(Error::Config("cannot audit an empty split".into()));
    }
    let mut records = Vec::new();
    for study in studies {
        let pred = model.predict(&study.bag_tensor())?;
        for (k, &rel) in study.oracle_relevance().iter().enumerate() {
            records.push(AuditRecord {
                study_id: study.id.clone(),
                instance: k,
                attn_a: pred.attn_a[k],
                attn_b: pred.attn_b.as_ref().map(|b| b[k]),
                attn_c: pred.attn_c.as_ref().map(|c| c[k]),
                oracle_relevance: rel,
            });
        }
    }
    Ok(records)
}

// ── CSV renderings ──

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Audit records as CSV; optional columns render empty for single-branch
/// models. Float formatting is the shortest round-trip form, so identical
/// runs produce identical bytes.
pub fn audit_csv(records: &[AuditRecord]) -> String {
    let mut out = String::from("study_id,instance,attn_a,attn_b,attn_c,oracle_relevance\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.study_id,
            r.instance,
            r.attn_a,
            opt_cell(r.attn_b),
            opt_cell(r.attn_c),
            r.oracle_relevance
        ));
    }
    out
}

/// Rank curve as CSV rows of (rank, mean oracle relevance).
pub fn curve_csv(curve: &[f64]) -> String {
    let mut out = String::from("rank,mean_oracle_relevance\n");
    for (i, v) in curve.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, v));
    }
    out
}

/// Header for the per-seed metrics CSV.
pub const METRICS_CSV_HEADER: &str = "seed,best_epoch,epochs_run,val_balanced_accuracy,\
test_balanced_accuracy,auroc_no_vs_some,auroc_significant_vs_not,auroc_early_vs_significant,\
c00,c01,c02,c10,c11,c12,c20,c21,c22\n";

/// One metrics CSV row for a seeded run.
pub fn metrics_csv_row(
    seed: u64,
    best_epoch: usize,
    epochs_run: usize,
    val_balanced: f64,
    report: &MetricsReport,
) -> String {
    let c = &report.confusion;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        seed,
        best_epoch,
        epochs_run,
        val_balanced,
        report.balanced_accuracy,
        report.aurocs.no_vs_some,
        report.aurocs.significant_vs_not,
        report.aurocs.early_vs_significant,
        c[0][0], c[0][1], c[0][2], c[1][0], c[1][1], c[1][2], c[2][0], c[2][1], c[2][2]
    )
}

// ── Tests ──
