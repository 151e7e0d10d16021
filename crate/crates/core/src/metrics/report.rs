use std::fmt::Write;

use super::{compute_metrics, AggregateReport, ConfusionMatrix, Metric, MetricsError, MetricsReport};

/// One fold's contribution to a report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFold {
    pub fold: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"))
}

/// CSV with header `fold,tp,fp,tn,fn,accuracy,sensitivity,specificity,precision,f1`.
/// Undefined metrics are written as empty fields.
pub fn metrics_csv(folds: &[ReportFold]) -> String {
    let mut out = String::from("fold,tp,fp,tn,fn,accuracy,sensitivity,specificity,precision,f1\n");
    for f in folds {
        let c = &f.confusion;
        write!(out, "{},{},{},{},{}", f.fold, c.tp, c.fp, c.tn, c.fn_).unwrap();
        for m in Metric::ALL {
            out.push(',');
            if let Some(v) = f.metrics.get(m) {
                write!(out, "{v:.6}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

/// Reads back what [`metrics_csv`] wrote. Metrics are recomputed from the
/// confusion counts rather than trusted from the rounded columns.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<ReportFold>, MetricsError> {
    let bad = |e: &dyn std::fmt::Display| MetricsError::BadCsv(e.to_string());
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| bad(&e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| MetricsError::BadCsv(format!("missing column `{name}`")))
    };
    let cols = [col("fold")?, col("tp")?, col("fp")?, col("tn")?, col("fn")?];
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| bad(&e))?;
        let mut v = [0u64; 5];
        for (slot, &c) in v.iter_mut().zip(&cols) {
            let cell = row.get(c).unwrap_or("");
            *slot = cell
                .trim()
                .parse()
                .map_err(|_| MetricsError::BadCsv(format!("`{cell}` is not a count")))?;
        }
        let confusion = ConfusionMatrix { tp: v[1], fp: v[2], tn: v[3], fn_: v[4] };
        out.push(ReportFold {
            fold: v[0] as usize,
            confusion,
            metrics: compute_metrics(&confusion),
        });
    }
    Ok(out)
}

/// Human-readable report: header, configuration echo, per-fold tables and the
/// aggregate (mean ± population std-dev, max, excluded folds).
pub fn render_report(
    title: &str,
    config: &[(String, String)],
    folds: &[ReportFold],
    aggregate: &AggregateReport,
) -> String {
    let mut out = String::new();
    writeln!(out, "# {title}").unwrap();
    writeln!(out).unwrap();
    writeln!(out, "## configuration").unwrap();
    for (k, v) in config {
        writeln!(out, "{k} = {v}").unwrap();
    }
    writeln!(out).unwrap();
    writeln!(out, "## folds").unwrap();
    for f in folds {
        let c = &f.confusion;
        write!(
            out,
            "fold {:>2}  tp={:<5} fp={:<5} tn={:<5} fn={:<5}",
            f.fold, c.tp, c.fp, c.tn, c.fn_
        )
        .unwrap();
        for m in Metric::ALL {
            write!(out, " {}={}", m.name(), cell(f.metrics.get(m))).unwrap();
        }
        writeln!(out).unwrap();
    }
    writeln!(out).unwrap();
    writeln!(out, "## aggregate over {} fold(s)", aggregate.folds).unwrap();
    for m in Metric::ALL {
        let s = aggregate.summary(m);
        write!(
            out,
            "{:<12} mean={} std={} max={}",
            m.name(),
            cell(s.mean),
            cell(s.std_dev),
            cell(s.max)
        )
        .unwrap();
        if s.excluded > 0 {
            write!(out, " excluded={}", s.excluded).unwrap();
        }
        writeln!(out).unwrap();
    }
    out
}
