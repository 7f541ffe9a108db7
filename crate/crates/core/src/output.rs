//! CSV and JSON writers. Node and mode indices are written 1-indexed.

use std::io::Write;

use serde_json::{json, Value};

use crate::graph::{Medag, NodeSet};
use crate::sim::{MarginTable, MssReport, Trace};

/// Writes `k,node,mode,estimate,truth,abs_error`.
pub fn write_trace_csv<W: Write>(trace: &Trace, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "node", "mode", "estimate", "truth", "abs_error"])?;
    for k in 0..trace.steps() {
        for (idx, &node) in trace.nodes.iter().enumerate() {
            for j in 0..trace.lambdas.len() {
                w.write_record([
                    k.to_string(),
                    (node + 1).to_string(),
                    (j + 1).to_string(),
                    trace.estimates[k][idx][j].to_string(),
                    trace.truth[k][j].to_string(),
                    trace.errors[k][idx][j].abs().to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Sidecar summary of a trace.
pub fn trace_json(trace: &Trace) -> Value {
    let last = trace.steps() - 1;
    json!({
        "seed": trace.seed,
        "config_digest": trace.config_digest,
        "channel_digest": trace.channel_digest,
        "horizon": trace.horizon,
        "nodes": trace.nodes.iter().map(|n| n + 1).collect::<Vec<_>>(),
        "lambdas": trace.lambdas,
        "summary": {
            "initial_max_state_error": trace.max_state_error(0),
            "final_max_state_error": trace.max_state_error(last),
            "final_max_mode_error": trace.max_mode_error(last),
            "final_state_errors": trace.state_errors[last],
        },
    })
}

/// Writes `k,node,mean_sq_error,ci_half_width`.
pub fn write_mss_csv<W: Write>(report: &MssReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "node", "mean_sq_error", "ci_half_width"])?;
    for (k, row) in report.mean_sq.iter().enumerate() {
        for (idx, &node) in report.nodes.iter().enumerate() {
            w.write_record([
                k.to_string(),
                (node + 1).to_string(),
                row[idx].to_string(),
                report.ci_half_width[k][idx].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn mss_json(report: &MssReport) -> Value {
    let last = report.mean_sq.len() - 1;
    let ratios: Vec<f64> = report
        .mean_sq
        .last()
        .expect("at least one step")
        .iter()
        .zip(&report.mean_sq[0])
        .map(|(end, start)| if *start > 0.0 { end / start } else { 0.0 })
        .collect();
    json!({
        "trials": report.trials,
        "seed": report.seed,
        "horizon": report.horizon,
        "nodes": report.nodes.iter().map(|n| n + 1).collect::<Vec<_>>(),
        "rho": report.rho,
        "pbar": report.pbar,
        "rho_sq_pbar": report.margin,
        "criterion_satisfied": report.criterion_satisfied,
        "summary": {
            "initial_mean_sq": report.mean_sq[0],
            "final_mean_sq": report.mean_sq[last],
            "final_to_initial_ratio": ratios,
        },
    })
}

fn one_indexed(set: &NodeSet) -> Vec<usize> {
    set.iter().map(|i| i + 1).collect()
}

pub fn medag_json(medag: &Medag) -> Value {
    let levels: Vec<Vec<usize>> = medag.level_sets().iter().map(one_indexed).collect();
    let neighbors: serde_json::Map<String, Value> = medag
        .neighbors
        .iter()
        .enumerate()
        .filter(|(i, _)| !medag.sources.contains(i))
        .map(|(i, ns)| ((i + 1).to_string(), json!(ns.iter().map(|l| l + 1).collect::<Vec<_>>())))
        .collect();
    json!({
        "threshold": medag.threshold,
        "sources": one_indexed(&medag.sources),
        "depth": medag.depth(),
        "levels": levels,
        "neighbors": neighbors,
    })
}

/// Writes `p,m=3,m=4,...` rows of `ρ² p̄`.
pub fn write_margin_csv<W: Write>(table: &MarginTable, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["p".to_string()];
    header.extend(table.ms.iter().map(|m| format!("m={m}")));
    w.write_record(&header)?;
    for (p, row) in table.ps.iter().zip(&table.values) {
        let mut rec = vec![p.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_medag, Digraph};

    #[test]
    fn medag_document() {
        let g = Digraph::complete(5);
        let m = build_medag(&g, &NodeSet::from([0, 1, 2]), 1).unwrap();
        let v = medag_json(&m);
        assert_eq!(v["levels"], json!([[1, 2, 3], [4, 5]]));
        assert_eq!(v["neighbors"]["4"], json!([1, 2, 3]));
        assert!(v["neighbors"].get("1").is_none());
    }

    #[test]
    fn margin_csv_layout() {
        let table = MarginTable {
            rho: 2.0,
            f: 1,
            ms: vec![3, 4],
            ps: vec![0.0, 0.5],
            values: vec![vec![0.0, 0.0], vec![3.5, 2.0]],
        };
        let mut buf = Vec::new();
        write_margin_csv(&table, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "p,m=3,m=4\n0,0,0\n0.5,3.5,2\n");
    }
}
