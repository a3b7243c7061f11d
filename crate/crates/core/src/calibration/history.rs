//! GA history CSV and the key-value result summary.

use std::fmt::Write as _;

use crate::calibration::{CalibrationResult, Gene, GeneValue, Genome};
use crate::error::{Error, Result};

pub const HISTORY_HEADER: &str = "generation,individual,tx_power,data_rate,noise_floor,rx_sensitivity,slow_model,fast_model,alpha,system_loss,sigma,nakagami_m,rmse";

/// One fitness evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationRecord {
    pub generation: usize,
    pub individual: usize,
    pub genome: Genome,
    pub rmse: f64,
}

fn gene_text(v: GeneValue) -> String {
    match v {
        GeneValue::Real(x) => format!("{x:.6}"),
        GeneValue::Rate(r) => r.mbps().to_string(),
        other => other.to_string(),
    }
}

/// One row per evaluation; genes in canonical order with six decimals,
/// rmse with nine.
pub fn history_to_csv(history: &[EvaluationRecord]) -> String {
    let mut out = String::with_capacity(128 * (history.len() + 1));
    out.push_str(HISTORY_HEADER);
    out.push('\n');
    for r in history {
        write!(out, "{},{}", r.generation, r.individual).unwrap();
        for gene in Gene::ALL {
            write!(out, ",{}", gene_text(r.genome.get(gene))).unwrap();
        }
        writeln!(out, ",{:.9}", r.rmse).unwrap();
    }
    out
}

pub fn parse_history_csv(document: &str) -> Result<Vec<EvaluationRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(document.as_bytes());
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    let expected: Vec<&str> = HISTORY_HEADER.split(',').collect();
    if header != expected {
        return Err(Error::document(
            "history csv",
            format!("expected header `{HISTORY_HEADER}`"),
        ));
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let field = |c: usize| row.get(c).unwrap_or("").trim();
        let int = |c: usize| {
            field(c)
                .parse::<usize>()
                .map_err(|_| Error::row(line, expected[c], "not a non-negative integer"))
        };
        let mut genome = Genome::table_default();
        for (k, gene) in Gene::ALL.into_iter().enumerate() {
            let v = GeneValue::parse(gene, field(k + 2))
                .map_err(|e| Error::row(line, gene.name(), e.to_string()))?;
            genome.set(gene, v)?;
        }
        let rmse: f64 = field(12)
            .parse()
            .map_err(|_| Error::row(line, "rmse", "not a number"))?;
        out.push(EvaluationRecord {
            generation: int(0)?,
            individual: int(1)?,
            genome,
            rmse,
        });
    }
    Ok(out)
}

/// `key = value` text: best rmse, evaluation count and the best genome
/// under its configuration keys.
pub fn result_summary(result: &CalibrationResult) -> String {
    let mut out = String::new();
    writeln!(out, "best_rmse = {:.9}", result.best_rmse).unwrap();
    writeln!(out, "evaluations = {}", result.evaluations).unwrap();
    for gene in Gene::ALL {
        writeln!(
            out,
            "{} = {}",
            gene.name(),
            gene_text(result.best_genome.get(gene))
        )
        .unwrap();
    }
    out
}
