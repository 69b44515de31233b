//! Fidelity reports for sets of tomography records.

use std::io::{self, Write};

use serde::Serialize;

use crate::tomography::{
    fidelity_closed_form, fidelity_ideal_reference, fidelity_variance, parse_records_str, FidelityEstimate,
    HadamardSign, IdealSide, TomographyRecord, VarianceMethod,
};
use crate::{Error, Result};

/// Bundled population tables.
pub const FIXTURES: [&str; 2] = ["table1", "table3"];

pub fn fixture_source(name: &str) -> Option<&'static str> {
    match name {
        "table1" => Some(include_str!("../../data/table1.csv")),
        "table3" => Some(include_str!("../../data/table3.csv")),
        _ => None,
    }
}

pub fn load_fixture(name: &str) -> Result<Vec<TomographyRecord>> {
    let src = fixture_source(name)
        .ok_or_else(|| Error::Config(format!("unknown fixture {name:?}; known: {}", FIXTURES.join(", "))))?;
    parse_records_str(src)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub ci68: f64,
}

impl From<FidelityEstimate> for Estimate {
    fn from(e: FidelityEstimate) -> Self {
        Estimate { value: e.value, ci68: e.ci68 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub label: String,
    pub shots: u64,
    pub fidelity: Estimate,
    pub ideal_initial: Estimate,
    pub ideal_final: Estimate,
    /// Polynomial form, for the gates that have one.
    pub closed_form: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableReport {
    pub rows: Vec<TableRow>,
}

pub fn reproduce_tables(records: &[TomographyRecord], method: VarianceMethod, sign: HadamardSign) -> TableReport {
    let rows = records
        .iter()
        .map(|rec| TableRow {
            label: rec.label.to_string(),
            shots: rec.shots,
            fidelity: fidelity_variance(rec, method).into(),
            ideal_initial: fidelity_ideal_reference(rec, IdealSide::Initial, method).into(),
            ideal_final: fidelity_ideal_reference(rec, IdealSide::Final, method).into(),
            closed_form: fidelity_closed_form(rec, sign).ok(),
        })
        .collect();
    TableReport { rows }
}

impl TableReport {
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{:<16} {:>15} {:>15} {:>15}", "gate", "fidelity", "ideal initial", "ideal final")?;
        let cell = |e: &Estimate| format!("{:.3}±{:.3}", e.value, e.ci68);
        for r in &self.rows {
            writeln!(
                out,
                "{:<16} {:>15} {:>15} {:>15}",
                r.label,
                cell(&r.fidelity),
                cell(&r.ideal_initial),
                cell(&r.ideal_final)
            )?;
        }
        Ok(())
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "label\tshots\tfidelity\tci68\tideal_initial\tci68_initial\tideal_final\tci68_final")?;
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                r.label,
                r.shots,
                r.fidelity.value,
                r.fidelity.ci68,
                r.ideal_initial.value,
                r.ideal_initial.ci68,
                r.ideal_final.value,
                r.ideal_final.ci68
            )?;
        }
        Ok(())
    }
}
