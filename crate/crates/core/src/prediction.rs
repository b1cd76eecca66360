//! Prediction TSV: `para_id, step, entity, action, before, after`, one line
//! per (entity, step), steps numbered from 1.

use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::{derive_actions, ActionKind, GridRow, LocationValue, StateGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PredictionRow {
    pub para_id: String,
    pub step: usize,
    pub entity: String,
    pub action: ActionKind,
    pub before: LocationValue,
    pub after: LocationValue,
}

/// Rows in procedure order, then step, then entity.
pub fn prediction_rows(grids: &[StateGrid]) -> Vec<PredictionRow> {
    let mut out = Vec::new();
    for g in grids {
        let actions: Vec<_> = g.rows.iter().map(|r| derive_actions(&r.cells)).collect();
        for t in 1..=g.steps() {
            for (row, acts) in g.rows.iter().zip(&actions) {
                out.push(PredictionRow {
                    para_id: g.procedure_id.clone(),
                    step: t,
                    entity: row.entity.clone(),
                    action: acts[t - 1].kind(),
                    before: row.cells[t - 1].clone(),
                    after: row.cells[t].clone(),
                });
            }
        }
    }
    out
}

pub fn write_predictions(grids: &[StateGrid]) -> String {
    let mut out = String::new();
    for r in prediction_rows(grids) {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.para_id, r.step, r.entity, r.action, r.before, r.after
        )
        .expect("write to string");
    }
    out
}

/// Reads a prediction TSV back into grids. Consecutive rows of an entity
/// must chain (`before` equals the previous `after`) and the action column
/// must agree with the location change.
pub fn parse_predictions(text: &str, file: &str) -> Result<Vec<StateGrid>> {
    let mut grids: Vec<StateGrid> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(Error::format(
                file,
                line_no,
                format!("expected 6 columns, found {}", cols.len()),
            ));
        }
        let step: usize = cols[1]
            .trim()
            .parse()
            .map_err(|_| Error::format(file, line_no, format!("bad step {:?}", cols[1])))?;
        let action = ActionKind::parse(cols[3])
            .ok_or_else(|| Error::format(file, line_no, format!("bad action {:?}", cols[3])))?;
        let parse_loc = |s: &str| LocationValue::parse(s).map_err(|e| Error::format(file, line_no, e.to_string()));
        let (before, after) = (parse_loc(cols[4])?, parse_loc(cols[5])?);
        let derived = derive_actions(&[before.clone(), after.clone()])[0].kind();
        if derived != action {
            return Err(Error::format(
                file,
                line_no,
                format!("action {action} inconsistent with {before} -> {after} (implies {derived})"),
            ));
        }

        let para = cols[0].trim();
        let gi = match grids.iter().position(|g| g.procedure_id == para) {
            Some(gi) => gi,
            None => {
                grids.push(StateGrid {
                    procedure_id: para.to_string(),
                    rows: Vec::new(),
                });
                grids.len() - 1
            }
        };
        let grid = &mut grids[gi];
        let entity = cols[2].trim();
        let row = match grid.rows.iter().position(|r| r.entity == entity) {
            Some(ri) => &mut grid.rows[ri],
            None => {
                grid.rows.push(GridRow {
                    entity: entity.to_string(),
                    cells: Vec::new(),
                });
                grid.rows.last_mut().expect("just pushed")
            }
        };
        if row.cells.is_empty() {
            if step != 1 {
                return Err(Error::format(
                    file,
                    line_no,
                    format!("{para}/{entity}: first step is {step}, expected 1"),
                ));
            }
            row.cells.push(before);
        } else {
            if step != row.cells.len() {
                return Err(Error::format(
                    file,
                    line_no,
                    format!("{para}/{entity}: expected step {}, found {step}", row.cells.len()),
                ));
            }
            if row.cells.last() != Some(&before) {
                return Err(Error::format(
                    file,
                    line_no,
                    format!("{para}/{entity}: before location {before} does not match previous after location"),
                ));
            }
        }
        row.cells.push(after);
    }
    for g in &grids {
        let m = g.steps();
        if let Some(r) = g.rows.iter().find(|r| r.cells.len() != m + 1) {
            return Err(Error::Invalid(format!(
                "{}/{}: {} steps, other entities have {m}",
                g.procedure_id,
                r.entity,
                r.cells.len() - 1
            )));
        }
    }
    Ok(grids)
}
