//! Text Gantt chart of per-stage activity from a cycle trace.

use std::fmt::Write;

use thiserror::Error;

use crate::sim::TraceRow;

#[derive(Debug, Error, PartialEq)]
pub enum GanttError {
    #[error("trace line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("window {from}..{to} lies outside the trace (cycles 0..{end})")]
    Window { from: u64, to: u64, end: u64 },
}

const STATES: [(&str, char); 5] = [
    ("busy", '#'),
    ("mem", 'M'),
    ("fifo_full", 'F'),
    ("fifo_empty", 'E'),
    ("idle", '.'),
];

pub fn glyph(state: &str) -> char {
    STATES.iter().find(|(s, _)| *s == state).map_or('?', |&(_, g)| g)
}

/// Reads the `cycle,stage,state` CSV written next to each report.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>, GanttError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.starts_with("cycle") || line.trim().is_empty() {
            continue;
        }
        let err = |detail: &str| GanttError::Parse { line: i + 1, detail: detail.to_string() };
        let mut f = line.split(',');
        let (Some(c), Some(s), Some(st), None) = (f.next(), f.next(), f.next(), f.next()) else {
            return Err(err("expected three fields"));
        };
        let cycle = c.trim().parse().map_err(|_| err("bad cycle"))?;
        let stage = s.trim().parse().map_err(|_| err("bad stage"))?;
        let state = STATES
            .iter()
            .find(|(n, _)| *n == st.trim())
            .map(|&(n, _)| n)
            .ok_or_else(|| err("unknown state"))?;
        rows.push(TraceRow { cycle, stage, state });
    }
    Ok(rows)
}

/// One row per stage and one column per cycle in `from..to`. Cycles the
/// trace does not cover (it is capped) render as blanks.
pub fn render_gantt(rows: &[TraceRow], from: u64, to: u64) -> Result<String, GanttError> {
    let end = rows.iter().map(|r| r.cycle + 1).max().unwrap_or(0);
    let stages = rows.iter().map(|r| r.stage + 1).max().unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "cycles {from}..{to}  # busy  M mem stall  F fifo full  E fifo empty  . idle"
    );
    if to <= from {
        return Ok(out);
    }
    if from >= end {
        return Err(GanttError::Window { from, to, end });
    }
    let width = (to - from) as usize;
    let mut grid = vec![vec![' '; width]; stages];
    for r in rows.iter().filter(|r| r.cycle >= from && r.cycle < to) {
        grid[r.stage][(r.cycle - from) as usize] = glyph(r.state);
    }
    let label = format!("s{}", stages.saturating_sub(1)).len();
    for (s, row) in grid.iter().enumerate() {
        let line: String = row.iter().collect();
        let _ = writeln!(out, "{:<label$} |{}|", format!("s{s}"), line.trim_end());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(cycle: u64, stage: usize, state: &'static str) -> TraceRow {
        TraceRow { cycle, stage, state }
    }

    #[test]
    fn empty_window_is_header_only() {
        let rows = vec![row(0, 0, "busy")];
        let g = render_gantt(&rows, 0, 0).unwrap();
        assert_eq!(g.lines().count(), 1);
    }

    #[test]
    fn all_busy() {
        let rows: Vec<_> = (0..10).map(|c| row(c, 0, "busy")).collect();
        let g = render_gantt(&rows, 0, 10).unwrap();
        assert_eq!(g.lines().nth(1).unwrap(), "s0 |##########|");
    }

    #[test]
    fn glyphs_and_window() {
        let states = ["busy", "mem", "fifo_full", "fifo_empty", "idle"];
        let rows: Vec<_> = (0..5).flat_map(|c| [row(c, 0, states[c as usize]), row(c, 1, "busy")]).collect();
        let g = render_gantt(&rows, 1, 4).unwrap();
        let lines: Vec<&str> = g.lines().collect();
        assert_eq!(lines[1], "s0 |MFE|");
        assert_eq!(lines[2], "s1 |###|");
        assert!(matches!(render_gantt(&rows, 7, 9), Err(GanttError::Window { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row(0, 0, "busy"), row(0, 1, "fifo_empty"), row(1, 0, "mem")];
        let text = crate::sim::trace_csv(&rows);
        assert_eq!(parse_trace(&text).unwrap(), rows);
        assert!(parse_trace("cycle,stage,state\n0,0,napping\n").is_err());
    }
}
