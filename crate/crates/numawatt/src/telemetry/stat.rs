//! Parser for `/proc/<pid>/task/<tid>/stat` lines.

use crate::error::{Error, Result};

/// Fields extracted from one stat line.
///
/// The `comm` field (field 2) may itself contain spaces and parentheses, so
/// the line is split at the LAST closing parenthesis; everything after it is
/// whitespace-delimited.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatLine {
    pub pid: i32,
    pub comm: String,
    pub state: char,
    pub ppid: i32,
    pub utime_ticks: u64,
    pub stime_ticks: u64,
    pub processor: u32,
}

impl StatLine {
    pub fn utime_seconds(&self, clk_tck: u64) -> f64 {
        self.utime_ticks as f64 / clk_tck as f64
    }

    pub fn stime_seconds(&self, clk_tck: u64) -> f64 {
        self.stime_ticks as f64 / clk_tck as f64
    }
}

// Field positions counted from 1 in proc(5); after stripping "pid (comm)",
// `state` is the first remaining token, so utime (14) lands at offset 11.
const STATE_IDX: usize = 0;
const PPID_IDX: usize = 1;
const UTIME_IDX: usize = 11;
const STIME_IDX: usize = 12;
const PROCESSOR_IDX: usize = 36;

/// Parses one stat line. `context` names the task for error messages.
pub fn parse_task_stat(raw_line: &str, context: &str) -> Result<StatLine> {
    let line = raw_line.trim_end();
    let open = line
        .find('(')
        .ok_or_else(|| Error::parse(context, "missing '(' around comm"))?;
    let close = line
        .rfind(')')
        .ok_or_else(|| Error::parse(context, "missing ')' around comm"))?;
    if close < open {
        return Err(Error::parse(context, "mismatched parentheses around comm"));
    }
    let pid: i32 = line[..open]
        .trim()
        .parse()
        .map_err(|_| Error::parse(context, "bad pid field"))?;
    let comm = line[open + 1..close].to_string();

    let rest: Vec<&str> = line[close + 1..].split_ascii_whitespace().collect();
    if rest.len() <= PROCESSOR_IDX {
        return Err(Error::parse(
            context,
            format!("expected at least {} fields after comm, got {}", PROCESSOR_IDX + 1, rest.len()),
        ));
    }
    let state = rest[STATE_IDX]
        .chars()
        .next()
        .ok_or_else(|| Error::parse(context, "empty state field"))?;
    let num = |idx: usize, name: &str| -> Result<u64> {
        rest[idx]
            .parse()
            .map_err(|_| Error::parse(context, format!("bad {name} field: {:?}", rest[idx])))
    };
    Ok(StatLine {
        pid,
        comm,
        state,
        ppid: num(PPID_IDX, "ppid")? as i32,
        utime_ticks: num(UTIME_IDX, "utime")?,
        stime_ticks: num(STIME_IDX, "stime")?,
        processor: num(PROCESSOR_IDX, "processor")? as u32,
    })
}

/// Builds a stat line from its logical fields; the reference inverse of
/// [`parse_task_stat`], also used to fabricate fixtures.
pub fn format_stat_line(
    pid: i32,
    comm: &str,
    state: char,
    ppid: i32,
    utime: u64,
    stime: u64,
    processor: u32,
) -> String {
    let mut fields: Vec<String> = vec!["0".into(); 52];
    fields[0] = pid.to_string();
    fields[1] = format!("({comm})");
    fields[2] = state.to_string();
    fields[3] = ppid.to_string();
    fields[13] = utime.to_string();
    fields[14] = stime.to_string();
    fields[38] = processor.to_string();
    fields.join(" ")
}
