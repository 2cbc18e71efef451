use super::{CellComparison, IoError};
use crate::sim::bench::BenchmarkTable;
use crate::sim::{CurrentProfile, Interpolation, SimulationTrace};
use std::fmt::Write as _;
use std::path::Path;

const HEADER_DIRECTIVE: &str = "interpolation=";

/// Loads a `t_s,I_A` profile. An optional first line
/// `# interpolation=linear` (or `zero-order-hold`, the default) selects how
/// values between breakpoints are filled.
pub fn load_profile(path: impl AsRef<Path>) -> Result<CurrentProfile, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IoError::fs(path, e))?;
    parse_profile(&text, path)
}

pub fn parse_profile(text: &str, path: &Path) -> Result<CurrentProfile, IoError> {
    let mut interpolation = Interpolation::default();
    let mut body = text;
    if let Some(first) = text.lines().next() {
        if let Some(comment) = first.trim().strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix(HEADER_DIRECTIVE) {
                interpolation = value.parse().map_err(|e: String| IoError::table(path, e))?;
            }
            body = &text[first.len()..];
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(body.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| IoError::table(path, e.to_string()))?
        .clone();
    if header.len() != 2 {
        return Err(IoError::table(
            path,
            format!("profile needs two columns t_s,I_A, found {}", header.len()),
        ));
    }
    let mut breakpoints = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IoError::table(path, e.to_string()))?;
        let field = |i: usize| -> Result<f64, IoError> {
            record[i].parse::<f64>().map_err(|e| {
                IoError::table(path, format!("row {}: cannot parse '{}': {e}", line + 1, &record[i]))
            })
        };
        breakpoints.push((field(0)?, field(1)?));
    }
    CurrentProfile::new(breakpoints, interpolation).map_err(|source| IoError::Profile {
        path: path.to_path_buf(),
        source,
    })
}

/// Column names of an `n`-cell trace.
pub fn trace_header(n: usize) -> Vec<String> {
    let mut names = vec!["t_s".to_string(), "I_A".to_string()];
    for k in 1..=n {
        names.push(format!("i_{k}_A"));
        names.push(format!("z_{k}"));
        names.push(format!("w_{k}_V"));
        names.push(format!("v_{k}_V"));
    }
    names.push("pack_V".to_string());
    names
}

fn push_value(line: &mut String, v: f64) {
    line.push(',');
    write!(line, "{v:.8e}").expect("writing to a String cannot fail");
}

/// Writes the trace as CSV, nine significant digits per value.
pub fn write_trace(trace: &SimulationTrace, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut out = trace_header(trace.n_cells).join(",");
    out.push('\n');
    for s in &trace.samples {
        let mut line = format!("{:.8e}", s.time);
        push_value(&mut line, s.applied_current);
        for k in 0..trace.n_cells {
            push_value(&mut line, s.currents[k]);
            push_value(&mut line, s.soc[k]);
            push_value(&mut line, s.relaxation[k]);
            push_value(&mut line, s.cell_voltages[k]);
        }
        push_value(&mut line, s.pack_voltage);
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| IoError::fs(path, e))
}

/// A trace CSV read back as numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub n_cells: usize,
    pub rows: Vec<Vec<f64>>,
}

impl TraceTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn column(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[idx]).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.column(0)
    }

    pub fn applied_currents(&self) -> Vec<f64> {
        self.column(1)
    }

    /// Branch current of cell `k` (0-based).
    pub fn currents(&self, k: usize) -> Vec<f64> {
        self.column(2 + 4 * k)
    }

    pub fn soc(&self, k: usize) -> Vec<f64> {
        self.column(3 + 4 * k)
    }

    pub fn pack_voltages(&self) -> Vec<f64> {
        self.column(2 + 4 * self.n_cells)
    }
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<TraceTable, IoError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => IoError::fs(path, io),
            other => IoError::table(path, format!("{other:?}")),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| IoError::table(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 7 || (header.len() - 3) % 4 != 0 {
        return Err(IoError::table(
            path,
            format!("a trace has 2 + 4n + 1 columns, found {}", header.len()),
        ));
    }
    let n_cells = (header.len() - 3) / 4;
    if header != trace_header(n_cells) {
        return Err(IoError::table(
            path,
            format!("unexpected trace header, expected {}", trace_header(n_cells).join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IoError::table(path, e.to_string()))?;
        let row = record
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IoError::table(path, format!("row {}: {e}", line + 1)))?;
        rows.push(row);
    }
    Ok(TraceTable { n_cells, rows })
}

pub fn write_benchmark(table: &BenchmarkTable, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(table).expect("benchmark serialization cannot fail");
    std::fs::write(path, text + "\n").map_err(|e| IoError::fs(path, e))
}

/// Per-cell comparison table as `cell,mse_A2,max_abs_error_A`.
pub fn write_comparison(rows: &[CellComparison], path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut out = String::from("cell,mse_A2,max_abs_error_A\n");
    for r in rows {
        writeln!(out, "{},{:.8e},{:.8e}", r.cell, r.mse, r.max_abs_error).expect("writing to a String cannot fail");
    }
    std::fs::write(path, out).map_err(|e| IoError::fs(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ProfileError;

    #[test]
    fn profile_directive_and_defaults() {
        let p = parse_profile("t_s,I_A\n0,3.9\n", Path::new("p")).unwrap();
        assert_eq!(p.interpolation(), Interpolation::ZeroOrderHold);
        assert_eq!(p.eval(1000.0), 3.9);
        let p = parse_profile("# interpolation=linear\nt_s,I_A\n0,0\n10,5\n", Path::new("p")).unwrap();
        assert_eq!(p.interpolation(), Interpolation::Linear);
        assert_eq!(p.eval(4.0), 2.0);
    }

    #[test]
    fn profile_errors() {
        assert!(matches!(
            parse_profile("t_s,I_A\n0,1\n5,1\n2,1\n", Path::new("p")),
            Err(IoError::Profile {
                source: ProfileError::NonMonotoneTime { index: 2, .. },
                ..
            })
        ));
        assert!(matches!(
            parse_profile("t_s,I_A\n", Path::new("p")),
            Err(IoError::Profile {
                source: ProfileError::EmptyProfile,
                ..
            })
        ));
        assert!(parse_profile("t_s,I_A\n0,abc\n", Path::new("p")).is_err());
        assert!(parse_profile("# interpolation=cubic\nt_s,I_A\n0,1\n", Path::new("p")).is_err());
    }

    #[test]
    fn header_width() {
        let h = trace_header(2);
        assert_eq!(h.len(), 11);
        assert_eq!(h[2], "i_1_A");
        assert_eq!(h[10], "pack_V");
    }
}
