//! CSV formats and the run manifest.
//!
//! All floating-point output uses 17 significant digits so files diff
//! bit-identically across runs and round-trip exactly through parsing.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::ensemble::EnsembleProfile;
use crate::error::Error;
use crate::grid::ParameterGrid;
use crate::moments::MomentSequence;
use crate::multiindex::{enumerate_multiindices, multiindex_count, MultiIndex};
use crate::Result;

/// Fixed 17-significant-digit formatting.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(token: &str, line: usize) -> Result<f64> {
    token
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: malformed number '{}'", token.trim())))
}

/// Writes a moment sequence as `k_1,...,k_d,state_i,value` rows.
pub fn write_moments_csv<W: Write>(m: &MomentSequence, out: &mut W) -> Result<()> {
    let d = m.param_dim();
    let mut header: Vec<String> = (1..=d).map(|j| format!("k_{j}")).collect();
    header.push("state_i".into());
    header.push("value".into());
    writeln!(out, "{}", header.join(","))?;
    for k in enumerate_multiindices(d, m.max_order()) {
        for ch in 0..m.state_dim() {
            let mut row: Vec<String> = k.entries().iter().map(|e| e.to_string()).collect();
            row.push((ch + 1).to_string());
            row.push(format_value(m.get(&k, ch).expect("dense sequence")));
            writeln!(out, "{}", row.join(","))?;
        }
    }
    Ok(())
}

/// Reads a moment sequence from its CSV form, inferring `(d, n, N)` and
/// requiring the index set to be dense.
pub fn read_moments_csv<R: BufRead>(reader: R) -> Result<MomentSequence> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(Error::Parse("empty moments file".into())),
    };
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 3 || cols[cols.len() - 2] != "state_i" || cols[cols.len() - 1] != "value" {
        return Err(Error::Parse(
            "expected header k_1,...,k_d,state_i,value".into(),
        ));
    }
    let d = cols.len() - 2;
    for (j, col) in cols[..d].iter().enumerate() {
        if *col != format!("k_{}", j + 1) {
            return Err(Error::Parse(format!(
                "expected index column k_{}, found '{col}'",
                j + 1
            )));
        }
    }

    let mut entries: Vec<(MultiIndex, usize, f64)> = Vec::new();
    let mut max_order = 0usize;
    let mut state_dim = 0usize;
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != d + 2 {
            return Err(Error::Parse(format!(
                "line {lineno}: expected {} fields, found {}",
                d + 2,
                fields.len()
            )));
        }
        let mut k = Vec::with_capacity(d);
        for f in &fields[..d] {
            let v: usize = f.trim().parse().map_err(|_| {
                Error::Parse(format!("line {lineno}: malformed index '{}'", f.trim()))
            })?;
            k.push(v);
        }
        let ch: usize = fields[d].trim().parse().map_err(|_| {
            Error::Parse(format!(
                "line {lineno}: malformed state index '{}'",
                fields[d].trim()
            ))
        })?;
        if ch == 0 {
            return Err(Error::Parse(format!(
                "line {lineno}: state indices are 1-based"
            )));
        }
        let value = parse_f64(fields[d + 1], lineno)?;
        if !value.is_finite() {
            return Err(Error::Parse(format!(
                "line {lineno}: non-finite value in column 'value'"
            )));
        }
        let k = MultiIndex::new(k);
        max_order = max_order.max(k.order());
        state_dim = state_dim.max(ch);
        entries.push((k, ch - 1, value));
    }
    if entries.is_empty() {
        return Err(Error::Parse("moments file has no data rows".into()));
    }
    let expected = multiindex_count(d, max_order) * state_dim;
    if entries.len() != expected {
        return Err(Error::Parse(format!(
            "moment index set is not dense: {} rows, expected {expected} \
             (orders 0..={max_order}, {state_dim} components)",
            entries.len()
        )));
    }
    let mut seq = MomentSequence::zeros(d, state_dim, max_order);
    let mut seen = vec![false; expected];
    for (k, ch, value) in entries {
        let flat = crate::multiindex::graded_lex_rank(&k) * state_dim + ch;
        if seen[flat] {
            return Err(Error::Parse(format!("duplicate row for index {k}")));
        }
        seen[flat] = true;
        seq.set(&k, ch, value);
    }
    Ok(seq)
}

/// Writes a moment trace: the moments CSV with a leading `time` column.
pub fn write_moment_trace_csv<W: Write>(
    times: &[f64],
    sequences: &[MomentSequence],
    out: &mut W,
) -> Result<()> {
    if times.len() != sequences.len() {
        return Err(Error::DimensionMismatch(
            "one moment sequence per time sample required".into(),
        ));
    }
    if sequences.is_empty() {
        return Err(Error::InvalidArgument("empty moment trace".into()));
    }
    let d = sequences[0].param_dim();
    let mut header: Vec<String> = vec!["time".into()];
    header.extend((1..=d).map(|j| format!("k_{j}")));
    header.push("state_i".into());
    header.push("value".into());
    writeln!(out, "{}", header.join(","))?;
    let indices = enumerate_multiindices(d, sequences[0].max_order());
    for (t, m) in times.iter().zip(sequences) {
        for k in &indices {
            for ch in 0..m.state_dim() {
                let mut row = vec![format_value(*t)];
                row.extend(k.entries().iter().map(|e| e.to_string()));
                row.push((ch + 1).to_string());
                row.push(format_value(m.get(k, ch).expect("dense sequence")));
                writeln!(out, "{}", row.join(","))?;
            }
        }
    }
    Ok(())
}

/// Writes profile snapshots as
/// `time,node_index,beta_1..beta_d,x_1..x_n,u_1..u_l` rows; `controls[s]`
/// is the input in effect at `times[s]`.
pub fn write_trajectory_csv<W: Write>(
    grid: &ParameterGrid,
    state_dim: usize,
    times: &[f64],
    states: &[Vec<f64>],
    controls: &[Vec<f64>],
    out: &mut W,
) -> Result<()> {
    if times.len() != states.len() || times.len() != controls.len() {
        return Err(Error::DimensionMismatch(
            "trajectory arrays must share length".into(),
        ));
    }
    let d = grid.dim();
    let control_dim = controls.first().map_or(0, Vec::len);
    let mut header: Vec<String> = vec!["time".into(), "node_index".into()];
    header.extend((1..=d).map(|j| format!("beta_{j}")));
    header.extend((1..=state_dim).map(|i| format!("x_{i}")));
    header.extend((1..=control_dim).map(|i| format!("u_{i}")));
    writeln!(out, "{}", header.join(","))?;
    for (s, t) in times.iter().enumerate() {
        for p in 0..grid.len() {
            let mut row = vec![format_value(*t), p.to_string()];
            row.extend(grid.node(p).iter().map(|b| format_value(*b)));
            row.extend(
                states[s][p * state_dim..(p + 1) * state_dim]
                    .iter()
                    .map(|x| format_value(*x)),
            );
            row.extend(controls[s].iter().map(|u| format_value(*u)));
            writeln!(out, "{}", row.join(","))?;
        }
    }
    Ok(())
}

/// Writes `time,v` rows.
pub fn write_lyapunov_csv<W: Write>(times: &[f64], values: &[f64], out: &mut W) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch(
            "one value per time sample required".into(),
        ));
    }
    writeln!(out, "time,v")?;
    for (t, v) in times.iter().zip(values) {
        writeln!(out, "{},{}", format_value(*t), format_value(*v))?;
    }
    Ok(())
}

/// Writes `time,u_1..u_l` rows.
pub fn write_controls_csv<W: Write>(
    times: &[f64],
    controls: &[Vec<f64>],
    out: &mut W,
) -> Result<()> {
    if times.len() != controls.len() {
        return Err(Error::DimensionMismatch(
            "one control vector per time sample required".into(),
        ));
    }
    let control_dim = controls.first().map_or(0, Vec::len);
    let header: Vec<String> = std::iter::once("time".to_string())
        .chain((1..=control_dim).map(|i| format!("u_{i}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (t, u) in times.iter().zip(controls) {
        let mut row = vec![format_value(*t)];
        row.extend(u.iter().map(|v| format_value(*v)));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Writes a profile as `beta_1..beta_d,x_1..x_n` rows.
pub fn write_profile_csv<W: Write>(
    grid: &ParameterGrid,
    profile: &EnsembleProfile,
    out: &mut W,
) -> Result<()> {
    if grid.len() != profile.len() {
        return Err(Error::DimensionMismatch(
            "grid and profile must share node count".into(),
        ));
    }
    let d = grid.dim();
    let n = profile.state_dim();
    let mut header: Vec<String> = (1..=d).map(|j| format!("beta_{j}")).collect();
    header.extend((1..=n).map(|i| format!("x_{i}")));
    writeln!(out, "{}", header.join(","))?;
    for p in 0..grid.len() {
        let mut row: Vec<String> = grid.node(p).iter().map(|b| format_value(*b)).collect();
        row.extend(profile.node_state(p).iter().map(|x| format_value(*x)));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a profile CSV (`beta_1..beta_d,x_1..x_n`), inferring a uniform
/// midpoint grid from the node coordinates. One-dimensional data must be
/// strictly increasing and uniformly spaced; multi-dimensional data must be
/// a complete row-major tensor lattice.
pub fn read_profile_csv<R: BufRead>(reader: R) -> Result<(ParameterGrid, EnsembleProfile)> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(Error::Parse("empty profile file".into())),
    };
    let cols: Vec<String> = header.trim().split(',').map(str::to_string).collect();
    let d = cols.iter().take_while(|c| c.starts_with("beta_")).count();
    if d == 0 {
        return Err(Error::Parse(
            "expected header beta_1..beta_d,x_1..x_n".into(),
        ));
    }
    for (j, col) in cols[..d].iter().enumerate() {
        if *col != format!("beta_{}", j + 1) {
            return Err(Error::Parse(format!(
                "expected column beta_{}, found '{col}'",
                j + 1
            )));
        }
    }
    let n = cols.len() - d;
    if n == 0 {
        return Err(Error::Parse("profile has no state columns".into()));
    }
    for (i, col) in cols[d..].iter().enumerate() {
        if *col != format!("x_{}", i + 1) {
            return Err(Error::Parse(format!(
                "expected column x_{}, found '{col}'",
                i + 1
            )));
        }
    }

    let mut nodes: Vec<f64> = Vec::new();
    let mut states: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse(format!(
                "line {lineno}: expected {} fields, found {}",
                cols.len(),
                fields.len()
            )));
        }
        for (c, f) in fields.iter().enumerate() {
            let v = parse_f64(f, lineno)?;
            if !v.is_finite() {
                return Err(Error::Parse(format!(
                    "line {lineno}, column '{}': non-finite value",
                    cols[c]
                )));
            }
            if c < d {
                nodes.push(v);
            } else {
                states.push(v);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse("profile file has no data rows".into()));
    }

    let grid = infer_midpoint_grid(&nodes, d, rows)?;
    let profile = EnsembleProfile::from_raw(n, states, 0.0)?;
    Ok((grid, profile))
}

fn infer_midpoint_grid(nodes: &[f64], d: usize, rows: usize) -> Result<ParameterGrid> {
    // Per-axis sorted unique coordinate values.
    let mut axis_values: Vec<Vec<f64>> = vec![Vec::new(); d];
    for r in 0..rows {
        for j in 0..d {
            let v = nodes[r * d + j];
            if !axis_values[j].contains(&v) {
                axis_values[j].push(v);
            }
        }
    }
    let mut per_axis = Vec::with_capacity(d);
    let mut bounds = Vec::with_capacity(d);
    for (j, values) in axis_values.iter_mut().enumerate() {
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        if sorted.len() == 1 {
            bounds.push((sorted[0], sorted[0]));
            per_axis.push((sorted.clone(), vec![1.0]));
            continue;
        }
        let h = sorted[1] - sorted[0];
        if !(h > 0.0) {
            return Err(Error::Parse(format!(
                "axis beta_{} is not strictly increasing",
                j + 1
            )));
        }
        for w in sorted.windows(2) {
            let step = w[1] - w[0];
            if (step - h).abs() > 1e-9 * h.max(1.0) {
                return Err(Error::Parse(format!(
                    "axis beta_{} is not uniformly spaced (steps {h} vs {step})",
                    j + 1
                )));
            }
        }
        bounds.push((sorted[0] - 0.5 * h, sorted[sorted.len() - 1] + 0.5 * h));
        let weights = vec![h; sorted.len()];
        per_axis.push((sorted.clone(), weights));
    }
    let total: usize = per_axis.iter().map(|(v, _)| v.len()).product();
    if total != rows {
        return Err(Error::Parse(format!(
            "nodes do not form a complete tensor lattice: {rows} rows vs {total} lattice points"
        )));
    }
    let grid = ParameterGrid::tensor(bounds, per_axis);
    // The rows must already be in the grid's row-major order (this also
    // rejects non-monotone one-dimensional files).
    for p in 0..rows {
        for j in 0..d {
            if nodes[p * d + j] != grid.node(p)[j] {
                return Err(Error::Parse(format!(
                    "node rows are not in row-major (monotone) order at row {}",
                    p + 1
                )));
            }
        }
    }
    grid.validate()?;
    Ok(grid)
}

/// Writes `manifest.json` listing the files of a run.
pub fn write_manifest(dir: &Path, name: &str, files: &[PathBuf]) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    let mut body = String::from("{\n");
    body.push_str(&format!("  \"run\": \"{name}\",\n"));
    body.push_str("  \"files\": [\n");
    for (i, f) in files.iter().enumerate() {
        let rel = f
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| f.display().to_string());
        body.push_str(&format!(
            "    \"{rel}\"{}\n",
            if i + 1 < files.len() { "," } else { "" }
        ));
    }
    body.push_str("  ]\n}\n");
    fs::write(&path, body)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::BufReader;

    #[test]
    fn moments_round_trip_through_csv() {
        let m = MomentSequence::from_fn(2, 3, 4, |k, ch| {
            (k.entry(0) as f64) - 0.37 * (k.entry(1) as f64) + 1e-17 + ch as f64
        });
        let mut buf = Vec::new();
        write_moments_csv(&m, &mut buf).unwrap();
        let back = read_moments_csv(BufReader::new(&buf[..])).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn sparse_moment_files_are_rejected() {
        let text = "k_1,state_i,value\n0,1,1.0\n2,1,0.5\n";
        let err = read_moments_csv(BufReader::new(text.as_bytes())).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err}");
    }

    #[test]
    fn profile_round_trip_infers_the_midpoint_grid() {
        let text = "beta_1,x_1\n0.25,1.0\n0.5,1.0\n0.75,1.0\n";
        let (grid, profile) = read_profile_csv(BufReader::new(text.as_bytes())).unwrap();
        assert_eq!(grid.len(), 3);
        assert_eq!(grid.bounds()[0], (0.125, 0.875));
        for p in 0..3 {
            assert!((grid.weight(p) - 0.25).abs() < 1e-15);
            assert_eq!(profile.node_state(p)[0], 1.0);
        }
    }

    #[test]
    fn empty_and_malformed_profiles_are_rejected() {
        assert!(read_profile_csv(BufReader::new("".as_bytes())).is_err());
        assert!(read_profile_csv(BufReader::new("beta_1,x_1\n".as_bytes())).is_err());

        let nan = "beta_1,x_1\n0.25,NaN\n0.5,1.0\n0.75,1.0\n";
        let err = read_profile_csv(BufReader::new(nan.as_bytes())).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("x_1"), "{msg}");

        let nonuniform = "beta_1,x_1\n0.1,1.0\n0.2,1.0\n0.5,1.0\n";
        assert!(read_profile_csv(BufReader::new(nonuniform.as_bytes())).is_err());

        let nonmonotone = "beta_1,x_1\n0.75,1.0\n0.5,1.0\n0.25,1.0\n";
        assert!(read_profile_csv(BufReader::new(nonmonotone.as_bytes())).is_err());
    }

    #[test]
    fn two_dimensional_lattice_is_reconstructed() {
        let mut text = String::from("beta_1,beta_2,x_1\n");
        for b1 in [0.25, 0.75] {
            for b2 in [0.125, 0.375, 0.625, 0.875] {
                text.push_str(&format!("{b1},{b2},2.0\n"));
            }
        }
        let (grid, profile) = read_profile_csv(BufReader::new(text.as_bytes())).unwrap();
        assert_eq!(grid.len(), 8);
        assert_eq!(grid.dim(), 2);
        assert_eq!(profile.state_dim(), 1);
        assert!((grid.weight(0) - 0.5 * 0.25).abs() < 1e-15);
    }
}
