//! Text format for values laid out on the `(f, g)` grid.
//!
//! A block of `# key: value` header lines is followed by a CSV table with one
//! row per age `f = 0..=F` and one column per error `g = 0..=G`. Cells outside
//! the state space are left empty. Numbers use Rust's shortest round-trip
//! formatting, so parsing an emitted file gives back identical values.
//!
//! ```text
//! # kind: policy
//! # F: 2
//! # G: 2
//! # N: 25
//! # p_t: 0.05
//! # ell_includes_sync_state: true
//! # tool_version: 0.1.0
//! # config_hash: 9f2c...
//! f,0,1,2
//! 0,0,,
//! 1,,0.1,
//! 2,,0.2,0.3
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use crate::chain::{build_state_space, ChainParams, StateSpace};
use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Policy,
    Distribution,
}

impl GridKind {
    fn as_str(&self) -> &'static str {
        match self {
            GridKind::Policy => "policy",
            GridKind::Distribution => "distribution",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub kind: GridKind,
    pub params: ChainParams,
    pub include_sync_state: bool,
    pub tool_version: String,
    pub config_hash: String,
    /// Indexed like the state space of `params`.
    pub values: Vec<f64>,
}

impl GridFile {
    pub fn new(
        kind: GridKind,
        params: ChainParams,
        include_sync_state: bool,
        config_hash: impl Into<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let space = build_state_space(&params)?;
        if values.len() != space.len() {
            return Err(Error::LengthMismatch { expected: space.len(), actual: values.len() });
        }
        Ok(GridFile {
            kind,
            params,
            include_sync_state,
            tool_version: TOOL_VERSION.to_string(),
            config_hash: config_hash.into(),
            values,
        })
    }

    pub fn space(&self) -> StateSpace {
        build_state_space(&self.params).expect("validated on construction")
    }

    pub fn emit(&self) -> String {
        let space = self.space();
        let p = &self.params;
        let mut out = String::new();
        let _ = writeln!(out, "# kind: {}", self.kind.as_str());
        let _ = writeln!(out, "# F: {}", p.max_age);
        let _ = writeln!(out, "# G: {}", p.max_error);
        let _ = writeln!(out, "# N: {}", p.num_sensors);
        let _ = writeln!(out, "# p_t: {}", p.p_move);
        let _ = writeln!(out, "# ell_includes_sync_state: {}", self.include_sync_state);
        let _ = writeln!(out, "# tool_version: {}", self.tool_version);
        let _ = writeln!(out, "# config_hash: {}", self.config_hash);
        out.push('f');
        for g in 0..=p.max_error {
            let _ = write!(out, ",{g}");
        }
        out.push('\n');
        for f in 0..=p.max_age {
            let _ = write!(out, "{f}");
            for g in 0..=p.max_error {
                out.push(',');
                if let Some(i) = space.index(f, g) {
                    let _ = write!(out, "{}", self.values[i]);
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut header: Vec<(usize, String, String)> = Vec::new();
        let mut body: Vec<(usize, &str)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                let (key, value) = rest
                    .split_once(':')
                    .ok_or_else(|| parse_err(line_no, "header line must look like `# key: value`"))?;
                header.push((line_no, key.trim().to_string(), value.trim().to_string()));
            } else {
                body.push((line_no, trimmed));
            }
        }
        let lookup = |key: &str| header.iter().find(|(_, k, _)| k == key).map(|(l, _, v)| (*l, v.as_str()));
        let required = |key: &str| lookup(key).ok_or_else(|| parse_err(1, format!("missing header `{key}`")));

        let (line, kind) = required("kind")?;
        let kind = match kind {
            "policy" => GridKind::Policy,
            "distribution" => GridKind::Distribution,
            other => return Err(parse_err(line, format!("unknown kind `{other}`"))),
        };
        let max_age: usize = parse_value(required("F")?)?;
        let max_error: usize = parse_value(required("G")?)?;
        let num_sensors: usize = parse_value(required("N")?)?;
        let p_move: f64 = parse_value(required("p_t")?)?;
        let include_sync_state = match lookup("ell_includes_sync_state") {
            Some(v) => parse_value(v)?,
            None => true,
        };
        let tool_version = lookup("tool_version").map(|(_, v)| v.to_string()).unwrap_or_default();
        let config_hash = lookup("config_hash").map(|(_, v)| v.to_string()).unwrap_or_default();
        let params = ChainParams::new(p_move, max_age, max_error, num_sensors)
            .map_err(|e| parse_err(required("F").map(|(l, _)| l).unwrap_or(1), e.to_string()))?;
        let space = build_state_space(&params)?;

        let mut rows = body.into_iter();
        let (line, columns) = rows.next().ok_or_else(|| parse_err(text.lines().count().max(1), "grid is empty"))?;
        let expected_header: Vec<String> =
            std::iter::once("f".to_string()).chain((0..=max_error).map(|g| g.to_string())).collect();
        if columns.split(',').map(str::trim).ne(expected_header.iter().map(String::as_str)) {
            return Err(parse_err(line, format!("column header must be `{}`", expected_header.join(","))));
        }

        let mut values = vec![f64::NAN; space.len()];
        let mut seen_rows = 0;
        for (line, row) in rows {
            let cells: Vec<&str> = row.split(',').map(str::trim).collect();
            if cells.len() != max_error + 2 {
                return Err(parse_err(line, format!("expected {} fields, found {}", max_error + 2, cells.len())));
            }
            let f: usize = cells[0].parse().map_err(|_| parse_err(line, format!("bad age `{}`", cells[0])))?;
            if f != seen_rows {
                return Err(parse_err(line, format!("expected row for f = {seen_rows}, found {f}")));
            }
            if f > max_age {
                return Err(parse_err(line, format!("age {f} exceeds F = {max_age}")));
            }
            for (g, cell) in cells[1..].iter().enumerate() {
                match (space.index(f, g), cell.is_empty()) {
                    (Some(i), false) => {
                        values[i] = cell
                            .parse()
                            .map_err(|_| parse_err(line, format!("bad number `{cell}` at (f={f}, g={g})")))?;
                    }
                    (Some(_), true) => return Err(parse_err(line, format!("missing value at (f={f}, g={g})"))),
                    (None, false) => {
                        return Err(parse_err(line, format!("value given for invalid state (f={f}, g={g})")))
                    }
                    (None, true) => {}
                }
            }
            seen_rows += 1;
        }
        if seen_rows != max_age + 1 {
            return Err(parse_err(
                text.lines().count().max(1),
                format!("expected {} grid rows, found {seen_rows}", max_age + 1),
            ));
        }
        Ok(GridFile { kind, params, include_sync_state, tool_version, config_hash, values })
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_value<T: FromStr>((line, raw): (usize, &str)) -> Result<T> {
    raw.parse().map_err(|_| parse_err(line, format!("cannot parse `{raw}`")))
}
