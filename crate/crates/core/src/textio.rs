//! Comma-separated tables with a config-echo header.
//!
//! Layout: zero or more `# key = value` lines, one header row, then data
//! rows. Readers skip the `#` lines.

use std::fmt::Display;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Parses one configuration value, naming the key on failure.
pub fn parse_field<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{}`", value.trim())))
}

/// Round to 9 significant decimal digits.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub echo: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            echo: Vec::new(),
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_echo(mut self, echo: &[(String, String)]) -> Self {
        self.echo.extend_from_slice(echo);
        self
    }

    pub fn push<D: Display>(&mut self, row: impl IntoIterator<Item = D>) {
        let row: Vec<String> = row.into_iter().map(|c| c.to_string()).collect();
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.echo {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut table = Table::default();
        let mut header_seen = false;
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    table.echo.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<String> = line.split(',').map(str::to_string).collect();
            if header_seen {
                if cells.len() != table.columns.len() {
                    return Err(Error::parse(
                        "table",
                        format!("row has {} cells, header has {}", cells.len(), table.columns.len()),
                    ));
                }
                table.rows.push(cells);
            } else {
                table.columns = cells;
                header_seen = true;
            }
        }
        if !header_seen {
            return Err(Error::parse("table", "no header row"));
        }
        Ok(table)
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::parse("table", format!("missing column `{name}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digits() {
        assert_eq!(round_sig9(1.234_567_891_23), 1.234_567_89);
        assert_eq!(round_sig9(-0.000_123_456_789_9), -0.000_123_456_79);
        assert_eq!(round_sig9(0.0), 0.0);
    }

    #[test]
    fn parse_render() {
        let mut t = Table::new(["a", "b"]).with_echo(&[("seed".into(), "3".into())]);
        t.push([1.5, 2.0]);
        let text = t.render();
        assert!(text.starts_with("# seed = 3\na,b\n1.5,2\n"));
        assert_eq!(Table::parse(&text).unwrap(), t);
    }
}
