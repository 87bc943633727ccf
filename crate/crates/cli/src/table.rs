//! Minimal reader for the numeric CSV files written by this tool.

use crate::CliError;

/// Numeric table with named columns. Lines starting with `#` are schema
/// comments and are kept separately.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut comments = Vec::new();
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                comments.push(c.trim().to_string());
                continue;
            }
            let cells = line.split(',').map(str::trim);
            match &columns {
                None => columns = Some(cells.map(String::from).collect()),
                Some(cols) => {
                    let row = cells
                        .map(|c| {
                            c.parse::<f64>()
                                .map_err(|_| CliError::Config(format!("line {}: `{c}` is not a number", i + 1)))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    if row.len() != cols.len() {
                        return Err(CliError::Config(format!(
                            "line {}: {} cells for {} columns",
                            i + 1,
                            row.len(),
                            cols.len()
                        )));
                    }
                    rows.push(row);
                }
            }
        }
        let columns = columns.ok_or_else(|| CliError::Config("CSV has no header row".into()))?;
        Ok(Self { comments, columns, rows })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let j = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::Config(format!("no column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }
}
