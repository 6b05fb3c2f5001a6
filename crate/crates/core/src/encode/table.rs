use std::io::{Read, Write};
use std::path::Path;

use super::EncodeError;

/// A raw data column, before any partitioning.
#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&i| v[i].clone()).collect()),
        }
    }

    fn cell(&self, i: usize) -> String {
        match self {
            Column::Numeric(v) => v[i].to_string(),
            Column::Categorical(v) => v[i].clone(),
        }
    }
}

/// Named predictor columns plus an optional response column.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Column>,
    pub response_name: String,
    pub labels: Option<Vec<String>>,
}

impl Table {
    pub fn new(names: Vec<String>, columns: Vec<Column>, response_name: &str, labels: Option<Vec<String>>) -> Result<Table, EncodeError> {
        if names.len() != columns.len() {
            return Err(EncodeError::Shape(format!("{} names for {} columns", names.len(), columns.len())));
        }
        let n = columns.first().map(Column::len).or(labels.as_ref().map(Vec::len)).unwrap_or(0);
        if columns.iter().any(|c| c.len() != n) || labels.as_ref().is_some_and(|l| l.len() != n) {
            return Err(EncodeError::Shape("columns differ in length".into()));
        }
        Ok(Table { names, columns, response_name: response_name.to_string(), labels })
    }

    /// Numeric predictors with a 0/1 response, as produced by the synthetic generators.
    pub fn numeric(names: &[&str], columns: Vec<Vec<f64>>, y: &[u8]) -> Result<Table, EncodeError> {
        Table::new(
            names.iter().map(|s| s.to_string()).collect(),
            columns.into_iter().map(Column::Numeric).collect(),
            "y",
            Some(y.iter().map(|v| v.to_string()).collect()),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map(Column::len).or(self.labels.as_ref().map(Vec::len)).unwrap_or(0)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.names.iter().position(|n| n == name).map(|i| &self.columns[i])
    }

    pub fn select(&self, rows: &[usize]) -> Table {
        Table {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            response_name: self.response_name.clone(),
            labels: self.labels.as_ref().map(|l| rows.iter().map(|&i| l[i].clone()).collect()),
        }
    }

    /// Reads a headed CSV. Columns whose every cell parses as a number are numeric.
    /// A missing response column yields an unlabelled table.
    pub fn from_csv<R: Read>(reader: R, response: &str) -> Result<Table, EncodeError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); header.len()];
        for rec in rdr.records() {
            let rec = rec?;
            for (col, v) in raw.iter_mut().zip(rec.iter()) {
                col.push(v.to_string());
            }
        }
        let mut names = Vec::new();
        let mut columns = Vec::new();
        let mut labels = None;
        for (name, cells) in header.into_iter().zip(raw) {
            if name == response {
                labels = Some(cells);
                continue;
            }
            let parsed: Option<Vec<f64>> = cells.iter().map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite())).collect();
            names.push(name);
            columns.push(match parsed {
                Some(v) => Column::Numeric(v),
                None => Column::Categorical(cells),
            });
        }
        Table::new(names, columns, response, labels)
    }

    pub fn read_csv(path: impl AsRef<Path>, response: &str) -> Result<Table, EncodeError> {
        Table::from_csv(std::fs::File::open(path)?, response)
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<(), EncodeError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.names.clone();
        if self.labels.is_some() {
            header.push(self.response_name.clone());
        }
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.columns.iter().map(|c| c.cell(i)).collect();
            if let Some(l) = &self.labels {
                rec.push(l[i].clone());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
