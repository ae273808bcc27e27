use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Static per-individual covariates.
///
/// `columns` holds named numeric covariates (`c1`, `c2`, ... plus any
/// model-specific extras such as `zbar` or `unobserved`), stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Covariates {
    pub ids: Vec<String>,
    pub community: Option<Vec<usize>>,
    pub positions: Option<Vec<[f64; 2]>>,
    names: Vec<String>,
    values: Vec<f64>,
}

impl Covariates {
    pub fn new(
        ids: Vec<String>,
        community: Option<Vec<usize>>,
        positions: Option<Vec<[f64; 2]>>,
        names: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(Error::Config("covariates need at least one individual".into()));
        }
        if values.len() != n * names.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} covariate values for {n} rows x {} columns",
                values.len(),
                names.len()
            )));
        }
        if community.as_ref().is_some_and(|c| c.len() != n)
            || positions.as_ref().is_some_and(|p| p.len() != n)
        {
            return Err(Error::ShapeMismatch("covariate columns differ in length".into()));
        }
        Ok(Covariates {
            ids,
            community,
            positions,
            names,
            values,
        })
    }

    /// Individuals numbered `0..n` with the given columns.
    pub fn from_columns(columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = columns.first().map(|c| c.1.len()).unwrap_or(0);
        let names: Vec<String> = columns.iter().map(|c| c.0.clone()).collect();
        let mut values = Vec::with_capacity(n * names.len());
        for i in 0..n {
            for (_, col) in &columns {
                values.push(*col.get(i).ok_or_else(|| {
                    Error::ShapeMismatch("covariate columns differ in length".into())
                })?);
            }
        }
        Covariates::new((0..n).map(|i| i.to_string()).collect(), None, None, names, values)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|c| c == name)?;
        let k = self.names.len();
        Some((0..self.len()).map(|i| self.values[i * k + j]).collect())
    }

    pub fn require_column(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name)
            .ok_or_else(|| Error::Config(format!("missing covariate column `{name}`")))
    }

    pub fn require_positions(&self) -> Result<&[[f64; 2]]> {
        self.positions
            .as_deref()
            .ok_or_else(|| Error::Config("missing spatial columns `z1`, `z2`".into()))
    }

    pub fn require_community(&self) -> Result<&[usize]> {
        self.community
            .as_deref()
            .ok_or(Error::MissingCommunity { individual: 0 })
    }

    /// Adds or replaces a named column.
    pub fn set_column(&mut self, name: &str, col: &[f64]) -> Result<()> {
        if col.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "column `{name}` has {} rows, expected {}",
                col.len(),
                self.len()
            )));
        }
        let k = self.names.len();
        if let Some(j) = self.names.iter().position(|c| c == name) {
            for (i, &v) in col.iter().enumerate() {
                self.values[i * k + j] = v;
            }
        } else {
            let mut values = Vec::with_capacity(self.len() * (k + 1));
            for (i, &v) in col.iter().enumerate() {
                values.extend_from_slice(&self.values[i * k..(i + 1) * k]);
                values.push(v);
            }
            self.values = values;
            self.names.push(name.to_string());
        }
        Ok(())
    }

    /// Parses `id, community?, z1?, z2?, <named columns>`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let find = |h: &str| headers.iter().position(|x| x == h);
        let id_col = find("id").ok_or(Error::Parse {
            row: 1,
            message: "missing `id` column".into(),
        })?;
        let comm_col = find("community");
        let z_cols = match (find("z1"), find("z2")) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => {
                return Err(Error::Parse {
                    row: 1,
                    message: "`z1` and `z2` must appear together".into(),
                })
            }
        };
        let reserved = |j: usize| {
            j == id_col || Some(j) == comm_col || z_cols.is_some_and(|(a, b)| j == a || j == b)
        };
        let named: Vec<usize> = (0..headers.len()).filter(|&j| !reserved(j)).collect();

        let mut ids = Vec::new();
        let mut community = comm_col.map(|_| Vec::new());
        let mut positions = z_cols.map(|_| Vec::new());
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec?;
            let num = |j: usize| -> Result<f64> {
                let s = rec.get(j).unwrap_or("");
                s.parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    message: format!("column `{}`: cannot parse `{s}` as a number", headers[j]),
                })
            };
            ids.push(rec.get(id_col).unwrap_or("").to_string());
            if let (Some(c), Some(j)) = (community.as_mut(), comm_col) {
                let s = rec.get(j).unwrap_or("");
                c.push(s.parse::<usize>().map_err(|_| Error::Parse {
                    row,
                    message: format!("column `community`: cannot parse `{s}` as a label"),
                })?);
            }
            if let (Some(p), Some((a, b))) = (positions.as_mut(), z_cols) {
                p.push([num(a)?, num(b)?]);
            }
            for &j in &named {
                values.push(num(j)?);
            }
        }
        Covariates::new(
            ids,
            community,
            positions,
            named.iter().map(|&j| headers[j].clone()).collect(),
            values,
        )
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string()];
        if self.community.is_some() {
            header.push("community".into());
        }
        if self.positions.is_some() {
            header.push("z1".into());
            header.push("z2".into());
        }
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        let k = self.names.len();
        for i in 0..self.len() {
            let mut rec = vec![self.ids[i].clone()];
            if let Some(c) = &self.community {
                rec.push(c[i].to_string());
            }
            if let Some(p) = &self.positions {
                rec.push(format!("{}", p[i][0]));
                rec.push(format!("{}", p[i][1]));
            }
            rec.extend(self.values[i * k..(i + 1) * k].iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
