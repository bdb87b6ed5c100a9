use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::manybody::{excitation_populations, DensityMatrix};

/// Time-stamped scalar observables; missing values are NaN and are written
/// as empty CSV cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSeries {
    times: Vec<f64>,
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl ObservableSeries {
    pub fn new(names: Vec<String>) -> Self {
        let values = vec![Vec::new(); names.len()];
        Self {
            times: Vec::new(),
            names,
            values,
        }
    }

    pub fn push(&mut self, t: f64, row: Vec<f64>) -> Result<()> {
        if row.len() != self.names.len() {
            return Err(Error::invalid(format!(
                "row has {} values for {} columns",
                row.len(),
                self.names.len()
            )));
        }
        self.times.push(t);
        for (col, v) in self.values.iter_mut().zip(row) {
            col.push(v);
        }
        Ok(())
    }

    /// Appends a column computed after the run.
    pub fn add_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.times.len() {
            return Err(Error::invalid(format!(
                "column {name} has {} values for {} rows",
                values.len(),
                self.times.len()
            )));
        }
        if self.names.contains(&name) {
            return Err(Error::invalid(format!("duplicate column {name}")));
        }
        self.names.push(name);
        self.values.push(values);
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn columns(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i].as_slice())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut rec = vec![format!("{t}")];
            rec.extend(self.values.iter().map(|col| fmt_cell(col[i])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.get(0) != Some("t") {
            return Err(Error::invalid("first CSV column must be t"));
        }
        let mut series = Self::new(header.iter().skip(1).map(str::to_string).collect());
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| -> Result<f64> {
                if s.is_empty() {
                    Ok(f64::NAN)
                } else {
                    s.parse().map_err(|e| Error::invalid(format!("bad CSV value {s:?}: {e}")))
                }
            };
            let t = parse(&rec[0])?;
            let row = rec.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
            series.push(t, row)?;
        }
        Ok(series)
    }
}

pub(crate) fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        fmt_number(v)
    }
}

/// Shortest round-trip text; exponent form outside `[1e-4, 1e15)`.
pub(crate) fn fmt_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Something evaluated on the state at every output time.
pub trait Observer {
    /// Names of the scalar columns produced by [`observe`](Self::observe).
    fn columns(&self) -> Vec<String>;

    fn observe(&mut self, t: f64, state: &DensityMatrix) -> Result<Vec<f64>>;
}

/// Excitation-manifold populations `P_0..P_N`.
pub struct PopulationObserver {
    pub n_atoms: usize,
}

impl Observer for PopulationObserver {
    fn columns(&self) -> Vec<String> {
        (0..=self.n_atoms).map(|n| format!("P{n}")).collect()
    }

    fn observe(&mut self, _t: f64, state: &DensityMatrix) -> Result<Vec<f64>> {
        Ok(excitation_populations(state))
    }
}

/// Wraps a closure returning a fixed set of named values.
pub struct FnObserver<F> {
    names: Vec<String>,
    f: F,
}

impl<F: FnMut(f64, &DensityMatrix) -> Vec<f64>> FnObserver<F> {
    pub fn new(names: &[&str], f: F) -> Self {
        Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            f,
        }
    }
}

impl<F: FnMut(f64, &DensityMatrix) -> Vec<f64>> Observer for FnObserver<F> {
    fn columns(&self) -> Vec<String> {
        self.names.clone()
    }

    fn observe(&mut self, t: f64, state: &DensityMatrix) -> Result<Vec<f64>> {
        Ok((self.f)(t, state))
    }
}
