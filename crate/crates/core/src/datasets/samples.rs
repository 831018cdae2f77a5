use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::scalar::mean_and_sd;
use crate::Real;

/// N x d observations with column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix<T> {
    data: Array2<T>,
    names: Vec<String>,
}

/// A standardized copy of a sample matrix together with the affine map used.
#[derive(Debug, Clone)]
pub struct Standardized<T> {
    pub samples: SampleMatrix<T>,
    pub mean: Vec<T>,
    pub sd: Vec<T>,
}

pub fn default_names(d: usize) -> Vec<String> {
    match d {
        2 => vec!["x".to_string(), "y".to_string()],
        _ => (0..d).map(|j| format!("x{j}")).collect(),
    }
}

impl<T: Real> SampleMatrix<T> {
    pub fn new(data: Array2<T>, names: Vec<String>) -> Result<Self> {
        if names.len() != data.ncols() {
            return Err(Error::DimensionMismatch {
                expected: data.ncols(),
                found: names.len(),
            });
        }
        if data.nrows() < 2 {
            return Err(Error::Structure(format!(
                "need at least 2 rows, found {}",
                data.nrows()
            )));
        }
        if data.ncols() == 0 {
            return Err(Error::Structure("no columns".into()));
        }
        Ok(SampleMatrix {
            data: data.as_standard_layout().to_owned(),
            names,
        })
    }

    pub fn with_default_names(data: Array2<T>) -> Result<Self> {
        let names = default_names(data.ncols());
        Self::new(data, names)
    }

    /// Builds a matrix from equally long columns.
    pub fn from_columns(columns: &[Vec<T>], names: Vec<String>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        let data = Array2::from_shape_fn((n, columns.len()), |(i, j)| columns[j][i]);
        Self::new(data, names)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn data(&self) -> &Array2<T> {
        &self.data
    }

    pub fn into_data(self) -> Array2<T> {
        self.data
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, T> {
        self.data.column(j)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// New matrix with the given columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> Result<Self> {
        for &c in columns {
            if c >= self.d() {
                return Err(Error::DimensionMismatch {
                    expected: self.d(),
                    found: c + 1,
                });
            }
        }
        let data = self.data.select(Axis(1), columns);
        let names = columns.iter().map(|&c| self.names[c].clone()).collect();
        Self::new(data, names)
    }

    /// New matrix with the given rows.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let data = self.data.select(Axis(0), rows);
        Self::new(data, self.names.clone())
    }

    pub fn check_finite(&self) -> Result<()> {
        for (j, col) in self.data.axis_iter(Axis(1)).enumerate() {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    column: self.names[j].clone(),
                });
            }
        }
        Ok(())
    }

    pub fn column_mean_sd(&self, j: usize) -> (T, T) {
        mean_and_sd(self.data.column(j).iter().copied())
    }

    /// Zero mean, unit (sample) variance per column.
    pub fn standardize(&self) -> Result<Standardized<T>> {
        let d = self.d();
        let mut mean = Vec::with_capacity(d);
        let mut sd = Vec::with_capacity(d);
        for j in 0..d {
            let (m, s) = self.column_mean_sd(j);
            if !(s > T::zero()) || !s.is_finite() {
                return Err(Error::ZeroVariance {
                    column: self.names[j].clone(),
                });
            }
            mean.push(m);
            sd.push(s);
        }
        let mut data = self.data.clone();
        for (j, mut col) in data.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| (v - mean[j]) / sd[j]);
        }
        Ok(Standardized {
            samples: SampleMatrix {
                data,
                names: self.names.clone(),
            },
            mean,
            sd,
        })
    }

    pub fn row(&self, i: usize) -> Array1<T> {
        self.data.row(i).to_owned()
    }

    pub fn cast<U: Real>(&self) -> SampleMatrix<U> {
        SampleMatrix {
            data: self.data.mapv(|v| U::lit(v.as_f64())),
            names: self.names.clone(),
        }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                found: names.len(),
            });
        }
        self.names = names;
        Ok(self)
    }
}
