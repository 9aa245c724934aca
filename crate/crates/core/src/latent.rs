use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the search space. Always non-empty with finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("latent vector must have at least one coordinate"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("latent coordinate {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self(vec![0.0; dimension])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn squared_distance(&self, other: &LatentVector) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(squared_distance(&self.0, &other.0))
    }

    /// True when every coordinate differs by at most `tol`.
    pub fn approx_eq(&self, other: &LatentVector, tol: f64) -> bool {
        self.dim() == other.dim()
            && self.0.iter().zip(&other.0).all(|(a, b)| (a - b).abs() <= tol)
    }
}

impl Deref for LatentVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for LatentVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<LatentVector> for Vec<f64> {
    fn from(v: LatentVector) -> Self {
        v.0
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(LatentVector::new(vec![]).is_err());
        assert!(LatentVector::new(vec![0.0, f64::NAN]).is_err());
        assert!(LatentVector::new(vec![f64::INFINITY]).is_err());
        assert!(LatentVector::new(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn distance_checks_dimension() {
        let a = LatentVector::new(vec![0.0, 0.0]).unwrap();
        let b = LatentVector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(a.squared_distance(&b).unwrap(), 25.0);
        let c = LatentVector::new(vec![1.0]).unwrap();
        assert!(matches!(
            a.squared_distance(&c),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }
}
