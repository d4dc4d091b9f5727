//! Domain types: feature matrices, membership matrices, label vectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::real::{real, Real};

/// A d x m matrix whose columns are feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T: Real> {
    data: DMatrix<T>,
}

impl<T: Real> FeatureMatrix<T> {
    /// Wraps a dense matrix, validating that it is nonempty and finite.
    pub fn new(data: DMatrix<T>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "feature matrix must be nonempty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput(
                "feature matrix contains non-finite entries".into(),
            ));
        }
        Ok(Self { data })
    }

    /// Feature dimension d (rows).
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Sample count m (columns).
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor rejects empty matrices
    }

    pub fn data(&self) -> &DMatrix<T> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.data
    }

    pub fn column(&self, i: usize) -> DVector<T> {
        self.data.column(i).into_owned()
    }

    /// True when every column has unit Euclidean norm within `tol`.
    pub fn is_sphere_normalized(&self, tol: T) -> bool {
        self.data
            .column_iter()
            .all(|c| nalgebra::ComplexField::abs(c.norm() - T::one()) <= tol)
    }

    /// Rescales every column to unit norm; a zero column is an error.
    pub fn normalize_columns(mut self) -> Result<Self> {
        for mut c in self.data.column_iter_mut() {
            let n = c.norm();
            if n < real(1e-300) {
                return Err(Error::DegenerateFeatures(
                    "cannot normalize a zero column".into(),
                ));
            }
            c /= n;
        }
        Ok(self)
    }

    /// Horizontal concatenation `[self other]`; dimensions must agree.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot concatenate feature matrices with d={} and d={}",
                self.dim(),
                other.dim()
            )));
        }
        let mut m = DMatrix::zeros(self.dim(), self.len() + other.len());
        m.view_mut((0, 0), (self.dim(), self.len())).copy_from(&self.data);
        m.view_mut((0, self.len()), (self.dim(), other.len()))
            .copy_from(&other.data);
        Ok(Self { data: m })
    }
}

/// Tolerance on membership row sums.
const ROW_SUM_TOL: f64 = 1e-9;

/// An m x k row-stochastic matrix; row i holds the class weights of sample i.
///
/// Column j is the diagonal of the class-j weighting matrix, so the class
/// mass (its trace) is the column sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership<T: Real> {
    weights: DMatrix<T>,
}

impl<T: Real> Membership<T> {
    pub fn new(weights: DMatrix<T>) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::InvalidMembership(
                "membership must have at least one row and one column".into(),
            ));
        }
        let tol: T = real(ROW_SUM_TOL);
        for (i, row) in weights.row_iter().enumerate() {
            let mut sum = T::zero();
            for &w in row.iter() {
                if !w.is_finite() || w < T::zero() {
                    return Err(Error::InvalidMembership(format!(
                        "row {i} has a negative or non-finite weight"
                    )));
                }
                sum += w;
            }
            if nalgebra::ComplexField::abs(sum - T::one()) > tol {
                return Err(Error::InvalidMembership(format!(
                    "row {i} sums to {sum:?}, expected 1 within {ROW_SUM_TOL:e}"
                )));
            }
        }
        Ok(Self { weights })
    }

    /// Hard one-hot membership from integer labels.
    pub fn from_labels(labels: &LabelVector, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidMembership("k must be positive".into()));
        }
        if let Some(&bad) = labels.as_slice().iter().find(|&&l| l >= k) {
            return Err(Error::InvalidMembership(format!(
                "label {bad} out of range for k={k}"
            )));
        }
        let m = labels.len();
        let mut w = DMatrix::zeros(m, k);
        for (i, &l) in labels.as_slice().iter().enumerate() {
            w[(i, l)] = T::one();
        }
        Ok(Self { weights: w })
    }

    /// Sample count m.
    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Class count k.
    pub fn num_classes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &DMatrix<T> {
        &self.weights
    }

    /// Per-sample weights of class j (the diagonal of the class-j weighting).
    pub fn class_weights(&self, j: usize) -> DVector<T> {
        self.weights.column(j).into_owned()
    }

    /// Class mass: the column sum, i.e. the trace of the class weighting.
    pub fn class_mass(&self, j: usize) -> T {
        self.weights.column(j).sum()
    }

    /// True when every row is one-hot within `tol`.
    pub fn is_hard(&self, tol: T) -> bool {
        self.weights
            .row_iter()
            .all(|row| row.iter().filter(|&&w| w > tol).count() == 1
                && row.iter().all(|&w| w <= tol || nalgebra::ComplexField::abs(w - T::one()) <= tol))
    }

    /// Per-row argmax labels (ties to the lowest class index).
    pub fn hard_labels(&self) -> LabelVector {
        let labels = self
            .weights
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for (j, &w) in row.iter().enumerate() {
                    if w > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect();
        LabelVector::new_unchecked(labels)
    }

    /// Convex combination `(1 - alpha) * self + alpha * other`.
    pub fn mix(&self, other: &Self, alpha: T) -> Result<Self> {
        if self.len() != other.len() || self.num_classes() != other.num_classes() {
            return Err(Error::DimensionMismatch(format!(
                "membership shapes {}x{} and {}x{} differ",
                self.len(),
                self.num_classes(),
                other.len(),
                other.num_classes()
            )));
        }
        if alpha < T::zero() || alpha > T::one() {
            return Err(Error::InvalidInput("mixing weight must lie in [0, 1]".into()));
        }
        let w = &self.weights * (T::one() - alpha) + &other.weights * alpha;
        Ok(Self { weights: w })
    }
}

/// Integer class labels in `[0, k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for k={k}"
            )));
        }
        Ok(Self { labels })
    }

    pub(crate) fn new_unchecked(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.labels
    }

    /// Per-class counts over `k` classes.
    pub fn histogram(&self, k: usize) -> Vec<usize> {
        let mut h = vec![0usize; k];
        for &l in &self.labels {
            if l < k {
                h[l] += 1;
            }
        }
        h
    }
}

impl From<Vec<usize>> for LabelVector {
    fn from(labels: Vec<usize>) -> Self {
        Self { labels }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_nonfinite() {
        assert!(FeatureMatrix::<f64>::new(DMatrix::zeros(0, 3)).is_err());
        let mut m = DMatrix::from_element(2, 2, 1.0);
        m[(0, 0)] = f64::NAN;
        assert!(FeatureMatrix::new(m).is_err());
    }

    #[test]
    fn membership_row_sum_enforced() {
        let w = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.3, 0.6]);
        assert!(matches!(
            Membership::new(w),
            Err(Error::InvalidMembership(_))
        ));
        let ok = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.25, 0.75]);
        let pi = Membership::new(ok).unwrap();
        assert!(!pi.is_hard(1e-9));
        assert_eq!(pi.class_mass(1), 1.25);
    }

    #[test]
    fn from_labels_one_hot_and_round_trip() {
        let labels = LabelVector::new(vec![0, 1, 0], 2).unwrap();
        let pi = Membership::<f64>::from_labels(&labels, 2).unwrap();
        assert_eq!(pi.weights().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0]);
        assert_eq!(pi.weights().row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0]);
        assert_eq!(pi.weights().row(2).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0]);
        assert!(pi.is_hard(1e-9));
        // column sums match the label histogram
        assert_eq!(pi.class_mass(0), 2.0);
        assert_eq!(pi.class_mass(1), 1.0);
        // round-trips through per-row argmax
        assert_eq!(pi.hard_labels().as_slice(), labels.as_slice());
    }

    #[test]
    fn out_of_range_label_rejected() {
        let labels = LabelVector::from(vec![0, 3]);
        assert!(Membership::<f64>::from_labels(&labels, 2).is_err());
        assert!(LabelVector::new(vec![0, 3], 2).is_err());
    }

    #[test]
    fn concat_checks_dim() {
        let a = FeatureMatrix::new(DMatrix::<f64>::identity(2, 2)).unwrap();
        let b = FeatureMatrix::new(DMatrix::<f64>::identity(3, 3)).unwrap();
        assert!(a.concat(&b).is_err());
        let c = a.concat(&a).unwrap();
        assert_eq!((c.dim(), c.len()), (2, 4));
    }
}
