//! Serialization helpers shared by the public types.

use nalgebra::DMatrix;
use serde::ser::{Serialize, Serializer};

/// Serializes a matrix as a nested array of rows, the layout every JSON
/// consumer expects regardless of internal storage order.
pub(crate) fn mat_rows<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect();
    rows.serialize(s)
}
