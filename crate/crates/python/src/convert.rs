use causal_hierarchy::synth::weekday_dates;
use causal_hierarchy::{Error, ReturnPanel};
use nalgebra::DMatrix;

/// Row-major nested lists into a matrix; rows must be equally long.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, Error> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::Shape(format!("row {bad} has {} values, expected {ncols}", rows[bad].len())));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn rows_from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Wraps raw observations (rows = time) in a panel with placeholder weekday dates.
pub fn panel_from_rows(rows: &[Vec<f64>], labels: Option<Vec<String>>) -> Result<ReturnPanel, Error> {
    let values = matrix_from_rows(rows)?;
    let labels = labels.unwrap_or_else(|| (0..values.ncols()).map(|i| format!("S{i}")).collect());
    ReturnPanel::new(weekday_dates(values.nrows()), labels, values)
}
