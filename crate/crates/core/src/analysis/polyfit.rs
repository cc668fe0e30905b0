use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Least-squares polynomial fit; coefficients lowest degree first.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::ShapeMismatch(format!(
            "{n} x values for {} y values",
            ys.len()
        )));
    }
    if n < degree + 1 {
        return Err(Error::InsufficientPoints {
            needed: degree + 1,
            got: n,
        });
    }
    let mut design = DMatrix::from_fn(n, degree + 1, |i, j| xs[i].powi(j as i32));
    // equilibrate columns; x^4 spans several orders of magnitude more than x^0
    let scales: Vec<f64> = (0..=degree)
        .map(|j| {
            let norm = design.column(j).norm();
            if norm > 0.0 {
                norm
            } else {
                1.0
            }
        })
        .collect();
    for (j, s) in scales.iter().enumerate() {
        design.column_mut(j).unscale_mut(*s);
    }
    let svd = design.svd(true, true);
    let solution = svd
        .solve(&DVector::from_column_slice(ys), 1e-12)
        .map_err(|e| Error::ShapeMismatch(format!("least squares failed: {e}")))?;
    Ok(solution.iter().zip(&scales).map(|(c, s)| c / s).collect())
}

pub fn polyval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Sum of squared residuals.
pub fn residual(coeffs: &[f64], xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| (y - polyval(coeffs, x)).powi(2))
        .sum()
}

/// Degree-4 fit of values against their position `0, 1, 2, ...`.
pub fn quartic_fit(ranks_per_layer: &[f64]) -> Result<[f64; 5]> {
    let xs: Vec<f64> = (0..ranks_per_layer.len()).map(|i| i as f64).collect();
    let c = polyfit(&xs, ranks_per_layer, 4)?;
    Ok([c[0], c[1], c[2], c[3], c[4]])
}
