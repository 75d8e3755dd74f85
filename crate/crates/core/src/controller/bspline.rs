//! Least-squares B-spline smoothing of control sequences along the horizon.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Clamped uniform knot vector for `n_ctrl` control points of `degree`.
fn clamped_knots(n_ctrl: usize, degree: usize) -> Vec<f64> {
    let interior = n_ctrl - degree - 1;
    let mut knots = vec![0.0; degree + 1];
    for k in 1..=interior {
        knots.push(k as f64 / (interior + 1) as f64);
    }
    knots.extend(std::iter::repeat_n(1.0, degree + 1));
    knots
}

/// Values of all `n_ctrl` basis functions at `t ∈ [0, 1]` (Cox–de Boor).
fn basis(knots: &[f64], n_ctrl: usize, degree: usize, t: f64) -> Vec<f64> {
    let m = knots.len() - 1;
    let mut n = vec![0.0; m];
    for i in 0..m {
        let inside = knots[i] <= t && t < knots[i + 1];
        // the right endpoint belongs to the last non-empty span
        let last = t >= 1.0 && knots[i] < knots[i + 1] && knots[i + 1] >= 1.0;
        n[i] = if inside || last { 1.0 } else { 0.0 };
    }
    for p in 1..=degree {
        for i in 0..m - p {
            let mut v = 0.0;
            let d1 = knots[i + p] - knots[i];
            if d1 > 0.0 {
                v += (t - knots[i]) / d1 * n[i];
            }
            let d2 = knots[i + p + 1] - knots[i + 1];
            if d2 > 0.0 {
                v += (knots[i + p + 1] - t) / d2 * n[i + 1];
            }
            n[i] = v;
        }
    }
    n.truncate(n_ctrl);
    n
}

/// Fits a clamped B-spline with `n_ctrl` control points to each control
/// channel of a time-major `(H, M)` sequence and evaluates it back on the
/// horizon grid. The first and last controls are kept exactly.
pub fn bspline_smooth(sequence: &[f64], control_dim: usize, degree: usize, n_ctrl: usize) -> Result<Vec<f64>> {
    if control_dim == 0 || sequence.len() % control_dim != 0 {
        return Err(Error::Dimension {
            what: "control sequence".into(),
            expected: control_dim,
            actual: sequence.len(),
        });
    }
    if degree == 0 || n_ctrl < degree + 1 {
        return Err(Error::Config(format!(
            "B-spline of degree {degree} needs at least {} knots, got {n_ctrl}",
            degree + 1
        )));
    }
    let h = sequence.len() / control_dim;
    if h < n_ctrl {
        return Err(Error::Config(format!("horizon {h} is shorter than the knot count {n_ctrl}")));
    }
    if h <= 2 {
        return Ok(sequence.to_vec());
    }
    let knots = clamped_knots(n_ctrl, degree);
    let rows: Vec<Vec<f64>> = (0..h).map(|k| basis(&knots, n_ctrl, degree, k as f64 / (h - 1) as f64)).collect();
    // endpoints are pinned, so only interior control points are free
    let free = n_ctrl - 2;
    let a = DMatrix::from_fn(h - 2, free, |r, c| rows[r + 1][c + 1]);
    let svd = a.clone().svd(true, true);
    let mut out = sequence.to_vec();
    for ch in 0..control_dim {
        let y0 = sequence[ch];
        let y1 = sequence[(h - 1) * control_dim + ch];
        let rhs = DVector::from_fn(h - 2, |r, _| {
            let row = &rows[r + 1];
            sequence[(r + 1) * control_dim + ch] - row[0] * y0 - row[n_ctrl - 1] * y1
        });
        let interior = if free == 0 {
            DVector::zeros(0)
        } else {
            svd.solve(&rhs, 1e-12).map_err(|e| Error::Config(e.to_string()))?
        };
        let mut ctrl = vec![y0];
        ctrl.extend(interior.iter());
        ctrl.push(y1);
        for (k, row) in rows.iter().enumerate().skip(1).take(h - 2) {
            out[k * control_dim + ch] = row.iter().zip(&ctrl).map(|(b, c)| b * c).sum();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity() {
        let knots = clamped_knots(6, 3);
        for k in 0..=20 {
            let b = basis(&knots, 6, 3, k as f64 / 20.0);
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reproduces_ramp() {
        let seq: Vec<f64> = (0..10).flat_map(|k| [k as f64, 2.0 - 0.5 * k as f64]).collect();
        let out = bspline_smooth(&seq, 2, 2, 5).unwrap();
        for (a, b) in seq.iter().zip(&out) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_too_few_knots() {
        assert!(matches!(bspline_smooth(&[0.0; 8], 1, 3, 3), Err(Error::Config(_))));
    }
}
