//! Boundary patches: periodic grids carrying α, the V-jet and the h-jet.

use super::expr::{Expr, ExprError};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

/// Relative tolerance for the symmetry of h-jet matrices.
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PatchError {
    #[error("boundary dimension must be 1..=3, got {0}")]
    Dimension(usize),
    #[error("expected {expected} axis counts, got {got}")]
    AxisCount { expected: usize, got: usize },
    #[error("axis {axis} has {count} points; at least 4 are required")]
    AxisTooShort { axis: usize, count: usize },
    #[error("period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("field {field}: expected {expected} values, got {got}")]
    FieldLength {
        field: String,
        expected: usize,
        got: usize,
    },
    #[error("field {field}: non-finite value at grid index {index}")]
    NonFinite { field: String, index: usize },
    #[error("alpha must be positive, got {value} at grid index {index}")]
    NonPositiveAlpha { index: usize, value: f64 },
    #[error("h_jet[{j}] is not symmetric at grid index {index}")]
    NotSymmetric { j: usize, index: usize },
    #[error("h_jet[0] is not positive definite at grid index {index}")]
    NotPositiveDefinite { index: usize },
    #[error("field {field} must have at least one jet order")]
    EmptyJet { field: String },
    #[error("h_jet[{j}] must be an n×n matrix")]
    MatrixShape { j: usize },
    #[error("field {field}: {source}")]
    Expr {
        field: String,
        #[source]
        source: ExprError,
    },
    #[error("field {field} references y{coord} but the boundary has dimension {n}")]
    CoordOutOfRange {
        field: String,
        coord: usize,
        n: usize,
    },
    #[error("invalid patch JSON: {0}")]
    Json(String),
}

/// A scalar field in the patch file: a constant, an expression or raw samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    Expression(String),
    Samples(Vec<f64>),
}

impl FieldSpec {
    fn sample(&self, field: &str, points: &[Vec<f64>], n: usize) -> Result<Vec<f64>, PatchError> {
        let values = match self {
            FieldSpec::Constant(v) => vec![*v; points.len()],
            FieldSpec::Samples(v) => {
                if v.len() != points.len() {
                    return Err(PatchError::FieldLength {
                        field: field.to_string(),
                        expected: points.len(),
                        got: v.len(),
                    });
                }
                v.clone()
            }
            FieldSpec::Expression(src) => {
                let expr = Expr::parse(src).map_err(|source| PatchError::Expr {
                    field: field.to_string(),
                    source,
                })?;
                if let Some(k) = expr.max_coord() {
                    if k >= n {
                        return Err(PatchError::CoordOutOfRange {
                            field: field.to_string(),
                            coord: k + 1,
                            n,
                        });
                    }
                }
                points.iter().map(|y| expr.eval(y)).collect()
            }
        };
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(PatchError::NonFinite {
                field: field.to_string(),
                index,
            });
        }
        Ok(values)
    }
}

/// On-disk patch description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub n: usize,
    pub axes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    pub alpha: FieldSpec,
    pub v_jet: Vec<FieldSpec>,
    pub h_jet: Vec<Vec<Vec<FieldSpec>>>,
}

/// Uniform periodic grid on `[0, period)ⁿ` with boundary jets of
/// α, V and h sampled at every point.
///
/// Points are enumerated row-major: the first axis varies slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPatch {
    n: usize,
    axes: Vec<usize>,
    period: f64,
    alpha: Vec<f64>,
    v_jet: Vec<Vec<f64>>,
    h_jet: Vec<Vec<DMatrix<f64>>>,
}

impl BoundaryPatch {
    /// Validates and assembles a patch. `v_jet[j][i]` and `h_jet[j][i]` hold
    /// order `j` at grid index `i`.
    pub fn new(
        n: usize,
        axes: Vec<usize>,
        period: f64,
        alpha: Vec<f64>,
        v_jet: Vec<Vec<f64>>,
        h_jet: Vec<Vec<DMatrix<f64>>>,
    ) -> Result<Self, PatchError> {
        check_grid(n, &axes, period)?;
        let len: usize = axes.iter().product();
        let check_len = |field: String, got: usize| {
            if got == len {
                Ok(())
            } else {
                Err(PatchError::FieldLength {
                    field,
                    expected: len,
                    got,
                })
            }
        };
        check_len("alpha".into(), alpha.len())?;
        for (index, &value) in alpha.iter().enumerate() {
            if !value.is_finite() {
                return Err(PatchError::NonFinite {
                    field: "alpha".into(),
                    index,
                });
            }
            if value <= 0.0 {
                return Err(PatchError::NonPositiveAlpha { index, value });
            }
        }
        if v_jet.is_empty() {
            return Err(PatchError::EmptyJet {
                field: "v_jet".into(),
            });
        }
        if h_jet.is_empty() {
            return Err(PatchError::EmptyJet {
                field: "h_jet".into(),
            });
        }
        for (j, field) in v_jet.iter().enumerate() {
            check_len(format!("v_jet[{j}]"), field.len())?;
            if let Some(index) = field.iter().position(|v| !v.is_finite()) {
                return Err(PatchError::NonFinite {
                    field: format!("v_jet[{j}]"),
                    index,
                });
            }
        }
        for (j, field) in h_jet.iter().enumerate() {
            check_len(format!("h_jet[{j}]"), field.len())?;
            for (index, m) in field.iter().enumerate() {
                if m.nrows() != n || m.ncols() != n {
                    return Err(PatchError::MatrixShape { j });
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(PatchError::NonFinite {
                        field: format!("h_jet[{j}]"),
                        index,
                    });
                }
                let scale = m.amax().max(1.0);
                if (m - m.transpose()).amax() > SYMMETRY_TOL * scale {
                    return Err(PatchError::NotSymmetric { j, index });
                }
                if j == 0 && m.clone().cholesky().is_none() {
                    return Err(PatchError::NotPositiveDefinite { index });
                }
            }
        }
        Ok(Self {
            n,
            axes,
            period,
            alpha,
            v_jet,
            h_jet,
        })
    }

    pub fn from_spec(spec: &PatchSpec) -> Result<Self, PatchError> {
        let n = spec.n;
        let period = spec.period.unwrap_or(TAU);
        check_grid(n, &spec.axes, period)?;
        let points = grid_points(&spec.axes, period);
        let alpha = spec.alpha.sample("alpha", &points, n)?;
        let v_jet = spec
            .v_jet
            .iter()
            .enumerate()
            .map(|(j, f)| f.sample(&format!("v_jet[{j}]"), &points, n))
            .collect::<Result<Vec<_>, _>>()?;
        let mut h_jet = Vec::with_capacity(spec.h_jet.len());
        for (j, rows) in spec.h_jet.iter().enumerate() {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(PatchError::MatrixShape { j });
            }
            let mut entries = vec![vec![Vec::new(); n]; n];
            for (a, row) in rows.iter().enumerate() {
                for (b, field) in row.iter().enumerate() {
                    entries[a][b] = field.sample(&format!("h_jet[{j}][{a}][{b}]"), &points, n)?;
                }
            }
            let mats = (0..points.len())
                .map(|i| DMatrix::from_fn(n, n, |a, b| entries[a][b][i]))
                .collect();
            h_jet.push(mats);
        }
        Self::new(n, spec.axes.clone(), period, alpha, v_jet, h_jet)
    }

    pub fn from_json(text: &str) -> Result<Self, PatchError> {
        let spec: PatchSpec =
            serde_json::from_str(text).map_err(|e| PatchError::Json(e.to_string()))?;
        Self::from_spec(&spec)
    }

    /// Sampled form of the patch, suitable for writing back to disk.
    pub fn to_spec(&self) -> PatchSpec {
        let n = self.n;
        PatchSpec {
            n,
            axes: self.axes.clone(),
            period: Some(self.period),
            alpha: FieldSpec::Samples(self.alpha.clone()),
            v_jet: self
                .v_jet
                .iter()
                .map(|f| FieldSpec::Samples(f.clone()))
                .collect(),
            h_jet: self
                .h_jet
                .iter()
                .map(|mats| {
                    (0..n)
                        .map(|a| {
                            (0..n)
                                .map(|b| FieldSpec::Samples(mats.iter().map(|m| m[(a, b)]).collect()))
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn axes(&self) -> &[usize] {
        &self.axes
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Coordinates of grid point `index`.
    pub fn point(&self, index: usize) -> Vec<f64> {
        point_at(&self.axes, self.period, index)
    }

    pub fn alpha(&self, index: usize) -> f64 {
        self.alpha[index]
    }

    pub fn alpha_field(&self) -> &[f64] {
        &self.alpha
    }

    /// Number of stored V-jet orders (J + 1).
    pub fn v_orders(&self) -> usize {
        self.v_jet.len()
    }

    /// Number of stored h-jet orders (J + 1).
    pub fn h_orders(&self) -> usize {
        self.h_jet.len()
    }

    pub fn v(&self, j: usize, index: usize) -> f64 {
        self.v_jet[j][index]
    }

    pub fn v_field(&self, j: usize) -> &[f64] {
        &self.v_jet[j]
    }

    pub fn h(&self, j: usize, index: usize) -> &DMatrix<f64> {
        &self.h_jet[j][index]
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.n == other.n && self.axes == other.axes && self.period == other.period
    }
}

fn check_grid(n: usize, axes: &[usize], period: f64) -> Result<(), PatchError> {
    if !(1..=3).contains(&n) {
        return Err(PatchError::Dimension(n));
    }
    if axes.len() != n {
        return Err(PatchError::AxisCount {
            expected: n,
            got: axes.len(),
        });
    }
    if let Some((axis, &count)) = axes.iter().enumerate().find(|(_, &c)| c < 4) {
        return Err(PatchError::AxisTooShort { axis, count });
    }
    if !(period.is_finite() && period > 0.0) {
        return Err(PatchError::BadPeriod(period));
    }
    Ok(())
}

fn point_at(axes: &[usize], period: f64, index: usize) -> Vec<f64> {
    let mut rem = index;
    let mut y = vec![0.0; axes.len()];
    for k in (0..axes.len()).rev() {
        y[k] = period * (rem % axes[k]) as f64 / axes[k] as f64;
        rem /= axes[k];
    }
    y
}

fn grid_points(axes: &[usize], period: f64) -> Vec<Vec<f64>> {
    let len: usize = axes.iter().product();
    (0..len).map(|index| point_at(axes, period, index)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "n": 2,
        "axes": [4, 5],
        "alpha": "1.5 + 0.5*cos(y1)",
        "v_jet": [0.25, "sin(y2)"],
        "h_jet": [
            [["2", 0.5], [0.5, "1 + 0.1*cos(y2)"]],
            [[0, 0], [0, 0]]
        ]
    }"#;

    #[test]
    fn parses_expressions_and_constants() {
        let p = BoundaryPatch::from_json(SAMPLE).unwrap();
        assert_eq!(p.len(), 20);
        assert_eq!(p.v_orders(), 2);
        assert_eq!(p.h_orders(), 2);
        // index 6 = (1, 1): y = (2π/4, 2π/5).
        let y = p.point(6);
        assert!((y[0] - TAU / 4.0).abs() < 1e-15 && (y[1] - TAU / 5.0).abs() < 1e-15);
        assert!((p.alpha(6) - (1.5 + 0.5 * y[0].cos())).abs() < 1e-15);
        assert!((p.v(1, 6) - y[1].sin()).abs() < 1e-15);
        assert_eq!(p.h(0, 6)[(0, 1)], 0.5);
        assert!((p.h(0, 6)[(1, 1)] - (1.0 + 0.1 * y[1].cos())).abs() < 1e-15);
    }

    #[test]
    fn spec_round_trip_through_samples() {
        let p = BoundaryPatch::from_json(SAMPLE).unwrap();
        let text = serde_json::to_string(&p.to_spec()).unwrap();
        assert_eq!(BoundaryPatch::from_json(&text).unwrap(), p);
    }

    #[test]
    fn rejects_invalid_patches() {
        let bad_alpha = SAMPLE.replace("1.5 + 0.5*cos(y1)", "cos(y1)");
        assert!(matches!(
            BoundaryPatch::from_json(&bad_alpha),
            Err(PatchError::NonPositiveAlpha { .. })
        ));
        let asym = SAMPLE.replace(r#"[0.5, "1 + 0.1*cos(y2)"]"#, r#"[0.4, "1 + 0.1*cos(y2)"]"#);
        assert!(matches!(
            BoundaryPatch::from_json(&asym),
            Err(PatchError::NotSymmetric { j: 0, .. })
        ));
        let indefinite = SAMPLE.replace(r#"["2", 0.5]"#, r#"["0.1", 0.5]"#);
        assert!(matches!(
            BoundaryPatch::from_json(&indefinite),
            Err(PatchError::NotPositiveDefinite { .. })
        ));
        let short = SAMPLE.replace("[4, 5]", "[3, 5]");
        assert!(matches!(
            BoundaryPatch::from_json(&short),
            Err(PatchError::AxisTooShort { axis: 0, count: 3 })
        ));
        let coord = SAMPLE.replace("sin(y2)", "sin(y3)");
        assert!(matches!(
            BoundaryPatch::from_json(&coord),
            Err(PatchError::CoordOutOfRange { coord: 3, .. })
        ));
        let samples = SAMPLE.replace("0.25, ", "[1, 2, 3], ");
        assert!(matches!(
            BoundaryPatch::from_json(&samples),
            Err(PatchError::FieldLength { expected: 20, got: 3, .. })
        ));
        assert!(matches!(BoundaryPatch::from_json("{"), Err(PatchError::Json(_))));
        let parse = SAMPLE.replace("sin(y2)", "sin(y2");
        assert!(matches!(BoundaryPatch::from_json(&parse), Err(PatchError::Expr { .. })));
    }

    #[test]
    fn dimension_bounds() {
        let err = BoundaryPatch::new(4, vec![4; 4], TAU, vec![], vec![], vec![]).unwrap_err();
        assert_eq!(err, PatchError::Dimension(4));
    }
}
