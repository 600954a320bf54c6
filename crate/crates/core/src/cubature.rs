//! Adaptive h-cubature over hyper-rectangles.
//!
//! Each cell is integrated with the Genz–Malik degree-7 rule and its embedded
//! degree-5 rule; the difference of the two is the cell error estimate. Cells
//! with the largest error are bisected along the axis with the largest fourth
//! divided difference, which is the strategy popularised by `hcubature`.
//!
//! Refinement is batched: every pass selects the worst cells, splits them and
//! evaluates the children concurrently. The cell list keeps a canonical order
//! (survivors first, then children in selection order) and totals are formed
//! with a pairwise reduction over that order, so results do not depend on the
//! thread schedule.
//!
//! Integrable singularities should be placed on cell corners through the
//! initial breakpoints; the rule never samples a cell boundary.

use num_complex::Complex64;
use rayon::prelude::*;

/// Largest supported dimension.
pub const MAX_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubatureOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the number of bisections.
    pub max_subdivisions: usize,
}

impl Default for CubatureOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-7,
            abs_tol: 1e-10,
            max_subdivisions: 400_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubatureResult {
    pub value: Complex64,
    pub error: f64,
    pub evals: usize,
    pub subdivisions: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    center: [f64; MAX_DIM],
    half: [f64; MAX_DIM],
    value: Complex64,
    error: f64,
    split_axis: usize,
}

/// Genz–Malik rule constants for a fixed dimension.
struct Rule {
    dim: usize,
    w: [f64; 5],
    we: [f64; 4],
    corners: usize,
}

const LAMBDA2: f64 = 0.358_568_582_800_318_1; // sqrt(9/70)
const LAMBDA4: f64 = 0.948_683_298_050_513_8; // sqrt(9/10)
const LAMBDA5: f64 = 0.688_247_201_611_685_3; // sqrt(9/19)

impl Rule {
    fn new(dim: usize) -> Self {
        let d = dim as f64;
        let corners = 1usize << dim;
        Self {
            dim,
            w: [
                (12824.0 - 9120.0 * d + 400.0 * d * d) / 19683.0,
                980.0 / 6561.0,
                (1820.0 - 400.0 * d) / 19683.0,
                200.0 / 19683.0,
                6859.0 / 19683.0 / corners as f64,
            ],
            we: [
                (729.0 - 950.0 * d + 50.0 * d * d) / 729.0,
                245.0 / 486.0,
                (265.0 - 100.0 * d) / 1458.0,
                25.0 / 729.0,
            ],
            corners,
        }
    }

    fn points_per_cell(&self) -> usize {
        let d = self.dim;
        1 + 4 * d + 2 * d * (d - 1) + self.corners
    }

    fn apply<F>(&self, f: &F, center: [f64; MAX_DIM], half: [f64; MAX_DIM]) -> Cell
    where
        F: Fn(&[f64]) -> Complex64,
    {
        let d = self.dim;
        let mut x = center;
        let f0 = f(&x[..d]);
        let mut sum2 = Complex64::new(0.0, 0.0);
        let mut sum3 = Complex64::new(0.0, 0.0);
        let ratio = (LAMBDA2 * LAMBDA2) / (LAMBDA4 * LAMBDA4);
        let mut best_axis = 0;
        let mut best_diff = -1.0;
        for i in 0..d {
            let h = half[i];
            x[i] = center[i] - LAMBDA2 * h;
            let a = f(&x[..d]);
            x[i] = center[i] + LAMBDA2 * h;
            let b = f(&x[..d]);
            x[i] = center[i] - LAMBDA4 * h;
            let c = f(&x[..d]);
            x[i] = center[i] + LAMBDA4 * h;
            let e = f(&x[..d]);
            x[i] = center[i];
            sum2 += a + b;
            sum3 += c + e;
            let diff = ((a + b - 2.0 * f0) - ratio * (c + e - 2.0 * f0)).norm();
            let wider = best_diff >= 0.0
                && (diff - best_diff).abs() <= 1e-12 * best_diff.abs()
                && half[i] > half[best_axis];
            if diff > best_diff || wider {
                best_diff = diff;
                best_axis = i;
            }
        }
        let mut sum4 = Complex64::new(0.0, 0.0);
        for i in 0..d {
            for j in (i + 1)..d {
                for (si, sj) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
                    x[i] = center[i] + si * LAMBDA4 * half[i];
                    x[j] = center[j] + sj * LAMBDA4 * half[j];
                    sum4 += f(&x[..d]);
                }
                x[i] = center[i];
                x[j] = center[j];
            }
        }
        let mut sum5 = Complex64::new(0.0, 0.0);
        for mask in 0..self.corners {
            for (k, xk) in x.iter_mut().enumerate().take(d) {
                let sign = if mask & (1 << k) != 0 { 1.0 } else { -1.0 };
                *xk = center[k] + sign * LAMBDA5 * half[k];
            }
            sum5 += f(&x[..d]);
        }
        let volume: f64 = half[..d].iter().map(|h| 2.0 * h).product();
        let r7 = (f0 * self.w[0] + sum2 * self.w[1] + sum3 * self.w[2] + sum4 * self.w[3]
            + sum5 * self.w[4])
            * volume;
        let r5 = (f0 * self.we[0] + sum2 * self.we[1] + sum3 * self.we[2] + sum4 * self.we[3])
            * volume;
        let mut error = (r7 - r5).norm();
        if !r7.re.is_finite() || !r7.im.is_finite() {
            error = f64::INFINITY;
        }
        Cell {
            center,
            half,
            value: r7,
            error,
            split_axis: best_axis,
        }
    }
}

fn pairwise_sum(values: &[Complex64]) -> Complex64 {
    match values.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => values[0],
        len if len <= 8 => values.iter().sum(),
        len => {
            let mid = len / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Integrates `f` over the box whose per-axis breakpoints are given.
///
/// `breakpoints[k]` must be strictly increasing with at least two entries;
/// the first and last entries are the box limits along axis `k`.
pub fn integrate<F>(f: &F, breakpoints: &[Vec<f64>], opts: &CubatureOptions) -> CubatureResult
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let dim = breakpoints.len();
    assert!(
        (2..=MAX_DIM).contains(&dim),
        "cubature supports dimensions 2..={MAX_DIM}, got {dim}"
    );
    for axis in breakpoints {
        assert!(axis.len() >= 2, "each axis needs at least two breakpoints");
        assert!(
            axis.windows(2).all(|w| w[0] < w[1]),
            "breakpoints must be strictly increasing"
        );
    }
    let rule = Rule::new(dim);

    // Canonical enumeration of the initial tensor-product cells.
    let mut boxes = vec![([0.0; MAX_DIM], [0.0; MAX_DIM])];
    for (k, axis) in breakpoints.iter().enumerate() {
        let mut next = Vec::with_capacity(boxes.len() * (axis.len() - 1));
        for (c, h) in &boxes {
            for w in axis.windows(2) {
                let mut c = *c;
                let mut h = *h;
                c[k] = 0.5 * (w[0] + w[1]);
                h[k] = 0.5 * (w[1] - w[0]);
                next.push((c, h));
            }
        }
        boxes = next;
    }
    let mut cells: Vec<Cell> = boxes
        .par_iter()
        .map(|(c, h)| rule.apply(f, *c, *h))
        .collect();
    let mut evals = cells.len() * rule.points_per_cell();
    let mut subdivisions = 0usize;

    loop {
        let values: Vec<Complex64> = cells.iter().map(|c| c.value).collect();
        let value = pairwise_sum(&values);
        let error: f64 = cells.iter().map(|c| c.error).sum();
        let target = (opts.rel_tol * value.norm()).max(opts.abs_tol);
        if error <= target {
            return CubatureResult {
                value,
                error,
                evals,
                subdivisions,
                converged: true,
            };
        }
        if subdivisions >= opts.max_subdivisions {
            return CubatureResult {
                value,
                error,
                evals,
                subdivisions,
                converged: false,
            };
        }

        // Worst cells first; ties resolved by position for determinism.
        let mut order: Vec<usize> = (0..cells.len()).collect();
        order.sort_unstable_by(|&a, &b| {
            cells[b]
                .error
                .total_cmp(&cells[a].error)
                .then_with(|| a.cmp(&b))
        });
        let budget = opts.max_subdivisions - subdivisions;
        let batch_cap = (cells.len() / 8).clamp(1, 2048).min(budget);
        let excess = error - 0.5 * target;
        let mut selected = Vec::new();
        let mut acc = 0.0;
        for &idx in &order {
            if selected.len() >= batch_cap || (acc >= 0.5 * excess && !selected.is_empty()) {
                break;
            }
            acc += cells[idx].error;
            selected.push(idx);
        }

        let children: Vec<([f64; MAX_DIM], [f64; MAX_DIM])> = selected
            .iter()
            .flat_map(|&idx| {
                let cell = &cells[idx];
                let k = cell.split_axis;
                let mut h = cell.half;
                h[k] *= 0.5;
                let mut lo = cell.center;
                let mut hi = cell.center;
                lo[k] -= h[k];
                hi[k] += h[k];
                [(lo, h), (hi, h)]
            })
            .collect();
        let evaluated: Vec<Cell> = children
            .par_iter()
            .map(|(c, h)| rule.apply(f, *c, *h))
            .collect();
        evals += evaluated.len() * rule.points_per_cell();
        subdivisions += selected.len();

        let mut drop = vec![false; cells.len()];
        for &idx in &selected {
            drop[idx] = true;
        }
        let mut next: Vec<Cell> = cells
            .iter()
            .zip(&drop)
            .filter(|(_, &d)| !d)
            .map(|(c, _)| *c)
            .collect();
        next.extend(evaluated);
        cells = next;
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Gauss–Kronrod 7/15 on `[a, b]`: value and `|K15 − G7|`.
fn kronrod<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let f0 = f(c);
    let mut k = f0 * GK_WEIGHTS[7];
    let mut g = f0 * GAUSS_WEIGHTS[3];
    for i in 0..7 {
        let pair = f(c - h * GK_NODES[i]) + f(c + h * GK_NODES[i]);
        k += pair * GK_WEIGHTS[i];
        if i % 2 == 1 {
            g += pair * GAUSS_WEIGHTS[i / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Adaptive Gauss–Kronrod quadrature on `[breakpoints₀, breakpoints_last]`.
///
/// Serial and deterministic; intended for the inner integral of a nested
/// scheme as well as for one-dimensional problems.
pub fn integrate_line<F>(f: &F, breakpoints: &[f64], opts: &CubatureOptions) -> CubatureResult
where
    F: Fn(f64) -> Complex64,
{
    assert!(breakpoints.len() >= 2, "need at least two breakpoints");
    assert!(
        breakpoints.windows(2).all(|w| w[0] < w[1]),
        "breakpoints must be strictly increasing"
    );
    let mut cells: Vec<(f64, f64, Complex64, f64)> = breakpoints
        .windows(2)
        .map(|w| {
            let (v, e) = kronrod(f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    let mut subdivisions = 0usize;
    loop {
        let value: Complex64 = cells.iter().map(|c| c.2).sum();
        let error: f64 = cells.iter().map(|c| c.3).sum();
        let target = (opts.rel_tol * value.norm()).max(opts.abs_tol);
        let done = error <= target;
        if done || subdivisions >= opts.max_subdivisions {
            return CubatureResult {
                value,
                error,
                evals: 15 * (cells.len() + subdivisions),
                subdivisions,
                converged: done,
            };
        }
        let worst = (0..cells.len())
            .max_by(|&i, &j| cells[i].3.total_cmp(&cells[j].3).then_with(|| j.cmp(&i)))
            .expect("nonempty");
        let (a, b, _, _) = cells[worst];
        let m = 0.5 * (a + b);
        let (lv, le) = kronrod(f, a, m);
        let (rv, re) = kronrod(f, m, b);
        cells[worst] = (a, m, lv, le);
        cells.push((m, b, rv, re));
        subdivisions += 1;
    }
}
