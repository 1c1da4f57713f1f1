//! Adaptive two-dimensional quadrature on an axis-aligned rectangle.
//!
//! Each cell is estimated with a tensor-product Gauss-Legendre rule; the
//! error indicator is the difference between the cell's own rule value and
//! the sum over its four quadrants (computed eagerly, so splitting a cell
//! reuses the quadrant values). Cells are bisected worst-error-first until
//! the summed indicator meets the tolerance. The driver is single-threaded
//! and its refinement order is fully deterministic: ties in the error key are
//! broken by cell creation index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence (machine precision for small orders).
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

const GAUSS_ORDER: usize = 7;

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    fn new() -> Self {
        let (nodes, weights) = gauss_legendre(GAUSS_ORDER);
        Rule { nodes, weights }
    }

    fn cell<F: Fn(f64, f64) -> f64>(&self, f: &F, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        let (cx, hx) = (0.5 * (x0 + x1), 0.5 * (x1 - x0));
        let (cy, hy) = (0.5 * (y0 + y1), 0.5 * (y1 - y0));
        let mut acc = 0.0;
        for (i, &xi) in self.nodes.iter().enumerate() {
            let x = cx + hx * xi;
            let mut row = 0.0;
            for (j, &yj) in self.nodes.iter().enumerate() {
                row += self.weights[j] * f(x, cy + hy * yj);
            }
            acc += self.weights[i] * row;
        }
        acc * hx * hy
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    /// Sum of the four quadrant rule values (the value this cell reports).
    fine: f64,
    /// Quadrant rule values, reused as the children's coarse estimates.
    quadrants: [f64; 4],
    err: f64,
    alive: bool,
}

struct HeapKey {
    err: f64,
    idx: usize,
}

impl PartialEq for HeapKey {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err) == Ordering::Equal && self.idx == other.idx
    }
}
impl Eq for HeapKey {}
impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on error; older cells win ties for determinism.
        self.err
            .total_cmp(&other.err)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum number of cell bisections before giving up.
    pub max_refinements: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadEstimate {
    pub value: f64,
    pub error: f64,
    pub cells: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Integrate `f` over the rectangle spanned by the outermost entries of the
/// strictly increasing seed grids `xs` x `ys`. The seed lines become the
/// initial cell boundaries; place them on any known kinks or cuts.
pub fn adaptive_2d<F: Fn(f64, f64) -> f64>(
    f: &F,
    xs: &[f64],
    ys: &[f64],
    opts: &QuadOptions,
) -> Result<QuadEstimate> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::Domain(
            "adaptive_2d needs at least two grid lines per axis".into(),
        ));
    }
    for s in [xs, ys] {
        for w in s.windows(2) {
            if !(w[1] > w[0]) || !w[0].is_finite() || !w[1].is_finite() {
                return Err(Error::Domain(
                    "adaptive_2d seed grids must be finite and strictly increasing".into(),
                ));
            }
        }
    }
    if !(opts.rel_tol > 0.0) || opts.max_refinements == 0 {
        return Err(Error::Domain(
            "adaptive_2d requires rel_tol > 0 and max_refinements >= 1".into(),
        ));
    }

    let rule = Rule::new();
    let mut evals = 0usize;
    let mut arena: Vec<Cell> = Vec::new();
    let mut heap: BinaryHeap<HeapKey> = BinaryHeap::new();

    let make_cell =
        |x0: f64, x1: f64, y0: f64, y1: f64, coarse: Option<f64>, evals: &mut usize| -> Cell {
            let xm = 0.5 * (x0 + x1);
            let ym = 0.5 * (y0 + y1);
            let q = [
                rule.cell(f, x0, xm, y0, ym),
                rule.cell(f, xm, x1, y0, ym),
                rule.cell(f, x0, xm, ym, y1),
                rule.cell(f, xm, x1, ym, y1),
            ];
            *evals += 4 * GAUSS_ORDER * GAUSS_ORDER;
            let coarse = match coarse {
                Some(c) => c,
                None => {
                    *evals += GAUSS_ORDER * GAUSS_ORDER;
                    rule.cell(f, x0, x1, y0, y1)
                }
            };
            let fine = q[0] + q[1] + q[2] + q[3];
            Cell {
                x0,
                x1,
                y0,
                y1,
                fine,
                quadrants: q,
                err: (fine - coarse).abs(),
                alive: true,
            }
        };

    for i in 0..xs.len() - 1 {
        for j in 0..ys.len() - 1 {
            let cell = make_cell(xs[i], xs[i + 1], ys[j], ys[j + 1], None, &mut evals);
            heap.push(HeapKey {
                err: cell.err,
                idx: arena.len(),
            });
            arena.push(cell);
        }
    }

    let mut total: f64 = arena.iter().map(|c| c.fine).sum();
    let mut total_err: f64 = arena.iter().map(|c| c.err).sum();
    let mut refinements = 0usize;

    let tolerance = |value: f64| -> f64 { (opts.rel_tol * value.abs()).max(opts.abs_tol) };

    while total_err > tolerance(total) {
        if refinements >= opts.max_refinements {
            return Ok(QuadEstimate {
                value: resum(&arena),
                error: total_err,
                cells: arena.iter().filter(|c| c.alive).count(),
                evaluations: evals,
                converged: false,
            });
        }
        let Some(top) = heap.pop() else { break };
        if !arena[top.idx].alive {
            continue;
        }
        let parent = arena[top.idx];
        arena[top.idx].alive = false;
        total -= parent.fine;
        total_err -= parent.err;

        let xm = 0.5 * (parent.x0 + parent.x1);
        let ym = 0.5 * (parent.y0 + parent.y1);
        let bounds = [
            (parent.x0, xm, parent.y0, ym),
            (xm, parent.x1, parent.y0, ym),
            (parent.x0, xm, ym, parent.y1),
            (xm, parent.x1, ym, parent.y1),
        ];
        for (k, &(x0, x1, y0, y1)) in bounds.iter().enumerate() {
            let child = make_cell(x0, x1, y0, y1, Some(parent.quadrants[k]), &mut evals);
            total += child.fine;
            total_err += child.err;
            heap.push(HeapKey {
                err: child.err,
                idx: arena.len(),
            });
            arena.push(child);
        }
        refinements += 1;
    }

    Ok(QuadEstimate {
        value: resum(&arena),
        error: total_err.max(0.0),
        cells: arena.iter().filter(|c| c.alive).count(),
        evaluations: evals,
        converged: true,
    })
}

fn resum(arena: &[Cell]) -> f64 {
    arena.iter().filter(|c| c.alive).map(|c| c.fine).sum()
}
