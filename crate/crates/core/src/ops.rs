//! Finite-difference stencils on the polar grid and their Cartesian chain-rule combinations.
//!
//! Radial stencils are fourth order with one-sided windows near `r0` and `1`;
//! azimuthal stencils are periodic five-point.

use std::sync::Arc;

use crate::domain::Grid;

/// Fornberg's recursion: weights of derivatives `0..=m` at `x0` from nodes `xs`.
/// Returns `w[k][j]`, the weight of node `j` for the `k`-th derivative.
pub fn fornberg_weights(x0: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Integer-offset stencil: `(offset, weight)` pairs for unit spacing.
fn unit_stencil(offsets: &[i64], at: f64, deriv: usize) -> Vec<(i64, f64)> {
    let xs: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
    let w = fornberg_weights(at, &xs, deriv);
    offsets.iter().copied().zip(w[deriv].iter().copied()).collect()
}

/// Row-compressed sparse operator acting on nodal vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseRows {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            ptr.push(cols.len());
        }
        Self { ptr, cols, vals }
    }

    pub fn nrows(&self) -> usize {
        self.ptr.len() - 1
    }

    pub fn row(&self, p: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.ptr[p], self.ptr[p + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.nrows())
            .map(|p| {
                let (c, v) = self.row(p);
                c.iter().zip(v).map(|(&c, &v)| v * f[c]).sum()
            })
            .collect()
    }
}

/// Rows sharing a column pattern, with several coefficient sets aligned to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Footprint<const K: usize> {
    ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: [Vec<f64>; K],
}

impl<const K: usize> Footprint<K> {
    fn from_ops(ops: [&SparseRows; K]) -> Self {
        let n = ops[0].nrows();
        let mut ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals: [Vec<f64>; K] = std::array::from_fn(|_| Vec::new());
        for p in 0..n {
            let mut pat: Vec<usize> = ops.iter().flat_map(|o| o.row(p).0.iter().copied()).collect();
            pat.sort_unstable();
            pat.dedup();
            for (k, op) in ops.iter().enumerate() {
                let (oc, ov) = op.row(p);
                let mut dense = vec![0.0; pat.len()];
                for (c, v) in oc.iter().zip(ov) {
                    let pos = pat.binary_search(c).unwrap();
                    dense[pos] = *v;
                }
                vals[k].extend(dense);
            }
            cols.extend(pat);
            ptr.push(cols.len());
        }
        Self { ptr, cols, vals }
    }

    pub fn cols(&self, p: usize) -> &[usize] {
        &self.cols[self.ptr[p]..self.ptr[p + 1]]
    }

    pub fn coeffs(&self, k: usize, p: usize) -> &[f64] {
        &self.vals[k][self.ptr[p]..self.ptr[p + 1]]
    }

    pub fn max_width(&self) -> usize {
        self.ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    /// Applies coefficient set `k` at node `p`.
    #[inline]
    pub fn dot(&self, k: usize, p: usize, f: &[f64]) -> f64 {
        let (a, b) = (self.ptr[p], self.ptr[p + 1]);
        self.cols[a..b].iter().zip(&self.vals[k][a..b]).map(|(&c, &v)| v * f[c]).sum()
    }
}

/// Polar stencils plus Cartesian first and second derivatives obtained by the chain rule.
#[derive(Debug, Clone)]
pub struct DiffOperators {
    grid: Arc<Grid>,
    pub dr: SparseRows,
    pub dt: SparseRows,
    pub drr: SparseRows,
    pub dtt: SparseRows,
    pub drt: SparseRows,
    /// Sets `[dx, dy]`.
    pub first: Footprint<2>,
    /// Sets `[dxx, dxy, dyy, laplacian]`.
    pub second: Footprint<4>,
}

pub const DX: usize = 0;
pub const DY: usize = 1;
pub const DXX: usize = 0;
pub const DXY: usize = 1;
pub const DYY: usize = 2;
pub const LAP: usize = 3;

fn radial_first_window(i: usize, nr: usize) -> usize {
    i.saturating_sub(2).min(nr - 5)
}

impl DiffOperators {
    pub fn new(grid: Arc<Grid>) -> Self {
        let (nr, nt) = (grid.nr(), grid.ntheta());
        let (hr, ht) = (grid.dr(), grid.dtheta());
        let node = |i: usize, j: i64| i * nt + j.rem_euclid(nt as i64) as usize;

        let t1 = unit_stencil(&[-2, -1, 0, 1, 2], 0.0, 1);
        let t2 = unit_stencil(&[-2, -1, 0, 1, 2], 0.0, 2);
        let r1: Vec<Vec<(usize, f64)>> = (0..nr)
            .map(|i| {
                let s = radial_first_window(i, nr);
                let offs: Vec<i64> = (0..5).map(|k| (s + k) as i64).collect();
                unit_stencil(&offs, i as f64, 1)
                    .into_iter()
                    .map(|(o, w)| (o as usize, w / hr))
                    .collect()
            })
            .collect();
        let r2: Vec<Vec<(usize, f64)>> = (0..nr)
            .map(|i| {
                let offs: Vec<i64> = if i < 2 {
                    (0..6).collect()
                } else if i + 2 >= nr {
                    ((nr - 6) as i64..nr as i64).collect()
                } else {
                    (i as i64 - 2..=i as i64 + 2).collect()
                };
                unit_stencil(&offs, i as f64, 2)
                    .into_iter()
                    .map(|(o, w)| (o as usize, w / (hr * hr)))
                    .collect()
            })
            .collect();

        let mut dr = Vec::with_capacity(grid.len());
        let mut dt = Vec::with_capacity(grid.len());
        let mut drr = Vec::with_capacity(grid.len());
        let mut dtt = Vec::with_capacity(grid.len());
        let mut drt = Vec::with_capacity(grid.len());
        for i in 0..nr {
            for j in 0..nt as i64 {
                dr.push(r1[i].iter().map(|&(ii, w)| (node(ii, j), w)).collect::<Vec<_>>());
                drr.push(r2[i].iter().map(|&(ii, w)| (node(ii, j), w)).collect::<Vec<_>>());
                dt.push(t1.iter().map(|&(o, w)| (node(i, j + o), w / ht)).collect::<Vec<_>>());
                dtt.push(t2.iter().map(|&(o, w)| (node(i, j + o), w / (ht * ht))).collect::<Vec<_>>());
                let mut e = Vec::with_capacity(25);
                for &(ii, wr) in &r1[i] {
                    for &(o, wt) in &t1 {
                        e.push((node(ii, j + o), wr * wt / ht));
                    }
                }
                drt.push(e);
            }
        }
        let dr = SparseRows::from_rows(dr);
        let dt = SparseRows::from_rows(dt);
        let drr = SparseRows::from_rows(drr);
        let dtt = SparseRows::from_rows(dtt);
        let drt = SparseRows::from_rows(drt);

        let combine = |terms: Vec<(&SparseRows, Box<dyn Fn(f64, f64, f64) -> f64>)>| {
            let rows = (0..grid.len())
                .map(|p| {
                    let (r, th) = (grid.r(p), grid.theta(p));
                    let (s, c) = th.sin_cos();
                    let mut e = Vec::new();
                    for (op, coef) in &terms {
                        let k = coef(r, s, c);
                        if k != 0.0 {
                            let (cols, vals) = op.row(p);
                            e.extend(cols.iter().zip(vals).map(|(&q, &v)| (q, k * v)));
                        }
                    }
                    e
                })
                .collect();
            SparseRows::from_rows(rows)
        };
        let dx = combine(vec![
            (&dr, Box::new(|_, _, c| c)),
            (&dt, Box::new(|r, s, _| -s / r)),
        ]);
        let dy = combine(vec![
            (&dr, Box::new(|_, s, _| s)),
            (&dt, Box::new(|r, _, c| c / r)),
        ]);
        let dxx = combine(vec![
            (&drr, Box::new(|_, _, c| c * c)),
            (&drt, Box::new(|r, s, c| -2.0 * s * c / r)),
            (&dt, Box::new(|r, s, c| 2.0 * s * c / (r * r))),
            (&dr, Box::new(|r, s, _| s * s / r)),
            (&dtt, Box::new(|r, s, _| s * s / (r * r))),
        ]);
        let dyy = combine(vec![
            (&drr, Box::new(|_, s, _| s * s)),
            (&drt, Box::new(|r, s, c| 2.0 * s * c / r)),
            (&dt, Box::new(|r, s, c| -2.0 * s * c / (r * r))),
            (&dr, Box::new(|r, _, c| c * c / r)),
            (&dtt, Box::new(|r, _, c| c * c / (r * r))),
        ]);
        let dxy = combine(vec![
            (&drr, Box::new(|_, s, c| s * c)),
            (&drt, Box::new(|r, s, c| (c * c - s * s) / r)),
            (&dt, Box::new(|r, s, c| (s * s - c * c) / (r * r))),
            (&dr, Box::new(|r, s, c| -s * c / r)),
            (&dtt, Box::new(|r, s, c| -s * c / (r * r))),
        ]);
        let lap = combine(vec![
            (&drr, Box::new(|_, _, _| 1.0)),
            (&dr, Box::new(|r, _, _| 1.0 / r)),
            (&dtt, Box::new(|r, _, _| 1.0 / (r * r))),
        ]);
        let first = Footprint::from_ops([&dx, &dy]);
        let second = Footprint::from_ops([&dxx, &dxy, &dyy, &lap]);
        Self { grid, dr, dt, drr, dtt, drt, first, second }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn gradient(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.grid.len();
        ((0..n).map(|p| self.first.dot(DX, p, f)).collect(), (0..n).map(|p| self.first.dot(DY, p, f)).collect())
    }

    /// `(f_xx, f_xy, f_yy)` at every node.
    pub fn hessian(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.grid.len();
        let g = |k| (0..n).map(|p| self.second.dot(k, p, f)).collect::<Vec<_>>();
        (g(DXX), g(DXY), g(DYY))
    }

    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        (0..self.grid.len()).map(|p| self.second.dot(LAP, p, f)).collect()
    }
}
