//! Left-looking sparse LU of a simplex basis plus a product-form eta file.
//!
//! Columns are factored in order of increasing length. Pivot rows are picked
//! by threshold partial pivoting, preferring rows with few remaining entries.
//! Solves take and return dense vectors: `ftran` maps a row-indexed right-hand
//! side to a basis-position-indexed solution, `btran` the reverse.

const PIVOT_THRESHOLD: f64 = 0.1;
const SINGULAR_TOL: f64 = 1e-11;
const DROP_TOL: f64 = 1e-14;

#[derive(Debug, Default)]
pub(crate) struct Factor {
    m: usize,
    /// Basis position of the k-th factored column.
    order: Vec<usize>,
    /// Pivot row of the k-th factored column.
    prow: Vec<usize>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    /// Factor indices k with a non-empty L column.
    l_nonempty: Vec<usize>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    u_diag: Vec<f64>,
    eta_pos: Vec<usize>,
    eta_piv: Vec<f64>,
    eta_start: Vec<usize>,
    eta_idx: Vec<usize>,
    eta_val: Vec<f64>,
}

/// Result of a factorization that could not pivot every column.
#[derive(Debug)]
pub(crate) struct Singular {
    /// Basis positions whose columns were dependent.
    pub positions: Vec<usize>,
    /// Rows left without a pivot, one per dependent position.
    pub rows: Vec<usize>,
}

impl Factor {
    pub fn num_etas(&self) -> usize {
        self.eta_pos.len()
    }

    /// Factors the basis whose column at position `p` is given by `column(p)`.
    pub fn factorize<'a, F>(&mut self, m: usize, column: F) -> Result<(), Singular>
    where
        F: Fn(usize) -> (&'a [usize], &'a [f64], Option<(usize, f64)>),
    {
        *self = Factor { m, ..Factor::default() };
        self.l_start.push(0);
        self.u_start.push(0);
        self.eta_start.push(0);

        let mut lens: Vec<(usize, usize)> = (0..m)
            .map(|p| {
                let (idx, _, extra) = column(p);
                (idx.len() + usize::from(extra.is_some()), p)
            })
            .collect();
        lens.sort_unstable();

        let mut row_count = vec![0usize; m];
        for p in 0..m {
            let (idx, _, extra) = column(p);
            for &r in idx {
                row_count[r] += 1;
            }
            if let Some((r, _)) = extra {
                row_count[r] += 1;
            }
        }

        let mut k_of_row = vec![usize::MAX; m];
        let mut work = vec![0.0f64; m];
        let mut touched_mark = vec![false; m];
        let mut touched: Vec<usize> = Vec::new();
        let mut singular = Singular { positions: Vec::new(), rows: Vec::new() };

        for &(_, p) in &lens {
            let (idx, val, extra) = column(p);
            let mut scatter = |r: usize, a: f64, touched: &mut Vec<usize>| {
                if !touched_mark[r] {
                    touched_mark[r] = true;
                    touched.push(r);
                }
                work[r] += a;
            };
            for (&r, &a) in idx.iter().zip(val) {
                scatter(r, a, &mut touched);
            }
            if let Some((r, a)) = extra {
                scatter(r, a, &mut touched);
            }
            for &r in idx {
                row_count[r] -= 1;
            }
            if let Some((r, _)) = extra {
                row_count[r] -= 1;
            }

            for &kk in &self.l_nonempty {
                let wr = work[self.prow[kk]];
                if wr == 0.0 {
                    continue;
                }
                for t in self.l_start[kk]..self.l_start[kk + 1] {
                    let i = self.l_idx[t];
                    if !touched_mark[i] {
                        touched_mark[i] = true;
                        touched.push(i);
                    }
                    work[i] -= self.l_val[t] * wr;
                }
            }

            let mut max_abs = 0.0f64;
            for &r in &touched {
                if k_of_row[r] == usize::MAX {
                    max_abs = max_abs.max(work[r].abs());
                }
            }

            if max_abs < SINGULAR_TOL {
                singular.positions.push(p);
                for &r in &touched {
                    work[r] = 0.0;
                    touched_mark[r] = false;
                }
                touched.clear();
                continue;
            }

            let mut best: Option<usize> = None;
            for &r in &touched {
                if k_of_row[r] != usize::MAX || work[r].abs() < PIVOT_THRESHOLD * max_abs {
                    continue;
                }
                best = Some(match best {
                    None => r,
                    Some(b) => {
                        let key_r = (row_count[r], -work[r].abs(), r);
                        let key_b = (row_count[b], -work[b].abs(), b);
                        if key_r.partial_cmp(&key_b) == Some(std::cmp::Ordering::Less) {
                            r
                        } else {
                            b
                        }
                    }
                });
            }
            let r = best.expect("pivot candidate exists when max_abs > 0");
            let k = self.order.len();
            let diag = work[r];

            for &i in &touched {
                let w = work[i];
                if i == r || w.abs() <= DROP_TOL {
                    continue;
                }
                if k_of_row[i] != usize::MAX {
                    self.u_idx.push(k_of_row[i]);
                    self.u_val.push(w);
                } else {
                    self.l_idx.push(i);
                    self.l_val.push(w / diag);
                }
            }
            self.u_start.push(self.u_idx.len());
            if self.l_idx.len() > *self.l_start.last().unwrap() {
                self.l_nonempty.push(k);
            }
            self.l_start.push(self.l_idx.len());
            self.u_diag.push(diag);
            self.order.push(p);
            self.prow.push(r);
            k_of_row[r] = k;

            for &i in &touched {
                work[i] = 0.0;
                touched_mark[i] = false;
            }
            touched.clear();
        }

        if singular.positions.is_empty() {
            Ok(())
        } else {
            singular.rows = (0..m).filter(|&r| k_of_row[r] == usize::MAX).collect();
            Err(singular)
        }
    }

    /// Solves `B x = b`; `b` is row-indexed and overwritten, `x` is position-indexed.
    pub fn ftran(&self, b: &mut [f64], x: &mut [f64]) {
        for &k in &self.l_nonempty {
            let wr = b[self.prow[k]];
            if wr == 0.0 {
                continue;
            }
            for t in self.l_start[k]..self.l_start[k + 1] {
                b[self.l_idx[t]] -= self.l_val[t] * wr;
            }
        }
        for k in (0..self.order.len()).rev() {
            let xk = b[self.prow[k]] / self.u_diag[k];
            x[self.order[k]] = xk;
            if xk != 0.0 {
                for t in self.u_start[k]..self.u_start[k + 1] {
                    b[self.prow[self.u_idx[t]]] -= self.u_val[t] * xk;
                }
            }
        }
        for e in 0..self.eta_pos.len() {
            let p = self.eta_pos[e];
            let xp = x[p] / self.eta_piv[e];
            x[p] = xp;
            if xp != 0.0 {
                for t in self.eta_start[e]..self.eta_start[e + 1] {
                    x[self.eta_idx[t]] -= self.eta_val[t] * xp;
                }
            }
        }
    }

    /// Solves `B^T y = c`; `c` is position-indexed and overwritten, `y` is row-indexed.
    pub fn btran(&self, c: &mut [f64], y: &mut [f64], z: &mut Vec<f64>) {
        for e in (0..self.eta_pos.len()).rev() {
            let p = self.eta_pos[e];
            let mut s = c[p];
            for t in self.eta_start[e]..self.eta_start[e + 1] {
                s -= self.eta_val[t] * c[self.eta_idx[t]];
            }
            c[p] = s / self.eta_piv[e];
        }
        z.clear();
        z.resize(self.m, 0.0);
        for k in 0..self.order.len() {
            let mut s = c[self.order[k]];
            for t in self.u_start[k]..self.u_start[k + 1] {
                s -= self.u_val[t] * z[self.u_idx[t]];
            }
            z[k] = s / self.u_diag[k];
        }
        for k in 0..self.order.len() {
            y[self.prow[k]] = z[k];
        }
        for &k in self.l_nonempty.iter().rev() {
            let mut s = 0.0;
            for t in self.l_start[k]..self.l_start[k + 1] {
                s += self.l_val[t] * y[self.l_idx[t]];
            }
            y[self.prow[k]] -= s;
        }
    }

    /// Records the basis change at position `p` with `alpha = B^{-1} a_q`.
    pub fn push_eta(&mut self, p: usize, alpha: &[f64]) {
        self.eta_pos.push(p);
        self.eta_piv.push(alpha[p]);
        for (i, &a) in alpha.iter().enumerate() {
            if i != p && a.abs() > DROP_TOL {
                self.eta_idx.push(i);
                self.eta_val.push(a);
            }
        }
        self.eta_start.push(self.eta_idx.len());
    }
}
