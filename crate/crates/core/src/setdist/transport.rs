//! Exact solver for the balanced transportation problem.
//!
//! Primal transportation simplex on a spanning-tree basis. The starting basis
//! comes from the least-cost rule, entering cells are priced by block search
//! (the most negative reduced cost within the first block of cells, scanned
//! cyclically, that contains any candidate), and after a run of degenerate pivots the solver switches to Bland's
//! lowest-index rule until progress resumes, which rules out cycling.

use std::collections::VecDeque;

use super::{Result, SetDistError};

/// Tolerance on `sum(supply) - sum(demand)`.
pub const BALANCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportEntry {
    pub source: usize,
    pub target: usize,
    pub mass: f64,
}

/// Optimal plan: strictly positive flows plus the objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub entries: Vec<TransportEntry>,
    pub cost: f64,
}

impl TransportPlan {
    /// Row sums indexed by source.
    pub fn source_marginals(&self, sources: usize) -> Vec<f64> {
        let mut sums = vec![0.0; sources];
        for e in &self.entries {
            sums[e.source] += e.mass;
        }
        sums
    }

    /// Column sums indexed by target.
    pub fn target_marginals(&self, targets: usize) -> Vec<f64> {
        let mut sums = vec![0.0; targets];
        for e in &self.entries {
            sums[e.target] += e.mass;
        }
        sums
    }
}

/// Solves `min sum T_ij cost_ij` subject to `T 1 = supply`, `T' 1 = demand`, `T >= 0`.
///
/// `cost` is row-major with `supply.len()` rows and `demand.len()` columns.
/// Sources and targets with zero mass are removed before solving.
pub fn solve_transport(cost: &[f64], supply: &[f64], demand: &[f64]) -> Result<TransportPlan> {
    let (p, q) = (supply.len(), demand.len());
    if p == 0 || q == 0 {
        return Err(SetDistError::InvalidTransport("empty marginals".into()));
    }
    if cost.len() != p * q {
        return Err(SetDistError::InvalidTransport(format!(
            "cost matrix has {} entries, expected {p}x{q}",
            cost.len()
        )));
    }
    if let Some(c) = cost.iter().find(|c| !c.is_finite() || **c < 0.0) {
        return Err(SetDistError::InvalidTransport(format!("invalid cost {c}")));
    }
    if let Some(m) = supply.iter().chain(demand).find(|m| !m.is_finite() || **m < 0.0) {
        return Err(SetDistError::InvalidTransport(format!("invalid mass {m}")));
    }
    let (total_supply, total_demand): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    if (total_supply - total_demand).abs() > BALANCE_TOLERANCE {
        return Err(SetDistError::Unbalanced {
            supply: total_supply,
            demand: total_demand,
        });
    }

    let rows: Vec<usize> = (0..p).filter(|&i| supply[i] > 0.0).collect();
    let cols: Vec<usize> = (0..q).filter(|&j| demand[j] > 0.0).collect();
    if rows.is_empty() || cols.is_empty() {
        return Ok(TransportPlan {
            entries: Vec::new(),
            cost: 0.0,
        });
    }

    let (m, n) = (rows.len(), cols.len());
    let reduced_cost: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| cost[i * q + j]))
        .collect();
    let row_mass: Vec<f64> = rows.iter().map(|&i| supply[i]).collect();
    let col_mass: Vec<f64> = cols.iter().map(|&j| demand[j]).collect();

    let flows = if m == 1 {
        col_mass.iter().enumerate().map(|(j, &f)| (0, j, f)).collect()
    } else if n == 1 {
        row_mass.iter().enumerate().map(|(i, &f)| (i, 0, f)).collect()
    } else {
        let mut simplex = Simplex::new(&reduced_cost, m, n, &row_mass, &col_mass);
        simplex.run()?;
        simplex.cells.iter().map(|c| (c.row, c.col, c.flow)).collect::<Vec<_>>()
    };

    let mut entries: Vec<TransportEntry> = flows
        .into_iter()
        .filter(|&(_, _, f)| f > 0.0)
        .map(|(i, j, mass)| TransportEntry {
            source: rows[i],
            target: cols[j],
            mass,
        })
        .collect();
    entries.sort_by_key(|e| (e.source, e.target));
    let cost = entries.iter().map(|e| e.mass * cost[e.source * q + e.target]).sum();
    Ok(TransportPlan { entries, cost })
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    row: usize,
    col: usize,
    flow: f64,
}

/// Basis of `m + n - 1` cells forming a spanning tree over row and column nodes.
/// Node `i < m` is row `i`; node `m + j` is column `j`.
struct Simplex<'a> {
    cost: &'a [f64],
    m: usize,
    n: usize,
    cells: Vec<Cell>,
    in_basis: Vec<bool>,
    adjacency: Vec<Vec<usize>>,
    u: Vec<f64>,
    v: Vec<f64>,
    parent_cell: Vec<usize>,
    depth: Vec<usize>,
    tolerance: f64,
    cursor: usize,
    block: usize,
}

impl<'a> Simplex<'a> {
    fn new(cost: &'a [f64], m: usize, n: usize, supply: &[f64], demand: &[f64]) -> Self {
        let max_cost = cost.iter().copied().fold(0.0f64, f64::max);
        let mut simplex = Simplex {
            cost,
            m,
            n,
            cells: Vec::with_capacity(m + n - 1),
            in_basis: vec![false; m * n],
            adjacency: vec![Vec::new(); m + n],
            u: vec![0.0; m],
            v: vec![0.0; n],
            parent_cell: vec![usize::MAX; m + n],
            depth: vec![0; m + n],
            tolerance: 1e-13 * max_cost.max(1.0),
            cursor: 0,
            block: ((m * n) as f64).sqrt().ceil().max(10.0) as usize,
        };
        simplex.least_cost_start(supply, demand);
        simplex
    }

    /// Least-cost rule, crossing out exactly one line per allocation (two on
    /// the last) so the result is a spanning tree even when degenerate.
    fn least_cost_start(&mut self, supply: &[f64], demand: &[f64]) {
        let (m, n) = (self.m, self.n);
        let mut order: Vec<(f64, usize)> = self.cost.iter().copied().zip(0..m * n).collect();
        order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut row_left = supply.to_vec();
        let mut col_left = demand.to_vec();
        let mut row_done = vec![false; m];
        let mut col_done = vec![false; n];
        let (mut rows_open, mut cols_open) = (m, n);

        for (_, idx) in order {
            let (i, j) = (idx / n, idx % n);
            if row_done[i] || col_done[j] {
                continue;
            }
            if rows_open == 1 && cols_open == 1 {
                let flow = row_left[i].min(col_left[j]).max(0.0);
                self.add_cell(Cell { row: i, col: j, flow });
                break;
            }
            let cross_row = if rows_open == 1 {
                false
            } else if cols_open == 1 {
                true
            } else {
                row_left[i] <= col_left[j]
            };
            let flow = if cross_row { row_left[i] } else { col_left[j] };
            row_left[i] = (row_left[i] - flow).max(0.0);
            col_left[j] = (col_left[j] - flow).max(0.0);
            if cross_row {
                row_done[i] = true;
                rows_open -= 1;
            } else {
                col_done[j] = true;
                cols_open -= 1;
            }
            self.add_cell(Cell { row: i, col: j, flow });
        }
        debug_assert_eq!(self.cells.len(), m + n - 1);
    }

    fn add_cell(&mut self, cell: Cell) {
        let id = self.cells.len();
        self.in_basis[cell.row * self.n + cell.col] = true;
        self.adjacency[cell.row].push(id);
        self.adjacency[self.m + cell.col].push(id);
        self.cells.push(cell);
    }

    fn replace_cell(&mut self, id: usize, cell: Cell) {
        let old = self.cells[id];
        self.in_basis[old.row * self.n + old.col] = false;
        for node in [old.row, self.m + old.col] {
            let list = &mut self.adjacency[node];
            let pos = list.iter().position(|&c| c == id).expect("basis adjacency");
            list.swap_remove(pos);
        }
        self.in_basis[cell.row * self.n + cell.col] = true;
        self.adjacency[cell.row].push(id);
        self.adjacency[self.m + cell.col].push(id);
        self.cells[id] = cell;
    }

    fn other_end(&self, cell: &Cell, node: usize) -> usize {
        if node < self.m {
            self.m + cell.col
        } else {
            cell.row
        }
    }

    /// Dual potentials with `u[0] = 0`, plus the BFS tree used to trace cycles.
    fn compute_potentials(&mut self) {
        let m = self.m;
        let mut seen = vec![false; m + self.n];
        let mut queue = VecDeque::with_capacity(m + self.n);
        self.u[0] = 0.0;
        self.depth[0] = 0;
        self.parent_cell[0] = usize::MAX;
        seen[0] = true;
        queue.push_back(0);
        while let Some(node) = queue.pop_front() {
            for k in 0..self.adjacency[node].len() {
                let id = self.adjacency[node][k];
                let cell = self.cells[id];
                let next = self.other_end(&cell, node);
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let c = self.cost[cell.row * self.n + cell.col];
                if next < m {
                    self.u[next] = c - self.v[cell.col];
                } else {
                    self.v[next - m] = c - self.u[cell.row];
                }
                self.parent_cell[next] = id;
                self.depth[next] = self.depth[node] + 1;
                queue.push_back(next);
            }
        }
    }

    fn entering_block(&mut self) -> Option<usize> {
        let (m, n) = (self.m, self.n);
        let total = m * n;
        let mut best = None;
        let mut best_rc = -self.tolerance;
        let (mut i, mut j) = (self.cursor / n, self.cursor % n);
        let mut in_block = 0;
        for _ in 0..total {
            let idx = i * n + j;
            let rc = self.cost[idx] - self.u[i] - self.v[j];
            if rc < best_rc && !self.in_basis[idx] {
                best_rc = rc;
                best = Some(idx);
            }
            j += 1;
            if j == n {
                j = 0;
                i = if i + 1 == m { 0 } else { i + 1 };
            }
            in_block += 1;
            if in_block == self.block {
                if best.is_some() {
                    break;
                }
                in_block = 0;
            }
        }
        self.cursor = i * n + j;
        best
    }

    fn entering_bland(&self) -> Option<usize> {
        (0..self.m * self.n).find(|&idx| {
            let (i, j) = (idx / self.n, idx % self.n);
            !self.in_basis[idx] && self.cost[idx] - self.u[i] - self.v[j] < -self.tolerance
        })
    }

    /// Basis cells on the tree path from column `col` to row `row`, in order,
    /// and how many of them lie between the column and the common ancestor.
    fn cycle(&self, row: usize, col: usize) -> (Vec<usize>, usize) {
        let (mut a, mut b) = (self.m + col, row);
        let mut from_col = Vec::new();
        let mut from_row = Vec::new();
        while self.depth[a] > self.depth[b] {
            let id = self.parent_cell[a];
            from_col.push(id);
            a = self.other_end(&self.cells[id], a);
        }
        while self.depth[b] > self.depth[a] {
            let id = self.parent_cell[b];
            from_row.push(id);
            b = self.other_end(&self.cells[id], b);
        }
        while a != b {
            let id = self.parent_cell[a];
            from_col.push(id);
            a = self.other_end(&self.cells[id], a);
            let id = self.parent_cell[b];
            from_row.push(id);
            b = self.other_end(&self.cells[id], b);
        }
        let split = from_col.len();
        from_col.extend(from_row.into_iter().rev());
        (from_col, split)
    }

    /// Recomputes parent, depth and potential for the subtree hanging from
    /// `start` after it was reattached below `anchor` through cell `id`.
    fn relabel(&mut self, start: usize, anchor: usize, id: usize) {
        let m = self.m;
        let mut stack = vec![(start, anchor, id)];
        while let Some((node, parent, cell_id)) = stack.pop() {
            let cell = self.cells[cell_id];
            let c = self.cost[cell.row * self.n + cell.col];
            if node < m {
                self.u[node] = c - self.v[cell.col];
            } else {
                self.v[node - m] = c - self.u[cell.row];
            }
            self.parent_cell[node] = cell_id;
            self.depth[node] = self.depth[parent] + 1;
            for &next_id in &self.adjacency[node] {
                if next_id != cell_id {
                    let next = self.other_end(&self.cells[next_id], node);
                    stack.push((next, node, next_id));
                }
            }
        }
    }

    /// Pivots to optimality, returning the number of pivots.
    fn run(&mut self) -> Result<usize> {
        let max_iterations = 100 * self.m * self.n + 1000;
        let degenerate_limit = 10 * (self.m + self.n);
        let mut degenerate_run = 0;

        self.compute_potentials();
        for pivots in 0..max_iterations {
            let entering = if degenerate_run < degenerate_limit {
                self.entering_block()
            } else {
                self.entering_bland()
            };
            let Some(idx) = entering else {
                return Ok(pivots);
            };
            let (row, col) = (idx / self.n, idx % self.n);

            // Path cells alternate -theta, +theta starting next to the column.
            let (path, split) = self.cycle(row, col);
            let mut leaving_pos = 0;
            let mut leaving = usize::MAX;
            let mut theta = f64::INFINITY;
            let mut leaving_key = usize::MAX;
            for (pos, &id) in path.iter().enumerate().step_by(2) {
                let cell = self.cells[id];
                let key = cell.row * self.n + cell.col;
                if cell.flow < theta || (cell.flow == theta && key < leaving_key) {
                    theta = cell.flow;
                    leaving_pos = pos;
                    leaving = id;
                    leaving_key = key;
                }
            }

            for (k, &id) in path.iter().enumerate() {
                let cell = &mut self.cells[id];
                if k % 2 == 0 {
                    cell.flow = (cell.flow - theta).max(0.0);
                } else {
                    cell.flow += theta;
                }
            }
            self.replace_cell(leaving, Cell { row, col, flow: theta });
            // The leaving cell detaches whichever end of the entering cell sits below it.
            if leaving_pos < split {
                self.relabel(self.m + col, row, leaving);
            } else {
                self.relabel(row, self.m + col, leaving);
            }

            if theta > 0.0 {
                degenerate_run = 0;
            } else {
                degenerate_run += 1;
            }
        }
        Err(SetDistError::SolverStalled {
            rows: self.m,
            cols: self.n,
        })
    }
}
