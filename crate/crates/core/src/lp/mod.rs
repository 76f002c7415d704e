//! LP relaxation of the allocation problem.
//!
//! One column per block-service pair that can contribute: capacity pairs with
//! positive rate (objective) and latency pairs with positive rate (demand).
//! Rows are the latency demands (`>=`) followed by one unit row (`<= 1`) per
//! basic unit. All columns live in `[0, 1]`.

pub mod simplex;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assign::{Provenance, UtilityMatrix};
use crate::error::{Error, Result};
use crate::instance::Instance;
pub use simplex::Simplex;

/// Default feasibility tolerance for accepted solutions (row-scaled).
pub const LP_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Sparse `(column, coefficient)` entries.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A maximization LP with bounded columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Constraint>,
    /// `(block, service)` of each column; empty for LPs not built from an
    /// instance. Sorted, so [`LinearProgram::column_of`] can bisect.
    pub column_keys: Vec<(usize, usize)>,
    pub num_blocks: usize,
    pub num_services: usize,
}

impl LinearProgram {
    /// An LP with `n` columns in `[0, 1]` and no rows.
    pub fn with_columns(objective: Vec<f64>) -> LinearProgram {
        let n = objective.len();
        LinearProgram {
            objective,
            lower: vec![0.0; n],
            upper: vec![1.0; n],
            rows: Vec::new(),
            column_keys: Vec::new(),
            num_blocks: 0,
            num_services: 0,
        }
    }

    pub fn num_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(Constraint { coeffs, sense, rhs });
    }

    pub fn column_of(&self, b: usize, k: usize) -> Option<usize> {
        self.column_keys.binary_search(&(b, k)).ok()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest constraint or bound violation of `x`, with each row measured
    /// relative to its largest coefficient.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for row in &self.rows {
            let scale = row.coeffs.iter().map(|(_, a)| a.abs()).fold(0.0, f64::max).max(1e-300);
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let v = match row.sense {
                Sense::Le => lhs - row.rhs,
                Sense::Ge => row.rhs - lhs,
                Sense::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(v / scale);
        }
        worst
    }

    /// Writes the LP in fixed MPS format. The objective is negated because
    /// MPS readers minimize by default.
    pub fn write_mps<W: Write>(&self, name: &str, mut out: W) -> Result<()> {
        let name8: String = name.chars().filter(|c| !c.is_whitespace()).take(8).collect();
        writeln!(out, "NAME          {name8}")?;
        writeln!(out, "* maximization; objective row OBJ holds negated coefficients")?;
        writeln!(out, "ROWS")?;
        writeln!(out, " N  OBJ")?;
        for (i, row) in self.rows.iter().enumerate() {
            let t = match row.sense {
                Sense::Le => 'L',
                Sense::Ge => 'G',
                Sense::Eq => 'E',
            };
            writeln!(out, " {t}  R{i}")?;
        }
        let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.num_cols()];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                by_col[j].push((i, a));
            }
        }
        writeln!(out, "COLUMNS")?;
        for (j, entries) in by_col.iter().enumerate() {
            let col = format!("C{j}");
            if self.objective[j] != 0.0 {
                writeln!(out, "    {:<8}  {:<8}  {:>12}", col, "OBJ", mps_number(-self.objective[j]))?;
            }
            for &(i, a) in entries {
                writeln!(out, "    {:<8}  {:<8}  {:>12}", col, format!("R{i}"), mps_number(a))?;
            }
        }
        writeln!(out, "RHS")?;
        for (i, row) in self.rows.iter().enumerate() {
            if row.rhs != 0.0 {
                writeln!(out, "    {:<8}  {:<8}  {:>12}", "RHS", format!("R{i}"), mps_number(row.rhs))?;
            }
        }
        writeln!(out, "BOUNDS")?;
        for j in 0..self.num_cols() {
            let col = format!("C{j}");
            let (l, u) = (self.lower[j], self.upper[j]);
            if l == u {
                writeln!(out, " FX {:<8}  {:<8}  {:>12}", "BND", col, mps_number(l))?;
                continue;
            }
            if l != 0.0 {
                writeln!(out, " LO {:<8}  {:<8}  {:>12}", "BND", col, mps_number(l))?;
            }
            if u.is_finite() {
                writeln!(out, " UP {:<8}  {:<8}  {:>12}", "BND", col, mps_number(u))?;
            } else {
                writeln!(out, " PL {:<8}  {:<8}", "BND", col)?;
            }
        }
        writeln!(out, "ENDATA")?;
        Ok(())
    }
}

/// A number that fits the 12-character MPS value field.
fn mps_number(v: f64) -> String {
    let plain = format!("{v}");
    if plain.len() <= 12 {
        return plain;
    }
    for digits in (0..=6).rev() {
        let s = format!("{v:.digits$e}");
        if s.len() <= 12 {
            return s;
        }
    }
    format!("{v:.0e}")
}

/// Builds the relaxation of `inst`.
pub fn build_lp(inst: &Instance) -> LinearProgram {
    let mut keys = Vec::new();
    let mut objective = Vec::new();
    for b in 0..inst.num_blocks() {
        for s in &inst.services {
            let r = inst.rate(b, s.id);
            if r > 0.0 {
                keys.push((b, s.id));
                objective.push(if s.is_latency() { 0.0 } else { r });
            }
        }
    }
    let mut lp = LinearProgram::with_columns(objective);
    lp.num_blocks = inst.num_blocks();
    lp.num_services = inst.num_services();

    let mut demand_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); inst.num_services()];
    let mut unit_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); inst.num_units()];
    for (j, &(b, k)) in keys.iter().enumerate() {
        if inst.services[k].is_latency() {
            demand_rows[k].push((j, inst.rate(b, k)));
        }
        for &i in &inst.blocks[b].coverage {
            unit_rows[i].push((j, 1.0));
        }
    }
    for s in inst.latency_services() {
        let q = s.demand().unwrap_or(0.0);
        lp.add_row(std::mem::take(&mut demand_rows[s.id]), Sense::Ge, q);
    }
    for row in unit_rows {
        lp.add_row(row, Sense::Le, 1.0);
    }
    lp.column_keys = keys;
    lp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Column values (meaningful only when optimal).
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Row-scaled constraint violation of `x`.
    pub max_violation: f64,
    pub column_keys: Vec<(usize, usize)>,
    pub num_blocks: usize,
    pub num_services: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Solves `lp` with the two-phase simplex. `tol` bounds the accepted
/// constraint violation; values within `tol` of a bound are snapped to it.
pub fn solve_lp(lp: &LinearProgram, tol: f64, max_iters: usize) -> LpSolution {
    let mut sx = Simplex::new(lp);
    let mut status = sx.solve(max_iters);
    let mut x: Vec<f64> = sx.values().to_vec();
    for (j, v) in x.iter_mut().enumerate() {
        if (*v - lp.lower[j]).abs() <= tol {
            *v = lp.lower[j];
        } else if (*v - lp.upper[j]).abs() <= tol {
            *v = lp.upper[j];
        }
    }
    let max_violation = lp.max_violation(&x);
    if status == LpStatus::Optimal && max_violation > tol {
        // Never hand out an "optimal" point that breaks the constraints.
        status = LpStatus::IterationLimit;
    }
    LpSolution {
        status,
        objective: lp.objective_value(&x),
        x,
        iterations: sx.iterations(),
        max_violation,
        column_keys: lp.column_keys.clone(),
        num_blocks: lp.num_blocks,
        num_services: lp.num_services,
    }
}

/// `u_{b,k} = x_{b,k}`, zero for omitted columns.
pub fn lp_utility(sol: &LpSolution) -> Result<UtilityMatrix> {
    if !sol.is_optimal() {
        return Err(Error::NotOptimal(sol.status));
    }
    let mut u = UtilityMatrix::zeros(sol.num_blocks, sol.num_services, Provenance::Lp);
    for (&(b, k), &v) in sol.column_keys.iter().zip(&sol.x) {
        u.set(b, k, v.clamp(0.0, 1.0));
    }
    Ok(u)
}
