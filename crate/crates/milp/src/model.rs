use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::MilpError;

/// Column index into a [`MilpModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// Row index into a [`MilpModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violate this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let act = self.activity(values);
        match self.sense {
            Sense::Le => (act - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - act).max(0.0),
            Sense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// Special ordered set of type 1 over binary columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sos1 {
    pub name: String,
    pub members: Vec<VarId>,
}

/// Row-size statistics in the column layout used by the model-dimension tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelStats {
    /// Number of constraints.
    pub m: usize,
    /// Number of binary variables.
    pub n01: usize,
    /// Number of continuous variables.
    pub nc: usize,
    /// Number of nonzero constraint coefficients.
    pub nz: usize,
}

/// A feasibility violation found by [`MilpModel::check_feasibility`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Bound { var: String, value: f64, lb: f64, ub: f64 },
    Integrality { var: String, value: f64 },
    Row { row: String, amount: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Bound { var, value, lb, ub } => {
                write!(f, "variable {var} = {value} outside [{lb}, {ub}]")
            }
            Violation::Integrality { var, value } => {
                write!(f, "binary variable {var} = {value} is fractional")
            }
            Violation::Row { row, amount } => write!(f, "row {row} violated by {amount:.3e}"),
        }
    }
}

/// A minimization model over binary and continuous columns with linear rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    pub name: String,
    vars: Vec<Variable>,
    rows: Vec<Constraint>,
    objective: Vec<f64>,
    sos1: Vec<Sos1>,
    #[serde(skip)]
    index: HashMap<String, VarId>,
    /// A known feasible point offered to branch and bound as the first incumbent.
    hint: Option<Vec<f64>>,
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lb: f64,
        ub: f64,
    ) -> Result<VarId, MilpError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(MilpError::DuplicateName(name));
        }
        if lb > ub || lb.is_nan() || ub.is_nan() {
            return Err(MilpError::BadBounds { var: name, lb, ub });
        }
        if kind == VarKind::Binary && (lb < 0.0 || ub > 1.0) {
            return Err(MilpError::BadBounds { var: name, lb, ub });
        }
        let id = VarId(self.vars.len());
        self.index.insert(name.clone(), id);
        self.vars.push(Variable { name, kind, lb, ub });
        self.objective.push(0.0);
        Ok(id)
    }

    pub fn binary(&mut self, name: impl Into<String>) -> Result<VarId, MilpError> {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn continuous(
        &mut self,
        name: impl Into<String>,
        lb: f64,
        ub: f64,
    ) -> Result<VarId, MilpError> {
        self.add_var(name, VarKind::Continuous, lb, ub)
    }

    /// Adds a row; repeated columns are merged and exact zeros dropped.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coeffs: impl IntoIterator<Item = (VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> Result<RowId, MilpError> {
        let name = name.into();
        let mut merged: Vec<(VarId, f64)> = coeffs.into_iter().collect();
        for &(v, a) in &merged {
            if v.0 >= self.vars.len() {
                return Err(MilpError::UnknownColumn { row: name, col: v.0 });
            }
            if !a.is_finite() {
                return Err(MilpError::NonFinite(format!("coefficient in row {name}")));
            }
        }
        if !rhs.is_finite() {
            return Err(MilpError::NonFinite(format!("rhs of row {name}")));
        }
        merged.sort_by_key(|&(v, _)| v);
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(merged.len());
        for (v, a) in merged {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += a,
                _ => out.push((v, a)),
            }
        }
        out.retain(|&(_, a)| a != 0.0);
        let id = RowId(self.rows.len());
        self.rows.push(Constraint { name, coeffs: out, sense, rhs });
        Ok(id)
    }

    pub fn set_obj(&mut self, var: VarId, coef: f64) {
        self.objective[var.0] = coef;
    }

    pub fn add_sos1(&mut self, name: impl Into<String>, members: Vec<VarId>) -> Result<(), MilpError> {
        let name = name.into();
        for &m in &members {
            if self.vars[m.0].kind != VarKind::Binary {
                return Err(MilpError::SosNotBinary { set: name, var: self.vars[m.0].name.clone() });
            }
        }
        self.sos1.push(Sos1 { name, members });
        Ok(())
    }

    pub fn set_hint(&mut self, values: Vec<f64>) {
        self.hint = Some(values);
    }

    pub fn hint(&self) -> Option<&[f64]> {
        self.hint.as_deref()
    }

    /// Pins a column to a single value.
    pub fn fix(&mut self, var: VarId, value: f64) {
        self.vars[var.0].lb = value;
        self.vars[var.0].ub = value;
    }

    pub fn set_bounds(&mut self, var: VarId, lb: f64, ub: f64) {
        self.vars[var.0].lb = lb;
        self.vars[var.0].ub = ub;
    }

    /// Removes every row whose name satisfies `pred`, preserving order.
    pub fn remove_rows(&mut self, pred: impl Fn(&str) -> bool) -> usize {
        let before = self.rows.len();
        self.rows.retain(|r| !pred(&r.name));
        before - self.rows.len()
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn rows(&self) -> &[Constraint] {
        &self.rows
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn sos1_sets(&self) -> &[Sos1] {
        &self.sos1
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn stats(&self) -> ModelStats {
        let n01 = self.vars.iter().filter(|v| v.kind == VarKind::Binary).count();
        ModelStats {
            m: self.rows.len(),
            n01,
            nc: self.vars.len() - n01,
            nz: self.rows.iter().map(|r| r.coeffs.len()).sum(),
        }
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, x)| c * x).sum()
    }

    /// Independent re-check of bounds, integrality, rows and SOS1 sets.
    ///
    /// Row tolerances scale with the magnitude of the right-hand side.
    pub fn check_feasibility(&self, values: &[f64], tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        for (v, &x) in self.vars.iter().zip(values) {
            if x < v.lb - tol || x > v.ub + tol || !x.is_finite() {
                out.push(Violation::Bound { var: v.name.clone(), value: x, lb: v.lb, ub: v.ub });
            }
            if v.kind == VarKind::Binary && (x - x.round()).abs() > tol {
                out.push(Violation::Integrality { var: v.name.clone(), value: x });
            }
        }
        for r in &self.rows {
            let amount = r.violation(values);
            if amount > tol * (1.0 + r.rhs.abs()) {
                out.push(Violation::Row { row: r.name.clone(), amount });
            }
        }
        for s in &self.sos1 {
            let nonzero = s.members.iter().filter(|m| values[m.0].abs() > tol).count();
            if nonzero > 1 {
                out.push(Violation::Row { row: s.name.clone(), amount: (nonzero - 1) as f64 });
            }
        }
        out
    }

    /// Rebuilds the name index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.clone(), VarId(i)))
            .collect();
    }
}
