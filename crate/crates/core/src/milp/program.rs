use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MilpError;

pub type VarId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrality {
    Continuous,
    Binary,
    Integer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integrality: Integrality,
}

impl VariableSpec {
    pub fn continuous(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        VariableSpec {
            name: name.into(),
            lower,
            upper,
            integrality: Integrality::Continuous,
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        VariableSpec {
            name: name.into(),
            lower: 0.0,
            upper: 1.0,
            integrality: Integrality::Binary,
        }
    }

    pub fn integer(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        VariableSpec {
            name: name.into(),
            lower,
            upper,
            integrality: Integrality::Integer,
        }
    }

    pub fn is_integral(&self) -> bool {
        self.integrality != Integrality::Continuous
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintSense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub name: String,
    /// Sorted by variable, no duplicates, no zeros.
    pub coefficients: Vec<(VarId, f64)>,
    pub sense: ConstraintSense,
    pub rhs: f64,
}

impl LinearConstraint {
    /// Merges repeated variables and drops zero coefficients.
    pub fn new(name: impl Into<String>, coefficients: impl IntoIterator<Item = (VarId, f64)>, sense: ConstraintSense, rhs: f64) -> Self {
        LinearConstraint {
            name: name.into(),
            coefficients: normalize_terms(coefficients),
            sense,
            rhs,
        }
    }

    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coefficients.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// Amount by which `values` violates the row, zero when satisfied.
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            ConstraintSense::Le => (lhs - self.rhs).max(0.0),
            ConstraintSense::Ge => (self.rhs - lhs).max(0.0),
            ConstraintSense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

fn normalize_terms(terms: impl IntoIterator<Item = (VarId, f64)>) -> Vec<(VarId, f64)> {
    let mut terms: Vec<(VarId, f64)> = terms.into_iter().collect();
    terms.sort_by_key(|&(v, _)| v);
    let mut out: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
    for (v, c) in terms {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += c,
            _ => out.push((v, c)),
        }
    }
    out.retain(|&(_, c)| c != 0.0);
    out
}

/// Linear objective (minimized) over bounded, possibly integral variables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProgramDocument")]
pub struct MixedIntegerProgram {
    variables: Vec<VariableSpec>,
    constraints: Vec<LinearConstraint>,
    objective: Vec<(VarId, f64)>,
    #[serde(skip)]
    index: HashMap<String, VarId>,
}

#[derive(Deserialize)]
struct ProgramDocument {
    variables: Vec<VariableSpec>,
    constraints: Vec<LinearConstraint>,
    objective: Vec<(VarId, f64)>,
}

impl TryFrom<ProgramDocument> for MixedIntegerProgram {
    type Error = MilpError;

    fn try_from(doc: ProgramDocument) -> Result<Self, Self::Error> {
        let mut p = MixedIntegerProgram::new();
        for v in doc.variables {
            p.add_variable(v)?;
        }
        for c in doc.constraints {
            p.add_constraint(c)?;
        }
        p.set_objective(doc.objective)?;
        Ok(p)
    }
}

impl MixedIntegerProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, spec: VariableSpec) -> Result<VarId, MilpError> {
        if spec.lower.is_nan() || spec.upper.is_nan() || spec.lower > spec.upper {
            return Err(MilpError::InvalidProgram(format!(
                "variable `{}` has bounds [{}, {}]",
                spec.name, spec.lower, spec.upper
            )));
        }
        if spec.integrality == Integrality::Binary && (spec.lower < 0.0 || spec.upper > 1.0) {
            return Err(MilpError::InvalidProgram(format!(
                "binary variable `{}` has bounds outside [0, 1]",
                spec.name
            )));
        }
        if self.index.contains_key(&spec.name) {
            return Err(MilpError::InvalidProgram(format!("duplicate variable `{}`", spec.name)));
        }
        let id = self.variables.len();
        self.index.insert(spec.name.clone(), id);
        self.variables.push(spec);
        Ok(id)
    }

    pub fn add_constraint(&mut self, constraint: LinearConstraint) -> Result<(), MilpError> {
        if constraint.coefficients.is_empty() {
            return Err(MilpError::InvalidProgram(format!(
                "constraint `{}` has no nonzero coefficient",
                constraint.name
            )));
        }
        self.check_terms(&constraint.coefficients, &constraint.name)?;
        if !constraint.rhs.is_finite() {
            return Err(MilpError::InvalidProgram(format!("constraint `{}` has rhs {}", constraint.name, constraint.rhs)));
        }
        self.constraints.push(constraint);
        Ok(())
    }

    pub fn set_objective(&mut self, terms: impl IntoIterator<Item = (VarId, f64)>) -> Result<(), MilpError> {
        let terms = normalize_terms(terms);
        self.check_terms(&terms, "objective")?;
        self.objective = terms;
        Ok(())
    }

    fn check_terms(&self, terms: &[(VarId, f64)], owner: &str) -> Result<(), MilpError> {
        for &(v, c) in terms {
            if v >= self.variables.len() {
                return Err(MilpError::InvalidProgram(format!("`{owner}` references undeclared variable {v}")));
            }
            if !c.is_finite() {
                return Err(MilpError::InvalidProgram(format!("`{owner}` has coefficient {c}")));
            }
        }
        Ok(())
    }

    /// Re-checks every invariant by rebuilding the program.
    pub fn validate(&self) -> Result<(), MilpError> {
        MixedIntegerProgram::try_from(ProgramDocument {
            variables: self.variables.clone(),
            constraints: self.constraints.clone(),
            objective: self.objective.clone(),
        })
        .map(|_| ())
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[(VarId, f64)] {
        &self.objective
    }

    pub fn variable_id(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// Largest violation over all rows and variable bounds.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(values));
        let bounds = self
            .variables
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }

    /// CPLEX LP text format, readable by most external MILP solvers.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        out.push_str("\\ generated by hetpart\nMinimize\n obj:");
        write_terms(&mut out, &self.objective, &self.variables);
        out.push_str("\nSubject To\n");
        for c in &self.constraints {
            let _ = write!(out, " {}:", c.name);
            write_terms(&mut out, &c.coefficients, &self.variables);
            let op = match c.sense {
                ConstraintSense::Le => "<=",
                ConstraintSense::Eq => "=",
                ConstraintSense::Ge => ">=",
            };
            let _ = writeln!(out, " {op} {}", fmt_num(c.rhs));
        }
        out.push_str("Bounds\n");
        for v in &self.variables {
            if v.integrality == Integrality::Binary {
                continue;
            }
            let lo = if v.lower.is_finite() { fmt_num(v.lower) } else { "-inf".into() };
            let hi = if v.upper.is_finite() { fmt_num(v.upper) } else { "+inf".into() };
            let _ = writeln!(out, " {lo} <= {} <= {hi}", v.name);
        }
        let section = |out: &mut String, title: &str, kind: Integrality| {
            let names: Vec<&str> = self
                .variables
                .iter()
                .filter(|v| v.integrality == kind)
                .map(|v| v.name.as_str())
                .collect();
            if !names.is_empty() {
                let _ = writeln!(out, "{title}");
                for chunk in names.chunks(8) {
                    let _ = writeln!(out, " {}", chunk.join(" "));
                }
            }
        };
        section(&mut out, "Binaries", Integrality::Binary);
        section(&mut out, "Generals", Integrality::Integer);
        out.push_str("End\n");
        out
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}

fn write_terms(out: &mut String, terms: &[(VarId, f64)], vars: &[VariableSpec]) {
    if terms.is_empty() {
        out.push_str(" 0");
        return;
    }
    for (k, &(v, c)) in terms.iter().enumerate() {
        let sign = if c < 0.0 { " -" } else if k == 0 { "" } else { " +" };
        let mag = c.abs();
        if mag == 1.0 {
            let _ = write!(out, "{sign} {}", vars[v].name);
        } else {
            let _ = write!(out, "{sign} {} {}", fmt_num(mag), vars[v].name);
        }
    }
}
