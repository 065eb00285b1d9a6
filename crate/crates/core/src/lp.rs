//! Time-slotted linear program for weighted flow-time, with a CPLEX LP
//! writer and reader.
//!
//! Slot `s` covers `[sL, (s+1)L)`. Variable `x_i_j_s` is the fraction of slot
//! `s` machine `i` spends on job `j` and exists for `sL >= r_j`. The objective
//! charges `w_j L (ℓ_ij (sL - r_j)/p_j + 1)` per unit of `x`; every job must be
//! covered (`Σ ℓ_ij L x / p_j >= 1`) and every machine slot has capacity 1.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::math::ceil;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn as_str(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    /// `(variable index, coefficient)` in the order written.
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A minimization LP over non-negative variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOptions {
    pub slot_length: f64,
    /// Time horizon; defaults to [`default_horizon`].
    pub horizon: Option<f64>,
    pub max_variables: usize,
}

impl SlotOptions {
    pub fn new(slot_length: f64) -> Self {
        SlotOptions { slot_length, horizon: None, max_variables: 2_000_000 }
    }
}

/// `Σ p_j / min positive ℓ + max r_j`, long enough for any sensible schedule.
pub fn default_horizon(instance: &Instance) -> f64 {
    let total: f64 = instance.jobs.iter().map(|j| j.size).sum();
    let min_rate =
        instance.jobs.iter().flat_map(|j| j.rates.iter().copied()).filter(|&r| r > 0.0).fold(f64::INFINITY, f64::min);
    let last = instance.jobs.iter().map(|j| j.release).fold(0.0, f64::max);
    if instance.jobs.is_empty() {
        0.0
    } else {
        total / min_rate + last
    }
}

/// First slot index `s` with `s * L >= r`.
pub(crate) fn first_slot(release: f64, slot_length: f64) -> usize {
    let mut s = ceil(release / slot_length) as usize;
    while s > 0 && (s - 1) as f64 * slot_length >= release {
        s -= 1;
    }
    while (s as f64) * slot_length < release {
        s += 1;
    }
    s
}

fn slot_count(horizon: f64, slot_length: f64) -> usize {
    let t = ceil(horizon / slot_length);
    if t.is_finite() && t > 0.0 {
        t as usize
    } else {
        0
    }
}

impl LpModel {
    pub fn time_slotted(instance: &Instance, options: &SlotOptions) -> Result<Self> {
        instance.ensure_valid()?;
        let l = options.slot_length;
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::Config(format!("slot length {l} must be positive")));
        }
        let horizon = options.horizon.unwrap_or_else(|| default_horizon(instance));
        let slots = slot_count(horizon, l);
        let m = instance.machine_count;
        let vars: usize = instance.jobs.iter().map(|j| m * slots.saturating_sub(first_slot(j.release, l))).sum();
        if vars > options.max_variables {
            return Err(Error::LpTooLarge { vars, cap: options.max_variables });
        }

        let mut model = LpModel { variables: Vec::with_capacity(vars), constraints: Vec::new() };
        // by_slot[i][s] lists the variables of machine i in slot s.
        let mut by_slot: Vec<Vec<Vec<usize>>> = (0..m).map(|_| (0..slots).map(|_| Vec::new()).collect()).collect();
        let mut cover = Vec::with_capacity(instance.job_count());
        for (j, job) in instance.jobs.iter().enumerate() {
            let mut terms = Vec::new();
            for (i, row) in by_slot.iter_mut().enumerate() {
                let rate = job.rates[i];
                for (s, cell) in row.iter_mut().enumerate().skip(first_slot(job.release, l)) {
                    let t = s as f64 * l;
                    let idx = model.variables.len();
                    model.variables.push(Variable {
                        name: format!("x_{i}_{j}_{s}"),
                        objective: job.weight as f64 * l * (rate * (t - job.release) / job.size + 1.0),
                    });
                    cell.push(idx);
                    if rate > 0.0 {
                        terms.push((idx, rate * l / job.size));
                    }
                }
            }
            cover.push(Constraint { name: format!("cover_{j}"), terms, sense: Sense::Ge, rhs: 1.0 });
        }
        model.constraints.extend(cover);
        for (i, row) in by_slot.iter().enumerate() {
            for (s, cell) in row.iter().enumerate() {
                if cell.is_empty() {
                    continue;
                }
                model.constraints.push(Constraint {
                    name: format!("cap_{i}_{s}"),
                    terms: cell.iter().map(|&v| (v, 1.0)).collect(),
                    sense: Sense::Le,
                    rhs: 1.0,
                });
            }
        }
        Ok(model)
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// CPLEX LP text. Numbers use the shortest representation that parses back exactly.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::new();
        out.push_str("\\ time-slotted weighted flow-time relaxation\n");
        out.push_str("Minimize\n");
        let terms: Vec<(usize, f64)> = self.variables.iter().enumerate().map(|(i, v)| (i, v.objective)).collect();
        self.write_row(&mut out, "obj", &terms, "");
        out.push_str("Subject To\n");
        for c in &self.constraints {
            let tail = format!(" {} {}", c.sense.as_str(), c.rhs);
            self.write_row(&mut out, &c.name, &c.terms, &tail);
        }
        out.push_str("End\n");
        out
    }

    fn write_row(&self, out: &mut String, name: &str, terms: &[(usize, f64)], tail: &str) {
        const WIDTH: usize = 78;
        let mut line = format!(" {name}:");
        for (k, &(var, coef)) in terms.iter().enumerate() {
            let mut piece = String::new();
            if coef < 0.0 {
                let _ = write!(piece, " - {} {}", -coef, self.variables[var].name);
            } else if k == 0 {
                let _ = write!(piece, " {} {}", coef, self.variables[var].name);
            } else {
                let _ = write!(piece, " + {} {}", coef, self.variables[var].name);
            }
            if line.len() + piece.len() > WIDTH {
                out.push_str(&line);
                out.push('\n');
                line = String::from("  ");
                line.push_str(piece.trim_start());
            } else {
                line.push_str(&piece);
            }
        }
        if terms.is_empty() {
            line.push_str(" 0");
        }
        line.push_str(tail);
        out.push_str(&line);
        out.push('\n');
    }

    /// Reads the subset of CPLEX LP written by [`LpModel::to_lp_string`].
    pub fn parse(text: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Objective,
            Constraints,
            Bounds,
            End,
        }
        let mut section = Section::None;
        let mut objective: Vec<(usize, &str)> = Vec::new();
        let mut constraints: Vec<(usize, &str)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = raw.split('\\').next().unwrap_or("");
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let lower = trimmed.to_ascii_lowercase();
            let header = match lower.as_str() {
                "minimize" | "minimum" | "min" => Some(Section::Objective),
                "subject to" | "such that" | "st" | "s.t." => Some(Section::Constraints),
                "bounds" => Some(Section::Bounds),
                "end" => Some(Section::End),
                _ => None,
            };
            if let Some(h) = header {
                section = h;
                continue;
            }
            match section {
                Section::Objective => objective.extend(trimmed.split_whitespace().map(|t| (line_no, t))),
                Section::Constraints => constraints.extend(trimmed.split_whitespace().map(|t| (line_no, t))),
                Section::Bounds => {
                    // Every variable is non-negative; only the default bound is accepted.
                    let ok = trimmed.ends_with(">= 0");
                    if !ok {
                        return Err(Error::LpParse { line: line_no, msg: format!("unsupported bound {trimmed:?}") });
                    }
                }
                Section::None => return Err(Error::LpParse { line: line_no, msg: "content before Minimize".into() }),
                Section::End => return Err(Error::LpParse { line: line_no, msg: "content after End".into() }),
            }
        }
        if section != Section::End {
            return Err(Error::LpParse { line: text.lines().count(), msg: "missing End".into() });
        }

        let mut model = LpModel::default();
        let obj_tokens = objective;
        let mut pos = 0;
        let (_, obj_terms) = parse_row(&obj_tokens, &mut pos, &mut model, true)?;
        if pos != obj_tokens.len() {
            return Err(Error::LpParse { line: obj_tokens[pos].0, msg: "trailing objective tokens".into() });
        }
        for (var, coef) in obj_terms {
            model.variables[var].objective += coef;
        }
        let con_tokens = constraints;
        let mut pos = 0;
        while pos < con_tokens.len() {
            let (name, terms) = parse_row(&con_tokens, &mut pos, &mut model, false)?;
            let line = con_tokens.get(pos).map_or(0, |t| t.0);
            let sense = match con_tokens.get(pos).map(|t| t.1) {
                Some("<=") | Some("=<") | Some("<") => Sense::Le,
                Some(">=") | Some("=>") | Some(">") => Sense::Ge,
                Some("=") => Sense::Eq,
                _ => return Err(Error::LpParse { line, msg: format!("constraint {name} lacks a sense") }),
            };
            pos += 1;
            let rhs = con_tokens
                .get(pos)
                .and_then(|t| t.1.parse::<f64>().ok())
                .ok_or(Error::LpParse { line, msg: format!("constraint {name} lacks a right-hand side") })?;
            pos += 1;
            model.constraints.push(Constraint { name, terms, sense, rhs });
        }
        Ok(model)
    }
}

/// Parses `name: [±] coef var ...` up to a sense token (or the end for the objective).
fn parse_row(
    tokens: &[(usize, &str)],
    pos: &mut usize,
    model: &mut LpModel,
    objective: bool,
) -> Result<(String, Vec<(usize, f64)>)> {
    let (line, head) = tokens.get(*pos).ok_or(Error::LpParse { line: 0, msg: "empty row".into() })?;
    let name = head
        .strip_suffix(':')
        .ok_or(Error::LpParse { line: *line, msg: format!("expected row label, found {head:?}") })?
        .to_string();
    *pos += 1;
    let mut terms = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    while let Some((line, tok)) = tokens.get(*pos) {
        let t = *tok;
        if matches!(t, "<=" | ">=" | "=" | "=<" | "=>" | "<" | ">") {
            break;
        }
        if objective && t.ends_with(':') {
            break;
        }
        *pos += 1;
        match t {
            "+" => sign = 1.0,
            "-" => sign = -1.0,
            _ => {
                if let Ok(v) = t.parse::<f64>() {
                    if coef.is_some() {
                        return Err(Error::LpParse { line: *line, msg: format!("two coefficients in a row at {t:?}") });
                    }
                    coef = Some(v);
                } else {
                    let var = match model.variable_index(t) {
                        Some(v) => v,
                        None => {
                            model.variables.push(Variable { name: t.to_string(), objective: 0.0 });
                            model.variables.len() - 1
                        }
                    };
                    terms.push((var, sign * coef.take().unwrap_or(1.0)));
                    sign = 1.0;
                }
            }
        }
    }
    if let Some(c) = coef {
        if c != 0.0 || !terms.is_empty() {
            let line = tokens.get(*pos - 1).map_or(0, |t| t.0);
            return Err(Error::LpParse { line, msg: format!("dangling coefficient {c}") });
        }
    }
    Ok((name, terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Job;
    use alloc::vec;

    fn one_job(release: f64, rates: Vec<f64>) -> Instance {
        let m = rates.len();
        Instance::flow(m, vec![Job { id: "a".into(), release, size: 2.0, weight: 3, rates }])
    }

    #[test]
    fn single_job_two_slots() {
        let inst = one_job(0.0, vec![1.0]);
        let opts = SlotOptions { horizon: Some(2.0), ..SlotOptions::new(1.0) };
        let model = LpModel::time_slotted(&inst, &opts).unwrap();
        assert_eq!(model.variables.len(), 2);
        let cover = model.constraints.iter().filter(|c| c.name.starts_with("cover")).count();
        let cap = model.constraints.iter().filter(|c| c.name.starts_with("cap")).count();
        assert_eq!((cover, cap), (1, 2));
        // w (ℓ (t - r)/p + 1): slot 0 -> 3, slot 1 -> 3 * (1/2 + 1)
        assert_eq!(model.variables[0].objective, 3.0);
        assert_eq!(model.variables[1].objective, 4.5);
        assert_eq!(model.constraints[0].terms, vec![(0, 0.5), (1, 0.5)]);
    }

    #[test]
    fn halving_slots_doubles_variables() {
        let inst = one_job(0.0, vec![1.0, 0.5]);
        let a = LpModel::time_slotted(&inst, &SlotOptions { horizon: Some(3.0), ..SlotOptions::new(1.0) }).unwrap();
        let b = LpModel::time_slotted(&inst, &SlotOptions { horizon: Some(3.0), ..SlotOptions::new(0.5) }).unwrap();
        assert_eq!(b.variables.len(), 2 * a.variables.len());
    }

    #[test]
    fn release_skips_early_slots() {
        let inst = one_job(1.5, vec![1.0]);
        let model = LpModel::time_slotted(&inst, &SlotOptions { horizon: Some(4.0), ..SlotOptions::new(1.0) }).unwrap();
        let names: Vec<_> = model.variables.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, vec!["x_0_0_2", "x_0_0_3"]);
        assert_eq!(first_slot(1.0, 0.5), 2);
        assert_eq!(first_slot(0.0, 0.5), 0);
    }

    #[test]
    fn zero_rate_stays_out_of_cover() {
        let inst = one_job(0.0, vec![0.0, 1.0]);
        let model = LpModel::time_slotted(&inst, &SlotOptions { horizon: Some(1.0), ..SlotOptions::new(1.0) }).unwrap();
        assert_eq!(model.variables.len(), 2);
        assert_eq!(model.constraints[0].terms.len(), 1);
    }

    #[test]
    fn round_trip() {
        let jobs = (0..4)
            .map(|j| Job {
                id: format!("j{j}"),
                release: j as f64 * 0.3,
                size: 1.0 + j as f64 / 7.0,
                weight: j as u64 + 1,
                rates: vec![1.0 / (j as f64 + 1.0), 0.7],
            })
            .collect();
        let inst = Instance::flow(2, jobs);
        let model = LpModel::time_slotted(&inst, &SlotOptions::new(0.5)).unwrap();
        let text = model.to_lp_string();
        assert!(text.lines().all(|l| l.len() <= 100));
        assert_eq!(LpModel::parse(&text).unwrap(), model);
    }

    #[test]
    fn cap_and_parse_errors() {
        let inst = one_job(0.0, vec![1.0]);
        let opts = SlotOptions { horizon: Some(100.0), max_variables: 10, ..SlotOptions::new(1.0) };
        assert!(matches!(LpModel::time_slotted(&inst, &opts), Err(Error::LpTooLarge { vars: 100, cap: 10 })));
        assert!(matches!(LpModel::parse("Minimize\n obj: 1 x\nSubject To\n c: x\nEnd\n"), Err(Error::LpParse { .. })));
        assert!(matches!(LpModel::parse("Minimize\n obj: 1 x\n"), Err(Error::LpParse { .. })));
    }
}
