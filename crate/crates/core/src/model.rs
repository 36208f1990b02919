//! Joint implementation selection and pipelined scheduling as one
//! integer linear model, plus the machinery around it: a CPLEX-LP
//! exporter/parser for external solvers and an independent solution
//! checker used by every scheduler in the crate.
//!
//! Decision variables, over the cone of classes reachable from the roots:
//!
//! * `bc<C>`  — class C is realized (binary)
//! * `bi<I>`  — implementation node I is selected (binary)
//! * `fc<C>`  — cycle at which class C's value is registered/stable
//! * `si<I>`  — start cycle of implementation I
//! * `uc<C>`  — topological rank of class C (orders the selected
//!   dependency graph; forbids combinational selection cycles, which the
//!   time variables alone would accept at equal cycles)
//! * `mk`     — makespan, the latest root finish
//!
//! minimize `mk + α·Σ bi` with α small enough that implementation count
//! only breaks latency ties. Constraint groups: root coverage, at least
//! one selected implementation per realized class, realization of the
//! arguments of selected implementations, dependency timing, class
//! finish, source classes fixed at cycle 0, chaining rows from the path
//! enumeration, rank ordering, and makespan.

use crate::egraph::ClassId;
use crate::timing::{ChainingConstraintSet, ImplCatalog, NodeId, PathSrc};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

/// One scheduled selection: which implementation nodes realize which
/// classes, and when everything runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub selected: BTreeSet<NodeId>,
    /// start cycle per selected implementation
    pub start: BTreeMap<NodeId, u32>,
    /// finish cycle per realized class (sources at 0)
    pub class_finish: BTreeMap<ClassId, u32>,
    pub makespan: u32,
}

impl Solution {
    pub fn finish(&self, node: NodeId, cat: &ImplCatalog) -> Option<u32> {
        self.start
            .get(&node)
            .map(|&s| s + cat.node(node).latency())
    }

    pub fn is_realized(&self, class: ClassId) -> bool {
        self.class_finish.contains_key(&class)
    }

    pub fn selected_in(&self, cat: &ImplCatalog, class: ClassId) -> Vec<NodeId> {
        cat.candidates(class)
            .iter()
            .copied()
            .filter(|n| self.selected.contains(n))
            .collect()
    }
}

// --- generic linear program --------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

impl Rel {
    fn symbol(self) -> &'static str {
        match self {
            Rel::Le => "<=",
            Rel::Ge => ">=",
            Rel::Eq => "=",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpConstraint {
    pub name: String,
    pub terms: Vec<(f64, String)>,
    pub rel: Rel,
    pub rhs: f64,
}

/// A minimization MILP over named variables, all bounded below by 0.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<(f64, String)>,
    pub constraints: Vec<LpConstraint>,
    pub binaries: BTreeSet<String>,
    pub generals: BTreeSet<String>,
}

impl LinearProgram {
    pub fn objective_value(&self, asg: &BTreeMap<String, f64>) -> f64 {
        eval_terms(&self.objective, asg)
    }

    /// Constraint rows violated by `asg` beyond `tol`, as messages.
    pub fn violations(&self, asg: &BTreeMap<String, f64>, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.constraints {
            let lhs = eval_terms(&c.terms, asg);
            let ok = match c.rel {
                Rel::Le => lhs <= c.rhs + tol,
                Rel::Ge => lhs >= c.rhs - tol,
                Rel::Eq => (lhs - c.rhs).abs() <= tol,
            };
            if !ok {
                out.push(format!(
                    "{}: lhs {} {} rhs {}",
                    c.name,
                    lhs,
                    c.rel.symbol(),
                    c.rhs
                ));
            }
        }
        out
    }
}

fn eval_terms(terms: &[(f64, String)], asg: &BTreeMap<String, f64>) -> f64 {
    terms
        .iter()
        .map(|(coef, var)| coef * asg.get(var).copied().unwrap_or(0.0))
        .sum()
}

// --- model construction ------------------------------------------------------

#[derive(Debug)]
pub struct JointModel {
    pub lp: LinearProgram,
    /// classes in the root cone, sources included
    pub cone: BTreeSet<ClassId>,
    /// catalog nodes whose class is in the cone
    pub impls: Vec<NodeId>,
    pub alpha: f64,
    pub big_m: f64,
}

fn vn_bc(c: ClassId) -> String {
    format!("bc{c}")
}
fn vn_bi(n: NodeId) -> String {
    format!("bi{n}")
}
fn vn_fc(c: ClassId) -> String {
    format!("fc{c}")
}
fn vn_si(n: NodeId) -> String {
    format!("si{n}")
}
fn vn_uc(c: ClassId) -> String {
    format!("uc{c}")
}

/// Classes reachable from the roots through any candidate implementation.
pub fn root_cone(cat: &ImplCatalog) -> BTreeSet<ClassId> {
    let mut cone: BTreeSet<ClassId> = BTreeSet::new();
    let mut work: Vec<ClassId> = cat.roots.clone();
    while let Some(c) = work.pop() {
        if !cone.insert(c) {
            continue;
        }
        for &n in cat.candidates(c) {
            for &a in &cat.node(n).args {
                if !cone.contains(&a) {
                    work.push(a);
                }
            }
        }
    }
    cone
}

/// Build the joint model over the root cone of `cat`, with chaining rows
/// taken from `paths` (rows touching nodes outside the cone are dropped).
pub fn build_model(cat: &ImplCatalog, paths: &ChainingConstraintSet) -> JointModel {
    let cone = root_cone(cat);
    let impls: Vec<NodeId> = cat
        .nodes
        .iter()
        .filter(|n| cone.contains(&n.class))
        .map(|n| n.id)
        .collect();
    let in_cone_node: BTreeSet<NodeId> = impls.iter().copied().collect();

    let alpha = 1.0 / (2.0 * (impls.len() as f64 + 1.0));
    let total_latency: u64 = impls.iter().map(|&n| cat.node(n).latency() as u64).sum();
    let total_cuts: u64 = paths.rows.iter().map(|r| r.cuts as u64).sum();
    let big_m = (total_latency + total_cuts + 1) as f64;
    let rank_m = (cone.len() + 1) as f64;

    let mut lp = LinearProgram::default();
    lp.objective.push((1.0, "mk".into()));
    lp.generals.insert("mk".into());
    for &n in &impls {
        lp.objective.push((alpha, vn_bi(n)));
        lp.binaries.insert(vn_bi(n));
        lp.generals.insert(vn_si(n));
    }
    for &c in &cone {
        lp.binaries.insert(vn_bc(c));
        lp.generals.insert(vn_fc(c));
        lp.generals.insert(vn_uc(c));
    }

    let mut row = |name: String, terms: Vec<(f64, String)>, rel: Rel, rhs: f64| {
        lp.constraints.push(LpConstraint { name, terms, rel, rhs });
    };

    // roots are realized
    for (i, &r) in cat.roots.iter().enumerate() {
        row(format!("root{i}"), vec![(1.0, vn_bc(r))], Rel::Eq, 1.0);
    }

    // sources: available at cycle 0, rank 0, always realized
    for &c in &cone {
        if cat.is_source_class(c) {
            row(format!("src_f{c}"), vec![(1.0, vn_fc(c))], Rel::Eq, 0.0);
            row(format!("src_u{c}"), vec![(1.0, vn_uc(c))], Rel::Eq, 0.0);
            row(format!("src_b{c}"), vec![(1.0, vn_bc(c))], Rel::Eq, 1.0);
        }
    }

    // at least one selected implementation per realized non-source class
    for &c in &cone {
        if cat.is_source_class(c) {
            continue;
        }
        let mut terms: Vec<(f64, String)> = cat
            .candidates(c)
            .iter()
            .map(|&n| (1.0, vn_bi(n)))
            .collect();
        terms.push((-1.0, vn_bc(c)));
        row(format!("cover{c}"), terms, Rel::Ge, 0.0);
    }

    for &n in &impls {
        let node = cat.node(n);
        // a selected implementation realizes its class and its arguments
        row(
            format!("host{n}"),
            vec![(1.0, vn_bi(n)), (-1.0, vn_bc(node.class))],
            Rel::Le,
            0.0,
        );
        let args: BTreeSet<ClassId> = node.args.iter().copied().collect();
        for &a in &args {
            row(
                format!("need{n}_{a}"),
                vec![(1.0, vn_bc(a)), (-1.0, vn_bi(n))],
                Rel::Ge,
                0.0,
            );
            // dependency timing: si ≥ fc(a) − M(1 − bi)
            row(
                format!("dep{n}_{a}"),
                vec![
                    (1.0, vn_si(n)),
                    (-1.0, vn_fc(a)),
                    (-big_m, vn_bi(n)),
                ],
                Rel::Ge,
                -big_m,
            );
            // rank ordering: uc(class) ≥ uc(a) + 1 − Mu(1 − bi)
            row(
                format!("rank{n}_{a}"),
                vec![
                    (1.0, vn_uc(node.class)),
                    (-1.0, vn_uc(a)),
                    (-rank_m, vn_bi(n)),
                ],
                Rel::Ge,
                1.0 - rank_m,
            );
        }
        // class finish covers every selected implementation:
        // fc ≥ si + L − M(1 − bi)
        row(
            format!("fin{n}"),
            vec![
                (1.0, vn_fc(node.class)),
                (-1.0, vn_si(n)),
                (-big_m, vn_bi(n)),
            ],
            Rel::Ge,
            node.latency() as f64 - big_m,
        );
    }

    // chaining rows: s_dst ≥ f_src + q unless some participant is unselected
    let mut chain_idx = 0usize;
    for r in &paths.rows {
        if !in_cone_node.contains(&r.dst) {
            continue;
        }
        let mut participants: Vec<NodeId> = Vec::new();
        match r.src {
            PathSrc::Node(n) => {
                if !in_cone_node.contains(&n) {
                    continue;
                }
                participants.push(n);
            }
            PathSrc::Input(c) | PathSrc::Const(c) => {
                if !cone.contains(&c) {
                    continue;
                }
            }
        }
        let mut skip = false;
        for &(h, _) in r.intermediates() {
            if !in_cone_node.contains(&h) {
                skip = true;
                break;
            }
            participants.push(h);
        }
        if skip {
            continue;
        }
        participants.push(r.dst);
        participants.sort_unstable();
        participants.dedup();

        // si(dst) − f(src) + M·Σ bi(participants) ≥ q − M·|participants|
        let mut terms: Vec<(f64, String)> = vec![(1.0, vn_si(r.dst))];
        let mut rhs = r.cuts as f64;
        match r.src {
            PathSrc::Node(n) => {
                // f(src) = si(src) + L(src)
                terms.push((-1.0, vn_si(n)));
                rhs += cat.node(n).latency() as f64;
            }
            PathSrc::Input(_) | PathSrc::Const(_) => {
                // pseudo-sources finish at cycle 0
            }
        }
        for &p in &participants {
            terms.push((-big_m, vn_bi(p)));
            rhs -= big_m;
        }
        row(format!("chain{chain_idx}"), terms, Rel::Ge, rhs);
        chain_idx += 1;
    }

    // makespan dominates every root finish
    for (i, &r) in cat.roots.iter().enumerate() {
        row(
            format!("mk{i}"),
            vec![(1.0, "mk".into()), (-1.0, vn_fc(r))],
            Rel::Ge,
            0.0,
        );
    }

    JointModel { lp, cone, impls, alpha, big_m }
}

/// Expand a solution into a full variable assignment for the model,
/// deriving ranks from the selected dependency order.
pub fn solution_assignment(
    model: &JointModel,
    cat: &ImplCatalog,
    sol: &Solution,
) -> BTreeMap<String, f64> {
    let mut asg: BTreeMap<String, f64> = BTreeMap::new();
    asg.insert("mk".into(), sol.makespan as f64);
    for &c in &model.cone {
        let realized = cat.is_source_class(c) || sol.is_realized(c);
        asg.insert(vn_bc(c), if realized { 1.0 } else { 0.0 });
        let f = if cat.is_source_class(c) {
            0
        } else {
            sol.class_finish.get(&c).copied().unwrap_or(0)
        };
        asg.insert(vn_fc(c), f as f64);
    }
    for &n in &model.impls {
        let sel = sol.selected.contains(&n);
        asg.insert(vn_bi(n), if sel { 1.0 } else { 0.0 });
        asg.insert(vn_si(n), sol.start.get(&n).copied().unwrap_or(0) as f64);
    }
    // ranks: longest selected dependency chain below each realized class
    let ranks = selection_ranks(cat, sol);
    for &c in &model.cone {
        asg.insert(vn_uc(c), ranks.get(&c).copied().unwrap_or(0) as f64);
    }
    asg
}

/// Topological rank of each realized class under the selected
/// implementations; None when the selected dependencies are cyclic.
fn try_selection_ranks(cat: &ImplCatalog, sol: &Solution) -> Option<BTreeMap<ClassId, u32>> {
    let mut ranks: BTreeMap<ClassId, u32> = BTreeMap::new();
    let mut visiting: BTreeSet<ClassId> = BTreeSet::new();

    fn visit(
        c: ClassId,
        cat: &ImplCatalog,
        sol: &Solution,
        ranks: &mut BTreeMap<ClassId, u32>,
        visiting: &mut BTreeSet<ClassId>,
    ) -> Option<u32> {
        if let Some(&r) = ranks.get(&c) {
            return Some(r);
        }
        if cat.is_source_class(c) {
            ranks.insert(c, 0);
            return Some(0);
        }
        if !visiting.insert(c) {
            return None; // cycle
        }
        let mut rank = 0u32;
        for n in sol.selected_in(cat, c) {
            for &a in &cat.node(n).args {
                let ra = visit(a, cat, sol, ranks, visiting)?;
                rank = rank.max(ra + 1);
            }
        }
        visiting.remove(&c);
        ranks.insert(c, rank);
        Some(rank)
    }

    let classes: Vec<ClassId> = sol.class_finish.keys().copied().collect();
    for c in classes {
        visit(c, cat, sol, &mut ranks, &mut visiting)?;
    }
    Some(ranks)
}

fn selection_ranks(cat: &ImplCatalog, sol: &Solution) -> BTreeMap<ClassId, u32> {
    try_selection_ranks(cat, sol).unwrap_or_default()
}

// --- solution checking -------------------------------------------------------

/// Independently validate `sol` against the catalog and chaining rows:
/// root coverage, per-class selection, argument realization, acyclicity,
/// dependency and chaining timing, source finishes, and the makespan.
/// Returns the list of violations (empty = valid).
pub fn check_solution(
    cat: &ImplCatalog,
    paths: &ChainingConstraintSet,
    sol: &Solution,
) -> Result<(), Vec<String>> {
    let mut errs: Vec<String> = Vec::new();

    for &r in &cat.roots {
        if !sol.is_realized(r) && !cat.is_source_class(r) {
            errs.push(format!("root class {r} is not realized"));
        }
    }

    for (&c, &f) in &sol.class_finish {
        if cat.is_source_class(c) {
            if f != 0 {
                errs.push(format!("source class {c} finishes at {f}, expected 0"));
            }
            continue;
        }
        let sel = sol.selected_in(cat, c);
        if sel.is_empty() {
            errs.push(format!("realized class {c} has no selected implementation"));
            continue;
        }
        for n in sel {
            let s = match sol.start.get(&n) {
                Some(&s) => s,
                None => {
                    errs.push(format!("selected implementation {n} has no start cycle"));
                    continue;
                }
            };
            let node = cat.node(n);
            let fin = s + node.latency();
            if f < fin {
                errs.push(format!(
                    "class {c} finish {f} precedes implementation {n} finish {fin}"
                ));
            }
            for &a in &node.args {
                let fa = if cat.is_source_class(a) {
                    0
                } else {
                    match sol.class_finish.get(&a) {
                        Some(&fa) => fa,
                        None => {
                            errs.push(format!(
                                "implementation {n} uses unrealized class {a}"
                            ));
                            continue;
                        }
                    }
                };
                if s < fa {
                    errs.push(format!(
                        "implementation {n} starts at {s} before argument class {a} finishes at {fa}"
                    ));
                }
            }
        }
    }

    for &n in &sol.selected {
        let c = cat.node(n).class;
        if !sol.is_realized(c) && !cat.is_source_class(c) {
            errs.push(format!(
                "implementation {n} selected but its class {c} is not realized"
            ));
        }
    }

    if try_selection_ranks(cat, sol).is_none() {
        errs.push("selected dependency graph is cyclic".into());
    }

    // chaining rows with every participant selected must hold
    for r in &paths.rows {
        if !sol.selected.contains(&r.dst) {
            continue;
        }
        let f_src = match r.src {
            PathSrc::Node(n) => {
                if !sol.selected.contains(&n) {
                    continue;
                }
                match sol.finish(n, cat) {
                    Some(f) => f,
                    None => continue,
                }
            }
            PathSrc::Input(c) | PathSrc::Const(c) => {
                if !cat.is_source_class(c) {
                    continue;
                }
                0
            }
        };
        if r.intermediates()
            .iter()
            .any(|&(h, _)| !sol.selected.contains(&h))
        {
            continue;
        }
        let s_dst = sol.start.get(&r.dst).copied().unwrap_or(0);
        if s_dst < f_src + r.cuts {
            errs.push(format!(
                "chaining violated: implementation {} starts at {} but needs {} registers after source finishing at {} (path delay {:.3} ns)",
                r.dst, s_dst, r.cuts, f_src, r.delay
            ));
        }
    }

    let max_root = cat
        .roots
        .iter()
        .map(|r| sol.class_finish.get(r).copied().unwrap_or(0))
        .max()
        .unwrap_or(0);
    if sol.makespan != max_root {
        errs.push(format!(
            "makespan {} does not equal the latest root finish {}",
            sol.makespan, max_root
        ));
    }

    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

// --- CPLEX LP text -----------------------------------------------------------

fn write_terms(out: &mut String, terms: &[(f64, String)]) {
    let mut first = true;
    for (coef, var) in terms {
        if first {
            if *coef < 0.0 {
                let _ = write!(out, "- ");
            }
            first = false;
        } else if *coef < 0.0 {
            let _ = write!(out, " - ");
        } else {
            let _ = write!(out, " + ");
        }
        let mag = coef.abs();
        if (mag - 1.0).abs() < 1e-12 {
            let _ = write!(out, "{var}");
        } else {
            let _ = write!(out, "{mag} {var}");
        }
    }
}

/// Render the program in CPLEX LP format. All variables use the default
/// lower bound of zero, so no Bounds section is emitted.
pub fn export_lp(lp: &LinearProgram) -> String {
    let mut out = String::new();
    out.push_str("Minimize\n obj: ");
    write_terms(&mut out, &lp.objective);
    out.push_str("\nSubject To\n");
    for c in &lp.constraints {
        let _ = write!(out, " {}: ", c.name);
        write_terms(&mut out, &c.terms);
        let _ = writeln!(out, " {} {}", c.rel.symbol(), c.rhs);
    }
    if !lp.binaries.is_empty() {
        out.push_str("Binaries\n");
        for b in &lp.binaries {
            let _ = writeln!(out, " {b}");
        }
    }
    if !lp.generals.is_empty() {
        out.push_str("Generals\n");
        for g in &lp.generals {
            let _ = writeln!(out, " {g}");
        }
    }
    out.push_str("End\n");
    out
}

#[derive(Debug, thiserror::Error)]
pub enum LpParseError {
    #[error("line {0}: {1}")]
    Line(usize, String),
    #[error("missing section: {0}")]
    MissingSection(&'static str),
}

/// Parse the subset of CPLEX LP format that `export_lp` produces:
/// a Minimize objective, Subject To rows of the form
/// `name: ±c v ± c v ... rel rhs`, optional Binaries/Generals sections,
/// End. Bounds sections are accepted and ignored (defaults assumed).
pub fn parse_lp(text: &str) -> Result<LinearProgram, LpParseError> {
    #[derive(PartialEq)]
    enum Section {
        Preamble,
        Objective,
        Rows,
        Bounds,
        Binaries,
        Generals,
        Done,
    }
    let mut sec = Section::Preamble;
    let mut lp = LinearProgram::default();
    let mut pending = String::new();
    let mut pending_line = 0usize;
    let mut seen_obj = false;

    fn flush_objective(
        lp: &mut LinearProgram,
        text: &str,
        line: usize,
    ) -> Result<(), LpParseError> {
        let body = match text.split_once(':') {
            Some((_, b)) => b,
            None => text,
        };
        lp.objective = parse_terms(body, line)?;
        Ok(())
    }

    fn flush_row(lp: &mut LinearProgram, text: &str, line: usize) -> Result<(), LpParseError> {
        if text.trim().is_empty() {
            return Ok(());
        }
        let (name, body) = text
            .split_once(':')
            .ok_or_else(|| LpParseError::Line(line, "constraint without name".into()))?;
        let (rel, pos, w) = ["<=", ">=", "="]
            .iter()
            .filter_map(|s| body.find(s).map(|p| (*s, p, s.len())))
            .min_by_key(|&(_, p, _)| p)
            .ok_or_else(|| LpParseError::Line(line, "constraint without relation".into()))?;
        let rel = match rel {
            "<=" => Rel::Le,
            ">=" => Rel::Ge,
            _ => Rel::Eq,
        };
        let lhs = &body[..pos];
        let rhs: f64 = body[pos + w..]
            .trim()
            .parse()
            .map_err(|_| LpParseError::Line(line, "bad right-hand side".into()))?;
        lp.constraints.push(LpConstraint {
            name: name.trim().to_string(),
            terms: parse_terms(lhs, line)?,
            rel,
            rhs,
        });
        Ok(())
    }

    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('\\').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        let new_sec = match lower.as_str() {
            "minimize" | "minimise" | "min" => Some(Section::Objective),
            "subject to" | "st" | "s.t." | "such that" => Some(Section::Rows),
            "bounds" | "bound" => Some(Section::Bounds),
            "binaries" | "binary" | "bin" => Some(Section::Binaries),
            "generals" | "general" | "gen" => Some(Section::Generals),
            "end" => Some(Section::Done),
            _ => None,
        };
        if let Some(s) = new_sec {
            match sec {
                Section::Objective => {
                    flush_objective(&mut lp, &pending, pending_line)?;
                    seen_obj = true;
                }
                Section::Rows => flush_row(&mut lp, &pending, pending_line)?,
                _ => {}
            }
            pending.clear();
            sec = s;
            continue;
        }
        match sec {
            Section::Preamble => {
                return Err(LpParseError::Line(ln + 1, "content before Minimize".into()))
            }
            Section::Objective => {
                pending.push(' ');
                pending.push_str(line);
                pending_line = ln + 1;
            }
            Section::Rows => {
                // a new row starts where a name: prefix appears; rows in our
                // output are single lines, but tolerate wrapped continuations
                if line.contains(':') && !pending.trim().is_empty() {
                    flush_row(&mut lp, &pending, pending_line)?;
                    pending.clear();
                }
                pending.push(' ');
                pending.push_str(line);
                pending_line = ln + 1;
            }
            Section::Bounds => {}
            Section::Binaries => {
                for w in line.split_whitespace() {
                    lp.binaries.insert(w.to_string());
                }
            }
            Section::Generals => {
                for w in line.split_whitespace() {
                    lp.generals.insert(w.to_string());
                }
            }
            Section::Done => {}
        }
    }
    match sec {
        Section::Objective => {
            flush_objective(&mut lp, &pending, pending_line)?;
            seen_obj = true;
        }
        Section::Rows => flush_row(&mut lp, &pending, pending_line)?,
        _ => {}
    }
    if !seen_obj && lp.objective.is_empty() {
        return Err(LpParseError::MissingSection("Minimize"));
    }
    Ok(lp)
}

fn parse_terms(text: &str, line: usize) -> Result<Vec<(f64, String)>, LpParseError> {
    let mut terms: Vec<(f64, String)> = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for tok in text
        .replace('+', " + ")
        .replace('-', " - ")
        .split_whitespace()
    {
        match tok {
            "+" => {
                sign = 1.0;
            }
            "-" => {
                sign = -sign;
            }
            _ => {
                if let Ok(v) = tok.parse::<f64>() {
                    if coef.is_some() {
                        return Err(LpParseError::Line(line, format!("dangling number {tok}")));
                    }
                    coef = Some(v);
                } else {
                    let c = sign * coef.take().unwrap_or(1.0);
                    terms.push((c, tok.to_string()));
                    sign = 1.0;
                }
            }
        }
    }
    if coef.is_some() {
        return Err(LpParseError::Line(line, "trailing coefficient".into()));
    }
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::egraph::egraph_from_program;
    use crate::ir::parse_program;
    use crate::library::{enumerate_impl_rules, ImplLibrary};
    use crate::rules::{saturate, SaturationLimits};
    use crate::timing::{build_catalog, enumerate_top_k_paths, mhz_to_ns};

    fn setup(src: &str, mhz: f64) -> (ImplCatalog, ChainingConstraintSet) {
        let p = parse_program(src).unwrap();
        let mut g = egraph_from_program(&p);
        let l = ImplLibrary::sample();
        let mut rules = l.algebraic();
        rules.extend(enumerate_impl_rules(&l));
        saturate(&mut g, &rules, &SaturationLimits::default());
        let cat = build_catalog(&g, &l, mhz_to_ns(mhz)).unwrap();
        let paths = enumerate_top_k_paths(&cat, 3, 20, false);
        (cat, paths)
    }

    const KERNEL: &str = "a = input i16\nb = input i16\nc = input i16\nt0 = add i17 a b\nt1 = neg i18 t0\nt2 = mul i32 t1 c\nreturn t2\n";

    #[test]
    fn lp_roundtrip_preserves_structure() {
        let (cat, paths) = setup(KERNEL, 450.0);
        let model = build_model(&cat, &paths);
        let text = export_lp(&model.lp);
        let back = parse_lp(&text).unwrap();
        assert_eq!(back.constraints.len(), model.lp.constraints.len());
        assert_eq!(back.binaries, model.lp.binaries);
        assert_eq!(back.generals, model.lp.generals);
        for (a, b) in model.lp.constraints.iter().zip(&back.constraints) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.rel, b.rel);
            assert!((a.rhs - b.rhs).abs() < 1e-9);
            assert_eq!(a.terms.len(), b.terms.len());
            for ((ca, va), (cb, vb)) in a.terms.iter().zip(&b.terms) {
                assert_eq!(va, vb);
                assert!((ca - cb).abs() < 1e-9, "{va}: {ca} vs {cb}");
            }
        }
    }

    #[test]
    fn parse_terms_handles_signs_and_coefficients() {
        let t = parse_terms(" - 2.5 x + y - z + 3 w", 1).unwrap();
        assert_eq!(
            t,
            vec![
                (-2.5, "x".to_string()),
                (1.0, "y".to_string()),
                (-1.0, "z".to_string()),
                (3.0, "w".to_string()),
            ]
        );
    }

    #[test]
    fn unrealized_root_is_flagged() {
        let (cat, paths) = setup(KERNEL, 450.0);
        let sol = Solution {
            selected: BTreeSet::new(),
            start: BTreeMap::new(),
            class_finish: BTreeMap::new(),
            makespan: 0,
        };
        let errs = check_solution(&cat, &paths, &sol).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("root class")));
    }

    #[test]
    fn model_has_expected_sections() {
        let (cat, paths) = setup(KERNEL, 450.0);
        let model = build_model(&cat, &paths);
        assert!(model.alpha > 0.0 && model.alpha < 0.5);
        let names: Vec<&str> = model
            .lp
            .constraints
            .iter()
            .map(|c| c.name.as_str())
            .collect();
        assert!(names.iter().any(|n| n.starts_with("root")));
        assert!(names.iter().any(|n| n.starts_with("cover")));
        assert!(names.iter().any(|n| n.starts_with("dep")));
        assert!(names.iter().any(|n| n.starts_with("fin")));
        assert!(names.iter().any(|n| n.starts_with("chain")));
        assert!(names.iter().any(|n| n.starts_with("mk")));
        // every objective variable is declared
        for (_, v) in &model.lp.objective {
            assert!(model.lp.binaries.contains(v) || model.lp.generals.contains(v));
        }
    }
}
