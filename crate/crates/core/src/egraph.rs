//! E-graph over typed expression nodes, plus implementation e-nodes.
//!
//! The structure is the usual union-find + hashcons + congruence-closure
//! e-graph, with two twists that matter for hardware mapping:
//!
//! * every e-node carries its result `DataType`, and the dtype is part of
//!   node identity. Two `(add a b)` nodes declared at different widths are
//!   *different* nodes in different classes; `union` refuses to merge
//!   classes of different dtypes. The value semantics of a class are "all
//!   member nodes produce the same value once truncated to the class dtype".
//! * implementation e-nodes (`identifier#config(args...)`) are inserted
//!   into an existing class *without* unioning anything — they enlarge the
//!   class membership but never change the class partition. Only algebraic
//!   rewrites (and congruence repair) merge classes.
//!
//! Hashcons keys are canonicalized `(op, args, dtype)` triples, which makes
//! both ordinary insertion and implementation insertion idempotent.
//!
//! Matching and both serializations assume a congruence-closed graph, so
//! call `rebuild` after a batch of unions before using them.

use crate::ir::{DataType, Literal, Op, Program, TypeKind};
use crate::pattern::Pattern;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

pub type ClassId = u32;

/// Node payload. Inputs and constants carry identity (name / bits) so that
/// distinct leaves do not collapse under congruence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ENodeOp {
    Op(Op),
    Input(String),
    /// Constant, stored as the raw two's-complement / IEEE-754 bit pattern;
    /// the class dtype gives it meaning.
    Const(u64),
    /// Implementation node: (library entry index, configuration index).
    Impl(u32, u32),
}

impl ENodeOp {
    pub fn is_impl(&self) -> bool {
        matches!(self, ENodeOp::Impl(..))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ENode {
    pub op: ENodeOp,
    pub args: Vec<ClassId>,
    pub dtype: DataType,
}

impl ENode {
    pub fn new(op: ENodeOp, args: Vec<ClassId>, dtype: DataType) -> Self {
        ENode { op, args, dtype }
    }
}

#[derive(Debug, Clone)]
pub struct EClass {
    pub id: ClassId,
    pub dtype: DataType,
    pub nodes: Vec<ENode>,
    /// (parent node as last canonicalized, class the parent lives in)
    parents: Vec<(ENode, ClassId)>,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum EGraphError {
    #[error("dtype mismatch: cannot union {a} class with {b} class")]
    DtypeMismatch { a: DataType, b: DataType },
}

#[derive(Debug, Default)]
pub struct EGraph {
    uf: Vec<ClassId>,
    classes: BTreeMap<ClassId, EClass>,
    memo: HashMap<ENode, ClassId>,
    dirty: Vec<ClassId>,
    node_count: usize,
    /// program value -> class, set by `egraph_from_program`
    pub value_class: Vec<ClassId>,
    pub roots: Vec<ClassId>,
    /// monotonically increasing mutation counter (adds + unions)
    version: u64,
}

impl EGraph {
    pub fn new() -> Self {
        EGraph::default()
    }

    pub fn find(&self, id: ClassId) -> ClassId {
        let mut cur = id;
        while self.uf[cur as usize] != cur {
            cur = self.uf[cur as usize];
        }
        cur
    }

    fn canonicalize(&self, node: &ENode) -> ENode {
        ENode {
            op: node.op.clone(),
            args: node.args.iter().map(|&a| self.find(a)).collect(),
            dtype: node.dtype,
        }
    }

    pub fn class(&self, id: ClassId) -> &EClass {
        let c = self.find(id);
        &self.classes[&c]
    }

    pub fn classes(&self) -> impl Iterator<Item = &EClass> {
        self.classes.values()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Add a node (idempotent). Returns the class the node lives in.
    /// If the node is new, a fresh class with `node.dtype` is created.
    pub fn add_enode(&mut self, node: ENode) -> ClassId {
        let node = self.canonicalize(&node);
        if let Some(&c) = self.memo.get(&node) {
            return self.find(c);
        }
        let id = self.uf.len() as ClassId;
        self.uf.push(id);
        let class = EClass { id, dtype: node.dtype, nodes: vec![node.clone()], parents: Vec::new() };
        self.classes.insert(id, class);
        for &a in &node.args {
            self.classes
                .get_mut(&a)
                .expect("canonical arg class")
                .parents
                .push((node.clone(), id));
        }
        self.memo.insert(node, id);
        self.node_count += 1;
        self.version += 1;
        id
    }

    /// Insert a node into an *existing* class without unioning (used for
    /// implementation e-nodes). Idempotent via the hashcons; returns true
    /// when the node was actually new. If the identical node already lives
    /// in a *different* class (possible transiently mid-batch, or when two
    /// equal-valued classes differ only in internal widths), the insertion
    /// is skipped — first host wins.
    pub fn insert_into_class(&mut self, class: ClassId, node: ENode) -> bool {
        let class = self.find(class);
        let node = self.canonicalize(&node);
        debug_assert_eq!(node.dtype, self.classes[&class].dtype, "node dtype must match class");
        if self.memo.contains_key(&node) {
            return false;
        }
        for &a in &node.args {
            self.classes
                .get_mut(&a)
                .expect("canonical arg class")
                .parents
                .push((node.clone(), class));
        }
        self.memo.insert(node.clone(), class);
        self.classes.get_mut(&class).unwrap().nodes.push(node);
        self.node_count += 1;
        self.version += 1;
        true
    }

    /// Look up an already-hashconsed node. No mutation.
    pub fn lookup(&self, node: &ENode) -> Option<ClassId> {
        self.memo.get(&self.canonicalize(node)).map(|&c| self.find(c))
    }

    /// Union two classes. Rejects dtype mismatches. Returns the surviving
    /// canonical id and whether anything changed. Call `rebuild` afterwards
    /// to restore congruence.
    pub fn union(&mut self, a: ClassId, b: ClassId) -> Result<(ClassId, bool), EGraphError> {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return Ok((a, false));
        }
        let (da, db) = (self.classes[&a].dtype, self.classes[&b].dtype);
        if da != db {
            return Err(EGraphError::DtypeMismatch { a: da, b: db });
        }
        // union by size; smaller id survives ties for determinism
        let (win, lose) = {
            let (na, nb) = (self.classes[&a].nodes.len(), self.classes[&b].nodes.len());
            if na > nb || (na == nb && a < b) {
                (a, b)
            } else {
                (b, a)
            }
        };
        self.uf[lose as usize] = win;
        let loser = self.classes.remove(&lose).unwrap();
        let winner = self.classes.get_mut(&win).unwrap();
        winner.nodes.extend(loser.nodes);
        winner.parents.extend(loser.parents);
        self.dirty.push(win);
        self.version += 1;
        Ok((win, true))
    }

    /// Restore the congruence invariant after unions: re-canonicalize parent
    /// nodes of merged classes, re-hashcons them, and union classes whose
    /// nodes collide. Loops to fixpoint.
    pub fn rebuild(&mut self) {
        while !self.dirty.is_empty() {
            let drained: Vec<ClassId> = self.dirty.drain(..).collect();
            let mut todo: Vec<ClassId> = drained.into_iter().map(|c| self.find(c)).collect();
            todo.sort_unstable();
            todo.dedup();
            for class in todo {
                self.repair(class);
            }
        }
        debug_assert!(self.check_congruence_closed());
    }

    fn repair(&mut self, class: ClassId) {
        let class = self.find(class);
        if !self.classes.contains_key(&class) {
            return;
        }
        let parents = std::mem::take(&mut self.classes.get_mut(&class).unwrap().parents);
        let mut new_parents: Vec<(ENode, ClassId)> = Vec::with_capacity(parents.len());
        let mut seen_parents: HashSet<(ENode, ClassId)> = HashSet::with_capacity(parents.len());
        for (pnode, pclass) in parents {
            self.memo.remove(&pnode);
            let canon = self.canonicalize(&pnode);
            let pclass = self.find(pclass);
            match self.memo.insert(canon.clone(), pclass) {
                Some(other) if self.find(other) != pclass => {
                    self.union(self.find(other), pclass)
                        .expect("congruent classes share a dtype");
                }
                _ => {}
            }
            let entry = (canon, self.find(pclass));
            if seen_parents.insert(entry.clone()) {
                new_parents.push(entry);
            }
        }
        let canon_class = self.find(class);
        self.classes.get_mut(&canon_class).unwrap().parents.extend(new_parents);

        // dedup this class's own nodes under the new canonical args
        let cls = self.classes.get_mut(&canon_class).unwrap();
        let nodes = std::mem::take(&mut cls.nodes);
        let before = nodes.len();
        let mut seen: HashSet<ENode> = HashSet::with_capacity(before);
        let mut kept = Vec::with_capacity(before);
        for n in nodes {
            let canon = self.canonicalize(&n);
            if seen.insert(canon.clone()) {
                kept.push(canon);
            }
        }
        self.node_count -= before - kept.len();
        // memo must point at the surviving class for every kept node
        for n in &kept {
            self.memo.insert(n.clone(), canon_class);
        }
        self.classes.get_mut(&canon_class).unwrap().nodes = kept;
    }

    pub(crate) fn check_congruence_closed(&self) -> bool {
        let mut seen: HashMap<ENode, ClassId> = HashMap::new();
        for (&id, cls) in &self.classes {
            for n in &cls.nodes {
                let canon = self.canonicalize(n);
                if *seen.entry(canon).or_insert(id) != id {
                    return false;
                }
            }
        }
        true
    }

    // -- e-matching ----------------------------------------------------------

    /// Find all matches of `pattern` anywhere in the graph, deterministically
    /// ordered (classes ascending, then discovery order). The graph must be
    /// congruence-closed. Bare-variable patterns match nothing.
    pub fn ematch(&self, pattern: &Pattern) -> Vec<Match> {
        let mut out = Vec::new();
        for &id in self.classes.keys() {
            self.ematch_in(pattern, id, &mut out);
        }
        out
    }

    /// Matches of `pattern` rooted at `class`, appended to `out`.
    pub fn ematch_in(&self, pattern: &Pattern, class: ClassId, out: &mut Vec<Match>) {
        if matches!(pattern, Pattern::Var(_)) {
            return;
        }
        let class = self.find(class);
        let mut binding = BTreeMap::new();
        let mut internals = Vec::new();
        let mut found = Vec::new();
        self.solve(&[(pattern, class)], &mut binding, &mut internals, &mut found);
        let mut seen: BTreeSet<String> = BTreeSet::new();
        for m in found {
            let key = format!("{:?}|{:?}", m.binding, m.internals);
            if seen.insert(key) {
                out.push(m);
            }
        }
    }

    /// Goal-stack matcher: goals are (sub-pattern, class) obligations taken
    /// left to right, which visits pattern operators in pre-order. The
    /// `internals` stack records the class each operator position matched.
    fn solve(
        &self,
        goals: &[(&Pattern, ClassId)],
        binding: &mut BTreeMap<String, ClassId>,
        internals: &mut Vec<(Op, ClassId)>,
        out: &mut Vec<Match>,
    ) {
        let Some((&(pat, class), rest)) = goals.split_first() else {
            out.push(Match {
                class: internals[0].1,
                binding: binding.clone(),
                internals: internals.clone(),
            });
            return;
        };
        match pat {
            Pattern::Var(v) => match binding.get(v) {
                Some(&bound) => {
                    if bound == class {
                        self.solve(rest, binding, internals, out);
                    }
                }
                None => {
                    binding.insert(v.clone(), class);
                    self.solve(rest, binding, internals, out);
                    binding.remove(v);
                }
            },
            Pattern::Node { op, args } => {
                let cls = &self.classes[&class];
                for node in &cls.nodes {
                    if node.op != ENodeOp::Op(*op) || node.args.len() != args.len() {
                        continue;
                    }
                    internals.push((*op, class));
                    let mut next: Vec<(&Pattern, ClassId)> =
                        Vec::with_capacity(args.len() + rest.len());
                    for (p, &a) in args.iter().zip(&node.args) {
                        next.push((p, self.find(a)));
                    }
                    next.extend_from_slice(rest);
                    self.solve(&next, binding, internals, out);
                    internals.pop();
                }
            }
        }
    }

    // -- serialization -------------------------------------------------------

    /// Canonical JSON document: classes sorted by id (densely renumbered),
    /// nodes sorted by rendered form. Stable across identical runs; used for
    /// golden tests and the dot export.
    pub fn serialize_canonical(
        &self,
        render_impl: &dyn Fn(u32, u32) -> String,
    ) -> serde_json::Value {
        let renum = self.dense_ids();
        let mut classes = Vec::new();
        for (&id, cls) in &self.classes {
            let mut nodes: Vec<String> =
                cls.nodes.iter().map(|n| self.render_node(n, &renum, render_impl)).collect();
            nodes.sort();
            classes.push(serde_json::json!({
                "id": renum[&id],
                "dtype": cls.dtype.to_string(),
                "nodes": nodes,
            }));
        }
        let roots: Vec<usize> = self.roots.iter().map(|&r| renum[&self.find(r)]).collect();
        serde_json::json!({ "classes": classes, "roots": roots })
    }

    /// Graphviz rendering: one cluster per class, node->class edges.
    pub fn to_dot(&self, render_impl: &dyn Fn(u32, u32) -> String) -> String {
        let renum = self.dense_ids();
        let mut s = String::from("digraph egraph {\n  compound=true;\n  node [shape=box];\n");
        for (&id, cls) in &self.classes {
            let cid = renum[&id];
            s.push_str(&format!(
                "  subgraph cluster_{cid} {{\n    label=\"c{cid}: {}\";\n",
                cls.dtype
            ));
            for (i, n) in cls.nodes.iter().enumerate() {
                let label = self.render_node(n, &renum, render_impl).replace('"', "\\\"");
                s.push_str(&format!("    c{cid}_n{i} [label=\"{label}\"];\n"));
            }
            s.push_str("  }\n");
        }
        for (&id, cls) in &self.classes {
            let cid = renum[&id];
            for (i, n) in cls.nodes.iter().enumerate() {
                let mut tgts: Vec<usize> = n.args.iter().map(|&a| renum[&self.find(a)]).collect();
                tgts.dedup();
                for acid in tgts {
                    s.push_str(&format!("  c{cid}_n{i} -> c{acid}_n0 [lhead=cluster_{acid}];\n"));
                }
            }
        }
        let mut root_ids: Vec<usize> = self.roots.iter().map(|&r| renum[&self.find(r)]).collect();
        root_ids.dedup();
        for rid in root_ids {
            s.push_str(&format!("  out -> c{rid}_n0 [lhead=cluster_{rid}, style=dashed];\n"));
        }
        s.push_str("  out [label=\"return\", shape=doublecircle];\n}\n");
        s
    }

    fn dense_ids(&self) -> BTreeMap<ClassId, usize> {
        self.classes.keys().enumerate().map(|(i, &c)| (c, i)).collect()
    }

    fn render_node(
        &self,
        n: &ENode,
        renum: &BTreeMap<ClassId, usize>,
        render_impl: &dyn Fn(u32, u32) -> String,
    ) -> String {
        let head = match &n.op {
            ENodeOp::Op(op) => op.name().to_string(),
            ENodeOp::Input(name) => format!("input:{name}"),
            ENodeOp::Const(bits) => match n.dtype.kind {
                TypeKind::Float => format!("const:{}", f32::from_bits(*bits as u32)),
                TypeKind::Signed => {
                    format!("const:{}", crate::ir::normalize(*bits as i128, n.dtype))
                }
                TypeKind::Unsigned => format!("const:{bits}"),
            },
            ENodeOp::Impl(e, c) => render_impl(*e, *c),
        };
        if n.args.is_empty() {
            head
        } else {
            let args: Vec<String> =
                n.args.iter().map(|a| format!("c{}", renum[&self.find(*a)])).collect();
            format!("({} {})", head, args.join(" "))
        }
    }
}

/// One e-match: the matched root class, the variable binding, and the class
/// every operator position of the pattern landed in (pre-order, root first).
#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub class: ClassId,
    pub binding: BTreeMap<String, ClassId>,
    pub internals: Vec<(Op, ClassId)>,
}

/// Build the initial e-graph from a program: one node per SSA value;
/// hashconsing collapses structurally identical values of equal dtype.
pub fn egraph_from_program(prog: &Program) -> EGraph {
    let mut g = EGraph::new();
    let mut map = Vec::with_capacity(prog.values.len());
    for v in &prog.values {
        let op = match v.op {
            Op::Input => ENodeOp::Input(v.name.clone()),
            Op::Const => {
                let bits = match v.literal.expect("const carries a literal") {
                    Literal::Int(x) => {
                        (crate::ir::normalize(x as i128, v.dtype) as i64 as u64)
                            & (u64::MAX >> (64 - v.dtype.bits))
                    }
                    Literal::Float(f) => f.to_bits() as u64,
                };
                ENodeOp::Const(bits)
            }
            op => ENodeOp::Op(op),
        };
        let args = v.args.iter().map(|&a| map[a]).collect();
        let id = g.add_enode(ENode::new(op, args, v.dtype));
        map.push(id);
    }
    g.roots = prog.outputs.iter().map(|&o| g.find(map[o])).collect();
    g.value_class = map;
    g
}

impl fmt::Display for EGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "egraph: {} classes, {} nodes", self.class_count(), self.node_count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    fn no_impls(_: u32, _: u32) -> String {
        unreachable!("no impl nodes in these tests")
    }

    #[test]
    fn hashcons_collapses_identical_subterms() {
        let p = parse_program(
            "a = input i8\nb = input i8\nx = add i9 a b\ny = add i9 a b\nz = mul i18 x y\nreturn z\n",
        )
        .unwrap();
        let g = egraph_from_program(&p);
        assert_eq!(g.value_class[2], g.value_class[3]);
        // a, b, add, mul
        assert_eq!(g.class_count(), 4);
    }

    #[test]
    fn distinct_widths_stay_distinct() {
        let p = parse_program(
            "a = input i8\nb = input i8\nx = add i9 a b\ny = add i8 a b\nreturn x y\n",
        )
        .unwrap();
        let g = egraph_from_program(&p);
        assert_ne!(g.value_class[2], g.value_class[3]);
    }

    #[test]
    fn distinct_inputs_stay_distinct() {
        let p = parse_program("a = input i8\nb = input i8\nreturn a b\n").unwrap();
        let g = egraph_from_program(&p);
        assert_ne!(g.value_class[0], g.value_class[1]);
    }

    #[test]
    fn equal_constants_collapse() {
        let p = parse_program("k1 = const u8 7\nk2 = const u8 7\nk3 = const u8 9\nreturn k1 k2 k3\n")
            .unwrap();
        let g = egraph_from_program(&p);
        assert_eq!(g.value_class[0], g.value_class[1]);
        assert_ne!(g.value_class[0], g.value_class[2]);
    }

    #[test]
    fn union_rejects_dtype_mismatch() {
        let p = parse_program("a = input i8\nb = input i9\nreturn a b\n").unwrap();
        let mut g = egraph_from_program(&p);
        let (ca, cb) = (g.value_class[0], g.value_class[1]);
        assert!(matches!(g.union(ca, cb), Err(EGraphError::DtypeMismatch { .. })));
    }

    #[test]
    fn congruence_closes_after_union() {
        // x = a+c, y = b+c; union(a, b) must merge x and y
        let p = parse_program(
            "a = input i8\nb = input i8\nc = input i8\nx = add i9 a c\ny = add i9 b c\nreturn x y\n",
        )
        .unwrap();
        let mut g = egraph_from_program(&p);
        let (ca, cb) = (g.value_class[0], g.value_class[1]);
        g.union(ca, cb).unwrap();
        g.rebuild();
        assert_eq!(g.find(g.value_class[3]), g.find(g.value_class[4]));
        assert!(g.check_congruence_closed());
    }

    #[test]
    fn congruence_cascades() {
        // two-level cascade: merging leaves merges both adds and then both muls
        let p = parse_program(
            "a = input i8\nb = input i8\nc = input i8\n\
             x = add i9 a c\ny = add i9 b c\n\
             u = mul i17 x c\nv = mul i17 y c\nreturn u v\n",
        )
        .unwrap();
        let mut g = egraph_from_program(&p);
        g.union(g.value_class[0], g.value_class[1]).unwrap();
        g.rebuild();
        assert_eq!(g.find(g.value_class[5]), g.find(g.value_class[6]));
    }

    #[test]
    fn ematch_finds_nested_pattern() {
        let p = parse_program(
            "a = input i16\nb = input i16\nc = input i16\nt0 = add i17 a b\nt1 = neg i17 t0\nt2 = mul i32 t1 c\nreturn t2\n",
        )
        .unwrap();
        let g = egraph_from_program(&p);
        let pat = Pattern::parse("(mul (neg ?x) ?y)").unwrap();
        let ms = g.ematch(&pat);
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].class, g.find(g.value_class[5]));
        assert_eq!(ms[0].binding["x"], g.find(g.value_class[3]));
        assert_eq!(ms[0].binding["y"], g.find(g.value_class[2]));
        // internals: mul at the root, neg at t1
        assert_eq!(ms[0].internals.len(), 2);
        assert_eq!(ms[0].internals[0].0, Op::Mul);
        assert_eq!(ms[0].internals[1].0, Op::Neg);
    }

    #[test]
    fn ematch_respects_repeated_vars() {
        let p = parse_program(
            "a = input i8\nb = input i8\nx = mul i16 a a\ny = mul i16 a b\nreturn x y\n",
        )
        .unwrap();
        let g = egraph_from_program(&p);
        let pat = Pattern::parse("(mul ?v ?v)").unwrap();
        let ms = g.ematch(&pat);
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].class, g.find(g.value_class[2]));
    }

    #[test]
    fn ematch_three_deep() {
        let p = parse_program(
            "a = input i8\nb = input i8\nc = input i8\nd = input i8\n\
             s = add i9 a b\nm = mul i17 s c\nn = neg i18 m\nq = add i19 n n\nreturn q\n",
        )
        .unwrap();
        let g = egraph_from_program(&p);
        let pat = Pattern::parse("(neg (mul (add ?x ?y) ?z))").unwrap();
        let ms = g.ematch(&pat);
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].internals.len(), 3);
        assert_eq!(ms[0].binding["z"], g.find(g.value_class[2]));
    }

    #[test]
    fn insert_into_class_is_idempotent() {
        let p = parse_program("a = input i8\nb = input i8\nx = add i9 a b\nreturn x\n").unwrap();
        let mut g = egraph_from_program(&p);
        let cls = g.value_class[2];
        let node = ENode::new(
            ENodeOp::Impl(0, 0),
            vec![g.value_class[0], g.value_class[1]],
            DataType::signed(9),
        );
        assert!(g.insert_into_class(cls, node.clone()));
        assert!(!g.insert_into_class(cls, node));
        assert_eq!(g.class(cls).nodes.len(), 2);
        assert_eq!(g.class_count(), 3);
        assert_eq!(g.node_count(), 4);
    }

    #[test]
    fn canonical_serialization_is_stable() {
        let p = parse_program("a = input i8\nb = input i8\nx = add i9 a b\nreturn x\n").unwrap();
        let g1 = egraph_from_program(&p);
        let g2 = egraph_from_program(&p);
        assert_eq!(g1.serialize_canonical(&no_impls), g2.serialize_canonical(&no_impls));
    }

    #[test]
    fn node_count_tracks_merges() {
        let p = parse_program(
            "a = input i8\nb = input i8\nx = add i9 a b\ny = add i9 b a\nreturn x y\n",
        )
        .unwrap();
        let mut g = egraph_from_program(&p);
        assert_eq!(g.node_count(), 4);
        g.union(g.value_class[2], g.value_class[3]).unwrap();
        g.rebuild();
        // both adds survive (different arg orders), now in one class
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.class_count(), 3);
    }
}
