//! Rewrite rules and the saturation driver.
//!
//! Two kinds of rule share one matcher:
//!
//! * algebraic rewrites (`lhs ⇝ rhs`) union the matched class with the
//!   instantiated right-hand side;
//! * implementation rules insert an `Impl(entry, config)` e-node into the
//!   matched class without any union.
//!
//! Because classes are width-typed and class membership means "equal after
//! truncation to the class dtype", a structural match is not automatically
//! value-sound: an interior `add` that was declared narrower than its exact
//! result may wrap, while the rewritten form (or a fused implementation,
//! which computes at full precision internally) does not. Every match is
//! therefore checked by a width guard before it is applied: each *interior*
//! operator position must either be wide enough to hold its exact result,
//! or — when the whole pattern is built from ring ops (add/sub/mul/neg), so
//! wrap-around commutes with truncation — at least as wide as the matched
//! root. Fresh intermediate classes created by an applier are given exact
//! widths (capped at 64 and floored at the root width) so derived terms
//! always pass their own guard.

use crate::egraph::{ClassId, EGraph, ENode, ENodeOp, Match};
use crate::ir::{DataType, Op, TypeKind};
use crate::library::{check_condition, PortCondition};
use crate::pattern::Pattern;
use std::collections::BTreeMap;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub enum RuleAction {
    /// Union the matched class with the instantiated pattern.
    Rewrite(Pattern),
    /// Insert an implementation node (library entry, configuration) whose
    /// operands are the bindings of `ports`, in order, provided every
    /// port condition admits the bound class's dtype.
    InsertImpl {
        entry: u32,
        config: u32,
        ports: Vec<String>,
        conditions: Vec<PortCondition>,
    },
}

#[derive(Debug, Clone)]
pub struct RewriteRule {
    pub name: String,
    pub lhs: Pattern,
    pub action: RuleAction,
    /// Algebraic rules default to integer classes only; identities like
    /// commutativity do hold for IEEE floats, but re-association does not,
    /// so float algebra is opt-in per rule.
    pub applies_to_float: bool,
}

impl RewriteRule {
    pub fn rewrite(name: &str, lhs: &str, rhs: &str) -> Self {
        RewriteRule {
            name: name.to_string(),
            lhs: Pattern::parse(lhs).expect("valid lhs pattern"),
            action: RuleAction::Rewrite(Pattern::parse(rhs).expect("valid rhs pattern")),
            applies_to_float: false,
        }
    }
}

/// The stock algebraic rule set. Only ring operations; everything here
/// preserves the two's-complement value at every width.
pub fn default_rules() -> Vec<RewriteRule> {
    vec![
        RewriteRule::rewrite("comm-add", "(add ?a ?b)", "(add ?b ?a)"),
        RewriteRule::rewrite("comm-mul", "(mul ?a ?b)", "(mul ?b ?a)"),
        RewriteRule::rewrite("mul-neg-left", "(mul (neg ?a) ?b)", "(neg (mul ?a ?b))"),
        RewriteRule::rewrite("mul-neg-right", "(mul ?a (neg ?b))", "(neg (mul ?a ?b))"),
        RewriteRule::rewrite("neg-neg", "(neg (neg ?a))", "?a"),
        RewriteRule::rewrite("sub-to-add-neg", "(sub ?a ?b)", "(add ?a (neg ?b))"),
    ]
}

/// Exact result width of a ring op, uncapped (may exceed 64).
fn exact_bits(op: Op, child_bits: &[u32]) -> Option<u64> {
    let max = child_bits.iter().copied().max().unwrap_or(0) as u64;
    match op {
        Op::Add | Op::Sub => Some(max + 1),
        Op::Mul => Some(child_bits.iter().map(|&b| b as u64).sum()),
        Op::Neg => Some(max + 1),
        _ => None,
    }
}

/// Child classes for every operator position of a matched pattern, aligned
/// with `Match::internals` (pre-order). Recomputed from the pattern shape:
/// a child that is a variable resolves through the binding, a child that is
/// an operator resolves to the next internal position.
fn internal_child_classes(pat: &Pattern, m: &Match) -> Vec<Vec<ClassId>> {
    fn walk(
        pat: &Pattern,
        m: &Match,
        pos: &mut usize,
        out: &mut Vec<Vec<ClassId>>,
    ) {
        if let Pattern::Node { args, .. } = pat {
            let my = *pos;
            *pos += 1;
            out.push(Vec::with_capacity(args.len()));
            for a in args {
                let child_class = match a {
                    Pattern::Var(v) => m.binding[v],
                    Pattern::Node { .. } => m.internals[*pos].1,
                };
                out[my].push(child_class);
                walk(a, m, pos, out);
            }
        }
    }
    let mut out = Vec::new();
    let mut pos = 0;
    walk(pat, m, &mut pos, &mut out);
    out
}

/// Width guard: may this match be treated as value-exact? Interior operator
/// positions (everything below the root) must not lose information the
/// surrounding rewrite could observe. Float classes pass structurally —
/// float ops have no width growth and rules gate float applicability
/// themselves.
pub fn match_is_width_sound(g: &EGraph, lhs: &Pattern, m: &Match) -> bool {
    let root_dtype = g.class(m.class).dtype;
    if root_dtype.kind == TypeKind::Float {
        return true;
    }
    if m.internals.len() <= 1 {
        return true; // single-op pattern: root width is definitional
    }
    let all_ring = lhs.all_ring();
    let children = internal_child_classes(lhs, m);
    for (i, &(op, cls)) in m.internals.iter().enumerate().skip(1) {
        let bits = g.class(cls).dtype.bits as u64;
        let child_bits: Vec<u32> =
            children[i].iter().map(|&c| g.class(c).dtype.bits).collect();
        let exact = exact_bits(op, &child_bits);
        let wide_enough = match exact {
            Some(e) => bits >= e,
            None => false,
        };
        if !wide_enough && !(all_ring && bits >= root_dtype.bits as u64) {
            return false;
        }
    }
    true
}

/// Instantiate `pat` under `binding`. The root node is created at the
/// matched class's dtype (so the union type-checks); fresh interior nodes
/// get exact widths, floored at the root width and capped at 64, signed if
/// negation is involved or any operand is signed.
fn instantiate(
    g: &mut EGraph,
    pat: &Pattern,
    binding: &BTreeMap<String, ClassId>,
    root_dtype: DataType,
    is_root: bool,
) -> ClassId {
    match pat {
        Pattern::Var(v) => binding[v],
        Pattern::Node { op, args } => {
            let children: Vec<ClassId> = args
                .iter()
                .map(|a| instantiate(g, a, binding, root_dtype, false))
                .collect();
            let dtype = if is_root {
                root_dtype
            } else if root_dtype.kind == TypeKind::Float {
                root_dtype
            } else {
                let child_bits: Vec<u32> =
                    children.iter().map(|&c| g.class(c).dtype.bits).collect();
                let exact = exact_bits(*op, &child_bits)
                    .unwrap_or(root_dtype.bits as u64);
                let bits = exact.max(root_dtype.bits as u64).min(64) as u32;
                let signed = *op == Op::Neg
                    || children.iter().any(|&c| g.class(c).dtype.kind == TypeKind::Signed)
                    || root_dtype.kind == TypeKind::Signed;
                DataType {
                    kind: if signed { TypeKind::Signed } else { TypeKind::Unsigned },
                    bits,
                }
            };
            g.add_enode(ENode::new(ENodeOp::Op(*op), children, dtype))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// No rule produced any change in the last iteration.
    Saturated,
    IterationLimit,
    ClassLimit,
    NodeLimit,
    Timeout,
}

#[derive(Debug, Clone)]
pub struct SaturationLimits {
    pub max_iterations: usize,
    pub max_classes: usize,
    pub max_nodes: usize,
    pub timeout: Duration,
}

impl Default for SaturationLimits {
    fn default() -> Self {
        SaturationLimits {
            max_iterations: 30,
            max_classes: 10_000,
            max_nodes: 100_000,
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SaturationReport {
    pub iterations: usize,
    pub stop: StopReason,
    pub classes: usize,
    pub nodes: usize,
    /// (rule name, applications that changed the graph)
    pub rule_applications: Vec<(String, usize)>,
    pub matches_filtered_by_width_guard: usize,
    pub elapsed: Duration,
}

/// Run equality saturation: repeatedly match every rule against the graph,
/// batch all matches of an iteration, then apply them in deterministic
/// order (rule order, then match order) and rebuild. Stops at fixpoint or
/// at the first exceeded limit.
pub fn saturate(
    g: &mut EGraph,
    rules: &[RewriteRule],
    limits: &SaturationLimits,
) -> SaturationReport {
    saturate_impl(g, rules, limits, cfg!(feature = "parallel"))
}

/// Single-threaded saturation. Kept callable regardless of the `parallel`
/// feature so the two code paths can be compared on the same build.
pub fn saturate_seq(
    g: &mut EGraph,
    rules: &[RewriteRule],
    limits: &SaturationLimits,
) -> SaturationReport {
    saturate_impl(g, rules, limits, false)
}

fn saturate_impl(
    g: &mut EGraph,
    rules: &[RewriteRule],
    limits: &SaturationLimits,
    parallel: bool,
) -> SaturationReport {
    let start = Instant::now();
    let mut counts: Vec<usize> = vec![0; rules.len()];
    let mut filtered = 0usize;
    let mut iterations = 0usize;
    let mut stop = StopReason::IterationLimit;

    'outer: for _ in 0..limits.max_iterations {
        if start.elapsed() > limits.timeout {
            stop = StopReason::Timeout;
            break;
        }
        iterations += 1;

        let batches = if parallel {
            collect_matches(g, rules)
        } else {
            collect_matches_seq(g, rules)
        };

        let before = g.version();
        for (ri, m) in batches {
            let rule = &rules[ri];
            let root = g.find(m.class);
            let root_dtype = g.class(root).dtype;
            if root_dtype.kind == TypeKind::Float
                && !rule.applies_to_float
                && matches!(rule.action, RuleAction::Rewrite(_))
            {
                continue;
            }
            if !match_is_width_sound(g, &rule.lhs, &m) {
                filtered += 1;
                continue;
            }
            match &rule.action {
                RuleAction::Rewrite(rhs) => {
                    let canon_binding: BTreeMap<String, ClassId> =
                        m.binding.iter().map(|(k, &v)| (k.clone(), g.find(v))).collect();
                    let new = instantiate(g, rhs, &canon_binding, root_dtype, true);
                    match g.union(root, new) {
                        Ok((_, true)) => counts[ri] += 1,
                        Ok((_, false)) => {}
                        Err(_) => filtered += 1, // var-only rhs of a different dtype
                    }
                }
                RuleAction::InsertImpl { entry, config, ports, conditions } => {
                    let port_types: BTreeMap<String, DataType> = ports
                        .iter()
                        .map(|p| (p.clone(), g.class(m.binding[p]).dtype))
                        .collect();
                    if !check_condition(conditions, &port_types) {
                        continue;
                    }
                    let args: Vec<ClassId> =
                        ports.iter().map(|p| g.find(m.binding[p])).collect();
                    let node =
                        ENode::new(ENodeOp::Impl(*entry, *config), args, root_dtype);
                    if g.insert_into_class(root, node) {
                        counts[ri] += 1;
                    }
                }
            }
            if g.class_count() > limits.max_classes {
                g.rebuild();
                stop = StopReason::ClassLimit;
                break 'outer;
            }
            if g.node_count() > limits.max_nodes {
                g.rebuild();
                stop = StopReason::NodeLimit;
                break 'outer;
            }
        }
        g.rebuild();
        if g.version() == before {
            stop = StopReason::Saturated;
            break;
        }
    }

    SaturationReport {
        iterations,
        stop,
        classes: g.class_count(),
        nodes: g.node_count(),
        rule_applications: rules
            .iter()
            .map(|r| r.name.clone())
            .zip(counts)
            .collect(),
        matches_filtered_by_width_guard: filtered,
        elapsed: start.elapsed(),
    }
}

/// Match every rule against the current graph (read-only phase). With the
/// `parallel` feature the per-rule searches run on the rayon pool; the
/// result order is identical either way.
#[cfg(feature = "parallel")]
fn collect_matches(g: &EGraph, rules: &[RewriteRule]) -> Vec<(usize, Match)> {
    use rayon::prelude::*;
    rules
        .par_iter()
        .enumerate()
        .map(|(ri, r)| {
            g.ematch(&r.lhs).into_iter().map(|m| (ri, m)).collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn collect_matches(g: &EGraph, rules: &[RewriteRule]) -> Vec<(usize, Match)> {
    collect_matches_seq(g, rules)
}

fn collect_matches_seq(g: &EGraph, rules: &[RewriteRule]) -> Vec<(usize, Match)> {
    rules
        .iter()
        .enumerate()
        .flat_map(|(ri, r)| {
            g.ematch(&r.lhs).into_iter().map(move |m| (ri, m)).collect::<Vec<_>>()
        })
        .collect()
}
