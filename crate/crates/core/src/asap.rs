//! Greedy as-soon-as-possible selection and scheduling.
//!
//! Classes finalize in sweeps: a class is ready once some candidate's
//! argument classes are all finalized, and the candidate chosen is the one
//! with the earliest finish cycle — argument finishes plus every chaining
//! row whose source and intermediate implementations are already the
//! finalized choices. Sweeps repeat until no class makes progress;
//! because readiness requires finalized arguments the chosen dependency
//! graph is acyclic by construction, and any chaining row that will be
//! active in the final solution is decidable at choose time (its whole
//! intermediate chain is finalized upstream of the candidate).
//!
//! The result is pruned to the root cone: only selections the roots
//! transitively need are kept. Greedy choices are local, so the schedule
//! is feasible but not necessarily latency-optimal.

use crate::egraph::ClassId;
use crate::library::ImplLibrary;
use crate::model::Solution;
use crate::timing::{ChainingConstraintSet, ImplCatalog, NodeId, PathSrc};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, thiserror::Error)]
pub enum ScheduleError {
    #[error("class {class} has no usable implementation at this clock")]
    Unschedulable { class: ClassId },
}

/// Finish cycle of a candidate under the current finalized state, or None
/// when some argument class is not finalized yet.
fn candidate_start(
    cat: &ImplCatalog,
    paths: &ChainingConstraintSet,
    finished: &BTreeMap<ClassId, u32>,
    chosen: &BTreeMap<ClassId, NodeId>,
    n: NodeId,
) -> Option<u32> {
    let node = cat.node(n);
    let mut s = 0u32;
    for &a in &node.args {
        let fa = if cat.is_source_class(a) { Some(&0) } else { finished.get(&a) };
        s = s.max(*fa?);
    }
    let is_chosen = |m: NodeId| chosen.get(&cat.node(m).class) == Some(&m);
    for row in paths.rows_ending_at(n) {
        let f_src = match row.src {
            PathSrc::Node(m) => {
                if !is_chosen(m) {
                    continue;
                }
                match finished.get(&cat.node(m).class) {
                    Some(&f) => f,
                    None => continue,
                }
            }
            PathSrc::Input(_) | PathSrc::Const(_) => 0,
        };
        if row.intermediates().iter().any(|&(h, _)| !is_chosen(h)) {
            continue;
        }
        s = s.max(f_src + row.cuts);
    }
    Some(s)
}

/// Greedy schedule over the whole catalog, pruned to the root cone.
pub fn asap_schedule(
    cat: &ImplCatalog,
    paths: &ChainingConstraintSet,
    lib: &ImplLibrary,
) -> Result<Solution, ScheduleError> {
    let mut finished: BTreeMap<ClassId, u32> = BTreeMap::new();
    let mut chosen: BTreeMap<ClassId, NodeId> = BTreeMap::new();
    let mut start: BTreeMap<NodeId, u32> = BTreeMap::new();

    let classes: Vec<ClassId> = cat.by_class.keys().copied().collect();
    loop {
        let mut progress = false;
        for &c in &classes {
            if finished.contains_key(&c) || cat.is_source_class(c) {
                continue;
            }
            // earliest-finishing ready candidate; ties go to the lower
            // latency, then the library order (identifier, configuration),
            // then the node id, so runs are reproducible
            let mut best: Option<(u32, u32, &str, &str, NodeId)> = None;
            for &n in cat.candidates(c) {
                let Some(s) = candidate_start(cat, paths, &finished, &chosen, n) else {
                    continue;
                };
                let node = cat.node(n);
                let fin = s + node.latency();
                let entry = lib.entry(node.entry);
                let key = (
                    fin,
                    node.latency(),
                    entry.identifier.as_str(),
                    entry.configurations[node.config as usize].config.as_str(),
                    n,
                );
                if best.map(|b| key < b).unwrap_or(true) {
                    best = Some(key);
                }
            }
            if let Some((fin, lat, _, _, n)) = best {
                chosen.insert(c, n);
                start.insert(n, fin - lat);
                finished.insert(c, fin);
                progress = true;
            }
        }
        if !progress {
            break;
        }
    }

    for &r in &cat.roots {
        if !cat.is_source_class(r) && !finished.contains_key(&r) {
            return Err(ScheduleError::Unschedulable { class: r });
        }
    }

    // prune to the cone the roots actually need
    let mut needed: BTreeSet<ClassId> = BTreeSet::new();
    let mut work: Vec<ClassId> = cat.roots.clone();
    while let Some(c) = work.pop() {
        if !needed.insert(c) {
            continue;
        }
        if cat.is_source_class(c) {
            continue;
        }
        if let Some(&n) = chosen.get(&c) {
            work.extend(cat.node(n).args.iter().copied());
        }
    }

    let mut selected: BTreeSet<NodeId> = BTreeSet::new();
    let mut kept_start: BTreeMap<NodeId, u32> = BTreeMap::new();
    let mut class_finish: BTreeMap<ClassId, u32> = BTreeMap::new();
    for &c in &needed {
        if cat.is_source_class(c) {
            class_finish.insert(c, 0);
            continue;
        }
        let n = chosen[&c];
        selected.insert(n);
        kept_start.insert(n, start[&n]);
        class_finish.insert(c, finished[&c]);
    }

    let makespan = cat
        .roots
        .iter()
        .filter_map(|r| class_finish.get(r).copied())
        .max()
        .unwrap_or(0);

    Ok(Solution { selected, start: kept_start, class_finish, makespan })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::egraph::egraph_from_program;
    use crate::ir::parse_program;
    use crate::library::enumerate_impl_rules;
    use crate::model::check_solution;
    use crate::pattern::Pattern;
    use crate::rules::{saturate, RewriteRule, SaturationLimits};
    use crate::timing::{build_catalog, enumerate_top_k_paths, mhz_to_ns};

    const KERNEL: &str = "a = input i16\nb = input i16\nc = input i16\nt0 = add i17 a b\nt1 = neg i18 t0\nt2 = mul i32 t1 c\nreturn t2\n";

    fn setup_rules(
        src: &str,
        mhz: f64,
        per_op: bool,
    ) -> (ImplCatalog, ChainingConstraintSet, ImplLibrary) {
        let p = parse_program(src).unwrap();
        let mut g = egraph_from_program(&p);
        let l = ImplLibrary::sample();
        let mut rules: Vec<RewriteRule> = if per_op { Vec::new() } else { l.algebraic() };
        rules.extend(
            enumerate_impl_rules(&l)
                .into_iter()
                .filter(|r| !per_op || single_op(&r.lhs)),
        );
        saturate(&mut g, &rules, &SaturationLimits::default());
        let cat = build_catalog(&g, &l, mhz_to_ns(mhz)).unwrap();
        let paths = enumerate_top_k_paths(&cat, 3, 20, false);
        (cat, paths, l)
    }

    fn single_op(p: &Pattern) -> bool {
        p.op_count() == 1
    }

    #[test]
    fn greedy_matches_oracle_on_motivating_kernel() {
        let (cat, paths, lib) = setup_rules(KERNEL, 450.0, false);
        let sol = asap_schedule(&cat, &paths, &lib).unwrap();
        check_solution(&cat, &paths, &sol).unwrap();
        assert_eq!(sol.makespan, 2);
        assert_eq!(sol.selected.len(), 1);
    }

    #[test]
    fn per_op_restriction_costs_a_cycle() {
        let (cat, paths, lib) = setup_rules(KERNEL, 450.0, true);
        let sol = asap_schedule(&cat, &paths, &lib).unwrap();
        check_solution(&cat, &paths, &sol).unwrap();
        assert_eq!(sol.makespan, 3, "chain register forces a later multiplier start");
        assert!(sol.selected.len() >= 3);
    }

    #[test]
    fn reports_uncoverable_class() {
        // 64-bit multiply exceeds every multiplier condition in the
        // bundled library (LUT ≤32, DSP ≤30×18)
        let (cat, paths, lib) = setup_rules(
            "a = input i48\nb = input i48\nm = mul i64 a b\nreturn m\n",
            200.0,
            false,
        );
        match asap_schedule(&cat, &paths, &lib) {
            Err(ScheduleError::Unschedulable { .. }) => {}
            other => panic!("expected Unschedulable, got {other:?}"),
        }
    }

    #[test]
    fn wide_dag_schedules_and_checks() {
        let src = "\
x0 = input i12
x1 = input i12
x2 = input i12
x3 = input i12
s0 = add i13 x0 x1
s1 = add i13 x2 x3
d0 = sub i14 s0 s1
p0 = mul i26 s0 s1
q0 = xor i14 d0 d0
r0 = add i27 p0 q0
return r0
";
        let (cat, paths, lib) = setup_rules(src, 200.0, false);
        let sol = asap_schedule(&cat, &paths, &lib).unwrap();
        check_solution(&cat, &paths, &sol).unwrap();
        assert!(sol.makespan >= 1, "a multiply at 200 MHz cannot be free");
    }
}
