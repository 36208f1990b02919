//! Cycle-accurate interpreter for generated netlists.
//!
//! The simulator executes the same `Netlist` structure the Verilog is
//! rendered from, so a mismatch between simulated behavior and program
//! semantics indicates a real scheduling or wiring bug rather than a
//! printing bug. Each cell is interpreted through its library matcher
//! pattern: operands are read from the cell's port wires, the pattern is
//! evaluated exactly (i128 for integers, f32 for floats) and the result
//! is truncated to the cell's class width after a pipeline delay equal to
//! the cell's latency. This mirrors what the hardware does — a fused DSP
//! block computes its whole expression at full internal precision and
//! truncates once at the output port.
//!
//! Consequence worth knowing: for multi-operation cells the interpreter
//! (like the hardware) does not truncate at interior nodes, so programs
//! whose intermediate widths deliberately overflow can diverge from
//! `eval_program`, which truncates at every declared width. Kernels with
//! lossless intermediate widths — the normal case for datapath synthesis,
//! and the only case the rewrite engine treats as sound — agree exactly.
//!
//! Register model: values start as X (`None`) and become defined once
//! real data reaches them, so reading an output before the pipeline has
//! filled yields `None` rather than a fabricated zero.

use crate::codegen::{NetCell, NetRef, Netlist};
use crate::egraph::ClassId;
use crate::ir::{normalize, DataType, Op, Scalar, TypeKind};
use crate::pattern::Pattern;
use crate::timing::NodeId;
use std::collections::{BTreeMap, VecDeque};

/// One module's registers and pipelines.
pub struct NetlistSim<'a> {
    nl: &'a Netlist,
    input_regs: BTreeMap<ClassId, Option<Scalar>>,
    /// chain stage (class, k) for k ≥ 1
    chains: BTreeMap<(ClassId, u32), Option<Scalar>>,
    /// per sequential cell: values in flight, back() is the visible output
    pipes: BTreeMap<NodeId, VecDeque<Option<Scalar>>>,
    out_regs: Vec<Option<Scalar>>,
    const_vals: BTreeMap<ClassId, Scalar>,
    /// combinational cells ordered so producers evaluate first
    comb_order: Vec<usize>,
    cell_of_class: BTreeMap<ClassId, usize>,
}

fn decode_const(raw: u64, dtype: DataType) -> Scalar {
    match dtype.kind {
        TypeKind::Float => Scalar::Float(f32::from_bits(raw as u32)),
        _ => Scalar::Int(normalize(raw as i128, dtype)),
    }
}

impl<'a> NetlistSim<'a> {
    pub fn new(nl: &'a Netlist) -> Self {
        let mut cell_of_class = BTreeMap::new();
        for (i, c) in nl.cells.iter().enumerate() {
            cell_of_class.insert(c.class, i);
        }
        // topological order of the combinational cells: a comb cell that
        // reads another comb cell's output in the same cycle must settle
        // after it. Sequential outputs and registers are state, so they
        // impose no ordering.
        let n = nl.cells.len();
        let mut order: Vec<usize> = Vec::new();
        let mut mark = vec![0u8; n]; // 0 unvisited, 1 visiting, 2 done
        fn visit(
            nl: &Netlist,
            cell_of_class: &BTreeMap<ClassId, usize>,
            mark: &mut [u8],
            order: &mut Vec<usize>,
            i: usize,
        ) {
            if mark[i] == 2 {
                return;
            }
            assert_ne!(mark[i], 1, "combinational cycle in realized netlist");
            mark[i] = 1;
            for &(_, r) in &nl.cells[i].ports {
                if let NetRef::CellOut(c) = r {
                    if let Some(&j) = cell_of_class.get(&c) {
                        if nl.cells[j].profile.is_combinational() {
                            visit(nl, cell_of_class, mark, order, j);
                        }
                    }
                }
            }
            mark[i] = 2;
            order.push(i);
        }
        for i in 0..n {
            if nl.cells[i].profile.is_combinational() {
                visit(nl, &cell_of_class, &mut mark, &mut order, i);
            }
        }

        let input_regs = nl.inputs.iter().map(|i| (i.class, None)).collect();
        let mut chains = BTreeMap::new();
        for ch in &nl.chains {
            for k in 1..=ch.depth {
                chains.insert((ch.class, k), None);
            }
        }
        let pipes = nl
            .cells
            .iter()
            .filter(|c| !c.profile.is_combinational())
            .map(|c| {
                (
                    c.node,
                    std::iter::repeat(None).take(c.profile.latency as usize).collect(),
                )
            })
            .collect();
        let const_vals = nl
            .consts
            .iter()
            .map(|c| (c.class, decode_const(c.raw, c.dtype)))
            .collect();
        NetlistSim {
            nl,
            input_regs,
            chains,
            pipes,
            out_regs: vec![None; nl.outputs.len()],
            const_vals,
            comb_order: order,
            cell_of_class,
        }
    }

    fn read(&self, wires: &BTreeMap<ClassId, Option<Scalar>>, r: NetRef) -> Option<Scalar> {
        match r {
            NetRef::InputReg(c) => self.input_regs.get(&c).copied().flatten(),
            NetRef::Chain(c, k) => self.chains.get(&(c, k)).copied().flatten(),
            NetRef::CellOut(c) => wires.get(&c).copied().flatten(),
            NetRef::Const(c) => self.const_vals.get(&c).copied(),
        }
    }

    /// Settle every class wire for the current cycle window.
    fn settle(&self) -> BTreeMap<ClassId, Option<Scalar>> {
        let mut wires: BTreeMap<ClassId, Option<Scalar>> = BTreeMap::new();
        for cell in &self.nl.cells {
            if !cell.profile.is_combinational() {
                wires.insert(cell.class, self.pipes[&cell.node].back().copied().flatten());
            }
        }
        for &i in &self.comb_order {
            let cell = &self.nl.cells[i];
            let v = self.eval_cell(cell, &wires);
            wires.insert(cell.class, v);
        }
        wires
    }

    fn eval_cell(
        &self,
        cell: &NetCell,
        wires: &BTreeMap<ClassId, Option<Scalar>>,
    ) -> Option<Scalar> {
        let mut env: BTreeMap<&str, Scalar> = BTreeMap::new();
        for (port, r) in &cell.ports {
            env.insert(port.as_str(), self.read(wires, *r)?);
        }
        let v = eval_pattern(&cell.pattern, &env);
        Some(match (v, cell.dtype.is_int()) {
            (Scalar::Int(x), true) => Scalar::Int(normalize(x, cell.dtype)),
            (s @ Scalar::Float(_), false) => s,
            (Scalar::Int(_), false) | (Scalar::Float(_), true) => {
                unreachable!("matcher result kind disagrees with class dtype")
            }
        })
    }

    /// Apply one clock edge. `ext` carries the values present on the input
    /// ports when the edge fires, keyed by *source program* input name.
    /// Returns the output ports as visible after the edge, in port order.
    pub fn step(&mut self, ext: &BTreeMap<String, Scalar>) -> Vec<Option<Scalar>> {
        let wires = self.settle();

        // everything below commits simultaneously, from pre-edge state
        let mut new_pipes: Vec<(NodeId, Option<Scalar>)> = Vec::new();
        for cell in &self.nl.cells {
            if !cell.profile.is_combinational() {
                new_pipes.push((cell.node, self.eval_cell(cell, &wires)));
            }
        }
        let mut new_chain1: Vec<(ClassId, Option<Scalar>)> = Vec::new();
        for ch in &self.nl.chains {
            new_chain1.push((ch.class, self.read(&wires, ch.base)));
        }
        for (i, o) in self.nl.outputs.iter().enumerate() {
            if o.registered {
                self.out_regs[i] = wires.get(&o.class).copied().flatten();
            }
        }

        for (node, v) in new_pipes {
            let pipe = self.pipes.get_mut(&node).unwrap();
            pipe.push_front(v);
            pipe.pop_back();
        }
        for ch in self.nl.chains.iter().rev() {
            for k in (2..=ch.depth).rev() {
                let prev = self.chains[&(ch.class, k - 1)];
                self.chains.insert((ch.class, k), prev);
            }
        }
        for (c, v) in new_chain1 {
            self.chains.insert((c, 1), v);
        }
        for inp in &self.nl.inputs {
            let v = ext.get(&inp.source_name).map(|&s| match s {
                Scalar::Int(x) => Scalar::Int(normalize(x, inp.dtype)),
                f @ Scalar::Float(_) => f,
            });
            self.input_regs.insert(inp.class, v);
        }

        // post-edge output view: registered ports read their capture
        // register; the rest are state already (sequential cell output,
        // input register, or constant)
        self.nl
            .outputs
            .iter()
            .enumerate()
            .map(|(i, o)| {
                if o.registered {
                    self.out_regs[i]
                } else if let Some(v) = self.const_vals.get(&o.class) {
                    Some(*v)
                } else if self.input_regs.contains_key(&o.class) {
                    self.input_regs[&o.class]
                } else {
                    let ci = self.cell_of_class[&o.class];
                    let cell = &self.nl.cells[ci];
                    debug_assert!(!cell.profile.is_combinational());
                    self.pipes[&cell.node].back().copied().flatten()
                }
            })
            .collect()
    }
}

/// Exact evaluation of a matcher pattern: integer nodes compute in i128
/// without interior truncation, float nodes in f32. The caller truncates
/// the final integer result to the class width.
fn eval_pattern(p: &Pattern, env: &BTreeMap<&str, Scalar>) -> Scalar {
    match p {
        Pattern::Var(v) => env[v.as_str()],
        Pattern::Node { op, args } => {
            let vals: Vec<Scalar> = args.iter().map(|a| eval_pattern(a, env)).collect();
            apply_exact(*op, &vals)
        }
    }
}

fn apply_exact(op: Op, args: &[Scalar]) -> Scalar {
    let float = args.iter().any(|a| matches!(a, Scalar::Float(_)))
        || matches!(op, Op::Exp | Op::Log | Op::Sqrt | Op::Recip);
    if float {
        let f = |i: usize| args[i].as_float();
        return match op {
            Op::Add => Scalar::Float(f(0) + f(1)),
            Op::Sub => Scalar::Float(f(0) - f(1)),
            Op::Neg => Scalar::Float(-f(0)),
            Op::Mul => Scalar::Float(f(0) * f(1)),
            Op::Div => Scalar::Float(f(0) / f(1)),
            Op::Exp => Scalar::Float(f(0).exp()),
            Op::Log => Scalar::Float(f(0).ln()),
            Op::Sqrt => Scalar::Float(f(0).sqrt()),
            Op::Recip => Scalar::Float(1.0 / f(0)),
            Op::Cmp => Scalar::Int((f(0) < f(1)) as i128),
            other => panic!("{} is not a float operator", other.name()),
        };
    }
    let a = |i: usize| args[i].as_int();
    Scalar::Int(match op {
        Op::Add => a(0) + a(1),
        Op::Sub => a(0) - a(1),
        Op::Neg => -a(0),
        Op::Mul => a(0) * a(1),
        Op::Div => {
            if a(1) == 0 {
                0
            } else {
                a(0) / a(1)
            }
        }
        Op::Shl => {
            let amt = a(1).clamp(0, 127) as u32;
            a(0).checked_shl(amt).unwrap_or(0)
        }
        Op::Shr => {
            let amt = a(1).clamp(0, 127) as u32;
            a(0) >> amt
        }
        Op::And => a(0) & a(1),
        Op::Or => a(0) | a(1),
        Op::Xor => a(0) ^ a(1),
        Op::Cmp => (a(0) < a(1)) as i128,
        other => panic!("{} is not an integer operator", other.name()),
    })
}

/// Hold one input vector on the ports until the pipeline fills, then read
/// every output. Step 1 registers the inputs; `latency` further steps move
/// the values through the pipeline.
pub fn run_vector(nl: &Netlist, inputs: &BTreeMap<String, Scalar>) -> Vec<Option<Scalar>> {
    let mut sim = NetlistSim::new(nl);
    let mut view = sim.step(inputs);
    for _ in 0..nl.latency {
        view = sim.step(inputs);
    }
    view
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asap::asap_schedule;
    use crate::codegen::build_netlist;
    use crate::egraph::egraph_from_program;
    use crate::exact::{solve_exact, ExactOptions, ExactOutcome};
    use crate::ir::{eval_program, parse_program, Program};
    use crate::library::{enumerate_impl_rules, ImplLibrary};
    use crate::rules::{saturate, RewriteRule, SaturationLimits};
    use crate::timing::{build_catalog, enumerate_top_k_paths, mhz_to_ns};

    const KERNEL: &str = "a = input i16\nb = input i16\nc = input i16\nt0 = add i17 a b\nt1 = neg i18 t0\nt2 = mul i32 t1 c\nreturn t2\n";

    fn build(src: &str, mhz: f64, per_op: bool, exact: bool) -> (Program, Netlist) {
        let p = parse_program(src).unwrap();
        let mut g = egraph_from_program(&p);
        let l = ImplLibrary::sample();
        let mut rules: Vec<RewriteRule> = if per_op { Vec::new() } else { l.algebraic() };
        rules.extend(
            enumerate_impl_rules(&l)
                .into_iter()
                .filter(|r| !per_op || r.lhs.op_count() == 1),
        );
        saturate(&mut g, &rules, &SaturationLimits::default());
        let cat = build_catalog(&g, &l, mhz_to_ns(mhz)).unwrap();
        let paths = enumerate_top_k_paths(&cat, 3, 20, false);
        let sol = if exact {
            match solve_exact(&cat, &paths, &ExactOptions::default()).outcome {
                ExactOutcome::Optimal(s) => s,
                other => panic!("expected optimal, got {other:?}"),
            }
        } else {
            asap_schedule(&cat, &paths, &l).unwrap()
        };
        let nl = build_netlist(&p, &g, &cat, &l, &sol, "dut").unwrap();
        (p, nl)
    }

    fn expected(p: &Program, inputs: &BTreeMap<String, Scalar>) -> Vec<Scalar> {
        let vals = eval_program(p, inputs);
        p.outputs.iter().map(|&vid| vals[vid]).collect()
    }

    fn iv(pairs: &[(&str, i128)]) -> BTreeMap<String, Scalar> {
        pairs.iter().map(|&(n, v)| (n.to_string(), Scalar::Int(v))).collect()
    }

    #[test]
    fn fused_kernel_matches_program_eval() {
        let (p, nl) = build(KERNEL, 450.0, false, true);
        for &(a, b, c) in &[(3, 5, -7), (-32768, 32767, 1), (0, 0, 0), (1234, -4321, 99)] {
            let inp = iv(&[("a", a), ("b", b), ("c", c)]);
            let got = run_vector(&nl, &inp);
            assert_eq!(got[0], Some(expected(&p, &inp)[0]), "a={a} b={b} c={c}");
        }
    }

    #[test]
    fn per_op_netlist_matches_program_eval() {
        let (p, nl) = build(KERNEL, 450.0, true, false);
        assert!(nl.chains.iter().map(|c| c.depth).sum::<u32>() >= 1);
        for &(a, b, c) in &[(100, 200, 300), (-1, -1, -1), (32767, 32767, -32768)] {
            let inp = iv(&[("a", a), ("b", b), ("c", c)]);
            let got = run_vector(&nl, &inp);
            assert_eq!(got[0], Some(expected(&p, &inp)[0]), "a={a} b={b} c={c}");
        }
    }

    #[test]
    fn outputs_stay_undefined_until_pipeline_fills() {
        let (_, nl) = build(KERNEL, 450.0, false, true);
        let inp = iv(&[("a", 1), ("b", 2), ("c", 3)]);
        let mut sim = NetlistSim::new(&nl);
        for step in 1..=nl.latency {
            let view = sim.step(&inp);
            assert_eq!(view[0], None, "output defined too early at step {step}");
        }
        let view = sim.step(&inp);
        assert!(view[0].is_some(), "output still undefined after the pipeline filled");
    }

    #[test]
    fn streaming_accepts_a_vector_every_cycle() {
        let (p, nl) = build(KERNEL, 450.0, true, false);
        let vectors: Vec<BTreeMap<String, Scalar>> = (0..8)
            .map(|k| iv(&[("a", 10 + k), ("b", -3 * k), ("c", 7 - k)]))
            .collect();
        let mut sim = NetlistSim::new(&nl);
        let lat = nl.latency as usize;
        let mut views: Vec<Option<Scalar>> = Vec::new();
        for v in &vectors {
            views.push(sim.step(v)[0]);
        }
        for _ in 0..lat {
            views.push(sim.step(&vectors[vectors.len() - 1])[0]);
        }
        for (j, v) in vectors.iter().enumerate() {
            let at = j + lat; // vector j enters at step j+1, emerges after step j+1+lat
            assert_eq!(views[at], Some(expected(&p, v)[0]), "vector {j}");
        }
    }

    #[test]
    fn float_negation_is_bit_exact() {
        let src = "x = input f32\ny = neg f32 x\nreturn y\n";
        let (p, nl) = build(src, 200.0, false, false);
        for &x in &[1.5f32, -0.0, f32::MIN_POSITIVE, 3.4e38] {
            let inp: BTreeMap<String, Scalar> =
                [("x".to_string(), Scalar::Float(x))].into_iter().collect();
            let got = run_vector(&nl, &inp);
            let want = expected(&p, &inp)[0];
            match (got[0].unwrap(), want) {
                (Scalar::Float(g), Scalar::Float(w)) => {
                    assert_eq!(g.to_bits(), w.to_bits(), "x={x}")
                }
                other => panic!("expected floats, got {other:?}"),
            }
        }
    }

    #[test]
    fn integer_division_follows_ir_semantics() {
        let src = "a = input i16\nb = input i16\nq = div i16 a b\nreturn q\n";
        let (p, nl) = build(src, 200.0, false, false);
        for &(a, b) in &[(100, 7), (-100, 7), (100, -7), (5, 0), (-32768, -1)] {
            let inp = iv(&[("a", a), ("b", b)]);
            let got = run_vector(&nl, &inp);
            assert_eq!(got[0], Some(expected(&p, &inp)[0]), "a={a} b={b}");
        }
    }

    #[test]
    fn constant_operands_settle_immediately() {
        let src = "a = input i32\nk = const i32 3\ns = shl i32 a k\nreturn s\n";
        let (p, nl) = build(src, 200.0, false, false);
        for &a in &[1, -1, 0x0fff_ffff, i64::from(i32::MIN) as i128] {
            let inp = iv(&[("a", a)]);
            let got = run_vector(&nl, &inp);
            assert_eq!(got[0], Some(expected(&p, &inp)[0]), "a={a}");
        }
    }
}
