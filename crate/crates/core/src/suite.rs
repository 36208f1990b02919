//! Random kernel generation for stress tests and scaling studies.
//!
//! The generator emits textual IR with the statistical shape of real
//! datapath kernels: a pool of narrow signed inputs, operators drawn from
//! a weighted menu, operands biased toward recent values so the graph
//! grows deep rather than wide, and a tunable probability of reconverging
//! on a value that already has a consumer. Widths follow the lossless
//! growth discipline (add/sub/neg gain a bit, mul sums its operand
//! widths), which keeps every interior value exactly representable — the
//! precondition for fused multi-operation cells to be behavior-preserving
//! — and keeps every operand inside the port-width conditions of the
//! sample library. Shift amounts are small constants: a data-dependent
//! shift count would make result width a runtime property, which no
//! fixed-width datapath can honor losslessly.
//!
//! Everything is seeded, so a failing case can be reproduced from its
//! (seed, size) pair alone.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct GenSpec {
    /// number of operator values (inputs and constants not counted)
    pub ops: usize,
    pub float: bool,
    pub seed: u64,
    /// minimum number of inputs; 0 picks max(2, ops/4)
    pub inputs: usize,
    /// probability that an operand reuses a value that already has a consumer
    pub reconvergence: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec { ops: 20, float: false, seed: 0, inputs: 0, reconvergence: 0.10 }
    }
}

#[derive(Clone, Copy)]
struct Val {
    width: u32,
    uses: u32,
    /// Some(amount) marks a constant minted as a shift count; those never
    /// join the general operand pool (their stored width would mislead
    /// the lossless-width bookkeeping of arithmetic consumers)
    shift_amt: Option<u32>,
}

struct Gen {
    rng: ChaCha8Rng,
    text: String,
    vals: Vec<Val>,
    names: Vec<String>,
    n_consts: usize,
    reconv: f64,
}

impl Gen {
    fn pick<F: Fn(u32) -> bool>(&mut self, pred: F) -> Option<usize> {
        let cand: Vec<usize> = (0..self.vals.len())
            .filter(|&i| self.vals[i].shift_amt.is_none() && pred(self.vals[i].width))
            .collect();
        if cand.is_empty() {
            return None;
        }
        let reuse = self.rng.gen_bool(self.reconv);
        if !reuse {
            let fresh: Vec<usize> = cand.iter().copied().filter(|&i| self.vals[i].uses == 0).collect();
            if !fresh.is_empty() {
                // bias toward recent values so the graph grows deep
                let tail = fresh.len().saturating_sub(6);
                let slice = &fresh[tail..];
                return Some(slice[self.rng.gen_range(0..slice.len())]);
            }
        }
        Some(cand[self.rng.gen_range(0..cand.len())])
    }

    fn push(&mut self, name: String, width: u32) -> usize {
        self.vals.push(Val { width, uses: 0, shift_amt: None });
        self.names.push(name);
        self.vals.len() - 1
    }

    fn use_val(&mut self, i: usize) -> &str {
        self.vals[i].uses += 1;
        &self.names[i]
    }

    fn shift_amount(&mut self) -> usize {
        let amt = self.rng.gen_range(1..=4u32);
        let name = format!("k{}", self.n_consts);
        self.n_consts += 1;
        let _ = writeln!(self.text, "{name} = const i8 {amt}");
        let i = self.push(name, 8);
        self.vals[i].shift_amt = Some(amt);
        i
    }
}

/// Generate one kernel as IR text. Deterministic in the spec.
pub fn generate_kernel(spec: &GenSpec) -> String {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        text: String::new(),
        vals: Vec::new(),
        names: Vec::new(),
        n_consts: 0,
        reconv: spec.reconvergence.clamp(0.0, 1.0),
    };
    let n_inputs = if spec.inputs > 0 { spec.inputs } else { (spec.ops / 4).max(2) };
    for i in 0..n_inputs {
        let name = format!("x{i}");
        if spec.float {
            let _ = writeln!(g.text, "{name} = input f32");
            g.push(name, 32);
        } else {
            let w = g.rng.gen_range(8..=12);
            let _ = writeln!(g.text, "{name} = input i{w}");
            g.push(name, w);
        }
    }
    if spec.float {
        gen_float_ops(&mut g, spec.ops);
    } else {
        gen_int_ops(&mut g, spec.ops);
    }
    let sinks: Vec<&str> = (0..g.vals.len())
        .filter(|&i| g.vals[i].uses == 0)
        .map(|i| g.names[i].as_str())
        .collect();
    let _ = writeln!(g.text, "return {}", sinks.join(" "));
    g.text
}

fn gen_int_ops(g: &mut Gen, ops: usize) {
    // weighted menu; multiplication is over-represented because it is the
    // interesting case for fused implementations
    const MENU: &[(&str, u32)] = &[
        ("add", 4),
        ("sub", 2),
        ("mul", 4),
        ("neg", 2),
        ("div", 1),
        ("and", 1),
        ("or", 1),
        ("xor", 1),
        ("shl", 1),
        ("shr", 1),
    ];
    let total: u32 = MENU.iter().map(|&(_, w)| w).sum();
    for v in 0..ops {
        let mut roll = g.rng.gen_range(0..total);
        let mut op = MENU[0].0;
        for &(name, w) in MENU {
            if roll < w {
                op = name;
                break;
            }
            roll -= w;
        }
        // each arm falls back to `add` when no operand fits its predicate;
        // inputs are always narrow enough for add, so emission never fails
        let name = format!("v{v}");
        if emit_int_op(g, &name, op).is_none() {
            emit_int_op(g, &name, "add").expect("add always has operands");
        }
    }
}

fn line(g: &mut Gen, name: &str, op: &str, w: u32, a: usize, b: Option<usize>) {
    let an = g.use_val(a).to_string();
    let rest = match b {
        Some(b) => format!("{an} {}", g.use_val(b)),
        None => an,
    };
    let _ = writeln!(g.text, "{name} = {op} i{w} {rest}");
    g.push(name.to_string(), w);
}

fn emit_int_op(g: &mut Gen, name: &str, op: &str) -> Option<()> {
    match op {
        "add" | "sub" => {
            let a = g.pick(|w| w <= 47)?;
            let b = g.pick(|w| w <= 47)?;
            let w = g.vals[a].width.max(g.vals[b].width) + 1;
            line(g, name, op, w, a, Some(b));
        }
        "neg" => {
            let a = g.pick(|w| w <= 47)?;
            let w = g.vals[a].width + 1;
            line(g, name, op, w, a, None);
        }
        "mul" => {
            let a = g.pick(|w| w <= 30)?;
            let cap = if g.vals[a].width <= 18 { 30 } else { 18 };
            let b = g.pick(|w| w <= cap)?;
            let w = g.vals[a].width + g.vals[b].width;
            line(g, name, op, w, a, Some(b));
        }
        "div" | "and" | "or" | "xor" => {
            let a = g.pick(|w| w <= 48)?;
            let b = g.pick(|w| w <= 48)?;
            let w = g.vals[a].width.max(g.vals[b].width);
            line(g, name, op, w, a, Some(b));
        }
        "shl" | "shr" => {
            // shifts keep the operand width (the IR's shl truncates)
            let a = g.pick(|w| w <= 48)?;
            let k = g.shift_amount();
            let w = g.vals[a].width;
            line(g, name, op, w, a, Some(k));
        }
        other => panic!("unknown integer op {other}"),
    }
    Some(())
}

fn gen_float_ops(g: &mut Gen, ops: usize) {
    const MENU: &[(&str, u32, bool)] = &[
        ("add", 4, true),
        ("sub", 2, true),
        ("mul", 4, true),
        ("div", 1, true),
        ("neg", 1, false),
        ("exp", 1, false),
        ("log", 1, false),
        ("sqrt", 1, false),
        ("recip", 1, false),
    ];
    let total: u32 = MENU.iter().map(|&(_, w, _)| w).sum();
    for v in 0..ops {
        let mut roll = g.rng.gen_range(0..total);
        let mut pick = MENU[0];
        for &entry in MENU {
            if roll < entry.1 {
                pick = entry;
                break;
            }
            roll -= entry.1;
        }
        let (op, _, binary) = pick;
        let a = g.pick(|_| true).expect("float pool is never empty");
        let an = g.use_val(a).to_string();
        let name = format!("v{v}");
        if binary {
            let b = g.pick(|_| true).unwrap();
            let bn = g.use_val(b).to_string();
            let _ = writeln!(g.text, "{name} = {op} f32 {an} {bn}");
        } else {
            let _ = writeln!(g.text, "{name} = {op} f32 {an}");
        }
        g.push(name, 32);
    }
}
