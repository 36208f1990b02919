//! Textual SSA expression IR: parsing, type checking, printing, evaluation.
//!
//! Programs are line-oriented UTF-8:
//!
//! ```text
//! # comment
//! a  = input i16
//! k  = const i16 -3
//! t0 = add i17 a b
//! return t0
//! ```
//!
//! Each value is defined once, operands must be defined on earlier lines
//! (SSA order, so programs are DAGs by construction), and exactly one
//! `return` names the outputs. Widths are declared per value and checked
//! against the operator's natural result width (add/sub: max+1, mul: sum,
//! everything else preserves width, all capped at 64); declaring *less*
//! is allowed and means truncation, declaring more is rejected. `cmp` may
//! declare any integer result width up to its natural width (flags are
//! typically `u1`); on float operands it may declare up to 32 bits.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TypeKind {
    Signed,
    Unsigned,
    Float,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DataType {
    pub kind: TypeKind,
    pub bits: u32,
}

impl DataType {
    pub fn signed(bits: u32) -> Self {
        DataType { kind: TypeKind::Signed, bits }
    }
    pub fn unsigned(bits: u32) -> Self {
        DataType { kind: TypeKind::Unsigned, bits }
    }
    pub fn float32() -> Self {
        DataType { kind: TypeKind::Float, bits: 32 }
    }
    pub fn is_int(&self) -> bool {
        !matches!(self.kind, TypeKind::Float)
    }

    pub fn parse(tok: &str) -> Option<DataType> {
        if tok == "f32" {
            return Some(DataType::float32());
        }
        let (kind, rest) = match tok.split_at(1) {
            ("i", r) => (TypeKind::Signed, r),
            ("u", r) => (TypeKind::Unsigned, r),
            _ => return None,
        };
        let bits: u32 = rest.parse().ok()?;
        if (1..=64).contains(&bits) {
            Some(DataType { kind, bits })
        } else {
            None
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TypeKind::Signed => write!(f, "i{}", self.bits),
            TypeKind::Unsigned => write!(f, "u{}", self.bits),
            TypeKind::Float => write!(f, "f32"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Add,
    Sub,
    Neg,
    Mul,
    Div,
    Shl,
    Shr,
    And,
    Or,
    Xor,
    Cmp,
    Exp,
    Log,
    Sqrt,
    Recip,
    Const,
    Input,
}

impl Op {
    pub fn parse(tok: &str) -> Option<Op> {
        Some(match tok {
            "add" => Op::Add,
            "sub" => Op::Sub,
            "neg" => Op::Neg,
            "mul" => Op::Mul,
            "div" => Op::Div,
            "shl" => Op::Shl,
            "shr" => Op::Shr,
            "and" => Op::And,
            "or" => Op::Or,
            "xor" => Op::Xor,
            "cmp" => Op::Cmp,
            "exp" => Op::Exp,
            "log" => Op::Log,
            "sqrt" => Op::Sqrt,
            "recip" => Op::Recip,
            "const" => Op::Const,
            "input" => Op::Input,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Neg => "neg",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Shl => "shl",
            Op::Shr => "shr",
            Op::And => "and",
            Op::Or => "or",
            Op::Xor => "xor",
            Op::Cmp => "cmp",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Sqrt => "sqrt",
            Op::Recip => "recip",
            Op::Const => "const",
            Op::Input => "input",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Op::Input | Op::Const => 0,
            Op::Neg | Op::Exp | Op::Log | Op::Sqrt | Op::Recip => 1,
            _ => 2,
        }
    }

    /// Ops whose value semantics are plain mod-2^w ring arithmetic. These
    /// commute with truncation from wider widths, which is what makes the
    /// width-soundness guard on multi-node matchers work.
    pub fn is_ring(&self) -> bool {
        matches!(self, Op::Add | Op::Sub | Op::Mul | Op::Neg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Int(i64),
    Float(f32),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Float(v) => {
                if v.fract() == 0.0 && v.is_finite() {
                    write!(f, "{v:.1}")
                } else {
                    write!(f, "{v}")
                }
            }
        }
    }
}

pub type ValueId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Value {
    pub name: String,
    pub dtype: DataType,
    pub op: Op,
    pub args: Vec<ValueId>,
    pub literal: Option<Literal>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Program {
    pub values: Vec<Value>,
    pub outputs: Vec<ValueId>,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}: arity mismatch: {op} takes {expects} operand(s), got {got}")]
    Arity { line: usize, op: String, expects: usize, got: usize },
    #[error("line {line}: undefined operand `{name}`")]
    Undefined { line: usize, name: String },
    #[error("line {line}: type mismatch: {msg}")]
    TypeMismatch { line: usize, msg: String },
    #[error("line {line}: duplicate definition of `{name}`")]
    Duplicate { line: usize, name: String },
}

/// Natural (maximum declarable) result width of `op` applied to operands of
/// the given types. add/sub/neg widen by one bit (negating the most negative
/// value overflows), mul widens to the sum, shifts preserve the shifted
/// operand, everything else preserves the widest operand. Capped at 64.
pub fn natural_result_bits(op: Op, operands: &[DataType]) -> u32 {
    let max = operands.iter().map(|d| d.bits).max().unwrap_or(64);
    let bits = match op {
        Op::Add | Op::Sub | Op::Neg => max + 1,
        Op::Mul => operands.iter().map(|d| d.bits).sum(),
        Op::Shl | Op::Shr => operands[0].bits,
        _ => max,
    };
    bits.min(64)
}

fn check_result_type(
    line: usize,
    op: Op,
    declared: DataType,
    operands: &[DataType],
) -> Result<(), ParseError> {
    let mismatch = |msg: String| Err(ParseError::TypeMismatch { line, msg });
    let all_int = operands.iter().all(|d| d.is_int());
    let all_float = operands.iter().all(|d| !d.is_int());
    if !all_int && !all_float {
        return mismatch(format!("{} mixes integer and float operands", op.name()));
    }
    match op {
        Op::Input | Op::Const => return Ok(()),
        Op::Shl | Op::Shr | Op::And | Op::Or | Op::Xor => {
            if !all_int {
                return mismatch(format!("{} requires integer operands", op.name()));
            }
            if !declared.is_int() {
                return mismatch(format!("{} produces an integer result", op.name()));
            }
        }
        Op::Exp | Op::Log | Op::Sqrt | Op::Recip => {
            if !all_float || declared != DataType::float32() {
                return mismatch(format!("{} is defined on f32 only", op.name()));
            }
            return Ok(());
        }
        Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Neg => {
            if all_float {
                if declared != DataType::float32() {
                    return mismatch(format!("float {} must declare f32", op.name()));
                }
                return Ok(());
            }
            if !declared.is_int() {
                return mismatch(format!("integer {} cannot declare a float result", op.name()));
            }
        }
        Op::Cmp => {
            if !declared.is_int() {
                return mismatch("cmp produces an integer flag".into());
            }
            let cap = if all_float { 32 } else { natural_result_bits(op, operands) };
            if declared.bits > cap {
                return mismatch(format!(
                    "cmp declares {} bits, wider than its natural {} bits",
                    declared.bits, cap
                ));
            }
            return Ok(());
        }
    }
    let natural = natural_result_bits(op, operands);
    if declared.bits > natural {
        return mismatch(format!(
            "{} declares {} bits, wider than its natural {} bits",
            op.name(),
            declared.bits,
            natural
        ));
    }
    Ok(())
}

/// Parse a textual IR program. Errors carry line (1-based) positions and are
/// categorized: syntax, arity, undefined operand, type mismatch, duplicate.
pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let mut prog = Program::default();
    let mut by_name: BTreeMap<String, ValueId> = BTreeMap::new();
    let mut saw_return = false;

    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        let text = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let syntax = |msg: &str, col: usize| ParseError::Syntax { line, col, msg: msg.into() };

        if toks[0] == "return" {
            if saw_return {
                return Err(syntax("multiple return statements", 1));
            }
            if toks.len() < 2 {
                return Err(syntax("return needs at least one value", 1));
            }
            for t in &toks[1..] {
                let id = *by_name
                    .get(*t)
                    .ok_or_else(|| ParseError::Undefined { line, name: t.to_string() })?;
                prog.outputs.push(id);
            }
            saw_return = true;
            continue;
        }
        if saw_return {
            return Err(syntax("definitions after return", 1));
        }

        // <id> = <op> <dtype> ...
        if toks.len() < 4 || toks[1] != "=" {
            return Err(syntax("expected `<id> = <op> <dtype> ...`", 1));
        }
        let name = toks[0];
        if !name.chars().next().map(|c| c.is_ascii_alphabetic() || c == '_').unwrap_or(false)
            || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            return Err(syntax(&format!("invalid identifier `{name}`"), 1));
        }
        if by_name.contains_key(name) {
            return Err(ParseError::Duplicate { line, name: name.to_string() });
        }
        let op = Op::parse(toks[2])
            .ok_or_else(|| syntax(&format!("unknown operator `{}`", toks[2]), 3))?;
        let dtype = DataType::parse(toks[3])
            .ok_or_else(|| syntax(&format!("invalid dtype `{}`", toks[3]), 4))?;

        let rest = &toks[4..];
        let mut args = Vec::new();
        let mut literal = None;
        match op {
            Op::Input => {
                if !rest.is_empty() {
                    return Err(ParseError::Arity {
                        line,
                        op: "input".into(),
                        expects: 0,
                        got: rest.len(),
                    });
                }
            }
            Op::Const => {
                if rest.len() != 1 {
                    return Err(ParseError::Arity {
                        line,
                        op: "const".into(),
                        expects: 1,
                        got: rest.len(),
                    });
                }
                literal = Some(parse_literal(rest[0], dtype).ok_or_else(|| {
                    ParseError::TypeMismatch {
                        line,
                        msg: format!("literal `{}` does not fit {}", rest[0], dtype),
                    }
                })?);
            }
            _ => {
                if rest.len() != op.arity() {
                    return Err(ParseError::Arity {
                        line,
                        op: op.name().into(),
                        expects: op.arity(),
                        got: rest.len(),
                    });
                }
                for t in rest {
                    let id = *by_name
                        .get(*t)
                        .ok_or_else(|| ParseError::Undefined { line, name: t.to_string() })?;
                    args.push(id);
                }
                let operand_types: Vec<DataType> =
                    args.iter().map(|&a| prog.values[a].dtype).collect();
                check_result_type(line, op, dtype, &operand_types)?;
            }
        }

        by_name.insert(name.to_string(), prog.values.len());
        prog.values.push(Value { name: name.to_string(), dtype, op, args, literal });
    }

    if !saw_return {
        return Err(ParseError::Syntax { line: src.lines().count(), col: 1, msg: "missing return".into() });
    }
    // Reachability sanity pass: with inputs and consts as sources, every
    // value must sit on a chain rooted in a source. SSA + arity make this
    // hold by construction; keep the literal check anyway.
    let mut reachable = vec![false; prog.values.len()];
    for (i, v) in prog.values.iter().enumerate() {
        reachable[i] = matches!(v.op, Op::Input | Op::Const)
            || v.args.iter().any(|&a| reachable[a]);
        if !reachable[i] {
            return Err(ParseError::TypeMismatch {
                line: 0,
                msg: format!("`{}` is not reachable from any input or const", v.name),
            });
        }
    }
    Ok(prog)
}

fn parse_literal(tok: &str, dtype: DataType) -> Option<Literal> {
    match dtype.kind {
        TypeKind::Float => tok.parse::<f32>().ok().map(Literal::Float),
        _ => {
            let v = if let Some(hex) = tok.strip_prefix("0x") {
                i64::from_str_radix(hex, 16).ok()?
            } else if let Some(hex) = tok.strip_prefix("-0x") {
                -i64::from_str_radix(hex, 16).ok()?
            } else {
                tok.parse::<i64>().ok()?
            };
            // the literal must round-trip through the declared width
            if normalize(v as i128, dtype) != v as i128 {
                return None;
            }
            Some(Literal::Int(v))
        }
    }
}

impl Program {
    pub fn value_named(&self, name: &str) -> Option<ValueId> {
        self.values.iter().position(|v| v.name == name)
    }

    pub fn inputs(&self) -> impl Iterator<Item = (ValueId, &Value)> {
        self.values.iter().enumerate().filter(|(_, v)| v.op == Op::Input)
    }

    pub fn op_count(&self) -> usize {
        self.values.iter().filter(|v| !matches!(v.op, Op::Input | Op::Const)).count()
    }

    /// Textual round-trip of the parsed form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.values {
            match v.op {
                Op::Input => out.push_str(&format!("{} = input {}\n", v.name, v.dtype)),
                Op::Const => out.push_str(&format!(
                    "{} = const {} {}\n",
                    v.name,
                    v.dtype,
                    v.literal.expect("const carries a literal")
                )),
                _ => {
                    let args: Vec<&str> =
                        v.args.iter().map(|&a| self.values[a].name.as_str()).collect();
                    out.push_str(&format!(
                        "{} = {} {} {}\n",
                        v.name,
                        v.op.name(),
                        v.dtype,
                        args.join(" ")
                    ));
                }
            }
        }
        let outs: Vec<&str> = self.outputs.iter().map(|&o| self.values[o].name.as_str()).collect();
        out.push_str(&format!("return {}\n", outs.join(" ")));
        out
    }
}

/// Graphviz dot rendering of the dataflow DAG, deterministic node order.
pub fn program_to_dot(prog: &Program) -> String {
    let mut s = String::from("digraph program {\n  rankdir=BT;\n");
    for (i, v) in prog.values.iter().enumerate() {
        let shape = match v.op {
            Op::Input => "invhouse",
            Op::Const => "box",
            _ => "ellipse",
        };
        s.push_str(&format!(
            "  v{} [label=\"{}: {} {}\", shape={}];\n",
            i,
            v.name,
            v.op.name(),
            v.dtype,
            shape
        ));
        for (pos, &a) in v.args.iter().enumerate() {
            s.push_str(&format!("  v{a} -> v{i} [label=\"{pos}\"];\n"));
        }
    }
    for &o in &prog.outputs {
        s.push_str(&format!("  v{o} -> out [style=dashed];\n"));
    }
    s.push_str("  out [label=\"return\", shape=doublecircle];\n}\n");
    s
}

// ---------------------------------------------------------------------------
// Reference evaluation. This is the semantics the netlist interpreter is
// compared against, so both share the same scalar primitives.

/// A runtime value: integers are kept normalized to their dtype (sign- or
/// zero-extended into i128), floats are f32.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    Int(i128),
    Float(f32),
}

impl Scalar {
    pub fn as_int(&self) -> i128 {
        match self {
            Scalar::Int(v) => *v,
            Scalar::Float(_) => panic!("float scalar where integer expected"),
        }
    }
    pub fn as_float(&self) -> f32 {
        match self {
            Scalar::Float(v) => *v,
            Scalar::Int(_) => panic!("integer scalar where float expected"),
        }
    }
}

/// Truncate `x` to `dtype.bits` and re-extend per the kind.
pub fn normalize(x: i128, dtype: DataType) -> i128 {
    debug_assert!(dtype.is_int());
    let bits = dtype.bits;
    if bits == 0 {
        return 0;
    }
    let masked = (x as u128) & (u128::MAX >> (128 - bits));
    match dtype.kind {
        TypeKind::Unsigned => masked as i128,
        TypeKind::Signed => {
            let sign = 1u128 << (bits - 1);
            if masked & sign != 0 {
                (masked as i128) - (1i128 << bits)
            } else {
                masked as i128
            }
        }
        TypeKind::Float => unreachable!(),
    }
}

/// Apply one operator to already-normalized operands, truncating the result
/// to `out`. Integer division by zero yields 0. Shift amounts are clamped to
/// [0, 127]; negative amounts shift by zero.
pub fn apply_op(op: Op, out: DataType, args: &[Scalar]) -> Scalar {
    if out.kind == TypeKind::Float || matches!(op, Op::Cmp if !args.is_empty() && matches!(args[0], Scalar::Float(_)))
    {
        // float evaluation (cmp on floats still lands here via the operand check)
        let f = |i: usize| args[i].as_float();
        let v = match op {
            Op::Add => f(0) + f(1),
            Op::Sub => f(0) - f(1),
            Op::Neg => -f(0),
            Op::Mul => f(0) * f(1),
            Op::Div => f(0) / f(1),
            Op::Exp => f(0).exp(),
            Op::Log => f(0).ln(),
            Op::Sqrt => f(0).sqrt(),
            Op::Recip => 1.0 / f(0),
            Op::Cmp => {
                return Scalar::Int(normalize((f(0) < f(1)) as i128, out));
            }
            _ => panic!("{} is not a float operator", op.name()),
        };
        return Scalar::Float(v);
    }
    let a = |i: usize| args[i].as_int();
    let wide = match op {
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
            // normalized operands are sign-correct in i128, so arithmetic
            // shift does the right thing for both kinds
            a(0) >> amt.min(127)
        }
        Op::And => a(0) & a(1),
        Op::Or => a(0) | a(1),
        Op::Xor => a(0) ^ a(1),
        Op::Cmp => (a(0) < a(1)) as i128,
        _ => panic!("{} is not an integer operator", op.name()),
    };
    Scalar::Int(normalize(wide, out))
}

/// Evaluate the whole program on one input vector (keyed by input name).
/// Returns every value, indexed by ValueId.
pub fn eval_program(prog: &Program, inputs: &BTreeMap<String, Scalar>) -> Vec<Scalar> {
    let mut vals: Vec<Scalar> = Vec::with_capacity(prog.values.len());
    for v in &prog.values {
        let s = match v.op {
            Op::Input => {
                let raw = *inputs
                    .get(&v.name)
                    .unwrap_or_else(|| panic!("missing input `{}`", v.name));
                match raw {
                    Scalar::Int(x) => Scalar::Int(normalize(x, v.dtype)),
                    Scalar::Float(x) => Scalar::Float(x),
                }
            }
            Op::Const => match v.literal.expect("const carries a literal") {
                Literal::Int(x) => Scalar::Int(normalize(x as i128, v.dtype)),
                Literal::Float(x) => Scalar::Float(x),
            },
            op => {
                let args: Vec<Scalar> = v.args.iter().map(|&a| vals[a]).collect();
                apply_op(op, v.dtype, &args)
            }
        };
        vals.push(s);
    }
    vals
}
