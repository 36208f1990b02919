//! Pipelined structural Verilog from a scheduled solution.
//!
//! The generator first builds a `Netlist`: a typed structural form with
//! input registers, constant wires, one cell per realized class, delay
//! chains that re-align values whose consumers start later than their
//! producers finish, and output ports (registered when the root cell is
//! combinational, so the final capture segment is a real register like
//! any other). The Verilog text is rendered from that structure by
//! substituting each cell's library template; the simulator and the
//! timing audit run on the same structure, so text, behavior, and timing
//! are three views of one object.
//!
//! Conventions: program inputs are registered unconditionally at the
//! module boundary (cycle 0); `rst` is synchronous, active-high, and
//! clears only the delay chains — data registers refill within the
//! pipeline depth anyway. A value scheduled to finish at cycle f is
//! stable during the clock window after edge f; a consumer starting at
//! cycle s > f reads it through s − f chain registers.

use crate::egraph::{ClassId, EGraph, ENodeOp};
use crate::ir::{DataType, Program};
use crate::library::{ImplLibrary, LibraryConstants, TimingProfile};
use crate::model::Solution;
use crate::pattern::Pattern;
use crate::timing::{ImplCatalog, NodeId, EPS};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

#[derive(Debug, thiserror::Error)]
pub enum CodegenError {
    #[error("class {class} is realized but has no selected implementation")]
    MissingSelection { class: ClassId },
    #[error("class {class} has {count} selected implementations; the netlist needs exactly one")]
    AmbiguousSelection { class: ClassId, count: usize },
    #[error("library template `{name}` does not exist")]
    MissingTemplate { name: String },
    #[error("template `{template}` references unknown {what} `{key}`")]
    BadPlaceholder { template: String, what: &'static str, key: String },
    #[error("root class {class} is not realized by the solution")]
    UnrealizedRoot { class: ClassId },
}

/// A wire in the netlist, identified structurally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NetRef {
    /// registered program input of this class (stage 0)
    InputReg(ClassId),
    /// class value delayed by `1..` chain stages
    Chain(ClassId, u32),
    /// output wire of the cell realizing this class (stage 0)
    CellOut(ClassId),
    /// constant wire (time-invariant, never chained)
    Const(ClassId),
}

#[derive(Debug, Clone)]
pub struct NetInput {
    /// Verilog port name (sanitized)
    pub port: String,
    /// name in the source program
    pub source_name: String,
    pub class: ClassId,
    pub dtype: DataType,
}

#[derive(Debug, Clone)]
pub struct NetOutput {
    pub port: String,
    pub class: ClassId,
    pub dtype: DataType,
    /// the generator added a capture register after a combinational root
    pub registered: bool,
    /// cycles from input registration until this port holds the result
    pub latency: u32,
}

#[derive(Debug, Clone)]
pub struct NetConst {
    pub class: ClassId,
    pub dtype: DataType,
    pub raw: u64,
}

#[derive(Debug, Clone)]
pub struct NetChain {
    pub class: ClassId,
    pub dtype: DataType,
    pub depth: u32,
    pub base: NetRef,
}

#[derive(Debug, Clone)]
pub struct NetCell {
    pub node: NodeId,
    pub class: ClassId,
    pub dtype: DataType,
    pub identifier: String,
    pub config: String,
    pub pattern: Pattern,
    pub profile: TimingProfile,
    pub resources: BTreeMap<String, u32>,
    pub params: BTreeMap<String, String>,
    pub start: u32,
    /// port name → wire, in matcher port order
    pub ports: Vec<(String, NetRef)>,
    /// rendered template text
    pub verilog: String,
    /// source value names realized by this cell (for comments)
    pub names: Vec<String>,
}

impl NetCell {
    pub fn finish(&self) -> u32 {
        self.start + self.profile.latency
    }
}

#[derive(Debug)]
pub struct Netlist {
    pub module_name: String,
    pub t_clk: f64,
    pub constants: LibraryConstants,
    pub makespan: u32,
    /// worst per-output latency
    pub latency: u32,
    pub inputs: Vec<NetInput>,
    pub outputs: Vec<NetOutput>,
    pub consts: Vec<NetConst>,
    pub cells: Vec<NetCell>,
    pub chains: Vec<NetChain>,
}

const VERILOG_KEYWORDS: &[&str] = &[
    "always", "and", "assign", "begin", "buf", "case", "default", "else", "end", "endcase",
    "endfunction", "endmodule", "for", "function", "if", "initial", "inout", "input", "integer",
    "localparam", "module", "nand", "negedge", "nor", "not", "or", "output", "parameter",
    "posedge", "real", "reg", "signed", "supply0", "supply1", "time", "wire", "xnor", "xor",
    "clk", "rst",
];

fn name_is_safe(name: &str) -> bool {
    if VERILOG_KEYWORDS.contains(&name) {
        return false;
    }
    // avoid the generator's own namespaces: n<digits>, u<digits>,
    // out<digits>, and the _q / _d<k> register suffixes
    let gen_like = |prefix: &str| {
        name.strip_prefix(prefix)
            .map(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
            .unwrap_or(false)
    };
    if gen_like("n") || gen_like("u") || gen_like("out") {
        return false;
    }
    if name.ends_with("_q") {
        return false;
    }
    if let Some(pos) = name.rfind("_d") {
        if name[pos + 2..].bytes().all(|b| b.is_ascii_digit()) && pos + 2 < name.len() {
            return false;
        }
    }
    true
}

fn width_decl(dtype: DataType) -> String {
    let signed = if dtype.is_int() && dtype.kind == crate::ir::TypeKind::Signed {
        "signed "
    } else {
        ""
    };
    if dtype.bits == 1 {
        signed.trim_end().to_string()
    } else {
        format!("{signed}[{}:0]", dtype.bits - 1)
    }
}

fn decl(kind: &str, dtype: DataType, name: &str) -> String {
    let w = width_decl(dtype);
    if w.is_empty() {
        format!("{kind} {name}")
    } else {
        format!("{kind} {w} {name}")
    }
}

/// Build the structural netlist for a scheduled solution.
pub fn build_netlist(
    prog: &Program,
    g: &EGraph,
    cat: &ImplCatalog,
    lib: &ImplLibrary,
    sol: &Solution,
    module_name: &str,
) -> Result<Netlist, CodegenError> {
    // program metadata: input names/classes in source order, value names
    let mut input_name_of: BTreeMap<ClassId, String> = BTreeMap::new();
    let mut names_of: BTreeMap<ClassId, Vec<String>> = BTreeMap::new();
    let mut inputs: Vec<NetInput> = Vec::new();
    for (vid, v) in prog.values.iter().enumerate() {
        let class = g.find(g.value_class[vid]);
        if v.op == crate::ir::Op::Input {
            let port = if name_is_safe(&v.name) {
                v.name.clone()
            } else {
                format!("p{}", inputs.len())
            };
            input_name_of.entry(class).or_insert_with(|| port.clone());
            inputs.push(NetInput {
                port,
                source_name: v.name.clone(),
                class,
                dtype: v.dtype,
            });
        } else if v.op != crate::ir::Op::Const {
            names_of.entry(class).or_default().push(v.name.clone());
        }
    }

    let class_dtype = |c: ClassId| g.class(c).dtype;

    let finish_of = |c: ClassId| -> u32 {
        if cat.is_source_class(c) {
            0
        } else {
            sol.class_finish.get(&c).copied().unwrap_or(0)
        }
    };

    // constants realized (or referenced) by the solution
    let mut const_raw: BTreeMap<ClassId, u64> = BTreeMap::new();
    for cls in g.classes() {
        for n in &cls.nodes {
            if let ENodeOp::Const(raw) = n.op {
                const_raw.entry(cls.id).or_insert(raw);
            }
        }
    }

    // one cell per realized non-source class
    let mut cells: Vec<NetCell> = Vec::new();
    let mut chain_depth: BTreeMap<ClassId, u32> = BTreeMap::new();
    let mut used_consts: BTreeSet<ClassId> = BTreeSet::new();

    let resolve = |a: ClassId, stage: u32, used: &mut BTreeSet<ClassId>| -> NetRef {
        if cat.const_classes.contains(&a) {
            used.insert(a);
            NetRef::Const(a)
        } else if stage == 0 {
            if cat.input_classes.contains(&a) {
                NetRef::InputReg(a)
            } else {
                NetRef::CellOut(a)
            }
        } else {
            NetRef::Chain(a, stage)
        }
    };

    for (&c, &f) in &sol.class_finish {
        if cat.is_source_class(c) {
            continue;
        }
        let sel = sol.selected_in(cat, c);
        let node_id = match sel.as_slice() {
            [one] => *one,
            [] => return Err(CodegenError::MissingSelection { class: c }),
            many => {
                return Err(CodegenError::AmbiguousSelection { class: c, count: many.len() })
            }
        };
        let node = cat.node(node_id);
        let start = sol.start.get(&node_id).copied().unwrap_or(0);
        debug_assert_eq!(f, start + node.latency());

        let mut ports: Vec<(String, NetRef)> = Vec::new();
        for (pos, &a) in node.args.iter().enumerate() {
            let stage = start - finish_of(a);
            let r = resolve(a, stage, &mut used_consts);
            if let NetRef::Chain(cc, k) = r {
                let d = chain_depth.entry(cc).or_insert(0);
                *d = (*d).max(k);
            }
            ports.push((node.ports[pos].clone(), r));
        }

        let entry = lib.entry(node.entry);
        let cfg = lib.config(node.entry, node.config);
        cells.push(NetCell {
            node: node_id,
            class: c,
            dtype: class_dtype(c),
            identifier: entry.identifier.clone(),
            config: cfg.config.clone(),
            pattern: entry.matcher.clone(),
            profile: cfg.profile.clone(),
            resources: cfg.resources.clone(),
            params: cfg.parameters.clone(),
            start,
            ports,
            verilog: String::new(), // rendered below, once wire names exist
            names: names_of.get(&c).cloned().unwrap_or_default(),
        });
    }
    cells.sort_by_key(|cell| (cell.start, cell.class));

    // outputs, in program order; a combinational root gets a capture register
    let mut outputs: Vec<NetOutput> = Vec::new();
    for (i, &r) in cat.roots.iter().enumerate() {
        let dtype = class_dtype(r);
        let f = finish_of(r);
        if !cat.is_source_class(r) && !sol.is_realized(r) {
            return Err(CodegenError::UnrealizedRoot { class: r });
        }
        let comb_cell = cells
            .iter()
            .find(|cell| cell.class == r)
            .map(|cell| cell.profile.is_combinational())
            .unwrap_or(false);
        if cat.const_classes.contains(&r) {
            used_consts.insert(r);
        }
        outputs.push(NetOutput {
            port: format!("out{i}"),
            class: r,
            dtype,
            registered: comb_cell,
            latency: f + u32::from(comb_cell),
        });
    }

    let consts: Vec<NetConst> = used_consts
        .iter()
        .map(|&c| NetConst { class: c, dtype: class_dtype(c), raw: const_raw[&c] })
        .collect();

    let chains: Vec<NetChain> = chain_depth
        .iter()
        .map(|(&c, &depth)| {
            let base = if cat.input_classes.contains(&c) {
                NetRef::InputReg(c)
            } else {
                NetRef::CellOut(c)
            };
            NetChain { class: c, dtype: class_dtype(c), depth, base }
        })
        .collect();

    let latency = outputs.iter().map(|o| o.latency).max().unwrap_or(0);
    let mut netlist = Netlist {
        module_name: module_name.to_string(),
        t_clk: cat.t_clk,
        constants: cat.constants,
        makespan: sol.makespan,
        latency,
        inputs,
        outputs,
        consts,
        cells,
        chains,
    };

    // render each cell's template now that every wire is nameable
    for i in 0..netlist.cells.len() {
        let cell = &netlist.cells[i];
        let cfg_template = {
            let node = cat.node(cell.node);
            lib.config(node.entry, node.config).template.clone()
        };
        let text = lib
            .templates
            .get(&cfg_template)
            .ok_or_else(|| CodegenError::MissingTemplate { name: cfg_template.clone() })?;
        let rendered = substitute_template(&netlist, i, &cfg_template, text)?;
        netlist.cells[i].verilog = rendered;
    }

    Ok(netlist)
}

fn wire_name(nl: &Netlist, r: NetRef) -> String {
    match r {
        NetRef::InputReg(c) => {
            let port = nl
                .inputs
                .iter()
                .find(|i| i.class == c)
                .map(|i| i.port.as_str())
                .unwrap_or("_");
            format!("{port}_q")
        }
        NetRef::Chain(c, k) => format!("n{c}_d{k}"),
        NetRef::CellOut(c) => format!("n{c}"),
        NetRef::Const(c) => format!("n{c}"),
    }
}

fn substitute_template(
    nl: &Netlist,
    cell_idx: usize,
    template_name: &str,
    text: &str,
) -> Result<String, CodegenError> {
    let cell = &nl.cells[cell_idx];
    let bad = |what: &'static str, key: &str| CodegenError::BadPlaceholder {
        template: template_name.to_string(),
        what,
        key: key.to_string(),
    };
    let mut out = String::with_capacity(text.len() + 64);
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'{' {
            out.push(bytes[i] as char);
            i += 1;
            continue;
        }
        let rest = &text[i..];
        let close = match rest.find('}') {
            Some(p) => p,
            None => {
                out.push('{');
                i += 1;
                continue;
            }
        };
        let inner = &rest[1..close];
        let replaced = if inner == "inst" {
            Some(format!("u{}", cell.node))
        } else if inner == "out" {
            Some(wire_name(nl, NetRef::CellOut(cell.class)))
        } else if inner == "width" {
            Some(cell.dtype.bits.to_string())
        } else if let Some(port) = inner.strip_prefix("port:") {
            let r = cell
                .ports
                .iter()
                .find(|(p, _)| p == port)
                .map(|&(_, r)| r)
                .ok_or_else(|| bad("port", port))?;
            Some(wire_name(nl, r))
        } else if let Some(key) = inner.strip_prefix("param:") {
            Some(cell.params.get(key).ok_or_else(|| bad("parameter", key))?.clone())
        } else {
            None // a literal Verilog brace (concatenations, replication)
        };
        match replaced {
            Some(s) => {
                out.push_str(&s);
                i += close + 1;
            }
            None => {
                out.push('{');
                i += 1;
            }
        }
    }
    Ok(out)
}

impl Netlist {
    /// Render the complete Verilog module.
    pub fn verilog(&self) -> String {
        let mut v = String::new();
        let mhz = 1000.0 / self.t_clk;
        let _ = writeln!(v, "// {}: pipelined datapath", self.module_name);
        let _ = writeln!(v, "// clock period {:.3} ns ({:.3} MHz)", self.t_clk, mhz);
        let _ = writeln!(
            v,
            "// latency {} cycle(s) from input registration; schedule makespan {}",
            self.latency, self.makespan
        );
        for o in &self.outputs {
            let _ = writeln!(
                v,
                "//   {} <= class n{} at cycle {}{}",
                o.port,
                o.class,
                o.latency,
                if o.registered { " (capture register added)" } else { "" }
            );
        }
        let _ = writeln!(v, "module {} (", self.module_name);
        let _ = writeln!(v, "  input wire clk,");
        let _ = writeln!(v, "  input wire rst,");
        for inp in &self.inputs {
            let _ = writeln!(v, "  {},", decl("input wire", inp.dtype, &inp.port));
        }
        for (i, o) in self.outputs.iter().enumerate() {
            let comma = if i + 1 == self.outputs.len() { "" } else { "," };
            let _ = writeln!(v, "  {}{}", decl("output wire", o.dtype, &o.port), comma);
        }
        let _ = writeln!(v, ");");
        let _ = writeln!(v);
        let _ = writeln!(v, "  localparam LATENCY = {};", self.latency);
        let _ = writeln!(v);

        if !self.inputs.is_empty() {
            let _ = writeln!(v, "  // input registers (cycle 0)");
            for inp in &self.inputs {
                let _ = writeln!(v, "  {};", decl("reg", inp.dtype, &format!("{}_q", inp.port)));
            }
            let _ = writeln!(v, "  always @(posedge clk) begin");
            for inp in &self.inputs {
                let _ = writeln!(v, "    {}_q <= {};", inp.port, inp.port);
            }
            let _ = writeln!(v, "  end");
            let _ = writeln!(v);
        }

        if !self.consts.is_empty() {
            let _ = writeln!(v, "  // constants");
            for c in &self.consts {
                let _ = writeln!(
                    v,
                    "  {} = {}'h{:x};",
                    decl("wire", c.dtype, &format!("n{}", c.class)),
                    c.dtype.bits,
                    c.raw
                );
            }
            let _ = writeln!(v);
        }

        for cell in &self.cells {
            let names = if cell.names.is_empty() {
                String::new()
            } else {
                format!(" [{}]", cell.names.join(", "))
            };
            let _ = writeln!(
                v,
                "  // n{}{}: {}/{} start {} finish {}",
                cell.class,
                names,
                cell.identifier,
                cell.config,
                cell.start,
                cell.finish()
            );
            let _ = writeln!(v, "  {};", decl("wire", cell.dtype, &format!("n{}", cell.class)));
            for line in cell.verilog.lines() {
                let _ = writeln!(v, "  {line}");
            }
            let _ = writeln!(v);
        }

        for ch in &self.chains {
            let _ = writeln!(v, "  // delay chain for n{} ({} stage(s))", ch.class, ch.depth);
            for k in 1..=ch.depth {
                let _ = writeln!(
                    v,
                    "  {};",
                    decl("reg", ch.dtype, &wire_name(self, NetRef::Chain(ch.class, k)))
                );
            }
            let _ = writeln!(v, "  always @(posedge clk) begin");
            let _ = writeln!(v, "    if (rst) begin");
            for k in 1..=ch.depth {
                let _ = writeln!(v, "      {} <= 0;", wire_name(self, NetRef::Chain(ch.class, k)));
            }
            let _ = writeln!(v, "    end else begin");
            let _ = writeln!(
                v,
                "      {} <= {};",
                wire_name(self, NetRef::Chain(ch.class, 1)),
                wire_name(self, ch.base)
            );
            for k in 2..=ch.depth {
                let _ = writeln!(
                    v,
                    "      {} <= {};",
                    wire_name(self, NetRef::Chain(ch.class, k)),
                    wire_name(self, NetRef::Chain(ch.class, k - 1))
                );
            }
            let _ = writeln!(v, "    end");
            let _ = writeln!(v, "  end");
            let _ = writeln!(v);
        }

        let _ = writeln!(v, "  // outputs");
        for o in &self.outputs {
            let base = if self.consts.iter().any(|c| c.class == o.class) {
                wire_name(self, NetRef::Const(o.class))
            } else if self.inputs.iter().any(|i| i.class == o.class) {
                wire_name(self, NetRef::InputReg(o.class))
            } else {
                wire_name(self, NetRef::CellOut(o.class))
            };
            if o.registered {
                let qn = format!("{}_q", o.port);
                let _ = writeln!(v, "  {};", decl("reg", o.dtype, &qn));
                let _ = writeln!(v, "  always @(posedge clk) begin");
                let _ = writeln!(v, "    {qn} <= {base};");
                let _ = writeln!(v, "  end");
                let _ = writeln!(v, "  assign {} = {qn};", o.port);
            } else {
                let _ = writeln!(v, "  assign {} = {base};", o.port);
            }
        }
        let _ = writeln!(v);
        let _ = writeln!(v, "endmodule");
        v
    }

    /// Human-readable schedule summary.
    pub fn schedule_report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "schedule for {} at {:.3} ns ({:.3} MHz): makespan {}, latency {}",
            self.module_name,
            self.t_clk,
            1000.0 / self.t_clk,
            self.makespan,
            self.latency
        );
        let _ = writeln!(s, "{:<8} {:<18} {:<28} {:>5} {:>6}", "class", "values", "implementation", "start", "finish");
        for cell in &self.cells {
            let _ = writeln!(
                s,
                "{:<8} {:<18} {:<28} {:>5} {:>6}",
                format!("n{}", cell.class),
                cell.names.join(","),
                format!("{}/{}", cell.identifier, cell.config),
                cell.start,
                cell.finish()
            );
        }
        let mut totals: BTreeMap<&str, u32> = BTreeMap::new();
        for cell in &self.cells {
            for (k, n) in &cell.resources {
                *totals.entry(k.as_str()).or_default() += n;
            }
        }
        if !totals.is_empty() {
            let parts: Vec<String> = totals.iter().map(|(k, n)| format!("{k}={n}")).collect();
            let _ = writeln!(s, "resources: {}", parts.join(" "));
        }
        let _ = writeln!(s, "chain registers: {}", self.chains.iter().map(|c| c.depth as u64).sum::<u64>());
        s
    }
}

/// Strict register-to-register audit of the realized netlist: every
/// launch-to-capture segment, including net hops and the final setup into
/// chain registers and output capture registers, must fit the period.
pub fn check_netlist_timing(nl: &Netlist) -> Vec<String> {
    let t = nl.t_clk;
    let c = nl.constants;
    let mut viol: Vec<String> = Vec::new();

    // wire → consumers (cell index, port position)
    let mut fanout: BTreeMap<NetRef, Vec<(usize, usize)>> = BTreeMap::new();
    for (ci, cell) in nl.cells.iter().enumerate() {
        for (pi, &(_, r)) in cell.ports.iter().enumerate() {
            fanout.entry(r).or_default().push((ci, pi));
        }
    }
    // wire → capture registers fed directly (chain stage-1 and chain k→k+1)
    let mut captures: BTreeMap<NetRef, Vec<String>> = BTreeMap::new();
    for ch in &nl.chains {
        captures
            .entry(ch.base)
            .or_default()
            .push(wire_name(nl, NetRef::Chain(ch.class, 1)));
        for k in 2..=ch.depth {
            captures
                .entry(NetRef::Chain(ch.class, k - 1))
                .or_default()
                .push(wire_name(nl, NetRef::Chain(ch.class, k)));
        }
    }
    for o in &nl.outputs {
        if o.registered {
            captures
                .entry(NetRef::CellOut(o.class))
                .or_default()
                .push(format!("{}_q", o.port));
        }
    }

    // seq cell internal stage must fit on its own
    for cell in &nl.cells {
        if !cell.profile.is_combinational() && cell.profile.t_cycle > t + EPS {
            viol.push(format!(
                "cell u{} ({}/{}): internal cycle {:.3} ns exceeds period {:.3} ns",
                cell.node, cell.identifier, cell.config, cell.profile.t_cycle, t
            ));
        }
    }

    fn walk(
        nl: &Netlist,
        fanout: &BTreeMap<NetRef, Vec<(usize, usize)>>,
        captures: &BTreeMap<NetRef, Vec<String>>,
        from: &str,
        wire: NetRef,
        acc: f64,
        depth: usize,
        viol: &mut Vec<String>,
    ) {
        let t = nl.t_clk;
        let c = nl.constants;
        if depth > 10_000 {
            viol.push(format!("combinational depth limit exceeded from {from}"));
            return;
        }
        if let Some(regs) = captures.get(&wire) {
            for reg in regs {
                let total = acc + c.t_net + c.t_su;
                if total > t + EPS {
                    viol.push(format!(
                        "segment {from} -> {reg}: {:.3} ns exceeds period {:.3} ns",
                        total, t
                    ));
                }
            }
        }
        if let Some(consumers) = fanout.get(&wire) {
            for &(ci, pi) in consumers {
                let cell = &nl.cells[ci];
                let port = &cell.ports[pi].0;
                let t_in = cell.profile.incoming(port).unwrap_or(0.0);
                let total = acc + c.t_net + t_in;
                if cell.profile.is_combinational() {
                    // the input delay of a combinational cell is its
                    // through-delay; continue from its output wire
                    walk(
                        nl,
                        fanout,
                        captures,
                        from,
                        NetRef::CellOut(cell.class),
                        total,
                        depth + 1,
                        viol,
                    );
                } else if total > t + EPS {
                    viol.push(format!(
                        "segment {from} -> u{}.{port}: {:.3} ns exceeds period {:.3} ns",
                        cell.node, total, t
                    ));
                }
            }
        }
    }

    // launch points
    let mut launches: Vec<(String, NetRef, f64)> = Vec::new();
    for inp in &nl.inputs {
        launches.push((
            format!("{}_q", inp.port),
            NetRef::InputReg(inp.class),
            c.t_clkq,
        ));
    }
    for ch in &nl.chains {
        for k in 1..=ch.depth {
            launches.push((
                wire_name(nl, NetRef::Chain(ch.class, k)),
                NetRef::Chain(ch.class, k),
                c.t_clkq,
            ));
        }
    }
    for cell in &nl.cells {
        if !cell.profile.is_combinational() {
            launches.push((
                format!("u{}", cell.node),
                NetRef::CellOut(cell.class),
                cell.profile.t_outgoing,
            ));
        }
    }
    for cst in &nl.consts {
        launches.push((format!("n{}", cst.class), NetRef::Const(cst.class), 0.0));
    }

    for (from, wire, t0) in launches {
        walk(nl, &fanout, &captures, &from, wire, t0, 0, &mut viol);
    }
    viol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asap::asap_schedule;
    use crate::egraph::egraph_from_program;
    use crate::exact::{solve_exact, ExactOptions, ExactOutcome};
    use crate::ir::parse_program;
    use crate::library::{enumerate_impl_rules, ImplLibrary};
    use crate::rules::{saturate, RewriteRule, SaturationLimits};
    use crate::timing::{build_catalog, enumerate_top_k_paths, mhz_to_ns, ChainingConstraintSet};

    const KERNEL: &str = "a = input i16\nb = input i16\nc = input i16\nt0 = add i17 a b\nt1 = neg i18 t0\nt2 = mul i32 t1 c\nreturn t2\n";

    fn setup(
        src: &str,
        mhz: f64,
        per_op: bool,
    ) -> (Program, EGraph, ImplCatalog, ChainingConstraintSet, ImplLibrary) {
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
        (p, g, cat, paths, l)
    }

    #[test]
    fn fused_kernel_emits_single_dsp_instance() {
        let (p, g, cat, paths, l) = setup(KERNEL, 450.0, false);
        let rep = solve_exact(&cat, &paths, &ExactOptions::default());
        let sol = match rep.outcome {
            ExactOutcome::Optimal(s) => s,
            other => panic!("expected optimal schedule, got {other:?}"),
        };
        let nl = build_netlist(&p, &g, &cat, &l, &sol, "fused_mac").unwrap();
        let v = nl.verilog();
        assert_eq!(v.matches("DSP48E2 #(").count(), 1, "one fused DSP cell:\n{v}");
        assert!(v.contains("module fused_mac ("));
        assert!(v.contains("localparam LATENCY = 2;"));
        assert!(v.contains("input wire signed [15:0] a,"));
        assert!(v.contains("output wire signed [31:0] out0"));
        let viol = check_netlist_timing(&nl);
        assert!(viol.is_empty(), "timing violations: {viol:?}");
    }

    #[test]
    fn per_op_schedule_aligns_operands_with_chains() {
        let (p, g, cat, paths, l) = setup(KERNEL, 450.0, true);
        let sol = asap_schedule(&cat, &paths, &l).unwrap();
        let nl = build_netlist(&p, &g, &cat, &l, &sol, "per_op_mac").unwrap();
        assert!(
            nl.chains.iter().map(|c| c.depth).sum::<u32>() >= 1,
            "a register-cut schedule needs at least one delay stage"
        );
        let v = nl.verilog();
        assert!(v.contains("_d1"), "expected a delay-chain register:\n{v}");
        assert!(v.contains("if (rst) begin"));
        let viol = check_netlist_timing(&nl);
        assert!(viol.is_empty(), "timing violations: {viol:?}");
    }

    #[test]
    fn combinational_root_gains_capture_register() {
        let src = "a = input i8\nb = input i8\ns = add i9 a b\nreturn s\n";
        let (p, g, cat, paths, l) = setup(src, 200.0, false);
        let sol = asap_schedule(&cat, &paths, &l).unwrap();
        assert_eq!(sol.makespan, 0);
        let nl = build_netlist(&p, &g, &cat, &l, &sol, "adder").unwrap();
        assert_eq!(nl.latency, 1);
        assert!(nl.outputs[0].registered);
        let v = nl.verilog();
        assert!(v.contains("out0_q <= "));
        assert!(check_netlist_timing(&nl).is_empty());
    }

    #[test]
    fn source_roots_pass_through() {
        let src = "a = input i8\nk = const i8 7\nreturn a k\n";
        let (p, g, cat, paths, l) = setup(src, 200.0, false);
        let sol = asap_schedule(&cat, &paths, &l).unwrap();
        let nl = build_netlist(&p, &g, &cat, &l, &sol, "wires").unwrap();
        assert_eq!(nl.latency, 0);
        assert!(nl.cells.is_empty());
        let v = nl.verilog();
        assert!(v.contains("assign out0 = a_q;"));
        assert!(v.contains("'h7;"));
        assert!(check_netlist_timing(&nl).is_empty());
    }

    #[test]
    fn float_negate_preserves_concat_braces() {
        let src = "x = input f32\ny = neg f32 x\nreturn y\n";
        let (p, g, cat, paths, l) = setup(src, 200.0, false);
        let sol = asap_schedule(&cat, &paths, &l).unwrap();
        let nl = build_netlist(&p, &g, &cat, &l, &sol, "fneg").unwrap();
        let v = nl.verilog();
        assert!(v.contains("{~x_q[31], x_q[30:0]}"), "concat braces survive substitution:\n{v}");
        assert!(check_netlist_timing(&nl).is_empty());
    }

    #[test]
    fn timing_audit_flags_overconstrained_period() {
        let (p, g, cat, paths, l) = setup(KERNEL, 450.0, false);
        let sol = asap_schedule(&cat, &paths, &l).unwrap();
        let mut nl = build_netlist(&p, &g, &cat, &l, &sol, "tight").unwrap();
        nl.t_clk = 0.5; // below every launch-to-capture segment in the kernel
        assert!(!check_netlist_timing(&nl).is_empty());
    }

    #[test]
    fn schedule_report_lists_cells_and_resources() {
        let (p, g, cat, paths, l) = setup(KERNEL, 450.0, false);
        let sol = asap_schedule(&cat, &paths, &l).unwrap();
        let nl = build_netlist(&p, &g, &cat, &l, &sol, "rpt").unwrap();
        let r = nl.schedule_report();
        assert!(r.contains("makespan 2"));
        assert!(r.contains("DSP48E2_NEG_PREADD_MUL"));
        assert!(r.contains("DSP=1"));
    }
}
