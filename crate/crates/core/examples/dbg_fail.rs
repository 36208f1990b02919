//! Scratch debug driver (not shipped).
use synth_core::asap::asap_schedule;
use synth_core::library::ImplLibrary;
use synth_core::pipeline::{prepare, PipelineOptions};

fn main() {
    let arg = std::env::args().nth(1).unwrap_or_else(|| "/tmp/fail.ir".into());
    let src = std::fs::read_to_string(arg).unwrap();
    let lib = ImplLibrary::sample();
    let mut opts = PipelineOptions::default();
    opts.t_clk = 5.0;
    let prep = prepare(&src, &lib, &opts).unwrap();
    let cat = &prep.catalog;
    println!("== catalog nodes ==");
    for n in &cat.nodes {
        let ident = &lib.implementations[n.entry as usize].identifier;
        println!(
            "node {:>2}  class {:>2}  {}  lat {}  args {:?}",
            n.id, n.class, ident, n.profile.latency, n.args
        );
    }
    println!("== roots: {:?}  inputs: {:?}  consts: {:?}", cat.roots, cat.input_classes, cat.const_classes);
    let sol = asap_schedule(cat, &prep.paths, &lib).unwrap();
    println!("== selected ==");
    for &nid in &sol.selected {
        let n = cat.node(nid);
        let ident = &lib.implementations[n.entry as usize].identifier;
        println!(
            "node {:>2}  class {:>2}  {}  start {}  finish {}",
            nid,
            n.class,
            ident,
            sol.start[&nid],
            sol.start[&nid] + n.latency()
        );
    }
    println!("makespan {}", sol.makespan);
    println!("class_finish: {:?}", sol.class_finish);

    println!("== rows ending at selected nodes ==");
    for &nid in &sol.selected {
        for row in prep.paths.rows_ending_at(nid) {
            let active = row
                .intermediates()
                .iter()
                .all(|&(h, _)| sol.selected.contains(&h));
            println!(
                "  {:?} -> node {:>2}  delay {:.3}  cuts {}  hops {:?}  intermediates-selected {}",
                row.src, row.dst, row.delay, row.cuts, row.hops, active
            );
        }
    }
    println!("truncated pairs: {:?}", prep.paths.truncated_pairs);
}
