//! Scratch stress scan (not shipped): run the full pipeline over many
//! generated kernels and report failures plus refinement statistics.
use synth_core::library::ImplLibrary;
use synth_core::pipeline::{run_pipeline, PipelineOptions, SolverKind};
use synth_core::suite::{generate_kernel, GenSpec};
use synth_core::timing::mhz_to_ns;

fn main() {
    let lib = ImplLibrary::sample();
    let mut failures = 0usize;
    let mut refined = 0usize;
    let mut total = 0usize;
    let mut max_k_seen = 0usize;
    for seed in 0..1500u64 {
        let ops = 3 + (seed % 8) as usize; // 3..=10
        let float = seed % 11 == 0;
        let src = generate_kernel(&GenSpec { ops, float, seed, ..GenSpec::default() });
        for &mhz in &[100.0, 200.0, 300.0, 400.0] {
            let solver = if seed % 5 == 0 { SolverKind::Exact } else { SolverKind::Asap };
            let opts = PipelineOptions {
                t_clk: mhz_to_ns(mhz),
                solver,
                ..PipelineOptions::default()
            };
            total += 1;
            match run_pipeline(&src, &lib, &opts) {
                Ok(out) => {
                    let k = out.prepared.paths.k;
                    if k != opts.top_k {
                        refined += 1;
                        max_k_seen = max_k_seen.max(k);
                    }
                }
                Err(e) => {
                    failures += 1;
                    println!("FAIL seed={seed} ops={ops} float={float} mhz={mhz} solver={solver:?}: {e}");
                    if failures > 20 {
                        println!("...stopping early");
                        return;
                    }
                }
            }
        }
    }
    println!(
        "scan: {total} runs, {failures} failures, {refined} refined ({:.2}%), max k seen {max_k_seen}",
        100.0 * refined as f64 / total as f64
    );
}
