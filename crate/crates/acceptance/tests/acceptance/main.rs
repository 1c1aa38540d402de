//! One line per acceptance criterion. Hard failures make the process exit
//! non-zero; timing targets are reported but only soft.
//!
//! Run a subset with `cargo test -p raytwin-acceptance --test acceptance -- <filter>`.

use std::time::Instant;

mod calibration;
mod determinism;
mod fresnel;
mod image_method;
mod metrics;
mod propagation;
mod reciprocity;
mod service;
mod timing;
mod utd;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

struct Criterion {
    name: &'static str,
    soft: bool,
    run: fn() -> Outcome,
}

const CRITERIA: &[Criterion] = &[
    Criterion { name: "free_space_exactness", soft: false, run: propagation::free_space },
    Criterion { name: "two_ray_ground", soft: false, run: propagation::two_ray },
    Criterion { name: "fresnel_suite", soft: false, run: fresnel::suite },
    Criterion { name: "image_method_equivalence", soft: false, run: image_method::equivalence },
    Criterion { name: "utd_sanity", soft: false, run: utd::sanity },
    Criterion { name: "reciprocity", soft: false, run: reciprocity::campus_pairs },
    Criterion { name: "metrics_correctness", soft: false, run: metrics::correctness },
    Criterion { name: "calibration_recovery", soft: false, run: calibration::recovery },
    Criterion { name: "determinism", soft: false, run: determinism::bit_identical },
    Criterion { name: "timing_targets", soft: true, run: timing::targets },
    Criterion { name: "service_lifecycle", soft: false, run: service::lifecycle },
];

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut hard_failures = 0;
    let mut ran = 0;
    for c in CRITERIA {
        if filter.as_deref().is_some_and(|f| !c.name.contains(f)) {
            continue;
        }
        ran += 1;
        let t0 = Instant::now();
        let out = (c.run)();
        let secs = t0.elapsed().as_secs_f64();
        let status = match (out.pass, c.soft) {
            (true, _) => "PASS",
            (false, true) => "FAIL (soft)",
            (false, false) => "FAIL",
        };
        println!("{status} {} [{secs:.1} s] {}", c.name, out.detail);
        if !out.pass && !c.soft {
            hard_failures += 1;
        }
    }
    println!("acceptance: {ran} criteria run, {hard_failures} hard failures");
    if hard_failures > 0 {
        std::process::exit(1);
    }
}
