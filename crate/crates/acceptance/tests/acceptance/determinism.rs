use raytwin::antenna::AntennaPattern;
use raytwin::channel::{coverage, CoverageOptions, GridSpec, MpcFile};
use raytwin::engine::{simulate_link, Endpoint};
use raytwin::fixtures;
use raytwin::profiles;
use raytwin::Vec3;

use crate::Outcome;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

pub fn bit_identical() -> Outcome {
    let campus = fixtures::campus();
    let mut cfg = profiles::builtin("offline").unwrap().engine;
    cfg.seed = 17;
    let tx = Endpoint::new(campus.tx, AntennaPattern::vertical_dipole());
    let rx = Endpoint::new(Vec3::new(8.0, 31.0, 1.5), AntennaPattern::vertical_dipole());
    let json = |threads| {
        in_pool(threads, || MpcFile::from_realization(&simulate_link(&campus.scene, &tx, &rx, 3.5e9, &cfg, 0.0).unwrap()).to_json())
    };
    let runs = [json(1), json(4), json(4)];
    let mpc_same = runs.iter().all(|r| r.as_bytes() == runs[0].as_bytes());

    let grid = GridSpec { xmin: -50.0, ymin: -50.0, xmax: 50.0, ymax: 50.0, step: 5.0, height: 1.5 };
    let online = profiles::builtin("online").unwrap().engine;
    let run = |sequential: bool| {
        let opts = CoverageOptions { sequential, ..Default::default() };
        in_pool(4, || coverage(&campus.scene, &tx, &AntennaPattern::vertical_dipole(), &grid, 3.5e9, &online, &opts).unwrap())
    };
    let (par, seq) = (run(false), run(true));
    let cov_same = par.to_json().as_bytes() == seq.to_json().as_bytes();
    Outcome::new(
        mpc_same && cov_same,
        format!(
            "offline MPC JSON ({} bytes) identical across 3 runs on 1 and 4 threads: {mpc_same}; \
             {}-cell coverage parallel vs sequential byte-equal: {cov_same}",
            runs[0].len(),
            grid.cell_count()
        ),
    )
}
