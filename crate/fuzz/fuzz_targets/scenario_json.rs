#![no_main]

use libfuzzer_sys::fuzz_target;
use wedgefield_cli::config::config_hash;
use wedgefield_cli::{load, Experiment};

fuzz_target!(|data: &[u8]| {
    let Ok((doc, cfg)) = load(data, &[]) else {
        return;
    };
    let _ = config_hash(&doc);
    for exp in [
        Experiment::Spectrum,
        Experiment::Evolve,
        Experiment::Scan,
        Experiment::Qnorm,
        Experiment::Lift,
        Experiment::Gauge,
        Experiment::WedgeSuite,
    ] {
        let _ = cfg.validate(exp);
    }
});
