#![no_main]

use libfuzzer_sys::fuzz_target;
use serde_json::json;
use wedgefield_cli::config::{apply_override, parse_override};

fuzz_target!(|data: &[u8]| {
    let Ok(raw) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(ov) = parse_override(raw) else {
        return;
    };
    let mut doc = json!({
        "grid": {"dim": 1, "n": 32, "box_length": 16.0},
        "scan": {"axis": {"Points": [8, 16, 32]}},
        "seed": null,
    });
    if apply_override(&mut doc, &ov).is_ok() {
        let _ = wedgefield_cli::load(doc.to_string().as_bytes(), &[raw.to_string()]);
    }
});
