#![no_main]

use esh_cli::axes::{Range, Slice};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = text.parse::<Slice>();
    if let Ok(r) = text.parse::<Range>() {
        let v: Vec<f64> = r.values().collect();
        assert_eq!(v.len(), r.count);
        assert!(v[0] == r.lo && v[v.len() - 1] == r.hi);
    }
});
