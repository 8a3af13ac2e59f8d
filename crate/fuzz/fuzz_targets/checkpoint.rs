#![no_main]

use libfuzzer_sys::fuzz_target;
use omkit::mllm::{decode_checkpoint, CheckpointManifest};

// Input layout: manifest JSON, a NUL byte, then the raw parameter bytes.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let Ok(text) = std::str::from_utf8(&data[..split]) else { return };
    let Ok(manifest) = CheckpointManifest::from_json(text) else { return };
    let bytes = data.get(split + 1..).unwrap_or_default();
    if let Ok(model) = decode_checkpoint(bytes, &manifest) {
        assert_eq!(model.params().len(), manifest.n_values);
    }
});
