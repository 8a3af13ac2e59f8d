#![no_main]

use libfuzzer_sys::fuzz_target;
use omkit::audio::{decode_wav, write_wav, WavEncoding};

fuzz_target!(|data: &[u8]| {
    if let Ok(clip) = decode_wav(data) {
        assert!(clip.samples().iter().all(|s| s.is_finite() && s.abs() <= 1.0));
        let again = decode_wav(&write_wav(&clip, WavEncoding::Float32).unwrap()).unwrap();
        assert_eq!(again.samples(), clip.samples());
    }
});
