#![no_main]

use libfuzzer_sys::fuzz_target;
use omkit::audio::{decode_mel, encode_mel};

fuzz_target!(|data: &[u8]| {
    if let Ok(mel) = decode_mel(data) {
        let again = decode_mel(&encode_mel(&mel)).unwrap();
        assert_eq!(again.shape(), mel.shape());
        assert!(again.values().iter().zip(mel.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
});
