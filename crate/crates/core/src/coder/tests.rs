use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geom::Voxel;

fn random_row(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sharp = rng.gen_range(0.1..8.0);
    let raw: Vec<f64> = (0..16).map(|_| (rng.gen::<f64>() * sharp).exp() - 1.0).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

#[test]
fn uniform_row_quantizes_to_4096() {
    let q = quantize_probs(&[1.0 / 16.0; 16]).unwrap();
    assert_eq!(q.freqs(), [4096; 16]);
    assert_eq!(q, QuantizedCdf::uniform());
}

#[test]
fn one_hot_respects_floor() {
    let mut row = [0.0; 16];
    row[9] = 1.0;
    let q = quantize_probs(&row).unwrap();
    for s in 0..16 {
        assert_eq!(q.freq(s), if s == 9 { 65536 - 15 } else { 1 });
    }
}

#[test]
fn invalid_rows_rejected() {
    let mut row = [1.0 / 16.0; 16];
    row[3] = f64::NAN;
    assert!(matches!(quantize_probs(&row), Err(Error::InvalidProbability(_))));
    row[3] = -0.1;
    assert!(matches!(quantize_probs(&row), Err(Error::InvalidProbability(_))));
    assert!(quantize_probs(&[0.0; 16]).is_err());
    assert!(quantize_probs(&[0.5; 2]).is_err());
}

#[test]
fn quantized_probs_track_input() {
    // The floor of 1 per symbol alone can move a one-hot row by 15/2^16 in
    // L∞ (30/2^16 in L1), so the per-symbol deviation is what is bounded.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        let row = random_row(&mut rng);
        let q = quantize_probs(&row).unwrap();
        let cum = q.cum();
        assert_eq!(cum[0], 0);
        assert_eq!(cum[16], 1 << 16);
        for (s, &p) in row.iter().enumerate() {
            assert!(q.freq(s) >= 1);
            // Independent recomputation of the reconstruction error.
            let err = (q.freq(s) as f64 / 65536.0 - p).abs();
            assert!(err < 16.0 / 65536.0, "symbol {s}: {err}");
        }
    }
}

#[test]
fn uniform_thousand_symbols_cost_4000_bits() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let syms: Vec<u8> = (0..1000).map(|_| rng.gen_range(0..16)).collect();
    let cdfs = vec![QuantizedCdf::uniform(); 1000];
    let bytes = encode_symbols(&syms, &cdfs).unwrap();
    let bits = bytes.len() as i64 * 8;
    assert!((bits - 4000).abs() <= 32, "{bits}");
    assert_eq!(decode_symbols(&bytes, &cdfs).unwrap(), syms);
}

#[test]
fn deterministic_cdfs_cost_little() {
    let mut row = [0.0; 16];
    row[5] = 1.0;
    let q = quantize_probs(&row).unwrap();
    let syms = vec![5u8; 1000];
    let cdfs = vec![q; 1000];
    let bytes = encode_symbols(&syms, &cdfs).unwrap();
    let bound = 1000.0 * -(1.0 - 15.0 / 65536.0f64).log2() + 32.0;
    assert!((bytes.len() * 8) as f64 <= bound, "{} > {bound}", bytes.len() * 8);
    assert_eq!(decode_symbols(&bytes, &cdfs).unwrap(), syms);
}

fn random_stream(seed: u64, n: usize) -> (Vec<u8>, Vec<QuantizedCdf>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut syms = Vec::with_capacity(n);
    let mut cdfs = Vec::with_capacity(n);
    for _ in 0..n {
        let row = random_row(&mut rng);
        let q = quantize_probs(&row).unwrap();
        // Sample from the quantized distribution itself.
        let t = rng.gen_range(0..65536u32);
        syms.push(q.find(t) as u8);
        cdfs.push(q);
    }
    (syms, cdfs)
}

#[test]
fn hundred_thousand_symbols_round_trip_near_entropy() {
    let (syms, cdfs) = random_stream(3, 100_000);
    let bytes = encode_symbols(&syms, &cdfs).unwrap();
    assert_eq!(decode_symbols(&bytes, &cdfs).unwrap(), syms);
    let ideal: f64 = syms.iter().zip(&cdfs).map(|(&s, q)| q.bits(s as usize)).sum();
    let measured = (bytes.len() * 8) as f64;
    assert!(measured - ideal <= 32.0 + 0.001 * ideal, "{measured} vs {ideal}");
}

#[test]
fn truncated_payload_is_error() {
    let (syms, cdfs) = random_stream(4, 500);
    let bytes = encode_symbols(&syms, &cdfs).unwrap();
    for cut in 0..bytes.len() {
        match decode_symbols(&bytes[..cut], &cdfs) {
            Err(Error::CorruptStream(_)) => {}
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("truncation to {cut} bytes decoded"),
        }
    }
    let mut long = bytes.clone();
    long.push(0);
    assert!(decode_symbols(&long, &cdfs).is_err());
}

#[test]
fn golden_stream_bytes() {
    let syms: Vec<u8> = (0..32).map(|i| (i * 7 % 16) as u8).collect();
    let cdfs: Vec<QuantizedCdf> = (0..32)
        .map(|i| {
            let row: Vec<f64> = (0..16).map(|s| 1.0 + ((s + i) % 5) as f64).collect();
            quantize_probs(&row).unwrap()
        })
        .collect();
    let bytes = encode_symbols(&syms, &cdfs).unwrap();
    assert_eq!(
        bytes,
        include_bytes!("../../tests/fixtures/golden_symbols.bin").to_vec(),
        "{bytes:02x?}"
    );
}

fn header(depth: u8) -> FrameHeader {
    FrameHeader {
        config_hash: 0x0123_4567_89ab_cdef,
        depth,
        frame_index: 42,
        root: RootBlock {
            coords: vec![Voxel::new(0, 0, 0)],
            codes: vec![0b1010_0101],
        },
        level_counts: (1..=depth as u32).map(|d| d * 10).collect(),
    }
}

#[test]
fn container_round_trip() {
    let h = header(10);
    let bytes = write_container(&h, &[]).unwrap();
    assert_eq!(bytes.len(), h.encoded_len());
    let (back, payload) = read_container(&bytes).unwrap();
    assert_eq!(back, h);
    assert!(payload.is_empty());

    let bytes = write_container(&h, &[1, 2, 3]).unwrap();
    assert_eq!(read_container(&bytes).unwrap().1, &[1, 2, 3]);
}

#[test]
fn container_rejects_bad_magic_and_version() {
    let mut bytes = write_container(&header(4), &[9]).unwrap();
    bytes[0] = b'X';
    assert!(matches!(read_container(&bytes), Err(Error::BadMagic { .. })));
    let mut bytes = write_container(&header(4), &[9]).unwrap();
    bytes[4] = 99;
    assert!(matches!(read_container(&bytes), Err(Error::UnsupportedVersion(99))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_streams_round_trip(seed in any::<u64>(), n in 0usize..3000) {
        let (syms, cdfs) = random_stream(seed, n);
        let bytes = encode_symbols(&syms, &cdfs).unwrap();
        prop_assert_eq!(decode_symbols(&bytes, &cdfs).unwrap(), syms);
    }

    #[test]
    fn container_truncations_never_panic(depth in 1u8..=21, payload in proptest::collection::vec(any::<u8>(), 0..64), cut in any::<prop::sample::Index>()) {
        let bytes = write_container(&header(depth), &payload).unwrap();
        let cut = cut.index(bytes.len());
        prop_assert!(read_container(&bytes[..cut]).is_err());
    }

    #[test]
    fn container_garbage_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = read_container(&bytes);
    }
}
