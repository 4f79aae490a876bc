use super::*;
use crate::geom::{SortedVoxelSet, Voxel};
use crate::model::InitOptions;
use crate::pyramid::build_pyramid;

fn params(cfg: ModelConfig) -> ModelParams {
    ModelParams::init(cfg, 7, InitOptions::default()).unwrap()
}

fn seq(kind: SyntheticKind, n: usize, depth: u8, seed: u64) -> Vec<SortedVoxelSet> {
    make_synthetic_sequence(&SyntheticSpec::new(kind, n, depth, seed)).unwrap()
}

#[test]
fn single_voxel_frame_round_trips() {
    let p = params(ModelConfig::default());
    let leaves = SortedVoxelSet::build(&[Voxel::new(5, 2, 7)], None, 3).unwrap();
    let e = encode_frame(&leaves, &FrameState::empty(), &p, 3, 0).unwrap();
    let d = decode_frame(&e.bytes, &FrameState::empty(), &p).unwrap();
    assert_eq!(d.leaves.keys(), leaves.keys());
    assert_eq!(d.state.digest(), e.state.digest());
}

#[test]
fn depth_one_frame_round_trips() {
    let p = params(ModelConfig::default());
    let leaves = SortedVoxelSet::build(&[Voxel::new(1, 0, 1), Voxel::new(0, 0, 0)], None, 1).unwrap();
    let e = encode_frame(&leaves, &FrameState::empty(), &p, 1, 0).unwrap();
    assert_eq!(e.stats.codes, 0);
    let d = decode_frame(&e.bytes, &FrameState::empty(), &p).unwrap();
    assert_eq!(d.leaves.keys(), leaves.keys());
}

#[test]
fn sequences_round_trip_without_drift() {
    for (k, kind) in [
        SyntheticKind::Static,
        SyntheticKind::Translate,
        SyntheticKind::Jitter,
        SyntheticKind::Morph,
        SyntheticKind::Random,
    ]
    .into_iter()
    .enumerate()
    {
        let frames = seq(kind, 3, 5, k as u64);
        for cfg in [ModelConfig::default(), ModelConfig::spatial_only()] {
            let p = params(cfg);
            let enc = encode_sequence(&frames, &p, 5).unwrap();
            let streams: Vec<_> = enc.iter().map(|e| e.bytes.clone()).collect();
            let dec = decode_sequence(&streams, &p).unwrap();
            for (t, (e, d)) in enc.iter().zip(&dec).enumerate() {
                assert_eq!(d.leaves.keys(), frames[t].keys(), "{kind:?} frame {t}");
                assert_eq!(d.state.digest(), e.state.digest());
            }
        }
    }
}

#[test]
fn wrong_model_is_refused_with_field() {
    let frames = seq(SyntheticKind::Static, 1, 4, 1);
    let p = params(ModelConfig::default());
    let e = encode_frame(&frames[0], &FrameState::empty(), &p, 4, 0).unwrap();
    let other = p.with_config(ModelConfig { fine: false, ..*p.config() }).unwrap();
    match decode_frame(&e.bytes, &FrameState::empty(), &other) {
        Err(Error::HashMismatch { field, .. }) => assert_eq!(field.as_deref(), Some("fine")),
        r => panic!("expected a hash mismatch, got {r:?}"),
    }
    let reseeded = ModelParams::init(ModelConfig::default(), 8, InitOptions::default()).unwrap();
    match decode_frame(&e.bytes, &FrameState::empty(), &reseeded) {
        Err(Error::HashMismatch { field, .. }) => assert_eq!(field.as_deref(), Some("parameters")),
        r => panic!("expected a hash mismatch, got {r:?}"),
    }
}

#[test]
fn corrupted_payload_never_panics() {
    let frames = seq(SyntheticKind::Static, 1, 5, 2);
    let p = params(ModelConfig::default());
    let e = encode_frame(&frames[0], &FrameState::empty(), &p, 5, 0).unwrap();
    for i in 0..e.bytes.len() {
        let mut b = e.bytes.clone();
        b[i] ^= 0x41;
        let r = decode_frame(&b, &FrameState::empty(), &p);
        // magic, version and hash are always checked
        if i < 13 {
            assert!(r.is_err(), "byte {i}");
        }
    }
    for cut in 0..e.bytes.len() {
        assert!(decode_frame(&e.bytes[..cut], &FrameState::empty(), &p).is_err());
    }
}

#[test]
fn teacher_forced_bits_match_model_bits() {
    let frames = seq(SyntheticKind::Jitter, 2, 5, 3);
    let p = params(ModelConfig::default());
    let enc = encode_sequence(&frames, &p, 5).unwrap();
    let prev = FrameState::from_pyramid(build_pyramid(&frames[0], 5).unwrap());
    let cur = build_pyramid(&frames[1], 5).unwrap();
    let tf = teacher_forced_bits(&cur, &prev, &p).unwrap();
    let mb = enc[1].stats.model_bits;
    assert!((tf - mb).abs() < 1e-3 * mb, "{tf} vs {mb}");
}

#[test]
fn synthetic_kinds_behave() {
    let s = seq(SyntheticKind::Static, 3, 5, 4);
    assert_eq!(s[0], s[1]);
    assert_eq!(s[1], s[2]);
    let t = seq(SyntheticKind::Translate, 3, 5, 4);
    for w in t.windows(2) {
        let shifted: Vec<Voxel> = w[0]
            .voxels()
            .map(|v| Voxel::new(v.x + 1, v.y, v.z))
            .filter(|v| v.x < 32)
            .collect();
        assert_eq!(w[1], SortedVoxelSet::build(&shifted, None, 5).unwrap());
    }
    assert_eq!(seq(SyntheticKind::Morph, 4, 6, 9), seq(SyntheticKind::Morph, 4, 6, 9));
    let r = seq(SyntheticKind::Random, 2, 5, 4);
    assert_ne!(r[0], r[1]);
}

#[test]
fn training_reduces_loss_and_checkpoints_each_epoch() {
    let frames = seq(SyntheticKind::Static, 2, 4, 5);
    let mut p = params(ModelConfig::default());
    let pairs = build_training_set(&[frames], 4, p.config()).unwrap();
    let before = evaluate(&p, &pairs).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        checkpoint_dir: Some(dir.path().to_path_buf()),
        adam: crate::nn::AdamConfig { lr: 3e-3, ..Default::default() },
        ..Default::default()
    };
    let report = train(&mut p, &pairs, &cfg).unwrap();
    assert_eq!(report.checkpoints.len(), 30);
    assert_eq!(report.losses.len(), 60);
    let after = evaluate(&p, &pairs).unwrap();
    assert!(after < before - 1.0, "{before} -> {after}");
}
