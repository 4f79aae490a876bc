use super::*;
use crate::geom::{SortedVoxelSet, Voxel};
use crate::pyramid::{build_pyramid, upscale, FramePyramid};

fn shell(depth: u8, shift: i32) -> FramePyramid {
    let n = 1i32 << depth;
    let c = n / 2;
    let r = (n as f32) * 0.35;
    let mut v = Vec::new();
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let d = (((x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c)) as f32).sqrt();
                if (d - r).abs() < 0.9 && x + shift < n {
                    v.push(Voxel::new(x + shift, y, z));
                }
            }
        }
    }
    build_pyramid(&SortedVoxelSet::build(&v, None, depth).unwrap(), depth).unwrap()
}

fn ctx_for(cur: &FramePyramid, prev: Option<&FramePyramid>, d: usize, cfg: &ModelConfig) -> LevelContext {
    let parent = cur.level(d - 1);
    let children = upscale(parent).unwrap();
    LevelContext::build(
        parent,
        &children,
        prev.map(|p| p.coords(d - 1)),
        prev.map(|p| p.level(d)),
        cfg,
    )
    .unwrap()
}

fn logits_of(p: &ModelParams, ctx: &LevelContext, codes: &[u8]) -> [Tensor2D<f32>; 4] {
    let mut g = Graph::new();
    let out = p.level_bits(&mut g, ctx, codes).unwrap();
    [out.even_s0, out.even_s1, out.odd_s0, out.odd_s1].map(|v| g.value(v).clone())
}

#[test]
fn parity_groups() {
    for i in 0..8u8 {
        assert_eq!(EVEN_GROUP.contains(&i), is_even_child(i));
        assert_eq!(ODD_GROUP.contains(&i), !is_even_child(i));
    }
    assert_eq!(relative_position(5), [1.0, 0.0, 1.0]);
}

#[test]
fn symbol_split_round_trip() {
    for c in 0..=255u8 {
        let s = SymbolSplit::of(c);
        assert!(s.s0 < 16 && s.s1 < 16);
        assert_eq!(s.code(), c);
    }
}

#[test]
fn zero_heads_give_eight_bits_per_code() {
    let cfg = ModelConfig::default();
    let p = ModelParams::init(cfg, 3, InitOptions { zero_head_outputs: true }).unwrap();
    let f = shell(5, 0);
    let ctx = ctx_for(&f, None, 3, &cfg);
    let mut g = Graph::new();
    let out = p.level_bits(&mut g, &ctx, f.level(3).codes()).unwrap();
    let bits = g.value(out.bits).get(0, 0) as f64;
    let n = f.level(3).len() as f64;
    assert!((bits / n - 8.0).abs() < 1e-4, "{}", bits / n);
}

#[test]
fn init_is_deterministic_and_seed_sensitive() {
    let cfg = ModelConfig::default();
    let a = ModelParams::init(cfg, 11, InitOptions::default()).unwrap();
    let b = ModelParams::init(cfg, 11, InitOptions::default()).unwrap();
    let c = ModelParams::init(cfg, 12, InitOptions::default()).unwrap();
    assert_eq!(a.digest(), b.digest());
    assert_ne!(a.digest(), c.digest());
}

#[test]
fn even_logits_ignore_current_level_codes() {
    let cfg = ModelConfig::default();
    let p = ModelParams::init(cfg, 5, InitOptions::default()).unwrap();
    let f = shell(5, 0);
    let prev = shell(5, 1);
    let ctx = ctx_for(&f, Some(&prev), 3, &cfg);
    let codes = f.level(3).codes().to_vec();
    let mut other = codes.clone();
    for c in other.iter_mut() {
        *c = c.wrapping_mul(37).max(1);
    }
    let a = logits_of(&p, &ctx, &codes);
    let b = logits_of(&p, &ctx, &other);
    assert_eq!(a[0], b[0]);
}

#[test]
fn odd_logits_ignore_odd_codes() {
    let cfg = ModelConfig::default();
    let p = ModelParams::init(cfg, 5, InitOptions::default()).unwrap();
    let f = shell(5, 0);
    let ctx = ctx_for(&f, None, 3, &cfg);
    let codes = f.level(3).codes().to_vec();
    let (even, odd) = ctx.split_codes(&codes);
    let scrambled: Vec<u8> = odd.iter().map(|&c| c ^ 0x5a).map(|c| c.max(1)).collect();
    let a = logits_of(&p, &ctx, &codes);
    let b = logits_of(&p, &ctx, &ctx.merge_codes(&even, &scrambled));
    assert_eq!(a[2], b[2]);
    // but they do depend on the even codes
    let sib: Vec<u8> = even.iter().map(|&c| c ^ 0xff).map(|c| c.max(1)).collect();
    let c = logits_of(&p, &ctx, &ctx.merge_codes(&sib, &odd));
    assert_ne!(a[2], c[2]);
}

#[test]
fn spatial_only_ignores_previous_frame() {
    let cfg = ModelConfig::spatial_only();
    let p = ModelParams::init(cfg, 5, InitOptions::default()).unwrap();
    let f = shell(5, 0);
    let prev = shell(5, 2);
    let codes = f.level(3).codes().to_vec();
    let a = logits_of(&p, &ctx_for(&f, None, 3, &cfg), &codes);
    let b = logits_of(&p, &ctx_for(&f, Some(&prev), 3, &cfg), &codes);
    assert_eq!(a, b);
}

#[test]
fn temporal_paths_see_previous_frame() {
    let cfg = ModelConfig::default();
    let p = ModelParams::init(cfg, 5, InitOptions::default()).unwrap();
    let f = shell(5, 0);
    let prev = shell(5, 2);
    let codes = f.level(3).codes().to_vec();
    let a = logits_of(&p, &ctx_for(&f, None, 3, &cfg), &codes);
    let b = logits_of(&p, &ctx_for(&f, Some(&prev), 3, &cfg), &codes);
    assert_ne!(a[0], b[0]);
}

#[test]
fn fine_bag_matches_oracle() {
    let cfg = ModelConfig::default();
    let f = shell(4, 0);
    let prev = shell(4, 1);
    let ctx = ctx_for(&f, Some(&prev), 2, &cfg);
    let children = f.coords(2);
    let prev_level = prev.level(2);
    let v = cfg.vfine.volume() as f64;
    let spec = crate::geom::NeighborhoodSpec::new(cfg.vfine);
    for i in 0..children.len() {
        let mut hist = [0u32; 256];
        for q in spec.expand(children.voxel(i)) {
            let code = prev_level
                .keys()
                .iter()
                .zip(prev_level.codes())
                .find(|(&k, _)| {
                    crate::geom::morton_decode(crate::geom::MortonKey(k), 2).ok() == Some(q)
                })
                .map_or(0, |(_, &c)| c);
            hist[code as usize] += 1;
        }
        let expect: Vec<(u8, f64)> = hist
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(c, &n)| (c as u8, n as f64 / v))
            .collect();
        assert_eq!(ctx.fine_bag_row(i), expect);
    }
}

#[test]
fn sibling_mean_rows_are_normalized() {
    let cfg = ModelConfig::default();
    let f = shell(5, 0);
    let ctx = ctx_for(&f, None, 4, &cfg);
    for (o, &r) in ctx.odd_rows.iter().enumerate() {
        let p = ctx.child_parent[r as usize];
        let sibs: Vec<usize> = ctx
            .even_rows
            .iter()
            .enumerate()
            .filter(|(_, &e)| ctx.child_parent[e as usize] == p)
            .map(|(k, _)| k)
            .collect();
        let row: Vec<(usize, f64)> = ctx.sibling_mean.row(o).collect();
        assert_eq!(row.iter().map(|x| x.0).collect::<Vec<_>>(), sibs);
        if !sibs.is_empty() {
            let s: f64 = row.iter().map(|x| x.1).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn with_config_rejects_shape_changes() {
    let p = ModelParams::init(ModelConfig::default(), 1, InitOptions::default()).unwrap();
    assert!(p.with_config(ModelConfig::spatial_only()).is_ok());
    let wide = ModelConfig {
        width: 16,
        ..ModelConfig::default()
    };
    assert!(p.with_config(wide).is_err());
}

#[test]
fn probability_rows_sum_to_one() {
    let t = Tensor2D::from_vec(2, 16, (0..32).map(|i| i as f32 * 0.1).collect()).unwrap();
    let p = ProbabilityTable::from_logits(&t).unwrap();
    for r in p.rows() {
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn checkpoint_round_trip_preserves_digest() {
    let cfg = ModelConfig {
        vd: NeighborhoodSize::Face7,
        sibling: false,
        ..ModelConfig::default()
    };
    let p = ModelParams::init(cfg, 9, InitOptions::default()).unwrap();
    let ck = crate::nn::Checkpoint::from_bytes(&p.to_checkpoint().to_bytes()).unwrap();
    let q = ModelParams::from_checkpoint(&ck).unwrap();
    assert_eq!(q.config(), &cfg);
    assert_eq!(q.digest(), p.digest());
}

#[test]
fn config_hash_sees_every_field() {
    let base = ModelConfig::default();
    let variants = [
        ModelConfig { width: 16, ..base },
        ModelConfig { vd: NeighborhoodSize::Face7, ..base },
        ModelConfig { vfine: NeighborhoodSize::Cube27, ..base },
        ModelConfig { coarse: false, ..base },
        ModelConfig { fine: false, ..base },
        ModelConfig { sibling: false, ..base },
        ModelConfig { share_embedding: true, ..base },
    ];
    for v in variants {
        assert_ne!(v.hash32(), base.hash32(), "{v:?}");
    }
}
