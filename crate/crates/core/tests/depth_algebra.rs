use pedloc_core::depth::{AxonometricGrid, DepthMap, Intrinsics, PixelRect, Translation};
use proptest::prelude::*;

const FLOOR: f32 = 4.0;

fn map_strategy(w: usize, h: usize) -> impl Strategy<Value = DepthMap> {
    // a third of the pixels are floor so identities get exercised
    prop::collection::vec(prop_oneof![Just(FLOOR), 0.05f32..FLOOR], w * h)
        .prop_map(move |d| DepthMap::from_depths(w, h, 0.02, FLOOR, d).unwrap())
}

fn sized_map() -> impl Strategy<Value = DepthMap> {
    (1usize..12, 1usize..12).prop_flat_map(|(w, h)| map_strategy(w, h))
}

fn in_range(m: &DepthMap) -> bool {
    m.depths().iter().all(|&d| d > 0.0 && d <= m.floor_depth())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn compose_min_laws((a, b, c) in (1usize..10, 1usize..10).prop_flat_map(|(w, h)| (map_strategy(w, h), map_strategy(w, h), map_strategy(w, h)))) {
        let ab = a.compose_min(&b).unwrap();
        prop_assert_eq!(&ab, &b.compose_min(&a).unwrap());
        prop_assert_eq!(ab.compose_min(&c).unwrap(), a.compose_min(&b.compose_min(&c).unwrap()).unwrap());
        prop_assert_eq!(&a.compose_min(&a).unwrap(), &a);
        let floor = DepthMap::new_background(a.width(), a.height(), 0.02, FLOOR).unwrap();
        prop_assert_eq!(&a.compose_min(&floor).unwrap(), &a);
        for ((&o, &x), &y) in ab.depths().iter().zip(a.depths()).zip(b.depths()) {
            prop_assert_eq!(o.to_bits(), x.min(y).to_bits());
        }
    }

    #[test]
    fn translate_rule(m in sized_map(), dx in -14i64..14, dy in -14i64..14) {
        let t = m.translate(Translation { dx, dy });
        prop_assert!(in_range(&t));
        for y in 0..m.height() {
            for x in 0..m.width() {
                let (sx, sy) = (x as i64 - dx, y as i64 - dy);
                let expect = if sx >= 0 && sy >= 0 && sx < m.width() as i64 && sy < m.height() as i64 {
                    m.get(sx as usize, sy as usize)
                } else {
                    FLOOR
                };
                prop_assert_eq!(t.get(x, y), expect);
            }
        }
    }

    #[test]
    fn translations_compose_without_clipping(fg in map_strategy(3, 3), dx1 in -3i64..4, dy1 in -3i64..4, dx2 in -3i64..4, dy2 in -3i64..4) {
        // 3x3 content in the middle of a 15x15 canvas never leaves the frame
        let canvas = DepthMap::new_background(15, 15, 0.02, FLOOR).unwrap();
        let (m, _) = canvas.paste_patch(&fg, (7, 7)).unwrap();
        let t1 = Translation { dx: dx1, dy: dy1 };
        let t2 = Translation { dx: dx2, dy: dy2 };
        prop_assert_eq!(m.translate(t1).translate(t2), m.translate(t1 + t2));
    }

    #[test]
    fn downsample_composes(m in (1usize..4, 1usize..4).prop_flat_map(|(w, h)| map_strategy(w * 6, h * 6))) {
        let direct = m.downsample(6).unwrap();
        let staged = m.downsample(2).unwrap().downsample(3).unwrap();
        prop_assert_eq!(&direct, &staged);
        prop_assert!((direct.pixel_pitch() - m.pixel_pitch() * 6.0).abs() < 1e-6);
        prop_assert_eq!(m.downsample(1).unwrap(), m);
    }

    #[test]
    fn paste_is_embed_then_min(canvas in map_strategy(9, 7), patch in sized_map(), cx in 0usize..9, cy in 0usize..7) {
        let patch = DepthMap::from_depths(patch.width(), patch.height(), 0.02, FLOOR, patch.depths().to_vec()).unwrap();
        let (pasted, rect) = canvas.paste_patch(&patch, (cx, cy)).unwrap();
        let layer = canvas.embed(&patch, (cx, cy)).unwrap();
        prop_assert_eq!(&pasted, &canvas.compose_min(&layer).unwrap());
        prop_assert!(in_range(&pasted));
        prop_assert!(rect.x + rect.w <= 9 && rect.y + rect.h <= 7);
        let (again, _) = pasted.paste_patch(&patch, (cx, cy)).unwrap();
        prop_assert_eq!(again, pasted);
    }

    #[test]
    fn dfm_round_trip(m in sized_map()) {
        let back = DepthMap::from_dfm_bytes(&m.to_dfm_bytes()).unwrap();
        prop_assert_eq!(back, m);
    }
}

#[test]
fn translate_example() {
    let m = DepthMap::from_depths(2, 2, 0.1, 9.0, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let t = m.translate(Translation { dx: 1, dy: 0 });
    assert_eq!(t.depths(), &[9.0, 1.0, 9.0, 3.0]);
    assert!(m.translate(Translation { dx: 2, dy: 0 }).is_all_floor());
    assert_eq!(m.translate(Translation { dx: 0, dy: 0 }), m);
}

#[test]
fn one_pixel_paste() {
    let canvas = DepthMap::new_background(20, 20, 0.02, 4.0).unwrap();
    let dot = DepthMap::from_depths(1, 1, 0.02, 4.0, vec![1.5]).unwrap();
    let (out, rect) = canvas.paste_patch(&dot, (10, 10)).unwrap();
    assert_eq!(rect, PixelRect { x: 10, y: 10, w: 1, h: 1 });
    assert_eq!(out.foreground_count(), 1);
    assert_eq!(out.get(10, 10), 1.5);
    assert!(canvas.paste_patch(&dot, (20, 3)).is_err());
}

#[test]
fn vga_background_and_downsample() {
    let m = DepthMap::new_background(640, 480, 2.9 / 640.0, 4.0).unwrap();
    assert!(m.depths().iter().all(|&d| d == 4.0));
    let d = m.downsample(4).unwrap();
    assert_eq!((d.width(), d.height()), (160, 120));
    assert!(m.downsample(7).is_err());
    let block = DepthMap::from_depths(2, 2, 0.1, 9.0, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(block.downsample(2).unwrap().depths(), &[1.0]);
}

/// Back-projects every foreground pixel and keeps the per-cell minimum.
fn axonometric_oracle(m: &DepthMap, k: &Intrinsics, pitch: f64) -> DepthMap {
    let grid = AxonometricGrid::for_sensor(m, k, pitch);
    let mut out = vec![m.floor_depth(); grid.width * grid.height];
    for v in 0..m.height() {
        for u in 0..m.width() {
            let d = m.get(u, v);
            if d >= m.floor_depth() {
                continue;
            }
            let wx = (u as f64 - k.cx) * d as f64 / k.fx;
            let wy = (v as f64 - k.cy) * d as f64 / k.fy;
            if let Some((cx, cy)) = grid.cell(wx, wy) {
                let slot = &mut out[cy * grid.width + cx];
                if d < *slot {
                    *slot = d;
                }
            }
        }
    }
    DepthMap::from_depths(grid.width, grid.height, pitch as f32, m.floor_depth(), out).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn axonometric_matches_oracle(m in (1usize..17, 1usize..17).prop_flat_map(|(w, h)| map_strategy(w, h)), f in 5.0f64..40.0, pitch in 0.05f64..0.4) {
        let k = Intrinsics { fx: f, fy: f * 1.1, cx: (m.width() as f64 - 1.0) / 2.0, cy: (m.height() as f64 - 1.0) / 2.0 };
        let got = m.to_axonometric(&k, pitch).unwrap();
        prop_assert_eq!(got, axonometric_oracle(&m, &k, pitch));
    }
}

#[test]
fn axonometric_examples() {
    let k = Intrinsics { fx: 20.0, fy: 20.0, cx: 4.0, cy: 3.0 };
    let floor = DepthMap::new_background(9, 7, 0.02, 4.0).unwrap();
    assert!(floor.to_axonometric(&k, 0.1).unwrap().is_all_floor());

    let centre = DepthMap::from_fn(9, 7, 0.02, 4.0, |x, y| if (x, y) == (4, 3) { 2.5 } else { 4.0 }).unwrap();
    let grid = AxonometricGrid::for_sensor(&centre, &k, 0.1);
    let out = centre.to_axonometric(&k, 0.1).unwrap();
    assert_eq!(out.foreground_count(), 1);
    let (ox, oy) = grid.cell(0.0, 0.0).unwrap();
    assert_eq!(out.get(ox, oy), 2.5);
    assert!(centre.to_axonometric(&k, 0.0).is_err());
    assert!(centre.to_axonometric(&k, -1.0).is_err());
}

#[test]
fn dfm_rejects_garbage() {
    assert!(DepthMap::from_dfm_bytes(b"DFM1").is_err());
    let mut bytes = DepthMap::new_background(2, 2, 0.1, 4.0).unwrap().to_dfm_bytes();
    bytes[0] = b'X';
    assert!(DepthMap::from_dfm_bytes(&bytes).is_err());
    let mut bytes = DepthMap::new_background(2, 2, 0.1, 4.0).unwrap().to_dfm_bytes();
    // a depth beyond the floor violates the range invariant
    let n = bytes.len();
    bytes[n - 4..].copy_from_slice(&5.0f32.to_le_bytes());
    assert!(DepthMap::from_dfm_bytes(&bytes).is_err());
    assert_eq!(&DepthMap::new_background(1, 1, 0.1, 4.0).unwrap().to_dfm_bytes()[..4], b"DFM1");
    assert_eq!(DepthMap::new_background(3, 2, 0.1, 4.0).unwrap().to_dfm_bytes().len(), 24 + 6 * 4);
}

#[test]
fn png_mm_round_trip() {
    let m = DepthMap::from_fn(5, 4, 0.02, 4.0, |x, y| if x == y { 1.0 + 0.25 * x as f32 } else { 4.0 }).unwrap();
    let png = m.to_png_mm().unwrap();
    let back = DepthMap::from_png_mm(&png, 0.02, 4.0).unwrap();
    assert_eq!(back, m);
}
