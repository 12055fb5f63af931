use mxconv_wasm::{cycles_json, mask_json, timeline_json};
use serde_json::Value;

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.unwrap()).unwrap()
}

#[test]
fn deterministic_mask_keeps_one_position_per_slice() {
    let v = parse(mask_json(3, 9, 4, None, 0));
    let grid = v["grid"].as_array().unwrap();
    assert_eq!(grid.len(), 4);
    for row in grid {
        for slice in row.as_array().unwrap() {
            assert_eq!(slice.as_array().unwrap().len(), 1);
        }
    }
    assert_eq!(v["positions_used"], 9);
    assert!((v["kept_fraction"].as_f64().unwrap() - 1.0 / 9.0).abs() < 1e-12);
}

#[test]
fn random_mask_view() {
    let v = parse(mask_json(3, 2, 2, Some(5), 11));
    for row in v["grid"].as_array().unwrap() {
        for slice in row.as_array().unwrap() {
            assert_eq!(slice.as_array().unwrap().len(), 4);
        }
    }
    assert!(mask_json(3, 2, 2, Some(9), 0).is_err());
    assert!(mask_json(3, 100, 100, None, 0).is_err());
}

#[test]
fn cycle_points_cover_divisors() {
    let v = parse(cycles_json(32, 64, 64, 240.0));
    let pts = v.as_array().unwrap();
    assert_eq!(pts.len(), 7);
    let p16 = pts.iter().find(|p| p["p"] == 16).unwrap();
    assert_eq!(p16["total"], 12288);
    assert_eq!(p16["processing_ratio"].as_f64().unwrap(), 96.0);
    assert!((p16["latency_us"].as_f64().unwrap() - 51.2).abs() < 1e-9);
    assert!(cycles_json(32, 64, 64, 0.0).is_err());
}

#[test]
fn timeline_segments_tile_each_image() {
    let v = parse(timeline_json(2, 6, 4, 4, 2, 3, 1));
    let segs = v["segments"].as_array().unwrap();
    let per_layer = 6 * 4 + 6 * 4 * 4 / 2 + 6 * 4;
    assert_eq!(v["latency_cycles"], 2 * per_layer);
    assert_eq!(v["bottleneck_cycles"], per_layer);
    for layer in 0..2 {
        let busy: u64 = segs
            .iter()
            .filter(|s| s["layer"] == layer)
            .map(|s| s["end"].as_u64().unwrap() - s["start"].as_u64().unwrap())
            .sum();
        assert_eq!(busy, 3 * per_layer as u64);
    }
    assert!(timeline_json(0, 6, 4, 4, 2, 1, 0).is_err());
    assert!(timeline_json(4, 64, 512, 512, 1, 4, 0).is_err());
}
