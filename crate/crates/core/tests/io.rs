use std::fs;

use ndarray::Array2;
use num_complex::Complex64;
use pisco_core::io::*;
use pisco_core::kspace::*;
use pisco_core::nik::{NikArchitecture, NikModel};
use pisco_core::Error;
use tempfile::TempDir;

fn small_kspace() -> MultiCoilKSpace {
    let coords = vec![
        Coord::new(-0.5, 0.25, 0.0),
        Coord::new(0.125, -0.375, 0.5),
        Coord::new(0.0, 0.0, 1.0),
    ];
    let values = Array2::from_shape_fn((3, 2), |(i, c)| Complex64::new(i as f64 + 0.5, -(c as f64) * 1.25));
    MultiCoilKSpace::new(coords, values, 8).unwrap()
}

#[test]
fn kspace_roundtrip_keeps_values_and_shape() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("k.bin");
    let k = small_kspace();
    save_kspace(&path, &k, Some([2, 2])).unwrap();
    let (back, header) = load_kspace(&path).unwrap();
    // the values above are exact in f32
    assert_eq!(back, k);
    assert_eq!(header.shape, Some([2, 2]));
    assert_eq!(header.n_coils, 2);
    let bytes = fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], KSPACE_MAGIC);
}

#[test]
fn payload_is_f32() {
    let mut buf = Vec::new();
    let k = small_kspace();
    write_kspace(&mut buf, &k, None).unwrap();
    let header_len = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    assert_eq!(buf.len() - 12 - header_len, 4 * 3 * (2 * 2 + 3));
}

#[test]
fn bad_magic_is_a_format_error() {
    let mut buf = Vec::new();
    write_kspace(&mut buf, &small_kspace(), None).unwrap();
    buf[0] = b'X';
    assert!(matches!(read_kspace(&mut buf.as_slice()), Err(Error::Format(_))));
}

#[test]
fn truncated_payload_is_a_format_error() {
    let mut buf = Vec::new();
    write_kspace(&mut buf, &small_kspace(), None).unwrap();
    buf.truncate(buf.len() - 4);
    let err = read_kspace(&mut buf.as_slice()).unwrap_err();
    assert!(matches!(err, Error::Format(_)), "{err}");
}

#[test]
fn image_roundtrip() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("img.bin");
    let img = Array2::from_shape_fn((5, 4), |(x, y)| Complex64::new(x as f64, 0.5 * y as f64));
    save_image(&path, &img).unwrap();
    assert_eq!(load_image(&path).unwrap(), img);
}

#[test]
fn image_loader_rejects_plain_kspace() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("k.bin");
    save_kspace(&path, &small_kspace(), None).unwrap();
    assert!(matches!(load_image(&path), Err(Error::Format(_))));
}

#[test]
fn mask_roundtrip() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("mask.json");
    let mask = make_mask(16, 16, 4.0, 0.1, 9).unwrap();
    save_mask(&path, &mask).unwrap();
    assert_eq!(load_mask(&path).unwrap(), mask);
}

#[test]
fn mask_with_out_of_range_line_is_rejected() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("mask.json");
    fs::write(
        &path,
        r#"{"n_x": 4, "n_y": 4, "acceleration": 2.0, "center_fraction": 0.1, "kept_lines": [1, 4]}"#,
    )
    .unwrap();
    assert!(matches!(load_mask(&path), Err(Error::Format(_))));
}

#[test]
fn checkpoint_roundtrip_matches_to_f32() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("ckpt.bin");
    let arch = NikArchitecture {
        n_features: 4,
        sigma: 1.0,
        hidden: 8,
        n_layers: 3,
        omega: 20.0,
        n_coils: 2,
        output_scale: 3.0,
    };
    let model = NikModel::new(arch, 4).unwrap();
    save_checkpoint(&path, &model, 4, serde_json::json!({"lambda": 0.1})).unwrap();
    let (back, header) = load_checkpoint(&path).unwrap();
    assert_eq!(header.seed, 4);
    assert_eq!(header.config["lambda"], 0.1);
    for (a, b) in model.params.iter().zip(&back.params) {
        assert_eq!(*b, *a as f32 as f64);
    }
    let coords = [Coord::new(0.1, -0.2, 0.3)];
    let (ya, yb) = (model.forward(&coords), back.forward(&coords));
    assert!((ya[[0, 1]] - yb[[0, 1]]).norm() < 1e-4 * ya[[0, 1]].norm().max(1.0));
}

#[test]
fn checkpoint_with_kspace_magic_is_rejected() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("k.bin");
    save_kspace(&path, &small_kspace(), None).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
}
