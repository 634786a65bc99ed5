use std::fs;
use std::path::Path;

use proptest::prelude::*;

use super::*;
use crate::autodiff::Tensor;
use crate::Error;

fn write_idx(path: &Path, magic: [u8; 4], dims: &[u32], payload: &[u8]) {
    let mut bytes = magic.to_vec();
    for d in dims {
        bytes.extend_from_slice(&d.to_be_bytes());
    }
    bytes.extend_from_slice(payload);
    fs::write(path, bytes).unwrap();
}

fn tiny_pair(dir: &Path, labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
    let n = labels.len() as u32;
    let img = dir.join("img");
    let lab = dir.join("lab");
    let pixels: Vec<u8> = (0..n * 4).map(|i| [0u8, 255, 51, 102][(i % 4) as usize]).collect();
    write_idx(&img, [0, 0, 8, 3], &[n, 2, 2], &pixels);
    write_idx(&lab, [0, 0, 8, 1], &[n], labels);
    (img, lab)
}

#[test]
fn idx_bytes_scale_to_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = tiny_pair(dir.path(), &[3, 1, 4]);
    let ds = load_idx(&img, &lab, Split::Train).unwrap();
    assert_eq!(ds.images().shape(), &[3, 1, 2, 2]);
    assert_eq!(ds.sample(0), &[0.0, 1.0, 0.2, 0.4]);
    assert_eq!(ds.labels(), &[3, 1, 4]);
    assert_eq!(ds.n_classes(), 5);
}

#[test]
fn idx_bad_magic_and_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = tiny_pair(dir.path(), &[0, 1]);
    let bad = dir.path().join("bad");
    write_idx(&bad, [0, 0, 9, 3], &[2, 2, 2], &[0; 8]);
    assert!(matches!(load_idx(&bad, &lab, Split::Train), Err(Error::Format(_))));
    let three = dir.path().join("three");
    write_idx(&three, [0, 0, 8, 1], &[3], &[0, 1, 2]);
    assert!(matches!(load_idx(&img, &three, Split::Train), Err(Error::Data(_))));
    let short = dir.path().join("short");
    write_idx(&short, [0, 0, 8, 3], &[2, 2, 2], &[0; 5]);
    assert!(matches!(load_idx(&short, &lab, Split::Train), Err(Error::Format(_))));
    assert!(load_idx(&dir.path().join("missing"), &lab, Split::Train).is_err());
}

fn labeled(counts: &[usize]) -> Dataset {
    let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &k)| vec![c; k]).collect();
    let n = labels.len();
    let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    Dataset::new(Tensor::new(vec![n, 1, 1, 1], x).unwrap(), labels, counts.len(), Split::Train, "toy").unwrap()
}

#[test]
fn select_classes_is_stratified_and_remapped() {
    let ds = labeled(&[500; 10]);
    let sub = ds.select_classes(&[0, 1, 2, 3, 4], 2000, 7).unwrap();
    assert_eq!(sub.len(), 2000);
    assert_eq!(sub.n_classes(), 5);
    for c in 0..5 {
        assert_eq!(sub.labels().iter().filter(|&&l| l == c).count(), 400);
    }
    assert_eq!(sub, ds.select_classes(&[0, 1, 2, 3, 4], 2000, 7).unwrap());
    assert_ne!(sub, ds.select_classes(&[0, 1, 2, 3, 4], 2000, 8).unwrap());
    let high = ds.select_classes(&[9, 5, 7, 6, 8], 50, 1).unwrap();
    for i in 0..high.len() {
        let original = (high.sample(i)[0] * 5000.0).round() as usize / 500;
        assert_eq!(high.labels()[i], original - 5);
    }
}

#[test]
fn select_classes_names_short_class() {
    let ds = labeled(&[10, 3, 10]);
    match ds.select_classes(&[0, 1, 2], 15, 0) {
        Err(Error::Data(msg)) => assert!(msg.contains("class 1"), "{msg}"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(ds.select_classes(&[0, 0], 2, 0), Err(Error::Config(_))));
}

#[test]
fn boundary_examples() {
    assert_eq!(BoundaryKind::Linear.label(0.0, 0.4), 1);
    let f = 0.6 * 0.1 * 1.1 / 2.0;
    assert!((BoundaryKind::Cubic.eval(0.6) - f).abs() < 1e-15);
    assert_eq!(BoundaryKind::Cubic.label(0.6, 0.0), 0);
    assert!(matches!(boundary_dataset(BoundaryKind::Linear, 1, 0), Err(Error::Config(_))));
}

#[test]
fn boundary_labels_recomputable_and_balanced() {
    for kind in [BoundaryKind::Linear, BoundaryKind::Cubic] {
        let ds = boundary_dataset(kind, 10_000, 3).unwrap();
        let oracle = |x: f64, y: f64| match kind {
            BoundaryKind::Linear => y >= 0.5 * x,
            BoundaryKind::Cubic => y >= 0.5 * (x * x * x - 0.25 * x),
        };
        let mismatches = ds
            .points
            .iter()
            .zip(&ds.labels)
            .filter(|(&[x, y], &l)| (l == 1) != oracle(x, y))
            .count();
        assert_eq!(mismatches, 0);
        assert!(ds.points.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
        let frac = ds.labels.iter().sum::<usize>() as f64 / ds.len() as f64;
        assert!((0.45..=0.55).contains(&frac), "{kind:?} {frac}");
        assert_eq!(ds, boundary_dataset(kind, 10_000, 3).unwrap());
    }
}

#[test]
fn cifar_records_parse_channel_major() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("batch.bin");
    let mut bytes = Vec::new();
    for label in [6u8, 2] {
        bytes.push(label);
        bytes.extend((0..3072).map(|i| (i / 1024) as u8 * 100));
    }
    fs::write(&path, &bytes).unwrap();
    let ds = load_cifar_bin(&[&path], Split::Test).unwrap();
    assert_eq!(ds.images().shape(), &[2, 3, 32, 32]);
    assert_eq!(ds.labels(), &[6, 2]);
    assert_eq!(ds.sample(1)[1024], 100.0 / 255.0);
    fs::write(&path, &bytes[..100]).unwrap();
    assert!(matches!(load_cifar_bin(&[&path], Split::Test), Err(Error::Format(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn save_load_is_bit_identical(
        values in prop::collection::vec(-1e3f64..1e3, 1..5).prop_flat_map(|v| {
            let len = v.len();
            (Just(v), prop::collection::vec(0usize..4, 1..6), Just(len))
        })
    ) {
        let (feature, labels, width) = values;
        let n = labels.len();
        let x: Vec<f64> = (0..n).flat_map(|i| feature.iter().map(move |f| f * (i as f64 + 0.37))).collect();
        let ds = Dataset::new(Tensor::new(vec![n, 1, 1, width], x).unwrap(), labels, 4, Split::Test, "prop").unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path(), "d").unwrap();
        let back = load_dataset(dir.path(), "d").unwrap();
        prop_assert_eq!(back.images().shape(), ds.images().shape());
        let bits = |d: &Dataset| d.images().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&ds));
        prop_assert_eq!(back, ds);
    }
}
