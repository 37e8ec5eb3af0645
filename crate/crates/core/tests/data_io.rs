use std::path::Path;

use leakcheck_core::data::{
    encode_pgm, format_float, load_idx, read_pgm, read_report_csv, synthetic_samples, write_pgm,
    write_report_csv, Cell, GrayImage, Report, SyntheticKind, IMAGES_MAGIC, LABELS_MAGIC,
};
use leakcheck_core::Error;
use proptest::prelude::*;

fn idx_bytes(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend(d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p
}

#[test]
fn idx_round_trip_and_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let mut pixels = vec![0u8; 3 * 2 * 2];
    pixels[0] = 255;
    pixels[5] = 51;
    let img = write(
        dir.path(),
        "img",
        &idx_bytes(IMAGES_MAGIC, &[3, 2, 2], &pixels),
    );
    let lab = write(
        dir.path(),
        "lab",
        &idx_bytes(LABELS_MAGIC, &[3], &[7, 0, 9]),
    );
    let ds = load_idx(&img, &lab, None).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.shape, vec![1, 2, 2]);
    assert_eq!(ds.samples[0].x, vec![1.0, 0.0, 0.0, 0.0]);
    assert_eq!(ds.samples[1].x[1], 0.2);
    assert_eq!(
        ds.samples.iter().map(|s| s.label).collect::<Vec<_>>(),
        vec![7, 0, 9]
    );
    assert_eq!(ds.classes, 10);
    let limited = load_idx(&img, &lab, Some(2)).unwrap();
    assert_eq!(limited.len(), 2);
}

#[test]
fn idx_header_of_the_mnist_test_split() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(
        dir.path(),
        "img",
        &idx_bytes(IMAGES_MAGIC, &[10_000, 28, 28], &vec![0u8; 10_000 * 784]),
    );
    let lab = write(
        dir.path(),
        "lab",
        &idx_bytes(LABELS_MAGIC, &[10_000], &vec![0u8; 10_000]),
    );
    let ds = load_idx(&img, &lab, None).unwrap();
    assert_eq!(ds.len(), 10_000);
    assert_eq!(ds.shape, vec![1, 28, 28]);
}

#[test]
fn idx_error_kinds_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(
        dir.path(),
        "img",
        &idx_bytes(IMAGES_MAGIC, &[2, 1, 1], &[1, 2]),
    );
    let lab = write(dir.path(), "lab", &idx_bytes(LABELS_MAGIC, &[2], &[0, 1]));

    let bad = write(dir.path(), "bad", &idx_bytes(IMAGES_MAGIC, &[2], &[0, 1]));
    assert!(matches!(
        load_idx(&img, &bad, None),
        Err(Error::BadMagic {
            expected: LABELS_MAGIC,
            found: IMAGES_MAGIC,
            ..
        })
    ));

    let short = write(
        dir.path(),
        "short",
        &idx_bytes(IMAGES_MAGIC, &[2, 1, 1], &[1]),
    );
    assert!(matches!(
        load_idx(&short, &lab, None),
        Err(Error::Truncated { .. })
    ));
    let stub = write(dir.path(), "stub", &[0, 0, 8]);
    assert!(matches!(
        load_idx(&stub, &lab, None),
        Err(Error::Truncated { .. })
    ));

    let three = write(
        dir.path(),
        "three",
        &idx_bytes(LABELS_MAGIC, &[3], &[0, 1, 2]),
    );
    assert!(matches!(
        load_idx(&img, &three, None),
        Err(Error::CountMismatch {
            images: 2,
            labels: 3
        })
    ));

    assert!(matches!(
        load_idx(&dir.path().join("missing"), &lab, None),
        Err(Error::Io { .. })
    ));
}

#[test]
fn pgm_payload_and_round_trip() {
    let img = GrayImage::new(2, 2, vec![0.0, 1.0, 0.5, 0.5]).unwrap();
    let bytes = encode_pgm(&img);
    assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
    assert_eq!(&bytes[bytes.len() - 4..], &[0, 255, 128, 128]);
    let zeros = encode_pgm(&GrayImage::new(3, 1, vec![0.0; 3]).unwrap());
    assert!(zeros.ends_with(&[0, 0, 0]));

    let dir = tempfile::tempdir().unwrap();
    let pixels: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
    let img = GrayImage::new(4, 3, pixels.clone()).unwrap();
    let path = dir.path().join("a.pgm");
    write_pgm(&img, &path).unwrap();
    let back = read_pgm(&path).unwrap();
    assert_eq!((back.width, back.height), (4, 3));
    for (a, b) in pixels.iter().zip(&back.pixels) {
        assert!((a - b).abs() <= 1.0 / 255.0);
    }
    write_pgm(&img, &dir.path().join("b.pgm")).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(dir.path().join("b.pgm")).unwrap()
    );
}

#[test]
fn csv_header_only_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let empty = Report::new(&["a", "b"]);
    let p = dir.path().join("empty.csv");
    write_report_csv(&empty, &p).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), "a,b\n");

    let mut r = Report::new(&["name", "value", "count", "flag", "gap"]);
    r.comments.push("seed: 3".into());
    r.push(vec![
        Cell::from("x,y"),
        Cell::from(0.1),
        Cell::from(4usize),
        Cell::from(true),
        Cell::Missing,
    ]);
    r.push(vec![
        Cell::from("z"),
        Cell::from(1.0 / 3.0),
        Cell::from(0usize),
        Cell::from(false),
        Cell::from(None),
    ]);
    let p = dir.path().join("r.csv");
    write_report_csv(&r, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.starts_with("# seed: 3\nname,value,count,flag,gap\n"));
    let (comments, header, rows) = read_report_csv(&p).unwrap();
    assert_eq!(comments, vec!["seed: 3".to_string()]);
    assert_eq!(header.len(), 5);
    assert_eq!(rows[0][0], "x,y");
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 0.1);
    assert_eq!(rows[1][1].parse::<f64>().unwrap(), 1.0 / 3.0);
    assert_eq!(rows[1][4], "");

    let p2 = dir.path().join("r2.csv");
    write_report_csv(&r, &p2).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());

    let mut bad = Report::new(&["a"]);
    bad.push(vec![Cell::from(1.0), Cell::from(2.0)]);
    assert!(matches!(
        write_report_csv(&bad, &dir.path().join("bad.csv")),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn synthetic_generators_are_deterministic_and_clipped() {
    let kinds = [
        SyntheticKind::GaussianBlobs {
            classes: 10,
            spread: 0.3,
        },
        SyntheticKind::Separable2class { margin: 0.5 },
        SyntheticKind::Checkerboard { cells: 3 },
    ];
    for kind in &kinds {
        let a = synthetic_samples(kind, 40, &[1, 4, 4], 9).unwrap();
        let b = synthetic_samples(kind, 40, &[1, 4, 4], 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synthetic_samples(kind, 40, &[1, 4, 4], 10).unwrap());
        assert!(a
            .samples
            .iter()
            .all(|s| s.x.len() == 16 && s.x.iter().all(|v| (0.0..=1.0).contains(v))));
        assert!(a.samples.iter().all(|s| s.label < a.classes));
    }
    assert!(synthetic_samples(&kinds[0], 0, &[2], 1).is_err());
    let rgb = synthetic_samples(&kinds[0], 3, &[3, 8, 8], 1).unwrap();
    assert_eq!(rgb.samples[0].x.len(), 192);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn floats_parse_back_exactly(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        prop_assert_eq!(format_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn corrupted_magic_is_rejected(byte in 0usize..4, flip in 1u8..=255) {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = idx_bytes(IMAGES_MAGIC, &[1, 1, 1], &[5]);
        bytes[byte] ^= flip;
        let img = write(dir.path(), "img", &bytes);
        let lab = write(dir.path(), "lab", &idx_bytes(LABELS_MAGIC, &[1], &[0]));
        let r = load_idx(&img, &lab, None);
        prop_assert!(matches!(r, Err(Error::BadMagic { .. })), "{:?}", r);
    }

    #[test]
    fn truncation_anywhere_is_rejected(cut in 0usize..19) {
        let dir = tempfile::tempdir().unwrap();
        let full = idx_bytes(IMAGES_MAGIC, &[1, 1, 3], &[1, 2, 3]);
        let img = write(dir.path(), "img", &full[..cut]);
        let lab = write(dir.path(), "lab", &idx_bytes(LABELS_MAGIC, &[1], &[0]));
        let r = load_idx(&img, &lab, None);
        prop_assert!(matches!(r, Err(Error::Truncated { .. })), "{:?}", r);
    }

    #[test]
    fn loaded_pixels_stay_in_unit_interval(payload in proptest::collection::vec(any::<u8>(), 6)) {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "img", &idx_bytes(IMAGES_MAGIC, &[2, 1, 3], &payload));
        let lab = write(dir.path(), "lab", &idx_bytes(LABELS_MAGIC, &[2], &[1, 2]));
        let ds = load_idx(&img, &lab, None).unwrap();
        prop_assert!(ds.samples.iter().all(|s| s.x.iter().all(|v| (0.0..=1.0).contains(v))));
    }
}
