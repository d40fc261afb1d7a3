use std::fs;
use std::path::{Path, PathBuf};

use genksc::grid::{parse_pgm, quantize, ImageGrid, SEPARATOR};
use genksc::idx::{encode_images, encode_labels, load_idx, parse_images, parse_labels, IdxImages};
use genksc::{checkpoint, FormatError};
use genksc_core::data::{circle_centers, synth_gaussians};
use genksc_core::nn::Architecture;
use genksc_core::train::{TrainConfig, TrainState};
use proptest::prelude::*;
use tempfile::TempDir;

fn images() -> impl Strategy<Value = IdxImages> {
    (0usize..5, 1usize..6, 1usize..6).prop_flat_map(|(n, h, w)| {
        proptest::collection::vec(any::<u8>(), n * h * w).prop_map(move |pixels| IdxImages { n, height: h, width: w, pixels })
    })
}

proptest! {
    #[test]
    fn idx_images_round_trip(img in images()) {
        let bytes = encode_images(&img);
        prop_assert_eq!(bytes.len(), 16 + img.pixels.len());
        prop_assert_eq!(parse_images(&bytes).unwrap(), img);
    }

    #[test]
    fn idx_labels_round_trip(labels in proptest::collection::vec(any::<u8>(), 0..50)) {
        prop_assert_eq!(parse_labels(&encode_labels(&labels)).unwrap(), labels);
    }

    #[test]
    fn idx_truncation_is_detected(img in images(), cut in 1usize..8) {
        let bytes = encode_images(&img);
        let cut = cut.min(bytes.len());
        prop_assert!(parse_images(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn quantize_is_monotone(a in -1.0f64..2.0, b in -1.0f64..2.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantize(lo) <= quantize(hi));
    }
}

#[test]
fn idx_error_cases() {
    let img = IdxImages { n: 1, height: 2, width: 2, pixels: vec![1, 2, 3, 4] };
    let mut bytes = encode_images(&img);
    assert!(matches!(parse_labels(&bytes), Err(FormatError::BadMagic { expected: 0x801, found: 0x803 })));
    bytes.push(0);
    assert!(matches!(parse_images(&bytes), Err(FormatError::Invalid(_))));

    let tmp = TempDir::new().unwrap();
    let (ip, lp) = (tmp.path().join("img"), tmp.path().join("lab"));
    fs::write(&ip, encode_images(&img)).unwrap();
    fs::write(&lp, encode_labels(&[3, 4])).unwrap();
    assert!(matches!(load_idx(&ip, Some(&lp)), Err(FormatError::Invalid(_))));
    fs::write(&lp, encode_labels(&[3])).unwrap();
    let ds = load_idx(&ip, Some(&lp)).unwrap();
    assert_eq!(ds.labels, Some(vec![3]));
    assert_eq!(ds.samples.shape(), &[1, 1, 2, 2]);
    assert_eq!(ds.samples.data()[3], 4.0 / 255.0);
    assert!(matches!(load_idx(&tmp.path().join("none"), None), Err(FormatError::Io(_))));
}

#[test]
fn pgm_layout_and_determinism() {
    let tiles: Vec<Vec<f64>> = (0..6).map(|t| (0..6).map(|p| (t * 6 + p) as f64 / 35.0).collect()).collect();
    let g = ImageGrid::new(2, 3, 2, 3, tiles.clone(), "grid").unwrap();
    let bytes = g.encode_pgm();
    assert_eq!(bytes, ImageGrid::new(2, 3, 2, 3, tiles.clone(), "grid").unwrap().encode_pgm());
    let (w, h, px) = parse_pgm(&bytes).unwrap();
    assert_eq!((w, h), (3 * 3 + 2 * SEPARATOR, 2 * 2 + SEPARATOR));
    // Tile (1, 2) starts below one separator and right of two.
    let (r0, c0) = (2 + SEPARATOR, 2 * (3 + SEPARATOR));
    for y in 0..2 {
        for x in 0..3 {
            assert_eq!(px[(r0 + y) * w + c0 + x], quantize(tiles[5][y * 3 + x]));
        }
    }
    // Separator pixels are white.
    assert!((0..w).all(|x| px[2 * w + x] == 255));
    assert!(ImageGrid::new(2, 3, 2, 3, tiles[..5].to_vec(), "").is_err());
    assert!(parse_pgm(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn checkpoint_file_round_trip() {
    let cfg = TrainConfig {
        epochs: 3,
        warmup_epochs: 1,
        batch_size: 10,
        arch: Architecture::Mlp { hidden: vec![6] },
        feature_dim: 5,
        s: 3,
        k: 3,
        ..TrainConfig::default()
    };
    let data = synth_gaussians(&circle_centers(3, 3.0), 10, 0.4, 4).unwrap();
    let mut st = TrainState::new(cfg, &[2]).unwrap();
    for _ in 0..3 {
        st.run_epoch(&data).unwrap();
    }
    st.finish(&data).unwrap();
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("c.bin");
    checkpoint::save(&st, &p).unwrap();
    let back = checkpoint::load(&p).unwrap();
    assert_eq!(back, st);
    assert_eq!(fs::read(&p).unwrap(), checkpoint::encode(&back));
    assert_eq!(&fs::read(&p).unwrap()[..8], checkpoint::MAGIC);
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("GENKSC_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

#[test]
fn mnist_digit_filter_count() {
    let dir = mnist_dir();
    let (ip, lp) = (dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"));
    if !ip.is_file() || !lp.is_file() {
        eprintln!("skipping: no MNIST files under {}", dir.display());
        return;
    }
    // Independent count straight from the label bytes, past the 8-byte header.
    let raw = fs::read(&lp).unwrap();
    let expected = raw[8..].iter().filter(|&&l| l <= 2).count();
    assert_eq!(expected, 18_623);
    let ds = load_idx(&ip, Some(&lp)).unwrap();
    assert_eq!(ds.len(), 60_000);
    let f = ds.filter_classes(&[0, 1, 2]).unwrap();
    assert_eq!(f.len(), expected);
    let labels = f.labels.as_ref().unwrap();
    let first = raw[8..].iter().position(|&l| l <= 2).unwrap();
    assert_eq!(labels[0], usize::from(raw[8 + first]));
    assert_eq!(f.samples.shape(), &[expected, 1, 28, 28]);
}
