use desot::format::{
    decode_dataset, decode_model, decode_sequences, encode_dataset, encode_model, encode_sequences,
    load_dataset, save_dataset, FormatError,
};
use desot::CliError;
use desot_core::data::{FrameDataset, SequenceDataset};
use desot_core::{MlpModel, SequenceSample};
use proptest::prelude::*;

fn le32(v: u32) -> [u8; 4] {
    v.to_le_bytes()
}

fn tiny_frames() -> FrameDataset {
    FrameDataset::new(
        1,
        2,
        1,
        vec!["ab".into(), "c".into()],
        vec![1, 0],
        vec![0.0, 0.25, 0.5, 1.0],
    )
    .unwrap()
}

#[test]
fn dataset_bytes_match_layout() {
    let mut expected = b"DSET".to_vec();
    for v in [1u32, 2, 1, 2, 1, 2] {
        expected.extend(le32(v));
    }
    expected.extend(le32(2));
    expected.extend(b"ab");
    expected.extend(le32(1));
    expected.extend(b"c");
    expected.extend(1u16.to_le_bytes());
    expected.extend(0u16.to_le_bytes());
    for p in [0.0f32, 0.25, 0.5, 1.0] {
        expected.extend(p.to_le_bytes());
    }
    assert_eq!(encode_dataset(&tiny_frames()).unwrap(), expected);
    assert_eq!(decode_dataset(&expected).unwrap(), tiny_frames());
}

fn tiny_sequences() -> SequenceDataset {
    let s0 = SequenceSample::new(vec![vec![0.5], vec![0.75]], 0, 7).unwrap();
    let s1 = SequenceSample::new(vec![vec![1.0], vec![0.0]], 0, 3).unwrap();
    SequenceDataset::new(1, 1, 1, vec!["z".into()], 2, vec![s0, s1], None).unwrap()
}

#[test]
fn sequence_bytes_match_layout() {
    let mut expected = b"DSEQ".to_vec();
    for v in [1u32, 2, 1, 1, 1, 1, 2] {
        expected.extend(le32(v));
    }
    expected.extend(le32(1));
    expected.extend(b"z");
    expected.extend([0u8, 0, 0, 0]);
    expected.extend(7u64.to_le_bytes());
    expected.extend(3u64.to_le_bytes());
    for p in [0.5f32, 0.75, 1.0, 0.0] {
        expected.extend(p.to_le_bytes());
    }
    assert_eq!(encode_sequences(&tiny_sequences()).unwrap(), expected);
    assert_eq!(decode_sequences(&expected).unwrap(), tiny_sequences());
}

#[test]
fn model_bytes_match_layout() {
    let model = MlpModel::from_parts(
        vec![2, 1, 2],
        vec![vec![0.5, -1.0], vec![2.0, 0.125]],
        vec![vec![0.25], vec![-0.5, 1.5]],
        0.2,
        0,
    )
    .unwrap();
    let mut expected = b"MLPW".to_vec();
    for v in [1u32, 2, 2, 1, 1, 2] {
        expected.extend(le32(v));
    }
    expected.extend(0.2f64.to_le_bytes());
    for w in [0.5f32, -1.0, 2.0, 0.125, 0.25, -0.5, 1.5] {
        expected.extend(w.to_le_bytes());
    }
    let bytes = encode_model(&model).unwrap();
    assert_eq!(bytes, expected);
    assert_eq!(decode_model(&bytes).unwrap(), model);
}

#[test]
fn model_round_trip_is_bit_exact_after_f32_rounding() {
    let model = MlpModel::init(&[12, 9, 5, 3], 0.3, 42).unwrap();
    let bytes = encode_model(&model).unwrap();
    let back = decode_model(&bytes).unwrap();
    let rounded = model.rounded_to_f32();
    assert_eq!(back.dims(), rounded.dims());
    assert_eq!(back.weights(), rounded.weights());
    assert_eq!(back.biases(), rounded.biases());
    assert_eq!(back.dropout_rate(), 0.3);
    assert_eq!(encode_model(&back).unwrap(), bytes);
}

#[test]
fn bad_magic_is_reported() {
    let mut bytes = encode_dataset(&tiny_frames()).unwrap();
    bytes[0] = b'X';
    let e = decode_dataset(&bytes).unwrap_err();
    assert!(matches!(e, FormatError::BadMagic { .. }));
    assert!(e.to_string().contains("bad magic"));
    assert!(matches!(
        decode_sequences(&encode_dataset(&tiny_frames()).unwrap()),
        Err(FormatError::BadMagic { .. })
    ));
}

#[test]
fn wrong_version_is_rejected() {
    let mut bytes = encode_model(&MlpModel::init(&[2, 2], 0.0, 1).unwrap()).unwrap();
    bytes[4] = 9;
    assert!(matches!(decode_model(&bytes), Err(FormatError::Version(9))));
}

#[test]
fn every_truncation_is_an_error() {
    let full = encode_sequences(&tiny_sequences()).unwrap();
    for cut in 0..full.len() {
        assert!(
            decode_sequences(&full[..cut]).is_err(),
            "prefix of {cut} bytes decoded"
        );
    }
    let full = encode_dataset(&tiny_frames()).unwrap();
    let e = decode_dataset(&full[..full.len() - 1]).unwrap_err();
    assert!(matches!(e, FormatError::Truncated { .. }), "{e:?}");
}

#[test]
fn trailing_bytes_are_rejected() {
    let mut bytes = encode_dataset(&tiny_frames()).unwrap();
    bytes.push(0);
    assert!(matches!(
        decode_dataset(&bytes),
        Err(FormatError::Trailing(1))
    ));
}

#[test]
fn out_of_range_label_names_the_record() {
    let mut bytes = encode_dataset(&tiny_frames()).unwrap();
    // labels start after 6 header words and the two names (4+2, 4+1 bytes)
    let label_at = 4 + 6 * 4 + 6 + 5;
    bytes[label_at + 2] = 5;
    let e = decode_dataset(&bytes).unwrap_err();
    assert!(e.to_string().contains("record 1"), "{e}");
}

#[test]
fn pixels_outside_unit_interval_are_rejected() {
    let mut bytes = encode_dataset(&tiny_frames()).unwrap();
    let n = bytes.len();
    bytes[n - 4..].copy_from_slice(&2.0f32.to_le_bytes());
    assert!(decode_dataset(&bytes)
        .unwrap_err()
        .to_string()
        .contains("record 1"));
}

#[test]
fn missing_file_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let e = load_dataset(&dir.path().join("absent.dset")).unwrap_err();
    assert_eq!(e.exit_code(), 1);
    assert!(matches!(e, CliError::Validation(_)));
}

#[test]
fn save_then_load_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/dir/frames.dset");
    save_dataset(&tiny_frames(), &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), tiny_frames());
}

fn frame_dataset() -> impl Strategy<Value = FrameDataset> {
    (1usize..4, 1usize..4, 1usize..4, 1usize..5, 0usize..6).prop_flat_map(|(h, w, k, c, n)| {
        let frame = h * w * k;
        (
            proptest::collection::vec(0..c, n),
            proptest::collection::vec(0.0f32..=1.0, n * frame),
            proptest::collection::vec("[a-z_é]{0,6}", c),
        )
            .prop_map(move |(labels, pixels, names)| {
                FrameDataset::new(h, w, k, names, labels, pixels).unwrap()
            })
    })
}

fn sequence_dataset() -> impl Strategy<Value = SequenceDataset> {
    (1usize..3, 1usize..3, 1usize..4, 1usize..4, 0usize..5).prop_flat_map(|(h, k, t, c, n)| {
        let frame = h * k;
        (
            proptest::collection::vec(
                (0..c, proptest::collection::vec(0.0f32..=1.0, t * frame)),
                n,
            ),
            proptest::collection::hash_set(any::<u64>(), n),
        )
            .prop_map(move |(items, ids)| {
                let seqs = items
                    .into_iter()
                    .zip(ids)
                    .map(|((label, px), id)| {
                        SequenceSample::new(
                            px.chunks(frame).map(<[f32]>::to_vec).collect(),
                            label,
                            id,
                        )
                        .unwrap()
                    })
                    .collect();
                let names = (0..c).map(|i| format!("class{i}")).collect();
                SequenceDataset::new(h, 1, k, names, t, seqs, None).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn dataset_round_trip(ds in frame_dataset()) {
        let bytes = encode_dataset(&ds).unwrap();
        let back = decode_dataset(&bytes).unwrap();
        prop_assert_eq!(encode_dataset(&back).unwrap(), bytes);
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn sequence_round_trip(ds in sequence_dataset()) {
        let bytes = encode_sequences(&ds).unwrap();
        let back = decode_sequences(&bytes).unwrap();
        prop_assert_eq!(encode_sequences(&back).unwrap(), bytes);
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn model_round_trip(dims in proptest::collection::vec(1usize..7, 2..5), seed in any::<u64>(), p in 0.0f64..0.9) {
        let model = MlpModel::init(&dims, p, seed).unwrap();
        let bytes = encode_model(&model).unwrap();
        let back = decode_model(&bytes).unwrap();
        prop_assert_eq!(encode_model(&back).unwrap(), bytes);
        let rounded = model.rounded_to_f32();
        prop_assert_eq!(back.weights(), rounded.weights());
    }

    #[test]
    fn garbage_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
        let _ = decode_dataset(&bytes);
        let _ = decode_sequences(&bytes);
        let _ = decode_model(&bytes);
    }
}
