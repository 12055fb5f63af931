use proptest::prelude::*;

use super::*;
use crate::fixed::{FixedPointFormat, Overflow};
use crate::network::{KernelSize, LayerDescriptor};

fn conv64() -> NetworkConfig {
    NetworkConfig::new(vec![LayerDescriptor::conv3x3("conv64", 32, 64, 64, 16)])
}

fn chain() -> NetworkConfig {
    let mut b = LayerDescriptor::conv3x3("b", 8, 16, 8, 4);
    b.stride = 2;
    let mut c = LayerDescriptor::conv3x3("c", 4, 8, 4, 4);
    c.kernel = KernelSize::OneByOne;
    NetworkConfig::new(vec![LayerDescriptor::conv3x3("a", 8, 3, 16, 8), b, c])
}

/// Rewrites the checksum so edits reach the content checks.
fn reseal(bytes: &mut Vec<u8>) {
    let n = bytes.len() - 4;
    let crc = crc32fast::hash(&bytes[..n]);
    bytes[n..].copy_from_slice(&crc.to_le_bytes());
}

fn config_len(bytes: &[u8]) -> usize {
    u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize
}

#[test]
fn conv64_payload_is_512_bytes() {
    let model = Model::random(conv64(), 1, false).unwrap();
    let bytes = export(&model).unwrap();
    let json = model.config.to_json().len();
    assert_eq!(bytes.len(), 16 + json + 4 + 512 + 4);
    assert_eq!(&bytes[..4], b"MXCV");
    assert_eq!(u32::from_le_bytes(bytes[16 + json..20 + json].try_into().unwrap()), 4096);
}

#[test]
fn roundtrip_restores_model_and_bytes() {
    for keep in [false, true] {
        let model = Model::random(chain(), 7, keep).unwrap();
        let bytes = export(&model).unwrap();
        let back = import(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(export(&back).unwrap(), bytes);
    }
}

#[test]
fn config_section_is_readable_json() {
    let bytes = export(&Model::random(chain(), 2, false).unwrap()).unwrap();
    let text = std::str::from_utf8(&bytes[16..16 + config_len(&bytes)]).unwrap();
    assert!(text.contains("\"kind\": \"deterministic\""));
    assert!(text.contains("\"kernel\": \"1x1\""));
}

#[test]
fn random_scheme_models_carry_latents_only() {
    let mut config = chain();
    // Removing 4 of 1 positions is meaningless, so drop the 1x1 layer.
    let pointwise = config.layers.pop().unwrap();
    let mut with_pointwise = config.clone();
    with_pointwise.layers.push(pointwise);
    with_pointwise.scheme = MaskScheme::Random { removed: 4, seed: 9 };
    assert!(matches!(Model::random(with_pointwise, 3, true), Err(ModelIoError::Invalid(_))));
    config.scheme = MaskScheme::Random { removed: 4, seed: 9 };
    let model = Model::random(config.clone(), 3, true).unwrap();
    assert!(model.bits.is_empty());
    let back = import(&export(&model).unwrap()).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.masks().unwrap()[1].kept_count(), 16 * 8 * 5);
    assert!(matches!(Model::random(config, 3, false), Err(ModelIoError::Malformed(_))));
}

#[test]
fn bad_magic_and_version() {
    let mut bytes = export(&Model::random(conv64(), 1, false).unwrap()).unwrap();
    let mut wrong = bytes.clone();
    wrong[0] = b'X';
    assert!(matches!(import(&wrong), Err(ModelIoError::BadMagic { .. })));
    bytes[4] = 2;
    assert!(matches!(import(&bytes), Err(ModelIoError::UnsupportedVersion(2))));
}

#[test]
fn truncation_is_a_count_mismatch() {
    let bytes = export(&Model::random(chain(), 1, true).unwrap()).unwrap();
    for cut in [0, 3, 10, 20, bytes.len() / 2, bytes.len() - 5, bytes.len() - 1] {
        assert!(
            matches!(import(&bytes[..cut]), Err(ModelIoError::CountMismatch { .. })),
            "cut at {cut}"
        );
    }
}

#[test]
fn payload_corruption_is_a_checksum_failure() {
    let bytes = export(&Model::random(chain(), 1, true).unwrap()).unwrap();
    for pos in [17, 16 + config_len(&bytes) + 5, bytes.len() - 9, bytes.len() - 2] {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x10;
        assert!(matches!(import(&bad), Err(ModelIoError::ChecksumMismatch { .. })), "byte {pos}");
    }
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(import(&long), Err(ModelIoError::Malformed(_))));
}

#[test]
fn stored_mask_positions_are_rejected() {
    let mut bytes = export(&Model::random(conv64(), 1, false).unwrap()).unwrap();
    bytes[6] |= 0b10;
    reseal(&mut bytes);
    assert!(matches!(import(&bytes), Err(ModelIoError::Malformed(m)) if m.contains("mask positions")));
    bytes[6] = 0b1000;
    reseal(&mut bytes);
    assert!(matches!(import(&bytes), Err(ModelIoError::Malformed(m)) if m.contains("reserved")));
}

#[test]
fn declared_bits_must_match_config() {
    let mut bytes = export(&Model::random(conv64(), 1, false).unwrap()).unwrap();
    let at = 16 + config_len(&bytes);
    // 4088 bits still need 511 bytes, so the stream stays aligned and only
    // the count is wrong.
    bytes[at..at + 4].copy_from_slice(&4088u32.to_le_bytes());
    bytes.remove(at + 4);
    reseal(&mut bytes);
    assert!(matches!(
        import(&bytes),
        Err(ModelIoError::CountMismatch {
            expected: 4096,
            found: 4088,
            ..
        })
    ));
}

#[test]
fn invalid_config_is_rejected_on_export_and_import() {
    let mut config = conv64();
    config.layers[0].p = 24;
    let model = Model {
        config,
        bits: Vec::new(),
        latents: None,
    };
    assert!(matches!(export(&model), Err(ModelIoError::Invalid(_))));

    let mut bytes = export(&Model::random(conv64(), 1, false).unwrap()).unwrap();
    let text = std::str::from_utf8(&bytes[16..16 + config_len(&bytes)]).unwrap().replace("\"p\": 16", "\"p\": 24");
    bytes.splice(16..16 + config_len(&bytes), text.bytes());
    reseal(&mut bytes);
    assert!(matches!(import(&bytes), Err(ModelIoError::Invalid(Error::InvalidConfig(_)))));
}

#[test]
fn out_of_range_latent_is_malformed() {
    let model = Model::random(conv64(), 1, true).unwrap();
    let mut bytes = export(&model).unwrap();
    let at = bytes.len() - 8;
    bytes[at..at + 4].copy_from_slice(&1.5f32.to_le_bytes());
    reseal(&mut bytes);
    assert!(matches!(import(&bytes), Err(ModelIoError::Malformed(_))));
}

#[test]
fn ingest_examples() {
    let config = chain();
    let zeros: Vec<_> = config.layers.iter().map(|d| KernelTensor::zeros(d.kernel_shape())).collect();
    let (latents, clipped) = ingest_float_weights(&write_float_weights(&zeros).unwrap(), &config).unwrap();
    assert_eq!(clipped, 0);
    assert!(latents.iter().all(|w| w.weights().as_slice().iter().all(|v| *v == 0.0)));

    let mut big = zeros.clone();
    big[0].as_mut_slice()[0] = 1.5;
    big[2].as_mut_slice()[3] = -7.0;
    let (latents, clipped) = ingest_float_weights(&write_float_weights(&big).unwrap(), &config).unwrap();
    assert_eq!(clipped, 2);
    assert_eq!(latents[0].weights().as_slice()[0], 1.0);
    assert_eq!(latents[2].weights().as_slice()[3], -1.0);

    let mut off = zeros.clone();
    off[1] = KernelTensor::zeros(KernelShape::square(3, 17, 8));
    let err = ingest_float_weights(&write_float_weights(&off).unwrap(), &config).unwrap_err();
    assert!(matches!(err, ModelIoError::ShapeMismatch(_)));
    let err = ingest_float_weights(&write_float_weights(&zeros[..2]).unwrap(), &config).unwrap_err();
    assert!(matches!(err, ModelIoError::ShapeMismatch(_)));
}

#[test]
fn ingest_then_quantize_matches_signs() {
    let config = chain();
    let kernels: Vec<_> = config
        .layers
        .iter()
        .map(|d| KernelTensor::from_fn(d.kernel_shape(), |i, l, k, o| ((i + 2 * l + 3 * k + 5 * o) % 7) as f64 - 3.0))
        .collect();
    let (latents, _) = ingest_float_weights(&write_float_weights(&kernels).unwrap(), &config).unwrap();
    let model = Model::from_latents(config, latents.clone(), false).unwrap();
    for (plane, w) in model.bits.iter().zip(&latents) {
        assert_eq!(plane.to_kernel(), w.binarized_kernel());
    }
}

#[test]
fn float_weight_and_tensor_files_reject_garbage() {
    assert!(matches!(read_float_weights(b"MXFT\0\0\0\0"), Err(ModelIoError::BadMagic { .. })));
    let bytes = write_float_weights(&[KernelTensor::zeros(KernelShape::square(3, 1, 1))]).unwrap();
    assert!(matches!(
        read_float_weights(&bytes[..bytes.len() - 1]),
        Err(ModelIoError::CountMismatch { .. })
    ));
    assert!(matches!(read_tensor(&bytes), Err(ModelIoError::BadMagic { .. })));
}

#[test]
fn tensor_roundtrip() {
    let t = FeatureTensor::from_fn(3, 4, 2, |i, j, k| (i as f64) - 0.5 * j as f64 + 0.25 * k as f64);
    let bytes = write_tensor(&t).unwrap();
    assert_eq!(bytes.len(), 16 + 4 * 24);
    assert_eq!(read_tensor(&bytes).unwrap(), t);
    assert!(matches!(read_tensor(&bytes[..20]), Err(ModelIoError::CountMismatch { .. })));
}

#[test]
fn file_helpers() {
    let dir = std::env::temp_dir().join(format!("mxconv-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("m.mxcv");
    let model = Model::random(chain(), 5, false).unwrap();
    save_model(&path, &model).unwrap();
    assert_eq!(load_model(&path).unwrap(), model);
    assert!(matches!(load_model(&dir.join("missing")), Err(ModelIoError::Io(_))));
    std::fs::remove_dir_all(dir).unwrap();
}

fn arb_config() -> impl Strategy<Value = NetworkConfig> {
    let layer = (1usize..5, 0usize..3, 1usize..3, any::<bool>());
    (
        prop::collection::vec(layer, 1..4),
        1usize..6,
        3usize..9,
        prop_oneof![Just(Overflow::Saturate), Just(Overflow::Wrap)],
        8u8..17,
    )
        .prop_map(|(layers, k0, j0, overflow, bits)| {
            let fmt = FixedPointFormat::new(bits, bits / 2, overflow).unwrap();
            let (mut k, mut j) = (k0, j0);
            let mut out = Vec::new();
            for (i, (groups, p_pow, stride, one_by_one)) in layers.into_iter().enumerate() {
                let p = 1 << p_pow;
                let stride = if j >= 6 { stride } else { 1 };
                let mut d = LayerDescriptor::conv3x3(format!("l{i}"), j, k, groups * p, p);
                d.stride = stride;
                d.fmt = fmt;
                if one_by_one {
                    d.kernel = KernelSize::OneByOne;
                }
                k = d.l_max;
                j = d.output_j_max();
                out.push(d);
            }
            NetworkConfig::new(out)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn byte_roundtrip_identity(config in arb_config(), seed: u64, keep: bool) {
        let model = Model::random(config, seed, keep).unwrap();
        let bytes = export(&model).unwrap();
        let back = import(&bytes).unwrap();
        prop_assert_eq!(export(&back).unwrap(), bytes);
        prop_assert_eq!(back, model);
    }

    #[test]
    fn any_single_bit_flip_is_caught(config in arb_config(), seed: u64, at in any::<prop::sample::Index>(), bit in 0u8..8) {
        let bytes = export(&Model::random(config, seed, false).unwrap()).unwrap();
        let mut bad = bytes.clone();
        bad[at.index(bytes.len())] ^= 1 << bit;
        prop_assert!(import(&bad).is_err());
    }
}
