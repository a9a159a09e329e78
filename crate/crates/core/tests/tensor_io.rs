mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use prunepack::importance::{importance_from_tensors, parse_scores};
use prunepack::{
    compute_channel_importance, load_tensor_dir, parse_latency_table, write_tensor_dir, DistillInputs, Error,
    ImportanceMode, ScoreSample, TensorBlob, TensorData,
};

fn blob() -> impl Strategy<Value = TensorBlob> {
    (prop::collection::vec(1usize..4, 1..4), any::<bool>(), "[a-z]{1,6}(/[a-z0-9]{1,4}){0,2}").prop_flat_map(|(shape, f32, key)| {
        let n: usize = shape.iter().product();
        let key2 = key.clone();
        let shape2 = shape.clone();
        if f32 {
            prop::collection::vec(any::<f32>(), n).prop_map(move |v| TensorBlob::f32(key.clone(), shape.clone(), v).unwrap()).boxed()
        } else {
            prop::collection::vec(any::<f64>(), n).prop_map(move |v| TensorBlob::f64(key2.clone(), shape2.clone(), v).unwrap()).boxed()
        }
    })
}

fn bits(data: &TensorData) -> Vec<u64> {
    match data {
        TensorData::F32(v) => v.iter().map(|x| x.to_bits() as u64).collect(),
        TensorData::F64(v) => v.iter().map(|x| x.to_bits()).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_read_is_bitwise_identical(blobs in prop::collection::btree_map("[a-z]{1,8}", blob(), 1..5)) {
        let blobs: Vec<TensorBlob> = blobs.into_iter().map(|(k, mut b)| { b.key = k; b }).collect();
        let dir = tempfile::tempdir().unwrap();
        write_tensor_dir(dir.path(), &blobs).unwrap();
        let back = load_tensor_dir(dir.path()).unwrap();
        prop_assert_eq!(back.len(), blobs.len());
        for b in &blobs {
            let r = &back[&b.key];
            prop_assert_eq!(&r.shape, &b.shape);
            prop_assert_eq!(r.dtype(), b.dtype());
            prop_assert_eq!(bits(&r.data), bits(&b.data));
        }
    }
}

fn one_conv() -> prunepack::NetworkGraph {
    let mut b = prunepack::GraphBuilder::new(2, 4, 4);
    let c = b.conv("conv", b.input(), 3, 1, 4, 4);
    b.output(c);
    b.build().unwrap()
}

#[test]
fn importance_from_weight_and_gradient_dumps() {
    let g = one_conv();
    let w: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
    let g0: Vec<f64> = (0..6).map(|i| 0.1 * i as f64).collect();
    let g1: Vec<f64> = (0..6).map(|i| -0.2 * i as f64 + 0.3).collect();
    let blobs = [
        TensorBlob::f64("weights/conv", vec![3, 2, 1, 1], w.clone()).unwrap(),
        TensorBlob::f64("grads/conv/0", vec![3, 2, 1, 1], g0.clone()).unwrap(),
        TensorBlob::f64("grads/conv/1", vec![3, 2, 1, 1], g1.clone()).unwrap(),
    ];
    let tensors: BTreeMap<String, TensorBlob> = blobs.iter().map(|b| (b.key.clone(), b.clone())).collect();
    let rows = |v: &[f64]| v.chunks(2).map(<[f64]>::to_vec).collect::<Vec<_>>();
    let sample = ScoreSample { layer_id: "conv".into(), weights: rows(&w), grads: vec![rows(&g0), rows(&g1)] };
    for mode in [ImportanceMode::AbsProduct, ImportanceMode::AbsTaylor, ImportanceMode::SignedTaylor] {
        let got = importance_from_tensors(&g, &tensors, mode).unwrap();
        assert_eq!(got, vec![compute_channel_importance(&sample, mode).unwrap()]);
    }

    let mut gap = tensors.clone();
    let moved = gap.remove("grads/conv/1").unwrap();
    gap.insert("grads/conv/2".into(), TensorBlob { key: "grads/conv/2".into(), ..moved });
    assert!(matches!(importance_from_tensors(&g, &gap, ImportanceMode::AbsProduct), Err(Error::Manifest(_))));

    let mut wrong = tensors;
    wrong.insert("weights/conv".into(), TensorBlob::f64("weights/conv", vec![2, 3], w).unwrap());
    assert!(matches!(importance_from_tensors(&g, &wrong, ImportanceMode::AbsProduct), Err(Error::ShapeMismatch(_))));
}

#[test]
fn score_and_latency_documents() {
    let scores = parse_scores(r#"{"b": [1.0, 2.0], "a": [0.5]}"#, ImportanceMode::AbsTaylor).unwrap();
    assert_eq!(scores.iter().map(|s| s.layer_id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    assert!(scores.iter().all(|s| s.mode == ImportanceMode::AbsTaylor));
    assert!(matches!(parse_scores("{\"a\": [1.0,\n oops]}", ImportanceMode::AbsProduct), Err(Error::Parse { line: 2, .. })));

    let table = parse_latency_table(r#"{"conv": 64.0, "fc": 1.5}"#).unwrap();
    assert_eq!(table["conv"], 64.0);
    assert!(parse_latency_table(r#"{"conv": "fast"}"#).is_err());
}

#[test]
fn distill_inputs_from_dump() {
    let dir = tempfile::tempdir().unwrap();
    let blobs = [
        TensorBlob::f32("teacher/logits", vec![2, 3], vec![0.0, 1.0, 2.0, 1.0, 0.0, -1.0]).unwrap(),
        TensorBlob::f32("student/logits", vec![2, 3], vec![0.5, 1.0, 1.5, 0.0, 0.0, 0.0]).unwrap(),
        TensorBlob::f64("teacher/features/conv", vec![2, 4, 2, 2], vec![1.0; 32]).unwrap(),
        TensorBlob::f64("student/features/conv", vec![2, 3, 2, 2], vec![1.0; 24]).unwrap(),
        TensorBlob::f64("reconstruction/conv", vec![4, 3], vec![0.0; 12]).unwrap(),
    ];
    write_tensor_dir(dir.path(), &blobs).unwrap();
    let inputs = DistillInputs::from_tensors(&load_tensor_dir(dir.path()).unwrap()).unwrap();
    assert_eq!(inputs.teacher_logits.as_ref().unwrap().shape(), (2, 3));
    assert_eq!(inputs.layers.len(), 1);
    let (t, s, m) = &inputs.layers[0];
    assert_eq!((t.batch(), t.channels(), t.positions()), (2, 4, 4));
    assert_eq!(s.channels(), 3);
    assert_eq!(m.as_ref().unwrap().m.shape(), (4, 3));

    let mut missing: BTreeMap<String, TensorBlob> = blobs.iter().map(|b| (b.key.clone(), b.clone())).collect();
    missing.remove("student/features/conv");
    assert!(matches!(DistillInputs::from_tensors(&missing), Err(Error::MissingTensor(_))));
}
