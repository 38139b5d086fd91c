use adadfq::data::{make_blobs, SeededRng, Stream};
use adadfq::nn::{accuracy, train_classifier, Architecture, Layer, Mlp, TrainSettings};
use adadfq::quant::{build_quantized_student, QuantSpec};

fn trained_teacher(seed: u64) -> (Mlp, adadfq::data::Dataset) {
    let data = make_blobs(4, 200, 8, 1.0, seed).unwrap();
    let root = SeededRng::new(seed);
    let mut teacher = Mlp::new(
        Architecture {
            input_dim: 8,
            hidden: vec![16, 16, 16],
            output_dim: 4,
        },
        &mut root.substream(Stream::Init),
    )
    .unwrap();
    let settings = TrainSettings {
        epochs: 15,
        ..Default::default()
    };
    train_classifier(
        &mut teacher,
        &data.train.features,
        &data.train.labels,
        &settings,
        &mut root.substream(Stream::Shuffle),
    )
    .unwrap();
    (teacher, data)
}

#[test]
fn student_keeps_latent_weights_and_statistics() {
    let (teacher, _) = trained_teacher(5);
    let student = build_quantized_student(&teacher, QuantSpec::new(4).unwrap()).unwrap();
    for (a, b) in teacher.params().iter().zip(student.params()) {
        let a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }
    for (a, b) in teacher.bn_layers().zip(student.bn_layers()) {
        assert_eq!(a.running_mean, b.running_mean);
        assert_eq!(a.running_var, b.running_var);
    }
    let relus = teacher.layers().iter().filter(|l| matches!(l, Layer::Relu)).count();
    let q = student.quantization().unwrap();
    assert_eq!(q.sites.len(), relus);
    assert!(q
        .sites
        .iter()
        .all(|s| s.range.is_some_and(|r| r.min == 0.0 && r.max > 0.0)));
}

#[test]
fn thirty_two_bits_is_lossless_on_held_out_data() {
    let (teacher, data) = trained_teacher(6);
    let student = build_quantized_student(&teacher, QuantSpec::new(32).unwrap()).unwrap();
    let zp = teacher.predict_logits(&data.test.features).unwrap();
    let zq = student.predict_logits(&data.test.features).unwrap();
    let worst = zp
        .data()
        .iter()
        .zip(zq.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "max logit difference {worst}");
    let ta = accuracy(&teacher, &data.test.features, &data.test.labels).unwrap();
    let qa = accuracy(&student, &data.test.features, &data.test.labels).unwrap();
    assert!((ta - qa).abs() <= 1e-3);
}

#[test]
fn two_bits_costs_accuracy() {
    let (teacher, data) = trained_teacher(7);
    let ta = accuracy(&teacher, &data.test.features, &data.test.labels).unwrap();
    let student = build_quantized_student(&teacher, QuantSpec::new(2).unwrap()).unwrap();
    let qa = accuracy(&student, &data.test.features, &data.test.labels).unwrap();
    assert!(qa < ta, "teacher {ta} student {qa}");
}
