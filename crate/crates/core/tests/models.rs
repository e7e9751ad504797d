use eapred::labeling::Direction;
use eapred::models::{
    attention::positional_encoding, read_checkpoint, write_checkpoint, Checkpoint, ForwardCtx, ModelConfig, ModelError,
    ModelKind, ModelParams, Prediction,
};
use eapred::numerics::{GradCheckConfig, Graph, Mode, RngStream, Tensor};
use eapred::training::{check_model_gradients, reduced_config, LossSpec};
use std::path::Path;

const KINDS: [ModelKind; 3] = [ModelKind::LogReg, ModelKind::Lstm, ModelKind::Attention];

fn random_window(seed: u64, rows: usize, cols: usize) -> Tensor {
    let mut rng = RngStream::named(seed, "window");
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn small(kind: ModelKind) -> ModelConfig {
    reduced_config(kind, 21, 3)
}

fn logits(params: &ModelParams, x: &Tensor, mode: Mode, rng: Option<&mut RngStream>) -> Vec<f64> {
    let g = Graph::new();
    let vars = params.bind(&g);
    let mut ctx = ForwardCtx {
        mode,
        rng,
        attention_maps: None,
    };
    eapred::models::forward(&g, &params.config, &vars, x, &mut ctx)
        .unwrap()
        .value()
        .data()
        .to_vec()
}

#[test]
fn zero_weights_give_uniform_probabilities() {
    for kind in KINDS {
        let params = ModelParams::zeros(&ModelConfig::new(kind, 21, 30)).unwrap();
        let p = params.predict(&random_window(1, 30, 21)).unwrap();
        for v in p.class_probs {
            assert!((v - 1.0 / 3.0).abs() < 1e-12, "{kind:?}: {:?}", p.class_probs);
        }
        // ties go to the lowest index
        assert_eq!(p.predicted_class, Direction::Up);
    }
}

#[test]
fn prediction_argmax_ties() {
    assert_eq!(Prediction::from_probs([0.2, 0.4, 0.4]).predicted_class, Direction::Down);
    assert_eq!(Prediction::from_probs([0.1, 0.2, 0.7]).predicted_class, Direction::Neutral);
}

#[test]
fn logreg_matches_flattened_oracle() {
    let cfg = ModelConfig {
        seed: 11,
        ..ModelConfig::new(ModelKind::LogReg, 4, 3)
    };
    let params = ModelParams::init(&cfg).unwrap();
    let x = random_window(2, 3, 4);
    let w = params.get("logreg.w").unwrap();
    let b = params.get("logreg.b").unwrap();
    let flat: Vec<f64> = (0..3).flat_map(|t| x.row(t).to_vec()).collect();
    let z: Vec<f64> = (0..3)
        .map(|k| b.get(0, k) + (0..12).map(|j| w.get(k, j) * flat[j]).sum::<f64>())
        .collect();
    let expected = softmax(&z);
    let got = params.predict(&x).unwrap().class_probs;
    for k in 0..3 {
        assert!((got[k] - expected[k]).abs() < 1e-14);
    }
}

#[test]
fn lstm_single_step_matches_hand_cell() {
    let mut cfg = ModelConfig::new(ModelKind::Lstm, 3, 1);
    cfg.lstm.layers = 1;
    cfg.lstm.hidden = 2;
    cfg.seed = 5;
    let params = ModelParams::init(&cfg).unwrap();
    let x = random_window(3, 1, 3);
    let (wx, bias) = (params.get("lstm.0.w_x").unwrap(), params.get("lstm.0.b").unwrap());
    let h_dim = 2;
    let z: Vec<f64> = (0..4 * h_dim)
        .map(|j| bias.get(0, j) + (0..3).map(|i| x.get(0, i) * wx.get(i, j)).sum::<f64>())
        .collect();
    // h0 = c0 = 0, so the forget gate and w_h drop out
    let h: Vec<f64> = (0..h_dim)
        .map(|u| {
            let i = sigmoid(z[u]);
            let g = z[2 * h_dim + u].tanh();
            let o = sigmoid(z[3 * h_dim + u]);
            o * (i * g).tanh()
        })
        .collect();
    let (hw, hb) = (params.get("head.w").unwrap(), params.get("head.b").unwrap());
    let expected: Vec<f64> = (0..3).map(|k| hb.get(0, k) + (0..h_dim).map(|u| h[u] * hw.get(u, k)).sum::<f64>()).collect();
    let got = logits(&params, &x, Mode::Eval, None);
    for k in 0..3 {
        assert!((got[k] - expected[k]).abs() < 1e-14, "{got:?} vs {expected:?}");
    }
}

#[test]
fn forget_bias_is_initialised_to_one() {
    let params = ModelParams::init(&ModelConfig::new(ModelKind::Lstm, 21, 30)).unwrap();
    for (l, fan_in) in [(0, 21.0 + 64.0), (1, 128.0)] {
        let b = params.get(&format!("lstm.{l}.b")).unwrap();
        assert!((64..128).all(|j| b.get(0, j) == 1.0));
        let limit = (1.0f64 / fan_in).sqrt();
        assert!((0..64).chain(128..256).all(|j| b.get(0, j).abs() <= limit));
    }
}

#[test]
fn positional_encoding_values() {
    let pe = positional_encoding(4, 6);
    for j in 0..6 {
        assert_eq!(pe.get(0, j), if j % 2 == 0 { 0.0 } else { 1.0 });
    }
    assert_eq!(pe.get(1, 0), 1f64.sin());
    assert_eq!(pe.get(1, 1), 1f64.cos());
    let angle = 3.0 / 10000f64.powf(2.0 / 6.0);
    assert!((pe.get(3, 2) - angle.sin()).abs() < 1e-15);
    assert!((pe.get(3, 3) - angle.cos()).abs() < 1e-15);
}

#[test]
fn identical_rows_attend_uniformly() {
    let mut cfg = small(ModelKind::Attention);
    cfg.attention.positional_encoding = false;
    let params = ModelParams::init(&cfg).unwrap();
    let row: Vec<f64> = (0..21).map(|j| (j as f64 * 0.37).sin()).collect();
    let x = Tensor::from_rows(&vec![row; 5]).unwrap();
    let maps = params.attention_maps(&x).unwrap();
    assert_eq!(maps.len(), cfg.attention.layers * cfg.attention.heads);
    for m in &maps {
        assert_eq!(m.shape(), [5, 5]);
        assert!(m.data().iter().all(|v| (v - 0.2).abs() < 1e-12));
    }
}

#[test]
fn attention_maps_are_row_stochastic() {
    let params = ModelParams::init(&ModelConfig::new(ModelKind::Attention, 21, 30)).unwrap();
    for m in params.attention_maps(&random_window(9, 30, 21)).unwrap() {
        for r in 0..30 {
            assert!((m.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    let lstm = ModelParams::init(&small(ModelKind::Lstm)).unwrap();
    assert!(matches!(lstm.attention_maps(&random_window(9, 5, 21)), Err(ModelError::Config(_))));
}

fn permuted(x: &Tensor, order: &[usize]) -> Tensor {
    Tensor::from_rows(&order.iter().map(|&r| x.row(r).to_vec()).collect::<Vec<_>>()).unwrap()
}

#[test]
fn attention_without_positions_ignores_order() {
    let mut cfg = small(ModelKind::Attention);
    cfg.attention.positional_encoding = false;
    let params = ModelParams::init(&cfg).unwrap();
    let x = random_window(4, 5, 21);
    let y = permuted(&x, &[3, 0, 4, 1, 2]);
    let (a, b) = (params.predict(&x).unwrap(), params.predict(&y).unwrap());
    for k in 0..3 {
        assert!((a.class_probs[k] - b.class_probs[k]).abs() < 1e-12);
    }
}

#[test]
fn attention_with_positions_sees_order() {
    let params = ModelParams::init(&small(ModelKind::Attention)).unwrap();
    let x = random_window(4, 5, 21);
    let y = permuted(&x, &[3, 0, 4, 1, 2]);
    let (a, b) = (params.predict(&x).unwrap(), params.predict(&y).unwrap());
    assert!((0..3).any(|k| (a.class_probs[k] - b.class_probs[k]).abs() > 1e-9));
}

#[test]
fn lstm_sees_order() {
    let params = ModelParams::init(&small(ModelKind::Lstm)).unwrap();
    let x = random_window(6, 5, 21);
    let y = permuted(&x, &[4, 3, 2, 1, 0]);
    let (a, b) = (logits(&params, &x, Mode::Eval, None), logits(&params, &y, Mode::Eval, None));
    assert!((0..3).any(|k| (a[k] - b[k]).abs() > 1e-9));
}

#[test]
fn parameter_counts_match_closed_forms() {
    let (t, d) = (30, 21);
    let cfg = |k| ModelConfig::new(k, d, t);
    assert_eq!(cfg(ModelKind::LogReg).param_count(), 3 * t * d + 3);
    let h = 64;
    let lstm = 4 * h * (d + h + 1) + 4 * h * (h + h + 1) + 3 * h + 3;
    assert_eq!(cfg(ModelKind::Lstm).param_count(), lstm);
    assert_eq!(lstm, 55_235);
    let (m, f, l) = (64, 256, 2);
    let attn = m * (d + 1) + l * (4 * m * m + 2 * m * f + 9 * m + f) + 3 * m + 3;
    assert_eq!(cfg(ModelKind::Attention).param_count(), attn);
    for k in KINDS {
        let c = cfg(k);
        let from_shapes: usize = c.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        assert_eq!(from_shapes, c.param_count());
        assert_eq!(ModelParams::init(&c).unwrap().scalar_count(), c.param_count());
    }
    // ablated input
    assert_eq!(ModelConfig::new(ModelKind::LogReg, 18, 30).param_count(), 3 * 30 * 18 + 3);
}

#[test]
fn config_validation() {
    let mut c = ModelConfig::new(ModelKind::Attention, 21, 30);
    c.attention.heads = 3;
    assert!(matches!(c.validate(), Err(ModelError::Config(_))));
    let mut c = ModelConfig::new(ModelKind::Lstm, 21, 30);
    c.lstm.dropout = 1.0;
    assert!(c.validate().is_err());
    assert!(ModelConfig::new(ModelKind::Lstm, 0, 30).validate().is_err());
    assert!(ModelConfig::new(ModelKind::Lstm, 21, 30).validate().is_ok());
}

#[test]
fn wrong_window_shape_is_rejected() {
    let params = ModelParams::init(&small(ModelKind::Lstm)).unwrap();
    assert!(matches!(params.predict(&random_window(1, 5, 18)), Err(ModelError::Dimension(_))));
    assert!(matches!(params.predict(&random_window(1, 4, 21)), Err(ModelError::Dimension(_))));
}

#[test]
fn init_is_seeded() {
    let c = small(ModelKind::Attention);
    assert_eq!(ModelParams::init(&c).unwrap(), ModelParams::init(&c).unwrap());
    let other = ModelConfig { seed: 4, ..c.clone() };
    assert_ne!(ModelParams::init(&c).unwrap().tensors, ModelParams::init(&other).unwrap().tensors);
}

#[test]
fn dropout_only_in_train_mode() {
    for kind in [ModelKind::Lstm, ModelKind::Attention] {
        let params = ModelParams::init(&small(kind)).unwrap();
        let x = random_window(8, 5, 21);
        let e1 = logits(&params, &x, Mode::Eval, None);
        let e2 = logits(&params, &x, Mode::Eval, Some(&mut RngStream::new(1)));
        assert_eq!(e1, e2);
        let t1 = logits(&params, &x, Mode::Train, Some(&mut RngStream::new(1)));
        let t1b = logits(&params, &x, Mode::Train, Some(&mut RngStream::new(1)));
        let t2 = logits(&params, &x, Mode::Train, Some(&mut RngStream::new(2)));
        assert_eq!(t1, t1b);
        assert_ne!(t1, e1);
        assert_ne!(t1, t2);
    }
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    for kind in KINDS {
        let params = ModelParams::init(&small(kind)).unwrap();
        let rng = RngStream::named(3, "shuffle");
        let ckpt = Checkpoint {
            params: params.clone(),
            rng: Some(rng.state()),
        };
        let bytes = write_checkpoint(&ckpt).unwrap();
        let back = read_checkpoint(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, ckpt);
        let x = random_window(2, 5, 21);
        assert_eq!(back.params.predict(&x).unwrap(), params.predict(&x).unwrap());
        assert_eq!(write_checkpoint(&back).unwrap(), bytes);
    }
}

#[test]
fn tampered_checkpoints_are_rejected() {
    let ckpt = Checkpoint {
        params: ModelParams::init(&small(ModelKind::Lstm)).unwrap(),
        rng: None,
    };
    let bytes = write_checkpoint(&ckpt).unwrap();
    let path = Path::new("ckpt.bin");

    // same-length edit of the stored config breaks the hash
    let needle = b"\"dropout\":0.5";
    let pos = bytes.windows(needle.len()).position(|w| w == needle).unwrap();
    let mut edited = bytes.clone();
    edited[pos + 10..pos + 13].copy_from_slice(b"0.4");
    let err = read_checkpoint(&edited, path).unwrap_err().to_string();
    assert!(err.contains("hash"), "{err}");

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(read_checkpoint(&bad_magic, path).is_err());
    assert!(read_checkpoint(&bytes[..bytes.len() - 8], path).is_err());

    let mut nan = bytes.clone();
    let n = nan.len();
    nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(read_checkpoint(&nan, path).unwrap_err().to_string().contains("non-finite"));
}

#[test]
fn full_size_gradients_on_sampled_coordinates() {
    let spec = LossSpec {
        weights: [2.0, 1.5, 0.5],
    };
    // about 15k ReLU units at this size: a 1e-5 probe can straddle a kink
    let check = GradCheckConfig {
        step: 1e-6,
        tolerance: 1e-3,
        max_coords_per_param: Some(3),
        seed: 17,
        ..GradCheckConfig::default()
    };
    for kind in KINDS {
        let params = ModelParams::init(&ModelConfig::new(kind, 21, 30)).unwrap();
        let x = random_window(12, 30, 21);
        let report = check_model_gradients(&params, &x, Direction::Down, &spec, Some(5), &check).unwrap();
        assert!(report.passed, "{kind:?}: {:?}", report.worst);
        assert!(report.probes >= params.tensors.len());
    }
}

#[test]
fn reduced_size_gradients_cover_every_coordinate() {
    let spec = LossSpec::default();
    for kind in KINDS {
        let params = ModelParams::init(&small(kind)).unwrap();
        let x = random_window(13, 5, 21);
        for dropout in [None, Some(2)] {
            let report =
                check_model_gradients(&params, &x, Direction::Neutral, &spec, dropout, &GradCheckConfig::default()).unwrap();
            assert!(report.passed, "{kind:?}: {:?}", report.worst);
            assert_eq!(report.probes, params.scalar_count());
        }
    }
}
