use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attention::row_sums;
use super::nn::{softmax_rows, Linear};
use super::*;
use crate::error::FusionError;
use crate::phono::{build_tensor, FEATURE_COUNT};

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn random_boxes(rng: &mut ChaCha8Rng, n: usize) -> Vec<BoundingBox> {
    (0..n)
        .map(|_| {
            BoundingBox::new(
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
                rng.random_range(0.05..0.4),
                rng.random_range(0.05..0.2),
            )
            .unwrap()
        })
        .collect()
}

fn jittered_mlp(rng: &mut ChaCha8Rng, inputs: usize, heads: usize) -> BiasMlp {
    let mut m = BiasMlp::new(rng, inputs, 32, heads);
    m.mlp.output = Linear::new(rng, 32, heads, true);
    m
}

fn small_config(d: usize, heads: usize) -> GraphConfig {
    GraphConfig {
        model_dim: d,
        heads,
        layers: 1,
        recognition_dim: 8,
        detection_dim: 8,
        linguistic_dim: 16,
        ..GraphConfig::compact()
    }
}

fn nodes(rng: &mut ChaCha8Rng, nv: usize, nt: usize, d: usize) -> NodeSet {
    NodeSet {
        v_features: random(rng, nv, d),
        t_features: random(rng, nt, d),
        v_boxes: random_boxes(rng, nv),
        t_boxes: random_boxes(rng, nt),
        confidences: (0..nt).map(|_| rng.random_range(0.0..1.0)).collect(),
    }
}

fn jittered_layer(config: &GraphConfig, seed: u64) -> GraphLayer {
    let mut model = FusionModel::seeded(config, seed).unwrap();
    model.jitter(&mut ChaCha8Rng::seed_from_u64(seed + 1), 0.3);
    model.layers.remove(0)
}

// Plain loop implementations used as oracles.

fn naive_linear(x: &[Vec<f64>], l: &Linear) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            (0..l.weight.nrows())
                .map(|o| {
                    let mut acc = l.bias.as_ref().map_or(0.0, |b| b[o]);
                    for (k, xv) in row.iter().enumerate() {
                        acc += l.weight[[o, k]] * xv;
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn naive_mlp(x: &[f64], m: &BiasMlp) -> Vec<f64> {
    let hidden: Vec<f64> = naive_linear(&[x.to_vec()], &m.mlp.hidden)[0].iter().map(|v| v.max(0.0)).collect();
    naive_linear(&[hidden], &m.mlp.output).remove(0)
}

fn naive_layer_norm(x: &[f64], ln: &nn::LayerNorm) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter()
        .enumerate()
        .map(|(k, v)| (v - mean) / (var + nn::LAYER_NORM_EPS).sqrt() * ln.gamma[k] + ln.beta[k])
        .collect()
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn spatial_by_hand(i: &BoundingBox, j: &BoundingBox) -> Vec<f64> {
    vec![(j.cx - i.cx) / i.w, (j.cy - i.cy) / i.h, (j.w / i.w).ln(), (j.h / i.h).ln()]
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Side<'a> {
    t_boxes: &'a [BoundingBox],
    v_boxes: &'a [BoundingBox],
    confidences: &'a [f64],
    phono: &'a [Vec<f64>],
}

/// Per-head scores and the message of one edge, computed entry by entry.
fn naive_edge(edge: &EdgeAttention, tgt: &[Vec<f64>], src: &[Vec<f64>], side: &Side) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
    let h_count = edge.heads;
    let d = tgt[0].len();
    let dh = d / h_count;
    let q = naive_linear(tgt, &edge.query);
    let k = naive_linear(src, &edge.key);
    let v = naive_linear(src, &edge.value);
    let boxes = |kind| match kind {
        NodeKind::Visual => side.v_boxes,
        NodeKind::Text => side.t_boxes,
    };
    let (tb, sb) = (boxes(edge.edge.target()), boxes(edge.edge.source()));
    let mut scores = vec![vec![vec![0.0; src.len()]; tgt.len()]; h_count];
    let mut ctx = vec![vec![0.0; d]; tgt.len()];
    for h in 0..h_count {
        for i in 0..tgt.len() {
            for j in 0..src.len() {
                let mut s: f64 = (0..dh).map(|c| q[i][h * dh + c] * k[j][h * dh + c]).sum::<f64>() / (dh as f64).sqrt();
                if let Some(m) = &edge.spatial {
                    s += naive_mlp(&spatial_by_hand(&tb[i], &sb[j]), m)[h];
                }
                if let Some(m) = &edge.phono {
                    s += naive_mlp(&side.phono[i * src.len() + j], m)[h];
                }
                scores[h][i][j] = s;
            }
            let max = scores[h][i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores[h][i].iter().map(|s| (s - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for j in 0..src.len() {
                let mut w = exps[j] / total;
                if let Some(g) = &edge.gate {
                    w *= logistic(g.scale[h] * side.confidences[j] + g.shift[h]);
                }
                for c in 0..dh {
                    ctx[i][h * dh + c] += w * v[j][h * dh + c];
                }
            }
        }
    }
    (scores, naive_linear(&ctx, &edge.output))
}

fn naive_block(x: &[Vec<f64>], m: &[Vec<f64>], b: &TargetBlock) -> Vec<Vec<f64>> {
    x.iter()
        .zip(m)
        .map(|(xr, mr)| {
            let u: Vec<f64> = xr.iter().zip(mr).map(|(a, b)| a + b).collect();
            let y = naive_layer_norm(&u, &b.attn_norm);
            let hidden: Vec<f64> = naive_linear(&[y.clone()], &b.ffn.hidden)[0].iter().map(|v| v.max(0.0)).collect();
            let f = naive_linear(&[hidden], &b.ffn.output).remove(0);
            let u2: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a + b).collect();
            naive_layer_norm(&u2, &b.ffn_norm)
        })
        .collect()
}

fn assert_close(a: &[Vec<f64>], b: &Array2<f64>, tol: f64) {
    assert_eq!(a.len(), b.nrows());
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!((v - b[[i, j]]).abs() < tol, "[{i},{j}] oracle {v} vs {}", b[[i, j]]);
        }
    }
}

#[test]
fn scores_without_biases_are_scaled_dot_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (q, k) = (random(&mut rng, 3, 16), random(&mut rng, 5, 16));
    let plain = attention_scores(q.view(), k.view(), 4, None, None).unwrap();
    for (h, s) in plain.iter().enumerate() {
        let qh = q.slice(s![.., h * 4..(h + 1) * 4]);
        let kh = k.slice(s![.., h * 4..(h + 1) * 4]);
        assert_eq!(s, &(qh.dot(&kh.t()) / 2.0));
    }
    // Freshly initialized perceptrons have zero output layers.
    let sp = BiasMlp::new(&mut rng, SPATIAL_DIM, 32, 4);
    let ph = BiasMlp::new(&mut rng, FEATURE_COUNT, 32, 4);
    let sf = random(&mut rng, 15, SPATIAL_DIM);
    let pf = random(&mut rng, 15, FEATURE_COUNT);
    let zeroed = attention_scores(q.view(), k.view(), 4, Some((&sp, sf.view())), Some((&ph, pf.view()))).unwrap();
    assert_eq!(plain, zeroed);
}

#[test]
fn zero_phono_tensor_matches_spatial_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (q, k) = (random(&mut rng, 4, 8), random(&mut rng, 4, 8));
    let sp = jittered_mlp(&mut rng, SPATIAL_DIM, 2);
    let mut ph = jittered_mlp(&mut rng, FEATURE_COUNT, 2);
    ph.mlp.hidden.bias.as_mut().unwrap().fill(0.0);
    ph.mlp.output.bias.as_mut().unwrap().fill(0.0);
    let sf = random(&mut rng, 16, SPATIAL_DIM);
    let zero = Array2::zeros((16, FEATURE_COUNT));
    let spatial_only = attention_scores(q.view(), k.view(), 2, Some((&sp, sf.view())), None).unwrap();
    let both = attention_scores(q.view(), k.view(), 2, Some((&sp, sf.view())), Some((&ph, zero.view()))).unwrap();
    assert_eq!(spatial_only, both);
    // A non-Vietnamese token pair really does produce the zero rows.
    let tensor = build_tensor(&["shop", "bán"]);
    assert!(tensor.entries().iter().skip(1).take(2).all(|e| e.bits() == 0));
}

#[test]
fn scores_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let tokens = ["trường", "trương", "ma"];
    let boxes = random_boxes(&mut rng, 3);
    let tensor = build_tensor(&tokens);
    let phono: Vec<Vec<f64>> = tensor.to_f64_rows().iter().map(|r| r.to_vec()).collect();
    let config = GraphConfig {
        edge_types: vec![EdgeType::TToT],
        use_confidence_gate: false,
        ..small_config(8, 2)
    };
    let mut edge = EdgeAttention::new(&mut rng, EdgeType::TToT, &config);
    edge.spatial = Some(jittered_mlp(&mut rng, SPATIAL_DIM, 2));
    edge.phono = Some(jittered_mlp(&mut rng, FEATURE_COUNT, 2));
    let x = random(&mut rng, 3, 8);

    let q = edge.query.forward(x.view());
    let k = edge.key.forward(x.view());
    let ctx = GraphContext::from_parts(&boxes, &boxes, &[1.0; 3], Some(&tensor)).unwrap();
    let inputs = ctx.edge_inputs(EdgeType::TToT);
    let scores = attention_scores(
        q.view(),
        k.view(),
        2,
        Some((edge.spatial.as_ref().unwrap(), inputs.spatial.unwrap())),
        Some((edge.phono.as_ref().unwrap(), inputs.phono.unwrap())),
    )
    .unwrap();
    let side = Side {
        t_boxes: &boxes,
        v_boxes: &[],
        confidences: &[1.0; 3],
        phono: &phono,
    };
    let (expected, _) = naive_edge(&edge, &rows(&x), &rows(&x), &side);
    for (h, s) in scores.iter().enumerate() {
        assert_close(&expected[h], s, 1e-12);
    }
}

#[test]
fn score_shapes_are_checked() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (q, k) = (random(&mut rng, 3, 8), random(&mut rng, 2, 6));
    assert!(matches!(
        attention_scores(q.view(), k.view(), 2, None, None),
        Err(FusionError::DimensionMismatch { .. })
    ));
    let k = random(&mut rng, 2, 8);
    let sp = BiasMlp::new(&mut rng, SPATIAL_DIM, 32, 2);
    let wrong_pairs = random(&mut rng, 5, SPATIAL_DIM);
    assert!(attention_scores(q.view(), k.view(), 2, Some((&sp, wrong_pairs.view())), None).is_err());
}

#[test]
fn gate_saturates_and_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let weights: Vec<Array2<f64>> = (0..3).map(|_| softmax_rows(&random(&mut rng, 4, 5))).collect();
    let conf: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();

    let open = confidence_gate(&weights, &conf, &ConfidenceGate::uniform(3, 0.0, 40.0)).unwrap();
    for (a, b) in open.iter().zip(&weights) {
        assert!((a - b).iter().all(|d| d.abs() < 1e-15));
    }
    let shut = confidence_gate(&weights, &conf, &ConfidenceGate::uniform(3, 0.0, -40.0)).unwrap();
    assert!(shut.iter().flatten().all(|w| *w < 1e-15));

    let halves = confidence_gate(&weights, &[0.5; 5], &ConfidenceGate::new(3)).unwrap();
    let factor = 1.0 / (1.0 + (-0.5f64).exp());
    assert!((factor - 0.622_459_331_201_854_6).abs() < 1e-15);
    for (a, b) in halves.iter().zip(&weights) {
        assert!((a - &(b * factor)).iter().all(|d| d.abs() < 1e-15));
    }
    // Scaled rows are not renormalized.
    for sums in row_sums(&halves) {
        assert!(sums.iter().all(|s| (s - factor).abs() < 1e-12));
    }
    assert!(confidence_gate(&weights, &conf[..4], &ConfidenceGate::new(3)).is_err());
}

#[test]
fn softmax_rows_sum_to_one_before_gating() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let config = small_config(8, 2);
    let layer = jittered_layer(&config, 3);
    let n = nodes(&mut rng, 3, 5, 8);
    let ctx = GraphContext::new(&n, None).unwrap();
    let (_, _, cache) = layer.forward(&n.v_features, &n.t_features, &ctx).unwrap();
    for edge in &cache.edges {
        for s in row_sums(&edge.softmax) {
            assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-9));
        }
    }
}

#[test]
fn text_only_topology_leaves_visual_nodes_untouched() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = nodes(&mut rng, 3, 4, 8);
    let phono = build_tensor(&["một", "hai", "ba", "bốn"]);

    let text_only = small_config(8, 2).text_only();
    let out = graph_layer(&n, Some(&phono), &jittered_layer(&text_only, 5)).unwrap();
    assert_eq!(out.v_features, n.v_features);
    assert_ne!(out.t_features, n.t_features);

    let full = graph_layer(&n, Some(&phono), &jittered_layer(&small_config(8, 2), 5)).unwrap();
    assert_ne!(full.v_features, n.v_features);
    assert_ne!(full.t_features, n.t_features);
}

#[test]
fn zero_messages_reduce_layer_to_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let n = nodes(&mut rng, 2, 4, 8);
    let mut layer = GraphLayer::new(&mut rng, &small_config(8, 2));
    for e in &mut layer.edges {
        e.value.weight.fill(0.0);
        e.output.weight.fill(0.0);
    }
    for b in [&mut layer.visual, &mut layer.text].into_iter().flatten() {
        b.ffn.output.weight.fill(0.0);
        b.ffn.output.bias.as_mut().unwrap().fill(0.0);
    }
    let out = graph_layer(&n, None, &layer).unwrap();
    let ln = nn::LayerNorm::new(8);
    assert_close(&rows(&ln.apply(&n.t_features)), &out.t_features, 1e-4);
    assert_close(&rows(&ln.apply(&n.v_features)), &out.v_features, 1e-4);
}

#[test]
fn layer_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let tokens = ["Trường", "trương"];
    let n = nodes(&mut rng, 2, 2, 8);
    let tensor = build_tensor(&tokens);
    let phono: Vec<Vec<f64>> = tensor.to_f64_rows().iter().map(|r| r.to_vec()).collect();
    let layer = jittered_layer(&small_config(8, 2), 7);
    let out = graph_layer(&n, Some(&tensor), &layer).unwrap();

    let side = Side {
        t_boxes: &n.t_boxes,
        v_boxes: &n.v_boxes,
        confidences: &n.confidences,
        phono: &phono,
    };
    let (v, t) = (rows(&n.v_features), rows(&n.t_features));
    let mut v_msg = vec![vec![0.0; 8]; 2];
    let mut t_msg = vec![vec![0.0; 8]; 2];
    for edge in &layer.edges {
        let pick = |k| if k == NodeKind::Visual { &v } else { &t };
        let (_, m) = naive_edge(edge, pick(edge.edge.target()), pick(edge.edge.source()), &side);
        let acc = if edge.edge.target() == NodeKind::Visual { &mut v_msg } else { &mut t_msg };
        for (a, r) in acc.iter_mut().zip(&m) {
            for (x, y) in a.iter_mut().zip(r) {
                *x += y;
            }
        }
    }
    assert_close(&naive_block(&t, &t_msg, layer.text.as_ref().unwrap()), &out.t_features, 1e-10);
    assert_close(&naive_block(&v, &v_msg, layer.visual.as_ref().unwrap()), &out.v_features, 1e-10);
}

#[test]
fn resumed_layer_evaluation_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let n = nodes(&mut rng, 2, 3, 8);
    let mut layer = jittered_layer(&small_config(8, 2), 9);
    let ctx = GraphContext::new(&n, None).unwrap();
    let (_, _, cache) = layer.forward(&n.v_features, &n.t_features, &ctx).unwrap();
    layer.edges[1].key.weight[[0, 0]] += 0.1;
    layer.text.as_mut().unwrap().ffn.hidden.weight[[0, 0]] += 0.1;
    let (v_full, t_full, _) = layer.forward(&n.v_features, &n.t_features, &ctx).unwrap();
    let (v_part, t_part) = layer
        .forward_from(&n.v_features, &n.t_features, &ctx, &cache, LayerPart::Edge(1))
        .unwrap();
    assert_eq!((v_full, t_full), (v_part, t_part));
}

fn stream_input(rng: &mut ChaCha8Rng, n: usize) -> DualStreamInput {
    DualStreamInput {
        recognition: random(rng, n, 8),
        detection: random(rng, n, 8),
        linguistic: random(rng, n, 16),
    }
}

#[test]
fn dual_stream_gate_saturation_and_convexity() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let config = small_config(16, 4);
    let input = stream_input(&mut rng, 5);
    let mut weights = DualStreamFusion::new(&mut rng, &config);

    let mixed = weights.fuse(&input).unwrap();
    for ((f, a), b) in mixed.fused.iter().zip(&mixed.visual).zip(&mixed.linguistic) {
        assert!(a.min(*b) <= *f && *f <= a.max(*b));
    }
    assert_eq!(dual_stream_fuse(&input, &weights).unwrap(), mixed.fused);

    weights.gate.bias.as_mut().unwrap().fill(60.0);
    let vis = weights.fuse(&input).unwrap();
    assert!((&vis.fused - &vis.visual).iter().all(|d| d.abs() < 1e-12));
    weights.gate.bias.as_mut().unwrap().fill(-60.0);
    let pho = weights.fuse(&input).unwrap();
    assert!((&pho.fused - &pho.linguistic).iter().all(|d| d.abs() < 1e-12));
}

#[test]
fn dual_stream_rejects_missing_visual_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let config = small_config(16, 4);
    let mut input = stream_input(&mut rng, 3);
    input.detection.row_mut(1).fill(0.0);
    let weights = DualStreamFusion::new(&mut rng, &config);
    assert!(matches!(
        weights.fuse(&input),
        Err(FusionError::ZeroVector { row: 1, .. })
    ));
}

#[test]
fn phono_bias_costs_552_parameters_per_layer_at_eight_heads() {
    let config = GraphConfig {
        model_dim: 16,
        heads: 8,
        ..GraphConfig::full_scale()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let layer = GraphLayer::new(&mut rng, &config);
    assert_eq!(layer.phono_parameter_count(), 8 * 32 + 32 + 8 * (32 + 1));
    assert_eq!(layer.phono_parameter_count(), 552);
    let no_phono = GraphLayer::new(&mut rng, &GraphConfig { use_phono_bias: false, ..config });
    assert_eq!(layer.parameter_count() - no_phono.parameter_count(), 552);
}

fn tiny_config() -> GraphConfig {
    GraphConfig {
        layers: 2,
        ffn_dim: Some(16),
        ..small_config(8, 2)
    }
}

#[test]
fn linear_loss_at_neutral_init_is_near_exact() {
    let config = tiny_config();
    let model = FusionModel::seeded(&config, 31).unwrap();
    let instance = Instance::synthetic(&config, &["cà", "phê", "sữa"], 2, 32);
    let loss = Loss::seeded_linear(3, 2, 8, 33);
    let report = gradient_check(&model, &instance, &loss).unwrap();
    assert_eq!(report.parameters_checked, model.parameter_count());
    assert!(report.max_relative_error < 1e-6, "{report:?}");
}

#[test]
fn dual_bias_gradients_match_finite_differences() {
    let config = tiny_config();
    let mut model = FusionModel::seeded(&config, 34).unwrap();
    model.jitter(&mut ChaCha8Rng::seed_from_u64(35), 0.3);
    let instance = Instance::synthetic(&config, &["Trường", "trương", "ma", "mạ"], 3, 36);
    let report = gradient_check(&model, &instance, &Loss::SumOfSquares).unwrap();
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn corrupted_gradient_is_detected() {
    let config = tiny_config();
    let mut model = FusionModel::seeded(&config, 37).unwrap();
    model.jitter(&mut ChaCha8Rng::seed_from_u64(38), 0.3);
    let instance = Instance::synthetic(&config, &["ma", "mà"], 2, 39);
    let loss = Loss::seeded_linear(2, 2, 8, 40);
    let (mut grad, _) = gradcheck::analytic_gradient(&model, &instance, &loss).unwrap();
    grad.layers[0].edges[0].key.weight[[1, 2]] += 0.05;
    let report = compare_gradients(&model, &instance, &loss, &grad).unwrap();
    assert!(report.max_relative_error > 1e-2, "{report:?}");
    assert!(report.worst_parameter.starts_with("layer1."), "{}", report.worst_parameter);
}

#[test]
fn non_finite_inputs_are_reported() {
    let config = tiny_config();
    let model = FusionModel::seeded(&config, 41).unwrap();
    let mut instance = Instance::synthetic(&config, &["ma", "mà"], 2, 42);
    instance.v_features[[0, 0]] = f64::NAN;
    let loss = Loss::seeded_linear(2, 2, 8, 43);
    assert!(matches!(
        gradient_check(&model, &instance, &loss),
        Err(FusionError::NonFinite(_))
    ));
}
