use std::collections::BTreeMap;

use hdgnn_autodiff::gradcheck::check_gradients;
use hdgnn_autodiff::{gelu, sigmoid, Array, Gru, ParameterStore, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graph::{EdgeKind, GraphBuilder};
use crate::sampler::{sample_all, WalkConfig};

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(11)
}

fn tiny_cfg() -> EncoderConfig {
    EncoderConfig {
        content_hidden: 2,
        mlp_hidden: 3,
        neighbor_hidden: 4,
        attention_dim: 3,
        embed_dim: 3,
        heads: 2,
        leaky_slope: 0.01,
    }
}

/// Two papers (slots `title` width 2, `year` width 1), one author, one venue.
fn fixture() -> HeteroGraph {
    let mut b = GraphBuilder::new();
    let f = |pairs: &[(&str, Vec<f64>)]| -> BTreeMap<String, Vec<f64>> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    };
    let p1 = b
        .add_node("p1", NodeKind::Paper, 0.0, f(&[("title", vec![0.3, -0.7]), ("year", vec![0.2])]))
        .unwrap();
    let p2 = b
        .add_node("p2", NodeKind::Paper, 1.0, f(&[("title", vec![-0.4, 0.9]), ("year", vec![0.6])]))
        .unwrap();
    let a1 = b.add_node("a1", NodeKind::Author, 0.0, f(&[("career", vec![0.5])])).unwrap();
    let v1 = b.add_node("v1", NodeKind::Venue, 0.0, f(&[("degree", vec![1.5, 0.1])])).unwrap();
    b.add_edge(p2, p1, EdgeKind::PaperCitesPaper, 1.0, 1.0).unwrap();
    b.add_edge(a1, p1, EdgeKind::AuthorWritesPaper, 1.0, 0.0).unwrap();
    b.add_edge(a1, p2, EdgeKind::AuthorWritesPaper, 1.0, 1.0).unwrap();
    b.add_edge(p1, v1, EdgeKind::PaperPublishedInVenue, 1.0, 0.0).unwrap();
    b.add_edge(p2, v1, EdgeKind::PaperPublishedInVenue, 1.0, 1.0).unwrap();
    b.add_edge(a1, v1, EdgeKind::AuthorPublishesVenue, 1.0, 0.0).unwrap();
    b.add_edge(p2, a1, EdgeKind::PaperCitesAuthor, 1.0, 1.0).unwrap();
    b.add_edge(a1, p1, EdgeKind::AuthorCitesPaper, 1.0, 1.0).unwrap();
    b.finalize().unwrap()
}

/// Deterministic small values for every parameter.
fn fill_params(store: &mut ParameterStore, scale: f64) {
    let ids: Vec<_> = store.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        let v = store.value(id).clone();
        let data = (0..v.len())
            .map(|i| scale * ((k * 31 + i) as f64 * 0.618).sin())
            .collect();
        store.set_value(id, Array::new(v.shape().to_vec(), data).unwrap()).unwrap();
    }
}

fn zero_params(store: &mut ParameterStore) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let v = store.value(id).clone();
        store.set_value(id, Array::zeros_like(&v)).unwrap();
    }
}

// ---- independent scalar oracles ----

fn col(a: &Array, c0: usize, n: usize) -> Vec<Vec<f64>> {
    (0..a.rows()).map(|r| (c0..c0 + n).map(|c| a.get(r, c)).collect()).collect()
}

fn vec_mat(x: &[f64], w: &[Vec<f64>]) -> Vec<f64> {
    let out = w[0].len();
    (0..out).map(|j| x.iter().zip(w).map(|(xi, row)| xi * row[j]).sum()).collect()
}

fn gru_oracle(store: &ParameterStore, gru: &Gru, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let h = gru.hidden;
    let wi = store.value(gru.input_weight);
    let ug = store.value(gru.hidden_gates);
    let uc = store.value(gru.hidden_candidate);
    let b = store.value(gru.bias).row_slice(0).to_vec();
    let (wz, wr, wn) = (col(wi, 0, h), col(wi, h, h), col(wi, 2 * h, h));
    let (uz, ur, un) = (col(ug, 0, h), col(ug, h, h), col(uc, 0, h));
    let mut state = vec![0.0; h];
    let mut out = Vec::new();
    for x in xs {
        let (xz, xr, xn) = (vec_mat(x, &wz), vec_mat(x, &wr), vec_mat(x, &wn));
        let (hz, hr) = (vec_mat(&state, &uz), vec_mat(&state, &ur));
        let z: Vec<f64> = (0..h).map(|j| sigmoid(xz[j] + hz[j] + b[j])).collect();
        let r: Vec<f64> = (0..h).map(|j| sigmoid(xr[j] + hr[j] + b[h + j])).collect();
        let rh: Vec<f64> = (0..h).map(|j| r[j] * state[j]).collect();
        let hn = vec_mat(&rh, &un);
        let n: Vec<f64> = (0..h).map(|j| (xn[j] + hn[j] + b[2 * h + j]).tanh()).collect();
        state = (0..h).map(|j| (1.0 - z[j]) * n[j] + z[j] * state[j]).collect();
        out.push(state.clone());
    }
    out
}

/// Mean over positions of `forward_i ‖ backward_i`.
fn bigru_mean_oracle(store: &ParameterStore, gru: &BiGru, xs: &[Vec<f64>]) -> Vec<f64> {
    let f = gru_oracle(store, &gru.forward, xs);
    let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
    let mut b = gru_oracle(store, &gru.backward, &rev);
    b.reverse();
    let h = gru.hidden();
    let mut mean = vec![0.0; 2 * h];
    for i in 0..xs.len() {
        for j in 0..h {
            mean[j] += f[i][j] / xs.len() as f64;
            mean[h + j] += b[i][j] / xs.len() as f64;
        }
    }
    mean
}

fn linear_oracle(store: &ParameterStore, l: &Linear, x: &[f64]) -> Vec<f64> {
    let w = col(store.value(l.weight), 0, l.output);
    let b = store.value(l.bias).row_slice(0);
    vec_mat(x, &w).iter().zip(b).map(|(a, c)| a + c).collect()
}

fn mlp_oracle(store: &ParameterStore, m: &Mlp, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = linear_oracle(store, &m.first, x).into_iter().map(gelu).collect();
    linear_oracle(store, &m.second, &h)
}

fn content_oracle(store: &ParameterStore, enc: &NodeEncoder, g: &HeteroGraph, n: NodeId) -> Vec<f64> {
    let kind = g.kind(n);
    let xs: Vec<Vec<f64>> = enc.slot_mlps[kind.ordinal()]
        .iter()
        .zip(&g.node(n).content.slots)
        .map(|((_, mlp), c)| mlp_oracle(store, mlp, c))
        .collect();
    bigru_mean_oracle(store, &enc.content_gru, &xs)
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

fn build(g: &HeteroGraph) -> (ParameterStore, NodeEncoder) {
    let mut store = ParameterStore::new();
    let enc = NodeEncoder::new(&mut store, g, &tiny_cfg(), &mut rng()).unwrap();
    (store, enc)
}

#[test]
fn zero_parameters_give_zero_content() {
    let g = fixture();
    let (mut store, enc) = build(&g);
    zero_params(&mut store);
    let t = Tape::new();
    let nodes: Vec<NodeId> = (0..4).map(NodeId::from_index).collect();
    let f = t.value(enc.content(&t, &store, &g, &nodes).unwrap());
    assert_eq!(f.shape(), &[4, 4]);
    assert!(f.data().iter().all(|&v| v == 0.0));
}

#[test]
fn content_matches_hand_unrolled_recurrence() {
    let g = fixture();
    let (mut store, enc) = build(&g);
    fill_params(&mut store, 0.4);
    // mixed kinds in a scrambled order exercise the regrouping
    let nodes = vec![NodeId(3), NodeId(1), NodeId(2), NodeId(0)];
    let t = Tape::new();
    let f = t.value(enc.content(&t, &store, &g, &nodes).unwrap());
    for (row, &n) in nodes.iter().enumerate() {
        assert_close(f.row_slice(row), &content_oracle(&store, &enc, &g, n), 1e-12);
    }
}

#[test]
fn single_slot_mean_is_the_state_itself() {
    let g = fixture();
    let (mut store, enc) = build(&g);
    fill_params(&mut store, 0.3);
    let author = NodeId(2);
    assert_eq!(enc.slot_mlps[NodeKind::Author.ordinal()].len(), 1);
    let x = mlp_oracle(&store, &enc.slot_mlps[1][0].1, &g.node(author).content.slots[0]);
    let f = gru_oracle(&store, &enc.content_gru.forward, &[x.clone()]);
    let b = gru_oracle(&store, &enc.content_gru.backward, &[x]);
    let t = Tape::new();
    let got = t.value(enc.content(&t, &store, &g, &[author]).unwrap());
    let want: Vec<f64> = f[0].iter().chain(&b[0]).copied().collect();
    assert_close(got.row_slice(0), &want, 1e-15);
}

#[test]
fn neighbor_aggregation_matches_oracle() {
    let g = fixture();
    let (mut store, enc) = build(&g);
    fill_params(&mut store, 0.5);
    let rows = [vec![0.1, -0.2, 0.3, 0.05], vec![-0.6, 0.4, 0.2, 0.9], vec![0.7, 0.7, -0.1, 0.0]];
    let t = Tape::new();
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    let x = t.constant(Array::matrix(3, 4, data).unwrap());
    // one list of two neighbours followed by nothing else
    let two = t.slice_rows(x, 0, 2).unwrap();
    let out = t.value(enc.aggregate_neighbors(&t, &store, NodeKind::Author, two, 1, 2).unwrap());
    let want = bigru_mean_oracle(&store, &enc.neighbor_grus[1], &rows[..2]);
    assert_close(out.row_slice(0), &want, 1e-12);
    assert_eq!(out.cols(), 4);

    let single = t.value(enc.aggregate_neighbors(&t, &store, NodeKind::Venue, x, 3, 1).unwrap());
    for (r, row) in rows.iter().enumerate() {
        let want = bigru_mean_oracle(&store, &enc.neighbor_grus[2], std::slice::from_ref(row));
        assert_close(single.row_slice(r), &want, 1e-12);
    }

    zero_params(&mut store);
    let t = Tape::new();
    let x = t.constant(Array::matrix(3, 4, rows.concat()).unwrap());
    let z = t.value(enc.aggregate_neighbors(&t, &store, NodeKind::Paper, x, 1, 3).unwrap());
    assert!(z.data().iter().all(|&v| v == 0.0));
}

#[test]
fn tied_bidirectional_mean_swaps_halves_under_reversal() {
    let mut store = ParameterStore::new();
    let gru = BiGru::new(&mut store, "g", 2, 3, &mut rng()).unwrap();
    for (f, b) in [
        (gru.forward.input_weight, gru.backward.input_weight),
        (gru.forward.hidden_gates, gru.backward.hidden_gates),
        (gru.forward.hidden_candidate, gru.backward.hidden_candidate),
    ] {
        let v = store.value(f).clone();
        store.set_value(b, v).unwrap();
    }
    let xs = [vec![0.2, -0.5], vec![0.9, 0.1], vec![-0.3, 0.4]];
    let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
    let a = bigru_mean_oracle(&store, &gru, &xs);
    let b = bigru_mean_oracle(&store, &gru, &rev);
    let t = Tape::new();
    let run = |rows: &[Vec<f64>]| {
        let x = t.constant(Array::matrix(3, 2, rows.concat()).unwrap());
        let r = gru.run(&t, &store, x, &SeqBatch::uniform(1, 3).unwrap()).unwrap();
        t.value(t.mean_pool(r.states).unwrap())
    };
    assert_close(run(&xs).row_slice(0), &a, 1e-12);
    assert_close(&a[..3], &b[3..], 1e-12);
    assert_close(&a[3..], &b[..3], 1e-12);
    let sum_a: Vec<f64> = (0..3).map(|j| a[j] + a[3 + j]).collect();
    let sum_b: Vec<f64> = (0..3).map(|j| b[j] + b[3 + j]).collect();
    assert_close(&sum_a, &sum_b, 1e-12);
}

#[test]
fn zero_attention_vector_averages_candidates() {
    let t = Tape::new();
    let s = t.constant(Array::matrix(1, 2, vec![0.5, -1.0]).unwrap());
    let c1 = t.constant(Array::matrix(1, 2, vec![1.0, 2.0]).unwrap());
    let c2 = t.constant(Array::matrix(1, 2, vec![-3.0, 4.0]).unwrap());
    let u = t.constant(Array::zeros(4, 3));
    let (out, w) = attend(&t, s, &[s, c1, c2], u, 0.01).unwrap();
    assert_eq!(w.len(), 3);
    for wk in &w {
        assert_close(t.value(*wk).data(), &[1.0 / 3.0; 3], 1e-15);
    }
    assert_close(t.value(out).data(), &[-0.5, 5.0 / 3.0], 1e-15);

    let u = t.constant(Array::matrix(4, 1, vec![0.3, -2.0, 0.7, 5.0]).unwrap());
    let (out, w) = attend(&t, s, &[c1], u, 0.01).unwrap();
    assert_eq!(t.value(w[0]).data(), &[1.0]);
    assert_eq!(t.value(out).data(), &[1.0, 2.0]);

    assert!(attend(&t, s, &[], u, 0.01).is_err());
    let no_heads = t.constant(Array::new(vec![4, 0], vec![]).unwrap_or_else(|_| Array::zeros(3, 1)));
    assert!(attend(&t, s, &[c1], no_heads, 0.01).is_err());
}

#[test]
fn two_heads_three_candidates_match_hand_evaluation() {
    let t = Tape::new();
    let s = vec![0.5, -1.0];
    let cands = [s.clone(), vec![1.0, 2.0], vec![-3.0, 4.0]];
    // head 0: u = (1, 0 | 0.5, 0.25); head 1: u = (0, -1 | -1, 0.1)
    let u = [[1.0, 0.0, 0.5, 0.25], [0.0, -1.0, -1.0, 0.1]];
    let slope = 0.01;
    let leaky = |x: f64| if x > 0.0 { x } else { slope * x };
    let mut expected_out = [0.0; 2];
    let mut expected_w = Vec::new();
    for uk in &u {
        let scores: Vec<f64> = cands
            .iter()
            .map(|c| leaky(uk[0] * s[0] + uk[1] * s[1] + uk[2] * c[0] + uk[3] * c[1]))
            .collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|x| (x - m).exp()).sum();
        let w: Vec<f64> = scores.iter().map(|x| (x - m).exp() / z).collect();
        for (wi, c) in w.iter().zip(&cands) {
            expected_out[0] += wi * c[0] / 2.0;
            expected_out[1] += wi * c[1] / 2.0;
        }
        expected_w.push(w);
    }
    let sv = t.constant(Array::matrix(1, 2, s.clone()).unwrap());
    let cv: Vec<Var> = cands.iter().map(|c| t.constant(Array::matrix(1, 2, c.clone()).unwrap())).collect();
    let uv = t.constant(Array::matrix(4, 2, (0..4).flat_map(|r| [u[0][r], u[1][r]]).collect()).unwrap());
    let (out, w) = attend(&t, sv, &cv, uv, slope).unwrap();
    for (k, wk) in w.iter().enumerate() {
        assert_close(t.value(*wk).data(), &expected_w[k], 1e-12);
        assert!((t.value(*wk).sum() - 1.0).abs() < 1e-12);
    }
    assert_close(t.value(out).data(), &expected_out, 1e-12);
}

fn sets_for(g: &HeteroGraph) -> NeighborSets {
    let cfg = WalkConfig {
        walk_length: 10,
        walks_per_node: 3,
        samples_per_type: [2, 2, 1],
        seed: 5,
        ..WalkConfig::default()
    };
    sample_all(g, &cfg).unwrap()
}

#[test]
fn encode_shapes_and_order() {
    let g = fixture();
    let sets = sets_for(&g);
    let (mut store, enc) = build(&g);
    fill_params(&mut store, 0.3);
    let t = Tape::new();
    let e = t.value(enc.encode(&t, &store, &g, &sets, &[NodeId(1), NodeId(0), NodeId(1)]).unwrap());
    assert_eq!(e.shape(), &[3, 3]);
    assert!(e.is_finite());
    assert_eq!(e.row_slice(0), e.row_slice(2));
    let t2 = Tape::new();
    let single = t2.value(enc.encode(&t2, &store, &g, &sets, &[NodeId(0)]).unwrap());
    assert_close(single.row_slice(0), e.row_slice(1), 1e-14);
    let all = enc.embed_all(&store, &g, &sets, 3).unwrap();
    assert_eq!(all.len(), 4);
    assert_close(&all[0], e.row_slice(1), 1e-14);
}

#[test]
fn skipgram_loss_reference_values() {
    let t = Tape::new();
    let c = t.constant(Array::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let x = t.constant(Array::matrix(2, 2, vec![0.0, 3.0, -2.0, 0.0]).unwrap());
    let l = skipgram_loss(&t, c, x, &[]).unwrap();
    assert!((t.scalar(l) - std::f64::consts::LN_2).abs() < 1e-15);
    let l = skipgram_loss(&t, c, x, &[x]).unwrap();
    assert!((t.scalar(l) - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn skipgram_gradients_match_finite_differences() {
    let g = fixture();
    let sets = sets_for(&g);
    let (mut store, enc) = build(&g);
    fill_params(&mut store, 0.5);
    let report = check_gradients(
        &mut store,
        |t: &Tape, s: &ParameterStore| -> Result<Var> {
            let e = enc.encode(t, s, &g, &sets, &[NodeId(0), NodeId(1), NodeId(2), NodeId(3)])?;
            let c = t.gather_rows(e, &[0, 2])?;
            let x = t.gather_rows(e, &[1, 3])?;
            let n = t.gather_rows(e, &[3, 1])?;
            skipgram_loss(t, c, x, &[n])
        },
        1e-5,
        400,
        &mut rng(),
    )
    .unwrap();
    assert!(report.checked > 100);
    assert!(report.max_rel_err < 1e-4, "{report:?}");
}

/// Two disconnected citation cliques of `size` papers each.
fn two_communities(size: usize) -> HeteroGraph {
    let mut b = GraphBuilder::new();
    let mut ids = Vec::new();
    for c in 0..2 {
        for i in 0..size {
            let topic = if c == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
            let feats = [("topic".to_string(), topic), ("year".to_string(), vec![i as f64 * 0.1])]
                .into_iter()
                .collect();
            ids.push(b.add_node(format!("p{c}_{i}"), NodeKind::Paper, 0.0, feats).unwrap());
        }
    }
    for c in 0..2 {
        for i in 0..size {
            for j in 0..size {
                if i != j {
                    b.add_edge(ids[c * size + i], ids[c * size + j], EdgeKind::PaperCitesPaper, 1.0, 0.0)
                        .unwrap();
                }
            }
        }
    }
    b.finalize().unwrap()
}

#[test]
fn pretraining_lowers_the_loss() {
    let g = two_communities(5);
    let sets = sets_for(&g);
    let (mut store, enc) = build(&g);
    let walk = WalkConfig {
        walk_length: 8,
        seed: 2,
        ..WalkConfig::default()
    };
    let corpus = crate::sampler::walk_corpus(&g, &walk).unwrap();
    let cfg = PretrainConfig {
        steps: 150,
        batch_pairs: 32,
        negatives: 1,
        learning_rate: 0.05,
        window: 2,
    };
    let report = pretrain(&mut store, &enc, &g, &sets, &corpus, &cfg, 1).unwrap();
    let tail = report.losses[130..].iter().sum::<f64>() / 20.0;
    assert!(tail < 0.9 * report.losses[0], "{:?}", report.losses);

    let (mut again, _) = build(&g);
    let rerun = pretrain(&mut again, &enc, &g, &sets, &corpus, &cfg, 1).unwrap();
    assert_eq!(rerun, report);
    assert!(pretrain(&mut store, &enc, &g, &sets, &[], &cfg, 1).is_err());
}

#[test]
fn negative_sampler_follows_three_quarter_power() {
    let g = fixture();
    let s = NegativeSampler::new(&g);
    // papers: in-degrees p1 = 3 (cites, writes, author cites), p2 = 1
    let (d1, d2) = (g.in_degree_of(NodeId(0)) as f64, g.in_degree_of(NodeId(1)) as f64);
    let p1 = d1.powf(0.75) / (d1.powf(0.75) + d2.powf(0.75));
    assert!((s.probability(&g, NodeId(0)) - p1).abs() < 1e-15);
    let mut r = rng();
    let draws = 20_000;
    let hits = (0..draws)
        .filter(|_| s.sample(NodeKind::Paper, &mut r) == Some(NodeId(0)))
        .count();
    assert!((hits as f64 / draws as f64 - p1).abs() < 0.02);
    assert_eq!(s.sample(NodeKind::Venue, &mut r), Some(NodeId(3)));
}

#[test]
fn embeddings_file_layout() {
    let mut buf = Vec::new();
    write_embeddings(&mut buf, &[vec![1.0, -0.5], vec![0.25, 2.0]]).unwrap();
    assert_eq!(&buf[..9], EMBEDDINGS_MAGIC);
    assert_eq!(&buf[9..17], &2u64.to_le_bytes());
    assert_eq!(&buf[17..21], &2u32.to_le_bytes());
    assert_eq!(&buf[21..29], &0u64.to_le_bytes());
    assert_eq!(&buf[29..33], &1.0f32.to_le_bytes());
    assert_eq!(buf.len(), 21 + 2 * (8 + 8));
    let back = read_embeddings(buf.as_slice()).unwrap();
    assert_eq!(back, vec![(0, vec![1.0, -0.5]), (1, vec![0.25, 2.0])]);
    assert!(read_embeddings(&buf[..20]).is_err());
    assert!(write_embeddings(Vec::new(), &[vec![1.0], vec![]]).is_err());
}

#[test]
fn config_validation() {
    let mut c = EncoderConfig::default();
    assert!(c.validate().is_ok());
    c.heads = 0;
    assert!(c.validate().is_err());
    c = EncoderConfig { neighbor_hidden: 5, ..EncoderConfig::default() };
    assert!(c.validate().is_err());
}
