use super::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use crate::autodiff::gradcheck;
use crate::graph::Snapshot;
use crate::scenario::{generate_one, ScenarioConfig};

fn tiny(setup: u8, n_aps: usize, stas: usize, len: usize, seed: u64) -> DeploymentSequence {
    let mut c = ScenarioConfig::for_setup(setup, seed).unwrap();
    c.n_aps = (n_aps, n_aps);
    c.stas_per_ap = (stas, stas);
    c.sequence_length = len;
    generate_one(&c, 0).unwrap()
}

fn small_model(temporal: bool, seed: u64) -> Htnet {
    let config = ModelConfig {
        temporal,
        ..ModelConfig::with_width(6)
    };
    Htnet::new(config, seed).unwrap()
}

fn eval(model: &Htnet, deps: &[&DeploymentSequence]) -> Vec<f64> {
    let batch = model.batch(deps).unwrap();
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape);
    let f = model.forward(&mut tape, &vars, &batch, Mode::Eval).unwrap();
    tape.value(f.predictions).iter().copied().collect()
}

#[test]
fn head_softplus_values() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_shape_vec((3, 1), vec![0.0, 20.0, -20.0]).unwrap());
    let y = tape.softplus(x).unwrap();
    let y = tape.value(y);
    assert!((y[[0, 0]] - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((y[[1, 0]] - 20.0).abs() < 1e-8);
    assert!(y[[2, 0]] > 0.0 && (y[[2, 0]] - 2.061e-9).abs() < 1e-12);
}

#[test]
fn rmse_examples() {
    let cases: [(&[f64], &[f64], f64); 3] = [(&[1.0, 2.0], &[1.0, 2.0], 0.0), (&[3.0, 4.0], &[0.0, 0.0], 12.5f64.sqrt()), (&[2.0], &[5.0], 3.0)];
    for (pred, y, expected) in cases {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::from_shape_vec((pred.len(), 1), pred.to_vec()).unwrap());
        let l = rmse_loss(&mut tape, p, y).unwrap();
        assert!((tape.scalar(l) - expected).abs() < 1e-12);
    }
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::zeros((0, 1)));
    assert!(matches!(rmse_loss(&mut tape, p, &[]), Err(ModelError::NoTargets)));
}

#[test]
fn default_parameter_count_is_order_half_million() {
    let m = Htnet::new(ModelConfig::default(), 0).unwrap();
    let n = m.num_params();
    assert!((400_000..800_000).contains(&n), "{n}");
}

#[test]
fn single_snapshot_is_static_plus_one_step() {
    let dep = tiny(1, 2, 3, 1, 1);
    let model = small_model(true, 2);
    let batch = model.batch(&[&dep]).unwrap();
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape);
    let got = model.forward(&mut tape, &vars, &batch, Mode::Eval).unwrap();
    let got = tape.value(got.predictions).clone();

    let (emb, _) = model.embed(&mut tape, &vars, &batch, Mode::Eval).unwrap();
    let rows: Index = Arc::new(batch.targets.iter().map(|g| g.row).collect());
    let mut x = tape.gather(emb, &rows).unwrap();
    let zero = tape.constant(Tensor::zeros((rows.len(), model.config.lstm_hidden)));
    for l in &model.lstm {
        x = l.step(&mut tape, &vars, x, zero, zero, model.config.cell).unwrap().0;
    }
    let logits = tape.matmul_t(x, vars[model.head.index()]).unwrap();
    let manual = tape.softplus(logits).unwrap();
    assert_eq!(&got, tape.value(manual));
}

#[test]
fn future_snapshots_do_not_affect_the_past() {
    let dep = tiny(5, 3, 3, 6, 3);
    let model = small_model(true, 4);
    let base = eval(&model, &[&dep]);
    let mut perturbed = dep.clone();
    for s in &mut perturbed.snapshots[4..] {
        for n in &mut s.nodes {
            n.x += 7.0;
            n.sinr -= 3.0;
        }
    }
    let after = eval(&model, &[&perturbed]);
    let batch = model.batch(&[&dep]).unwrap();
    let mut changed = false;
    for (i, g) in batch.targets.iter().enumerate() {
        if g.step < 4 {
            assert_eq!(base[i].to_bits(), after[i].to_bits());
        } else {
            changed |= base[i] != after[i];
        }
    }
    assert!(changed);
    assert!(base.iter().all(|&y| y > 0.0));
}

/// Step-by-step composition of the public pieces, one snapshot at a time.
#[test]
fn matches_manual_composition_over_ten_snapshots() {
    let dep = tiny(5, 2, 3, 10, 5);
    let model = small_model(true, 6);
    let got = eval(&model, &[&dep]);

    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape);
    let zero = |tape: &mut Tape| tape.constant(Tensor::zeros((1, model.config.lstm_hidden)));
    let mut state: std::collections::HashMap<NodeId, Vec<(Var, Var)>> = Default::default();
    let mut manual = Vec::new();
    for snap in &dep.snapshots {
        let single = DeploymentSequence {
            snapshots: vec![snap.clone()],
            ..dep.clone()
        };
        let batch = model.batch(&[&single]).unwrap();
        let (emb, _) = model.embed(&mut tape, &vars, &batch, Mode::Eval).unwrap();
        for g in &batch.targets {
            let mut x = tape.gather(emb, &Arc::new(vec![g.row])).unwrap();
            let z = zero(&mut tape);
            let st = state.entry(g.sta).or_insert_with(|| vec![(z, z); model.lstm.len()]);
            for (l, layer) in model.lstm.iter().enumerate() {
                let (h, c) = layer.step(&mut tape, &vars, x, st[l].0, st[l].1, model.config.cell).unwrap();
                st[l] = (h, c);
                x = h;
            }
            let logit = tape.matmul_t(x, vars[model.head.index()]).unwrap();
            let y = tape.softplus(logit).unwrap();
            manual.push(tape.scalar(y));
        }
    }
    assert_eq!(got.len(), manual.len());
    for (a, b) in got.iter().zip(&manual) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

fn detach(snap: &mut Snapshot, sta: NodeId) {
    snap.nodes.iter_mut().find(|n| n.id == sta).unwrap().ap = None;
    snap.edges.retain(|e| e.v != sta);
    snap.labels.remove(&sta);
}

#[test]
fn detached_state_is_frozen_until_reattachment() {
    let dep = tiny(1, 2, 3, 3, 7);
    let sta = dep.snapshots[0].stas().next().unwrap().id;
    let mut gapped = dep.clone();
    detach(&mut gapped.snapshots[1], sta);
    let mut skipped = dep.clone();
    skipped.snapshots.remove(1);
    skipped.snapshots[1].t = 1;

    let model = small_model(true, 8);
    let find = |d: &DeploymentSequence, step: usize| {
        let b = model.batch(&[d]).unwrap();
        let p = eval(&model, &[d]);
        let i = b.targets.iter().position(|g| g.sta == sta && g.step == step).unwrap();
        p[i]
    };
    let b = model.batch(&[&gapped]).unwrap();
    assert!(!b.targets.iter().any(|g| g.sta == sta && g.step == 1));
    assert_eq!(b.excluded_stas, 1);
    assert_eq!(find(&gapped, 2), find(&skipped, 1));
}

#[test]
fn state_survives_handover() {
    let dep = tiny(2, 2, 2, 3, 9);
    let sta = dep.snapshots[0].stas().next().unwrap().clone();
    let other = dep.snapshots[0].aps().find(|a| Some(a.id) != sta.ap).unwrap().id;
    let mut moved = dep.clone();
    let snap = &mut moved.snapshots[2];
    snap.nodes.iter_mut().find(|n| n.id == sta.id).unwrap().ap = Some(other);
    snap.edges.iter_mut().find(|e| e.v == sta.id).unwrap().u = other;

    let model = small_model(true, 10);
    let (b0, b1) = (model.batch(&[&dep]).unwrap(), model.batch(&[&moved]).unwrap());
    let slots = |b: &SequenceBatch| b.targets.iter().filter(|g| g.sta == sta.id).map(|g| g.slot).collect::<Vec<_>>();
    assert_eq!(slots(&b0), slots(&b1));
    assert_eq!(slots(&b0).len(), 3);
    assert!(slots(&b0).windows(2).all(|w| w[0] == w[1]));

    // The state entering step 2 comes from steps 0 and 1, which are unchanged.
    let (p0, p1) = (eval(&model, &[&dep]), eval(&model, &[&moved]));
    for (i, g) in b0.targets.iter().enumerate() {
        if g.step < 2 {
            assert_eq!(p0[i], p1[i]);
        }
    }
}

#[test]
fn batching_matches_individual_inference() {
    let a = tiny(5, 2, 3, 4, 11);
    let b = tiny(5, 3, 2, 2, 12);
    let model = small_model(true, 13);
    let joint = eval(&model, &[&a, &b]);
    let mut split = eval(&model, &[&a]);
    split.extend(eval(&model, &[&b]));
    assert_eq!(joint.len(), split.len());
    for (x, y) in joint.iter().zip(&split) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn static_ablation_has_no_lstm() {
    let m = small_model(false, 14);
    assert!(m.lstm.is_empty());
    assert!(m.params.iter().all(|(n, _)| !n.starts_with("lstm")));
    let dep = tiny(1, 2, 2, 3, 15);
    assert!(eval(&m, &[&dep]).iter().all(|&y| y > 0.0));
}

#[test]
fn rebuild_from_parts() {
    let mut m = small_model(true, 16);
    m.scaler = Some(Scaler::fit(&[tiny(1, 2, 2, 2, 17)]));
    let tensors: Vec<(String, Tensor)> = m.params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
    let back = Htnet::from_parts(m.config.clone(), tensors.clone(), m.running.clone(), m.scaler.clone()).unwrap();
    assert_eq!(back.params, m.params);
    let mut bad = tensors;
    bad[0].1 = Tensor::zeros((1, 1));
    assert!(matches!(
        Htnet::from_parts(m.config.clone(), bad, m.running.clone(), None),
        Err(ModelError::Parameters(_))
    ));
}

#[test]
fn full_model_gradcheck_tiny() {
    let dep = tiny(5, 2, 2, 3, 18);
    let config = ModelConfig {
        layers: 2,
        lstm_layers: 2,
        ..ModelConfig::with_width(3)
    };
    let mut model = Htnet::new(config, 19).unwrap();
    model.scaler = Some(Scaler::fit(std::slice::from_ref(&dep)));
    let batch = model.batch(&[&dep]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let inputs: Vec<(String, Tensor)> = model
        .params
        .iter()
        .map(|(n, t)| (n.to_string(), t.mapv(|v| v + rng.gen_range(-0.1..0.1))))
        .collect();
    let report = gradcheck(&inputs, 1e-4, 1e-4, |tape, vars| {
        let f = model.forward(tape, vars, &batch, Mode::Train).map_err(|e| match e {
            ModelError::Diff(d) => d,
            other => panic!("{other}"),
        })?;
        model.loss(tape, f.predictions, &batch).map_err(|e| match e {
            ModelError::Diff(d) => d,
            other => panic!("{other}"),
        })
    });
    assert!(report.passed(), "{report:?}");
}
