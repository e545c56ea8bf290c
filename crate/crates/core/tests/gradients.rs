//! Finite-difference verification of analytic gradients: every
//! differentiable graph operation over randomized shapes (rank 1 through 4
//! where the op allows it), then the full model end to end.
//!
//! Op outputs are contracted to a scalar through a fixed random linear
//! functional so every output coordinate influences the loss.

use radgen_core::data::{Image, Label, TrainingSample, View, ViewTag};
use radgen_core::model::{Model, ModelConfig};
use radgen_core::rng::Rng;
use radgen_core::tensor::gradcheck::{check, rel_err, FD_STEP};
use radgen_core::tensor::{Graph, TensorId};
use radgen_core::training::{sample_grads, ClassWeights};

const OP_TOL: f64 = 1e-4;
const END_TO_END_TOL: f64 = 1e-3;

fn random_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.next_f64() * 4.0 - 2.0).collect()
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Check `build`'s gradient w.r.t. every input against central differences.
fn check_op(rng: &mut Rng, shapes: &[&[usize]], build: impl Fn(&mut Graph, &[TensorId]) -> TensorId) {
    let inputs: Vec<Vec<f64>> = shapes.iter().map(|s| random_vec(rng, numel(s))).collect();

    // probe the output shape, then fix the contraction functional
    let out_shape = {
        let mut g = Graph::new();
        let ids: Vec<TensorId> = inputs
            .iter()
            .zip(shapes)
            .map(|(d, s)| g.input(d.clone(), s).unwrap())
            .collect();
        let out = build(&mut g, &ids);
        g.shape(out).to_vec()
    };
    let lin = random_vec(rng, numel(&out_shape));

    let forward = |which: usize, replacement: &[f64]| -> f64 {
        let mut g = Graph::new();
        let ids: Vec<TensorId> = inputs
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let data = if i == which { replacement.to_vec() } else { d.clone() };
                g.input(data, shapes[i]).unwrap()
            })
            .collect();
        let out = build(&mut g, &ids);
        let w = g.input(lin.clone(), &out_shape).unwrap();
        let prod = g.mul(out, w).unwrap();
        let total = g.sum(prod).unwrap();
        g.item(total)
    };

    // analytic gradients from one backward pass
    let mut g = Graph::new();
    let ids: Vec<TensorId> = inputs
        .iter()
        .zip(shapes)
        .map(|(d, s)| g.input(d.clone(), s).unwrap())
        .collect();
    let out = build(&mut g, &ids);
    let w = g.input(lin.clone(), &out_shape).unwrap();
    let prod = g.mul(out, w).unwrap();
    let total = g.sum(prod).unwrap();
    g.backward(total).unwrap();

    for (i, input) in inputs.iter().enumerate() {
        let analytic = g
            .grad(ids[i])
            .unwrap_or_else(|| panic!("input {i} received no gradient"))
            .to_vec();
        let failures = check(input, &analytic, OP_TOL, |p| forward(i, p));
        assert!(
            failures.is_empty(),
            "input {i} of shapes {shapes:?}: {failures:?}"
        );
    }
}

#[test]
fn matmul_gradients() {
    let mut rng = Rng::new(11);
    for _ in 0..3 {
        let (m, k, n) = (
            rng.next_below(4) as usize + 1,
            rng.next_below(4) as usize + 1,
            rng.next_below(4) as usize + 1,
        );
        check_op(&mut rng, &[&[m, k], &[k, n]], |g, ids| {
            g.matmul(ids[0], ids[1]).unwrap()
        });
    }
}

#[test]
fn transpose_gradients() {
    let mut rng = Rng::new(12);
    check_op(&mut rng, &[&[3, 5]], |g, ids| g.transpose(ids[0]).unwrap());
}

#[test]
fn elementwise_gradients_up_to_rank_4() {
    let mut rng = Rng::new(13);
    let shapes: [&[usize]; 4] = [&[6], &[2, 3], &[2, 3, 2], &[2, 3, 2, 2]];
    for shape in shapes {
        check_op(&mut rng, &[shape, shape], |g, ids| g.add(ids[0], ids[1]).unwrap());
        check_op(&mut rng, &[shape, shape], |g, ids| g.sub(ids[0], ids[1]).unwrap());
        check_op(&mut rng, &[shape, shape], |g, ids| g.mul(ids[0], ids[1]).unwrap());
    }
}

#[test]
fn broadcast_gradients() {
    let mut rng = Rng::new(14);
    // trailing-suffix broadcasts: [4] and [3,4] against [2,3,4]
    for suffix in [&[4][..], &[3, 4][..]] {
        check_op(&mut rng, &[&[2, 3, 4], suffix], |g, ids| {
            g.add(ids[0], ids[1]).unwrap()
        });
        check_op(&mut rng, &[&[2, 3, 4], suffix], |g, ids| {
            g.mul(ids[0], ids[1]).unwrap()
        });
        check_op(&mut rng, &[&[2, 3, 4], suffix], |g, ids| {
            g.sub(ids[0], ids[1]).unwrap()
        });
    }
}

#[test]
fn scale_and_gelu_gradients() {
    let mut rng = Rng::new(15);
    check_op(&mut rng, &[&[2, 3, 2, 2]], |g, ids| g.scale(ids[0], -1.7).unwrap());
    check_op(&mut rng, &[&[2, 3, 2, 2]], |g, ids| g.gelu(ids[0]).unwrap());
}

#[test]
fn softmax_gradients_over_every_axis() {
    let mut rng = Rng::new(16);
    for axis in 0..4 {
        check_op(&mut rng, &[&[2, 3, 2, 4]], |g, ids| {
            g.softmax(ids[0], axis).unwrap()
        });
    }
}

#[test]
fn layer_norm_gradients() {
    let mut rng = Rng::new(17);
    // gradient w.r.t. activations, gain, and bias at once, rank 2 and 3
    for shape in [&[4, 6][..], &[2, 3, 6][..]] {
        check_op(&mut rng, &[shape, &[6], &[6]], |g, ids| {
            g.layer_norm(ids[0], ids[1], ids[2]).unwrap()
        });
    }
}

#[test]
fn embedding_lookup_gradients_accumulate_over_repeats() {
    let mut rng = Rng::new(18);
    // repeated ids must scatter-add into the same table rows
    check_op(&mut rng, &[&[5, 3]], |g, ids| {
        g.embedding_lookup(ids[0], &[4, 0, 2, 0, 0]).unwrap()
    });
}

#[test]
fn slice_and_concat_gradients() {
    let mut rng = Rng::new(19);
    check_op(&mut rng, &[&[5, 4]], |g, ids| g.slice_rows(ids[0], 1, 3).unwrap());
    check_op(&mut rng, &[&[5, 4]], |g, ids| g.slice_cols(ids[0], 2, 2).unwrap());
    check_op(&mut rng, &[&[2, 3], &[1, 3], &[4, 3]], |g, ids| {
        g.concat_rows(ids).unwrap()
    });
    check_op(&mut rng, &[&[3, 2], &[3, 1], &[3, 4]], |g, ids| {
        g.concat_cols(ids).unwrap()
    });
}

#[test]
fn reduction_and_reshape_gradients() {
    let mut rng = Rng::new(20);
    check_op(&mut rng, &[&[4, 3]], |g, ids| g.mean_rows(ids[0]).unwrap());
    check_op(&mut rng, &[&[2, 3, 2, 2]], |g, ids| g.sum(ids[0]).unwrap());
    check_op(&mut rng, &[&[2, 3, 4]], |g, ids| g.reshape(ids[0], &[4, 6]).unwrap());
}

#[test]
fn cross_entropy_gradients_with_ignored_rows_and_class_weights() {
    let mut rng = Rng::new(21);
    let targets = [Some(2), None, Some(0), Some(3), None, Some(2)];
    check_op(&mut rng, &[&[6, 4]], |g, ids| {
        g.cross_entropy(ids[0], &targets, None).unwrap()
    });
    let weights = [0.5, 1.5, 2.0, 0.25];
    check_op(&mut rng, &[&[6, 4]], |g, ids| {
        g.cross_entropy(ids[0], &targets, Some(&weights)).unwrap()
    });
}

#[test]
fn cross_entropy_fixture_matches_central_differences() {
    // logits [2,0,0] with target class 0
    let logits = vec![2.0, 0.0, 0.0];
    let mut g = Graph::new();
    let x = g.input(logits.clone(), &[1, 3]).unwrap();
    let loss = g.cross_entropy(x, &[Some(0)], None).unwrap();
    g.backward(loss).unwrap();
    let analytic = g.grad(x).unwrap().to_vec();

    let f = |p: &[f64]| -> f64 {
        let mut g = Graph::new();
        let x = g.input(p.to_vec(), &[1, 3]).unwrap();
        let loss = g.cross_entropy(x, &[Some(0)], None).unwrap();
        g.item(loss)
    };
    let failures = check(&logits, &analytic, 1e-4, f);
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn gradient_accumulation_is_linear() {
    // backward through f + g equals the sum of separate backwards
    let mut rng = Rng::new(22);
    let x = random_vec(&mut rng, 6);

    let build_f = |g: &mut Graph, id: TensorId| {
        let sq = g.mul(id, id).unwrap();
        g.sum(sq).unwrap()
    };
    let build_h = |g: &mut Graph, id: TensorId| {
        let act = g.gelu(id).unwrap();
        g.sum(act).unwrap()
    };

    let mut joint = Graph::new();
    let xj = joint.input(x.clone(), &[2, 3]).unwrap();
    let f = build_f(&mut joint, xj);
    let h = build_h(&mut joint, xj);
    let total = joint.add(f, h).unwrap();
    joint.backward(total).unwrap();
    let joint_grad = joint.grad(xj).unwrap().to_vec();

    let mut gf = Graph::new();
    let xf = gf.input(x.clone(), &[2, 3]).unwrap();
    let lf = build_f(&mut gf, xf);
    gf.backward(lf).unwrap();
    let mut gh = Graph::new();
    let xh = gh.input(x.clone(), &[2, 3]).unwrap();
    let lh = build_h(&mut gh, xh);
    gh.backward(lh).unwrap();

    for ((j, a), b) in joint_grad
        .iter()
        .zip(gf.grad(xf).unwrap())
        .zip(gh.grad(xh).unwrap())
    {
        assert!(rel_err(*j, a + b) < 1e-12, "{j} vs {}", a + b);
    }
}

// ── end-to-end model gradient ───────────────────────────────────────────

fn tiny_setup() -> (Model, TrainingSample, ClassWeights) {
    let config = ModelConfig {
        image_size: 8,
        patch_size: 4,
        enc_depth: 2,
        enc_width: 8,
        enc_heads: 2,
        dec_depth: 2,
        dec_width: 8,
        dec_heads: 2,
        vocab_size: 12,
        max_text_tokens: 64,
        views: 2,
        classifier: true,
    };
    let model = Model::new(config, 4242).unwrap();

    let mut rng = Rng::new(7);
    let mut image = |tag: ViewTag| -> View {
        View {
            tag,
            image: Image {
                size: 8,
                pixels: (0..64).map(|_| rng.next_f64()).collect(),
            },
        }
    };
    let mut labels = [Label::Missing; 14];
    labels[2] = Label::Positive;
    labels[5] = Label::Negative;
    labels[13] = Label::Uncertain;
    let sample = TrainingSample {
        study_id: "toy".into(),
        views: vec![image(ViewTag::Pa), image(ViewTag::Lateral)],
        context: vec![5, 7, 9],
        report: vec![6, 8, 10, 11],
        labels,
        report_length: 4,
    };
    let weights = ClassWeights([[1.0, 0.5, 2.0, 0.25]; 14]);
    (model, sample, weights)
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let (model, sample, class_weights) = tiny_setup();
    let w_cls = 0.1;
    let analytic = sample_grads(&model, &sample, w_cls, Some(&class_weights))
        .unwrap()
        .grads;

    let mut scratch = model.clone();
    let mut loss_with = |name: &str, index: usize, v: f64| -> f64 {
        let saved = scratch.params.get(name).data[index];
        scratch.params.get_mut(name).data[index] = v;
        let loss = sample_grads(&scratch, &sample, w_cls, Some(&class_weights))
            .unwrap()
            .loss
            .total;
        scratch.params.get_mut(name).data[index] = saved;
        loss
    };

    let names: Vec<String> = analytic.keys().cloned().collect();
    let mut coords_checked = 0usize;
    let mut worst: (f64, String, usize) = (0.0, String::new(), 0);
    for name in &names {
        let grad = &analytic[name];
        let n = grad.len();
        // the patch projection is checked exhaustively, everything else on a
        // spread of coordinates to keep the suite fast
        let indices: Vec<usize> = if name == "enc.patch.w" {
            (0..n).collect()
        } else {
            let stride = (n / 4).max(1);
            (0..n).step_by(stride).take(4).collect()
        };
        for i in indices {
            let center = model.params.get(name).data[i];
            let up = loss_with(name, i, center + FD_STEP);
            let down = loss_with(name, i, center - FD_STEP);
            let numeric = (up - down) / (2.0 * FD_STEP);
            let e = rel_err(grad[i], numeric);
            if e > worst.0 {
                worst = (e, name.clone(), i);
            }
            assert!(
                e < END_TO_END_TOL,
                "{name}[{i}]: analytic {} vs numeric {numeric} (rel err {e})",
                grad[i]
            );
            coords_checked += 1;
        }
    }
    // all parameter tensors touched, and the full patch projection
    assert!(coords_checked > analytic["enc.patch.w"].len());
    assert!(worst.0 < END_TO_END_TOL, "worst {worst:?}");
}
