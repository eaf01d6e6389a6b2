//! Finite-difference checks of every tape op on random shapes and values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gradcheck::{central_difference_vec, relative_error, DEFAULT_STEP};
use crate::{DropoutKey, Result, Tape, Tensor, Var};

/// Worst relative error of one op over all seeds and input coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct OpReport {
    pub op: &'static str,
    pub seeds: u64,
    pub coordinates: usize,
    pub max_rel_error: f64,
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// Random values bounded away from zero, for ops with a kink at 0.
fn random_off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let mut t = random(rng, shape);
    for v in t.data_mut() {
        if v.abs() < 0.05 {
            *v += 0.1_f64.copysign(*v);
        }
    }
    t
}

type Build = dyn Fn(&mut Tape, &[Var]) -> Result<Var>;
type Case = Box<dyn Fn(&mut ChaCha8Rng) -> (Vec<Tensor>, Box<Build>)>;

/// Contract the op's output against fixed random weights and compare every
/// input coordinate's analytic gradient with a central difference. Returns
/// the worst error and the number of coordinates.
pub fn check_op(
    inputs: &[Tensor],
    weights_seed: u64,
    key: DropoutKey,
    build: &Build,
) -> Result<(f64, usize)> {
    let eval = |vals: &[Tensor], want_grads: bool| -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::with_dropout_key(key);
        let vars: Vec<Var> = vals
            .iter()
            .map(|t| tape.leaf(t.clone()))
            .collect::<Result<_>>()?;
        let out = build(&mut tape, &vars)?;
        let shape = tape.value(out).shape().to_vec();
        let mut wrng = ChaCha8Rng::seed_from_u64(weights_seed);
        let w = tape.leaf(random(&mut wrng, &shape))?;
        let prod = tape.mul(out, w)?;
        let loss = tape.sum(prod)?;
        let value = tape.scalar(loss);
        let grads = if want_grads {
            let g = tape.backward(loss)?;
            vars.iter().map(|v| g.wrt(*v)).collect()
        } else {
            Vec::new()
        };
        Ok((value, grads))
    };

    let (_, analytic) = eval(inputs, true)?;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (k, input) in inputs.iter().enumerate() {
        let mut flat = input.data().to_vec();
        for idx in 0..flat.len() {
            let numeric = central_difference_vec(&mut flat, idx, DEFAULT_STEP, |x| {
                let mut vals = inputs.to_vec();
                vals[k] = Tensor::new(input.shape().to_vec(), x.to_vec())?;
                Ok(eval(&vals, false)?.0)
            })?;
            worst = worst.max(relative_error(analytic[k].data()[idx], numeric));
            count += 1;
        }
    }
    Ok((worst, count))
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.gen_range(1..5), rng.gen_range(1..6))
}

fn case<F>(f: F) -> Case
where
    F: Fn(&mut ChaCha8Rng) -> (Vec<Tensor>, Box<Build>) + 'static,
{
    Box::new(f)
}

fn cases() -> Vec<(&'static str, Case)> {
    vec![
        (
            "add",
            case(|rng| {
                let (n, d) = dims(rng);
                (
                    vec![random(rng, &[n, d]), random(rng, &[n, d])],
                    Box::new(|t, v| t.add(v[0], v[1])),
                )
            }),
        ),
        (
            "sub",
            case(|rng| {
                let (n, d) = dims(rng);
                (
                    vec![random(rng, &[n, d]), random(rng, &[n, d])],
                    Box::new(|t, v| t.sub(v[0], v[1])),
                )
            }),
        ),
        (
            "mul",
            case(|rng| {
                let (n, d) = dims(rng);
                (
                    vec![random(rng, &[n, d]), random(rng, &[n, d])],
                    Box::new(|t, v| t.mul(v[0], v[1])),
                )
            }),
        ),
        (
            "add_bias",
            case(|rng| {
                let (n, d) = dims(rng);
                (
                    vec![random(rng, &[n, d]), random(rng, &[1, d])],
                    Box::new(|t, v| t.add_bias(v[0], v[1])),
                )
            }),
        ),
        (
            "scale",
            case(|rng| {
                let (n, d) = dims(rng);
                let f = rng.gen_range(-2.0..2.0);
                (
                    vec![random(rng, &[n, d])],
                    Box::new(move |t, v| t.scale(v[0], f)),
                )
            }),
        ),
        (
            "matmul",
            case(|rng| {
                let (n, k) = dims(rng);
                let m = rng.gen_range(1..5);
                (
                    vec![random(rng, &[n, k]), random(rng, &[k, m])],
                    Box::new(|t, v| t.matmul(v[0], v[1])),
                )
            }),
        ),
        (
            "transpose",
            case(|rng| {
                let (n, d) = dims(rng);
                (
                    vec![random(rng, &[n, d])],
                    Box::new(|t, v| t.transpose(v[0])),
                )
            }),
        ),
        (
            "concat_cols",
            case(|rng| {
                let n = rng.gen_range(1..4);
                let ins = vec![
                    random(rng, &[n, 2]),
                    random(rng, &[n, 3]),
                    random(rng, &[n, 1]),
                ];
                (ins, Box::new(|t, v| t.concat_cols(v)))
            }),
        ),
        (
            "concat_rows",
            case(|rng| {
                let d = rng.gen_range(1..4);
                let ins = vec![random(rng, &[2, d]), random(rng, &[1, d])];
                (ins, Box::new(|t, v| t.concat_rows(v)))
            }),
        ),
        (
            "split",
            case(|rng| {
                let n = rng.gen_range(1..4);
                (
                    vec![random(rng, &[n, 5])],
                    Box::new(|t, v| {
                        let parts = t.split_cols(v[0], &[2, 3])?;
                        let a = t.tanh(parts[0])?;
                        let b = t.slice_cols(parts[1], 1, 2)?;
                        let c = t.mul(a, b)?;
                        t.slice_rows(c, 0, 1)
                    }),
                )
            }),
        ),
        (
            "embedding_gather",
            case(|rng| {
                let ids: Vec<usize> = (0..5).map(|_| rng.gen_range(0..4)).collect();
                (
                    vec![random(rng, &[4, 3])],
                    Box::new(move |t, v| t.gather_rows(v[0], &ids)),
                )
            }),
        ),
        (
            "reshape",
            case(|rng| {
                (
                    vec![random(rng, &[2, 6])],
                    Box::new(|t, v| t.reshape(v[0], 4, 3)),
                )
            }),
        ),
        (
            "relu",
            case(|rng| {
                let (n, d) = dims(rng);
                (
                    vec![random_off_zero(rng, &[n, d])],
                    Box::new(|t, v| t.relu(v[0])),
                )
            }),
        ),
        (
            "tanh",
            case(|rng| {
                let (n, d) = dims(rng);
                (vec![random(rng, &[n, d])], Box::new(|t, v| t.tanh(v[0])))
            }),
        ),
        (
            "masked_softmax",
            case(|rng| {
                let (n, m) = (rng.gen_range(1..4), rng.gen_range(2..6));
                let mut mask: Vec<bool> = (0..n * m).map(|_| rng.gen_bool(0.6)).collect();
                for i in 0..n {
                    mask[i * m + rng.gen_range(0..m)] = true;
                }
                (
                    vec![random(rng, &[n, m])],
                    Box::new(move |t, v| t.masked_softmax(v[0], &mask)),
                )
            }),
        ),
        (
            "softmax",
            case(|rng| {
                let (n, d) = dims(rng);
                (vec![random(rng, &[n, d])], Box::new(|t, v| t.softmax(v[0])))
            }),
        ),
        (
            "log_sum_exp",
            case(|rng| {
                let (n, d) = dims(rng);
                (
                    vec![random(rng, &[n, d])],
                    Box::new(|t, v| t.log_sum_exp(v[0])),
                )
            }),
        ),
        (
            "cross_entropy",
            case(|rng| {
                let n = rng.gen_range(1..4);
                let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
                (
                    vec![random(rng, &[n, 3])],
                    Box::new(move |t, v| t.cross_entropy(v[0], &targets)),
                )
            }),
        ),
        (
            "mean_pool",
            case(|rng| {
                let (n, d) = dims(rng);
                (
                    vec![random(rng, &[n, d])],
                    Box::new(|t, v| t.mean_rows(v[0])),
                )
            }),
        ),
        (
            "sum_mean",
            case(|rng| {
                let (n, d) = dims(rng);
                (
                    vec![random(rng, &[n, d])],
                    Box::new(|t, v| {
                        let s = t.sum(v[0])?;
                        let m = t.mean(v[0])?;
                        t.mul(s, m)
                    }),
                )
            }),
        ),
        (
            "layer_norm",
            case(|rng| {
                let n = rng.gen_range(1..4);
                let d = rng.gen_range(2..6);
                let ins = vec![
                    random(rng, &[n, d]),
                    random(rng, &[1, d]),
                    random(rng, &[1, d]),
                ];
                (ins, Box::new(|t, v| t.layer_norm(v[0], v[1], v[2])))
            }),
        ),
        (
            "dropout",
            case(|rng| {
                let (n, d) = dims(rng);
                (
                    vec![random(rng, &[n, d])],
                    Box::new(|t, v| t.dropout(v[0], 0.3, true)),
                )
            }),
        ),
        (
            "cosine_similarity",
            case(|rng| {
                let d = rng.gen_range(1..6);
                (
                    vec![random(rng, &[1, d]), random(rng, &[1, d])],
                    Box::new(|t, v| t.cosine_similarity(v[0], v[1])),
                )
            }),
        ),
        (
            "row_weighted_sum",
            case(|rng| {
                let (n, m, d) = (
                    rng.gen_range(1..4),
                    rng.gen_range(1..4),
                    rng.gen_range(1..4),
                );
                (
                    vec![random(rng, &[n, m]), random(rng, &[n * m, d])],
                    Box::new(|t, v| t.row_weighted_sum(v[0], v[1])),
                )
            }),
        ),
        (
            "three_layer",
            case(|rng| {
                let n = rng.gen_range(1..4);
                let inputs = vec![
                    random(rng, &[n, 4]),
                    random(rng, &[4, 5]),
                    random(rng, &[1, 5]),
                    random(rng, &[5, 4]),
                    random(rng, &[1, 4]),
                    random(rng, &[1, 4]),
                    random(rng, &[4, 3]),
                ];
                let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
                (
                    inputs,
                    Box::new(move |t: &mut Tape, v: &[Var]| {
                        let h = t.matmul(v[0], v[1])?;
                        let h = t.add_bias(h, v[2])?;
                        let h = t.tanh(h)?;
                        let h = t.matmul(h, v[3])?;
                        let h = t.layer_norm(h, v[4], v[5])?;
                        let h = t.tanh(h)?;
                        let logits = t.matmul(h, v[6])?;
                        t.cross_entropy(logits, &targets)
                    }),
                )
            }),
        ),
    ]
}

/// Gradient reversal: the gradient reaching the input must be `−λ` times
/// the finite difference of the downstream function without reversal.
fn check_grad_reverse(seed: u64) -> Result<(f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = rng.gen_range(0.0..2.0);
    let x0 = random(&mut rng, &[1, 4]);
    let w = random(&mut rng, &[4, 3]);
    let downstream = |tape: &mut Tape, x: Var, reverse: bool| -> Result<Var> {
        let x = if reverse {
            tape.grad_reverse(x, lambda)?
        } else {
            x
        };
        let wv = tape.leaf(w.clone())?;
        let h = tape.matmul(x, wv)?;
        let h = tape.tanh(h)?;
        tape.cross_entropy(h, &[1])
    };
    let mut tape = Tape::new();
    let x = tape.leaf(x0.clone())?;
    let loss = downstream(&mut tape, x, true)?;
    let reversed = tape.backward(loss)?.wrt(x);
    let mut flat = x0.data().to_vec();
    let mut worst: f64 = 0.0;
    for idx in 0..flat.len() {
        let numeric = central_difference_vec(&mut flat, idx, DEFAULT_STEP, |v| {
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::row(v.to_vec()))?;
            let l = downstream(&mut tape, x, false)?;
            Ok(tape.scalar(l))
        })?;
        worst = worst.max(relative_error(reversed.data()[idx], -lambda * numeric));
    }
    Ok((worst, flat.len()))
}

/// Run every op over seeds `0..seeds`.
pub fn op_suite(seeds: u64) -> Result<Vec<OpReport>> {
    let mut reports = Vec::new();
    for (op, make) in cases() {
        let mut report = OpReport {
            op,
            seeds,
            coordinates: 0,
            max_rel_error: 0.0,
        };
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (inputs, build) = make(&mut rng);
            let key = DropoutKey { seed, step: 3 };
            let (err, n) = check_op(&inputs, seed + 10_000, key, &*build)?;
            report.max_rel_error = report.max_rel_error.max(err);
            report.coordinates += n;
        }
        reports.push(report);
    }
    let mut report = OpReport {
        op: "grad_reverse",
        seeds,
        coordinates: 0,
        max_rel_error: 0.0,
    };
    for seed in 0..seeds {
        let (err, n) = check_grad_reverse(seed)?;
        report.max_rel_error = report.max_rel_error.max(err);
        report.coordinates += n;
    }
    reports.push(report);
    Ok(reports)
}
