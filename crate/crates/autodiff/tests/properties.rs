use proptest::prelude::*;
use rabsa_autodiff::{checkpoint, ParamStore, Tape, Tensor};

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Tensor> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-50.0f64..50.0, r * c)
            .prop_map(move |d| Tensor::matrix(r, c, d).unwrap())
    })
}

proptest! {
    #[test]
    fn masked_softmax_rows_normalize(x in matrix(5, 7), seed in any::<u64>()) {
        let (n, m) = x.dims2().unwrap();
        let mut mask: Vec<bool> = (0..n * m).map(|k| (seed >> (k % 64)) & 1 == 1).collect();
        for i in 0..n {
            mask[i * m + (seed as usize + i) % m] = true;
        }
        let mut tape = Tape::new();
        let v = tape.leaf(x).unwrap();
        let y = tape.masked_softmax(v, &mask).unwrap();
        let out = tape.value(y);
        for i in 0..n {
            let row = out.row_slice(i);
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            for j in 0..m {
                if !mask[i * m + j] {
                    prop_assert_eq!(row[j], 0.0);
                }
            }
        }
    }

    /// Finite inputs within preconditions never produce NaN/Inf, forward or
    /// backward.
    #[test]
    fn ops_stay_finite(a in matrix(4, 4), scale in -1e3f64..1e3) {
        let (n, d) = a.dims2().unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(a).unwrap();
        let s = tape.scale(x, scale).unwrap();
        let t = tape.tanh(s).unwrap();
        let r = tape.relu(s).unwrap();
        let sm = tape.softmax(s).unwrap();
        let g = tape.leaf(Tensor::ones(&[1, d])).unwrap();
        let b = tape.leaf(Tensor::zeros(&[1, d])).unwrap();
        let ln = tape.layer_norm(s, g, b).unwrap();
        let pooled = tape.mean_rows(r).unwrap();
        let zero = tape.leaf(Tensor::zeros(&[1, d])).unwrap();
        let cos = tape.cosine_similarity(pooled, zero).unwrap();
        let lse = tape.log_sum_exp(s).unwrap();
        let ce = tape.cross_entropy(s, &vec![0; n]).unwrap();
        let parts = [t, sm, ln];
        let cat = tape.concat_cols(&parts).unwrap();
        let tot = tape.sum(cat).unwrap();
        let tot = tape.add(tot, cos).unwrap();
        let tot = tape.add(tot, lse).unwrap();
        let tot = tape.add(tot, ce).unwrap();
        let grads = tape.backward(tot).unwrap();
        prop_assert!(tape.value(tot).is_finite());
        prop_assert!(grads.wrt(x).is_finite());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(a in matrix(3, 5), b in matrix(6, 2)) {
        let mut store = ParamStore::new();
        store.add("enc.w", a).unwrap();
        store.add("head.b", b).unwrap();
        store.add("tiny", Tensor::scalar(f64::MIN_POSITIVE)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        checkpoint::save(&store, &path).unwrap();
        let back = checkpoint::load(&path).unwrap();
        prop_assert_eq!(back.len(), store.len());
        for ((_, n1, t1), (_, n2, t2)) in store.iter().zip(back.iter()) {
            prop_assert_eq!(n1, n2);
            prop_assert_eq!(t1.shape(), t2.shape());
            let bits1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
            let bits2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits1, bits2);
        }
    }
}

#[test]
fn checkpoint_manifest_lists_offsets() {
    let mut store = ParamStore::new();
    store.add("a", Tensor::zeros(&[2, 3])).unwrap();
    store.add("b", Tensor::zeros(&[1, 4])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&store, &path).unwrap();
    let manifest = std::fs::read_to_string(checkpoint::manifest_path(&path)).unwrap();
    let rows: Vec<&str> = manifest.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows, ["a\t2,3\t0\t6", "b\t1,4\t48\t4"]);
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 80);
}
