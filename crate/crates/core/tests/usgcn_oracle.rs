//! The syntax-fusion layers and pooling against scalar-loop references, and
//! the neighbourhood mask on random trees.

#![allow(clippy::needless_range_loop)]

mod support;

use rabsa_autodiff::{ParamStore, Tape, Tensor, Var};
use rabsa_core::corpus::LabelInventory;
use rabsa_core::model::{
    aggregate, relation_id, usgcn_layer, GcnLayerVars, HeadVars, Model, ModelConfig, SyntaxGraph,
    Vocab, NONE_LABEL, SELF_LABEL,
};
use rabsa_core::toy::ToyCorpus;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{aggregate_reference, max_abs_diff, random_tree, random_vec, usgcn_reference, Mat};

const TOL: f64 = 1e-10;

fn mat_of(store: &ParamStore, name: &str) -> Mat {
    let t = store.get(store.id(name).unwrap());
    Mat::new(t.rows(), t.cols(), t.data().to_vec())
}

fn leaf(tape: &mut Tape, m: &Mat) -> Var {
    tape.leaf(Tensor::matrix(m.rows, m.cols, m.data.clone()).unwrap())
        .unwrap()
}

#[test]
fn stacked_layers_and_pooling_match_reference_on_short_toy_sentences() {
    let toy = ToyCorpus::load().unwrap();
    let vocab = Vocab::from_corpora(&[&toy.train, &toy.dev]);
    let cfg = ModelConfig::desk();
    let model = Model::new(cfg.clone(), vocab, toy.labels.clone()).unwrap();
    let store = &model.store;
    let table = mat_of(store, "gcn.label_emb");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for inst in toy
        .train
        .iter()
        .chain(&toy.dev)
        .filter(|i| i.tree.len() <= 6)
    {
        let n = inst.tree.len();
        let graph = SyntaxGraph::from_tree(&inst.tree, &toy.labels).unwrap();
        let r0 = Mat::new(n, cfg.d_model, random_vec(&mut rng, n * cfg.d_model));
        let asp = random_vec(&mut rng, cfg.d_model);
        let cls = random_vec(&mut rng, cfg.d_model);

        let mut tape = Tape::new();
        let mut r = leaf(&mut tape, &r0);
        let r_asp = tape.leaf(Tensor::row(asp.clone())).unwrap();
        let h_cls = tape.leaf(Tensor::row(cls.clone())).unwrap();
        let t = leaf(&mut tape, &table);
        let lab = tape.gather_rows(t, &graph.labels).unwrap();
        let mut reference = r0.clone();
        for k in 0..cfg.n_gcn_layers {
            let wa = mat_of(store, &format!("gcn.l{k}.wa"));
            let ba = mat_of(store, &format!("gcn.l{k}.ba"));
            let wb = mat_of(store, &format!("gcn.l{k}.wb"));
            let w = GcnLayerVars {
                wa: leaf(&mut tape, &wa),
                ba: leaf(&mut tape, &ba),
                wb: leaf(&mut tape, &wb),
            };
            let out = usgcn_layer(&mut tape, r, lab, r_asp, &graph.adjacency, &w).unwrap();
            let (ref_r, ref_alpha) = usgcn_reference(
                &reference,
                &table,
                &graph.labels,
                &asp,
                &graph.adjacency,
                &wa,
                &ba.data,
                &wb.data,
            );
            worst = worst.max(max_abs_diff(tape.value(out.alpha).data(), &ref_alpha.data));
            worst = worst.max(max_abs_diff(tape.value(out.r).data(), &ref_r.data));
            r = out.r;
            reference = ref_r;
        }
        let wc = mat_of(store, "agg.wc");
        let bc = mat_of(store, "agg.bc");
        let head = HeadVars {
            wc: leaf(&mut tape, &wc),
            bc: leaf(&mut tape, &bc),
            w_out: leaf(&mut tape, &mat_of(store, "cls.w")),
            b_out: leaf(&mut tape, &mat_of(store, "cls.b")),
        };
        let agg = aggregate(&mut tape, r, r_asp, h_cls, &head).unwrap();
        let (beta, ra) = aggregate_reference(&reference, &asp, &wc.data, bc.data[0]);
        worst = worst.max(max_abs_diff(tape.value(agg.beta).data(), &beta));
        worst = worst.max(max_abs_diff(tape.value(agg.r_a).data(), &ra));
        let mut rf = ra.clone();
        rf.extend_from_slice(&cls);
        worst = worst.max(max_abs_diff(tape.value(agg.r_f).data(), &rf));
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} short toy instances");
    assert!(worst <= TOL, "max deviation {worst:e}");
}

struct Small {
    wa: Mat,
    ba: Vec<f64>,
    wb: Vec<f64>,
    table: Mat,
}

const D: usize = 4;
const DL: usize = 3;

fn small_weights(rng: &mut ChaCha8Rng, labels: &LabelInventory) -> Small {
    let din = D + DL + D;
    let rows = 2 + 2 * labels.len();
    Small {
        wa: Mat::new(din, D, random_vec(rng, din * D)),
        ba: random_vec(rng, D),
        wb: random_vec(rng, din),
        table: Mat::new(rows, DL, random_vec(rng, rows * DL)),
    }
}

fn run_layer(w: &Small, r0: &Mat, asp: &[f64], graph: &SyntaxGraph) -> (Vec<f64>, Vec<f64>) {
    let mut tape = Tape::new();
    let r = leaf(&mut tape, r0);
    let r_asp = tape.leaf(Tensor::row(asp.to_vec())).unwrap();
    let t = leaf(&mut tape, &w.table);
    let lab = tape.gather_rows(t, &graph.labels).unwrap();
    let vars = GcnLayerVars {
        wa: leaf(&mut tape, &w.wa),
        ba: tape.leaf(Tensor::row(w.ba.clone())).unwrap(),
        wb: tape
            .leaf(Tensor::matrix(w.wb.len(), 1, w.wb.clone()).unwrap())
            .unwrap(),
    };
    let out = usgcn_layer(&mut tape, r, lab, r_asp, &graph.adjacency, &vars).unwrap();
    (
        tape.value(out.r).data().to_vec(),
        tape.value(out.alpha).data().to_vec(),
    )
}

#[test]
fn neighbourhood_mask_on_random_graphs() {
    let labels = ToyCorpus::load().unwrap().labels;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..1000 {
        let n = rng.gen_range(1..=12);
        let tree = random_tree(&mut rng, n, &labels);
        let g = SyntaxGraph::from_tree(&tree, &labels).unwrap();

        let mut edges = 0;
        for i in 0..n {
            assert!(g.connected(i, i));
            assert_eq!(g.label(i, i), SELF_LABEL);
            for j in 0..n {
                assert_eq!(g.connected(i, j), g.connected(j, i));
                if !g.connected(i, j) {
                    assert_eq!(g.label(i, j), NONE_LABEL);
                }
                edges += usize::from(g.connected(i, j));
            }
        }
        assert_eq!(edges, n + 2 * (n - 1), "case {case}");
        for arc in tree.arcs().filter(|a| a.head != 0) {
            let k = labels.id(&arc.label).unwrap();
            let (h, d) = (arc.head - 1, arc.dependent - 1);
            assert_eq!(g.label(h, d), relation_id(k, true));
            assert_eq!(g.label(d, h), relation_id(k, false));
        }

        let w = small_weights(&mut rng, &labels);
        let r0 = Mat::new(n, D, random_vec(&mut rng, n * D));
        let asp = random_vec(&mut rng, D);
        let (r, alpha) = run_layer(&w, &r0, &asp, &g);
        let (ref_r, ref_alpha) = usgcn_reference(
            &r0,
            &w.table,
            &g.labels,
            &asp,
            &g.adjacency,
            &w.wa,
            &w.ba,
            &w.wb,
        );
        assert!(max_abs_diff(&r, &ref_r.data) <= TOL, "case {case}");
        assert!(max_abs_diff(&alpha, &ref_alpha.data) <= TOL, "case {case}");
        for i in 0..n {
            let row = &alpha[i * n..(i + 1) * n];
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..n {
                if !g.connected(i, j) {
                    assert_eq!(row[j], 0.0, "case {case}: weight outside the neighbourhood");
                }
            }
        }

        // Perturbing a token only moves the rows of its neighbours.
        let j = rng.gen_range(0..n);
        let mut moved = r0.clone();
        for c in 0..D {
            moved.data[j * D + c] += 0.5;
        }
        let (r2, _) = run_layer(&w, &moved, &asp, &g);
        for i in 0..n {
            if !g.connected(i, j) {
                assert_eq!(
                    &r[i * D..(i + 1) * D],
                    &r2[i * D..(i + 1) * D],
                    "case {case}"
                );
            }
        }
    }
}

#[test]
fn relabelling_an_arc_only_touches_its_endpoints() {
    let labels = ToyCorpus::load().unwrap().labels;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut changed_rows = 0;
    for _ in 0..200 {
        let n = rng.gen_range(2..=8);
        let tree = random_tree(&mut rng, n, &labels);
        let g = SyntaxGraph::from_tree(&tree, &labels).unwrap();
        let arc = tree.arcs().find(|a| a.head != 0).unwrap();
        let k = labels.id(&arc.label).unwrap();
        let other = (k + 1) % labels.len();
        let mut g2 = g.clone();
        let (h, d) = (arc.head - 1, arc.dependent - 1);
        g2.labels[h * n + d] = relation_id(other, true);
        g2.labels[d * n + h] = relation_id(other, false);

        let w = small_weights(&mut rng, &labels);
        let r0 = Mat::new(n, D, random_vec(&mut rng, n * D));
        let asp = random_vec(&mut rng, D);
        let (a, _) = run_layer(&w, &r0, &asp, &g);
        let (b, _) = run_layer(&w, &r0, &asp, &g2);
        for i in 0..n {
            let same = a[i * D..(i + 1) * D] == b[i * D..(i + 1) * D];
            if i != h && i != d {
                assert!(same);
            } else if !same {
                changed_rows += 1;
            }
        }
    }
    assert!(
        changed_rows > 100,
        "relation labels barely matter: {changed_rows}"
    );
}
