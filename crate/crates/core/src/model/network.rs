use rabsa_autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::graph::SyntaxGraph;
use super::Result;

/// Segment ids of the encoder input.
pub const SENTENCE_SEGMENT: usize = 0;
pub const ASPECT_SEGMENT: usize = 1;

/// One instance ready for the network: `[CLS] x_1..x_n [SEP] a_1..a_m [SEP]`
/// as vocabulary ids, plus its syntax graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub ids: Vec<usize>,
    pub segments: Vec<usize>,
    /// Sentence length.
    pub n: usize,
    /// Aspect length.
    pub m: usize,
    pub graph: SyntaxGraph,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Sequence positions of the appended aspect tokens.
    pub fn aspect_positions(&self) -> std::ops::Range<usize> {
        self.n + 2..self.n + 2 + self.m
    }
}

#[derive(Clone, Debug)]
pub struct EncoderLayerParams {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ln1_g: ParamId,
    pub ln1_b: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub ln2_g: ParamId,
    pub ln2_b: ParamId,
}

#[derive(Clone, Debug)]
pub struct GcnLayerParams {
    pub wa: ParamId,
    pub ba: ParamId,
    pub wb: ParamId,
}

/// Parameter handles of one classifier; several can live in one store under
/// different name prefixes.
#[derive(Clone, Debug)]
pub struct Network {
    pub prefix: String,
    pub word_emb: ParamId,
    pub pos_emb: ParamId,
    pub seg_emb: ParamId,
    pub layers: Vec<EncoderLayerParams>,
    pub label_emb: ParamId,
    pub gcn: Vec<GcnLayerParams>,
    pub wc: ParamId,
    pub bc: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
}

/// Tape variables produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub logits: Var,
    /// `[1, n]` aggregation weights over sentence tokens.
    pub beta: Var,
    pub r_f: Var,
    pub r_a: Var,
    pub r_cls: Var,
    pub r_s: Var,
    pub r_adv: Var,
    pub r_asp: Var,
    /// Encoder attention weights, per layer and head.
    pub attention: Vec<Var>,
    /// Syntax-fusion weights `α`, per layer.
    pub alpha: Vec<Var>,
}

/// Shapes and initializers.
enum Init {
    Xavier,
    Embedding,
    Zeros,
    Ones,
}

struct Registrar<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
    prefix: &'a str,
}

impl Registrar<'_> {
    fn add(&mut self, name: &str, rows: usize, cols: usize, init: Init) -> Result<ParamId> {
        let n = rows * cols;
        let data: Vec<f64> = match init {
            Init::Xavier => {
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                (0..n).map(|_| self.rng.gen_range(-limit..limit)).collect()
            }
            Init::Embedding => (0..n).map(|_| self.rng.gen_range(-0.1..0.1)).collect(),
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
        };
        let t = Tensor::matrix(rows, cols, data)?;
        Ok(self.store.add(format!("{}{name}", self.prefix), t)?)
    }
}

impl Network {
    /// Create and initialize all parameters under `prefix`.
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        cfg: &ModelConfig,
        vocab_size: usize,
        label_table: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut r = Registrar { store, rng, prefix };
        let d = cfg.d_model;
        let word_emb = r.add("enc.word_emb", vocab_size, d, Init::Embedding)?;
        let pos_emb = r.add("enc.pos_emb", cfg.max_len, d, Init::Embedding)?;
        let seg_emb = r.add("enc.seg_emb", 2, d, Init::Embedding)?;
        let mut layers = Vec::new();
        for l in 0..cfg.n_layers {
            let p = |s: &str| format!("enc.l{l}.{s}");
            layers.push(EncoderLayerParams {
                wq: r.add(&p("wq"), d, d, Init::Xavier)?,
                bq: r.add(&p("bq"), 1, d, Init::Zeros)?,
                wk: r.add(&p("wk"), d, d, Init::Xavier)?,
                bk: r.add(&p("bk"), 1, d, Init::Zeros)?,
                wv: r.add(&p("wv"), d, d, Init::Xavier)?,
                bv: r.add(&p("bv"), 1, d, Init::Zeros)?,
                wo: r.add(&p("wo"), d, d, Init::Xavier)?,
                bo: r.add(&p("bo"), 1, d, Init::Zeros)?,
                ln1_g: r.add(&p("ln1_g"), 1, d, Init::Ones)?,
                ln1_b: r.add(&p("ln1_b"), 1, d, Init::Zeros)?,
                w1: r.add(&p("w1"), d, cfg.d_ff, Init::Xavier)?,
                b1: r.add(&p("b1"), 1, cfg.d_ff, Init::Zeros)?,
                w2: r.add(&p("w2"), cfg.d_ff, d, Init::Xavier)?,
                b2: r.add(&p("b2"), 1, d, Init::Zeros)?,
                ln2_g: r.add(&p("ln2_g"), 1, d, Init::Ones)?,
                ln2_b: r.add(&p("ln2_b"), 1, d, Init::Zeros)?,
            });
        }
        let label_emb = r.add("gcn.label_emb", label_table, cfg.d_label, Init::Embedding)?;
        let mut gcn = Vec::new();
        for l in 0..cfg.n_gcn_layers {
            let d_in = if l == 0 { d } else { cfg.d_gcn };
            let width = d_in + cfg.d_label + d;
            gcn.push(GcnLayerParams {
                wa: r.add(&format!("gcn.l{l}.wa"), width, cfg.d_gcn, Init::Xavier)?,
                ba: r.add(&format!("gcn.l{l}.ba"), 1, cfg.d_gcn, Init::Zeros)?,
                wb: r.add(&format!("gcn.l{l}.wb"), width, 1, Init::Xavier)?,
            });
        }
        let ds = cfg.d_syntax();
        let wc = r.add("agg.wc", ds + d, 1, Init::Xavier)?;
        let bc = r.add("agg.bc", 1, 1, Init::Zeros)?;
        let w_out = r.add("cls.w", cfg.d_feature(), 3, Init::Xavier)?;
        let b_out = r.add("cls.b", 1, 3, Init::Zeros)?;
        Ok(Self {
            prefix: prefix.to_string(),
            word_emb,
            pos_emb,
            seg_emb,
            layers,
            label_emb,
            gcn,
            wc,
            bc,
            w_out,
            b_out,
        })
    }

    /// Look parameters up by name in an existing store.
    pub fn from_store(store: &ParamStore, prefix: &str, cfg: &ModelConfig) -> Result<Self> {
        let id = |name: String| store.id(&format!("{prefix}{name}"));
        let mut layers = Vec::new();
        for l in 0..cfg.n_layers {
            let p = |s: &str| format!("enc.l{l}.{s}");
            layers.push(EncoderLayerParams {
                wq: id(p("wq"))?,
                bq: id(p("bq"))?,
                wk: id(p("wk"))?,
                bk: id(p("bk"))?,
                wv: id(p("wv"))?,
                bv: id(p("bv"))?,
                wo: id(p("wo"))?,
                bo: id(p("bo"))?,
                ln1_g: id(p("ln1_g"))?,
                ln1_b: id(p("ln1_b"))?,
                w1: id(p("w1"))?,
                b1: id(p("b1"))?,
                w2: id(p("w2"))?,
                b2: id(p("b2"))?,
                ln2_g: id(p("ln2_g"))?,
                ln2_b: id(p("ln2_b"))?,
            });
        }
        let mut gcn = Vec::new();
        for l in 0..cfg.n_gcn_layers {
            gcn.push(GcnLayerParams {
                wa: id(format!("gcn.l{l}.wa"))?,
                ba: id(format!("gcn.l{l}.ba"))?,
                wb: id(format!("gcn.l{l}.wb"))?,
            });
        }
        Ok(Self {
            prefix: prefix.to_string(),
            word_emb: id("enc.word_emb".into())?,
            pos_emb: id("enc.pos_emb".into())?,
            seg_emb: id("enc.seg_emb".into())?,
            layers,
            label_emb: id("gcn.label_emb".into())?,
            gcn,
            wc: id("agg.wc".into())?,
            bc: id("agg.bc".into())?,
            w_out: id("cls.w".into())?,
            b_out: id("cls.b".into())?,
        })
    }

    /// Every parameter id of this network.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut v = vec![self.word_emb, self.pos_emb, self.seg_emb];
        for l in &self.layers {
            v.extend([
                l.wq, l.bq, l.wk, l.bk, l.wv, l.bv, l.wo, l.bo, l.ln1_g, l.ln1_b, l.w1, l.b1, l.w2,
                l.b2, l.ln2_g, l.ln2_b,
            ]);
        }
        v.push(self.label_emb);
        for g in &self.gcn {
            v.extend([g.wa, g.ba, g.wb]);
        }
        v.extend([self.wc, self.bc, self.w_out, self.b_out]);
        v
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        cfg: &ModelConfig,
        input: &Encoded,
        train: bool,
    ) -> Result<ForwardVars> {
        let mut attention = Vec::new();
        let (h_cls, hx, r_asp) =
            self.encode_base(tape, store, cfg, input, train, &mut attention)?;
        let mut r = hx;
        let mut alpha = Vec::new();
        if !self.gcn.is_empty() {
            let table = tape.param(store, self.label_emb)?;
            let lab = tape.gather_rows(table, &input.graph.labels)?;
            let lab = tape.dropout(lab, cfg.feature_dropout, train)?;
            for g in &self.gcn {
                let w = GcnLayerVars {
                    wa: tape.param(store, g.wa)?,
                    ba: tape.param(store, g.ba)?,
                    wb: tape.param(store, g.wb)?,
                };
                let out = usgcn_layer(tape, r, lab, r_asp, &input.graph.adjacency, &w)?;
                r = out.r;
                alpha.push(out.alpha);
            }
        }
        let r_s = tape.mean_rows(r)?;
        let head = HeadVars {
            wc: tape.param(store, self.wc)?,
            bc: tape.param(store, self.bc)?,
            w_out: tape.param(store, self.w_out)?,
            b_out: tape.param(store, self.b_out)?,
        };
        let agg = aggregate(tape, r, r_asp, h_cls, &head)?;
        let logits = classify(tape, agg.r_f, &head)?;
        let r_adv = tape.concat_cols(&[h_cls, agg.r_a, r_s])?;
        Ok(ForwardVars {
            logits,
            beta: agg.beta,
            r_f: agg.r_f,
            r_a: agg.r_a,
            r_cls: h_cls,
            r_s,
            r_adv,
            r_asp,
            attention,
            alpha,
        })
    }

    /// Transformer over the joint input; returns `(h_cls, H_X, r_asp)`.
    fn encode_base(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        cfg: &ModelConfig,
        input: &Encoded,
        train: bool,
        attention: &mut Vec<Var>,
    ) -> Result<(Var, Var, Var)> {
        let len = input.len();
        let word = tape.param(store, self.word_emb)?;
        let pos = tape.param(store, self.pos_emb)?;
        let seg = tape.param(store, self.seg_emb)?;
        let w = tape.gather_rows(word, &input.ids)?;
        let w = tape.dropout(w, cfg.word_dropout, train)?;
        let positions: Vec<usize> = (0..len).collect();
        let p = tape.gather_rows(pos, &positions)?;
        let p = tape.dropout(p, cfg.feature_dropout, train)?;
        let s = tape.gather_rows(seg, &input.segments)?;
        let s = tape.dropout(s, cfg.feature_dropout, train)?;
        let x = tape.add(w, p)?;
        let mut x = tape.add(x, s)?;
        let dk = cfg.d_model / cfg.n_heads;
        let inv = 1.0 / (dk as f64).sqrt();
        for l in &self.layers {
            let v = |tape: &mut Tape, id| tape.param(store, id);
            let (wq, bq, wk, bk) = (
                v(tape, l.wq)?,
                v(tape, l.bq)?,
                v(tape, l.wk)?,
                v(tape, l.bk)?,
            );
            let (wv, bv, wo, bo) = (
                v(tape, l.wv)?,
                v(tape, l.bv)?,
                v(tape, l.wo)?,
                v(tape, l.bo)?,
            );
            let q = tape.matmul(x, wq)?;
            let q = tape.add_bias(q, bq)?;
            let k = tape.matmul(x, wk)?;
            let k = tape.add_bias(k, bk)?;
            let val = tape.matmul(x, wv)?;
            let val = tape.add_bias(val, bv)?;
            let mut heads = Vec::with_capacity(cfg.n_heads);
            for h in 0..cfg.n_heads {
                let qh = tape.slice_cols(q, h * dk, dk)?;
                let kh = tape.slice_cols(k, h * dk, dk)?;
                let vh = tape.slice_cols(val, h * dk, dk)?;
                let kt = tape.transpose(kh)?;
                let scores = tape.matmul(qh, kt)?;
                let scores = tape.scale(scores, inv)?;
                let a = tape.softmax(scores)?;
                attention.push(a);
                heads.push(tape.matmul(a, vh)?);
            }
            let cat = tape.concat_cols(&heads)?;
            let o = tape.matmul(cat, wo)?;
            let o = tape.add_bias(o, bo)?;
            let res = tape.add(x, o)?;
            let (g1, b1n) = (v(tape, l.ln1_g)?, v(tape, l.ln1_b)?);
            let x1 = tape.layer_norm(res, g1, b1n)?;
            let (w1, b1, w2, b2) = (
                v(tape, l.w1)?,
                v(tape, l.b1)?,
                v(tape, l.w2)?,
                v(tape, l.b2)?,
            );
            let f = tape.matmul(x1, w1)?;
            let f = tape.add_bias(f, b1)?;
            let f = tape.relu(f)?;
            let f = tape.matmul(f, w2)?;
            let f = tape.add_bias(f, b2)?;
            let res = tape.add(x1, f)?;
            let (g2, b2n) = (v(tape, l.ln2_g)?, v(tape, l.ln2_b)?);
            x = tape.layer_norm(res, g2, b2n)?;
        }
        let h_cls = tape.slice_rows(x, 0, 1)?;
        let hx = tape.slice_rows(x, 1, input.n)?;
        let asp = tape.slice_rows(x, input.n + 2, input.m)?;
        let r_asp = tape.mean_rows(asp)?;
        Ok((h_cls, hx, r_asp))
    }
}

/// Weights of one syntax-fusion layer, already on the tape.
#[derive(Clone, Copy, Debug)]
pub struct GcnLayerVars {
    /// `[d_in + d_label + d_asp, d_out]`
    pub wa: Var,
    /// `[1, d_out]`
    pub ba: Var,
    /// `[d_in + d_label + d_asp, 1]`
    pub wb: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct UsgcnOut {
    pub r: Var,
    pub alpha: Var,
}

/// One syntax-fusion layer. For every pair `(i, j)` the feature
/// `z_ij = [r_j; e_ij; r_asp]` is scored by `W_b` and turned into a message
/// by `W_a`; `α_i` is the softmax of the scores over the neighbours of `i`
/// and `r_i = ReLU(Σ_j α_ij (W_a z_ij + b))`.
///
/// `labels` holds the `n·n` relation embeddings row-major, `adjacency` the
/// matching `n·n` mask.
pub fn usgcn_layer(
    tape: &mut Tape,
    r_prev: Var,
    labels: Var,
    r_asp: Var,
    adjacency: &[bool],
    w: &GcnLayerVars,
) -> Result<UsgcnOut> {
    let n = tape.value(r_prev).rows();
    let js: Vec<usize> = (0..n * n).map(|k| k % n).collect();
    let rj = tape.gather_rows(r_prev, &js)?;
    let asp = tape.gather_rows(r_asp, &vec![0; n * n])?;
    let z = tape.concat_cols(&[rj, labels, asp])?;
    let scores = tape.matmul(z, w.wb)?;
    let scores = tape.reshape(scores, n, n)?;
    let alpha = tape.masked_softmax(scores, adjacency)?;
    let msg = tape.matmul(z, w.wa)?;
    let msg = tape.add_bias(msg, w.ba)?;
    let sum = tape.row_weighted_sum(alpha, msg)?;
    let r = tape.relu(sum)?;
    Ok(UsgcnOut { r, alpha })
}

#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    /// `[d_syn + d_model, 1]`
    pub wc: Var,
    /// `[1, 1]`
    pub bc: Var,
    /// `[d_syn + d_model, 3]`
    pub w_out: Var,
    /// `[1, 3]`
    pub b_out: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct Aggregated {
    pub beta: Var,
    pub r_a: Var,
    pub r_f: Var,
}

/// Aspect-aware pooling: `v_i = tanh(W_c [r_i; r_asp] + b)`, `β = softmax(v)`,
/// `r_a = Σ β_i r_i`, `r_f = [r_a; h_cls]`.
pub fn aggregate(
    tape: &mut Tape,
    r: Var,
    r_asp: Var,
    h_cls: Var,
    head: &HeadVars,
) -> Result<Aggregated> {
    let n = tape.value(r).rows();
    let asp = tape.gather_rows(r_asp, &vec![0; n])?;
    let c = tape.concat_cols(&[r, asp])?;
    let v = tape.matmul(c, head.wc)?;
    let v = tape.add_bias(v, head.bc)?;
    let v = tape.tanh(v)?;
    let v = tape.transpose(v)?;
    let beta = tape.softmax(v)?;
    let r_a = tape.matmul(beta, r)?;
    let r_f = tape.concat_cols(&[r_a, h_cls])?;
    Ok(Aggregated { beta, r_a, r_f })
}

/// Linear head to the three polarity logits.
pub fn classify(tape: &mut Tape, r_f: Var, head: &HeadVars) -> Result<Var> {
    let logits = tape.matmul(r_f, head.w_out)?;
    Ok(tape.add_bias(logits, head.b_out)?)
}
