use rabsa_autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Result;

pub const DISCRIMINATOR_PREFIX: &str = "disc.";

/// Three-way synthetic-type classifier over the matcher output:
/// `Linear → tanh → Linear`.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl Discriminator {
    pub fn register(
        store: &mut ParamStore,
        input: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut xavier = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| rng.gen_range(-limit..limit))
                .collect();
            Tensor::matrix(rows, cols, data)
        };
        let w1 = xavier(input, hidden)?;
        let w2 = xavier(hidden, 3)?;
        let p = DISCRIMINATOR_PREFIX;
        Ok(Self {
            w1: store.add(format!("{p}w1"), w1)?,
            b1: store.add(format!("{p}b1"), Tensor::zeros(&[1, hidden]))?,
            w2: store.add(format!("{p}w2"), w2)?,
            b2: store.add(format!("{p}b2"), Tensor::zeros(&[1, 3]))?,
        })
    }

    pub fn from_store(store: &ParamStore) -> Result<Self> {
        let p = DISCRIMINATOR_PREFIX;
        Ok(Self {
            w1: store.id(&format!("{p}w1"))?,
            b1: store.id(&format!("{p}b1"))?,
            w2: store.id(&format!("{p}w2"))?,
            b2: store.id(&format!("{p}b2"))?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, v: Var) -> Result<Var> {
        let w1 = tape.param(store, self.w1)?;
        let b1 = tape.param(store, self.b1)?;
        let w2 = tape.param(store, self.w2)?;
        let b2 = tape.param(store, self.b2)?;
        let h = tape.matmul(v, w1)?;
        let h = tape.add_bias(h, b1)?;
        let h = tape.tanh(h)?;
        let o = tape.matmul(h, w2)?;
        Ok(tape.add_bias(o, b2)?)
    }

    pub fn param_ids(&self) -> [ParamId; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}
