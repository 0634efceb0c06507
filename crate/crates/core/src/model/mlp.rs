use crate::error::Result;
use crate::nn::{Dropout, Linear, Matrix, ParamTensor, Relu, Rng};

#[derive(Clone, Debug)]
struct Block {
    dropout: Dropout,
    linear: Linear,
    relu: Option<Relu>,
}

/// Stack of `dropout → linear → relu` blocks. The last block's ReLU is optional.
#[derive(Clone, Debug)]
pub struct Mlp {
    blocks: Vec<Block>,
}

impl Mlp {
    /// `sizes` lists every width including input and output, so `[in, h, out]`
    /// builds two blocks. A single entry builds the identity.
    pub fn new(sizes: &[usize], dropout: f64, final_relu: bool, rng: &mut Rng) -> Result<Self> {
        let mut blocks = Vec::new();
        for (i, w) in sizes.windows(2).enumerate() {
            let last = i + 2 == sizes.len();
            blocks.push(Block {
                dropout: Dropout::new(dropout)?,
                linear: Linear::new(w[0], w[1], rng),
                relu: (!last || final_relu).then(Relu::default),
            });
        }
        Ok(Self { blocks })
    }

    pub fn is_identity(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn layers(&self) -> impl Iterator<Item = &Linear> {
        self.blocks.iter().map(|b| &b.linear)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Linear> {
        self.blocks.iter_mut().map(|b| &mut b.linear)
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        for b in &mut self.blocks {
            b.dropout.set_frozen(frozen);
        }
    }

    pub fn forward(&mut self, x: &Matrix, rng: &mut Rng, train: bool) -> Result<Matrix> {
        let mut h = x.clone();
        for b in &mut self.blocks {
            h = b.dropout.forward(&h, rng, train);
            h = b.linear.forward(&h)?;
            if let Some(r) = &mut b.relu {
                h = r.forward(&h);
            }
        }
        Ok(h)
    }

    /// Evaluation-mode forward without caches.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for b in &self.blocks {
            h = b.linear.apply(&h)?;
            if b.relu.is_some() {
                h = crate::nn::layers::relu(&h);
            }
        }
        Ok(h)
    }

    /// Returns the input gradient unless `input_grad` is false.
    pub fn backward(&mut self, grad_out: &Matrix, input_grad: bool) -> Result<Option<Matrix>> {
        let mut g = grad_out.clone();
        for (i, b) in self.blocks.iter_mut().enumerate().rev() {
            if let Some(r) = &mut b.relu {
                g = r.backward(&g)?;
            }
            if i == 0 && !input_grad {
                b.linear.backward_params_only(&g)?;
                return Ok(None);
            }
            g = b.linear.backward(&g)?;
            g = b.dropout.backward(&g)?;
        }
        Ok(Some(g))
    }

    pub(crate) fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(ParamTensor<'_>)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.linear.visit(&format!("{prefix}.layer{i}"), f);
        }
    }

    pub fn param_count(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.linear.weight.len() + b.linear.bias.len())
            .sum()
    }
}
