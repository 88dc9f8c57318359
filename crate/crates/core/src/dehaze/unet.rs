//! Two-level encoder-decoder with skip connections.
//!
//! Parameter names: `enc1`, `enc2`, `mid`, `dec2`, `dec1` blocks, each with
//! `.conv_a`/`.conv_b` (weight only) and `.bn_a`/`.bn_b` (gamma, beta and
//! running statistics), plus `out.weight`/`out.bias`.

use super::{Dehazer, ModelKind, TrainStep};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::layer::{Conv, Norm};
use crate::tensor::margin::Kinks;
use crate::tensor::{
    activation, activation_backward, bilinear_up2, bilinear_up2_backward, concat, maxpool2, maxpool2_backward,
    mse_loss, split_channels, Activation, BatchNormCache, BatchNormMode, BatchNormStats, Tensor, TensorMap,
};

/// Conv → BN → ReLU, twice.
#[derive(Clone, Debug)]
struct Block {
    conv_a: Conv,
    bn_a: Norm,
    conv_b: Conv,
    bn_b: Norm,
}

struct BlockCache {
    x: Tensor,
    bn_a: BatchNormCache,
    pre_a: Tensor,
    h: Tensor,
    bn_b: BatchNormCache,
    pre_b: Tensor,
    stats: [BatchNormStats; 2],
}

impl Block {
    fn new(name: &str, c_in: usize, c_out: usize) -> Self {
        Self {
            conv_a: Conv::same(format!("{name}.conv_a"), c_in, c_out, 3).without_bias(),
            bn_a: Norm::new(format!("{name}.bn_a"), c_out),
            conv_b: Conv::same(format!("{name}.conv_b"), c_out, c_out, 3).without_bias(),
            bn_b: Norm::new(format!("{name}.bn_b"), c_out),
        }
    }

    fn init(&self, p: &mut TensorMap, rng: &mut Rng) {
        self.conv_a.init(p, rng);
        self.bn_a.init(p);
        self.conv_b.init(p, rng);
        self.bn_b.init(p);
    }

    fn param_count(&self) -> usize {
        self.conv_a.param_count() + self.bn_a.param_count() + self.conv_b.param_count() + self.bn_b.param_count()
    }

    fn forward(&self, p: &TensorMap, x: &Tensor, mode: BatchNormMode) -> Result<(Tensor, BlockCache)> {
        let (pre_a, sa, bn_a) = self.bn_a.forward(p, &self.conv_a.forward(p, x)?, mode)?;
        let h = activation(&pre_a, Activation::Relu);
        let (pre_b, sb, bn_b) = self.bn_b.forward(p, &self.conv_b.forward(p, &h)?, mode)?;
        let y = activation(&pre_b, Activation::Relu);
        Ok((y, BlockCache { x: x.clone(), bn_a, pre_a, h, bn_b, pre_b, stats: [sa, sb] }))
    }

    fn backward(&self, p: &TensorMap, c: &BlockCache, dy: &Tensor, g: &mut TensorMap) -> Result<Tensor> {
        let d = activation_backward(&c.pre_b, &c.pre_b, dy, Activation::Relu)?;
        let d = self.bn_b.backward(p, &c.bn_b, &d, g)?;
        let d = self.conv_b.backward(p, &c.h, &d, g)?;
        let d = activation_backward(&c.pre_a, &c.pre_a, &d, Activation::Relu)?;
        let d = self.bn_a.backward(p, &c.bn_a, &d, g)?;
        self.conv_a.backward(p, &c.x, &d, g)
    }

    fn store_stats(&self, state: &mut TensorMap, c: BlockCache) {
        let [sa, sb] = c.stats;
        self.bn_a.store_stats(state, sa);
        self.bn_b.store_stats(state, sb);
    }
}

#[derive(Clone, Debug)]
pub struct UNet {
    enc1: Block,
    enc2: Block,
    mid: Block,
    dec2: Block,
    dec1: Block,
    out: Conv,
    /// `[full-resolution skip, half-resolution skip]`; a disabled skip feeds
    /// zeros to the decoder instead of encoder features.
    pub skips: [bool; 2],
}

impl Default for UNet {
    fn default() -> Self {
        Self::new()
    }
}

struct Caches {
    blocks: [BlockCache; 5],
    s1: Tensor,
    s2: Tensor,
    b: Tensor,
    d2: Tensor,
    d1: Tensor,
}

impl UNet {
    pub fn new() -> Self {
        Self {
            enc1: Block::new("enc1", 3, 8),
            enc2: Block::new("enc2", 8, 16),
            mid: Block::new("mid", 16, 32),
            dec2: Block::new("dec2", 32 + 16, 16),
            dec1: Block::new("dec1", 16 + 8, 8),
            out: Conv::same("out", 8, 3, 1),
            skips: [true, true],
        }
    }

    pub fn with_skips(mut self, skips: [bool; 2]) -> Self {
        self.skips = skips;
        self
    }

    fn blocks(&self) -> [&Block; 5] {
        [&self.enc1, &self.enc2, &self.mid, &self.dec2, &self.dec1]
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.param_count()).sum::<usize>() + self.out.param_count()
    }

    pub fn init_params(&self, rng: &mut Rng) -> TensorMap {
        let mut p = TensorMap::new();
        for b in self.blocks() {
            b.init(&mut p, rng);
        }
        self.out.init(&mut p, rng);
        p
    }

    fn check(image: &Tensor) -> Result<()> {
        let (_, h, w) = image.dims3()?;
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::InvalidShape {
                op: "unet",
                shape: image.shape().to_vec(),
                reason: "height and width must be divisible by 4".into(),
            });
        }
        Ok(())
    }

    fn skip(&self, i: usize, t: &Tensor) -> Tensor {
        if self.skips[i] {
            t.clone()
        } else {
            Tensor::zeros(t.shape())
        }
    }

    fn run(&self, p: &TensorMap, image: &Tensor, mode: BatchNormMode) -> Result<(Tensor, Caches)> {
        Self::check(image)?;
        let (s1, c1) = self.enc1.forward(p, image, mode)?;
        let (s2, c2) = self.enc2.forward(p, &maxpool2(&s1)?, mode)?;
        let (b, c3) = self.mid.forward(p, &maxpool2(&s2)?, mode)?;
        let (d2, c4) = self.dec2.forward(p, &concat(&[&bilinear_up2(&b)?, &self.skip(1, &s2)])?, mode)?;
        let (d1, c5) = self.dec1.forward(p, &concat(&[&bilinear_up2(&d2)?, &self.skip(0, &s1)])?, mode)?;
        let j = self.out.forward(p, &d1)?;
        Ok((j, Caches { blocks: [c1, c2, c3, c4, c5], s1, s2, b, d2, d1 }))
    }

    /// Unclamped prediction using running batchnorm statistics.
    pub fn forward(&self, params: &TensorMap, image: &Tensor) -> Result<Tensor> {
        Ok(self.run(params, image, BatchNormMode::Eval)?.0)
    }
}

impl Dehazer for UNet {
    fn kind(&self) -> ModelKind {
        ModelKind::Unet
    }

    fn init(&self, rng: &mut Rng) -> TensorMap {
        self.init_params(rng)
    }

    fn param_count(&self) -> usize {
        UNet::param_count(self)
    }

    fn restore(&self, params: &TensorMap, image: &Tensor, _mask: Option<&Tensor>) -> Result<Tensor> {
        self.forward(params, image)
    }

    fn kinks(&self, params: &TensorMap, image: &Tensor, _mask: Option<&Tensor>) -> Result<Kinks> {
        let (_, c) = self.run(params, image, BatchNormMode::Train)?;
        let mut k = Kinks::new();
        for b in &c.blocks {
            k.relu(&b.pre_a).relu(&b.pre_b);
        }
        k.maxpool2(&c.s1).maxpool2(&c.s2);
        Ok(k)
    }

    fn train_step(&self, p: &TensorMap, image: &Tensor, _mask: Option<&Tensor>, target: &Tensor) -> Result<TrainStep> {
        let (j, c) = self.run(p, image, BatchNormMode::Train)?;
        let loss = mse_loss(&j, target)?;
        let mut g = TensorMap::new();
        let [c1, c2, c3, c4, c5] = c.blocks;

        let d = self.out.backward(p, &c.d1, &loss.grad, &mut g)?;
        let d = self.dec1.backward(p, &c5, &d, &mut g)?;
        let parts = split_channels(&d, &[16, 8])?;
        let mut ds1 = if self.skips[0] { parts[1].clone() } else { Tensor::zeros(c.s1.shape()) };
        let d = bilinear_up2_backward(c.d2.shape(), &parts[0])?;

        let d = self.dec2.backward(p, &c4, &d, &mut g)?;
        let parts = split_channels(&d, &[32, 16])?;
        let mut ds2 = if self.skips[1] { parts[1].clone() } else { Tensor::zeros(c.s2.shape()) };
        let d = bilinear_up2_backward(c.b.shape(), &parts[0])?;

        let d = self.mid.backward(p, &c3, &d, &mut g)?;
        ds2.add_assign(&maxpool2_backward(&c.s2, &d)?)?;
        let d = self.enc2.backward(p, &c2, &ds2, &mut g)?;
        ds1.add_assign(&maxpool2_backward(&c.s1, &d)?)?;
        let dx = self.enc1.backward(p, &c1, &ds1, &mut g)?;

        let mut state = TensorMap::new();
        for (b, cache) in self.blocks().into_iter().zip([c1, c2, c3, c4, c5]) {
            b.store_stats(&mut state, cache);
        }
        Ok(TrainStep { loss: loss.value, output: j, grads: g, input_grad: dx, state })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_shape_matches_input() {
        let net = UNet::new();
        let mut rng = Rng::new(1);
        let p = net.init_params(&mut rng);
        let x = Tensor::uniform(&[3, 12, 8], 0.0, 1.0, &mut rng);
        assert_eq!(net.forward(&p, &x).unwrap().shape(), &[3, 12, 8]);
    }

    #[test]
    fn rejects_indivisible_size() {
        let net = UNet::new();
        let p = net.init_params(&mut Rng::new(1));
        assert!(net.forward(&p, &Tensor::zeros(&[3, 10, 8])).is_err());
    }

    #[test]
    fn zeroing_a_skip_changes_output() {
        let mut rng = Rng::new(2);
        let net = UNet::new();
        let p = net.init_params(&mut rng);
        let x = Tensor::uniform(&[3, 8, 8], 0.0, 1.0, &mut rng);
        let full = net.forward(&p, &x).unwrap();
        for skips in [[false, true], [true, false]] {
            let cut = net.clone().with_skips(skips).forward(&p, &x).unwrap();
            assert_ne!(full, cut);
        }
    }

    #[test]
    fn train_step_updates_running_stats() {
        let mut rng = Rng::new(3);
        let net = UNet::new();
        let p = net.init_params(&mut rng);
        let x = Tensor::uniform(&[3, 8, 8], 0.0, 1.0, &mut rng);
        let step = net.train_step(&p, &x, None, &x).unwrap();
        assert_eq!(step.state.len(), 20);
        assert_ne!(step.state.get("enc1.bn_a.running_mean"), p.get("enc1.bn_a.running_mean"));
        assert!(!step.grads.contains("enc1.bn_a.running_mean"));
    }
}
