//! AOD-Net and its RoI-attention variant AOD-NetX.
//!
//! Parameter names: `conv1`..`conv5` for the trunk, `attention` for the
//! AOD-NetX refinement conv, each with `.weight` and `.bias`.

use super::{Dehazer, ModelKind, TrainStep};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::layer::Conv;
use crate::tensor::margin::Kinks;
use crate::tensor::{
    activation, activation_backward, concat, mse_loss, sigmoid, split_channels, Activation, Tensor, TensorMap,
};

/// `J = K·I − K + 1`, the reformulated scattering model with `b = 1`.
pub fn recover(k: &Tensor, image: &Tensor) -> Result<Tensor> {
    k.zip_map(image, |k, i| k * i - k + 1.0)
}

/// Trunk outputs plus the cached activations needed for backward.
#[derive(Clone, Debug)]
pub struct AodOutput {
    pub k: Tensor,
    /// Unclamped recovery.
    pub j: Tensor,
}

#[derive(Clone, Debug)]
struct TrunkCache {
    x1: Tensor,
    z: [Tensor; 5],
    cat3: Tensor,
    cat4: Tensor,
    cat5: Tensor,
}

#[derive(Clone, Debug)]
pub struct AodNet {
    convs: [Conv; 5],
}

impl Default for AodNet {
    fn default() -> Self {
        Self::new()
    }
}

impl AodNet {
    pub fn new() -> Self {
        Self {
            convs: [
                Conv::same("conv1", 3, 3, 1),
                Conv::same("conv2", 3, 3, 3),
                Conv::same("conv3", 6, 3, 5),
                Conv::same("conv4", 6, 3, 7),
                Conv::same("conv5", 12, 3, 3),
            ],
        }
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(Conv::param_count).sum()
    }

    /// He-uniform trunk with `conv5` scaled down and biased to 1, so `K`
    /// starts near 1 and the initial output is close to the input.
    pub fn init_params(&self, rng: &mut Rng) -> TensorMap {
        let mut p = TensorMap::new();
        for c in &self.convs {
            c.init(&mut p, rng);
        }
        let last = &self.convs[4];
        p.get_mut(&last.weight_name()).unwrap().scale(0.1);
        p.insert(last.bias_name(), Tensor::full(&[3], 1.0));
        p
    }

    /// Weights for which `K ≡ 1` exactly, making the model an identity stub.
    pub fn identity_params(&self) -> TensorMap {
        let mut p = TensorMap::new();
        for c in &self.convs {
            p.insert(c.weight_name(), Tensor::zeros(&[c.out_channels, c.in_channels, c.kernel, c.kernel]));
            p.insert(c.bias_name(), Tensor::zeros(&[c.out_channels]));
        }
        p.insert(self.convs[4].bias_name(), Tensor::full(&[3], 1.0));
        p
    }

    fn trunk(&self, params: &TensorMap, image: &Tensor) -> Result<(Tensor, TrunkCache)> {
        let relu = |z: &Tensor| activation(z, Activation::Relu);
        let [c1, c2, c3, c4, c5] = &self.convs;
        let z1 = c1.forward(params, image)?;
        let x1 = relu(&z1);
        let z2 = c2.forward(params, &x1)?;
        let x2 = relu(&z2);
        let cat3 = concat(&[&x1, &x2])?;
        let z3 = c3.forward(params, &cat3)?;
        let x3 = relu(&z3);
        let cat4 = concat(&[&x2, &x3])?;
        let z4 = c4.forward(params, &cat4)?;
        let x4 = relu(&z4);
        let cat5 = concat(&[&x1, &x2, &x3, &x4])?;
        let z5 = c5.forward(params, &cat5)?;
        let k = relu(&z5);
        Ok((k, TrunkCache { x1, z: [z1, z2, z3, z4, z5], cat3, cat4, cat5 }))
    }

    fn trunk_backward(
        &self,
        params: &TensorMap,
        image: &Tensor,
        cache: &TrunkCache,
        dk: &Tensor,
        grads: &mut TensorMap,
    ) -> Result<Tensor> {
        let [c1, c2, c3, c4, c5] = &self.convs;
        let relu_back = |z: &Tensor, g: &Tensor| activation_backward(z, z, g, Activation::Relu);

        let d = c5.backward(params, &cache.cat5, &relu_back(&cache.z[4], dk)?, grads)?;
        let mut parts = split_channels(&d, &[3, 3, 3, 3])?.into_iter();
        let (mut dx1, mut dx2, mut dx3, dx4) =
            (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());

        let d = c4.backward(params, &cache.cat4, &relu_back(&cache.z[3], &dx4)?, grads)?;
        let p = split_channels(&d, &[3, 3])?;
        dx2.add_assign(&p[0])?;
        dx3.add_assign(&p[1])?;

        let d = c3.backward(params, &cache.cat3, &relu_back(&cache.z[2], &dx3)?, grads)?;
        let p = split_channels(&d, &[3, 3])?;
        dx1.add_assign(&p[0])?;
        dx2.add_assign(&p[1])?;

        dx1.add_assign(&c2.backward(params, &cache.x1, &relu_back(&cache.z[1], &dx2)?, grads)?)?;
        c1.backward(params, image, &relu_back(&cache.z[0], &dx1)?, grads)
    }

    fn trunk_kinks(&self, params: &TensorMap, image: &Tensor) -> Result<Kinks> {
        let (_, cache) = self.trunk(params, image)?;
        let mut k = Kinks::new();
        cache.z.iter().for_each(|z| _ = k.relu(z));
        Ok(k)
    }

    pub fn forward(&self, params: &TensorMap, image: &Tensor) -> Result<AodOutput> {
        let (k, _) = self.trunk(params, image)?;
        let j = recover(&k, image)?;
        Ok(AodOutput { k, j })
    }
}

/// Gradient of `J = K·I − K + 1`: returns `(dK, dI)`.
fn recover_backward(k: &Tensor, image: &Tensor, dj: &Tensor) -> Result<(Tensor, Tensor)> {
    let dk = dj.zip_map(image, |g, i| g * (i - 1.0))?;
    let di = dj.zip_map(k, |g, k| g * k)?;
    Ok((dk, di))
}

impl Dehazer for AodNet {
    fn kind(&self) -> ModelKind {
        ModelKind::AodNet
    }

    fn init(&self, rng: &mut Rng) -> TensorMap {
        self.init_params(rng)
    }

    fn param_count(&self) -> usize {
        AodNet::param_count(self)
    }

    fn restore(&self, params: &TensorMap, image: &Tensor, _mask: Option<&Tensor>) -> Result<Tensor> {
        Ok(self.forward(params, image)?.j)
    }

    fn kinks(&self, params: &TensorMap, image: &Tensor, _mask: Option<&Tensor>) -> Result<Kinks> {
        self.trunk_kinks(params, image)
    }

    fn train_step(
        &self,
        params: &TensorMap,
        image: &Tensor,
        _mask: Option<&Tensor>,
        target: &Tensor,
    ) -> Result<TrainStep> {
        let (k, cache) = self.trunk(params, image)?;
        let j = recover(&k, image)?;
        let loss = mse_loss(&j, target)?;
        let (dk, mut di) = recover_backward(&k, image, &loss.grad)?;
        let mut grads = TensorMap::new();
        di.add_assign(&self.trunk_backward(params, image, &cache, &dk, &mut grads)?)?;
        Ok(TrainStep { loss: loss.value, output: j, grads, input_grad: di, state: TensorMap::new() })
    }
}

/// AOD-Net outputs refined by a sigmoid attention map inside the RoI mask.
#[derive(Clone, Debug)]
pub struct AodNetXOutput {
    pub k: Tensor,
    pub alpha: Tensor,
    /// `K' = K·(1 + M·α)`.
    pub k_refined: Tensor,
    /// Unclamped `J' = K'·I − K' + 1`.
    pub j: Tensor,
}

#[derive(Clone, Debug)]
pub struct AodNetX {
    trunk: AodNet,
    attention: Conv,
}

impl Default for AodNetX {
    fn default() -> Self {
        Self::new()
    }
}

impl AodNetX {
    pub fn new() -> Self {
        Self { trunk: AodNet::new(), attention: Conv::same("attention", 4, 1, 3) }
    }

    pub fn trunk(&self) -> &AodNet {
        &self.trunk
    }

    pub fn param_count(&self) -> usize {
        self.trunk.param_count() + self.attention.param_count()
    }

    pub fn init_params(&self, rng: &mut Rng) -> TensorMap {
        let mut p = self.trunk.init_params(rng);
        self.attention.init(&mut p, rng);
        p
    }

    /// Trunk weights taken from an AOD-Net archive plus a fresh attention conv.
    pub fn params_from_trunk(&self, trunk: &TensorMap, rng: &mut Rng) -> TensorMap {
        let mut p = trunk.clone();
        self.attention.init(&mut p, rng);
        p
    }

    fn refine(&self, params: &TensorMap, k: &Tensor, mask: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let cat = concat(&[k, mask])?;
        let z = self.attention.forward(params, &cat)?;
        let alpha = z.map(sigmoid);
        let (c, h, w) = k.dims3()?;
        let plane = h * w;
        let (m, a) = (mask.data(), alpha.data());
        let refined = Tensor::from_fn(&[c, h, w], |i| {
            let p = i % plane;
            k.data()[i] * (1.0 + m[p] * a[p])
        });
        Ok((cat, alpha, refined))
    }

    pub fn forward(&self, params: &TensorMap, image: &Tensor, mask: &Tensor) -> Result<AodNetXOutput> {
        let (k, _) = self.trunk.trunk(params, image)?;
        let (_, alpha, k_refined) = self.refine(params, &k, mask)?;
        let j = recover(&k_refined, image)?;
        Ok(AodNetXOutput { k, alpha, k_refined, j })
    }
}

impl Dehazer for AodNetX {
    fn kind(&self) -> ModelKind {
        ModelKind::AodNetX
    }

    fn init(&self, rng: &mut Rng) -> TensorMap {
        self.init_params(rng)
    }

    fn param_count(&self) -> usize {
        AodNetX::param_count(self)
    }

    fn restore(&self, params: &TensorMap, image: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let zero;
        let mask = match mask {
            Some(m) => m,
            None => {
                let (_, h, w) = image.dims3()?;
                zero = Tensor::zeros(&[1, h, w]);
                &zero
            }
        };
        Ok(self.forward(params, image, mask)?.j)
    }

    fn kinks(&self, params: &TensorMap, image: &Tensor, _mask: Option<&Tensor>) -> Result<Kinks> {
        self.trunk.trunk_kinks(params, image)
    }

    fn train_step(
        &self,
        params: &TensorMap,
        image: &Tensor,
        mask: Option<&Tensor>,
        target: &Tensor,
    ) -> Result<TrainStep> {
        let (_, h, w) = image.dims3()?;
        let zero = Tensor::zeros(&[1, h, w]);
        let mask = mask.unwrap_or(&zero);
        let (k, cache) = self.trunk.trunk(params, image)?;
        let (cat, alpha, k_refined) = self.refine(params, &k, mask)?;
        let j = recover(&k_refined, image)?;
        let loss = mse_loss(&j, target)?;
        let (dkr, mut di) = recover_backward(&k_refined, image, &loss.grad)?;

        let plane = h * w;
        let (m, a) = (mask.data(), alpha.data());
        let mut dk = Tensor::from_fn(k.shape(), |i| dkr.data()[i] * (1.0 + m[i % plane] * a[i % plane]));
        let mut dz = Tensor::zeros(&[1, h, w]);
        for p in 0..plane {
            let da: f64 = (0..3).map(|c| dkr.data()[c * plane + p] * k.data()[c * plane + p]).sum::<f64>() * m[p];
            dz.data_mut()[p] = da * a[p] * (1.0 - a[p]);
        }
        let mut grads = TensorMap::new();
        let dcat = self.attention.backward(params, &cat, &dz, &mut grads)?;
        dk.add_assign(&split_channels(&dcat, &[3, 1])?[0])?;
        di.add_assign(&self.trunk.trunk_backward(params, image, &cache, &dk, &mut grads)?)?;
        Ok(TrainStep { loss: loss.value, output: j, grads, input_grad: di, state: TensorMap::new() })
    }
}
