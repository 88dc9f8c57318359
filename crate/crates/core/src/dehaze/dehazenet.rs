//! Transmission-estimating network with dark-channel airlight.
//!
//! Parameter names: `features` (5×5, 3→16), `scale3`, `scale5`, `scale7`
//! (4→4 each) and `transmission` (1×1, 12→1), each with `.weight`/`.bias`.

use super::{Dehazer, ModelKind, TrainStep};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::layer::Conv;
use crate::tensor::margin::Kinks;
use crate::tensor::{
    activation, activation_backward, concat, maxout, maxout_backward, maxpool_same, maxpool_same_backward, mse_loss,
    split_channels, Activation, Tensor, TensorMap,
};

/// Lower bound on the transmission used for recovery.
pub const T_FLOOR: f64 = 0.1;
/// Fraction of pixels averaged for the airlight estimate.
pub const AIRLIGHT_FRACTION: f64 = 0.001;
const MAXOUT_GROUP: usize = 4;
const POOL: usize = 7;

fn dark_channel(image: &Tensor) -> Result<Vec<f64>> {
    let (_, h, w) = image.dims3()?;
    let plane = h * w;
    Ok((0..plane).map(|p| (0..3).map(|c| image.data()[c * plane + p]).fold(f64::INFINITY, f64::min)).collect())
}

fn airlight_count(plane: usize) -> usize {
    ((AIRLIGHT_FRACTION * plane as f64).ceil() as usize).max(1)
}

/// Per-channel airlight and the flat pixel indices it averages.
///
/// Pixels are ranked by their minimum channel value, brightest first, ties
/// by index; the top `max(1, ceil(0.001·H·W))` are averaged.
pub fn estimate_airlight(image: &Tensor) -> Result<([f64; 3], Vec<usize>)> {
    let (_, h, w) = image.dims3()?;
    let plane = h * w;
    let dark = dark_channel(image)?;
    let mut order: Vec<usize> = (0..plane).collect();
    order.sort_by(|&a, &b| dark[b].total_cmp(&dark[a]));
    let n = airlight_count(plane);
    order.truncate(n);
    let mut a = [0.0; 3];
    for (c, ac) in a.iter_mut().enumerate() {
        *ac = order.iter().map(|&p| image.data()[c * plane + p]).sum::<f64>() / n as f64;
    }
    Ok((a, order))
}

/// `J = (I − A) / max(t, t₀) + A` with `t` broadcast over channels.
pub fn recover_with_transmission(image: &Tensor, t: &Tensor, airlight: [f64; 3]) -> Result<Tensor> {
    let (c, h, w) = image.dims3()?;
    let plane = h * w;
    image.expect_same_shape(&Tensor::zeros(&[c, h, w]), "recover_with_transmission")?;
    Ok(Tensor::from_fn(&[c, h, w], |i| {
        let a = airlight[i / plane];
        (image.data()[i] - a) / t.data()[i % plane].max(T_FLOOR) + a
    }))
}

#[derive(Clone, Debug)]
pub struct DehazeNetOutput {
    pub transmission: Tensor,
    pub airlight: [f64; 3],
    /// Unclamped recovery.
    pub j: Tensor,
}

struct Cache {
    f: Tensor,
    m: Tensor,
    cat: Tensor,
    pooled: Tensor,
    z: Tensor,
}

#[derive(Clone, Debug)]
pub struct DehazeNet {
    features: Conv,
    scales: [Conv; 3],
    head: Conv,
}

impl Default for DehazeNet {
    fn default() -> Self {
        Self::new()
    }
}

impl DehazeNet {
    pub fn new() -> Self {
        Self {
            features: Conv::same("features", 3, 16, 5),
            scales: [Conv::same("scale3", 4, 4, 3), Conv::same("scale5", 4, 4, 5), Conv::same("scale7", 4, 4, 7)],
            head: Conv::same("transmission", 12, 1, 1),
        }
    }

    pub fn param_count(&self) -> usize {
        self.features.param_count() + self.scales.iter().map(Conv::param_count).sum::<usize>() + self.head.param_count()
    }

    /// He-uniform everywhere; the head is scaled down and biased to 0.5 so
    /// the initial transmission sits inside BReLU's linear range.
    pub fn init_params(&self, rng: &mut Rng) -> TensorMap {
        let mut p = TensorMap::new();
        self.features.init(&mut p, rng);
        for s in &self.scales {
            s.init(&mut p, rng);
        }
        self.head.init(&mut p, rng);
        p.get_mut(&self.head.weight_name()).unwrap().scale(0.1);
        p.insert(self.head.bias_name(), Tensor::full(&[1], 0.5));
        p
    }

    fn transmission(&self, p: &TensorMap, image: &Tensor) -> Result<(Tensor, Cache)> {
        let f = self.features.forward(p, image)?;
        let m = maxout(&f, MAXOUT_GROUP)?;
        let outs = self.scales.iter().map(|s| s.forward(p, &m)).collect::<Result<Vec<_>>>()?;
        let cat = concat(&[&outs[0], &outs[1], &outs[2]])?;
        let pooled = maxpool_same(&cat, POOL)?;
        let z = self.head.forward(p, &pooled)?;
        let t = activation(&z, Activation::Brelu);
        Ok((t, Cache { f, m, cat, pooled, z }))
    }

    pub fn forward(&self, params: &TensorMap, image: &Tensor) -> Result<DehazeNetOutput> {
        let (t, _) = self.transmission(params, image)?;
        let (airlight, _) = estimate_airlight(image)?;
        let j = recover_with_transmission(image, &t, airlight)?;
        Ok(DehazeNetOutput { transmission: t, airlight, j })
    }
}

impl Dehazer for DehazeNet {
    fn kind(&self) -> ModelKind {
        ModelKind::DehazeNet
    }

    fn init(&self, rng: &mut Rng) -> TensorMap {
        self.init_params(rng)
    }

    fn param_count(&self) -> usize {
        DehazeNet::param_count(self)
    }

    fn restore(&self, params: &TensorMap, image: &Tensor, _mask: Option<&Tensor>) -> Result<Tensor> {
        Ok(self.forward(params, image)?.j)
    }

    fn kinks(&self, params: &TensorMap, image: &Tensor, _mask: Option<&Tensor>) -> Result<Kinks> {
        let (t, c) = self.transmission(params, image)?;
        let dark = dark_channel(image)?;
        let mut k = Kinks::new();
        k.maxout(&c.f, MAXOUT_GROUP).maxpool_same(&c.cat, POOL).brelu(&c.z);
        t.data().iter().for_each(|&v| k.threshold(v, T_FLOOR));
        k.top_n(&dark, airlight_count(dark.len()));
        Ok(k)
    }

    fn train_step(&self, p: &TensorMap, image: &Tensor, _mask: Option<&Tensor>, target: &Tensor) -> Result<TrainStep> {
        let (t, c) = self.transmission(p, image)?;
        let (airlight, selected) = estimate_airlight(image)?;
        let j = recover_with_transmission(image, &t, airlight)?;
        let loss = mse_loss(&j, target)?;

        let (ch, h, w) = image.dims3()?;
        let plane = h * w;
        let dj = loss.grad.data();
        let x = image.data();
        let mut di = vec![0.0; ch * plane];
        let mut dt = Tensor::zeros(&[1, h, w]);
        let mut da = [0.0; 3];
        for p in 0..plane {
            let tv = t.data()[p];
            let d = tv.max(T_FLOOR);
            let mut dd = 0.0;
            for c in 0..ch {
                let i = c * plane + p;
                di[i] = dj[i] / d;
                da[c] += dj[i] * (1.0 - 1.0 / d);
                dd -= dj[i] * (x[i] - airlight[c]) / (d * d);
            }
            if tv > T_FLOOR {
                dt.data_mut()[p] = dd;
            }
        }
        let n = selected.len() as f64;
        for &p in &selected {
            for c in 0..ch {
                di[c * plane + p] += da[c] / n;
            }
        }

        let mut g = TensorMap::new();
        let dz = activation_backward(&c.z, &t, &dt, Activation::Brelu)?;
        let d = self.head.backward(p, &c.pooled, &dz, &mut g)?;
        let d = maxpool_same_backward(&c.cat, POOL, &d)?;
        let parts = split_channels(&d, &[4, 4, 4])?;
        let mut dm = Tensor::zeros(c.m.shape());
        for (s, part) in self.scales.iter().zip(&parts) {
            dm.add_assign(&s.backward(p, &c.m, part, &mut g)?)?;
        }
        let d = maxout_backward(&c.f, MAXOUT_GROUP, &dm)?;
        let mut dx = self.features.backward(p, image, &d, &mut g)?;
        dx.add_assign(&Tensor::new(image.shape().to_vec(), di)?)?;
        Ok(TrainStep { loss: loss.value, output: j, grads: g, input_grad: dx, state: TensorMap::new() })
    }
}
