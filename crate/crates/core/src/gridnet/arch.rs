use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scalar::Real;
use crate::error::{invalid, Result};
use crate::grid::{INPUT_HEIGHT, INPUT_WIDTH};

/// Outputs per grid cell: `x, y, w, h` then the `(n, p)` logits.
pub const CELL_OUTPUTS: usize = 6;

/// Network layout: conv blocks (two 3x3 same-padded ReLU convolutions and a
/// 2x2 max pool each), ReLU dense layers, then a linear head of `6 * s^2`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetArch {
    pub input_width: usize,
    pub input_height: usize,
    /// Filters per conv block.
    pub conv_channels: Vec<usize>,
    /// Widths of the hidden dense layers.
    pub dense: Vec<usize>,
    /// Grid cells per side.
    pub grid: usize,
}

impl Default for NetArch {
    fn default() -> Self {
        Self::for_grid(5)
    }
}

/// One step of the forward pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        cin: usize,
        cout: usize,
        h: usize,
        w: usize,
    },
    Pool {
        c: usize,
        h: usize,
        w: usize,
    },
    Dense {
        nin: usize,
        nout: usize,
        relu: bool,
    },
}

impl LayerSpec {
    pub fn param_shapes(&self) -> Option<([usize; 2], usize)> {
        match *self {
            LayerSpec::Conv { cin, cout, .. } => Some(([cout, cin * 9], cout)),
            LayerSpec::Dense { nin, nout, .. } => Some(([nin, nout], nout)),
            LayerSpec::Pool { .. } => None,
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv { cin, .. } => cin * 9,
            LayerSpec::Dense { nin, .. } => nin,
            LayerSpec::Pool { .. } => 0,
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            LayerSpec::Conv { cout, h, w, .. } => cout * h * w,
            LayerSpec::Pool { c, h, w } => c * (h / 2) * (w / 2),
            LayerSpec::Dense { nout, .. } => nout,
        }
    }
}

impl NetArch {
    /// Default widths (16 and 32 filters, one 256-wide dense layer) on the
    /// 160x120 input.
    pub fn for_grid(s: usize) -> Self {
        Self {
            input_width: INPUT_WIDTH,
            input_height: INPUT_HEIGHT,
            conv_channels: vec![16, 32],
            dense: vec![256],
            grid: s,
        }
    }

    pub fn head_len(&self) -> usize {
        CELL_OUTPUTS * self.grid * self.grid
    }

    pub fn input_len(&self) -> usize {
        self.input_width * self.input_height
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid == 0 {
            return Err(invalid("grid must have at least one cell"));
        }
        if self.input_width == 0 || self.input_height == 0 {
            return Err(invalid("input dimensions must be positive"));
        }
        let div = 1usize << self.conv_channels.len();
        if self.input_width % div != 0 || self.input_height % div != 0 {
            return Err(invalid(format!(
                "input {}x{} not divisible by 2^{} for pooling",
                self.input_width,
                self.input_height,
                self.conv_channels.len()
            )));
        }
        if self.conv_channels.iter().chain(&self.dense).any(|&c| c == 0) {
            return Err(invalid("layer widths must be positive"));
        }
        Ok(())
    }

    /// Flattened layer sequence.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let (mut h, mut w, mut c) = (self.input_height, self.input_width, 1);
        let mut out = Vec::new();
        for &f in &self.conv_channels {
            out.push(LayerSpec::Conv { cin: c, cout: f, h, w });
            out.push(LayerSpec::Conv { cin: f, cout: f, h, w });
            out.push(LayerSpec::Pool { c: f, h, w });
            c = f;
            h /= 2;
            w /= 2;
        }
        let mut nin = c * h * w;
        for &d in &self.dense {
            out.push(LayerSpec::Dense { nin, nout: d, relu: true });
            nin = d;
        }
        out.push(LayerSpec::Dense {
            nin,
            nout: self.head_len(),
            relu: false,
        });
        out
    }

    /// Index of the first dense layer in [`layers`](Self::layers).
    pub fn first_dense(&self) -> usize {
        self.conv_channels.len() * 3
    }

    pub fn param_count(&self) -> usize {
        self.layers()
            .iter()
            .filter_map(|l| l.param_shapes())
            .map(|(w, b)| w[0] * w[1] + b)
            .sum()
    }
}

/// Weight and bias of one parametrised layer.
///
/// Conv weights are `[cout][cin * 9]` with `(cin, ky, kx)` inner order; dense
/// weights are `[nin][nout]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// All learnable tensors, one entry per conv or dense layer in order.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T = f32> {
    pub arch: NetArch,
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Real> NetworkParams<T> {
    /// Zero-filled tensors shaped for `arch`.
    pub fn zeros(arch: &NetArch) -> Result<Self> {
        arch.validate()?;
        let layers = arch
            .layers()
            .iter()
            .filter_map(|l| l.param_shapes())
            .map(|(w, b)| LayerParams {
                weight: vec![T::zero(); w[0] * w[1]],
                bias: vec![T::zero(); b],
            })
            .collect();
        Ok(Self {
            arch: arch.clone(),
            layers,
        })
    }

    /// Fan-in scaled uniform weights in `[-sqrt(6 / fan_in), sqrt(6 / fan_in)]`,
    /// zero biases. Deterministic per seed.
    pub fn init(arch: &NetArch, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fans: Vec<usize> = arch
            .layers()
            .iter()
            .filter(|l| l.param_shapes().is_some())
            .map(|l| l.fan_in())
            .collect();
        for (layer, fan) in params.layers.iter_mut().zip(fans) {
            let bound = (6.0 / fan as f64).sqrt();
            for w in &mut layer.weight {
                *w = T::from_f64(rng.random_range(-bound..bound));
            }
        }
        Ok(params)
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tensors in declaration order: weight then bias per layer.
    pub fn tensors(&self) -> impl Iterator<Item = &[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    /// Reads the `i`-th scalar in declaration order.
    pub fn get_flat(&self, mut i: usize) -> T {
        for t in self.tensors() {
            if i < t.len() {
                return t[i];
            }
            i -= t.len();
        }
        panic!("flat parameter index out of range")
    }

    pub fn set_flat(&mut self, mut i: usize, v: T) {
        for t in self.tensors_mut() {
            if i < t.len() {
                t[i] = v;
                return;
            }
            i -= t.len();
        }
        panic!("flat parameter index out of range")
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Element type conversion (used to re-evaluate in 64-bit).
    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        NetworkParams {
            arch: self.arch.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weight: l.weight.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                    bias: l.bias.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

/// Convenience: default-precision initialisation.
pub fn init(arch: &NetArch, seed: u64) -> Result<NetworkParams<f32>> {
    NetworkParams::init(arch, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layer_plan() {
        let arch = NetArch::for_grid(5);
        let layers = arch.layers();
        assert_eq!(layers.len(), 8);
        assert_eq!(layers[2], LayerSpec::Pool { c: 16, h: 120, w: 160 });
        assert_eq!(layers[5].output_len(), 32 * 30 * 40);
        assert_eq!(
            layers[6],
            LayerSpec::Dense {
                nin: 38400,
                nout: 256,
                relu: true
            }
        );
        assert_eq!(layers[7].output_len(), 150);
        assert_eq!(arch.head_len(), 6 * 25);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let arch = NetArch {
            input_width: 16,
            input_height: 12,
            conv_channels: vec![2, 2],
            dense: vec![16],
            grid: 2,
        };
        let a = init(&arch, 1).unwrap();
        let b = init(&arch, 1).unwrap();
        let c = init(&arch, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let fans: Vec<usize> = arch.layers().iter().filter(|l| l.param_shapes().is_some()).map(|l| l.fan_in()).collect();
        for (l, f) in a.layers.iter().zip(fans) {
            let bound = (6.0 / f as f64).sqrt() as f32;
            assert!(l.weight.iter().all(|w| w.abs() <= bound));
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
        assert_eq!(a.len(), arch.param_count());
    }

    #[test]
    fn rejects_bad_arch() {
        let mut arch = NetArch::for_grid(5);
        arch.input_width = 162;
        assert!(arch.validate().is_err());
        arch = NetArch::for_grid(0);
        assert!(arch.validate().is_err());
        arch = NetArch::for_grid(5);
        arch.dense = vec![0];
        assert!(init(&arch, 0).is_err());
    }
}
