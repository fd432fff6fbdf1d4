//! The second stage: the window as a 1 × w × F image through consecutive
//! convolution (+ max pooling) layers, then dense layers into the 3-way
//! softmax head.

use super::common::{image_batch, relu, relu_backward, standardize_rows, DenseLayer, ModelMeta};
use super::{CascadeError, ConvLayerSpec, Model2Arch};
use crate::grid::WindowSample;
use impactcast_nn::{
    conv2d, conv2d_backward, dense, dense_backward, init, maxpool, maxpool_backward, Conv2dCache,
    DenseCache, MaxPoolCache, Tensor,
};
use rand::Rng;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub spec: ConvLayerSpec,
}

#[derive(Debug, Clone)]
pub struct Model2 {
    pub arch: Model2Arch,
    pub input_h: usize,
    pub input_w: usize,
    pub n_classes: usize,
    pub conv: Vec<ConvLayer>,
    pub fc: Vec<DenseLayer>,
    pub head: DenseLayer,
    /// per-feature input standardization frozen from the training pool
    pub feat_mean: Tensor,
    pub feat_std: Tensor,
    flat_dim: usize,
}

pub struct Model2Cache {
    conv_caches: Vec<(Conv2dCache, Tensor, Option<MaxPoolCache>)>,
    flat_shape: Vec<usize>,
    fc_caches: Vec<(DenseCache, Tensor)>,
    head_cache: DenseCache,
}

#[derive(Debug, Clone)]
pub struct Model2Grads {
    pub conv: Vec<(Tensor, Tensor)>,
    pub fc: Vec<(Tensor, Tensor)>,
    pub head: (Tensor, Tensor),
}

impl Model2 {
    /// Builds the stack, checking that every conv kernel and pool window fits
    /// the running width.
    pub fn new(
        arch: Model2Arch,
        input_h: usize,
        input_w: usize,
        n_classes: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, CascadeError> {
        let mut conv = Vec::new();
        let mut ch = 1usize;
        let mut width = input_w;
        for spec in &arch.conv {
            if spec.kernel_w > width {
                return Err(CascadeError::DimMismatch {
                    sample: width,
                    model: spec.kernel_w,
                });
            }
            let fan_in = ch * spec.kernel_w;
            let limit = (6.0 / (fan_in + spec.filters) as f64).sqrt();
            conv.push(ConvLayer {
                kernel: init::uniform(&[spec.filters, ch, 1, spec.kernel_w], -limit, limit, rng),
                bias: Tensor::zeros(&[spec.filters]),
                spec: *spec,
            });
            width = width - spec.kernel_w + 1;
            if spec.pool_w > 1 {
                if !width.is_multiple_of(spec.pool_w) {
                    return Err(CascadeError::Nn(impactcast_nn::NnError::PoolWindow {
                        window: (1, spec.pool_w),
                        extent: (input_h, width),
                    }));
                }
                width /= spec.pool_w;
            }
            ch = spec.filters;
        }
        let flat_dim = ch * input_h * width;
        let mut fc = Vec::new();
        let mut cur = flat_dim;
        for &s in &arch.fc_sizes {
            fc.push(DenseLayer {
                w: init::xavier_uniform(cur, s, rng),
                b: Tensor::zeros(&[s]),
            });
            cur = s;
        }
        let head = DenseLayer {
            w: init::xavier_uniform(cur, n_classes, rng),
            b: Tensor::zeros(&[n_classes]),
        };
        Ok(Model2 {
            arch,
            input_h,
            input_w,
            n_classes,
            conv,
            fc,
            head,
            feat_mean: Tensor::zeros(&[input_w]),
            feat_std: Tensor::filled(&[input_w], 1.0),
            flat_dim,
        })
    }

    pub fn set_normalization(&mut self, mean: Tensor, std: Tensor) {
        assert_eq!(mean.len(), self.input_w);
        assert_eq!(std.len(), self.input_w);
        self.feat_mean = mean;
        self.feat_std = std;
    }

    pub fn forward(
        &self,
        samples: &[&WindowSample],
        with_cache: bool,
    ) -> Result<(Tensor, Option<Model2Cache>), CascadeError> {
        for s in samples {
            if s.sequence.len() != self.input_h * self.input_w {
                return Err(CascadeError::DimMismatch {
                    sample: s.sequence.len(),
                    model: self.input_h * self.input_w,
                });
            }
        }
        let mut cur = image_batch(samples, self.input_h, self.input_w);
        // rows of the window image are feature vectors; standardize per column
        standardize_rows(&mut cur, &self.feat_mean, &self.feat_std);
        let mut conv_caches = Vec::new();
        for layer in &self.conv {
            let (z, ccache) = conv2d(&cur, &layer.kernel, &layer.bias)?;
            let (a, rmask) = relu(&z);
            let (pooled, pcache) = if layer.spec.pool_w > 1 {
                let (p, c) = maxpool(&a, (1, layer.spec.pool_w))?;
                (p, Some(c))
            } else {
                (a, None)
            };
            if with_cache {
                conv_caches.push((ccache, rmask, pcache));
            }
            cur = pooled;
        }
        let flat_shape = cur.shape().to_vec();
        let b = flat_shape[0];
        let flat = Tensor::from_vec(&[b, self.flat_dim], cur.data().to_vec())
            .expect("conv output length matches flat dim");
        let mut cur = flat;
        let mut fc_caches = Vec::new();
        for layer in &self.fc {
            let (z, dcache) = dense(&cur, &layer.w, &layer.b);
            let (a, rmask) = relu(&z);
            if with_cache {
                fc_caches.push((dcache, rmask));
            }
            cur = a;
        }
        let (logits, head_cache) = dense(&cur, &self.head.w, &self.head.b);
        let cache = with_cache.then_some(Model2Cache {
            conv_caches,
            flat_shape,
            fc_caches,
            head_cache,
        });
        Ok((logits, cache))
    }

    pub fn backward(&self, grad_logits: &Tensor, cache: &Model2Cache) -> Result<Model2Grads, CascadeError> {
        let (mut up, gw_head, gb_head) =
            dense_backward(grad_logits, &self.head.w, &cache.head_cache);
        let mut fc_grads = vec![(Tensor::zeros(&[0]), Tensor::zeros(&[0])); self.fc.len()];
        for l in (0..self.fc.len()).rev() {
            let (dcache, rmask) = &cache.fc_caches[l];
            up = relu_backward(&up, rmask);
            let (gx, gw, gb) = dense_backward(&up, &self.fc[l].w, dcache);
            fc_grads[l] = (gw, gb);
            up = gx;
        }
        let mut grad_map = Tensor::from_vec(&cache.flat_shape, up.data().to_vec())
            .expect("flat grad reshapes to conv output");
        let mut conv_grads = vec![(Tensor::zeros(&[0]), Tensor::zeros(&[0])); self.conv.len()];
        for l in (0..self.conv.len()).rev() {
            let (ccache, rmask, pcache) = &cache.conv_caches[l];
            if let Some(pc) = pcache {
                grad_map = maxpool_backward(&grad_map, pc);
            }
            grad_map = relu_backward(&grad_map, rmask);
            let (gx, gk, gb) = conv2d_backward(&grad_map, &self.conv[l].kernel, ccache)?;
            conv_grads[l] = (gk, gb);
            grad_map = gx;
        }
        Ok(Model2Grads {
            conv: conv_grads,
            fc: fc_grads,
            head: (gw_head, gb_head),
        })
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for layer in &mut self.conv {
            out.push(&mut layer.kernel);
            out.push(&mut layer.bias);
        }
        for layer in &mut self.fc {
            out.push(&mut layer.w);
            out.push(&mut layer.b);
        }
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        out
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for layer in &self.conv {
            out.push(layer.kernel.shape().to_vec());
            out.push(layer.bias.shape().to_vec());
        }
        for layer in &self.fc {
            out.push(layer.w.shape().to_vec());
            out.push(layer.b.shape().to_vec());
        }
        out.push(self.head.w.shape().to_vec());
        out.push(self.head.b.shape().to_vec());
        out
    }

    fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (l, layer) in self.conv.iter().enumerate() {
            out.push((format!("conv{l}.kernel"), layer.kernel.clone()));
            out.push((format!("conv{l}.bias"), layer.bias.clone()));
        }
        for (l, layer) in self.fc.iter().enumerate() {
            out.push((format!("fc{l}.w"), layer.w.clone()));
            out.push((format!("fc{l}.b"), layer.b.clone()));
        }
        out.push(("head.w".into(), self.head.w.clone()));
        out.push(("head.b".into(), self.head.b.clone()));
        out.push(("norm.mean".into(), self.feat_mean.clone()));
        out.push(("norm.std".into(), self.feat_std.clone()));
        out
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), CascadeError> {
        std::fs::create_dir_all(dir)?;
        let meta = ModelMeta {
            arch: self.arch.clone(),
            input_dim: self.input_w,
            n_classes: self.n_classes,
            extra: [("input_h".to_string(), self.input_h)].into_iter().collect(),
        };
        let json =
            serde_json::to_string_pretty(&meta).map_err(|e| CascadeError::ModelFile(e.to_string()))?;
        std::fs::write(dir.join(format!("{stem}.meta.json")), json)?;
        let named = self.named_tensors();
        let refs: Vec<(String, &Tensor)> = named.iter().map(|(n, t)| (n.clone(), t)).collect();
        impactcast_nn::serialize::save_weights(
            &dir.join(format!("{stem}.weights.json")),
            &dir.join(format!("{stem}.bin")),
            &refs,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self, CascadeError> {
        let json = std::fs::read_to_string(dir.join(format!("{stem}.meta.json")))
            .map_err(|e| CascadeError::ModelFile(format!("{stem}.meta.json: {e}")))?;
        let meta: ModelMeta<Model2Arch> =
            serde_json::from_str(&json).map_err(|e| CascadeError::ModelFile(e.to_string()))?;
        let input_h = *meta
            .extra
            .get("input_h")
            .ok_or_else(|| CascadeError::ModelFile("missing input_h".into()))?;
        let mut rng = init::stream(0, "model2/load-placeholder");
        let mut model = Model2::new(meta.arch, input_h, meta.input_dim, meta.n_classes, &mut rng)?;
        let tensors = impactcast_nn::serialize::load_weights(
            &dir.join(format!("{stem}.weights.json")),
            &dir.join(format!("{stem}.bin")),
        )?;
        let mut lookup: std::collections::BTreeMap<String, Tensor> = tensors.into_iter().collect();
        let mut take = |name: &str| -> Result<Tensor, CascadeError> {
            lookup
                .remove(name)
                .ok_or_else(|| CascadeError::ModelFile(format!("missing tensor {name}")))
        };
        let check = |name: &str, got: &Tensor, want: &[usize]| -> Result<(), CascadeError> {
            if got.shape() != want {
                return Err(CascadeError::ModelFile(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    want
                )));
            }
            Ok(())
        };
        for l in 0..model.conv.len() {
            let kernel = take(&format!("conv{l}.kernel"))?;
            check("kernel", &kernel, model.conv[l].kernel.shape())?;
            model.conv[l].kernel = kernel;
            model.conv[l].bias = take(&format!("conv{l}.bias"))?;
        }
        for l in 0..model.fc.len() {
            let w = take(&format!("fc{l}.w"))?;
            check("fc.w", &w, model.fc[l].w.shape())?;
            model.fc[l].w = w;
            model.fc[l].b = take(&format!("fc{l}.b"))?;
        }
        model.head.w = take("head.w")?;
        model.head.b = take("head.b")?;
        model.feat_mean = take("norm.mean")?;
        model.feat_std = take("norm.std")?;
        Ok(model)
    }
}

pub fn apply_grads(
    model: &mut Model2,
    grads: &Model2Grads,
    adam: &mut impactcast_nn::AdamState,
) {
    let mut grad_list: Vec<&Tensor> = Vec::new();
    for (k, b) in &grads.conv {
        grad_list.push(k);
        grad_list.push(b);
    }
    for (w, b) in &grads.fc {
        grad_list.push(w);
        grad_list.push(b);
    }
    grad_list.push(&grads.head.0);
    grad_list.push(&grads.head.1);
    let mut params = model.params_mut();
    impactcast_nn::adam_step(&mut params, &grad_list, adam);
}
