//! The first stage: zone index → embedding; the window's encoded vectors →
//! stacked LSTM; final hidden state and embedding concatenated into dense
//! layers with batch normalization and dropout, ending in a softmax head.
//! The cascade uses a 2-unit head; the single-step baseline reuses the same
//! structure with a 3-unit head.

use super::common::{
    concat_cols, relu, relu_backward, sequence_batch, split_cols, standardize_rows, DenseLayer,
    ModelMeta,
};
use super::{CascadeError, Model1Arch};
use crate::grid::WindowSample;
use impactcast_nn::norm::{BatchNorm, BatchNormCache};
use impactcast_nn::{
    dense, dense_backward, dropout, dropout_backward, embedding_lookup,
    embedding_lookup_backward, init, lstm_backward_seq, lstm_forward_seq, DenseCache, DropoutMask,
    LstmGrads, LstmParams, LstmSeqCache, Tensor,
};
use rand::Rng;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct Model1 {
    pub arch: Model1Arch,
    pub n_zones: usize,
    pub input_dim: usize,
    pub n_classes: usize,
    pub embedding: Tensor,
    pub lstm: Vec<LstmParams>,
    pub fc: Vec<DenseLayer>,
    pub bn: Vec<BatchNorm>,
    pub head: DenseLayer,
    /// per-feature input standardization frozen from the training pool
    pub feat_mean: Tensor,
    pub feat_std: Tensor,
}

pub struct Model1Cache {
    lstm_caches: Vec<LstmSeqCache>,
    fc_caches: Vec<(DenseCache, BatchNormCache, Tensor, DropoutMask)>,
    head_cache: DenseCache,
    zones: Vec<usize>,
    steps: usize,
    batch: usize,
}

#[derive(Debug, Clone)]
pub struct Model1Grads {
    pub embedding: Tensor,
    pub lstm: Vec<LstmGrads>,
    pub fc: Vec<(Tensor, Tensor)>,
    pub bn: Vec<(Tensor, Tensor)>,
    pub head: (Tensor, Tensor),
}

impl Model1 {
    pub fn new(
        arch: Model1Arch,
        n_zones: usize,
        input_dim: usize,
        n_classes: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let embedding = init::uniform(&[n_zones, arch.embedding_dim], -0.05, 0.05, rng);
        let mut lstm = Vec::new();
        let mut in_dim = input_dim;
        for &h in &arch.lstm_sizes {
            lstm.push(LstmParams::init(in_dim, h, 0, rng));
            in_dim = h;
        }
        let mut fc = Vec::new();
        let mut bn = Vec::new();
        let mut cur = in_dim + arch.embedding_dim;
        for &s in &arch.fc_sizes {
            fc.push(DenseLayer {
                w: init::xavier_uniform(cur, s, rng),
                b: Tensor::zeros(&[s]),
            });
            bn.push(BatchNorm::new(s));
            cur = s;
        }
        let head = DenseLayer {
            w: init::xavier_uniform(cur, n_classes, rng),
            b: Tensor::zeros(&[n_classes]),
        };
        Model1 {
            arch,
            n_zones,
            input_dim,
            n_classes,
            embedding,
            lstm,
            fc,
            bn,
            head,
            feat_mean: Tensor::zeros(&[input_dim]),
            feat_std: Tensor::filled(&[input_dim], 1.0),
        }
    }

    pub fn set_normalization(&mut self, mean: Tensor, std: Tensor) {
        assert_eq!(mean.len(), self.input_dim);
        assert_eq!(std.len(), self.input_dim);
        self.feat_mean = mean;
        self.feat_std = std;
    }

    fn hidden_dim(&self) -> usize {
        *self.arch.lstm_sizes.last().expect("at least one lstm layer")
    }

    /// Train-mode forward over one minibatch. Updates batchnorm running
    /// statistics and draws dropout masks from `rng`.
    pub fn forward_train(
        &mut self,
        samples: &[&WindowSample],
        w: usize,
        keep_prob: f64,
        rng: &mut impl Rng,
    ) -> Result<(Tensor, Model1Cache), CascadeError> {
        let f = self.input_dim;
        self.check_dims(samples, w, f)?;
        let (mut xs, zones) = sequence_batch(samples, w, f);
        for x in &mut xs {
            standardize_rows(x, &self.feat_mean, &self.feat_std);
        }
        let mut seq = xs;
        let mut lstm_caches = Vec::with_capacity(self.lstm.len());
        for params in &self.lstm {
            let (hs, cache) = lstm_forward_seq(&seq, params);
            lstm_caches.push(cache);
            seq = hs;
        }
        let h_last = seq.last().expect("w >= 1").clone();
        let emb = embedding_lookup(&self.embedding, &zones);
        let mut cur = concat_cols(&h_last, &emb);
        let mut fc_caches = Vec::with_capacity(self.fc.len());
        for (l, layer) in self.fc.iter().enumerate() {
            let (z, dcache) = dense(&cur, &layer.w, &layer.b);
            let (zn, bcache) = self.bn[l].forward_train(&z);
            let (a, rmask) = relu(&zn);
            let (d, dmask) = dropout(&a, keep_prob, rng);
            fc_caches.push((dcache, bcache, rmask, dmask));
            cur = d;
        }
        let (logits, head_cache) = dense(&cur, &self.head.w, &self.head.b);
        Ok((
            logits,
            Model1Cache {
                lstm_caches,
                fc_caches,
                head_cache,
                zones,
                steps: w,
                batch: samples.len(),
            },
        ))
    }

    /// Inference forward: running batchnorm statistics, no dropout.
    pub fn forward_infer(&self, samples: &[&WindowSample], w: usize) -> Result<Tensor, CascadeError> {
        let f = self.input_dim;
        self.check_dims(samples, w, f)?;
        let (mut xs, zones) = sequence_batch(samples, w, f);
        for x in &mut xs {
            standardize_rows(x, &self.feat_mean, &self.feat_std);
        }
        let mut seq = xs;
        for params in &self.lstm {
            let (hs, _) = lstm_forward_seq(&seq, params);
            seq = hs;
        }
        let h_last = seq.last().expect("w >= 1").clone();
        let emb = embedding_lookup(&self.embedding, &zones);
        let mut cur = concat_cols(&h_last, &emb);
        for (l, layer) in self.fc.iter().enumerate() {
            let (z, _) = dense(&cur, &layer.w, &layer.b);
            let zn = self.bn[l].forward_infer(&z);
            let (a, _) = relu(&zn);
            cur = a;
        }
        let (logits, _) = dense(&cur, &self.head.w, &self.head.b);
        Ok(logits)
    }

    fn check_dims(&self, samples: &[&WindowSample], w: usize, f: usize) -> Result<(), CascadeError> {
        for s in samples {
            if s.sequence.len() != w * f {
                return Err(CascadeError::DimMismatch {
                    sample: s.sequence.len(),
                    model: w * f,
                });
            }
        }
        Ok(())
    }

    pub fn backward(&self, grad_logits: &Tensor, cache: &Model1Cache) -> Model1Grads {
        let (mut up, gw_head, gb_head) =
            dense_backward(grad_logits, &self.head.w, &cache.head_cache);
        let mut fc_grads = vec![(Tensor::zeros(&[0]), Tensor::zeros(&[0])); self.fc.len()];
        let mut bn_grads = vec![(Tensor::zeros(&[0]), Tensor::zeros(&[0])); self.fc.len()];
        for l in (0..self.fc.len()).rev() {
            let (dcache, bcache, rmask, dmask) = &cache.fc_caches[l];
            up = dropout_backward(&up, dmask);
            up = relu_backward(&up, rmask);
            let (gx, gscale, gshift) = self.bn[l].backward(&up, bcache);
            bn_grads[l] = (gscale, gshift);
            let (gx2, gw, gb) = dense_backward(&gx, &self.fc[l].w, dcache);
            fc_grads[l] = (gw, gb);
            up = gx2;
        }
        let (grad_h_last, grad_emb) = split_cols(&up, self.hidden_dim());
        let embedding = embedding_lookup_backward(&grad_emb, &cache.zones, self.n_zones);

        let mut lstm_grads = Vec::with_capacity(self.lstm.len());
        let mut grad_hs: Vec<Tensor> = {
            let top_h = self.hidden_dim();
            let mut v = vec![Tensor::zeros(&[cache.batch, top_h]); cache.steps];
            v[cache.steps - 1] = grad_h_last;
            v
        };
        for l in (0..self.lstm.len()).rev() {
            let (grad_xs, grads) = lstm_backward_seq(&grad_hs, &cache.lstm_caches[l], &self.lstm[l]);
            lstm_grads.push(grads);
            grad_hs = grad_xs;
        }
        lstm_grads.reverse();

        Model1Grads {
            embedding,
            lstm: lstm_grads,
            fc: fc_grads,
            bn: bn_grads,
            head: (gw_head, gb_head),
        }
    }

    /// Trainable parameters in a fixed order (batchnorm running statistics
    /// are buffers, not parameters).
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.embedding];
        for p in &mut self.lstm {
            out.extend(p.tensors_mut());
        }
        for layer in &mut self.fc {
            out.push(&mut layer.w);
            out.push(&mut layer.b);
        }
        for bn in &mut self.bn {
            out.push(&mut bn.scale);
            out.push(&mut bn.shift);
        }
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        out
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = vec![self.embedding.shape().to_vec()];
        for p in &self.lstm {
            for (_, t) in p.named() {
                out.push(t.shape().to_vec());
            }
        }
        for layer in &self.fc {
            out.push(layer.w.shape().to_vec());
            out.push(layer.b.shape().to_vec());
        }
        for bn in &self.bn {
            out.push(bn.scale.shape().to_vec());
            out.push(bn.shift.shape().to_vec());
        }
        out.push(self.head.w.shape().to_vec());
        out.push(self.head.b.shape().to_vec());
        out
    }

    /// Serialized tensor list: every parameter plus batchnorm buffers.
    fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = vec![("embedding".into(), self.embedding.clone())];
        for (l, p) in self.lstm.iter().enumerate() {
            for (name, t) in p.named() {
                out.push((format!("lstm{l}.{name}"), t.clone()));
            }
        }
        for (l, layer) in self.fc.iter().enumerate() {
            out.push((format!("fc{l}.w"), layer.w.clone()));
            out.push((format!("fc{l}.b"), layer.b.clone()));
        }
        for (l, bn) in self.bn.iter().enumerate() {
            out.push((format!("bn{l}.scale"), bn.scale.clone()));
            out.push((format!("bn{l}.shift"), bn.shift.clone()));
            out.push((format!("bn{l}.running_mean"), bn.running_mean.clone()));
            out.push((format!("bn{l}.running_var"), bn.running_var.clone()));
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
            input_dim: self.input_dim,
            n_classes: self.n_classes,
            extra: [("n_zones".to_string(), self.n_zones)].into_iter().collect(),
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
        let meta: ModelMeta<Model1Arch> =
            serde_json::from_str(&json).map_err(|e| CascadeError::ModelFile(e.to_string()))?;
        let n_zones = *meta
            .extra
            .get("n_zones")
            .ok_or_else(|| CascadeError::ModelFile("missing n_zones".into()))?;
        let tensors = impactcast_nn::serialize::load_weights(
            &dir.join(format!("{stem}.weights.json")),
            &dir.join(format!("{stem}.bin")),
        )?;
        let mut rng = init::stream(0, "model1/load-placeholder");
        let mut model = Model1::new(meta.arch, n_zones, meta.input_dim, meta.n_classes, &mut rng);
        let mut lookup: std::collections::BTreeMap<String, Tensor> =
            tensors.into_iter().collect();
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
        let embedding = take("embedding")?;
        check("embedding", &embedding, model.embedding.shape())?;
        model.embedding = embedding;
        for (l, p) in model.lstm.iter_mut().enumerate() {
            let names: Vec<&'static str> = p.named().iter().map(|(n, _)| *n).collect();
            for (ti, name) in names.iter().enumerate() {
                let t = take(&format!("lstm{l}.{name}"))?;
                check(name, &t, p.named()[ti].1.shape())?;
                *p.tensors_mut()[ti] = t;
            }
        }
        for l in 0..model.fc.len() {
            for (name, slot) in [("w", 0), ("b", 1)] {
                let t = take(&format!("fc{l}.{name}"))?;
                let want = if slot == 0 { model.fc[l].w.shape() } else { model.fc[l].b.shape() };
                check(name, &t, want)?;
                if slot == 0 {
                    model.fc[l].w = t;
                } else {
                    model.fc[l].b = t;
                }
            }
            model.bn[l].scale = take(&format!("bn{l}.scale"))?;
            model.bn[l].shift = take(&format!("bn{l}.shift"))?;
            model.bn[l].running_mean = take(&format!("bn{l}.running_mean"))?;
            model.bn[l].running_var = take(&format!("bn{l}.running_var"))?;
        }
        let head_w = take("head.w")?;
        check("head.w", &head_w, model.head.w.shape())?;
        model.head.w = head_w;
        model.head.b = take("head.b")?;
        model.feat_mean = take("norm.mean")?;
        model.feat_std = take("norm.std")?;
        Ok(model)
    }
}

pub fn apply_grads(
    model: &mut Model1,
    grads: &Model1Grads,
    adam: &mut impactcast_nn::AdamState,
) {
    let mut grad_list: Vec<&Tensor> = vec![&grads.embedding];
    for g in &grads.lstm {
        grad_list.extend(g.tensors());
    }
    for (w, b) in &grads.fc {
        grad_list.push(w);
        grad_list.push(b);
    }
    for (s, sh) in &grads.bn {
        grad_list.push(s);
        grad_list.push(sh);
    }
    grad_list.push(&grads.head.0);
    grad_list.push(&grads.head.1);
    let mut params = model.params_mut();
    impactcast_nn::adam_step(&mut params, &grad_list, adam);
}
