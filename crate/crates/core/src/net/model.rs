//! The assembled segmentation model: encoder + decoder over one parameter
//! store, with batch helpers, prediction and evaluation.

use crate::array::{Array, Scalar};
use crate::data::{Dataset, SegSample};
use crate::graph::{Graph, Var};
use crate::metrics::{evaluate_masks, EvalReport};
use crate::net::config::{ConfigError, ModelConfig};
use crate::net::decoder::{Decoder, SegOutput};
use crate::net::encoder::{Encoder, FeaturePyramid};
use crate::nn::Mode;
use crate::param::ParamStore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = Encoder::new(&mut store, &mut rng, "encoder", &config);
        let decoder = Decoder::new(&mut store, &mut rng, "decoder", &config);
        Ok(Model { config, store, encoder, decoder })
    }

    pub fn encoder_forward(&mut self, g: &mut Graph<T>, image: Var, mode: Mode) -> FeaturePyramid {
        let s = g.shape(image);
        assert_eq!(s[1], self.config.in_channels, "image channel mismatch");
        assert_eq!(
            (s[2], s[3]),
            self.config.input_size,
            "image spatial size does not match the configuration"
        );
        self.encoder.forward(g, &mut self.store, image, mode)
    }

    pub fn forward(&mut self, g: &mut Graph<T>, image: Var, mode: Mode) -> SegOutput {
        let pyr = self.encoder_forward(g, image, mode);
        self.decoder.forward(g, &mut self.store, &pyr, mode)
    }

    /// Trainable parameter count (the checkpoint's trainable element count).
    pub fn count_params(&self) -> usize {
        self.store.num_trainable_elements()
    }

    /// Same count from the per-block accounting, used to cross-check.
    pub fn count_params_analytic(&self) -> usize {
        self.encoder.num_params() + self.decoder.num_params()
    }

    /// Pack samples into a [B,C,H,W] image array.
    pub fn batch_images(&self, samples: &[&SegSample]) -> Array<T> {
        assert!(!samples.is_empty());
        let (c, h, w) =
            (self.config.in_channels, self.config.input_size.0, self.config.input_size.1);
        let mut data = Vec::with_capacity(samples.len() * c * h * w);
        for s in samples {
            assert_eq!((s.channels, s.h, s.w), (c, h, w), "sample does not match model size");
            data.extend(s.image.iter().map(|&v| T::from_f64(v as f64)));
        }
        Array::from_vec(&[samples.len(), c, h, w], data)
    }

    /// Argmax class masks for a batch of samples (eval mode, no tape).
    pub fn predict_masks(&mut self, samples: &[&SegSample]) -> Vec<Vec<u8>> {
        let images = self.batch_images(samples);
        let mut g = Graph::inference();
        let x = g.leaf(images, false);
        let out = self.forward(&mut g, x, Mode::Eval);
        let logits = g.value(out.logits);
        let (b, n, h, w) = {
            let s = logits.shape();
            (s[0], s[1], s[2], s[3])
        };
        let mut masks = Vec::with_capacity(b);
        for bi in 0..b {
            let mut mask = vec![0u8; h * w];
            for (p, m) in mask.iter_mut().enumerate() {
                let mut best = T::neg_infinity();
                let mut arg = 0u8;
                for c in 0..n {
                    let v = logits.data()[((bi * n + c) * h * w) + p];
                    if v > best {
                        best = v;
                        arg = c as u8;
                    }
                }
                *m = arg;
            }
            masks.push(mask);
        }
        masks
    }

    /// Full-dataset evaluation in eval mode.
    pub fn evaluate(&mut self, dataset: &Dataset, batch_size: usize) -> EvalReport {
        assert!(batch_size >= 1);
        assert!(!dataset.is_empty(), "evaluate on empty dataset");
        let mut preds = Vec::with_capacity(dataset.len());
        for chunk in dataset.samples.chunks(batch_size) {
            let refs: Vec<&SegSample> = chunk.iter().collect();
            preds.extend(self.predict_masks(&refs));
        }
        evaluate_masks(&preds, dataset)
    }

    /// Architecture dump: parameter paths grouped per top-level module plus
    /// totals, for reproducibility records.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "input={}x{}x{} classes={} seed={}\n",
            self.config.in_channels,
            self.config.input_size.0,
            self.config.input_size.1,
            self.config.num_classes,
            self.config.seed
        ));
        out.push_str(&format!(
            "gate={:?} conv={:?} supervision={:?} merge={:?}\n",
            self.config.gate, self.config.conv, self.config.supervision, self.config.scan_merge
        ));
        for (_, e) in self.store.iter() {
            out.push_str(&format!(
                "{} {:?} {}{}\n",
                e.path,
                e.value.shape(),
                e.value.numel(),
                if e.trainable { "" } else { " (buffer)" }
            ));
        }
        out.push_str(&format!(
            "params={} macs={}\n",
            self.count_params(),
            crate::net::complexity::count_flops(&self.config)
        ));
        out
    }
}
