//! Synthetic segmentation data and augmentation.

pub mod augment;
pub mod synth;

/// One image/mask pair. Image is [C,H,W] float in [0,1]; the mask holds a
/// class index per pixel.
#[derive(Debug, Clone)]
pub struct SegSample {
    pub id: String,
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub image: Vec<f32>,
    pub mask: Vec<u8>,
}

impl SegSample {
    pub fn validate(&self, num_classes: usize) {
        assert_eq!(self.image.len(), self.channels * self.h * self.w, "image size");
        assert_eq!(self.mask.len(), self.h * self.w, "mask size");
        assert!(
            self.image.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)),
            "image values must be finite and in [0,1]"
        );
        assert!(
            self.mask.iter().all(|&m| (m as usize) < num_classes),
            "mask values must be < {num_classes}"
        );
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<SegSample>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
