//! Folder dataset → preprocessed, batched tensors.
//!
//! Layout: `<root>/Training/<class>/*` and `<root>/Testing/<class>/*`; the class folder
//! name is the label. Every image is decoded, bicubic-resized to `S × S`, expanded to
//! three channels and scaled to `[0, 1]`.

pub mod augment;
pub mod batch;
pub mod dataset;
pub mod image;

pub use self::augment::{augment, AugmentParams, AugmentationConfig};
pub use self::batch::BatchIterator;
pub use self::dataset::{scan_dataset, scan_split, DatasetIndex, LoadedDataset, TEST_DIR, TRAIN_DIR};
pub use self::image::{decode_image, gray_to_rgb, load_preprocessed, resize_bicubic, ImageGrid};

use crate::tensor::Tensor;

/// One preprocessed `[3, S, S]` image and its class id.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    pub pixels: Tensor<f32>,
    pub label: usize,
}
