//! Image I/O, manifests, padding and synthetic data.

mod manifest;
mod netpbm;
mod sample;
pub mod synth;

pub use manifest::{DatasetManifest, ManifestEntry, SampleKind, MANIFEST_FILE};
pub use netpbm::{decode, encode, load_image, quantize, save_map};
pub use sample::{Sample, PAD_MULTIPLE};
pub use synth::{synth_dataset, synth_edge_dataset, synth_saliency_dataset, synth_samples};
