//! Manifests, feature stores, stratified splits and the synthetic generator.

mod feature_store;
mod manifest;
mod split;
mod synth;

pub use feature_store::{global_average_pool, FeatureKind, FeatureStore, LGFS_MAGIC, LGFS_VERSION};
pub use manifest::{one_hot, DatasetManifest, ManifestEntry, OneHot, Split};
pub(crate) use manifest::one_hot_rows;
pub use split::{split, SplitFractions};
pub use synth::{
    class_label, draw_centroids, sample_id, synth_dataset, synth_from_centroids, synth_images, synth_spatial,
    SynthImageSpec, MAX_CENTROID_COSINE,
};
