//! Feature archives, few-shot sampling, synthetic benchmarks and β selection.

pub mod archive;
pub mod npy;
pub mod sampling;
pub mod sweep;
pub mod synth;

pub use archive::{archive_paths, read_archive, read_map, write_archive, write_map, Archive, Manifest, Split};
pub use npy::{decode_npy, read_npy, write_npy, Dtype};
pub use sampling::{
    aggregate_labeled, few_shot_sample, group_aggregate, random_projection, units, AggregateMode, Unit,
};
pub use sweep::{beta_sweep, default_beta_grid, fold_partitions, FoldScore, FoldSplit, SweepConfig, SweepResult};
pub use synth::{induce_hub, random_orthogonal, synth_generate, PlantedMap, SynthSet, SynthSpec, MAX_PROTOTYPE_COSINE};
