//! Streaming readers and writers for manifests, embedding shards, score
//! tables, and selections. Nothing here needs the whole corpus in memory.

mod manifest;
mod scores;
mod selection;
mod shard;

pub use manifest::{
    read_manifest, read_sorted_manifest, validate_uid, write_manifest, DuplicateCheck, ManifestReader,
    SampleRecord,
};
pub use scores::{join_scores, read_scores, write_scores, JoinScores, ScoreColumn, ScoreReader, ScoreRow, ScoreWriter};
pub use selection::{
    read_selection, read_uid_set, write_selection, SelectionManifest, TieBreak, SELECTION_FORMAT, SELECTION_VERSION,
};
pub use shard::{
    read_embedding_shard, write_embedding_shard, EmbeddingShard, ShardReader, ShardWriter, SHARD_MAGIC,
    SHARD_VERSION,
};
