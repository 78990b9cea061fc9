//! Per-source GCN encoders, text aggregation and the two projection heads.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{
    config_hash, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint,
    CHECKPOINT_VERSION,
};
pub use forward::{
    aggregate_texts, classify, encode_corpus, forward, gcn_forward, predict, project_ccl,
    EncoderInputs, ForwardOutputs, ForwardVars, ParamVars, SourceInputs,
};
pub use params::{Encoder, FinalActivation, ModelConfig, ModelParams, TaskLayout};

#[cfg(test)]
mod tests;
