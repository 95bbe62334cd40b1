//! Character-level recurrent VAE over SMILES token sequences.

mod gru;
mod model;
mod train;
mod vocab;

pub use gru::{gru_step, GruCell, GRU_TENSORS};
pub use model::{DecodeMode, SeqVaeConfig, SeqVaeModel};
pub use train::{
    evaluate, train_seqvae, train_seqvae_tracked, SeqEval, SeqTrainConfig, SeqTrainReport,
};
pub use vocab::{Vocab, BOS, EOS, PAD};
