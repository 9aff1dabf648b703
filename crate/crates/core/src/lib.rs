//! Few-shot text classification with a human in the loop.
//!
//! The pipeline is:
//!
//! 1. [`corpus`]: clean and tokenize a batch of documents, estimate unigram
//!    probabilities from the batch.
//! 2. [`embed`]: turn each document into the smooth-inverse-frequency weighted
//!    average of its pre-trained word vectors ([`wordvec`]).
//! 3. [`topics`]: fit LDA with one topic per category and rank each topic's
//!    documents so a person can pick representatives from the first page.
//! 4. [`classify`]: average the chosen representatives into one prototype per
//!    category and assign every other document to the most cosine-similar one.
//!
//! [`eval`] measures how good the approach can get on labeled data (best
//! one-shot accuracy over all or sampled representative choices, the same
//! search restricted to LDA's first pages, and the representative length
//! bias). [`service`] wraps the workflow in a persistent HTTP engine and
//! [`cli`] exposes every stage from the command line.
//!
//! See the crate's `examples/` directory for one runnable program per stage.

pub mod classify;
pub mod cli;
pub mod corpus;
pub mod embed;
pub mod eval;
pub mod service;
pub mod synthetic;
pub mod topics;
pub mod wordvec;

pub use classify::{
    build_prototypes, classify_batch, cosine_similarity, Classification, Prediction, PrototypeSet,
};
pub use corpus::{
    build_unigram_model, clean_tokenize, load_labeled_dataset, Document, LabeledDataset,
    LabeledDocument, StopWords, UnigramModel,
};
pub use embed::{embed_batch, embed_document, sif_weight, DocumentEmbedding, SifConfig};
pub use eval::{
    accuracy, length_bias_analysis, search_lda_restricted, search_max_one_shot, AccuracyConvention,
    EvalBatch, EvalReport, SearchMode,
};
pub use topics::{fit_lda, CandidateRanking, LdaConfig, TopicModel};
pub use wordvec::{load_vectors, VectorFormat, WordVectorTable};
