//! Hashed bag-of-n-grams linear classifier distilled from rank labels.
//!
//! Documents are whitespace-tokenized; frequent words get their own
//! embedding rows and all n-grams of order 2..=`order` are hashed (FNV-1a
//! over the space-joined tokens) into a fixed bucket range. A document's
//! hidden vector is the mean of its feature rows; a two-way softmax on top
//! gives the positive-class probability.

mod features;
mod io;
mod model;
mod train;

pub use features::{featurize, Vocab};
pub use io::MODEL_MAGIC;
pub use model::{Hyperparams, NGramLinearClassifier, NEGATIVE, POSITIVE};
pub use train::{
    balance, split_holdout, train, train_parallel, Balancing, LabeledText, TrainReport, TrainingSet,
};
