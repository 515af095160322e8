//! Five-way attention classifier: a one-hidden-layer perceptron trained with
//! cross-entropy and early stopping, plus evaluation and file formats.

mod io;
mod metrics;
mod model;
mod train;

pub use io::{
    read_dataset, read_dataset_file, write_dataset, DatasetError, ModelFileError, LABEL_COLUMN,
    MODEL_MAGIC, MODEL_VERSION,
};
pub use metrics::{evaluate, metrics_from_predictions, ClassMetrics, EvalError, Metrics};
pub use model::{argmax, softmax, Classification, MlpModel, ModelContractError, NormStats, Z_CLAMP};
pub use train::{
    accuracy, cross_validate, init_model, kfold_indices, loss_and_grad, mean_loss, param,
    set_param, stratified_split, train, CrossValidation, Dataset, TrainConfig, TrainError,
    TrainingReport, MIN_EXAMPLES,
};
