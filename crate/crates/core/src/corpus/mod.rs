//! Synthetic reports with known labels, dataset files and split procedures.

mod dataset;
mod generate;
mod split;
mod templates;

pub use dataset::{read_dataset, read_label_csv, write_dataset, write_label_csv, LabeledDataset};
pub use generate::{default_priors, generate, CountRange, GeneratorConfig, PolarityPrior, DS1_COUNTS, DS1_REPORTS};
pub use split::{
    fraction_splits, quarter_size, select_test_split, train_validation_split, FractionSplit, TestSelection,
    FRACTION_PERCENTS,
};
pub use templates::{FindingTemplates, Inconsistency, PolarityTemplates, TemplateBank};
