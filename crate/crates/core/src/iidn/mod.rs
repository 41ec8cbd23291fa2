//! Instantaneous intent detection: embedding lookup, stacked LSTM, attention
//! pooling, MLP encoder and a two-step recurrent decoder for the staying and
//! purchasing intents, plus the logistic-regression baseline.

pub mod attention;
pub mod baseline;
pub mod config;
pub mod decoder;
pub mod embedding;
pub mod encoder;
pub mod features;
pub mod io;
pub mod loss;
pub mod lstm;
mod model;
pub mod train;

pub use baseline::{LrConfig, LrModel};
pub use config::{AttentionScore, IidnConfig, Variant};
pub use features::{
    menu_with_null, Action, BehaviorEvent, FeatureTuple, IntentScores, LabeledSample, MenuScore, ACTION_VOCAB,
};
pub use io::{ModelKind, TrainedModel};
pub use loss::LossBreakdown;
pub use model::IidnModel;
pub use train::{split_by_user, train, write_loss_curve, EpochLoss, TrainOptions, Trainable};

use crate::error::Result;
use crate::money::Cents;

/// Anything that scores `(s, h, c)` tuples. Implementations are immutable
/// after training and safe to share across threads.
pub trait IntentModel {
    fn score(&self, x: &FeatureTuple) -> Result<IntentScores>;

    /// Scores `{0} ∪ menu` in ascending amount order.
    fn score_menu(&self, s: &[BehaviorEvent], h: &[u16], menu: &[Cents]) -> Result<Vec<MenuScore>>;
}
