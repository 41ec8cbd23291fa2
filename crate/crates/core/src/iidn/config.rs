use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::features::ACTION_VOCAB;
use crate::error::{Error, Result};
use crate::money::Cents;

pub const DEFAULT_MAX_SEQ_LEN: usize = 100;
pub const DEFAULT_STATIC_SLOTS: usize = 89;
pub const DEFAULT_STATIC_CARDINALITY: usize = 8;
pub const DEFAULT_DWELL_BINS: usize = 16;

/// The full network and its three ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Two LSTM layers, attention, auxiliary staying task.
    Iidn,
    SingleLstm,
    NonAttention,
    NonAuxiliary,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Iidn,
        Variant::SingleLstm,
        Variant::NonAttention,
        Variant::NonAuxiliary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Iidn => "iidn",
            Variant::SingleLstm => "single-lstm",
            Variant::NonAttention => "non-attention",
            Variant::NonAuxiliary => "non-auxiliary",
        }
    }

    pub fn lstm_layers(self) -> usize {
        match self {
            Variant::SingleLstm => 1,
            _ => 2,
        }
    }

    pub fn attention(self) -> bool {
        self != Variant::NonAttention
    }

    pub fn auxiliary(self) -> bool {
        self != Variant::NonAuxiliary
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config(format!("unknown IIDN variant `{s}`")))
    }
}

/// How each LSTM output state is turned into an attention logit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionScore {
    /// `e_t = w · q_t`
    #[default]
    Linear,
    /// `e_t = u · tanh(W q_t + b)`
    Additive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IidnConfig {
    pub variant: Variant,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub encoder_dims: Vec<usize>,
    pub decoder_dim: usize,
    pub attention_score: AttentionScore,
    pub action_vocab: usize,
    pub dwell_bins: usize,
    pub static_slots: usize,
    pub static_cardinality: usize,
    /// Coupon amounts with their own embedding row; anything else maps to UNK.
    pub coupon_amounts: Vec<Cents>,
    pub max_seq_len: usize,
}

impl Default for IidnConfig {
    fn default() -> Self {
        IidnConfig {
            variant: Variant::Iidn,
            embed_dim: 32,
            hidden_dim: 16,
            encoder_dims: vec![32, 16],
            decoder_dim: 16,
            attention_score: AttentionScore::Linear,
            action_vocab: ACTION_VOCAB,
            dwell_bins: DEFAULT_DWELL_BINS,
            static_slots: DEFAULT_STATIC_SLOTS,
            static_cardinality: DEFAULT_STATIC_CARDINALITY,
            coupon_amounts: vec![Cents(0), Cents(100), Cents(200), Cents(300), Cents(500)],
            max_seq_len: DEFAULT_MAX_SEQ_LEN,
        }
    }
}

impl IidnConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    /// Dimensions used at industrial scale (embedding 256, LSTM hidden 128).
    pub fn industrial_scale() -> Self {
        IidnConfig {
            embed_dim: 256,
            hidden_dim: 128,
            encoder_dims: vec![256, 128],
            decoder_dim: 128,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("decoder_dim", self.decoder_dim),
            ("action_vocab", self.action_vocab),
            ("dwell_bins", self.dwell_bins),
            ("static_slots", self.static_slots),
            ("static_cardinality", self.static_cardinality),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        if self.encoder_dims.is_empty() || self.encoder_dims.contains(&0) {
            return Err(Error::config("encoder needs at least one layer, all dims ≥ 1"));
        }
        if self.coupon_amounts.windows(2).any(|w| w[0] >= w[1]) || self.coupon_amounts.iter().any(|c| c.is_negative()) {
            return Err(Error::config(
                "coupon amounts must be non-negative and strictly increasing",
            ));
        }
        Ok(())
    }

    pub fn encoder_output_dim(&self) -> usize {
        *self.encoder_dims.last().expect("validated non-empty")
    }
}
