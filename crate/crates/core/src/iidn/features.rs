//! Network inputs, labels and outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::Cents;

/// Real-time event kinds, one per real-time feature column.
pub const ACTION_NAMES: [&str; 15] = [
    "page_view",
    "tap",
    "search",
    "scroll",
    "item_detail",
    "collect",
    "favorite",
    "add_cart",
    "coupon_center",
    "price_compare",
    "share",
    "review_read",
    "back",
    "exit_hover",
    "checkout_view",
];

pub const ACTION_VOCAB: usize = ACTION_NAMES.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum Action {
    PageView = 0,
    Tap,
    Search,
    Scroll,
    ItemDetail,
    Collect,
    Favorite,
    AddCart,
    CouponCenter,
    PriceCompare,
    Share,
    ReviewRead,
    Back,
    ExitHover,
    CheckoutView,
}

impl Action {
    pub const ALL: [Action; ACTION_VOCAB] = [
        Action::PageView,
        Action::Tap,
        Action::Search,
        Action::Scroll,
        Action::ItemDetail,
        Action::Collect,
        Action::Favorite,
        Action::AddCart,
        Action::CouponCenter,
        Action::PriceCompare,
        Action::Share,
        Action::ReviewRead,
        Action::Back,
        Action::ExitHover,
        Action::CheckoutView,
    ];

    pub fn id(self) -> u16 {
        self as u16
    }

    pub fn name(self) -> &'static str {
        ACTION_NAMES[self as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorEvent {
    pub action: u16,
    /// Seconds spent on the event.
    pub dwell: f64,
    /// Position within the session.
    pub step: u32,
}

/// One user's `(s, h, c)` input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTuple {
    pub s: Vec<BehaviorEvent>,
    pub h: Vec<u16>,
    pub c: Cents,
}

impl FeatureTuple {
    pub fn validate(&self) -> Result<()> {
        if self.s.is_empty() {
            return Err(Error::contract("behavior sequence must contain at least one event"));
        }
        if let Some(e) = self.s.iter().find(|e| !(e.dwell.is_finite() && e.dwell >= 0.0)) {
            return Err(Error::contract(format!(
                "dwell must be finite and non-negative, got {} at step {}",
                e.dwell, e.step
            )));
        }
        if self.c.is_negative() {
            return Err(Error::contract("coupon amount must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub user_id: u64,
    pub x: FeatureTuple,
    #[serde(with = "bool_as_int")]
    pub y_s: bool,
    #[serde(with = "bool_as_int")]
    pub y_p: bool,
}

impl LabeledSample {
    pub fn validate(&self) -> Result<()> {
        if self.y_p && !self.y_s {
            return Err(Error::contract(format!("user {}: paid without staying", self.user_id)));
        }
        self.x.validate()
    }
}

mod bool_as_int {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*v as u8)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

/// Staying and purchasing intents for one `(s, h, c)`.
///
/// Factored models fill `p_pay_given_stay` and set `p_pay = p_stay * p_pay_given_stay`.
/// Models that emit the purchase probability directly leave it `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntentScores {
    pub p_stay: f64,
    pub p_pay_given_stay: Option<f64>,
    pub p_pay: f64,
}

impl IntentScores {
    pub fn factored(p_stay: f64, p_pay_given_stay: f64) -> Self {
        IntentScores {
            p_stay,
            p_pay_given_stay: Some(p_pay_given_stay),
            p_pay: p_stay * p_pay_given_stay,
        }
    }

    pub fn direct(p_stay: f64, p_pay: f64) -> Self {
        IntentScores {
            p_stay,
            p_pay_given_stay: None,
            p_pay,
        }
    }
}

/// Scores for one menu amount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MenuScore {
    pub amount: Cents,
    pub p_stay: f64,
    pub p_pay: f64,
}

/// `{0} ∪ menu`, ascending and de-duplicated.
pub fn menu_with_null(menu: &[Cents]) -> Vec<Cents> {
    let mut amounts: Vec<Cents> = std::iter::once(Cents::ZERO).chain(menu.iter().copied()).collect();
    amounts.sort();
    amounts.dedup();
    amounts
}
