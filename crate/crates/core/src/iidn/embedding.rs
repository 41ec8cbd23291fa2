//! Table-lookup embeddings for events, static features and coupon amounts.

use serde::{Deserialize, Serialize};

use super::config::IidnConfig;
use super::features::BehaviorEvent;
use crate::error::{Error, Result};
use crate::money::Cents;
use crate::nn::{axpy, Matrix};

/// Quantile bin edges for dwell times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellBuckets {
    edges: Vec<f64>,
}

impl DwellBuckets {
    /// Log-spaced edges from 1s, used before any data has been seen.
    pub fn unfitted(bins: usize) -> Self {
        DwellBuckets {
            edges: (1..bins).map(|k| 2f64.powf(k as f64 / 2.0) - 1.0).collect(),
        }
    }

    /// Edges at the `k / bins` quantiles of `dwells`.
    pub fn fit(dwells: impl IntoIterator<Item = f64>, bins: usize) -> Self {
        let mut values: Vec<f64> = dwells.into_iter().filter(|d| d.is_finite()).collect();
        if values.is_empty() || bins < 2 {
            return Self::unfitted(bins);
        }
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let edges = (1..bins).map(|k| values[(k * n / bins).min(n - 1)]).collect();
        DwellBuckets { edges }
    }

    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.windows(2).any(|w| w[0] > w[1]) || edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::contract("dwell edges must be finite and sorted"));
        }
        Ok(DwellBuckets { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn bucket(&self, dwell: f64) -> usize {
        self.edges.partition_point(|e| *e <= dwell)
    }
}

/// Maps raw ids onto embedding-table rows, with a reserved UNK row per table.
#[derive(Debug, Clone)]
pub struct RowIndex {
    action_vocab: usize,
    static_slots: usize,
    static_cardinality: usize,
    coupon_amounts: Vec<Cents>,
}

impl RowIndex {
    pub fn new(cfg: &IidnConfig) -> Self {
        RowIndex {
            action_vocab: cfg.action_vocab,
            static_slots: cfg.static_slots,
            static_cardinality: cfg.static_cardinality,
            coupon_amounts: cfg.coupon_amounts.clone(),
        }
    }

    pub fn action_rows(&self) -> usize {
        self.action_vocab + 1
    }

    pub fn static_rows(&self) -> usize {
        self.static_slots * (self.static_cardinality + 1)
    }

    pub fn coupon_rows(&self) -> usize {
        self.coupon_amounts.len() + 1
    }

    pub fn action(&self, id: u16) -> usize {
        (id as usize).min(self.action_vocab)
    }

    pub fn static_value(&self, slot: usize, value: u16) -> usize {
        slot * (self.static_cardinality + 1) + (value as usize).min(self.static_cardinality)
    }

    /// Table rows summed to embed `amount`: known amounts use the prefix of
    /// rows up to their own (an ordinal embedding, so adjacent amounts share
    /// all but one row); unknown amounts use the UNK row alone.
    pub fn coupon_span(&self, amount: Cents) -> std::ops::Range<usize> {
        let r = self.coupon(amount);
        if r == self.coupon_amounts.len() {
            r..r + 1
        } else {
            0..r + 1
        }
    }

    pub fn coupon(&self, amount: Cents) -> usize {
        self.coupon_amounts
            .binary_search(&amount)
            .unwrap_or(self.coupon_amounts.len())
    }

    pub fn check_static_len(&self, h: &[u16]) -> Result<()> {
        if h.len() != self.static_slots {
            return Err(Error::Shape {
                op: "static features",
                left: (self.static_slots, 1),
                right: (h.len(), 1),
            });
        }
        Ok(())
    }
}

/// Borrowed view of the four embedding tables.
#[derive(Clone, Copy)]
pub struct EmbeddingTables<'a> {
    pub action: &'a Matrix,
    pub dwell: &'a Matrix,
    pub statics: &'a Matrix,
    pub coupon: &'a Matrix,
}

/// Dense vector for one event: action row plus dwell-bucket row.
pub fn embed_event(
    event: &BehaviorEvent,
    tables: EmbeddingTables<'_>,
    rows: &RowIndex,
    buckets: &DwellBuckets,
) -> Vec<f64> {
    let mut out = tables.action.row(rows.action(event.action)).to_vec();
    let b = buckets.bucket(event.dwell).min(tables.dwell.rows() - 1);
    axpy(1.0, tables.dwell.row(b), &mut out);
    out
}

/// Mean of the per-slot rows of `h`.
pub fn embed_static(h: &[u16], tables: EmbeddingTables<'_>, rows: &RowIndex) -> Result<Vec<f64>> {
    rows.check_static_len(h)?;
    let mut out = vec![0.0; tables.statics.cols()];
    let scale = 1.0 / h.len() as f64;
    for (slot, &v) in h.iter().enumerate() {
        axpy(scale, tables.statics.row(rows.static_value(slot, v)), &mut out);
    }
    Ok(out)
}

pub fn embed_coupon(c: Cents, tables: EmbeddingTables<'_>, rows: &RowIndex) -> Vec<f64> {
    let mut out = vec![0.0; tables.coupon.cols()];
    for r in rows.coupon_span(c) {
        axpy(1.0, tables.coupon.row(r), &mut out);
    }
    out
}
