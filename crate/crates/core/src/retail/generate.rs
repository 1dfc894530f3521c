//! Seeded query sampling and the evaluation-set file.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    canonical_rules, compute_price, render_query, CartItem, CustomerType, ProductCategory,
    PromoCode, RetailError, RetailQuery, MAX_CART_ITEMS,
};
use crate::jsonl::{Provenance, RecordWriter};

/// Inclusive sampling ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QueryGenConfig {
    pub items: (usize, usize),
    pub unit_price_cents: (i64, i64),
    pub quantity: (u32, u32),
    pub membership_years: (u32, u32),
    pub promo_probability: f64,
}

impl Default for QueryGenConfig {
    fn default() -> Self {
        Self {
            items: (1, 5),
            unit_price_cents: (500, 25_000),
            quantity: (1, 3),
            membership_years: (0, 10),
            promo_probability: 0.5,
        }
    }
}

impl QueryGenConfig {
    pub fn validate(&self) -> Result<(), RetailError> {
        let bad = |what: &str| Err(RetailError::Config(what.to_string()));
        if self.items.0 < 1 || self.items.0 > self.items.1 || self.items.1 > MAX_CART_ITEMS {
            return bad("item count range must lie within 1..=5 and be non-empty");
        }
        if self.unit_price_cents.0 < 0 || self.unit_price_cents.0 > self.unit_price_cents.1 {
            return bad("price range must be non-empty and non-negative");
        }
        if self.quantity.0 < 1 || self.quantity.0 > self.quantity.1 {
            return bad("quantity range must be non-empty and start at 1 or more");
        }
        if self.membership_years.0 > self.membership_years.1 {
            return bad("membership years range is empty");
        }
        if !(0.0..=1.0).contains(&self.promo_probability) {
            return bad("promo probability must be in [0, 1]");
        }
        Ok(())
    }
}

/// Display names per category; none contain characters the renderer reserves.
pub fn catalog(category: ProductCategory) -> &'static [&'static str] {
    match category {
        ProductCategory::Electronics => &["Headphones", "Laptop", "Smartphone", "Tablet", "Camera", "Speaker"],
        ProductCategory::Clothing => &["Shoes", "Jacket", "T-Shirt", "Jeans", "Sweater", "Dress"],
        ProductCategory::Books => &["Novel", "Cookbook", "Textbook", "Biography", "Comic Book", "Atlas"],
        ProductCategory::Food => &["Coffee Beans", "Olive Oil", "Chocolate Box", "Cheese", "Tea Set", "Pasta"],
        ProductCategory::Home => &["Coffee Maker", "Lamp", "Blender", "Cushion", "Vase", "Toaster"],
        ProductCategory::Sports => &["Basketball", "Yoga Mat", "Tennis Racket", "Dumbbells", "Bike Helmet", "Running Shorts"],
        ProductCategory::Beauty => &["Lipstick", "Perfume", "Face Cream", "Shampoo", "Nail Polish", "Hair Dryer"],
        ProductCategory::Health => &["Vitamins", "First Aid Kit", "Thermometer", "Protein Powder", "Heating Pad", "Massage Gun"],
    }
}

pub(crate) fn sample_item(rng: &mut ChaCha8Rng, config: &QueryGenConfig) -> CartItem {
    let category = *ProductCategory::ALL.choose(rng).expect("non-empty");
    CartItem {
        name: catalog(category).choose(rng).expect("non-empty").to_string(),
        category,
        unit_price_cents: rng.gen_range(config.unit_price_cents.0..=config.unit_price_cents.1),
        quantity: rng.gen_range(config.quantity.0..=config.quantity.1),
    }
}

pub(crate) fn sample_query(rng: &mut ChaCha8Rng, config: &QueryGenConfig) -> RetailQuery {
    let customer = *CustomerType::ALL.choose(rng).expect("non-empty");
    let membership_years = rng.gen_range(config.membership_years.0..=config.membership_years.1);
    let n = rng.gen_range(config.items.0..=config.items.1);
    let cart = (0..n).map(|_| sample_item(rng, config)).collect();
    let promo = if rng.gen_bool(config.promo_probability) {
        Some(*PromoCode::ALL.choose(rng).expect("non-empty"))
    } else {
        None
    };
    RetailQuery {
        customer,
        membership_years,
        cart,
        promo,
    }
}

/// Deterministic under `seed`; every field is drawn uniformly within `config`.
pub fn generate_query(seed: u64, config: &QueryGenConfig) -> Result<RetailQuery, RetailError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_query(&mut rng, config))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSetRecord {
    pub seed: u64,
    pub query: RetailQuery,
    pub rendered_text: String,
    pub final_price_cents: i64,
    pub final_price: String,
    pub winners: BTreeSet<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum EvalSetLine {
    Meta(Provenance),
    Query(EvalSetRecord),
}

/// Builds evaluation records for the given seeds.
pub fn build_eval_set(
    seeds: impl IntoIterator<Item = u64>,
    config: &QueryGenConfig,
) -> Result<Vec<EvalSetRecord>, RetailError> {
    let rules = canonical_rules();
    seeds
        .into_iter()
        .map(|seed| {
            let query = generate_query(seed, config)?;
            let breakdown = compute_price(&query, &rules);
            Ok(EvalSetRecord {
                seed,
                rendered_text: render_query(&query),
                final_price_cents: breakdown.final_price,
                final_price: super::format_cents(breakdown.final_price),
                winners: breakdown.winners(),
                query,
            })
        })
        .collect()
}

pub fn write_eval_set(path: &Path, provenance: &Provenance, records: &[EvalSetRecord]) -> std::io::Result<()> {
    let mut w = RecordWriter::create(path)?;
    w.write(&EvalSetLine::Meta(provenance.clone()))?;
    for r in records {
        w.write(&EvalSetLine::Query(r.clone()))?;
    }
    Ok(())
}

pub fn read_eval_set(path: &Path) -> std::io::Result<Vec<EvalSetRecord>> {
    Ok(crate::jsonl::read_records::<EvalSetLine>(path)?
        .into_iter()
        .filter_map(|l| match l {
            EvalSetLine::Query(r) => Some(r),
            EvalSetLine::Meta(_) => None,
        })
        .collect())
}
