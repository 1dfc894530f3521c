//! Retail discount benchmark.
//!
//! Thirty natural-language discount rules over customer type, membership
//! years, promo code and cart contents. [`pricing`] is the exact ground-truth
//! engine, [`generate`] samples queries, [`render`] produces the query text
//! shown to models, and [`scripted`] is a rule-aware scripted backend.

pub mod generate;
pub mod pricing;
pub mod render;
pub mod scripted;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{build_eval_set, generate_query, read_eval_set, write_eval_set, EvalSetRecord, QueryGenConfig};
pub use pricing::{applicable_rules, compute_price, Amount, Applicability, PriceBreakdown};
pub use render::{parse_rendered_query, render_query};

/// The rule list as it appears in the context corpus.
pub const RULES_TEXT: &str = include_str!("../../data/retail_rules.txt");

#[derive(Debug, Error, PartialEq)]
pub enum RetailError {
    #[error("invalid query generation config: {0}")]
    Config(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("cannot parse query text: {0}")]
    Parse(String),
}

macro_rules! closed_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $label),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

closed_enum!(CustomerType {
    Student => "student",
    Senior => "senior",
    Veteran => "veteran",
    Employee => "employee",
    Teacher => "teacher",
    Regular => "regular",
});

closed_enum!(ProductCategory {
    Electronics => "electronics",
    Clothing => "clothing",
    Books => "books",
    Food => "food",
    Home => "home",
    Sports => "sports",
    Beauty => "beauty",
    Health => "health",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PromoCode {
    #[serde(rename = "SAVE20")]
    Save20,
    #[serde(rename = "WELCOME10")]
    Welcome10,
    #[serde(rename = "STUDENT15")]
    Student15,
    #[serde(rename = "HOLIDAY30")]
    Holiday30,
    #[serde(rename = "NEWBIE5")]
    Newbie5,
    #[serde(rename = "TEACHER10")]
    Teacher10,
    #[serde(rename = "BULK10")]
    Bulk10,
}

impl PromoCode {
    pub const ALL: &'static [PromoCode] = &[
        PromoCode::Save20,
        PromoCode::Welcome10,
        PromoCode::Student15,
        PromoCode::Holiday30,
        PromoCode::Newbie5,
        PromoCode::Teacher10,
        PromoCode::Bulk10,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromoCode::Save20 => "SAVE20",
            PromoCode::Welcome10 => "WELCOME10",
            PromoCode::Student15 => "STUDENT15",
            PromoCode::Holiday30 => "HOLIDAY30",
            PromoCode::Newbie5 => "NEWBIE5",
            PromoCode::Teacher10 => "TEACHER10",
            PromoCode::Bulk10 => "BULK10",
        }
    }
}

impl fmt::Display for PromoCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CustomerType {
    type Err = RetailError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_lowercase();
        if s == "senior citizen" {
            return Ok(CustomerType::Senior);
        }
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| RetailError::Parse(format!("unknown customer type {s:?}")))
    }
}

impl FromStr for ProductCategory {
    type Err = RetailError;

    /// Accepts the canonical names plus the alias `apparel` for clothing.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_lowercase();
        if s == "apparel" {
            return Ok(ProductCategory::Clothing);
        }
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| RetailError::Parse(format!("unknown category {s:?}")))
    }
}

impl FromStr for PromoCode {
    type Err = RetailError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| RetailError::Parse(format!("unknown promo code {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CartItem {
    pub name: String,
    pub category: ProductCategory,
    pub unit_price_cents: i64,
    pub quantity: u32,
}

impl CartItem {
    pub fn line_total(&self) -> i64 {
        self.unit_price_cents * i64::from(self.quantity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetailQuery {
    pub customer: CustomerType,
    pub membership_years: u32,
    pub cart: Vec<CartItem>,
    pub promo: Option<PromoCode>,
}

pub const MAX_CART_ITEMS: usize = 5;

impl RetailQuery {
    pub fn validate(&self) -> Result<(), RetailError> {
        if self.cart.is_empty() || self.cart.len() > MAX_CART_ITEMS {
            return Err(RetailError::InvalidQuery(format!(
                "cart has {} items, expected 1..=5",
                self.cart.len()
            )));
        }
        for item in &self.cart {
            if item.unit_price_cents < 0 {
                return Err(RetailError::InvalidQuery(format!("{}: negative price", item.name)));
            }
            if item.quantity == 0 {
                return Err(RetailError::InvalidQuery(format!("{}: zero quantity", item.name)));
            }
            if item.name.trim().is_empty() || item.name.contains(['(', ')', ':', '\n']) {
                return Err(RetailError::InvalidQuery(format!("bad item name {:?}", item.name)));
            }
        }
        Ok(())
    }

    pub fn subtotal(&self) -> i64 {
        self.cart.iter().map(CartItem::line_total).sum()
    }

    /// Pre-discount subtotal of one category; 0 when absent.
    pub fn category_subtotal(&self, category: ProductCategory) -> i64 {
        self.cart
            .iter()
            .filter(|i| i.category == category)
            .map(CartItem::line_total)
            .sum()
    }

    pub fn has_category(&self, category: ProductCategory) -> bool {
        self.cart.iter().any(|i| i.category == category)
    }
}

/// Conjunction of predicates over the original, pre-discount query.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub customer: Option<CustomerType>,
    pub promo: Option<PromoCode>,
    pub min_membership_years: Option<u32>,
    pub has_category: Option<ProductCategory>,
    /// Category subtotal threshold, inclusive, in cents.
    pub min_category_spend: Option<(ProductCategory, i64)>,
    /// Cart subtotal threshold, inclusive, in cents.
    pub min_total_spend: Option<i64>,
}

impl Condition {
    pub fn holds(&self, q: &RetailQuery) -> bool {
        self.customer.is_none_or(|c| q.customer == c)
            && self.promo.is_none_or(|p| q.promo == Some(p))
            && self.min_membership_years.is_none_or(|y| q.membership_years >= y)
            && self.has_category.is_none_or(|c| q.has_category(c))
            && self
                .min_category_spend
                .is_none_or(|(c, t)| q.has_category(c) && q.category_subtotal(c) >= t)
            && self.min_total_spend.is_none_or(|t| q.subtotal() >= t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    CategoryPercent(ProductCategory, u32),
    TotalPercent(u32),
    /// Amount in cents.
    Fixed(i64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscountRule {
    pub rule_id: usize,
    pub text: String,
    pub condition: Condition,
    pub action: Action,
}

fn rule(rule_id: usize, text: &str, condition: Condition, action: Action) -> DiscountRule {
    DiscountRule {
        rule_id,
        text: text.to_string(),
        condition,
        action,
    }
}

/// The 30 canonical rules, ids 0..29 in corpus order.
pub fn canonical_rules() -> Vec<DiscountRule> {
    use Action::*;
    use CustomerType as C;
    use ProductCategory as P;

    let texts: Vec<&str> = RULES_TEXT
        .lines()
        .filter_map(|l| l.strip_prefix("- "))
        .collect();
    assert_eq!(texts.len(), 30, "rules data file must list 30 rules");

    let who_total = |c| Condition {
        customer: Some(c),
        min_total_spend: Some(5_000),
        ..Default::default()
    };
    let who_has = |c, cat| Condition {
        customer: Some(c),
        has_category: Some(cat),
        ..Default::default()
    };
    let promo = |p, min_total| Condition {
        promo: Some(p),
        min_total_spend: min_total,
        ..Default::default()
    };
    let who_promo = |c, p| Condition {
        customer: Some(c),
        promo: Some(p),
        ..Default::default()
    };
    let total = |t| Condition {
        min_total_spend: Some(t),
        ..Default::default()
    };
    let cat_spend = |cat, t| Condition {
        min_category_spend: Some((cat, t)),
        ..Default::default()
    };
    let member = |y| Condition {
        min_membership_years: Some(y),
        ..Default::default()
    };

    let spec: Vec<(Condition, Action)> = vec![
        (who_total(C::Student), TotalPercent(10)),
        (who_total(C::Senior), TotalPercent(15)),
        (who_total(C::Employee), TotalPercent(20)),
        (who_total(C::Teacher), TotalPercent(10)),
        (who_has(C::Student, P::Electronics), CategoryPercent(P::Electronics, 15)),
        (who_has(C::Student, P::Books), CategoryPercent(P::Books, 15)),
        (who_has(C::Senior, P::Food), CategoryPercent(P::Food, 20)),
        (who_has(C::Veteran, P::Electronics), CategoryPercent(P::Electronics, 5)),
        (who_has(C::Employee, P::Home), CategoryPercent(P::Home, 25)),
        (who_has(C::Teacher, P::Books), CategoryPercent(P::Books, 15)),
        (promo(PromoCode::Save20, Some(10_000)), TotalPercent(20)),
        (promo(PromoCode::Welcome10, None), Fixed(1_000)),
        (who_promo(C::Student, PromoCode::Student15), TotalPercent(15)),
        (promo(PromoCode::Holiday30, Some(15_000)), TotalPercent(30)),
        (promo(PromoCode::Newbie5, None), Fixed(500)),
        (who_promo(C::Teacher, PromoCode::Teacher10), TotalPercent(10)),
        (promo(PromoCode::Bulk10, Some(20_000)), TotalPercent(10)),
        (total(15_000), TotalPercent(5)),
        (total(20_000), TotalPercent(10)),
        (cat_spend(P::Electronics, 30_000), CategoryPercent(P::Electronics, 10)),
        (cat_spend(P::Clothing, 7_500), CategoryPercent(P::Clothing, 10)),
        (cat_spend(P::Books, 4_500), CategoryPercent(P::Books, 10)),
        (cat_spend(P::Food, 3_000), CategoryPercent(P::Food, 10)),
        (cat_spend(P::Home, 6_000), CategoryPercent(P::Home, 10)),
        (cat_spend(P::Sports, 9_000), CategoryPercent(P::Sports, 10)),
        (cat_spend(P::Beauty, 5_200), CategoryPercent(P::Beauty, 10)),
        (cat_spend(P::Health, 7_500), CategoryPercent(P::Health, 10)),
        (member(1), TotalPercent(5)),
        (member(3), TotalPercent(10)),
        (member(5), TotalPercent(15)),
    ];
    spec.into_iter()
        .zip(texts)
        .enumerate()
        .map(|(id, ((cond, action), text))| rule(id, text, cond, action))
        .collect()
}

/// Finds the canonical rule whose text matches `text`, ignoring case,
/// surrounding whitespace and a leading bullet.
pub fn rule_by_text<'a>(rules: &'a [DiscountRule], text: &str) -> Option<&'a DiscountRule> {
    let norm = |s: &str| {
        s.trim()
            .trim_start_matches('-')
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase()
    };
    let wanted = norm(text);
    rules.iter().find(|r| norm(&r.text) == wanted)
}

/// Correct iff the extracted final answer is within one cent of the truth.
/// Unparseable output is incorrect.
pub fn grade(model_output: &str, truth: &PriceBreakdown) -> bool {
    crate::eval::extract_final_answer(model_output)
        .is_some_and(|p| (p - truth.final_price).abs() <= crate::eval::RETAIL_TOLERANCE_CENTS)
}

/// Formats cents as `123.45`.
pub fn format_cents(cents: i64) -> String {
    let sign = if cents < 0 { "-" } else { "" };
    let c = cents.unsigned_abs();
    format!("{sign}{}.{:02}", c / 100, c % 100)
}
