//! Exact three-stage pricing.
//!
//! All conditions are evaluated on the original, pre-discount subtotals. Only
//! the application of discounts uses the running total. Every rule percent is
//! an integer, so stage 1 results are exact in hundredths of a cent and stage 2
//! results are exact in ten-thousandths of a cent; [`Amount`] uses the latter
//! scale and no intermediate value is ever rounded.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Action, DiscountRule, ProductCategory, RetailQuery};

/// Money in units of 1/10000 of a cent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Amount(pub i128);

impl Amount {
    pub const PER_CENT: i128 = 10_000;

    pub fn from_cents(cents: i64) -> Self {
        Amount(i128::from(cents) * Self::PER_CENT)
    }

    /// Rounds half-up to whole cents.
    pub fn round_to_cents(self) -> i64 {
        let half = Self::PER_CENT / 2;
        let cents = if self.0 >= 0 {
            (self.0 + half) / Self::PER_CENT
        } else {
            -((-self.0 + half - 1) / Self::PER_CENT)
        };
        i64::try_from(cents).expect("price fits in i64 cents")
    }

    /// Applies a whole-number percent discount. Exact as long as the value is
    /// a multiple of 100 units, which holds for at most two applications to a
    /// whole-cent amount.
    fn discounted(self, percent: u32) -> Self {
        let scaled = self.0 * i128::from(100 - percent.min(100));
        debug_assert_eq!(scaled % 100, 0, "inexact percent application");
        Amount(scaled / 100)
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let v = self.0.unsigned_abs();
        let per_dollar = (Self::PER_CENT * 100) as u128;
        write!(f, "{sign}{}.{:06}", v / per_dollar, v % per_dollar)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryStage {
    /// Chosen percent, 0 when no category rule applied.
    pub percent: u32,
    pub rule_id: Option<usize>,
    pub original_cents: i64,
    pub after: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceBreakdown {
    pub original_subtotal: i64,
    pub per_category_stage1: BTreeMap<ProductCategory, CategoryStage>,
    pub after_stage1: Amount,
    pub stage2_percent: u32,
    pub stage2_rule: Option<usize>,
    pub after_stage2: Amount,
    /// Sum of all applicable fixed discounts, in cents.
    pub fixed_total: i64,
    pub fixed_rules: Vec<usize>,
    pub final_exact: Amount,
    /// Final price in cents, rounded half-up.
    pub final_price: i64,
}

impl PriceBreakdown {
    /// Rule ids that determined the price: per-category winners, the stage 2
    /// winner and every fixed rule.
    pub fn winners(&self) -> BTreeSet<usize> {
        self.per_category_stage1
            .values()
            .filter_map(|s| s.rule_id)
            .chain(self.stage2_rule)
            .chain(self.fixed_rules.iter().copied())
            .collect()
    }
}

/// Highest percent among `(rule_id, percent)` candidates; ties go to the lower id.
fn best(candidates: impl Iterator<Item = (usize, u32)>) -> Option<(usize, u32)> {
    candidates.fold(None, |acc, (id, p)| match acc {
        Some((best_id, best_p)) if best_p > p || (best_p == p && best_id < id) => acc,
        _ => Some((id, p)),
    })
}

pub fn compute_price(query: &RetailQuery, rules: &[DiscountRule]) -> PriceBreakdown {
    let firing: Vec<&DiscountRule> = rules.iter().filter(|r| r.condition.holds(query)).collect();

    let mut per_category = BTreeMap::new();
    for item in &query.cart {
        per_category.entry(item.category).or_insert(0i64);
        *per_category.get_mut(&item.category).expect("inserted") += item.line_total();
    }

    let mut stage1 = BTreeMap::new();
    let mut after_stage1 = Amount(0);
    for (&category, &original) in &per_category {
        let winner = best(firing.iter().filter_map(|r| match r.action {
            Action::CategoryPercent(c, p) if c == category => Some((r.rule_id, p)),
            _ => None,
        }));
        let percent = winner.map_or(0, |(_, p)| p);
        let after = Amount::from_cents(original).discounted(percent);
        after_stage1.0 += after.0;
        stage1.insert(
            category,
            CategoryStage {
                percent,
                rule_id: winner.map(|(id, _)| id),
                original_cents: original,
                after,
            },
        );
    }

    let total_winner = best(firing.iter().filter_map(|r| match r.action {
        Action::TotalPercent(p) => Some((r.rule_id, p)),
        _ => None,
    }));
    let stage2_percent = total_winner.map_or(0, |(_, p)| p);
    let after_stage2 = after_stage1.discounted(stage2_percent);

    let fixed: Vec<(usize, i64)> = firing
        .iter()
        .filter_map(|r| match r.action {
            Action::Fixed(c) => Some((r.rule_id, c)),
            _ => None,
        })
        .collect();
    let fixed_total: i64 = fixed.iter().map(|(_, c)| c).sum();
    let final_exact = Amount((after_stage2.0 - Amount::from_cents(fixed_total).0).max(0));

    PriceBreakdown {
        original_subtotal: query.subtotal(),
        per_category_stage1: stage1,
        after_stage1,
        stage2_percent,
        stage2_rule: total_winner.map(|(id, _)| id),
        after_stage2,
        fixed_total,
        fixed_rules: fixed.iter().map(|(id, _)| *id).collect(),
        final_exact,
        final_price: final_exact.round_to_cents(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Applicability {
    /// Rules that changed the price: stage winners and every firing fixed rule.
    #[default]
    Winners,
    /// Every rule whose condition holds.
    ConditionHolds,
}

pub fn applicable_rules(query: &RetailQuery, rules: &[DiscountRule], mode: Applicability) -> BTreeSet<usize> {
    match mode {
        Applicability::ConditionHolds => rules
            .iter()
            .filter(|r| r.condition.holds(query))
            .map(|r| r.rule_id)
            .collect(),
        Applicability::Winners => compute_price(query, rules).winners(),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::retail::{canonical_rules, CartItem, CustomerType, PromoCode};

    fn item(name: &str, category: ProductCategory, dollars: i64, qty: u32) -> CartItem {
        CartItem {
            name: name.into(),
            category,
            unit_price_cents: dollars * 100,
            quantity: qty,
        }
    }

    pub(crate) fn senior_query() -> RetailQuery {
        RetailQuery {
            customer: CustomerType::Senior,
            membership_years: 4,
            cart: vec![
                item("Shoes", ProductCategory::Clothing, 85, 2),
                item("Jacket", ProductCategory::Clothing, 60, 1),
                item("Coffee Maker", ProductCategory::Home, 45, 1),
            ],
            promo: None,
        }
    }

    #[test]
    fn no_rule_fires() {
        let q = RetailQuery {
            customer: CustomerType::Regular,
            membership_years: 0,
            cart: vec![item("Pasta", ProductCategory::Food, 10, 1)],
            promo: None,
        };
        let rules = canonical_rules();
        let b = compute_price(&q, &rules);
        assert_eq!(b.final_price, 1000);
        assert!(applicable_rules(&q, &rules, Applicability::Winners).is_empty());
        assert!(applicable_rules(&q, &rules, Applicability::ConditionHolds).is_empty());
    }

    #[test]
    fn senior_example_trace() {
        let rules = canonical_rules();
        let b = compute_price(&senior_query(), &rules);
        let clothing = &b.per_category_stage1[&ProductCategory::Clothing];
        assert_eq!((clothing.percent, clothing.rule_id), (10, Some(20)));
        assert_eq!(clothing.after, Amount::from_cents(20_700));
        assert_eq!(b.per_category_stage1[&ProductCategory::Home].percent, 0);
        assert_eq!(b.after_stage1, Amount::from_cents(25_200));
        assert_eq!((b.stage2_percent, b.stage2_rule), (15, Some(1)));
        assert_eq!(b.after_stage2, Amount::from_cents(21_420));
        assert_eq!(b.fixed_total, 0);
        assert_eq!(b.final_price, 21_420);
        assert_eq!(
            applicable_rules(&senior_query(), &rules, Applicability::Winners),
            BTreeSet::from([1, 20])
        );
        assert_eq!(
            applicable_rules(&senior_query(), &rules, Applicability::ConditionHolds),
            BTreeSet::from([1, 17, 18, 20, 27, 28])
        );
    }

    #[test]
    fn student_welcome_trace() {
        let q = RetailQuery {
            customer: CustomerType::Student,
            membership_years: 0,
            cart: vec![item("Novel", ProductCategory::Books, 45, 1)],
            promo: Some(PromoCode::Welcome10),
        };
        let b = compute_price(&q, &canonical_rules());
        assert_eq!(b.per_category_stage1[&ProductCategory::Books].percent, 15);
        assert_eq!(b.after_stage1, Amount::from_cents(3_825));
        assert_eq!(b.stage2_percent, 0);
        assert_eq!(b.fixed_total, 1_000);
        assert_eq!(b.final_price, 2_825);
    }

    #[test]
    fn fixed_discounts_floor_at_zero() {
        let q = RetailQuery {
            customer: CustomerType::Regular,
            membership_years: 0,
            cart: vec![item("Tea Set", ProductCategory::Food, 3, 1)],
            promo: Some(PromoCode::Welcome10),
        };
        let b = compute_price(&q, &canonical_rules());
        assert_eq!(b.final_price, 0);
        assert_eq!(b.final_exact, Amount(0));
    }

    #[test]
    fn ties_go_to_lower_rule_id() {
        // employee (rule 2, 20%) and SAVE20 (rule 10, 20%) tie in stage 2
        let q = RetailQuery {
            customer: CustomerType::Employee,
            membership_years: 0,
            cart: vec![item("Laptop", ProductCategory::Electronics, 120, 1)],
            promo: Some(PromoCode::Save20),
        };
        let b = compute_price(&q, &canonical_rules());
        assert_eq!((b.stage2_percent, b.stage2_rule), (20, Some(2)));
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(Amount(5_000).round_to_cents(), 1);
        assert_eq!(Amount(4_999).round_to_cents(), 0);
        assert_eq!(Amount(15_000).round_to_cents(), 2);
        // 0.85 * 0.85 * $0.01 = $0.007225 -> $0.01
        let q = RetailQuery {
            customer: CustomerType::Senior,
            membership_years: 0,
            cart: vec![item("x", ProductCategory::Food, 0, 1)],
            promo: None,
        };
        assert_eq!(compute_price(&q, &canonical_rules()).final_price, 0);
    }

    #[test]
    fn amount_display() {
        assert_eq!(Amount::from_cents(21_420).to_string(), "214.200000");
        assert_eq!(Amount(72_250).to_string(), "0.072250");
    }
}
