//! Rule-aware scripted backend for the retail corpus.
//!
//! Query generation builds a cart that satisfies the selected rules where it
//! can, verification answers with the exact condition predicate, and rollouts
//! price the cart using only the rules present in the prompt's context block.

use rand::seq::SliceRandom;
use rand::Rng;

use super::generate::{catalog, sample_item, sample_query};
use super::{
    canonical_rules, compute_price, format_cents, parse_rendered_query, render_query, rule_by_text,
    Action, CartItem, DiscountRule, QueryGenConfig, RetailQuery, MAX_CART_ITEMS,
};
use crate::backend::scripted::{line_decomposition, random_seed_reply, request_rng, RequestCounter};
use crate::backend::{BackendError, Generation, GenerationBackend, GenerationRequest, Role};
use crate::prompts::{self, PromptKind};

pub struct RetailBackend {
    role: Role,
    rules: Vec<DiscountRule>,
    gen_config: QueryGenConfig,
    counter: RequestCounter,
}

impl RetailBackend {
    pub fn new(role: Role) -> Self {
        Self {
            role,
            rules: canonical_rules(),
            gen_config: QueryGenConfig::default(),
            counter: RequestCounter::default(),
        }
    }

    pub fn counter(&self) -> RequestCounter {
        self.counter.clone()
    }

    /// Whether `unit` is a rule whose condition holds for the rendered `query`.
    fn applies(&self, query: &str, unit: &str) -> bool {
        match (parse_rendered_query(query), rule_by_text(&self.rules, unit)) {
            (Ok(q), Some(r)) => r.condition.holds(&q),
            _ => false,
        }
    }

    fn query_for(&self, selected: &[String], rng: &mut rand_chacha::ChaCha8Rng) -> RetailQuery {
        let mut q = sample_query(rng, &self.gen_config);
        let chosen: Vec<&DiscountRule> = selected
            .iter()
            .filter_map(|t| rule_by_text(&self.rules, t))
            .collect();
        for r in &chosen {
            let c = &r.condition;
            if let Some(customer) = c.customer {
                q.customer = customer;
            }
            if let Some(p) = c.promo {
                q.promo = Some(p);
            }
            if let Some(y) = c.min_membership_years {
                q.membership_years = q.membership_years.max(y);
            }
            let needed = c
                .has_category
                .map(|cat| (cat, 0))
                .or(c.min_category_spend)
                .or(match r.action {
                    Action::CategoryPercent(cat, _) => Some((cat, 0)),
                    _ => None,
                });
            if let Some((cat, threshold)) = needed {
                let idx = match q.cart.iter().position(|i| i.category == cat) {
                    Some(i) => i,
                    None => {
                        let item = CartItem {
                            name: catalog(cat).choose(rng).expect("non-empty").to_string(),
                            category: cat,
                            ..sample_item(rng, &self.gen_config)
                        };
                        if q.cart.len() < MAX_CART_ITEMS {
                            q.cart.push(item);
                            q.cart.len() - 1
                        } else {
                            let i = rng.gen_range(0..q.cart.len());
                            q.cart[i] = item;
                            i
                        }
                    }
                };
                let deficit = threshold - q.category_subtotal(cat);
                if deficit > 0 {
                    let item = &mut q.cart[idx];
                    let per_unit = (deficit + i64::from(item.quantity) - 1) / i64::from(item.quantity);
                    item.unit_price_cents += per_unit + rng.gen_range(0..2_000);
                }
            }
            if let Some(t) = c.min_total_spend {
                let deficit = t - q.subtotal();
                if deficit > 0 {
                    let item = &mut q.cart[0];
                    let per_unit = (deficit + i64::from(item.quantity) - 1) / i64::from(item.quantity);
                    item.unit_price_cents += per_unit + rng.gen_range(0..2_000);
                }
            }
        }
        q
    }

    fn reply(&self, request: &GenerationRequest) -> String {
        let prompt = &request.prompt;
        let mut rng = request_rng(request);
        match PromptKind::detect(prompt) {
            PromptKind::Decomposition => {
                line_decomposition(prompts::parse_decomposition(prompt).unwrap_or(""))
            }
            PromptKind::SeedSelection => {
                random_seed_reply(&prompts::parse_seed_selection(prompt), &mut rng)
            }
            PromptKind::QueryGeneration => {
                let selected = prompts::parse_query_generation(prompt);
                render_query(&self.query_for(&selected, &mut rng))
            }
            PromptKind::VerifyUnit => match prompts::parse_verify_unit(prompt) {
                Some((q, u)) if self.applies(&q, &u) => "Yes".into(),
                _ => "No".into(),
            },
            PromptKind::VerifyBatch => match prompts::parse_verify_batch(prompt) {
                Some((q, units)) => {
                    let ids: Vec<String> = units
                        .iter()
                        .filter(|(_, u)| self.applies(&q, u))
                        .map(|(id, _)| id.to_string())
                        .collect();
                    if ids.is_empty() { "none".into() } else { ids.join(", ") }
                }
                None => "none".into(),
            },
            PromptKind::Rollout => {
                let (query, context) = prompts::parse_rollout(prompt);
                let Ok(q) = parse_rendered_query(&query) else {
                    return "I cannot determine the price.".into();
                };
                let visible: Vec<DiscountRule> = context
                    .iter()
                    .filter_map(|t| rule_by_text(&self.rules, t).cloned())
                    .collect();
                let b = compute_price(&q, &visible);
                format!(
                    "Subtotal: ${}\nAfter category discounts: ${:.2}\nAfter total discount ({}%): ${:.2}\nFixed discounts: ${}\nFinal price: ${}",
                    format_cents(b.original_subtotal),
                    b.after_stage1.0 as f64 / 1_000_000.0,
                    b.stage2_percent,
                    b.after_stage2.0 as f64 / 1_000_000.0,
                    format_cents(b.fixed_total),
                    format_cents(b.final_price),
                )
            }
        }
    }
}

impl GenerationBackend for RetailBackend {
    fn role(&self) -> Role {
        self.role
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Generation, BackendError> {
        self.counter.bump();
        Ok(Generation::text(self.reply(request)))
    }

    fn name(&self) -> String {
        format!("retail-scripted-{}", self.role.as_str())
    }
}
