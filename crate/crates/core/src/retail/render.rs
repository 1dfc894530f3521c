//! Query text rendering and its inverse.

use std::sync::OnceLock;

use regex::Regex;

use super::{format_cents, CartItem, RetailError, RetailQuery};

const HEADER: &str =
    "Calculate the final price for the following customer purchase after applying all applicable discount rules.";

const INSTRUCTIONS: &str = "IMPORTANT: Apply discounts in this exact order to the running total:
1. Category-specific percentage discounts (apply only the highest discount per category to each category's subtotal)
2. Total purchase percentage discounts (apply only the highest total discount to the remaining amount after step 1)
3. Fixed amount discounts (subtract from the remaining amount after step 2, sum all applicable fixed discounts)

Note: Each discount applies to the current running total, not the original price.";

/// Renders the query text shown to models. Categories use canonical names.
pub fn render_query(query: &RetailQuery) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push_str("\n\nCustomer Profile:\n");
    out.push_str(&format!("- Type: {}\n", query.customer));
    out.push_str(&format!("- Membership years: {}\n", query.membership_years));
    out.push_str("\nShopping Cart:\n");
    for item in &query.cart {
        out.push_str(&format!(
            "- {} ({}): ${} x {}\n",
            item.name,
            item.category,
            format_cents(item.unit_price_cents),
            item.quantity
        ));
    }
    out.push_str(&format!(
        "\nPromo code: {}\n\n",
        query.promo.map_or("None", |p| p.as_str())
    ));
    out.push_str(INSTRUCTIONS);
    out
}

fn item_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^- (.+) \(([A-Za-z ]+)\): \$(\d+)\.(\d{2}) x (\d+)$").expect("valid regex")
    })
}

/// Parses text in the rendered layout back into a query.
///
/// Accepts the `apparel` category alias. Lines outside the profile, cart and
/// promo fields are ignored, so surrounding prompt text is tolerated.
pub fn parse_rendered_query(text: &str) -> Result<RetailQuery, RetailError> {
    let mut customer = None;
    let mut years = None;
    let mut promo = None;
    let mut cart = Vec::new();
    let mut in_cart = false;
    for line in text.lines() {
        let line = line.trim_end();
        if let Some(t) = line.strip_prefix("- Type: ") {
            customer = Some(t.parse()?);
        } else if let Some(y) = line.strip_prefix("- Membership years: ") {
            years = Some(
                y.trim()
                    .parse::<u32>()
                    .map_err(|e| RetailError::Parse(format!("membership years: {e}")))?,
            );
        } else if line == "Shopping Cart:" {
            in_cart = true;
        } else if let Some(p) = line.strip_prefix("Promo code: ") {
            in_cart = false;
            promo = Some(match p.trim() {
                "None" => None,
                code => Some(code.parse()?),
            });
        } else if in_cart {
            if line.is_empty() {
                in_cart = false;
                continue;
            }
            let caps = item_line()
                .captures(line)
                .ok_or_else(|| RetailError::Parse(format!("bad cart line {line:?}")))?;
            let num = |i: usize| caps[i].parse::<i64>().map_err(|e| RetailError::Parse(e.to_string()));
            cart.push(CartItem {
                name: caps[1].to_string(),
                category: caps[2].parse()?,
                unit_price_cents: num(3)? * 100 + num(4)?,
                quantity: u32::try_from(num(5)?).map_err(|e| RetailError::Parse(e.to_string()))?,
            });
        }
    }
    let query = RetailQuery {
        customer: customer.ok_or_else(|| RetailError::Parse("missing customer type".into()))?,
        membership_years: years.ok_or_else(|| RetailError::Parse("missing membership years".into()))?,
        cart,
        promo: promo.ok_or_else(|| RetailError::Parse("missing promo code line".into()))?,
    };
    query.validate()?;
    Ok(query)
}
