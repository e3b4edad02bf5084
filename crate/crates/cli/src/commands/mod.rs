pub mod analyze;
pub mod product_form;
pub mod routing;
pub mod simulate;
pub mod statements;
pub mod sweep;
pub mod verify_bar;

use gjn_core::decimal::dec;
use gjn_core::stats::BatchSummary;

/// `(estimate, half_width)` as decimal strings.
pub(crate) fn est(s: &BatchSummary) -> [String; 2] {
    [dec(s.mean), dec(s.half_width)]
}
