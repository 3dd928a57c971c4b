use crate::uet::{self, Decimal, ExprNode, ExprView, Operator, TargetSymbol};

use super::{CorpusError, Slot};

const MATCH_TOL: f64 = 1e-9;

fn same_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= MATCH_TOL * a.abs().max(b.abs()).max(1.0)
}

struct SlotMatcher<'a> {
    slots: &'a [Slot],
    used: Vec<bool>,
    constants: &'a [Decimal],
}

impl SlotMatcher<'_> {
    /// Lowest unused slot with this value, else the lowest slot with it.
    fn take(&mut self, value: f64, fractions_only: bool) -> Option<usize> {
        let candidates: Vec<usize> = self
            .slots
            .iter()
            .filter(|s| !fractions_only || s.is_fraction)
            .filter(|s| same_value(s.value.to_f64(), value))
            .map(|s| s.index)
            .collect();
        let pick = candidates
            .iter()
            .copied()
            .find(|&i| !self.used[i])
            .or_else(|| candidates.first().copied())?;
        self.used[pick] = true;
        Some(pick)
    }

    fn constant(&self, d: &Decimal) -> Decimal {
        let v = d.to_f64();
        self.constants
            .iter()
            .find(|c| same_value(c.to_f64(), v))
            .cloned()
            .unwrap_or_else(|| d.clone())
    }

    fn rewrite(&mut self, node: &ExprNode) -> ExprNode {
        match node.view() {
            ExprView::Leaf(TargetSymbol::Const(d)) => match self.take(d.to_f64(), false) {
                Some(i) => ExprNode::slot(i),
                None => ExprNode::constant(self.constant(d)),
            },
            ExprView::Leaf(_) => node.clone(),
            ExprView::Binary(op, l, r) => {
                if op == Operator::Div {
                    if let (ExprView::Leaf(TargetSymbol::Const(a)), ExprView::Leaf(TargetSymbol::Const(b))) =
                        (l.view(), r.view())
                    {
                        let value = a.to_f64() / b.to_f64();
                        if value.is_finite() {
                            if let Some(i) = self.take(value, true) {
                                return ExprNode::slot(i);
                            }
                        }
                    }
                }
                let left = self.rewrite(l);
                let right = self.rewrite(r);
                ExprNode::binary(op, left, right)
            }
        }
    }
}

/// Converts gold infix equations into a prefix sequence over number slots.
///
/// Literals equal to a slot value become that slot; when several slots hold
/// the value the lowest unused one is taken first. Remaining literals become
/// constants, canonicalised to the constant list entry of equal value.
pub fn map_equation(
    equations: &[String],
    slots: &[Slot],
    constants: &[Decimal],
) -> Result<Vec<TargetSymbol>, CorpusError> {
    let joined = equations
        .iter()
        .map(|e| e.trim().trim_end_matches(';'))
        .filter(|e| !e.is_empty())
        .collect::<Vec<_>>()
        .join(";");
    let tree = uet::parse_infix(&joined, &[])?;
    let mut matcher = SlotMatcher {
        slots,
        used: vec![false; slots.len()],
        constants,
    };
    let mapped = matcher.rewrite(&tree);
    Ok(uet::to_prefix(&mapped))
}
