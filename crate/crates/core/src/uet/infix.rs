use super::{Decimal, ExprNode, ExprView, Operator, TargetSymbol, UetError, Unknown};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Op(Operator),
    Open,
    Close,
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, UetError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out: Vec<(Tok, usize)> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, ch) = chars[i];
        let tok = match ch {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                    i += 1;
                }
                if i < chars.len() && chars[i].1 == '%' {
                    i += 1;
                }
                let lit: String = chars[start..i].iter().map(|(_, c)| c).collect();
                push_implicit_mul(&mut out, pos);
                out.push((Tok::Num(lit), pos));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                let name: String = chars[start..i].iter().map(|(_, c)| c).collect();
                push_implicit_mul(&mut out, pos);
                out.push((Tok::Ident(name), pos));
                continue;
            }
            '(' | '（' | '[' => {
                push_implicit_mul(&mut out, pos);
                Tok::Open
            }
            ')' | '）' | ']' => Tok::Close,
            '×' => Tok::Op(Operator::Mul),
            '÷' => Tok::Op(Operator::Div),
            '−' => Tok::Op(Operator::Sub),
            '+' | '-' | '*' | '/' | '^' | '=' | ';' => {
                Tok::Op(Operator::from_symbol(&ch.to_string()).expect("operator char"))
            }
            other => {
                return Err(UetError::MalformedToken {
                    token: other.to_string(),
                    pos,
                })
            }
        };
        out.push((tok, pos));
        i += 1;
    }
    Ok(out)
}

/// `2x`, `2(x+1)` and `)(` read as multiplication.
fn push_implicit_mul(out: &mut Vec<(Tok, usize)>, pos: usize) {
    if let Some((prev, _)) = out.last() {
        if matches!(prev, Tok::Num(_) | Tok::Ident(_) | Tok::Close) {
            out.push((Tok::Op(Operator::Mul), pos));
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    slot_count: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn unexpected(&self) -> UetError {
        match self.toks.get(self.pos) {
            Some((Tok::Close, _)) => UetError::UnbalancedParens,
            Some((t, p)) => UetError::MalformedToken {
                token: match t {
                    Tok::Num(s) | Tok::Ident(s) => s.clone(),
                    Tok::Op(op) => op.symbol().to_string(),
                    Tok::Open => "(".into(),
                    Tok::Close => ")".into(),
                },
                pos: *p,
            },
            None => UetError::UnexpectedEnd,
        }
    }

    fn expr(&mut self, min_prec: u8) -> Result<ExprNode, UetError> {
        let mut lhs = self.operand()?;
        while let Some(Tok::Op(op)) = self.peek() {
            let op = *op;
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.expr(prec + 1)?;
            lhs = ExprNode::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn operand(&mut self) -> Result<ExprNode, UetError> {
        let Some((tok, pos)) = self.toks.get(self.pos).cloned() else {
            return Err(UetError::UnexpectedEnd);
        };
        match tok {
            Tok::Open => {
                self.pos += 1;
                let inner = self.expr(0)?;
                match self.peek() {
                    Some(Tok::Close) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    None => Err(UetError::UnbalancedParens),
                    Some(_) => Err(self.unexpected()),
                }
            }
            Tok::Num(lit) => {
                self.pos += 1;
                Ok(ExprNode::constant(Decimal::parse(&lit)?))
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if let Some(u) = Unknown::from_name(&name) {
                    return Ok(ExprNode::unknown(u));
                }
                if let Some(idx) = super::parse_slot_name(&name) {
                    if idx >= self.slot_count {
                        return Err(UetError::SlotOutOfRange {
                            index: idx,
                            count: self.slot_count,
                        });
                    }
                    return Ok(ExprNode::slot(idx));
                }
                Err(UetError::MalformedToken { token: name, pos })
            }
            Tok::Op(Operator::Sub) => {
                // negative literal
                if let Some((Tok::Num(lit), _)) = self.toks.get(self.pos + 1).cloned() {
                    self.pos += 2;
                    return Ok(ExprNode::constant(Decimal::parse(&format!("-{lit}"))?));
                }
                Err(self.unexpected())
            }
            Tok::Op(Operator::Add) => {
                self.pos += 1;
                self.operand()
            }
            _ => Err(self.unexpected()),
        }
    }
}

/// Parses an infix equation (or `;`-separated equation set) into a tree.
///
/// Slot names `n0..` must index into `slots`; numeric literals become
/// constants.
pub fn parse_infix(equation: &str, slots: &[Decimal]) -> Result<ExprNode, UetError> {
    let trimmed = equation
        .trim()
        .trim_end_matches(|c: char| c == ';' || c.is_whitespace());
    let toks = tokenize(trimmed)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        slot_count: slots.len(),
    };
    let tree = parser.expr(0)?;
    if parser.pos != parser.toks.len() {
        return Err(parser.unexpected());
    }
    for eq in tree.equations() {
        if eq.operator() != Some(Operator::Eq) {
            return Err(UetError::MissingEquals(render(eq, &|s| Ok(s.to_string()))?));
        }
    }
    if !tree.is_valid_uet() {
        return Err(UetError::NotAnEquation);
    }
    Ok(tree)
}

fn render(node: &ExprNode, leaf: &dyn Fn(&TargetSymbol) -> Result<String, UetError>) -> Result<String, UetError> {
    match node.view() {
        ExprView::Leaf(sym) => leaf(sym),
        ExprView::Binary(op, l, r) => {
            let ls = wrap(l, op, false, leaf)?;
            let rs = wrap(r, op, true, leaf)?;
            Ok(format!("{ls}{}{rs}", op.symbol()))
        }
    }
}

fn wrap(
    child: &ExprNode,
    parent: Operator,
    right: bool,
    leaf: &dyn Fn(&TargetSymbol) -> Result<String, UetError>,
) -> Result<String, UetError> {
    let s = render(child, leaf)?;
    let needs = match child.operator() {
        // Equal precedence on the right always gets parentheses so that the
        // left-associative parser rebuilds the same tree.
        Some(op) => op.precedence() < parent.precedence() || (right && op.precedence() == parent.precedence()),
        None => false,
    };
    Ok(if needs { format!("({s})") } else { s })
}

fn number_text(d: &Decimal, canonical: bool) -> String {
    let s = if canonical {
        d.canonical()
    } else {
        d.literal().to_string()
    };
    if d.is_negative() {
        format!("({s})")
    } else {
        s
    }
}

/// Infix strings, one per equation, with number slots replaced by their values.
pub fn to_infix(tree: &ExprNode, slots: &[Decimal]) -> Result<Vec<String>, UetError> {
    let leaf = |sym: &TargetSymbol| -> Result<String, UetError> {
        Ok(match sym {
            TargetSymbol::Slot(i) => number_text(
                slots.get(*i).ok_or(UetError::SlotOutOfRange {
                    index: *i,
                    count: slots.len(),
                })?,
                true,
            ),
            TargetSymbol::Const(d) => number_text(d, false),
            other => other.to_string(),
        })
    };
    tree.equations().into_iter().map(|eq| render(eq, &leaf)).collect()
}

/// Infix strings that keep slot names (`n0`) in place.
pub fn to_infix_symbolic(tree: &ExprNode) -> Vec<String> {
    let leaf = |sym: &TargetSymbol| -> Result<String, UetError> {
        Ok(match sym {
            TargetSymbol::Const(d) => number_text(d, false),
            other => other.to_string(),
        })
    };
    tree.equations()
        .into_iter()
        .map(|eq| render(eq, &leaf).expect("symbolic rendering cannot fail"))
        .collect()
}
