//! Minimal s-expression reader with source positions. `;` starts a comment
//! that runs to the end of the line.

use crate::error::{Diagnostic, Span};

#[derive(Debug, Clone, PartialEq)]
pub enum SExpr {
    Atom { text: String, span: Span },
    List { items: Vec<SExpr>, span: Span },
}

impl SExpr {
    pub fn span(&self) -> Span {
        match self {
            SExpr::Atom { span, .. } | SExpr::List { span, .. } => *span,
        }
    }

    pub fn atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom { text, .. } => Some(text),
            SExpr::List { .. } => None,
        }
    }

    pub fn list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List { items, .. } => Some(items),
            SExpr::Atom { .. } => None,
        }
    }

    /// Head symbol of a list form such as `(tree ...)`.
    pub fn head(&self) -> Option<&str> {
        self.list().and_then(|items| items.first()).and_then(SExpr::atom)
    }
}

pub fn parse_sexprs(text: &str) -> Result<Vec<SExpr>, Vec<Diagnostic>> {
    let mut stack: Vec<(Span, Vec<SExpr>)> = Vec::new();
    let mut top = Vec::new();
    let mut line = 1;
    let mut col = 1;
    let mut chars = text.chars().peekable();
    let mut atom: Option<(Span, String)> = None;

    fn flush(atom: &mut Option<(Span, String)>, stack: &mut [(Span, Vec<SExpr>)], top: &mut Vec<SExpr>) {
        if let Some((span, text)) = atom.take() {
            let item = SExpr::Atom { text, span };
            match stack.last_mut() {
                Some((_, items)) => items.push(item),
                None => top.push(item),
            }
        }
    }

    while let Some(c) = chars.next() {
        let here = Span::new(line, col);
        match c {
            '(' => {
                flush(&mut atom, &mut stack, &mut top);
                stack.push((here, Vec::new()));
            }
            ')' => {
                flush(&mut atom, &mut stack, &mut top);
                let Some((span, items)) = stack.pop() else {
                    return Err(vec![Diagnostic::new(here, "unmatched `)`")]);
                };
                let item = SExpr::List { items, span };
                match stack.last_mut() {
                    Some((_, items)) => items.push(item),
                    None => top.push(item),
                }
            }
            ';' => {
                flush(&mut atom, &mut stack, &mut top);
                while chars.peek().is_some_and(|&n| n != '\n') {
                    chars.next();
                    col += 1;
                }
            }
            c if c.is_whitespace() => flush(&mut atom, &mut stack, &mut top),
            c => match &mut atom {
                Some((_, text)) => text.push(c),
                None => atom = Some((here, c.to_string())),
            },
        }
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    flush(&mut atom, &mut stack, &mut top);
    if let Some((span, _)) = stack.last() {
        return Err(vec![Diagnostic::new(*span, "unclosed `(`")]);
    }
    Ok(top)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_lists_with_positions() {
        let parsed = parse_sexprs("(a (b 1)\n  c) ; note\nd").unwrap();
        assert_eq!(parsed.len(), 2);
        let items = parsed[0].list().unwrap();
        assert_eq!(items[0].atom(), Some("a"));
        assert_eq!(items[1].head(), Some("b"));
        assert_eq!(items[2].span(), Span::new(2, 3));
        assert_eq!(parsed[1].span(), Span::new(3, 1));
    }

    #[test]
    fn unbalanced_parentheses_are_located() {
        assert_eq!(parse_sexprs("(a\n(b)").unwrap_err()[0].span, Span::new(1, 1));
        assert_eq!(parse_sexprs("a)").unwrap_err()[0].span, Span::new(1, 2));
    }
}
