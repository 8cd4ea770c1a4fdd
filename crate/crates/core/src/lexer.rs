//! Hand-rolled tokenizer with line/column tracking.

use crate::ast::Span;
use crate::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokKind {
    Ident(String),
    Int(i64),
    Kw(&'static str),
    Punct(&'static str),
    Eof,
}

pub const KEYWORDS: &[&str] = &[
    "int", "void", "struct", "const", "if", "else", "while", "return", "malloc", "calloc", "alloc",
];

// Multi-char puncts must precede their prefixes.
const PUNCTS: &[&str] = &[
    "...", "==", "!=", "<=", ">=", "&&", "||", "*", "&", "=", ";", ",", "(", ")", "{", "}", "[",
    "]", ".", "!", "<", ">", "+", "-", "/", "%",
];

#[derive(Debug, Clone)]
pub struct Token {
    pub kind: TokKind,
    pub span: Span,
}

pub fn lex(file_idx: u32, file_name: &str, text: &str) -> Result<Vec<Token>, Error> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let span = Span::new(file_idx, line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && i + 1 < bytes.len() && bytes[i + 1] == b'/' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && i + 1 < bytes.len() && bytes[i + 1] == b'*' {
            i += 2;
            col += 2;
            loop {
                if i + 1 >= bytes.len() {
                    return Err(Error::syntax(file_name, span, "unterminated block comment"));
                }
                if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                    i += 2;
                    col += 2;
                    break;
                }
                if bytes[i] == b'\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &text[start..i];
            col += (i - start) as u32;
            let kind = match KEYWORDS.iter().find(|k| **k == word) {
                Some(k) => TokKind::Kw(k),
                None => TokKind::Ident(word.to_string()),
            };
            toks.push(Token { kind, span });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &text[start..i];
            col += (i - start) as u32;
            let value = if let Some(hex) = word.strip_prefix("0x").or(word.strip_prefix("0X")) {
                i64::from_str_radix(hex, 16)
            } else {
                word.parse::<i64>()
            };
            let value = value
                .map_err(|_| Error::syntax(file_name, span, format!("bad integer literal `{word}`")))?;
            toks.push(Token { kind: TokKind::Int(value), span });
            continue;
        }
        let rest = &text[i..];
        match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                toks.push(Token { kind: TokKind::Punct(p), span });
                i += p.len();
                col += p.len() as u32;
            }
            None => {
                return Err(Error::syntax(file_name, span, format!("unexpected character `{c}`")));
            }
        }
    }
    toks.push(Token { kind: TokKind::Eof, span: Span::new(file_idx, line, col) });
    Ok(toks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_declaration() {
        let toks = lex(0, "t.mc", "int *p = &a;").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.kind.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                TokKind::Kw("int"),
                TokKind::Punct("*"),
                TokKind::Ident("p".into()),
                TokKind::Punct("="),
                TokKind::Punct("&"),
                TokKind::Ident("a".into()),
                TokKind::Punct(";"),
                TokKind::Eof,
            ]
        );
    }

    #[test]
    fn tracks_lines_and_columns() {
        let toks = lex(0, "t.mc", "int a;\n  a = 1;").unwrap();
        let a_assign = &toks[3];
        assert_eq!(a_assign.span.line, 2);
        assert_eq!(a_assign.span.col, 3);
    }

    #[test]
    fn comments_are_skipped() {
        let toks = lex(0, "t.mc", "// line\nint /* mid */ x;").unwrap();
        assert_eq!(toks.len(), 4); // int, x, ;, eof
        assert_eq!(toks[0].span.line, 2);
    }

    #[test]
    fn rejects_stray_characters() {
        assert!(lex(0, "t.mc", "int $x;").is_err());
    }
}
