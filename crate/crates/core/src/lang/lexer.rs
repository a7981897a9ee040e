use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Kw(Kw),
    Punct(&'static str),
    /// Body of a `// label(...)` comment, without the leading slashes.
    Pragma(String),
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kw {
    Int,
    Bool,
    Void,
    If,
    Else,
    While,
    Return,
    Break,
    Continue,
    Exit,
    Assert,
    True,
    False,
    Abs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

const PUNCTS: [&str; 24] = [
    "&&", "||", "==", "!=", "<=", ">=", "(", ")", "{", "}", ";", ",", "=", "<", ">", "+", "-",
    "*", "/", "!", "[", "]", "%", "&",
];

fn keyword(s: &str) -> Option<Kw> {
    Some(match s {
        "int" => Kw::Int,
        "bool" => Kw::Bool,
        "void" => Kw::Void,
        "if" => Kw::If,
        "else" => Kw::Else,
        "while" => Kw::While,
        "return" => Kw::Return,
        "break" => Kw::Break,
        "continue" => Kw::Continue,
        "exit" => Kw::Exit,
        "assert" => Kw::Assert,
        "true" => Kw::True,
        "false" => Kw::False,
        "abs" => Kw::Abs,
        _ => return None,
    })
}

pub fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let (tline, tcol) = (line, col);
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            let start = i + 2;
            let mut end = start;
            while end < chars.len() && chars[end] != '\n' {
                end += 1;
            }
            let body: String = chars[start..end].iter().collect();
            let trimmed = body.trim();
            if trimmed.starts_with("label(") || trimmed.starts_with("label (") {
                out.push(Token {
                    tok: Tok::Pragma(trimmed.to_string()),
                    line: tline,
                    col: tcol,
                });
            }
            col += (end - i) as u32;
            i = end;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let value = text.parse::<i64>().map_err(|_| Error::Syntax {
                line: tline,
                col: tcol,
                msg: format!("integer literal `{text}` out of range"),
            })?;
            col += (i - start) as u32;
            out.push(Token {
                tok: Tok::Int(value),
                line: tline,
                col: tcol,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += (i - start) as u32;
            let tok = match keyword(&text) {
                Some(kw) => Tok::Kw(kw),
                None => Tok::Ident(text),
            };
            out.push(Token {
                tok,
                line: tline,
                col: tcol,
            });
            continue;
        }
        let rest: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let punct = PUNCTS
            .iter()
            .find(|p| rest.starts_with(**p))
            .ok_or_else(|| Error::Syntax {
                line: tline,
                col: tcol,
                msg: format!("unexpected character `{c}`"),
            })?;
        i += punct.len();
        col += punct.len() as u32;
        out.push(Token {
            tok: Tok::Punct(punct),
            line: tline,
            col: tcol,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pragmas_survive_and_comments_vanish() {
        let toks = tokenize("// hello\n// label(3, \"x > 0\", dc)\nx = 1;").unwrap();
        assert_eq!(toks[0].tok, Tok::Pragma("label(3, \"x > 0\", dc)".into()));
        assert_eq!(toks[0].line, 2);
        assert_eq!(toks[1].tok, Tok::Ident("x".into()));
    }

    #[test]
    fn two_char_operators() {
        let toks = tokenize("a<=b&&c!=d").unwrap();
        let puncts: Vec<_> = toks
            .iter()
            .filter_map(|t| match t.tok {
                Tok::Punct(p) => Some(p),
                _ => None,
            })
            .collect();
        assert_eq!(puncts, vec!["<=", "&&", "!="]);
    }

    #[test]
    fn stray_character_is_reported_with_position() {
        let err = tokenize("x = 1;\n  y @ 2;").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 2, col: 5, .. }), "{err:?}");
    }
}
