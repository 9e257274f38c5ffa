use std::fmt;

use crate::diag::Span;
use crate::syntax::ParseError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Colon,
    Comma,
    Semi,
    LParen,
    RParen,
    LBrack,
    RBrack,
    LBrace,
    RBrace,
    Arrow,
    EqEq,
    Eq,
    Neq,
    Tilde,
    And,
    Or,
    Implies,
    Iff,
    Le,
    Lt,
    Ge,
    Gt,
    Plus,
    Minus,
    Star,
    Dot,
    Bang,
    Backslash,
    Caret,
    Prime,
    Bar,
    /// `|_`
    DistOpen,
    /// `_|`
    DistClose,
    /// `[]`
    Choice,
    /// `[]_`
    ChoiceOpen,
    /// `_[]`
    ChoiceClose,
    /// `__` mixfix placeholder
    Mixfix,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Str(s) => format!("{s:?}"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.symbol()),
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            Tok::Colon => ":",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrack => "[",
            Tok::RBrack => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Arrow => "->",
            Tok::EqEq => "==",
            Tok::Eq => "=",
            Tok::Neq => "~=",
            Tok::Tilde => "~",
            Tok::And => "/\\",
            Tok::Or => "\\/",
            Tok::Implies => "=>",
            Tok::Iff => "<=>",
            Tok::Le => "<=",
            Tok::Lt => "<",
            Tok::Ge => ">=",
            Tok::Gt => ">",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Dot => ".",
            Tok::Bang => "!",
            Tok::Backslash => "\\",
            Tok::Caret => "^",
            Tok::Prime => "'",
            Tok::Bar => "|",
            Tok::DistOpen => "|_",
            Tok::DistClose => "_|",
            Tok::Choice => "[]",
            Tok::ChoiceOpen => "[]_",
            Tok::ChoiceClose => "_[]",
            Tok::Mixfix => "__",
            Tok::Ident(_) | Tok::Int(_) | Tok::Str(_) | Tok::Eof => "",
        }
    }
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

/// Splits source text into tokens. `%` starts a comment running to end of line.
pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;

    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, n: usize, chars: &[char]| {
        for _ in 0..n {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };

    while i < chars.len() {
        let c = chars[i];
        let span = Span::new(line, col);
        let peek = |k: usize| chars.get(i + k).copied();

        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1, &chars);
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, 1, &chars);
            }
            continue;
        }
        if c.is_ascii_alphabetic() {
            let start = i;
            let mut n = 0;
            while start + n < chars.len() && (chars[start + n].is_ascii_alphanumeric() || chars[start + n] == '_') {
                n += 1;
            }
            let word: String = chars[start..start + n].iter().collect();
            advance(&mut i, &mut line, &mut col, n, &chars);
            out.push(Token {
                tok: Tok::Ident(word),
                span,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            let mut n = 0;
            while start + n < chars.len() && chars[start + n].is_ascii_digit() {
                n += 1;
            }
            let digits: String = chars[start..start + n].iter().collect();
            let value = digits
                .parse::<i64>()
                .map_err(|_| ParseError::new(span, format!("integer literal `{digits}` out of range"), vec![]))?;
            advance(&mut i, &mut line, &mut col, n, &chars);
            out.push(Token {
                tok: Tok::Int(value),
                span,
            });
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            let mut j = i + 1;
            loop {
                match chars.get(j) {
                    None | Some('\n') => {
                        return Err(ParseError::new(span, "unterminated string literal", vec![]));
                    }
                    Some('"') => break,
                    Some('\\') => {
                        match chars.get(j + 1) {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            _ => return Err(ParseError::new(span, "invalid escape in string literal", vec![])),
                        }
                        j += 2;
                    }
                    Some(ch) => {
                        s.push(*ch);
                        j += 1;
                    }
                }
            }
            let n = j + 1 - i;
            advance(&mut i, &mut line, &mut col, n, &chars);
            out.push(Token { tok: Tok::Str(s), span });
            continue;
        }

        let (tok, n) = match (c, peek(1), peek(2)) {
            ('<', Some('='), Some('>')) => (Tok::Iff, 3),
            ('<', Some('='), _) => (Tok::Le, 2),
            ('<', _, _) => (Tok::Lt, 1),
            ('>', Some('='), _) => (Tok::Ge, 2),
            ('>', _, _) => (Tok::Gt, 1),
            ('=', Some('='), _) => (Tok::EqEq, 2),
            ('=', Some('>'), _) => (Tok::Implies, 2),
            ('=', _, _) => (Tok::Eq, 1),
            ('-', Some('>'), _) => (Tok::Arrow, 2),
            ('-', _, _) => (Tok::Minus, 1),
            ('~', Some('='), _) => (Tok::Neq, 2),
            ('~', _, _) => (Tok::Tilde, 1),
            ('/', Some('\\'), _) => (Tok::And, 2),
            ('\\', Some('/'), _) => (Tok::Or, 2),
            ('\\', _, _) => (Tok::Backslash, 1),
            ('|', Some('_'), _) => (Tok::DistOpen, 2),
            ('|', _, _) => (Tok::Bar, 1),
            ('_', Some('|'), _) => (Tok::DistClose, 2),
            ('_', Some('['), Some(']')) => (Tok::ChoiceClose, 3),
            ('_', Some('_'), _) => (Tok::Mixfix, 2),
            ('[', Some(']'), Some('_')) => (Tok::ChoiceOpen, 3),
            ('[', Some(']'), _) => (Tok::Choice, 2),
            ('[', _, _) => (Tok::LBrack, 1),
            (']', _, _) => (Tok::RBrack, 1),
            ('(', _, _) => (Tok::LParen, 1),
            (')', _, _) => (Tok::RParen, 1),
            ('{', _, _) => (Tok::LBrace, 1),
            ('}', _, _) => (Tok::RBrace, 1),
            (':', _, _) => (Tok::Colon, 1),
            (',', _, _) => (Tok::Comma, 1),
            (';', _, _) => (Tok::Semi, 1),
            ('+', _, _) => (Tok::Plus, 1),
            ('*', _, _) => (Tok::Star, 1),
            ('.', _, _) => (Tok::Dot, 1),
            ('!', _, _) => (Tok::Bang, 1),
            ('^', _, _) => (Tok::Caret, 1),
            ('\'', _, _) => (Tok::Prime, 1),
            _ => {
                return Err(ParseError::new(span, format!("unexpected character `{c}`"), vec![]));
            }
        };
        advance(&mut i, &mut line, &mut col, n, &chars);
        out.push(Token { tok, span });
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(line, col),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn symbols_and_comments() {
        assert_eq!(
            toks("a /\\ b \\/ ~c % comment\n x <=> y"),
            vec![
                Tok::Ident("a".into()),
                Tok::And,
                Tok::Ident("b".into()),
                Tok::Or,
                Tok::Tilde,
                Tok::Ident("c".into()),
                Tok::Ident("x".into()),
                Tok::Iff,
                Tok::Ident("y".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn distributed_brackets() {
        assert_eq!(
            toks("|_ z in s _| []_ x _[] a [] b |n|"),
            vec![
                Tok::DistOpen,
                Tok::Ident("z".into()),
                Tok::Ident("in".into()),
                Tok::Ident("s".into()),
                Tok::DistClose,
                Tok::ChoiceOpen,
                Tok::Ident("x".into()),
                Tok::ChoiceClose,
                Tok::Ident("a".into()),
                Tok::Choice,
                Tok::Ident("b".into()),
                Tok::Bar,
                Tok::Ident("n".into()),
                Tok::Bar,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn state_annotations() {
        assert_eq!(
            toks("self' self^ self\\any __ <= __"),
            vec![
                Tok::Ident("self".into()),
                Tok::Prime,
                Tok::Ident("self".into()),
                Tok::Caret,
                Tok::Ident("self".into()),
                Tok::Backslash,
                Tok::Ident("any".into()),
                Tok::Mixfix,
                Tok::Le,
                Tok::Mixfix,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn positions_are_one_based() {
        let t = tokenize("a\n  bc").unwrap();
        assert_eq!((t[1].span.line, t[1].span.col), (2, 3));
    }

    #[test]
    fn bad_character_is_positioned() {
        let e = tokenize("a\n #").unwrap_err();
        assert_eq!((e.span.line, e.span.col), (2, 2));
    }
}
