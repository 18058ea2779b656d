//! Tokenizer. Strips `//` line comments and `/* */` block comments.

use super::ast::Span;
use super::error::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    /// `name'`, the primed form used on CPF left-hand sides.
    Primed(String),
    Var(String),
    Object(String),
    Number(f64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Colon,
    Assign,
    EqEq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Tilde,
    And,
    Or,
    Implies,
    Equiv,
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Primed(s) => format!("`{s}'`"),
            TokenKind::Var(s) => format!("variable `{s}`"),
            TokenKind::Object(s) => format!("object `@{s}`"),
            TokenKind::Number(n) => format!("number `{n}`"),
            TokenKind::Eof => "end of input".to_string(),
            other => format!("`{}`", other.punct()),
        }
    }

    fn punct(&self) -> &'static str {
        match self {
            TokenKind::LBrace => "{",
            TokenKind::RBrace => "}",
            TokenKind::LParen => "(",
            TokenKind::RParen => ")",
            TokenKind::LBracket => "[",
            TokenKind::RBracket => "]",
            TokenKind::Semi => ";",
            TokenKind::Comma => ",",
            TokenKind::Colon => ":",
            TokenKind::Assign => "=",
            TokenKind::EqEq => "==",
            TokenKind::Neq => "~=",
            TokenKind::Lt => "<",
            TokenKind::Le => "<=",
            TokenKind::Gt => ">",
            TokenKind::Ge => ">=",
            TokenKind::Plus => "+",
            TokenKind::Minus => "-",
            TokenKind::Star => "*",
            TokenKind::Slash => "/",
            TokenKind::Tilde => "~",
            TokenKind::And => "^",
            TokenKind::Or => "|",
            TokenKind::Implies => "=>",
            TokenKind::Equiv => "<=>",
            _ => "?",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span(&self) -> Span {
        Span::new(self.line, self.col)
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic()
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut cur = Cursor {
        chars: text.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();

    loop {
        // whitespace and comments
        loop {
            match cur.peek() {
                Some(c) if c.is_whitespace() => {
                    cur.bump();
                }
                Some('/') if cur.peek2() == Some('/') => {
                    while let Some(c) = cur.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                Some('/') if cur.peek2() == Some('*') => {
                    let start = cur.span();
                    cur.bump();
                    cur.bump();
                    let mut closed = false;
                    while let Some(c) = cur.bump() {
                        if c == '*' && cur.peek() == Some('/') {
                            cur.bump();
                            closed = true;
                            break;
                        }
                    }
                    if !closed {
                        return Err(ParseError::Lexical {
                            message: "unterminated block comment".into(),
                            span: start,
                        });
                    }
                }
                _ => break,
            }
        }

        let span = cur.span();
        let Some(c) = cur.peek() else {
            out.push(Token {
                kind: TokenKind::Eof,
                span,
            });
            return Ok(out);
        };

        let kind = if is_ident_start(c) {
            let name = read_name(&mut cur);
            if cur.peek() == Some('\'') {
                cur.bump();
                TokenKind::Primed(name)
            } else {
                TokenKind::Ident(name)
            }
        } else if c == '?' {
            cur.bump();
            match cur.peek() {
                Some(c) if is_ident_start(c) => TokenKind::Var(format!("?{}", read_name(&mut cur))),
                _ => {
                    return Err(ParseError::Lexical {
                        message: "expected a variable name after `?`".into(),
                        span,
                    })
                }
            }
        } else if c == '@' || c == '$' {
            cur.bump();
            match cur.peek() {
                Some(c) if is_ident_start(c) => TokenKind::Object(read_name(&mut cur)),
                _ => {
                    return Err(ParseError::Lexical {
                        message: format!("expected an object name after `{c}`"),
                        span,
                    })
                }
            }
        } else if c.is_ascii_digit() || (c == '.' && cur.peek2().is_some_and(|d| d.is_ascii_digit())) {
            read_number(&mut cur, span)?
        } else {
            cur.bump();
            match c {
                '{' => TokenKind::LBrace,
                '}' => TokenKind::RBrace,
                '(' => TokenKind::LParen,
                ')' => TokenKind::RParen,
                '[' => TokenKind::LBracket,
                ']' => TokenKind::RBracket,
                ';' => TokenKind::Semi,
                ',' => TokenKind::Comma,
                ':' => TokenKind::Colon,
                '+' => TokenKind::Plus,
                '-' => TokenKind::Minus,
                '*' => TokenKind::Star,
                '/' => TokenKind::Slash,
                '^' | '&' => TokenKind::And,
                '|' => TokenKind::Or,
                '=' => match cur.peek() {
                    Some('=') => {
                        cur.bump();
                        TokenKind::EqEq
                    }
                    Some('>') => {
                        cur.bump();
                        TokenKind::Implies
                    }
                    _ => TokenKind::Assign,
                },
                '~' => {
                    if cur.peek() == Some('=') {
                        cur.bump();
                        TokenKind::Neq
                    } else {
                        TokenKind::Tilde
                    }
                }
                '<' => match cur.peek() {
                    Some('=') => {
                        cur.bump();
                        if cur.peek() == Some('>') {
                            cur.bump();
                            TokenKind::Equiv
                        } else {
                            TokenKind::Le
                        }
                    }
                    _ => TokenKind::Lt,
                },
                '>' => {
                    if cur.peek() == Some('=') {
                        cur.bump();
                        TokenKind::Ge
                    } else {
                        TokenKind::Gt
                    }
                }
                other => {
                    return Err(ParseError::Lexical {
                        message: format!("unexpected character `{other}`"),
                        span,
                    })
                }
            }
        };
        out.push(Token { kind, span });
    }
}

/// Identifiers may contain inner hyphens (`out-of-fuel`); a hyphen is part of
/// the name only when an identifier character follows it directly.
fn read_name(cur: &mut Cursor<'_>) -> String {
    let mut name = String::new();
    while let Some(c) = cur.peek() {
        if is_ident_char(c) || (c == '-' && cur.peek2().is_some_and(is_ident_char)) {
            name.push(c);
            cur.bump();
        } else {
            break;
        }
    }
    name
}

fn read_number(cur: &mut Cursor<'_>, span: Span) -> Result<TokenKind, ParseError> {
    let mut text = String::new();
    while let Some(c) = cur.peek() {
        if c.is_ascii_digit() || c == '.' {
            text.push(c);
            cur.bump();
        } else if (c == 'e' || c == 'E')
            && cur
                .peek2()
                .is_some_and(|d| d.is_ascii_digit() || d == '-' || d == '+')
        {
            text.push(c);
            cur.bump();
            if let Some(sign @ ('-' | '+')) = cur.peek() {
                text.push(sign);
                cur.bump();
            }
        } else {
            break;
        }
    }
    if cur.peek().is_some_and(is_ident_start) {
        return Err(ParseError::Lexical {
            message: format!("malformed number `{text}{}`", cur.peek().unwrap()),
            span,
        });
    }
    text.parse::<f64>()
        .map(TokenKind::Number)
        .map_err(|_| ParseError::Lexical {
            message: format!("malformed number `{text}`"),
            span,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn hyphenated_identifiers_and_primes() {
        assert_eq!(
            kinds("out-of-fuel'(?x) = a - b;"),
            vec![
                TokenKind::Primed("out-of-fuel".into()),
                TokenKind::LParen,
                TokenKind::Var("?x".into()),
                TokenKind::RParen,
                TokenKind::Assign,
                TokenKind::Ident("a".into()),
                TokenKind::Minus,
                TokenKind::Ident("b".into()),
                TokenKind::Semi,
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn comments_are_stripped() {
        assert_eq!(
            kinds("a // line\n /* block\n comment */ b"),
            vec![
                TokenKind::Ident("a".into()),
                TokenKind::Ident("b".into()),
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn operators() {
        assert_eq!(
            kinds("<=> => <= >= == ~= ~ & ^ |"),
            vec![
                TokenKind::Equiv,
                TokenKind::Implies,
                TokenKind::Le,
                TokenKind::Ge,
                TokenKind::EqEq,
                TokenKind::Neq,
                TokenKind::Tilde,
                TokenKind::And,
                TokenKind::And,
                TokenKind::Or,
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn numbers_with_exponent() {
        assert_eq!(
            kinds("1 0.5 1e-8 2.5E3"),
            vec![
                TokenKind::Number(1.0),
                TokenKind::Number(0.5),
                TokenKind::Number(1e-8),
                TokenKind::Number(2500.0),
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn positions_are_one_based() {
        let toks = tokenize("a\n  b").unwrap();
        assert_eq!((toks[0].span.line, toks[0].span.col), (1, 1));
        assert_eq!((toks[1].span.line, toks[1].span.col), (2, 3));
    }

    #[test]
    fn lexical_errors() {
        assert!(matches!(tokenize("a # b"), Err(ParseError::Lexical { .. })));
        assert!(matches!(tokenize("/* open"), Err(ParseError::Lexical { .. })));
        assert!(matches!(tokenize("12abc"), Err(ParseError::Lexical { .. })));
    }
}
